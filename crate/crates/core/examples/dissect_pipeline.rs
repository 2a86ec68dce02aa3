//! Dissecting every unit of a dataset and summarizing the reports as CSV
//! with IoU/DetAcc correlations.

use compexp::prelude::*;
use compexp::report::reports_to_json;

pub fn run_example() -> Result<()> {
    let spec = SynthSpec {
        image_count: 20,
        mask_dims: (32, 32),
        act_dims: (8, 8),
        concept_count: 8,
        concept_density: 0.4,
        snap_to_grid: true,
        seed: 1,
        noise_sigma: 0.1,
        ..SynthSpec::default()
    };
    let l = LogicalForm::leaf;
    let forms = [l(0), l(3).or(l(5)), l(1).and(l(2).not()), l(6).or(l(7)).and(l(4).not())];
    let dataset = gen_fixture(&spec, &forms)?;

    let opts = DissectOptions {
        upsample: UpsampleMode::Nearest,
        // wider than the default so the noisy units still fire over most of their truth
        quantile: 0.15,
        jobs: 2,
        ..DissectOptions::default()
    };
    let reports = dissect(&dataset, &opts)?;
    for r in &reports {
        println!(
            "unit {}: truth {:<30} chosen by IoU {:<30} by DetAcc {}",
            r.unit_id,
            forms[r.unit_id as usize].to_text(&dataset.catalog)?,
            r.chosen_iou,
            r.chosen_detacc
        );
    }
    let json = reports_to_json(&reports);
    println!("report JSON: {} bytes", json.len());
    print!("{}", summarize(&reports).csv);
    Ok(())
}

fn main() {
    run_example().expect("dissect pipeline example");
}
