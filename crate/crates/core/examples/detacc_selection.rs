//! Picking an explanation per length by IoU or by Detection Accuracy, and
//! stopping the search early once DetAcc starts to fall.

use compexp::prelude::*;

pub fn run_example() -> Result<()> {
    let spec = SynthSpec {
        ground_truth: LogicalForm::leaf(1).or(LogicalForm::leaf(2)),
        noise_sigma: 0.3,
        ..SynthSpec::default()
    };
    let (catalog, store) = gen_dataset(&spec)?;
    let acts = gen_unit(&spec, &store)?;
    let unit = UnitMaskVolume::from_activations(&acts, &store, 0.05, UpsampleMode::default())?;

    let cfg = SearchConfig {
        max_length: 5,
        stopping: StoppingRule::DetAccDrop {
            epsilon: 0.0,
            patience: 1,
        },
        ..SearchConfig::default()
    };
    let state = beam_search(&unit, &catalog, &store, &cfg)?;
    for (k, best) in state.per_length_best.iter().enumerate() {
        println!(
            "length {}: {:<36} iou={} detacc={:.6}",
            k + 1,
            best.form.to_text(&catalog)?,
            best.iou,
            best.detacc_or_zero()
        );
    }
    match state.stopped_at {
        Some(k) => println!("stopped after length {k}"),
        None => println!("ran to the maximum length"),
    }
    for rule in [SelectionRule::MaxIou, SelectionRule::MaxDetAcc] {
        let pick = select_explanation(&state, rule);
        println!("{rule:?}: {}", pick.form.to_text(&catalog)?);
    }

    let history = [0.40, 0.55, 0.52, 0.50];
    println!("stopping_check({history:?}, 0.01, 2) = {:?}", stopping_check(&history, 0.01, 2));
    Ok(())
}

fn main() {
    run_example().expect("detacc selection example");
}
