//! Thresholding a unit's activations and scoring forms against it by IoU
//! and Detection Accuracy.

use compexp::prelude::*;

pub fn run_example() -> Result<()> {
    let spec = SynthSpec {
        ground_truth: LogicalForm::leaf(1).or(LogicalForm::leaf(3)),
        ..SynthSpec::default()
    };
    let (catalog, store) = gen_dataset(&spec)?;
    let acts = gen_unit(&spec, &store)?;

    let threshold = compute_threshold(&acts, DEFAULT_QUANTILE)?;
    let unit = UnitMaskVolume::build(&acts, &store, threshold, UpsampleMode::BilinearCorners)?;
    println!("threshold at top {}: {threshold:.4}", DEFAULT_QUANTILE);

    for text in ["c001 OR c003", "c001", "c003", "c001 AND c003", "c000"] {
        let form = parse_form(text, &catalog)?;
        let iou = iou_score(&unit, &form, &store)?;
        let detacc = match detacc_score(&unit, &form, &store) {
            Ok(d) => d.to_string(),
            Err(Error::NoSupport) => "no-support".into(),
            Err(e) => return Err(e),
        };
        println!("{text:<16} iou={iou} detacc={detacc}");
    }
    Ok(())
}

fn main() {
    run_example().expect("score unit example");
}
