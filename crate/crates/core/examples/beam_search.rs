//! Beam search for a compound explanation, checked against exhaustive search.

use compexp::prelude::*;

pub fn run_example() -> Result<()> {
    let truth = LogicalForm::leaf(0).and(LogicalForm::leaf(2).not()).or(LogicalForm::leaf(4));
    let spec = SynthSpec {
        ground_truth: truth.clone(),
        image_count: 20,
        mask_dims: (32, 32),
        act_dims: (8, 8),
        concept_density: 0.4,
        snap_to_grid: true,
        ..SynthSpec::default()
    };
    let (catalog, store) = gen_dataset(&spec)?;
    let acts = gen_unit(&spec, &store)?;
    let unit = UnitMaskVolume::from_activations(&acts, &store, DEFAULT_QUANTILE, UpsampleMode::Nearest)?;

    let cfg = SearchConfig {
        beam_size: 20,
        ..SearchConfig::default()
    };
    let state = beam_search(&unit, &catalog, &store, &cfg)?;
    for (k, best) in state.per_length_best.iter().enumerate() {
        println!("length {}: {:<32} iou={}", k + 1, best.form.to_text(&catalog)?, best.iou);
    }

    let reference = exhaustive_search(&unit, &catalog, &store, 3, &Operator::DEFAULT_SET)?;
    println!("exhaustive best: {} iou={}", reference.form.to_text(&catalog)?, reference.iou);
    assert_eq!(state.best().iou, reference.iou);
    println!("ground truth:    {} iou={}", truth.to_text(&catalog)?, iou_score(&unit, &truth, &store)?);
    Ok(())
}

fn main() {
    run_example().expect("beam search example");
}
