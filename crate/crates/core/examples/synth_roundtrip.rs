//! Writing a synthetic dataset to the binary mask/activation formats and the
//! catalog CSV, then reading it back.

use compexp::prelude::*;
use compexp::synth::random_chain_form;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Result<()> {
    let spec = SynthSpec {
        seed: 7,
        concept_count: 10,
        ..SynthSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let forms: Vec<LogicalForm> = (1..=3)
        .map(|n| random_chain_form(&mut rng, spec.concept_count, n, &Operator::DEFAULT_SET))
        .collect();
    let dataset = gen_fixture(&spec, &forms)?;

    let dir = std::env::temp_dir().join(format!("compexp-synth-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("create temp dir");
    let (masks, acts, catalog) = (dir.join("masks.cexm"), dir.join("acts.cexa"), dir.join("catalog.csv"));
    write_masks(&masks, &dataset.annotations)?;
    write_activations(&acts, &dataset.activations)?;
    write_catalog(&catalog, &dataset.catalog)?;

    let loaded = Dataset::load(&masks, &acts, &catalog)?;
    assert_eq!(loaded.annotations, dataset.annotations);
    assert_eq!(loaded.activations, dataset.activations);
    println!(
        "{} images, {} units, {} concepts round-tripped through {}",
        loaded.annotations.len(),
        loaded.activations.units().len(),
        loaded.catalog.len(),
        dir.display()
    );
    for (i, f) in forms.iter().enumerate() {
        println!("unit {i} ground truth: {}", f.to_text(&loaded.catalog)?);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn main() {
    run_example().expect("synth round trip example");
}
