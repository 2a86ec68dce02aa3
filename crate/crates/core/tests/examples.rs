//! Runs every example so they stay in step with the library.

#[allow(dead_code)]
#[path = "../examples/mask_algebra.rs"]
mod mask_algebra;

#[test]
fn mask_algebra_runs() {
    mask_algebra::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/parse_forms.rs"]
mod parse_forms;

#[test]
fn parse_forms_runs() {
    parse_forms::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/score_unit.rs"]
mod score_unit;

#[test]
fn score_unit_runs() {
    score_unit::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/beam_search.rs"]
mod beam_search;

#[test]
fn beam_search_runs() {
    beam_search::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/detacc_selection.rs"]
mod detacc_selection;

#[test]
fn detacc_selection_runs() {
    detacc_selection::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/synth_roundtrip.rs"]
mod synth_roundtrip;

#[test]
fn synth_roundtrip_runs() {
    synth_roundtrip::run_example().unwrap();
}

#[allow(dead_code)]
#[path = "../examples/dissect_pipeline.rs"]
mod dissect_pipeline;

#[test]
fn dissect_pipeline_runs() {
    dissect_pipeline::run_example().unwrap();
}
