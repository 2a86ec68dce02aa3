//! Compositional explanations for network units.
//!
//! A unit's activations are thresholded at a top quantile, upsampled to the
//! annotation resolution and binarized. Logical forms over annotated concepts
//! (`AND`, `OR`, `NOT`) are then searched with a beam for the form whose mask
//! best overlaps the unit's (IoU), and candidate explanations are also rated by
//! Detection Accuracy: the fraction of images containing the explanation on
//! which the unit fires over it.
//!
//! ```
//! use compexp::prelude::*;
//!
//! let spec = SynthSpec { ground_truth: LogicalForm::leaf(2), ..SynthSpec::default() };
//! let (catalog, store) = gen_dataset(&spec).unwrap();
//! let acts = gen_unit(&spec, &store).unwrap();
//! let unit = UnitMaskVolume::from_activations(&acts, &store, DEFAULT_QUANTILE, UpsampleMode::default()).unwrap();
//! let best = atomic_search(&unit, &catalog, &store).unwrap();
//! assert_eq!(best.form.to_text(&catalog).unwrap(), "c002");
//! ```

pub mod cli;
pub mod datastore;
pub mod error;
pub mod forms;
pub mod masks;
pub mod report;
pub mod scoring;
pub mod search;
pub mod synth;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::datastore::{
        filter_concepts, load_activations, load_catalog, load_masks, write_activations, write_catalog,
        write_masks, ActivationStore, AnnotationStore, Category, ConceptCatalog, Dataset, ImageAnnotation,
    };
    pub use crate::error::{Error, Result};
    pub use crate::forms::{parse_form, print_form, ConceptId, LogicalForm};
    pub use crate::masks::{mask_apply, rle_decode, rle_encode, BitMask, MaskOp, RleRuns};
    pub use crate::report::{dissect, summarize, DissectOptions, UnitReport};
    pub use crate::scoring::{
        binarize, compute_threshold, detacc_score, iou_score, upsample_bilinear, ActivationVolume, Score,
        UnitMaskVolume, UpsampleMode, DEFAULT_QUANTILE,
    };
    pub use crate::search::{
        atomic_search, beam_search, exhaustive_search, select_explanation, stopping_check, BeamState, Operator,
        ScoredExplanation, SearchConfig, SelectionRule, StopDecision, StoppingRule,
    };
    pub use crate::synth::{gen_dataset, gen_fixture, gen_unit, SynthSpec};
}
