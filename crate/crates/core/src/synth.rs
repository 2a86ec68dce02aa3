//! Synthetic probing data with a known ground-truth explanation.
//!
//! Concepts are axis-aligned rectangular blobs. A unit's activations are the
//! ground-truth form's mask, block-mean downsampled to the activation grid,
//! scaled by a gain and perturbed by seeded Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::datastore::{ActivationStore, AnnotationStore, Category, ConceptCatalog, Dataset, ImageAnnotation};
use crate::error::{Error, Result};
use crate::forms::{ConceptId, LogicalForm};
use crate::masks::BitMask;
use crate::scoring::ActivationVolume;
use crate::search::Operator;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub image_count: usize,
    /// Annotation resolution `(H, W)`.
    pub mask_dims: (u16, u16),
    /// Activation resolution `(h, w)`.
    pub act_dims: (u16, u16),
    pub concept_count: usize,
    /// Probability that a concept appears on a given image.
    pub concept_density: f64,
    pub ground_truth: LogicalForm,
    pub noise_sigma: f64,
    pub activation_gain: f64,
    /// Snap blob edges to the activation block grid (needs `H % h == 0` and `W % w == 0`).
    pub snap_to_grid: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            image_count: 8,
            mask_dims: (16, 16),
            act_dims: (16, 16),
            concept_count: 6,
            concept_density: 0.5,
            ground_truth: LogicalForm::leaf(0),
            noise_sigma: 0.0,
            activation_gain: 1.0,
            snap_to_grid: false,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let ((hh, ww), (h, w)) = (self.mask_dims, self.act_dims);
        if self.image_count == 0 || self.concept_count == 0 {
            return bad("image and concept counts must be positive".into());
        }
        if h == 0 || w == 0 || hh < h || ww < w {
            return bad(format!(
                "activation grid {h}x{w} must be nonempty and no larger than masks {hh}x{ww}"
            ));
        }
        if !(0.0..=1.0).contains(&self.concept_density) {
            return bad(format!("density {} outside [0, 1]", self.concept_density));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if !(self.activation_gain > 0.0 && self.activation_gain.is_finite()) {
            return bad(format!("gain {} must be finite and > 0", self.activation_gain));
        }
        if self.snap_to_grid && (hh % h != 0 || ww % w != 0) {
            return bad(format!("cannot snap {hh}x{ww} masks to a {h}x{w} grid"));
        }
        Ok(())
    }

    fn check_form(&self, form: &LogicalForm) -> Result<()> {
        match form.concepts().into_iter().find(|c| c.0 as usize >= self.concept_count) {
            Some(c) => Err(Error::UnknownConceptId(c.0)),
            None => Ok(()),
        }
    }
}

pub fn concept_name(index: usize) -> String {
    format!("c{index:03}")
}

/// One span along an axis: length in `[ceil(n/8), ceil(n/2)]`, uniformly placed.
fn random_span(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let len = rng.gen_range(n.div_ceil(8)..=n.div_ceil(2));
    let start = rng.gen_range(0..=n - len);
    (start, start + len)
}

pub fn gen_dataset(spec: &SynthSpec) -> Result<(ConceptCatalog, AnnotationStore)> {
    spec.validate()?;
    let (hh, ww) = spec.mask_dims;
    let (h, w) = spec.act_dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut images = Vec::with_capacity(spec.image_count);
    for id in 0..spec.image_count {
        let mut image = ImageAnnotation::new(id as u32, hh, ww);
        for c in 0..spec.concept_count {
            if !rng.gen_bool(spec.concept_density) {
                continue;
            }
            let mut mask = BitMask::new(hh, ww);
            for _ in 0..rng.gen_range(1..=2) {
                let (rows, cols) = if spec.snap_to_grid {
                    let (bh, bw) = ((hh / h) as usize, (ww / w) as usize);
                    let (r0, r1) = random_span(&mut rng, h as usize);
                    let (c0, c1) = random_span(&mut rng, w as usize);
                    ((r0 * bh, r1 * bh), (c0 * bw, c1 * bw))
                } else {
                    (random_span(&mut rng, hh as usize), random_span(&mut rng, ww as usize))
                };
                mask.fill_rect(rows.0, rows.1, cols.0, cols.1);
            }
            image.insert(ConceptId(c as u32), mask)?;
        }
        images.push(image);
    }
    let store = AnnotationStore::new(images)?;
    let mut catalog = ConceptCatalog::from_names(
        (0..spec.concept_count).map(|i| (concept_name(i), Category::ALL[i % 4])),
    )?;
    catalog.compute_support(&store)?;
    Ok((catalog, store))
}

/// Mean of `mask` over each cell of an `h x w` block grid.
pub fn block_mean(mask: &BitMask, h: u16, w: u16) -> Vec<f64> {
    let (hh, ww) = (mask.height() as usize, mask.width() as usize);
    let (h, w) = (h as usize, w as usize);
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        let (r0, r1) = (r * hh / h, (r + 1) * hh / h);
        for c in 0..w {
            let (c0, c1) = (c * ww / w, (c + 1) * ww / w);
            let mut set = 0usize;
            for y in r0..r1 {
                for x in c0..c1 {
                    set += mask.get(y, x) as usize;
                }
            }
            out.push(set as f64 / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    out
}

/// Activation volume of a unit whose true explanation is `spec.ground_truth`.
pub fn gen_unit(spec: &SynthSpec, store: &AnnotationStore) -> Result<ActivationVolume> {
    gen_unit_with_id(spec, store, 0)
}

pub fn gen_unit_with_id(spec: &SynthSpec, store: &AnnotationStore, unit_id: u32) -> Result<ActivationVolume> {
    spec.validate()?;
    spec.check_form(&spec.ground_truth)?;
    let (h, w) = spec.act_dims;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1 + unit_id as u64);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut grids = Vec::with_capacity(store.len());
    for image in store.images() {
        let g = image.eval(&spec.ground_truth)?;
        let grid = block_mean(&g, h, w)
            .into_iter()
            .map(|v| {
                let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (spec.activation_gain * v + n) as f32
            })
            .collect();
        grids.push(grid);
    }
    ActivationVolume::new(unit_id, h, w, grids)
}

/// A random left-deep form of exactly `length` concepts built with `operators`,
/// the shape beam search generates.
pub fn random_chain_form(
    rng: &mut impl Rng,
    concept_count: usize,
    length: usize,
    operators: &[Operator],
) -> LogicalForm {
    let pick = |rng: &mut dyn rand::RngCore| ConceptId(rng.gen_range(0..concept_count as u32));
    let mut form = LogicalForm::Leaf(pick(rng));
    for _ in 1..length {
        let op = operators[rng.gen_range(0..operators.len())];
        form = op.combine(form, pick(rng));
    }
    form
}

/// A complete dataset with one unit per ground-truth form. Unit `i` explains
/// `forms[i]`; everything else comes from `spec`.
pub fn gen_fixture(spec: &SynthSpec, forms: &[LogicalForm]) -> Result<Dataset> {
    let (catalog, store) = gen_dataset(spec)?;
    let units = forms
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let unit_spec = SynthSpec {
                ground_truth: f.clone(),
                ..spec.clone()
            };
            gen_unit_with_id(&unit_spec, &store, i as u32)
        })
        .collect::<Result<Vec<_>>>()?;
    let (h, w) = spec.act_dims;
    let acts = ActivationStore::new(h, w, store.image_ids(), units)?;
    Dataset::new(catalog, store, acts)
}
