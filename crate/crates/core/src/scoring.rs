//! Unit thresholding, upsampling and binarization, and the two alignment
//! scores: IoU and Detection Accuracy.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{ActivationStore, AnnotationStore};
use crate::error::{Error, Result};
use crate::forms::LogicalForm;
use crate::masks::BitMask;

pub const DEFAULT_QUANTILE: f64 = 0.005;
pub const MIN_RESERVOIR: usize = 1_000_000;

/// One unit's low-resolution activation maps, one row-major grid per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVolume {
    unit_id: u32,
    height: u16,
    width: u16,
    grids: Vec<Vec<f32>>,
}

impl ActivationVolume {
    pub fn new(unit_id: u32, height: u16, width: u16, grids: Vec<Vec<f32>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions(format!(
                "activation grid {height}x{width}"
            )));
        }
        let cells = height as usize * width as usize;
        if let Some(g) = grids.iter().find(|g| g.len() != cells) {
            return Err(Error::LengthMismatch(format!(
                "grid of {} values for a {height}x{width} map",
                g.len()
            )));
        }
        Ok(ActivationVolume {
            unit_id,
            height,
            width,
            grids,
        })
    }

    pub fn unit_id(&self) -> u32 {
        self.unit_id
    }

    pub fn dims(&self) -> (u16, u16) {
        (self.height, self.width)
    }

    pub fn grids(&self) -> &[Vec<f32>] {
        &self.grids
    }

    pub fn value_count(&self) -> usize {
        self.grids.iter().map(Vec::len).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        self.grids.iter().flatten().copied()
    }

    pub(crate) fn first_non_finite(&self) -> Option<usize> {
        self.grids
            .iter()
            .position(|g| g.iter().any(|v| !v.is_finite()))
    }
}

fn check_quantile(quantile: f64) -> Result<()> {
    if quantile > 0.0 && quantile < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidQuantile(quantile))
    }
}

/// The `(k+1)`-th largest of `values` with `k = floor(quantile * N)`: the
/// observed sample whose strict-greater fraction is the largest one not
/// exceeding `quantile`.
pub fn top_quantile(values: &mut [f32], quantile: f64) -> Result<f32> {
    check_quantile(quantile)?;
    if values.is_empty() {
        return Err(Error::EmptyActivations);
    }
    let k = ((quantile * values.len() as f64).floor() as usize).min(values.len() - 1);
    let (_, t, _) = values.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    Ok(*t)
}

/// Exact threshold `T_u` over every pixel of every image of the unit.
pub fn compute_threshold(acts: &ActivationVolume, quantile: f64) -> Result<f64> {
    let mut values: Vec<f32> = acts.values().collect();
    top_quantile(&mut values, quantile).map(f64::from)
}

/// Approximate threshold from a uniform reservoir sample of `sample_size`
/// values (at least [`MIN_RESERVOIR`]). Exact when the volume is no larger
/// than the sample.
pub fn compute_threshold_sampled(
    acts: &ActivationVolume,
    quantile: f64,
    sample_size: usize,
    seed: u64,
) -> Result<f64> {
    let sample_size = sample_size.max(MIN_RESERVOIR);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir = Vec::with_capacity(sample_size.min(acts.value_count()));
    for (i, v) in acts.values().enumerate() {
        if i < sample_size {
            reservoir.push(v);
        } else {
            let j = rng.gen_range(0..=i);
            if j < sample_size {
                reservoir[j] = v;
            }
        }
    }
    top_quantile(&mut reservoir, quantile).map(f64::from)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UpsampleMode {
    #[default]
    #[serde(rename = "bilinear-corners")]
    BilinearCorners,
    #[serde(rename = "nearest")]
    Nearest,
}

impl fmt::Display for UpsampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpsampleMode::BilinearCorners => "bilinear-corners",
            UpsampleMode::Nearest => "nearest",
        })
    }
}

impl FromStr for UpsampleMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bilinear-corners" | "bilinear" => Ok(UpsampleMode::BilinearCorners),
            "nearest" => Ok(UpsampleMode::Nearest),
            _ => Err(format!("unknown upsample mode `{s}`")),
        }
    }
}

/// Per output index: lower source index, upper source index, weight of the upper.
fn bilinear_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let s = if dst > 1 {
                i as f64 * (src - 1) as f64 / (dst - 1) as f64
            } else {
                0.0
            };
            let lo = (s.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

fn nearest_axis(src: usize, dst: usize) -> Vec<usize> {
    (0..dst).map(|i| (i * src / dst).min(src - 1)).collect()
}

fn check_upsample(src: (u16, u16), dst: (u16, u16)) -> Result<()> {
    if src.0 == 0 || src.1 == 0 || dst.0 < src.0 || dst.1 < src.1 {
        return Err(Error::InvalidDimensions(format!(
            "cannot upsample {}x{} to {}x{}",
            src.0, src.1, dst.0, dst.1
        )));
    }
    Ok(())
}

/// Corner-aligned bilinear upsampling: output index `i` samples source
/// coordinate `i * (S - 1) / (D - 1)` (or 0 when `D == 1`) on each axis.
pub fn upsample_bilinear(grid: &[f32], src: (u16, u16), dst: (u16, u16)) -> Result<Vec<f64>> {
    upsample(grid, src, dst, UpsampleMode::BilinearCorners)
}

pub fn upsample(grid: &[f32], src: (u16, u16), dst: (u16, u16), mode: UpsampleMode) -> Result<Vec<f64>> {
    check_upsample(src, dst)?;
    let (h, w) = (src.0 as usize, src.1 as usize);
    let (out_h, out_w) = (dst.0 as usize, dst.1 as usize);
    if grid.len() != h * w {
        return Err(Error::LengthMismatch(format!(
            "{} values for a {h}x{w} grid",
            grid.len()
        )));
    }
    let at = |r: usize, c: usize| grid[r * w + c] as f64;
    let mut out = Vec::with_capacity(out_h * out_w);
    match mode {
        UpsampleMode::BilinearCorners => {
            let rows = bilinear_axis(h, out_h);
            let cols = bilinear_axis(w, out_w);
            for &(r0, r1, tr) in &rows {
                for &(c0, c1, tc) in &cols {
                    // a + (b - a) * t is exact when a == b
                    let top = at(r0, c0) + (at(r0, c1) - at(r0, c0)) * tc;
                    let bottom = at(r1, c0) + (at(r1, c1) - at(r1, c0)) * tc;
                    out.push(top + (bottom - top) * tr);
                }
            }
        }
        UpsampleMode::Nearest => {
            let rows = nearest_axis(h, out_h);
            let cols = nearest_axis(w, out_w);
            for &r in &rows {
                for &c in &cols {
                    out.push(at(r, c));
                }
            }
        }
    }
    Ok(out)
}

/// Pixel set iff `value >= threshold`.
pub fn binarize(values: &[f64], height: u16, width: u16, threshold: f64) -> Result<BitMask> {
    let px: Vec<bool> = values.iter().map(|&v| v >= threshold).collect();
    BitMask::from_bools(height, width, &px)
}

/// A unit's binarized activation masks `M_u` at annotation resolution,
/// aligned with the annotation store's image order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMaskVolume {
    pub unit_id: u32,
    pub threshold: f64,
    masks: Vec<BitMask>,
}

impl UnitMaskVolume {
    pub fn from_masks(unit_id: u32, threshold: f64, masks: Vec<BitMask>) -> Self {
        UnitMaskVolume {
            unit_id,
            threshold,
            masks,
        }
    }

    /// Upsamples each image's grid to that image's annotation frame, then
    /// binarizes at `threshold`.
    pub fn build(
        acts: &ActivationVolume,
        store: &AnnotationStore,
        threshold: f64,
        mode: UpsampleMode,
    ) -> Result<Self> {
        if acts.grids().len() != store.len() {
            return Err(Error::ImageSetMismatch(format!(
                "unit {} has {} grids for {} annotated images",
                acts.unit_id(),
                acts.grids().len(),
                store.len()
            )));
        }
        let masks = acts
            .grids()
            .iter()
            .zip(store.images())
            .map(|(grid, image)| {
                let up = upsample(grid, acts.dims(), image.dims(), mode)?;
                binarize(&up, image.height, image.width, threshold)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UnitMaskVolume::from_masks(acts.unit_id(), threshold, masks))
    }

    /// Thresholds with [`compute_threshold`] at `quantile` and builds the masks.
    pub fn from_activations(
        acts: &ActivationVolume,
        store: &AnnotationStore,
        quantile: f64,
        mode: UpsampleMode,
    ) -> Result<Self> {
        let t = compute_threshold(acts, quantile)?;
        UnitMaskVolume::build(acts, store, t, mode)
    }

    pub fn masks(&self) -> &[BitMask] {
        &self.masks
    }

    fn check_coverage(&self, store: &AnnotationStore) -> Result<()> {
        if self.masks.len() != store.len() {
            return Err(Error::ImageSetMismatch(format!(
                "{} unit masks for {} annotated images",
                self.masks.len(),
                store.len()
            )));
        }
        Ok(())
    }
}

/// Builds the mask volume of `unit_id` from a whole activation store.
pub fn unit_masks(
    acts: &ActivationStore,
    store: &AnnotationStore,
    unit_id: u32,
    quantile: f64,
    mode: UpsampleMode,
) -> Result<UnitMaskVolume> {
    UnitMaskVolume::from_activations(acts.unit(unit_id)?, store, quantile, mode)
}

/// A score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Score(value))
    }

    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            Score(0.0)
        } else {
            Score(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn total_cmp(&self, other: &Score) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_score(self.0))
    }
}

/// Decimal text with at least six significant digits.
pub fn format_score(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.6}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(6) as usize;
    format!("{v:.decimals$}")
}

/// Dataset-wide intersection and union pixel counts of `M_u` and `G_E`.
pub fn iou_counts(unit: &UnitMaskVolume, form: &LogicalForm, store: &AnnotationStore) -> Result<(u64, u64)> {
    unit.check_coverage(store)?;
    let mut inter = 0;
    let mut union = 0;
    for (m, image) in unit.masks.iter().zip(store.images()) {
        let g = image.eval(form)?;
        inter += m.and_count(&g)?;
        union += m.or_count(&g)?;
    }
    Ok((inter, union))
}

/// Σ|M ∩ G_E| / Σ|M ∪ G_E| over all images; 0 when the union is empty.
pub fn iou_score(unit: &UnitMaskVolume, form: &LogicalForm, store: &AnnotationStore) -> Result<Score> {
    let (inter, union) = iou_counts(unit, form, store)?;
    Ok(Score::ratio(inter, union))
}

/// `(detected, present)`: images where the unit overlaps the explanation, and
/// images where the explanation occurs at all.
pub fn detacc_counts(
    unit: &UnitMaskVolume,
    form: &LogicalForm,
    store: &AnnotationStore,
) -> Result<(u64, u64)> {
    unit.check_coverage(store)?;
    let mut detected = 0;
    let mut present = 0;
    for (m, image) in unit.masks.iter().zip(store.images()) {
        let g = image.eval(form)?;
        if !g.is_empty() {
            present += 1;
            if m.intersects(&g)? {
                detected += 1;
            }
        }
    }
    Ok((detected, present))
}

/// Fraction of explanation-bearing images on which the unit's mask overlaps
/// the explanation. [`Error::NoSupport`] when the explanation occurs nowhere.
pub fn detacc_score(unit: &UnitMaskVolume, form: &LogicalForm, store: &AnnotationStore) -> Result<Score> {
    let (detected, present) = detacc_counts(unit, form, store)?;
    if present == 0 {
        return Err(Error::NoSupport);
    }
    Ok(Score::ratio(detected, present))
}
