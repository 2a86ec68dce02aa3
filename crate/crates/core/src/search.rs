//! Explanation search: atomic argmax, beam search over compositional forms,
//! an exhaustive reference search, and DetAcc-driven selection and stopping.
//!
//! Beam candidates `F op c` are scored without materializing their masks.
//! Every supported operator's intersection and union with the unit mask
//! follow by inclusion-exclusion from `|F ∩ c|` and `|M ∩ F ∩ c|`, which
//! only need the images where `c` is annotated.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datastore::{AnnotationStore, ConceptCatalog};
use crate::error::{Error, Result};
use crate::forms::{ConceptId, LogicalForm};
use crate::masks::{and_count_words, and_counts_with, BitMask};
use crate::scoring::{detacc_counts, iou_counts, Score, UnitMaskVolume};

pub const DEFAULT_BEAM_SIZE: usize = 10;
pub const DEFAULT_MAX_LENGTH: usize = 3;
pub const EXHAUSTIVE_MAX_CONCEPTS: usize = 10;
pub const EXHAUSTIVE_MAX_LENGTH: usize = 3;

/// How a beam form `F` is extended with an atomic concept `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    /// `F AND c`
    And,
    /// `F OR c`
    Or,
    /// `F AND NOT c`
    AndNot,
    /// `F OR NOT c`
    OrNot,
}

impl Operator {
    pub const DEFAULT_SET: [Operator; 3] = [Operator::And, Operator::Or, Operator::AndNot];

    pub fn combine(self, form: LogicalForm, concept: ConceptId) -> LogicalForm {
        let leaf = LogicalForm::Leaf(concept);
        match self {
            Operator::And => form.and(leaf),
            Operator::Or => form.or(leaf),
            Operator::AndNot => form.and(leaf.not()),
            Operator::OrNot => form.or(leaf.not()),
        }
    }

    /// Intersection and union of `M` with `F op c`.
    fn counts(self, s: &PairCounts) -> (u64, u64) {
        let (inter, size) = match self {
            Operator::And => (s.mfc, s.fc),
            Operator::Or => (s.mf + s.mc - s.mfc, s.f + s.c - s.fc),
            Operator::AndNot => (s.mf - s.mfc, s.f - s.fc),
            Operator::OrNot => (s.m - (s.mc - s.mfc), s.total - s.c + s.fc),
        };
        (inter, s.m + size - inter)
    }

    /// Mask of `F op c` on one image; `None` means `c` is absent there.
    fn apply(self, f: &BitMask, c: Option<&BitMask>) -> BitMask {
        match (self, c) {
            (Operator::And, Some(c)) => f.and(c).expect("frames agree"),
            (Operator::Or, Some(c)) => f.or(c).expect("frames agree"),
            (Operator::AndNot, Some(c)) => f.and_not(c).expect("frames agree"),
            (Operator::OrNot, Some(c)) => f.or(&c.not()).expect("frames agree"),
            (Operator::And, None) => BitMask::new(f.height(), f.width()),
            (Operator::Or | Operator::AndNot, None) => f.clone(),
            (Operator::OrNot, None) => BitMask::full(f.height(), f.width()),
        }
    }
}

/// Dataset-wide pixel counts for one (beam form, concept) pair.
struct PairCounts {
    total: u64,
    m: u64,
    f: u64,
    mf: u64,
    c: u64,
    mc: u64,
    fc: u64,
    mfc: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SelectionRule {
    #[serde(rename = "iou")]
    MaxIou,
    #[default]
    #[serde(rename = "detacc")]
    MaxDetAcc,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionRule::MaxIou => "iou",
            SelectionRule::MaxDetAcc => "detacc",
        })
    }
}

impl FromStr for SelectionRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "iou" | "max-iou" => Ok(SelectionRule::MaxIou),
            "detacc" | "max-detacc" => Ok(SelectionRule::MaxDetAcc),
            _ => Err(format!("unknown selection rule `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum StoppingRule {
    #[default]
    None,
    /// Stop once the per-length best DetAcc has been more than `epsilon`
    /// below its running maximum for `patience` consecutive lengths.
    DetAccDrop { epsilon: f64, patience: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub beam_size: usize,
    pub max_length: usize,
    pub operators: Vec<Operator>,
    pub selection: SelectionRule,
    pub stopping: StoppingRule,
    /// Compute DetAcc for every beam member, not only the per-length bests.
    pub detacc_all: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_size: DEFAULT_BEAM_SIZE,
            max_length: DEFAULT_MAX_LENGTH,
            operators: Operator::DEFAULT_SET.to_vec(),
            selection: SelectionRule::default(),
            stopping: StoppingRule::None,
            detacc_all: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.beam_size == 0 {
            return bad("beam size must be at least 1");
        }
        if self.max_length == 0 {
            return bad("max length must be at least 1");
        }
        if self.operators.is_empty() {
            return bad("operator set is empty");
        }
        if let StoppingRule::DetAccDrop { epsilon, patience } = self.stopping {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return bad("epsilon must be finite and non-negative");
            }
            if patience == 0 {
                return bad("patience must be at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExplanation {
    pub form: LogicalForm,
    pub length: usize,
    pub iou: Score,
    /// `None` when the explanation occurs in no image.
    pub detacc: Option<Score>,
}

impl ScoredExplanation {
    /// Scores `form` directly from the unit masks and the annotation store.
    pub fn evaluate(unit: &UnitMaskVolume, form: LogicalForm, store: &AnnotationStore) -> Result<Self> {
        let (inter, union) = iou_counts(unit, &form, store)?;
        let (detected, present) = detacc_counts(unit, &form, store)?;
        Ok(ScoredExplanation {
            length: form.length(),
            form,
            iou: Score::ratio(inter, union),
            detacc: (present > 0).then(|| Score::ratio(detected, present)),
        })
    }

    /// DetAcc with "no support" ranked as 0.
    pub fn detacc_or_zero(&self) -> f64 {
        self.detacc.map_or(0.0, Score::value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    /// Final beam, IoU descending.
    pub beam: Vec<ScoredExplanation>,
    /// Entry `k - 1` is the best form after search step `k`.
    pub per_length_best: Vec<ScoredExplanation>,
    /// Step at which the stopping rule fired.
    pub stopped_at: Option<usize>,
}

impl BeamState {
    /// Best form after the last completed step.
    pub fn best(&self) -> &ScoredExplanation {
        self.per_length_best.last().expect("at least one step")
    }
}

struct ConceptIndex<'a> {
    id: ConceptId,
    /// `(image index, mask)` for images where the concept is annotated.
    images: Vec<(usize, &'a BitMask)>,
    size: u64,
    unit_inter: u64,
}

struct BeamEntry {
    form: LogicalForm,
    masks: Vec<BitMask>,
    size: u64,
    unit_inter: u64,
    iou: f64,
    detacc: Option<Option<Score>>,
}

struct Candidate {
    parent: usize,
    concept: usize,
    op: Operator,
    iou: f64,
}

/// Precomputed per-unit statistics shared by all search steps.
struct Searcher<'a> {
    unit: &'a UnitMaskVolume,
    store: &'a AnnotationStore,
    concepts: Vec<ConceptIndex<'a>>,
    unit_size: u64,
    total: u64,
}

impl<'a> Searcher<'a> {
    fn new(unit: &'a UnitMaskVolume, catalog: &ConceptCatalog, store: &'a AnnotationStore) -> Result<Self> {
        if unit.masks().len() != store.len() {
            return Err(Error::ImageSetMismatch(format!(
                "{} unit masks for {} annotated images",
                unit.masks().len(),
                store.len()
            )));
        }
        for (m, image) in unit.masks().iter().zip(store.images()) {
            if m.dims() != image.dims() {
                return Err(Error::DimensionMismatch {
                    expected: image.dims(),
                    found: m.dims(),
                });
            }
        }
        let ids = catalog.searchable_ids();
        if ids.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let concepts = ids
            .into_iter()
            .map(|id| {
                let images: Vec<(usize, &BitMask)> = store
                    .images()
                    .iter()
                    .enumerate()
                    .filter_map(|(i, img)| img.mask(id).map(|m| (i, m)))
                    .collect();
                let size = images.iter().map(|(_, m)| m.popcount()).sum();
                let unit_inter = images
                    .iter()
                    .map(|&(i, m)| and_count_words(unit.masks()[i].words(), m.words()))
                    .sum();
                ConceptIndex {
                    id,
                    images,
                    size,
                    unit_inter,
                }
            })
            .collect();
        Ok(Searcher {
            unit,
            store,
            concepts,
            unit_size: unit.masks().iter().map(BitMask::popcount).sum(),
            total: store.images().iter().map(|i| i.height as u64 * i.width as u64).sum(),
        })
    }

    fn iou(&self, inter: u64, union: u64) -> f64 {
        Score::ratio(inter, union).value()
    }

    fn atomic_iou(&self, c: &ConceptIndex) -> f64 {
        self.iou(c.unit_inter, self.unit_size + c.size - c.unit_inter)
    }

    fn atomic_entry(&self, c: &ConceptIndex) -> BeamEntry {
        let mut masks: Vec<BitMask> = self
            .store
            .images()
            .iter()
            .map(|img| BitMask::new(img.height, img.width))
            .collect();
        for &(i, m) in &c.images {
            masks[i] = m.clone();
        }
        BeamEntry {
            form: LogicalForm::Leaf(c.id),
            masks,
            size: c.size,
            unit_inter: c.unit_inter,
            iou: self.atomic_iou(c),
            detacc: None,
        }
    }

    /// Atomic concepts ordered by IoU descending, ties by ascending concept id.
    fn ranked_atoms(&self) -> Vec<usize> {
        let mut order: Vec<(usize, f64)> = self
            .concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (i, self.atomic_iou(c)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        order.into_iter().map(|(i, _)| i).collect()
    }

    fn pair_counts(&self, entry: &BeamEntry, c: &ConceptIndex) -> PairCounts {
        let mut fc = 0;
        let mut mfc = 0;
        for &(i, cm) in &c.images {
            let (ab, mab) = and_counts_with(self.unit.masks()[i].words(), entry.masks[i].words(), cm.words());
            fc += ab;
            mfc += mab;
        }
        PairCounts {
            total: self.total,
            m: self.unit_size,
            f: entry.size,
            mf: entry.unit_inter,
            c: c.size,
            mc: c.unit_inter,
            fc,
            mfc,
        }
    }

    fn expand(&self, parent: &BeamEntry, concept: usize, op: Operator) -> BeamEntry {
        let c = &self.concepts[concept];
        let masks: Vec<BitMask> = parent
            .masks
            .iter()
            .enumerate()
            .map(|(i, f)| op.apply(f, self.store.image(i).mask(c.id)))
            .collect();
        let size = masks.iter().map(BitMask::popcount).sum();
        let unit_inter = masks
            .iter()
            .zip(self.unit.masks())
            .map(|(f, m)| and_count_words(f.words(), m.words()))
            .sum();
        BeamEntry {
            form: op.combine(parent.form.clone(), c.id),
            iou: self.iou(unit_inter, self.unit_size + size - unit_inter),
            masks,
            size,
            unit_inter,
            detacc: None,
        }
    }

    fn detacc(&self, entry: &BeamEntry) -> Option<Score> {
        let mut present = 0;
        let mut detected = 0;
        for (f, m) in entry.masks.iter().zip(self.unit.masks()) {
            if !f.is_empty() {
                present += 1;
                if and_count_words(f.words(), m.words()) > 0 {
                    detected += 1;
                }
            }
        }
        (present > 0).then(|| Score::ratio(detected, present))
    }

    fn scored(&self, entry: &mut BeamEntry) -> ScoredExplanation {
        let detacc = match entry.detacc {
            Some(d) => d,
            None => {
                let d = self.detacc(entry);
                entry.detacc = Some(d);
                d
            }
        };
        ScoredExplanation {
            form: entry.form.clone(),
            length: entry.form.length(),
            iou: score_of(entry.iou),
            detacc,
        }
    }

    fn step(&self, beam: Vec<BeamEntry>, cfg: &SearchConfig) -> Vec<BeamEntry> {
        let mut candidates = Vec::with_capacity(beam.len() * self.concepts.len() * cfg.operators.len());
        for (parent, entry) in beam.iter().enumerate() {
            for (concept, c) in self.concepts.iter().enumerate() {
                let counts = self.pair_counts(entry, c);
                for &op in &cfg.operators {
                    let (inter, union) = op.counts(&counts);
                    candidates.push(Candidate {
                        parent,
                        concept,
                        op,
                        iou: self.iou(inter, union),
                    });
                }
            }
        }
        // Pool order is beam members first, then candidates in generation
        // order; the stable sort keeps that order among equal IoUs.
        enum Slot {
            Kept(usize),
            New(usize),
        }
        let mut pool: Vec<(Slot, f64)> = beam
            .iter()
            .enumerate()
            .map(|(i, e)| (Slot::Kept(i), e.iou))
            .chain(candidates.iter().enumerate().map(|(i, c)| (Slot::New(i), c.iou)))
            .collect();
        pool.sort_by(|a, b| b.1.total_cmp(&a.1));

        let mut seen: HashSet<LogicalForm> = beam.iter().map(|e| e.form.clone()).collect();
        let mut picked = Vec::with_capacity(cfg.beam_size);
        for (slot, _) in pool {
            if picked.len() == cfg.beam_size {
                break;
            }
            match slot {
                Slot::Kept(i) => picked.push(Slot::Kept(i)),
                Slot::New(i) => {
                    let cand = &candidates[i];
                    let form = cand
                        .op
                        .combine(beam[cand.parent].form.clone(), self.concepts[cand.concept].id);
                    if seen.insert(form) {
                        picked.push(Slot::New(i));
                    }
                }
            }
        }

        let new_entries: Vec<Option<BeamEntry>> = picked
            .iter()
            .map(|slot| match slot {
                Slot::Kept(_) => None,
                Slot::New(i) => {
                    let c = &candidates[*i];
                    Some(self.expand(&beam[c.parent], c.concept, c.op))
                }
            })
            .collect();
        let mut old: Vec<Option<BeamEntry>> = beam.into_iter().map(Some).collect();
        picked
            .iter()
            .zip(new_entries)
            .map(|(slot, fresh)| match slot {
                Slot::Kept(i) => old[*i].take().expect("each member kept once"),
                Slot::New(_) => fresh.expect("expanded above"),
            })
            .collect()
    }
}

fn score_of(v: f64) -> Score {
    Score::new(v).expect("ratio of counts lies in [0, 1]")
}

/// Highest-IoU atomic concept; ties go to the lowest concept id.
pub fn atomic_search(
    unit: &UnitMaskVolume,
    catalog: &ConceptCatalog,
    store: &AnnotationStore,
) -> Result<ScoredExplanation> {
    let searcher = Searcher::new(unit, catalog, store)?;
    let best = searcher.ranked_atoms()[0];
    let mut entry = searcher.atomic_entry(&searcher.concepts[best]);
    Ok(searcher.scored(&mut entry))
}

pub fn beam_search(
    unit: &UnitMaskVolume,
    catalog: &ConceptCatalog,
    store: &AnnotationStore,
    cfg: &SearchConfig,
) -> Result<BeamState> {
    cfg.validate()?;
    let searcher = Searcher::new(unit, catalog, store)?;
    let mut beam: Vec<BeamEntry> = searcher
        .ranked_atoms()
        .into_iter()
        .take(cfg.beam_size)
        .map(|i| searcher.atomic_entry(&searcher.concepts[i]))
        .collect();

    let mut per_length_best = vec![searcher.scored(&mut beam[0])];
    let mut stopped_at = None;
    for k in 2..=cfg.max_length {
        beam = searcher.step(beam, cfg);
        per_length_best.push(searcher.scored(&mut beam[0]));
        if let StoppingRule::DetAccDrop { epsilon, patience } = cfg.stopping {
            let history: Vec<f64> = per_length_best.iter().map(|s| s.detacc_or_zero()).collect();
            if stopping_check(&history, epsilon, patience) == StopDecision::Stop {
                stopped_at = Some(k);
                break;
            }
        }
    }

    let beam = beam
        .iter_mut()
        .map(|e| {
            if cfg.detacc_all {
                searcher.scored(e)
            } else {
                ScoredExplanation {
                    form: e.form.clone(),
                    length: e.form.length(),
                    iou: score_of(e.iou),
                    detacc: e.detacc.flatten(),
                }
            }
        })
        .collect();
    Ok(BeamState {
        beam,
        per_length_best,
        stopped_at,
    })
}

/// Number of left-deep forms up to `max_length` over `concepts` atoms with
/// `operators` extension operators.
pub fn candidate_space_size(concepts: usize, max_length: usize, operators: usize) -> usize {
    (1..=max_length)
        .map(|k| concepts.pow(k as u32) * operators.pow(k as u32 - 1))
        .sum()
}

/// Every form the beam grammar can generate up to `max_length`, shortest first.
pub fn enumerate_forms(concepts: &[ConceptId], max_length: usize, operators: &[Operator]) -> Vec<LogicalForm> {
    let mut all: Vec<LogicalForm> = concepts.iter().map(|&c| LogicalForm::Leaf(c)).collect();
    let mut frontier = all.clone();
    for _ in 1..max_length {
        let mut next = Vec::with_capacity(frontier.len() * concepts.len() * operators.len());
        for f in &frontier {
            for &c in concepts {
                for &op in operators {
                    next.push(op.combine(f.clone(), c));
                }
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

/// Scores every generatable form directly and returns the maximum-IoU one
/// (first in enumeration order on ties). Reference for [`beam_search`].
pub fn exhaustive_search(
    unit: &UnitMaskVolume,
    catalog: &ConceptCatalog,
    store: &AnnotationStore,
    max_length: usize,
    operators: &[Operator],
) -> Result<ScoredExplanation> {
    let ids = catalog.searchable_ids();
    if ids.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if ids.len() > EXHAUSTIVE_MAX_CONCEPTS || max_length > EXHAUSTIVE_MAX_LENGTH {
        return Err(Error::InstanceTooLarge {
            concepts: ids.len(),
            length: max_length,
        });
    }
    let mut best: Option<(LogicalForm, Score)> = None;
    for form in enumerate_forms(&ids, max_length, operators) {
        let (inter, union) = iou_counts(unit, &form, store)?;
        let iou = Score::ratio(inter, union);
        if best.as_ref().is_none_or(|(_, b)| iou > *b) {
            best = Some((form, iou));
        }
    }
    let (form, _) = best.expect("non-empty enumeration");
    ScoredExplanation::evaluate(unit, form, store)
}

/// Picks the unit's explanation among the per-length bests.
///
/// `MaxIou` returns the last step's best. `MaxDetAcc` returns the highest
/// DetAcc (no support counts as 0), preferring shorter forms and then
/// earlier steps on ties.
pub fn select_explanation(state: &BeamState, rule: SelectionRule) -> &ScoredExplanation {
    match rule {
        SelectionRule::MaxIou => state.best(),
        SelectionRule::MaxDetAcc => {
            let mut best = &state.per_length_best[0];
            for cand in &state.per_length_best[1..] {
                let (a, b) = (cand.detacc_or_zero(), best.detacc_or_zero());
                if a > b || (a == b && cand.length < best.length) {
                    best = cand;
                }
            }
            best
        }
    }
}

/// `Stop` once the last `patience` entries of `history` each lie more than
/// `epsilon` below the running maximum of the entries before them.
pub fn stopping_check(history: &[f64], epsilon: f64, patience: usize) -> StopDecision {
    let mut running_max = f64::NEG_INFINITY;
    let mut drops = 0;
    for &v in history {
        if running_max - v > epsilon {
            drops += 1;
        } else {
            drops = 0;
        }
        running_max = running_max.max(v);
    }
    if patience > 0 && drops >= patience {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{Category, ImageAnnotation};

    fn catalog(n: usize) -> ConceptCatalog {
        ConceptCatalog::from_names((0..n).map(|i| (format!("c{i}"), Category::Object))).unwrap()
    }

    fn store(masks: Vec<Vec<BitMask>>) -> AnnotationStore {
        let images = masks
            .into_iter()
            .enumerate()
            .map(|(i, per_concept)| {
                let (h, w) = per_concept[0].dims();
                let mut img = ImageAnnotation::new(i as u32, h, w);
                for (c, m) in per_concept.into_iter().enumerate() {
                    img.insert(ConceptId(c as u32), m).unwrap();
                }
                img
            })
            .collect();
        AnnotationStore::new(images).unwrap()
    }

    fn two_concepts() -> (ConceptCatalog, AnnotationStore) {
        let a = BitMask::from_rows(&[[1, 1, 0], [1, 1, 0]]);
        let b = BitMask::from_rows(&[[0, 1, 1], [0, 1, 1]]);
        (catalog(2), store(vec![vec![a, b]]))
    }

    #[test]
    fn atomic_perfect_match_and_tie() {
        let (cat, st) = two_concepts();
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![BitMask::from_rows(&[[0, 1, 1], [0, 1, 1]])]);
        let best = atomic_search(&unit, &cat, &st).unwrap();
        assert_eq!(best.form, LogicalForm::leaf(1));
        assert_eq!(best.iou.value(), 1.0);

        let same = BitMask::from_rows(&[[1, 0], [0, 1]]);
        let st = store(vec![vec![same.clone(), same.clone()]]);
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![same]);
        assert_eq!(atomic_search(&unit, &catalog(2), &st).unwrap().form, LogicalForm::leaf(0));
    }

    #[test]
    fn empty_catalog() {
        let (_, st) = two_concepts();
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![BitMask::new(2, 3)]);
        assert!(matches!(atomic_search(&unit, &catalog(0), &st), Err(Error::EmptyCatalog)));
    }

    #[test]
    fn conjunction_found_by_beam_and_exhaustive() {
        let (cat, st) = two_concepts();
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![BitMask::from_rows(&[[0, 1, 0], [0, 1, 0]])]);
        let ex = exhaustive_search(&unit, &cat, &st, 2, &Operator::DEFAULT_SET).unwrap();
        assert_eq!(ex.iou.value(), 1.0);
        assert_eq!(ex.form, LogicalForm::leaf(0).and(LogicalForm::leaf(1)));
        let cfg = SearchConfig {
            max_length: 2,
            ..SearchConfig::default()
        };
        let state = beam_search(&unit, &cat, &st, &cfg).unwrap();
        assert_eq!(state.best().iou.value(), 1.0);
        assert_eq!(state.per_length_best.len(), 2);
    }

    #[test]
    fn each_operator_counts_match_materialized_masks() {
        let a = BitMask::from_rows(&[[1, 1, 0, 0], [1, 0, 0, 1]]);
        let b = BitMask::from_rows(&[[0, 1, 1, 0], [0, 0, 1, 1]]);
        let st = store(vec![vec![a, b]]);
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![BitMask::from_rows(&[[0, 1, 1, 1], [1, 0, 0, 0]])]);
        let cat = catalog(2);
        let searcher = Searcher::new(&unit, &cat, &st).unwrap();
        let parent = searcher.atomic_entry(&searcher.concepts[0]);
        let counts = searcher.pair_counts(&parent, &searcher.concepts[1]);
        for op in [Operator::And, Operator::Or, Operator::AndNot, Operator::OrNot] {
            let form = op.combine(LogicalForm::leaf(0), ConceptId(1));
            assert_eq!(op.counts(&counts), iou_counts(&unit, &form, &st).unwrap(), "{op:?}");
            let e = searcher.expand(&parent, 1, op);
            assert_eq!(e.masks[0], st.image(0).eval(&form).unwrap());
        }
    }

    #[test]
    fn n_equal_one_matches_atomic() {
        let (cat, st) = two_concepts();
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![BitMask::from_rows(&[[1, 0, 0], [1, 0, 0]])]);
        let cfg = SearchConfig {
            max_length: 1,
            ..SearchConfig::default()
        };
        let state = beam_search(&unit, &cat, &st, &cfg).unwrap();
        assert_eq!(state.per_length_best.len(), 1);
        assert_eq!(state.best(), &atomic_search(&unit, &cat, &st).unwrap());
    }

    #[test]
    fn exhaustive_guard() {
        let st = store(vec![vec![BitMask::full(1, 1); 11]]);
        let unit = UnitMaskVolume::from_masks(0, 0.0, vec![BitMask::full(1, 1)]);
        assert!(matches!(
            exhaustive_search(&unit, &catalog(11), &st, 2, &Operator::DEFAULT_SET),
            Err(Error::InstanceTooLarge { .. })
        ));
        let st = store(vec![vec![BitMask::full(1, 1); 2]]);
        assert!(matches!(
            exhaustive_search(&unit, &catalog(2), &st, 4, &Operator::DEFAULT_SET),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn space_size_matches_enumeration() {
        let ids: Vec<ConceptId> = (0..4).map(ConceptId).collect();
        for n in 1..=3 {
            assert_eq!(
                enumerate_forms(&ids, n, &Operator::DEFAULT_SET).len(),
                candidate_space_size(4, n, 3)
            );
        }
        assert_eq!(candidate_space_size(6, 3, 3), 6 + 108 + 1944);
    }

    fn explanation(length: usize, detacc: Option<f64>) -> ScoredExplanation {
        let mut form = LogicalForm::leaf(0);
        for c in 1..length {
            form = form.and(LogicalForm::leaf(c as u32));
        }
        ScoredExplanation {
            form,
            length,
            iou: Score::new(0.1 * length as f64).unwrap(),
            detacc: detacc.map(|d| Score::new(d).unwrap()),
        }
    }

    fn state(detaccs: &[Option<f64>]) -> BeamState {
        let per_length_best: Vec<_> = detaccs
            .iter()
            .enumerate()
            .map(|(i, &d)| explanation(i + 1, d))
            .collect();
        BeamState {
            beam: per_length_best.clone(),
            per_length_best,
            stopped_at: None,
        }
    }

    #[test]
    fn selection_rules() {
        let single = state(&[Some(0.3)]);
        assert_eq!(select_explanation(&single, SelectionRule::MaxDetAcc).length, 1);

        let s = state(&[Some(0.4), Some(0.9), Some(0.7)]);
        assert_eq!(select_explanation(&s, SelectionRule::MaxDetAcc).length, 2);
        assert_eq!(select_explanation(&s, SelectionRule::MaxIou).length, 3);

        let flat = state(&[Some(0.5), Some(0.5), Some(0.5)]);
        assert_eq!(select_explanation(&flat, SelectionRule::MaxDetAcc).length, 1);

        let unsupported = state(&[None, Some(0.0), Some(0.2)]);
        assert_eq!(select_explanation(&unsupported, SelectionRule::MaxDetAcc).length, 3);
    }

    #[test]
    fn stopping_examples() {
        assert_eq!(stopping_check(&[0.5], 0.0, 1), StopDecision::Continue);
        assert_eq!(stopping_check(&[0.8, 0.6], 0.0, 1), StopDecision::Stop);
        assert_eq!(stopping_check(&[0.8, 0.8], 0.0, 1), StopDecision::Continue);
        assert_eq!(stopping_check(&[0.8, 0.6], 0.25, 1), StopDecision::Continue);
        assert_eq!(stopping_check(&[0.8, 0.6], 0.0, 2), StopDecision::Continue);
        assert_eq!(stopping_check(&[0.8, 0.6, 0.7], 0.0, 2), StopDecision::Stop);
        assert_eq!(stopping_check(&[0.8, 0.6, 0.9], 0.0, 1), StopDecision::Continue);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SearchConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.beam_size = 0;
        assert!(cfg.validate().is_err());
        let cfg = SearchConfig {
            stopping: StoppingRule::DetAccDrop {
                epsilon: -0.1,
                patience: 1,
            },
            ..SearchConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }
}
