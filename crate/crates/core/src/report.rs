//! Per-unit dissection reports, the batch driver that produces them, and the
//! CSV summary with IoU/DetAcc correlations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datastore::{ConceptCatalog, Dataset, DEFAULT_MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::scoring::{compute_threshold, format_score, ActivationVolume, UnitMaskVolume, UpsampleMode, DEFAULT_QUANTILE};
use crate::search::{beam_search, select_explanation, SearchConfig, SelectionRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthEntry {
    /// Search step this entry was recorded at.
    pub length: usize,
    pub form: String,
    /// Concept count of `form`; at most `length`.
    pub form_length: usize,
    pub iou: f64,
    /// `null` when the form occurs in no image.
    pub detacc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitReport {
    pub unit_id: u32,
    pub threshold: f64,
    pub per_length: Vec<LengthEntry>,
    pub chosen_iou: String,
    pub chosen_detacc: String,
    /// The form picked by the configured selection rule.
    pub selected: String,
    pub stopped_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissectOptions {
    pub quantile: f64,
    pub upsample: UpsampleMode,
    pub min_samples: u32,
    pub search: SearchConfig,
    /// Worker threads across units; results do not depend on it.
    pub jobs: usize,
}

impl Default for DissectOptions {
    fn default() -> Self {
        DissectOptions {
            quantile: DEFAULT_QUANTILE,
            upsample: UpsampleMode::default(),
            min_samples: DEFAULT_MIN_SAMPLES,
            search: SearchConfig::default(),
            jobs: 1,
        }
    }
}

pub fn dissect_unit(
    acts: &ActivationVolume,
    dataset: &Dataset,
    catalog: &ConceptCatalog,
    opts: &DissectOptions,
) -> Result<UnitReport> {
    let threshold = compute_threshold(acts, opts.quantile)?;
    let unit = UnitMaskVolume::build(acts, &dataset.annotations, threshold, opts.upsample)?;
    let state = beam_search(&unit, catalog, &dataset.annotations, &opts.search)?;
    let per_length = state
        .per_length_best
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(LengthEntry {
                length: i + 1,
                form: s.form.to_text(catalog)?,
                form_length: s.length,
                iou: s.iou.value(),
                detacc: s.detacc.map(|d| d.value()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitReport {
        unit_id: acts.unit_id(),
        threshold,
        chosen_iou: select_explanation(&state, SelectionRule::MaxIou).form.to_text(catalog)?,
        chosen_detacc: select_explanation(&state, SelectionRule::MaxDetAcc).form.to_text(catalog)?,
        selected: select_explanation(&state, opts.search.selection).form.to_text(catalog)?,
        per_length,
        stopped_at: state.stopped_at,
    })
}

/// Explains every unit of the dataset, ordered by unit id.
pub fn dissect(dataset: &Dataset, opts: &DissectOptions) -> Result<Vec<UnitReport>> {
    opts.search.validate()?;
    let catalog = dataset.filtered(opts.min_samples)?;
    let units = dataset.activations.units();
    let run = || {
        units
            .par_iter()
            .map(|u| dissect_unit(u, dataset, &catalog, opts))
            .collect::<Result<Vec<_>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(run)
}

pub fn reports_to_json(reports: &[UnitReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

pub fn reports_from_json(text: &str) -> Result<Vec<UnitReport>> {
    let reports: Vec<UnitReport> =
        serde_json::from_str(text).map_err(|e| Error::MalformedReport(e.to_string()))?;
    for r in &reports {
        if r.per_length.is_empty() {
            return Err(Error::MalformedReport(format!("unit {} has no per-length entries", r.unit_id)));
        }
    }
    Ok(reports)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// 1-based ranks, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub csv: String,
    pub pearson: f64,
    pub spearman: f64,
}

/// CSV rows `unit_id,length,iou,detacc,chosen`, then correlation footers
/// between the IoU-chosen forms' IoU and DetAcc across units.
pub fn summarize(reports: &[UnitReport]) -> Summary {
    let mut csv = String::from("unit_id,length,iou,detacc,chosen\n");
    let mut ious = Vec::with_capacity(reports.len());
    let mut detaccs = Vec::with_capacity(reports.len());
    for r in reports {
        let last = r.per_length.len() - 1;
        let detacc_pick = r.per_length.iter().position(|e| e.form == r.chosen_detacc);
        for (i, e) in r.per_length.iter().enumerate() {
            let mut chosen = Vec::new();
            if i == last {
                chosen.push("iou");
            }
            if Some(i) == detacc_pick {
                chosen.push("detacc");
            }
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.unit_id,
                e.length,
                format_score(e.iou),
                e.detacc.map_or_else(|| "no-support".to_string(), format_score),
                chosen.join(";")
            ));
        }
        let best = &r.per_length[last];
        ious.push(best.iou);
        detaccs.push(best.detacc.unwrap_or(0.0));
    }
    let pearson = pearson(&ious, &detaccs);
    let spearman = spearman(&ious, &detaccs);
    csv.push_str(&format!("# pearson={}\n", format_score(pearson)));
    csv.push_str(&format!("# spearman={}\n", format_score(spearman)));
    Summary {
        csv,
        pearson,
        spearman,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(unit_id: u32, iou: f64, detacc: Option<f64>) -> UnitReport {
        UnitReport {
            unit_id,
            threshold: 0.5,
            per_length: vec![LengthEntry {
                length: 1,
                form: "c000".into(),
                form_length: 1,
                iou,
                detacc,
            }],
            chosen_iou: "c000".into(),
            chosen_detacc: "c000".into(),
            selected: "c000".into(),
            stopped_at: None,
        }
    }

    #[test]
    fn perfect_and_reversed_correlation() {
        let x = [0.1, 0.4, 0.2, 0.9];
        assert!((pearson(&x, &x) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &x) - 1.0).abs() < 1e-12);
        let y = [0.9, 0.2, 0.4, 0.1];
        assert!((spearman(&x, &y) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_correlations() {
        // ranks (1,2,3) vs (1,3,2): 1 - 6*2/(3*8) = 0.5
        let x = [0.2, 0.5, 0.9];
        let y = [0.1, 0.8, 0.6];
        assert!((pearson(&x, &y) - 0.6317977517911877).abs() < 1e-12);
        assert!((spearman(&x, &y) - 0.5).abs() < 1e-12);
        let x = [0.3, 0.3, 0.7, 0.1];
        let y = [0.2, 0.4, 0.4, 0.9];
        assert_eq!(average_ranks(&x), vec![2.5, 2.5, 4.0, 1.0]);
        assert!((pearson(&x, &y) + 0.5101044905158808).abs() < 1e-12);
        assert!((spearman(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn summary_rows_and_footer() {
        let reports = vec![
            report(0, 0.2, Some(0.1)),
            report(1, 0.5, Some(0.8)),
            report(2, 0.9, Some(0.6)),
        ];
        let s = summarize(&reports);
        let lines: Vec<&str> = s.csv.lines().collect();
        assert_eq!(lines[0], "unit_id,length,iou,detacc,chosen");
        assert_eq!(lines[1], "0,1,0.200000,0.100000,iou;detacc");
        assert_eq!(lines[4], "# pearson=0.631798");
        assert_eq!(lines[5], "# spearman=0.500000");
        let s = summarize(&[report(0, 0.0, None)]);
        assert!(s.csv.contains("no-support"));
        assert!(s.pearson.is_nan());
    }

    #[test]
    fn json_round_trip_and_malformed() {
        let reports = vec![report(3, 0.25, None)];
        let text = reports_to_json(&reports);
        assert_eq!(reports_from_json(&text).unwrap(), reports);
        assert_eq!(reports_to_json(&reports_from_json(&text).unwrap()), text);
        assert!(matches!(reports_from_json("{"), Err(Error::MalformedReport(_))));
        assert!(matches!(
            reports_from_json(r#"[{"unit_id": 1}]"#),
            Err(Error::MalformedReport(_))
        ));
    }
}
