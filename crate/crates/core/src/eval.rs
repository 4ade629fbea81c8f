//! Stratified splitting, confusion-matrix metrics, ROC/AUC and model
//! comparison tables. OUD is the positive class throughout.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Sorted row indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_indices(y: &[bool]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &v) in y.iter().enumerate() {
        out[v as usize].push(i);
    }
    out
}

/// Per class, `round(test_fraction * n_class)` rows go to the test side,
/// clamped so both sides keep at least one row of each class.
pub fn stratified_split(y: &[bool], test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("split.test_fraction", "must be in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (label, mut rows) in class_indices(y).into_iter().enumerate() {
        if rows.len() < 2 {
            let name = if label == 1 { "OUD" } else { "NOUD" };
            return Err(Error::InvalidInput(format!(
                "class {name} has {} rows, a stratified split needs at least 2",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        let k = ((test_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Stratified k-fold assignment; returns the held-out rows of each fold.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("selection.folds", "must be >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for mut rows in class_indices(y) {
        if rows.len() < k {
            return Err(Error::InvalidInput(format!(
                "a class has {} rows, fewer than the {k} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        for (i, r) in rows.into_iter().enumerate() {
            folds[i % k].push(r);
        }
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn class_metrics(tp: usize, fp: usize, fn_: usize) -> (ClassMetrics, bool) {
    let (precision, w1) = ratio(tp, tp + fp);
    let (recall, w2) = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (
        ClassMetrics {
            precision,
            recall,
            f1,
            support: tp + fn_,
        },
        w1 || w2,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub oud: ClassMetrics,
    pub noud: ClassMetrics,
    /// Some ratio had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

pub fn confusion_and_prf(y: &[bool], predicted: &[bool]) -> Result<(Confusion, Prf)> {
    if y.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} predictions",
            y.len(),
            predicted.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("no labels to score".into()));
    }
    let mut c = Confusion::default();
    for (&t, &p) in y.iter().zip(predicted) {
        match (t, p) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let (oud, w1) = class_metrics(c.tp, c.fp, c.fn_);
    let (noud, w2) = class_metrics(c.tn, c.fn_, c.fp);
    Ok((
        c,
        Prf {
            oud,
            noud,
            zero_division: w1 || w2,
        },
    ))
}

fn check_scores(y: &[bool], scores: &[f64]) -> Result<(u64, u64)> {
    if y.len() != scores.len() {
        return Err(Error::InvalidInput(format!("{} labels but {} scores", y.len(), scores.len())));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidInput(format!("score {i} is NaN")));
    }
    let pos = y.iter().filter(|&&v| v).count() as u64;
    let neg = y.len() as u64 - pos;
    if pos == 0 {
        return Err(Error::SingleClass("NOUD"));
    }
    if neg == 0 {
        return Err(Error::SingleClass("OUD"));
    }
    Ok((pos, neg))
}

/// Rank AUC: the fraction of (OUD, NOUD) pairs where OUD scores higher, ties
/// counting one half. Computed exactly as twice the Mann-Whitney U.
pub fn auc(y: &[bool], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = check_scores(y, scores)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut u2: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if y[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        u2 += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    Ok(u2 as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Rows scoring at or above this are called OUD; the first point uses
    /// positive infinity.
    pub threshold: f64,
}

/// ROC points at every unique score, from (0, 0) to (1, 1).
pub fn roc_curve(y: &[bool], scores: &[f64]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = check_scores(y, scores)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: s,
        });
    }
    Ok(points)
}

pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub threshold: f64,
    pub confusion: Confusion,
    pub oud: ClassMetrics,
    pub noud: ClassMetrics,
    pub auc: f64,
    pub zero_division: bool,
    #[serde(skip)]
    pub roc: Vec<RocPoint>,
}

impl MetricsReport {
    /// Scores rows as OUD when `score >= threshold`.
    pub fn compute(y: &[bool], scores: &[f64], threshold: f64) -> Result<Self> {
        let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
        let (confusion, prf) = confusion_and_prf(y, &predicted)?;
        let roc = roc_curve(y, scores)?;
        Ok(MetricsReport {
            n: y.len(),
            threshold,
            confusion,
            oud: prf.oud,
            noud: prf.noud,
            auc: auc(y, scores)?,
            zero_division: prf.zero_division,
            roc,
        })
    }
}

pub fn write_roc<W: Write>(w: W, points: &[RocPoint]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fpr", "tpr", "threshold"])?;
    for p in points {
        let t = if p.threshold.is_infinite() {
            "inf".to_string()
        } else {
            p.threshold.to_string()
        };
        wtr.write_record([p.fpr.to_string(), p.tpr.to_string(), t])?;
    }
    wtr.flush()
}

/// Metrics of one model at each selection stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReports {
    pub model: String,
    pub stages: Vec<(String, MetricsReport)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    /// Aligned with [`Comparison::stages`].
    pub metrics: Vec<Option<MetricsReport>>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub stages: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Tabulates models by stage; the best model has the highest AUC at the last
/// stage (earliest listed wins ties).
pub fn compare_models(reports: &[ModelReports]) -> Result<Comparison> {
    if reports.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "comparison needs at least 2 model reports, got {}",
            reports.len()
        )));
    }
    let mut stages: Vec<String> = Vec::new();
    for r in reports {
        for (s, _) in &r.stages {
            if !stages.contains(s) {
                stages.push(s.clone());
            }
        }
    }
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            model: r.model.clone(),
            metrics: stages
                .iter()
                .map(|s| r.stages.iter().find(|(name, _)| name == s).map(|(_, m)| m.clone()))
                .collect(),
            best: false,
        })
        .collect();
    let last = stages.len().saturating_sub(1);
    let key = |row: &ComparisonRow| row.metrics.get(last).and_then(|m| m.as_ref()).map_or(f64::NEG_INFINITY, |m| m.auc);
    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if key(row) > key(&rows[best]) {
            best = i;
        }
    }
    rows[best].best = true;
    Ok(Comparison { stages, rows })
}

impl Comparison {
    pub fn best_model(&self) -> &str {
        &self.rows.iter().find(|r| r.best).expect("one best row").model
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["model".to_string()];
        for s in &self.stages {
            for class in ["oud", "noud"] {
                for m in ["precision", "recall", "f1"] {
                    header.push(format!("{s}_{class}_{m}"));
                }
            }
            header.push(format!("{s}_auc"));
        }
        header.push("best".into());
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.model.clone()];
            for m in &row.metrics {
                match m {
                    Some(m) => {
                        for c in [&m.oud, &m.noud] {
                            rec.extend([c.precision, c.recall, c.f1].map(|v| format!("{v:.6}")));
                        }
                        rec.push(format!("{:.6}", m.auc));
                    }
                    None => rec.extend(std::iter::repeat_n(String::new(), 7)),
                }
            }
            rec.push(row.best.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_auc(y: &[bool], s: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &a) in y.iter().enumerate() {
            for (j, &b) in y.iter().enumerate() {
                if a && !b {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        wins += 1.0;
                    } else if s[i] == s[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        let y = [true, true, false, false];
        assert_eq!(auc(&y, &[0.9, 0.4, 0.5, 0.1]).unwrap(), 0.75);
        assert_eq!(auc(&y, &[0.9, 0.8, 0.5, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&y, &[0.3; 4]).unwrap(), 0.5);
        assert!(matches!(auc(&[true, true], &[0.1, 0.2]), Err(Error::SingleClass(_))));
        let s = [0.2, 0.2, 0.7, 0.2, 0.9, 0.1];
        let y = [true, false, false, true, true, false];
        assert_eq!(auc(&y, &s).unwrap(), pair_auc(&y, &s));
    }

    #[test]
    fn roc_area_matches_rank_auc() {
        let s = [0.2, 0.2, 0.7, 0.2, 0.9, 0.1, 0.7];
        let y = [true, false, false, true, true, false, true];
        let pts = roc_curve(&y, &s).unwrap();
        assert_eq!(pts[0].threshold, f64::INFINITY);
        assert_eq!((pts.last().unwrap().fpr, pts.last().unwrap().tpr), (1.0, 1.0));
        assert_eq!(pts.len(), 5);
        assert!((trapezoid_area(&pts) - auc(&y, &s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn prf_examples() {
        let y = [true, true, true, false, false];
        let p = [true, true, false, true, false];
        let (c, m) = confusion_and_prf(&y, &p).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 1));
        assert!((m.oud.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.oud.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.oud.f1 - 2.0 / 3.0).abs() < 1e-15);

        let (_, m) = confusion_and_prf(&y, &y).unwrap();
        assert_eq!((m.oud.f1, m.noud.f1, m.zero_division), (1.0, 1.0, false));

        let y: Vec<bool> = (0..100).map(|i| i == 0).collect();
        let (c, m) = confusion_and_prf(&y, &[false; 100]).unwrap();
        assert_eq!(c.total(), 100);
        assert_eq!((m.noud.recall, m.oud.recall, m.oud.precision), (1.0, 0.0, 0.0));
        assert!(m.zero_division);
        assert!(confusion_and_prf(&[], &[]).is_err());
    }

    #[test]
    fn split_is_stratified_partition() {
        let y: Vec<bool> = (0..1000).map(|i| i % 100 == 0).collect();
        let s = stratified_split(&y, 0.3, 7).unwrap();
        assert_eq!(s.test.len(), 300);
        assert_eq!(s.test.iter().filter(|&&i| y[i]).count(), 3);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(stratified_split(&y, 0.3, 7).unwrap(), s);
        assert_ne!(stratified_split(&y, 0.3, 8).unwrap(), s);

        let y: Vec<bool> = (0..100).map(|i| i == 0).collect();
        assert!(stratified_split(&y, 0.3, 1).is_err());
    }

    #[test]
    fn folds_cover_rows_once() {
        let y: Vec<bool> = (0..103).map(|i| i % 10 == 0).collect();
        let folds = stratified_folds(&y, 5, 3).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.iter().filter(|&&i| y[i]).count() >= 2);
        }
    }

    #[test]
    fn comparison_flags_best() {
        let mk = |s: &[f64]| MetricsReport::compute(&[true, false, true, false], s, 0.5).unwrap();
        let reports = vec![
            ModelReports {
                model: "a".into(),
                stages: vec![("chi2".into(), mk(&[0.9, 0.1, 0.2, 0.3])), ("rfe".into(), mk(&[0.9, 0.1, 0.2, 0.3]))],
            },
            ModelReports {
                model: "b".into(),
                stages: vec![("chi2".into(), mk(&[0.9, 0.1, 0.2, 0.3])), ("rfe".into(), mk(&[0.9, 0.1, 0.8, 0.3]))],
            },
        ];
        let c = compare_models(&reports).unwrap();
        assert_eq!(c.best_model(), "b");
        assert_eq!(c.rows[0].metrics[0], c.rows[1].metrics[0]);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().ends_with("rfe_auc,best"));
        assert!(compare_models(&reports[..1]).is_err());
    }
}
