//! Variance threshold, chi-squared filter and recursive feature elimination
//! with a cross-validated AUC stopping rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::balance::{smote, SmoteConfig};
use crate::error::{Error, Result};
use crate::eval::{auc, stratified_folds};
use crate::matrix::{Dataset, FeatureMatrix};
use crate::models::{train, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub variance_threshold: f64,
    pub alpha: f64,
    pub prune_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            variance_threshold: 0.03,
            alpha: 0.05,
            prune_fraction: 0.10,
            folds: 5,
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_threshold >= 0.0 && self.variance_threshold.is_finite()) {
            return Err(Error::config("selection.variance_threshold", "must be >= 0"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("selection.alpha", "must be in (0, 1]"));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::config("selection.prune_fraction", "must be in (0, 1)"));
        }
        if self.folds < 2 {
            return Err(Error::config("selection.folds", "must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceResult {
    pub retained: Vec<String>,
    pub variances: BTreeMap<String, f64>,
}

/// Population variance of each column over `rows`; keeps columns with
/// variance at or above `threshold`.
pub fn variance_filter(m: &FeatureMatrix, rows: &[usize], threshold: f64) -> Result<VarianceResult> {
    if rows.is_empty() || m.n_cols() == 0 {
        return Err(Error::InvalidInput("variance filter needs a non-empty matrix".into()));
    }
    let mut in_rows = vec![false; m.n_rows()];
    for &r in rows {
        in_rows[r] = true;
    }
    let n = rows.len() as f64;
    let mut out = VarianceResult {
        retained: Vec::new(),
        variances: BTreeMap::new(),
    };
    for (j, info) in m.catalog().iter().enumerate() {
        let values: Vec<f64> = m
            .column(j)
            .iter()
            .filter(|(r, _)| in_rows[*r as usize])
            .map(|&(_, v)| v)
            .collect();
        let mean = values.iter().sum::<f64>() / n;
        let zeros = n - values.len() as f64;
        let var = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() + zeros * mean * mean) / n;
        if var >= threshold {
            out.retained.push(info.name.clone());
        }
        out.variances.insert(info.name.clone(), var);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
}

/// Upper-tail p-value of a chi-squared statistic with one degree of freedom.
pub fn chi2_sf_1df(statistic: f64) -> f64 {
    if statistic <= 0.0 {
        1.0
    } else {
        erfc((statistic / 2.0).sqrt()).clamp(0.0, 1.0)
    }
}

/// Class-wise value sums against expectations proportional to class sizes.
pub fn chi_square(values: impl IntoIterator<Item = (f64, bool)>, n_pos: usize, n: usize) -> ChiSquare {
    let (mut o_pos, mut o_neg) = (0.0, 0.0);
    for (v, y) in values {
        if y {
            o_pos += v;
        } else {
            o_neg += v;
        }
    }
    let total = o_pos + o_neg;
    if total <= 0.0 || n_pos == 0 || n_pos == n {
        return ChiSquare {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let e_pos = total * n_pos as f64 / n as f64;
    let e_neg = total * (n - n_pos) as f64 / n as f64;
    let statistic = (o_pos - e_pos).powi(2) / e_pos + (o_neg - e_neg).powi(2) / e_neg;
    ChiSquare {
        statistic,
        p_value: chi2_sf_1df(statistic),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiResult {
    pub retained: Vec<String>,
    pub stats: BTreeMap<String, ChiSquare>,
}

/// Keeps features of `features` whose chi-squared p-value over `rows` is
/// below `alpha`.
pub fn chi2_filter(m: &FeatureMatrix, rows: &[usize], features: &[String], alpha: f64) -> Result<ChiResult> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("chi-squared filter needs rows".into()));
    }
    let mut in_rows = vec![false; m.n_rows()];
    for &r in rows {
        in_rows[r] = true;
    }
    let labels = m.is_oud();
    let n_pos = rows.iter().filter(|&&r| labels[r]).count();
    let mut out = ChiResult {
        retained: Vec::new(),
        stats: BTreeMap::new(),
    };
    for name in features {
        let j = m
            .column_index(name)
            .ok_or_else(|| Error::CatalogMismatch(format!("unknown feature `{name}`")))?;
        let col = m.column(j);
        if let Some(&(r, v)) = col.iter().find(|(_, v)| *v < 0.0) {
            return Err(Error::InvalidInput(format!("feature `{name}` has negative value {v} at row {r}")));
        }
        let stat = chi_square(
            col.iter()
                .filter(|(r, _)| in_rows[*r as usize])
                .map(|&(r, v)| (v, labels[r as usize])),
            n_pos,
            rows.len(),
        );
        if stat.p_value < alpha {
            out.retained.push(name.clone());
        }
        out.stats.insert(name.clone(), stat);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    pub n_features: usize,
    pub mean_auc: f64,
    pub fold_aucs: Vec<f64>,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    pub trajectory: Vec<RfeStep>,
    pub best: Vec<String>,
    pub best_auc: f64,
}

/// Mean AUC over stratified folds, oversampling each training fold only.
pub fn cross_validated_auc(spec: &ModelSpec, data: &Dataset, folds: &[Vec<usize>], smote_cfg: &SmoteConfig) -> Result<Vec<f64>> {
    let mut held_out = vec![usize::MAX; data.n_rows()];
    for (k, fold) in folds.iter().enumerate() {
        for &r in fold {
            held_out[r] = k;
        }
    }
    folds
        .iter()
        .enumerate()
        .map(|(k, fold)| {
            let train_rows: Vec<usize> = (0..data.n_rows()).filter(|&r| held_out[r] != k).collect();
            let cfg = SmoteConfig {
                seed: smote_cfg.seed.wrapping_add(k as u64),
                ..smote_cfg.clone()
            };
            let balanced = smote(&data.rows(&train_rows), &cfg)?;
            let model = train(spec, &balanced.data)?;
            let test = data.rows(fold);
            auc(&test.y, &model.predict_proba(&test)?)
        })
        .collect()
}

/// Features to drop: the `count` lowest weights, lexicographically last
/// names first among equal weights.
fn lowest(features: &[String], weights: &[f64], count: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then_with(|| features[b].cmp(&features[a])));
    order.into_iter().take(count).map(|i| features[i].clone()).collect()
}

/// Recursive feature elimination down to a single feature. The best subset
/// maximizes mean cross-validated AUC, preferring fewer features on ties.
pub fn rfe(spec: &ModelSpec, data: &Dataset, config: &SelectionConfig, smote_cfg: &SmoteConfig) -> Result<RfeResult> {
    config.validate()?;
    if data.n_features() == 0 {
        return Err(Error::NoFeatures);
    }
    let folds = stratified_folds(&data.y, config.folds, config.seed)?;
    let mut current = data.features.clone();
    let mut trajectory = Vec::new();
    loop {
        let subset = data.columns(&current)?;
        let fold_aucs = cross_validated_auc(spec, &subset, &folds, smote_cfg)?;
        trajectory.push(RfeStep {
            n_features: current.len(),
            mean_auc: fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64,
            fold_aucs,
            features: current.clone(),
        });
        if current.len() < 2 {
            break;
        }
        let balanced = smote(&subset, smote_cfg)?;
        let model = train(spec, &balanced.data)?;
        let count = ((config.prune_fraction * current.len() as f64).ceil() as usize).clamp(1, current.len() - 1);
        let drop = lowest(&current, model.feature_weights(), count);
        current.retain(|f| !drop.contains(f));
    }
    let mut best = 0;
    for (i, step) in trajectory.iter().enumerate() {
        if step.mean_auc >= trajectory[best].mean_auc {
            best = i;
        }
    }
    Ok(RfeResult {
        best: trajectory[best].features.clone(),
        best_auc: trajectory[best].mean_auc,
        trajectory,
    })
}
