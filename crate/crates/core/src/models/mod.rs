//! Logistic regression, decision tree, random forest and gradient boosting
//! behind one train/predict interface. OUD is the positive class.

pub mod boosting;
pub mod forest;
pub mod logistic;
pub mod tree;

use std::fmt;
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

pub use boosting::BoostingParams;
pub use forest::ForestParams;
pub use logistic::{log_loss, log_loss_gradient, sigmoid, LogisticParams, Solver};
pub use tree::{MaxFeatures, Node, Tree, TreeParams};

use crate::error::{Error, Result};
use crate::matrix::Dataset;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Logistic,
    Tree,
    Forest,
    Boosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Logistic, ModelKind::Tree, ModelKind::Forest, ModelKind::Boosting];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Boosting => "boosting",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelSpec {
    Logistic(LogisticParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Boosting(BoostingParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Logistic => ModelSpec::Logistic(LogisticParams::default()),
            ModelKind::Tree => ModelSpec::Tree(TreeParams::default()),
            ModelKind::Forest => ModelSpec::Forest(ForestParams::default()),
            ModelKind::Boosting => ModelSpec::Boosting(BoostingParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Logistic(_) => ModelKind::Logistic,
            ModelSpec::Tree(_) => ModelKind::Tree,
            ModelSpec::Forest(_) => ModelKind::Forest,
            ModelSpec::Boosting(_) => ModelKind::Boosting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prefix = format!("models.{}", self.kind());
        match self {
            ModelSpec::Logistic(p) => p.validate(&prefix),
            ModelSpec::Tree(p) => p.validate(&prefix),
            ModelSpec::Forest(p) => p.validate(&prefix),
            ModelSpec::Boosting(p) => p.validate(&prefix),
        }
    }

    /// Replaces the seed of randomized model kinds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelSpec::Tree(p) => p.seed = seed,
            ModelSpec::Forest(p) => p.seed = seed,
            ModelSpec::Logistic(_) | ModelSpec::Boosting(_) => {}
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Parameters {
    Linear { intercept: f64, coefficients: Vec<f64> },
    Tree { tree: Tree },
    Forest { trees: Vec<Tree> },
    Boosting { init: f64, trees: Vec<Tree> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub n_rows: usize,
    pub n_positive: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Training loss per iteration (logistic) or per stage (boosting).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub features: Vec<String>,
    pub parameters: Parameters,
    /// Per-feature weights used for ranking, aligned with `features`.
    pub weights: Vec<f64>,
    pub training: TrainingInfo,
    /// Hash of the pipeline config that produced this model, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

fn check_trainable(data: &Dataset) -> Result<()> {
    if data.n_rows() == 0 {
        return Err(Error::InvalidInput("training matrix is empty".into()));
    }
    match data.n_positive() {
        0 => return Err(Error::SingleClass("NOUD")),
        p if p == data.n_rows() => return Err(Error::SingleClass("OUD")),
        _ => {}
    }
    for ((row, col), v) in data.x.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                feature: data.features[col].clone(),
                row,
            });
        }
    }
    Ok(())
}

pub fn train(spec: &ModelSpec, data: &Dataset) -> Result<FittedModel> {
    spec.validate()?;
    check_trainable(data)?;
    let (x, y) = (&data.x, &data.y[..]);
    let info = |iterations, converged, loss_trace| TrainingInfo {
        n_rows: data.n_rows(),
        n_positive: data.n_positive(),
        iterations,
        converged,
        loss_trace,
    };
    let (parameters, weights, training) = match spec {
        ModelSpec::Logistic(p) => {
            let fit = logistic::fit(x, y, p);
            if !fit.coef.iter().all(|c| c.is_finite()) || !fit.intercept.is_finite() {
                return Err(Error::Internal("logistic fit produced non-finite coefficients".into()));
            }
            let weights = fit.coef.iter().map(|c| c.abs()).collect();
            (
                Parameters::Linear {
                    intercept: fit.intercept,
                    coefficients: fit.coef,
                },
                weights,
                info(fit.iterations, fit.converged, fit.loss_trace),
            )
        }
        ModelSpec::Tree(p) => {
            let (tree, importance) = tree::fit_tree(x, y, p);
            (Parameters::Tree { tree }, importance, info(1, true, Vec::new()))
        }
        ModelSpec::Forest(p) => {
            let (trees, importance) = forest::fit(x, y, p);
            (Parameters::Forest { trees }, importance, info(p.n_trees, true, Vec::new()))
        }
        ModelSpec::Boosting(p) => {
            let fit = boosting::fit(x, y, p);
            (
                Parameters::Boosting {
                    init: fit.init,
                    trees: fit.trees,
                },
                fit.importance,
                info(p.n_stages, true, fit.loss_trace),
            )
        }
    };
    Ok(FittedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        features: data.features.clone(),
        parameters,
        weights,
        training,
        config_hash: None,
    })
}

/// Odds ratio of one logistic coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub feature: String,
    pub coefficient: f64,
    pub odds_ratio: f64,
    pub interpretation: String,
}

fn interpretation(feature: &str) -> String {
    if feature == "male" {
        "male vs female".into()
    } else if feature.starts_with("age_") {
        format!("{feature} vs age_65_plus")
    } else if feature.starts_with("chronicity_") {
        format!("{feature} vs chronicity_non")
    } else {
        "per additional diagnosis".into()
    }
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    fn score(&self, row: &[f64]) -> f64 {
        match &self.parameters {
            Parameters::Linear { intercept, coefficients } => {
                sigmoid(intercept + row.iter().zip(coefficients).map(|(a, b)| a * b).sum::<f64>())
            }
            Parameters::Tree { tree } => tree.predict(row),
            Parameters::Forest { trees } => trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64,
            Parameters::Boosting { init, trees } => sigmoid(boosting::score(*init, trees, row)),
        }
    }

    /// OUD probability of one row laid out as `self.features`.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> Result<f64> {
        if row.len() != self.features.len() {
            return Err(Error::CatalogMismatch(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.features.len()
            )));
        }
        let owned;
        let slice = match row.as_slice() {
            Some(s) => s,
            None => {
                owned = row.to_vec();
                &owned
            }
        };
        Ok(self.score(slice))
    }

    /// OUD probabilities; the dataset's columns must match the model's
    /// feature list exactly.
    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.features != self.features {
            return Err(Error::CatalogMismatch(format!(
                "model trained on {} features, data has {}",
                self.features.len(),
                data.features.len()
            )));
        }
        data.x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }

    /// |coefficient| for logistic models, normalized impurity decrease for
    /// tree models.
    pub fn feature_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn odds_ratios(&self) -> Result<Vec<OddsRatio>> {
        let Parameters::Linear { coefficients, .. } = &self.parameters else {
            return Err(Error::NotLogistic(self.kind().name()));
        };
        Ok(self
            .features
            .iter()
            .zip(coefficients)
            .map(|(f, &c)| OddsRatio {
                feature: f.clone(),
                coefficient: c,
                odds_ratio: c.exp(),
                interpretation: interpretation(f),
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: FittedModel = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("model json: {e}")))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn ds(x: Array2<f64>, y: Vec<bool>) -> Dataset {
        let names = (0..x.ncols()).map(|j| format!("f{j}")).collect();
        Dataset::new(x, y, names).unwrap()
    }

    fn accuracy(m: &FittedModel, d: &Dataset) -> f64 {
        let p = m.predict_proba(d).unwrap();
        p.iter().zip(&d.y).filter(|(p, y)| (**p >= 0.5) == **y).count() as f64 / d.n_rows() as f64
    }

    fn small_tree() -> ModelSpec {
        ModelSpec::Tree(TreeParams {
            max_depth: 2,
            min_leaf: 1,
            ..Default::default()
        })
    }

    #[test]
    fn separable_logistic_is_perfect() {
        let d = ds(array![[0.0, 1.0], [1.0, 0.0], [3.0, 4.0], [4.0, 3.0]], vec![false, false, true, true]);
        let m = train(&ModelSpec::default_for(ModelKind::Logistic), &d).unwrap();
        assert_eq!(accuracy(&m, &d), 1.0);
    }

    #[test]
    fn xor_tree_beats_logistic() {
        let d = ds(array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], vec![false, true, true, false]);
        assert_eq!(accuracy(&train(&small_tree(), &d).unwrap(), &d), 1.0);
        let lr = train(&ModelSpec::default_for(ModelKind::Logistic), &d).unwrap();
        assert!(accuracy(&lr, &d) <= 0.75);
    }

    #[test]
    fn zero_logistic_scores_half() {
        let m = FittedModel {
            format_version: MODEL_FORMAT_VERSION,
            spec: ModelSpec::default_for(ModelKind::Logistic),
            features: vec!["a".into(), "b".into()],
            parameters: Parameters::Linear {
                intercept: 0.0,
                coefficients: vec![0.0, 0.0],
            },
            weights: vec![0.0, 0.0],
            training: TrainingInfo {
                n_rows: 0,
                n_positive: 0,
                iterations: 0,
                converged: true,
                loss_trace: vec![],
            },
            config_hash: None,
        };
        assert_eq!(m.predict_row(array![3.0, -2.0].view()).unwrap(), 0.5);
        assert!(m.predict_row(array![3.0].view()).is_err());
        let or = m.odds_ratios().unwrap();
        assert_eq!(or[0].odds_ratio, 1.0);
    }

    #[test]
    fn forest_is_mean_of_its_trees() {
        let leaf = |v: f64| Tree {
            nodes: vec![Node {
                feature: None,
                threshold: 0.0,
                left: 0,
                right: 0,
                value: v,
                weight: 1.0,
            }],
        };
        let m = FittedModel {
            format_version: MODEL_FORMAT_VERSION,
            spec: ModelSpec::default_for(ModelKind::Forest),
            features: vec!["a".into()],
            parameters: Parameters::Forest {
                trees: vec![leaf(0.2), leaf(0.6)],
            },
            weights: vec![0.0],
            training: TrainingInfo {
                n_rows: 0,
                n_positive: 0,
                iterations: 2,
                converged: true,
                loss_trace: vec![],
            },
            config_hash: None,
        };
        assert!((m.predict_row(array![1.0].view()).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(m.odds_ratios(), Err(Error::NotLogistic("forest"))));
    }

    #[test]
    fn logistic_weights_favor_label_copy() {
        let n = 200;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| match j {
            0 => ((i * 13) % 7) as f64,
            1 => (i % 2) as f64 + if i % 5 == 0 { 0.3 } else { 0.0 },
            _ => ((i * 3) % 4) as f64,
        });
        let y = (0..n).map(|i| i % 2 == 1).collect();
        let m = train(
            &ModelSpec::Logistic(LogisticParams {
                l2: 0.01,
                ..Default::default()
            }),
            &ds(x, y),
        )
        .unwrap();
        let w = m.feature_weights();
        assert!(w[1] > w[0] && w[1] > w[2]);
    }

    #[test]
    fn rejects_single_class_and_non_finite() {
        let d = ds(array![[0.0], [1.0]], vec![true, true]);
        assert!(matches!(train(&small_tree(), &d), Err(Error::SingleClass(_))));
        let d = ds(array![[0.0], [f64::NAN]], vec![true, false]);
        assert!(matches!(train(&small_tree(), &d), Err(Error::NonFinite { row: 1, .. })));
    }

    #[test]
    fn json_round_trip_all_kinds() {
        let n = 120;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * (j + 2) * 7) % 11) as f64 / 3.0);
        let y: Vec<bool> = (0..n).map(|i| (i * 7) % 11 < 4).collect();
        let d = ds(x, y);
        for kind in ModelKind::ALL {
            let spec = match ModelSpec::default_for(kind) {
                ModelSpec::Forest(p) => ModelSpec::Forest(ForestParams { n_trees: 5, ..p }),
                ModelSpec::Boosting(p) => ModelSpec::Boosting(BoostingParams { n_stages: 10, ..p }),
                s => s,
            };
            let m = train(&spec, &d).unwrap();
            let back = FittedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.predict_proba(&d).unwrap(), m.predict_proba(&d).unwrap());
            assert!(m.predict_proba(&d).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
            if kind != ModelKind::Logistic {
                assert!((m.feature_weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn boosting_loss_trace_is_monotone() {
        let n = 300;
        let x = Array2::from_shape_fn((n, 2), |(i, j)| ((i * (3 + j * 5)) % 13) as f64);
        let y: Vec<bool> = (0..n).map(|i| ((i * 3) % 13 > 6) ^ (i % 7 == 0)).collect();
        let m = train(&ModelSpec::default_for(ModelKind::Boosting), &ds(x, y)).unwrap();
        let t = &m.training.loss_trace;
        assert_eq!(t.len(), 101);
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
        assert!(t[100] < t[0]);
    }

    #[test]
    fn spec_json_shape() {
        let spec: ModelSpec = serde_json::from_str(r#"{"kind":"FOREST","n_trees":7}"#).unwrap();
        assert_eq!(
            spec,
            ModelSpec::Forest(ForestParams {
                n_trees: 7,
                ..Default::default()
            })
        );
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"FOREST","trees":7}"#).is_err());
    }
}
