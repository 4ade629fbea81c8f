//! Stage orchestration: each command reads the previous stage's artifacts
//! from the output directory and writes its own, plus a manifest recording
//! the config hash and a fingerprint of everything the stage depended on.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::balance::{smote, SmoteConfig};
use crate::claims::{
    parse_claims, write_eligibility, write_medical, write_pharmacy, write_rejects, ClaimFile, ClaimFiles, FileCounts,
    OpioidNdcTable, ParsedClaims, StudyPeriod,
};
use crate::cohort::{build_cohort, read_cohort, write_cohort, CohortConfig, ExclusionTally, OutcomeCodeSet};
use crate::error::{Error, Result};
use crate::eval::{compare_models, stratified_split, write_roc, MetricsReport, ModelReports, Split};
use crate::featurize::{build_matrix, mean_noud_age, AblationKeywords, FeaturizeOptions};
use crate::matrix::{FeatureInfo, FeatureMatrix};
use crate::models::{train, FittedModel, ModelKind, ModelSpec};
use crate::select::{chi2_filter, rfe, variance_filter, ChiSquare, RfeResult, SelectionConfig};
use crate::synth::{generate, write_ground_truth, GeneratorConfig, PlantedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    /// Synthesize claims with the built-in generator.
    Generator(GeneratorConfig),
    /// Existing claim files.
    Claims(ClaimFiles),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    pub input: InputSource,
    /// Opioid NDC table; the bundled one when absent.
    pub opioid_ndc: Option<PathBuf>,
    /// Claims outside this range are rejected. Defaults to the generator's
    /// period for synthetic input.
    pub study_period: Option<StudyPeriod>,
    pub cohort: CohortConfig,
    pub split: SplitConfig,
    pub ablate_dependency_history: bool,
    /// Keyword file for the ablation; the bundled one when absent.
    pub ablation_keywords: Option<PathBuf>,
    pub selection: SelectionConfig,
    pub smote: SmoteConfig,
    pub models: Vec<ModelSpec>,
    /// Probability at or above which a test row is called OUD.
    pub threshold: f64,
    /// Master seed; when set it replaces every other seed.
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            input: InputSource::Generator(GeneratorConfig::default()),
            opioid_ndc: None,
            study_period: None,
            cohort: CohortConfig::default(),
            split: SplitConfig::default(),
            ablate_dependency_history: false,
            ablation_keywords: None,
            selection: SelectionConfig::default(),
            smote: SmoteConfig::default(),
            models: ModelKind::ALL.into_iter().map(ModelSpec::default_for).collect(),
            threshold: 0.5,
            seed: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Sets every seed in the config to `seed`.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let InputSource::Generator(g) = &mut self.input {
            g.seed = seed;
        }
        self.split.seed = seed;
        self.selection.seed = seed;
        self.smote.seed = seed;
        for spec in self.models.iter_mut() {
            *spec = spec.clone().with_seed(seed);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let InputSource::Generator(g) = &self.input {
            g.validate().map_err(|e| prefix_field("input.generator", e))?;
        }
        self.cohort.windows.validate().map_err(|e| prefix_field("cohort", e))?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::config("split.test_fraction", "must be in (0, 1)"));
        }
        self.selection.validate()?;
        self.smote.validate()?;
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model is required"));
        }
        let mut seen = BTreeSet::new();
        for (i, spec) in self.models.iter().enumerate() {
            spec.validate().map_err(|e| prefix_field(&format!("models[{i}]"), e))?;
            if !seen.insert(spec.kind()) {
                return Err(Error::config(format!("models[{i}]"), format!("duplicate model kind {}", spec.kind())));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config("threshold", "must be in [0, 1]"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

fn prefix_field(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, message } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Cohort,
    Featurize,
    Select,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Cohort,
        Stage::Featurize,
        Stage::Select,
        Stage::Train,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Cohort => "cohort",
            Stage::Featurize => "featurize",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Cohort => "cohort",
            Stage::Featurize => "features",
            Stage::Select => "selection",
            Stage::Train => "models",
            Stage::Evaluate => "metrics",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    /// Hash over this stage's config sections and its upstream fingerprint.
    pub fingerprint: String,
    /// Artifact path (relative to the output directory) to SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// Collects a stage's files and their hashes.
struct StageWriter {
    root: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl StageWriter {
    fn new(root: &Path, stage: Stage) -> Result<Self> {
        let manifest = manifest_path(root, stage);
        if manifest.exists() {
            fs::remove_file(&manifest).map_err(|e| Error::io(&manifest, e))?;
        }
        let dir = root.join(stage.dir());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(StageWriter {
            root: root.to_path_buf(),
            artifacts: BTreeMap::new(),
        })
    }

    fn bytes(&mut self, rel: &str, data: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.artifacts.insert(rel.to_string(), sha256_hex(data));
        Ok(())
    }

    fn csv(&mut self, rel: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| Error::io(self.root.join(rel), e))?;
        self.bytes(rel, &buf)
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
        text.push('\n');
        self.bytes(rel, text.as_bytes())
    }

    fn finish(self, stage: Stage, config_hash: &str, fingerprint: &str) -> Result<()> {
        let manifest = Manifest {
            stage: stage.name().into(),
            config_hash: config_hash.into(),
            fingerprint: fingerprint.into(),
            artifacts: self.artifacts,
        };
        let path = manifest_path(&self.root, stage);
        fs::create_dir_all(path.parent().unwrap()).map_err(|e| Error::io(&path, e))?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn manifest_path(root: &Path, stage: Stage) -> PathBuf {
    root.join("manifests").join(format!("{}.json", stage.name()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn open_file(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct PlantedModelArtifact {
    config_hash: String,
    generator: GeneratorConfig,
    model: PlantedModel,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExclusionsArtifact {
    config_hash: String,
    file_counts: BTreeMap<ClaimFile, FileCounts>,
    rejects: usize,
    tally: ExclusionTally,
}

#[derive(Debug, Serialize, Deserialize)]
struct CatalogArtifact {
    config_hash: String,
    n_rows: usize,
    n_train: usize,
    n_test: usize,
    noud_mean_age: Option<f64>,
    ablate_dependency_history: bool,
    features: Vec<FeatureInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceStage {
    pub threshold: f64,
    pub retained: Vec<String>,
    pub variances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChiStage {
    pub alpha: f64,
    pub retained: Vec<String>,
    /// Mean p-value over the retained features.
    pub mean_retained_p_value: f64,
    pub stats: BTreeMap<String, ChiSquare>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSelection {
    /// Features entering RFE: the chi-squared set, minus reference levels
    /// for logistic regression.
    pub candidates: Vec<String>,
    pub rfe: RfeResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config_hash: String,
    pub n_train_rows: usize,
    pub n_features: usize,
    pub variance: VarianceStage,
    pub chi2: ChiStage,
    pub models: BTreeMap<String, ModelSelection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArtifact {
    pub config_hash: String,
    pub model: String,
    pub stage: String,
    pub features: usize,
    pub metrics: MetricsReport,
}

/// Feature sets models are trained on, in report order.
pub const SELECTION_STAGES: [&str; 2] = ["chi2", "rfe"];

fn model_file(kind: ModelKind, stage: &str) -> String {
    format!("{}/{}__{stage}.json", Stage::Train.dir(), kind.name())
}

fn metrics_file(kind: ModelKind, stage: &str) -> String {
    format!("{}/{}__{stage}.json", Stage::Evaluate.dir(), kind.name())
}

pub struct Pipeline {
    config: PipelineConfig,
    base_dir: PathBuf,
    output: PathBuf,
    config_hash: String,
}

impl Pipeline {
    /// Validates `config`; relative paths resolve against `base_dir`.
    pub fn new(config: PipelineConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let mut config = config;
        if let Some(seed) = config.seed {
            config.apply_seed(seed);
        }
        let output = base_dir.join(&config.output_dir);
        let config_hash = config.hash();
        Ok(Pipeline {
            config,
            base_dir: base_dir.to_path_buf(),
            output,
            config_hash,
        })
    }

    /// Loads a config file, applying the command-line overrides.
    pub fn from_file(path: &Path, seed: Option<u64>, ablate: bool) -> Result<Self> {
        let mut config = PipelineConfig::load(path)?;
        if let Some(s) = seed {
            config.seed = Some(s);
        }
        if ablate {
            config.ablate_dependency_history = true;
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, &base)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.output
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    fn section_hash(parts: &[&str]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    /// Fingerprint of a stage's output given the current config.
    pub fn fingerprint(&self, stage: Stage) -> String {
        let c = &self.config;
        match stage {
            Stage::Synth => Self::section_hash(&["synth", &j(&c.input), &j(&c.opioid_ndc), &j(&c.study_period)]),
            Stage::Cohort => Self::section_hash(&["cohort", &self.fingerprint(Stage::Synth), &j(&c.cohort)]),
            Stage::Featurize => Self::section_hash(&[
                "featurize",
                &self.fingerprint(Stage::Cohort),
                &j(&c.split),
                &j(&c.ablate_dependency_history),
                &j(&c.ablation_keywords),
            ]),
            Stage::Select => Self::section_hash(&[
                "select",
                &self.fingerprint(Stage::Featurize),
                &j(&c.selection),
                &j(&c.smote),
                &j(&c.models),
            ]),
            Stage::Train => Self::section_hash(&["train", &self.fingerprint(Stage::Select)]),
            Stage::Evaluate => Self::section_hash(&["evaluate", &self.fingerprint(Stage::Train), &j(&c.threshold)]),
            Stage::Report => Self::section_hash(&["report", &self.fingerprint(Stage::Evaluate)]),
        }
    }

    /// Checks that `stage` ran under the current config.
    fn require(&self, stage: Stage) -> Result<Manifest> {
        let path = manifest_path(&self.output, stage);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                command: stage.name(),
                path,
            });
        }
        let manifest: Manifest = read_json(&path)?;
        if manifest.fingerprint != self.fingerprint(stage) {
            return Err(Error::StaleArtifact {
                command: stage.name(),
                path,
            });
        }
        for rel in manifest.artifacts.keys() {
            let p = self.output.join(rel);
            if !p.exists() {
                return Err(Error::MissingArtifact {
                    command: stage.name(),
                    path: p,
                });
            }
        }
        Ok(manifest)
    }

    fn writer(&self, stage: Stage) -> Result<StageWriter> {
        fs::create_dir_all(&self.output).map_err(|e| Error::io(&self.output, e))?;
        StageWriter::new(&self.output, stage)
    }

    fn finish(&self, w: StageWriter, stage: Stage) -> Result<()> {
        w.finish(stage, &self.config_hash, &self.fingerprint(stage))
    }

    pub fn run(&self, stage: Stage) -> Result<String> {
        match stage {
            Stage::Synth => self.synth(),
            Stage::Cohort => self.cohort(),
            Stage::Featurize => self.featurize(),
            Stage::Select => self.select(),
            Stage::Train => self.train(),
            Stage::Evaluate => self.evaluate(),
            Stage::Report => self.report(),
        }
    }

    /// Runs every stage in order; synth is skipped for claim-file input.
    pub fn run_all(&self) -> Result<Vec<String>> {
        Stage::ALL
            .into_iter()
            .filter(|&s| s != Stage::Synth || matches!(self.config.input, InputSource::Generator(_)))
            .map(|s| self.run(s).map(|msg| format!("{s}: {msg}")))
            .collect()
    }

    fn opioid_table(&self) -> Result<OpioidNdcTable> {
        match &self.config.opioid_ndc {
            Some(p) => OpioidNdcTable::load(&self.resolve(p)),
            None => Ok(OpioidNdcTable::bundled()),
        }
    }

    fn study_period(&self) -> Option<StudyPeriod> {
        match (&self.config.study_period, &self.config.input) {
            (Some(p), _) => Some(*p),
            (None, InputSource::Generator(g)) => Some(g.study_period),
            (None, InputSource::Claims(_)) => None,
        }
    }

    fn claim_files(&self) -> Result<ClaimFiles> {
        match &self.config.input {
            InputSource::Generator(_) => {
                self.require(Stage::Synth)?;
                Ok(ClaimFiles::in_dir(&self.output.join(Stage::Synth.dir())))
            }
            InputSource::Claims(files) => Ok(ClaimFiles {
                pharmacy: self.resolve(&files.pharmacy),
                medical: self.resolve(&files.medical),
                eligibility: self.resolve(&files.eligibility),
            }),
        }
    }

    fn parse_inputs(&self) -> Result<ParsedClaims> {
        let files = self.claim_files()?;
        parse_claims(&files, &self.opioid_table()?, self.study_period().as_ref())
    }

    pub fn synth(&self) -> Result<String> {
        let InputSource::Generator(g) = &self.config.input else {
            return Err(Error::config("input", "synth needs a `generator` input"));
        };
        let pop = generate(g)?;
        let mut w = self.writer(Stage::Synth)?;
        let d = Stage::Synth.dir();
        w.csv(&format!("{d}/{}", ClaimFile::Pharmacy.name()), |b| write_pharmacy(b, &pop.pharmacy))?;
        w.csv(&format!("{d}/{}", ClaimFile::Medical.name()), |b| write_medical(b, &pop.medical))?;
        w.csv(&format!("{d}/{}", ClaimFile::Eligibility.name()), |b| {
            write_eligibility(b, &pop.eligibility)
        })?;
        w.csv(&format!("{d}/ground_truth.csv"), |b| write_ground_truth(b, &pop.ground_truth.rows))?;
        w.json(
            &format!("{d}/planted_model.json"),
            &PlantedModelArtifact {
                config_hash: self.config_hash.clone(),
                generator: g.clone(),
                model: pop.ground_truth.model.clone(),
            },
        )?;
        self.finish(w, Stage::Synth)?;
        Ok(format!(
            "{} patients, realized OUD prevalence {:.4}",
            pop.eligibility.len(),
            pop.ground_truth.model.realized_prevalence
        ))
    }

    pub fn cohort(&self) -> Result<String> {
        let claims = self.parse_inputs()?;
        let cohort = build_cohort(
            &claims,
            &self.config.cohort,
            &OutcomeCodeSet::default(),
            self.study_period().as_ref(),
        )?;
        let mut w = self.writer(Stage::Cohort)?;
        let d = Stage::Cohort.dir();
        w.csv(&format!("{d}/cohort.csv"), |b| write_cohort(b, &cohort.members))?;
        w.csv(&format!("{d}/rejects.csv"), |b| write_rejects(b, &claims.rejects))?;
        w.json(
            &format!("{d}/exclusions.json"),
            &ExclusionsArtifact {
                config_hash: self.config_hash.clone(),
                file_counts: claims.counts.clone(),
                rejects: claims.rejects.len(),
                tally: cohort.tally.clone(),
            },
        )?;
        self.finish(w, Stage::Cohort)?;
        Ok(format!(
            "{} members ({} OUD), {} rejected rows",
            cohort.members.len(),
            cohort.tally.oud,
            claims.rejects.len()
        ))
    }

    pub fn featurize(&self) -> Result<String> {
        self.require(Stage::Cohort)?;
        let claims = self.parse_inputs()?;
        let path = self.output.join(Stage::Cohort.dir()).join("cohort.csv");
        let members = read_cohort(open_file(&path)?)?;
        let y: Vec<bool> = members.iter().map(|m| m.label.is_oud()).collect();
        let split = stratified_split(&y, self.config.split.test_fraction, self.config.split.seed)?;
        let noud_mean_age = mean_noud_age(split.train.iter().map(|&i| &members[i]), &claims.eligibility);
        let ablation_keywords = match &self.config.ablation_keywords {
            Some(p) => AblationKeywords::load(&self.resolve(p))?,
            None => AblationKeywords::bundled(),
        };
        let opts = FeaturizeOptions {
            windows: self.config.cohort.windows,
            ablate_dependency_history: self.config.ablate_dependency_history,
            ablation_keywords,
            noud_mean_age,
            ..Default::default()
        };
        let m = build_matrix(&members, &claims, &opts)?;
        let mut w = self.writer(Stage::Featurize)?;
        let d = Stage::Featurize.dir();
        w.csv(&format!("{d}/features.csv"), |b| m.write_triplets(b))?;
        w.csv(&format!("{d}/labels.csv"), |b| m.write_labels(b))?;
        w.csv(&format!("{d}/split.csv"), |b| write_split(b, &m, &split))?;
        w.json(
            &format!("{d}/catalog.json"),
            &CatalogArtifact {
                config_hash: self.config_hash.clone(),
                n_rows: m.n_rows(),
                n_train: split.train.len(),
                n_test: split.test.len(),
                noud_mean_age,
                ablate_dependency_history: self.config.ablate_dependency_history,
                features: m.catalog().to_vec(),
            },
        )?;
        self.finish(w, Stage::Featurize)?;
        Ok(format!(
            "{} rows, {} features, {} train / {} test",
            m.n_rows(),
            m.n_cols(),
            split.train.len(),
            split.test.len()
        ))
    }

    /// The persisted feature matrix and train/test split.
    pub fn load_features(&self) -> Result<(FeatureMatrix, Split)> {
        self.require(Stage::Featurize)?;
        let d = self.output.join(Stage::Featurize.dir());
        let catalog: CatalogArtifact = read_json(&d.join("catalog.json"))?;
        let m = FeatureMatrix::read(
            open_file(&d.join("features.csv"))?,
            open_file(&d.join("labels.csv"))?,
            catalog.features,
        )?;
        let split = read_split(&d.join("split.csv"), &m)?;
        Ok((m, split))
    }

    pub fn load_selection(&self) -> Result<SelectionReport> {
        self.require(Stage::Select)?;
        read_json(&self.output.join(Stage::Select.dir()).join("selection_report.json"))
    }

    pub fn select(&self) -> Result<String> {
        let (m, split) = self.load_features()?;
        let sel = &self.config.selection;
        let vt = variance_filter(&m, &split.train, sel.variance_threshold)?;
        let chi = chi2_filter(&m, &split.train, &vt.retained, sel.alpha)?;
        if chi.retained.is_empty() {
            return Err(Error::InvalidInput(
                "no feature passed the variance and chi-squared filters".into(),
            ));
        }
        let mean_p = chi.retained.iter().map(|f| chi.stats[f].p_value).sum::<f64>() / chi.retained.len() as f64;
        let mut models = BTreeMap::new();
        for spec in &self.config.models {
            let candidates = candidates_for(spec.kind(), &chi.retained, &m);
            if candidates.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "no candidate features left for {}",
                    spec.kind()
                )));
            }
            let data = m.dense(&split.train, &candidates)?;
            let result = rfe(spec, &data, sel, &self.config.smote)?;
            models.insert(spec.kind().name().to_string(), ModelSelection { candidates, rfe: result });
        }
        let report = SelectionReport {
            config_hash: self.config_hash.clone(),
            n_train_rows: split.train.len(),
            n_features: m.n_cols(),
            variance: VarianceStage {
                threshold: sel.variance_threshold,
                retained: vt.retained,
                variances: vt.variances,
            },
            chi2: ChiStage {
                alpha: sel.alpha,
                retained: chi.retained,
                mean_retained_p_value: mean_p,
                stats: chi.stats,
            },
            models,
        };
        let mut w = self.writer(Stage::Select)?;
        let d = Stage::Select.dir();
        w.json(&format!("{d}/selection_report.json"), &report)?;
        for (name, ms) in &report.models {
            let text: String = ms.rfe.best.iter().map(|f| format!("{f}\n")).collect();
            w.bytes(&format!("{d}/retained_features/{name}.txt"), text.as_bytes())?;
        }
        self.finish(w, Stage::Select)?;
        let best: Vec<String> = report
            .models
            .iter()
            .map(|(k, v)| format!("{k} {} (cv auc {:.4})", v.rfe.best.len(), v.rfe.best_auc))
            .collect();
        Ok(format!(
            "{} -> {} (variance) -> {} (chi2); rfe: {}",
            report.n_features,
            report.variance.retained.len(),
            report.chi2.retained.len(),
            best.join(", ")
        ))
    }

    fn stage_features<'a>(sel: &'a ModelSelection, stage: &str) -> &'a [String] {
        match stage {
            "chi2" => &sel.candidates,
            _ => &sel.rfe.best,
        }
    }

    pub fn train(&self) -> Result<String> {
        let (m, split) = self.load_features()?;
        let report = self.load_selection()?;
        let mut w = self.writer(Stage::Train)?;
        let mut n = 0;
        for spec in &self.config.models {
            let sel = &report.models[spec.kind().name()];
            for stage in SELECTION_STAGES {
                let data = m.dense(&split.train, Self::stage_features(sel, stage))?;
                let balanced = smote(&data, &self.config.smote)?;
                let mut model = train(spec, &balanced.data)?;
                model.config_hash = Some(self.config_hash.clone());
                w.bytes(&model_file(spec.kind(), stage), (model.to_json() + "\n").as_bytes())?;
                n += 1;
            }
        }
        self.finish(w, Stage::Train)?;
        Ok(format!("{n} models"))
    }

    pub fn load_model(&self, kind: ModelKind, stage: &str) -> Result<FittedModel> {
        self.require(Stage::Train)?;
        FittedModel::load(&self.output.join(model_file(kind, stage)))
    }

    pub fn evaluate(&self) -> Result<String> {
        self.require(Stage::Train)?;
        let (m, split) = self.load_features()?;
        let mut w = self.writer(Stage::Evaluate)?;
        let mut lines = Vec::new();
        for spec in &self.config.models {
            let kind = spec.kind();
            for stage in SELECTION_STAGES {
                let model = self.load_model(kind, stage)?;
                let test = m.dense(&split.test, &model.features)?;
                let scores = model.predict_proba(&test)?;
                let metrics = MetricsReport::compute(&test.y, &scores, self.config.threshold)?;
                w.csv(&format!("{}/{}__{stage}_roc.csv", Stage::Evaluate.dir(), kind.name()), |b| {
                    write_roc(b, &metrics.roc)
                })?;
                lines.push(format!("{kind}/{stage} auc {:.4}", metrics.auc));
                w.json(
                    &metrics_file(kind, stage),
                    &MetricsArtifact {
                        config_hash: self.config_hash.clone(),
                        model: kind.name().into(),
                        stage: stage.into(),
                        features: model.features.len(),
                        metrics,
                    },
                )?;
            }
        }
        self.finish(w, Stage::Evaluate)?;
        Ok(lines.join(", "))
    }

    pub fn load_metrics(&self, kind: ModelKind, stage: &str) -> Result<MetricsArtifact> {
        self.require(Stage::Evaluate)?;
        read_json(&self.output.join(metrics_file(kind, stage)))
    }

    pub fn report(&self) -> Result<String> {
        self.require(Stage::Evaluate)?;
        let selection = self.load_selection()?;
        let mut reports = Vec::new();
        let mut models = Vec::new();
        for spec in &self.config.models {
            let kind = spec.kind();
            let mut stages = Vec::new();
            for stage in SELECTION_STAGES {
                stages.push((stage.to_string(), self.load_metrics(kind, stage)?.metrics));
                models.push((kind, stage, self.load_model(kind, stage)?));
            }
            reports.push(ModelReports {
                model: kind.name().into(),
                stages,
            });
        }
        let mut w = self.writer(Stage::Report)?;
        let d = Stage::Report.dir();
        let mut summary = format!("{} models", reports.len());
        if reports.len() >= 2 {
            let comparison = compare_models(&reports)?;
            w.csv(&format!("{d}/comparison.csv"), |b| comparison.write_csv(b))?;
            summary = format!("best model {}", comparison.best_model());
        }
        w.csv(&format!("{d}/odds_ratios.csv"), |b| write_odds_ratios(b, &models))?;
        w.csv(&format!("{d}/importances.csv"), |b| write_importances(b, &models))?;
        w.csv(&format!("{d}/rfe_curve.csv"), |b| write_rfe_curve(b, &selection))?;
        self.finish(w, Stage::Report)?;
        Ok(summary)
    }
}

/// Per-kind candidate set: logistic regression leaves out one-hot reference
/// levels so its coefficients read as odds ratios against them.
fn candidates_for(kind: ModelKind, retained: &[String], m: &FeatureMatrix) -> Vec<String> {
    retained
        .iter()
        .filter(|f| kind != ModelKind::Logistic || !m.info(f).is_some_and(|i| i.reference))
        .cloned()
        .collect()
}

fn write_split(w: &mut Vec<u8>, m: &FeatureMatrix, split: &Split) -> std::io::Result<()> {
    let mut set = vec![""; m.n_rows()];
    for &r in &split.train {
        set[r] = "train";
    }
    for &r in &split.test {
        set[r] = "test";
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["patient_id", "set"])?;
    for (p, s) in m.patients().iter().zip(set) {
        wtr.write_record([p.as_str(), s])?;
    }
    wtr.flush()
}

fn read_split(path: &Path, m: &FeatureMatrix) -> Result<Split> {
    let row_of: HashMap<&str, usize> = m.patients().iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    let bad = |msg: String| Error::InvalidInput(format!("split.csv: {msg}"));
    let mut rdr = csv::Reader::from_reader(open_file(path)?);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let r = *row_of
            .get(&rec[0])
            .ok_or_else(|| bad(format!("unknown patient `{}`", &rec[0])))?;
        match &rec[1] {
            "train" => split.train.push(r),
            "test" => split.test.push(r),
            other => return Err(bad(format!("unknown set `{other}`"))),
        }
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    if split.train.len() + split.test.len() != m.n_rows() {
        return Err(bad("does not cover every row exactly once".into()));
    }
    Ok(split)
}

fn write_odds_ratios(w: &mut Vec<u8>, models: &[(ModelKind, &str, FittedModel)]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "stage", "feature", "coefficient", "odds_ratio", "interpretation"])?;
    for (kind, stage, model) in models {
        let Ok(ors) = model.odds_ratios() else { continue };
        for o in ors {
            wtr.write_record([
                kind.name(),
                stage,
                &o.feature,
                &o.coefficient.to_string(),
                &o.odds_ratio.to_string(),
                &o.interpretation,
            ])?;
        }
    }
    wtr.flush()
}

/// Weights per model, largest first.
fn write_importances(w: &mut Vec<u8>, models: &[(ModelKind, &str, FittedModel)]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "stage", "rank", "feature", "weight"])?;
    for (kind, stage, model) in models {
        let mut order: Vec<usize> = (0..model.features.len()).collect();
        let weights = model.feature_weights();
        order.sort_by(|&a, &b| {
            weights[b]
                .total_cmp(&weights[a])
                .then_with(|| model.features[a].cmp(&model.features[b]))
        });
        for (rank, j) in order.into_iter().enumerate() {
            wtr.write_record([
                kind.name(),
                stage,
                &(rank + 1).to_string(),
                &model.features[j],
                &weights[j].to_string(),
            ])?;
        }
    }
    wtr.flush()
}

fn write_rfe_curve(w: &mut Vec<u8>, report: &SelectionReport) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "n_features", "mean_auc", "best"])?;
    for (name, sel) in &report.models {
        for step in &sel.rfe.trajectory {
            let best = step.features == sel.rfe.best;
            wtr.write_record([
                name.as_str(),
                &step.n_features.to_string(),
                &step.mean_auc.to_string(),
                &best.to_string(),
            ])?;
        }
    }
    wtr.flush()
}

/// Stable JSON text of a config section for fingerprinting.
fn j<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config section serializes")
}
