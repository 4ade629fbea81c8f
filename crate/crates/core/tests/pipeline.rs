use std::fs;
use std::path::Path;

use oudpipe::models::boosting::BoostingParams;
use oudpipe::models::forest::ForestParams;
use oudpipe::models::{ModelKind, ModelSpec};
use oudpipe::pipeline::{InputSource, Pipeline, PipelineConfig, Stage};
use oudpipe::select::SelectionConfig;
use oudpipe::synth::GeneratorConfig;
use oudpipe::Error;

fn quick(n_patients: usize) -> PipelineConfig {
    PipelineConfig {
        input: InputSource::Generator(GeneratorConfig {
            n_patients,
            target_oud_prevalence: 0.05,
            ..Default::default()
        }),
        models: vec![
            ModelSpec::default_for(ModelKind::Logistic),
            ModelSpec::Forest(ForestParams {
                n_trees: 10,
                ..Default::default()
            }),
        ],
        selection: SelectionConfig {
            prune_fraction: 0.3,
            folds: 3,
            ..Default::default()
        },
        seed: Some(3),
        ..Default::default()
    }
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn run_all_on_five_thousand_patients_compares_four_models() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig {
        input: InputSource::Generator(GeneratorConfig {
            n_patients: 5000,
            ..Default::default()
        }),
        seed: Some(11),
        ..Default::default()
    };
    let p = Pipeline::new(config, dir.path()).unwrap();
    let lines = p.run_all().unwrap();
    assert_eq!(lines.len(), 7);
    let out = p.output_dir();
    let comparison = read(&out.join("report/comparison.csv"));
    let rows: Vec<&str> = comparison.lines().collect();
    assert_eq!(rows.len(), 5, "{comparison}");
    for kind in ModelKind::ALL {
        assert_eq!(rows.iter().filter(|r| r.starts_with(kind.name())).count(), 1, "{comparison}");
    }
    assert!(read(&out.join("report/odds_ratios.csv")).lines().count() > 1);

    // JSON artifacts embed the config hash; manifests cover the rest.
    for rel in ["synth/planted_model.json", "cohort/exclusions.json", "features/catalog.json", "selection/selection_report.json"] {
        let v: serde_json::Value = serde_json::from_str(&read(&out.join(rel))).unwrap();
        assert_eq!(v["config_hash"], p.config_hash(), "{rel}");
    }
    for stage in Stage::ALL {
        let m: serde_json::Value = serde_json::from_str(&read(&out.join(format!("manifests/{}.json", stage.name())))).unwrap();
        assert_eq!(m["config_hash"], p.config_hash());
        assert!(!m["artifacts"].as_object().unwrap().is_empty());
    }
}

#[test]
fn stages_rerun_from_persisted_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(quick(1500), dir.path()).unwrap();
    p.run_all().unwrap();
    let report = p.output_dir().join("report/comparison.csv");
    let before = read(&report);
    p.run(Stage::Evaluate).unwrap();
    p.run(Stage::Report).unwrap();
    assert_eq!(read(&report), before);

    // A fresh handle on the same directory picks up where the first left off.
    let again = Pipeline::new(quick(1500), dir.path()).unwrap();
    again.run(Stage::Report).unwrap();
    assert_eq!(read(&report), before);
}

#[test]
fn evaluate_without_train_names_the_missing_command() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(quick(800), dir.path()).unwrap();
    for s in [Stage::Synth, Stage::Cohort, Stage::Featurize, Stage::Select] {
        p.run(s).unwrap();
    }
    let err = p.run(Stage::Evaluate).unwrap_err();
    assert!(matches!(err, Error::MissingArtifact { command: "train", .. }));
    assert!(err.to_string().contains("run train first"), "{err}");
    assert!(err.is_user_error());

    let fresh = tempfile::tempdir().unwrap();
    let err = Pipeline::new(quick(800), fresh.path()).unwrap().run(Stage::Cohort).unwrap_err();
    assert!(err.to_string().contains("run synth first"), "{err}");
}

#[test]
fn changed_config_marks_downstream_artifacts_stale() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(quick(800), dir.path()).unwrap();
    for s in [Stage::Synth, Stage::Cohort, Stage::Featurize] {
        p.run(s).unwrap();
    }
    let mut changed = quick(800);
    changed.split.test_fraction = 0.4;
    let q = Pipeline::new(changed, dir.path()).unwrap();
    let err = q.run(Stage::Select).unwrap_err();
    assert!(matches!(err, Error::StaleArtifact { command: "featurize", .. }), "{err}");
    // Upstream of the change is still valid.
    q.run(Stage::Featurize).unwrap();
}

#[test]
fn invalid_config_reports_the_field_path() {
    let mut config = quick(100);
    config.selection.variance_threshold = -1.0;
    let err = Pipeline::new(config, Path::new(".")).err().unwrap();
    assert!(err.to_string().contains("selection.variance_threshold"), "{err}");

    let mut config = quick(100);
    config.models.push(ModelSpec::Boosting(BoostingParams {
        learning_rate: 0.0,
        ..Default::default()
    }));
    let err = Pipeline::new(config, Path::new(".")).err().unwrap();
    assert!(err.to_string().contains("models[2]"), "{err}");

    let err = PipelineConfig::from_json(r#"{"selection": {"alpha": 0.05, "bogus": 1}}"#).unwrap_err();
    assert!(err.is_user_error());
}

#[test]
fn ablation_removes_dependency_history_from_retained_features() {
    let dependency = ["dx_304.00", "dx_304.01", "dx_304.71", "dx_305.50"];
    let dir = tempfile::tempdir().unwrap();
    let mut config = quick(3000);
    config.ablate_dependency_history = true;
    let p = Pipeline::new(config, dir.path()).unwrap();
    for s in [Stage::Synth, Stage::Cohort, Stage::Featurize, Stage::Select] {
        p.run(s).unwrap();
    }
    let retained = p.output_dir().join("selection/retained_features");
    let mut files = 0;
    for entry in fs::read_dir(&retained).unwrap() {
        let text = read(&entry.unwrap().path());
        files += 1;
        assert!(!text.trim().is_empty());
        for name in dependency {
            assert!(!text.lines().any(|l| l == name), "{name} survived ablation");
        }
    }
    assert_eq!(files, 2);
    let (m, _) = p.load_features().unwrap();
    assert!(dependency.iter().all(|d| m.column_index(d).is_none()));
    // Poisoning codes are not dependency history and stay.
    assert!(m.column_index("dx_965.01").is_some());

    // Without the flag the same population does carry them.
    let plain = tempfile::tempdir().unwrap();
    let q = Pipeline::new(quick(3000), plain.path()).unwrap();
    for s in [Stage::Synth, Stage::Cohort, Stage::Featurize] {
        q.run(s).unwrap();
    }
    let (m, _) = q.load_features().unwrap();
    assert!(dependency.iter().all(|d| m.column_index(d).is_some()));
}
