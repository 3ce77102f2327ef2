use gdsnet_models::ModelKind;
use gdsnet_train::*;
use gdsnet_video::synth::{generate_subject, cohort_manifest};
use gdsnet_video::{AugmentConfig, CenterSquare, PipelineConfig, SynthSpec};
use serde_json::json;

fn spec(task: Task, state_filter: StateFilter, model: ModelKind) -> ExperimentSpec {
    ExperimentSpec { task, state_filter, model, aggregation: Aggregation::Subject }
}

#[test]
fn state_filters_on_clinical_cohort() {
    let m = cohort_manifest(0);
    for (filter, n) in [(StateFilter::On, 166), (StateFilter::Off, 162), (StateFilter::Both, 178)] {
        let plan = plan_experiment(&spec(Task::Binary, filter, ModelKind::Vivit), &m, None, 0.1, 0).unwrap();
        assert_eq!(plan.subjects.len(), n);
        assert_eq!(plan.folds.len(), n);
    }
}

fn tiny_corpus(n: usize, states: Vec<gdsnet_video::State>) -> Vec<Sample> {
    let synth = SynthSpec {
        n_subjects: n,
        class_distribution: [1.0 / 3.0; 3],
        tasks: vec![1],
        states,
        height: 20,
        width: 24,
        length: 8,
        seed: 5,
        ..SynthSpec::default()
    };
    let pipe = PipelineConfig { side: 8, length: 8, clip_len: 4, equalize: true };
    (0..n)
        .flat_map(|i| generate_subject(i, &synth).unwrap())
        .flat_map(|r| clip_samples(&r.record, &r.video, &CenterSquare, &pipe).unwrap())
        .collect()
}

fn quick(model: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig {
        model: Some(model),
        train: Some(TrainConfig {
            max_epochs: 2,
            augment: AugmentConfig::none(),
            ..TrainConfig::for_model(ModelKind::CnnLstm)
        }),
        cv_folds: None,
        seed: 9,
    }
}

fn tiny_cnn() -> serde_json::Value {
    json!({"channels": [2], "proj_dim": 4, "hidden": 4})
}

#[test]
fn three_subject_run_emits_report() {
    let samples = tiny_corpus(3, vec![gdsnet_video::State::On, gdsnet_video::State::Off]);
    assert_eq!(samples.len(), 3 * 2 * 2);
    let dir = tempfile::tempdir().unwrap();
    let s = spec(Task::Multiclass, StateFilter::Both, ModelKind::CnnLstm);
    let r = run_experiment(&s, &samples, &quick(tiny_cnn()), Some(dir.path())).unwrap();
    assert_eq!((r.subjects, r.clips, r.folds.len()), (3, 12, 3));
    assert_eq!(r.confusion.len(), 3);
    assert_eq!(r.levels[&Aggregation::Subject].n, 3);
    assert_eq!(r.levels[&Aggregation::Video].n, 6);
    assert_eq!(r.levels[&Aggregation::Clip].n, 12);
    assert_eq!(r.predictions.len(), 12);
    for f in 0..3 {
        let log = std::fs::read_to_string(dir.path().join(format!("fold_{f:03}.jsonl"))).unwrap();
        assert_eq!(log.lines().count(), 2);
    }
    let again = run_experiment(&s, &samples, &quick(tiny_cnn()), None).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), serde_json::to_string(&again).unwrap());
    for p in &r.predictions {
        let fold = r.folds.iter().find(|f| f.subject == p.subject).unwrap();
        assert_eq!(fold.fold, p.fold);
    }
}

#[test]
fn state_filter_limits_records() {
    let samples = tiny_corpus(4, vec![gdsnet_video::State::On, gdsnet_video::State::Off]);
    let s = spec(Task::Binary, StateFilter::On, ModelKind::CnnLstm);
    let r = run_experiment(&s, &samples, &quick(tiny_cnn()), None).unwrap();
    assert_eq!(r.clips, 8);
    assert!(r.predictions.iter().all(|p| p.video.ends_with("_ON")));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["spec"]["state_filter"], "ON");
    for key in ["accuracy", "precision_macro", "recall_macro", "f1_macro", "per_class", "confusion", "folds"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn too_few_subjects_after_filter() {
    let samples = tiny_corpus(4, vec![gdsnet_video::State::On]);
    let s = spec(Task::Binary, StateFilter::Off, ModelKind::CnnLstm);
    assert!(matches!(
        run_experiment(&s, &samples, &quick(tiny_cnn()), None),
        Err(TrainError::TooFewSubjects { found: 0, .. })
    ));
}

#[test]
fn every_subject_is_scored_once() {
    let samples = tiny_corpus(4, vec![gdsnet_video::State::On]);
    let s = spec(Task::Binary, StateFilter::Both, ModelKind::CnnLstm);
    let full = run_experiment(&s, &samples, &quick(tiny_cnn()), None).unwrap();
    for f in 0..4 {
        assert_eq!(full.predictions.iter().filter(|p| p.fold == f).count(), 2);
    }
    let mut cfg = quick(tiny_cnn());
    cfg.cv_folds = Some(2);
    let grouped = run_experiment(&s, &samples, &cfg, None).unwrap();
    assert_eq!(grouped.protocol, "grouped-2");
    assert_eq!(grouped.folds.len(), 4);
}
