use covada::augment::{self, ConversionJob, ManifestInput, ResultRecord};
use covada::config::{ConverterSpec, DatasetSource, ExperimentConfig, Mode};
use covada::dataset::Provenance;
use covada::harness;
use covada::Error;

const BIN: &str = env!("CARGO_BIN_EXE_covada");

fn loopback(extra: &[&str], allow_partial: bool) -> ConverterSpec {
    let mut command = vec![BIN.to_string(), "loopback".to_string()];
    command.extend(extra.iter().map(|s| s.to_string()));
    ConverterSpec::External {
        command,
        allow_partial,
    }
}

fn config(converter: ConverterSpec, out: &std::path::Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::benchmark(Mode::VcOnly);
    config.seeds = vec![1];
    config.out_dir = Some(out.to_path_buf());
    if let DatasetSource::Synthetic(spec) = &mut config.dataset {
        spec.n_per_emotion = 42;
        spec.n_dev_per_emotion = 21;
        spec.n_test_per_group = 10;
    }
    config.final_model.max_epochs = 5;
    config.converter = Some(converter);
    config
}

#[test]
fn loopback_backend_round_trips_every_job() {
    let dir = tempfile::tempdir().unwrap();
    let record = harness::run_seed(&config(loopback(&[], false), dir.path()), 1).unwrap();
    assert_eq!(record.counts.n_augmented, 6 * 42);
    assert_eq!(record.counts.converter_errors, 0);

    let work = dir.path().join("work").join("vc_only-s1");
    let jobs = augment::parse_jobs_manifest(&std::fs::read_to_string(work.join("jobs.manifest")).unwrap()).unwrap();
    let results =
        augment::parse_results_manifest(&std::fs::read_to_string(work.join("results.manifest")).unwrap()).unwrap();
    assert_eq!(jobs.len(), 6 * 42);
    assert_eq!(results.len(), jobs.len());
    for (job, (id, result)) in jobs.iter().zip(&results) {
        assert_eq!(&job.job_id, id);
        let ManifestInput::Features(source) = &job.source else {
            panic!("inline source expected");
        };
        assert_eq!(result, &ResultRecord::Features(source.clone()));
    }
}

#[test]
fn missing_job_aborts_strict_runs() {
    let dir = tempfile::tempdir().unwrap();
    let err = harness::run_seed(&config(loopback(&["--drop", "000003"], false), dir.path()), 1).unwrap_err();
    let Error::Stage { stage, source, .. } = err else {
        panic!("stage error expected");
    };
    assert_eq!(stage, "convert");
    match *source {
        Error::ConverterJobs(list) => assert_eq!(list, ["missing result for job 000003"]),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn partial_mode_keeps_successful_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let conv = loopback(&["--drop", "000003", "--drop", "000010"], true);
    let record = harness::run_seed(&config(conv, dir.path()), 1).unwrap();
    assert_eq!(record.counts.n_augmented, 6 * 42 - 2);
    assert_eq!(record.counts.converter_errors, 2);
}

#[test]
fn failing_backend_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let conv = ConverterSpec::External {
        command: vec!["false".into()],
        allow_partial: false,
    };
    let err = harness::run_seed(&config(conv, dir.path()), 1).unwrap_err();
    assert!(err.to_string().contains("convert"), "{err}");
}

#[test]
fn validation_catches_protocol_violations() {
    let jobs: Vec<ConversionJob> = (0..3)
        .map(|i| ConversionJob {
            job_id: format!("{i:06}"),
            emotion: 0,
            source_id: "a".into(),
            target_id: "b".into(),
        })
        .collect();
    let results = vec![
        ("000000".to_string(), ResultRecord::Features(vec![1.0, 2.0])),
        ("000000".to_string(), ResultRecord::Features(vec![1.0, 2.0])),
        ("000001".to_string(), ResultRecord::Features(vec![1.0])),
        ("999999".to_string(), ResultRecord::Error("boom".into())),
    ];
    let (features, errors) = augment::validate_results(&jobs, results, 2);
    assert!(features.iter().all(Option::is_none));
    let joined = errors.join("\n");
    for needle in ["more than once", "dimension mismatch", "unknown job id 999999", "missing result for job 000002"] {
        assert!(joined.contains(needle), "{needle} not in {joined}");
    }
}

#[test]
fn manifests_accept_paths_and_audio_results() {
    let text = "{\"job_id\":\"000000\",\"emotion\":\"angry\",\"source\":\"a.wav\",\"target\":[0.5,1.0]}\n";
    let jobs = augment::parse_jobs_manifest(text).unwrap();
    assert_eq!(jobs[0].source, ManifestInput::Path("a.wav".into()));
    assert_eq!(jobs[0].target, ManifestInput::Features(vec![0.5, 1.0]));

    let results = vec![
        ("000000".to_string(), ResultRecord::AudioPath("out.wav".into())),
        ("000001".to_string(), ResultRecord::Error("speaker unseen".into())),
        ("000002".to_string(), ResultRecord::Features(vec![0.1, 1e-300])),
    ];
    let text = augment::write_results_manifest(&results);
    assert_eq!(augment::parse_results_manifest(&text).unwrap(), results);

    let err = augment::parse_jobs_manifest("{\"job_id\":\"1\",\"emotion\":\"x\",\"source\":3,\"target\":[]}\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("source"), "{err}");
}

#[test]
fn augmented_provenance_names_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(loopback(&[], false), dir.path());
    let (train, _, _) = covada::dataset::generate_synthetic(&match &cfg.dataset {
        DatasetSource::Synthetic(s) => s.clone(),
        _ => unreachable!(),
    })
    .unwrap();
    let membership = covada::partition::emotion_subsets(train.view(), None);
    let jobs = augment::sample_random_pairs(&membership, 1);
    let ext = augment::ExternalConfig {
        command: vec![BIN.into(), "loopback".into()],
        work_dir: dir.path().join("direct"),
        allow_partial: false,
    };
    let table = augment::external_convert(&jobs, train.view(), &ext).unwrap();
    let augmented = augment::build_augmented_set(&train, &jobs, &table).unwrap();
    match &augmented.samples.last().unwrap().provenance {
        Provenance::Augmented { converter, .. } => assert!(converter.starts_with("external(")),
        other => panic!("unexpected {other:?}"),
    }
}
