use std::path::Path;

use super::*;
use crate::error::Error;
use crate::models::ModelKind;
use crate::numerics::OptimizerKind;

fn raw(text: &str) -> RawConfig {
    RawConfig::parse(text, Path::new("test.cfg")).unwrap()
}

fn config_key(text: &str) -> String {
    match resolve(&raw(text)) {
        Err(Error::Config { key, .. }) => key,
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn empty_federated_config_takes_table_defaults() {
    let c = resolve(&raw("mode = federated")).unwrap();
    let t = &c.training;
    assert_eq!((t.lr, t.layers, t.hidden, t.dropout), (0.01, 2, 64, 0.5));
    assert_eq!((t.batch, t.local_epochs, t.rounds), (32, 20, 50));
    assert_eq!(t.optimizer, OptimizerKind::Adam);
    let p = &c.privacy;
    assert_eq!(
        (p.clip, p.delta, p.sample_rate, p.epsilon),
        (1.0, 1e-3, 0.01, None)
    );
    assert_eq!(c, resolve(&raw("")).unwrap());
}

#[test]
fn centralized_defaults() {
    let c = resolve(&raw("mode = centralized")).unwrap();
    assert_eq!(
        (c.training.lr, c.training.hidden, c.training.epochs),
        (0.001, 128, 500)
    );
    let c = resolve(&raw("mode = centralized\ntraining.lr = 0.05")).unwrap();
    assert_eq!(c.training.lr, 0.05);
}

#[test]
fn epsilon_none_and_value() {
    assert_eq!(
        resolve(&raw("privacy.epsilon = none"))
            .unwrap()
            .privacy
            .epsilon,
        None
    );
    assert_eq!(
        resolve(&raw("privacy.epsilon = 0.5"))
            .unwrap()
            .privacy
            .epsilon,
        Some(0.5)
    );
}

#[test]
fn errors_name_the_key() {
    assert_eq!(config_key("training.dropout = 1.5"), "training.dropout");
    assert_eq!(config_key("training.hiden = 3"), "training.hiden");
    assert_eq!(config_key("training.rounds = many"), "training.rounds");
    assert_eq!(config_key("model = rnn"), "model");
    assert_eq!(config_key("modalities = act,act"), "modalities");
    assert_eq!(config_key("privacy.epsilon = -1"), "privacy.epsilon");
    assert_eq!(config_key("data.source = mex"), "data.path");
    assert!(matches!(
        RawConfig::parse("no equals sign", Path::new("x")),
        Err(Error::Parse { line: 1, .. })
    ));
    assert!(RawConfig::parse("seed = 1\nseed = 2", Path::new("x")).is_err());
}

#[test]
fn echo_round_trips() {
    let text = "mode = centralized\nmodel = ffn\nmodalities = dc,act\nprivacy.epsilon = 1.5\n\
                synthetic.dim = 12\ndata.source = mex\ndata.path = /tmp/x y\ngraph.modality_specific = false\n\
                training.optimizer = sgd\ntestbed.sigma = 2";
    let c = resolve(&raw(text)).unwrap();
    assert_eq!(c.model, ModelKind::Ffn);
    assert!(c.graph.shared);
    let again = resolve(&raw(&c.echo())).unwrap();
    assert_eq!(again, c);
    assert_eq!(again.echo(), c.echo());
}

#[test]
fn sweep_expands_cartesian_product() {
    let r = raw("output.dir = o\nsweep.model = gcn,ffn\nsweep.privacy.epsilon = none, 0.5, 2");
    let cells = r.cells();
    assert_eq!(cells.len(), 6);
    assert_eq!(
        cells[1],
        vec![
            ("model".into(), "gcn".into()),
            ("privacy.epsilon".into(), "0.5".into())
        ]
    );
    let expanded = expand(&r).unwrap();
    assert_eq!(expanded[5].0.model, ModelKind::Ffn);
    assert_eq!(expanded[5].0.privacy.epsilon, Some(2.0));
    assert_eq!(expanded[5].1, Path::new("o/cell005"));
    // invalid value on any axis fails before anything runs
    assert!(matches!(
        expand(&raw("sweep.training.dropout = 0.1,2")),
        Err(Error::Config { .. })
    ));
}

#[test]
fn median_cases() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(median(&[]).is_nan());
}

const TINY: &str = "synthetic.clients = 2\nsynthetic.classes = 2\nsynthetic.windows_per_client = 16\n\
                    synthetic.dim = 6\nmodalities = act,pm\ntraining.rounds = 3\ntraining.local_epochs = 2\n\
                    training.hidden = 8\n";

#[test]
fn cell_writes_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY}output.dir = {}\nprivacy.epsilon = 2\nreplicates = 2",
        dir.path().display()
    );
    let out = run_experiment(&raw(&text)).unwrap();
    assert_eq!(out.len(), 1);
    let manifest = std::fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
    let mut lines = manifest.lines();
    assert_eq!(lines.next(), Some("status = complete"));
    let files: Vec<&str> = lines.collect();
    for f in [
        "config.txt",
        "metrics.csv",
        "accountant.csv",
        "privacy.csv",
        "f1.csv",
        "confusion_r0.csv",
        "embeddings_r1.csv",
        "summary.csv",
    ] {
        assert!(files.contains(&f), "{f} missing from {files:?}");
    }
    for f in files {
        assert!(
            std::fs::metadata(dir.path().join(f)).unwrap().len() > 0,
            "{f} empty"
        );
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3);
    assert!(out[0].sigma > 0.0);
    assert_eq!(out[0].releases, 3);
    assert!(out[0].summary.utility_loss.is_some());
}

#[test]
fn grid_has_one_summary_row_per_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY}output.dir = {}\nsweep.model = gcn,ffn\nsweep.privacy.epsilon = none,1",
        dir.path().display()
    );
    let out = run_experiment(&raw(&text)).unwrap();
    assert_eq!(out.len(), 4);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    // utility loss of a non-private cell is exactly zero
    assert_eq!(out[0].summary.utility_loss, Some(0.0));
    let first = std::fs::read(dir.path().join("cell001/metrics.csv")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let text2 = text.replace(
        &dir.path().display().to_string(),
        &again.path().display().to_string(),
    );
    run_experiment(&raw(&text2)).unwrap();
    assert_eq!(
        first,
        std::fs::read(again.path().join("cell001/metrics.csv")).unwrap()
    );
    assert_eq!(
        summary,
        std::fs::read_to_string(again.path().join("summary.csv")).unwrap()
    );
}

#[test]
fn failure_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "output.dir = {}\ndata.source = mex\ndata.path = {}/nothing-here",
        dir.path().display(),
        dir.path().display()
    );
    assert!(run_experiment(&raw(&text)).is_err());
    let manifest = std::fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
    assert!(manifest.starts_with("status = incomplete"));
}

#[test]
fn generated_dataset_runs_through_the_loader() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = format!(
        "synthetic.clients = 2\nsynthetic.classes = 2\nsynthetic.windows_per_client = 8\noutput.dir = {}",
        data.display()
    );
    generate_dataset(&resolve(&raw(&gen)).unwrap()).unwrap();
    let recs = crate::dataio::load_mex_layout(&data).unwrap();
    assert_eq!(recs.len(), 2 * 2 * 4);
    let run = format!(
        "data.source = mex\ndata.path = {}\nsynthetic.classes = 2\ndata.autoencoder_epochs = 2\ntraining.rounds = 1\n\
         training.local_epochs = 1\ntraining.hidden = 4\noutput.dir = {}",
        data.display(),
        dir.path().join("out").display()
    );
    let out = run_experiment(&raw(&run)).unwrap();
    assert!(out[0].summary.accuracy >= 0.0);
}

#[test]
fn testbed_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "testbed.sigma = 1\ntestbed.rounds = 10\ntestbed.replicates = 3\noutput.dir = {}",
        dir.path().display()
    );
    let cfg = resolve(&raw(&text)).unwrap();
    let t = run_testbed(&cfg, &cfg.output).unwrap();
    assert_eq!(t.mean.len(), 11);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("round,mean_sq_dist,floor_theoretical"));
}

#[test]
fn checkpoints_are_written_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{TINY}output.dir = {}\noutput.checkpoint_every = 2",
        dir.path().display()
    );
    run_experiment(&raw(&text)).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
    // three rounds, so only the second one is due
    assert!(manifest.contains("checkpoint_r0_00001.bin"));
    assert!(!manifest.contains("checkpoint_r0_00000.bin"));
    assert!(!manifest.contains("checkpoint_r0_00002.bin"));
    let p = crate::models::ModelParams::load(&dir.path().join("checkpoint_r0_00001.bin")).unwrap();
    assert!(!p.is_empty());
}
