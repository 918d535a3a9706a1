use std::fs;

use hyperion_core::experiment::*;
use hyperion_core::io::CsvTable;
use hyperion_core::Error;

fn tiny(kind: &str) -> RunConfig {
    let text = format!(
        r#"
experiment = "tiny_{kind}"
kind = "{kind}"
seed = 7

[system]
alpha = 0.5
e = 0.1
beta = 0.25
dtau = 0.001

[initial]
j0 = 10.0
sigma_j = 0.5

[ensemble]
n = 2000

[record]
tau_end = 1.0
every = 0.25
distribution_times = [1.0]

[analysis]
smoothing = [0.5]
lyapunov_tau = 40.0

[convergence]
j0_b = 11.0
"#
    );
    RunConfig::from_toml_str(&text).unwrap()
}

#[test]
fn every_preset_parses() {
    let names: Vec<&str> = preset_names().collect();
    assert!(names.len() >= 10);
    for n in names {
        let cfg = preset(n).unwrap_or_else(|e| panic!("{n}: {e}"));
        assert_eq!(cfg.experiment, n);
    }
    assert!(preset("nope").is_err());
}

#[test]
fn schema_errors_name_the_field() {
    let mut cfg = tiny("means");
    cfg.system.beta = -1.0;
    match cfg.validate() {
        Err(Error::Config { path, .. }) => assert_eq!(path, "system.beta"),
        other => panic!("unexpected {other:?}"),
    }
    let bad = "experiment = \"x\"\nkind = \"means\"\nbogus = 1\n";
    assert!(matches!(RunConfig::from_toml_str(bad), Err(Error::Config { .. })));
    let cfg = tiny("means");
    let err = cfg.with_override("system.beta", &toml::Value::Float(0.0)).unwrap_err();
    assert!(err.to_string().contains("system.beta"), "{err}");
    assert!(cfg.with_override("nowhere.beta", &toml::Value::Float(0.1)).is_err());
}

#[test]
fn means_bundle_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny("means");
    let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
    let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
    let bytes = |d: &str| fs::read(dir.path().join(d).join("means.csv")).unwrap();
    assert_eq!(bytes("a"), bytes("b"));
    assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
    let table = CsvTable::read(&dir.path().join("a/means.csv")).unwrap();
    assert_eq!(table.kind, "means");
    assert_eq!(table.rows.len(), 5);
    assert_eq!(table.column("tau").unwrap()[4], 1.0);
    assert!(a.summary.metrics.contains_key("peak_abs_diff"));
    assert!(a.summary.metrics.contains_key("lyapunov"));
    assert!(a.summary.metrics["max_norm_drift"] < 1e-9);
    for f in ["manifest.json", "summary.json", "config.toml"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
    // The stored config reproduces the run.
    let again = RunConfig::load(&dir.path().join("a/config.toml")).unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn tampering_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_experiment(&tiny("means"), &out).unwrap();
    assert!(load_report(&out).is_ok());
    let csv = out.join("means.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("9,9,9,9,9\n");
    fs::write(&csv, text).unwrap();
    assert!(matches!(load_report(&out), Err(Error::Integrity { .. })));
    fs::remove_file(&csv).unwrap();
    assert!(matches!(verify_bundle(&out), Err(Error::Integrity { .. })));
}

#[test]
fn refuses_to_overwrite_foreign_directories() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("precious.txt"), "keep").unwrap();
    let err = run_experiment(&tiny("means"), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Config { .. }));
    assert!(dir.path().join("precious.txt").exists());
}

#[test]
fn failed_runs_leave_nothing_behind() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("distributions");
    // A basis far too small for the state: the run fails mid-way.
    cfg.quantum.cutoff = Some(45);
    let out = dir.path().join("run");
    assert!(run_experiment(&cfg, &out).is_err());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn distributions_and_convergence_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let d = run_experiment(&tiny("distributions"), &dir.path().join("d")).unwrap();
    assert!(d.summary.metrics["one_norm_t1"] > 0.0);
    assert!(d.summary.metrics.contains_key("smoothed_t1_ds0.5"));
    let dist = CsvTable::read(&dir.path().join("d/distributions.csv")).unwrap();
    let total_qm: f64 = dist.column("p_qm").unwrap().iter().sum();
    assert!((total_qm - 1.0).abs() < 1e-9);

    let mut cfg = tiny("classical_convergence");
    cfg.noise = Some(NoiseSection {
        sigma: None,
        sigma_over_vch: Some(0.012),
        tau_c: 0.01,
        c: 0.5,
        realizations: 4,
    });
    let c = run_experiment(&cfg, &dir.path().join("c")).unwrap();
    let pair = CsvTable::read(&dir.path().join("c/pair_norm.csv")).unwrap();
    // J0 = 10 and 11 with sigma_j = 0.5 barely overlap at the start.
    let first = pair.column("one_norm").unwrap()[0];
    assert!(first > 1.2 && first <= 2.0, "{first}");
    assert!(c.summary.metrics.contains_key("diffusion"));
    assert!(dir.path().join("c/noise_trace.csv").exists());
}

#[test]
fn snapshots_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("means");
    cfg.record.snapshot_times = vec![0.0, 0.5];
    cfg.record.snapshots = SnapshotFormat::Binary;
    run_experiment(&cfg, &dir.path().join("bin")).unwrap();
    let bytes = fs::read(dir.path().join("bin/classical_snapshot_001.bin")).unwrap();
    match hyperion_core::io::decode_snapshot(&bytes, "x").unwrap() {
        hyperion_core::io::Snapshot::Classical(s) => {
            assert_eq!(s.phi.len(), 2000);
            assert_eq!(s.tau, 0.5);
        }
        other => panic!("{other:?}"),
    }
    cfg.record.snapshots = SnapshotFormat::Csv;
    run_experiment(&cfg, &dir.path().join("csv")).unwrap();
    let q = CsvTable::read(&dir.path().join("csv/quantum_snapshots.csv")).unwrap();
    assert_eq!(q.columns, ["tau", "m", "beta_m", "re_c", "im_c", "prob"]);
}

#[test]
fn poincare_and_lyapunov_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = preset("poincare_chaotic").unwrap();
    p.poincare.as_mut().unwrap().periods = 5;
    p.poincare.as_mut().unwrap().jz_grid = None;
    let out = run_experiment(&p, &dir.path().join("p")).unwrap();
    assert_eq!(out.summary.metrics["points"], 5.0);
    let mut l = preset("lyapunov_chaotic").unwrap();
    l.lyapunov.as_mut().unwrap().tau_total = 40.0;
    l.lyapunov.as_mut().unwrap().starts.truncate(1);
    let out = run_experiment(&l, &dir.path().join("l")).unwrap();
    assert!(out.summary.metrics["lambda_mean"] > 0.0);
    assert_eq!(out.summary.expectations.len(), 1);
}

#[test]
fn sweep_points_cartesian_and_listed() {
    let a = SweepAxis::parse("system.beta=0.1,0.2").unwrap();
    let b = SweepAxis::parse("ensemble.sampling=random,lattice").unwrap();
    assert_eq!(b.values[1], toml::Value::String("lattice".into()));
    assert_eq!(sweep_points(&[a.clone(), b.clone()], false).unwrap().len(), 4);
    assert_eq!(sweep_points(&[a.clone(), b], true).unwrap().len(), 2);
    let c = SweepAxis::parse("record.tau_end=1,2,3").unwrap();
    assert!(sweep_points(&[a, c], true).is_err());
    assert!(SweepAxis::parse("nothing").is_err());
}

#[test]
fn sweep_resumes_and_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny("means");
    cfg.sweep = Some(SweepSection {
        axes: Default::default(),
        listed: false,
        fits: vec![FitSpec {
            name: "peak".into(),
            kind: FitKind::Power,
            x: "system.beta".into(),
            y: "peak_abs_diff".into(),
            time: None,
            x_range: None,
            exponent: Some([0.0, 10.0]),
            prefactor: None,
        }],
    });
    let axes = [SweepAxis::parse("system.beta=0.25,0.5,0.4").unwrap()];
    let first = run_sweep(&cfg, &axes, false, dir.path()).unwrap();
    assert_eq!(first.points.len(), 3);
    assert!(first.points.iter().all(|p| !p.resumed));
    assert_eq!(first.fits.len(), 1);
    assert!(first.fits[0].fit.is_some());
    let second = run_sweep(&cfg, &axes, false, dir.path()).unwrap();
    assert!(second.points.iter().all(|p| p.resumed));
    assert_eq!(first.table_hash, second.table_hash);
    assert!(matches!(load_report(dir.path()).unwrap(), Report::Sweep(_)));

    // A point's stored config run on its own gives the same bytes.
    let point = dir.path().join(&first.points[1].dir);
    let single = RunConfig::load(&point.join("config.toml")).unwrap();
    let solo = dir.path().join("solo");
    run_experiment(&single, &solo).unwrap();
    assert_eq!(fs::read(point.join("means.csv")).unwrap(), fs::read(solo.join("means.csv")).unwrap());

    // Corrupting a point forces it to be recomputed.
    fs::write(point.join("means.csv"), "junk").unwrap();
    let third = run_sweep(&cfg, &axes, false, dir.path()).unwrap();
    assert!(third.points[0].resumed && !third.points[1].resumed && third.points[2].resumed);
}

#[test]
fn overlapping_sweep_outputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let axes = [SweepAxis::parse("system.beta=0.25,0.25").unwrap()];
    let err = run_sweep(&tiny("means"), &axes, false, dir.path()).unwrap_err();
    assert!(err.to_string().contains("same output"), "{err}");
}
