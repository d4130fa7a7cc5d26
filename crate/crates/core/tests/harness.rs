use rdac::data::{save_tasks, DatasetMeta, ImageSet, TaskDataset};
use rdac::harness::{
    analyze, emit_report, load_records, metrics_csv, render_svg, run_experiment, run_experiment_with, sweep_grid,
    sweep_grid_with, GridSpec, HarnessError, Method, RunConfig, RunRecord, SweepTable, CSV_COLUMNS,
};
use rdac::linalg::Matrix;
use rdac::rng::{seeded, uniform};

fn toy_tasks() -> Vec<TaskDataset> {
    let mut rng = seeded(5);
    (1..=2usize)
        .map(|k| {
            let classes: Vec<u8> = (0..3).map(|c| (3 * (k - 1) + c) as u8).collect();
            let mut make = |n: usize| {
                let labels: Vec<u8> = (0..n).map(|i| classes[i % 3]).collect();
                let px = Matrix::from_fn(n, 16, |i, j| {
                    let on = j % 3 == i % 3;
                    ((if on { 0.6 } else { 0.1 }) + uniform(&mut rng, 0.0, 0.4)).min(1.0)
                });
                ImageSet::new(4, 4, px, labels).unwrap()
            };
            let train = make(60);
            let val = make(30);
            TaskDataset::new(k, classes.clone(), train, val).unwrap()
        })
        .collect()
}

fn without_clock(mut r: RunRecord) -> RunRecord {
    r.wallclock_s = 0.0;
    r
}

fn rows_without_clock(t: &SweepTable) -> Vec<Option<RunRecord>> {
    t.rows.iter().map(|r| r.record.clone().map(without_clock)).collect()
}

fn base(method: Method) -> RunConfig {
    RunConfig {
        method,
        epochs_per_task: 3,
        lr: 0.2,
        batch_size: 10,
        hidden: 8,
        dataset_cache: Some("unused.rdac".into()),
        ..Default::default()
    }
}

#[test]
fn empty_report_is_header_only() {
    let csv = metrics_csv(&[]);
    assert_eq!(csv, format!("{}\n", CSV_COLUMNS.join(",")));
    let svg = render_svg(&[]);
    assert!(svg.starts_with("<svg") && svg.contains("no records"));
}

#[test]
fn one_record_fills_every_column_and_is_reproducible() {
    let tasks = toy_tasks();
    let cfg = RunConfig {
        alpha: 0.25,
        beta: 0.75,
        ..base(Method::GradientDecomposition)
    };
    let a = run_experiment_with(&cfg, &tasks, None).unwrap();
    let b = run_experiment_with(&cfg, &tasks, None).unwrap();
    let (ca, cb) = (metrics_csv(std::slice::from_ref(&a)), metrics_csv(&[b]));
    assert_eq!(ca, cb);
    let lines: Vec<&str> = ca.lines().collect();
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), CSV_COLUMNS.len());
    assert!(fields.iter().all(|f| !f.is_empty()), "{}", lines[1]);
    assert_eq!(fields[0], "gradient_decomposition");
    assert_eq!(fields[1], "2.50000000e-1");
    assert_eq!(fields[18], "0.00000000e0");
    assert_eq!(a.capacity, a.stability + a.plasticity);
}

#[test]
fn two_by_two_grid_and_unit_corner() {
    let tasks = toy_tasks();
    let grid = GridSpec::from_json(r#"{"alpha": [0, 1], "beta": [0, 1]}"#).unwrap();
    let table = sweep_grid_with(&base(Method::GradientDecomposition), &grid, &tasks, 2).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.failed(), 0);
    let plain = run_experiment_with(&base(Method::None), &tasks, None).unwrap();
    let corner = table.rows[3].record.as_ref().unwrap();
    assert_eq!((table.rows[3].point.alpha, table.rows[3].point.beta), (1.0, 1.0));
    assert_eq!(corner.stability, plain.stability);
    assert_eq!(corner.plasticity, plain.plasticity);
    assert_eq!(corner.displacement, plain.displacement);
    // Rows keep grid order regardless of worker count.
    let serial = sweep_grid_with(&base(Method::GradientDecomposition), &grid, &tasks, 1).unwrap();
    assert_eq!(rows_without_clock(&serial), rows_without_clock(&table));
}

#[test]
fn lambda_zero_row_equals_unregularised_run() {
    let tasks = toy_tasks();
    let grid = GridSpec::from_json(r#"{"lambda": [0, 0.001]}"#).unwrap();
    let table = sweep_grid_with(&base(Method::Ewc), &grid, &tasks, 1).unwrap();
    let plain = run_experiment_with(&base(Method::None), &tasks, None).unwrap();
    let zero = table.rows[0].record.as_ref().unwrap();
    assert_eq!(zero.stability, plain.stability);
    assert_eq!(zero.plasticity, plain.plasticity);
    assert_eq!(zero.curves, plain.curves);
}

#[test]
fn persisted_runs_load_back_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("tasks.rdac");
    let meta = DatasetMeta {
        data_seed: 0,
        augmented: false,
        subsample: None,
    };
    save_tasks(&toy_tasks(), &meta, &cache).unwrap();
    let cfg = RunConfig {
        dataset_cache: Some(cache.clone()),
        output_dir: Some(dir.path().join("runs/single")),
        ..base(Method::Ewc)
    };
    let cfg = RunConfig { lambda: 10.0, ..cfg };
    let record = run_experiment(&cfg).unwrap();
    let sweep_cfg = RunConfig {
        output_dir: Some(dir.path().join("runs/sweep")),
        ..cfg.clone()
    };
    let table = sweep_grid(&sweep_cfg, &GridSpec::from_json(r#"{"lambda": [0, 1]}"#).unwrap(), 1).unwrap();
    assert!(dir.path().join("runs/sweep/metrics.csv").exists());
    let loaded = load_records(&dir.path().join("runs")).unwrap();
    assert_eq!(loaded.len(), 3);
    // JSON keeps f64 values exact, so loaded records compare equal.
    assert!(loaded.contains(&record));
    for r in table.records() {
        assert!(loaded.contains(&r));
    }
    let out = dir.path().join("report");
    let paths = emit_report(&loaded, &out).unwrap();
    assert_eq!(paths.len(), 3);
    assert_eq!(std::fs::read_to_string(&paths[0]).unwrap().lines().count(), 4);
    let summary = analyze(&loaded);
    assert_eq!(summary["records"], 3);
    assert_eq!(summary["lambda_axis"]["points"], 3);
}

#[test]
fn failures_write_a_partial_marker_and_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        dataset_cache: Some(dir.path().join("missing.rdac")),
        output_dir: Some(dir.path().join("out")),
        ..base(Method::None)
    };
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(dir.path().join("out/PARTIAL.json").exists());

    std::fs::write(dir.path().join("bad.rdac"), b"not a cache").unwrap();
    let cfg = RunConfig {
        dataset_cache: Some(dir.path().join("bad.rdac")),
        ..cfg
    };
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 3);
    assert_eq!(HarnessError::Partial { failed: 1, total: 2 }.exit_code(), 5);
    assert_eq!(HarnessError::Numerical("x".into()).exit_code(), 4);
}

#[test]
fn cache_seed_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("tasks.rdac");
    let meta = DatasetMeta {
        data_seed: 3,
        augmented: true,
        subsample: Some(60),
    };
    save_tasks(&toy_tasks(), &meta, &cache).unwrap();
    let cfg = RunConfig {
        dataset_cache: Some(cache),
        ..base(Method::None)
    };
    assert_eq!(run_experiment(&cfg).unwrap_err().exit_code(), 2);
    let ok = RunConfig {
        seeds: rdac::harness::Seeds {
            data: 3,
            ..Default::default()
        },
        subsample: Some(30),
        ..cfg.clone()
    };
    run_experiment(&ok).unwrap();
    let too_many = RunConfig {
        subsample: Some(100),
        ..ok
    };
    assert_eq!(run_experiment(&too_many).unwrap_err().exit_code(), 2);
}
