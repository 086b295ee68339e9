use mccp::adaptive::TRACE_HEADER;
use mccp::data::{NoiseProfile, ReplayFile};
use mccp::harness::*;
use mccp::Error;

fn hetero() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(
        mccp::data::Task::Regression,
        DatasetSource::SynthHetero {
            n: 400,
            noise: NoiseProfile::default(),
        },
    );
    c.model = Some(ModelConfig {
        hidden: vec![16],
        dropout_rate: 0.25,
        activation: Default::default(),
    });
    c.split = Some(mccp::data::SplitSpec::from_sizes(200, 50, 150, 0));
    c.adaptive = mccp::adaptive::AdaptiveConfig::new(100, 5e-4, 10);
    c.trials = 2;
    c
}

fn csv_rows(bytes: &[u8]) -> Vec<Vec<String>> {
    csv::Reader::from_reader(bytes)
        .records()
        .map(|r| r.unwrap().iter().map(str::to_owned).collect())
        .collect()
}

#[test]
fn regression_table_has_one_row_per_method() {
    let (res, timings) = run(&hetero()).unwrap();
    let methods: Vec<_> = res.summary.iter().map(|r| r.method).collect();
    assert_eq!(methods, Method::REGRESSION);
    assert_eq!(timings.len(), 2);
    for r in &res.summary {
        assert_eq!(r.csv_record().len(), TABLE_HEADER.len());
        assert!(r.mae.is_some());
        let passes = r.mean_passes.mean;
        if r.method.is_stochastic() {
            assert!(passes > 1.0 && passes <= 100.0);
        } else {
            assert_eq!(passes, 1.0);
        }
    }
    for t in &res.trials {
        assert_eq!(t.reports[&Method::Cqr].crossing_count, t.reports[&Method::Baseline].crossing_count);
        // Same calibration scores for CQR and deterministic-calibrated MC-CP.
        assert_eq!(t.thresholds[&Method::Cqr], t.thresholds[&Method::McCp]);
    }
}

#[test]
fn results_are_independent_of_thread_count() {
    let cfg = hetero();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run(&cfg)).unwrap().0;
    let b = four.install(|| run(&cfg)).unwrap().0;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn stored_config_reruns_identically() {
    let (res, _) = run(&hetero()).unwrap();
    let json = serde_json::to_string(&res).unwrap();
    let back: RunResults = serde_json::from_str(&json).unwrap();
    let (again, _) = run(&back.config).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), json);
}

#[test]
fn trials_get_distinct_seeds_and_models() {
    let (res, _) = run(&hetero()).unwrap();
    assert_ne!(res.trials[0].seed, res.trials[1].seed);
    assert_ne!(res.trials[0].final_train_loss, res.trials[1].final_train_loss);
}

#[test]
fn trace_of_a_constant_replay_stops_after_patience_plus_one() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("const.csv");
    let mut f = ReplayFile::new(2);
    f.insert(0, vec![vec![0.3, 0.7]; 50]).unwrap();
    f.save(&path).unwrap();
    let mut cfg = hetero();
    cfg.dataset = DatasetSource::Replay { path };
    cfg.adaptive = mccp::adaptive::AdaptiveConfig::new(50, 5e-4, 10);
    let mut out = Vec::new();
    trace(&cfg, &[0], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
    let rows = csv_rows(text.as_bytes());
    assert_eq!(rows.len(), 11 * 2);
    assert!(rows.iter().all(|r| r[3] == "0"));
    assert_eq!(rows.last().unwrap()[5], "10");

    let mut out = Vec::new();
    assert!(matches!(trace(&cfg, &[1], &mut out), Err(Error::UnknownSample(1))));
}

#[test]
fn trace_with_no_samples_is_header_only() {
    let mut out = Vec::new();
    trace(&hetero(), &[], &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().trim_end(), TRACE_HEADER.join(","));
}

#[test]
fn trace_follows_the_run_streams() {
    let mut cfg = hetero();
    cfg.trials = 1;
    cfg.methods = Some(vec![Method::Mc]);
    let (res, _) = run(&cfg).unwrap();
    let ids: Vec<usize> = (0..150).collect();
    let mut out = Vec::new();
    trace(&cfg, &ids, &mut out).unwrap();
    let rows = csv_rows(&out);
    let total: usize = ids
        .iter()
        .map(|&i| rows.iter().filter(|r| r[0] == i.to_string()).map(|r| r[1].parse::<usize>().unwrap()).max().unwrap())
        .sum();
    let mean = total as f64 / ids.len() as f64;
    assert_eq!(mean, res.trials[0].reports[&Method::Mc].mean_passes);
}

#[test]
fn plotdata_has_four_columns_per_method() {
    let mut cfg = hetero();
    for methods in [vec![Method::Cqr], Method::REGRESSION.to_vec()] {
        cfg.methods = Some(methods.clone());
        let mut out = Vec::new();
        quantile_plotdata(&cfg, &mut out).unwrap();
        let mut r = csv::Reader::from_reader(out.as_slice());
        let header = r.headers().unwrap().clone();
        assert_eq!(header.len(), 2 + 4 * methods.len());
        assert_eq!(header.iter().collect::<Vec<_>>(), plotdata_header(&methods));
        assert_eq!(r.records().count(), 150);
    }
}

#[test]
fn invalid_configs_name_the_offending_field() {
    let path_of = |cfg: &ExperimentConfig| match cfg.validate() {
        Err(Error::Config { path, .. }) => path,
        other => panic!("expected config error, got {other:?}"),
    };
    let mut c = hetero();
    c.conformal.alpha = 0.0;
    assert_eq!(path_of(&c), "conformal.alpha");
    let mut c = hetero();
    c.trials = 0;
    assert_eq!(path_of(&c), "trials");
    let mut c = hetero();
    c.methods = Some(vec![Method::Cqr, Method::Raps]);
    assert_eq!(path_of(&c), "methods[1]");
    let mut c = hetero();
    c.split.as_mut().unwrap().test_fraction = 1.2;
    assert!(path_of(&c).starts_with("split."));
    let mut c = hetero();
    c.dataset = DatasetSource::SynthBlobs {
        n: 100,
        classes: 3,
        dim: 2,
        separation: 1.0,
    };
    assert_eq!(path_of(&c), "dataset.kind");
}

#[test]
fn sensitivity_grid_is_row_major_and_pools_passes() {
    let mut cfg = hetero();
    cfg.trials = 1;
    let res = sensitivity(&cfg, &[1e-1, 1e-3], &[1, 10]).unwrap();
    let keys: Vec<_> = res.cells.iter().map(|c| (c.delta, c.patience)).collect();
    assert_eq!(keys, vec![(1e-1, 1), (1e-1, 10), (1e-3, 1), (1e-3, 10)]);
    assert!(res.cells.iter().all(|c| c.mae.is_some() && c.test_error.is_none()));
    assert!(matches!(sensitivity(&cfg, &[], &[1]), Err(Error::Config { .. })));
    assert!(matches!(sensitivity(&cfg, &[0.1], &[0]), Err(Error::Config { .. })));
}
