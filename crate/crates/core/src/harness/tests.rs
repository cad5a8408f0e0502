use std::sync::Arc;

use approx::assert_relative_eq;

use super::lockstep::{multiplicative_family, multiplicative_scheme};
use super::*;
use crate::coeff::ScalarField;
use crate::noise::{NoisePath, NoiseSpec};
use crate::operators::Rectangle;
use crate::reference::{coupled_exact_vs_scheme, fine_reference};
use crate::rng::sample_seed;
use crate::scheme::{integrate, Drift, InitialData, Record, SchemeConfig};

fn small_additive(beta: f64) -> ExperimentConfig {
    ExperimentConfig { resolution: 4, ladder: vec![2, 3, 4], fine_exponent: 6, samples: 3, seed: 11, ..ExperimentConfig::additive(beta) }
}

#[test]
fn fit_two_points() {
    let (fit, w) = fit_rate(&[(0.1, 0.01), (0.05, 0.005)]).unwrap();
    assert_relative_eq!(fit.slope, 1.0, max_relative = 1e-12);
    assert!(w.is_empty());
}

#[test]
fn fit_power_law_and_permutation() {
    let pts: Vec<(f64, f64)> = (2..6).map(|e| {
        let dt = 0.5f64.powi(e);
        (dt, 3.0 * dt.sqrt())
    }).collect();
    let (fit, _) = fit_rate(&pts).unwrap();
    assert_relative_eq!(fit.slope, 0.5, max_relative = 1e-12);
    assert!(fit.residual < 1e-12);
    let shuffled = vec![pts[2], pts[0], pts[3], pts[1]];
    assert_eq!(fit_rate(&shuffled).unwrap().0, fit);
}

#[test]
fn fit_excludes_zero_errors() {
    let (fit, w) = fit_rate(&[(0.1, 0.01), (0.05, 0.0), (0.025, 0.0025)]).unwrap();
    assert_eq!(fit.points_used, 2);
    assert_eq!(w.len(), 1);
    assert!(fit_rate(&[(0.1, 0.0), (0.05, 0.005)]).unwrap_err().is_config());
}

#[test]
fn config_validation() {
    assert!(ExperimentConfig::additive(1.0).validate().is_ok());
    assert!(ExperimentConfig::multiplicative(2.0).validate().is_ok());
    let bad = [
        ExperimentConfig { samples: 0, ..small_additive(1.0) },
        ExperimentConfig { beta: -1.0, ..small_additive(1.0) },
        ExperimentConfig { ladder: vec![3, 3], ..small_additive(1.0) },
        ExperimentConfig { ladder: vec![6], ..small_additive(1.0) },
        ExperimentConfig { backend: Backend::Fem, ..small_additive(1.0) },
        ExperimentConfig { backend: Backend::Spectral, ..ExperimentConfig::multiplicative(1.0) },
    ];
    for c in bad {
        assert!(c.validate().unwrap_err().is_config(), "{c:?}");
    }
    assert_eq!(ExperimentConfig::additive(1.5).file_name(Format::Csv), "additive_1.5_100.csv");
    assert_eq!(ExperimentConfig::multiplicative(2.0).file_name(Format::Json), "multiplicative_2_100.json");
}

#[test]
fn csv_and_json_output() {
    let cfg = ExperimentConfig { ladder: vec![], ..small_additive(1.0) };
    let empty = ErrorReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        points: vec![],
        rate: None,
        sample_seeds: vec![],
        reference_check: None,
        warnings: vec![],
    };
    let mut buf = Vec::new();
    write_report(&empty, Format::Csv, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "dt,rms_error,samples,beta,problem\n");

    let report = ErrorReport {
        points: vec![LadderPoint { dt: 0.1, steps: 10, rms_error: 1.0 / 3.0, std_error: 0.01 }],
        rate: Some(RateFit { slope: 0.5, intercept: -1.0, residual: 0.0, points_used: 2 }),
        sample_seeds: vec![1, 2, 3],
        ..empty
    };
    let mut buf = Vec::new();
    write_report(&report, Format::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "0.1,0.3333333333333333,3,1,additive");
    let v: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(v, 1.0 / 3.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(cfg.file_name(Format::Json));
    emit(&report, Format::Json, &path).unwrap();
    let back = read_json(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, report);
    let raw = std::fs::read_to_string(&path).unwrap();
    assert!(raw.contains("\"schema_version\": 1"));
    assert!(matches!(emit(&report, Format::Csv, &dir.path().join("missing/x.csv")), Err(Error::Io(_))));
}

#[test]
fn additive_kernel_matches_full_scheme() {
    let cfg = small_additive(1.0);
    let seeds: Vec<u64> = (0..cfg.samples as u64).map(|s| sample_seed(cfg.seed, s)).collect();
    let fast = additive_sample_errors(&cfg, &seeds).unwrap();
    let fam = additive::additive_family(cfg.resolution, cfg.horizon).unwrap();
    let spec = Arc::new(NoiseSpec::new(cfg.beta, cfg.delta, (4, 4), Rectangle::unit()).unwrap());
    let scheme = SchemeConfig::new(1.0, 64, Drift::Zero, crate::scheme::Diffusion::Additive, InitialData::Zero).unwrap();
    for (s, &seed) in seeds.iter().enumerate() {
        let run = coupled_exact_vs_scheme(&fam, Arc::clone(&spec), &scheme, 64, &[16, 8, 4], seed).unwrap();
        for (l, (_, x)) in run.schemes.iter().enumerate() {
            let e = fam.norm_sq(&run.exact.axpy(-1.0, x)).unwrap();
            assert_relative_eq!(fast[s][l], e, max_relative = 1e-12);
        }
    }
}

#[test]
fn lockstep_matches_integrate_bitwise() {
    let fam = multiplicative_family(4, 1.0).unwrap();
    let spec = Arc::new(NoiseSpec::new(1.0, 0.001, (4, 4), Rectangle::unit()).unwrap());
    let seeds = [sample_seed(5, 0), sample_seed(5, 1)];
    let template = multiplicative_scheme(1.0, 32).unwrap();
    let out = lockstep_sample_errors(&fam, &template, &spec, 5, &[3, 2], &seeds, 1.0).unwrap();
    for (s, &seed) in seeds.iter().enumerate() {
        let path = NoisePath::sample(Arc::clone(&spec), 32, 1.0 / 32.0, seed).unwrap();
        let reference = fine_reference(&fam, &template, &path).unwrap();
        for (l, f) in [8usize, 4].into_iter().enumerate() {
            let coarse = path.coarsen(f).unwrap();
            let c = multiplicative_scheme(1.0, coarse.steps()).unwrap();
            let x = integrate(&fam, &c, &coarse, Record::FinalOnly).unwrap().final_state;
            assert_eq!(out.errors[s][l], fam.norm_sq(&x.axpy(-1.0, &reference)).unwrap());
        }
        let half = integrate(&fam, &multiplicative_scheme(1.0, 16).unwrap(), &path.coarsen(2).unwrap(), Record::FinalOnly).unwrap();
        let coarse = integrate(&fam, &multiplicative_scheme(1.0, 4).unwrap(), &path.coarsen(8).unwrap(), Record::FinalOnly).unwrap();
        assert_eq!(out.half_errors[s], fam.norm_sq(&coarse.final_state.axpy(-1.0, &half.final_state)).unwrap());
    }
}

#[test]
fn deterministic_drift_converges_at_rate_one() {
    let fam = multiplicative_family(6, 1.0).unwrap();
    let spec = Arc::new(NoiseSpec::new(1.0, 0.001, (6, 6), Rectangle::unit()).unwrap());
    let initial = InitialData::Function(Arc::new(|x: f64, y: f64| 1.0 + x * (1.0 - x) * (1.0 + y)));
    let template = SchemeConfig::new(1.0, 2048, Drift::Saturating, crate::scheme::Diffusion::linear_multiplicative(), initial).unwrap();
    let seeds = [1, 2];
    let out = lockstep_sample_errors(&fam, &template, &spec, 11, &[7, 6, 5, 4], &seeds, 0.0).unwrap();
    assert_eq!(out.errors[0], out.errors[1]);
    let pts: Vec<(f64, f64)> = [4u32, 5, 6, 7].iter().zip(&out.errors[0]).map(|(&e, &sq)| (0.5f64.powi(e as i32), sq.sqrt())).collect();
    let (fit, _) = fit_rate(&pts).unwrap();
    assert!((0.9..=1.1).contains(&fit.slope), "{fit:?}");
}

#[test]
fn failing_sample_reports_seed() {
    let fam = multiplicative_family(4, 1.0).unwrap();
    let spec = Arc::new(NoiseSpec::new(1.0, 0.001, (4, 4), Rectangle::unit()).unwrap());
    let bad = ScalarField::of_state("nan", |_, _| f64::NAN);
    let template = SchemeConfig::new(1.0, 8, Drift::Custom(bad), crate::scheme::Diffusion::Additive, InitialData::Constant(1.0)).unwrap();
    let err = lockstep_sample_errors(&fam, &template, &spec, 3, &[1], &[77], 1.0).unwrap_err();
    match err {
        Error::Sample { sample, seed, .. } => assert_eq!((sample, seed), (0, 77)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn report_is_reproducible() {
    let cfg = small_additive(2.0);
    let a = run_strong_error(&cfg).unwrap();
    let b = run_strong_error(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.points.len(), 3);
    assert!(a.points[0].dt > a.points[2].dt);
    assert_eq!(a.sample_seeds.len(), 3);
    assert!(a.rate.is_some());
}

#[test]
fn disjoint_batches_agree() {
    let base = ExperimentConfig { resolution: 8, ladder: vec![3], fine_exponent: 7, samples: 100, ..ExperimentConfig::additive(1.0) };
    let a = run_strong_error(&ExperimentConfig { seed: 1, ..base.clone() }).unwrap();
    let b = run_strong_error(&ExperimentConfig { seed: 2, ..base }).unwrap();
    let (pa, pb) = (a.points[0], b.points[0]);
    let se = (pa.std_error.powi(2) + pb.std_error.powi(2)).sqrt();
    assert!((pa.rms_error - pb.rms_error).abs() < 3.0 * se, "{pa:?} {pb:?}");
}

#[test]
fn multiplicative_small_run_has_reference_check() {
    let cfg = ExperimentConfig { resolution: 4, ladder: vec![2, 3], fine_exponent: 5, samples: 2, ..ExperimentConfig::multiplicative(1.0) };
    let r = run_strong_error(&cfg).unwrap();
    let check = r.reference_check.unwrap();
    assert_eq!(check.dt, 0.25);
    assert!(check.error_fine > 0.0 && check.error_half > 0.0);
    assert_eq!(r.points.len(), 2);
}
