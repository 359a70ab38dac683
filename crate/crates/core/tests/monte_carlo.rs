//! Statistical contracts of the samplers and Monte Carlo estimators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mprate::distance::{delta_p_mc, delta_p_star_mc, replicate_spectra};
use mprate::ensemble::{sample_matrix, EnsembleConfig, EntryDist};
use mprate::harness::{emit_plot_data, run_case, run_sparse_sweep, smoothing_for_case, ExperimentPlan, PlanCase, VSchedule, OVERLAY_GRID};
use mprate::law::ComplexPoint;
use mprate::resolvent::{ensemble_epsilon, herglotz_region_check, DeletionMethod};

const DISTS: [EntryDist; 4] = [
    EntryDist::Rademacher,
    EntryDist::Gaussian,
    EntryDist::UniformScaled,
    EntryDist::TwoPoint { q: 0.2 },
];

#[test]
fn entry_moments() {
    let n = 200_000;
    for (k, d) in DISTS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let xs: Vec<f64> = (0..n).map(|_| d.draw(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let m4 = d.fourth_moment();
        let se_mean = (1.0 / n as f64).sqrt();
        let se_var = ((m4 - 1.0) / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se_mean, "{d:?} mean {mean}");
        assert!((var - 1.0).abs() <= 4.0 * se_var + 1e-12, "{d:?} var {var}");
        let emp4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
        assert!((emp4 - m4).abs() < 0.05 * m4, "{d:?} M4 {emp4} vs {m4}");
    }
}

#[test]
fn gaussian_kurtosis() {
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let m4 = (0..n).map(|_| EntryDist::Gaussian.draw(&mut rng).powi(4)).sum::<f64>() / n as f64;
    // Var X⁴ = 105 - 9.
    let se = (96.0f64 / n as f64).sqrt();
    assert!((m4 - 3.0).abs() < 3.0 * se, "{m4}");
}

#[test]
fn mask_keeps_expected_fraction() {
    for &pn in &[0.5, 0.125] {
        let c = EnsembleConfig {
            sparsity: Some(pn),
            ..EnsembleConfig::dense(300, 200, EntryDist::Gaussian, 5)
        };
        let x = sample_matrix::<f64>(&c, 0).unwrap();
        let total = (c.n * c.p) as f64;
        let kept = x.entries.as_slice().iter().filter(|&&v| v != 0.0).count() as f64;
        let se = (pn * (1.0 - pn) / total).sqrt();
        assert!((kept / total - pn).abs() < 4.0 * se, "p_n={pn}: {}", kept / total);
    }
}

#[test]
fn full_keep_probability_is_the_dense_sampler() {
    let dense = EnsembleConfig::dense(30, 20, EntryDist::TwoPoint { q: 0.3 }, 12);
    let sparse = EnsembleConfig {
        sparsity: Some(1.0),
        ..dense
    };
    for rep in 0..3 {
        let a = sample_matrix::<f64>(&dense, rep).unwrap();
        let b = sample_matrix::<f64>(&sparse, rep).unwrap();
        assert_eq!(a.entries, b.entries);
    }
}

#[test]
fn sparse_sweep_unit_probability_reproduces_dense() {
    let case = |sp| PlanCase {
        n: 64,
        p: 64,
        entry_dist: EntryDist::Rademacher,
        sparsity: Some(sp),
    };
    let plan = ExperimentPlan {
        cases: vec![case(1.0), case(0.5), case(0.25)],
        replicates: 10,
        v_schedule: VSchedule::Scaled(2.0),
        base_seed: 21,
        output_path: None,
    };
    let res = run_sparse_sweep(&plan).unwrap();
    let dense = run_case(&EnsembleConfig::dense(64, 64, EntryDist::Rademacher, 21), 10).unwrap();
    assert_eq!(res.cases[0].record.delta_p, dense.record.delta_p);
    assert_eq!(res.cases[0].record.delta_p_star, dense.record.delta_p_star);
    assert_eq!(res.cases[0].record.delta_vs_dense, Some(0.0));
    assert!(res.cases[1].record.delta_vs_dense.unwrap() > 0.0);
}

#[test]
fn distance_ordering_and_decay() {
    let c64 = EnsembleConfig::dense(64, 64, EntryDist::Rademacher, 2024);
    let c256 = EnsembleConfig::dense(256, 256, EntryDist::Rademacher, 2024);
    let (d64, _) = delta_p_mc::<f64>(&c64, 100).unwrap();
    let (s64, _) = delta_p_star_mc::<f64>(&c64, 100).unwrap();
    let (d256, _) = delta_p_mc::<f64>(&c256, 100).unwrap();
    assert!(d64.delta < s64);
    assert!(d256.delta < d64.delta);
    assert!((0.0..=1.0).contains(&d64.delta));
}

#[test]
fn identical_replicates_give_the_single_sample_distance() {
    let c = EnsembleConfig::dense(40, 40, EntryDist::Gaussian, 3);
    let (one, se) = delta_p_star_mc::<f64>(&c, 1).unwrap();
    assert!(se.is_nan());
    let spectra = replicate_spectra::<f64>(&c, 1).unwrap();
    let twice = [spectra[0].clone(), spectra[0].clone()];
    let est = mprate::distance::estimate_from_spectra(&twice, &mprate::law::MpLaw::new(1.0).unwrap()).unwrap();
    assert_eq!(est.delta_p.delta, one);
}

#[test]
fn star_distance_standard_error_at_512() {
    let c = EnsembleConfig::dense(512, 512, EntryDist::Rademacher, 77);
    let (mean, se) = delta_p_star_mc::<f64>(&c, 100).unwrap();
    assert!(mean.is_finite() && se.is_finite());
    assert!(se < 0.2 * mean, "{se} vs {mean}");
}

#[test]
fn smoothing_terms_shrink_with_n() {
    let terms = |n: usize| {
        let case = run_case(&EnsembleConfig::dense(n, n, EntryDist::Rademacher, 31), 100).unwrap();
        smoothing_for_case(&case, 2.0 / (n as f64).sqrt(), 1.0, 100).unwrap()
    };
    let small = terms(256);
    let large = terms(1024);
    assert!(large.term_horizontal < small.term_horizontal);
    assert!(large.term_vertical < small.term_vertical);
    assert!(small.term_horizontal > 0.0 && small.term_vertical > 0.0);
}

#[test]
fn eps3_bound_on_twenty_samples() {
    let c = EnsembleConfig::dense(40, 30, EntryDist::TwoPoint { q: 0.3 }, 8);
    for &v in &[0.1, 0.5] {
        let e = ensemble_epsilon::<f64>(&c, ComplexPoint::new(0.9, v).unwrap(), 20, 30, DeletionMethod::Direct).unwrap();
        assert!(e.max_eps3_scaled <= 1.0);
        assert!(e.max_identity_residual <= 1e-8);
    }
}

fn herglotz_grid(v: f64) -> Vec<ComplexPoint<f64>> {
    (0..=18).map(|k| ComplexPoint::new(0.1 + 0.1 * k as f64, v).unwrap()).collect()
}

#[test]
fn denominator_stays_in_upper_half_plane() {
    let c = EnsembleConfig::dense(256, 256, EntryDist::Rademacher, 5);
    let r = herglotz_region_check(&c, &herglotz_grid(0.5), 50).unwrap();
    assert_eq!(r.positivity_failures, 0);
    assert_eq!(r.exact_below_sqrt, 0);
    assert_eq!(r.exact_below_reciprocal, 0);
    assert!(r.points.iter().all(|p| p.modulus >= r.reciprocal_bound - 0.05));
}

#[test]
fn denominator_modulus_below_unit_ratio() {
    // For y < 1 the limiting modulus dips to √y, below 1/√y.
    let c = EnsembleConfig::dense(256, 128, EntryDist::Rademacher, 5);
    let r = herglotz_region_check(&c, &herglotz_grid(0.5), 50).unwrap();
    assert_eq!(r.positivity_failures, 0);
    assert_eq!(r.exact_below_sqrt, 0);
    assert!(r.exact_below_reciprocal > 0);
    assert!(r.points.iter().all(|p| p.modulus >= r.sqrt_bound - 0.05));
}

#[test]
fn herglotz_rejects_small_v() {
    let c = EnsembleConfig::dense(64, 64, EntryDist::Rademacher, 5);
    assert!(herglotz_region_check(&c, &herglotz_grid(0.1), 4).is_err());
}

#[test]
fn plot_files_are_complete_and_reproducible() {
    let cfg = EnsembleConfig::dense(48, 24, EntryDist::Gaussian, 6);
    let case = run_case(&cfg, 12).unwrap();
    let pooled = case.pooled().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = emit_plot_data(&case, a.path()).unwrap();
    let pb = emit_plot_data(&run_case(&cfg, 12).unwrap(), b.path()).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let text = std::fs::read_to_string(&pa[0]).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), pooled.jump_points().len() + OVERLAY_GRID);
    let limit: Vec<f64> = rows
        .iter()
        .filter(|r| r.starts_with("limit,"))
        .map(|r| r.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(limit.len(), OVERLAY_GRID);
    assert!(limit.windows(2).all(|w| w[0] <= w[1]));
    let sym = std::fs::read_to_string(&pa[1]).unwrap();
    let sym_limit: Vec<f64> = sym
        .lines()
        .filter(|r| r.starts_with("limit,"))
        .map(|r| r.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(sym_limit.windows(2).all(|w| w[0] <= w[1]));
}
