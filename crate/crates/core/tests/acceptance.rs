//! Acceptance suite. Every criterion prints one `ACCEPTANCE <id> PASS|FAIL`
//! line on stderr (outside the test harness capture) before asserting.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mprate::ensemble::{covariance_matrix, hermitization, sample_matrix, EnsembleConfig, EntryDist};
use mprate::harness::{
    run_rate_sweep, run_sparse_sweep, write_json, write_rate_outputs, write_sparse_outputs, ExperimentPlan, PlanCase,
    RateSweepResult,
};
use mprate::law::{ComplexPoint, MpLaw};
use mprate::resolvent::{
    ensemble_epsilon, interlacing_check, lemma_bound_sweep, resolvent, schur_check, trace_identities,
    verify_block_formula, DeletionMethod, LemmaSweepReport, SweepSpec, VSchedule,
};
use mprate::spectral::{covariance_spectrum, symmetric_eigenvalues};

fn report(id: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "ACCEPTANCE {id:<3} {}  {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn pt(u: f64, v: f64) -> ComplexPoint<f64> {
    ComplexPoint::new(u, v).unwrap()
}

const LAW_YS: [f64; 6] = [0.1, 0.25, 0.5, 0.9, 1.0, 2.0];

/// 200 points: 20 abscissae times 10 heights from 0.05 to 3.
fn upper_grid(lo: f64, hi: f64) -> Vec<ComplexPoint<f64>> {
    let mut g = Vec::with_capacity(200);
    for j in 0..10 {
        let v = 0.05 * 60f64.powf(j as f64 / 9.0);
        for i in 0..20 {
            g.push(pt(lo + (hi - lo) * i as f64 / 19.0, v));
        }
    }
    g
}

#[test]
fn criterion_1_law_correctness() {
    let mut worst_mass = 0.0f64;
    let mut worst_branch = 0.0f64;
    let mut worst_fixed = 0.0f64;
    for &y in &LAW_YS {
        let law = MpLaw::new(y).unwrap();
        worst_mass = worst_mass.max((law.atom_at_zero() + law.continuous_mass().unwrap() - 1.0).abs());
        for z in upper_grid(-1.0, law.b() + 1.0) {
            let closed = law.stieltjes(z).unwrap().value;
            let quad = law.stieltjes_quadrature(z, 1e-10).unwrap();
            worst_branch = worst_branch.max((closed - quad).norm());
        }
        let r = law.b().sqrt() + 1.0;
        for z in upper_grid(-r, r) {
            let s = law.symmetrized_stieltjes(z).unwrap().value;
            worst_fixed = worst_fixed.max(law.fixed_point_residual(z, s));
        }
    }
    let pass = worst_mass <= 1e-8 && worst_branch <= 1e-6 && worst_fixed <= 1e-10;
    report(
        "1",
        pass,
        format!(
            "law: max |mass - 1| = {worst_mass:.2e}, branch vs quadrature = {worst_branch:.2e}, fixed-point residual = {worst_fixed:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_1_denominator_modulus_reciprocal_bound() {
    let mut pass = true;
    let mut detail = Vec::new();
    for &y in &[0.5f64, 1.0] {
        let law = MpLaw::new(y).unwrap();
        let r = law.b().sqrt() + 1.0;
        let min = upper_grid(-r, r)
            .into_iter()
            .map(|z| law.fixed_point_denominator(z, law.symmetrized_stieltjes(z).unwrap().value).norm())
            .fold(f64::INFINITY, f64::min);
        let ok = min >= 1.0 / y.sqrt();
        pass &= ok;
        detail.push(format!("y={y}: min |D| = {min:.4} vs 1/sqrt(y) = {:.4}", 1.0 / y.sqrt()));
    }
    report("1b", pass, format!("denominator modulus >= 1/sqrt(y): {}", detail.join("; ")));
    assert!(pass, "{}", detail.join("; "));
}

#[test]
fn criterion_2_spectral_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dists = [EntryDist::Rademacher, EntryDist::Gaussian, EntryDist::TwoPoint { q: 0.3 }];
    let mut sample = |k: u64| {
        let n = rng.random_range(4..24usize);
        let p = rng.random_range(1..=n);
        let c = EnsembleConfig::dense(n, p, dists[k as usize % 3], 1000 + k);
        let z = pt(rng.random_range(-2.5..2.5), rng.random_range(0.05..1.5));
        let j = rng.random_range(0..n + p);
        (sample_matrix::<f64>(&c, 0).unwrap(), z, j)
    };

    let mut pairing = 0.0f64;
    let mut block = 0.0f64;
    let mut traces = 0.0f64;
    for k in 0..20 {
        let (x, z, _) = sample(k);
        let h = hermitization(&x);
        let mu = symmetric_eigenvalues(&h.values).unwrap().eigenvalues;
        let lam = covariance_spectrum(&covariance_matrix(&x)).unwrap().eigenvalues;
        let scale = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let order = mu.len();
        for i in 0..order {
            pairing = pairing.max((mu[i] + mu[order - 1 - i]).abs() / scale);
        }
        // The p largest eigenvalues of H square to the spectrum of W.
        for (i, &l) in lam.iter().enumerate() {
            let m = mu[order - lam.len() + i];
            pairing = pairing.max((m * m - l).abs() / (scale * scale));
        }
        block = block.max(verify_block_formula(&x, z).unwrap());
        let t = trace_identities(&resolvent(&h, z).unwrap(), x.config.y(), z).unwrap();
        traces = traces.max(t.top_from_bottom).max(t.bottom_from_top);
    }
    let mut schur = 0.0f64;
    for k in 0..10 {
        let (x, z, j) = sample(100 + k);
        schur = schur.max(schur_check(&hermitization(&x).values, z, j).unwrap());
    }
    let mut inter_ok = true;
    let mut inter_ratio = 0.0f64;
    for k in 0..50 {
        let (x, z, j) = sample(200 + k);
        let (lhs, bound) = interlacing_check(&hermitization(&x).values, z, j).unwrap();
        inter_ok &= lhs <= bound;
        inter_ratio = inter_ratio.max(lhs / bound);
    }
    let pass = pairing <= 1e-9 && block <= 1e-8 && schur <= 1e-8 && inter_ok && traces <= 1e-9;
    report(
        "2",
        pass,
        format!(
            "identities: pairing {pairing:.1e}, block {block:.1e}, schur {schur:.1e}, interlacing max lhs*v = {inter_ratio:.3}, traces {traces:.1e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_epsilon_exactness() {
    let c = EnsembleConfig::dense(128, 128, EntryDist::Rademacher, 303);
    let z = pt(1.0, 0.5);
    let small = ensemble_epsilon::<f64>(&c, z, 25, 8, DeletionMethod::Direct).unwrap();
    let large = ensemble_epsilon::<f64>(&c, z, 400, 8, DeletionMethod::Direct).unwrap();
    let ident = small.max_identity_residual.max(large.max_identity_residual);
    let eps3 = small.max_eps3_scaled.max(large.max_eps3_scaled);
    let (r25, r400) = (small.master_residual.norm(), large.master_residual.norm());
    let pass = ident <= 1e-8 && eps3 <= 1.0 && r400 < r25;
    report(
        "3",
        pass,
        format!("epsilon: row identity {ident:.1e}, max |eps3| n v = {eps3:.3}, master residual {r25:.3e} (25) -> {r400:.3e} (400)"),
    );
    assert!(pass);
}

fn sweep() -> &'static LemmaSweepReport {
    static SWEEP: OnceLock<LemmaSweepReport> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let dist = EntryDist::Gaussian;
        lemma_bound_sweep(&SweepSpec {
            ns: vec![64, 128, 256, 512],
            y: 1.0,
            entry_dist: dist,
            u: 1.0,
            v_schedules: vec![VSchedule::threshold(dist), VSchedule::Fixed(0.5)],
            replicates: 100,
            rows_per_replicate: 8,
            base_seed: 404,
        })
        .unwrap()
    })
}

#[test]
fn criterion_4_eps4_constant() {
    let s = sweep();
    let worst = s.points.iter().map(|p| p.ratios.eps4_sq).fold(0.0f64, f64::max);
    let pass = s.points.iter().all(|p| p.moments.eps4_sq <= p.rates.eps4_sq);
    let cells: Vec<String> = s
        .points
        .iter()
        .map(|p| format!("n={} v={:.3}: {:.2e}", p.n, p.v, p.ratios.eps4_sq))
        .collect();
    report(
        "4",
        pass,
        format!("E|eps4|^2 <= 4/(n v^2): worst ratio {worst:.2e} [{}]", cells.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_5_dense_rate() {
    let res = dense_sweep(EntryDist::Rademacher, 505);
    let deltas: Vec<f64> = res.cases.iter().map(|c| c.record.delta_p).collect();
    let monotone = deltas.windows(2).all(|w| w[1] < w[0]);
    let pass = res.fit_p.slope <= -0.45 && res.fit_p.r_squared >= 0.95 && monotone;
    report(
        "5",
        pass,
        format!(
            "dense rate: slope {:.3} (se {:.3}, r2 {:.3}), star slope {:.3}, delta_p {:?}",
            res.fit_p.slope, res.fit_p.slope_stderr, res.fit_p.r_squared, res.fit_star.slope, deltas
        ),
    );
    assert!(pass);
    assert!(res.fit_star.slope <= -0.45);
}

fn dense_sweep(dist: EntryDist, seed: u64) -> RateSweepResult {
    let plan = ExperimentPlan {
        cases: [64, 128, 256, 512, 1024]
            .iter()
            .map(|&n| PlanCase {
                n,
                p: n,
                entry_dist: dist,
                sparsity: None,
            })
            .collect(),
        replicates: 100,
        v_schedule: VSchedule::threshold(dist),
        base_seed: seed,
        output_path: None,
    };
    run_rate_sweep(&plan).unwrap()
}

#[test]
fn criterion_5_gaussian_rate_recorded() {
    let res = dense_sweep(EntryDist::Gaussian, 505);
    let pass = res.fit_p.slope <= -0.45 && res.fit_star.slope <= -0.45;
    report(
        "5g",
        pass,
        format!(
            "gaussian rate: slope {:.3} (r2 {:.3}), star slope {:.3}",
            res.fit_p.slope, res.fit_p.r_squared, res.fit_star.slope
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_sparse_rate() {
    let plan = ExperimentPlan {
        cases: [1.0, 0.5, 0.25, 0.125]
            .iter()
            .map(|&pn| PlanCase {
                n: 512,
                p: 512,
                entry_dist: EntryDist::Rademacher,
                sparsity: Some(pn),
            })
            .collect(),
        replicates: 100,
        v_schedule: VSchedule::Scaled(2.0),
        base_seed: 606,
        output_path: None,
    };
    let res = run_sparse_sweep(&plan).unwrap();
    let pass = res.fit_law.slope <= -0.4;
    let deltas: Vec<f64> = res.cases.iter().map(|c| c.record.delta_p).collect();
    report(
        "6",
        pass,
        format!(
            "sparse rate: slope over n p_n {:.3} (r2 {:.3}), delta {:?}, slope vs dense ESD {}",
            res.fit_law.slope,
            res.fit_law.r_squared,
            deltas,
            res.fit_dense.map_or("n/a".to_string(), |f| format!("{:.3}", f.slope))
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_ratio_boundedness() {
    let s = sweep();
    let band = |a: f64, b: f64| a > 0.0 && b > 0.0 && (b / a).max(a / b) <= 3.0;
    let mut pass = true;
    let mut detail = Vec::new();
    for &(lo, hi) in &[(64, 256), (128, 512)] {
        let a = s.point(lo, 0.5).unwrap();
        let b = s.point(hi, 0.5).unwrap();
        let (r1, r2, rr) = (
            b.ratios.eps1 / a.ratios.eps1,
            b.ratios.eps2 / a.ratios.eps2,
            b.ratios.r_sq / a.ratios.r_sq,
        );
        pass &= band(a.ratios.eps1, b.ratios.eps1) && band(a.ratios.eps2, b.ratios.eps2) && band(a.ratios.r_sq, b.ratios.r_sq);
        detail.push(format!("{lo}->{hi}: eps1 x{r1:.2}, eps2 x{r2:.2}, R^2 x{rr:.2}"));
    }
    report("7", pass, format!("ratio band (factor 3, v = 0.5): {}", detail.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_7_resolvent_second_moment_within_two() {
    let s = sweep();
    let vals: Vec<f64> = [64, 128, 256, 512].iter().map(|&n| s.point(n, 0.5).unwrap().moments.r_sq_all).collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let pass = hi / lo <= 2.0;
    report("7r", pass, format!("mean E|R_kk|^2 across n at v = 0.5: {vals:.4?}"));
    assert!(pass);
}

fn determinism_run(dir: &Path) {
    let rate = ExperimentPlan {
        cases: [48, 96, 192]
            .iter()
            .map(|&n| PlanCase {
                n,
                p: n / 2,
                entry_dist: EntryDist::TwoPoint { q: 0.25 },
                sparsity: None,
            })
            .collect(),
        replicates: 16,
        v_schedule: VSchedule::Scaled(2.0),
        base_seed: 808,
        output_path: None,
    };
    write_rate_outputs(&run_rate_sweep(&rate).unwrap(), dir).unwrap();
    let sparse = ExperimentPlan {
        cases: [1.0, 0.5, 0.25]
            .iter()
            .map(|&pn| PlanCase {
                n: 128,
                p: 128,
                entry_dist: EntryDist::Gaussian,
                sparsity: Some(pn),
            })
            .collect(),
        replicates: 10,
        v_schedule: VSchedule::Scaled(2.0),
        base_seed: 808,
        output_path: None,
    };
    write_sparse_outputs(&run_sparse_sweep(&sparse).unwrap(), dir).unwrap();
    let sw = lemma_bound_sweep(&SweepSpec {
        ns: vec![32, 64],
        y: 0.5,
        entry_dist: EntryDist::Gaussian,
        u: 0.7,
        v_schedules: vec![VSchedule::Fixed(0.5)],
        replicates: 12,
        rows_per_replicate: 4,
        base_seed: 808,
    })
    .unwrap();
    write_json(&dir.join("sweep.json"), &sw).unwrap();
    let e = ensemble_epsilon::<f64>(
        &EnsembleConfig::dense(48, 32, EntryDist::Rademacher, 808),
        pt(0.9, 0.3),
        12,
        6,
        DeletionMethod::Direct,
    )
    .unwrap();
    let summary = [
        e.s_hat.re,
        e.s_hat.im,
        e.delta_hat.re,
        e.delta_hat.im,
        e.master_residual.re,
        e.master_residual.im,
    ];
    write_json(&dir.join("epsilon.json"), &summary).unwrap();
}

#[test]
fn criterion_8_determinism() {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, threads) in dirs.iter().zip([1, 4]) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| determinism_run(dir.path()));
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).ok() != std::fs::read(dirs[1].path().join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    let count = std::fs::read_dir(dirs[1].path()).unwrap().count();
    let pass = differing.is_empty() && count == names.len() && names.len() >= 10;
    report(
        "8",
        pass,
        format!("determinism: {} files, 1 vs 4 threads, differing: {differing:?}", names.len()),
    );
    assert!(pass);
}
