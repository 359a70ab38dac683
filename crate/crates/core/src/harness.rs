//! Experiment orchestration: distance sweeps over `n` and over the sparsity
//! level, log-log rate fits, diagnostic runs and file output.
//!
//! Every number written to disk comes from computations whose reductions run
//! in a fixed order, so output files do not depend on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{
    empirical_stieltjes, estimate_from_spectra, kolmogorov_step_vs_step, replicate_spectra, smoothing_terms,
    SmoothingReport, SymmetrizedLaw,
};
use crate::ensemble::{hermitization, sample_matrix, EnsembleConfig, EntryDist};
use crate::law::{ComplexPoint, MpLaw};
use crate::resolvent::{
    ensemble_epsilon, interlacing_check, lemma_bound_sweep, resolvent, schur_check, trace_identities,
    verify_block_formula, DeletionMethod, SweepPoint, SweepSpec,
};
use crate::spectral::{symmetrize_cdf, EmpiricalCdf, Spectrum};
use crate::{Error, Result};

pub use crate::resolvent::VSchedule;

/// Points of the limiting-CDF grid in overlay files.
pub const OVERLAY_GRID: usize = 2000;

/// Minimum replicate count for a fitted sweep.
pub const MIN_FIT_REPLICATES: usize = 8;

/// Smallest `n p_n` accepted by the sparse sweep.
pub const MIN_EFFECTIVE_N: f64 = 16.0;

/// One ensemble of a plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanCase {
    pub n: usize,
    pub p: usize,
    pub entry_dist: EntryDist,
    #[serde(default)]
    pub sparsity: Option<f64>,
}

impl PlanCase {
    pub fn config(&self, base_seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n: self.n,
            p: self.p,
            entry_dist: self.entry_dist,
            sparsity: self.sparsity,
            base_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub cases: Vec<PlanCase>,
    pub replicates: usize,
    #[serde(default = "default_schedule")]
    pub v_schedule: VSchedule,
    pub base_seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_schedule() -> VSchedule {
    VSchedule::Scaled(2.0)
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::Plan("plan has no cases".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Plan("plan needs at least one replicate".into()));
        }
        for c in &self.cases {
            c.config(self.base_seed).validate().map_err(|e| Error::Plan(e.to_string()))?;
        }
        Ok(())
    }

    fn validate_fitted(&self) -> Result<()> {
        self.validate()?;
        if self.replicates < MIN_FIT_REPLICATES {
            return Err(Error::Plan(format!(
                "a fitted sweep needs at least {MIN_FIT_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// Which quantity the distance is regressed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XVariable {
    N,
    NpN,
}

/// Ordinary least squares fit of `log δ = intercept + slope · log x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub x_variable: XVariable,
    pub points: usize,
}

pub fn fit_rate(points: &[(f64, f64)], x_variable: XVariable) -> Result<RateFit> {
    if let Some(&(x, d)) = points.iter().find(|&&(x, d)| !(x > 0.0 && d > 0.0)) {
        return Err(Error::Contract(format!("log-log fit needs positive data, got ({x}, {d})")));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    if points.len() < 3 || xs.len() < 3 {
        return Err(Error::Plan(format!(
            "a rate fit needs at least 3 distinct abscissae, got {}",
            xs.len()
        )));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        slope_stderr: (sse / (k - 2.0) / sxx).sqrt(),
        r_squared,
        x_variable,
        points: points.len(),
    })
}

/// One row of a distance table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceRecord {
    pub n: usize,
    pub p: usize,
    pub y: f64,
    pub dist: String,
    pub replicates: usize,
    pub delta_p: f64,
    pub delta_p_star: f64,
    pub se_p: f64,
    pub se_star: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    /// Distance of the averaged sparse ESD to the averaged dense ESD.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_vs_dense: Option<f64>,
}

/// A computed case with its spectra kept for plotting and further analysis.
#[derive(Clone, Debug)]
pub struct CaseResult {
    pub config: EnsembleConfig,
    pub record: DistanceRecord,
    pub spectra: Vec<Spectrum<f64>>,
}

impl CaseResult {
    pub fn pooled(&self) -> Result<EmpiricalCdf<f64>> {
        EmpiricalCdf::pooled(self.spectra.iter().map(|s| s.eigenvalues.as_slice()))
    }

    pub fn tag(&self) -> String {
        let c = &self.config;
        let mut t = format!("n{}_p{}_{}", c.n, c.p, c.entry_dist.name());
        if let Some(pn) = c.sparsity {
            let _ = write!(t, "_pn{pn}");
        }
        t.replace(['(', ')'], "")
    }
}

/// Δ_p and Δ_p* for one ensemble.
pub fn run_case(config: &EnsembleConfig, replicates: usize) -> Result<CaseResult> {
    let spectra = replicate_spectra::<f64>(config, replicates)?;
    let law = MpLaw::new(config.y())?;
    let est = estimate_from_spectra(&spectra, &law)?;
    Ok(CaseResult {
        config: *config,
        record: DistanceRecord {
            n: config.n,
            p: config.p,
            y: config.y(),
            dist: config.entry_dist.name(),
            replicates,
            delta_p: est.delta_p.delta,
            delta_p_star: est.delta_p_star,
            se_p: est.se_p,
            se_star: est.se_star,
            seed: config.base_seed,
            sparsity: config.sparsity,
            delta_vs_dense: None,
        },
        spectra,
    })
}

#[derive(Clone, Debug)]
pub struct RateSweepResult {
    pub cases: Vec<CaseResult>,
    pub fit_p: RateFit,
    pub fit_star: RateFit,
}

impl RateSweepResult {
    pub fn records(&self) -> Vec<DistanceRecord> {
        self.cases.iter().map(|c| c.record.clone()).collect()
    }
}

/// Dense sweep over `n` at fixed `p/n`.
pub fn run_rate_sweep(plan: &ExperimentPlan) -> Result<RateSweepResult> {
    plan.validate_fitted()?;
    if plan.cases.iter().any(|c| c.sparsity.is_some()) {
        return Err(Error::Plan("rate sweep cases must be dense".into()));
    }
    let y0 = plan.cases[0].config(0).y();
    if plan.cases.iter().any(|c| c.config(0).y() != y0) {
        return Err(Error::Plan("rate sweep cases must share p/n".into()));
    }
    let mut ns: Vec<usize> = plan.cases.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 3 {
        return Err(Error::Plan(format!("rate sweep needs at least 3 distinct n, got {}", ns.len())));
    }
    let cases: Vec<CaseResult> = plan
        .cases
        .iter()
        .map(|c| run_case(&c.config(plan.base_seed), plan.replicates))
        .collect::<Result<_>>()?;
    let pts = |f: fn(&DistanceRecord) -> f64| -> Vec<(f64, f64)> {
        cases.iter().map(|c| (c.record.n as f64, f(&c.record))).collect()
    };
    let fit_p = fit_rate(&pts(|r| r.delta_p), XVariable::N)?;
    let fit_star = fit_rate(&pts(|r| r.delta_p_star), XVariable::N)?;
    Ok(RateSweepResult { cases, fit_p, fit_star })
}

#[derive(Clone, Debug)]
pub struct SparseSweepResult {
    pub cases: Vec<CaseResult>,
    /// Regression of the distance to the limiting law on `n p_n`.
    pub fit_law: RateFit,
    /// Regression of the distance to the averaged dense ESD on `n p_n`, over
    /// the cases with `p_n < 1` (absent if fewer than three).
    pub fit_dense: Option<RateFit>,
}

impl SparseSweepResult {
    pub fn records(&self) -> Vec<DistanceRecord> {
        self.cases.iter().map(|c| c.record.clone()).collect()
    }
}

/// Sparse sweep at fixed `n` over the keep-probability `p_n`.
pub fn run_sparse_sweep(plan: &ExperimentPlan) -> Result<SparseSweepResult> {
    plan.validate_fitted()?;
    let first = plan.cases[0];
    for c in &plan.cases {
        let Some(pn) = c.sparsity else {
            return Err(Error::Plan("every sparse sweep case needs a sparsity".into()));
        };
        if c.n != first.n || c.p != first.p || c.entry_dist != first.entry_dist {
            return Err(Error::Plan("sparse sweep cases must share n, p and the entry law".into()));
        }
        if (c.n as f64) * pn < MIN_EFFECTIVE_N {
            return Err(Error::Plan(format!(
                "n p_n = {} is below {MIN_EFFECTIVE_N}; the spectrum degenerates",
                c.n as f64 * pn
            )));
        }
    }
    let dense = PlanCase { sparsity: None, ..first }.config(plan.base_seed);
    let dense_spectra = replicate_spectra::<f64>(&dense, plan.replicates)?;
    let dense_pooled = EmpiricalCdf::pooled(dense_spectra.iter().map(|s| s.eigenvalues.as_slice()))?;
    let mut cases = Vec::with_capacity(plan.cases.len());
    for c in &plan.cases {
        let mut res = run_case(&c.config(plan.base_seed), plan.replicates)?;
        res.record.delta_vs_dense = Some(kolmogorov_step_vs_step(&res.pooled()?, &dense_pooled).delta);
        cases.push(res);
    }
    let law_pts: Vec<(f64, f64)> = cases.iter().map(|c| (c.config.effective_n(), c.record.delta_p)).collect();
    let fit_law = fit_rate(&law_pts, XVariable::NpN)?;
    let dense_pts: Vec<(f64, f64)> = cases
        .iter()
        .filter(|c| c.config.keep_probability() < 1.0)
        .map(|c| (c.config.effective_n(), c.record.delta_vs_dense.unwrap_or(0.0)))
        .collect();
    let fit_dense = if dense_pts.len() >= 3 {
        Some(fit_rate(&dense_pts, XVariable::NpN)?)
    } else {
        None
    };
    Ok(SparseSweepResult {
        cases,
        fit_law,
        fit_dense,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Read a JSON document from `path`.
pub fn read_json<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Serialize `value` as pretty JSON into `path`.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, &s)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV table of distance records. The two sparse columns compare against
/// the limiting law and against the averaged dense ESD respectively.
pub fn sweep_table_csv(records: &[DistanceRecord]) -> String {
    let mut s = String::new();
    s.push_str("# delta_p: sup |E F - F_y|; delta_vs_dense: sup |E F_sparse - E F_dense| (sparse rows only)\n");
    s.push_str("n,p,y,dist,sparsity,np_n,replicates,delta_p,se_p,delta_p_star,se_star,delta_vs_dense,seed\n");
    for r in records {
        let np = r.n as f64 * r.sparsity.unwrap_or(1.0);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.p,
            r.y,
            r.dist,
            opt(r.sparsity),
            np,
            r.replicates,
            r.delta_p,
            r.se_p,
            r.delta_p_star,
            r.se_star,
            opt(r.delta_vs_dense),
            r.seed
        );
    }
    s
}

fn overlay_csv<G: Fn(f64) -> Result<f64> + Sync>(f: &EmpiricalCdf<f64>, lo: f64, hi: f64, limit: G) -> Result<String> {
    let mut s = String::from("series,x,value\n");
    for (x, v) in f.jump_points().iter().zip(f.cumulative()) {
        let _ = writeln!(s, "esd,{x},{v}");
    }
    let grid: Vec<f64> = (0..OVERLAY_GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (OVERLAY_GRID - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.par_iter().map(|&x| limit(x)).collect::<Result<_>>()?;
    for (x, v) in grid.iter().zip(values) {
        let _ = writeln!(s, "limit,{x},{v}");
    }
    Ok(s)
}

/// Overlay files for one case: averaged ESD against the limiting CDF, and the
/// symmetrized pair. Returns the paths written.
pub fn emit_plot_data(case: &CaseResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let law = MpLaw::new(case.config.y())?;
    let pooled = case.pooled()?;
    let lo = law.a().min(pooled.jump_points()[0]);
    let hi = law.b().max(*pooled.jump_points().last().expect("nonempty"));
    let tag = case.tag();
    let plain = dir.join(format!("{tag}_overlay.csv"));
    write_file(&plain, &overlay_csv(&pooled, lo, hi, |x| law.cdf(x))?)?;
    let sym = symmetrize_cdf(&pooled)?;
    let r = hi.sqrt();
    let sym_law = SymmetrizedLaw(law);
    let symmetric = dir.join(format!("{tag}_symmetrized_overlay.csv"));
    write_file(
        &symmetric,
        &overlay_csv(&sym, -r, r, |x| crate::distance::CdfEvaluator::cdf(&sym_law, x))?,
    )?;
    Ok(vec![plain, symmetric])
}

/// Writes the sweep table and JSON summary of a rate sweep.
pub fn write_rate_outputs(result: &RateSweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct Summary<'a> {
        records: Vec<DistanceRecord>,
        fit_delta_p: &'a RateFit,
        fit_delta_p_star: &'a RateFit,
    }
    let json = dir.join("rate.json");
    write_json(
        &json,
        &Summary {
            records: result.records(),
            fit_delta_p: &result.fit_p,
            fit_delta_p_star: &result.fit_star,
        },
    )?;
    let csv = dir.join("rate_sweep.csv");
    write_file(&csv, &sweep_table_csv(&result.records()))?;
    let mut paths = vec![json, csv];
    for c in &result.cases {
        paths.extend(emit_plot_data(c, dir)?);
    }
    Ok(paths)
}

/// Writes the sweep table and JSON summary of a sparse sweep.
pub fn write_sparse_outputs(result: &SparseSweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct Summary<'a> {
        note: &'static str,
        records: Vec<DistanceRecord>,
        fit_vs_law: &'a RateFit,
        fit_vs_dense: &'a Option<RateFit>,
    }
    let json = dir.join("sparse.json");
    write_json(
        &json,
        &Summary {
            note: "delta_p compares the averaged sparse ESD with the limiting law; delta_vs_dense compares it with the averaged dense ESD of the same seeds",
            records: result.records(),
            fit_vs_law: &result.fit_law,
            fit_vs_dense: &result.fit_dense,
        },
    )?;
    let csv = dir.join("sparse_sweep.csv");
    write_file(&csv, &sweep_table_csv(&result.records()))?;
    Ok(vec![json, csv])
}

/// Contour functionals for the averaged ESD of one case against the limit.
pub fn smoothing_for_case(case: &CaseResult, v: f64, big_v: f64, grid_points: usize) -> Result<SmoothingReport<f64>> {
    let law = MpLaw::new(case.config.y())?;
    let atoms: Vec<f64> = case.spectra.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
    smoothing_terms(
        |z: ComplexPoint<f64>| Ok(empirical_stieltjes(&atoms, z)),
        |z: ComplexPoint<f64>| Ok(law.stieltjes(z)?.value),
        v,
        big_v,
        [law.a(), law.b()],
        grid_points,
    )
}

/// Input of a diagnostic run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagPlan {
    pub ensemble: EnsembleConfig,
    pub z: ZPoint,
    pub replicates: usize,
    #[serde(default = "default_rows")]
    pub rows_per_replicate: usize,
    #[serde(default = "default_method")]
    pub method: DeletionMethod,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub smoothing: Option<SmoothingPlan>,
}

/// Contour functionals of the averaged ESD of `replicates` samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPlan {
    pub replicates: usize,
    pub v: f64,
    #[serde(rename = "V")]
    pub big_v: f64,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    200
}

fn default_rows() -> usize {
    8
}

fn default_method() -> DeletionMethod {
    DeletionMethod::Direct
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZPoint {
    pub u: f64,
    pub v: f64,
}

/// Largest residual of every identity checked by a diagnostic run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityResiduals {
    pub resolvent_inverse: f64,
    pub block_formula: f64,
    pub trace_top_from_bottom: f64,
    pub trace_bottom_from_top: f64,
    pub schur: f64,
    /// `max |Tr R - Tr R⁽ᵏ⁾| · v`, at most one.
    pub interlacing_scaled: f64,
    pub row_identity: f64,
    /// `max |ε3| · n v`, at most one.
    pub eps3_scaled: f64,
    pub master_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagReport {
    pub n: usize,
    pub p: usize,
    pub y: f64,
    pub z: ZPoint,
    pub replicates: usize,
    pub identity_residuals: IdentityResiduals,
    pub moment_table: Vec<SweepPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingReport<f64>>,
}

/// Runs the identity checks on replicate 0, the ensemble decomposition and
/// the optional moment sweep. Any identity violation is returned as an error.
pub fn run_diagnostics(plan: &DiagPlan) -> Result<DiagReport> {
    let cfg = &plan.ensemble;
    cfg.validate()?;
    let z = ComplexPoint::new(plan.z.u, plan.z.v)?;
    let x = sample_matrix::<f64>(cfg, 0)?;
    let h = hermitization(&x);
    let r = resolvent(&h, z)?;
    let block = verify_block_formula(&x, z)?;
    let traces = trace_identities(&r, cfg.y(), z)?;
    let order = cfg.n + cfg.p;
    let probes = [0, cfg.n - 1, cfg.n, order - 1];
    let mut schur = 0.0f64;
    let mut inter = 0.0f64;
    for &j in &probes {
        schur = schur.max(schur_check(&h.values, z, j)?);
        inter = inter.max(interlacing_check(&h.values, z, j)?.0 * z.v);
    }
    let ens = ensemble_epsilon::<f64>(cfg, z, plan.replicates, plan.rows_per_replicate, plan.method)?;
    if ens.max_identity_residual > crate::resolvent::ROW_IDENTITY_TOLERANCE {
        return Err(Error::identity(
            "row identity R = -(1 + eps R)/D",
            ens.max_identity_residual,
            crate::resolvent::ROW_IDENTITY_TOLERANCE,
        ));
    }
    if ens.max_eps3_scaled > 1.0 + 1e-12 {
        return Err(Error::identity("|eps3| <= 1/(nv)", ens.max_eps3_scaled - 1.0, 1e-12));
    }
    let moment_table = match &plan.sweep {
        Some(spec) => lemma_bound_sweep(spec)?.points,
        None => Vec::new(),
    };
    let smoothing = match &plan.smoothing {
        Some(sp) => Some(smoothing_for_case(&run_case(cfg, sp.replicates)?, sp.v, sp.big_v, sp.grid_points)?),
        None => None,
    };
    Ok(DiagReport {
        n: cfg.n,
        p: cfg.p,
        y: cfg.y(),
        z: plan.z,
        replicates: plan.replicates,
        identity_residuals: IdentityResiduals {
            resolvent_inverse: r.inverse_residual,
            block_formula: block,
            trace_top_from_bottom: traces.top_from_bottom,
            trace_bottom_from_top: traces.bottom_from_top,
            schur,
            interlacing_scaled: inter,
            row_identity: ens.max_identity_residual,
            eps3_scaled: ens.max_eps3_scaled,
            master_residual: ens.master_residual.norm(),
        },
        moment_table,
        smoothing,
    })
}
