use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mprate::distance::{CdfEvaluator, SymmetrizedLaw};
use mprate::ensemble::{covariance_matrix, sample_matrix, EnsembleConfig};
use mprate::harness::{self, DiagPlan, ExperimentPlan};
use mprate::law::{ComplexPoint, MpLaw};
use mprate::spectral::{covariance_spectrum, esd};
use mprate::{Error, Result};

#[derive(Parser)]
#[command(name = "mprate", version, about = "Convergence rates of sample covariance spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the base seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one sample and write its spectrum.
    Sample(Io),
    /// Tabulate the limiting law.
    Law(Io),
    /// Monte Carlo Kolmogorov distances for one ensemble.
    Distance(Io),
    /// Resolvent identities, ε moments and smoothing functionals.
    Diag(Io),
    /// Dense sweep over n with a log-log fit.
    Rate(Io),
    /// Sparse sweep over p_n with a log-log fit.
    Sparse(Io),
}

#[derive(Deserialize)]
struct SampleJob {
    #[serde(flatten)]
    ensemble: EnsembleConfig,
    #[serde(default)]
    replicate: u64,
}

#[derive(Deserialize)]
struct DistanceJob {
    #[serde(flatten)]
    ensemble: EnsembleConfig,
    replicates: usize,
}

#[derive(Deserialize)]
struct LawJob {
    y: f64,
    x_min: Option<f64>,
    x_max: Option<f64>,
    #[serde(default = "default_points")]
    points: usize,
    #[serde(default)]
    complex_grid: Option<ComplexGrid>,
}

fn default_points() -> usize {
    401
}

#[derive(Deserialize)]
struct ComplexGrid {
    u_min: f64,
    u_max: f64,
    nu: usize,
    v_min: f64,
    v_max: f64,
    nv: usize,
}

#[derive(Serialize)]
struct SampleSummary {
    n: usize,
    p: usize,
    y: f64,
    dist: String,
    replicate: u64,
    seed: u64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![lo],
        _ => (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sample(io: &Io, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut job: SampleJob = harness::read_json(&io.config)?;
    if let Some(s) = seed {
        job.ensemble.base_seed = s;
    }
    let x = sample_matrix::<f64>(&job.ensemble, job.replicate)?;
    let spec = covariance_spectrum(&covariance_matrix(&x))?;
    let mut eig = String::from("index,lambda\n");
    for (i, l) in spec.eigenvalues.iter().enumerate() {
        eig.push_str(&format!("{i},{l}\n"));
    }
    let eig_path = io.out.join("eigenvalues.csv");
    write(&eig_path, &eig)?;
    let mut buf = Vec::new();
    esd(&spec)?.write_csv(&mut buf).expect("write to memory");
    let esd_path = io.out.join("esd.csv");
    write(&esd_path, &String::from_utf8(buf).expect("utf8"))?;
    let c = &job.ensemble;
    let summary_path = io.out.join("sample.json");
    harness::write_json(
        &summary_path,
        &SampleSummary {
            n: c.n,
            p: c.p,
            y: c.y(),
            dist: c.entry_dist.name(),
            replicate: job.replicate,
            seed: c.base_seed,
            min_eigenvalue: spec.eigenvalues[0],
            max_eigenvalue: *spec.eigenvalues.last().expect("p >= 1"),
        },
    )?;
    Ok(vec![eig_path, esd_path, summary_path])
}

fn law(io: &Io) -> Result<Vec<PathBuf>> {
    let job: LawJob = harness::read_json(&io.config)?;
    let law = MpLaw::new(job.y)?;
    let lo = job.x_min.unwrap_or(0.0);
    let hi = job.x_max.unwrap_or(law.b() + 0.5);
    if lo.partial_cmp(&hi).is_none_or(|o| o.is_gt()) || job.points == 0 {
        return Err(Error::Config("law grid needs x_min <= x_max and points >= 1".into()));
    }
    let mut s = String::from("x,pdf,cdf\n");
    for x in linspace(lo, hi, job.points) {
        s.push_str(&format!("{x},{},{}\n", law.pdf(x), law.cdf(x)?));
    }
    let mut paths = vec![io.out.join("law.csv")];
    write(&paths[0], &s)?;

    let sym = SymmetrizedLaw(law);
    let r = law.b().sqrt() + 0.5;
    let mut s = String::from("x,pdf,cdf\n");
    for x in linspace(-r, r, job.points) {
        s.push_str(&format!("{x},{},{}\n", law.symmetrized_pdf(x), sym.cdf(x)?));
    }
    paths.push(io.out.join("law_symmetrized.csv"));
    write(&paths[1], &s)?;

    if let Some(g) = job.complex_grid {
        let mut s = String::from("u,v,re,im\n");
        for v in linspace(g.v_min, g.v_max, g.nv) {
            for u in linspace(g.u_min, g.u_max, g.nu) {
                let val = law.stieltjes(ComplexPoint::new(u, v)?)?.value;
                s.push_str(&format!("{u},{v},{},{}\n", val.re, val.im));
            }
        }
        paths.push(io.out.join("stieltjes.csv"));
        write(&paths[2], &s)?;
    }
    Ok(paths)
}

fn distance(io: &Io, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut job: DistanceJob = harness::read_json(&io.config)?;
    if let Some(s) = seed {
        job.ensemble.base_seed = s;
    }
    let case = harness::run_case(&job.ensemble, job.replicates)?;
    let json = io.out.join("distance.json");
    harness::write_json(&json, &case.record)?;
    let mut paths = vec![json];
    paths.extend(harness::emit_plot_data(&case, &io.out)?);
    Ok(paths)
}

fn diag(io: &Io, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut plan: DiagPlan = harness::read_json(&io.config)?;
    if let Some(s) = seed {
        plan.ensemble.base_seed = s;
        if let Some(sw) = plan.sweep.as_mut() {
            sw.base_seed = s;
        }
    }
    let report = harness::run_diagnostics(&plan)?;
    let path = io.out.join("diag.json");
    harness::write_json(&path, &report)?;
    Ok(vec![path])
}

fn plan(io: &Io, seed: Option<u64>) -> Result<(ExperimentPlan, PathBuf)> {
    let mut plan: ExperimentPlan = harness::read_json(&io.config)?;
    if let Some(s) = seed {
        plan.base_seed = s;
    }
    Ok((plan, io.out.clone()))
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let io = match &cli.command {
        Command::Sample(io)
        | Command::Law(io)
        | Command::Distance(io)
        | Command::Diag(io)
        | Command::Rate(io)
        | Command::Sparse(io) => io,
    };
    fs::create_dir_all(&io.out).map_err(|e| Error::io(&io.out, e))?;
    match &cli.command {
        Command::Sample(io) => sample(io, cli.seed),
        Command::Law(io) => law(io),
        Command::Distance(io) => distance(io, cli.seed),
        Command::Diag(io) => diag(io, cli.seed),
        Command::Rate(io) => {
            let (p, out) = plan(io, cli.seed)?;
            harness::write_rate_outputs(&harness::run_rate_sweep(&p)?, &out)
        }
        Command::Sparse(io) => {
            let (p, out) = plan(io, cli.seed)?;
            harness::write_sparse_outputs(&harness::run_sparse_sweep(&p)?, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("mprate: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mprate: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
