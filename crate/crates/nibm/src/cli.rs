use clap::{Parser, ValueEnum};
use nibm_core::distributions::{JointDensity, MaxLaw, Precision};
use nibm_core::limit::{convergence_report, f_goe_doubled, LimitSlice};
use nibm_core::ModelKind;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::path::PathBuf;

use crate::error::{CliError, Context, Result};
use crate::grid::{parse_grid, parse_list};
use crate::montecarlo::{parallel_samples, sample_dyson_bridge, sample_single_path_max, sample_wishart_max, PathKind};
use crate::output::{emit, render_csv, render_json, Cell, Table};
use crate::validate::{run_suite, Suite};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    MaxCdf,
    JointDensity,
    ArgmaxMarginal,
    ArgmaxTail,
    TwGoe,
    LimitDensity,
    Converge,
    Simulate,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Bb,
    Be,
    Rbb,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Bb => ModelKind::BB,
            ModelArg::Be => ModelKind::BE,
            ModelArg::Rbb => ModelKind::RBB,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sampler {
    Wishart,
    Dyson,
    Bridge,
    Excursion,
    Reflected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Auto,
    Plain,
    Extended,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Auto => Precision::Auto,
            PrecisionArg::Plain => Precision::Plain,
            PrecisionArg::Extended => Precision::Extended,
        }
    }
}

/// Exact laws of the maximum and argmax of non-intersecting Brownian bridges,
/// excursions and reflected bridges.
#[derive(Clone, Debug, Parser)]
#[command(name = "nibm", version, about)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long, value_enum, default_value = "bb")]
    pub model: ModelArg,
    /// Number of paths N.
    #[arg(long = "n", default_value_t = 6)]
    pub n_paths: usize,
    /// Heights, "start:stop:step" or "auto".
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub m_grid: String,
    /// Times in (0, 1), or limit times for limit-density.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub t_grid: String,
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub eps_grid: String,
    /// Rescaled heights for the limit laws.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    pub r_grid: String,
    /// Path counts compared by `converge`.
    #[arg(long, default_value = "10,20,40")]
    pub n_list: String,
    /// Reflection-series tolerance.
    #[arg(long, default_value_t = 1e-15)]
    pub tol: f64,
    /// Base Nyström order; limit laws are also evaluated at twice this.
    #[arg(long, default_value_t = 40)]
    pub quad_order: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub precision: PrecisionArg,
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    #[arg(long, value_enum, default_value = "bridge")]
    pub sampler: Sampler,
    /// Hatted-time horizon L of the Dyson sampler.
    #[arg(long, default_value_t = 4.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.0078125)]
    pub ds: f64,
    /// Single-path grids have spacing 2^-grid_pow.
    #[arg(long, default_value_t = 12)]
    pub grid_pow: u32,
    #[arg(long, value_enum, default_value = "quick")]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; the flag wins over NIBM_THREADS, which wins over
    /// the available parallelism.
    #[arg(long, env = "NIBM_THREADS")]
    pub threads: Option<usize>,
    #[arg(long = "format", value_enum, default_value = "csv")]
    pub out_format: OutFormat,
    /// Output file; stdout when absent.
    #[arg(long = "out")]
    pub out_path: Option<PathBuf>,
}

/// A validated run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub args: Args,
    pub model: ModelKind,
}

impl RunConfig {
    pub fn new(args: Args) -> Result<Self> {
        if !(1e-16..=1e-4).contains(&args.tol) {
            return Err(CliError::Config(format!("--tol must lie in [1e-16, 1e-4], got {}", args.tol)));
        }
        if args.n_paths == 0 {
            return Err(CliError::Config("--n must be positive".into()));
        }
        if args.quad_order == 0 || args.quad_order > nibm_core::limit::MAX_ORDER {
            return Err(CliError::Config(format!("--quad-order must be in 1..={}", nibm_core::limit::MAX_ORDER)));
        }
        if args.threads == Some(0) {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        Ok(RunConfig { model: args.model.into(), args })
    }

    pub fn threads(&self) -> usize {
        self.args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// Heights: `"auto"` is `sqrt(N)` (BB) or `sqrt(2N)` (BE, RBB) plus or
    /// minus `6 N^{-1/6}`, in 100 steps, positive part only.
    pub fn m_grid(&self) -> Result<Vec<f64>> {
        if self.args.m_grid != "auto" {
            return parse_grid(&self.args.m_grid);
        }
        let n = self.args.n_paths as f64;
        let c = self.model.center(self.args.n_paths);
        let half = 6.0 * n.powf(-1.0 / 6.0);
        Ok((0..=100).map(|k| c - half + k as f64 * half / 50.0).filter(|&m| m > 0.0).collect())
    }

    pub fn t_grid(&self) -> Result<Vec<f64>> {
        match (self.args.t_grid.as_str(), self.args.command) {
            ("auto", Command::LimitDensity | Command::Converge) => Ok(linspace(-3.0, 3.0, 61)),
            ("auto", _) => Ok(linspace(0.05, 0.95, 91)),
            (s, _) => parse_grid(s),
        }
    }

    pub fn eps_grid(&self) -> Result<Vec<f64>> {
        match self.args.eps_grid.as_str() {
            "auto" => Ok(linspace(0.02, 0.46, 23)),
            s => parse_grid(s),
        }
    }

    pub fn r_grid(&self) -> Result<Vec<f64>> {
        match self.args.r_grid.as_str() {
            "auto" => Ok(linspace(-6.0, 4.0, 101)),
            s => parse_grid(s),
        }
    }

    /// Command line reproducing this run (thread count and output path do
    /// not affect the content and are left out).
    pub fn echo(&self) -> String {
        let a = &self.args;
        let name = |v: &dyn ValueEnumName| v.name();
        format!(
            "nibm {VERSION} {} --model {} --n {} --m-grid {} --t-grid {} --eps-grid {} --r-grid {} \
             --n-list {} --tol {:e} --quad-order {} --precision {} --mc-samples {} --sampler {} \
             --horizon {} --ds {} --grid-pow {} --suite {} --seed {} --format {}",
            name(&a.command),
            name(&a.model),
            a.n_paths,
            a.m_grid,
            a.t_grid,
            a.eps_grid,
            a.r_grid,
            a.n_list,
            a.tol,
            a.quad_order,
            name(&a.precision),
            a.mc_samples,
            name(&a.sampler),
            a.horizon,
            a.ds,
            a.grid_pow,
            name(&a.suite),
            a.seed,
            name(&a.out_format),
        )
    }

    fn meta(&self) -> Value {
        let a = &self.args;
        json!({
            "command": ValueEnumName::name(&a.command),
            "model": ValueEnumName::name(&a.model),
            "N": a.n_paths,
            "seed": a.seed,
            "version": VERSION,
            "tolerances": {
                "series": a.tol,
                "quad_order": a.quad_order,
                "precision": ValueEnumName::name(&a.precision),
            },
            "echo": self.echo(),
        })
    }
}

trait ValueEnumName {
    fn name(&self) -> String;
}

impl<T: ValueEnum> ValueEnumName for T {
    fn name(&self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Computes the table for a run; nothing is written.
pub fn compute(cfg: &RunConfig) -> Result<Table> {
    let a = &cfg.args;
    let model = cfg.model;
    let n = a.n_paths;
    match a.command {
        Command::MaxCdf => {
            let law = MaxLaw::new(model, n)?.with_tolerance(a.tol)?;
            let grid = cfg.m_grid()?;
            let values: Vec<f64> =
                grid.par_iter().map(|&m| law.cdf(m).at(|| format!("max-cdf at m={m}"))).collect::<Result<_>>()?;
            let mut t = Table::new(&["m", "cdf"]);
            for (m, v) in grid.iter().zip(values) {
                t.push(vec![(*m).into(), v.into()]);
            }
            Ok(t)
        }
        Command::JointDensity => {
            let ev = JointDensity::new(model, n)?.with_precision(a.precision.into());
            let (ms, ts) = (cfg.m_grid()?, cfg.t_grid()?);
            let rows: Vec<Vec<f64>> = ms
                .par_iter()
                .map(|&m| {
                    let s = ev.slice(m).at(|| format!("joint-density at m={m}"))?;
                    ts.iter().map(|&t| s.density(t).at(|| format!("joint-density at m={m}, t={t}"))).collect()
                })
                .collect::<Result<_>>()?;
            let mut t = Table::new(&["m", "t", "density"]);
            for (m, row) in ms.iter().zip(rows) {
                for (tt, v) in ts.iter().zip(row) {
                    t.push(vec![(*m).into(), (*tt).into(), v.into()]);
                }
            }
            Ok(t)
        }
        Command::ArgmaxMarginal => {
            let ev = JointDensity::new(model, n)?.with_precision(a.precision.into());
            let ts = cfg.t_grid()?;
            let values: Vec<f64> = ts
                .par_iter()
                .map(|&t| ev.argmax_marginal(t).at(|| format!("argmax-marginal at t={t}")))
                .collect::<Result<_>>()?;
            let mut t = Table::new(&["t", "density"]);
            for (tt, v) in ts.iter().zip(values) {
                t.push(vec![(*tt).into(), v.into()]);
            }
            Ok(t)
        }
        Command::ArgmaxTail => {
            let ev = JointDensity::new(model, n)?.with_precision(a.precision.into());
            let eps = cfg.eps_grid()?;
            let p = ev.argmax_tails(&eps).at(|| format!("argmax-tail at N={n}"))?;
            let mut t = Table::new(&["epsilon", "probability"]);
            for (e, v) in eps.iter().zip(p) {
                t.push(vec![(*e).into(), v.into()]);
            }
            Ok(t)
        }
        Command::TwGoe => {
            let ms = cfg.m_grid_or_default(-6.0, 4.0)?;
            let values: Vec<_> = ms
                .par_iter()
                .map(|&m| f_goe_doubled(m, a.quad_order).at(|| format!("tw-goe at m={m}")))
                .collect::<Result<_>>()?;
            let mut t = Table::new(&["m", "cdf", "defect"]);
            for (m, d) in ms.iter().zip(values) {
                t.push(vec![(*m).into(), d.value.into(), d.defect.into()]);
            }
            Ok(t)
        }
        Command::LimitDensity => {
            let (rs, ts) = (cfg.r_grid()?, cfg.t_grid()?);
            let rows: Vec<Vec<f64>> = rs
                .par_iter()
                .map(|&r| {
                    let s = LimitSlice::new(r, 2 * a.quad_order).at(|| format!("limit-density at r={r}"))?;
                    ts.iter().map(|&t| s.density(t).at(|| format!("limit-density at r={r}, t={t}"))).collect()
                })
                .collect::<Result<_>>()?;
            let mut t = Table::new(&["r", "t", "density"]);
            for (r, row) in rs.iter().zip(rows) {
                for (tt, v) in ts.iter().zip(row) {
                    t.push(vec![(*r).into(), (*tt).into(), v.into()]);
                }
            }
            Ok(t)
        }
        Command::Converge => {
            let ns = parse_list(&a.n_list)?;
            let report = convergence_report(model, &ns, &cfg.r_grid()?, &cfg.t_grid()?)
                .at(|| format!("converge over N={}", a.n_list))?;
            let mut t = Table::new(&["label", "n", "density_sup_deviation", "cdf_sup_deviation"]);
            for row in report.rows {
                let n = row.n_paths.map_or(Cell::Text(String::new()), Cell::from);
                t.push(vec![row.label.into(), n, row.density_sup_deviation.into(), row.cdf_sup_deviation.into()]);
            }
            Ok(t)
        }
        Command::Simulate => simulate(cfg),
        Command::Validate => run_suite(a.suite, a.seed),
    }
}

impl RunConfig {
    fn m_grid_or_default(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        match self.args.m_grid.as_str() {
            "auto" => Ok(linspace(lo, hi, 101)),
            s => parse_grid(s),
        }
    }
}

fn simulate(cfg: &RunConfig) -> Result<Table> {
    let a = &cfg.args;
    let count = a.mc_samples;
    match a.sampler {
        Sampler::Wishart => {
            let xs = parallel_samples(count, a.seed, |rng| sample_wishart_max(a.n_paths, rng))?;
            let mut t = Table::new(&["sample", "lambda_max"]);
            for (i, x) in xs.into_iter().enumerate() {
                t.push(vec![i.into(), x.into()]);
            }
            Ok(t)
        }
        Sampler::Dyson => {
            let xs = parallel_samples(count, a.seed, |rng| {
                sample_dyson_bridge(a.n_paths, a.horizon, a.ds, rng).map(|p| (p.realized_max, p.realized_argmax_u))
            })?;
            let mut t = Table::new(&["sample", "max", "argmax"]);
            for (i, (m, u)) in xs.into_iter().enumerate() {
                t.push(vec![i.into(), m.into(), u.into()]);
            }
            Ok(t)
        }
        kind => {
            if a.n_paths != 1 {
                return Err(CliError::Config("single-path samplers need --n 1".into()));
            }
            let kind = match kind {
                Sampler::Bridge => PathKind::Bridge,
                Sampler::Excursion => PathKind::Excursion,
                _ => PathKind::Reflected,
            };
            let xs = parallel_samples(count, a.seed, |rng| sample_single_path_max(kind, a.grid_pow, rng))?;
            let mut t = Table::new(&["sample", "max", "argmax"]);
            for (i, (m, u)) in xs.into_iter().enumerate() {
                t.push(vec![i.into(), m.into(), u.into()]);
            }
            Ok(t)
        }
    }
}

pub fn render(cfg: &RunConfig, table: &Table) -> String {
    match cfg.args.out_format {
        OutFormat::Csv => render_csv(&cfg.echo(), table),
        OutFormat::Json => render_json(cfg.meta(), table),
    }
}

/// Computes and writes one run. A failed validation suite still writes
/// its report before returning the error.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads())
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let table = pool.install(|| compute(cfg))?;
    emit(cfg.args.out_path.as_deref(), &render(cfg, &table))?;
    if cfg.args.command == Command::Validate {
        let failed = table.column("passed").map_or(0, |c| c.iter().filter(|v| matches!(v, Cell::Bool(false))).count());
        if failed > 0 {
            return Err(CliError::Validation(failed));
        }
    }
    Ok(())
}

/// Parses `argv` and runs; returns the process exit status.
pub fn main_with_args(argv: impl IntoIterator<Item = String>) -> i32 {
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match RunConfig::new(args).and_then(|cfg| run(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nibm: {e}");
            e.exit_code()
        }
    }
}
