//! Batch study: truths × exposures × calibration strategies, posterior
//! summaries and distance tables.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! summary.csv                 one row per cell (deterministic under the seed)
//! distances.csv               Table-2 style pivot: metric rows, strategy columns
//! timings.csv                 wall time per cell
//! lambda01_n500/events.txt
//! lambda01_n500/empirical/{trace.csv, lambda_grid.csv, bands.csv}
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_measure::{BaseMeasure, DEFAULT_SHAPE};
use crate::calibration::{gamma_fixed, gamma_hat};
use crate::error::{Error, Result};
use crate::gibbs::{run_chain, write_grid_matrix, ArProposal, ChainConfig, ChainTrace};
use crate::grid::{Grid, GridFunction};
use crate::intensity::{Intensity, TruthId, TruthIntensity, DEFAULT_HORIZON};
use crate::mixture::{HyperPriors, HyperState, Strategy};
use crate::point_process::{simulate_truth, PointProcessSample};
use crate::quadrature::trapezoid;
use crate::rng::derive_seed;
use crate::stats::quantile_sorted;

pub const STUDY_GRID_POINTS: usize = 4096;
pub const DEFAULT_SWEEPS: usize = 5000;
pub const DEFAULT_BURN_IN: usize = 2500;
pub const DEFAULT_QUANTILES: (f64, f64) = (0.1, 0.9);

/// Pointwise posterior median and credible band.
#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub low: GridFunction,
    pub median: GridFunction,
    pub high: GridFunction,
}

/// Pointwise median and `quantiles` of the draws (rows) at each grid point.
pub fn summarize(grid: &Grid, draws: &[Vec<f64>], quantiles: (f64, f64)) -> Result<Bands> {
    if draws.is_empty() {
        return Err(Error::domain("cannot summarize an empty trace"));
    }
    if draws.iter().any(|d| d.len() != grid.len) {
        return Err(Error::GridMismatch("draw length differs from grid".into()));
    }
    let (q_lo, q_hi) = quantiles;
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) || q_lo > q_hi {
        return Err(Error::config(format!("bad quantile pair ({q_lo}, {q_hi})")));
    }
    let mut low = Vec::with_capacity(grid.len);
    let mut median = Vec::with_capacity(grid.len);
    let mut high = Vec::with_capacity(grid.len);
    let mut column = vec![0.0; draws.len()];
    for j in 0..grid.len {
        for (c, d) in column.iter_mut().zip(draws) {
            *c = d[j];
        }
        column.sort_by(f64::total_cmp);
        low.push(quantile_sorted(&column, q_lo));
        median.push(quantile_sorted(&column, 0.5));
        high.push(quantile_sorted(&column, q_hi));
    }
    Ok(Bands {
        low: GridFunction::new(*grid, low)?,
        median: GridFunction::new(*grid, median)?,
        high: GridFunction::new(*grid, high)?,
    })
}

pub fn summarize_trace(trace: &ChainTrace, quantiles: (f64, f64)) -> Result<Bands> {
    summarize(&trace.grid, &trace.bar_lambda, quantiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distance {
    L1,
    /// `∫(f − g)²`.
    L2Squared,
    L2,
    Sup,
}

pub fn distance(f: &GridFunction, g: &GridFunction, which: Distance) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", f.grid, g.grid)));
    }
    let h = f.grid.step();
    let diff = f.values.iter().zip(&g.values).map(|(a, b)| a - b);
    Ok(match which {
        Distance::L1 => trapezoid(&diff.map(f64::abs).collect::<Vec<_>>(), h),
        Distance::L2Squared => trapezoid(&diff.map(|d| d * d).collect::<Vec<_>>(), h),
        Distance::L2 => trapezoid(&diff.map(|d| d * d).collect::<Vec<_>>(), h).sqrt(),
        Distance::Sup => diff.map(f64::abs).fold(0.0, f64::max),
    })
}

/// Normalized truth on a grid.
pub fn truth_on_grid(id: TruthId, grid: &Grid) -> GridFunction {
    let bar = TruthIntensity::new(id).normalized();
    grid.sample(|t| bar.rate(t))
}

// ---------------------------------------------------------------------------
// Strategies

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    Empirical,
    Fixed,
    Hierarchical,
    Hierarchical2,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Empirical,
        StrategyKind::Fixed,
        StrategyKind::Hierarchical,
        StrategyKind::Hierarchical2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::Empirical => "empirical",
            StrategyKind::Fixed => "fixed",
            StrategyKind::Hierarchical => "hier",
            StrategyKind::Hierarchical2 => "hier2",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "empirical" | "empirical_bayes" | "eb" => Ok(StrategyKind::Empirical),
            "fixed" | "fixed_gamma" => Ok(StrategyKind::Fixed),
            "hier" | "hierarchical" => Ok(StrategyKind::Hierarchical),
            "hier2" | "hierarchical2" => Ok(StrategyKind::Hierarchical2),
            other => Err(Error::config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Perturbation factor of the fixed-γ strategy, per truth.
pub fn default_rho(truth: TruthId) -> f64 {
    match truth {
        TruthId::Lambda01 => 0.01,
        TruthId::Lambda02 => 100.0,
        TruthId::Lambda03 => 30.0,
    }
}

/// Prior standard deviation of γ for the two hierarchical strategies.
pub fn default_sigma_gamma(truth: TruthId, narrow: bool) -> f64 {
    match (truth, narrow) {
        (TruthId::Lambda01, false) => 0.005,
        (TruthId::Lambda01, true) => 0.001,
        (_, false) => 0.1,
        (_, true) => 0.01,
    }
}

/// A strategy with its parameter resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StudyStrategy {
    Empirical,
    Fixed { rho: f64 },
    Hierarchical { sigma: f64 },
    Hierarchical2 { sigma: f64 },
}

impl StudyStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StudyStrategy::Empirical => StrategyKind::Empirical,
            StudyStrategy::Fixed { .. } => StrategyKind::Fixed,
            StudyStrategy::Hierarchical { .. } => StrategyKind::Hierarchical,
            StudyStrategy::Hierarchical2 { .. } => StrategyKind::Hierarchical2,
        }
    }

    /// Initial hyperparameters for a dataset.
    pub fn hyper(&self, truth: Option<TruthId>, sample: &PointProcessSample, shape: f64, priors: HyperPriors) -> Result<HyperState> {
        let horizon = sample.horizon;
        match *self {
            StudyStrategy::Empirical => {
                let g = gamma_hat(sample, shape, horizon)?.gamma;
                HyperState::initial(Strategy::EmpiricalBayes, g, priors)
            }
            StudyStrategy::Fixed { rho } => {
                let truth = truth.ok_or_else(|| {
                    Error::UnsupportedStrategy("the fixed-gamma rule needs a known truth".into())
                })?;
                HyperState::initial(Strategy::FixedGamma, gamma_fixed(rho, truth, shape, horizon)?, priors)
            }
            StudyStrategy::Hierarchical { sigma } | StudyStrategy::Hierarchical2 { sigma } => {
                let g = gamma_hat(sample, shape, horizon)?.gamma;
                HyperState::initial(Strategy::Hierarchical, g, priors.with_gamma_moments(g, sigma)?)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truths: Vec<TruthId>,
    pub ns: Vec<u64>,
    pub strategies: Vec<StrategyKind>,
    /// Overrides of the per-truth defaults.
    pub rho: Option<f64>,
    pub sigma_gamma: Option<f64>,
    pub sigma_gamma2: Option<f64>,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub zeta: f64,
    pub shape: f64,
    pub grid_points: usize,
    /// Grid and row stride of the exported `lambda_grid.csv`.
    pub export_points: usize,
    pub export_thin: usize,
    pub quantiles: (f64, f64),
    pub ar_proposal: ArProposal,
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truths: TruthId::ALL.to_vec(),
            ns: vec![500, 1000, 2000],
            strategies: StrategyKind::ALL.to_vec(),
            rho: None,
            sigma_gamma: None,
            sigma_gamma2: None,
            n_iter: DEFAULT_SWEEPS,
            burn_in: DEFAULT_BURN_IN,
            thin: 1,
            zeta: 1.0,
            shape: DEFAULT_SHAPE,
            grid_points: STUDY_GRID_POINTS,
            export_points: 257,
            export_thin: 1,
            quantiles: DEFAULT_QUANTILES,
            ar_proposal: ArProposal::Adaptive,
            master_seed: 20_150_901,
            threads: None,
            out_dir: PathBuf::from("study_out"),
        }
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl ExperimentConfig {
    /// Sets one `key = value` entry; keys mirror the command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::config(format!("{key}: cannot parse '{value}' as {what}"));
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "truths" | "truth" => self.truths = parse_list(v)?,
            "n" | "ns" => self.ns = parse_list(v).map_err(|_| bad("integers"))?,
            "strategies" | "strategy" => self.strategies = parse_list(v)?,
            "rho" => self.rho = Some(v.parse().map_err(|_| bad("number"))?),
            "sigma_gamma" => self.sigma_gamma = Some(v.parse().map_err(|_| bad("number"))?),
            "sigma_gamma2" => self.sigma_gamma2 = Some(v.parse().map_err(|_| bad("number"))?),
            "sweeps" | "n_iter" => self.n_iter = v.parse().map_err(|_| bad("integer"))?,
            "burn_in" => self.burn_in = v.parse().map_err(|_| bad("integer"))?,
            "thin" => self.thin = v.parse().map_err(|_| bad("integer"))?,
            "zeta" => self.zeta = v.parse().map_err(|_| bad("number"))?,
            "shape" => self.shape = v.parse().map_err(|_| bad("number"))?,
            "grid_points" => self.grid_points = v.parse().map_err(|_| bad("integer"))?,
            "export_points" => self.export_points = v.parse().map_err(|_| bad("integer"))?,
            "export_thin" => self.export_thin = v.parse().map_err(|_| bad("integer"))?,
            "quantile_low" => self.quantiles.0 = v.parse().map_err(|_| bad("number"))?,
            "quantile_high" => self.quantiles.1 = v.parse().map_err(|_| bad("number"))?,
            "ar_proposal" => {
                self.ar_proposal = match v {
                    "adaptive" => ArProposal::Adaptive,
                    "base" | "base_measure" => ArProposal::BaseMeasure,
                    _ => return Err(bad("'adaptive' or 'base'")),
                }
            }
            "seed" | "master_seed" => self.master_seed = v.parse().map_err(|_| bad("integer"))?,
            "threads" => self.threads = Some(v.parse().map_err(|_| bad("integer"))?),
            "out" | "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(Error::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document (`#` starts a comment).
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(&fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.truths.is_empty() || self.ns.is_empty() || self.strategies.is_empty() {
            return Err(Error::config("truths, n and strategies must be non-empty"));
        }
        if self.ns.contains(&0) {
            return Err(Error::config("n values must be positive"));
        }
        for (name, v) in [("rho", self.rho), ("sigma_gamma", self.sigma_gamma), ("sigma_gamma2", self.sigma_gamma2)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{name} must be positive")));
                }
            }
        }
        if self.grid_points < 2 || self.export_points < 2 || self.export_thin == 0 {
            return Err(Error::config("grids need at least 2 points and export_thin >= 1"));
        }
        self.chain_config(0)?.validate()
    }

    pub fn resolve(&self, kind: StrategyKind, truth: TruthId) -> StudyStrategy {
        self.resolve_for(kind, Some(truth)).expect("defaults exist for every truth")
    }

    /// Like [`resolve`](Self::resolve), but for data of unknown origin the
    /// strategy parameter must be given explicitly.
    pub fn resolve_for(&self, kind: StrategyKind, truth: Option<TruthId>) -> Result<StudyStrategy> {
        let pick = |given: Option<f64>, default: fn(TruthId) -> f64, key: &str| {
            given
                .or_else(|| truth.map(default))
                .ok_or_else(|| Error::config(format!("{key} is required when the truth is unknown")))
        };
        Ok(match kind {
            StrategyKind::Empirical => StudyStrategy::Empirical,
            StrategyKind::Fixed => StudyStrategy::Fixed {
                rho: pick(self.rho, default_rho, "rho")?,
            },
            StrategyKind::Hierarchical => StudyStrategy::Hierarchical {
                sigma: pick(self.sigma_gamma, |t| default_sigma_gamma(t, false), "sigma_gamma")?,
            },
            StrategyKind::Hierarchical2 => StudyStrategy::Hierarchical2 {
                sigma: pick(self.sigma_gamma2, |t| default_sigma_gamma(t, true), "sigma_gamma2")?,
            },
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(0.0, DEFAULT_HORIZON, self.grid_points)
    }

    pub fn chain_config(&self, seed: u64) -> Result<ChainConfig> {
        let mut c = ChainConfig::new(self.n_iter, self.burn_in, seed, self.grid()?);
        c.thin = self.thin;
        c.zeta = self.zeta;
        c.proposal = self.ar_proposal;
        Ok(c)
    }
}

pub fn dataset_seed(master: u64, truth: TruthId, n: u64) -> u64 {
    derive_seed(master, &[truth.index(), n])
}

pub fn chain_seed(master: u64, truth: TruthId, n: u64, kind: StrategyKind) -> u64 {
    derive_seed(master, &[truth.index(), n, 1000 + kind.index()])
}

// ---------------------------------------------------------------------------
// Study

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub truth: Option<TruthId>,
    pub n: u64,
    pub n_events: usize,
    pub strategy: StrategyKind,
    /// γ̂, γ₀, or the prior mean of γ, depending on the strategy.
    pub gamma: f64,
    pub status: String,
    pub l1: f64,
    pub l2: f64,
    pub l2_squared: f64,
    pub sup: f64,
    pub mean_k_nonempty: f64,
    pub mean_mass: f64,
    pub wall_time_s: f64,
}

impl SummaryRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn distance(&self, which: Distance) -> f64 {
        match which {
            Distance::L1 => self.l1,
            Distance::L2 => self.l2,
            Distance::L2Squared => self.l2_squared,
            Distance::Sup => self.sup,
        }
    }
}

pub fn dataset_dir(out: &Path, truth: TruthId, n: u64) -> PathBuf {
    out.join(format!("{truth}_n{n}"))
}

pub fn write_bands_csv(path: &Path, bands: &Bands, truth: Option<&GridFunction>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,low,median,high,truth")?;
    for (i, t) in bands.median.grid.points().enumerate() {
        let tv = truth.map(|g| g.values[i].to_string()).unwrap_or_default();
        writeln!(
            out,
            "{t},{},{},{},{tv}",
            bands.low.values[i], bands.median.values[i], bands.high.values[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Posterior draws restricted to a coarser grid and every `thin`-th row.
fn export_grid(trace: &ChainTrace, points: usize, thin: usize, path: &Path) -> Result<()> {
    let fine = &trace.grid;
    let coarse = Grid::new(fine.start, fine.end, points)?;
    // Snapped onto the fine grid so the exported values are exact draws.
    let idx: Vec<usize> = coarse
        .points()
        .map(|t| (((t - fine.start) / fine.step()).round() as usize).min(fine.len - 1))
        .collect();
    let rows: Vec<(usize, Vec<f64>)> = trace
        .rows
        .iter()
        .zip(&trace.bar_lambda)
        .step_by(thin)
        .map(|(r, v)| (r.sweep, idx.iter().map(|&i| v[i]).collect()))
        .collect();
    let values: Vec<Vec<f64>> = rows.iter().map(|(_, v)| v.clone()).collect();
    write_grid_matrix(path, &coarse, rows.iter().map(|(s, _)| *s), &values)
}

/// A fitted chain with its summaries.
pub struct Fit {
    pub strategy: StudyStrategy,
    pub hyper: HyperState,
    pub trace: ChainTrace,
    pub bands: Bands,
}

/// Calibrates `kind` on `sample` and runs the chain with `seed`.
pub fn fit_sample(
    config: &ExperimentConfig,
    sample: &PointProcessSample,
    truth: Option<TruthId>,
    kind: StrategyKind,
    seed: u64,
) -> Result<Fit> {
    let strategy = config.resolve_for(kind, truth)?;
    let hyper = strategy.hyper(truth, sample, config.shape, HyperPriors::default())?;
    let base = BaseMeasure::inv_shifted_gamma(config.shape, hyper.gamma, sample.horizon)?;
    let mut chain = config.chain_config(seed)?;
    if sample.horizon != DEFAULT_HORIZON {
        chain.record_grid = Grid::new(0.0, sample.horizon, config.grid_points)?;
    }
    let trace = run_chain(&sample.events, sample.n as f64, &chain, hyper, &base)?;
    let bands = summarize_trace(&trace, config.quantiles)?;
    Ok(Fit { strategy, hyper, trace, bands })
}

/// Writes `trace.csv`, `lambda_grid.csv` and `bands.csv` into `dir`.
pub fn write_fit(config: &ExperimentConfig, fit: &Fit, truth: Option<&GridFunction>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fit.trace.write_csv(&dir.join("trace.csv"))?;
    export_grid(&fit.trace, config.export_points, config.export_thin, &dir.join("lambda_grid.csv"))?;
    write_bands_csv(&dir.join("bands.csv"), &fit.bands, truth)
}

/// Runs one (dataset, strategy) cell and writes its artifacts.
pub fn run_cell(
    config: &ExperimentConfig,
    sample: &PointProcessSample,
    truth: TruthId,
    kind: StrategyKind,
    dir: &Path,
) -> Result<SummaryRecord> {
    let start = Instant::now();
    let seed = chain_seed(config.master_seed, truth, sample.n, kind);
    let fit = fit_sample(config, sample, Some(truth), kind, seed)?;
    write_fit(config, &fit, Some(&truth_on_grid(truth, &fit.trace.grid)), dir)?;
    summary_record(&fit, sample, Some(truth), start.elapsed().as_secs_f64())
}

fn failed_record(sample: &PointProcessSample, truth: TruthId, kind: StrategyKind, err: &Error, secs: f64) -> SummaryRecord {
    SummaryRecord {
        truth: Some(truth),
        n: sample.n,
        n_events: sample.len(),
        strategy: kind,
        gamma: f64::NAN,
        status: format!("error: {err}").replace([',', '\n'], ";"),
        l1: f64::NAN,
        l2: f64::NAN,
        l2_squared: f64::NAN,
        sup: f64::NAN,
        mean_k_nonempty: f64::NAN,
        mean_mass: f64::NAN,
        wall_time_s: secs,
    }
}

/// Runs every cell of the study in parallel; cell failures are recorded in
/// the summary rather than aborting the study.
pub fn run_study(config: &ExperimentConfig) -> Result<Vec<SummaryRecord>> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let mut datasets = Vec::new();
    for &truth in &config.truths {
        for &n in &config.ns {
            let sample = simulate_truth(truth, n, dataset_seed(config.master_seed, truth, n))?;
            let dir = dataset_dir(&config.out_dir, truth, n);
            fs::create_dir_all(&dir)?;
            sample.save(&dir.join("events.txt"))?;
            datasets.push((truth, sample, dir));
        }
    }
    let cells: Vec<(usize, StrategyKind)> = (0..datasets.len())
        .flat_map(|d| config.strategies.iter().map(move |&k| (d, k)))
        .collect();
    let work = || {
        cells
            .par_iter()
            .map(|&(d, kind)| {
                let (truth, sample, dir) = &datasets[d];
                let start = Instant::now();
                log::info!("cell {truth} n={} {kind}: start", sample.n);
                let rec = run_cell(config, sample, *truth, kind, &dir.join(kind.label())).unwrap_or_else(|e| {
                    log::error!("cell {truth} n={} {kind} failed: {e}", sample.n);
                    failed_record(sample, *truth, kind, &e, start.elapsed().as_secs_f64())
                });
                log::info!("cell {truth} n={} {kind}: {} in {:.1}s", sample.n, rec.status, rec.wall_time_s);
                rec
            })
            .collect::<Vec<_>>()
    };
    let records = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::config(e.to_string()))?
            .install(work),
        None => work(),
    };
    write_summary_csv(&config.out_dir.join("summary.csv"), &records)?;
    write_distance_table(&config.out_dir.join("distances.csv"), &records, &config.strategies)?;
    write_timings_csv(&config.out_dir.join("timings.csv"), &records)?;
    Ok(records)
}

fn truth_label(t: Option<TruthId>) -> String {
    t.map_or_else(|| "-".into(), |t| t.to_string())
}

/// Summary of a fit; distances are NaN when the truth is unknown.
pub fn summary_record(fit: &Fit, sample: &PointProcessSample, truth: Option<TruthId>, wall_time_s: f64) -> Result<SummaryRecord> {
    let mut d = [f64::NAN; 4];
    if let Some(t) = truth {
        let g = truth_on_grid(t, &fit.trace.grid);
        for (slot, w) in d.iter_mut().zip([Distance::L1, Distance::L2, Distance::L2Squared, Distance::Sup]) {
            *slot = distance(&fit.bands.median, &g, w)?;
        }
    }
    Ok(SummaryRecord {
        truth,
        n: sample.n,
        n_events: sample.len(),
        strategy: fit.strategy.kind(),
        gamma: fit.hyper.gamma,
        status: "ok".into(),
        l1: d[0],
        l2: d[1],
        l2_squared: d[2],
        sup: d[3],
        mean_k_nonempty: fit.trace.mean_k_nonempty(),
        mean_mass: fit.trace.mean_mass(),
        wall_time_s,
    })
}

pub fn write_summary_csv(path: &Path, records: &[SummaryRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "truth,n,N_T,strategy,gamma,status,L1,L2,L2_squared,sup,mean_K_nonempty,mean_M")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            truth_label(r.truth), r.n, r.n_events, r.strategy, r.gamma, r.status, r.l1, r.l2, r.l2_squared, r.sup, r.mean_k_nonempty, r.mean_mass
        )?;
    }
    out.flush()?;
    Ok(())
}

fn write_timings_csv(path: &Path, records: &[SummaryRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "truth,n,strategy,wall_time_s")?;
    for r in records {
        writeln!(out, "{},{},{},{:.3}", truth_label(r.truth), r.n, r.strategy, r.wall_time_s)?;
    }
    out.flush()?;
    Ok(())
}

/// Distances in wide form: one row per (metric, truth, n),
/// one column per strategy.
pub fn write_distance_table(path: &Path, records: &[SummaryRecord], strategies: &[StrategyKind]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "metric,truth,n")?;
    for s in strategies {
        write!(out, ",{s}")?;
    }
    writeln!(out)?;
    let mut keys: Vec<(Option<TruthId>, u64)> = records.iter().map(|r| (r.truth, r.n)).collect();
    keys.dedup();
    for (name, which) in [("L1", Distance::L1), ("L2_squared", Distance::L2Squared), ("sup", Distance::Sup)] {
        for &(truth, n) in &keys {
            write!(out, "{name},{},{n}", truth_label(truth))?;
            for s in strategies {
                let v = records
                    .iter()
                    .find(|r| r.truth == truth && r.n == n && r.strategy == *s)
                    .map(|r| r.distance(which))
                    .unwrap_or(f64::NAN);
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf(grid: Grid, f: impl Fn(f64) -> f64) -> GridFunction {
        grid.sample(f)
    }

    #[test]
    fn constant_trace_bands_collapse() {
        let grid = Grid::new(0.0, 8.0, 11).unwrap();
        let row: Vec<f64> = grid.points().map(|t| 1.0 - t / 10.0).collect();
        let b = summarize(&grid, &vec![row.clone(); 5], (0.1, 0.9)).unwrap();
        assert_eq!(b.low.values, row);
        assert_eq!(b.median.values, row);
        assert_eq!(b.high.values, row);
    }

    #[test]
    fn two_draw_median_is_midpoint() {
        let grid = Grid::new(0.0, 1.0, 3).unwrap();
        let b = summarize(&grid, &[vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 0.0]], (0.1, 0.9)).unwrap();
        assert_eq!(b.median.values, vec![2.0, 2.0, 1.5]);
        for i in 0..3 {
            assert!(b.low.values[i] <= b.median.values[i] && b.median.values[i] <= b.high.values[i]);
        }
        assert!(summarize(&grid, &[], (0.1, 0.9)).is_err());
    }

    #[test]
    fn distances() {
        let grid = Grid::new(0.0, 8.0, 4096).unwrap();
        let f = gf(grid, |t| 0.3 - 0.01 * t);
        for w in [Distance::L1, Distance::L2, Distance::L2Squared, Distance::Sup] {
            assert_eq!(distance(&f, &f, w).unwrap(), 0.0);
        }
        let g = gf(grid, |t| 0.3 - 0.01 * t + 0.05);
        assert!((distance(&f, &g, Distance::L1).unwrap() - 0.4).abs() < 1e-12);
        assert!((distance(&f, &g, Distance::Sup).unwrap() - 0.05).abs() < 1e-15);
        assert!((distance(&f, &g, Distance::L2Squared).unwrap() - 0.02).abs() < 1e-12);
        let other = gf(Grid::new(0.0, 8.0, 100).unwrap(), |_| 0.0);
        assert!(matches!(distance(&f, &other, Distance::L1), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn piecewise_pair_against_analytic_integral() {
        // f − g = 1{t < 3}·(3 − t)/9 − 1{t ≥ 3}·(t − 3)/25: |·| integrates to
        // 9/18 + 25/50 = 1, squared to 27/243 + 125/1875.
        let grid = Grid::new(0.0, 8.0, 10_000).unwrap();
        let f = gf(grid, |t| if t < 3.0 { (3.0 - t) / 9.0 } else { -(t - 3.0) / 25.0 });
        let zero = gf(grid, |_| 0.0);
        assert!((distance(&f, &zero, Distance::L1).unwrap() - 1.0).abs() < 1e-3);
        let l2sq = 27.0 / 243.0 + 125.0 / 1875.0;
        assert!((distance(&f, &zero, Distance::L2Squared).unwrap() - l2sq).abs() < 1e-3);
    }

    #[test]
    fn config_parsing() {
        let mut c = ExperimentConfig::default();
        c.apply_kv(
            "# study\ntruths = lambda01, lambda03\nn = 500\nstrategies = empirical,hier2\nsweeps = 100\nburn_in = 50 # half\nseed = 7\nrho = 3\n",
        )
        .unwrap();
        assert_eq!(c.truths, vec![TruthId::Lambda01, TruthId::Lambda03]);
        assert_eq!(c.ns, vec![500]);
        assert_eq!(c.strategies, vec![StrategyKind::Empirical, StrategyKind::Hierarchical2]);
        assert_eq!((c.n_iter, c.burn_in, c.master_seed), (100, 50, 7));
        c.validate().unwrap();
        assert!(c.apply_kv("bogus = 1").is_err());
        assert!(c.apply_kv("sweeps = many").is_err());
        assert!(c.apply_kv("no equals sign").is_err());
        c.rho = Some(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn strategy_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.resolve(StrategyKind::Fixed, TruthId::Lambda02), StudyStrategy::Fixed { rho: 100.0 });
        assert_eq!(
            c.resolve(StrategyKind::Hierarchical2, TruthId::Lambda01),
            StudyStrategy::Hierarchical2 { sigma: 0.001 }
        );
    }

    #[test]
    fn hierarchical_prior_moments() {
        let sample = simulate_truth(TruthId::Lambda02, 500, 3).unwrap();
        let h = StudyStrategy::Hierarchical { sigma: 0.1 }
            .hyper(Some(TruthId::Lambda02), &sample, 2.0, HyperPriors::default())
            .unwrap();
        let g = gamma_hat(&sample, 2.0, 8.0).unwrap().gamma;
        let p = h.priors;
        assert!((p.a_gamma / p.b_gamma - g).abs() < 1e-12);
        assert!((p.a_gamma / p.b_gamma.powi(2) - 0.01).abs() < 1e-12);
        assert!((h.gamma - g).abs() < 1e-12 * g);
    }

    #[test]
    fn seeds_depend_on_cell() {
        let a = dataset_seed(1, TruthId::Lambda01, 500);
        assert_eq!(a, dataset_seed(1, TruthId::Lambda01, 500));
        assert_ne!(a, dataset_seed(1, TruthId::Lambda02, 500));
        assert_ne!(a, dataset_seed(1, TruthId::Lambda01, 1000));
        assert_ne!(a, dataset_seed(2, TruthId::Lambda01, 500));
    }
}
