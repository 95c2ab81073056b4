//! Dirichlet-process location mixture of Gaussians with a shared scale,
//! empirical-Bayes base measure and a slice Gibbs sampler.
//!
//! `F ~ DP(α N(m, s²))`, `x_i | θ_i, σ ~ N(θ_i, σ²)`, `σ² ~ IG(ν₁, ν₂)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{allocate_with_kernel, update_slices, update_weights, write_grid_matrix};
use crate::grid::{Grid, GridFunction};
use crate::mixture::{stick_keep, MixtureState};
use crate::rng::stream;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Normal density with standard deviation `sigma`.
pub fn normal_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    INV_SQRT_2PI / sigma * (-0.5 * z * z).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBase {
    pub mean: f64,
    pub var: f64,
}

impl GaussianBase {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
            return Err(Error::domain(format!("N({mean}, {var}) needs a positive finite variance")));
        }
        Ok(Self { mean, var })
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Normal::new(self.mean, self.sd()).expect("valid normal").sample(rng)
    }
}

/// How the empirical-Bayes scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EbVariant {
    /// `(X̄, S²)` with divisor `n`.
    #[default]
    Moments,
    /// `(X̄, R²)` with `R` the sample range used as the scale.
    Range,
}

pub fn eb_hyper(data: &[f64], variant: EbVariant) -> Result<GaussianBase> {
    if data.len() < 2 {
        return Err(Error::domain("empirical Bayes needs at least two observations"));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("data must be finite"));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = match variant {
        EbVariant::Moments => data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n,
        EbVariant::Range => {
            let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo).powi(2)
        }
    };
    if !(var > 0.0) {
        return Err(Error::domain("data have zero variance"));
    }
    GaussianBase::new(mean, var)
}

/// Affine transport of an atom from base `from` to base `to`.
pub fn transform_gaussian_atoms(theta: f64, from: &GaussianBase, to: &GaussianBase) -> f64 {
    (to.var / from.var).sqrt() * (theta - from.mean) + to.mean
}

/// Mixture state plus the shared component scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussMixtureState {
    pub mixture: MixtureState,
    pub sigma: f64,
}

impl GaussMixtureState {
    /// `Σ_k w_k φ_σ(t − θ_k)` on the grid.
    pub fn density_on(&self, grid: &Grid) -> GridFunction {
        let m = &self.mixture;
        grid.sample(|t| {
            m.weights
                .iter()
                .zip(&m.atoms)
                .map(|(w, th)| w * normal_pdf(t - th, self.sigma))
                .sum()
        })
    }
}

/// Normal–normal posterior `(mean, variance)` of a location given `count`
/// observations with sum `sum` at scale `sigma`.
pub fn gaussian_atom_posterior(prior: &GaussianBase, sigma: f64, count: usize, sum: f64) -> (f64, f64) {
    let precision = 1.0 / prior.var + count as f64 / (sigma * sigma);
    let var = 1.0 / precision;
    (var * (prior.mean / prior.var + sum / (sigma * sigma)), var)
}

pub fn update_gaussian_atoms<R: Rng + ?Sized>(
    state: &mut GaussMixtureState,
    data: &[f64],
    prior: &GaussianBase,
    rng: &mut R,
) {
    let k_star = state.mixture.k_star();
    let mut counts = vec![0usize; k_star];
    let mut sums = vec![0.0; k_star];
    for (&c, &x) in state.mixture.allocations.iter().zip(data) {
        counts[c] += 1;
        sums[c] += x;
    }
    for k in 0..k_star {
        if counts[k] == 0 {
            continue;
        }
        let (mean, var) = gaussian_atom_posterior(prior, state.sigma, counts[k], sums[k]);
        state.mixture.atoms[k] = Normal::new(mean, var.sqrt()).expect("valid normal").sample(rng);
    }
}

/// `σ² ~ IG(ν₁ + n/2, ν₂ + Σ(x_i − θ_{c_i})²/2)`.
pub fn update_sigma<R: Rng + ?Sized>(
    state: &mut GaussMixtureState,
    data: &[f64],
    nu1: f64,
    nu2: f64,
    rng: &mut R,
) {
    let m = &state.mixture;
    let ss: f64 = m
        .allocations
        .iter()
        .zip(data)
        .map(|(&c, &x)| (x - m.atoms[c]).powi(2))
        .sum();
    let shape = nu1 + 0.5 * data.len() as f64;
    let rate = nu2 + 0.5 * ss;
    let precision: f64 = Gamma::new(shape, 1.0 / rate).expect("positive parameters").sample(rng);
    state.sigma = precision.recip().sqrt();
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub zeta: f64,
    /// DP total mass α.
    pub alpha: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub grid: Grid,
}

impl DensityConfig {
    pub fn new(n_iter: usize, burn_in: usize, seed: u64, grid: Grid) -> Self {
        Self {
            n_iter,
            burn_in,
            thin: 1,
            seed,
            zeta: 1.0,
            alpha: 1.0,
            nu1: 1.0,
            nu2: 1.0,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in > self.n_iter || self.thin == 0 {
            return Err(Error::config("need burn_in <= n_iter and thin >= 1"));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::config(format!("zeta {} outside (0, 1]", self.zeta)));
        }
        if !(self.alpha > 0.0 && self.nu1 > 0.0 && self.nu2 > 0.0) {
            return Err(Error::config("alpha, nu1 and nu2 must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub sweep: usize,
    pub k_star: usize,
    pub k_nonempty: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTrace {
    pub grid: Grid,
    pub rows: Vec<DensityRow>,
    pub density: Vec<Vec<f64>>,
}

impl DensityTrace {
    pub fn mean_density(&self) -> Result<GridFunction> {
        if self.density.is_empty() {
            return Err(Error::domain("empty trace"));
        }
        let mut acc = vec![0.0; self.grid.len];
        for row in &self.density {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.density.len() as f64;
        GridFunction::new(self.grid, acc.into_iter().map(|v| v / n).collect())
    }

    pub fn mean_sigma(&self) -> f64 {
        crate::gibbs::mean(self.rows.iter().map(|r| r.sigma))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "sweep,K_star,K_nonempty,sigma")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.sweep, r.k_star, r.k_nonempty, r.sigma)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_grid_csv(&self, path: &Path) -> Result<()> {
        write_grid_matrix(path, &self.grid, self.rows.iter().map(|r| r.sweep), &self.density)
    }
}

/// One sweep: slices, sticks, allocations, atoms, σ, weights.
pub fn density_sweep<R: Rng + ?Sized>(
    state: &mut GaussMixtureState,
    data: &[f64],
    prior: &GaussianBase,
    config: &DensityConfig,
    rng: &mut R,
) -> Result<usize> {
    update_slices(&mut state.mixture, config.zeta, rng);
    let u_star = state.mixture.slices.iter().copied().fold(f64::INFINITY, f64::min);
    if !(u_star >= 1e-300) {
        return Err(Error::DegenerateSlice(u_star));
    }
    while state.mixture.remainder >= u_star {
        let keep = stick_keep(config.alpha, rng);
        let atom = prior.sample(rng);
        state.mixture.push_stick(keep, atom);
    }
    let k_star = state.mixture.k_star();
    let sigma = state.sigma;
    allocate_with_kernel(
        &mut state.mixture,
        data.len(),
        config.zeta,
        |i| data[i],
        |i, theta| normal_pdf(data[i] - theta, sigma),
        rng,
    )?;
    update_gaussian_atoms(state, data, prior, rng);
    update_sigma(state, data, config.nu1, config.nu2, rng);
    update_weights(&mut state.mixture, config.alpha, rng);
    Ok(k_star)
}

/// Runs the density sampler; starts from a single cluster at the prior mean
/// with σ equal to the prior scale.
pub fn run_density_chain(data: &[f64], prior: &GaussianBase, config: &DensityConfig) -> Result<DensityTrace> {
    config.validate()?;
    if data.is_empty() || data.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("data must be non-empty and finite"));
    }
    let mut rng = stream(config.seed);
    let mut mixture = MixtureState::empty(f64::INFINITY);
    mixture.atoms.push(prior.mean);
    mixture.weights.push(1.0);
    mixture.remainder = 0.0;
    mixture.allocations = vec![0; data.len()];
    let mut state = GaussMixtureState {
        mixture,
        sigma: prior.sd(),
    };
    update_weights(&mut state.mixture, config.alpha, &mut rng);

    let mut trace = DensityTrace {
        grid: config.grid,
        rows: Vec::new(),
        density: Vec::new(),
    };
    for sweep in 1..=config.n_iter {
        let k_star = density_sweep(&mut state, data, prior, config, &mut rng).map_err(|e| Error::Sweep {
            sweep,
            source: Box::new(e),
        })?;
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thin) {
            trace.rows.push(DensityRow {
                sweep,
                k_star,
                k_nonempty: state.mixture.k_star(),
                sigma: state.sigma,
            });
            trace.density.push(state.density_on(&config.grid).values);
        }
    }
    Ok(trace)
}
