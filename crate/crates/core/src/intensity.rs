//! Benchmark intensities on `[0, T]` and their normalizations.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breaks, Tolerance};
use crate::special::normal_cdf;

pub const DEFAULT_HORIZON: f64 = 8.0;

const QUAD_TOL: Tolerance = Tolerance {
    abs: 1e-14,
    rel: 1e-13,
    max_intervals: 4000,
};

/// A non-negative rate function on `[0, horizon]`.
pub trait Intensity: Send + Sync {
    fn horizon(&self) -> f64;

    /// Rate at `t`, assuming `0 <= t <= horizon`.
    fn rate(&self, t: f64) -> f64;

    /// Points where the rate is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Whether `rate` is a hand-checked closed form. Thinning bounds for
    /// anything else are inflated.
    fn is_builtin(&self) -> bool {
        false
    }

    fn eval(&self, t: f64) -> Result<f64> {
        check_time(t, self.horizon())?;
        Ok(self.rate(t))
    }

    /// `∫₀ᵀ rate(t) dt`.
    fn mass(&self) -> f64 {
        integrate_with_breaks(|t| self.rate(t), 0.0, self.horizon(), &self.breakpoints(), QUAD_TOL).value
    }

    /// `∫₀ᵀ t rate(t) dt`.
    fn first_moment(&self) -> f64 {
        integrate_with_breaks(
            |t| t * self.rate(t),
            0.0,
            self.horizon(),
            &self.breakpoints(),
            QUAD_TOL,
        )
        .value
    }
}

pub(crate) fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::domain(format!("time {t} outside [0, {horizon}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TruthId {
    Lambda01,
    Lambda02,
    Lambda03,
}

impl TruthId {
    pub const ALL: [TruthId; 3] = [TruthId::Lambda01, TruthId::Lambda02, TruthId::Lambda03];

    pub fn index(self) -> u64 {
        match self {
            TruthId::Lambda01 => 1,
            TruthId::Lambda02 => 2,
            TruthId::Lambda03 => 3,
        }
    }
}

impl fmt::Display for TruthId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TruthId::Lambda01 => "lambda01",
            TruthId::Lambda02 => "lambda02",
            TruthId::Lambda03 => "lambda03",
        };
        f.write_str(s)
    }
}

impl FromStr for TruthId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lambda01" | "lambda1" | "1" => Ok(TruthId::Lambda01),
            "lambda02" | "lambda2" | "2" => Ok(TruthId::Lambda02),
            "lambda03" | "lambda3" | "3" => Ok(TruthId::Lambda03),
            other => Err(Error::config(format!("unknown truth id `{other}`"))),
        }
    }
}

const LAMBDA02_RATE: f64 = 0.4;
const LAMBDA03_KNOT: f64 = 3.0;

/// `arccos Φ(3)`, the value of the third truth at its knot.
pub fn lambda03_knot_value() -> f64 {
    normal_cdf(LAMBDA03_KNOT).acos()
}

/// One of the three benchmark intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthIntensity {
    id: TruthId,
    horizon: f64,
    knot_value: f64,
}

impl TruthIntensity {
    pub fn new(id: TruthId) -> Self {
        Self::with_horizon(id, DEFAULT_HORIZON).expect("default horizon is valid")
    }

    pub fn with_horizon(id: TruthId, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        // The linear branch of the third truth reaches zero at t = 9.
        if id == TruthId::Lambda03 && horizon > 9.0 {
            return Err(Error::domain("lambda03 is negative beyond t = 9"));
        }
        Ok(Self {
            id,
            horizon,
            knot_value: lambda03_knot_value(),
        })
    }

    pub fn id(&self) -> TruthId {
        self.id
    }

    pub fn normalized(self) -> NormalizedIntensity {
        NormalizedIntensity::new(Arc::new(self))
    }

    /// Quadrature value of the mass, kept separate from the closed forms.
    pub fn mass_by_quadrature(&self) -> f64 {
        integrate_with_breaks(|t| self.rate(t), 0.0, self.horizon, &self.breakpoints(), QUAD_TOL).value
    }

    pub fn first_moment_by_quadrature(&self) -> f64 {
        integrate_with_breaks(
            |t| t * self.rate(t),
            0.0,
            self.horizon,
            &self.breakpoints(),
            QUAD_TOL,
        )
        .value
    }

    /// Mean of the normalized intensity, `∫ t λ̄(t) dt`.
    pub fn e_theo(&self) -> f64 {
        self.first_moment() / self.mass()
    }
}

impl Intensity for TruthIntensity {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rate(&self, t: f64) -> f64 {
        match self.id {
            TruthId::Lambda01 => {
                if t < 3.0 {
                    4.0
                } else {
                    2.0
                }
            }
            TruthId::Lambda02 => (-LAMBDA02_RATE * t).exp(),
            TruthId::Lambda03 => {
                if t <= LAMBDA03_KNOT {
                    normal_cdf(t).acos()
                } else {
                    let c = self.knot_value;
                    -(c * t / 6.0 - 1.5 * c)
                }
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.id {
            TruthId::Lambda02 => Vec::new(),
            TruthId::Lambda01 | TruthId::Lambda03 => vec![3.0],
        }
    }

    fn is_builtin(&self) -> bool {
        true
    }

    fn mass(&self) -> f64 {
        let t_end = self.horizon;
        match self.id {
            TruthId::Lambda01 => 4.0 * t_end.min(3.0) + 2.0 * (t_end - 3.0).max(0.0),
            TruthId::Lambda02 => -(-LAMBDA02_RATE * t_end).exp_m1() / LAMBDA02_RATE,
            TruthId::Lambda03 => {
                let head_end = t_end.min(LAMBDA03_KNOT);
                let head = integrate_with_breaks(|t| normal_cdf(t).acos(), 0.0, head_end, &[], QUAD_TOL).value;
                let tail = if t_end > LAMBDA03_KNOT {
                    let c = self.knot_value;
                    c * (1.5 * (t_end - 3.0) - (t_end * t_end - 9.0) / 12.0)
                } else {
                    0.0
                };
                head + tail
            }
        }
    }

    fn first_moment(&self) -> f64 {
        let t_end = self.horizon;
        match self.id {
            TruthId::Lambda01 => {
                let head = t_end.min(3.0);
                let mut m = 2.0 * head * head;
                if t_end > 3.0 {
                    m += t_end * t_end - 9.0;
                }
                m
            }
            TruthId::Lambda02 => {
                let r = LAMBDA02_RATE;
                let rt = r * t_end;
                (1.0 - (-rt).exp() * (1.0 + rt)) / (r * r)
            }
            TruthId::Lambda03 => self.first_moment_by_quadrature(),
        }
    }
}

/// Intensity given by an arbitrary closure. Used for tests and ad hoc inputs.
pub struct FnIntensity<F> {
    f: F,
    horizon: f64,
}

impl<F: Fn(f64) -> f64 + Send + Sync> FnIntensity<F> {
    pub fn new(horizon: f64, f: F) -> Self {
        Self { f, horizon }
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> Intensity for FnIntensity<F> {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rate(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// `λ̄ = λ / M` with `M = ∫₀ᵀ λ`.
#[derive(Clone)]
pub struct NormalizedIntensity {
    base: Arc<dyn Intensity>,
    mass: f64,
}

impl fmt::Debug for NormalizedIntensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizedIntensity")
            .field("horizon", &self.base.horizon())
            .field("mass", &self.mass)
            .finish()
    }
}

impl NormalizedIntensity {
    pub fn new(base: Arc<dyn Intensity>) -> Self {
        let mass = base.mass();
        Self { base, mass }
    }

    pub fn from_fn<F>(horizon: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(Arc::new(FnIntensity::new(horizon, f)))
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn base(&self) -> &dyn Intensity {
        self.base.as_ref()
    }

    pub fn eval_bar(&self, t: f64) -> Result<f64> {
        Ok(self.base.eval(t)? / self.mass)
    }

    /// Mean of the normalized intensity.
    pub fn mean(&self) -> f64 {
        self.base.first_moment() / self.mass
    }
}

impl Intensity for NormalizedIntensity {
    fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    fn rate(&self, t: f64) -> f64 {
        self.base.rate(t) / self.mass
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.base.breakpoints()
    }

    fn is_builtin(&self) -> bool {
        self.base.is_builtin()
    }

    fn mass(&self) -> f64 {
        1.0
    }

    fn first_moment(&self) -> f64 {
        self.mean()
    }
}
