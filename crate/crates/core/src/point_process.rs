//! Inhomogeneous Poisson processes: simulation by thinning and the plain-text
//! event file format.
//!
//! ```text
//! # T=8 n=500 seed=42 truth=lambda01
//! 0.0123456789012345
//! ...
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::intensity::{Intensity, TruthId, TruthIntensity};
use crate::rng::stream;

/// Grid size used to bound an intensity from above for thinning.
pub const BOUND_GRID: usize = 4096;
/// Inflation of the grid supremum for intensities that are not built in.
pub const USER_BOUND_INFLATION: f64 = 1.05;

#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessSample {
    pub events: Vec<f64>,
    /// Exposure: the process has intensity `n · λ̄`.
    pub n: u64,
    pub horizon: f64,
    pub seed: u64,
    pub truth_id: Option<TruthId>,
}

impl PointProcessSample {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn mean_event_time(&self) -> Option<f64> {
        if self.events.is_empty() {
            None
        } else {
            Some(self.events.iter().sum::<f64>() / self.events.len() as f64)
        }
    }

    /// Checks ordering and support.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain(format!("horizon {} must be positive", self.horizon)));
        }
        for (i, &t) in self.events.iter().enumerate() {
            if !(0.0..=self.horizon).contains(&t) {
                return Err(Error::domain(format!("event {i} at {t} outside horizon")));
            }
            if i > 0 && t <= self.events[i - 1] {
                return Err(Error::domain(format!("events not strictly ascending at index {i}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(24 * (self.events.len() + 1));
        write!(out, "# T={} n={} seed={}", self.horizon, self.n, self.seed)?;
        if let Some(id) = self.truth_id {
            write!(out, " truth={id}")?;
        }
        writeln!(out)?;
        for &t in &self.events {
            writeln!(out, "{}", format_17(t))?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let fail = |line: usize, msg: String| Error::Ingestion {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| fail(1, "missing header".into()))?;
        let mut horizon = None;
        let mut n = None;
        let mut seed = None;
        let mut truth_id = None;
        let body = header
            .strip_prefix('#')
            .ok_or_else(|| fail(1, "header must start with '#'".into()))?;
        for token in body.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| fail(1, format!("malformed header token '{token}'")))?;
            let bad = |_| fail(1, format!("malformed header value '{token}'"));
            match key {
                "T" => horizon = Some(value.parse::<f64>().map_err(|_| fail(1, format!("bad horizon '{value}'")))?),
                "n" => n = Some(value.parse::<u64>().map_err(bad)?),
                "seed" => seed = Some(value.parse::<u64>().map_err(bad)?),
                "truth" => truth_id = Some(value.parse::<TruthId>().map_err(|e| fail(1, e.to_string()))?),
                _ => return Err(fail(1, format!("unknown header key '{key}'"))),
            }
        }
        let horizon = horizon.ok_or_else(|| fail(1, "header lacks T".into()))?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(fail(1, format!("horizon {horizon} must be positive")));
        }
        let n = n.ok_or_else(|| fail(1, "header lacks n".into()))?;
        let seed = seed.ok_or_else(|| fail(1, "header lacks seed".into()))?;

        let mut events: Vec<f64> = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let s = raw.trim();
            if s.is_empty() {
                continue;
            }
            let t: f64 = s
                .parse()
                .map_err(|_| fail(line, format!("malformed event '{s}'")))?;
            if !t.is_finite() {
                return Err(fail(line, format!("malformed event '{s}'")));
            }
            if !(0.0..=horizon).contains(&t) {
                return Err(fail(line, format!("event outside horizon: {t} not in [0, {horizon}]")));
            }
            if let Some(&prev) = events.last() {
                if t == prev {
                    return Err(fail(line, format!("duplicate event time {t}")));
                }
                if t < prev {
                    return Err(fail(line, format!("events not sorted: {t} after {prev}")));
                }
            }
            events.push(t);
        }
        Ok(Self {
            events,
            n,
            horizon,
            seed,
            truth_id,
        })
    }
}

/// Decimal with 17 significant digits (enough to round-trip any f64).
fn format_17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (16 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Upper bound on `bar_lambda` for thinning.
pub fn thinning_bound(bar_lambda: &dyn Intensity) -> Result<f64> {
    let horizon = bar_lambda.horizon();
    let sup = (0..BOUND_GRID)
        .map(|i| bar_lambda.rate(horizon * i as f64 / (BOUND_GRID - 1) as f64))
        .fold(0.0, f64::max);
    let bound = if bar_lambda.is_builtin() {
        sup
    } else {
        sup * USER_BOUND_INFLATION
    };
    if !bound.is_finite() {
        return Err(Error::UnboundedIntensity(format!(
            "grid supremum {sup} is not finite"
        )));
    }
    Ok(bound)
}

/// Draws a Poisson process with intensity `n · bar_lambda` on `[0, T]` by
/// Lewis–Shedler thinning of a homogeneous process at rate `n · B`.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    bar_lambda: &dyn Intensity,
    n: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let horizon = bar_lambda.horizon();
    let mass = bar_lambda.mass();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "intensity must be normalized to 1 on [0, {horizon}], got {mass}"
        )));
    }
    let bound = thinning_bound(bar_lambda)?;
    if n == 0 || bound == 0.0 {
        return Ok(Vec::new());
    }
    let gaps = Exp::new(n as f64 * bound).map_err(|e| Error::domain(e.to_string()))?;
    let mut events = Vec::with_capacity((n as f64 * 1.1) as usize + 16);
    let mut t = 0.0;
    let mut overshoot = false;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            break;
        }
        let r = bar_lambda.rate(t);
        if r > bound {
            overshoot = true;
        }
        if rng.random::<f64>() * bound < r {
            events.push(t);
        }
    }
    if overshoot {
        log::warn!("intensity exceeded the thinning bound {bound}; sample is biased");
    }
    Ok(events)
}

/// Simulates from a normalized intensity with a fresh stream seeded by `seed`.
pub fn simulate(bar_lambda: &dyn Intensity, n: u64, seed: u64) -> Result<PointProcessSample> {
    let mut rng = stream(seed);
    let events = simulate_with_rng(bar_lambda, n, &mut rng)?;
    Ok(PointProcessSample {
        events,
        n,
        horizon: bar_lambda.horizon(),
        seed,
        truth_id: None,
    })
}

/// Simulates from a built-in truth (normalized), recording its id.
pub fn simulate_truth(id: TruthId, n: u64, seed: u64) -> Result<PointProcessSample> {
    let bar = TruthIntensity::new(id).normalized();
    let mut sample = simulate(&bar, n, seed)?;
    sample.truth_id = Some(id);
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::NormalizedIntensity;

    fn flat() -> NormalizedIntensity {
        NormalizedIntensity::from_fn(8.0, |_| 1.0)
    }

    #[test]
    fn zero_exposure_is_empty() {
        let s = simulate(&flat(), 0, 3).unwrap();
        assert!(s.is_empty());
        s.validate().unwrap();
    }

    #[test]
    fn homogeneous_count_in_range() {
        for seed in 0..20 {
            let s = simulate(&flat(), 1000, seed).unwrap();
            let dev = (s.len() as f64 - 1000.0).abs();
            assert!(dev < 4.0 * 1000f64.sqrt(), "{}", s.len());
            s.validate().unwrap();
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = simulate_truth(TruthId::Lambda01, 500, 11).unwrap();
        let b = simulate_truth(TruthId::Lambda01, 500, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_truth(TruthId::Lambda01, 500, 12).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn unbounded_intensity_errors() {
        let spike = crate::intensity::FnIntensity::new(8.0, |t: f64| if t == 0.0 { f64::INFINITY } else { 0.125 });
        assert!(matches!(thinning_bound(&spike), Err(Error::UnboundedIntensity(_))));
    }

    #[test]
    fn unnormalized_intensity_rejected() {
        let raw = TruthIntensity::new(TruthId::Lambda01);
        assert!(simulate(&raw, 10, 1).is_err());
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [1e-7, 0.1, 1.0 / 3.0, std::f64::consts::E, 7.999_999_999_999_999, 8.0] {
            let s = format_17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.txt");
        let s = PointProcessSample {
            events: vec![0.1, 1.0 / 3.0, 7.25],
            n: 3,
            horizon: 8.0,
            seed: 9,
            truth_id: Some(TruthId::Lambda03),
        };
        s.save(&path).unwrap();
        assert_eq!(PointProcessSample::load(&path).unwrap(), s);
        let sim = simulate_truth(TruthId::Lambda02, 300, 4).unwrap();
        sim.save(&path).unwrap();
        assert_eq!(PointProcessSample::load(&path).unwrap(), sim);
    }

    #[test]
    fn ingestion_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        let check = |body: &str, line: usize, needle: &str| {
            fs::write(&path, body).unwrap();
            match PointProcessSample::load(&path) {
                Err(Error::Ingestion { line: l, msg, .. }) => {
                    assert_eq!(l, line, "{msg}");
                    assert!(msg.contains(needle), "{msg}");
                }
                other => panic!("expected ingestion error, got {other:?}"),
            }
        };
        check("# T=8 n=1 seed=0\n1.0\n9.0\n", 3, "event outside horizon");
        check("# T=8 n=1 seed=0\n2.0\n1.0\n", 3, "not sorted");
        check("# T=8 n=1 seed=0\n1.0\n1.0\n", 3, "duplicate");
        check("# T=8 n=1 seed=0\nabc\n", 2, "malformed");
        check("T=8 n=1 seed=0\n", 1, "header");
        check("# T=8 seed=0\n", 1, "lacks n");
    }

    #[test]
    fn empty_file_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "# T=8 n=0 seed=1\n").unwrap();
        let s = PointProcessSample::load(&path).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.horizon, 8.0);
    }
}
