//! Relaxation-curve analytics: regression helpers, two-phase exponential fits and
//! salt-depletion diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Scales;

/// Least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 for a perfect fit (and for constant data).
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares on paired samples.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Fit("x and y lengths differ".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        points: n,
    })
}

/// Two-phase decay `r(t) ≈ a_fast e^{-t/tau_fast} + a_slow e^{-t/tau_slow}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationFit {
    pub tau_fast: f64,
    pub tau_slow: f64,
    pub a_fast: f64,
    pub a_slow: f64,
    /// RMS misfit of `ln r`.
    pub residual: f64,
    /// Time at which the two fitted exponentials cross (the phase boundary).
    pub crossover: f64,
    /// Time of the detected knee in the log-slope, when one was found.
    pub knee_time: Option<f64>,
    /// Set when no second phase was detected; both timescales are then equal.
    pub single_phase: bool,
}

impl RelaxationFit {
    pub fn ratio(&self) -> f64 {
        self.tau_slow / self.tau_fast
    }
}

/// Default resolution floor: samples at or below it are dropped from the tail.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Minimum number of usable samples.
const MIN_SAMPLES: usize = 20;
/// A knee is declared once the local log-slope falls to this fraction of its running maximum.
const KNEE_RATIO: f64 = 0.5;

fn exp_fit(t: &[f64], r: &[f64]) -> Result<(f64, f64)> {
    let y: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let f = linear_fit(t, &y)?;
    if !(f.slope < 0.0) {
        return Err(Error::Fit("segment does not decay".into()));
    }
    Ok((-1.0 / f.slope, f.intercept.exp()))
}

/// Fits a relaxation series `r = 1 - Q/Q_eq` with one or two exponential phases.
///
/// The knee is located from moving-window log-slopes (window of 10% of the samples,
/// at least 3). The slow phase is fitted on the later half of the post-knee samples;
/// its extrapolation is peeled off the pre-knee data, which then gives the fast phase.
pub fn biexponential_fit(t: &[f64], r: &[f64]) -> Result<RelaxationFit> {
    biexponential_fit_above(t, r, NOISE_FLOOR)
}

/// [`biexponential_fit`] restricted to the samples before `r` first drops to `floor`.
pub fn biexponential_fit_above(t: &[f64], r: &[f64], floor: f64) -> Result<RelaxationFit> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::Fit(format!("floor must lie in (0, 1), got {floor}")));
    }
    if t.len() != r.len() {
        return Err(Error::Fit("time and value series differ in length".into()));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Fit("times must be strictly increasing".into()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    // Keep the prefix above the noise floor.
    let end = r.iter().position(|v| *v <= floor).unwrap_or(r.len());
    let (t, r) = (&t[..end], &r[..end]);
    if t.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "need at least {MIN_SAMPLES} samples above {floor:e}, got {}",
            t.len()
        )));
    }
    let n = t.len();
    let w = (n / 10).max(3);
    let logr: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let slopes: Vec<f64> = (0..=n - w)
        .map(|j| linear_fit(&t[j..j + w], &logr[j..j + w]).map(|f| f.slope))
        .collect::<Result<_>>()?;
    let mut running = 0.0f64;
    let mut knee = None;
    for (j, s) in slopes.iter().enumerate() {
        running = running.max(s.abs());
        if running > 0.0 && s.abs() <= KNEE_RATIO * running {
            knee = Some(j);
            break;
        }
    }
    let single = |knee_time: Option<f64>| -> Result<RelaxationFit> {
        let (tau, a) = exp_fit(t, r)?;
        let residual = rms_log_misfit(t, &logr, |x| a * (-x / tau).exp());
        Ok(RelaxationFit {
            tau_fast: tau,
            tau_slow: tau,
            a_fast: a,
            a_slow: 0.0,
            residual,
            crossover: f64::NAN,
            knee_time,
            single_phase: true,
        })
    };
    let Some(j) = knee else {
        return single(None);
    };
    // Knee sample: centre of the first window whose slope has halved.
    let k = (j + w / 2).min(n - 1);
    let post = n - k;
    let slow_start = if post >= 6 { k + post / 2 } else { k };
    if n - slow_start < 3 || k < 2 {
        return single(Some(t[k]));
    }
    let (tau_s, a_s) = match exp_fit(&t[slow_start..], &r[slow_start..]) {
        Ok(v) => v,
        Err(_) => return single(Some(t[k])),
    };
    let (mut tf, mut rf) = (Vec::new(), Vec::new());
    for i in 0..k {
        let d = r[i] - a_s * (-t[i] / tau_s).exp();
        if d > floor.min(NOISE_FLOOR) {
            tf.push(t[i]);
            rf.push(d);
        }
    }
    let fast = if tf.len() >= 2 { exp_fit(&tf, &rf) } else { exp_fit(&t[..k], &r[..k]) };
    let (tau_f, a_f) = match fast {
        Ok(v) => v,
        Err(_) => return single(Some(t[k])),
    };
    if !(tau_f < tau_s) {
        return single(Some(t[k]));
    }
    let crossover = (a_f.ln() - a_s.ln()) / (1.0 / tau_f - 1.0 / tau_s);
    let residual = rms_log_misfit(t, &logr, |x| a_f * (-x / tau_f).exp() + a_s * (-x / tau_s).exp());
    Ok(RelaxationFit {
        tau_fast: tau_f,
        tau_slow: tau_s,
        a_fast: a_f,
        a_slow: a_s,
        residual,
        crossover,
        knee_time: Some(t[k]),
        single_phase: false,
    })
}

fn rms_log_misfit(t: &[f64], logr: &[f64], model: impl Fn(f64) -> f64) -> f64 {
    let s: f64 = t
        .iter()
        .zip(logr)
        .map(|(x, y)| {
            let m = model(*x);
            if m > 0.0 {
                (y - m.ln()).powi(2)
            } else {
                0.0
            }
        })
        .sum();
    (s / t.len() as f64).sqrt()
}

/// Bulk diffusion time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTimescale {
    /// `1/epsilon`, in units of the RC time.
    pub scaled: f64,
    /// `D^2 / D_0` in seconds, when physical scales are known.
    pub seconds: Option<f64>,
}

/// Diffusion timescale `tau_c / epsilon`; independent of the stack count.
pub fn diffusion_timescale(scales: &Scales) -> DiffusionTimescale {
    DiffusionTimescale {
        scaled: 1.0 / scales.epsilon,
        seconds: scales.tau_c.map(|tc| tc / scales.epsilon),
    }
}

/// Depletion of the centre salt concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaltDepletion {
    pub min_value: f64,
    /// `1 - min_t c(0, t) / c(0, 0)`.
    pub depletion_fraction: f64,
}

pub fn salt_depletion(series: &[f64]) -> Result<SaltDepletion> {
    let Some(first) = series.first().copied() else {
        return Err(Error::Parameter("empty salt series".into()));
    };
    if !(first > 0.0) {
        return Err(Error::Parameter("initial salt concentration must be positive".into()));
    }
    let min_value = series.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SaltDepletion {
        min_value,
        depletion_fraction: 1.0 - min_value / first,
    })
}
