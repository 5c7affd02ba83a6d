//! Spectrum of the linearized circuit model and the charging timescale `tau_n = 1/lambda_c`.
//!
//! Around an equilibrium `ζ∞` small perturbations obey `δζ' = -A δζ` with
//! `A = α W^{-1} T` and `W = diag(m_k C(ζ∞_k))`. `A` is similar to the
//! symmetric tridiagonal `W^{-1/2} α T W^{-1/2}`, whose eigenvalues are found
//! by Sturm bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{linear_fit, LinearFit};
use crate::circuit::{assemble, equilibrium, CircuitSystem, ZetaTrajectory};
use crate::edl;
use crate::error::{Error, Result};
use crate::linalg::{symmetric_tridiagonal_eigenvalues, symmetric_tridiagonal_eigenvector};
use crate::params::{DriveSpec, ElectrolyteSpec, StackGeometry};

/// Relative threshold separating the zero mode from the rest of the spectrum.
pub const ZERO_THRESHOLD: f64 = 1e-10;

/// Eigen-analysis of the linearized circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// All `2n` eigenvalues in increasing order.
    pub eigenvalues: Vec<f64>,
    /// Smallest eigenvalue above the zero threshold.
    pub lambda_c: f64,
    pub tau_n: f64,
    /// Number of eigenvalues at or below the zero threshold (1 for a valid system).
    pub zero_modes: usize,
    /// Eigenvector of `A` for `lambda_c`, unit Euclidean norm.
    pub mode: Vec<f64>,
}

/// Symmetrized matrix `(diag, off)` of `α W^{-1} T` and the weights `W`.
fn symmetrized(s: &CircuitSystem, zeta_inf: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let w = zeta_inf
        .iter()
        .zip(&s.m)
        .map(|(z, m)| edl::differential_capacitance(*z, &s.electrolyte).map(|c| m * c))
        .collect::<Result<Vec<f64>>>()?;
    let diag = (0..w.len()).map(|i| s.alpha * s.t.diag[i] / w[i]).collect();
    let off = (0..w.len() - 1)
        .map(|i| s.alpha * s.t.upper[i] / (w[i] * w[i + 1]).sqrt())
        .collect();
    Ok((diag, off, w))
}

/// Spectrum of `α C(ζ∞)^{-1} T` at the equilibrium `zeta_inf`.
pub fn spectrum(s: &CircuitSystem, zeta_inf: &[f64]) -> Result<SpectrumReport> {
    if zeta_inf.len() != s.dim() {
        return Err(Error::Parameter("equilibrium has the wrong length".into()));
    }
    let r = s.residual(zeta_inf);
    let scale = s.t.diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zmax = zeta_inf.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rmax > 1e-8 * scale * zmax {
        return Err(Error::Precondition(format!(
            "state is not an equilibrium (residual {rmax:e})"
        )));
    }
    let (diag, off, w) = symmetrized(s, zeta_inf)?;
    let eigenvalues = symmetric_tridiagonal_eigenvalues(&diag, &off);
    let max = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = ZERO_THRESHOLD * max;
    let zero_modes = eigenvalues.iter().filter(|l| l.abs() <= threshold).count();
    let lambda_c = eigenvalues
        .iter()
        .copied()
        .find(|l| *l > threshold)
        .ok_or_else(|| Error::Numeric("no positive eigenvalue".into()))?;
    let u = symmetric_tridiagonal_eigenvector(&diag, &off, lambda_c)?;
    let mut mode: Vec<f64> = u.iter().zip(&w).map(|(u, w)| u / w.sqrt()).collect();
    let norm = mode.iter().map(|v| v * v).sum::<f64>().sqrt();
    mode.iter_mut().for_each(|v| *v /= norm);
    Ok(SpectrumReport {
        eigenvalues,
        lambda_c,
        tau_n: 1.0 / lambda_c,
        zero_modes,
        mode,
    })
}

/// `tau_n` for a cell: assemble, equilibrate, analyse.
pub fn charging_timescale(g: &StackGeometry, d: &DriveSpec, e: &ElectrolyteSpec) -> Result<f64> {
    let s = assemble(g, d, e)?;
    let z = equilibrium(&s)?;
    Ok(spectrum(&s, &z)?.tau_n)
}

/// One sweep entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    /// Electrode-region width `H`.
    pub h_width: f64,
    /// `H / L`.
    pub ratio: f64,
    pub tau_n: f64,
}

/// Linear fit `tau_n = A n + B` for one electrode width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    pub h_width: f64,
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub fits: Vec<SweepFit>,
}

impl SweepTable {
    pub fn tau(&self, n: usize, h_width: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.h_width == h_width)
            .map(|r| r.tau_n)
    }

    pub fn fit(&self, h_width: f64) -> Option<&SweepFit> {
        self.fits.iter().find(|f| f.h_width == h_width)
    }
}

/// Smallest stack count entering the linear fits.
pub const FIT_MIN_N: usize = 5;

/// `tau_n` over every `(n, H)` pair, computed in parallel, with linear fits over `n >= 5`.
pub fn sweep_tau_vs_n(
    e: &ElectrolyteSpec,
    d: &DriveSpec,
    h_list: &[f64],
    n_values: &[usize],
) -> Result<SweepTable> {
    if let Some(bad) = n_values.iter().find(|n| !(2..=200).contains(*n)) {
        return Err(Error::Parameter(format!("n must lie in [2, 200], got {bad}")));
    }
    let mut seen = std::collections::HashSet::new();
    for n in n_values {
        if !seen.insert(*n) {
            return Err(Error::Parameter(format!("duplicate n = {n}")));
        }
    }
    let jobs: Vec<(f64, usize)> = h_list
        .iter()
        .flat_map(|h| n_values.iter().map(move |n| (*h, *n)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(h, n)| {
            let g = StackGeometry::with_widths(n, 1.0 - h, h)?;
            Ok(SweepRow {
                n,
                h_width: h,
                ratio: g.ratio(),
                tau_n: charging_timescale(&g, d, e)?,
            })
        })
        .collect::<Result<Vec<SweepRow>>>()?;
    let mut fits = Vec::new();
    for &h in h_list {
        let (x, y): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.h_width == h && r.n >= FIT_MIN_N)
            .map(|r| (r.n as f64, r.tau_n))
            .unzip();
        if x.len() >= 2 {
            let LinearFit {
                slope,
                intercept,
                r_squared,
                points,
            } = linear_fit(&x, &y)?;
            fits.push(SweepFit {
                h_width: h,
                a: slope,
                b: intercept,
                r_squared,
                points,
            });
        }
    }
    Ok(SweepTable { rows, fits })
}

/// Decay rate of `||ζ(t) - ζ∞||` fitted on the time window `[t0, t1]`.
pub fn relaxation_rate_fit(traj: &ZetaTrajectory, zeta_inf: &[f64], window: (f64, f64)) -> Result<f64> {
    relaxation_rate_from_samples(&traj.times, &traj.states, zeta_inf, window)
}

/// As [`relaxation_rate_fit`], on raw samples.
pub fn relaxation_rate_from_samples(
    times: &[f64],
    states: &[Vec<f64>],
    zeta_inf: &[f64],
    window: (f64, f64),
) -> Result<f64> {
    let dist = |z: &[f64]| -> f64 {
        z.iter()
            .zip(zeta_inf)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let gap0 = states.first().map(|z| dist(z)).unwrap_or(0.0);
    let scale = zeta_inf.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(gap0);
    if gap0 <= 1e-14 * scale.max(1e-300) || scale == 0.0 {
        return Err(Error::Fit("no relaxation signal".into()));
    }
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (ti, z) in times.iter().zip(states) {
        if *ti >= window.0 && *ti <= window.1 {
            let d = dist(z);
            if d <= 1e-13 * scale {
                return Err(Error::Fit(format!("signal at noise floor at t = {ti}")));
            }
            if t.is_empty() && d > 0.1 * gap0 {
                return Err(Error::Fit(format!(
                    "window starts before the late-time regime (distance {d:e} vs initial {gap0:e})"
                )));
            }
            t.push(*ti);
            y.push(d.ln());
        }
    }
    if t.len() < 3 {
        return Err(Error::Fit(format!("window holds {} samples, need 3", t.len())));
    }
    Ok(-linear_fit(&t, &y)?.slope)
}
