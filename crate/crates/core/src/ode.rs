//! Adaptive ODE integrators.
//!
//! [`dopri5`] is the explicit Dormand-Prince 5(4) pair, used for the smooth
//! first-integral equations of the double-layer profiles. [`Sdirk4`] is an
//! L-stable, stiffly accurate singly diagonally implicit Runge-Kutta method of
//! order 4 whose Newton systems are tridiagonal; it drives the circuit model.
//! Both land exactly on every requested output time.

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;

/// Error tolerances and step limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size (infinite when unset).
    pub max_step: f64,
    /// Initial step; estimated from the right-hand side when `None`.
    pub first_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            first_step: None,
            max_steps: 1_000_000,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Parameter("rtol and atol must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Parameter("max_step must be positive".into()));
        }
        Ok(())
    }
}

fn err_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn check_outputs(t0: f64, t_out: &[f64]) -> Result<()> {
    let mut prev = t0;
    for &t in t_out {
        if !t.is_finite() || t < prev {
            return Err(Error::Parameter(
                "output times must be finite, non-decreasing and >= t0".into(),
            ));
        }
        prev = t;
    }
    Ok(())
}

/// Step size heuristic from the initial slope.
fn initial_step(y: &[f64], f: &[f64], tol: &Tolerances, order: i32, span: f64) -> f64 {
    let d0 = err_norm(y, y, y, tol);
    let d1 = err_norm(f, y, y, tol);
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h = h.min(tol.max_step).min(span.max(f64::MIN_POSITIVE));
    if d1 > 0.0 {
        h.min((0.01 / d1).powf(1.0 / f64::from(order + 1)).max(1e-10))
    } else {
        h
    }
}

/// Integrates `y' = f(t, y)` from `t0` with the Dormand-Prince 5(4) pair and returns
/// the state at each requested output time.
pub fn dopri5<F>(mut f: F, t0: f64, y0: &[f64], t_out: &[f64], tol: &Tolerances) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    tol.validate()?;
    check_outputs(t0, t_out)?;
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // Difference between the 5th and 4th order weights.
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut ys = vec![0.0; n];
    let mut err = vec![0.0; n];
    f(t, &y, &mut k[0])?;
    let t_end = t_out.last().copied().unwrap_or(t0);
    let mut h = tol
        .first_step
        .unwrap_or_else(|| initial_step(&y, &k[0], tol, 5, t_end - t0));
    let mut out = Vec::with_capacity(t_out.len());
    let mut steps = 0usize;
    for &target in t_out {
        while t < target {
            steps += 1;
            if steps > tol.max_steps {
                return Err(Error::Numeric(format!("dopri5: step limit reached at t = {t}")));
            }
            let remaining = target - t;
            let mut hs = h.min(tol.max_step);
            let hit = hs >= remaining * (1.0 - 1e-12);
            if hit {
                hs = remaining;
            }
            if hs <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepCollapse { t, h: hs, state: y.clone() });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += hs * A[s][j] * k[j][i];
                    }
                    ys[i] = acc;
                }
                f(t + C[s] * hs, &ys, &mut k[s])?;
            }
            // ys now holds the 5th order solution (FSAL row).
            for i in 0..n {
                err[i] = hs * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            }
            let en = err_norm(&err, &y, &ys, tol);
            if !en.is_finite() {
                h = 0.25 * hs;
                continue;
            }
            if en <= 1.0 {
                t = if hit { target } else { t + hs };
                y.copy_from_slice(&ys);
                k.swap(0, 6);
                let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                if !hit || fac < 1.0 {
                    h = hs * fac;
                }
            } else {
                h = hs * (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// A stiff system whose Jacobian is tridiagonal.
pub trait TridiagonalSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    fn jacobian(&self, t: f64, y: &[f64]) -> Result<Tridiagonal>;
}

/// Counters collected during an [`Sdirk4`] run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
    pub rhs_evals: usize,
}

/// Hairer-Wanner SDIRK method of order 4 with an embedded order-3 estimate.
#[derive(Debug, Clone, Copy)]
pub struct Sdirk4 {
    pub tol: Tolerances,
}

const GAMMA: f64 = 0.25;
const SD_C: [f64; 5] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const SD_A: [[f64; 5]; 5] = [
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [0.5, 0.25, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.25, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
];
const SD_BHAT: [f64; 5] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

impl Sdirk4 {
    pub fn new(tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        Ok(Self { tol })
    }

    /// Integrates from `(t0, y0)` and returns the state at every output time.
    pub fn integrate<S: TridiagonalSystem>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t_out: &[f64],
    ) -> Result<(Vec<Vec<f64>>, StepStats)> {
        check_outputs(t0, t_out)?;
        let tol = &self.tol;
        let n = sys.dim();
        let mut stats = StepStats::default();
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut f0 = vec![0.0; n];
        sys.rhs(t, &y, &mut f0)?;
        stats.rhs_evals += 1;
        let t_end = t_out.last().copied().unwrap_or(t0);
        let mut h = tol
            .first_step
            .unwrap_or_else(|| initial_step(&y, &f0, tol, 4, t_end - t0));
        let mut k = vec![vec![0.0; n]; 5];
        let mut z = vec![0.0; n];
        let mut base = vec![0.0; n];
        let mut fz = vec![0.0; n];
        let mut out = Vec::with_capacity(t_out.len());
        let mut steps = 0usize;
        for &target in t_out {
            while t < target {
                steps += 1;
                if steps > tol.max_steps {
                    return Err(Error::StepCollapse { t, h, state: y.clone() });
                }
                let remaining = target - t;
                let mut hs = h.min(tol.max_step);
                let hit = hs >= remaining * (1.0 - 1e-12);
                if hit {
                    hs = remaining;
                }
                if hs <= 1e-13 * t.abs().max(1.0) {
                    return Err(Error::StepCollapse { t, h: hs, state: y.clone() });
                }
                let jac = sys.jacobian(t, &y)?;
                // Iteration matrix I - h gamma J.
                let mut m = jac.clone();
                let hg = hs * GAMMA;
                m.lower.iter_mut().for_each(|v| *v *= -hg);
                m.upper.iter_mut().for_each(|v| *v *= -hg);
                m.diag.iter_mut().for_each(|v| *v = 1.0 - hg * *v);

                let mut ok = true;
                for s in 0..5 {
                    for i in 0..n {
                        let mut acc = y[i];
                        for j in 0..s {
                            acc += hs * SD_A[s][j] * k[j][i];
                        }
                        base[i] = acc;
                    }
                    // Predictor: explicit extrapolation from the previous stage slope.
                    let slope = if s == 0 { &f0 } else { &k[s - 1] };
                    for i in 0..n {
                        z[i] = base[i] + hg * slope[i];
                    }
                    let mut converged = false;
                    let mut prev_norm = f64::INFINITY;
                    for _ in 0..12 {
                        if sys.rhs(t + SD_C[s] * hs, &z, &mut fz).is_err() {
                            break;
                        }
                        stats.rhs_evals += 1;
                        let g: Vec<f64> = (0..n).map(|i| base[i] + hg * fz[i] - z[i]).collect();
                        let delta = match m.solve_pivoting(&g) {
                            Ok(d) => d,
                            Err(_) => break,
                        };
                        for i in 0..n {
                            z[i] += delta[i];
                        }
                        let dn = err_norm(&delta, &z, &z, tol);
                        if !dn.is_finite() || (dn > 0.9 * prev_norm && dn > 1e-3) {
                            break;
                        }
                        prev_norm = dn;
                        if dn <= 1e-5 {
                            converged = true;
                            break;
                        }
                    }
                    if converged && sys.rhs(t + SD_C[s] * hs, &z, &mut k[s]).is_ok() {
                        stats.rhs_evals += 1;
                        if k[s].iter().all(|v| v.is_finite()) {
                            continue;
                        }
                    }
                    ok = false;
                    break;
                }
                if !ok {
                    stats.newton_failures += 1;
                    h = 0.25 * hs;
                    continue;
                }
                let mut y_new = y.clone();
                let mut e = vec![0.0; n];
                for i in 0..n {
                    let mut acc = 0.0;
                    let mut acc_e = 0.0;
                    for j in 0..5 {
                        acc += SD_A[4][j] * k[j][i];
                        acc_e += (SD_A[4][j] - SD_BHAT[j]) * k[j][i];
                    }
                    y_new[i] += hs * acc;
                    e[i] = hs * acc_e;
                }
                let e = m.solve_pivoting(&e).unwrap_or(e);
                let en = err_norm(&e, &y, &y_new, tol);
                if en.is_finite() && en <= 1.0 {
                    stats.accepted += 1;
                    t = if hit { target } else { t + hs };
                    y = y_new;
                    f0.copy_from_slice(&k[4]);
                    let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.25)).clamp(0.2, 5.0) };
                    if !hit || fac < 1.0 {
                        h = hs * fac;
                    }
                } else {
                    stats.rejected += 1;
                    let fac = if en.is_finite() { (0.9 * en.powf(-0.25)).clamp(0.2, 0.9) } else { 0.2 };
                    h = hs * fac;
                }
            }
            out.push(y.clone());
        }
        Ok((out, stats))
    }
}
