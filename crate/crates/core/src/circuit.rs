//! Equivalent-circuit model for the zeta potentials of a stack-electrode cell.
//!
//! The state holds one zeta potential per stack, ordered from the leftmost to
//! the rightmost stack, i.e. `[ζ^{n,L}, ..., ζ^{1,L}, ζ^{1',R}, ..., ζ^{n',R}]`.
//! Interior stacks carry two diffuse layers with equal drops (weight 2), the
//! outermost stacks a single one (weight 1). The system reads
//!
//! ```text
//! m_k C(ζ_k) dζ_k/dt = α (-T ζ + Y)_k
//! ```
//!
//! and is integrated in the charge variables `q_k = Q(ζ_k)`, where the total
//! charge `Σ m_k q_k` is a linear invariant preserved exactly by Runge-Kutta
//! methods.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::edl;
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::ode::{Sdirk4, StepStats, Tolerances, TridiagonalSystem};
use crate::params::{DriveSpec, ElectrolyteSpec, StackGeometry};

/// Assembled circuit system.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSystem {
    pub electrolyte: ElectrolyteSpec,
    pub geometry: StackGeometry,
    pub drive: DriveSpec,
    /// Symmetric tridiagonal conductance matrix with zero row sums.
    pub t: Tridiagonal,
    /// Source vector, nonzero only in the two central rows.
    pub y: Vec<f64>,
    /// Layer multiplicities `(1, 2, ..., 2, 1)`.
    pub m: Vec<f64>,
    pub alpha: f64,
}

/// Builds `T`, `Y` and the multiplicities for the given cell.
pub fn assemble(g: &StackGeometry, d: &DriveSpec, e: &ElectrolyteSpec) -> Result<CircuitSystem> {
    let n = g.n();
    if n == 1 && g.electrode_width() != 0.0 {
        return Err(Error::Parameter("n = 1 requires H = 0".into()));
    }
    let dim = 2 * n;
    let l = g.bulk_half_width();
    let gc = 1.0 / (2.0 * l);
    let mut t = Tridiagonal::zeros(dim);
    let mut m = vec![2.0; dim];
    m[0] = 1.0;
    m[dim - 1] = 1.0;
    match g.spacing() {
        None => {
            t.diag = vec![gc, gc];
            t.lower = vec![-gc];
            t.upper = vec![-gc];
        }
        Some(h) => {
            let gh = 1.0 / h;
            for i in 0..dim - 1 {
                let c = if i == n - 1 { gc } else { gh };
                t.lower[i] = -c;
                t.upper[i] = -c;
            }
            for i in 0..dim {
                t.diag[i] = match i {
                    0 => gh,
                    _ if i == dim - 1 => gh,
                    _ if i == n - 1 || i == n => gh + gc,
                    _ => 2.0 * gh,
                };
            }
        }
    }
    let dv = d.v_plus - d.v_minus;
    let mut y = vec![0.0; dim];
    y[n - 1] = -dv * gc;
    y[n] = dv * gc;
    Ok(CircuitSystem {
        electrolyte: *e,
        geometry: g.clone(),
        drive: *d,
        t,
        y,
        m,
        alpha: e.alpha(),
    })
}

impl CircuitSystem {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Applied potential of each stack, in state order.
    pub fn stack_potentials(&self) -> Vec<f64> {
        let n = self.geometry.n();
        (0..2 * n)
            .map(|i| if i < n { self.drive.v_minus } else { self.drive.v_plus })
            .collect()
    }

    /// Stack positions in state order.
    pub fn stack_positions(&self) -> Vec<f64> {
        self.geometry.spatial_positions()
    }

    /// `T ζ - Y`.
    pub fn residual(&self, zeta: &[f64]) -> Vec<f64> {
        let mut r = self.t.mul_vec(zeta);
        r.iter_mut().zip(&self.y).for_each(|(a, b)| *a -= b);
        r
    }

    /// Bulk currents (slopes of the outer potential) in the `2n - 1` sub-domains, left to right.
    pub fn currents(&self, zeta: &[f64]) -> Vec<f64> {
        let v = self.stack_potentials();
        let x = self.stack_positions();
        (0..self.dim() - 1)
            .map(|i| ((v[i + 1] - zeta[i + 1]) - (v[i] - zeta[i])) / (x[i + 1] - x[i]))
            .collect()
    }
}

fn check_state(zeta: &[f64], s: &CircuitSystem) -> Result<()> {
    if zeta.len() != s.dim() {
        return Err(Error::Parameter(format!(
            "state has length {}, expected {}",
            zeta.len(),
            s.dim()
        )));
    }
    if zeta.iter().any(|z| !z.is_finite()) {
        return Err(Error::Parameter("state has non-finite entries".into()));
    }
    Ok(())
}

/// Time derivative `α diag(m C(ζ))^{-1} (-T ζ + Y)`.
pub fn rhs(zeta: &[f64], s: &CircuitSystem) -> Result<Vec<f64>> {
    check_state(zeta, s)?;
    let r = s.residual(zeta);
    zeta.iter()
        .zip(&r)
        .zip(&s.m)
        .map(|((z, r), m)| {
            let c = edl::differential_capacitance(*z, &s.electrolyte)
                .map_err(|err| Error::Numeric(format!("capacitance evaluation failed: {err}")))?;
            Ok(-s.alpha * r / (m * c))
        })
        .collect()
}

/// Total diffuse charge `Σ m_k Q(ζ_k)`; zero along trajectories started from rest.
pub fn conserved_charge(zeta: &[f64], s: &CircuitSystem) -> Result<f64> {
    check_state(zeta, s)?;
    let mut total = 0.0;
    for (z, m) in zeta.iter().zip(&s.m) {
        total += m * edl::charge(*z, &s.electrolyte)?;
    }
    Ok(total)
}

/// Sampled solution of the circuit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Sub-domain currents at each sample, left to right.
    pub currents: Vec<Vec<f64>>,
    /// Total diffuse charge at each sample.
    pub conserved: Vec<f64>,
    pub stats: StepStatsSummary,
}

/// Integrator counters attached to a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStatsSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
}

impl From<StepStats> for StepStatsSummary {
    fn from(s: StepStats) -> Self {
        Self {
            accepted: s.accepted,
            rejected: s.rejected,
            newton_failures: s.newton_failures,
        }
    }
}

impl ZetaTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Largest `|Σ m_k Q(ζ_k)|` over the samples.
    pub fn max_charge_drift(&self) -> f64 {
        self.conserved.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Integration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Number of equally spaced samples on `[0, t_final]`, including both ends.
    pub samples: usize,
}

impl Default for IntegrationControl {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            samples: 601,
        }
    }
}

impl IntegrationControl {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            max_step: self.max_step,
            ..Tolerances::default()
        }
    }
}

/// The circuit model in charge variables.
struct ChargeForm<'a> {
    s: &'a CircuitSystem,
}

impl ChargeForm<'_> {
    fn zetas(&self, q: &[f64]) -> Result<Vec<f64>> {
        q.iter()
            .map(|q| edl::zeta_from_charge(*q, &self.s.electrolyte))
            .collect()
    }
}

impl TridiagonalSystem for ChargeForm<'_> {
    fn dim(&self) -> usize {
        self.s.dim()
    }

    fn rhs(&self, _t: f64, q: &[f64], dq: &mut [f64]) -> Result<()> {
        let zeta = self.zetas(q)?;
        let r = self.s.residual(&zeta);
        for k in 0..q.len() {
            dq[k] = self.s.alpha * r[k] / self.s.m[k];
        }
        Ok(())
    }

    fn jacobian(&self, _t: f64, q: &[f64]) -> Result<Tridiagonal> {
        // d q'/d q = -α diag(1/m) T diag(1/C).
        let zeta = self.zetas(q)?;
        let inv_c = zeta
            .iter()
            .map(|z| edl::differential_capacitance(*z, &self.s.electrolyte).map(|c| 1.0 / c))
            .collect::<Result<Vec<f64>>>()?;
        let (t, m, a) = (&self.s.t, &self.s.m, self.s.alpha);
        let n = q.len();
        let mut j = Tridiagonal::zeros(n);
        for i in 0..n {
            j.diag[i] = -a * t.diag[i] * inv_c[i] / m[i];
            if i + 1 < n {
                j.upper[i] = -a * t.upper[i] * inv_c[i + 1] / m[i];
                j.lower[i] = -a * t.lower[i] * inv_c[i] / m[i + 1];
            }
        }
        Ok(j)
    }
}

/// Integrates from `ζ = 0` to `t_final`, sampling uniformly.
pub fn integrate(s: &CircuitSystem, t_final: f64, ctrl: &IntegrationControl) -> Result<ZetaTrajectory> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::Parameter(format!("t_final must be positive, got {t_final}")));
    }
    if ctrl.samples < 2 {
        return Err(Error::Parameter("at least two samples are required".into()));
    }
    let times: Vec<f64> = (0..ctrl.samples)
        .map(|i| {
            if i + 1 == ctrl.samples {
                t_final
            } else {
                t_final * i as f64 / (ctrl.samples - 1) as f64
            }
        })
        .collect();
    integrate_at(s, &times, &ctrl.tolerances())
}

/// Integrates from `ζ = 0` at `t = 0` and samples at the given increasing times.
pub fn integrate_at(s: &CircuitSystem, times: &[f64], tol: &Tolerances) -> Result<ZetaTrajectory> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("sample times must be >= 0 and strictly increasing".into()));
    }
    let sys = ChargeForm { s };
    let q0 = vec![0.0; s.dim()];
    let (qs, stats) = Sdirk4::new(*tol)?.integrate(&sys, 0.0, &q0, times)?;
    let mut states = Vec::with_capacity(qs.len());
    let mut currents = Vec::with_capacity(qs.len());
    let mut conserved = Vec::with_capacity(qs.len());
    for q in &qs {
        let zeta = sys.zetas(q)?;
        currents.push(s.currents(&zeta));
        conserved.push(conserved_charge(&zeta, s)?);
        states.push(zeta);
    }
    Ok(ZetaTrajectory {
        times: times.to_vec(),
        states,
        currents,
        conserved,
        stats: stats.into(),
    })
}

/// Equilibrium `ζ∞`: solves `T ζ = Y` together with `Σ m_k Q(ζ_k) = 0` by damped Newton.
pub fn equilibrium(s: &CircuitSystem) -> Result<Vec<f64>> {
    let dim = s.dim();
    let n = s.geometry.n();
    let dv = s.drive.difference();
    let mut zeta: Vec<f64> = (0..dim)
        .map(|i| if i < n { -0.5 * dv } else { 0.5 * dv })
        .collect();
    let e = &s.electrolyte;
    let scale = s.t.diag.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let residual = |z: &[f64]| -> Result<Vec<f64>> {
        let mut r = s.residual(z);
        r[dim - 1] = conserved_charge(z, s)?;
        Ok(r)
    };
    let norm = |r: &[f64]| {
        r[..dim - 1].iter().fold(0.0f64, |m, v| m.max(v.abs() / scale)).max(r[dim - 1].abs())
    };
    let mut r = residual(&zeta)?;
    let mut rn = norm(&r);
    for _ in 0..100 {
        if rn <= 1e-14 {
            return Ok(zeta);
        }
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim - 1 {
            jac[(i, i)] = s.t.diag[i];
            jac[(i, i + 1)] = s.t.upper[i];
            if i > 0 {
                jac[(i, i - 1)] = s.t.lower[i - 1];
            }
        }
        for k in 0..dim {
            jac[(dim - 1, k)] = -s.m[k] * edl::differential_capacitance(zeta[k], e)?;
        }
        let rhs = DVector::from_iterator(dim, r.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular equilibrium Jacobian".into()))?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = zeta.iter().zip(step.iter()).map(|(z, d)| z + lambda * d).collect();
            if let Ok(rt) = residual(&trial) {
                let tn = norm(&rt);
                if tn < rn || tn <= 1e-14 {
                    let small = step.iter().zip(&trial).all(|(d, z)| (lambda * d).abs() <= 1e-15 * z.abs().max(1.0));
                    zeta = trial;
                    r = rt;
                    rn = tn;
                    accepted = true;
                    if small {
                        return finish_equilibrium(zeta, rn);
                    }
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return finish_equilibrium(zeta, rn);
        }
    }
    finish_equilibrium(zeta, rn)
}

fn finish_equilibrium(zeta: Vec<f64>, residual: f64) -> Result<Vec<f64>> {
    if residual <= 1e-12 {
        Ok(zeta)
    } else {
        Err(Error::Numeric(format!(
            "equilibrium Newton stalled with residual {residual:e}"
        )))
    }
}
