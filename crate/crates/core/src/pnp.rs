//! Finite-volume Poisson-Nernst-Planck solver on the stacked cell `[-1, 1]`.
//!
//! Unknowns are nodal `c_+`, `c_-` and `phi` on a vertex-centred grid whose nodes include
//! every stack. Face fluxes use the exponentially fitted (Scharfetter-Gummel) form, the
//! time discretization is TR-BDF2 and each stage is solved by Newton's method on the
//! fully coupled system, so the discrete masses are conserved to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandMatrix, Tridiagonal};
use crate::params::{DriveSpec, ElectrolyteSpec, StackGeometry};

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const MAX_HALVINGS: usize = 6;
const DT_GROWTH: f64 = 1.2;

/// Geometric clustering of the mesh around every stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Spacing at the stacks.
    pub h_min: f64,
    /// Ratio between neighbouring spacings away from a stack.
    pub growth: f64,
    /// Upper bound on the spacing in the bulk.
    pub h_max: f64,
}

impl RefineOptions {
    /// Default clustering: `eps/20` at the stacks, growth 1.1, at most `min(2 eps, 0.02)`.
    pub fn for_epsilon(epsilon: f64) -> Self {
        Self {
            h_min: epsilon / 20.0,
            growth: 1.1,
            h_max: (2.0 * epsilon).min(0.02),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    Uniform { cells: usize },
    Refined(RefineOptions),
}

/// Strictly increasing nodes on `[-1, 1]` containing every stack and the centre.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1D {
    nodes: Vec<f64>,
    stacks: Vec<usize>,
    center: usize,
    epsilon: f64,
}

impl Grid1D {
    pub fn build(g: &StackGeometry, epsilon: f64, spec: &GridSpec) -> Result<Self> {
        match spec {
            GridSpec::Uniform { cells } => Self::uniform(g, epsilon, *cells),
            GridSpec::Refined(o) => Self::refined(g, epsilon, o),
        }
    }

    /// Uniform grid with an even number of cells; every stack must fall on a node.
    pub fn uniform(g: &StackGeometry, epsilon: f64, cells: usize) -> Result<Self> {
        check_epsilon(epsilon)?;
        if cells < 2 || cells % 2 != 0 {
            return Err(Error::Parameter(format!("uniform grid needs an even cell count >= 2, got {cells}")));
        }
        let m = cells as f64;
        let mut nodes: Vec<f64> = (0..=cells).map(|i| (2.0 * i as f64 - m) / m).collect();
        let dx = 2.0 / m;
        let mut stacks = Vec::new();
        for p in g.spatial_positions() {
            let k = ((p + 1.0) / dx).round() as usize;
            if (nodes[k] - p).abs() > 1e-9 * dx {
                return Err(Error::Parameter(format!("stack at {p} is not a node of the {cells}-cell grid")));
            }
            nodes[k] = p;
            stacks.push(k);
        }
        Self::finish(nodes, stacks, epsilon)
    }

    /// Mesh clustered geometrically at every stack and mirrored about the centre.
    pub fn refined(g: &StackGeometry, epsilon: f64, o: &RefineOptions) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(o.h_min > 0.0 && o.growth >= 1.0 && o.h_max >= o.h_min && o.h_max.is_finite()) {
            return Err(Error::Parameter(format!("invalid refinement options {o:?}")));
        }
        let mut left: Vec<f64> = g.positions().iter().rev().map(|x| -x).collect();
        left.push(0.0);
        let mut half = vec![left[0]];
        for (k, w) in left.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let last = k + 2 == left.len();
            if last {
                let s = graded(b - a, o);
                push_cumulative(&mut half, a, &s);
            } else {
                let s = graded(0.5 * (b - a), o);
                let mid = 0.5 * (a + b);
                push_cumulative(&mut half, a, &s);
                *half.last_mut().unwrap() = mid;
                let mut x = b;
                let mut rev = Vec::with_capacity(s.len());
                for h in s.iter().take(s.len() - 1) {
                    x -= h;
                    rev.push(x);
                }
                half.extend(rev.into_iter().rev());
                half.push(b);
            }
            *half.last_mut().unwrap() = b;
        }
        let mut nodes = half.clone();
        nodes.extend(half.iter().rev().skip(1).map(|x| -x));
        let stacks = g
            .spatial_positions()
            .iter()
            .map(|p| {
                nodes
                    .iter()
                    .position(|x| x == p)
                    .expect("stack positions are inserted exactly")
            })
            .collect();
        Self::finish(nodes, stacks, epsilon)
    }

    fn finish(nodes: Vec<f64>, stacks: Vec<usize>, epsilon: f64) -> Result<Self> {
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("grid nodes must be strictly increasing".into()));
        }
        let center = nodes
            .iter()
            .position(|x| *x == 0.0)
            .ok_or_else(|| Error::Parameter("grid has no node at the centre".into()))?;
        Ok(Self {
            nodes,
            stacks,
            center,
            epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node indices of the stacks in increasing position.
    pub fn stack_nodes(&self) -> &[usize] {
        &self.stacks
    }

    pub fn center_node(&self) -> usize {
        self.center
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Control-volume lengths (half cells at the walls).
    pub fn volumes(&self) -> Vec<f64> {
        let h = self.spacings();
        let n = self.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { h[i - 1] } else { 0.0 };
                let r = if i + 1 < n { h[i] } else { 0.0 };
                0.5 * (l + r)
            })
            .collect()
    }

    /// Number of nodes within distance `epsilon` of stack `k` on its most refined side.
    pub fn nodes_per_layer(&self, k: usize) -> usize {
        let i = self.stacks[k];
        let x = self.nodes[i];
        let left = self.nodes[..i].iter().rev().take_while(|p| x - **p <= self.epsilon).count();
        let right = self.nodes[i + 1..].iter().take_while(|p| **p - x <= self.epsilon).count();
        left.max(right)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Spacings growing geometrically from `h_min`, rescaled to sum to `len`.
fn graded(len: f64, o: &RefineOptions) -> Vec<f64> {
    let mut s = Vec::new();
    let mut total = 0.0;
    let mut h = o.h_min;
    while total + h < len {
        s.push(h);
        total += h;
        h = (h * o.growth).min(o.h_max);
    }
    s.push(h);
    total += h;
    let f = len / total;
    s.iter_mut().for_each(|v| *v *= f);
    s
}

fn push_cumulative(out: &mut Vec<f64>, start: f64, s: &[f64]) {
    let mut x = start;
    for h in s {
        x += h;
        out.push(x);
    }
}

/// Nodal concentrations and potential at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldState {
    pub time: f64,
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub phi: Vec<f64>,
}

impl FieldState {
    pub fn charge_density(&self, e: &ElectrolyteSpec) -> Vec<f64> {
        self.c_plus
            .iter()
            .zip(&self.c_minus)
            .map(|(p, m)| e.charge_density(*p, *m))
            .collect()
    }
}

/// Discretized problem: grid, electrolyte, drive and the Dirichlet data at the stacks.
#[derive(Debug, Clone)]
pub struct PnpModel {
    grid: Grid1D,
    electrolyte: ElectrolyteSpec,
    drive: DriveSpec,
    geometry: StackGeometry,
    fixed: Vec<Option<f64>>,
    vol: Vec<f64>,
    h: Vec<f64>,
}

/// Inner Newton controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonControl {
    /// Bound on the residual scaled by the control volume.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonControl {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

impl PnpModel {
    pub fn new(g: &StackGeometry, d: &DriveSpec, e: &ElectrolyteSpec, grid: Grid1D) -> Result<Self> {
        let positions = g.spatial_positions();
        if grid.stacks.len() != positions.len()
            || grid.stacks.iter().zip(&positions).any(|(i, p)| grid.nodes[*i] != *p)
        {
            return Err(Error::Parameter("grid does not match the stack geometry".into()));
        }
        let n = g.n();
        let mut fixed = vec![None; grid.len()];
        for (k, i) in grid.stacks.iter().enumerate() {
            fixed[*i] = Some(if k < n { d.v_minus } else { d.v_plus });
        }
        let vol = grid.volumes();
        let h = grid.spacings();
        Ok(Self {
            grid,
            electrolyte: *e,
            drive: *d,
            geometry: g.clone(),
            fixed,
            vol,
            h,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn electrolyte(&self) -> &ElectrolyteSpec {
        &self.electrolyte
    }

    pub fn drive(&self) -> &DriveSpec {
        &self.drive
    }

    pub fn geometry(&self) -> &StackGeometry {
        &self.geometry
    }

    /// Uniform neutral concentrations with the matching potential.
    pub fn initial_state(&self) -> Result<FieldState> {
        let n = self.grid.len();
        let c_plus = vec![self.electrolyte.bulk_plus(); n];
        let c_minus = vec![self.electrolyte.bulk_minus(); n];
        let phi = solve_poisson(self, &c_plus, &c_minus)?;
        Ok(FieldState {
            time: 0.0,
            c_plus,
            c_minus,
            phi,
        })
    }

    /// Species masses `sum vol_i c_i`.
    pub fn masses(&self, s: &FieldState) -> (f64, f64) {
        let m = |c: &[f64]| c.iter().zip(&self.vol).map(|(c, v)| c * v).sum();
        (m(&s.c_plus), m(&s.c_minus))
    }

    /// Diffuse charge attributed to each stack, in increasing position.
    ///
    /// Stack `k` owns the region between the midpoints of its neighbouring inter-stack
    /// intervals; the outermost stacks own a half cell ending at the wall.
    pub fn stack_charges(&self, s: &FieldState) -> Vec<f64> {
        let rho = s.charge_density(&self.electrolyte);
        let x = &self.grid.nodes;
        let p: Vec<f64> = self.grid.stacks.iter().map(|i| x[*i]).collect();
        (0..p.len())
            .map(|k| {
                let a = if k == 0 { -1.0 } else { 0.5 * (p[k - 1] + p[k]) };
                let b = if k + 1 == p.len() { 1.0 } else { 0.5 * (p[k] + p[k + 1]) };
                integrate_linear(x, &rho, a, b)
            })
            .collect()
    }

    /// Normalized salt concentration at the centre node.
    pub fn center_salt(&self, s: &FieldState) -> f64 {
        let i = self.grid.center;
        self.electrolyte.salt(s.c_plus[i], s.c_minus[i])
    }

    /// One TR-BDF2 step of length `dt`.
    pub fn step(&self, s: &FieldState, dt: f64, ctrl: &NewtonControl) -> Result<FieldState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        let n = self.grid.len();
        let x0 = interleave(s);
        let mut r = vec![0.0; 3 * n];
        self.assemble(&x0, 1.0, &x0, &mut r, None);
        // TR stage: b = c_n - (gamma dt / 2) div F_n / vol.
        let th1 = 0.5 * GAMMA * dt;
        let mut b1 = x0.clone();
        for i in 0..n {
            for sp in 0..2 {
                b1[3 * i + sp] -= th1 * r[3 * i + sp] / self.vol[i];
            }
        }
        let x1 = self.newton(x0.clone(), th1, &b1, ctrl, s.time, dt)?;
        // BDF2 stage.
        let w = GAMMA * (2.0 - GAMMA);
        let mut b2 = x1.clone();
        for i in 0..n {
            for sp in 0..2 {
                let k = 3 * i + sp;
                b2[k] = (x1[k] - (1.0 - GAMMA).powi(2) * x0[k]) / w;
            }
        }
        let th2 = (1.0 - GAMMA) / (2.0 - GAMMA) * dt;
        let x2 = self.newton(x1, th2, &b2, ctrl, s.time, dt)?;
        let out = deinterleave(&x2, s.time + dt);
        check_positive(&out, dt)?;
        Ok(out)
    }

    /// One backward Euler step, used to march to the steady state.
    fn euler_step(&self, s: &FieldState, dt: f64, ctrl: &NewtonControl) -> Result<FieldState> {
        let x0 = interleave(s);
        let x1 = self.newton(x0.clone(), dt, &x0, ctrl, s.time, dt)?;
        let out = deinterleave(&x1, s.time + dt);
        check_positive(&out, dt)?;
        Ok(out)
    }

    /// Steady state reached from `s` by backward Euler steps of growing length.
    ///
    /// The discrete masses of `s` are preserved.
    pub fn equilibrate(&self, s: &FieldState) -> Result<FieldState> {
        let ctrl = NewtonControl {
            tol: 1e-10,
            max_iter: 50,
        };
        let mut state = s.clone();
        let mut dt = 1.0;
        for _ in 0..200 {
            let next = self.advance(&state, dt, &ctrl, true, 0)?;
            let change = max_change(&state, &next);
            state = next;
            if dt >= 1e6 && change <= 1e-12 {
                state.time = s.time;
                return Ok(state);
            }
            dt = (dt * 4.0).min(1e8);
        }
        Err(Error::Numeric("steady state not reached".into()))
    }

    fn advance(&self, s: &FieldState, dt: f64, ctrl: &NewtonControl, euler: bool, depth: usize) -> Result<FieldState> {
        let r = if euler {
            self.euler_step(s, dt, ctrl)
        } else {
            self.step(s, dt, ctrl)
        };
        match r {
            Err(Error::Numeric(_)) | Err(Error::Stability { .. }) if depth < MAX_HALVINGS => {
                let mid = self.advance(s, 0.5 * dt, ctrl, euler, depth + 1)?;
                let mut end = self.advance(&mid, 0.5 * dt, ctrl, euler, depth + 1)?;
                end.time = s.time + dt;
                Ok(end)
            }
            other => other,
        }
    }

    /// Residual `r` (and optionally the Jacobian) of `vol (c - b) + theta div F = 0`
    /// together with Poisson and the Dirichlet rows.
    fn assemble(&self, x: &[f64], theta: f64, b: &[f64], r: &mut [f64], mut jac: Option<&mut BandMatrix>) {
        let n = self.grid.len();
        let eps = self.grid.epsilon;
        let e2 = eps * eps;
        let z = [self.electrolyte.zp(), self.electrolyte.zm()];
        if let Some(j) = jac.as_deref_mut() {
            j.clear();
        }
        for i in 0..n {
            for sp in 0..2 {
                let k = 3 * i + sp;
                r[k] = self.vol[i] * (x[k] - b[k]);
                if let Some(j) = jac.as_deref_mut() {
                    j.add(k, k, self.vol[i]);
                }
            }
            let p = 3 * i + 2;
            match self.fixed[i] {
                Some(v) => {
                    r[p] = x[p] - v;
                    if let Some(j) = jac.as_deref_mut() {
                        j.add(p, p, 1.0);
                    }
                }
                None => {
                    let (hl, hr) = (self.h[i - 1], self.h[i]);
                    let (pl, pc, pr) = (x[p - 3], x[p], x[p + 3]);
                    r[p] = e2 * ((pr - pc) / hr - (pc - pl) / hl)
                        + self.vol[i] * (z[0] * x[3 * i] + z[1] * x[3 * i + 1]);
                    if let Some(j) = jac.as_deref_mut() {
                        j.add(p, p - 3, e2 / hl);
                        j.add(p, p, -e2 / hl - e2 / hr);
                        j.add(p, p + 3, e2 / hr);
                        j.add(p, 3 * i, self.vol[i] * z[0]);
                        j.add(p, 3 * i + 1, self.vol[i] * z[1]);
                    }
                }
            }
        }
        for f in 0..n - 1 {
            let a = theta * eps / self.h[f];
            let dphi = x[3 * f + 5] - x[3 * f + 2];
            for sp in 0..2 {
                let (ci, cj) = (x[3 * f + sp], x[3 * f + 3 + sp]);
                let d = z[sp] * dphi;
                let (bp, bm) = (bernoulli(d), bernoulli(-d));
                let flux = a * (bp * ci - bm * cj);
                let (ki, kj) = (3 * f + sp, 3 * f + 3 + sp);
                r[ki] += flux;
                r[kj] -= flux;
                if let Some(j) = jac.as_deref_mut() {
                    let dci = a * bp;
                    let dcj = -a * bm;
                    let dd = z[sp] * a * (bernoulli_deriv(d) * ci + bernoulli_deriv(-d) * cj);
                    let (pi, pj) = (3 * f + 2, 3 * f + 5);
                    for (row, sgn) in [(ki, 1.0), (kj, -1.0)] {
                        j.add(row, ki, sgn * dci);
                        j.add(row, kj, sgn * dcj);
                        j.add(row, pi, -sgn * dd);
                        j.add(row, pj, sgn * dd);
                    }
                }
            }
        }
    }

    fn scaled_norm(&self, r: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for (i, v) in self.vol.iter().enumerate() {
            for sp in 0..3 {
                let s = if sp == 2 && self.fixed[i].is_some() { 1.0 } else { *v };
                m = m.max(r[3 * i + sp].abs() / s);
            }
        }
        m
    }

    fn newton(&self, mut x: Vec<f64>, theta: f64, b: &[f64], ctrl: &NewtonControl, t: f64, dt: f64) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let mut r = vec![0.0; 3 * n];
        let mut jac = BandMatrix::zeros(3 * n, 3, 5);
        for iter in 0..ctrl.max_iter {
            self.assemble(&x, theta, b, &mut r, Some(&mut jac));
            let norm = self.scaled_norm(&r);
            if !norm.is_finite() {
                return Err(Error::Numeric(format!("non-finite residual at t = {t}")));
            }
            // At least one correction per stage, so slow drifts below the tolerance still evolve.
            if norm <= ctrl.tol && iter > 0 {
                return Ok(x);
            }
            jac.factor()?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let delta = jac.solve(&rhs)?;
            // Keep concentrations positive and limit potential updates.
            let mut lambda = 1.0f64;
            for i in 0..n {
                for sp in 0..2 {
                    let (c, dc) = (x[3 * i + sp], delta[3 * i + sp]);
                    if dc < 0.0 && c + dc <= 0.1 * c {
                        lambda = lambda.min(0.9 * c / -dc);
                    }
                }
                let dp = delta[3 * i + 2].abs();
                if dp > 2.0 {
                    lambda = lambda.min(2.0 / dp);
                }
            }
            let mut upd = 0.0f64;
            for (k, (xv, dv)) in x.iter_mut().zip(&delta).enumerate() {
                *xv += lambda * dv;
                let scale = if k % 3 == 2 { 1.0 } else { xv.abs().max(1e-300) };
                upd = upd.max((lambda * dv).abs() / scale);
            }
            if lambda == 1.0 && upd <= 1e-13 {
                return Ok(x);
            }
        }
        Err(Error::Numeric(format!(
            "coupled Newton iteration did not converge in {} iterations at t = {t} (dt = {dt})",
            ctrl.max_iter
        )))
    }

    /// Time-steps from `s0` through `cfg`'s output schedule.
    pub fn run_from(&self, s0: FieldState, cfg: &PnpConfig) -> Result<PnpRun> {
        cfg.validate()?;
        let outputs = cfg.schedule();
        let mut diag = PnpDiagnostics::new(self.grid.stacks.iter().map(|i| self.grid.nodes[*i]).collect());
        let mut snapshots = Vec::new();
        let mut state = s0;
        diag.record(self, &state);
        if cfg.snapshot_times.contains(&state.time) {
            snapshots.push(state.clone());
        }
        let mut dt_cur = cfg.dt_initial.unwrap_or(cfg.dt).min(cfg.dt);
        let mut steps = 0usize;
        for &target in &outputs {
            while state.time < target {
                let remaining = target - state.time;
                let h = if remaining <= dt_cur * (1.0 + 1e-9) {
                    remaining
                } else if remaining < 1.5 * dt_cur {
                    0.5 * remaining
                } else {
                    dt_cur
                };
                let mut next = self.advance(&state, h, &cfg.newton, false, 0)?;
                if h == remaining {
                    next.time = target;
                }
                state = next;
                steps += 1;
                dt_cur = (dt_cur * DT_GROWTH).min(cfg.dt);
            }
            diag.record(self, &state);
            if cfg.snapshot_times.contains(&target) {
                snapshots.push(state.clone());
            }
        }
        if cfg.equilibrate {
            let eq = self.equilibrate(&state)?;
            diag.q_eq = Some(self.stack_charges(&eq));
        }
        Ok(PnpRun {
            grid: self.grid.clone(),
            snapshots,
            diagnostics: diag,
            final_state: state,
            steps,
        })
    }
}

/// Piecewise-linear integral of nodal values over `[a, b]`.
fn integrate_linear(x: &[f64], f: &[f64], a: f64, b: f64) -> f64 {
    let at = |p: f64| -> f64 {
        let k = x.partition_point(|v| *v <= p).clamp(1, x.len() - 1);
        let t = (p - x[k - 1]) / (x[k] - x[k - 1]);
        f[k - 1] + t * (f[k] - f[k - 1])
    };
    let mut total = 0.0;
    for i in 0..x.len() - 1 {
        let (l, r) = (x[i].max(a), x[i + 1].min(b));
        if r > l {
            let (fl, fr) = if l == x[i] && r == x[i + 1] { (f[i], f[i + 1]) } else { (at(l), at(r)) };
            total += 0.5 * (fl + fr) * (r - l);
        }
    }
    total
}

fn interleave(s: &FieldState) -> Vec<f64> {
    let mut x = Vec::with_capacity(3 * s.phi.len());
    for i in 0..s.phi.len() {
        x.extend([s.c_plus[i], s.c_minus[i], s.phi[i]]);
    }
    x
}

fn deinterleave(x: &[f64], time: f64) -> FieldState {
    FieldState {
        time,
        c_plus: x.iter().step_by(3).copied().collect(),
        c_minus: x.iter().skip(1).step_by(3).copied().collect(),
        phi: x.iter().skip(2).step_by(3).copied().collect(),
    }
}

fn check_positive(s: &FieldState, dt: f64) -> Result<()> {
    for (node, (p, m)) in s.c_plus.iter().zip(&s.c_minus).enumerate() {
        if !(*p > 0.0 && *m > 0.0) {
            return Err(Error::Stability { t: s.time, node, dt });
        }
    }
    Ok(())
}

fn max_change(a: &FieldState, b: &FieldState) -> f64 {
    let d = |u: &[f64], v: &[f64]| u.iter().zip(v).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    d(&a.c_plus, &b.c_plus).max(d(&a.c_minus, &b.c_minus)).max(d(&a.phi, &b.phi))
}

/// `B(x) = x / (e^x - 1)`.
fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0
    } else {
        x / x.exp_m1()
    }
}

/// `B'(x) = (1 - x - B(x)) / (e^x - 1)`.
fn bernoulli_deriv(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        -0.5 + x / 6.0 - x * x * x / 180.0
    } else {
        (1.0 - x - bernoulli(x)) / x.exp_m1()
    }
}

/// Potential from the charge density with Dirichlet data at every stack.
///
/// Each interval between consecutive stacks is an independent tridiagonal problem.
pub fn solve_poisson(model: &PnpModel, c_plus: &[f64], c_minus: &[f64]) -> Result<Vec<f64>> {
    let n = model.grid.len();
    if c_plus.len() != n || c_minus.len() != n {
        return Err(Error::Parameter("concentration length does not match the grid".into()));
    }
    let e2 = model.grid.epsilon.powi(2);
    let mut phi = vec![0.0; n];
    for (i, v) in model.fixed.iter().enumerate() {
        if let Some(v) = v {
            phi[i] = *v;
        }
    }
    for w in model.grid.stacks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = b - a - 1;
        if m == 0 {
            continue;
        }
        let mut t = Tridiagonal::zeros(m);
        let mut rhs = vec![0.0; m];
        for k in 0..m {
            let i = a + 1 + k;
            let (hl, hr) = (model.h[i - 1], model.h[i]);
            t.diag[k] = e2 / hl + e2 / hr;
            if k > 0 {
                t.lower[k - 1] = -e2 / hl;
            }
            if k + 1 < m {
                t.upper[k] = -e2 / hr;
            }
            rhs[k] = model.vol[i] * model.electrolyte.charge_density(c_plus[i], c_minus[i]);
            if k == 0 {
                rhs[k] += e2 / hl * phi[a];
            }
            if k + 1 == m {
                rhs[k] += e2 / hr * phi[b];
            }
        }
        let sol = t.solve(&rhs)?;
        phi[a + 1..b].copy_from_slice(&sol);
    }
    Ok(phi)
}

/// Time-stepping controls for [`run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnpConfig {
    pub epsilon: f64,
    pub grid: GridSpec,
    /// Step length once the start-up ramp is over.
    pub dt: f64,
    /// First step; steps grow by a fixed factor until they reach `dt`.
    pub dt_initial: Option<f64>,
    pub t_final: f64,
    /// Times at which diagnostics are recorded; `t_final` is always included.
    pub output_times: Vec<f64>,
    /// Subset of output times at which full fields are kept.
    pub snapshot_times: Vec<f64>,
    pub newton: NewtonControl,
    /// Compute the steady-state charges at the end of the run.
    pub equilibrate: bool,
}

impl PnpConfig {
    /// Refined grid, 100 evenly spaced outputs, no snapshots.
    pub fn new(epsilon: f64, dt: f64, t_final: f64) -> Self {
        Self {
            epsilon,
            grid: GridSpec::Refined(RefineOptions::for_epsilon(epsilon)),
            dt,
            dt_initial: None,
            t_final,
            output_times: (1..=100).map(|k| t_final * k as f64 / 100.0).collect(),
            snapshot_times: Vec::new(),
            newton: NewtonControl::default(),
            equilibrate: false,
        }
    }

    /// `count` logarithmically spaced outputs from `t_first` to `t_final`.
    pub fn log_outputs(mut self, t_first: f64, count: usize) -> Self {
        let (a, b) = (t_first.ln(), self.t_final.ln());
        self.output_times = (0..count)
            .map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp().min(self.t_final))
            .collect();
        if let Some(last) = self.output_times.last_mut() {
            *last = self.t_final;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(d) = self.dt_initial {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Parameter(format!("dt_initial must be positive, got {d}")));
            }
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::Parameter(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.output_times.iter().any(|t| !(*t > 0.0 && *t <= self.t_final)) {
            return Err(Error::Parameter("output times must lie in (0, t_final]".into()));
        }
        if self.output_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("output times must be strictly increasing".into()));
        }
        if self.newton.max_iter == 0 || !(self.newton.tol > 0.0) {
            return Err(Error::Parameter("invalid Newton controls".into()));
        }
        Ok(())
    }

    fn schedule(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.output_times.clone();
        t.extend(self.snapshot_times.iter().filter(|s| **s > 0.0 && **s <= self.t_final));
        t.push(self.t_final);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// Time series recorded during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PnpDiagnostics {
    pub times: Vec<f64>,
    /// Stack positions in increasing order; column order of `stack_charges`.
    pub stack_positions: Vec<f64>,
    /// `stack_charges[t][k]`: diffuse charge attributed to stack `k`.
    pub stack_charges: Vec<Vec<f64>>,
    pub center_salt: Vec<f64>,
    pub mass_plus: Vec<f64>,
    pub mass_minus: Vec<f64>,
    /// Steady-state stack charges, when computed.
    pub q_eq: Option<Vec<f64>>,
}

impl PnpDiagnostics {
    fn new(stack_positions: Vec<f64>) -> Self {
        Self {
            times: Vec::new(),
            stack_positions,
            stack_charges: Vec::new(),
            center_salt: Vec::new(),
            mass_plus: Vec::new(),
            mass_minus: Vec::new(),
            q_eq: None,
        }
    }

    fn record(&mut self, m: &PnpModel, s: &FieldState) {
        let (mp, mm) = m.masses(s);
        self.times.push(s.time);
        self.stack_charges.push(m.stack_charges(s));
        self.center_salt.push(m.center_salt(s));
        self.mass_plus.push(mp);
        self.mass_minus.push(mm);
    }

    pub fn stack_count(&self) -> usize {
        self.stack_positions.len()
    }

    /// Index of the `k`-th left stack counted from the centre (`k = 1` is innermost).
    pub fn left_stack(&self, k: usize) -> usize {
        self.stack_count() / 2 - k
    }

    /// Index of the `k`-th right stack counted from the centre.
    pub fn right_stack(&self, k: usize) -> usize {
        self.stack_count() / 2 + k - 1
    }

    pub fn charge_series(&self, stack: usize) -> Vec<f64> {
        self.stack_charges.iter().map(|q| q[stack]).collect()
    }

    /// Largest relative deviation of either species mass from its initial value.
    pub fn max_mass_drift(&self) -> f64 {
        let drift = |m: &[f64]| m.iter().fold(0.0f64, |a, v| a.max(((v - m[0]) / m[0]).abs()));
        drift(&self.mass_plus).max(drift(&self.mass_minus))
    }
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct PnpRun {
    pub grid: Grid1D,
    pub snapshots: Vec<FieldState>,
    pub diagnostics: PnpDiagnostics,
    pub final_state: FieldState,
    pub steps: usize,
}

/// Runs the cell from the uniform neutral state.
pub fn run(g: &StackGeometry, d: &DriveSpec, e: &ElectrolyteSpec, cfg: &PnpConfig) -> Result<PnpRun> {
    cfg.validate()?;
    let grid = Grid1D::build(g, cfg.epsilon, &cfg.grid)?;
    let model = PnpModel::new(g, d, e, grid)?;
    let s0 = model.initial_state()?;
    model.run_from(s0, cfg)
}

/// `1 - Q_k(t)/Q_k(inf)` for stack `k`.
///
/// Uses the steady-state charge when the run computed it; otherwise the last sample,
/// which must have stopped changing.
pub fn charge_relaxation(diag: &PnpDiagnostics, stack: usize) -> Result<Vec<f64>> {
    if stack >= diag.stack_count() {
        return Err(Error::Parameter(format!("stack index {stack} out of range")));
    }
    let q = diag.charge_series(stack);
    let q_eq = match &diag.q_eq {
        Some(v) => v[stack],
        None => {
            let k = q.len();
            if k < 2 {
                return Err(Error::Precondition("need at least two samples".into()));
            }
            let rate = (q[k - 1] - q[k - 2]).abs() / (diag.times[k - 1] - diag.times[k - 2]);
            if rate > 1e-6 * q[k - 1].abs().max(1e-300) {
                return Err(Error::Precondition(
                    "run has not reached equilibrium; extend t_final or equilibrate".into(),
                ));
            }
            q[k - 1]
        }
    };
    let qmax = diag
        .stack_charges
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if q_eq.abs() <= 1e-12 * qmax.max(1.0) {
        return Err(Error::Precondition("equilibrium charge vanishes; relaxation undefined".into()));
    }
    Ok(q.iter().map(|v| 1.0 - v / q_eq).collect())
}
