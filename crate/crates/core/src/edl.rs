//! Closed forms for an isolated diffuse layer: the Poisson-Boltzmann radicand,
//! diffuse charge, differential capacitance and the layer potential profile.
//!
//! With `p = -z_+ u` and `q = -z_- u` the radicand is
//! `f(u) = -z_- e^p + z_+ e^q + z_- - z_+`. The signed magnitude
//! `G(u) = sgn(u) sqrt(2 f(u))` is smooth and odd-like through zero; the
//! diffuse charge is `Q = -G` and the capacitance is `C = G' = -dQ/du`.
//! Three evaluation regimes keep full precision: a power series for small
//! `|u|`, `expm1` differences at moderate `|u|` and a form with the dominant
//! exponential factored out for large `|u|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri5, Tolerances};
use crate::params::ElectrolyteSpec;

/// Largest exponent accepted before reporting overflow.
const MAX_EXPONENT: f64 = 700.0;
/// Below this `|u|` the power series is used.
const SERIES_LIMIT: f64 = 0.1;
/// Above this `|u|` the dominant exponential is factored out.
const SCALED_LIMIT: f64 = 1.0;
/// Dominant exponent above which the capacitance is evaluated in double-double arithmetic.
const EXTENDED_LIMIT: f64 = 6.0;
/// Default stretched-coordinate truncation of layer profiles.
pub const DEFAULT_Y_MAX: f64 = 25.0;

/// Orientation of a diffuse layer relative to its stack.
///
/// A `LeftFacing` layer is the left layer of a bulk sub-domain: its stack lies on
/// the left and the bulk extends to the right (`x = x_stack + eps y`). A
/// `RightFacing` layer is the mirror image (`x = x_stack - eps y`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    LeftFacing,
    RightFacing,
}

impl Side {
    /// `+1` when the bulk lies at larger `x`, `-1` otherwise.
    pub fn direction(self) -> f64 {
        match self {
            Side::LeftFacing => 1.0,
            Side::RightFacing => -1.0,
        }
    }
}

/// Potential drop across one diffuse layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaPotential {
    pub value: f64,
    pub side: Side,
}

impl ZetaPotential {
    pub fn new(value: f64, side: Side) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Parameter("zeta potential must be finite".into()));
        }
        Ok(Self { value, side })
    }
}

/// Sampled Poisson-Boltzmann layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub zeta: ZetaPotential,
    /// Stretched distance from the stack.
    pub y_grid: Vec<f64>,
    /// Potential drop relative to the adjacent bulk.
    pub phi: Vec<f64>,
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
}

impl LayerProfile {
    /// Physical positions of the samples for a layer attached to `x_stack`.
    pub fn positions(&self, x_stack: f64, epsilon: f64) -> Vec<f64> {
        let d = self.zeta.side.direction();
        self.y_grid.iter().map(|y| x_stack + d * epsilon * y).collect()
    }
}

fn check_range(u: f64, e: &ElectrolyteSpec) -> Result<()> {
    let m = e.zp().max(-e.zm()) * u.abs();
    if !u.is_finite() || m > MAX_EXPONENT {
        return Err(Error::Range(format!(
            "potential {u} exceeds the exponential range for valences ({}, {})",
            e.z_plus(),
            e.z_minus()
        )));
    }
    Ok(())
}

/// Returns `(f(u)/u^2, f'(u)/u)` from the Taylor series of `f`.
fn series(u: f64, e: &ElectrolyteSpec) -> (f64, f64) {
    let (zp, zm) = (e.zp(), e.zm());
    // a_k = (-z_- (-z_+)^k + z_+ (-z_-)^k) / k!
    let mut pp = zp * zp / 2.0; // (-z_+)^k / k! at k = 2
    let mut pm = zm * zm / 2.0;
    let mut upow = 1.0; // u^(k-2)
    let mut g = 0.0;
    let mut dg = 0.0;
    let mut prev = f64::INFINITY;
    for k in 2..60 {
        let a = -zm * pp + zp * pm;
        let term = a * upow;
        g += term;
        dg += k as f64 * term;
        // Odd coefficients vanish for symmetric salts, so look at two consecutive terms.
        let tiny = k as f64 * term.abs() <= 1e-18 * g.abs();
        if tiny && prev <= 1e-18 * g.abs() {
            break;
        }
        prev = k as f64 * term.abs();
        let kk = (k + 1) as f64;
        pp *= -zp / kk;
        pm *= -zm / kk;
        upow *= u;
    }
    (g, dg)
}

/// Radicand `f(u)` of the diffuse charge; nonnegative.
pub fn radicand(u: f64, e: &ElectrolyteSpec) -> Result<f64> {
    check_range(u, e)?;
    let (zp, zm) = (e.zp(), e.zm());
    let f = if u.abs() < SERIES_LIMIT {
        series(u, e).0 * u * u
    } else {
        -zm * (-zp * u).exp_m1() + zp * (-zm * u).exp_m1()
    };
    // Round-off can only push f marginally below zero.
    Ok(if f < 0.0 && f > -1e-14 { 0.0 } else { f.max(0.0) })
}

/// Splits the exponentials into dominant and subdominant parts for `|u| >= 1`.
///
/// Returns `(d, s - d, big_f)` with `f = e^d big_f`, where `d` and `s` are the dominant and
/// subdominant exponents.
fn scaled_parts(u: f64, e: &ElectrolyteSpec) -> (f64, f64, f64) {
    let (zp, zm) = (e.zp(), e.zm());
    let p = -zp * u;
    let q = -zm * u;
    let (d, s, cd, cs) = if q >= p { (q, p, zp, -zm) } else { (p, q, -zm, zp) };
    let big_f = cd + cs * (s - d).exp() + (zm - zp) * (-d).exp();
    (d, s - d, big_f)
}

/// Signed magnitude `sgn(u) sqrt(2 f(u))`.
pub fn signed_root(u: f64, e: &ElectrolyteSpec) -> Result<f64> {
    check_range(u, e)?;
    if u.abs() < SERIES_LIMIT {
        let (g, _) = series(u, e);
        return Ok(u * (2.0 * g).sqrt());
    }
    let mag = if u.abs() >= SCALED_LIMIT {
        let (d, _, big_f) = scaled_parts(u, e);
        std::f64::consts::SQRT_2 * (0.5 * d).exp() * big_f.sqrt()
    } else {
        (2.0 * radicand(u, e)?).sqrt()
    };
    Ok(mag.copysign(u))
}

/// Signed diffuse charge `Q(u) = -sgn(u) sqrt(2 f(u))` of a layer with potential drop `u`.
///
/// The sign is fixed by the drop itself, so `dQ/du = -C(u)` holds for every layer.
pub fn charge(u: f64, e: &ElectrolyteSpec) -> Result<f64> {
    Ok(-signed_root(u, e)?)
}

/// Diffuse charge of a layer.
///
/// The layer orientation does not enter: a negative drop always carries positive
/// diffuse charge (cation excess) and vice versa.
pub fn diffuse_charge(z: &ZetaPotential, e: &ElectrolyteSpec) -> Result<f64> {
    charge(z.value, e)
}

/// Differential capacitance `C(u) = -dQ/du > 0`.
pub fn differential_capacitance(u: f64, e: &ElectrolyteSpec) -> Result<f64> {
    check_range(u, e)?;
    let (zp, zm) = (e.zp(), e.zm());
    let c = if u.abs() < SERIES_LIMIT {
        let (g, dg) = series(u, e);
        dg / (2.0 * g).sqrt()
    } else if u.abs() < SCALED_LIMIT {
        let f = radicand(u, e)?;
        let df = zp * zm * ((-zp * u).exp_m1() - (-zm * u).exp_m1());
        u.signum() * df / (2.0 * f).sqrt()
    } else {
        let (d, sd, big_f) = scaled_parts(u, e);
        if d >= EXTENDED_LIMIT {
            large_capacitance(u, e)
        } else {
            -zp * zm * (0.5 * d).exp() * -sd.exp_m1() / (std::f64::consts::SQRT_2 * big_f.sqrt())
        }
    };
    if !c.is_finite() {
        return Err(Error::Range(format!("capacitance overflow at u = {u}")));
    }
    Ok(c)
}

/// Inverts [`charge`]: the drop `u` with `Q(u) = q`.
pub fn zeta_from_charge(q: f64, e: &ElectrolyteSpec) -> Result<f64> {
    if !q.is_finite() {
        return Err(Error::Parameter("charge must be finite".into()));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    // Q is strictly decreasing: bracket the root on the side opposite to q.
    let dir = -q.signum();
    let target = q.abs();
    let mut hi = (target / e.alpha().sqrt()).min(1.0);
    while signed_root(dir * hi, e)?.abs() < target {
        hi *= 2.0;
        check_range(dir * hi, e)?;
    }
    let mut lo = 0.0;
    // Newton on |G(u)| - |q| along the ray, safeguarded by bisection.
    let mut u = hi;
    for _ in 0..200 {
        let g = signed_root(dir * u, e)?.abs() - target;
        if g > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let c = differential_capacitance(dir * u, e)?;
        let mut next = u - g / c;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 2.0 * f64::EPSILON * u || hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(dir * next);
        }
        u = next;
    }
    Err(Error::Numeric(format!("charge inversion did not converge for q = {q}")))
}

/// Capacitance for a large dominant exponent `d`, accurate to about one rounding.
///
/// `C = K e^{d/2} (1 - r) (1 + δ)^{-1/2}` with `K = -z_+ z_- / sqrt(2 c_d)`; the small
/// corrections `r` and `δ` only need ordinary precision, while `K` and `e^{d/2}` are
/// carried in double-double form.
fn large_capacitance(u: f64, e: &ElectrolyteSpec) -> f64 {
    let (zp, zm) = (e.zp(), e.zm());
    // Dominant exponent d = z u for the relevant valence, kept exactly as a pair.
    let (z_dom, c_dom, c_sub) = if u > 0.0 { (-zm, zp, -zm) } else { (zp, -zm, zp) };
    let d = dd::two_prod(z_dom, u.abs());
    let half = dd::Dd(0.5 * d.0, 0.5 * d.1);
    let big_e = dd::exp(half);
    let d1 = d.0 + d.1;
    let sd = if u > 0.0 { (zm - zp) * u } else { (zp - zm) * u };
    let r = sd.exp();
    let delta = (c_sub * r + (zm - zp) * (-d1).exp()) / c_dom;
    // (1 - r) (1 + δ)^{-1/2} = 1 + a - r - r a, kept as 1 + small.
    let a = (-0.5 * delta.ln_1p()).exp_m1();
    let corr = dd::Dd(1.0, a - r - r * a);
    let k = dd::div_f64(-zp * zm, dd::sqrt_f64(2.0 * c_dom));
    let prod = dd::mul(dd::mul(k, big_e), corr);
    prod.0 + prod.1
}

/// Minimal double-double arithmetic for [`large_capacitance`].
mod dd {
    #[derive(Debug, Clone, Copy)]
    pub struct Dd(pub f64, pub f64);

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd(s, b - (s - a))
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd(s, (a - (s - bb)) + (b - bb))
    }

    pub fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd(p, a.mul_add(b, -p))
    }

    pub fn add(a: Dd, b: Dd) -> Dd {
        let s = two_sum(a.0, b.0);
        let t = two_sum(a.1, b.1);
        let s = quick_two_sum(s.0, s.1 + t.0);
        quick_two_sum(s.0, s.1 + t.1)
    }

    pub fn mul(a: Dd, b: Dd) -> Dd {
        let p = two_prod(a.0, b.0);
        quick_two_sum(p.0, p.1 + (a.0 * b.1 + a.1 * b.0))
    }

    pub fn div_by(a: Dd, n: f64) -> Dd {
        let q1 = a.0 / n;
        let p = two_prod(q1, n);
        let rem = ((a.0 - p.0) - p.1) + a.1;
        quick_two_sum(q1, rem / n)
    }

    pub fn div_f64(num: f64, den: Dd) -> Dd {
        let q1 = num / den.0;
        let p = mul(Dd(q1, 0.0), den);
        let rem = add(Dd(num, 0.0), Dd(-p.0, -p.1));
        quick_two_sum(q1, rem.0 / den.0)
    }

    pub fn sqrt_f64(a: f64) -> Dd {
        let s = a.sqrt();
        quick_two_sum(s, -s.mul_add(s, -a) / (2.0 * s))
    }

    const LN2: Dd = Dd(std::f64::consts::LN_2, 2.319_046_813_846_299_6e-17);

    /// `e^x` for moderate `x`.
    pub fn exp(x: Dd) -> Dd {
        let k = (x.0 / LN2.0).round();
        let kl = mul(Dd(k, 0.0), LN2);
        let r = add(x, Dd(-kl.0, -kl.1));
        // Horner form of the Taylor series: 1 + r (1 + r/2 (1 + r/3 (...))).
        let mut p = Dd(1.0, 0.0);
        for n in (1..=27).rev() {
            p = add(Dd(1.0, 0.0), div_by(mul(p, r), f64::from(n)));
        }
        let scale = 2f64.powi(k as i32);
        Dd(p.0 * scale, p.1 * scale)
    }
}

/// Right-hand side of the first integral `phi' = -G(phi)` in the stretched coordinate.
fn first_integral(phi: f64, e: &ElectrolyteSpec) -> Result<f64> {
    Ok(-signed_root(phi, e)?)
}

/// Potential drop of a layer with drop `zeta` at the given increasing stretched distances.
pub fn layer_drop_at(zeta: f64, e: &ElectrolyteSpec, y: &[f64]) -> Result<Vec<f64>> {
    check_range(zeta, e)?;
    if y.windows(2).any(|w| w[1] < w[0]) || y.first().is_some_and(|v| *v < 0.0) {
        return Err(Error::Parameter("stretched distances must be increasing and >= 0".into()));
    }
    if zeta == 0.0 {
        return Ok(vec![0.0; y.len()]);
    }
    let tol = Tolerances {
        rtol: 1e-12,
        atol: 1e-16,
        max_step: 0.5,
        first_step: Some(1e-3 / (1.0 + zeta.abs())),
        max_steps: 1_000_000,
    };
    let ys = dopri5(
        |_t, p, dp| {
            dp[0] = first_integral(p[0], e)?;
            Ok(())
        },
        0.0,
        &[zeta],
        y,
        &tol,
    )
    .map_err(|err| match err {
        Error::StepCollapse { t, .. } => Error::Numeric(format!("layer profile integration stalled at y = {t}")),
        other => other,
    })?;
    Ok(ys.into_iter().map(|v| v[0]).collect())
}

/// Poisson-Boltzmann profile of one diffuse layer on `samples` equally spaced points of
/// `[0, y_max]`, with Boltzmann concentrations.
pub fn pb_profile(z: &ZetaPotential, e: &ElectrolyteSpec, y_max: f64, samples: usize) -> Result<LayerProfile> {
    if !(y_max > 0.0 && y_max.is_finite()) {
        return Err(Error::Parameter(format!("y_max must be positive, got {y_max}")));
    }
    if samples < 2 {
        return Err(Error::Parameter("samples must be >= 2".into()));
    }
    let y_grid: Vec<f64> = (0..samples)
        .map(|i| y_max * i as f64 / (samples - 1) as f64)
        .collect();
    let phi = layer_drop_at(z.value, e, &y_grid)?;
    let c_plus = phi.iter().map(|p| e.bulk_plus() * (-e.zp() * p).exp()).collect();
    let c_minus = phi.iter().map(|p| e.bulk_minus() * (-e.zm() * p).exp()).collect();
    Ok(LayerProfile {
        zeta: *z,
        y_grid,
        phi,
        c_plus,
        c_minus,
    })
}
