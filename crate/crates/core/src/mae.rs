//! Leading-order composite fields rebuilt from circuit zeta potentials.
//!
//! The outer potential is affine in each of the `2n - 1` sub-domains between
//! neighbouring stacks and equals `V_k - ζ_k` at stack `k`. Every diffuse layer adds
//! its Poisson-Boltzmann drop in the stretched distance `|x - x_k|/ε`, and the
//! concentrations follow from Boltzmann factors of the summed layer drops.

use serde::Serialize;

use crate::circuit::CircuitSystem;
use crate::edl;
use crate::error::{Error, Result};
use crate::pnp::{FieldState, Grid1D};

/// Layer corrections are dropped beyond this many screening lengths from a stack.
pub const LAYER_CUTOFF: f64 = 25.0;

/// Outer potential `slope * x + offset` in one sub-domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BulkSegment {
    pub left: f64,
    pub right: f64,
    /// Bulk current (potential gradient).
    pub slope: f64,
    pub offset: f64,
}

impl BulkSegment {
    pub fn value(&self, x: f64) -> f64 {
        self.slope * x + self.offset
    }
}

/// Outer solution in all sub-domains, left to right.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BulkFields {
    pub segments: Vec<BulkSegment>,
}

impl BulkFields {
    /// Outer potential at `x`; stacks belong to the segment on their left.
    pub fn potential(&self, x: f64) -> f64 {
        let seg = self
            .segments
            .iter()
            .find(|s| x <= s.right)
            .unwrap_or_else(|| self.segments.last().expect("at least one segment"));
        seg.value(x)
    }
}

/// Outer fields for the zeta potentials `zeta` (circuit state order).
pub fn bulk_fields(zeta: &[f64], s: &CircuitSystem) -> Result<BulkFields> {
    if zeta.len() != s.dim() {
        return Err(Error::Parameter(format!(
            "state has length {}, expected {}",
            zeta.len(),
            s.dim()
        )));
    }
    let x = s.stack_positions();
    let v = s.stack_potentials();
    let segments = s
        .currents(zeta)
        .into_iter()
        .enumerate()
        .map(|(i, slope)| BulkSegment {
            left: x[i],
            right: x[i + 1],
            slope,
            offset: (v[i] - zeta[i]) - slope * x[i],
        })
        .collect();
    Ok(BulkFields { segments })
}

/// Composite fields on a grid, tagged with the time of the zeta state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeField {
    pub field: FieldState,
    /// Validity warnings (overlapping layers, under-resolved layers).
    pub warnings: Vec<String>,
}

/// Builds the composite solution on `grid`.
pub fn composite_field(zeta: &[f64], s: &CircuitSystem, grid: &Grid1D, time: f64) -> Result<CompositeField> {
    let bulk = bulk_fields(zeta, s)?;
    let e = &s.electrolyte;
    let eps = grid.epsilon();
    let x = grid.nodes();
    let stacks = s.stack_positions();
    let mut warnings = Vec::new();
    if let Some(h) = s.geometry.spacing() {
        if h < 10.0 * eps {
            warnings.push(format!(
                "stack spacing {h} is below 10 epsilon = {}; layers overlap and the expansion loses validity",
                10.0 * eps
            ));
        }
    }
    let coarse = stacks.iter().any(|p| {
        let near = x.iter().filter(|xi| (*xi - p).abs() <= eps).count();
        near < 4
    });
    if coarse {
        warnings.push(format!("grid resolves fewer than 3 nodes per screening length {eps}"));
    }
    let cutoff = LAYER_CUTOFF * eps;
    let mut drop = vec![0.0; x.len()];
    for (k, (&p, &z)) in stacks.iter().zip(zeta).enumerate() {
        // Layers on the sides facing the interior of the cell.
        let sides: &[f64] = match k {
            0 => &[1.0],
            _ if k + 1 == stacks.len() => &[-1.0],
            _ => &[-1.0, 1.0],
        };
        for &dir in sides {
            // Each layer lives in the sub-domain between this stack and its neighbour.
            let neighbour = if dir > 0.0 { stacks[k + 1] } else { stacks[k - 1] };
            let reach = cutoff.min((neighbour - p).abs());
            let mut idx: Vec<usize> = (0..x.len())
                .filter(|&i| {
                    let d = (x[i] - p) * dir;
                    d > 0.0 && d < reach
                })
                .collect();
            idx.sort_by(|a, b| ((x[*a] - p) * dir).total_cmp(&((x[*b] - p) * dir)));
            let y: Vec<f64> = idx.iter().map(|&i| (x[i] - p) * dir / eps).collect();
            let phi = edl::layer_drop_at(z, e, &y)?;
            for (i, v) in idx.into_iter().zip(phi) {
                drop[i] += v;
            }
        }
    }
    for (i, xi) in x.iter().enumerate() {
        if let Some(k) = stacks.iter().position(|p| p == xi) {
            drop[i] = zeta[k];
        }
    }
    let phi: Vec<f64> = x.iter().zip(&drop).map(|(xi, d)| bulk.potential(*xi) + d).collect();
    let c_plus = drop.iter().map(|d| e.bulk_plus() * (-e.zp() * d).exp()).collect();
    let c_minus = drop.iter().map(|d| e.bulk_minus() * (-e.zm() * d).exp()).collect();
    Ok(CompositeField {
        field: FieldState {
            time,
            c_plus,
            c_minus,
            phi,
        },
        warnings,
    })
}

/// Relative errors of one field against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldErrors {
    pub linf: f64,
    pub l2: f64,
}

/// Relative errors of the composite against the reference for all three fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareReport {
    pub phi: FieldErrors,
    pub c_plus: FieldErrors,
    pub c_minus: FieldErrors,
}

/// Errors of `approx` (on nodes `x_approx`) against `reference` (on nodes `x_ref`),
/// normalized by the reference's largest magnitude. `approx` is interpolated linearly.
pub fn compare(approx: &FieldState, x_approx: &[f64], reference: &FieldState, x_ref: &[f64]) -> Result<CompareReport> {
    check_nodes(x_approx, approx)?;
    check_nodes(x_ref, reference)?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    if !same(x_approx[0], x_ref[0]) || !same(*x_approx.last().unwrap(), *x_ref.last().unwrap()) {
        return Err(Error::Parameter("fields live on different domains".into()));
    }
    let one = |a: &[f64], r: &[f64]| -> FieldErrors {
        let ai: Vec<f64> = if x_approx == x_ref { a.to_vec() } else { interpolate(x_approx, a, x_ref) };
        let diff: Vec<f64> = ai.iter().zip(r).map(|(p, q)| p - q).collect();
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dmax = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l2 = |f: &[f64]| -> f64 {
            x_ref
                .windows(2)
                .zip(f.windows(2))
                .map(|(x, v)| 0.5 * (v[0] * v[0] + v[1] * v[1]) * (x[1] - x[0]))
                .sum::<f64>()
                .sqrt()
        };
        let rl2 = l2(r);
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else if num == 0.0 { 0.0 } else { f64::INFINITY };
        FieldErrors {
            linf: ratio(dmax, rmax),
            l2: ratio(l2(&diff), rl2),
        }
    };
    Ok(CompareReport {
        phi: one(&approx.phi, &reference.phi),
        c_plus: one(&approx.c_plus, &reference.c_plus),
        c_minus: one(&approx.c_minus, &reference.c_minus),
    })
}

fn check_nodes(x: &[f64], f: &FieldState) -> Result<()> {
    if x.len() < 2 || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("nodes must be strictly increasing".into()));
    }
    if f.phi.len() != x.len() || f.c_plus.len() != x.len() || f.c_minus.len() != x.len() {
        return Err(Error::Parameter("field length does not match its nodes".into()));
    }
    Ok(())
}

/// Piecewise-linear interpolation of `(x, f)` at `at`, clamped at the ends.
pub fn interpolate(x: &[f64], f: &[f64], at: &[f64]) -> Vec<f64> {
    at.iter()
        .map(|&p| {
            let k = x.partition_point(|v| *v <= p).clamp(1, x.len() - 1);
            let t = ((p - x[k - 1]) / (x[k] - x[k - 1])).clamp(0.0, 1.0);
            f[k - 1] + t * (f[k] - f[k - 1])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{assemble, equilibrium};
    use crate::pnp::RefineOptions;
    use crate::{DriveSpec, ElectrolyteSpec, StackGeometry};

    fn system(n: usize, v: f64, zp: i32, zm: i32) -> CircuitSystem {
        let g = if n == 1 {
            StackGeometry::two_plate()
        } else {
            StackGeometry::with_widths(n, 0.5, 0.5).unwrap()
        };
        assemble(&g, &DriveSpec::symmetric(v), &ElectrolyteSpec::new(zp, zm).unwrap()).unwrap()
    }

    #[test]
    fn initial_bulk_fields() {
        let s = system(4, 0.3, 1, -1);
        let b = bulk_fields(&vec![0.0; 8], &s).unwrap();
        assert_eq!(b.segments.len(), 7);
        for (i, seg) in b.segments.iter().enumerate() {
            if i == 3 {
                assert!((seg.slope - 0.6).abs() < 1e-15);
                assert!(seg.offset.abs() < 1e-15);
            } else {
                assert_eq!(seg.slope, 0.0);
                assert_eq!(seg.offset, if i < 3 { -0.3 } else { 0.3 });
            }
        }
        let s = assemble(
            &StackGeometry::two_plate(),
            &DriveSpec::new(0.5, -0.1).unwrap(),
            &ElectrolyteSpec::symmetric(1).unwrap(),
        )
        .unwrap();
        let b = bulk_fields(&[0.0, 0.0], &s).unwrap();
        assert!((b.segments[0].offset - 0.2).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_bulk_is_flat() {
        let s = system(3, 0.5, 1, -1);
        let z = equilibrium(&s).unwrap();
        for seg in bulk_fields(&z, &s).unwrap().segments {
            assert!(seg.slope.abs() < 1e-10 && seg.offset.abs() < 1e-10);
        }
        let s = system(3, 0.5, 2, -1);
        let z = equilibrium(&s).unwrap();
        let b = bulk_fields(&z, &s).unwrap();
        for seg in &b.segments {
            assert!(seg.slope.abs() < 1e-10);
        }
        assert!(b.segments[0].offset.abs() > 1e-3);
    }

    #[test]
    fn zero_state_is_neutral() {
        let s = system(2, 0.0, 1, -1);
        let g = Grid1D::refined(&s.geometry, 0.02, &RefineOptions::for_epsilon(0.02)).unwrap();
        let c = composite_field(&[0.0; 4], &s, &g, 0.0).unwrap();
        assert!(c.field.phi.iter().all(|p| *p == 0.0));
        assert!(c.field.c_plus.iter().chain(&c.field.c_minus).all(|v| *v == 1.0));
    }

    #[test]
    fn composite_properties() {
        let eps = 0.01;
        let s = system(3, 0.4, 2, -1);
        let z = crate::circuit::integrate_at(&s, &[0.0, 0.7], &Default::default())
            .unwrap()
            .final_state()
            .to_vec();
        let g = Grid1D::refined(&s.geometry, eps, &RefineOptions::for_epsilon(eps)).unwrap();
        let c = composite_field(&z, &s, &g, 0.7).unwrap();
        assert!(c.warnings.is_empty(), "{:?}", c.warnings);
        let f = &c.field;
        let e = s.electrolyte;
        let v = s.stack_potentials();
        for (k, i) in g.stack_nodes().iter().enumerate() {
            assert!((f.phi[*i] - v[k]).abs() <= 1e-6);
        }
        let stacks = s.stack_positions();
        for (i, x) in g.nodes().iter().enumerate() {
            let dist = stacks.iter().fold(f64::INFINITY, |m, p| m.min((x - p).abs()));
            if dist > LAYER_CUTOFF * eps {
                assert!((f.c_plus[i] - 1.0).abs() < 1e-8 && (f.c_minus[i] - 2.0).abs() < 1e-8);
                assert!(e.charge_density(f.c_plus[i], f.c_minus[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn overlapping_layers_warn() {
        let s = system(5, 0.2, 1, -1);
        let g = Grid1D::refined(&s.geometry, 0.02, &RefineOptions::for_epsilon(0.02)).unwrap();
        let c = composite_field(&[0.0; 10], &s, &g, 0.0).unwrap();
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn compare_identical_is_zero() {
        let x = vec![-1.0, 0.0, 1.0];
        let f = FieldState {
            time: 0.0,
            c_plus: vec![1.0, 2.0, 1.0],
            c_minus: vec![1.0, 0.5, 1.0],
            phi: vec![-1.0, 0.0, 1.0],
        };
        let r = compare(&f, &x, &f, &x).unwrap();
        assert_eq!(r.phi.linf, 0.0);
        assert_eq!(r.c_plus.l2, 0.0);
        let fine = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
        let g = FieldState {
            time: 0.0,
            c_plus: vec![1.0, 1.5, 2.0, 1.5, 1.0],
            c_minus: vec![1.0, 0.75, 0.5, 0.75, 1.0],
            phi: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
        };
        let r = compare(&f, &x, &g, &fine).unwrap();
        assert!(r.phi.linf < 1e-15 && r.c_minus.linf < 1e-15);
        assert!(compare(&f, &[-1.0, 0.0, 2.0], &g, &fine).is_err());
    }
}
