//! Electrolyte, stack geometry, drive and scaling parameters.
//!
//! Everything downstream works in scaled variables: lengths in units of the
//! half-cell width, potentials in thermal voltages, concentrations in units
//! of the reference concentration and times in units of the RC time
//! `tau_c`. Physical units only enter through [`nondimensionalize`].

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Vacuum permittivity [F/m].
pub const VACUUM_PERMITTIVITY: f64 = 8.8541878128e-12;
/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Boltzmann constant [J/K].
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Avogadro constant [1/mol].
pub const AVOGADRO: f64 = 6.02214076e23;

/// Binary electrolyte with integer valences `z_plus > 0 > z_minus`.
///
/// Bulk concentrations are fixed by electroneutrality to `|z_minus|` for the
/// cation and `|z_plus|` for the anion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectrolyteSpec {
    z_plus: i32,
    z_minus: i32,
}

impl ElectrolyteSpec {
    pub fn new(z_plus: i32, z_minus: i32) -> Result<Self> {
        if z_plus < 1 {
            return param(format!("z_plus must be >= 1, got {z_plus}"));
        }
        if z_minus > -1 {
            return param(format!("z_minus must be <= -1, got {z_minus}"));
        }
        Ok(Self { z_plus, z_minus })
    }

    /// Symmetric `z:z` electrolyte.
    pub fn symmetric(z: i32) -> Result<Self> {
        Self::new(z, -z)
    }

    pub fn z_plus(&self) -> i32 {
        self.z_plus
    }

    pub fn z_minus(&self) -> i32 {
        self.z_minus
    }

    pub fn zp(&self) -> f64 {
        f64::from(self.z_plus)
    }

    pub fn zm(&self) -> f64 {
        f64::from(self.z_minus)
    }

    /// Bulk cation concentration `|z_minus|`.
    pub fn bulk_plus(&self) -> f64 {
        -self.zm()
    }

    /// Bulk anion concentration `|z_plus|`.
    pub fn bulk_minus(&self) -> f64 {
        self.zp()
    }

    pub fn is_symmetric(&self) -> bool {
        self.z_plus == -self.z_minus
    }

    /// Conductivity constant `z_-^2 z_+ - z_+^2 z_-`.
    pub fn alpha(&self) -> f64 {
        let (zp, zm) = (self.zp(), self.zm());
        zm * zm * zp - zp * zp * zm
    }

    /// Local space charge `z_+ c_+ + z_- c_-`.
    pub fn charge_density(&self, c_plus: f64, c_minus: f64) -> f64 {
        self.zp() * c_plus + self.zm() * c_minus
    }

    /// Normalized salt concentration `(z_+ c_+ - z_- c_-)/(2 z_+ |z_-|)`, equal to 1 in the
    /// undisturbed bulk.
    pub fn salt(&self, c_plus: f64, c_minus: f64) -> f64 {
        (self.zp() * c_plus - self.zm() * c_minus) / (-2.0 * self.zp() * self.zm())
    }
}

/// Geometry of the `2n` stack electrodes on the rescaled cell `[-1, 1]`.
///
/// Stacks sit at `±x_k` with `x_k = L + (k-1) h`, `h = H/(n-1)` and `L + H = 1`.
/// A single stack per side (`n = 1`) is the two-plate cell with `H = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackGeometry {
    n: usize,
    bulk_half_width: f64,
    electrode_width: f64,
}

impl StackGeometry {
    /// Geometry with `n` stacks per side and central bulk half-width `L`; `H = 1 - L`.
    pub fn new(n: usize, bulk_half_width: f64) -> Result<Self> {
        Self::with_widths(n, bulk_half_width, 1.0 - bulk_half_width)
    }

    /// Two-plate cell (`n = 1`, `L = 1`, `H = 0`).
    pub fn two_plate() -> Self {
        Self {
            n: 1,
            bulk_half_width: 1.0,
            electrode_width: 0.0,
        }
    }

    /// Geometry from both widths; they must add up to one.
    pub fn with_widths(n: usize, bulk_half_width: f64, electrode_width: f64) -> Result<Self> {
        if n == 0 {
            return param("n must be >= 1");
        }
        if !(bulk_half_width > 0.0 && bulk_half_width <= 1.0) {
            return param(format!("L must lie in (0, 1], got {bulk_half_width}"));
        }
        if !(electrode_width >= 0.0) {
            return param(format!("H must be >= 0, got {electrode_width}"));
        }
        if ((bulk_half_width + electrode_width) - 1.0).abs() > 1e-12 {
            return param(format!(
                "L + H must equal 1, got L = {bulk_half_width}, H = {electrode_width}"
            ));
        }
        if n == 1 && electrode_width != 0.0 {
            return param(format!("n = 1 requires H = 0 (got H = {electrode_width})"));
        }
        if n >= 2 && electrode_width <= 0.0 {
            return param("n >= 2 requires H > 0");
        }
        Ok(Self {
            n,
            bulk_half_width,
            electrode_width,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Central bulk half-width `L`.
    pub fn bulk_half_width(&self) -> f64 {
        self.bulk_half_width
    }

    /// Electrode region width `H`.
    pub fn electrode_width(&self) -> f64 {
        self.electrode_width
    }

    /// Stack spacing `h`, undefined for the two-plate cell.
    pub fn spacing(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.electrode_width / (self.n - 1) as f64)
    }

    /// Ratio `H / L`.
    pub fn ratio(&self) -> f64 {
        self.electrode_width / self.bulk_half_width
    }

    /// Positive stack positions `x_1 < ... < x_n = 1`.
    pub fn positions(&self) -> Vec<f64> {
        match self.spacing() {
            None => vec![1.0],
            Some(h) => (0..self.n)
                .map(|k| {
                    if k + 1 == self.n {
                        1.0
                    } else {
                        self.bulk_half_width + k as f64 * h
                    }
                })
                .collect(),
        }
    }

    /// All `2n` stack positions in increasing order: `-x_n, ..., -x_1, x_1, ..., x_n`.
    pub fn spatial_positions(&self) -> Vec<f64> {
        let pos = self.positions();
        pos.iter()
            .rev()
            .map(|x| -x)
            .chain(pos.iter().copied())
            .collect()
    }
}

/// Applied potentials on the left (`v_minus`) and right (`v_plus`) stacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub v_plus: f64,
    pub v_minus: f64,
}

impl DriveSpec {
    pub fn new(v_plus: f64, v_minus: f64) -> Result<Self> {
        if !v_plus.is_finite() || !v_minus.is_finite() {
            return param("applied potentials must be finite");
        }
        Ok(Self { v_plus, v_minus })
    }

    /// Antisymmetric drive `V_± = ±v`.
    pub fn symmetric(v: f64) -> Self {
        Self {
            v_plus: v,
            v_minus: -v,
        }
    }

    /// Total applied voltage `V_+ - V_-`.
    pub fn difference(&self) -> f64 {
        self.v_plus - self.v_minus
    }
}

/// Physical inputs for [`nondimensionalize`], all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalInputs {
    /// Relative dielectric constant of the solvent.
    pub relative_permittivity: f64,
    /// Temperature [K].
    pub temperature: f64,
    /// Reference concentration `c_0` [mol/m^3] (1 mol/m^3 = 1 mM).
    pub reference_concentration: f64,
    /// Common ionic diffusivity [m^2/s].
    pub diffusivity: f64,
    /// Half-cell width `D` [m].
    pub half_width: f64,
}

/// Small parameter and time scales of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    /// Screening length over half-cell width.
    pub epsilon: f64,
    /// Screening length `l_0` [m], when physical inputs are known.
    pub screening_length: Option<f64>,
    /// RC time `l_0 D / D_0` [s].
    pub tau_c: Option<f64>,
    /// Diffusion time `D^2 / D_0` [s].
    pub tau_bar: Option<f64>,
}

impl Scales {
    /// Purely dimensionless scales.
    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return param(format!("epsilon must be > 0, got {epsilon}"));
        }
        Ok(Self {
            epsilon,
            screening_length: None,
            tau_c: None,
            tau_bar: None,
        })
    }

    /// Converts a scaled time to seconds, when `tau_c` is known.
    pub fn to_seconds(&self, t: f64) -> Option<f64> {
        self.tau_c.map(|tc| t * tc)
    }

    /// Converts seconds to scaled time, when `tau_c` is known.
    pub fn from_seconds(&self, seconds: f64) -> Option<f64> {
        self.tau_c.map(|tc| seconds / tc)
    }
}

/// Computes `epsilon = l_0 / D`, `tau_c = l_0 D / D_0` and `tau_bar = D^2 / D_0`
/// with `l_0 = sqrt(eps_0 eps_r k_B T / (e^2 c_0 N_A))`.
pub fn nondimensionalize(p: &PhysicalInputs) -> Result<Scales> {
    let fields = [
        ("relative_permittivity", p.relative_permittivity),
        ("temperature", p.temperature),
        ("reference_concentration", p.reference_concentration),
        ("diffusivity", p.diffusivity),
        ("half_width", p.half_width),
    ];
    for (name, v) in fields {
        if !(v > 0.0 && v.is_finite()) {
            return param(format!("{name} must be strictly positive, got {v}"));
        }
    }
    let number_density = p.reference_concentration * AVOGADRO;
    let l0 = (VACUUM_PERMITTIVITY * p.relative_permittivity * BOLTZMANN * p.temperature
        / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * number_density))
        .sqrt();
    Ok(Scales {
        epsilon: l0 / p.half_width,
        screening_length: Some(l0),
        tau_c: Some(l0 * p.half_width / p.diffusivity),
        tau_bar: Some(p.half_width * p.half_width / p.diffusivity),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_examples() {
        assert_eq!(ElectrolyteSpec::new(1, -1).unwrap().alpha(), 2.0);
        assert_eq!(ElectrolyteSpec::new(2, -1).unwrap().alpha(), 6.0);
        assert_eq!(ElectrolyteSpec::new(3, -2).unwrap().alpha(), 30.0);
    }

    #[test]
    fn rejects_bad_valences() {
        assert!(ElectrolyteSpec::new(0, -1).is_err());
        assert!(ElectrolyteSpec::new(1, 0).is_err());
        assert!(ElectrolyteSpec::new(1, 2).is_err());
    }

    #[test]
    fn bulk_is_neutral() {
        for (zp, zm) in [(1, -1), (2, -1), (3, -2), (1, -3)] {
            let e = ElectrolyteSpec::new(zp, zm).unwrap();
            assert_eq!(e.charge_density(e.bulk_plus(), e.bulk_minus()), 0.0);
        }
    }

    #[test]
    fn two_plate_geometry() {
        let g = StackGeometry::new(1, 1.0).unwrap();
        assert_eq!(g, StackGeometry::two_plate());
        assert_eq!(g.positions(), vec![1.0]);
        assert_eq!(g.spatial_positions(), vec![-1.0, 1.0]);
        assert!(g.spacing().is_none());
        assert!(StackGeometry::with_widths(1, 0.5, 0.5).is_err());
        assert!(StackGeometry::new(1, 0.5).is_err());
    }

    #[test]
    fn five_stack_geometry() {
        let g = StackGeometry::new(5, 0.5).unwrap();
        assert_eq!(g.spacing(), Some(0.125));
        assert_eq!(g.positions(), vec![0.5, 0.625, 0.75, 0.875, 1.0]);
        assert!(StackGeometry::with_widths(3, 0.5, 0.4).is_err());
    }

    #[test]
    fn equal_lengths_give_unit_epsilon() {
        let p = PhysicalInputs {
            relative_permittivity: 78.5,
            temperature: 298.0,
            reference_concentration: 1.0,
            diffusivity: 1e-9,
            half_width: 1.0,
        };
        let l0 = nondimensionalize(&p).unwrap().screening_length.unwrap();
        let s = nondimensionalize(&PhysicalInputs { half_width: l0, ..p }).unwrap();
        assert!((s.epsilon - 1.0).abs() < 1e-15);
    }

    #[test]
    fn water_millimolar_scales() {
        // Independent high-precision evaluation of l_0 for water at 298 K, 1 mM.
        let p = PhysicalInputs {
            relative_permittivity: 78.5,
            temperature: 298.0,
            reference_concentration: 1.0,
            diffusivity: 1e-9,
            half_width: 1e-6,
        };
        let s = nondimensionalize(&p).unwrap();
        assert!((s.screening_length.unwrap() / 1.360_107_144_004_538_4e-8 - 1.0).abs() < 1e-13);
        assert!((s.epsilon / 0.013_601_071_440_045_385 - 1.0).abs() < 1e-13);
        assert!((s.tau_c.unwrap() / 1.360_107_144_004_538_2e-5 - 1.0).abs() < 1e-13);
        assert!((s.tau_bar.unwrap() / 1e-3 - 1.0).abs() < 1e-13);
        // Round trip back to seconds.
        let t = 3.7;
        let secs = s.to_seconds(t).unwrap();
        assert!((s.from_seconds(secs).unwrap() - t).abs() < 1e-14);
    }

    #[test]
    fn doubling_width_halves_epsilon() {
        let p = PhysicalInputs {
            relative_permittivity: 78.5,
            temperature: 298.0,
            reference_concentration: 10.0,
            diffusivity: 2e-9,
            half_width: 5e-7,
        };
        let a = nondimensionalize(&p).unwrap();
        let b = nondimensionalize(&PhysicalInputs {
            half_width: 1e-6,
            ..p
        })
        .unwrap();
        assert!((b.epsilon * 2.0 / a.epsilon - 1.0).abs() < 1e-14);
        assert!((b.tau_bar.unwrap() / a.tau_bar.unwrap() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn non_positive_inputs_rejected() {
        let p = PhysicalInputs {
            relative_permittivity: 78.5,
            temperature: 0.0,
            reference_concentration: 1.0,
            diffusivity: 1e-9,
            half_width: 1e-6,
        };
        assert!(nondimensionalize(&p).is_err());
    }

    proptest! {
        #[test]
        fn alpha_positive(zp in 1i32..6, zm in -6i32..=-1) {
            prop_assert!(ElectrolyteSpec::new(zp, zm).unwrap().alpha() > 0.0);
        }

        #[test]
        fn positions_equally_spaced(n in 2usize..200, l in 0.05f64..0.95) {
            let g = StackGeometry::new(n, l).unwrap();
            let h = g.spacing().unwrap();
            let x = g.positions();
            prop_assert_eq!(x[0], l);
            prop_assert_eq!(*x.last().unwrap(), 1.0);
            for w in x.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!(((w[1] - w[0]) - h).abs() < 1e-13);
            }
        }
    }
}
