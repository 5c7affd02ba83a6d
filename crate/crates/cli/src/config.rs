//! Experiment configuration: a sectioned TOML file with defaults for every key.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stackcap_core::circuit::IntegrationControl;
use stackcap_core::pnp::{Grid1D, GridSpec, NewtonControl, PnpConfig, RefineOptions};
use stackcap_core::{DriveSpec, ElectrolyteSpec, StackGeometry};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Circuit,
    Pnp,
    MaeCompare,
    TimescaleSweep,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    #[serde(default)]
    pub electrolyte: ElectrolyteSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub relaxation: RelaxationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectrolyteSection {
    pub z_plus: i32,
    pub z_minus: i32,
}

impl Default for ElectrolyteSection {
    fn default() -> Self {
        Self { z_plus: 1, z_minus: -1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Stacks per side.
    pub n: usize,
    /// Electrode region width `H`; the bulk half-width is `1 - H` unless given.
    pub electrode_width: f64,
    pub bulk_half_width: Option<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            n: 1,
            electrode_width: 0.0,
            bulk_half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub v_plus: f64,
    pub v_minus: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            v_plus: 0.2,
            v_minus: -0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Refined,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub epsilon: f64,
    pub t_final: f64,
    /// Circuit output samples on `[0, t_final]`.
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Field-solver step.
    pub dt: f64,
    pub dt_initial: Option<f64>,
    pub grid: GridKind,
    /// Cell count of the uniform grid.
    pub cells: usize,
    /// Refinement factor of the clustered grid (divides spacings and growth excess).
    pub refinement: f64,
    /// Field-solver output count.
    pub outputs: usize,
    /// Space field-solver outputs logarithmically from `t_first`.
    pub log_times: bool,
    pub t_first: f64,
    pub snapshot_times: Vec<f64>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            t_final: 30.0,
            samples: 601,
            rtol: 1e-8,
            atol: 1e-10,
            dt: 0.02,
            dt_initial: Some(1e-4),
            grid: GridKind::Refined,
            cells: 400,
            refinement: 1.0,
            outputs: 200,
            log_times: false,
            t_first: 1e-3,
            snapshot_times: Vec::new(),
            newton_tol: 1e-10,
            newton_max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_values: Vec<usize>,
    pub electrode_widths: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n_values: (5..=30).collect(),
            electrode_widths: vec![0.25, 0.5, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxationSection {
    /// Symmetric drive amplitudes `V_± = ±v`, one run each; the `drive` section is ignored.
    pub voltages: Vec<f64>,
    /// Left stack whose charge is tracked, counted from the centre (1 = innermost).
    pub stack: usize,
    /// Resolution floor of the biexponential fit.
    pub fit_floor: f64,
}

impl Default for RelaxationSection {
    fn default() -> Self {
        Self {
            voltages: vec![0.1, 1.0, 2.0],
            stack: 1,
            fit_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Prefix prepended to every output file name.
    pub prefix: String,
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(violations))
    }
}

impl ExperimentConfig {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            electrolyte: Default::default(),
            geometry: Default::default(),
            drive: Default::default(),
            numerics: Default::default(),
            sweep: Default::default(),
            relaxation: Default::default(),
            output: Default::default(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn bulk_half_width(&self) -> f64 {
        self.geometry
            .bulk_half_width
            .unwrap_or(1.0 - self.geometry.electrode_width)
    }

    pub fn electrolyte(&self) -> Result<ElectrolyteSpec, CliError> {
        Ok(ElectrolyteSpec::new(self.electrolyte.z_plus, self.electrolyte.z_minus)?)
    }

    pub fn geometry(&self) -> Result<StackGeometry, CliError> {
        self.geometry_with(self.geometry.n, self.geometry.electrode_width, self.geometry.bulk_half_width)
    }

    fn geometry_with(&self, n: usize, h: f64, l: Option<f64>) -> Result<StackGeometry, CliError> {
        Ok(StackGeometry::with_widths(n, l.unwrap_or(1.0 - h), h)?)
    }

    pub fn drive(&self) -> Result<DriveSpec, CliError> {
        Ok(DriveSpec::new(self.drive.v_plus, self.drive.v_minus)?)
    }

    pub fn integration_control(&self) -> IntegrationControl {
        IntegrationControl {
            rtol: self.numerics.rtol,
            atol: self.numerics.atol,
            samples: self.numerics.samples,
            ..Default::default()
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        let nm = &self.numerics;
        match nm.grid {
            GridKind::Uniform => GridSpec::Uniform { cells: nm.cells },
            GridKind::Refined => {
                let base = RefineOptions::for_epsilon(nm.epsilon);
                let f = nm.refinement;
                GridSpec::Refined(RefineOptions {
                    h_min: base.h_min / f,
                    growth: 1.0 + (base.growth - 1.0) / f,
                    h_max: base.h_max / f,
                })
            }
        }
    }

    /// Field-solver controls with the output schedule of this configuration.
    pub fn pnp_config(&self, equilibrate: bool) -> PnpConfig {
        let nm = &self.numerics;
        let mut c = PnpConfig::new(nm.epsilon, nm.dt, nm.t_final);
        c.grid = self.grid_spec();
        c.dt_initial = nm.dt_initial;
        c.output_times = (1..=nm.outputs)
            .map(|k| nm.t_final * k as f64 / nm.outputs as f64)
            .collect();
        if nm.log_times {
            c = c.log_outputs(nm.t_first, nm.outputs);
        }
        let mut snaps = nm.snapshot_times.clone();
        snaps.sort_by(f64::total_cmp);
        snaps.dedup();
        c.snapshot_times = snaps;
        c.newton = NewtonControl {
            tol: nm.newton_tol,
            max_iter: nm.newton_max_iter,
        };
        c.equilibrate = equilibrate;
        c
    }

    /// Every semantic violation, each naming the offending keys.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let (zp, zm) = (self.electrolyte.z_plus, self.electrolyte.z_minus);
        if zp <= 0 {
            v.push(format!("electrolyte.z_plus must be a positive integer, got {zp}"));
        }
        if zm >= 0 {
            v.push(format!("electrolyte.z_minus must be a negative integer, got {zm}"));
        }
        let g = &self.geometry;
        if g.n == 0 {
            v.push("geometry.n must be at least 1".into());
        }
        if g.n == 1 && g.electrode_width != 0.0 {
            v.push(format!(
                "geometry.n = 1 requires geometry.electrode_width = 0, got {}",
                g.electrode_width
            ));
        }
        if g.n >= 2 && !(g.electrode_width > 0.0 && g.electrode_width < 1.0) {
            v.push(format!(
                "geometry.electrode_width must lie in (0, 1) when geometry.n >= 2, got {}",
                g.electrode_width
            ));
        }
        if let Some(l) = g.bulk_half_width {
            if (l + g.electrode_width - 1.0).abs() > 1e-12 {
                v.push(format!(
                    "geometry.bulk_half_width + geometry.electrode_width must equal 1, got {}",
                    l + g.electrode_width
                ));
            }
        }
        for (key, val) in [("drive.v_plus", self.drive.v_plus), ("drive.v_minus", self.drive.v_minus)] {
            if !val.is_finite() {
                v.push(format!("{key} must be finite"));
            }
        }
        let nm = &self.numerics;
        let positive = [
            ("numerics.epsilon", nm.epsilon),
            ("numerics.t_final", nm.t_final),
            ("numerics.rtol", nm.rtol),
            ("numerics.atol", nm.atol),
            ("numerics.dt", nm.dt),
            ("numerics.refinement", nm.refinement),
            ("numerics.t_first", nm.t_first),
            ("numerics.newton_tol", nm.newton_tol),
        ];
        for (key, val) in positive {
            if !(val > 0.0 && val.is_finite()) {
                v.push(format!("{key} must be positive, got {val}"));
            }
        }
        if let Some(d) = nm.dt_initial {
            if !(d > 0.0 && d.is_finite()) {
                v.push(format!("numerics.dt_initial must be positive, got {d}"));
            }
        }
        if nm.samples < 2 {
            v.push(format!("numerics.samples must be at least 2, got {}", nm.samples));
        }
        if nm.outputs < 1 {
            v.push("numerics.outputs must be at least 1".into());
        }
        if nm.log_times && nm.t_first >= nm.t_final {
            v.push("numerics.t_first must be below numerics.t_final".into());
        }
        if nm.newton_max_iter == 0 {
            v.push("numerics.newton_max_iter must be at least 1".into());
        }
        if nm.grid == GridKind::Uniform && (nm.cells < 2 || !nm.cells.is_multiple_of(2)) {
            v.push(format!("numerics.cells must be even and at least 2, got {}", nm.cells));
        }
        for t in &nm.snapshot_times {
            if !(*t > 0.0 && *t <= nm.t_final) {
                v.push(format!("numerics.snapshot_times entry {t} is outside (0, numerics.t_final]"));
            }
        }
        match self.model {
            Model::TimescaleSweep => {
                let s = &self.sweep;
                if s.n_values.is_empty() || s.electrode_widths.is_empty() {
                    v.push("sweep.n_values and sweep.electrode_widths must be non-empty".into());
                }
                for n in &s.n_values {
                    if !(2..=200).contains(n) {
                        v.push(format!("sweep.n_values entry {n} is outside [2, 200]"));
                    }
                }
                let mut sorted = s.n_values.clone();
                sorted.sort_unstable();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    v.push("sweep.n_values contains duplicates".into());
                }
                for h in &s.electrode_widths {
                    if !(*h > 0.0 && *h < 1.0) {
                        v.push(format!("sweep.electrode_widths entry {h} is outside (0, 1)"));
                    }
                }
            }
            Model::Relaxation => {
                let r = &self.relaxation;
                if r.voltages.is_empty() {
                    v.push("relaxation.voltages must be non-empty".into());
                }
                if r.voltages.iter().any(|x| !x.is_finite()) {
                    v.push("relaxation.voltages must be finite".into());
                }
                if r.stack == 0 || (g.n >= 1 && r.stack > g.n) {
                    v.push(format!("relaxation.stack must lie in [1, geometry.n], got {}", r.stack));
                }
                if !(r.fit_floor > 0.0 && r.fit_floor < 1.0) {
                    v.push(format!("relaxation.fit_floor must lie in (0, 1), got {}", r.fit_floor));
                }
                if nm.outputs < 20 {
                    v.push("numerics.outputs must be at least 20 for relaxation fits".into());
                }
            }
            _ => {}
        }
        // Field-solver grids must carry every stack.
        if v.is_empty() && matches!(self.model, Model::Pnp | Model::MaeCompare | Model::Relaxation) {
            if let Ok(geom) = self.geometry() {
                if let Err(e) = Grid1D::build(&geom, nm.epsilon, &self.grid_spec()) {
                    v.push(format!("numerics.grid: {e}"));
                }
            }
        }
        v
    }
}
