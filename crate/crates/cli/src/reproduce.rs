//! Preconfigured experiments behind the published figures.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;

use crate::config::{ExperimentConfig, Model};
use crate::manifest::RunManifest;
use crate::runner::{execute, finish};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Desk,
    Paper,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_possible_value().expect("no skipped variants").get_name())
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_possible_value().expect("no skipped variants").get_name())
    }
}

/// Field-solver screening length of the published runs.
const PAPER_EPSILON: f64 = 0.005;

fn base(model: Model, prefix: &str, z_plus: i32) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(model);
    c.electrolyte.z_plus = z_plus;
    c.geometry.n = 5;
    c.geometry.electrode_width = 0.5;
    c.output.prefix = prefix.into();
    c
}

fn salts() -> [(&'static str, i32); 2] {
    [("symmetric_", 1), ("asymmetric_", 2)]
}

/// The configurations run for `fig` and the substitutions made at `scale`.
pub fn figure_configs(fig: Figure, scale: Scale) -> (Vec<ExperimentConfig>, Vec<String>) {
    let mut cfgs = Vec::new();
    let mut subs = Vec::new();
    let desk = scale == Scale::Desk;
    match fig {
        Figure::Fig2 => {
            for (prefix, zp) in salts() {
                let mut c = base(Model::MaeCompare, prefix, zp);
                c.numerics.epsilon = if desk { 0.02 } else { PAPER_EPSILON };
                c.numerics.t_final = 60.0;
                c.numerics.outputs = 120;
                c.numerics.snapshot_times = vec![0.1, 1.0, 5.0, 10.0, 60.0];
                if desk {
                    subs.push(format!("{prefix}: numerics.epsilon = 0.02 in place of {PAPER_EPSILON}"));
                }
                cfgs.push(c);
            }
        }
        Figure::Fig3 | Figure::Fig4 => {
            let (prefix, zp) = salts()[usize::from(fig == Figure::Fig4)];
            let mut c = base(Model::Circuit, prefix, zp);
            c.numerics.epsilon = PAPER_EPSILON;
            c.numerics.t_final = 60.0;
            c.numerics.snapshot_times = vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 60.0];
            cfgs.push(c);
        }
        Figure::Fig5 => {
            for (prefix, zp) in salts() {
                let mut c = base(Model::TimescaleSweep, prefix, zp);
                c.sweep.n_values = (5..=30).collect();
                c.sweep.electrode_widths = vec![0.25, 0.5, 0.75];
                cfgs.push(c);
            }
        }
        Figure::Fig6 => {
            let eps = if desk { 0.01 } else { PAPER_EPSILON };
            for n in [1usize, 3, 5, 6] {
                let mut c = base(Model::Relaxation, &format!("n{n}_"), 1);
                c.geometry.n = n;
                c.geometry.electrode_width = if n == 1 { 0.0 } else { 0.5 };
                c.relaxation.voltages = if n == 1 { vec![0.1, 1.0, 2.0] } else { vec![2.0] };
                c.numerics.epsilon = eps;
                c.numerics.dt = 0.05;
                c.numerics.t_final = 1.0 / eps;
                c.numerics.log_times = true;
                c.numerics.outputs = 400;
                cfgs.push(c);
            }
            if desk {
                subs.push(format!("numerics.epsilon = 0.01 in place of {PAPER_EPSILON}"));
            }
        }
    }
    (cfgs, subs)
}

/// Runs every configuration of `fig` into `dir` under a single manifest.
pub fn reproduce(fig: Figure, scale: Scale, dir: &Path) -> RunManifest {
    let start = Instant::now();
    let mut m = RunManifest::new(&format!("reproduce {fig} --scale {scale}"));
    let (cfgs, subs) = figure_configs(fig, scale);
    m.substitutions = subs;
    let r = cfgs.iter().try_for_each(|c| execute(c, dir, &mut m));
    finish(m, start, r, dir)
}
