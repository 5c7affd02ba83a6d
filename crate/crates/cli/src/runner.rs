//! Dispatch of a validated configuration to the solvers.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use stackcap_core::analysis::{self, RelaxationFit, SaltDepletion};
use stackcap_core::circuit::{self, CircuitSystem};
use stackcap_core::pnp::{self, FieldState, Grid1D};
use stackcap_core::timescale::{self, SweepFit};
use stackcap_core::{edl, mae, DriveSpec};

use crate::config::{ExperimentConfig, Model};
use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::output::{OutputDir, Table};

/// Circuit charge drift above which a trajectory is flagged.
pub const CHARGE_DRIFT_TOL: f64 = 1e-8;
/// Relative species-mass drift above which a field run is flagged.
pub const MASS_DRIFT_TOL: f64 = 1e-10;

/// Runs one configuration into `dir` and writes its manifest.
pub fn run_config(cfg: &ExperimentConfig, dir: &Path, command: &str) -> RunManifest {
    let start = Instant::now();
    let mut m = RunManifest::new(command);
    let r = execute(cfg, dir, &mut m);
    finish(m, start, r, dir)
}

/// Stamps the wall clock and error, then writes the manifest.
pub(crate) fn finish(mut m: RunManifest, start: Instant, r: Result<(), CliError>, dir: &Path) -> RunManifest {
    if let Err(e) = r {
        m.fail(&e);
    }
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Err(e) = m.write(dir) {
        if m.succeeded() {
            m.fail(&e);
        }
        eprintln!("cannot write manifest: {e}");
    }
    m
}

/// Manifest of an invocation that failed before any configuration was accepted.
pub fn finish_failed(command: &str, e: CliError, dir: &Path) -> RunManifest {
    finish(RunManifest::new(command), Instant::now(), Err(e), dir)
}

/// Runs one configuration, appending its outputs and flags to `m`.
pub fn execute(cfg: &ExperimentConfig, dir: &Path, m: &mut RunManifest) -> Result<(), CliError> {
    m.configs.push(cfg.clone());
    m.config_sha256.push(cfg.hash());
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(CliError::Config(v));
    }
    let mut out = OutputDir::new(dir, &cfg.output.prefix, &cfg.hash());
    let r = match cfg.model {
        Model::Circuit => run_circuit(cfg, &mut out, m),
        Model::Pnp => run_pnp(cfg, &mut out, m),
        Model::MaeCompare => run_mae_compare(cfg, &mut out, m),
        Model::TimescaleSweep => run_sweep(cfg, &mut out),
        Model::Relaxation => run_relaxation(cfg, &mut out, m),
    };
    m.outputs.append(&mut out.written);
    r
}

#[derive(Serialize)]
struct SpectrumSummary {
    tau_n: f64,
    lambda_c: f64,
    eigenvalues: Vec<f64>,
    zero_modes: usize,
    zeta_inf: Vec<f64>,
}

/// Eigen-analysis of the linearized circuit only; writes `spectrum.json`.
pub fn run_spectrum(cfg: &ExperimentConfig, dir: &Path, command: &str) -> RunManifest {
    let start = Instant::now();
    let mut m = RunManifest::new(command);
    m.configs.push(cfg.clone());
    m.config_sha256.push(cfg.hash());
    let mut out = OutputDir::new(dir, &cfg.output.prefix, &cfg.hash());
    let r = (|| {
        let v = cfg.violations();
        if !v.is_empty() {
            return Err(CliError::Config(v));
        }
        let s = circuit::assemble(&cfg.geometry()?, &cfg.drive()?, &cfg.electrolyte()?)?;
        let zeta_inf = circuit::equilibrium(&s)?;
        let spec = timescale::spectrum(&s, &zeta_inf)?;
        out.json(
            "spectrum.json",
            &SpectrumSummary {
                tau_n: spec.tau_n,
                lambda_c: spec.lambda_c,
                eigenvalues: spec.eigenvalues,
                zero_modes: spec.zero_modes,
                zeta_inf,
            },
        )
    })();
    m.outputs.append(&mut out.written);
    finish(m, start, r, dir)
}

/// Column labels in state order: `L{k}` / `R{k}` with `k = 1` next to the centre.
pub fn stack_labels(n: usize) -> Vec<String> {
    (0..2 * n)
        .map(|i| if i < n { format!("L{}", n - i) } else { format!("R{}", i - n + 1) })
        .collect()
}

fn flag(m: &mut RunManifest, cfg: &ExperimentConfig, name: &str, ok: bool) {
    m.convergence.insert(format!("{}{}", cfg.output.prefix, name), ok);
}

fn warn(m: &mut RunManifest, cfg: &ExperimentConfig, w: &str) {
    let w = format!("{}{}", cfg.output.prefix, w);
    if !m.warnings.contains(&w) {
        m.warnings.push(w);
    }
}

fn sorted_times(t: &[f64]) -> Vec<f64> {
    let mut v = t.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn field_table(f: &FieldState, x: &[f64], model: &str) -> Table {
    let mut t = Table::new(["x", "c_plus", "c_minus", "phi"])
        .meta("model", model)
        .meta("time", f.time);
    for i in 0..x.len() {
        t.push(vec![x[i], f.c_plus[i], f.c_minus[i], f.phi[i]]);
    }
    t
}

#[derive(Serialize)]
struct CircuitSummary {
    tau_n: f64,
    lambda_c: f64,
    eigenvalues: Vec<f64>,
    zeta_inf: Vec<f64>,
    q_inf: Vec<f64>,
    max_charge_drift: f64,
    accepted_steps: usize,
    rejected_steps: usize,
}

fn layer_charges(zeta: &[f64], s: &CircuitSystem) -> Result<Vec<f64>, CliError> {
    zeta.iter()
        .zip(&s.m)
        .map(|(z, w)| Ok(w * edl::charge(*z, &s.electrolyte)?))
        .collect()
}

fn run_circuit(cfg: &ExperimentConfig, out: &mut OutputDir, m: &mut RunManifest) -> Result<(), CliError> {
    let (e, g, d) = (cfg.electrolyte()?, cfg.geometry()?, cfg.drive()?);
    let s = circuit::assemble(&g, &d, &e)?;
    let traj = circuit::integrate(&s, cfg.numerics.t_final, &cfg.integration_control())?;
    let labels = stack_labels(g.n());
    let mut header = vec!["t".to_string()];
    header.extend(labels.iter().map(|l| format!("zeta_{l}")));
    header.extend(labels.iter().map(|l| format!("q_{l}")));
    header.push("conserved".into());
    let mut table = Table::new(header).meta("model", "circuit");
    for (k, z) in traj.states.iter().enumerate() {
        let mut row = vec![traj.times[k]];
        row.extend(z);
        row.extend(layer_charges(z, &s)?);
        row.push(traj.conserved[k]);
        table.push(row);
    }
    out.csv("trajectory.csv", &table)?;

    let zeta_inf = circuit::equilibrium(&s)?;
    let spec = timescale::spectrum(&s, &zeta_inf)?;
    let drift = traj.max_charge_drift();
    flag(m, cfg, "charge_conservation", drift <= CHARGE_DRIFT_TOL);
    out.json(
        "summary.json",
        &CircuitSummary {
            tau_n: spec.tau_n,
            lambda_c: spec.lambda_c,
            eigenvalues: spec.eigenvalues,
            q_inf: layer_charges(&zeta_inf, &s)?,
            zeta_inf,
            max_charge_drift: drift,
            accepted_steps: traj.stats.accepted,
            rejected_steps: traj.stats.rejected,
        },
    )?;

    let times = sorted_times(&cfg.numerics.snapshot_times);
    if !times.is_empty() {
        let grid = Grid1D::build(&g, cfg.numerics.epsilon, &cfg.grid_spec())?;
        let snaps = circuit::integrate_at(&s, &times, &cfg.integration_control().tolerances())?;
        for (k, z) in snaps.states.iter().enumerate() {
            let c = mae::composite_field(z, &s, &grid, times[k])?;
            for w in &c.warnings {
                warn(m, cfg, w);
            }
            out.csv(&format!("snapshot_{k}.csv"), &field_table(&c.field, grid.nodes(), "composite"))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PnpSummary {
    nodes: usize,
    min_spacing: f64,
    steps: usize,
    max_mass_drift: f64,
    final_stack_charges: Vec<f64>,
}

fn diagnostics_table(dg: &pnp::PnpDiagnostics, n: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend(stack_labels(n).iter().map(|l| format!("q_{l}")));
    header.extend(["center_salt", "mass_plus", "mass_minus"].map(String::from));
    let mut t = Table::new(header).meta("model", "pnp");
    for k in 0..dg.times.len() {
        let mut row = vec![dg.times[k]];
        row.extend(&dg.stack_charges[k]);
        row.extend([dg.center_salt[k], dg.mass_plus[k], dg.mass_minus[k]]);
        t.push(row);
    }
    t
}

fn run_pnp(cfg: &ExperimentConfig, out: &mut OutputDir, m: &mut RunManifest) -> Result<(), CliError> {
    let (e, g, d) = (cfg.electrolyte()?, cfg.geometry()?, cfg.drive()?);
    let pc = cfg.pnp_config(false);
    let r = pnp::run(&g, &d, &e, &pc)?;
    let dg = &r.diagnostics;
    out.csv("diagnostics.csv", &diagnostics_table(dg, g.n()))?;
    for (k, snap) in r.snapshots.iter().enumerate() {
        out.csv(&format!("snapshot_{k}.csv"), &field_table(snap, r.grid.nodes(), "pnp"))?;
    }
    let drift = dg.max_mass_drift();
    flag(m, cfg, "mass_conservation", drift <= MASS_DRIFT_TOL);
    out.json(
        "summary.json",
        &PnpSummary {
            nodes: r.grid.len(),
            min_spacing: r.grid.min_spacing(),
            steps: r.steps,
            max_mass_drift: drift,
            final_stack_charges: dg.stack_charges.last().cloned().unwrap_or_default(),
        },
    )
}

#[derive(Serialize)]
struct CompareSummary {
    nodes: usize,
    steps: usize,
    max_mass_drift: f64,
    /// Median relative L-infinity potential error over the last third of the run.
    plateau_phi_linf: f64,
    final_phi_linf: f64,
    final_c_plus_linf: f64,
    final_c_minus_linf: f64,
}

/// Median of `values` whose time lies in the last third of `[0, t_final]`.
pub fn plateau(times: &[f64], values: &[f64], t_final: f64) -> f64 {
    let mut v: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= 2.0 * t_final / 3.0)
        .map(|(_, v)| *v)
        .collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn run_mae_compare(cfg: &ExperimentConfig, out: &mut OutputDir, m: &mut RunManifest) -> Result<(), CliError> {
    let (e, g, d) = (cfg.electrolyte()?, cfg.geometry()?, cfg.drive()?);
    let mut pc = cfg.pnp_config(false);
    let dumps = pc.snapshot_times.clone();
    let mut all = pc.output_times.clone();
    all.extend(&dumps);
    let all = sorted_times(&all);
    pc.snapshot_times = all.clone();
    let r = pnp::run(&g, &d, &e, &pc)?;
    let s = circuit::assemble(&g, &d, &e)?;
    let traj = circuit::integrate_at(&s, &all, &cfg.integration_control().tolerances())?;
    let x = r.grid.nodes();
    let mut errors = Table::new([
        "t",
        "phi_linf",
        "phi_l2",
        "c_plus_linf",
        "c_plus_l2",
        "c_minus_linf",
        "c_minus_l2",
    ])
    .meta("model", "mae-compare");
    let mut dump = 0;
    for (k, snap) in r.snapshots.iter().enumerate() {
        let c = mae::composite_field(&traj.states[k], &s, &r.grid, all[k])?;
        for w in &c.warnings {
            warn(m, cfg, w);
        }
        let rep = mae::compare(&c.field, x, snap, x)?;
        errors.push(vec![
            all[k],
            rep.phi.linf,
            rep.phi.l2,
            rep.c_plus.linf,
            rep.c_plus.l2,
            rep.c_minus.linf,
            rep.c_minus.l2,
        ]);
        if dumps.contains(&all[k]) {
            let mut t = Table::new(["x", "phi_pnp", "phi_mae", "c_plus_pnp", "c_plus_mae", "c_minus_pnp", "c_minus_mae"])
                .meta("model", "mae-compare")
                .meta("time", all[k]);
            for i in 0..x.len() {
                t.push(vec![
                    x[i],
                    snap.phi[i],
                    c.field.phi[i],
                    snap.c_plus[i],
                    c.field.c_plus[i],
                    snap.c_minus[i],
                    c.field.c_minus[i],
                ]);
            }
            out.csv(&format!("snapshot_{dump}.csv"), &t)?;
            dump += 1;
        }
    }
    out.csv("errors.csv", &errors)?;
    let drift = r.diagnostics.max_mass_drift();
    flag(m, cfg, "mass_conservation", drift <= MASS_DRIFT_TOL);
    flag(m, cfg, "charge_conservation", traj.max_charge_drift() <= CHARGE_DRIFT_TOL);
    let last = errors.rows.last().cloned().unwrap_or_default();
    let col = |j: usize| errors.rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    out.json(
        "summary.json",
        &CompareSummary {
            nodes: r.grid.len(),
            steps: r.steps,
            max_mass_drift: drift,
            plateau_phi_linf: plateau(&col(0), &col(1), cfg.numerics.t_final),
            final_phi_linf: last.get(1).copied().unwrap_or(f64::NAN),
            final_c_plus_linf: last.get(3).copied().unwrap_or(f64::NAN),
            final_c_minus_linf: last.get(5).copied().unwrap_or(f64::NAN),
        },
    )
}

fn run_sweep(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let (e, d) = (cfg.electrolyte()?, cfg.drive()?);
    let sw = &cfg.sweep;
    let table = timescale::sweep_tau_vs_n(&e, &d, &sw.electrode_widths, &sw.n_values)?;
    let mut header = vec!["n".to_string()];
    header.extend(sw.electrode_widths.iter().map(|h| format!("tau_n_H{h}")));
    let mut t = Table::new(header).meta("model", "timescale-sweep");
    for &n in &sw.n_values {
        let mut row = vec![n as f64];
        for &h in &sw.electrode_widths {
            row.push(table.tau(n, h).unwrap_or(f64::NAN));
        }
        t.push(row);
    }
    out.csv("sweep.csv", &t)?;
    let fits: Vec<SweepFit> = table.fits.clone();
    out.json("fits.json", &fits)
}

#[derive(Serialize)]
struct RelaxationEntry {
    voltage: f64,
    stack: usize,
    tau_n: f64,
    fit: Option<RelaxationFit>,
    fit_error: Option<String>,
    total_fit: Option<RelaxationFit>,
    total_fit_error: Option<String>,
    depletion: SaltDepletion,
    max_mass_drift: f64,
}

fn split_fit(r: Result<RelaxationFit, stackcap_core::Error>) -> (Option<RelaxationFit>, Option<String>) {
    match r {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn run_relaxation(cfg: &ExperimentConfig, out: &mut OutputDir, m: &mut RunManifest) -> Result<(), CliError> {
    let (e, g) = (cfg.electrolyte()?, cfg.geometry()?);
    let n = g.n();
    let rc = &cfg.relaxation;
    let mut entries = Vec::new();
    for &v in &rc.voltages {
        let d = DriveSpec::symmetric(v);
        let r = pnp::run(&g, &d, &e, &cfg.pnp_config(true))?;
        let dg = &r.diagnostics;
        let idx = dg.left_stack(rc.stack);
        let rel = pnp::charge_relaxation(dg, idx)?;
        let q_eq = dg.q_eq.as_ref().map(|q| q[..n].iter().sum::<f64>()).unwrap_or(f64::NAN);
        let total: Vec<f64> = dg.stack_charges.iter().map(|q| q[..n].iter().sum()).collect();
        let rel_total: Vec<f64> = total.iter().map(|q| 1.0 - q / q_eq).collect();
        let mut t = Table::new(["t", "q", "relaxation", "q_total", "relaxation_total", "center_salt"])
            .meta("model", "relaxation")
            .meta("voltage", v)
            .meta("stack", format!("L{}", rc.stack));
        for k in 0..dg.times.len() {
            t.push(vec![
                dg.times[k],
                dg.stack_charges[k][idx],
                rel[k],
                total[k],
                rel_total[k],
                dg.center_salt[k],
            ]);
        }
        out.csv(&format!("relaxation_v{v}.csv"), &t)?;
        let (fit, fit_error) = split_fit(analysis::biexponential_fit_above(&dg.times, &rel, rc.fit_floor));
        let (total_fit, total_fit_error) =
            split_fit(analysis::biexponential_fit_above(&dg.times, &rel_total, rc.fit_floor));
        if let Some(err) = &fit_error {
            warn(m, cfg, &format!("fit at V = {v}: {err}"));
        }
        let drift = dg.max_mass_drift();
        flag(m, cfg, &format!("mass_conservation_v{v}"), drift <= MASS_DRIFT_TOL);
        entries.push(RelaxationEntry {
            voltage: v,
            stack: rc.stack,
            tau_n: timescale::charging_timescale(&g, &d, &e)?,
            fit,
            fit_error,
            total_fit,
            total_fit_error,
            depletion: analysis::salt_depletion(&dg.center_salt)?,
            max_mass_drift: drift,
        });
    }
    out.json("fits.json", &entries)
}
