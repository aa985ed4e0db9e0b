//! Subcommand implementations. Each writes its artifacts into `out` and
//! returns a JSON summary for stdout.

use std::path::{Path, PathBuf};

use qudit_control::control::infidelity_sweep;
use qudit_control::gates::GateKind;
use qudit_control::io::ChoiDocument;
use qudit_control::phase::{phase_table, TwoModeGates};
use qudit_control::ramp::spectrum;
use qudit_control::sqpt::run_sqpt;
use qudit_control::{grape_optimize, robust_objective, OptimizationReport, PhaseRamp, UnitTable};
use serde_json::{json, Value};

use crate::artifact::{self, Provenance};
use crate::config::RunConfig;
use crate::error::CliError;

pub const RAMP_COLUMNS: [&str; 3] = ["time_s", "time_dimensionless", "phase_rad"];
pub const SPECTRUM_COLUMNS: [&str; 2] = ["frequency_hz", "magnitude_rad"];
pub const SWEEP_COLUMNS: [&str; 2] = ["s", "infidelity"];
pub const PHASE_COLUMNS: [&str; 8] = [
    "j",
    "theta_prep",
    "theta_meas",
    "ci_lo",
    "ci_hi",
    "identifiable",
    "covered",
    "error",
];

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        artifact::write(&self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Reads a coefficients artifact or a bare ramp document.
pub fn load_ramp(path: &Path) -> Result<(PhaseRamp, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let node = match v.get("data").and_then(|d| d.get("ramp")) {
        Some(r) => r.clone(),
        None => v,
    };
    let ramp: PhaseRamp = serde_json::from_value(node)
        .map_err(|e| CliError::Config(format!("{}: not a ramp: {e}", path.display())))?;
    ramp.validate()?;
    Ok((ramp, bytes))
}

fn required_ramp(cfg: &RunConfig) -> Result<(PhaseRamp, Vec<u8>), CliError> {
    let path = cfg
        .ramp
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs `ramp` in the config".into()))?;
    load_ramp(path)
}

fn ramp_rows(ramp: &PhaseRamp, units: &UnitTable) -> Vec<Vec<f64>> {
    ramp.samples()
        .iter()
        .enumerate()
        .map(|(j, &phi)| {
            let t = ramp.time(j);
            vec![units.dimensionless_to_seconds(t), t, phi]
        })
        .collect()
}

fn spectrum_rows(ramp: &PhaseRamp, units: &UnitTable) -> Vec<Vec<f64>> {
    spectrum(ramp)
        .into_iter()
        .map(|(f, m)| vec![units.dimensionless_to_hertz(f), m])
        .collect()
}

fn coefficients_data(ramp: &PhaseRamp, units: &UnitTable) -> Value {
    let t_f_s = units.dimensionless_to_seconds(ramp.t_f);
    json!({
        "ramp": ramp,
        "duration_s": t_f_s,
        "dt_s": units.dimensionless_to_seconds(ramp.dt),
        "steps": ramp.steps(),
        "harmonic_frequencies_hz": (1..=ramp.n_max()).map(|n| n as f64 / t_f_s).collect::<Vec<_>>(),
    })
}

fn write_ramp_tables(
    out: &mut Outputs,
    prov: &Provenance,
    ramp: &PhaseRamp,
    units: &UnitTable,
    stem: &str,
) -> Result<(), CliError> {
    out.put(
        &format!("{stem}_ramp.csv"),
        &prov.csv_document("ramp", &RAMP_COLUMNS, &ramp_rows(ramp, units)),
    )?;
    out.put(
        &format!("{stem}_spectrum.csv"),
        &prov.csv_document("spectrum", &SPECTRUM_COLUMNS, &spectrum_rows(ramp, units)),
    )
}

fn design_report(cfg: &RunConfig) -> Result<OptimizationReport, CliError> {
    Ok(grape_optimize(
        &cfg.optimizer()?,
        &cfg.ensemble()?,
        &cfg.target()?,
        &cfg.lattice()?,
    )?)
}

pub fn design(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let units = cfg.unit_table()?;
    let goal = cfg.optimizer()?.fidelity_goal;
    let report = design_report(cfg)?;
    let prov = Provenance::new(cfg)?;
    let mut out = Outputs::new(dir)?;
    let mut coeffs = coefficients_data(&report.ramp, &units);
    coeffs["mean_fidelity"] = json!(report.mean_fidelity);
    out.put(
        "design_coefficients.json",
        &prov.json_document("coefficients", &coeffs)?,
    )?;
    write_ramp_tables(&mut out, &prov, &report.ramp, &units, "design")?;
    let data = json!({ "fidelity_goal": goal, "goal_met": report.mean_fidelity >= goal, "report": report });
    out.put(
        "design_report.json",
        &prov.json_document("design-report", &data)?,
    )?;
    if report.mean_fidelity < goal {
        return Err(CliError::GoalUnmet {
            goal,
            achieved: report.mean_fidelity,
        });
    }
    Ok(json!({
        "command": "design",
        "mean_fidelity": report.mean_fidelity,
        "iterations": report.iterations,
        "termination": report.termination,
        "outputs": out.written,
    }))
}

pub fn export_ramp(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let units = cfg.unit_table()?;
    let (ramp, bytes) = required_ramp(cfg)?;
    let prov = Provenance::new(cfg)?.with_input("ramp", &bytes);
    let mut out = Outputs::new(dir)?;
    out.put(
        "export_coefficients.json",
        &prov.json_document("coefficients", &coefficients_data(&ramp, &units))?,
    )?;
    write_ramp_tables(&mut out, &prov, &ramp, &units, "export")?;
    Ok(json!({ "command": "export-ramp", "steps": ramp.steps(), "outputs": out.written }))
}

pub fn sweep(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let (ramp, bytes) = required_ramp(cfg)?;
    let lat = cfg.lattice()?;
    let target = cfg.target()?;
    let depths = cfg.sweep_depths()?;
    let points = infidelity_sweep(&ramp, &target, &depths, lat.quasimomentum, &lat)?;
    let ensemble = cfg.ensemble()?;
    let window = robust_objective(&ramp, &ensemble, &target, &lat)?;
    let prov = Provenance::new(cfg)?.with_input("ramp", &bytes);
    let mut out = Outputs::new(dir)?;
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.depth, p.infidelity]).collect();
    out.put(
        "sweep.csv",
        &prov.csv_document("sweep", &SWEEP_COLUMNS, &rows),
    )?;
    let best = points
        .iter()
        .min_by(|a, b| a.infidelity.total_cmp(&b.infidelity))
        .expect("sweep has at least two points");
    let data = json!({
        "points": points,
        "min_infidelity": best.infidelity,
        "min_depth": best.depth,
        "ensemble_mean_fidelity": window.mean,
        "ensemble_samples": window.samples,
    });
    out.put(
        "sweep_report.json",
        &prov.json_document("sweep-report", &data)?,
    )?;
    Ok(json!({ "command": "sweep", "min_infidelity": best.infidelity, "outputs": out.written }))
}

pub fn sqpt(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let lat = cfg.lattice()?;
    let target = cfg.target()?;
    let mut prov = Provenance::new(cfg)?;
    let (ramp, source) = match &cfg.ramp {
        Some(p) => {
            let (r, bytes) = load_ramp(p)?;
            prov = prov.with_input("ramp", &bytes);
            (Some(r), "file")
        }
        None if cfg.target.gate == GateKind::Identity => (None, "none"),
        None => (Some(design_report(cfg)?.ramp), "design"),
    };
    let settings = cfg.sqpt_settings()?;
    let outcome = run_sqpt(
        ramp.as_ref(),
        &lat,
        &target,
        &cfg.noise()?,
        &settings,
        cfg.seed,
    )?;
    let mut out = Outputs::new(dir)?;
    let data = json!({ "gate_source": source, "report": outcome.report });
    out.put(
        "sqpt_report.json",
        &prov.json_document("sqpt-report", &data)?,
    )?;
    let choi = ChoiDocument::new(&outcome.process).with_orders(
        target.subspace.indices().to_vec(),
        settings.basis.indices().to_vec(),
    );
    out.put("sqpt_choi.json", &prov.json_document("choi", &choi)?)?;
    let r = &outcome.report;
    Ok(json!({
        "command": "sqpt",
        "th_exp_process": r.th_exp.process,
        "oc_exp_process": r.oc_exp_process,
        "mean_state_fidelity": r.mean_state_fidelity,
        "outputs": out.written,
    }))
}

pub fn phase(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let lat = cfg.lattice()?;
    let noise = cfg.noise()?;
    let thetas = cfg.phase_thetas();
    let p = &cfg.phase;
    if p.orders.is_empty() {
        return Err(CliError::Config("phase.orders must not be empty".into()));
    }
    if !(0.0..=1.0).contains(&p.amplitude) {
        return Err(CliError::Config(
            "phase.amplitude must lie in [0, 1]".into(),
        ));
    }
    let mut rows = Vec::new();
    for &j in &p.orders {
        let gates = TwoModeGates::ideal(&lat, j)?;
        rows.extend(phase_table(
            j,
            p.amplitude,
            &thetas,
            &lat,
            &gates,
            &noise,
            p.resamples,
            cfg.seed,
        )?);
    }
    let prov = Provenance::new(cfg)?;
    let mut out = Outputs::new(dir)?;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let (lo, hi) =
                r.ci.map_or((f64::NAN, f64::NAN), |c| (c.center + c.lo, c.center + c.hi));
            vec![
                r.j as f64,
                r.theta_prep,
                r.theta_meas,
                lo,
                hi,
                flag(r.identifiable),
                flag(r.covered),
                r.error,
            ]
        })
        .collect();
    out.put(
        "phase_table.csv",
        &prov.csv_document("phase-table", &PHASE_COLUMNS, &table),
    )?;
    let with_ci = rows.iter().filter(|r| r.ci.is_some()).count();
    let covered = rows.iter().filter(|r| r.covered).count();
    let max_error = rows
        .iter()
        .filter(|r| r.identifiable)
        .map(|r| r.error)
        .fold(0.0, f64::max);
    let data = json!({
        "rows": rows,
        "rows_with_ci": with_ci,
        "covered": covered,
        "unidentifiable": rows.iter().filter(|r| !r.identifiable).count(),
        "max_error": max_error,
    });
    out.put(
        "phase_report.json",
        &prov.json_document("phase-report", &data)?,
    )?;
    Ok(json!({
        "command": "phase",
        "rows": rows.len(),
        "covered": covered,
        "max_error": max_error,
        "outputs": out.written,
    }))
}
