//! Invariant suite for emitted artifacts.

use std::path::Path;

use qudit_control::io::ChoiDocument;
use qudit_control::linalg::{hermiticity_error, unitarity_error};
use qudit_control::process::Channel;
use qudit_control::{evolve, PhaseRamp};
use serde::Serialize;
use serde_json::Value;

use crate::artifact::{Artifact, Provenance};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub artifact: String,
    pub kind: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

struct Checks(Vec<CheckResult>);

impl Checks {
    fn add(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.0.push(CheckResult {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    fn bound(&mut self, name: &str, value: f64, limit: f64) {
        self.add(name, value <= limit, format!("{value:e} <= {limit:e}"));
    }
}

const UNITARITY_TOL: f64 = 1e-10;
const HERMITICITY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const UNIT_TOL: f64 = 1e-12;
const CHOI_TRACE_SLACK: f64 = 1e-4;

pub fn check(path: &Path) -> Result<CheckReport, CliError> {
    let art = Artifact::read(path)?;
    let kind = art.kind().ok_or_else(|| {
        CliError::Config(format!("{}: no artifact kind recorded", path.display()))
    })?;
    let mut c = Checks(Vec::new());
    let (config, inputs, hash) = art.provenance()?;
    let recomputed = Provenance::hash_of(&config, &inputs);
    c.add(
        "inputs_sha256",
        recomputed == hash,
        format!("recorded {hash}, recomputed {recomputed}"),
    );
    let cfg: RunConfig = serde_json::from_value(config)
        .map_err(|e| CliError::Config(format!("embedded config does not parse: {e}")))?;
    c.add("config_schema", true, "embedded config parses");

    match (&art, kind.as_str()) {
        (Artifact::Json(v), "coefficients") => check_coefficients(&mut c, v, &cfg)?,
        (Artifact::Json(v), "design-report") => check_design_report(&mut c, v),
        (Artifact::Json(v), "choi") => check_choi(&mut c, v)?,
        (Artifact::Json(v), "sqpt-report") => check_sqpt(&mut c, v),
        (Artifact::Json(v), "sweep-report") => {
            check_unit_interval(&mut c, &v["data"]["points"], "infidelity")
        }
        (Artifact::Json(v), "phase-report") => check_phase(&mut c, v),
        (Artifact::Csv { columns, rows, .. }, "ramp") => {
            check_ramp_csv(&mut c, columns, rows, &cfg)?
        }
        (Artifact::Csv { rows, .. }, "spectrum") => {
            c.add(
                "finite",
                rows.iter().flatten().all(|x| x.is_finite()),
                "all cells finite",
            );
            c.add(
                "non_negative",
                rows.iter().all(|r| r[1] >= 0.0),
                "magnitudes >= 0",
            );
        }
        (Artifact::Csv { rows, .. }, "sweep") => {
            let ok = rows
                .iter()
                .all(|r| (-UNIT_TOL..=1.0 + UNIT_TOL).contains(&r[1]));
            c.add("infidelity_range", ok, "0 <= 1 - F <= 1");
            c.add(
                "depth_order",
                rows.windows(2).all(|w| w[0][0] < w[1][0]),
                "depths ascending",
            );
        }
        (Artifact::Csv { rows, .. }, "phase-table") => {
            c.add(
                "flags",
                rows.iter()
                    .all(|r| [0.0, 1.0].contains(&r[5]) && [0.0, 1.0].contains(&r[6])),
                "0/1 flags",
            );
        }
        _ => c.add("known_kind", false, format!("no invariants for `{kind}`")),
    }
    let passed = c.0.iter().all(|r| r.passed);
    Ok(CheckReport {
        artifact: path.display().to_string(),
        kind,
        passed,
        checks: c.0,
    })
}

fn check_ramp_invariants(
    c: &mut Checks,
    ramp: &PhaseRamp,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    c.add(
        "ramp_valid",
        ramp.validate().is_ok(),
        "finite coefficients, integer step count",
    );
    let units = cfg.unit_table()?;
    let t_f_s = units.dimensionless_to_seconds(ramp.t_f);
    let expected = qudit_control::ramp::harmonic_count(cfg.optimizer.f_max_khz * 1e3, t_f_s)?;
    c.add(
        "harmonic_cap",
        ramp.n_max() == expected && ramp.a.len() == ramp.b.len(),
        format!("n_max {} = ceil(f_max t_f) = {expected}", ramp.n_max()),
    );
    let lat = cfg.lattice()?;
    let u = evolve(ramp, &lat)?.unitary;
    c.bound("unitarity", unitarity_error(&u), UNITARITY_TOL);
    Ok(())
}

fn check_coefficients(c: &mut Checks, v: &Value, cfg: &RunConfig) -> Result<(), CliError> {
    let ramp: PhaseRamp = serde_json::from_value(v["data"]["ramp"].clone())?;
    check_ramp_invariants(c, &ramp, cfg)?;
    if let Some(recorded) = v["data"]["mean_fidelity"].as_f64() {
        let value = qudit_control::robust_objective(
            &ramp,
            &cfg.ensemble()?,
            &cfg.target()?,
            &cfg.lattice()?,
        )?;
        c.bound("fidelity_recompute", (value.mean - recorded).abs(), 1e-9);
    }
    Ok(())
}

fn check_design_report(c: &mut Checks, v: &Value) {
    let r = &v["data"]["report"];
    let trace: Vec<f64> = r["trace"]
        .as_array()
        .map_or(vec![], |a| a.iter().filter_map(Value::as_f64).collect());
    c.add(
        "trace_monotone",
        trace.windows(2).all(|w| w[1] >= w[0]),
        "accepted iterations never lower F",
    );
    let mean = r["mean_fidelity"].as_f64().unwrap_or(f64::NAN);
    c.add(
        "fidelity_range",
        (0.0..=1.0 + UNIT_TOL).contains(&mean),
        format!("F = {mean}"),
    );
    c.add(
        "trace_end",
        trace.last().is_some_and(|&t| t == mean),
        "trace ends at the reported fidelity",
    );
}

fn check_choi(c: &mut Checks, v: &Value) -> Result<(), CliError> {
    let doc: ChoiDocument = serde_json::from_value(v["data"].clone())?;
    let p = doc.to_process()?;
    c.bound("hermiticity", hermiticity_error(p.choi()), HERMITICITY_TOL);
    let min = p.spectrum()?.into_iter().fold(f64::INFINITY, f64::min);
    c.add("psd", min >= -PSD_TOL, format!("min eigenvalue {min:e}"));
    let tr = qudit_control::linalg::trace(p.choi()).re;
    let d = p.input_dim() as f64;
    // Clipping negative eigenvalues in the final projection can lift the trace slightly.
    c.add(
        "trace_bound",
        tr <= d * (1.0 + CHOI_TRACE_SLACK),
        format!("tr = {tr}, d_in = {d}"),
    );
    Ok(())
}

fn check_sqpt(c: &mut Checks, v: &Value) {
    let r = &v["data"]["report"];
    let fields = [
        "mean_state_fidelity",
        "mean_purity",
        "oc_exp_process",
        "oc_exp_subspace",
        "alpha_exp",
    ];
    let ok = fields.iter().all(|f| {
        r[f].as_f64()
            .is_some_and(|x| (-UNIT_TOL..=1.0 + 1e-6).contains(&x))
    });
    c.add("scalars_in_range", ok, fields.join(", "));
    let pairs = ["th_oc", "th_exp"];
    let ok = pairs.iter().all(|p| {
        ["process", "average"].iter().all(|k| {
            r[p][k]
                .as_f64()
                .is_some_and(|x| (-UNIT_TOL..=1.0 + 1e-6).contains(&x))
        })
    });
    c.add("fidelity_pairs_in_range", ok, pairs.join(", "));
    check_unit_interval(c, &r["inputs"], "purity");
}

fn check_phase(c: &mut Checks, v: &Value) {
    let rows = v["data"]["rows"].as_array().cloned().unwrap_or_default();
    let ok = rows.iter().all(|r| {
        r["theta_meas"]
            .as_f64()
            .is_some_and(|t| t.abs() <= std::f64::consts::PI + 1e-12)
    });
    c.add("angles_wrapped", ok, "|theta_meas| <= pi");
    let ok = rows.iter().all(|r| {
        r["ci"].is_null()
            || (r["ci"]["lo"].as_f64() <= Some(0.0) && r["ci"]["hi"].as_f64() >= Some(0.0))
    });
    c.add("ci_brackets_estimate", ok, "intervals contain the estimate");
}

fn check_unit_interval(c: &mut Checks, items: &Value, field: &str) {
    let items = items.as_array().cloned().unwrap_or_default();
    let ok = items.iter().all(|x| {
        x[field]
            .as_f64()
            .is_some_and(|f| (-UNIT_TOL..=1.0 + 1e-6).contains(&f))
    });
    c.add(
        &format!("{field}_range"),
        ok,
        format!("{} entries in [0, 1]", items.len()),
    );
}

fn check_ramp_csv(
    c: &mut Checks,
    columns: &[String],
    rows: &[Vec<f64>],
    cfg: &RunConfig,
) -> Result<(), CliError> {
    c.add(
        "columns",
        columns == crate::commands::RAMP_COLUMNS,
        columns.join(","),
    );
    let units = cfg.unit_table()?;
    c.add("row_count", rows.len() >= 2, format!("{} rows", rows.len()));
    let dt = rows.get(1).map_or(f64::NAN, |r| r[1]);
    let spacing = rows
        .iter()
        .enumerate()
        .map(|(j, r)| (r[1] - j as f64 * dt).abs())
        .fold(0.0, f64::max);
    let t_f = rows.len() as f64 * dt;
    c.bound("time_grid", spacing, 1e-9 * t_f);
    let conv = rows
        .iter()
        .map(|r| (r[0] - units.dimensionless_to_seconds(r[1])).abs() / units.time_unit_s())
        .fold(0.0, f64::max);
    c.bound("unit_conversion", conv, 1e-9);
    c.add(
        "finite",
        rows.iter().flatten().all(|x| x.is_finite()),
        "all cells finite",
    );
    Ok(())
}
