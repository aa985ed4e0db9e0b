//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria and
//! `ACCEPTANCE_STRICT=1` turns any failure into a non-zero exit status.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::*;
use qudit_control::control::{infidelity_sweep, linspace};
use qudit_control::gates::{dft_gate, modified_dft_gate, GateKind};
use qudit_control::lattice::band_gap_timescale;
use qudit_control::phase::*;
use qudit_control::process::{
    alpha_avg, avg_gate_fidelity_formula, avg_gate_fidelity_montecarlo, haar_two_moment_check,
    kraus_to_choi, process_fidelity, unitary_choi,
};
use qudit_control::rng::{ginibre, haar_state, haar_unitary, seeded};
use qudit_control::sqpt::{run_sqpt, SqptSettings};
use qudit_control::*;
use rand::Rng;

const QUBIT_GOAL: f64 = 0.996;
const QUTRIT_GOAL: f64 = 0.997;
const MAX_ITERS: usize = 8000;
const RESTARTS: usize = 10;

struct Design {
    kind: GateKind,
    s0: f64,
    half_width: f64,
    target: TargetGate,
    report: OptimizationReport,
    /// Optimizer fidelity at the window centre.
    centre_fidelity: f64,
}

fn design(
    kind: GateKind,
    s0: f64,
    t_f_us: f64,
    half_width: f64,
    depths: usize,
    goal: f64,
) -> Design {
    let units = UnitTable::default();
    let mut cfg = OptimizerConfig::from_physical(&units, t_f_us * 1e-6, 500e-9, 125e3).unwrap();
    cfg.fidelity_goal = goal;
    cfg.max_iters = MAX_ITERS;
    cfg.restarts = RESTARTS;
    let map = if kind == GateKind::X12 {
        SubspaceMap::centered(1)
    } else {
        SubspaceMap::symmetric_pair(1)
    };
    let target = TargetGate::builtin(kind, map).unwrap();
    let ens = RobustnessEnsemble::around(s0, half_width, depths).unwrap();
    let lattice = LatticeConfig::new(s0);
    let report = grape_optimize(&cfg, &ens, &target, &lattice).unwrap();
    let centre_fidelity = robust_objective(
        &report.ramp,
        &RobustnessEnsemble::single(s0),
        &target,
        &lattice,
    )
    .unwrap()
    .mean;
    Design {
        kind,
        s0,
        half_width,
        target,
        report,
        centre_fidelity,
    }
}

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn timed(id: usize, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (pass, detail) = f();
    let line = Line {
        id,
        name,
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    };
    println!(
        "{} [{}] {}: {} ({:.1} s)",
        if line.pass { "PASS" } else { "FAIL" },
        line.id,
        line.name,
        line.detail,
        line.seconds
    );
    line
}

fn qubit_designs() -> Vec<Design> {
    [
        (GateKind::X, 5.57),
        (GateKind::Y, 5.62),
        (GateKind::Z, 5.56),
        (GateKind::H, 5.59),
    ]
    .into_iter()
    .map(|(k, s0)| design(k, s0, 350.0, 0.3, 3, QUBIT_GOAL))
    .collect()
}

fn gate_synthesis(designs: &[Design]) -> (bool, String) {
    let mut pass = true;
    let parts: Vec<String> = designs
        .iter()
        .map(|d| {
            let ok = d.report.mean_fidelity >= 0.99
                && d.report.restarts.len() <= RESTARTS
                && d.report.elapsed_s <= 600.0;
            pass &= ok;
            format!(
                "{} F̄={:.4} restarts={} {:.0}s",
                d.kind,
                d.report.mean_fidelity,
                d.report.restarts.len(),
                d.report.elapsed_s
            )
        })
        .collect();
    (pass, parts.join(", "))
}

fn qutrit_synthesis(d: &Design) -> (bool, String) {
    let ok = d.report.mean_fidelity >= 0.985 && d.report.elapsed_s <= 1800.0;
    (
        ok,
        format!(
            "X12 F̄={:.4} restarts={} {:.0}s",
            d.report.mean_fidelity,
            d.report.restarts.len(),
            d.report.elapsed_s
        ),
    )
}

fn window_shape(designs: &[&Design]) -> (bool, String) {
    let mut pass = true;
    let parts: Vec<String> = designs
        .iter()
        .map(|d| {
            let lattice = LatticeConfig::new(d.s0);
            let grid = linspace(d.s0 - d.half_width, d.s0 + d.half_width, 61);
            let inside = infidelity_sweep(&d.report.ramp, &d.target, &grid, 0.0, &lattice).unwrap();
            let max_in = inside.iter().map(|p| p.infidelity).fold(0.0, f64::max);
            let outside = infidelity_sweep(
                &d.report.ramp,
                &d.target,
                &[d.s0 - 1.0, d.s0 + 1.0],
                0.0,
                &lattice,
            )
            .unwrap();
            let min_out = outside
                .iter()
                .map(|p| p.infidelity)
                .fold(f64::INFINITY, f64::min);
            let ok = max_in <= 1e-2 && min_out > max_in;
            pass &= ok;
            format!("{} max_in={:.2e} at±1={:.3}", d.kind, max_in, min_out)
        })
        .collect();
    (pass, parts.join(", "))
}

fn fidelity_relation() -> (bool, String) {
    let mut rng = seeded(404);
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for i in 0..100 {
        let d = 2 + i % 3;
        let keep = if i % 2 == 0 {
            1.0
        } else {
            rng.random_range(0.3..0.95)
        };
        let rank = 1 + i % 3;
        let p = kraus_to_choi(&KrausProcess::new(random_kraus(&mut rng, d, rank, keep)).unwrap());
        let u = haar_unitary(&mut rng, d);
        let fp = process_fidelity(&p, &unitary_choi(&u)).unwrap();
        let formula = avg_gate_fidelity_formula(fp, alpha_avg(&p), d);
        let mc = avg_gate_fidelity_montecarlo(&p, &u, 100_000, i as u64).unwrap();
        let z = (mc.mean - formula).abs() / mc.stderr.max(1e-300);
        let ok = (mc.mean - formula).abs() < 4.0 * mc.stderr + 1e-12;
        pass &= ok;
        worst = worst.max(z);
    }
    let mut pair_fail = 0;
    for i in 0..20 {
        let d = 2 + i % 3;
        let m = ginibre(&mut rng, d, d);
        let n = ginibre(&mut rng, d, d);
        let check = haar_two_moment_check(&m, &n, 100_000, 1000 + i as u64).unwrap();
        if !check.within(4.0) {
            pair_fail += 1;
        }
    }
    pass &= pair_fail == 0;
    (
        pass,
        format!("100 channels worst |Δ|/σ={worst:.2}, two-moment failures {pair_fail}/20"),
    )
}

fn sqpt_round_trip(designs: &[&Design]) -> (bool, String, Option<f64>) {
    let mut pass = true;
    let mut h_noiseless = None;
    let parts: Vec<String> = designs
        .iter()
        .map(|d| {
            let lattice = LatticeConfig::new(d.s0);
            let settings = SqptSettings::standard(&lattice).unwrap();
            let out = run_sqpt(
                Some(&d.report.ramp),
                &lattice,
                &d.target,
                &NoiseModel::noiseless(),
                &settings,
                0,
            )
            .unwrap();
            let vs_designed = (out.report.oc_exp_process - 1.0).abs();
            let vs_optimizer = (out.report.th_exp.process - d.centre_fidelity).abs();
            if d.kind == GateKind::H {
                h_noiseless = Some(out.report.th_exp.process);
            }
            let ok = vs_designed <= 1e-6 && vs_optimizer <= 1e-6;
            pass &= ok;
            format!(
                "{} |1−F_p(oc,exp)|={:.1e} |ΔF_p(th)|={:.1e}",
                d.kind, vs_designed, vs_optimizer
            )
        })
        .collect();
    (pass, parts.join(", "), h_noiseless)
}

fn experimental_band(h: &Design, noiseless: Option<f64>) -> (bool, String) {
    let lattice = LatticeConfig::new(h.s0);
    let clean = noiseless.unwrap_or_else(|| {
        let settings = SqptSettings::standard(&lattice).unwrap();
        run_sqpt(
            Some(&h.report.ramp),
            &lattice,
            &h.target,
            &NoiseModel::noiseless(),
            &settings,
            0,
        )
        .unwrap()
        .report
        .th_exp
        .process
    });
    let settings = SqptSettings::compact(&lattice).unwrap().with_bootstrap(200);
    let out = run_sqpt(
        Some(&h.report.ramp),
        &lattice,
        &h.target,
        &NoiseModel::experimental_preset(0),
        &settings,
        0,
    )
    .unwrap();
    let r = &out.report;
    let fp = r.th_exp.process;
    let ci = r.bootstrap.as_ref().map(|b| b.th_exp_process).unwrap();
    let ok = (0.80..=0.97).contains(&fp) && fp < clean;
    (
        ok,
        format!(
            "H F_p(th,exp)={fp:.4} [{:.4}, {:.4}] noiseless={clean:.4} P={:.3} F_s={:.3} offset={:+.3}",
            ci.lo, ci.hi, r.mean_purity, r.mean_state_fidelity, r.depth_offset
        ),
    )
}

fn phase_retrieval() -> (bool, String) {
    let cfg = LatticeConfig::new(5.0);
    let thetas = eighth_turns();
    let mut worst_clean: f64 = 0.0;
    let mut covered = 0;
    let mut cells = 0;
    for j in [1, 2] {
        let gates = TwoModeGates::ideal(&cfg, j).unwrap();
        let clean = phase_table(
            j,
            std::f64::consts::FRAC_1_SQRT_2,
            &thetas,
            &cfg,
            &gates,
            &NoiseModel::noiseless(),
            0,
            0,
        )
        .unwrap();
        worst_clean = clean.iter().fold(worst_clean, |w, r| w.max(r.error));
        for seed in 0..10 {
            let noise = NoiseModel::noiseless()
                .with_atom_number(Some(10_000))
                .with_seed(seed);
            let rows = phase_table(
                j,
                std::f64::consts::FRAC_1_SQRT_2,
                &thetas,
                &cfg,
                &gates,
                &noise,
                500,
                seed,
            )
            .unwrap();
            covered += rows.iter().filter(|r| r.covered).count();
            cells += rows.len();
        }
    }
    let mut recovered = 0;
    let mut rng = seeded(99);
    for i in 0..100 {
        let psi = haar_state(&mut rng, 3);
        let pops = |m: &CMat| (m * &psi).iter().map(|z| z.norm_sqr()).collect::<Vec<_>>();
        let bare: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let g = general_phase_retrieval(
            &bare,
            &pops(&dft_gate(3).unwrap()),
            &pops(&modified_dft_gate(3).unwrap()),
            200,
            i,
        )
        .unwrap();
        let ok =
            (1..3).all(|k| wrap_angle(g.phases[k] - (psi[k].arg() - psi[0].arg())).abs() < 1e-6);
        recovered += ok as usize;
    }
    let coverage = covered as f64 / cells as f64;
    let pass = worst_clean <= 1e-9 && coverage >= 0.90 && recovered >= 99;
    (
        pass,
        format!(
            "noiseless max error {worst_clean:.1e}, CI coverage {covered}/{cells} ({:.1}%), qutrits {recovered}/100",
            100.0 * coverage
        ),
    )
}

fn timescale() -> (bool, String) {
    let units = UnitTable::default();
    let t10 = band_gap_timescale(&LatticeConfig::new(5.0).with_l_max(10), &units).unwrap();
    let t15 = band_gap_timescale(&LatticeConfig::new(5.0).with_l_max(15), &units).unwrap();
    let us = t10.period_s * 1e6;
    let rel = ((t10.period - t15.period) / t15.period).abs();
    let pass = (us - 60.0).abs() <= 6.0 && rel <= 1e-6;
    (
        pass,
        format!("T0(s=5)={us:.2} μs, l_max 10 vs 15 relative change {rel:.1e}"),
    )
}

fn gradient_suite() -> (bool, String) {
    let mut rng = seeded(77);
    let kinds = [
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::H,
        GateKind::W,
    ];
    let mut worst: f64 = 0.0;
    let mut components = 0;
    for i in 0..50 {
        let cfg = LatticeConfig::new(rng.random_range(1.0..8.0));
        let target = if i % 10 == 9 {
            TargetGate::builtin(GateKind::X12, SubspaceMap::centered(1)).unwrap()
        } else {
            TargetGate::builtin(kinds[i % kinds.len()], SubspaceMap::symmetric_pair(1)).unwrap()
        };
        let ramp = random_ramp(&mut rng, 4, 100, 0.05, 1.5);
        let errs = gradient_errors(&ramp, &cfg, &target, 1e-6, 1e-8);
        components += errs.len();
        worst = errs.iter().fold(worst, |w, &e| w.max(e));
    }
    (
        worst < 1e-5,
        format!("50 instances, {components} components, worst relative error {worst:.1e}"),
    )
}

fn main() {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |id: usize| only.as_ref().is_none_or(|s| s.contains(&id));
    let mut lines = Vec::new();

    let need_qubits = [1, 3, 5, 6].iter().any(|&i| wanted(i));
    let need_qutrit = [2, 3, 5].iter().any(|&i| wanted(i));
    let qubits = if need_qubits {
        qubit_designs()
    } else {
        Vec::new()
    };
    let qutrit = need_qutrit.then(|| design(GateKind::X12, 5.39, 450.0, 0.35, 7, QUTRIT_GOAL));

    if wanted(1) {
        lines.push(timed(1, "gate synthesis", || gate_synthesis(&qubits)));
    }
    if wanted(2) {
        lines.push(timed(2, "qutrit gate", || {
            qutrit_synthesis(qutrit.as_ref().unwrap())
        }));
    }
    let mut accepted: Vec<&Design> = qubits.iter().collect();
    accepted.extend(qutrit.iter());
    if wanted(3) {
        lines.push(timed(3, "robustness window", || window_shape(&accepted)));
    }
    if wanted(4) {
        lines.push(timed(4, "fidelity relation", fidelity_relation));
    }
    let mut h_noiseless = None;
    if wanted(5) {
        lines.push(timed(5, "SQPT round trip", || {
            let (pass, detail, h) = sqpt_round_trip(&accepted);
            h_noiseless = h;
            (pass, detail)
        }));
    }
    if wanted(6) {
        let h = qubits.iter().find(|d| d.kind == GateKind::H).unwrap();
        lines.push(timed(6, "experimental band", || {
            experimental_band(h, h_noiseless)
        }));
    }
    if wanted(7) {
        lines.push(timed(7, "phase retrieval", phase_retrieval));
    }
    if wanted(8) {
        lines.push(timed(8, "timescale", timescale));
    }
    if wanted(9) {
        lines.push(timed(9, "gradient suite", gradient_suite));
    }

    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} criteria passed", lines.len());
    if strict && passed < lines.len() {
        std::process::exit(1);
    }
}
