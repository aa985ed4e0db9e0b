//! Fourier-series parameterisation of the lattice phase `φ(t)`.

use std::f64::consts::TAU;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::c;

/// `φ(t) = a0 + Σₙ aₙ cos(2πn t/t_f) + bₙ sin(2πn t/t_f)`, sampled piecewise
/// constant on `k = t_f/dt` steps at the left endpoints `t_j = j·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseRamp {
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Duration in units of `ħ/E_L`.
    pub t_f: f64,
    /// Step in units of `ħ/E_L`.
    pub dt: f64,
}

/// Number of steps `t_f/dt` when it is a positive integer (to 1e-9 relative).
pub fn step_count(t_f: f64, dt: f64) -> Result<usize> {
    if !(t_f > 0.0 && dt > 0.0) || !t_f.is_finite() || !dt.is_finite() {
        return Err(Error::config(format!(
            "t_f and dt must be positive, got t_f={t_f}, dt={dt}"
        )));
    }
    let ratio = t_f / dt;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * k.max(1.0) {
        return Err(Error::config(format!(
            "t_f/dt = {ratio} is not a positive integer"
        )));
    }
    Ok(k as usize)
}

/// `⌈f_max · t_f⌉`; both arguments in the same unit system.
pub fn harmonic_count(f_max: f64, t_f: f64) -> Result<usize> {
    if !(f_max > 0.0 && t_f > 0.0) {
        return Err(Error::config("f_max and t_f must be positive"));
    }
    let x = f_max * t_f;
    // Products like 125 kHz · 8 µs land a few ulps above an integer.
    Ok((x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize)
}

impl PhaseRamp {
    pub fn zero(n_max: usize, t_f: f64, dt: f64) -> Result<Self> {
        let ramp = Self {
            a0: 0.0,
            a: vec![0.0; n_max],
            b: vec![0.0; n_max],
            t_f,
            dt,
        };
        ramp.validate()?;
        Ok(ramp)
    }

    pub fn validate(&self) -> Result<()> {
        step_count(self.t_f, self.dt)?;
        if self.a.len() != self.b.len() {
            return Err(Error::config(format!(
                "cosine and sine coefficient counts differ ({} vs {})",
                self.a.len(),
                self.b.len()
            )));
        }
        let all = std::iter::once(&self.a0).chain(&self.a).chain(&self.b);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite ramp coefficient".into()));
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.a.len()
    }

    pub fn steps(&self) -> usize {
        step_count(self.t_f, self.dt).expect("validated ramp")
    }

    /// Number of free parameters `1 + 2 n_max`.
    pub fn param_count(&self) -> usize {
        1 + 2 * self.n_max()
    }

    /// Flattened `[a0, a1..an, b1..bn]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.push(self.a0);
        p.extend_from_slice(&self.a);
        p.extend_from_slice(&self.b);
        p
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        let n = self.n_max();
        assert_eq!(p.len(), 1 + 2 * n, "parameter vector length");
        Self {
            a0: p[0],
            a: p[1..=n].to_vec(),
            b: p[n + 1..].to_vec(),
            t_f: self.t_f,
            dt: self.dt,
        }
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn sample(&self, j: usize) -> Result<f64> {
        let k = self.steps();
        if j >= k {
            return Err(Error::IndexOutOfRange {
                index: j as i64,
                limit: k as i64,
            });
        }
        Ok(self.eval(self.time(j)))
    }

    fn eval(&self, t: f64) -> f64 {
        let w = TAU * t / self.t_f;
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .fold(self.a0, |acc, (idx, (an, bn))| {
                let arg = (idx + 1) as f64 * w;
                acc + an * arg.cos() + bn * arg.sin()
            })
    }

    /// All step values `φ_0 … φ_{k−1}`.
    pub fn samples(&self) -> Vec<f64> {
        (0..self.steps()).map(|j| self.eval(self.time(j))).collect()
    }

    /// `∂φ_j/∂p` for every parameter, as a `param_count × k` row-major table.
    pub fn design_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.steps();
        let n = self.n_max();
        let mut rows = vec![vec![1.0; k]];
        let cos_rows = (1..=n).map(|h| {
            (0..k)
                .map(|j| (TAU * h as f64 * self.time(j) / self.t_f).cos())
                .collect::<Vec<_>>()
        });
        rows.extend(cos_rows);
        let sin_rows = (1..=n).map(|h| {
            (0..k)
                .map(|j| (TAU * h as f64 * self.time(j) / self.t_f).sin())
                .collect::<Vec<_>>()
        });
        rows.extend(sin_rows);
        rows
    }

    /// Same coefficients played backwards in time: `φ'(t_j) = φ(t_{k−1−j})`,
    /// returned as a sample sequence.
    pub fn reversed_samples(&self) -> Vec<f64> {
        let mut s = self.samples();
        s.reverse();
        s
    }
}

/// One-sided DFT magnitude of the sampled ramp: `(frequency, |X_m|/k)` with
/// frequency in cycles per dimensionless time unit.
pub fn spectrum(ramp: &PhaseRamp) -> Vec<(f64, f64)> {
    let samples = ramp.samples();
    let k = samples.len();
    let mut buf: Vec<_> = samples.iter().map(|&x| c(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(k).process(&mut buf);
    (0..=k / 2)
        .map(|m| (m as f64 / ramp.t_f, buf[m].norm() / k as f64))
        .collect()
}
