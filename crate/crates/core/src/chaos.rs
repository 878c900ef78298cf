//! The n-scroll Chua system and its fixed-step RK4 integration.
//!
//! ```text
//! z1' = alpha * (z2 - q(z1))
//! z2' = z1 - z2 + z3
//! z3' = -beta * z2
//! ```
//!
//! `q` is a sine nonlinearity on `(-2ac, 2ac)` continued by straight lines
//! outside; with the default parameters the attractor has eight scrolls.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};

/// Magnitude above which any state component counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e3;
pub const DEFAULT_STEP: f64 = 0.005;
pub const DEFAULT_BURN_IN: usize = 10_000;
pub const MAX_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChuaParams {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for ChuaParams {
    fn default() -> Self {
        Self {
            alpha: 10.814,
            beta: 14.0,
            a: 1.3,
            b: 0.11,
            c: 7.0,
            d: 0.0,
        }
    }
}

impl ChuaParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.a, self.b, self.c, self.d];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Chua parameters must be finite"));
        }
        if self.a <= 0.0 {
            return Err(Error::invalid(format!("parameter a must be > 0, got {}", self.a)));
        }
        if self.c <= 0.0 || self.c.fract() != 0.0 {
            return Err(Error::invalid(format!(
                "parameter c must be a positive integer, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// The breakpoint `2ac` where the sine branch meets the linear branches.
    pub fn breakpoint(&self) -> f64 {
        2.0 * self.a * self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChaosState {
    pub z1: f64,
    pub z2: f64,
    pub z3: f64,
}

impl ChaosState {
    pub const fn new(z1: f64, z2: f64, z3: f64) -> Self {
        Self { z1, z2, z3 }
    }

    /// The customary starting point `(0.1, 0.1, 0.1)`.
    pub const fn standard_initial() -> Self {
        Self::new(0.1, 0.1, 0.1)
    }

    pub fn max_abs(&self) -> f64 {
        self.z1.abs().max(self.z2.abs()).max(self.z3.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.z1.is_finite() && self.z2.is_finite() && self.z3.is_finite()
    }

    fn axpy(&self, h: f64, k: &ChaosState) -> ChaosState {
        ChaosState::new(self.z1 + h * k.z1, self.z2 + h * k.z2, self.z3 + h * k.z3)
    }
}

/// Piecewise nonlinearity `q(z1)`.
pub fn q_nonlinearity(z1: f64, p: &ChuaParams) -> f64 {
    let bp = p.breakpoint();
    let slope = p.b * PI / (2.0 * p.a);
    if z1 >= bp {
        slope * (z1 - bp)
    } else if z1 <= -bp {
        slope * (z1 + bp)
    } else {
        -p.b * (PI * z1 / (2.0 * p.a) + p.d).sin()
    }
}

/// Right-hand side of the system.
pub fn derivatives(s: &ChaosState, p: &ChuaParams) -> ChaosState {
    ChaosState::new(
        p.alpha * (s.z2 - q_nonlinearity(s.z1, p)),
        s.z1 - s.z2 + s.z3,
        -p.beta * s.z2,
    )
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(s: &ChaosState, p: &ChuaParams, h: f64) -> ChaosState {
    let k1 = derivatives(s, p);
    let k2 = derivatives(&s.axpy(h / 2.0, &k1), p);
    let k3 = derivatives(&s.axpy(h / 2.0, &k2), p);
    let k4 = derivatives(&s.axpy(h, &k3), p);
    ChaosState::new(
        s.z1 + h / 6.0 * (k1.z1 + 2.0 * k2.z1 + 2.0 * k3.z1 + k4.z1),
        s.z2 + h / 6.0 * (k1.z2 + 2.0 * k2.z2 + 2.0 * k3.z2 + k4.z2),
        s.z3 + h / 6.0 * (k1.z3 + 2.0 * k2.z3 + 2.0 * k3.z3 + k4.z3),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosTrajectory {
    pub params: ChuaParams,
    pub step_size: f64,
    pub burn_in: usize,
    /// Integration steps between retained samples (1 keeps every step).
    pub stride: usize,
    /// Post-burn-in states; sample `i` sits at time `(burn_in + (i + 1) * stride) * step_size`.
    pub samples: Vec<ChaosState>,
}

impl ChaosTrajectory {
    pub fn time_of(&self, index: usize) -> f64 {
        (self.burn_in + (index + 1) * self.stride) as f64 * self.step_size
    }

    /// Writes `t,z1,z2,z3` rows with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "z1", "z2", "z3"])?;
        for (i, s) in self.samples.iter().enumerate() {
            w.write_record([
                self.time_of(i).to_string(),
                s.z1.to_string(),
                s.z2.to_string(),
                s.z3.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates with a fixed RK4 step, discarding `burn_in` steps and keeping
/// every step afterwards.
pub fn integrate(
    initial: ChaosState,
    params: &ChuaParams,
    step_size: f64,
    burn_in: usize,
    n_samples: usize,
) -> Result<ChaosTrajectory> {
    integrate_strided(initial, params, step_size, burn_in, n_samples, 1)
}

/// Like [`integrate`] but retains one state every `stride` steps.
pub fn integrate_strided(
    initial: ChaosState,
    params: &ChuaParams,
    step_size: f64,
    burn_in: usize,
    n_samples: usize,
    stride: usize,
) -> Result<ChaosTrajectory> {
    params.validate()?;
    if !(step_size > 0.0 && step_size <= MAX_STEP) {
        return Err(Error::invalid(format!(
            "step size must lie in (0, {MAX_STEP}], got {step_size}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be >= 1"));
    }
    if !initial.is_finite() {
        return Err(Error::invalid("initial state must be finite"));
    }

    let mut state = initial;
    let mut step = 0usize;
    let mut advance = |state: &mut ChaosState| -> Result<()> {
        *state = rk4_step(state, params, step_size);
        step += 1;
        // NaN fails the comparison, so test the negation
        if !(state.max_abs() <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence {
                step,
                limit: DIVERGENCE_LIMIT,
            });
        }
        Ok(())
    };
    for _ in 0..burn_in {
        advance(&mut state)?;
    }
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..stride {
            advance(&mut state)?;
        }
        samples.push(state);
    }
    Ok(ChaosTrajectory {
        params: *params,
        step_size,
        burn_in,
        stride,
        samples,
    })
}

/// The first `n` values of `z3`.
pub fn modulation_sequence(traj: &ChaosTrajectory, n: usize) -> Result<Vec<f64>> {
    if n > traj.samples.len() {
        return Err(Error::invalid(format!(
            "requested {n} modulation values but trajectory holds {}",
            traj.samples.len()
        )));
    }
    Ok(traj.samples[..n].iter().map(|s| s.z3).collect())
}

/// Divides every value by the largest magnitude so the result lies in
/// `[-1, 1]`. An all-zero sequence is returned unchanged.
pub fn normalize_sequence(seq: &mut [f64]) {
    let peak = seq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        seq.iter_mut().for_each(|v| *v /= peak);
    }
}

/// Sorted list of the distinct sine-branch wells visited by `z1`, where well
/// `k` is the interval `[2ak, 2a(k+1))`.
pub fn visited_wells(samples: &[ChaosState], params: &ChuaParams) -> Vec<i64> {
    let width = 2.0 * params.a;
    let mut wells: Vec<i64> = samples
        .iter()
        .map(|s| (s.z1 / width).floor() as i64)
        .collect();
    wells.sort_unstable();
    wells.dedup();
    wells
}
