//! Two-spin (I–S) propagation under chemical shift, scalar coupling and a
//! sampled RF field on spin I.
//!
//! The Hamiltonian is `ω₀ I_z + 2πJ I_z S_z + ε (w_x(t) I_x + w_y(t) I_y)`,
//! held constant over each waveform sample. The observed quantity is the
//! S-spin coherence `S_x(t)` normalized to 1 at `t = 0`.
//!
//! Two engines are provided. `Factorized2x2` uses that `S_z` is conserved:
//! the I spin evolves under `H_± = (ω₀ ± πJ) I_z + ε(w_x I_x + w_y I_y)` and
//! `S_x(t) = ½ Re Tr(U₊ U₋†)`. `Full4x4` propagates the product-space
//! unitary with a general matrix exponential and serves as its oracle.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{RfSample, Waveform};

/// Default spacing of recorded trace points, seconds.
pub const DEFAULT_RECORD_INTERVAL: f64 = 10e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    /// Scalar coupling, Hz.
    pub j_coupling: f64,
    /// Offset of spin I from its carrier, rad/s. The S offset is zero.
    pub omega0: f64,
}

impl SpinSystem {
    pub fn new(j_coupling: f64, omega0: f64) -> Self {
        SpinSystem { j_coupling, omega0 }
    }

    pub fn with_offset(self, omega0: f64) -> Self {
        SpinSystem { omega0, ..self }
    }

    /// Acquisition window of twelve coupling periods.
    pub fn default_duration(&self) -> f64 {
        12.0 / self.j_coupling
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Engine {
    #[default]
    #[serde(rename = "factorized_2x2")]
    Factorized2x2,
    #[serde(rename = "full_4x4")]
    Full4x4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub duration: f64,
    pub dt: f64,
    /// Realized over nominal RF amplitude.
    pub epsilon: f64,
    pub engine: Engine,
    pub record_interval: f64,
}

impl SimConfig {
    pub fn new(duration: f64, dt: f64, epsilon: f64, engine: Engine) -> Result<Self> {
        let cfg = SimConfig {
            duration,
            dt,
            epsilon,
            engine,
            record_interval: DEFAULT_RECORD_INTERVAL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_interval(mut self, interval: f64) -> Self {
        self.record_interval = interval;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(Error::invalid(
                "duration",
                format!("{} s is shorter than dt", self.duration),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(
                "epsilon",
                format!("{} must be positive", self.epsilon),
            ));
        }
        if !(self.record_interval.is_finite() && self.record_interval > 0.0) {
            return Err(Error::invalid(
                "record_interval",
                format!("{} must be positive", self.record_interval),
            ));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn stride(&self) -> usize {
        ((self.record_interval / self.dt).round() as usize).max(1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub sx: Vec<f64>,
}

impl SimTrace {
    fn push(&mut self, t: f64, sx: f64) {
        self.times.push(t);
        self.sx.push(sx);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyResult {
    pub omega0: f64,
    pub epsilon: f64,
    pub eta: f64,
}

/// Element of SU(2) stored as `[[a, −b*], [b, a*]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Su2 {
    pub a: Complex64,
    pub b: Complex64,
}

impl Su2 {
    pub const IDENTITY: Su2 = Su2 {
        a: Complex64::new(1.0, 0.0),
        b: Complex64::new(0.0, 0.0),
    };

    /// `exp(−i (Ω·σ/2) dt)` for the angular-velocity vector `Ω`, in closed form.
    pub fn rotation(omega: [f64; 3], dt: f64) -> Su2 {
        let [x, y, z] = omega;
        let norm = (x * x + y * y + z * z).sqrt();
        if norm == 0.0 {
            return Su2::IDENTITY;
        }
        let (s, c) = (0.5 * norm * dt).sin_cos();
        let s = s / norm;
        Su2 {
            a: Complex64::new(c, -s * z),
            b: Complex64::new(s * y, -s * x),
        }
    }

    pub fn det(self) -> f64 {
        self.a.norm_sqr() + self.b.norm_sqr()
    }

    /// `½ Re Tr(self · other†)`
    pub fn overlap(self, other: Su2) -> f64 {
        (self.a * other.a.conj()).re + (self.b * other.b.conj()).re
    }

    pub fn to_matrix(self) -> [[Complex64; 2]; 2] {
        [[self.a, -self.b.conj()], [self.b, self.a.conj()]]
    }
}

impl std::ops::Mul for Su2 {
    type Output = Su2;

    fn mul(self, rhs: Su2) -> Su2 {
        Su2 {
            a: self.a * rhs.a - self.b.conj() * rhs.b,
            b: self.b * rhs.a + self.a.conj() * rhs.b,
        }
    }
}

fn check_inputs(waveform: &Waveform, config: &SimConfig) -> Result<usize> {
    config.validate()?;
    if waveform.is_empty() {
        return Err(Error::invalid("waveform", "zero-length waveform"));
    }
    if (config.dt - waveform.dt()).abs() > 1e-9 * waveform.dt() {
        return Err(Error::invalid(
            "dt",
            format!(
                "simulation step {} s does not match waveform step {} s",
                config.dt,
                waveform.dt()
            ),
        ));
    }
    let steps = config.steps();
    if steps > waveform.len() {
        return Err(Error::invalid(
            "duration",
            format!(
                "{} steps requested but waveform holds {}",
                steps,
                waveform.len()
            ),
        ));
    }
    Ok(steps)
}

/// Drives a step closure over the waveform and records `S_x` on the
/// configured stride and at the final step.
fn run(
    samples: &[RfSample],
    config: &SimConfig,
    steps: usize,
    mut step: impl FnMut(&RfSample) -> f64,
) -> SimTrace {
    let stride = config.stride();
    let cap = steps / stride + 2;
    let mut trace = SimTrace {
        times: Vec::with_capacity(cap),
        sx: Vec::with_capacity(cap),
    };
    trace.push(0.0, 1.0);
    for (i, sample) in samples[..steps].iter().enumerate() {
        let sx = step(sample);
        let n = i + 1;
        if n % stride == 0 || n == steps {
            trace.push(n as f64 * config.dt, sx);
        }
    }
    trace
}

pub fn propagate(system: &SpinSystem, waveform: &Waveform, config: &SimConfig) -> Result<SimTrace> {
    let steps = check_inputs(waveform, config)?;
    let trace = match config.engine {
        Engine::Factorized2x2 => propagate_factorized(system, waveform, config, steps),
        Engine::Full4x4 => propagate_full(system, waveform, config, steps),
    };
    Ok(trace)
}

fn propagate_factorized(
    system: &SpinSystem,
    waveform: &Waveform,
    config: &SimConfig,
    steps: usize,
) -> SimTrace {
    let half_j = std::f64::consts::PI * system.j_coupling;
    let (z_up, z_down) = (system.omega0 + half_j, system.omega0 - half_j);
    let (eps, dt) = (config.epsilon, config.dt);
    if system.j_coupling == 0.0 {
        // both S manifolds see the same Hamiltonian and S_x is conserved
        return run(waveform.samples(), config, steps, |_| 1.0);
    }
    let mut up = Su2::IDENTITY;
    let mut down = Su2::IDENTITY;
    run(waveform.samples(), config, steps, |s| {
        let (x, y) = (eps * s.wx, eps * s.wy);
        up = Su2::rotation([x, y, z_up], dt) * up;
        down = Su2::rotation([x, y, z_down], dt) * down;
        up.overlap(down)
    })
}

/// Spin-I propagators `(U₊, U₋)` of the two S manifolds after the full
/// configured duration, without renormalization.
pub fn final_propagators(
    system: &SpinSystem,
    waveform: &Waveform,
    config: &SimConfig,
) -> Result<(Su2, Su2)> {
    let steps = check_inputs(waveform, config)?;
    let half_j = std::f64::consts::PI * system.j_coupling;
    let (eps, dt) = (config.epsilon, config.dt);
    let mut up = Su2::IDENTITY;
    let mut down = Su2::IDENTITY;
    for s in &waveform.samples()[..steps] {
        let (x, y) = (eps * s.wx, eps * s.wy);
        up = Su2::rotation([x, y, system.omega0 + half_j], dt) * up;
        down = Su2::rotation([x, y, system.omega0 - half_j], dt) * down;
    }
    Ok((up, down))
}

type C4 = Matrix4<Complex64>;

fn spin_operators() -> (C4, C4, C4, C4, C4) {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let z = c(0.0, 0.0);
    let h = 0.5;
    // basis |m_I m_S>: |αα>, |αβ>, |βα>, |ββ>
    let ix = C4::new(
        z, z, c(h, 0.0), z,
        z, z, z, c(h, 0.0),
        c(h, 0.0), z, z, z,
        z, c(h, 0.0), z, z,
    );
    let iy = C4::new(
        z, z, c(0.0, -h), z,
        z, z, z, c(0.0, -h),
        c(0.0, h), z, z, z,
        z, c(0.0, h), z, z,
    );
    let iz = C4::from_diagonal(&nalgebra::Vector4::new(c(h, 0.0), c(h, 0.0), c(-h, 0.0), c(-h, 0.0)));
    let sz = C4::from_diagonal(&nalgebra::Vector4::new(c(h, 0.0), c(-h, 0.0), c(h, 0.0), c(-h, 0.0)));
    let sx = C4::new(
        z, c(h, 0.0), z, z,
        c(h, 0.0), z, z, z,
        z, z, z, c(h, 0.0),
        z, z, c(h, 0.0), z,
    );
    (ix, iy, iz, sz, sx)
}

fn propagate_full(
    system: &SpinSystem,
    waveform: &Waveform,
    config: &SimConfig,
    steps: usize,
) -> SimTrace {
    let (ix, iy, iz, sz, sx) = spin_operators();
    let two_pi_j = std::f64::consts::TAU * system.j_coupling;
    let static_part = iz * Complex64::from(system.omega0) + (iz * sz) * Complex64::from(two_pi_j);
    let norm = (sx * sx).trace().re;
    let minus_i_dt = Complex64::new(0.0, -config.dt);
    let eps = config.epsilon;
    let mut u = C4::identity();
    run(waveform.samples(), config, steps, |s| {
        let h = static_part
            + ix * Complex64::from(eps * s.wx)
            + iy * Complex64::from(eps * s.wy);
        u = (h * minus_i_dt).exp() * u;
        let rho = u * sx * u.adjoint();
        (rho * sx).trace().re / norm
    })
}

/// Trapezoidal time average of the trace, `(1/T) ∫ S_x dt`.
pub fn efficiency(trace: &SimTrace) -> f64 {
    match trace.times.len() {
        0 => f64::NAN,
        1 => trace.sx[0],
        n => {
            let area: f64 = (1..n)
                .map(|i| 0.5 * (trace.sx[i] + trace.sx[i - 1]) * (trace.times[i] - trace.times[i - 1]))
                .sum();
            area / (trace.times[n - 1] - trace.times[0])
        }
    }
}

pub fn efficiency_at(
    system: &SpinSystem,
    waveform: &Waveform,
    config: &SimConfig,
) -> Result<EfficiencyResult> {
    let trace = propagate(system, waveform, config)?;
    Ok(EfficiencyResult {
        omega0: system.omega0,
        epsilon: config.epsilon,
        eta: efficiency(&trace),
    })
}

/// `η(ω₀)` for each offset, in grid order.
pub fn offset_sweep(
    system: &SpinSystem,
    waveform: &Waveform,
    config: &SimConfig,
    offsets: &[f64],
) -> Result<Vec<EfficiencyResult>> {
    offsets
        .par_iter()
        .map(|&w| efficiency_at(&system.with_offset(w), waveform, config))
        .collect()
}

/// One offset sweep per `ε`, rows in the order of `epsilons`.
pub fn inhomogeneity_sweep(
    system: &SpinSystem,
    waveform: &Waveform,
    config: &SimConfig,
    epsilons: &[f64],
    offsets: &[f64],
) -> Result<Vec<Vec<EfficiencyResult>>> {
    epsilons
        .iter()
        .map(|&eps| offset_sweep(system, waveform, &config.with_epsilon(eps), offsets))
        .collect()
}

/// `count` evenly spaced points spanning `[min, max]`.
pub fn uniform_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (min + max)],
        _ => (0..count)
            .map(|i| min + (max - min) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
