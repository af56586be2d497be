//! Mean-field description of the rumour on `G(n, k, c / (n - 2k - 1))`.
//!
//! The ignorant, spreader and stifler masses `(x, y, z)` follow
//!
//! ```text
//! x' = -(2k+c)^2 α x y
//! y' =  (2k+c)^2 α x y - (2k+c)(1-α)(y+z) y - (2k+c) α y
//! z' =  (2k+c)(1-α)(y+z) y + (2k+c) α y
//! ```
//!
//! with `α = E[1 / (X + 2k)]`, `X ~ Poisson(c)`. The final stifler mass solves
//! `z = 1 - exp(-λ z)` with `λ = (2k+c) α + 1 - α`, which has the closed form
//! `z∞ = 1 + W₀(-λ e^{-λ}) / λ`.

use serde::{Deserialize, Serialize};
use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::poisson;

const INV_E: f64 = 1.0 / E;

/// Probability that a uniform neighbour choice hits one given ring neighbour,
/// in the large-`n` limit: `E[1 / (X + 2k)]` with `X ~ Poisson(c)`.
pub fn alpha(k: usize, c: f64, tol: f64) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let two_k = 2 * k as u64;
    poisson::expectation(c, tol, |x| 1.0 / (x + two_k) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub k: usize,
    pub c: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl MeanFieldParams {
    pub fn new(k: usize, c: f64) -> Result<Self> {
        Self::validate(k, c)?;
        Ok(Self::with_alpha(k, c, alpha(k, c, poisson::DEFAULT_TOL)))
    }

    /// Uses a caller-supplied `α`, e.g. `1 / (2k + c)` for a degree that is
    /// exactly `2k + c` at every vertex.
    pub fn with_alpha(k: usize, c: f64, alpha: f64) -> Self {
        let rate = 2.0 * k as f64 + c;
        Self {
            k,
            c,
            alpha,
            lambda: rate * alpha + 1.0 - alpha,
        }
    }

    fn validate(k: usize, c: f64) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidParams(format!("c must be >= 0, got {c}")));
        }
        Ok(())
    }

    /// Mean degree `2k + c`.
    pub fn rate(&self) -> f64 {
        2.0 * self.k as f64 + self.c
    }

    pub fn z_infinity(&self) -> f64 {
        z_infinity_for_lambda(self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MeanFieldState {
    pub const ALL_IGNORANT: Self = Self {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// One spreader among `n_ref` vertices.
    pub fn single_spreader(n_ref: f64) -> Self {
        Self::new(1.0 - 1.0 / n_ref, 1.0 / n_ref, 0.0)
    }

    pub fn total(&self) -> f64 {
        self.x + self.y + self.z
    }

    fn axpy(&self, h: f64, d: &Self) -> Self {
        Self::new(self.x + h * d.x, self.y + h * d.y, self.z + h * d.z)
    }
}

pub fn ode_rhs(s: &MeanFieldState, p: &MeanFieldParams) -> MeanFieldState {
    let rate = p.rate();
    let informing = rate * rate * p.alpha * s.x * s.y;
    let stifling = rate * (1.0 - p.alpha) * (s.y + s.z) * s.y + rate * p.alpha * s.y;
    MeanFieldState::new(-informing, informing - stifling, stifling)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub dt: f64,
    /// Fixed horizon; `None` runs until `y` falls below `y_stop` while decaying.
    pub t_max: Option<f64>,
    pub y_stop: f64,
    /// Keep every `record_every`-th state (the last state is always kept).
    pub record_every: usize,
    pub max_steps: usize,
}

impl OdeOptions {
    /// `dt = 1e-3 / (2k+c)^2`, adaptive horizon.
    pub fn for_params(p: &MeanFieldParams) -> Self {
        Self {
            dt: 1e-3 / p.rate().powi(2),
            t_max: None,
            y_stop: 1e-10,
            record_every: 1000,
            max_steps: 100_000_000,
        }
    }

    /// Allowed drift of `x + y + z` from 1: the truncation scale `10 dt⁴`
    /// plus a floating-point floor, since `10 dt⁴` is far below f64
    /// resolution at the default step.
    pub fn conservation_tolerance(&self) -> f64 {
        10.0 * self.dt.powi(4) + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, MeanFieldState) {
        (
            *self.times.last().expect("non-empty"),
            *self.states.last().expect("non-empty"),
        )
    }

    /// CSV with header `t,x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,z\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t},{},{},{}\n", s.x, s.y, s.z));
        }
        out
    }
}

/// Running sum with Kahan compensation, one per component.
#[derive(Clone, Copy)]
struct Compensated {
    value: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, delta: f64) {
        let y = delta - self.carry;
        let t = self.value + y;
        self.carry = (t - self.value) - y;
        self.value = t;
    }
}

/// Fixed-step classical RK4.
pub fn integrate(
    params: &MeanFieldParams,
    initial: MeanFieldState,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::InvalidParams(format!("dt must be > 0, got {}", opts.dt)));
    }
    if let Some(t_max) = opts.t_max {
        if !(t_max > 0.0) {
            return Err(Error::InvalidParams(format!("t_max must be > 0, got {t_max}")));
        }
    }
    let comps = [initial.x, initial.y, initial.z];
    if comps.iter().any(|v| !(0.0..=1.0).contains(v)) || (initial.total() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParams(format!(
            "initial state {initial:?} is not a probability vector"
        )));
    }

    let tol = opts.conservation_tolerance();
    let record_every = opts.record_every.max(1);
    let dt = opts.dt;
    let steps_fixed = opts.t_max.map(|t| (t / dt).ceil() as usize);

    let mut acc = [initial.x, initial.y, initial.z].map(|value| Compensated { value, carry: 0.0 });
    let mut state = initial;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![initial],
    };
    let mut step = 0usize;
    loop {
        let done = match steps_fixed {
            Some(total) => step >= total,
            None => state.y < opts.y_stop && ode_rhs(&state, params).y <= 0.0,
        };
        if done {
            break;
        }
        if step >= opts.max_steps {
            return Err(Error::Integration(format!(
                "no absorption within {} steps",
                opts.max_steps
            )));
        }

        let k1 = ode_rhs(&state, params);
        let k2 = ode_rhs(&state.axpy(dt / 2.0, &k1), params);
        let k3 = ode_rhs(&state.axpy(dt / 2.0, &k2), params);
        let k4 = ode_rhs(&state.axpy(dt, &k3), params);
        let inc = |a: f64, b: f64, c: f64, d: f64| dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        acc[0].add(inc(k1.x, k2.x, k3.x, k4.x));
        acc[1].add(inc(k1.y, k2.y, k3.y, k4.y));
        acc[2].add(inc(k1.z, k2.z, k3.z, k4.z));
        state = MeanFieldState::new(acc[0].value, acc[1].value, acc[2].value);
        step += 1;

        let drift = (state.total() - 1.0).abs();
        if drift >= tol || state.x < -1e-12 || state.y < -1e-12 || state.z < -1e-12 {
            return Err(Error::Integration(format!(
                "step {step}: state {state:?} drifted by {drift:e} (tolerance {tol:e}); reduce dt"
            )));
        }
        if step.is_multiple_of(record_every) {
            traj.times.push(step as f64 * dt);
            traj.states.push(state);
        }
    }
    if !step.is_multiple_of(record_every) {
        traj.times.push(step as f64 * dt);
        traj.states.push(state);
    }
    Ok(traj)
}

/// Principal branch of the Lambert W function, the inverse of `w ↦ w eʷ`
/// on `w ≥ -1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < -INV_E {
        return Err(Error::Domain(format!("lambert_w0 undefined at {x} < -1/e")));
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(0.0);
    }

    // Series in p = sqrt(2 (e x + 1)) around the branch point.
    let p2 = 2.0 * (E * x + 1.0);
    if p2 < 1e-6 {
        let p = p2.max(0.0).sqrt();
        return Ok(-1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p.powi(3) - 43.0 / 540.0 * p.powi(4));
    }
    let mut w = if x < -0.32 {
        let p = p2.sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p.powi(3)
    } else if x < 3.0 {
        // Winitzki's approximation.
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

/// Non-trivial root of `z = 1 - exp(-λ z)`; zero when `λ <= 1`.
pub fn z_infinity_for_lambda(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return 0.0;
    }
    let w = lambert_w0(-lambda * (-lambda).exp()).expect("-λe^{-λ} lies in [-1/e, 0)");
    (1.0 + w / lambda).max(0.0)
}

/// Mean-field final stifler fraction for `G(n, k, c)`.
pub fn z_infinity(k: usize, c: f64) -> Result<f64> {
    Ok(MeanFieldParams::new(k, c)?.z_infinity())
}

/// JSON summary printed by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldReport {
    pub k: usize,
    pub c: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub z_inf: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z_ode: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub t_max: Option<f64>,
}

impl From<&MeanFieldParams> for MeanFieldReport {
    fn from(p: &MeanFieldParams) -> Self {
        Self {
            k: p.k,
            c: p.c,
            alpha: p.alpha,
            lambda: p.lambda,
            z_inf: p.z_infinity(),
            z_ode: None,
            t_max: None,
        }
    }
}
