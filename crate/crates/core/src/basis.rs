//! Dirichlet eigenfunctions of the interval [-π/2, π/2].
//!
//! Units are chosen so that the one-dimensional Hamiltonian is `-d²/dx²`
//! and the quantum number `n` has energy `n²`. Odd `n` are cosine modes
//! (even under reflection), even `n` are sine modes.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, TAU};

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Half-width of the interval.
pub const HALF_WIDTH: f64 = FRAC_PI_2;

/// Largest supported basis size.
pub const MAX_BASIS: usize = 256;

/// Slack allowed when checking that a coordinate lies in the closed interval.
const DOMAIN_SLACK: f64 = 1e-12;

#[inline]
pub(crate) fn norm_const() -> f64 {
    FRAC_2_PI.sqrt()
}

pub fn check_domain(x: f64) -> Result<()> {
    if x.is_finite() && x.abs() <= HALF_WIDTH + DOMAIN_SLACK {
        Ok(())
    } else {
        Err(Error::Domain { value: x })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Parity {
    /// cosine-type, odd quantum number
    Even,
    /// sine-type, even quantum number
    Odd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mode {
    pub n: usize,
    pub energy: f64,
    pub parity: Parity,
}

impl Mode {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("quantum numbers start at 1"));
        }
        let parity = if n % 2 == 1 {
            Parity::Even
        } else {
            Parity::Odd
        };
        Ok(Self {
            n,
            energy: (n * n) as f64,
            parity,
        })
    }

    /// Value and derivative of the normalized mode function at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64)> {
        check_domain(x)?;
        let k = self.n as f64;
        let c = norm_const();
        let (s, co) = (k * x).sin_cos();
        Ok(match self.parity {
            Parity::Even => (c * co, -c * k * s),
            Parity::Odd => (c * s, c * k * co),
        })
    }
}

/// Evaluates mode `n` and its derivative at `x`.
pub fn mode_eval(n: usize, x: f64) -> Result<(f64, f64)> {
    Mode::new(n)?.eval(x)
}

/// The first `size` modes of the interval.
#[derive(Clone, Debug, Serialize)]
pub struct Basis1D {
    modes: Vec<Mode>,
}

impl Basis1D {
    pub fn new(size: usize) -> Result<Self> {
        validate_size(size, 1)?;
        let modes = (1..=size).map(Mode::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { modes })
    }

    pub fn size(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Values and derivatives of modes `1..=size` at `x`, written into
    /// `values` and `derivs` (index `n - 1`). Uses the angle-addition
    /// recurrence so the cost is a single `sin_cos` per call.
    pub fn eval_all(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        eval_modes(x, values, derivs);
    }
}

pub(crate) fn validate_size(size: usize, min: usize) -> Result<()> {
    if size < min {
        return Err(Error::config(format!(
            "basis size {size} is below the minimum {min}"
        )));
    }
    if size > MAX_BASIS {
        return Err(Error::config(format!(
            "basis size {size} exceeds the maximum {MAX_BASIS}"
        )));
    }
    Ok(())
}

/// Fills `values[k]`, `derivs[k]` with mode `k + 1` evaluated at `x`.
/// The slices must have equal length; no domain check is done.
pub(crate) fn eval_modes(x: f64, values: &mut [f64], derivs: &mut [f64]) {
    debug_assert_eq!(values.len(), derivs.len());
    let c = norm_const();
    let step = C64::from_polar(1.0, x);
    let mut e = C64::new(1.0, 0.0);
    for (k, (v, d)) in values.iter_mut().zip(derivs.iter_mut()).enumerate() {
        e *= step;
        let n = (k + 1) as f64;
        if k % 2 == 0 {
            *v = c * e.re;
            *d = -c * n * e.im;
        } else {
            *v = c * e.im;
            *d = c * n * e.re;
        }
    }
}

/// Fills `out[k]` with `exp(-i (k+1)² tau)` by the recurrence on
/// consecutive squares.
pub(crate) fn energy_phases(tau: f64, out: &mut [C64]) {
    let tau = reduce_period(tau);
    if tau == 0.0 {
        out.fill(C64::new(1.0, 0.0));
        return;
    }
    // (n+1)² - n² = 2n + 1
    let two = C64::from_polar(1.0, -2.0 * tau);
    let mut inc = C64::from_polar(1.0, -tau);
    let mut p = C64::new(1.0, 0.0);
    for slot in out.iter_mut() {
        p *= inc;
        *slot = p;
        inc *= two;
    }
}

/// Reduces an elapsed time modulo the revival period 2π. Every energy is an
/// integer, so `exp(-i E tau) == exp(-i E reduce_period(tau))`.
pub(crate) fn reduce_period(tau: f64) -> f64 {
    let k = (tau / TAU).round();
    tau - k * TAU
}

/// `exp(-i energy tau)` with the elapsed time reduced first.
pub(crate) fn energy_phase(energy: usize, tau: f64) -> C64 {
    C64::from_polar(1.0, -(energy as f64) * reduce_period(tau))
}
