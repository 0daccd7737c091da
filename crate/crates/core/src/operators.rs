//! Half-interval indicator and sign operators in the mode basis, their
//! Heisenberg-picture evolution, and the two-time sign correlator.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::basis::{energy_phase, validate_size};
use crate::error::{Error, Result};
use crate::state::StateMatrix;

/// Overlap `<φ_1, Σ φ_2> = 8 / (3π)`.
pub const SIGN_OVERLAP_12: f64 = 8.0 / (3.0 * PI);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    Theta,
    Sigma,
    Custom,
}

/// Which tensor factor an observable acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Axis {
    One,
    Two,
}

impl Axis {
    pub fn other(self) -> Self {
        match self {
            Axis::One => Axis::Two,
            Axis::Two => Axis::One,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Axis::One),
            2 => Ok(Axis::Two),
            _ => Err(Error::config(format!("axis must be 1 or 2, got {i}"))),
        }
    }
}

/// Real N×N matrix of a one-dimensional multiplication operator.
#[derive(Clone, Debug)]
pub struct OperatorMatrix1D {
    pub entries: DMatrix<f64>,
    pub kind: OperatorKind,
}

/// `∫_0^{π/2} φ_m φ_n dx` for quantum numbers `m`, `n` (1-based).
///
/// Same-parity products are even or odd about the origin and give 0 off the
/// diagonal; for a cosine mode `c` and a sine mode `s` product-to-sum gives
/// `(2/π) s / (s² - c²)`.
pub fn theta_entry(m: usize, n: usize) -> f64 {
    if m == n {
        return 0.5;
    }
    if (m + n).is_multiple_of(2) {
        return 0.0;
    }
    let (c, s) = if m % 2 == 1 { (m, n) } else { (n, m) };
    let (c, s) = (c as f64, s as f64);
    FRAC_2_PI * s / (s * s - c * c)
}

impl OperatorMatrix1D {
    /// Projector onto the right half `x > 0`.
    pub fn theta(size: usize) -> Result<Self> {
        validate_size(size, 1)?;
        Ok(Self {
            entries: DMatrix::from_fn(size, size, |i, j| theta_entry(i + 1, j + 1)),
            kind: OperatorKind::Theta,
        })
    }

    /// Multiplication by `sgn(x)`, i.e. `2θ - 1`.
    pub fn sigma(size: usize) -> Result<Self> {
        let theta = Self::theta(size)?;
        let entries = theta.entries * 2.0 - DMatrix::identity(size, size);
        Ok(Self {
            entries,
            kind: OperatorKind::Sigma,
        })
    }

    pub fn custom(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::config("operator matrix must be square"));
        }
        validate_size(entries.nrows(), 1)?;
        Ok(Self {
            entries,
            kind: OperatorKind::Custom,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// `exp(i H τ) O exp(-i H τ)`: entry `(m, n)` picks up `exp(i (m² - n²) τ)`.
    pub fn heisenberg(&self, tau: f64) -> DMatrix<C64> {
        DMatrix::from_fn(self.size(), self.size(), |i, j| {
            let (m, n) = (i + 1, j + 1);
            // exp(i(m²-n²)τ) = exp(-i n² τ) / exp(-i m² τ)
            let ph = energy_phase(n * n, tau) * energy_phase(m * m, tau).conj();
            ph * self.entries[(i, j)]
        })
    }
}

pub fn theta_matrix(size: usize) -> Result<OperatorMatrix1D> {
    OperatorMatrix1D::theta(size)
}

pub fn sigma_matrix(size: usize) -> Result<OperatorMatrix1D> {
    OperatorMatrix1D::sigma(size)
}

/// Closed-form two-time correlator of the singlet:
/// `-cos(3 (s - t)) (8 / 3π)²`.
pub fn correlation_analytic(s: f64, t: f64) -> f64 {
    -(3.0 * (s - t)).cos() * SIGN_OVERLAP_12 * SIGN_OVERLAP_12
}

/// `<ψ, A_s B_t ψ>` in the truncated basis of size `size`, with `A` the sign
/// of coordinate 1 and `B` the sign of coordinate 2. The state is taken back
/// to time 0 before the Heisenberg operators act.
pub fn operator_correlation(state: &StateMatrix, s: f64, t: f64, size: usize) -> Result<f64> {
    validate_size(size, 2)?;
    let psi0 = state.evolve(0.0).resized(size)?;
    let sigma = OperatorMatrix1D::sigma(size)?;
    let a_s = sigma.heisenberg(s);
    let b_t = sigma.heisenberg(t);
    let c = psi0.coeffs();
    let applied = &a_s * c * b_t.transpose();
    let value = c
        .iter()
        .zip(applied.iter())
        .map(|(ci, ai)| ci.conj() * ai)
        .sum::<C64>();
    Ok(value.re)
}

/// Frobenius norm of `[Σ_s, Σ_t]` in the truncated one-dimensional basis.
/// The same for either factor, `kind` only labels the observable.
pub fn commutator_norm(_kind: Axis, s: f64, t: f64, size: usize) -> Result<f64> {
    validate_size(size, 2)?;
    let sigma = OperatorMatrix1D::sigma(size)?;
    let a = sigma.heisenberg(s);
    let b = sigma.heisenberg(t);
    Ok((&a * &b - &b * &a).norm())
}

/// Frobenius norm of `[A_s ⊗ 1, 1 ⊗ B_t]` on the truncated tensor product.
pub fn cross_commutator_norm(s: f64, t: f64, size: usize) -> Result<f64> {
    validate_size(size, 2)?;
    let sigma = OperatorMatrix1D::sigma(size)?;
    let id = DMatrix::<C64>::identity(size, size);
    let a = sigma.heisenberg(s).kronecker(&id);
    let b = id.kronecker(&sigma.heisenberg(t));
    Ok((&a * &b - &b * &a).norm())
}
