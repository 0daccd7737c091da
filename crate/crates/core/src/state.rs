//! Two-coordinate states as coefficient matrices over mode pairs.
//!
//! Entry `(m, n)` of the coefficient matrix (0-based indices, quantum numbers
//! `m + 1`, `n + 1`) multiplies `φ_{m+1}(x1) φ_{n+1}(x2)`. Coefficients are
//! stored at the reference time `t0`; evolution only rotates phases.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::basis::{check_domain, energy_phase, eval_modes, validate_size, HALF_WIDTH};
use crate::error::{Error, Result};
use crate::field::{Field, Scratch};
use crate::operators::{Axis, OperatorMatrix1D};
use crate::quadrature::PanelRule;

/// Default Frobenius-norm tolerance for a normalized state.
pub const DEFAULT_NORM_TOL: f64 = 1e-10;

/// Branch probabilities below this are treated as an impossible outcome.
pub const MIN_BRANCH_PROB: f64 = 1e-12;

/// Default quadrature nodes for marginal densities.
pub const DEFAULT_GRID: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    /// coordinate > 0
    Plus,
    /// coordinate < 0
    Minus,
}

impl Side {
    pub fn of(x: f64) -> Self {
        if x >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// ψ and its gradient at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Amplitude {
    pub value: C64,
    pub grad: [C64; 2],
}

/// Record of the projection that produced a collapsed state. The parent
/// coefficients are exact, so quantities that only need `P² = P` can be
/// computed without the truncation error of the collapsed expansion.
#[derive(Clone, Debug)]
struct Collapse {
    parent: DMatrix<C64>,
    t_collapse: f64,
    axis: Axis,
    side: Side,
    prob: f64,
}

#[derive(Clone, Debug)]
pub struct StateMatrix {
    coeffs: DMatrix<C64>,
    t0: f64,
    norm_tol: f64,
    collapse: Option<Box<Collapse>>,
}

impl StateMatrix {
    pub fn new(coeffs: DMatrix<C64>, t0: f64) -> Result<Self> {
        Self::with_tolerance(coeffs, t0, DEFAULT_NORM_TOL)
    }

    pub fn with_tolerance(coeffs: DMatrix<C64>, t0: f64, norm_tol: f64) -> Result<Self> {
        if coeffs.nrows() != coeffs.ncols() {
            return Err(Error::config("coefficient matrix must be square"));
        }
        validate_size(coeffs.nrows(), 1)?;
        if !(norm_tol > 0.0) {
            return Err(Error::config("norm tolerance must be positive"));
        }
        if !t0.is_finite()
            || coeffs
                .iter()
                .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::config("state contains non-finite values"));
        }
        let norm = coeffs.norm();
        if (norm - 1.0).abs() > norm_tol {
            return Err(Error::config(format!(
                "state norm {norm} differs from 1 by more than {norm_tol:e}"
            )));
        }
        Ok(Self {
            coeffs,
            t0,
            norm_tol,
            collapse: None,
        })
    }

    /// Normalizes `coeffs` before construction.
    pub fn normalized(coeffs: DMatrix<C64>, t0: f64) -> Result<Self> {
        let norm = coeffs.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::config("cannot normalize a zero or non-finite state"));
        }
        Self::new(coeffs / C64::new(norm, 0.0), t0)
    }

    /// The antisymmetric state `(φ1⊗φ2 - φ2⊗φ1)/√2` at `t0 = 0`.
    pub fn singlet(size: usize) -> Result<Self> {
        validate_size(size, 2)?;
        let mut c = DMatrix::zeros(size, size);
        c[(0, 1)] = C64::new(FRAC_1_SQRT_2, 0.0);
        c[(1, 0)] = C64::new(-FRAC_1_SQRT_2, 0.0);
        Self::new(c, 0.0)
    }

    pub fn size(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn coeffs(&self) -> &DMatrix<C64> {
        &self.coeffs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn norm_tol(&self) -> f64 {
        self.norm_tol
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn is_collapsed(&self) -> bool {
        self.collapse.is_some()
    }

    /// `<ψ, H ψ>` in the truncated basis.
    pub fn energy(&self) -> f64 {
        let n = self.size();
        let mut e = 0.0;
        for j in 0..n {
            for i in 0..n {
                e += self.coeffs[(i, j)].norm_sqr() * ((i + 1).pow(2) + (j + 1).pow(2)) as f64;
            }
        }
        e
    }

    /// Schrödinger-picture evolution to absolute time `t`.
    pub fn evolve(&self, t: f64) -> Self {
        self.evolve_by(t - self.t0)
    }

    /// Evolution by the interval `dt`. Entry `(m, n)` is multiplied by
    /// `exp(-i (m² + n²) dt)`.
    pub fn evolve_by(&self, dt: f64) -> Self {
        let n = self.size();
        let phases: Vec<C64> = (1..=n).map(|k| energy_phase(k * k, dt)).collect();
        let coeffs = DMatrix::from_fn(n, n, |i, j| self.coeffs[(i, j)] * phases[i] * phases[j]);
        Self {
            coeffs,
            t0: self.t0 + dt,
            norm_tol: self.norm_tol,
            collapse: self.collapse.clone(),
        }
    }

    /// Complex conjugate at the same reference time: the time-reversed state,
    /// whose velocity field is the negative of this one's.
    pub fn conjugated(&self) -> Self {
        Self {
            coeffs: self.coeffs.map(|c| c.conj()),
            t0: self.t0,
            norm_tol: self.norm_tol,
            collapse: None,
        }
    }

    /// Zero-pads or truncates the basis. Truncation fails if it would drop a
    /// nonzero coefficient.
    pub fn resized(&self, size: usize) -> Result<Self> {
        validate_size(size, 1)?;
        let n = self.size();
        if size < n {
            let dropped = (0..n).any(|i| {
                (0..n).any(|j| (i >= size || j >= size) && self.coeffs[(i, j)].norm() > 0.0)
            });
            if dropped {
                return Err(Error::config(format!(
                    "cannot truncate state to {size} modes without losing amplitude"
                )));
            }
        }
        let coeffs = DMatrix::from_fn(size, size, |i, j| {
            if i < n && j < n {
                self.coeffs[(i, j)]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let collapse = self.collapse.as_ref().and_then(|c| {
            (c.parent.nrows() <= size).then(|| {
                let mut c = c.clone();
                let pn = c.parent.nrows();
                c.parent = DMatrix::from_fn(size, size, |i, j| {
                    if i < pn && j < pn {
                        c.parent[(i, j)]
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                c
            })
        });
        Ok(Self {
            coeffs,
            t0: self.t0,
            norm_tol: self.norm_tol,
            collapse,
        })
    }

    /// ψ and ∇ψ at `(x1, x2)` at the reference time.
    pub fn evaluate(&self, x1: f64, x2: f64) -> Result<Amplitude> {
        check_domain(x1)?;
        check_domain(x2)?;
        let field = Field::new(self);
        Ok(field.amplitude(x1, x2, self.t0, &mut Scratch::default()))
    }

    pub fn density(&self, x1: f64, x2: f64) -> Result<f64> {
        Ok(self.evaluate(x1, x2)?.value.norm_sqr())
    }

    /// Projects onto the half `side` of coordinate `axis` and renormalizes.
    ///
    /// The returned probability is `<ψ, P ψ>`, which is exact in the
    /// truncated basis. The collapsed coefficients are `P ψ` restricted to
    /// the basis and normalized to unit Frobenius norm.
    pub fn project_half(&self, axis: Axis, side: Side) -> Result<(Self, f64)> {
        let n = self.size();
        let theta = OperatorMatrix1D::theta(n)?.entries;
        let proj = match side {
            Side::Plus => theta,
            Side::Minus => DMatrix::identity(n, n) - theta,
        };
        self.apply_projector(axis, side, proj)
    }

    fn apply_projector(&self, axis: Axis, side: Side, proj: DMatrix<f64>) -> Result<(Self, f64)> {
        let proj = proj.map(|v| C64::new(v, 0.0));
        let projected = match axis {
            Axis::One => &proj * &self.coeffs,
            Axis::Two => &self.coeffs * &proj,
        };
        let prob = self
            .coeffs
            .iter()
            .zip(projected.iter())
            .map(|(c, p)| (c.conj() * p).re)
            .sum::<f64>();
        if !(prob >= MIN_BRANCH_PROB) {
            return Err(Error::DegenerateCollapse { prob });
        }
        let norm = projected.norm();
        let coeffs = projected / C64::new(norm, 0.0);
        let collapsed = Self {
            coeffs,
            t0: self.t0,
            norm_tol: self.norm_tol,
            collapse: Some(Box::new(Collapse {
                parent: self.coeffs.clone(),
                t_collapse: self.t0,
                axis,
                side,
                prob,
            })),
        };
        Ok((collapsed, prob))
    }

    /// Partial trace over coordinate 1.
    ///
    /// The full matrix comes from the truncated coefficients. For a state
    /// collapsed on coordinate 1 the (φ1, φ2) block is computed from the
    /// parent state with `P² = P`, which removes the truncation error of
    /// the discontinuous collapsed expansion.
    pub fn reduced_density(&self) -> ReducedDensity {
        let c = &self.coeffs;
        let full = c.transpose() * c.map(|z| z.conj());
        let n = self.size();
        let mut exact = false;
        let block = match self.collapse.as_deref() {
            Some(col) if col.axis == Axis::One && n >= 2 => {
                exact = true;
                let p = col.parent.nrows();
                let theta = OperatorMatrix1D::theta(p)
                    .expect("parent size validated")
                    .entries;
                let proj: DMatrix<C64> = match col.side {
                    Side::Plus => theta,
                    Side::Minus => DMatrix::identity(p, p) - theta,
                }
                .map(|v| C64::new(v, 0.0));
                let rho = col.parent.transpose() * proj * col.parent.map(|z| z.conj())
                    / C64::new(col.prob, 0.0);
                let tau = self.t0 - col.t_collapse;
                let u = [energy_phase(1, tau), energy_phase(4, tau)];
                Matrix2::from_fn(|i, j| rho[(i, j)] * u[i] * u[j].conj())
            }
            _ => Matrix2::from_fn(|i, j| {
                if i < n && j < n {
                    full[(i, j)]
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        };
        ReducedDensity::from_parts(full, block, exact)
    }

    /// `∫ |ψ|² d(other coordinate)` at `x` on `axis`, by composite
    /// Gauss-Legendre quadrature with `grid_size` nodes.
    pub fn marginal_density(&self, axis: Axis, x: f64, grid_size: usize) -> Result<f64> {
        check_domain(x)?;
        let rule = PanelRule::new(-HALF_WIDTH, HALF_WIDTH, grid_size)?;
        let field = Field::new(self);
        let mut scratch = Scratch::default();
        Ok(rule.integrate(|y| match axis {
            Axis::One => field.density(x, y, self.t0, &mut scratch),
            Axis::Two => field.density(y, x, self.t0, &mut scratch),
        }))
    }

    /// Same marginal from mode orthonormality:
    /// `Σ_k |Σ_j C φ_j(x)|²` summed over the traced index.
    pub fn marginal_density_spectral(&self, axis: Axis, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(MarginalProfile::new(self, axis).density(x))
    }
}

/// Marginal density of one coordinate, evaluated through orthonormality of
/// the traced factor.
#[derive(Clone, Debug)]
pub struct MarginalProfile {
    /// rows indexed by the kept coordinate's mode, columns by the traced one
    coeffs: Vec<Vec<C64>>,
    len: usize,
}

impl MarginalProfile {
    pub fn new(state: &StateMatrix, axis: Axis) -> Self {
        let c = state.coeffs();
        let n = c.nrows();
        let kept = |i: usize, j: usize| match axis {
            Axis::One => c[(i, j)],
            Axis::Two => c[(j, i)],
        };
        let mut coeffs = Vec::new();
        let mut len = 0;
        for traced in 0..n {
            let col: Vec<C64> = (0..n).map(|k| kept(k, traced)).collect();
            if let Some(last) = col.iter().rposition(|z| z.norm() > 0.0) {
                len = len.max(last + 1);
                coeffs.push(col);
            }
        }
        for col in &mut coeffs {
            col.truncate(len);
        }
        Self { coeffs, len }
    }

    pub fn density(&self, x: f64) -> f64 {
        let mut v = vec![0.0; self.len];
        let mut d = vec![0.0; self.len];
        eval_modes(x, &mut v, &mut d);
        self.coeffs
            .iter()
            .map(|col| {
                col.iter()
                    .zip(&v)
                    .map(|(c, &phi)| c * phi)
                    .sum::<C64>()
                    .norm_sqr()
            })
            .sum()
    }
}

/// Reduced density matrix of coordinate 2.
#[derive(Clone, Debug)]
pub struct ReducedDensity {
    /// full truncated partial trace
    pub full: DMatrix<C64>,
    /// block on (φ1, φ2)
    pub block: Matrix2<C64>,
    /// descending
    pub eigenvalues: [f64; 2],
    pub eigenvectors: [Vector2<C64>; 2],
    /// whether the block came from the exact projector identity
    pub exact_block: bool,
}

impl ReducedDensity {
    fn from_parts(full: DMatrix<C64>, block: Matrix2<C64>, exact_block: bool) -> Self {
        let (eigenvalues, eigenvectors) = hermitian_eigen2(&block);
        Self {
            full,
            block,
            eigenvalues,
            eigenvectors,
            exact_block,
        }
    }

    pub fn trace(&self) -> f64 {
        self.full.trace().re
    }
}

/// Eigen-decomposition of a 2×2 Hermitian matrix, largest eigenvalue first.
fn hermitian_eigen2(m: &Matrix2<C64>) -> ([f64; 2], [Vector2<C64>; 2]) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = (half * half + b.norm_sqr()).sqrt();
    let (l0, l1) = (mean + r, mean - r);
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    if b.norm() <= 1e-300 {
        let (e0, e1) = (Vector2::new(one, zero), Vector2::new(zero, one));
        return if a >= d {
            ([a, d], [e0, e1])
        } else {
            ([d, a], [e1, e0])
        };
    }
    let vec_for = |l: f64| {
        // (A - l) v = 0 with first row: (a - l) v0 + b v1 = 0
        let v = if (a - l).abs() > (d - l).abs() {
            Vector2::new(-b / C64::new(a - l, 0.0), one)
        } else {
            Vector2::new(one, -b.conj() / C64::new(d - l, 0.0))
        };
        let nrm = v.norm();
        v / C64::new(nrm, 0.0)
    };
    ([l0, l1], [vec_for(l0), vec_for(l1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2, TAU};

    #[test]
    fn singlet_layout() {
        let s = StateMatrix::singlet(2).unwrap();
        assert!((s.coeffs()[(0, 1)].re - FRAC_1_SQRT_2).abs() < 1e-16);
        assert!((s.coeffs()[(1, 0)].re + FRAC_1_SQRT_2).abs() < 1e-16);
        assert!((s.norm() - 1.0).abs() < 1e-15);
        assert!((s.energy() - 5.0).abs() < 1e-14);
        assert!(StateMatrix::singlet(1).is_err());
    }

    #[test]
    fn singlet_values() {
        let s = StateMatrix::singlet(8).unwrap();
        assert_eq!(s.evaluate(0.0, 0.0).unwrap().value.norm(), 0.0);
        for x in [-1.2, -0.4, 0.3, 1.5] {
            assert!(s.evaluate(x, x).unwrap().value.norm() < 1e-15);
        }
        let v = s.evaluate(0.0, FRAC_PI_4).unwrap().value;
        assert!((v.re - SQRT_2 / PI).abs() < 1e-15);
        assert_eq!(v.im, 0.0);
        assert!(s.evaluate(2.0, 0.0).is_err());
    }

    #[test]
    fn singlet_evolution_is_global_phase() {
        let s = StateMatrix::singlet(4).unwrap();
        let e = s.evolve(0.83);
        let phase = C64::from_polar(1.0, -5.0 * 0.83);
        assert!((e.coeffs() - s.coeffs() * phase).norm() < 1e-14);
        assert_eq!(e.t0(), 0.83);
        assert!((s.evolve(0.0).coeffs() - s.coeffs()).norm() == 0.0);
    }

    #[test]
    fn revival_after_two_pi() {
        let s = StateMatrix::singlet(16).unwrap();
        let (c, _) = s.project_half(Axis::One, Side::Plus).unwrap();
        let later = c.evolve(TAU);
        assert!((later.coeffs() - c.coeffs()).norm() < 1e-12);
    }

    #[test]
    fn collapse_probabilities() {
        let s = StateMatrix::singlet(32).unwrap();
        let (cp, pp) = s.project_half(Axis::One, Side::Plus).unwrap();
        let (_, pm) = s.project_half(Axis::One, Side::Minus).unwrap();
        assert!((pp - 0.5).abs() < 1e-14);
        assert!((pp + pm - 1.0).abs() < 1e-12);
        assert!((cp.norm() - 1.0).abs() < 1e-12);
        assert!(cp.is_collapsed());
    }

    #[test]
    fn degenerate_collapse() {
        let s = StateMatrix::singlet(4).unwrap();
        let err = s.apply_projector(Axis::One, Side::Plus, DMatrix::zeros(4, 4));
        assert!(matches!(err, Err(Error::DegenerateCollapse { .. })));
    }

    #[test]
    fn reduced_density_singlet() {
        let rd = StateMatrix::singlet(8).unwrap().reduced_density();
        assert!((rd.block[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((rd.block[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!(rd.block[(0, 1)].norm() < 1e-15);
        assert!((rd.trace() - 1.0).abs() < 1e-12);
        assert!(!rd.exact_block);
    }

    #[test]
    fn hermitian_eigen_basic() {
        let m = Matrix2::new(
            C64::new(0.5, 0.0),
            C64::new(0.3, 0.1),
            C64::new(0.3, -0.1),
            C64::new(0.5, 0.0),
        );
        let (vals, vecs) = hermitian_eigen2(&m);
        for k in 0..2 {
            let r = m * vecs[k] - vecs[k] * C64::new(vals[k], 0.0);
            assert!(r.norm() < 1e-14);
        }
        assert!(vals[0] >= vals[1]);
        assert!(vecs[0].dotc(&vecs[1]).norm() < 1e-14);
    }

    #[test]
    fn marginal_routes_agree() {
        let s = StateMatrix::singlet(12).unwrap();
        let (c, _) = s.project_half(Axis::One, Side::Minus).unwrap();
        let c = c.evolve(0.4);
        for axis in [Axis::One, Axis::Two] {
            for x in [-1.3, -0.2, 0.0, 0.9] {
                let q = c.marginal_density(axis, x, DEFAULT_GRID).unwrap();
                let e = c.marginal_density_spectral(axis, x).unwrap();
                assert!((q - e).abs() < 1e-12, "{axis:?} {x}: {q} vs {e}");
            }
        }
    }

    #[test]
    fn resize_rules() {
        let s = StateMatrix::singlet(4).unwrap();
        assert_eq!(s.resized(10).unwrap().size(), 10);
        assert_eq!(s.resized(2).unwrap().size(), 2);
        let (c, _) = s.project_half(Axis::One, Side::Plus).unwrap();
        assert!(c.resized(2).is_err());
    }

    #[test]
    fn construction_checks() {
        assert!(StateMatrix::new(DMatrix::zeros(2, 3), 0.0).is_err());
        assert!(StateMatrix::new(DMatrix::zeros(2, 2), 0.0).is_err());
        let mut c = DMatrix::zeros(2, 2);
        c[(1, 1)] = C64::new(3.0, 4.0);
        let s = StateMatrix::normalized(c, 1.0).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
    }
}
