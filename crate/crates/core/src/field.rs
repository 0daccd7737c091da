//! Pointwise evaluation of a two-coordinate mode expansion and its gradient
//! at an arbitrary time.
//!
//! Only rows and columns of the coefficient matrix that hold nonzero
//! entries are visited, which makes post-collapse states (full in one
//! factor, two modes in the other) cost O(N) per point.

use num_complex::Complex64 as C64;

use crate::basis::{energy_phases, eval_modes};
use crate::state::{Amplitude, StateMatrix};

#[derive(Clone, Debug)]
pub struct Field {
    /// coefficients at `t0`, column-major, restricted to the support
    coeffs: Vec<C64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    row_len: usize,
    col_len: usize,
    t0: f64,
}

/// Per-caller buffers reused across evaluations.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    v1: Vec<f64>,
    d1: Vec<f64>,
    v2: Vec<f64>,
    d2: Vec<f64>,
    p1: Vec<C64>,
    p2: Vec<C64>,
}

impl Field {
    pub fn new(state: &StateMatrix) -> Self {
        let c = state.coeffs();
        let n = c.nrows();
        let rows: Vec<usize> = (0..n)
            .filter(|&i| (0..n).any(|j| c[(i, j)] != C64::new(0.0, 0.0)))
            .collect();
        let cols: Vec<usize> = (0..n)
            .filter(|&j| (0..n).any(|i| c[(i, j)] != C64::new(0.0, 0.0)))
            .collect();
        let mut coeffs = Vec::with_capacity(rows.len() * cols.len());
        for &j in &cols {
            for &i in &rows {
                coeffs.push(c[(i, j)]);
            }
        }
        let row_len = rows.last().map_or(0, |&r| r + 1);
        let col_len = cols.last().map_or(0, |&r| r + 1);
        Self {
            coeffs,
            rows,
            cols,
            row_len,
            col_len,
            t0: state.t0(),
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// True when the velocity field vanishes identically: all populated
    /// mode pairs share one energy and the coefficients are real up to a
    /// common phase.
    pub fn is_static(&self) -> bool {
        self.single_energy() && self.real_up_to_global_phase()
    }

    fn single_energy(&self) -> bool {
        let mut energy = None;
        let mut k = 0;
        for &j in &self.cols {
            for &i in &self.rows {
                let populated = self.coeffs[k] != C64::new(0.0, 0.0);
                k += 1;
                if !populated {
                    continue;
                }
                let e = (i + 1) * (i + 1) + (j + 1) * (j + 1);
                match energy {
                    None => energy = Some(e),
                    Some(e0) if e0 != e => return false,
                    _ => {}
                }
            }
        }
        true
    }

    fn real_up_to_global_phase(&self) -> bool {
        let Some(first) = self.coeffs.iter().find(|c| c.norm() > 0.0) else {
            return true;
        };
        let rot = first.conj() / first.norm();
        self.coeffs
            .iter()
            .all(|c| (c * rot).im.abs() <= 1e-14 * c.norm())
    }

    /// ψ and ∇ψ at `(x1, x2)` and absolute time `t`. No domain check.
    pub fn amplitude(&self, x1: f64, x2: f64, t: f64, s: &mut Scratch) -> Amplitude {
        let tau = t - self.t0;
        s.v1.resize(self.row_len, 0.0);
        s.d1.resize(self.row_len, 0.0);
        s.v2.resize(self.col_len, 0.0);
        s.d2.resize(self.col_len, 0.0);
        s.p1.resize(self.row_len, C64::new(0.0, 0.0));
        s.p2.resize(self.col_len, C64::new(0.0, 0.0));
        eval_modes(x1, &mut s.v1, &mut s.d1);
        eval_modes(x2, &mut s.v2, &mut s.d2);
        energy_phases(tau, &mut s.p1);
        energy_phases(tau, &mut s.p2);

        let mut psi = C64::new(0.0, 0.0);
        let mut g1 = C64::new(0.0, 0.0);
        let mut g2 = C64::new(0.0, 0.0);
        let nr = self.rows.len();
        for (k, &j) in self.cols.iter().enumerate() {
            let col = &self.coeffs[k * nr..(k + 1) * nr];
            let mut w = C64::new(0.0, 0.0);
            let mut wd = C64::new(0.0, 0.0);
            for (c, &i) in col.iter().zip(&self.rows) {
                let cp = c * s.p1[i];
                w += cp * s.v1[i];
                wd += cp * s.d1[i];
            }
            let pj = s.p2[j];
            psi += w * (pj * s.v2[j]);
            g1 += wd * (pj * s.v2[j]);
            g2 += w * (pj * s.d2[j]);
        }
        Amplitude {
            value: psi,
            grad: [g1, g2],
        }
    }

    pub fn density(&self, x1: f64, x2: f64, t: f64, s: &mut Scratch) -> f64 {
        self.amplitude(x1, x2, t, s).value.norm_sqr()
    }
}
