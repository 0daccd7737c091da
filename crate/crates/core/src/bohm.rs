//! Pilot-wave velocity field and trajectory integration.
//!
//! Particles follow `dq/dt = 2 Im(∇ψ/ψ)` with ψ evolving freely in the box.
//! Trajectories are integrated with the Dormand-Prince 5(4) pair.

use serde::Serialize;

use crate::basis::{check_domain, HALF_WIDTH};
use crate::error::{Error, Result};
use crate::field::{Field, Scratch};
use crate::state::{Amplitude, StateMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Position2D {
    pub x1: f64,
    pub x2: f64,
}

impl Position2D {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        check_domain(x1)?;
        check_domain(x2)?;
        Ok(Self { x1, x2 })
    }

    pub fn in_box(&self) -> bool {
        self.x1.abs() <= HALF_WIDTH && self.x2.abs() <= HALF_WIDTH
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// `|ψ|²` below which a stage counts as a node encounter
    pub node_floor: f64,
    /// distance kept from the walls when a step overshoots through roundoff
    pub boundary_margin: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-9,
            max_step: 0.05,
            node_floor: 1e-10,
            boundary_margin: 1e-12,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("node_floor", self.node_floor),
            ("boundary_margin", self.boundary_margin),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Diagnostics for one accepted step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StepFlags {
    pub near_node: bool,
    pub rejections: u32,
    pub wall_clamped: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Position2D>,
    /// `flags[k]` describes the step ending at `times[k]`; `flags[0]` is empty
    pub flags: Vec<StepFlags>,
}

impl Trajectory {
    fn start(t: f64, q: Position2D) -> Self {
        Self {
            times: vec![t],
            points: vec![q],
            flags: vec![StepFlags::default()],
        }
    }

    fn push(&mut self, t: f64, q: Position2D, flags: StepFlags) {
        self.times.push(t);
        self.points.push(q);
        self.flags.push(flags);
    }

    pub fn last(&self) -> Position2D {
        *self.points.last().expect("trajectory is never empty")
    }

    pub fn node_events(&self) -> usize {
        self.flags.iter().filter(|f| f.near_node).count()
    }
}

/// `2 Im(∇ψ / ψ)` from an amplitude, or `None` when `|ψ|² <= node_floor`.
pub fn velocity_from(amp: &Amplitude, node_floor: f64) -> Option<[f64; 2]> {
    let rho = amp.value.norm_sqr();
    if !(rho > node_floor) {
        return None;
    }
    let c = amp.value.conj();
    Some([
        2.0 * (c * amp.grad[0]).im / rho,
        2.0 * (c * amp.grad[1]).im / rho,
    ])
}

/// Velocity at `p` at the state's reference time.
pub fn velocity(state: &StateMatrix, p: Position2D, node_floor: f64) -> Result<(f64, f64)> {
    let amp = state.evaluate(p.x1, p.x2)?;
    velocity_from(&amp, node_floor)
        .map(|v| (v[0], v[1]))
        .ok_or(Error::NodeProximity {
            density: amp.value.norm_sqr(),
            x1: p.x1,
            x2: p.x2,
        })
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

/// Smallest step before integration is declared failed.
const MIN_STEP: f64 = 1e-13;
/// Step floor applied while a stage sits near a node.
const NODE_STEP: f64 = 1e-6;
/// Consecutive node-clamped steps tolerated before giving up.
const MAX_NODE_STEPS: usize = 100_000;
const MAX_STEPS: usize = 10_000_000;

/// Adaptive integrator bound to one field. Owns its scratch buffers, so
/// one instance per worker.
pub struct Integrator<'a> {
    field: &'a Field,
    cfg: IntegratorConfig,
    scratch: Scratch,
    h: f64,
    evaluations: u64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AdvanceStats {
    pub steps: usize,
    pub rejections: usize,
    pub node_steps: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(field: &'a Field, cfg: IntegratorConfig) -> Self {
        let h = cfg.max_step.min(1e-3);
        Self {
            field,
            cfg,
            scratch: Scratch::default(),
            h,
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn rhs(&mut self, y: [f64; 2], t: f64) -> ([f64; 2], bool) {
        self.evaluations += 1;
        let lim = HALF_WIDTH;
        let x1 = y[0].clamp(-lim, lim);
        let x2 = y[1].clamp(-lim, lim);
        let amp = self.field.amplitude(x1, x2, t, &mut self.scratch);
        match velocity_from(&amp, self.cfg.node_floor) {
            Some(v) => (v, false),
            None => {
                // regularized so the clamped step can proceed through the node
                let c = amp.value.conj();
                let d = self.cfg.node_floor;
                (
                    [
                        2.0 * (c * amp.grad[0]).im / d,
                        2.0 * (c * amp.grad[1]).im / d,
                    ],
                    true,
                )
            }
        }
    }

    /// Integrates from `(t0, q0)` to `t1 >= t0`, landing exactly on `t1`.
    /// Every accepted step is appended to `record` when one is given.
    pub fn advance(
        &mut self,
        q0: Position2D,
        t0: f64,
        t1: f64,
        mut record: Option<&mut Trajectory>,
    ) -> std::result::Result<(Position2D, AdvanceStats), (f64, Position2D, String)> {
        let mut stats = AdvanceStats::default();
        if t1 <= t0 || self.field.is_static() {
            if t1 > t0 {
                if let Some(r) = record.as_deref_mut() {
                    r.push(t1, q0, StepFlags::default());
                }
            }
            return Ok((q0, stats));
        }
        let tol_wall = HALF_WIDTH - self.cfg.boundary_margin;
        let mut t = t0;
        let mut y = [q0.x1, q0.x2];
        let (mut k1, mut node) = self.rhs(y, t);
        let mut h = self.h.min(self.cfg.max_step);
        let mut node_run = 0usize;
        let mut err_prev = 1e-4f64;
        let mut flags = StepFlags::default();

        while t < t1 {
            if stats.steps + stats.rejections > MAX_STEPS {
                return Err((t, pos(y), "step budget exhausted".into()));
            }
            let remaining = t1 - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };

            let mut any_node = node;
            let mut stage = |this: &mut Self, coef: &[(f64, &[f64; 2])], c: f64| {
                let mut z = y;
                for (a, k) in coef {
                    z[0] += step * a * k[0];
                    z[1] += step * a * k[1];
                }
                let (k, n) = this.rhs(z, t + c * step);
                any_node |= n;
                k
            };
            let k2 = stage(self, &[(A21, &k1)], C2);
            let k3 = stage(self, &[(A31, &k1), (A32, &k2)], C3);
            let k4 = stage(self, &[(A41, &k1), (A42, &k2), (A43, &k3)], C4);
            let k5 = stage(self, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], C5);
            let k6 = stage(
                self,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                1.0,
            );
            let mut y_new = y;
            for i in 0..2 {
                y_new[i] += step * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            let t_new = if last { t1 } else { t + step };
            let (k7, node7) = self.rhs(y_new, t_new);
            any_node |= node7;

            let mut err = 0.0f64;
            for i in 0..2 {
                let e = step
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                err = f64::INFINITY;
            }

            if any_node {
                // Accept at a reduced step: the field is only singular on a
                // measure-zero set and the regularized velocity is bounded.
                let clamp = NODE_STEP.max(step / 10.0);
                if step > clamp && err > 1.0 {
                    h = clamp;
                    stats.rejections += 1;
                    flags.rejections += 1;
                    continue;
                }
                node_run += 1;
                stats.node_steps += 1;
                flags.near_node = true;
                if node_run > MAX_NODE_STEPS {
                    return Err((t, pos(y), "persistent node proximity".into()));
                }
            } else if err > 1.0 {
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h = step * fac;
                stats.rejections += 1;
                flags.rejections += 1;
                if h < MIN_STEP {
                    return Err((t, pos(y), format!("step size underflow (h = {h:.3e})")));
                }
                continue;
            } else {
                node_run = 0;
            }

            // accepted
            for v in &mut y_new {
                if v.abs() > tol_wall {
                    *v = v.signum() * tol_wall;
                    flags.wall_clamped = true;
                }
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            node = node7;
            stats.steps += 1;
            if let Some(r) = record.as_deref_mut() {
                r.push(t, pos(y), flags);
            }
            flags = StepFlags::default();

            // PI control on the error history
            let err_c = err.max(1e-10);
            let fac = (0.9 * err_c.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)).clamp(0.2, 5.0);
            err_prev = err_c;
            // a truncated final step says little about the next interval
            if !last {
                h = (step * fac).min(self.cfg.max_step);
            }
        }
        self.h = h;
        Ok((pos(y), stats))
    }
}

fn pos(y: [f64; 2]) -> Position2D {
    Position2D { x1: y[0], x2: y[1] }
}

/// Solves `dq/dt = v(q, t)` from `(t0, q0)` to `t1`, with the state's phases
/// advancing continuously in time.
pub fn integrate_trajectory(
    state: &StateMatrix,
    q0: Position2D,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let q0 = Position2D::new(q0.x1, q0.x2)?;
    if !(t1 > t0) {
        return Err(Error::config(format!("t1 = {t1} must exceed t0 = {t0}")));
    }
    let field = Field::new(state);
    let mut integ = Integrator::new(&field, *cfg);
    let mut traj = Trajectory::start(t0, q0);
    match integ.advance(q0, t0, t1, Some(&mut traj)) {
        Ok(_) => Ok(traj),
        Err((t, _, reason)) => Err(Error::Integration {
            t,
            reason,
            partial: Box::new(traj),
        }),
    }
}

/// Positions at each of the increasing `times` (the first is the start).
pub fn sample_path(
    state: &StateMatrix,
    q0: Position2D,
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<Position2D>> {
    cfg.validate()?;
    let q0 = Position2D::new(q0.x1, q0.x2)?;
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("sample times must be strictly increasing"));
    }
    let field = Field::new(state);
    let mut integ = Integrator::new(&field, *cfg);
    let mut out = Vec::with_capacity(times.len());
    let mut q = q0;
    out.push(q);
    for w in times.windows(2) {
        match integ.advance(q, w[0], w[1], None) {
            Ok((next, _)) => q = next,
            Err((t, last, reason)) => {
                let mut partial = Trajectory::start(times[0], q0);
                for (k, p) in out.iter().enumerate().skip(1) {
                    partial.push(times[k], *p, StepFlags::default());
                }
                partial.push(t, last, StepFlags::default());
                return Err(Error::Integration {
                    t,
                    reason,
                    partial: Box::new(partial),
                });
            }
        }
        out.push(q);
    }
    Ok(out)
}
