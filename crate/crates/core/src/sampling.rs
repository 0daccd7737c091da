//! Walker ensembles: rejection sampling from `λ|ψ|²`, propagation along
//! pilot-wave trajectories, and the equivariance check.
//!
//! Every walker draws from its own ChaCha stream selected by its index, so
//! results do not depend on how the work is split across threads.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::HALF_WIDTH;
use crate::bohm::{Integrator, IntegratorConfig, Position2D};
use crate::error::{Error, Result};
use crate::field::{Field, Scratch};
use crate::operators::Axis;
use crate::quadrature::{gauss_legendre, PANEL_ORDER};
use crate::state::{MarginalProfile, StateMatrix};
use crate::stats::ks_one_sample;

/// Grid points per axis used to estimate the envelope.
pub const ENVELOPE_GRID: usize = 128;
pub const ENVELOPE_SAFETY: f64 = 1.1;
pub const ENVELOPE_INFLATION: f64 = 1.5;
/// Fraction of walkers allowed to fail before propagation is an error.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

/// Density multiplier `λ(x)` describing knowledge beyond `|ψ|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Lambda {
    /// λ ≡ 1
    Constant,
    /// λ = 1 + ½ sin(x2)
    SinX2,
    /// λ = 2 on x2 > 0, else 0
    UpperHalf,
}

impl Lambda {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "const" => Ok(Lambda::Constant),
            "sin" => Ok(Lambda::SinX2),
            "upper" => Ok(Lambda::UpperHalf),
            other => Err(Error::config(format!(
                "unknown lambda '{other}' (expected const, sin or upper)"
            ))),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Lambda::Constant => "const",
            Lambda::SinX2 => "sin",
            Lambda::UpperHalf => "upper",
        }
    }

    pub fn eval(&self, _x1: f64, x2: f64) -> f64 {
        match self {
            Lambda::Constant => 1.0,
            Lambda::SinX2 => 1.0 + 0.5 * x2.sin(),
            Lambda::UpperHalf => {
                if x2 > 0.0 {
                    2.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Lambda::Constant => 1.0,
            Lambda::SinX2 => 1.5,
            Lambda::UpperHalf => 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum WeightDesc {
    Equilibrium,
    Lambda(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct Ensemble {
    pub walkers: Vec<Position2D>,
    pub seed: u64,
    pub weight: WeightDesc,
    /// times the envelope had to be inflated during sampling
    pub envelope_inflations: u32,
}

impl Ensemble {
    pub fn new(walkers: Vec<Position2D>, seed: u64, weight: WeightDesc) -> Result<Self> {
        if walkers.is_empty() {
            return Err(Error::config("an ensemble needs at least one walker"));
        }
        if let Some(p) = walkers.iter().find(|p| !p.in_box()) {
            return Err(Error::Domain {
                value: if p.x1.abs() > HALF_WIDTH { p.x1 } else { p.x2 },
            });
        }
        Ok(Self {
            walkers,
            seed,
            weight,
            envelope_inflations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }

    pub fn coordinates(&self, axis: Axis) -> Vec<f64> {
        self.walkers
            .iter()
            .map(|p| match axis {
                Axis::One => p.x1,
                Axis::Two => p.x2,
            })
            .collect()
    }
}

/// Random stream for walker `index` under `seed`.
pub fn walker_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Maximum of `|ψ|²` over the cell-centred `ENVELOPE_GRID²` grid.
fn grid_max_density(field: &Field, t: f64) -> f64 {
    let mut scratch = Scratch::default();
    let h = 2.0 * HALF_WIDTH / ENVELOPE_GRID as f64;
    let mut max = 0.0f64;
    for i in 0..ENVELOPE_GRID {
        let x1 = -HALF_WIDTH + h * (i as f64 + 0.5);
        for j in 0..ENVELOPE_GRID {
            let x2 = -HALF_WIDTH + h * (j as f64 + 0.5);
            max = max.max(field.density(x1, x2, t, &mut scratch));
        }
    }
    max
}

/// I.i.d. samples from `|ψ|²` at the state's reference time.
pub fn sample_equilibrium(state: &StateMatrix, count: usize, seed: u64) -> Result<Ensemble> {
    let mut ens = sample_density(state, &|_, _| 1.0, 1.0, count, seed)?;
    ens.weight = WeightDesc::Equilibrium;
    Ok(ens)
}

/// I.i.d. samples from `λ|ψ|²` (normalized implicitly by rejection).
pub fn sample_weighted(
    state: &StateMatrix,
    lambda: &(dyn Fn(f64, f64) -> f64 + Sync),
    lambda_bound: f64,
    lambda_id: &str,
    count: usize,
    seed: u64,
) -> Result<Ensemble> {
    if !(lambda_bound > 0.0 && lambda_bound.is_finite()) {
        return Err(Error::config("lambda bound must be positive and finite"));
    }
    let mut ens = sample_density(state, lambda, lambda_bound, count, seed)?;
    ens.weight = WeightDesc::Lambda(lambda_id.to_string());
    Ok(ens)
}

pub fn sample_lambda(
    state: &StateMatrix,
    lambda: Lambda,
    count: usize,
    seed: u64,
) -> Result<Ensemble> {
    if lambda == Lambda::Constant {
        return sample_equilibrium(state, count, seed);
    }
    sample_weighted(
        state,
        &|x1, x2| lambda.eval(x1, x2),
        lambda.bound(),
        lambda.id(),
        count,
        seed,
    )
}

fn sample_density(
    state: &StateMatrix,
    lambda: &(dyn Fn(f64, f64) -> f64 + Sync),
    lambda_bound: f64,
    count: usize,
    seed: u64,
) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::config("walker count must be at least 1"));
    }
    let field = Field::new(state);
    let t = state.t0();
    let mut envelope = ENVELOPE_SAFETY * lambda_bound * grid_max_density(&field, t);
    if !(envelope > 0.0) {
        return Err(Error::config("density vanishes on the envelope grid"));
    }
    let mut inflations = 0;
    loop {
        let violated = AtomicBool::new(false);
        let walkers: Vec<Position2D> = (0..count)
            .into_par_iter()
            .map_init(Scratch::default, |scratch, i| {
                let mut rng = walker_rng(seed, i as u64);
                loop {
                    let x1 = rng.gen_range(-HALF_WIDTH..HALF_WIDTH);
                    let x2 = rng.gen_range(-HALF_WIDTH..HALF_WIDTH);
                    let u = rng.gen::<f64>() * envelope;
                    let target = lambda(x1, x2) * field.density(x1, x2, t, scratch);
                    if target > envelope {
                        violated.store(true, Ordering::Relaxed);
                    }
                    if u < target {
                        return Position2D { x1, x2 };
                    }
                }
            })
            .collect();
        if !violated.load(Ordering::Relaxed) {
            return Ok(Ensemble {
                walkers,
                seed,
                weight: WeightDesc::Equilibrium,
                envelope_inflations: inflations,
            });
        }
        inflations += 1;
        envelope *= ENVELOPE_INFLATION;
        log::warn!("rejection envelope exceeded; resampling with envelope {envelope:.4e}");
        if inflations > 20 {
            return Err(Error::config("rejection envelope could not be bounded"));
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WalkerFailure {
    pub index: usize,
    pub time: f64,
    pub reason: String,
}

/// Propagated ensemble with any per-walker failures. Failed walkers keep the
/// last position their integration reached.
#[derive(Clone, Debug, Serialize)]
pub struct Propagation {
    pub ensemble: Ensemble,
    pub failures: Vec<WalkerFailure>,
}

/// Advances every walker from the state's reference time to `t1`.
pub fn propagate_ensemble(
    state: &StateMatrix,
    ens: &Ensemble,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Propagation> {
    cfg.validate()?;
    let t0 = state.t0();
    if t1 < t0 {
        return Err(Error::config(format!(
            "target time {t1} precedes the state's reference time {t0}"
        )));
    }
    let field = Field::new(state);
    let results: Vec<(Position2D, Option<WalkerFailure>)> = ens
        .walkers
        .par_iter()
        .enumerate()
        .map(|(i, &q)| {
            let mut integ = Integrator::new(&field, *cfg);
            match integ.advance(q, t0, t1, None) {
                Ok((p, _)) => (p, None),
                Err((t, p, reason)) => (
                    p,
                    Some(WalkerFailure {
                        index: i,
                        time: t,
                        reason,
                    }),
                ),
            }
        })
        .collect();
    let mut walkers = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (p, f) in results {
        walkers.push(p);
        failures.extend(f);
    }
    check_failures(&failures, walkers.len())?;
    Ok(Propagation {
        ensemble: Ensemble {
            walkers,
            seed: ens.seed,
            weight: ens.weight.clone(),
            envelope_inflations: ens.envelope_inflations,
        },
        failures,
    })
}

pub(crate) fn check_failures(failures: &[WalkerFailure], total: usize) -> Result<()> {
    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let first = &failures[0];
        return Err(Error::Propagation {
            failed: failures.len(),
            total,
            first_index: first.index,
            first_reason: first.reason.clone(),
        });
    }
    Ok(())
}

/// CDF of one marginal of a state, tabulated on `cells` equal cells with a
/// Gauss-Legendre panel per cell and integrated exactly to the query point
/// with the same rule.
#[derive(Clone, Debug)]
pub struct MarginalCdf {
    profile: MarginalProfile,
    cum: Vec<f64>,
    width: f64,
    gx: Vec<f64>,
    gw: Vec<f64>,
}

impl MarginalCdf {
    pub fn new(state: &StateMatrix, axis: Axis, cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::config("CDF grid needs at least one cell"));
        }
        let profile = MarginalProfile::new(state, axis);
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let width = 2.0 * HALF_WIDTH / cells as f64;
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..cells {
            let lo = -HALF_WIDTH + width * k as f64;
            acc += crate::quadrature::integrate_panel(lo, lo + width, &gx, &gw, |x| {
                profile.density(x)
            });
            cum.push(acc);
        }
        Ok(Self {
            profile,
            cum,
            width,
            gx,
            gw,
        })
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -HALF_WIDTH {
            return 0.0;
        }
        if x >= HALF_WIDTH {
            return self.total();
        }
        let cells = self.cum.len() - 1;
        let k = (((x + HALF_WIDTH) / self.width) as usize).min(cells - 1);
        let lo = -HALF_WIDTH + self.width * k as f64;
        self.cum[k]
            + crate::quadrature::integrate_panel(lo, x, &self.gx, &self.gw, |y| {
                self.profile.density(y)
            })
    }
}

/// One-sample KS statistics of the walker marginals against the state's
/// marginals at its reference time. `grid_size` is the number of CDF cells.
pub fn equivariance_check(
    state: &StateMatrix,
    ens: &Ensemble,
    grid_size: usize,
) -> Result<(f64, f64)> {
    if ens.is_empty() {
        return Err(Error::config(
            "equivariance check needs a nonempty ensemble",
        ));
    }
    let mut out = [0.0; 2];
    for (slot, axis) in out.iter_mut().zip([Axis::One, Axis::Two]) {
        let cdf = MarginalCdf::new(state, axis, grid_size)?;
        *slot = ks_one_sample(&ens.coordinates(axis), |x| cdf.cdf(x));
    }
    Ok((out[0], out[1]))
}
