//! End-to-end measurement experiments on the antisymmetric box state.
//!
//! - two-time sign correlations with per-walker collapse
//! - conditional densities of coordinate 2 after a half-box measurement
//! - the one-bit transmission protocol and its KS detector
//! - the oscillating point-charge time series of a single trajectory

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::basis::HALF_WIDTH;
use crate::bohm::{sample_path, velocity_from, Integrator, IntegratorConfig, Position2D};
use crate::error::{Error, Result};
use crate::field::{Field, Scratch};
use crate::operators::Axis;
use crate::sampling::{
    check_failures, sample_equilibrium, sample_lambda, Lambda, MarginalCdf, WalkerFailure,
};
use crate::state::{Side, StateMatrix, DEFAULT_GRID};
use crate::stats::{ks_two_sample, mean_stderr};

/// Defaults shared by the experiments and the command line.
pub mod defaults {
    use std::f64::consts::FRAC_PI_3;

    /// Basis size for collapsed-state evolution.
    pub const BASIS_SIZE: usize = 16;
    pub const COARSE_BASIS_SIZE: usize = 8;
    /// Integrator tolerances for walker ensembles.
    pub const ENSEMBLE_REL_TOL: f64 = 1e-5;
    pub const ENSEMBLE_ABS_TOL: f64 = 1e-7;
    pub const WALKERS: usize = 10_000;
    pub const SEED: u64 = 42;
    pub const ALPHA: f64 = 0.05;
    pub const READ_TIME: f64 = FRAC_PI_3;
    pub const TRIALS: usize = 200;
    /// Cells of the tabulated marginal CDFs.
    pub const CDF_CELLS: usize = 512;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub basis_size: usize,
    /// Second, smaller basis for correlation estimates. When set, each
    /// walker is propagated under both truncations and the two sign
    /// readings are combined to cancel the leading `1/N` truncation error.
    pub coarse_basis_size: Option<usize>,
    pub integrator: IntegratorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            basis_size: defaults::BASIS_SIZE,
            coarse_basis_size: Some(defaults::COARSE_BASIS_SIZE),
            integrator: IntegratorConfig {
                rel_tol: defaults::ENSEMBLE_REL_TOL,
                abs_tol: defaults::ENSEMBLE_ABS_TOL,
                ..IntegratorConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        crate::basis::validate_size(self.basis_size, 2)?;
        if let Some(c) = self.coarse_basis_size {
            crate::basis::validate_size(c, 2)?;
            if c >= self.basis_size {
                return Err(Error::config(format!(
                    "coarse basis size {c} must be below the basis size {}",
                    self.basis_size
                )));
            }
        }
        self.integrator.validate()
    }
}

/// Seed of sub-run `tag` derived from a master seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn coord(p: &Position2D, axis: Axis) -> f64 {
    match axis {
        Axis::One => p.x1,
        Axis::Two => p.x2,
    }
}

/// The singlet collapsed on `axis` at time `at`, for both outcomes.
/// Also returns the outcome probabilities.
pub fn collapsed_pair(size: usize, axis: Axis, at: f64) -> Result<([StateMatrix; 2], [f64; 2])> {
    let psi = StateMatrix::singlet(size)?.evolve(at);
    let (plus, pp) = psi.project_half(axis, Side::Plus)?;
    let (minus, pm) = psi.project_half(axis, Side::Minus)?;
    Ok(([plus, minus], [pp, pm]))
}

fn branch_index(side: Side) -> usize {
    match side {
        Side::Plus => 0,
        Side::Minus => 1,
    }
}

/// Each walker measures the sign of its own `axis` coordinate at `t0`, then
/// moves under the matching collapsed state until `t1`.
fn propagate_branches(
    walkers: &[Position2D],
    axis: Axis,
    branches: &[StateMatrix; 2],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<Position2D>, Vec<WalkerFailure>)> {
    cfg.validate()?;
    let fields = [Field::new(&branches[0]), Field::new(&branches[1])];
    let results: Vec<(Position2D, Option<WalkerFailure>)> = walkers
        .par_iter()
        .enumerate()
        .map(|(i, &q)| {
            let field = &fields[branch_index(Side::of(coord(&q, axis)))];
            let mut integ = Integrator::new(field, *cfg);
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
    let mut out = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (p, f) in results {
        out.push(p);
        failures.extend(f);
    }
    check_failures(&failures, walkers.len())?;
    Ok((out, failures))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoTimeProtocol {
    /// time of the first measurement
    pub s: f64,
    /// time of the second measurement
    pub t: f64,
    pub first_axis: Axis,
    pub walkers: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub stderr: f64,
    /// walkers contributing to the estimate
    pub walkers: usize,
    /// walkers excluded because their integration failed
    pub failed: usize,
}

fn check_times(s: f64, times: &[f64], walkers: usize) -> Result<()> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::config(format!(
            "first measurement time {s} must be finite and nonnegative"
        )));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= s && t.is_finite())) {
        return Err(Error::config(format!(
            "second measurement time {t} must be finite and not precede s = {s}"
        )));
    }
    if walkers == 0 {
        return Err(Error::config("walker count must be at least 1"));
    }
    Ok(())
}

/// Monte-Carlo estimate of `<A_s B_t>` with per-walker collapse at `s`.
pub fn run_two_time_measurement(
    proto: &TwoTimeProtocol,
    cfg: &ExperimentConfig,
) -> Result<CorrelationEstimate> {
    let mut out = run_two_time_series(
        proto.s,
        &[proto.t],
        proto.first_axis,
        proto.walkers,
        proto.seed,
        cfg,
    )?;
    Ok(out.remove(0))
}

/// Second-measurement signs of one walker at the sorted `times`, or `None`
/// if its integration failed.
fn sign_history(
    field: &Field,
    q: Position2D,
    s: f64,
    times: &[f64],
    axis: Axis,
    cfg: &IntegratorConfig,
) -> std::result::Result<Vec<f64>, WalkerFailure> {
    let mut integ = Integrator::new(field, *cfg);
    let (mut t, mut p) = (s, q);
    let mut signs = Vec::with_capacity(times.len());
    for &tk in times {
        match integ.advance(p, t, tk, None) {
            Ok((next, _)) => p = next,
            Err((tf, _, reason)) => {
                return Err(WalkerFailure {
                    index: 0,
                    time: tf,
                    reason,
                })
            }
        }
        t = tk;
        signs.push(Side::of(coord(&p, axis)).sign());
    }
    Ok(signs)
}

/// Correlation estimates for one first-measurement time `s` and several
/// second-measurement times, all from the same walkers. Each walker is
/// integrated once through the sorted times.
pub fn run_two_time_series(
    s: f64,
    times: &[f64],
    first_axis: Axis,
    walkers: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<Vec<CorrelationEstimate>> {
    check_times(s, times, walkers)?;
    cfg.validate()?;
    let second = first_axis.other();
    // the singlet is stationary, so positions at time s are the initial ones
    let ens = sample_equilibrium(&StateMatrix::singlet(cfg.basis_size)?, walkers, seed)?;

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| times[k]).collect();

    let sizes: Vec<usize> = std::iter::once(cfg.basis_size)
        .chain(cfg.coarse_basis_size)
        .collect();
    let fields = sizes
        .iter()
        .map(|&n| {
            let (branches, _) = collapsed_pair(n, first_axis, s)?;
            Ok([Field::new(&branches[0]), Field::new(&branches[1])])
        })
        .collect::<Result<Vec<_>>>()?;
    // b ≈ b_N + c/N  =>  b_∞ ≈ (N b_N - M b_M) / (N - M)
    let weights: Vec<f64> = match cfg.coarse_basis_size {
        Some(m) => {
            let (n, m) = (cfg.basis_size as f64, m as f64);
            vec![n / (n - m), -m / (n - m)]
        }
        None => vec![1.0],
    };

    let rows: Vec<std::result::Result<Vec<f64>, WalkerFailure>> = ens
        .walkers
        .par_iter()
        .enumerate()
        .map(|(i, &q)| {
            let side = Side::of(coord(&q, first_axis));
            let a = side.sign();
            let mut y = vec![0.0; sorted.len()];
            for (pair, w) in fields.iter().zip(&weights) {
                let signs = sign_history(
                    &pair[branch_index(side)],
                    q,
                    s,
                    &sorted,
                    second,
                    &cfg.integrator,
                )
                .map_err(|f| WalkerFailure { index: i, ..f })?;
                for (yk, b) in y.iter_mut().zip(signs) {
                    *yk += w * a * b;
                }
            }
            Ok(y)
        })
        .collect();
    let failures: Vec<WalkerFailure> = rows
        .iter()
        .filter_map(|r| r.as_ref().err().cloned())
        .collect();
    check_failures(&failures, walkers)?;
    let good: Vec<&Vec<f64>> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();

    let mut out = vec![None; times.len()];
    for (slot, &k) in order.iter().enumerate() {
        let products: Vec<f64> = good.iter().map(|y| y[slot]).collect();
        let (value, stderr) = mean_stderr(&products);
        out[k] = Some(CorrelationEstimate {
            value,
            stderr,
            walkers: products.len(),
            failed: failures.len(),
        });
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

/// Densities of coordinate 2 on a uniform grid after a measurement of
/// coordinate 1 at time 0, for both outcomes and their mixture.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionalDensityGrid {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    /// `plus[k][i]`: density at `times[k]`, `x[i]`
    pub plus: Vec<Vec<f64>>,
    pub minus: Vec<Vec<f64>>,
    /// outcome-probability weighted sum of the two
    pub mixture: Vec<Vec<f64>>,
    pub probabilities: [f64; 2],
}

impl ConditionalDensityGrid {
    pub fn side(&self, side: Side) -> &[Vec<f64>] {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }
}

/// `points` uniform grid nodes spanning the closed interval.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.0];
    }
    let h = 2.0 * HALF_WIDTH / (points - 1) as f64;
    (0..points).map(|i| -HALF_WIDTH + h * i as f64).collect()
}

pub fn conditional_density_grid(
    times: &[f64],
    points: usize,
    basis_size: usize,
) -> Result<ConditionalDensityGrid> {
    if points < 2 {
        return Err(Error::config("density grid needs at least two points"));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::config(format!(
            "time {t} must be finite and nonnegative"
        )));
    }
    let ([plus_state, minus_state], probs) = collapsed_pair(basis_size, Axis::One, 0.0)?;
    let x = uniform_grid(points);
    let sheet = |state: &StateMatrix| -> Result<Vec<Vec<f64>>> {
        times
            .par_iter()
            .map(|&t| {
                let st = state.evolve(t);
                x.iter()
                    .map(|&xi| st.marginal_density(Axis::Two, xi, DEFAULT_GRID))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    };
    let plus = sheet(&plus_state)?;
    let minus = sheet(&minus_state)?;
    let mixture = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| {
            p.iter()
                .zip(m)
                .map(|(a, b)| probs[0] * a + probs[1] * b)
                .collect()
        })
        .collect();
    Ok(ConditionalDensityGrid {
        x,
        times: times.to_vec(),
        plus,
        minus,
        mixture,
        probabilities: probs,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SignalRun {
    pub bit: u8,
    pub lambda_id: String,
    pub read_time: f64,
    /// Alice's readings of coordinate 2
    pub samples: Vec<f64>,
    pub failed: usize,
}

/// Alice's readings for one transmitted bit. Walkers start from `λ|ψ|²`; for
/// bit 1 Bob measures the side of coordinate 1 at time 0 and each walker then
/// follows its own branch; the outcome is never published.
pub fn run_signalling_protocol(
    lambda: Lambda,
    bit: u8,
    read_time: f64,
    walkers: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<SignalRun> {
    if bit > 1 {
        return Err(Error::config(format!("bit must be 0 or 1, got {bit}")));
    }
    if !(read_time > 0.0 && read_time.is_finite()) {
        return Err(Error::config("read time must be positive"));
    }
    cfg.validate()?;
    let singlet = StateMatrix::singlet(cfg.basis_size)?;
    let ens = sample_lambda(&singlet, lambda, walkers, seed)?;
    let (positions, failures) = if bit == 0 {
        (ens.walkers, Vec::new())
    } else {
        let (branches, _) = collapsed_pair(cfg.basis_size, Axis::One, 0.0)?;
        propagate_branches(
            &ens.walkers,
            Axis::One,
            &branches,
            0.0,
            read_time,
            &cfg.integrator,
        )?
    };
    let mut failed = vec![false; positions.len()];
    for f in &failures {
        failed[f.index] = true;
    }
    let samples = positions
        .iter()
        .zip(&failed)
        .filter(|(_, &bad)| !bad)
        .map(|(p, _)| p.x2)
        .collect();
    Ok(SignalRun {
        bit,
        lambda_id: lambda.id().to_string(),
        read_time,
        samples,
        failed: failures.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Decision {
    Detected,
    NotDetected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionReport {
    pub ks_statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
    /// detection rate over repeated trials, filled in by the caller
    pub power_estimate: Option<f64>,
}

/// Two-sample KS test between Alice's readings for the two bits.
pub fn detect_bit(run0: &SignalRun, run1: &SignalRun, alpha: f64) -> Result<DetectionReport> {
    if run0.samples.is_empty() || run1.samples.is_empty() {
        return Err(Error::config("both runs need readings"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    let ks = ks_two_sample(&run0.samples, &run1.samples);
    let decision = if ks.p_value < alpha {
        Decision::Detected
    } else {
        Decision::NotDetected
    };
    Ok(DetectionReport {
        ks_statistic: ks.statistic,
        p_value: ks.p_value,
        alpha,
        decision,
        power_estimate: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerSummary {
    pub lambda_id: String,
    pub read_time: f64,
    pub walkers: usize,
    pub alpha: f64,
    pub trials: usize,
    pub detections: usize,
    pub rate: f64,
    pub reports: Vec<DetectionReport>,
}

/// Repeats the bit-0 / bit-1 comparison over `trials` independent seed pairs.
pub fn signalling_power(
    lambda: Lambda,
    read_time: f64,
    walkers: usize,
    trials: usize,
    seed: u64,
    alpha: f64,
    cfg: &ExperimentConfig,
) -> Result<PowerSummary> {
    if trials == 0 {
        return Err(Error::config("need at least one trial"));
    }
    let mut reports = Vec::with_capacity(trials);
    for k in 0..trials as u64 {
        let run0 =
            run_signalling_protocol(lambda, 0, read_time, walkers, derive_seed(seed, 2 * k), cfg)?;
        let run1 = run_signalling_protocol(
            lambda,
            1,
            read_time,
            walkers,
            derive_seed(seed, 2 * k + 1),
            cfg,
        )?;
        reports.push(detect_bit(&run0, &run1, alpha)?);
    }
    let detections = reports
        .iter()
        .filter(|r| r.decision == Decision::Detected)
        .count();
    let rate = detections as f64 / trials as f64;
    for r in &mut reports {
        r.power_estimate = Some(rate);
    }
    Ok(PowerSummary {
        lambda_id: lambda.id().to_string(),
        read_time,
        walkers,
        alpha,
        trials,
        detections,
        rate,
        reports,
    })
}

/// Point-charge source of a single trajectory: position, velocity and
/// acceleration of coordinate 2 on a uniform time grid (unit charge).
#[derive(Clone, Debug, Serialize)]
pub struct DipoleSeries {
    pub times: Vec<f64>,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

/// Follows one walker from `q0` at the state's reference time over
/// `horizon`, sampled at `samples` uniform intervals.
pub fn radiation_proxy(
    state: &StateMatrix,
    q0: Position2D,
    horizon: f64,
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<DipoleSeries> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config("horizon must be positive"));
    }
    if samples < 2 {
        return Err(Error::config("need at least two samples"));
    }
    let t0 = state.t0();
    let dt = horizon / samples as f64;
    let times: Vec<f64> = (0..=samples).map(|k| t0 + dt * k as f64).collect();
    let path = sample_path(state, q0, &times, cfg)?;
    let field = Field::new(state);
    let mut scratch = Scratch::default();
    let mut velocity = Vec::with_capacity(times.len());
    for (t, p) in times.iter().zip(&path) {
        if field.is_static() {
            velocity.push(0.0);
            continue;
        }
        let amp = field.amplitude(p.x1, p.x2, *t, &mut scratch);
        let v = velocity_from(&amp, cfg.node_floor).ok_or(Error::NodeProximity {
            density: amp.value.norm_sqr(),
            x1: p.x1,
            x2: p.x2,
        })?;
        velocity.push(v[1]);
    }
    let n = velocity.len();
    let acceleration = (0..n)
        .map(|k| {
            if k == 0 {
                (velocity[1] - velocity[0]) / dt
            } else if k == n - 1 {
                (velocity[n - 1] - velocity[n - 2]) / dt
            } else {
                (velocity[k + 1] - velocity[k - 1]) / (2.0 * dt)
            }
        })
        .collect();
    Ok(DipoleSeries {
        times,
        position: path.iter().map(|p| p.x2).collect(),
        velocity,
        acceleration,
    })
}

/// Angular frequency of the largest non-constant Fourier component of a
/// uniformly sampled series spanning `duration`, and the bin width.
pub fn dominant_angular_frequency(series: &[f64], duration: f64) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (k, _) = buf[1..=n / 2]
        .iter()
        .enumerate()
        .map(|(i, z)| (i + 1, z.norm()))
        .fold(
            (0, -1.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    let bin = 2.0 * PI / duration;
    (k as f64 * bin, bin)
}

/// `|ψ|²` on a `points × points` uniform grid; row index runs over x1.
pub fn density_grid(state: &StateMatrix, points: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if points < 2 {
        return Err(Error::config("density grid needs at least two points"));
    }
    let x = uniform_grid(points);
    let field = Field::new(state);
    let mut scratch = Scratch::default();
    let rows = x
        .iter()
        .map(|&x1| {
            x.iter()
                .map(|&x2| field.density(x1, x2, state.t0(), &mut scratch))
                .collect()
        })
        .collect();
    Ok((x, rows))
}

/// Smallest `x` with `cdf(x) >= q` by bisection.
fn quantile(cdf: &MarginalCdf, q: f64) -> f64 {
    let target = q * cdf.total();
    let (mut lo, mut hi) = (-HALF_WIDTH, HALF_WIDTH);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf.cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Launch points for the trajectory fan: coordinate 1 at the median of the
/// collapsed side's marginal, coordinate 2 at `count` equally spaced
/// quantiles `(k + ½)/count` of the collapsed state's marginal.
pub fn fan_initial_conditions(collapsed: &StateMatrix, count: usize) -> Result<Vec<Position2D>> {
    if count == 0 {
        return Err(Error::config("need at least one trajectory"));
    }
    let c1 = MarginalCdf::new(collapsed, Axis::One, defaults::CDF_CELLS)?;
    let c2 = MarginalCdf::new(collapsed, Axis::Two, defaults::CDF_CELLS)?;
    let x1 = quantile(&c1, 0.5);
    (0..count)
        .map(|k| Position2D::new(x1, quantile(&c2, (k as f64 + 0.5) / count as f64)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryFan {
    pub times: Vec<f64>,
    /// `paths[i][k]` is trajectory `i` at `times[k]`
    pub paths: Vec<Vec<Position2D>>,
}

/// Trajectories of the state collapsed onto `side` of coordinate 1 at time 0.
pub fn trajectory_fan(
    side: Side,
    count: usize,
    horizon: f64,
    samples: usize,
    cfg: &ExperimentConfig,
) -> Result<TrajectoryFan> {
    cfg.validate()?;
    if !(horizon > 0.0) || samples < 1 {
        return Err(Error::config(
            "fan needs a positive horizon and at least one sample",
        ));
    }
    let ([plus, minus], _) = collapsed_pair(cfg.basis_size, Axis::One, 0.0)?;
    let state = if side == Side::Plus { plus } else { minus };
    let starts = fan_initial_conditions(&state, count)?;
    let times: Vec<f64> = (0..=samples)
        .map(|k| horizon * k as f64 / samples as f64)
        .collect();
    let paths = starts
        .par_iter()
        .map(|&q| sample_path(&state, q, &times, &cfg.integrator))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryFan { times, paths })
}
