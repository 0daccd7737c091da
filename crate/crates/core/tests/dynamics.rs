use std::f64::consts::{FRAC_PI_2, PI, TAU};

use halfbox::bohm::{integrate_trajectory, sample_path, velocity, IntegratorConfig, Position2D};
use halfbox::experiments::{collapsed_pair, dominant_angular_frequency};
use halfbox::sampling::{
    equivariance_check, propagate_ensemble, sample_equilibrium, sample_lambda, sample_weighted,
    Ensemble, Lambda, MarginalCdf, WeightDesc,
};
use halfbox::stats::{ks_two_sample, mean_stderr};
use halfbox::{mode_eval, Axis, Side, StateMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        ..IntegratorConfig::default()
    }
}

fn critical_1pct(n: usize) -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

fn collapsed_plus(n: usize) -> StateMatrix {
    collapsed_pair(n, Axis::One, 0.0).unwrap().0[0].clone()
}

#[test]
fn singlet_and_real_states_have_no_velocity() {
    let psi = StateMatrix::singlet(8).unwrap();
    let real = StateMatrix::normalized(
        DMatrix::from_fn(4, 4, |i, j| {
            C64::new(1.0 / (1.0 + i as f64 + 2.0 * j as f64), 0.0)
        }),
        0.0,
    )
    .unwrap();
    for (x1, x2) in [(0.3, -0.4), (-1.0, 0.2), (1.2, 1.1)] {
        let p = Position2D::new(x1, x2).unwrap();
        let (a, b) = velocity(&psi, p, 1e-10).unwrap();
        assert!(a.abs() < 1e-14 && b.abs() < 1e-14);
        let (a, b) = velocity(&real, p, 1e-10).unwrap();
        assert_eq!((a, b), (0.0, 0.0));
    }
}

/// `2 Im(∂ ln ψ)` by centred differences of `evaluate`.
fn fd_velocity(state: &StateMatrix, x1: f64, x2: f64, h: f64) -> (f64, f64) {
    let psi = |a: f64, b: f64| state.evaluate(a, b).unwrap().value;
    let centre = psi(x1, x2);
    let d1 = (psi(x1 + h, x2) - psi(x1 - h, x2)) / (2.0 * h);
    let d2 = (psi(x1, x2 + h) - psi(x1, x2 - h)) / (2.0 * h);
    (2.0 * (d1 / centre).im, 2.0 * (d2 / centre).im)
}

#[test]
fn velocity_matches_finite_difference_log_derivative() {
    let state = collapsed_plus(16).evolve(0.3);
    let (v1, v2) = velocity(&state, Position2D::new(0.5, 0.5).unwrap(), 1e-10).unwrap();
    let (f1, f2) = fd_velocity(&state, 0.5, 0.5, 1e-5);
    assert!(v1.abs() + v2.abs() > 1e-3, "field should not vanish here");
    assert!(
        (v1 - f1).abs() < 1e-6 && (v2 - f2).abs() < 1e-6,
        "{v1} {f1} {v2} {f2}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 100 {
        let x1 = rng.gen_range(-1.5..1.5);
        let x2 = rng.gen_range(-1.5..1.5);
        if state.density(x1, x2).unwrap() < 1e-3 {
            continue;
        }
        let (v1, v2) = velocity(&state, Position2D::new(x1, x2).unwrap(), 1e-10).unwrap();
        let (f1, f2) = fd_velocity(&state, x1, x2, 1e-5);
        let scale = 1.0 + v1.abs().max(v2.abs());
        assert!(
            (v1 - f1).abs() < 1e-6 * scale && (v2 - f2).abs() < 1e-6 * scale,
            "at ({x1}, {x2})"
        );
        checked += 1;
    }
}

#[test]
fn amplitude_gradient_matches_mode_sum() {
    let state = collapsed_plus(8).evolve(0.7);
    let (x1, x2) = (-0.4, 0.9);
    let c = state.coeffs();
    let mut value = C64::new(0.0, 0.0);
    for i in 0..8 {
        for j in 0..8 {
            value += c[(i, j)] * mode_eval(i + 1, x1).unwrap().0 * mode_eval(j + 1, x2).unwrap().0;
        }
    }
    assert!((state.evaluate(x1, x2).unwrap().value - value).norm() < 1e-13);
}

#[test]
fn singlet_particles_do_not_move() {
    let psi = StateMatrix::singlet(16).unwrap();
    for (x1, x2) in [(0.1, 0.2), (-1.5, 1.5), (0.7, -0.3)] {
        let q0 = Position2D::new(x1, x2).unwrap();
        let traj = integrate_trajectory(&psi, q0, 0.0, 50.0, &IntegratorConfig::default()).unwrap();
        assert!(traj.points.iter().all(|p| *p == q0));
    }
}

#[test]
fn collapsed_trajectory_oscillates_at_level_spacing() {
    let state = collapsed_plus(16);
    let n = 1024;
    let times: Vec<f64> = (0..=n).map(|k| TAU * k as f64 / n as f64).collect();
    for q0 in [(0.6, -0.7), (0.9, 0.4)] {
        let path = sample_path(
            &state,
            Position2D::new(q0.0, q0.1).unwrap(),
            &times,
            &tight(),
        )
        .unwrap();
        assert!(path.iter().all(|p| p.in_box()));
        let x2: Vec<f64> = path[..n].iter().map(|p| p.x2).collect();
        let (omega, bin) = dominant_angular_frequency(&x2, TAU);
        assert!((omega - 3.0).abs() <= bin, "dominant ω = {omega}");
    }
}

#[test]
fn conjugated_state_retraces_the_path() {
    let state = collapsed_plus(16);
    let q0 = Position2D::new(0.4, -0.6).unwrap();
    let (t0, t1) = (0.0, 1.2);
    let forward = integrate_trajectory(&state, q0, t0, t1, &tight()).unwrap();
    let reversed = state.evolve(t1).conjugated();
    let back =
        integrate_trajectory(&reversed, forward.last(), t1, 2.0 * t1 - t0, &tight()).unwrap();
    let end = back.last();
    assert!(
        (end.x1 - q0.x1).abs() < 1e-5 && (end.x2 - q0.x2).abs() < 1e-5,
        "{end:?}"
    );
}

#[test]
fn equilibrium_sign_statistics() {
    let psi = StateMatrix::singlet(4).unwrap();
    let ens = sample_equilibrium(&psi, 100_000, 5).unwrap();
    let s1: Vec<f64> = ens.walkers.iter().map(|p| Side::of(p.x1).sign()).collect();
    let prod: Vec<f64> = ens
        .walkers
        .iter()
        .map(|p| Side::of(p.x1).sign() * Side::of(p.x2).sign())
        .collect();
    let (m, se) = mean_stderr(&s1);
    assert!(m.abs() < 3.0 * se);
    let (m, se) = mean_stderr(&prod);
    assert!(
        (m + (8.0 / (3.0 * PI)).powi(2)).abs() < 3.0 * se,
        "{m} ± {se}"
    );
}

#[test]
fn sampling_is_reproducible_and_thread_independent() {
    let state = collapsed_plus(8);
    let a = sample_equilibrium(&state, 3000, 11).unwrap();
    let b = sample_equilibrium(&state, 3000, 11).unwrap();
    assert_eq!(a.walkers, b.walkers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let c = pool.install(|| sample_equilibrium(&state, 3000, 11).unwrap());
    assert_eq!(a.walkers, c.walkers);
    let moved = propagate_ensemble(&state, &a, 0.4, &IntegratorConfig::default()).unwrap();
    let moved_pool =
        pool.install(|| propagate_ensemble(&state, &a, 0.4, &IntegratorConfig::default()).unwrap());
    assert_eq!(moved.ensemble.walkers, moved_pool.ensemble.walkers);
    assert_ne!(
        sample_equilibrium(&state, 3000, 12).unwrap().walkers,
        a.walkers
    );
}

#[test]
fn weighted_sampling() {
    let psi = StateMatrix::singlet(4).unwrap();
    let n = 10_000;
    let eq = sample_equilibrium(&psi, n, 1).unwrap();
    let flat = sample_weighted(&psi, &|_, _| 1.0, 1.0, "one", n, 2).unwrap();
    assert_eq!(flat.weight, WeightDesc::Lambda("one".into()));
    assert!(ks_two_sample(&eq.coordinates(Axis::Two), &flat.coordinates(Axis::Two)).p_value > 0.01);

    // mean of x2 under (1 + ½ sin x2)|ψ|², by quadrature of the singlet marginal
    let marginal =
        |x: f64| 0.5 * (mode_eval(1, x).unwrap().0.powi(2) + mode_eval(2, x).unwrap().0.powi(2));
    let m = 4000;
    let h = PI / m as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..m {
        let x = -FRAC_PI_2 + h * (k as f64 + 0.5);
        let w = (1.0 + 0.5 * x.sin()) * marginal(x) * h;
        num += x * w;
        den += w;
    }
    let expect = num / den;
    let sin = sample_lambda(&psi, Lambda::SinX2, n, 3).unwrap();
    let (mean, se) = mean_stderr(&sin.coordinates(Axis::Two));
    let (eq_mean, _) = mean_stderr(&eq.coordinates(Axis::Two));
    assert!(expect > 0.05 && mean > eq_mean);
    assert!((mean - expect).abs() < 3.0 * se, "{mean} vs {expect}");

    let upper = sample_lambda(&psi, Lambda::UpperHalf, 2000, 4).unwrap();
    assert!(upper.walkers.iter().all(|p| p.x2 > 0.0));
}

#[test]
fn propagation_identities() {
    let psi = StateMatrix::singlet(8).unwrap();
    let ens = sample_equilibrium(&psi, 500, 9).unwrap();
    let moved = propagate_ensemble(&psi, &ens, 3.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(moved.ensemble.walkers, ens.walkers);
    let state = collapsed_plus(8);
    let same = propagate_ensemble(&state, &ens, 0.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(same.ensemble.walkers, ens.walkers);
    assert!(same.failures.is_empty());
}

#[test]
fn equilibrium_is_preserved_by_the_flow() {
    let state = collapsed_plus(16);
    let n = 10_000;
    let crit = critical_1pct(n);
    let ens = sample_equilibrium(&state, n, 21).unwrap();
    let (d1, d2) = equivariance_check(&state, &ens, 512).unwrap();
    assert!(d1 < crit && d2 < crit, "{d1} {d2} vs {crit}");
    let moved = propagate_ensemble(&state, &ens, 0.5, &IntegratorConfig::default()).unwrap();
    let (d1, d2) = equivariance_check(&state.evolve(0.5), &moved.ensemble, 512).unwrap();
    assert!(d1 < crit && d2 < crit, "{d1} {d2} vs {crit}");
}

#[test]
fn equivariance_check_detects_the_wrong_state() {
    let singlet = StateMatrix::singlet(16).unwrap();
    let n = 10_000;
    let ens = sample_equilibrium(&singlet, n, 22).unwrap();
    let (_, d2) = equivariance_check(&collapsed_plus(16).evolve(0.5), &ens, 512).unwrap();
    assert!(d2 > critical_1pct(n), "{d2}");

    let one = Ensemble::new(
        vec![Position2D::new(0.2, -0.1).unwrap()],
        0,
        WeightDesc::Equilibrium,
    )
    .unwrap();
    let (d1, d2) = equivariance_check(&singlet, &one, 64).unwrap();
    assert!((0.0..=1.0).contains(&d1) && (0.0..=1.0).contains(&d2));
}

#[test]
fn marginal_cdf_is_monotone_and_normalized() {
    let state = collapsed_plus(16).evolve(0.8);
    for axis in [Axis::One, Axis::Two] {
        let cdf = MarginalCdf::new(&state, axis, 256).unwrap();
        assert!((cdf.total() - 1.0).abs() < 1e-10);
        let mut prev = 0.0;
        for k in 0..=200 {
            let x = -FRAC_PI_2 + PI * k as f64 / 200.0;
            let v = cdf.cdf(x);
            assert!(v >= prev - 1e-14);
            prev = v;
        }
        // interior evaluation agrees with the accumulated cell boundary
        let x = -FRAC_PI_2 + PI * 37.0 / 256.0;
        let direct = cdf.cdf(x);
        let nudged = cdf.cdf(x - 1e-13);
        assert!((direct - nudged).abs() < 1e-11);
    }
}
