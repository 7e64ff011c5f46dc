use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use railopt::adjoint::{adjoint_sweep, cost_state_forcing};
use railopt::forward::{control_forcing, solve_cost};
use railopt::optimize::{project_control, project_shape};
use railopt::oracle::{self, smooth_direction};
use railopt::output::fmt_f64;
use railopt::{
    adjoint_solve, evaluate_cost, forward_solve, gradient, optimize, tangent_linear_solve, AdmissibleSets,
    ControlSignal, DiscreteModel, ModelConfig, OptimConfig, OptimMode, OptimStatus, ShapeParams, StateVector,
    TimeGrid,
};

fn model(n: usize, alpha: f64, dt: f64) -> DiscreteModel {
    DiscreteModel::build(ModelConfig {
        n_modes: n,
        alpha,
        dt,
        ..ModelConfig::default()
    })
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn vec_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Decaying modal amplitudes keep high modes physically sized.
fn modal_state(n: usize, q: &[f64], v: &[f64]) -> StateVector {
    let decay = |c: &[f64]| -> Vec<f64> {
        c.iter()
            .take(n)
            .enumerate()
            .map(|(i, x)| x / ((i + 1) * (i + 1)) as f64)
            .collect()
    };
    StateVector::from_modes(n, &decay(q), &decay(v)).unwrap()
}

fn coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

fn smooth_control(grid: &TimeGrid, seed: u64, scale: f64) -> ControlSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = smooth_direction(grid, &mut rng).into_iter().map(|x| x * scale).collect();
    ControlSignal::new(s, 10.0).unwrap()
}

// modal algebra

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sine_orthogonality(n in 1usize..=12) {
        let m = model(n, 1.0, 1e-3);
        prop_assert!(m.orthogonality_defect(3 * n) <= 1e-13);
    }
}

proptest! {
    #[test]
    fn cubic_jacobian_is_the_derivative(q in coeffs(6), dq in coeffs(6)) {
        let m = model(6, 1.0, 1e-3);
        let q = DVector::from_vec(q);
        let dq = DVector::from_vec(dq);
        prop_assume!(dq.norm() > 1e-3);
        let eps = 1e-5;
        let fd = (m.nonlinear_term(&(&q + &dq * eps)) - m.nonlinear_term(&(&q - &dq * eps))) / (2.0 * eps);
        let exact = m.nonlinear_jacobian_apply(&q, &dq);
        if exact.norm() > 1e-8 {
            prop_assert!(vec_rel(&fd, &exact) <= 1e-6, "{}", vec_rel(&fd, &exact));
        } else {
            prop_assert!(fd.norm() <= 1e-8);
        }
    }

    #[test]
    fn load_is_linear_in_spline_coefficients(a in coeffs(7), b in coeffs(7)) {
        let m = model(8, 1.0, 1e-3);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let la = m.shape_modal_load(&ShapeParams::spline(a).unwrap());
        let lb = m.shape_modal_load(&ShapeParams::spline(b).unwrap());
        let ls = m.shape_modal_load(&ShapeParams::spline(sum).unwrap());
        prop_assert!((ls - la - lb).amax() <= 1e-13);
    }

    #[test]
    fn energy_is_positive_and_quadratic(q in coeffs(5), v in coeffs(5), s in -4.0..4.0f64) {
        let m = model(5, 1.0, 1e-3);
        let x = StateVector::from_modes(5, &q, &v).unwrap();
        let e = m.energy_norm_sq(&x);
        let nonzero = q.iter().chain(&v).any(|c| *c != 0.0);
        prop_assert_eq!(e > 0.0, nonzero);
        let scaled = StateVector::new(&x.q * s, &x.v * s).unwrap();
        prop_assert!((m.energy_norm_sq(&scaled) - s * s * e).abs() <= 1e-12 * (1.0 + s * s * e));
    }

    #[test]
    fn even_shapes_load_only_odd_modes(w in 0.03..0.3f64, h in 0.07..0.39f64, half in coeffs(4)) {
        let m = model(9, 1.0, 1e-3);
        let mut spline = half.clone();
        spline.extend(half.iter().rev());
        for r in [
            ShapeParams::gaussian_bump(0.5, w).unwrap(),
            ShapeParams::cosine_patch(0.5, h).unwrap(),
            ShapeParams::spline(spline.clone()).unwrap(),
        ] {
            let load = m.shape_modal_load(&r);
            for (i, b) in load.iter().enumerate() {
                if i % 2 == 1 {
                    prop_assert!(b.abs() <= 1e-12, "{:?} mode {}: {}", r.family(), i + 1, b);
                }
            }
        }
    }

    #[test]
    fn physical_round_trip_of_band_limited_states(q in coeffs(6), v in coeffs(6)) {
        let m = model(6, 1.0, 1e-3);
        let x = StateVector::from_modes(6, &q, &v).unwrap();
        let (w, wt) = m.state_to_physical(&x);
        let back = m.state_from_physical(&w, &wt).unwrap();
        prop_assert!((&back.q - &x.q).amax() <= 1e-13);
        prop_assert!((&back.v - &x.v).amax() <= 1e-13);
    }
}

// time stepping

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn tangent_matches_forward_differences(seed in any::<u64>(), q in coeffs(4), v in coeffs(4)) {
        let m = model(4, 1.0, 5e-3);
        let grid = TimeGrid::for_model(&m);
        let x0 = modal_state(4, &q, &v);
        let r = ShapeParams::gaussian_bump(0.37, 0.12).unwrap();
        let u = smooth_control(&grid, seed, 2.0);
        let du = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
            smooth_direction(&grid, &mut rng)
        };
        let traj = forward_solve(&m, &u, &r, &x0).unwrap();
        let tangent = tangent_linear_solve(&m, &traj, &control_forcing(&m, &traj, &du).unwrap()).unwrap();
        let eps = 1e-5;
        let shifted = |s: f64| {
            let w: Vec<f64> = u.samples.iter().zip(&du).map(|(a, d)| a + s * d).collect();
            forward_solve(&m, &u.with_samples(w), &r, &x0).unwrap()
        };
        let (plus, minus) = (shifted(eps), shifted(-eps));
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for k in 0..grid.len() {
            let fd = (plus.states()[k].stacked() - minus.states()[k].stacked()) / (2.0 * eps);
            let z = tangent[k].stacked();
            num = num.max((&fd - &z).norm());
            den = den.max(z.norm());
        }
        prop_assert!(num / den <= 1e-5, "{}", num / den);
    }

    #[test]
    fn tangent_map_is_homogeneous(seed in any::<u64>()) {
        let m = model(3, 1.0, 1e-2);
        let grid = TimeGrid::for_model(&m);
        let x0 = modal_state(3, &[0.8, -0.4], &[0.3]);
        let r = ShapeParams::gaussian_bump(0.4, 0.1).unwrap();
        let traj = forward_solve(&m, &smooth_control(&grid, seed, 1.0), &r, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<DVector<f64>> = (0..grid.len())
            .map(|_| DVector::from_fn(6, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0)))
            .collect();
        let g10: Vec<DVector<f64>> = g.iter().map(|x| x * 10.0).collect();
        let h = tangent_linear_solve(&m, &traj, &g).unwrap();
        let h10 = tangent_linear_solve(&m, &traj, &g10).unwrap();
        for (a, b) in h.iter().zip(&h10) {
            let e = vec_rel(&(a.stacked() * 10.0), &b.stacked());
            prop_assert!(e <= 1e-13, "{e:e}");
        }
        // a power of two commutes with every rounding
        let g8: Vec<DVector<f64>> = g.iter().map(|x| x * 8.0).collect();
        let h8 = tangent_linear_solve(&m, &traj, &g8).unwrap();
        for (a, b) in h.iter().zip(&h8) {
            prop_assert_eq!(a.stacked() * 8.0, b.stacked());
        }
    }

    #[test]
    fn unforced_linear_energy_never_increases(
        q in coeffs(6), v in coeffs(6), mu in 0.01..1.0f64, cd in 1e-4..1e-2f64
    ) {
        let m = DiscreteModel::build(ModelConfig {
            n_modes: 6,
            alpha: 0.0,
            mu,
            cd,
            dt: 5e-3,
            ..ModelConfig::default()
        })
        .unwrap();
        let grid = TimeGrid::for_model(&m);
        let x0 = modal_state(6, &q, &v);
        let traj = forward_solve(
            &m,
            &ControlSignal::zeros(&grid, 10.0).unwrap(),
            &ShapeParams::gaussian_bump(0.5, 0.1).unwrap(),
            &x0,
        )
        .unwrap();
        let energies: Vec<f64> = traj.states().iter().map(|x| m.energy_norm_sq(x)).collect();
        for w in energies.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
    }
}

// adjoint

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn tangent_adjoint_duality(seed in any::<u64>(), alpha in prop::sample::select(vec![0.0, 1.0])) {
        let m = model(5, alpha, 5e-3);
        let grid = TimeGrid::for_model(&m);
        let x0 = modal_state(5, &[1.0, 0.5, -0.3], &[0.2]);
        let r = ShapeParams::cosine_patch(0.41, 0.17).unwrap();
        let traj = forward_solve(&m, &smooth_control(&grid, seed, 3.0), &r, &x0).unwrap();
        prop_assert!(oracle::duality_probe(&m, &traj, 4, seed).unwrap() <= 1e-12);
    }

    #[test]
    fn linear_single_mode_adjoint_is_the_matrix_transpose(seed in any::<u64>(), q0 in -1.0..1.0f64) {
        let m = model(1, 0.0, 2e-2);
        let grid = TimeGrid::for_model(&m);
        let r = ShapeParams::gaussian_bump(0.45, 0.1).unwrap();
        let x0 = StateVector::from_modes(1, &[q0], &[0.0]).unwrap();
        let traj = forward_solve(&m, &smooth_control(&grid, seed, 1.0), &r, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<[f64; 2]> = (0..grid.len())
            .map(|_| [rand::Rng::gen_range(&mut rng, -1.0..1.0), rand::Rng::gen_range(&mut rng, -1.0..1.0)])
            .collect();
        let dense = oracle::dense_linear_multipliers(m.config(), &grid, &c).unwrap();
        let forcing: Vec<DVector<f64>> = c.iter().map(|c| DVector::from_column_slice(c)).collect();
        let adj = adjoint_sweep(&m, &traj, &forcing).unwrap();
        prop_assert_eq!(adj.multipliers().len(), dense.len());
        for (mu, d) in adj.multipliers().iter().zip(&dense) {
            let d = DVector::from_column_slice(d);
            prop_assert!((mu - &d).norm() <= 1e-12 * d.norm().max(1.0));
        }
        // and for the cost's own forcing
        let own: Vec<[f64; 2]> = cost_state_forcing(&m, &traj).iter().map(|c| [c[0], c[1]]).collect();
        let dense = oracle::dense_linear_multipliers(m.config(), &grid, &own).unwrap();
        let adj = adjoint_solve(&m, &traj).unwrap();
        for (mu, d) in adj.multipliers().iter().zip(&dense) {
            let d = DVector::from_column_slice(d);
            prop_assert!((mu - &d).norm() <= 1e-12 * d.norm().max(1.0));
        }
    }

    #[test]
    fn mirroring_keeps_cost_and_flips_centre_slope(
        c in 0.2..0.8f64, w in 0.05..0.2f64, seed in any::<u64>(), q in coeffs(4)
    ) {
        let m = model(4, 1.0, 1e-2);
        let grid = TimeGrid::for_model(&m);
        let u = smooth_control(&grid, seed, 2.0);
        let x0 = modal_state(4, &q, &[]);
        let r = ShapeParams::gaussian_bump(c, w).unwrap();
        let eval = |r: &ShapeParams, x0: &StateVector| {
            let traj = forward_solve(&m, &u, r, x0).unwrap();
            let adj = adjoint_solve(&m, &traj).unwrap();
            (evaluate_cost(&m, &traj), gradient(&m, &traj, &adj).grad_r[0])
        };
        let (j, dj) = eval(&r, &x0);
        let (jm, djm) = eval(&r.mirrored().unwrap(), &x0.mirrored());
        prop_assert!(rel(j, jm) <= 1e-10, "{} vs {}", j, jm);
        prop_assert!((dj + djm).abs() <= 1e-10 * (1.0 + dj.abs()), "{} vs {}", dj, djm);
    }
}

// optimizer

fn quick_optimizer() -> OptimConfig {
    OptimConfig {
        max_iters: 12,
        initial_step: 10.0,
        ..OptimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn optimizer_is_monotone_and_feasible(
        seed in any::<u64>(), c in 0.1..0.9f64, w in 0.02..0.3f64, scale in 0.0..40.0f64
    ) {
        let m = model(3, 1.0, 1e-2);
        let grid = TimeGrid::for_model(&m);
        let u = smooth_control(&grid, seed, scale);
        let r = ShapeParams::gaussian_bump(c, w).unwrap();
        let sets = AdmissibleSets::from_parts(&u, &r).unwrap();
        let x0 = modal_state(3, &[1.0, 0.0, 0.4], &[]);
        let res = optimize(&m, &sets, &quick_optimizer(), &x0, &u, &r).unwrap();
        for pair in res.log.windows(2) {
            prop_assert!(pair[1].cost <= pair[0].cost);
        }
        prop_assert!(res.cost <= res.initial_cost);
        prop_assert!(res.u_opt.l2_norm(&grid) <= sets.control_ball_radius * (1.0 + 1e-12));
        for (v, (lo, hi)) in res.r_opt.values().iter().zip(&sets.shape_box) {
            prop_assert!(lo <= v && v <= hi);
        }
        if res.status == OptimStatus::Converged {
            prop_assert!(res.kkt.control_stationarity < OptimConfig::default().grad_tol);
            prop_assert!(res.kkt.shape_stationarity < OptimConfig::default().grad_tol);
        }
    }

    #[test]
    fn projected_start_is_equivalent(seed in any::<u64>(), over in 1.5..20.0f64) {
        let m = model(3, 1.0, 1e-2);
        let grid = TimeGrid::for_model(&m);
        let r = ShapeParams::gaussian_bump(0.35, 0.1).unwrap();
        let base = smooth_control(&grid, seed, 1.0);
        let radius = 10.0;
        let big: Vec<f64> = base.samples.iter().map(|x| x * over * radius / grid.l2_norm(&base.samples)).collect();
        let projected = project_control(&big, &grid, radius);
        let sets = AdmissibleSets::new(radius, r.bounds().to_vec()).unwrap();
        let x0 = modal_state(3, &[1.0], &[]);
        let cfg = quick_optimizer();
        let a = optimize(&m, &sets, &cfg, &x0, &ControlSignal::new(big, radius).unwrap(), &r).unwrap();
        let b = optimize(&m, &sets, &cfg, &x0, &ControlSignal::new(projected, radius).unwrap(), &r).unwrap();
        prop_assert!((a.cost - b.cost).abs() <= 1e-10 * (1.0 + b.cost.abs()));
    }
}

proptest! {
    #[test]
    fn projections_are_idempotent(u in prop::collection::vec(-50.0..50.0f64, 11), r in coeffs(3)) {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let once = project_control(&u, &grid, 3.0);
        prop_assert!(grid.l2_norm(&once) <= 3.0 * (1.0 + 1e-12));
        let twice = project_control(&once, &grid, 3.0);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        let bounds = [(-0.5, 0.5), (0.0, 0.2), (-1.0, -0.9)];
        let boxed = project_shape(&r, &bounds);
        prop_assert_eq!(project_shape(&boxed, &bounds), boxed);
    }

    #[test]
    fn emitted_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

// oracles

#[test]
fn gradcheck_is_deterministic() {
    let m = model(4, 1.0, 1e-2);
    let grid = TimeGrid::for_model(&m);
    let u = smooth_control(&grid, 3, 2.0);
    let r = ShapeParams::gaussian_bump(0.33, 0.11).unwrap();
    let x0 = modal_state(4, &[1.0, 0.2], &[0.1]);
    let a = oracle::gradcheck(&m, &u, &r, &x0, 1e-5, 4, 17).unwrap();
    let b = oracle::gradcheck(&m, &u, &r, &x0, 1e-5, 4, 17).unwrap();
    assert_eq!(a, b);
    assert!(a.pass, "{}", a.worst);
}

#[test]
fn central_difference_error_is_second_order_on_the_linear_problem() {
    let m = model(3, 0.0, 1e-2);
    let grid = TimeGrid::for_model(&m);
    let u = smooth_control(&grid, 5, 3.0);
    let r = ShapeParams::gaussian_bump(0.3, 0.08).unwrap();
    let x0 = modal_state(3, &[1.0, 0.5], &[]);
    let traj = forward_solve(&m, &u, &r, &x0).unwrap();
    let adj = adjoint_solve(&m, &traj).unwrap();
    let exact = gradient(&m, &traj, &adj).grad_r[1];
    // width enters nonlinearly even when the dynamics are linear
    let errs: Vec<f64> = [1e-3, 1e-4]
        .iter()
        .map(|&eps| {
            let fd = oracle::fd_shape_directional(&m, &u, &r, &x0, &[0.0, 1.0], eps).unwrap();
            (fd - exact).abs()
        })
        .collect();
    let slope = (errs[0] / errs[1]).log10();
    assert!((1.8..=2.2).contains(&slope), "slope {slope}, errors {errs:?}");
}

#[test]
fn heavy_control_penalty_flattens_the_sweep() {
    let m = DiscreteModel::build(ModelConfig {
        n_modes: 3,
        gamma: 1e6,
        dt: 1e-2,
        ..ModelConfig::default()
    })
    .unwrap();
    let grid = TimeGrid::for_model(&m);
    let u = ControlSignal::zeros(&grid, 10.0).unwrap();
    let r = ShapeParams::gaussian_bump(0.5, 0.1).unwrap();
    let sets = AdmissibleSets::from_parts(&u, &r).unwrap();
    let x0 = modal_state(3, &[1.0], &[]);
    let cfg = OptimConfig {
        initial_step: 1e-6,
        mode: OptimMode::Joint,
        ..OptimConfig::default()
    };
    let sweep = oracle::sweep_shape(&m, &sets, &cfg, &x0, &u, &r, &[0], &[9]).unwrap();
    let costs: Vec<f64> = sweep.costs.iter().map(|c| c.unwrap()).collect();
    let (lo, hi) = costs.iter().fold((f64::MAX, f64::MIN), |(a, b), &c| (a.min(c), b.max(c)));
    assert!((hi - lo) / lo <= 1e-3, "{costs:?}");
}

#[test]
fn cost_is_unchanged_by_solve_cost_shortcut() {
    let m = model(4, 1.0, 1e-2);
    let grid = TimeGrid::for_model(&m);
    let u = smooth_control(&grid, 9, 1.5);
    let r = ShapeParams::cosine_patch(0.6, 0.15).unwrap();
    let x0 = modal_state(4, &[0.7, 0.1], &[0.3]);
    let traj = forward_solve(&m, &u, &r, &x0).unwrap();
    assert_eq!(
        evaluate_cost(&m, &traj).to_bits(),
        solve_cost(&m, &u, &r, &x0).unwrap().to_bits()
    );
}
