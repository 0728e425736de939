use symplectic_adjoint::dynamics::{Decay, Dynamics, Linear, MlpDynamics};
use symplectic_adjoint::engines::{
    compute_gradient, grad_adjoint_continuous, grad_backprop_full, grad_baseline_checkpoint, grad_step_checkpoint,
    grad_symplectic_adjoint, grad_with_running_cost, Engine, EngineOptions, GradientProblem, LossSpec, Running,
    Terminal,
};
use symplectic_adjoint::ivp::{integrate_variational, StepController};
use symplectic_adjoint::problems::builtin_problem;
use symplectic_adjoint::relative_linf;
use symplectic_adjoint::tableau::{builtin_tableau, BUILTIN_TABLEAUS};

fn traced() -> EngineOptions {
    EngineOptions { trace_adjoint: true, ..Default::default() }
}

/// Central differences of the loss in `x0` and `θ`, on a frozen grid.
fn finite_difference(p: &GradientProblem<'_>) -> Vec<f64> {
    let eval = |x0: &[f64], theta: &[f64]| {
        let q = GradientProblem { x0, theta, ..*p };
        grad_backprop_full(&q).unwrap().loss
    };
    let mut out = Vec::new();
    for (k, &v) in p.x0.iter().enumerate() {
        let step = 1e-6 * (1.0 + v.abs());
        let mut x = p.x0.to_vec();
        x[k] = v + step;
        let up = eval(&x, p.theta);
        x[k] = v - step;
        out.push((up - eval(&x, p.theta)) / (2.0 * step));
    }
    for (k, &v) in p.theta.iter().enumerate() {
        let step = 1e-6 * (1.0 + v.abs());
        let mut th = p.theta.to_vec();
        th[k] = v + step;
        let up = eval(p.x0, &th);
        th[k] = v - step;
        out.push((up - eval(p.x0, &th)) / (2.0 * step));
    }
    out
}

#[test]
fn heun_backprop_matches_unrolled_polynomial() {
    // x_{n+1} = R x_n with R = 1 + hθ + (hθ)²/2, so x_4 = R⁴ and
    // dx_4/dθ = 4 R³ (h + h²θ).
    let (theta, h) = (0.5, 0.25);
    let tab = builtin_tableau("heun_euler").unwrap();
    let ctrl = StepController::fixed(h);
    let loss = LossSpec::terminal(Terminal::Linear(vec![1.0]));
    let p = GradientProblem {
        dynamics: &Decay { dim: 1 },
        x0: &[1.0],
        theta: &[theta],
        t0: 0.0,
        t1: 1.0,
        tableau: &tab,
        controller: &ctrl,
        loss: &loss,
    };
    let r = 1.0 + h * theta + (h * theta).powi(2) / 2.0;
    let expected = 4.0 * r.powi(3) * (h + h * h * theta);
    let g = grad_backprop_full(&p).unwrap();
    assert!((g.grad_theta[0] - expected).abs() < 1e-14, "{} vs {expected}", g.grad_theta[0]);
    assert!((g.grad_x0[0] - r.powi(4)).abs() < 1e-14);
    assert_eq!(g.accounting.steps_accepted, 4);
}

#[test]
fn constant_loss_has_zero_gradient() {
    let prob = builtin_problem("mlp_node").unwrap();
    let tab = builtin_tableau("bosh3").unwrap();
    let ctrl = StepController::fixed(0.1);
    let loss = LossSpec::terminal(Terminal::Constant(3.0));
    let p = GradientProblem { loss: &loss, ..prob.gradient_problem(&prob.theta0, &tab, &ctrl) };
    for e in Engine::ALL {
        let g = compute_gradient(e, &p, &EngineOptions::default()).unwrap();
        assert_eq!(g.loss, 3.0);
        assert!(g.flat_gradient().iter().all(|v| *v == 0.0), "{e}");
    }
}

#[test]
fn exact_engines_agree_on_every_problem_and_tableau() {
    for name in ["decay", "rotation", "linear_nd", "mlp_node", "gradient_flow_kdv_toy"] {
        let prob = builtin_problem(name).unwrap();
        for tname in BUILTIN_TABLEAUS {
            let tab = builtin_tableau(tname).unwrap();
            for ctrl in [StepController::fixed((prob.t1 - prob.t0) / 20.0), StepController::adaptive(1e-6, 1e-4)] {
                if ctrl.is_adaptive() && tab.b_err.is_none() {
                    continue;
                }
                let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
                let reference = grad_backprop_full(&p).unwrap().flat_gradient();
                for e in [Engine::Baseline, Engine::StepCheckpoint, Engine::Symplectic] {
                    let g = compute_gradient(e, &p, &EngineOptions::default()).unwrap().flat_gradient();
                    let err = relative_linf(&g, &reference);
                    assert!(err <= 1e-10, "{name}/{tname}/{e}: {err:e}");
                }
            }
        }
    }
}

#[test]
fn baseline_is_bitwise_backprop() {
    let prob = builtin_problem("mlp_node").unwrap();
    let tab = builtin_tableau("dopri5").unwrap();
    let ctrl = StepController::adaptive(1e-8, 1e-6);
    let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
    let a = grad_backprop_full(&p).unwrap();
    let b = grad_baseline_checkpoint(&p).unwrap();
    assert_eq!(a.grad_x0, b.grad_x0);
    assert_eq!(a.grad_theta, b.grad_theta);
    assert_eq!(b.accounting.nfe_backward, b.accounting.nfe_forward);
}

#[test]
fn single_step_checkpoint_is_bitwise_baseline() {
    let prob = builtin_problem("mlp_node").unwrap();
    for tname in BUILTIN_TABLEAUS {
        let tab = builtin_tableau(tname).unwrap();
        let ctrl = StepController::fixed(prob.t1 - prob.t0);
        let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
        let a = grad_baseline_checkpoint(&p).unwrap();
        let b = grad_step_checkpoint(&p).unwrap();
        assert_eq!(b.accounting.steps_accepted, 1);
        assert_eq!(a.grad_x0, b.grad_x0, "{tname}");
        assert_eq!(a.grad_theta, b.grad_theta, "{tname}");
    }
}

#[test]
fn random_mlp_matches_finite_differences() {
    let net = MlpDynamics::new(&[4, 8, 4]).unwrap();
    let theta = net.init_params(3);
    let tab = builtin_tableau("dopri5").unwrap();
    let ctrl = StepController::fixed_steps(8, 0.0, 1.0);
    let loss = LossSpec::terminal(Terminal::HalfSquaredNorm);
    let p = GradientProblem {
        dynamics: &net,
        x0: &[0.2, -0.4, 0.6, 1.0],
        theta: &theta,
        t0: 0.0,
        t1: 1.0,
        tableau: &tab,
        controller: &ctrl,
        loss: &loss,
    };
    let fd = finite_difference(&p);
    for e in [Engine::BackpropFull, Engine::Baseline, Engine::Symplectic] {
        let g = compute_gradient(e, &p, &EngineOptions::default()).unwrap().flat_gradient();
        let err = relative_linf(&g, &fd);
        assert!(err < 1e-5, "{e}: {err:e}");
    }
}

#[test]
fn conservation_of_lambda_delta() {
    for name in ["decay", "rotation", "mlp_node", "gradient_flow_kdv_toy"] {
        let prob = builtin_problem(name).unwrap();
        for tname in BUILTIN_TABLEAUS {
            let tab = builtin_tableau(tname).unwrap();
            let ctrl = StepController::fixed((prob.t1 - prob.t0) / 30.0);
            let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
            let g = grad_symplectic_adjoint(&p, &traced()).unwrap();
            let fwd = symplectic_adjoint::ivp::integrate(
                &symplectic_adjoint::dynamics::Bound::new(prob.dynamics.as_ref(), &prob.theta0),
                &prob.x0,
                prob.t0,
                prob.t1,
                &tab,
                &ctrl,
            )
            .unwrap();
            let var = integrate_variational(prob.dynamics.as_ref(), &prob.theta0, &prob.x0, prob.t0, prob.t1, &tab, &fwd)
                .unwrap();
            let trace = g.adjoint_trace.unwrap();
            assert_eq!(trace.len(), var.deltas.len());
            let d = prob.x0.len();
            let pair = |n: usize| -> nalgebra::DVector<f64> {
                let lam = nalgebra::DVector::from_column_slice(&trace[n]);
                var.deltas[n].transpose() * lam
            };
            let last = pair(trace.len() - 1);
            let scale = last.amax();
            for n in 0..trace.len() {
                let dev = (pair(n) - &last).amax() / scale;
                assert!(dev <= 1e-12, "{name}/{tname} n={n}: {dev:e} (d={d})");
            }
        }
    }
}

#[test]
fn symplectic_gradient_identity_against_finite_differences() {
    let prob = builtin_problem("gradient_flow_kdv_toy").unwrap();
    let tab = builtin_tableau("dopri8").unwrap();
    let ctrl = StepController::fixed(0.1);
    let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
    let g = grad_symplectic_adjoint(&p, &EngineOptions::default()).unwrap();
    let fd = finite_difference(&p);
    assert!(relative_linf(&g.flat_gradient(), &fd) < 1e-5);
}

#[test]
fn continuous_adjoint_linear_oracle() {
    let prob = builtin_problem("linear_nd").unwrap();
    let oracle = prob.oracle.as_ref().unwrap();
    let tab = builtin_tableau("dopri5").unwrap();
    let ctrl = StepController::adaptive(1e-8, 1e-6);
    let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
    let g = grad_adjoint_continuous(&p, &ctrl).unwrap();
    let err = relative_linf(&g.grad_x0, &oracle.grad_x0);
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn continuous_adjoint_is_exact_for_zero_field() {
    let tab = builtin_tableau("dopri5").unwrap();
    let ctrl = StepController::adaptive(1e-6, 1e-6);
    let loss = LossSpec::terminal(Terminal::Linear(vec![2.0, -1.0]));
    let a = [0.0; 4];
    let p = GradientProblem {
        dynamics: &Linear { dim: 2 },
        x0: &[1.0, 3.0],
        theta: &a,
        t0: 0.0,
        t1: 1.0,
        tableau: &tab,
        controller: &ctrl,
        loss: &loss,
    };
    let g = compute_gradient(Engine::Adjoint, &p, &traced()).unwrap();
    assert_eq!(g.grad_x0, vec![2.0, -1.0]);
    for lam in g.adjoint_trace.unwrap() {
        assert_eq!(lam, vec![2.0, -1.0]);
    }
}

#[test]
fn continuous_adjoint_converges_as_tolerance_tightens() {
    let prob = builtin_problem("mlp_node").unwrap();
    let tab = builtin_tableau("dopri5").unwrap();
    let tight = StepController::adaptive(1e-12, 1e-12);
    let reference = grad_backprop_full(&prob.gradient_problem(&prob.theta0, &tab, &tight)).unwrap().flat_gradient();
    let errs: Vec<f64> = [1e-4, 1e-6, 1e-8, 1e-10]
        .iter()
        .map(|&tol| {
            let ctrl = StepController::adaptive(tol, tol);
            let g = compute_gradient(Engine::Adjoint, &prob.gradient_problem(&prob.theta0, &tab, &ctrl), &EngineOptions::default())
                .unwrap();
            relative_linf(&g.flat_gradient(), &reference)
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn dopri5_zero_weight_stage_matters() {
    // The second stage of dopri5 has zero weight but feeds later stages, so
    // the h-weighted branch carries a nonzero share of the gradient.
    let prob = builtin_problem("mlp_node").unwrap();
    let tab = builtin_tableau("dopri5").unwrap();
    let ctrl = StepController::adaptive(1e-8, 1e-6);
    let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
    let exact = grad_backprop_full(&p).unwrap().flat_gradient();
    let g = grad_symplectic_adjoint(&p, &EngineOptions::default()).unwrap().flat_gradient();
    assert!(relative_linf(&g, &exact) <= 1e-10);

    let mut broken = tab.clone();
    broken.a[2][1] = 0.0;
    broken.a[2][0] = broken.c[2];
    let ctrl = StepController::replay_steps(&grad_backprop_full(&p).unwrap().step_sizes);
    let p2 = GradientProblem { tableau: &broken, controller: &ctrl, ..p };
    let reference = grad_backprop_full(&p2).unwrap().flat_gradient();
    assert!(relative_linf(&reference, &exact) > 1e-10);
}

#[test]
fn running_cost_of_zero_field() {
    // x' = 0, ℓ(x) = x, so ∫ℓ = x0 (t1 - t0) and the gradient is t1 - t0.
    let a = [0.0];
    for tname in BUILTIN_TABLEAUS {
        let tab = builtin_tableau(tname).unwrap();
        let ctrl = StepController::fixed(0.25);
        let loss = LossSpec::terminal(Terminal::Constant(0.0)).with_running(Running::Linear(vec![1.0]));
        let p = GradientProblem {
            dynamics: &Linear { dim: 1 },
            x0: &[0.7],
            theta: &a,
            t0: 0.0,
            t1: 1.0,
            tableau: &tab,
            controller: &ctrl,
            loss: &loss,
        };
        let g = grad_with_running_cost(&p).unwrap();
        assert!((g.grad_x0[0] - 1.0).abs() < 1e-15, "{tname}: {}", g.grad_x0[0]);
        assert!((g.loss - 0.7).abs() < 1e-15);
    }
}

#[test]
fn running_cost_absent_matches_plain_symplectic() {
    let prob = builtin_problem("linear_nd").unwrap();
    let tab = builtin_tableau("bosh3").unwrap();
    let ctrl = StepController::fixed(0.05);
    let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
    let a = grad_with_running_cost(&p).unwrap();
    let b = grad_symplectic_adjoint(&p, &EngineOptions::default()).unwrap();
    assert_eq!(a.flat_gradient(), b.flat_gradient());
}

#[test]
fn memory_ordering_and_independence() {
    let prob = builtin_problem("mlp_node").unwrap();
    let tab = builtin_tableau("dopri5").unwrap();
    let mut tape_part = Vec::new();
    for n in [16, 32] {
        let ctrl = StepController::fixed_steps(n, prob.t0, prob.t1);
        let p = prob.gradient_problem(&prob.theta0, &tab, &ctrl);
        let peak = |e: Engine| compute_gradient(e, &p, &EngineOptions::default()).unwrap().accounting.peak_retained_scalars;
        let (sym, ckpt, base, full) =
            (peak(Engine::Symplectic), peak(Engine::StepCheckpoint), peak(Engine::Baseline), peak(Engine::BackpropFull));
        assert!(sym < ckpt && ckpt < full, "{sym} {ckpt} {full}");
        assert_eq!(base, full + prob.x0.len());
        let d = prob.x0.len();
        tape_part.push(sym - (n + 1) * d);
    }
    assert_eq!(tape_part[0], tape_part[1]);
}

#[test]
fn engines_accept_problems_of_any_dimension() {
    let d: &dyn Dynamics = &Decay { dim: 3 };
    assert_eq!(d.state_dim(), 3);
    let tab = builtin_tableau("heun_euler").unwrap();
    let ctrl = StepController::fixed(0.1);
    let loss = LossSpec::terminal(Terminal::HalfSquaredNorm);
    let bad = GradientProblem { dynamics: d, x0: &[1.0], theta: &[0.1], t0: 0.0, t1: 1.0, tableau: &tab, controller: &ctrl, loss: &loss };
    let err = grad_backprop_full(&bad).unwrap_err();
    assert_eq!(err.kind(), "ShapeError");
}
