use proptest::prelude::*;

use symplectic_adjoint::dynamics::params_io::ParamFile;
use symplectic_adjoint::dynamics::{analytic_dynamics, tape_eval, vjp_fd_error, Dynamics, MlpDynamics};
use symplectic_adjoint::engines::{
    grad_backprop_full, grad_symplectic_adjoint, EngineOptions, GradientProblem, LossSpec, Terminal,
};
use symplectic_adjoint::ivp::StepController;
use symplectic_adjoint::tableau::{builtin_tableau, BUILTIN_TABLEAUS};
use symplectic_adjoint::{relative_linf, MemoryMeter};

fn vec_of(len: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, len)
}

fn dynamics_under_test(kind: usize, seed: u64) -> (Box<dyn Dynamics>, Vec<f64>) {
    match kind {
        0 => {
            let net = MlpDynamics::new(&[3, 6, 3]).unwrap();
            let theta = net.init_params(seed);
            (Box::new(net), theta)
        }
        1 => (analytic_dynamics("linear", 3).unwrap(), vec![0.3, -0.2, 0.1, 0.5, -0.4, 0.2, -0.1, 0.6, -0.3]),
        2 => (analytic_dynamics("decay", 3).unwrap(), vec![-0.4]),
        _ => (analytic_dynamics("gradient_flow", 3).unwrap(), vec![0.2]),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tape_replays_plain_evaluation_bitwise(seed in 0u64..1000, x in vec_of(3, 2.0), t in -1.0f64..1.0, kind in 0usize..4) {
        let (f, theta) = dynamics_under_test(kind, seed);
        let rec = tape_eval(f.as_ref(), &x, t, &theta, None).unwrap();
        prop_assert_eq!(rec.value(), &f.eval(&x, t, &theta)[..]);
    }

    #[test]
    fn vjp_agrees_with_finite_differences(
        seed in 0u64..1000,
        x in vec_of(3, 1.5),
        lambda in vec_of(3, 1.0),
        t in 0.0f64..1.0,
        kind in 0usize..4,
    ) {
        let (f, theta) = dynamics_under_test(kind, seed);
        prop_assert!(vjp_fd_error(f.as_ref(), &x, t, &theta, &lambda, 1e-6) <= 1e-6);
        let mut rec = tape_eval(f.as_ref(), &x, t, &theta, None).unwrap();
        let taped = rec.vjp(&lambda).unwrap();
        let direct = f.vjp(&x, t, &theta, &lambda);
        prop_assert!(relative_linf(&taped.gx, &direct.gx) <= 1e-12);
        prop_assert!(relative_linf(&taped.gtheta, &direct.gtheta) <= 1e-12);
    }

    #[test]
    fn tape_releases_its_scalars(seed in 0u64..1000, x in vec_of(3, 1.0), consume in any::<bool>()) {
        let (f, theta) = dynamics_under_test(0, seed);
        let meter = MemoryMeter::new();
        {
            let mut rec = tape_eval(f.as_ref(), &x, 0.0, &theta, Some(meter.clone())).unwrap();
            prop_assert!(meter.live() > 0);
            prop_assert_eq!(meter.live(), rec.live_scalar_count());
            if consume {
                rec.vjp(&[1.0, 0.0, 0.0]).unwrap();
            }
        }
        prop_assert_eq!(meter.live(), 0);
    }

    #[test]
    fn symplectic_is_exact_on_random_grids(
        seed in 0u64..1000,
        weights in prop::collection::vec(0.05f64..1.0, 1..12),
        tab_index in 0usize..BUILTIN_TABLEAUS.len(),
    ) {
        let net = MlpDynamics::new(&[3, 5, 3]).unwrap();
        let theta = net.init_params(seed);
        let total: f64 = weights.iter().sum();
        let steps: Vec<f64> = weights.iter().map(|w| 2.0 * w / total).collect();
        let ctrl = StepController::prescribed(steps);
        let tab = builtin_tableau(BUILTIN_TABLEAUS[tab_index]).unwrap();
        let loss = LossSpec::terminal(Terminal::HalfSquaredNorm);
        let p = GradientProblem {
            dynamics: &net,
            x0: &[0.4, -0.7, 0.2],
            theta: &theta,
            t0: 0.0,
            t1: 2.0,
            tableau: &tab,
            controller: &ctrl,
            loss: &loss,
        };
        let a = grad_symplectic_adjoint(&p, &EngineOptions::default()).unwrap();
        let b = grad_backprop_full(&p).unwrap();
        prop_assert!(relative_linf(&a.flat_gradient(), &b.flat_gradient()) <= 1e-10);
        prop_assert_eq!(a.loss, b.loss);
    }

    #[test]
    fn parameter_files_round_trip(params in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..40), d in 1usize..6) {
        let file = ParamFile { state_dim: d, widths: vec![d, 7, d], params };
        let mut bytes = Vec::new();
        file.write_to(&mut bytes).unwrap();
        prop_assert_eq!(ParamFile::read_from(&bytes[..]).unwrap(), file.clone());
        if !bytes.is_empty() {
            bytes.pop();
            prop_assert!(ParamFile::read_from(&bytes[..]).is_err());
        }
    }
}
