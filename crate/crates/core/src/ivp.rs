//! Explicit Runge-Kutta integration with fixed, adaptive or prescribed steps.
//!
//! The stepping logic is written once over [`StageBackend`] and shared by
//! plain evaluation and tape recording, so a recorded integration takes the
//! same accept/reject decisions and produces bitwise the same values as an
//! unrecorded one.

use nalgebra::DMatrix;

use crate::dynamics::{Bound, Dynamics};
use crate::error::{check_len, Error, Result};
use crate::kernels;
use crate::tableau::ButcherTableau;

/// A field `dx/dt = f(x, t)` without exposed parameters.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64) -> Vec<f64>;
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], f64) -> Vec<f64>> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64], f64) -> Vec<f64>> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.f)(x, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepMode {
    /// Constant step magnitude; the sign follows the integration direction
    /// and the last step is shortened to land on `t1`.
    Fixed { h: f64 },
    /// Embedded error control with the RMS norm of
    /// `err_i / (atol + rtol·max(|x_i|, |x_next_i|))`.
    Adaptive { atol: f64, rtol: f64, h_init: Option<f64> },
    /// Replays an explicit signed step sequence, e.g. a recorded grid.
    Prescribed { steps: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepController {
    pub mode: StepMode,
    pub safety: f64,
    pub shrink_limit: f64,
    pub grow_limit: f64,
    /// Upper bound on attempted steps, accepted or not.
    pub max_steps: usize,
}

impl StepController {
    fn with_mode(mode: StepMode) -> Self {
        StepController { mode, safety: 0.9, shrink_limit: 0.2, grow_limit: 10.0, max_steps: 1_000_000 }
    }

    pub fn fixed(h: f64) -> Self {
        Self::with_mode(StepMode::Fixed { h })
    }

    /// `n` equal steps across `[t0, t1]`.
    pub fn fixed_steps(n: usize, t0: f64, t1: f64) -> Self {
        Self::prescribed(vec![(t1 - t0) / n as f64; n])
    }

    pub fn adaptive(atol: f64, rtol: f64) -> Self {
        Self::with_mode(StepMode::Adaptive { atol, rtol, h_init: None })
    }

    pub fn prescribed(steps: Vec<f64>) -> Self {
        Self::with_mode(StepMode::Prescribed { steps })
    }

    /// Replays the accepted steps of `traj`.
    pub fn replay(traj: &Trajectory) -> Self {
        Self::prescribed(traj.step_sizes())
    }

    pub fn replay_steps(steps: &[f64]) -> Self {
        Self::prescribed(steps.to_vec())
    }

    pub fn with_h_init(mut self, h: f64) -> Self {
        if let StepMode::Adaptive { h_init, .. } = &mut self.mode {
            *h_init = Some(h);
        }
        self
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self.mode, StepMode::Adaptive { .. })
    }

    fn validate(&self, tab: &ButcherTableau) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        match &self.mode {
            StepMode::Fixed { h } if !(h.is_finite() && *h != 0.0) => bad("fixed step must be finite and nonzero"),
            StepMode::Adaptive { atol, rtol, h_init } => {
                if !(*atol > 0.0 && *rtol > 0.0 && atol.is_finite() && rtol.is_finite()) {
                    return bad("atol and rtol must be positive");
                }
                if matches!(h_init, Some(h) if !(h.is_finite() && *h != 0.0)) {
                    return bad("initial step must be finite and nonzero");
                }
                if tab.b_err.is_none() {
                    return bad(&format!("tableau `{}` has no embedded error estimate", tab.name));
                }
                Ok(())
            }
            StepMode::Prescribed { steps } if steps.is_empty() => bad("empty step sequence"),
            _ if !(self.safety > 0.0 && self.shrink_limit > 0.0 && self.grow_limit >= 1.0) => {
                bad("invalid controller limits")
            }
            _ => Ok(()),
        }
    }
}

/// One accepted step: it starts at `t` from state `x` and has size `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub h: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Checkpoints `x_0 … x_{N-1}` with their step data.
    pub records: Vec<StepRecord>,
    pub x_final: Vec<f64>,
    pub t_final: f64,
    /// Every evaluation of the field, rejected steps included.
    pub nfe: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.records.len()
    }

    pub fn step_sizes(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.h).collect()
    }
}

/// Output of a single Runge-Kutta step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepData {
    pub x_next: Vec<f64>,
    /// `(X_i, k_i)` for every stage.
    pub stages: Vec<(Vec<f64>, Vec<f64>)>,
    /// `h Σ (b_i - b̂_i) k_i` when the tableau carries embedded weights.
    pub err_estimate: Option<Vec<f64>>,
}

/// Takes one step of size `h` from `(t, x)`, evaluating every stage.
pub fn rk_step(f: &dyn VectorField, t: f64, h: f64, x: &[f64], tab: &ButcherTableau) -> Result<StepData> {
    check_len("state", x.len(), f.dim())?;
    if !(h.is_finite() && h != 0.0) {
        return Err(Error::InvalidArgument("step must be finite and nonzero".into()));
    }
    let mut be = PlainBackend { f };
    let st = step_generic(&mut be, tab, t, h, &x.to_vec(), None, tab.stages(), true)?;
    Ok(StepData { x_next: st.x_next, stages: st.stages, err_estimate: st.err })
}

/// Integrates from `t0` to `t1`, keeping every accepted `x_n` as a checkpoint.
pub fn integrate(
    f: &dyn VectorField,
    x0: &[f64],
    t0: f64,
    t1: f64,
    tab: &ButcherTableau,
    ctrl: &StepController,
) -> Result<Trajectory> {
    check_len("initial state", x0.len(), f.dim())?;
    let mut be = PlainBackend { f };
    let g = integrate_generic(&mut be, x0.to_vec(), t0, t1, tab, ctrl, true)?;
    Ok(g.into_trajectory())
}

/// RMS of `err_i / (atol + rtol·max(|x_i|, |x_next_i|))`.
pub fn error_norm(err: &[f64], x: &[f64], x_next: &[f64], atol: f64, rtol: f64) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let sum: f64 = err
        .iter()
        .zip(x.iter().zip(x_next))
        .map(|(e, (a, b))| {
            let w = e / (atol + rtol * a.abs().max(b.abs()));
            w * w
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

/// Jacobian `∂f/∂x` assembled row by row from unit-cotangent VJPs.
pub fn jacobian(f: &dyn Dynamics, x: &[f64], t: f64, theta: &[f64]) -> DMatrix<f64> {
    let d = f.state_dim();
    let mut jac = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for r in 0..d {
        e[r] = 1.0;
        let row = f.vjp(x, t, theta, &e).gx;
        for (c, v) in row.into_iter().enumerate() {
            jac[(r, c)] = v;
        }
        e[r] = 0.0;
    }
    jac
}

/// The variational system `δ_n = ∂x_n/∂x_0` discretized by the same method.
#[derive(Debug, Clone)]
pub struct Variational {
    pub trajectory: Trajectory,
    /// `δ_0 = I, δ_1, …, δ_N`.
    pub deltas: Vec<DMatrix<f64>>,
}

impl Variational {
    pub fn delta_final(&self) -> &DMatrix<f64> {
        self.deltas.last().expect("at least the identity")
    }
}

/// Co-integrates the state and its sensitivity to `x0` on the step sequence
/// of `reference`.
pub fn integrate_variational(
    f: &dyn Dynamics,
    theta: &[f64],
    x0: &[f64],
    t0: f64,
    t1: f64,
    tab: &ButcherTableau,
    reference: &Trajectory,
) -> Result<Variational> {
    let field = Bound::new(f, theta);
    let trajectory = integrate(&field, x0, t0, t1, tab, &StepController::replay(reference))?;
    let d = f.state_dim();
    let s = tab.active_stages();
    let mut deltas = Vec::with_capacity(trajectory.n_steps() + 1);
    deltas.push(DMatrix::identity(d, d));
    let mut be = PlainBackend { f: &field };
    for rec in &trajectory.records {
        let st = step_generic(&mut be, tab, rec.t, rec.h, &rec.x, None, s, false)?;
        let delta = deltas.last().expect("seeded with identity").clone();
        let mut ds: Vec<DMatrix<f64>> = Vec::with_capacity(s);
        for i in 0..s {
            let mut big_delta = delta.clone();
            for (j, dj) in ds.iter().enumerate() {
                let a = tab.a[i][j];
                if a != 0.0 {
                    big_delta += dj * (rec.h * a);
                }
            }
            let jac = jacobian(f, &st.stages[i].0, rec.t + tab.c[i] * rec.h, theta);
            ds.push(jac * big_delta);
        }
        let mut next = delta;
        for (i, di) in ds.iter().enumerate() {
            if tab.b[i] != 0.0 {
                next += di * (rec.h * tab.b[i]);
            }
        }
        deltas.push(next);
    }
    Ok(Variational { trajectory, deltas })
}

/// Storage and arithmetic for stage values.
pub(crate) trait StageBackend {
    type V: Clone;
    type Mark: Copy;

    fn value<'s>(&'s self, v: &'s Self::V) -> &'s [f64];
    fn eval(&mut self, x: &Self::V, t: f64) -> Result<Self::V>;
    fn combine(&mut self, base: &Self::V, h: f64, terms: &[(f64, &Self::V)]) -> Self::V;
    fn mark(&self) -> Self::Mark;
    fn rollback(&mut self, mark: Self::Mark);
}

pub(crate) struct PlainBackend<'f> {
    pub f: &'f dyn VectorField,
}

impl StageBackend for PlainBackend<'_> {
    type V = Vec<f64>;
    type Mark = ();

    fn value<'s>(&'s self, v: &'s Vec<f64>) -> &'s [f64] {
        v
    }

    fn eval(&mut self, x: &Vec<f64>, t: f64) -> Result<Vec<f64>> {
        let k = self.f.eval(x, t);
        check_len("vector field output", k.len(), self.f.dim())?;
        Ok(k)
    }

    fn combine(&mut self, base: &Vec<f64>, h: f64, terms: &[(f64, &Vec<f64>)]) -> Vec<f64> {
        kernels::combine(base, h, terms.iter().map(|(c, v)| (*c, v.as_slice())))
    }

    fn mark(&self) {}

    fn rollback(&mut self, _mark: ()) {}
}

pub(crate) struct GenericStep<V> {
    pub x_next: V,
    pub stages: Vec<(V, V)>,
    pub err: Option<Vec<f64>>,
    pub evals: usize,
}

/// Evaluates the first `n_stages` stages from `x`. `k_first`, when given,
/// is reused as `k_1` (FSAL). The FSAL stage state aliases `x_next`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_generic<B: StageBackend>(
    be: &mut B,
    tab: &ButcherTableau,
    t: f64,
    h: f64,
    x: &B::V,
    k_first: Option<B::V>,
    n_stages: usize,
    with_error: bool,
) -> Result<GenericStep<B::V>> {
    let s = tab.stages();
    debug_assert!(n_stages >= tab.active_stages() && n_stages <= s);
    let mut stages: Vec<(B::V, B::V)> = Vec::with_capacity(n_stages);
    let mut x_next: Option<B::V> = None;
    let mut k_first = k_first;
    let mut evals = 0;

    let update = |be: &mut B, stages: &[(B::V, B::V)]| {
        let terms: Vec<(f64, &B::V)> =
            stages.iter().enumerate().filter(|(j, _)| tab.b[*j] != 0.0).map(|(j, st)| (tab.b[j], &st.1)).collect();
        be.combine(x, h, &terms)
    };

    for i in 0..n_stages {
        let xi = if i == 0 {
            x.clone()
        } else if tab.fsal && i == s - 1 {
            let xn = update(be, &stages);
            x_next = Some(xn.clone());
            xn
        } else {
            let terms: Vec<(f64, &B::V)> = (0..i).filter(|&j| tab.a[i][j] != 0.0).map(|j| (tab.a[i][j], &stages[j].1)).collect();
            be.combine(x, h, &terms)
        };
        let ti = t + tab.c[i] * h;
        let ki = match (i, k_first.take()) {
            (0, Some(k)) => k,
            _ => {
                evals += 1;
                let k = be.eval(&xi, ti)?;
                if be.value(&k).iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteDynamics { stage: i + 1, t: ti });
                }
                k
            }
        };
        stages.push((xi, ki));
    }

    let x_next = match x_next {
        Some(v) => v,
        None => update(be, &stages),
    };

    let err = match (&tab.b_err, with_error && n_stages == s) {
        (Some(e), true) => {
            let zero = vec![0.0; be.value(x).len()];
            Some(kernels::combine(
                &zero,
                h,
                stages.iter().enumerate().map(|(j, st)| (tab.b[j] - e[j], be.value(&st.1))),
            ))
        }
        _ => None,
    };

    Ok(GenericStep { x_next, stages, err, evals })
}

pub(crate) struct GenericTrajectory<V> {
    /// `(t_n, h_n)` of every accepted step.
    pub grid: Vec<(f64, f64)>,
    /// `x_n` per accepted step, when retained.
    pub states: Vec<V>,
    pub x_final: V,
    pub t_final: f64,
    pub nfe: usize,
    pub rejected: usize,
}

impl GenericTrajectory<Vec<f64>> {
    pub fn into_trajectory(self) -> Trajectory {
        let records = self
            .grid
            .iter()
            .zip(self.states)
            .map(|(&(t, h), x)| StepRecord { t, h, x })
            .collect();
        Trajectory { records, x_final: self.x_final, t_final: self.t_final, nfe: self.nfe, rejected: self.rejected }
    }
}

/// Relative slack when deciding that a fixed step reaches `t1`.
const FINAL_STEP_SLACK: f64 = 1e-10;
/// Relative tolerance on the sum of a prescribed step sequence.
const PRESCRIBED_SPAN_TOL: f64 = 1e-9;

pub(crate) fn integrate_generic<B: StageBackend>(
    be: &mut B,
    x0: B::V,
    t0: f64,
    t1: f64,
    tab: &ButcherTableau,
    ctrl: &StepController,
    retain: bool,
) -> Result<GenericTrajectory<B::V>> {
    if !(t0.is_finite() && t1.is_finite()) || t0 == t1 {
        return Err(Error::InvalidArgument(format!("empty or non-finite time span [{t0}, {t1}]")));
    }
    if be.value(&x0).iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state is not finite".into()));
    }
    ctrl.validate(tab)?;
    let span = t1 - t0;
    let dir = span.signum();
    let s = tab.stages();

    let mut out = GenericTrajectory {
        grid: Vec::new(),
        states: Vec::new(),
        x_final: x0.clone(),
        t_final: t0,
        nfe: 0,
        rejected: 0,
    };
    let mut x = x0;
    let mut t = t0;
    let mut k_next: Option<B::V> = None;

    let accept = |out: &mut GenericTrajectory<B::V>, x: &mut B::V, t: &mut f64, h: f64, st: GenericStep<B::V>, last: bool| {
        out.grid.push((*t, h));
        let prev = std::mem::replace(x, st.x_next);
        if retain {
            out.states.push(prev);
        }
        *t = if last { t1 } else { *t + h };
        st.stages.into_iter().last().map(|(_, k)| k)
    };

    match &ctrl.mode {
        StepMode::Prescribed { steps } => {
            let total: f64 = steps.iter().sum();
            if steps.iter().any(|h| !(h.is_finite() && *h != 0.0 && h.signum() == dir))
                || (total - span).abs() > PRESCRIBED_SPAN_TOL * span.abs()
            {
                return Err(Error::InvalidArgument("prescribed steps do not cover the time span".into()));
            }
            for (n, &h) in steps.iter().enumerate() {
                let st = step_generic(be, tab, t, h, &x, k_next.clone(), s, false)?;
                out.nfe += st.evals;
                let k_last = accept(&mut out, &mut x, &mut t, h, st, n + 1 == steps.len());
                k_next = if tab.fsal { k_last } else { None };
            }
        }
        StepMode::Fixed { h } => {
            let h = h.abs() * dir;
            loop {
                if out.grid.len() >= ctrl.max_steps {
                    return Err(Error::TooManySteps(ctrl.max_steps));
                }
                let remaining = t1 - t;
                let last = remaining.abs() <= h.abs() * (1.0 + FINAL_STEP_SLACK);
                let h_step = if last { remaining } else { h };
                let st = step_generic(be, tab, t, h_step, &x, k_next.clone(), s, false)?;
                out.nfe += st.evals;
                let k_last = accept(&mut out, &mut x, &mut t, h_step, st, last);
                k_next = if tab.fsal { k_last } else { None };
                if last {
                    break;
                }
            }
        }
        StepMode::Adaptive { atol, rtol, h_init } => {
            let p_hat = tab.embedded_order.unwrap_or(tab.order.saturating_sub(1)) as f64;
            let exponent = -1.0 / (p_hat + 1.0);
            let mut h = h_init.unwrap_or(span / 100.0).abs() * dir;
            loop {
                if out.grid.len() + out.rejected >= ctrl.max_steps {
                    return Err(Error::TooManySteps(ctrl.max_steps));
                }
                if h.abs() < 1e-14 * span.abs() {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
                let remaining = t1 - t;
                let last = h.abs() >= remaining.abs();
                let h_step = if last { remaining } else { h };
                let mark = be.mark();
                let st = step_generic(be, tab, t, h_step, &x, k_next.clone(), s, true)?;
                out.nfe += st.evals;
                let err = st.err.as_deref().expect("adaptive mode requires embedded weights");
                let norm = error_norm(err, be.value(&x), be.value(&st.x_next), *atol, *rtol);
                let factor = if norm == 0.0 {
                    ctrl.grow_limit
                } else if norm.is_finite() {
                    (ctrl.safety * norm.powf(exponent)).clamp(ctrl.shrink_limit, ctrl.grow_limit)
                } else {
                    ctrl.shrink_limit
                };
                if norm.is_nan() || norm > 1.0 {
                    out.rejected += 1;
                    drop(st);
                    be.rollback(mark);
                    h = h_step * factor.min(1.0);
                    continue;
                }
                let k_last = accept(&mut out, &mut x, &mut t, h_step, st, last);
                k_next = if tab.fsal { k_last } else { None };
                if last {
                    break;
                }
                h = h_step * factor;
            }
        }
    }

    out.x_final = x;
    out.t_final = t1;
    Ok(out)
}
