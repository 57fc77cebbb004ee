//! Explicit low-storage Runge-Kutta time integration.

use std::fmt;

use crate::discretization::{Discretization, SolutionField};
use crate::error::{Error, Result};

/// Vector-space operations needed by the integrator.
pub trait RkState: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
    fn all_finite(&self) -> bool;
}

impl RkState for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        for (y, xv) in self.iter_mut().zip(x) {
            *y += a * xv;
        }
    }

    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|y| *y *= a);
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|y| y.is_finite())
    }
}

impl<const D: usize> RkState for SolutionField<D> {
    fn zeros_like(&self) -> Self {
        SolutionField::zeros(self.n_elements(), self.nodes_per_element(), self.layout())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        SolutionField::axpy(self, a, x);
    }

    fn scale(&mut self, a: f64) {
        self.data_mut().iter_mut().for_each(|y| *y *= a);
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// Five-stage fourth-order low-storage (2N) scheme of Carpenter and Kennedy.
pub const CK54_A: [f64; 5] = [
    0.0,
    -567301805773.0 / 1357537059087.0,
    -2404267990393.0 / 2016746695238.0,
    -3550918686646.0 / 2091501179385.0,
    -1275806237668.0 / 842570457699.0,
];
pub const CK54_B: [f64; 5] = [
    1432997174477.0 / 9575080441755.0,
    5161836677717.0 / 13612068292357.0,
    1720146321549.0 / 2090206949498.0,
    3134564353537.0 / 4481467310338.0,
    2277821191437.0 / 14882151754819.0,
];
pub const CK54_C: [f64; 5] = [
    0.0,
    1432997174477.0 / 9575080441755.0,
    2526269341429.0 / 6820363962896.0,
    2006345519317.0 / 3224310063776.0,
    2802321613138.0 / 2924317926251.0,
];

/// Tolerance of the order-condition check at construction.
pub const ORDER_CONDITION_TOL: f64 = 1e-14;

/// A low-storage Runge-Kutta method in 2N form:
/// `k = a_i k + dt f(u, t + c_i dt)`, `u += b_i k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RkMethod {
    pub name: &'static str,
    pub a: [f64; 5],
    pub b: [f64; 5],
    pub c: [f64; 5],
}

/// Butcher form `(A, b, c)` of a low-storage method.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl RkMethod {
    pub const STAGES: usize = 5;

    pub fn carpenter_kennedy_5_4() -> Self {
        let m = Self { name: "ck54", a: CK54_A, b: CK54_B, c: CK54_C };
        debug_assert!(m.order_condition_residual() < ORDER_CONDITION_TOL);
        m
    }

    /// Builds a method from 2N coefficients, checking the fourth-order conditions.
    pub fn new(name: &'static str, a: [f64; 5], b: [f64; 5], c: [f64; 5]) -> Result<Self> {
        let m = Self { name, a, b, c };
        let r = m.order_condition_residual();
        if r < ORDER_CONDITION_TOL && a[0] == 0.0 {
            Ok(m)
        } else {
            Err(Error::Parameter {
                name: "rk_method",
                reason: format!("order conditions violated by {r:e}"),
            })
        }
    }

    pub fn butcher(&self) -> ButcherTableau {
        let s = Self::STAGES;
        // k_m = sum_j kappa[m][j] dt f_j
        let mut kappa = vec![vec![0.0; s]; s];
        for m in 0..s {
            kappa[m][m] = 1.0;
            for j in 0..m {
                kappa[m][j] = self.a[m] * kappa[m - 1][j];
            }
        }
        let mut a = vec![vec![0.0; s]; s];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate().take(i) {
                *x = (j..i).map(|m| self.b[m] * kappa[m][j]).sum();
            }
        }
        let b = (0..s).map(|j| (j..s).map(|m| self.b[m] * kappa[m][j]).sum()).collect();
        let c = a.iter().map(|row| row.iter().sum()).collect();
        ButcherTableau { a, b, c }
    }

    /// Largest violation of the conditions up to order four, including `c = A 1`.
    pub fn order_condition_residual(&self) -> f64 {
        let t = self.butcher();
        let s = Self::STAGES;
        let (a, b, c) = (&t.a, &t.b, &t.c);
        let mv = |x: &[f64]| -> Vec<f64> { (0..s).map(|i| (0..s).map(|j| a[i][j] * x[j]).sum()).collect() };
        let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(p, q)| p * q).sum() };
        let c2: Vec<f64> = c.iter().map(|x| x * x).collect();
        let c3: Vec<f64> = c.iter().map(|x| x * x * x).collect();
        let ac = mv(c);
        let cac: Vec<f64> = c.iter().zip(&ac).map(|(x, y)| x * y).collect();
        let ones = vec![1.0; s];
        let conditions = [
            dot(b, &ones) - 1.0,
            dot(b, c) - 0.5,
            dot(b, &c2) - 1.0 / 3.0,
            dot(b, &ac) - 1.0 / 6.0,
            dot(b, &c3) - 0.25,
            dot(b, &cac) - 0.125,
            dot(b, &mv(&c2)) - 1.0 / 12.0,
            dot(b, &mv(&ac)) - 1.0 / 24.0,
        ];
        let consistency = c.iter().zip(&self.c).map(|(x, y)| (x - y).abs());
        conditions.iter().map(|x| x.abs()).chain(consistency).fold(0.0, f64::max)
    }
}

impl Default for RkMethod {
    fn default() -> Self {
        Self::carpenter_kennedy_5_4()
    }
}

/// CFL-based step size control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    cfl: f64,
}

impl StepController {
    pub fn new(cfl: f64) -> Result<Self> {
        if cfl > 0.0 && cfl.is_finite() {
            Ok(Self { cfl })
        } else {
            Err(Error::config("cfl", format!("must be positive, got {cfl}")))
        }
    }

    pub fn cfl(&self) -> f64 {
        self.cfl
    }
}

impl Default for StepController {
    fn default() -> Self {
        Self { cfl: 0.5 }
    }
}

/// `cfl * min J^{1/d} / (λ_max (2p + 1))` over all nodes.
pub fn stable_dt<const D: usize>(disc: &Discretization<D>, u: &SolutionField<D>, controller: &StepController) -> Result<f64> {
    let p = disc.degree() as f64;
    Ok(controller.cfl * disc.min_length_over_speed(u)? / (2.0 * p + 1.0))
}

/// Scratch buffers of [`rk_step`].
#[derive(Debug, Clone)]
pub struct RkWork<S> {
    du: S,
    k: S,
}

impl<S: RkState> RkWork<S> {
    pub fn new(like: &S) -> Self {
        Self { du: like.zeros_like(), k: like.zeros_like() }
    }
}

/// Advances `u` by one step in place with exactly five calls of `rhs`.
///
/// A non-finite state after a stage gives [`Error::Divergence`] with step 0;
/// [`integrate`] fills in the step number.
pub fn rk_step<S: RkState>(
    method: &RkMethod,
    u: &mut S,
    t: f64,
    dt: f64,
    rhs: &mut impl FnMut(&S, f64, &mut S) -> Result<()>,
    work: &mut RkWork<S>,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter { name: "dt", reason: format!("must be positive, got {dt}") });
    }
    for stage in 0..RkMethod::STAGES {
        rhs(u, t + method.c[stage] * dt, &mut work.du)?;
        if stage == 0 {
            std::mem::swap(&mut work.k, &mut work.du);
            work.k.scale(dt);
        } else {
            work.k.scale(method.a[stage]);
            work.k.axpy(dt, &work.du);
        }
        u.axpy(method.b[stage], &work.k);
        if !u.all_finite() {
            return Err(Error::Divergence { step: 0, stage, time: t });
        }
    }
    Ok(())
}

/// A semidiscrete system `du/dt = f(u, t)` with a stable step estimate.
pub trait Semidiscretization {
    type State: RkState;
    fn rhs(&self, u: &Self::State, t: f64, du: &mut Self::State) -> Result<()>;
    fn stable_dt(&self, u: &Self::State, controller: &StepController) -> Result<f64>;
}

impl<const D: usize> Semidiscretization for Discretization<D> {
    type State = SolutionField<D>;

    fn rhs(&self, u: &Self::State, _t: f64, du: &mut Self::State) -> Result<()> {
        Discretization::rhs(self, u, du)
    }

    fn stable_dt(&self, u: &Self::State, controller: &StepController) -> Result<f64> {
        stable_dt(self, u, controller)
    }
}

/// Linear test system `du/dt = A u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOde {
    /// Row-major square matrix.
    pub a: Vec<f64>,
    pub n: usize,
}

impl Semidiscretization for LinearOde {
    type State = Vec<f64>;

    fn rhs(&self, u: &Vec<f64>, _t: f64, du: &mut Vec<f64>) -> Result<()> {
        for (i, d) in du.iter_mut().enumerate() {
            *d = self.a[i * self.n..(i + 1) * self.n].iter().zip(u).map(|(x, y)| x * y).sum();
        }
        Ok(())
    }

    fn stable_dt(&self, _u: &Vec<f64>, controller: &StepController) -> Result<f64> {
        let norm = self.a.chunks(self.n).map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        Ok(controller.cfl / norm.max(f64::MIN_POSITIVE))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopCondition {
    Steps(usize),
    EndTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// Recomputed from the state before every step.
    Cfl(StepController),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateConfig {
    pub stop: StopCondition,
    pub step_size: StepSize,
    pub method: RkMethod,
}

impl IntegrateConfig {
    pub fn new(stop: StopCondition, step_size: StepSize) -> Self {
        Self { stop, step_size, method: RkMethod::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match self.stop {
            StopCondition::EndTime(t) if !t.is_finite() => return Err(Error::config("t_end", format!("must be finite, got {t}"))),
            _ => {}
        }
        match self.step_size {
            StepSize::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => Err(Error::config("dt", format!("must be positive, got {dt}"))),
            StepSize::Cfl(c) => StepController::new(c.cfl).map(|_| ()),
            _ => Ok(()),
        }
    }
}

/// Passed to the per-step callback after each completed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Number of completed steps.
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone)]
pub struct Integration<S> {
    pub u: S,
    pub t: f64,
    pub steps: usize,
    pub rhs_evals: usize,
}

/// A failed run with the last state that completed a full step.
#[derive(Debug, Clone)]
pub struct Diverged<S> {
    pub error: Error,
    pub last_valid: Integration<S>,
}

impl<S> fmt::Display for Diverged<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (last valid state at t = {:e} after {} steps)", self.error, self.last_valid.t, self.last_valid.steps)
    }
}

impl<S> From<Diverged<S>> for Error {
    fn from(d: Diverged<S>) -> Self {
        d.error
    }
}

/// Integrates from `(u0, t0)` until the stop condition, calling `callback` after every step.
pub fn integrate<P: Semidiscretization>(
    sys: &P,
    u0: P::State,
    t0: f64,
    config: &IntegrateConfig,
    mut callback: impl FnMut(&StepInfo, &P::State) -> Result<()>,
) -> std::result::Result<Integration<P::State>, Diverged<P::State>> {
    let mut run = Integration { u: u0, t: t0, steps: 0, rhs_evals: 0 };
    if let Err(error) = config.validate() {
        return Err(Diverged { error, last_valid: run });
    }
    let mut work = RkWork::new(&run.u);
    let mut next = run.u.clone();
    loop {
        let remaining = match config.stop {
            StopCondition::Steps(n) if run.steps >= n => break,
            StopCondition::Steps(_) => f64::INFINITY,
            StopCondition::EndTime(t_end) => {
                let left = t_end - run.t;
                if left <= 1e-13 * t_end.abs().max(1.0) {
                    break;
                }
                left
            }
        };
        let dt = match config.step_size {
            StepSize::Fixed(dt) => Ok(dt),
            StepSize::Cfl(c) => sys.stable_dt(&run.u, &c),
        };
        let mut evals = 0;
        let result = dt.and_then(|dt| {
            let dt = dt.min(remaining);
            next.clone_from(&run.u);
            let mut f = |u: &P::State, t: f64, du: &mut P::State| {
                evals += 1;
                sys.rhs(u, t, du)
            };
            rk_step(&config.method, &mut next, run.t, dt, &mut f, &mut work).map(|_| dt)
        });
        run.rhs_evals += evals;
        let dt = match result {
            Ok(dt) => dt,
            Err(Error::Divergence { stage, time, .. }) => {
                let error = Error::Divergence { step: run.steps + 1, stage, time };
                return Err(Diverged { error, last_valid: run });
            }
            Err(error) => return Err(Diverged { error, last_valid: run }),
        };
        std::mem::swap(&mut run.u, &mut next);
        run.t += dt;
        run.steps += 1;
        let info = StepInfo { step: run.steps, t: run.t, dt, rhs_evals: run.rhs_evals };
        if let Err(error) = callback(&info, &run.u) {
            return Err(Diverged { error, last_valid: run });
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{Layout, RhsConfig};
    use crate::euler::{prim2cons, sound_speed, GasParams, PrimitiveState};
    use crate::geometry::{MeshMapping, StructuredMesh};

    fn decay(lambda: f64) -> LinearOde {
        LinearOde { a: vec![lambda], n: 1 }
    }

    /// Damped rotation with solution `e^{-t/2} (cos t, -sin t)` from `(1, 0)`.
    fn oscillator() -> LinearOde {
        LinearOde { a: vec![-0.5, 1.0, -1.0, -0.5], n: 2 }
    }

    fn run_fixed(sys: &LinearOde, u0: Vec<f64>, dt: f64, steps: usize) -> Integration<Vec<f64>> {
        let cfg = IntegrateConfig::new(StopCondition::Steps(steps), StepSize::Fixed(dt));
        integrate(sys, u0, 0.0, &cfg, |_, _| Ok(())).unwrap()
    }

    #[test]
    fn coefficients_satisfy_order_conditions() {
        let m = RkMethod::carpenter_kennedy_5_4();
        assert!(m.order_condition_residual() < ORDER_CONDITION_TOL);
        let t = m.butcher();
        assert!((t.b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut broken = m;
        broken.b[4] += 1e-8;
        assert!(RkMethod::new("broken", broken.a, broken.b, broken.c).is_err());
        assert!(RkMethod::new("ck", m.a, m.b, m.c).is_ok());
    }

    #[test]
    fn zero_rhs_leaves_state_unchanged() {
        let sys = LinearOde { a: vec![0.0; 4], n: 2 };
        let u0 = vec![0.3, -1.7];
        assert_eq!(run_fixed(&sys, u0.clone(), 0.1, 7).u, u0);
    }

    #[test]
    fn one_step_error_ratio() {
        let err = |dt: f64| (run_fixed(&decay(-1.0), vec![1.0], dt, 1).u[0] - (-dt).exp()).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 32.0).abs() < 3.2, "ratio {ratio}");
    }

    #[test]
    fn global_order_is_four() {
        let t_end = 2.0;
        let err = |dt: f64| {
            let u = run_fixed(&oscillator(), vec![1.0, 0.0], dt, (t_end / dt).round() as usize).u;
            let d = (-0.5 * t_end).exp();
            (u[0] - d * t_end.cos()).hypot(u[1] + d * t_end.sin())
        };
        let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| err(dt)).collect();
        for w in e.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 4.0).abs() < 0.2, "slope {slope}");
        }
    }

    #[test]
    fn five_rhs_evaluations_per_step_and_callbacks() {
        let mut calls = 0;
        let cfg = IntegrateConfig::new(StopCondition::Steps(13), StepSize::Fixed(0.01));
        let run = integrate(&oscillator(), vec![1.0, 0.0], 0.0, &cfg, |info, _| {
            calls += 1;
            assert_eq!(info.rhs_evals, 5 * info.step);
            Ok(())
        })
        .unwrap();
        assert_eq!((run.steps, run.rhs_evals, calls), (13, 65, 13));
        let zero = integrate(&oscillator(), vec![1.0, 0.0], 0.0, &IntegrateConfig::new(StopCondition::Steps(0), StepSize::Fixed(0.1)), |_, _| Ok(()))
            .unwrap();
        assert_eq!((zero.u, zero.rhs_evals), (vec![1.0, 0.0], 0));
    }

    #[test]
    fn end_time_lands_exactly() {
        let cfg = IntegrateConfig::new(StopCondition::EndTime(1.0), StepSize::Fixed(0.3));
        let run = integrate(&decay(-1.0), vec![1.0], 0.0, &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(run.steps, 4);
        assert!((run.t - 1.0).abs() < 1e-15);
        assert!((run.u[0] - (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn divergence_keeps_last_valid_state() {
        let cfg = IntegrateConfig::new(StopCondition::Steps(10_000), StepSize::Fixed(1.0));
        let err = integrate(&decay(400.0), vec![1.0], 0.0, &cfg, |_, _| Ok(())).unwrap_err();
        match err.error {
            Error::Divergence { step, .. } => assert_eq!(step, err.last_valid.steps + 1),
            e => panic!("unexpected {e}"),
        }
        assert!(err.last_valid.u[0].is_finite());
        let bad = IntegrateConfig::new(StopCondition::Steps(1), StepSize::Fixed(-1.0));
        assert!(matches!(integrate(&decay(-1.0), vec![1.0], 0.0, &bad, |_, _| Ok(())).unwrap_err().error, Error::Config { .. }));
        assert!(StepController::new(0.0).is_err());
    }

    #[test]
    fn stable_dt_scaling() {
        let gas = GasParams::default();
        let q = PrimitiveState { rho: 1.3, v: [0.0; 2], p: 0.8 };
        let c = sound_speed(q.rho, q.p, &gas);
        let dt_on = |cells: usize, cfl: f64| {
            let mesh = StructuredMesh::new([cells; 2], MeshMapping::Cartesian).unwrap();
            let disc = Discretization::new(mesh, 3, RhsConfig::default(), gas).unwrap();
            let u = SolutionField::from_fn(disc.n_elements(), disc.nodes_per_element(), Layout::NodeMajor, |_, _| prim2cons(&q, &gas).unwrap());
            (stable_dt(&disc, &u, &StepController::new(cfl).unwrap()).unwrap(), disc.geometry.elements[0].metrics.jac[0].sqrt())
        };
        let (dt, h) = dt_on(4, 0.5);
        assert!((dt - 0.5 * h / (c * 7.0)).abs() < 1e-15 * dt);
        assert!((dt_on(8, 0.5).0 - 0.5 * dt).abs() < 1e-14 * dt);
        assert!((dt_on(4, 1.0).0 - 2.0 * dt).abs() < 1e-14 * dt);
    }
}
