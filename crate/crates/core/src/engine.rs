//! Sequential-in-time natural-gradient integration.
//!
//! [`teng_stepper`] fits the ansatz to a frozen target by repeated
//! Gauss–Newton projections: each iteration solves a weighted ridge least
//! squares problem for the parameter update `Δθ` that best reproduces the
//! function-space residual. [`teng_euler`] and [`teng_heun`] build the targets
//! of explicit Euler and Heun steps of `u_t = L u` and call the stepper once
//! (Euler) or twice (Heun) per time step.

use std::borrow::Cow;

use thiserror::Error;

use crate::ansatz::{Ansatz, ParamVector};
use crate::linalg::{solve_ridge_lsq, LinalgError, Matrix};
use crate::pde::{apply_operator, functional_gradient, loss, DirichletBC, HeatOperator, LossReport, PdeError};
use crate::sampling::{SampleSet, SamplingError, UniformStream};
use crate::scalar::{Point, Real};
use crate::special::{DiskHarmonic, ExactSolution, ModalExpansion};

/// A stepper iteration whose loss exceeds this multiple of the previous
/// iteration's loss halves `α` for the remaining iterations.
pub const BACKOFF_GROWTH: f64 = 10.0;

/// Default relative ridge for time stepping. Below about `1e-6` single
/// steps of a `[32, 32]` tanh network jump far off the solution between
/// collocation points.
pub const STEP_RIDGE: f64 = 1e-5;

/// Relative ridge used when fitting from a random initialization, where
/// full Gauss–Newton steps overshoot. The ridge does not move the stepper's
/// fixed point, only its path.
pub const PRETRAIN_RIDGE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("least-squares solve failed at stepper iteration {iteration}: {source}")]
    Stepper {
        iteration: usize,
        #[source]
        source: LinalgError,
    },
    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<EngineError>,
    },
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Knobs of one stepper call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig<T> {
    /// Gauss–Newton iterations per call.
    pub n_it: usize,
    /// Step size `α` in `(0, 1]`.
    pub alpha: T,
    /// Ridge relative to `trace(JᵀWJ)/P`.
    pub ridge: T,
    /// Boundary penalty weight `λ_D`.
    pub lambda_d: T,
}

impl<T: Real> Default for StepperConfig<T> {
    fn default() -> Self {
        Self { n_it: 5, alpha: T::one(), ridge: T::lit(STEP_RIDGE), lambda_d: T::one() }
    }
}

impl<T: Real> StepperConfig<T> {
    /// Defaults with [`PRETRAIN_RIDGE`].
    pub fn pretraining() -> Self {
        Self { ridge: T::lit(PRETRAIN_RIDGE), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_it == 0 {
            return Err(EngineError::Config("n_it must be >= 1".into()));
        }
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(EngineError::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.ridge >= T::zero() && self.ridge.is_finite()) {
            return Err(EngineError::Config(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if !(self.lambda_d >= T::zero() && self.lambda_d.is_finite()) {
            return Err(EngineError::Config(format!("lambda_d must be >= 0, got {}", self.lambda_d)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub t_final: T,
    pub scheme: Scheme,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(EngineError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(EngineError::Config(format!(
                "t_final ({}) must be finite and >= dt ({})",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    /// `round(T / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round().to_usize().unwrap_or(0)
    }
}

/// Result of one stepper call.
#[derive(Debug, Clone, PartialEq)]
pub struct StepperOutcome<T> {
    pub theta: ParamVector<T>,
    /// Loss before each iteration, then after the final one (`n_it + 1` entries).
    pub loss_history: Vec<LossReport<T>>,
    pub iterations: usize,
    /// Iterations at which `α` was halved.
    pub backoff_iterations: Vec<usize>,
    pub final_alpha: T,
    pub max_condition_estimate: T,
}

impl<T: Real> StepperOutcome<T> {
    pub fn initial_loss(&self) -> LossReport<T> {
        self.loss_history[0]
    }

    pub fn final_loss(&self) -> LossReport<T> {
        *self.loss_history.last().expect("history holds at least the initial loss")
    }
}

/// Least-squares row weights: `1/N` per interior row, `λ_D/N_b` per boundary row.
pub fn row_weights<T: Real>(samples: &SampleSet<T>, lambda_d: T) -> Vec<T> {
    let wi = T::one() / T::from_count(samples.n_interior());
    let wb = lambda_d / T::from_count(samples.n_boundary().max(1));
    let mut w = vec![wi; samples.n_interior()];
    w.resize(samples.all_points().len(), wb);
    w
}

fn split_loss<T: Real>(
    values: &[T],
    target: &[T],
    samples: &SampleSet<T>,
    bc: &DirichletBC<T>,
) -> Result<LossReport<T>> {
    let (inner, outer) = values.split_at(samples.n_interior());
    Ok(loss(inner, target, outer, bc, samples.boundary())?)
}

/// Fits `û_θ` to `target` (values at the interior samples) and to the
/// boundary data of `bc`, starting from `theta_init`.
///
/// Runs exactly `cfg.n_it` iterations of: evaluate `û` and `J`, form the
/// residual `α (target − û)`, solve the weighted ridge least squares for
/// `Δθ`, update `θ ← θ + Δθ`.
pub fn teng_stepper<T: Real, A: Ansatz<T> + ?Sized>(
    ansatz: &A,
    theta_init: &ParamVector<T>,
    target: &[T],
    samples: &SampleSet<T>,
    bc: &DirichletBC<T>,
    cfg: &StepperConfig<T>,
) -> Result<StepperOutcome<T>> {
    cfg.validate()?;
    if target.len() != samples.n_interior() {
        return Err(EngineError::Config(format!(
            "target has {} values for {} interior samples",
            target.len(),
            samples.n_interior()
        )));
    }
    let points = samples.all_points();
    let weights = row_weights(samples, cfg.lambda_d);
    let (inner, outer) = (samples.n_interior(), samples.boundary());

    let mut theta = theta_init.clone();
    let mut alpha = cfg.alpha;
    let mut history = Vec::with_capacity(cfg.n_it + 1);
    let mut backoff = Vec::new();
    let mut max_cond = T::one();
    for it in 0..cfg.n_it {
        let (values, jac): (Vec<T>, Matrix<T>) = ansatz.eval_and_jacobian(&theta, points);
        let report = split_loss(&values, target, samples, bc)?;
        if let Some(prev) = history.last() {
            let prev: &LossReport<T> = prev;
            if report.total > T::lit(BACKOFF_GROWTH) * prev.total {
                alpha *= T::lit(0.5);
                backoff.push(it);
            }
        }
        history.push(report);

        let residual = functional_gradient(&values[..inner], target, &values[inner..], bc, outer, alpha)?;
        let sol = solve_ridge_lsq(&jac, &weights, &residual.stacked(), cfg.ridge)
            .map_err(|source| EngineError::Stepper { iteration: it, source })?;
        max_cond = max_cond.max(sol.gram_condition_estimate);
        theta = theta.add_scaled(&sol.delta_theta, T::one());
    }
    let values = ansatz.eval(&theta, points);
    history.push(split_loss(&values, target, samples, bc)?);
    Ok(StepperOutcome {
        theta,
        loss_history: history,
        iterations: cfg.n_it,
        backoff_iterations: backoff,
        final_alpha: alpha,
        max_condition_estimate: max_cond,
    })
}

/// Linear combination of disk harmonics with the coefficients as parameters.
/// Reduces the stepper to an exact modal projection; used as a test oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAdapter<T> {
    pub basis: Vec<DiskHarmonic<T>>,
}

impl<T: Real> LinearAdapter<T> {
    pub fn new(basis: Vec<DiskHarmonic<T>>) -> Self {
        Self { basis }
    }

    /// Adapter over the modes of an expansion, with the expansion's
    /// coefficients as the parameter vector.
    pub fn from_expansion(expansion: &ModalExpansion<T>) -> (Self, ParamVector<T>) {
        let basis = expansion.terms.iter().map(|(h, _)| *h).collect();
        let coeffs = expansion.terms.iter().map(|(_, c)| *c).collect();
        (Self::new(basis), ParamVector::new(coeffs))
    }
}

impl<T: Real> Ansatz<T> for LinearAdapter<T> {
    fn n_params(&self) -> usize {
        self.basis.len()
    }

    fn eval(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        assert_eq!(theta.len(), self.basis.len(), "coefficient count");
        points
            .iter()
            .map(|p| self.basis.iter().zip(theta.iter()).fold(T::zero(), |acc, (h, &c)| acc + c * h.value(p)))
            .collect()
    }

    fn eval_and_jacobian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> (Vec<T>, Matrix<T>) {
        assert_eq!(theta.len(), self.basis.len(), "coefficient count");
        let k = self.basis.len();
        let mut jac = Vec::with_capacity(points.len() * k);
        let mut values = Vec::with_capacity(points.len());
        for p in points {
            let row: Vec<T> = self.basis.iter().map(|h| h.value(p)).collect();
            values.push(row.iter().zip(theta.iter()).fold(T::zero(), |acc, (&z, &c)| acc + c * z));
            jac.extend(row);
        }
        (values, Matrix::from_row_major_unchecked(points.len(), k, jac))
    }

    fn laplacian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        assert_eq!(theta.len(), self.basis.len(), "coefficient count");
        points
            .iter()
            .map(|p| {
                self.basis
                    .iter()
                    .zip(theta.iter())
                    .fold(T::zero(), |acc, (h, &c)| acc + c * h.laplacian_value(p))
            })
            .collect()
    }
}

/// Where collocation points come from at each time step.
#[derive(Debug, Clone, PartialEq)]
pub enum Collocation<T> {
    /// One sample set reused for every step.
    Fixed(SampleSet<T>),
    /// Fresh samples every step, seeded from `(seed, step)`.
    Resampled { n_interior: usize, n_boundary: usize, seed: u64 },
}

impl<T: Real> Collocation<T> {
    pub fn at_step(&self, step: usize) -> Result<Cow<'_, SampleSet<T>>> {
        match self {
            Self::Fixed(set) => Ok(Cow::Borrowed(set)),
            Self::Resampled { n_interior, n_boundary, seed } => {
                let mut mix = UniformStream::new(seed ^ (step as u64).rotate_left(32));
                let (a, b) = (mix.next_u64(), mix.next_u64());
                Ok(Cow::Owned(SampleSet::with_seeds(*n_interior, *n_boundary, a, b)?))
            }
        }
    }
}

/// Relative L² error of `û_θ` against an exact solution on fixed points.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMonitor<T> {
    pub exact: ExactSolution<T>,
    pub points: Vec<Point<T>>,
    pub weights: Vec<T>,
}

impl<T: Real> ErrorMonitor<T> {
    /// Equal weights on every point.
    pub fn uniform(exact: ExactSolution<T>, points: Vec<Point<T>>) -> Self {
        let weights = vec![T::one(); points.len()];
        Self { exact, points, weights }
    }

    /// `None` when the exact solution vanishes on the monitor points.
    pub fn rel_l2<A: Ansatz<T> + ?Sized>(&self, ansatz: &A, theta: &ParamVector<T>, t: T) -> Option<T> {
        let predicted = ansatz.eval(theta, &self.points);
        let exact = self.exact.eval(t, &self.points);
        relative_l2(&predicted, &exact, &self.weights)
    }
}

/// `√(Σ w (û − u)²) / √(Σ w u²)`; `None` when the reference has zero norm or
/// the lengths differ.
pub fn relative_l2<T: Real>(predicted: &[T], exact: &[T], weights: &[T]) -> Option<T> {
    if predicted.len() != exact.len() || weights.len() != exact.len() {
        return None;
    }
    let (mut num, mut den) = (T::zero(), T::zero());
    for ((&p, &e), &w) in predicted.iter().zip(exact).zip(weights) {
        num += w * (p - e) * (p - e);
        den += w * e * e;
    }
    (den > T::zero()).then(|| (num / den).sqrt())
}

/// Diagnostics for one time step (`step_index = 0` is the initial state).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord<T> {
    pub step_index: usize,
    pub time: T,
    /// Loss after the final stepper iteration of the step. For step 0 the
    /// interior term is measured against the exact solution (zero without a
    /// monitor).
    pub loss_report: LossReport<T>,
    pub rel_l2_error: Option<T>,
    pub stepper_iterations_used: usize,
    pub backoff_events: usize,
}

/// Everything an integrator needs besides the initial parameters.
pub struct Problem<'a, T, A: ?Sized> {
    pub ansatz: &'a A,
    pub operator: HeatOperator<T>,
    pub bc: &'a DirichletBC<T>,
    pub collocation: &'a Collocation<T>,
    pub monitor: Option<&'a ErrorMonitor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration<T> {
    pub theta: ParamVector<T>,
    pub trajectory: Vec<TrajectoryRecord<T>>,
}

/// Called after every record (including step 0) with the current parameters.
pub type Observer<'o, T> = &'o mut dyn FnMut(&TrajectoryRecord<T>, &ParamVector<T>);

fn initial_record<T: Real, A: Ansatz<T> + ?Sized>(
    problem: &Problem<'_, T, A>,
    theta0: &ParamVector<T>,
) -> Result<TrajectoryRecord<T>> {
    let samples = problem.collocation.at_step(0)?;
    let values = problem.ansatz.eval(theta0, samples.all_points());
    let (inner, outer) = values.split_at(samples.n_interior());
    let reference = match problem.monitor {
        Some(m) => m.exact.eval(T::zero(), samples.interior()),
        None => inner.to_vec(),
    };
    Ok(TrajectoryRecord {
        step_index: 0,
        time: T::zero(),
        loss_report: loss(inner, &reference, outer, problem.bc, samples.boundary())?,
        rel_l2_error: problem.monitor.and_then(|m| m.rel_l2(problem.ansatz, theta0, T::zero())),
        stepper_iterations_used: 0,
        backoff_events: 0,
    })
}

fn advance<T: Real, A: Ansatz<T> + ?Sized>(
    problem: &Problem<'_, T, A>,
    theta0: &ParamVector<T>,
    scfg: &StepperConfig<T>,
    icfg: &IntegratorConfig<T>,
    mut observer: Option<Observer<'_, T>>,
    mut step_fn: impl FnMut(&ParamVector<T>, &SampleSet<T>) -> Result<(ParamVector<T>, LossReport<T>, usize, usize)>,
) -> Result<Integration<T>> {
    scfg.validate()?;
    icfg.validate()?;
    if (problem.bc.lambda_d() - scfg.lambda_d).abs() > T::zero() {
        return Err(EngineError::Config("stepper lambda_d differs from the boundary condition's".into()));
    }
    let mut trajectory = Vec::with_capacity(icfg.n_steps() + 1);
    let first = initial_record(problem, theta0)?;
    if let Some(obs) = observer.as_mut() {
        obs(&first, theta0);
    }
    trajectory.push(first);

    let mut theta = theta0.clone();
    for step in 1..=icfg.n_steps() {
        let samples = problem.collocation.at_step(step)?;
        let (next, report, iterations, backoffs) =
            step_fn(&theta, &samples).map_err(|e| EngineError::Step { step, source: Box::new(e) })?;
        theta = next;
        let time = T::from_count(step) * icfg.dt;
        let record = TrajectoryRecord {
            step_index: step,
            time,
            loss_report: report,
            rel_l2_error: problem.monitor.and_then(|m| m.rel_l2(problem.ansatz, &theta, time)),
            stepper_iterations_used: iterations,
            backoff_events: backoffs,
        };
        if let Some(obs) = observer.as_mut() {
            obs(&record, &theta);
        }
        trajectory.push(record);
    }
    Ok(Integration { theta, trajectory })
}

/// Explicit Euler in function space: per step the target
/// `û_θt + Δt · L û_θt` is frozen at the interior samples and fitted by the
/// stepper starting from `θ_t`.
pub fn teng_euler<T: Real, A: Ansatz<T> + ?Sized>(
    problem: &Problem<'_, T, A>,
    theta0: &ParamVector<T>,
    scfg: &StepperConfig<T>,
    icfg: &IntegratorConfig<T>,
    observer: Option<Observer<'_, T>>,
) -> Result<Integration<T>> {
    if icfg.scheme != Scheme::Euler {
        return Err(EngineError::Config("teng_euler called with a non-Euler scheme".into()));
    }
    let dt = icfg.dt;
    advance(problem, theta0, scfg, icfg, observer, |theta, samples| {
        let interior = samples.interior();
        let current = problem.ansatz.eval(theta, interior);
        let rate = apply_operator(&problem.operator, problem.ansatz, theta, interior);
        let target: Vec<T> = current.iter().zip(&rate).map(|(&u, &l)| u + dt * l).collect();
        let out = teng_stepper(problem.ansatz, theta, &target, samples, problem.bc, scfg)?;
        Ok((out.theta.clone(), out.final_loss(), out.iterations, out.backoff_iterations.len()))
    })
}

/// Heun's method in function space. Predictor: fit `û_θt + Δt L û_θt` from
/// `θ_t` to get `θ_temp`. Corrector: fit `û_θt + (Δt/2)(L û_θt + L û_θtemp)`
/// starting from `θ_temp`.
pub fn teng_heun<T: Real, A: Ansatz<T> + ?Sized>(
    problem: &Problem<'_, T, A>,
    theta0: &ParamVector<T>,
    scfg: &StepperConfig<T>,
    icfg: &IntegratorConfig<T>,
    observer: Option<Observer<'_, T>>,
) -> Result<Integration<T>> {
    if icfg.scheme != Scheme::Heun {
        return Err(EngineError::Config("teng_heun called with a non-Heun scheme".into()));
    }
    let dt = icfg.dt;
    let half = dt * T::lit(0.5);
    advance(problem, theta0, scfg, icfg, observer, |theta, samples| {
        let interior = samples.interior();
        let current = problem.ansatz.eval(theta, interior);
        let rate = apply_operator(&problem.operator, problem.ansatz, theta, interior);
        let predictor: Vec<T> = current.iter().zip(&rate).map(|(&u, &l)| u + dt * l).collect();
        let first = teng_stepper(problem.ansatz, theta, &predictor, samples, problem.bc, scfg)?;

        let rate_temp = apply_operator(&problem.operator, problem.ansatz, &first.theta, interior);
        let corrector: Vec<T> = current
            .iter()
            .zip(rate.iter().zip(&rate_temp))
            .map(|(&u, (&a, &b))| u + half * (a + b))
            .collect();
        let second = teng_stepper(problem.ansatz, &first.theta, &corrector, samples, problem.bc, scfg)?;
        Ok((
            second.theta.clone(),
            second.final_loss(),
            first.iterations + second.iterations,
            first.backoff_iterations.len() + second.backoff_iterations.len(),
        ))
    })
}

/// Dispatches on `icfg.scheme`.
pub fn integrate<T: Real, A: Ansatz<T> + ?Sized>(
    problem: &Problem<'_, T, A>,
    theta0: &ParamVector<T>,
    scfg: &StepperConfig<T>,
    icfg: &IntegratorConfig<T>,
    observer: Option<Observer<'_, T>>,
) -> Result<Integration<T>> {
    match icfg.scheme {
        Scheme::Euler => teng_euler(problem, theta0, scfg, icfg, observer),
        Scheme::Heun => teng_heun(problem, theta0, scfg, icfg, observer),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport<T> {
    /// Parameters with the lowest total loss seen.
    pub theta: ParamVector<T>,
    pub achieved_loss: LossReport<T>,
    pub rounds: usize,
    pub tolerance_met: bool,
}

/// Supervised fit to `u0`: repeated stepper calls with the fixed target
/// until the total loss is `<= tol` or `max_rounds` calls have been made.
/// Failing to reach `tol` is reported, not raised.
#[allow(clippy::too_many_arguments)]
pub fn pretrain<T: Real, A: Ansatz<T> + ?Sized>(
    ansatz: &A,
    theta_init: &ParamVector<T>,
    u0: &ModalExpansion<T>,
    samples: &SampleSet<T>,
    bc: &DirichletBC<T>,
    scfg: &StepperConfig<T>,
    max_rounds: usize,
    tol: T,
) -> Result<PretrainReport<T>> {
    if !(tol > T::zero()) {
        return Err(EngineError::Config(format!("pretraining tolerance must be > 0, got {tol}")));
    }
    let target = u0.eval(samples.interior());
    let values = ansatz.eval(theta_init, samples.all_points());
    let mut best = (theta_init.clone(), split_loss(&values, &target, samples, bc)?);
    let mut rounds = 0;
    let mut theta = theta_init.clone();
    while best.1.total > tol && rounds < max_rounds {
        let out = teng_stepper(ansatz, &theta, &target, samples, bc, scfg)?;
        rounds += 1;
        let report = out.final_loss();
        theta = out.theta;
        if report.total < best.1.total {
            best = (theta.clone(), report);
        }
    }
    Ok(PretrainReport { tolerance_met: best.1.total <= tol, theta: best.0, achieved_loss: best.1, rounds })
}
