//! Adaptive best-arm identification with confidence ellipsoids.
//!
//! The algorithm keeps a regularized least-squares estimate of the hidden
//! parameter together with a confidence radius. Each round it:
//!
//! 1. names the empirically best arm `h`,
//! 2. stops if every other arm's *advantage* — the largest value of
//!    `theta' (x_a - x_h)` over the confidence ellipsoid — is negative,
//! 3. otherwise finds the most competitive arm `l` (largest advantage) and
//!    plays the arm whose rank-one update shrinks the uncertainty of the
//!    direction `x_h - x_l` the most,
//! 4. recommends `h` upon stopping.
//!
//! On standard-basis instances the sampling rule degenerates to playing
//! `h` or `l` (all other sampling scores vanish), recovering the classic
//! two-candidate confidence-bound strategy for unstructured bandits.

use nalgebra::DVector;
use std::time::{Duration, Instant};

use crate::env::{ArmSet, Instance, RngStream};
use crate::error::{Error, Result};
use crate::linalg::SpdState;

/// Relative tolerance under which argmax candidates count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Confidence radius formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusMode {
    /// `beta = R sqrt(2 (log det V - d log lambda)/2 ... - log delta)) + sqrt(lambda) S`;
    /// grows with the observed design matrix.
    DetBased,
    /// `beta = R sqrt(d log(t / delta))`; depends on the step count only.
    Simple,
}

/// Inputs shared by every run: noise scale `R`, parameter-norm bound `S`,
/// confidence level `delta`, ridge `lambda`, and the radius formula.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceParams {
    pub r: f64,
    pub s: f64,
    pub delta: f64,
    pub lambda: f64,
    pub radius_mode: RadiusMode,
}

impl ConfidenceParams {
    pub fn new(r: f64, s: f64, delta: f64, lambda: f64, radius_mode: RadiusMode) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid(format!("R must be positive, got {r}")));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("S must be positive, got {s}")));
        }
        if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self {
            r,
            s,
            delta,
            lambda,
            radius_mode,
        })
    }
}

/// Determinant-based confidence radius for the current design matrix.
pub fn radius_det(spd: &SpdState, params: &ConfidenceParams) -> f64 {
    let d = spd.dim() as f64;
    let arg = 0.5 * spd.log_det() - 0.5 * d * params.lambda.ln() - params.delta.ln();
    params.r * (2.0 * arg).sqrt() + params.lambda.sqrt() * params.s
}

/// Step-count-based confidence radius `R sqrt(d log(t/delta))`.
pub fn radius_simple(t: u64, params: &ConfidenceParams, d: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("simple radius needs t >= 1"));
    }
    let ratio = t as f64 / params.delta;
    if ratio <= 1.0 {
        return Err(Error::invalid(format!(
            "simple radius needs t/delta > 1, got {ratio}"
        )));
    }
    Ok(params.r * ((d as f64) * ratio.ln()).sqrt())
}

/// Full algorithm state for one run.
#[derive(Debug, Clone)]
pub struct RunState {
    spd: SpdState,
    b: DVector<f64>,
    theta_hat: DVector<f64>,
    t: u64,
    pull_counts: Vec<u64>,
    beta: f64,
}

impl RunState {
    /// Fresh state: `V = lambda I`, zero estimate, zero counts.
    ///
    /// The initial radius is the determinant-based value at `V = lambda I`;
    /// in [`RadiusMode::Simple`] (undefined at `t = 0`) it starts at 1 and
    /// takes over from the first observation on.
    pub fn new(d: usize, k: usize, params: &ConfidenceParams) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid("need at least two arms"));
        }
        let spd = SpdState::init(d, params.lambda)?;
        let beta = match params.radius_mode {
            RadiusMode::DetBased => radius_det(&spd, params),
            RadiusMode::Simple => 1.0,
        };
        Ok(Self {
            spd,
            b: DVector::zeros(d),
            theta_hat: DVector::zeros(d),
            t: 0,
            pull_counts: vec![0; k],
            beta,
        })
    }

    pub fn spd(&self) -> &SpdState {
        &self.spd
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pull_counts
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Folds one observation `(arm, reward)` into the state: rank-one
    /// design update, `b += y x`, re-derived estimate, refreshed radius.
    pub fn observe(
        &mut self,
        a: usize,
        y: f64,
        arms: &ArmSet,
        params: &ConfidenceParams,
    ) -> Result<()> {
        if a >= arms.k() {
            return Err(Error::ArmIndexOutOfRange {
                index: a,
                len: arms.k(),
            });
        }
        let x = arms.arm(a);
        self.spd.rank_one_update(x)?;
        self.b.axpy(y, x, 1.0);
        self.theta_hat = self.spd.v_inv() * &self.b;
        self.t += 1;
        self.pull_counts[a] += 1;
        self.beta = match params.radius_mode {
            RadiusMode::DetBased => radius_det(&self.spd, params),
            RadiusMode::Simple => radius_simple(self.t, params, self.spd.dim())?,
        };
        Ok(())
    }

    /// Empirically best arm; ties go to the lowest index.
    pub fn current_best(&self, arms: &ArmSet) -> usize {
        let values: Vec<f64> = arms.arms().iter().map(|x| self.theta_hat.dot(x)).collect();
        lowest_tied_argmax(&values)
    }

    /// Largest value of `theta' (x_a - x_h)` over the confidence ellipsoid:
    /// the margin by which arm `a` could still beat `h`.
    pub fn advantage(&self, a: usize, h: usize, arms: &ArmSet) -> Result<f64> {
        if a == h {
            return Err(Error::invalid("advantage is defined for a != h"));
        }
        let diff = arms.arm(a) - arms.arm(h);
        Ok(self.theta_hat.dot(&diff) + self.beta * self.spd.quad_form(&diff)?.sqrt())
    }

    /// Maximal advantage over all `a != h` and the arm attaining it
    /// (lowest tied index).
    pub fn max_advantage(&self, h: usize, arms: &ArmSet) -> (f64, usize) {
        let values: Vec<f64> = (0..arms.k())
            .map(|a| {
                if a == h {
                    f64::NEG_INFINITY
                } else {
                    self.advantage(a, h, arms).expect("a != h by construction")
                }
            })
            .collect();
        let l = lowest_tied_argmax(&values);
        (values[l], l)
    }

    /// The most competitive challenger to `h`.
    pub fn closest_arm(&self, h: usize, arms: &ArmSet) -> usize {
        self.max_advantage(h, arms).1
    }

    /// Sampling scores of every arm for the direction `x_h - x_l`.
    pub fn selection_scores(&self, h: usize, l: usize, arms: &ArmSet) -> Result<Vec<f64>> {
        if h == l {
            return Err(Error::invalid("selection needs h != l"));
        }
        let diff = arms.arm(h) - arms.arm(l);
        (0..arms.k())
            .map(|a| self.spd.whitened_score(arms.arm(a), &diff))
            .collect()
    }

    /// Arm whose rank-one update most shrinks the uncertainty of
    /// `x_h - x_l`; ties within [`TIE_TOLERANCE`] are broken uniformly at
    /// random.
    pub fn select_arm(
        &self,
        h: usize,
        l: usize,
        arms: &ArmSet,
        rng: &mut RngStream,
    ) -> Result<usize> {
        let scores = self.selection_scores(h, l, arms)?;
        let max = scores.iter().fold(f64::NEG_INFINITY, |acc, s| acc.max(*s));
        let threshold = max - TIE_TOLERANCE * max.abs();
        let tied: Vec<usize> = (0..arms.k()).filter(|a| scores[*a] >= threshold).collect();
        Ok(if tied.len() == 1 {
            tied[0]
        } else {
            tied[rng.uniform_index(tied.len())]
        })
    }

    /// True once every challenger's advantage is strictly negative.
    pub fn should_stop(&self, arms: &ArmSet) -> bool {
        let h = self.current_best(arms);
        self.max_advantage(h, arms).0 < 0.0
    }
}

fn lowest_tied_argmax(values: &[f64]) -> usize {
    let max = values.iter().fold(f64::NEG_INFINITY, |acc, v| acc.max(*v));
    let threshold = max - TIE_TOLERANCE * max.abs();
    values
        .iter()
        .position(|v| *v >= threshold)
        .expect("non-empty value list")
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminated {
    Stopped,
    MaxStepsExceeded,
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct StopReport {
    /// Total pulls at stop.
    pub tau: u64,
    pub recommended: usize,
    /// Whether the recommendation matches the instance's true best arm.
    pub correct: bool,
    pub terminated: Terminated,
    pub pull_counts: Vec<u64>,
    pub wall_time: Duration,
}

/// One decision round, recorded before the observation is folded in.
#[derive(Debug, Clone, Copy)]
pub struct TraceStep {
    pub t: u64,
    pub h: usize,
    pub l: usize,
    pub c: usize,
    pub beta: f64,
    pub max_advantage: f64,
}

/// What [`GlucbRun::step`] did.
#[derive(Debug, Clone, Copy)]
pub enum StepOutcome {
    /// Stopping criterion fired; nothing was played.
    Stopped { recommended: usize },
    Played(TraceStep),
}

/// A single in-progress run, exposed step by step.
pub struct GlucbRun<'a> {
    instance: &'a Instance,
    params: &'a ConfidenceParams,
    rng: &'a mut RngStream,
    state: RunState,
}

impl<'a> GlucbRun<'a> {
    pub fn new(
        instance: &'a Instance,
        params: &'a ConfidenceParams,
        rng: &'a mut RngStream,
    ) -> Result<Self> {
        let state = RunState::new(instance.d(), instance.k(), params)?;
        Ok(Self {
            instance,
            params,
            rng,
            state,
        })
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    /// Checks the stopping rule, then plays one round.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let arms = self.instance.arm_set();
        let h = self.state.current_best(arms);
        let (max_advantage, l) = self.state.max_advantage(h, arms);
        if max_advantage < 0.0 {
            return Ok(StepOutcome::Stopped { recommended: h });
        }
        self.play(h, l, max_advantage).map(StepOutcome::Played)
    }

    /// Plays one round unconditionally (stopping rule not consulted).
    pub fn force_step(&mut self) -> Result<TraceStep> {
        let arms = self.instance.arm_set();
        let h = self.state.current_best(arms);
        let (max_advantage, l) = self.state.max_advantage(h, arms);
        self.play(h, l, max_advantage)
    }

    fn play(&mut self, h: usize, l: usize, max_advantage: f64) -> Result<TraceStep> {
        let arms = self.instance.arm_set();
        let trace = TraceStep {
            t: self.state.t,
            h,
            l,
            c: self.state.select_arm(h, l, arms, self.rng)?,
            beta: self.state.beta,
            max_advantage,
        };
        let y = self.instance.pull(trace.c, self.rng)?;
        self.state.observe(trace.c, y, arms, self.params)?;
        Ok(trace)
    }
}

fn finish(
    state: &RunState,
    instance: &Instance,
    recommended: usize,
    terminated: Terminated,
    started: Instant,
) -> StopReport {
    StopReport {
        tau: state.t(),
        recommended,
        correct: recommended == instance.best_arm(),
        terminated,
        pull_counts: state.pull_counts().to_vec(),
        wall_time: started.elapsed(),
    }
}

/// Runs the adaptive algorithm to its stopping time (or `max_steps`).
pub fn run_glucb(
    instance: &Instance,
    params: &ConfidenceParams,
    rng: &mut RngStream,
    max_steps: u64,
) -> Result<StopReport> {
    let (report, _) = run_glucb_impl(instance, params, rng, max_steps, false)?;
    Ok(report)
}

/// Same as [`run_glucb`], also returning the per-step decision trace.
pub fn run_glucb_traced(
    instance: &Instance,
    params: &ConfidenceParams,
    rng: &mut RngStream,
    max_steps: u64,
) -> Result<(StopReport, Vec<TraceStep>)> {
    let (report, trace) = run_glucb_impl(instance, params, rng, max_steps, true)?;
    Ok((report, trace.expect("trace requested")))
}

fn run_glucb_impl(
    instance: &Instance,
    params: &ConfidenceParams,
    rng: &mut RngStream,
    max_steps: u64,
    want_trace: bool,
) -> Result<(StopReport, Option<Vec<TraceStep>>)> {
    if max_steps == 0 {
        return Err(Error::invalid("max_steps must be at least 1"));
    }
    let started = Instant::now();
    let mut run = GlucbRun::new(instance, params, rng)?;
    let mut trace = want_trace.then(Vec::new);
    loop {
        match run.step()? {
            StepOutcome::Stopped { recommended } => {
                let report = finish(&run.state, instance, recommended, Terminated::Stopped, started);
                return Ok((report, trace));
            }
            StepOutcome::Played(step) => {
                if let Some(t) = trace.as_mut() {
                    t.push(step);
                }
                if run.state.t() >= max_steps {
                    let h = run.state.current_best(instance.arm_set());
                    let report =
                        finish(&run.state, instance, h, Terminated::MaxStepsExceeded, started);
                    return Ok((report, trace));
                }
            }
        }
    }
}

/// Static-allocation baseline: pulls track fixed simplex weights by a
/// deterministic low-discrepancy rule (play the arm maximizing
/// `w_a t - n_a(t)`), with the same stopping and recommendation rules as
/// the adaptive algorithm.
pub fn run_static(
    instance: &Instance,
    params: &ConfidenceParams,
    weights: &[f64],
    rng: &mut RngStream,
    max_steps: u64,
) -> Result<StopReport> {
    if max_steps == 0 {
        return Err(Error::invalid("max_steps must be at least 1"));
    }
    if weights.len() != instance.k() {
        return Err(Error::DimensionMismatch {
            expected: instance.k(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(Error::invalid(
            "static weights must be nonnegative and sum to 1",
        ));
    }
    let started = Instant::now();
    let arms = instance.arm_set();
    let mut state = RunState::new(instance.d(), instance.k(), params)?;
    loop {
        let h = state.current_best(arms);
        if state.max_advantage(h, arms).0 < 0.0 {
            return Ok(finish(&state, instance, h, Terminated::Stopped, started));
        }
        let t = state.t() as f64;
        let deficits: Vec<f64> = weights
            .iter()
            .zip(state.pull_counts())
            .map(|(w, n)| w * t - *n as f64)
            .collect();
        let c = strict_argmax(&deficits);
        let y = instance.pull(c, rng)?;
        state.observe(c, y, arms, params)?;
        if state.t() >= max_steps {
            let h = state.current_best(arms);
            return Ok(finish(&state, instance, h, Terminated::MaxStepsExceeded, started));
        }
    }
}

fn strict_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Two-arm uncertainty potential `‖x_1 - x_2‖²` in the `V⁻¹` metric.
pub fn potential_two_arm(state: &RunState, arms: &ArmSet) -> Result<f64> {
    if arms.k() != 2 {
        return Err(Error::invalid("the potential is defined for K = 2"));
    }
    state.spd().quad_form(&(arms.arm(0) - arms.arm(1)))
}
