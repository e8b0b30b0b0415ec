//! Distributed resource sharing under bandit feedback.
//!
//! Each agent keeps a primal iterate `z` inside a shrunk copy of its box, plays
//! the perturbed point `x = z + delta * u` for a random unit direction `u`, and
//! learns only from the scalar loss and constraint value of what it played.
//! A one-point estimate of the Lagrangian gradient drives a projected primal
//! step; a regularized dual step tracks accumulated constraint pressure.
//! Feedback is delayed by one round: the update at round `t` uses the loss
//! and constraint observed for the action played at `t - 1`.
//!
//! With adjustment enabled, an action that would send more than the node
//! generated is rescaled onto the budget before it is played.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::{project_shrunk, BoxSet};

/// Hyperparameters in force at one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Exploration radius.
    pub delta: f64,
    /// Primal step size.
    pub eta: f64,
    /// Dual regularization.
    pub beta: f64,
    /// Dual step size.
    pub gamma: f64,
    /// Shrinkage of the action box.
    pub xi: f64,
    /// True when the raw shrinkage reached 1 and was clamped.
    pub clamped: bool,
}

/// Bounds an agent's schedule is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Open-neighborhood size `|N_i|` (floored at 1 so isolated nodes still explore).
    pub neighbors: usize,
    /// Allocation dimension `|N_i| + 1`.
    pub dim: usize,
    /// Bound on the loss, `F_i`.
    pub loss_bound: f64,
    /// Bound on the constraint magnitude, `G_i`.
    pub constraint_bound: f64,
    /// `R_i`: every pair of actions is at most this far apart.
    pub enclosing_radius: f64,
    /// `r_i`: radius of a ball inside the action box.
    pub inscribed_radius: f64,
    /// Lipschitz constant of the loss.
    pub lipschitz: f64,
}

impl ProblemConstants {
    /// `3L + L R / r`.
    pub fn smoothed_lipschitz(&self) -> f64 {
        self.lipschitz * (3.0 + self.enclosing_radius / self.inscribed_radius)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("loss_bound", self.loss_bound),
            ("constraint_bound", self.constraint_bound),
            ("enclosing_radius", self.enclosing_radius),
            ("inscribed_radius", self.inscribed_radius),
            ("lipschitz", self.lipschitz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.neighbors == 0 || self.dim == 0 {
            return Err(Error::param("neighbors", "neighbor count and dimension must be >= 1"));
        }
        Ok(())
    }
}

/// Anything that yields the hyperparameters for round `t`.
pub trait Schedule: Send + Sync {
    fn step(&self, t: u64) -> Result<Step>;
}

/// Replaces a shrinkage that reached 1 by `xi_clamp`, pulling the exploration
/// radius down to `r * xi` so perturbed actions stay in the box.
pub(crate) fn clamp_shrinkage(delta: f64, xi: f64, inscribed_radius: f64, xi_clamp: f64) -> (f64, f64, bool) {
    if xi >= 1.0 {
        (inscribed_radius * xi_clamp, xi_clamp, true)
    } else {
        (delta, xi, false)
    }
}

/// The path-length-aware schedule; `path_length = 0` gives the static-regret
/// schedule.
pub fn drs_schedule(t: u64, c: &ProblemConstants, path_length: f64, xi_clamp: f64) -> Result<Step> {
    if t == 0 {
        return Err(Error::param("t", "rounds are numbered from 1"));
    }
    if !(path_length >= 0.0) {
        return Err(Error::param("path_length", format!("must be >= 0, got {path_length}")));
    }
    c.validate()?;
    let tf = t as f64;
    let nf = c.neighbors as f64 * c.loss_bound;
    let lt = c.smoothed_lipschitz();
    let r = c.enclosing_radius;
    let scale = (r * r / 2.0 + r * path_length) / tf;
    let delta = (nf / lt).sqrt() * scale.powf(0.25);
    let eta = (1.0 / (nf * lt)).sqrt() * scale.powf(0.75);
    let beta = 1.0 / (c.constraint_bound * tf.sqrt());
    let gamma = 1.0 / (c.constraint_bound * c.constraint_bound * tf.sqrt());
    let (delta, xi, clamped) = clamp_shrinkage(delta, delta / c.inscribed_radius, c.inscribed_radius, xi_clamp);
    Ok(Step {
        delta,
        eta,
        beta,
        gamma,
        xi,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrsSchedule {
    pub constants: ProblemConstants,
    pub path_length: f64,
    pub xi_clamp: f64,
}

impl Schedule for DrsSchedule {
    fn step(&self, t: u64) -> Result<Step> {
        drs_schedule(t, &self.constants, self.path_length, self.xi_clamp)
    }
}

/// The same hyperparameters every round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenSchedule(pub Step);

impl Schedule for FrozenSchedule {
    fn step(&self, _t: u64) -> Result<Step> {
        Ok(self.0)
    }
}

/// Uniform direction on the unit sphere (normalized Gaussian).
pub fn sample_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return Ok(g.into_iter().map(|v| v / norm).collect());
        }
    }
}

/// One-point Lagrangian gradient estimate `(dim / delta) (f + g q) u`.
pub fn estimate_direction(loss: f64, constraint: f64, u: &[f64], q: f64, delta: f64, dim: usize) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::param("delta", format!("must be > 0, got {delta}")));
    }
    let coef = dim as f64 / delta * (loss + constraint * q);
    if !coef.is_finite() {
        return Err(Error::NonFinite("gradient estimate"));
    }
    Ok(u.iter().map(|v| coef * v).collect())
}

/// Projected primal step onto the shrunk box.
pub fn update_primal(z: &[f64], direction: &[f64], eta: f64, bounds: &BoxSet, xi: f64) -> Result<Vec<f64>> {
    if direction.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: direction.len(),
        });
    }
    let moved: Vec<f64> = z.iter().zip(direction).map(|(z, d)| z - eta * d).collect();
    project_shrunk(&moved, bounds, xi)
}

/// `max(0, q + gamma (g - beta q))`.
pub fn update_dual(q: f64, constraint: f64, gamma: f64, beta: f64) -> f64 {
    (q + gamma * (constraint - beta * q)).max(0.0)
}

/// How an over-budget action is repaired before it is played.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    /// Scale the whole vector onto the budget.
    #[default]
    Proportional,
    /// Rescale only the node's own coordinate, leaving transfers untouched.
    SelfOnly,
}

/// Repairs `x` when it sends more than `generation`.
///
/// In proportional mode the result never exceeds the budget: the scale factor
/// is nudged down by ulps until the floating-point sum is `<= generation`.
pub fn adjust_allocation(x: &[f64], generation: f64, mode: AdjustMode, self_slot: usize) -> Result<Vec<f64>> {
    if generation.is_nan() || generation < 0.0 {
        return Err(Error::param("generation", format!("must be >= 0, got {generation}")));
    }
    let total: f64 = x.iter().sum();
    if total <= generation {
        return Ok(x.to_vec());
    }
    match mode {
        AdjustMode::Proportional => {
            let mut scale = generation / total;
            loop {
                let y: Vec<f64> = x.iter().map(|v| v * scale).collect();
                if y.iter().sum::<f64>() <= generation || scale == 0.0 {
                    return Ok(y);
                }
                scale = scale.next_down();
            }
        }
        AdjustMode::SelfOnly => {
            let mut y = x.to_vec();
            y[self_slot] = x[self_slot] / total * generation;
            Ok(y)
        }
    }
}

/// Scalar feedback for the action an agent played last round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub loss: f64,
    pub constraint: f64,
}

/// Per-agent learner state.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Primal iterate inside the shrunk box.
    pub z: Vec<f64>,
    /// Exploration direction used for `x`.
    pub u: Vec<f64>,
    /// Exploration radius used for `x`.
    pub delta: f64,
    /// Perturbed action `z + delta u`.
    pub x: Vec<f64>,
    /// Action actually played (after any adjustment).
    pub played: Vec<f64>,
    /// Dual variable.
    pub q: f64,
}

/// Static per-agent settings shared by every round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSetup {
    pub bounds: BoxSet,
    pub self_slot: usize,
    pub adjustment: Option<AdjustMode>,
}

impl AgentSetup {
    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// `z + delta u`, clamped to the box to absorb rounding at the faces.
    pub(crate) fn perturb(&self, z: &[f64], delta: f64, u: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = z.iter().zip(u).map(|(z, u)| z + delta * u).collect();
        self.bounds.project(&x)
    }

    pub(crate) fn finish(&self, x: &[f64], generation: f64) -> Result<Vec<f64>> {
        match self.adjustment {
            Some(mode) => adjust_allocation(x, generation, mode, self.self_slot),
            None => Ok(x.to_vec()),
        }
    }
}

impl AgentState {
    /// Round-one state: `start` projected into the shrunk box, then perturbed.
    pub fn initial<R: Rng + ?Sized>(
        start: &[f64],
        step: &Step,
        setup: &AgentSetup,
        generation: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let z = project_shrunk(start, &setup.bounds, step.xi)?;
        let u = sample_unit_vector(setup.dim(), rng)?;
        let x = setup.perturb(&z, step.delta, &u);
        let played = setup.finish(&x, generation)?;
        Ok(AgentState {
            z,
            u,
            delta: step.delta,
            x,
            played,
            q: 0.0,
        })
    }
}

/// One DRS round: dual step, gradient estimate from last round's feedback,
/// projected primal step, fresh perturbation, then the adjustment branch.
/// Returns the action to play.
pub fn drs_round<'s, R: Rng + ?Sized>(
    state: &'s mut AgentState,
    step: &Step,
    observed: Observation,
    setup: &AgentSetup,
    generation: f64,
    rng: &mut R,
) -> Result<&'s [f64]> {
    let dim = setup.dim();
    let q = update_dual(state.q, observed.constraint, step.gamma, step.beta);
    let direction = estimate_direction(observed.loss, observed.constraint, &state.u, q, state.delta, dim)?;
    let z = update_primal(&state.z, &direction, step.eta, &setup.bounds, step.xi)?;
    let u = sample_unit_vector(dim, rng)?;
    let x = setup.perturb(&z, step.delta, &u);
    let played = setup.finish(&x, generation)?;
    *state = AgentState {
        z,
        u,
        delta: step.delta,
        x,
        played,
        q,
    };
    Ok(&state.played)
}

/// A DRS learner bound to one node.
pub struct DrsAgent {
    pub setup: AgentSetup,
    schedule: Box<dyn Schedule>,
    start: Vec<f64>,
    rng: ChaCha8Rng,
    state: Option<AgentState>,
    warned: bool,
}

impl DrsAgent {
    pub fn new(setup: AgentSetup, schedule: Box<dyn Schedule>, start: Vec<f64>, rng: ChaCha8Rng) -> Self {
        DrsAgent {
            setup,
            schedule,
            start,
            rng,
            state: None,
            warned: false,
        }
    }

    pub fn state(&self) -> Option<&AgentState> {
        self.state.as_ref()
    }

    fn step_at(&mut self, t: u64) -> Result<Step> {
        let step = self.schedule.step(t)?;
        if step.clamped && !self.warned {
            warn!("shrinkage reached 1 at t={t}; clamping to {} until the schedule recovers", step.xi);
            self.warned = true;
        }
        Ok(step)
    }

    /// Action for round `t`. `observed` is the feedback for round `t - 1`
    /// and must be present for every round after the first.
    pub fn act(&mut self, t: u64, observed: Option<Observation>, generation: f64) -> Result<&[f64]> {
        let step = self.step_at(t)?;
        if self.state.is_none() {
            let s = AgentState::initial(&self.start, &step, &self.setup, generation, &mut self.rng)?;
            return Ok(&self.state.insert(s).played);
        }
        let (Some(state), Some(obs)) = (self.state.as_mut(), observed) else {
            return Err(Error::InvalidInput(format!("missing feedback before round {t}")));
        };
        drs_round(state, &step, obs, &self.setup, generation, &mut self.rng)
    }

    pub fn dual(&self) -> f64 {
        self.state.as_ref().map_or(0.0, |s| s.q)
    }
}
