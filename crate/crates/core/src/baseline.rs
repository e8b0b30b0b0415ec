//! Constant-hyperparameter bandit saddle-point baseline.
//!
//! Runs the same estimator and primal-dual recursion as the base learner, but
//! with every hyperparameter frozen at the value the decaying schedule takes
//! partway through the horizon, and with no adjustment step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::drs::{drs_round, drs_schedule, AgentSetup, AgentState, DrsAgent, FrozenSchedule, Observation, ProblemConstants, Step};
use crate::error::{Error, Result};

/// Hyperparameters frozen at round `max(1, round(freeze * T))`.
pub fn bansap_step(c: &ProblemConstants, horizon: u64, freeze: f64, path_length: f64, xi_clamp: f64) -> Result<Step> {
    if !(0.0..=1.0).contains(&freeze) {
        return Err(Error::param("bansap_freeze", format!("must lie in [0, 1], got {freeze}")));
    }
    let at = ((horizon as f64 * freeze).round() as u64).max(1);
    drs_schedule(at, c, path_length, xi_clamp)
}

/// One baseline round; identical to the base learner's update under constant hyperparameters.
pub fn bansap_round<'s, R: Rng + ?Sized>(
    state: &'s mut AgentState,
    step: &Step,
    observed: Observation,
    setup: &AgentSetup,
    generation: f64,
    rng: &mut R,
) -> Result<&'s [f64]> {
    if setup.adjustment.is_some() {
        return Err(Error::InvalidInput("the baseline never adjusts its actions".into()));
    }
    drs_round(state, step, observed, setup, generation, rng)
}

/// Baseline learner: a base learner on a frozen schedule with adjustment off.
pub fn bansap_agent(mut setup: AgentSetup, step: Step, start: Vec<f64>, rng: ChaCha8Rng) -> DrsAgent {
    setup.adjustment = None;
    DrsAgent::new(setup, Box::new(FrozenSchedule(step)), start, rng)
}
