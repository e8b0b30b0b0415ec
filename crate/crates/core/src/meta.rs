//! Step-size ensemble for non-stationary environments.
//!
//! Each agent runs `K` copies of the primal update, one per step size on a
//! geometric grid, all driven by the same gradient estimate. An exponentially
//! weighted forecaster scores the copies on a linear surrogate of the loss and
//! the agent plays the weighted average of their iterates.

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::drs::{
    clamp_shrinkage, estimate_direction, sample_unit_vector, update_dual, update_primal, AgentSetup, AgentState,
    Observation, ProblemConstants, Schedule, Step,
};
use crate::error::{Error, Result};
use crate::feasible::project_shrunk;

/// `ceil(log2(1 + T) / 2) + 1`, computed in integers.
pub fn expert_count(horizon: u64) -> Result<usize> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let n = horizon.checked_add(1).ok_or_else(|| Error::param("horizon", "too large"))?;
    let ceil_log2 = n.next_power_of_two().trailing_zeros() as usize;
    Ok(ceil_log2.div_ceil(2) + 1)
}

/// Prior weights `(K + 1) / K * 1 / (k (k + 1))`; they telescope to 1.
pub fn initial_weights(k: usize) -> Vec<f64> {
    let kf = k as f64;
    (1..=k)
        .map(|j| {
            let j = j as f64;
            (kf + 1.0) / kf / (j * (j + 1.0))
        })
        .collect()
}

/// Smallest grid step `sqrt(R^3 / (|N| F Lt)) t^(-3/4)`; expert `k` uses `2^(k-1)` times this.
pub fn base_step_size(t: u64, c: &ProblemConstants) -> f64 {
    let r = c.enclosing_radius;
    let nf = c.neighbors as f64 * c.loss_bound;
    (2.0 * r.powi(3) / (2.0 * nf * c.smoothed_lipschitz())).sqrt() * (t as f64).powf(-0.75)
}

pub fn pool_step_sizes(t: u64, c: &ProblemConstants, k: usize) -> Vec<f64> {
    let base = base_step_size(t, c);
    (0..k).map(|j| base * 2f64.powi(j as i32)).collect()
}

/// Exploration radius with the path-length-free exponent.
pub fn meta_delta(t: u64, c: &ProblemConstants) -> f64 {
    let nf = c.neighbors as f64 * c.loss_bound;
    (nf * c.enclosing_radius / c.smoothed_lipschitz()).sqrt() * (t as f64).powf(-0.25)
}

/// `sqrt(1 / (2 T G^2 R^2))` where `G` bounds the gradient estimate.
pub fn meta_rate(horizon: u64, gradient_bound: f64, radius: f64) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::param("horizon", "must be >= 1"));
    }
    let gr = gradient_bound * radius;
    if !(gr.is_finite() && gr > 0.0) {
        return Err(Error::param("meta_rate", format!("gradient bound times radius must be > 0, got {gr}")));
    }
    Ok((1.0 / (2.0 * horizon as f64 * gr * gr)).sqrt())
}

/// Learning rate from the horizon's exploration radius: `G = dim F / delta_T`.
pub fn default_meta_rate(horizon: u64, c: &ProblemConstants, xi_clamp: f64) -> Result<f64> {
    let step = MetaSchedule::new(*c, horizon, xi_clamp, false).step(horizon)?;
    let grad = c.dim as f64 * c.loss_bound / step.delta;
    meta_rate(horizon, grad, c.enclosing_radius)
}

/// Hyperparameters for the ensemble. `eta` is the base grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaSchedule {
    pub constants: ProblemConstants,
    pub horizon: u64,
    pub xi_clamp: f64,
    /// Hold the exploration radius at its horizon value instead of decaying it.
    pub constant_delta: bool,
}

impl MetaSchedule {
    pub fn new(constants: ProblemConstants, horizon: u64, xi_clamp: f64, constant_delta: bool) -> Self {
        MetaSchedule {
            constants,
            horizon,
            xi_clamp,
            constant_delta,
        }
    }
}

impl Schedule for MetaSchedule {
    fn step(&self, t: u64) -> Result<Step> {
        if t == 0 {
            return Err(Error::param("t", "rounds are numbered from 1"));
        }
        let c = &self.constants;
        c.validate()?;
        let tf = t as f64;
        let delta = meta_delta(if self.constant_delta { self.horizon } else { t }, c);
        let (delta, xi, clamped) = clamp_shrinkage(delta, delta / c.inscribed_radius, c.inscribed_radius, self.xi_clamp);
        Ok(Step {
            delta,
            eta: base_step_size(t, c),
            beta: 1.0 / (c.constraint_bound * tf.sqrt()),
            gamma: 1.0 / (c.constraint_bound * c.constraint_bound * tf.sqrt()),
            xi,
            clamped,
        })
    }
}

/// Linearized loss `<gradient, z - anchor>`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateLoss {
    pub gradient: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl SurrogateLoss {
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.gradient
            .iter()
            .zip(z.iter().zip(&self.anchor))
            .map(|(g, (z, a))| g * (z - a))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPool {
    pub iterates: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl ExpertPool {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Pool for horizon `T` with every expert starting at `start`.
pub fn build_pool(horizon: u64, start: &[f64]) -> Result<ExpertPool> {
    let k = expert_count(horizon)?;
    Ok(ExpertPool {
        iterates: vec![start.to_vec(); k],
        weights: initial_weights(k),
    })
}

/// One expert's projected gradient step; the same map as the base learner.
pub fn expert_step(z: &[f64], direction: &[f64], eta: f64, setup: &AgentSetup, xi: f64) -> Result<Vec<f64>> {
    update_primal(z, direction, eta, &setup.bounds, xi)
}

/// Weighted average of the expert iterates.
pub fn combine(pool: &ExpertPool) -> Vec<f64> {
    let dim = pool.iterates.first().map_or(0, Vec::len);
    let mut z = vec![0.0; dim];
    for (w, it) in pool.weights.iter().zip(&pool.iterates) {
        for (acc, v) in z.iter_mut().zip(it) {
            *acc += w * v;
        }
    }
    z
}

/// Exponentially weighted update, stabilized by subtracting the largest exponent.
pub fn update_weights(weights: &[f64], losses: &[f64], rate: f64) -> Result<Vec<f64>> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param("meta_rate", format!("must be finite and >= 0, got {rate}")));
    }
    if weights.len() != losses.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: losses.len(),
        });
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("surrogate loss"));
    }
    if rate == 0.0 || losses.iter().all(|l| *l == losses[0]) {
        return Ok(weights.to_vec());
    }
    let logs: Vec<f64> = weights
        .iter()
        .zip(losses)
        .map(|(w, l)| if *w > 0.0 { w.ln() - rate * l } else { f64::NEG_INFINITY })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// One ensemble round. The surrogate is anchored at last round's combined
/// iterate; weights are updated on the experts' previous iterates, then every
/// expert steps along the shared estimate and the new combination is played.
#[allow(clippy::too_many_arguments)]
pub fn mansdrs_round<'s, R: Rng + ?Sized>(
    pool: &mut ExpertPool,
    state: &'s mut AgentState,
    step: &Step,
    observed: Observation,
    rate: f64,
    setup: &AgentSetup,
    generation: f64,
    rng: &mut R,
) -> Result<&'s [f64]> {
    let dim = setup.dim();
    let q = update_dual(state.q, observed.constraint, step.gamma, step.beta);
    let direction = estimate_direction(observed.loss, observed.constraint, &state.u, q, state.delta, dim)?;
    let surrogate = SurrogateLoss {
        gradient: direction,
        anchor: state.z.clone(),
    };
    let losses: Vec<f64> = pool.iterates.iter().map(|z| surrogate.eval(z)).collect();
    pool.weights = update_weights(&pool.weights, &losses, rate)?;
    let mut eta = step.eta;
    for z in pool.iterates.iter_mut() {
        *z = expert_step(z, &surrogate.gradient, eta, setup, step.xi)?;
        eta *= 2.0;
    }
    let z = combine(pool);
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

/// An ensemble learner bound to one node.
pub struct MetaAgent {
    pub setup: AgentSetup,
    schedule: Box<dyn Schedule>,
    horizon: u64,
    rate: f64,
    start: Vec<f64>,
    rng: ChaCha8Rng,
    pool: Option<ExpertPool>,
    state: Option<AgentState>,
    warned: bool,
}

impl MetaAgent {
    pub fn new(
        setup: AgentSetup,
        schedule: Box<dyn Schedule>,
        horizon: u64,
        rate: f64,
        start: Vec<f64>,
        rng: ChaCha8Rng,
    ) -> Self {
        MetaAgent {
            setup,
            schedule,
            horizon,
            rate,
            start,
            rng,
            pool: None,
            state: None,
            warned: false,
        }
    }

    /// Replaces the pool built on the first round, e.g. to fix `K`.
    pub fn with_pool_size(mut self, k: usize) -> Self {
        self.pool = Some(ExpertPool {
            iterates: Vec::new(),
            weights: initial_weights(k),
        });
        self
    }

    pub fn pool(&self) -> Option<&ExpertPool> {
        self.pool.as_ref()
    }

    pub fn state(&self) -> Option<&AgentState> {
        self.state.as_ref()
    }

    pub fn dual(&self) -> f64 {
        self.state.as_ref().map_or(0.0, |s| s.q)
    }

    pub fn act(&mut self, t: u64, observed: Option<Observation>, generation: f64) -> Result<&[f64]> {
        let step = self.schedule.step(t)?;
        if step.clamped && !self.warned {
            warn!("shrinkage reached 1 at t={t}; clamping to {}", step.xi);
            self.warned = true;
        }
        if self.state.is_none() {
            let z0 = project_shrunk(&self.start, &self.setup.bounds, step.xi)?;
            let pool = match self.pool.take() {
                Some(p) => ExpertPool {
                    iterates: vec![z0; p.weights.len()],
                    weights: p.weights,
                },
                None => build_pool(self.horizon, &z0)?,
            };
            self.pool = Some(pool);
            let s = AgentState::initial(&self.start, &step, &self.setup, generation, &mut self.rng)?;
            return Ok(&self.state.insert(s).played);
        }
        let (Some(state), Some(pool), Some(obs)) = (self.state.as_mut(), self.pool.as_mut(), observed) else {
            return Err(Error::InvalidInput(format!("missing feedback before round {t}")));
        };
        mansdrs_round(pool, state, &step, obs, self.rate, &self.setup, generation, &mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drs::{AdjustMode, DrsAgent};
    use crate::feasible::BoxSet;
    use rand::SeedableRng;

    #[test]
    fn expert_counts() {
        assert_eq!(expert_count(15).unwrap(), 3);
        assert_eq!(expert_count(255).unwrap(), 5);
        assert_eq!(expert_count(1).unwrap(), 2);
        assert!(expert_count(0).is_err());
        // against the floating-point formula away from exact powers
        for t in [2u64, 3, 7, 100, 1000, 20_000, 99_999] {
            let want = (0.5 * ((1 + t) as f64).log2()).ceil() as usize + 1;
            assert_eq!(expert_count(t).unwrap(), want, "T={t}");
        }
    }

    #[test]
    fn prior_weights_telescope() {
        let w = initial_weights(3);
        let want = [2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        for k in 1..40 {
            assert!((initial_weights(k).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn constants() -> ProblemConstants {
        ProblemConstants {
            neighbors: 2,
            dim: 3,
            loss_bound: 1.0,
            constraint_bound: 30.0,
            enclosing_radius: 10.0 * 3f64.sqrt(),
            inscribed_radius: 5.0,
            lipschitz: 0.1,
        }
    }

    #[test]
    fn grid_brackets_the_ideal_step() {
        let c = constants();
        let r = c.enclosing_radius;
        let lt = c.smoothed_lipschitz();
        let nf = c.neighbors as f64;
        for horizon in [10u64, 1000, 100_000] {
            let k = expert_count(horizon).unwrap();
            let t = horizon / 2 + 1;
            let grid = pool_step_sizes(t, &c, k);
            for frac in [0.0, 1e-4, 0.01, 0.3, 1.0] {
                let p = frac * 2.0 * r * horizon as f64;
                let ideal = (r * (2.0 * r * r + r * p) / (nf * lt)).sqrt() * (t as f64).powf(-0.75);
                assert!(
                    grid.iter().any(|e| *e <= ideal * (1.0 + 1e-12) && ideal <= 2.0 * e * (1.0 + 1e-12)),
                    "T={horizon} P={p}"
                );
            }
        }
    }

    #[test]
    fn rate_examples() {
        assert!((meta_rate(2, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(meta_rate(3, 1.0, 1.0).unwrap() < meta_rate(2, 1.0, 1.0).unwrap());
        let a = meta_rate(10, 2.0, 1.0).unwrap();
        let b = meta_rate(10, 4.0, 1.0).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(meta_rate(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn weight_update_examples() {
        let w = update_weights(&[0.5, 0.5], &[0.0, 1.0], 2f64.ln()).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
        let prior = initial_weights(4);
        assert_eq!(update_weights(&prior, &[0.0; 4], 0.7).unwrap(), prior);
        let same = update_weights(&prior, &[3.0; 4], 0.7).unwrap();
        for (a, b) in same.iter().zip(&prior) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = update_weights(&prior, &[1.0, 2.0, 3.0, 4.0], 0.0).unwrap();
        for (a, b) in w.iter().zip(&prior) {
            assert!((a - b).abs() < 1e-15);
        }
        // huge exponents stay finite
        let w = update_weights(&[0.5, 0.5], &[-1e6, 1e6], 1.0).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
        assert!(update_weights(&[0.5, 0.5], &[0.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let pool = ExpertPool {
            iterates: vec![vec![0.0, 0.0], vec![2.0, 2.0]],
            weights: vec![0.25, 0.75],
        };
        assert_eq!(combine(&pool), vec![1.5, 1.5]);
        let pool = ExpertPool {
            iterates: vec![vec![3.0, 1.0], vec![7.0, 7.0]],
            weights: vec![1.0, 0.0],
        };
        assert_eq!(combine(&pool), vec![3.0, 1.0]);
    }

    #[test]
    fn surrogate_vanishes_at_anchor() {
        let s = SurrogateLoss {
            gradient: vec![1.5, -2.0],
            anchor: vec![3.0, 4.0],
        };
        assert_eq!(s.eval(&[3.0, 4.0]), 0.0);
        assert_eq!(s.eval(&[4.0, 4.0]), 1.5);
    }

    fn setup() -> AgentSetup {
        AgentSetup {
            bounds: BoxSet::cube(3, 10.0).unwrap(),
            self_slot: 1,
            adjustment: Some(AdjustMode::Proportional),
        }
    }

    #[test]
    fn expert_steps_scale_with_step_size() {
        let s = setup();
        let z = [5.0, 5.0, 5.0];
        let dir = [1.0, -0.5, 0.25];
        let a = expert_step(&z, &dir, 0.5, &s, 0.1).unwrap();
        let b = expert_step(&z, &dir, 1.0, &s, 0.1).unwrap();
        for k in 0..3 {
            assert_eq!(b[k] - z[k], 2.0 * (a[k] - z[k]));
        }
        assert_eq!(expert_step(&z, &[0.0; 3], 1.0, &s, 0.1).unwrap(), z.to_vec());
        let far = expert_step(&z, &[100.0, -100.0, 0.0], 1.0, &s, 0.1).unwrap();
        assert_eq!(far, vec![0.5, 9.5, 5.0]);
    }

    #[test]
    fn single_expert_matches_base_learner() {
        let c = constants();
        let horizon = 3000;
        let sched = MetaSchedule::new(c, horizon, 0.5, false);
        let mut drs = DrsAgent::new(setup(), Box::new(sched.clone()), vec![4.0; 3], ChaCha8Rng::seed_from_u64(3));
        let mut meta = MetaAgent::new(setup(), Box::new(sched), horizon, 0.05, vec![4.0; 3], ChaCha8Rng::seed_from_u64(3))
            .with_pool_size(1);
        let mut env = ChaCha8Rng::seed_from_u64(8);
        let mut obs = None;
        for t in 1..=horizon {
            let d = 2.0 + 10.0 * env.random::<f64>();
            let a = drs.act(t, obs, d).unwrap().to_vec();
            let b = meta.act(t, obs, d).unwrap().to_vec();
            assert_eq!(a, b, "t={t}");
            assert_eq!(drs.state().unwrap(), meta.state().unwrap());
            obs = Some(Observation {
                loss: env.random(),
                constraint: a.iter().sum::<f64>() - d,
            });
        }
    }

    #[test]
    fn weights_stay_on_simplex() {
        let c = constants();
        let horizon = 2000;
        let sched = MetaSchedule::new(c, horizon, 0.5, false);
        let rate = default_meta_rate(horizon, &c, 0.5).unwrap() * 50.0;
        let mut meta = MetaAgent::new(setup(), Box::new(sched), horizon, rate, vec![4.0; 3], ChaCha8Rng::seed_from_u64(1));
        let mut env = ChaCha8Rng::seed_from_u64(2);
        let mut obs = None;
        for t in 1..=horizon {
            let d = 12.0 * env.random::<f64>();
            let x = meta.act(t, obs, d).unwrap().to_vec();
            let w = &meta.pool().unwrap().weights;
            assert_eq!(w.len(), expert_count(horizon).unwrap());
            assert!(w.iter().all(|v| *v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            obs = Some(Observation {
                loss: env.random(),
                constraint: x.iter().sum::<f64>() - d,
            });
        }
    }

    #[test]
    fn zero_feedback_keeps_prior_weights() {
        let c = constants();
        let sched = MetaSchedule::new(c, 100, 0.5, false);
        let mut meta = MetaAgent::new(setup(), Box::new(sched), 100, 0.3, vec![4.0; 3], ChaCha8Rng::seed_from_u64(1));
        let zero = Observation {
            loss: 0.0,
            constraint: 0.0,
        };
        meta.act(1, None, 100.0).unwrap();
        for t in 2..=100 {
            meta.act(t, Some(zero), 100.0).unwrap();
        }
        assert_eq!(meta.pool().unwrap().weights, initial_weights(expert_count(100).unwrap()));
    }

    #[test]
    fn two_expert_hand_trace() {
        let setup = AgentSetup {
            bounds: BoxSet::cube(1, 10.0).unwrap(),
            self_slot: 0,
            adjustment: None,
        };
        let step = Step {
            delta: 1.0,
            eta: 0.5,
            beta: 0.5,
            gamma: 0.2,
            xi: 0.2,
            clamped: false,
        };
        let rate = 0.5;
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut state = AgentState::initial(&[5.0], &step, &setup, 10.0, &mut r).unwrap();
        let mut pool = ExpertPool {
            iterates: vec![vec![5.0], vec![5.0]],
            weights: initial_weights(2),
        };
        let (mut z1, mut z2, mut w1, mut w2, mut q) = (5.0f64, 5.0f64, 0.75f64, 0.25f64, 0.0f64);
        let mut anchor = 5.0f64;
        for (f, g) in [(0.6, 1.0), (0.2, -0.5), (0.9, 0.3)] {
            let u = state.u[0];
            q = (q + 0.2 * (g - 0.5 * q)).max(0.0);
            let grad = (f + g * q) * u;
            let (a1, a2) = (w1 * (-rate * grad * (z1 - anchor)).exp(), w2 * (-rate * grad * (z2 - anchor)).exp());
            (w1, w2) = (a1 / (a1 + a2), a2 / (a1 + a2));
            z1 = (z1 - 0.5 * grad).clamp(1.0, 9.0);
            z2 = (z2 - 1.0 * grad).clamp(1.0, 9.0);
            anchor = w1 * z1 + w2 * z2;
            let obs = Observation { loss: f, constraint: g };
            let x = mansdrs_round(&mut pool, &mut state, &step, obs, rate, &setup, 10.0, &mut r)
                .unwrap()
                .to_vec();
            assert!((pool.iterates[0][0] - z1).abs() < 1e-12 && (pool.iterates[1][0] - z2).abs() < 1e-12);
            assert!((pool.weights[0] - w1).abs() < 1e-12 && (pool.weights[1] - w2).abs() < 1e-12);
            assert!((state.z[0] - anchor).abs() < 1e-12);
            assert!((x[0] - (anchor + state.u[0])).abs() < 1e-12);
        }
        // the experts have separated, so the surrogate moved weight
        assert!(z1 != z2 && w1 != 0.75);
    }
}
