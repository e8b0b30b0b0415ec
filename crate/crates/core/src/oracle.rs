//! Full-information comparators for measuring regret.
//!
//! The learners never see any of this. After (or alongside) a run, each
//! node's per-round loss is rebuilt as a function of that node's own
//! allocation with everyone else's held at what they actually played, and
//! minimized over the node's box (optionally capped by its generation).
//!
//! Two independent solvers are used. The losses are separable and
//! piecewise-linear in the node's coordinates, so an exact greedy fill over
//! marginal-utility segments solves them directly. A generic projected
//! subgradient method refined by coordinate grid search works on any convex
//! landscape and serves as the cross-check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{satisfaction_from_received, Discounts};
use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::network::NetworkGraph;

/// A convex function of one node's allocation vector.
pub trait Landscape: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
    /// Exact minimizer over `region`, when the structure admits one.
    fn exact_minimizer(&self, _region: &Region) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Term {
    /// Slot of the neighbor in the owner's allocation vector.
    coord: usize,
    demand: f64,
    discount: f64,
    /// Range into `contributions`; the owner's entry is replaced on evaluation.
    start: usize,
    len: usize,
    owner_pos: usize,
}

/// Loss of one node at one round as a function of its own allocation.
///
/// Keeps every sender's contribution in the order the harness sums them, so
/// evaluating at the played action reproduces the recorded loss bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodLoss {
    terms: Vec<Term>,
    contributions: Vec<f64>,
}

impl NeighborhoodLoss {
    /// Freezes every other node's allocation at round values.
    pub fn from_round(
        graph: &NetworkGraph,
        owner: usize,
        allocations: &[Vec<f64>],
        demands: &[f64],
        discounts: Option<&Discounts>,
    ) -> Result<Self> {
        if owner >= graph.node_count() {
            return Err(Error::NodeOutOfRange {
                node: owner,
                nodes: graph.node_count(),
            });
        }
        let mut terms = Vec::new();
        let mut contributions = Vec::new();
        for (coord, &j) in graph.members(owner).iter().enumerate() {
            let start = contributions.len();
            let mut owner_pos = 0;
            for (pos, &k) in graph.members(j).iter().enumerate() {
                let sent = allocations[k][graph.slot(k, j).expect("adjacency is symmetric")];
                if k == owner {
                    owner_pos = pos;
                }
                contributions.push(match discounts {
                    Some(c) => c.get(j, k) * sent,
                    None => sent,
                });
            }
            terms.push(Term {
                coord,
                demand: demands[j],
                discount: discounts.map_or(1.0, |c| c.get(j, owner)),
                start,
                len: contributions.len() - start,
                owner_pos,
            });
        }
        Ok(NeighborhoodLoss { terms, contributions })
    }

    fn received(&self, term: &Term, x: &[f64]) -> f64 {
        let own = if term.discount == 1.0 {
            x[term.coord]
        } else {
            term.discount * x[term.coord]
        };
        self.contributions[term.start..term.start + term.len]
            .iter()
            .enumerate()
            .map(|(pos, v)| if pos == term.owner_pos { own } else { *v })
            .sum()
    }

    /// Satisfaction of each neighbor as a line `a + b x_coord`, capped at 1.
    fn lines(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.terms.iter().map(|term| {
            let others: f64 = self.contributions[term.start..term.start + term.len]
                .iter()
                .enumerate()
                .filter(|(pos, _)| *pos != term.owner_pos)
                .map(|(_, v)| v)
                .sum();
            (term.coord, others / term.demand, term.discount / term.demand)
        })
    }
}

impl Landscape for NeighborhoodLoss {
    fn dim(&self) -> usize {
        self.terms.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sats: Vec<f64> = self
            .terms
            .iter()
            .map(|term| satisfaction_from_received(self.received(term, x), term.demand))
            .collect();
        1.0 - sats.iter().sum::<f64>() / sats.len() as f64
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let m = self.terms.len() as f64;
        let mut g = vec![0.0; self.terms.len()];
        for term in &self.terms {
            if self.received(term, x) < term.demand {
                g[term.coord] -= term.discount / term.demand / m;
            }
        }
        g
    }

    fn exact_minimizer(&self, region: &Region) -> Option<Vec<f64>> {
        Some(fill_segments(std::slice::from_ref(self), region))
    }
}

/// Capped lines `min(a + b x, 1)` on one coordinate, sorted by saturation point.
#[derive(Debug, Clone, Default)]
struct CappedLines {
    caps: Vec<f64>,
    /// Sums of `a` and `b` over the lines from index `k` on.
    a_tail: Vec<f64>,
    b_tail: Vec<f64>,
}

impl CappedLines {
    fn new(mut lines: Vec<(f64, f64)>) -> Self {
        lines.sort_by(|p, q| ((1.0 - p.0) / p.1).total_cmp(&((1.0 - q.0) / q.1)));
        let caps = lines.iter().map(|(a, b)| (1.0 - a) / b).collect();
        let mut a_tail = vec![0.0; lines.len() + 1];
        let mut b_tail = vec![0.0; lines.len() + 1];
        for (k, (a, b)) in lines.iter().enumerate().rev() {
            a_tail[k] = a_tail[k + 1] + a;
            b_tail[k] = b_tail[k + 1] + b;
        }
        CappedLines { caps, a_tail, b_tail }
    }

    fn saturated(&self, x: f64) -> usize {
        self.caps.partition_point(|c| *c <= x)
    }

    fn total(&self, x: f64) -> f64 {
        let k = self.saturated(x);
        k as f64 + self.a_tail[k] + x * self.b_tail[k]
    }

    fn slope(&self, x: f64) -> f64 {
        self.b_tail[self.saturated(x)]
    }
}

/// Sum of per-round losses for a fixed-action comparator.
///
/// The rounds are folded into sorted breakpoints per coordinate, so one
/// evaluation costs `O(dim log T)` rather than a pass over every round.
pub struct SummedLoss<'a> {
    rounds: &'a [NeighborhoodLoss],
    coords: Vec<CappedLines>,
    /// Satisfaction from lines that do not depend on the allocation.
    flat: f64,
    scale: f64,
}

impl<'a> SummedLoss<'a> {
    pub fn new(rounds: &'a [NeighborhoodLoss]) -> Self {
        let dim = rounds.first().map_or(0, |r| r.dim());
        let mut lines = vec![Vec::new(); dim];
        let mut flat = 0.0;
        for round in rounds {
            for (coord, a, b) in round.lines() {
                if b > 0.0 {
                    lines[coord].push((a, b));
                } else {
                    flat += a.min(1.0);
                }
            }
        }
        SummedLoss {
            rounds,
            coords: lines.into_iter().map(CappedLines::new).collect(),
            flat,
            scale: if dim == 0 { 0.0 } else { 1.0 / dim as f64 },
        }
    }
}

impl Landscape for SummedLoss<'_> {
    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sat: f64 = self.coords.iter().zip(x).map(|(c, &v)| c.total(v)).sum();
        self.rounds.len() as f64 - self.scale * (self.flat + sat)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.coords.iter().zip(x).map(|(c, &v)| -self.scale * c.slope(v)).collect()
    }

    fn exact_minimizer(&self, region: &Region) -> Option<Vec<f64>> {
        Some(fill_segments(self.rounds, region))
    }
}

/// Greedy fill for a sum of capped linear satisfactions.
///
/// Each coordinate's total satisfaction is concave piecewise-linear, so
/// spending budget on the steepest remaining segment first is optimal
/// (a fractional knapsack over segments).
fn fill_segments(rounds: &[NeighborhoodLoss], region: &Region) -> Vec<f64> {
    let dim = region.dim();
    let lower = region.bounds.lower();
    let upper = region.bounds.upper();
    // per coordinate: (breakpoint, slope lost there), and the slope at the lower bound
    let mut kinks: Vec<Vec<(f64, f64)>> = vec![Vec::new(); dim];
    let mut slope = vec![0.0; dim];
    for round in rounds {
        for (coord, a, b) in round.lines() {
            if b <= 0.0 {
                continue;
            }
            let cap = (1.0 - a) / b;
            if cap > lower[coord] {
                slope[coord] += b;
                kinks[coord].push((cap, b));
            }
        }
    }
    let mut segments = Vec::new();
    for coord in 0..dim {
        let ks = &mut kinks[coord];
        ks.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut at = lower[coord];
        let mut s = slope[coord];
        for &(cap, b) in ks.iter() {
            let end = cap.min(upper[coord]);
            if end > at && s > 0.0 {
                segments.push((s, coord, at, end));
                at = end;
            }
            s -= b;
            if at >= upper[coord] {
                break;
            }
        }
    }
    segments.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.total_cmp(&q.2)));
    let mut x = lower.to_vec();
    let mut room = region.budget.map_or(f64::INFINITY, |b| b - lower.iter().sum::<f64>());
    for (_, coord, start, end) in segments {
        if room <= 0.0 {
            break;
        }
        let take = (end - start).min(room);
        x[coord] += take;
        room -= take;
    }
    region.bounds.project(&x)
}

/// Where comparators may live.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorRegion {
    /// The node's whole allocation box.
    #[default]
    Box,
    /// The box with total allocation capped by generation: each round's
    /// generation for per-round comparators, the mean generation for the
    /// fixed one.
    Budgeted,
}

/// Effort spent by the generic solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub iterations: usize,
    pub grid_points: usize,
    pub sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            iterations: 500,
            grid_points: 201,
            sweeps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
}

fn checked_value<L: Landscape + ?Sized>(f: &L, x: &[f64]) -> Result<f64> {
    let v = f.value(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("comparator loss"))
    }
}

fn start_point(region: &Region) -> Vec<f64> {
    region.project(&region.bounds.center())
}

/// Projected subgradient descent with diminishing steps, keeping the best iterate.
pub fn projected_subgradient<L: Landscape + ?Sized>(f: &L, region: &Region, iterations: usize) -> Result<Minimum> {
    let diameter = region.bounds.enclosing_radius().max(f64::MIN_POSITIVE);
    let mut x = start_point(region);
    let mut best = Minimum {
        value: checked_value(f, &x)?,
        point: x.clone(),
    };
    for k in 1..=iterations {
        let g = f.subgradient(&x);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = diameter / (norm * (k as f64).sqrt());
        let moved: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - step * g).collect();
        x = region.project(&moved);
        let v = checked_value(f, &x)?;
        if v < best.value {
            best = Minimum {
                value: v,
                point: x.clone(),
            };
        }
    }
    Ok(best)
}

/// Coordinate-wise grid search from `from`, keeping the budget satisfied.
pub fn refine_by_grid<L: Landscape + ?Sized>(f: &L, region: &Region, from: Minimum, settings: &SolverSettings) -> Result<Minimum> {
    let mut best = from;
    let n = settings.grid_points.max(2);
    for _ in 0..settings.sweeps {
        let mut improved = false;
        for j in 0..region.dim() {
            let lo = region.bounds.lower()[j];
            let mut hi = region.bounds.upper()[j];
            if let Some(b) = region.budget {
                let rest: f64 = best.point.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| v).sum();
                hi = hi.min(b - rest);
            }
            if hi < lo {
                continue;
            }
            let mut trial = best.point.clone();
            for s in 0..n {
                trial[j] = lo + (hi - lo) * s as f64 / (n - 1) as f64;
                let v = checked_value(f, &trial)?;
                if v < best.value {
                    best = Minimum {
                        value: v,
                        point: trial.clone(),
                    };
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

/// Best point found by the exact solver (if any) and the generic one.
pub fn minimize<L: Landscape + ?Sized>(f: &L, region: &Region, settings: &SolverSettings) -> Result<Minimum> {
    if f.dim() != region.dim() {
        return Err(Error::DimensionMismatch {
            expected: region.dim(),
            got: f.dim(),
        });
    }
    let generic = projected_subgradient(f, region, settings.iterations)?;
    let mut best = refine_by_grid(f, region, generic, settings)?;
    if let Some(p) = f.exact_minimizer(region) {
        let v = checked_value(f, &p)?;
        if v <= best.value {
            best = Minimum { point: p, value: v };
        }
    }
    Ok(best)
}

/// Minimizer of one round's loss over the round's feasible region.
pub fn per_round_minimizer<L: Landscape + ?Sized>(f: &L, region: &Region, settings: &SolverSettings) -> Result<Minimum> {
    minimize(f, region, settings)
}

/// Best fixed action in hindsight for the summed loss.
pub fn best_fixed_action(rounds: &[NeighborhoodLoss], region: &Region, settings: &SolverSettings) -> Result<Minimum> {
    if rounds.is_empty() {
        return Err(Error::InvalidInput("no rounds to minimize over".into()));
    }
    minimize(&SummedLoss::new(rounds), region, settings)
}

/// Exhaustive grid minimum for one- and two-dimensional regions.
pub fn grid_minimum<L: Landscape + ?Sized>(f: &L, region: &Region, points: usize) -> Result<Minimum> {
    let dim = region.dim();
    if !(1..=2).contains(&dim) {
        return Err(Error::param("dim", format!("grid search supports 1 or 2 coordinates, got {dim}")));
    }
    let n = points.max(2);
    let axis = |j: usize| -> Vec<f64> {
        let (lo, hi) = (region.bounds.lower()[j], region.bounds.upper()[j]);
        (0..n).map(|s| lo + (hi - lo) * s as f64 / (n - 1) as f64).collect()
    };
    let xs = axis(0);
    let ys = if dim == 2 { axis(1) } else { vec![f64::NAN] };
    let mut best: Option<Minimum> = None;
    for &x in &xs {
        for &y in &ys {
            let p = if dim == 2 { vec![x, y] } else { vec![x] };
            if !region.contains(&p, 0.0) {
                continue;
            }
            let v = checked_value(f, &p)?;
            if best.as_ref().is_none_or(|b| v < b.value) {
                best = Some(Minimum { point: p, value: v });
            }
        }
    }
    best.ok_or_else(|| Error::InvalidInput("no grid point is feasible".into()))
}

/// Arbitrary function with a finite-difference subgradient.
pub struct FnLandscape<F: Fn(&[f64]) -> f64 + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Landscape for FnLandscape<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let h = 1e-7;
        (0..self.dim)
            .map(|j| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[j] += h;
                m[j] -= h;
                ((self.f)(&p) - (self.f)(&m)) / (2.0 * h)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    Dynamic,
    Static,
    User,
}

/// One node's comparator points, one per round.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparatorSequence {
    pub kind: ComparatorKind,
    pub points: Vec<Vec<f64>>,
}

impl ComparatorSequence {
    pub fn constant(point: Vec<f64>, rounds: usize) -> Self {
        ComparatorSequence {
            kind: ComparatorKind::Static,
            points: vec![point; rounds],
        }
    }

    pub fn path_length(&self) -> f64 {
        path_length(&self.points)
    }
}

/// `sum_t |u_t - u_{t-1}|`.
pub fn path_length(points: &[Vec<f64>]) -> f64 {
    points
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .sum()
}

/// Fraction of `trials` random feasible points the minimizer does not lose to.
pub fn audit<L: Landscape + ?Sized, R: Rng + ?Sized>(
    f: &L,
    region: &Region,
    minimum: &Minimum,
    trials: usize,
    rng: &mut R,
) -> Result<bool> {
    for _ in 0..trials {
        let p = region.sample(rng);
        if checked_value(f, &p)? < minimum.value {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{loss, AllocationVector};
    use crate::feasible::BoxSet;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn region(dim: usize, side: f64, budget: Option<f64>) -> Region {
        Region::new(BoxSet::cube(dim, side).unwrap(), budget).unwrap()
    }

    #[test]
    fn constant_loss_returns_the_constant() {
        let f = FnLandscape { dim: 2, f: |_: &[f64]| 0.7 };
        let m = per_round_minimizer(&f, &region(2, 10.0, None), &SolverSettings::default()).unwrap();
        assert_eq!(m.value, 0.7);
    }

    #[test]
    fn monotone_piece_is_minimized_at_the_top() {
        let f = FnLandscape {
            dim: 1,
            f: |x: &[f64]| 1.0 - (x[0] / 10.0).min(1.0),
        };
        let m = per_round_minimizer(&f, &region(1, 10.0, None), &SolverSettings::default()).unwrap();
        assert!((m.point[0] - 10.0).abs() < 1e-9 && m.value.abs() < 1e-12);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let f = FnLandscape {
            dim: 1,
            f: |_: &[f64]| f64::NAN,
        };
        assert!(per_round_minimizer(&f, &region(1, 1.0, None), &SolverSettings::default()).is_err());
    }

    fn pair_graph() -> NetworkGraph {
        NetworkGraph::from_edges(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn folded_sum_matches_round_by_round_sum() {
        let g = NetworkGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let disc = Discounts::with_edges(0.8, &[(0, 2, 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for c in [None, Some(&disc)] {
            let rounds: Vec<NeighborhoodLoss> = (0..300)
                .map(|_| {
                    let allocs: Vec<Vec<f64>> = (0..4)
                        .map(|k| (0..g.members(k).len()).map(|_| rng.random::<f64>() * 4.0).collect())
                        .collect();
                    let demands: Vec<f64> = (0..4).map(|_| 1.0 + rng.random::<f64>() * 6.0).collect();
                    NeighborhoodLoss::from_round(&g, 2, &allocs, &demands, c).unwrap()
                })
                .collect();
            let folded = SummedLoss::new(&rounds);
            for _ in 0..200 {
                let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 8.0).collect();
                let naive: f64 = rounds.iter().map(|r| r.value(&x)).sum();
                assert!((folded.value(&x) - naive).abs() < 1e-9);
                let mut grad = vec![0.0; 4];
                for r in &rounds {
                    grad.iter_mut().zip(r.subgradient(&x)).for_each(|(a, v)| *a += v);
                }
                for (a, b) in folded.subgradient(&x).iter().zip(&grad) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rebuilt_loss_reproduces_the_recorded_one() {
        let g = NetworkGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let allocs: Vec<Vec<f64>> = (0..4)
                .map(|k| (0..g.members(k).len()).map(|_| rng.random::<f64>() * 5.0).collect())
                .collect();
            let demands: Vec<f64> = (0..4).map(|_| 1.0 + rng.random::<f64>() * 6.0).collect();
            let av: Vec<AllocationVector> =
                allocs.iter().enumerate().map(|(k, v)| AllocationVector::new(k, v.clone()).unwrap()).collect();
            for i in 0..4 {
                let f = NeighborhoodLoss::from_round(&g, i, &allocs, &demands, None).unwrap();
                assert_eq!(f.value(&allocs[i]), loss(&g, i, &av, &demands).unwrap());
            }
        }
    }

    #[test]
    fn two_dimensional_instance_against_grid() {
        let g = pair_graph();
        let allocs = vec![vec![1.0, 2.0], vec![3.0, 1.5]];
        let f = NeighborhoodLoss::from_round(&g, 0, &allocs, &[6.0, 5.0], None).unwrap();
        for budget in [None, Some(4.0), Some(9.0)] {
            let r = region(2, 8.0, budget);
            let m = per_round_minimizer(&f, &r, &SolverSettings::default()).unwrap();
            let grid = grid_minimum(&f, &r, 201).unwrap();
            assert!(m.value <= grid.value + 1e-9, "budget {budget:?}");
            assert!(r.contains(&m.point, 1e-9));
        }
    }

    #[test]
    fn exact_and_generic_solvers_agree() {
        let g = NetworkGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let settings = SolverSettings::default();
        for _ in 0..30 {
            let allocs: Vec<Vec<f64>> = (0..4)
                .map(|k| (0..g.members(k).len()).map(|_| rng.random::<f64>() * 4.0).collect())
                .collect();
            let demands: Vec<f64> = (0..4).map(|_| 2.0 + rng.random::<f64>() * 8.0).collect();
            let f = NeighborhoodLoss::from_round(&g, 0, &allocs, &demands, None).unwrap();
            let r = region(4, 10.0, Some(rng.random::<f64>() * 20.0));
            let exact = f.exact_minimizer(&r).unwrap();
            let generic = refine_by_grid(&f, &r, projected_subgradient(&f, &r, 500).unwrap(), &settings).unwrap();
            assert!(f.value(&exact) <= generic.value + 1e-12);
            assert!(f.value(&exact) <= generic.value + 1e-9);
        }
    }

    #[test]
    fn best_fixed_action_examples() {
        let g = pair_graph();
        let r = region(2, 10.0, Some(8.0));
        let settings = SolverSettings::default();
        let one = NeighborhoodLoss::from_round(&g, 0, &[vec![1.0, 1.0], vec![1.0, 2.0]], &[5.0, 7.0], None).unwrap();
        let single = best_fixed_action(std::slice::from_ref(&one), &r, &settings).unwrap();
        let round = per_round_minimizer(&one, &r, &settings).unwrap();
        assert_eq!(single.value, round.value);
        let repeated = vec![one.clone(); 5];
        let fixed = best_fixed_action(&repeated, &r, &settings).unwrap();
        assert!((fixed.value - 5.0 * round.value).abs() < 1e-12);
    }

    #[test]
    fn conflicting_rounds_match_grid_of_the_sum() {
        let g = NetworkGraph::from_edges(1, &[]).unwrap();
        let a = NeighborhoodLoss::from_round(&g, 0, &[vec![0.0]], &[2.0], None).unwrap();
        let b = NeighborhoodLoss::from_round(&g, 0, &[vec![0.0]], &[9.0], None).unwrap();
        let rounds = vec![a, b];
        let r = region(1, 10.0, Some(6.0));
        let m = best_fixed_action(&rounds, &r, &SolverSettings::default()).unwrap();
        let grid = grid_minimum(&SummedLoss::new(&rounds), &r, 201).unwrap();
        assert!(m.value <= grid.value + 1e-12);
        // round a saturates at 2, round b keeps paying until the budget binds
        assert!((m.point[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(ComparatorSequence::constant(vec![1.0, 2.0], 10).path_length(), 0.0);
        assert_eq!(path_length(&[vec![0.0, 0.0], vec![3.0, 0.0]]), 3.0);
        let stairs: Vec<Vec<f64>> = (0..5).map(|k| vec![k as f64]).collect();
        assert_eq!(path_length(&stairs), 4.0);
        assert_eq!(path_length(&[vec![1.0]]), 0.0);
    }

    #[test]
    fn minimizer_beats_random_points() {
        let g = NetworkGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let allocs = vec![vec![2.0, 1.0], vec![0.5, 3.0, 1.0], vec![1.0, 2.0]];
        let f = NeighborhoodLoss::from_round(&g, 1, &allocs, &[4.0, 6.0, 5.0], None).unwrap();
        let r = region(3, 8.0, Some(7.0));
        let m = per_round_minimizer(&f, &r, &SolverSettings::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(audit(&f, &r, &m, 100, &mut rng).unwrap());
    }

    proptest! {
        #[test]
        fn discounted_subgradient_is_a_supporting_slope(
            own in prop::collection::vec(0.0f64..6.0, 2),
            probe in prop::collection::vec(0.0f64..6.0, 2),
            other in 0.0f64..4.0,
            c in 0.1f64..1.0,
        ) {
            let g = pair_graph();
            let disc = Discounts::uniform(c).unwrap();
            let allocs = vec![own.clone(), vec![other, 1.0]];
            let f = NeighborhoodLoss::from_round(&g, 0, &allocs, &[5.0, 4.0], Some(&disc)).unwrap();
            let sg = f.subgradient(&own);
            let lin = f.value(&own) + sg.iter().zip(probe.iter().zip(&own)).map(|(s, (p, o))| s * (p - o)).sum::<f64>();
            prop_assert!(f.value(&probe) >= lin - 1e-12);
        }
    }
}
