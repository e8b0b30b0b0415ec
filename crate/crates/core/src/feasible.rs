//! Box action sets, their centered shrinkage, and budget-capped regions.

use rand::Rng;

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]` in allocation space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidInput("box must have at least one coordinate".into()));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidInput(format!("bad bounds [{lo}, {hi}] on coordinate {k}")));
            }
        }
        Ok(BoxSet { lower, upper })
    }

    /// `[0, side]^dim`.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![side; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Diameter of the box; every pair of points is at most this far apart.
    pub fn enclosing_radius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Radius of the largest ball around the center that fits inside.
    pub fn inscribed_radius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(f64::INFINITY, f64::min)
    }

    /// The box scaled by `1 - xi` about its center.
    pub fn shrunk(&self, xi: f64) -> Result<BoxSet> {
        if !(0.0..1.0).contains(&xi) {
            return Err(Error::param("xi", format!("shrinkage must lie in [0, 1), got {xi}")));
        }
        let scale = 1.0 - xi;
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let c = 0.5 * (l + u);
                let h = 0.5 * (u - l) * scale;
                (c - h, c + h)
            })
            .unzip();
        Ok(BoxSet { lower, upper })
    }

    /// Euclidean projection (per-coordinate clamp).
    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }
}

/// Projection onto `(1 - xi) * bounds`, scaled about the box center.
pub fn project_shrunk(p: &[f64], bounds: &BoxSet, xi: f64) -> Result<Vec<f64>> {
    if p.len() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            expected: bounds.dim(),
            got: p.len(),
        });
    }
    Ok(bounds.shrunk(xi)?.project(p))
}

/// A box intersected with an optional total-allocation budget `sum(x) <= budget`.
///
/// Comparators must be feasible for the round's constraint, so regret oracles
/// search over this set rather than the bare box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub bounds: BoxSet,
    pub budget: Option<f64>,
}

impl Region {
    pub fn new(bounds: BoxSet, budget: Option<f64>) -> Result<Self> {
        if let Some(b) = budget {
            let floor: f64 = bounds.lower().iter().sum();
            if !b.is_finite() || b < floor {
                return Err(Error::param(
                    "budget",
                    format!("budget {b} is below the box's minimum total {floor}"),
                ));
            }
        }
        Ok(Region { bounds, budget })
    }

    pub fn unbounded(bounds: BoxSet) -> Self {
        Region { bounds, budget: None }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.bounds.contains(p, tol) && self.budget.is_none_or(|b| p.iter().sum::<f64>() <= b + tol)
    }

    /// Euclidean projection onto box ∩ {sum <= budget}, by bisection on the
    /// multiplier of the budget constraint.
    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        let clamped = self.bounds.project(p);
        let Some(budget) = self.budget else {
            return clamped;
        };
        if clamped.iter().sum::<f64>() <= budget {
            return clamped;
        }
        let shifted = |lambda: f64| -> Vec<f64> {
            let shifted: Vec<f64> = p.iter().map(|v| v - lambda).collect();
            self.bounds.project(&shifted)
        };
        let mut lo = 0.0;
        let mut hi = p
            .iter()
            .zip(self.bounds.lower())
            .map(|(v, l)| v - l)
            .fold(0.0_f64, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if shifted(mid).iter().sum::<f64>() > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        shifted(hi)
    }

    /// Random feasible point: uniform on the box by rejection, falling back to
    /// a pull toward the lower corner when the budget is tight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let draw = |rng: &mut R| -> Vec<f64> {
            self.bounds
                .lower()
                .iter()
                .zip(self.bounds.upper())
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect()
        };
        let Some(budget) = self.budget else {
            return draw(rng);
        };
        for _ in 0..256 {
            let p = draw(rng);
            if p.iter().sum::<f64>() <= budget {
                return p;
            }
        }
        let p = draw(rng);
        let floor: f64 = self.bounds.lower().iter().sum();
        let excess: f64 = p.iter().sum::<f64>() - floor;
        let room = budget - floor;
        let s = if excess > 0.0 { (room / excess).min(1.0) } else { 1.0 };
        p.iter()
            .zip(self.bounds.lower())
            .map(|(v, l)| l + (v - l) * s * (1.0 - 1e-12))
            .collect()
    }
}
