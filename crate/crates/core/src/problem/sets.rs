use crate::Vector;

/// Closed convex feasible set of one block, represented by its projection.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// All of `R^n`.
    Whole,
    /// `lower <= x <= upper` coordinatewise; infinite bounds are allowed.
    Box { lower: Vector, upper: Vector },
    /// The nonnegative orthant.
    NonNegative,
    /// Euclidean ball.
    Ball { center: Vector, radius: f64 },
}

impl FeasibleSet {
    pub fn interval(lower: f64, upper: f64) -> Self {
        FeasibleSet::Box {
            lower: Vector::from_element(1, lower),
            upper: Vector::from_element(1, upper),
        }
    }

    pub fn project(&self, z: &Vector) -> Vector {
        match self {
            FeasibleSet::Whole => z.clone(),
            FeasibleSet::Box { lower, upper } => {
                Vector::from_fn(z.len(), |i, _| z[i].clamp(lower[i], upper[i]))
            }
            FeasibleSet::NonNegative => z.map(|v| v.max(0.0)),
            FeasibleSet::Ball { center, radius } => {
                let d = z - center;
                let n = d.norm();
                if n <= *radius {
                    z.clone()
                } else {
                    center + d * (*radius / n)
                }
            }
        }
    }

    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        match self {
            FeasibleSet::Whole => true,
            FeasibleSet::Box { lower, upper } => z
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= lower[i] - tol && v <= upper[i] + tol),
            FeasibleSet::NonNegative => z.iter().all(|&v| v >= -tol),
            FeasibleSet::Ball { center, radius } => (z - center).norm() <= radius + tol,
        }
    }

    pub fn is_whole(&self) -> bool {
        matches!(self, FeasibleSet::Whole)
    }

    /// True when projection acts on each coordinate independently.
    pub fn is_separable(&self) -> bool {
        !matches!(self, FeasibleSet::Ball { .. })
    }

    /// Dimension the set is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            FeasibleSet::Box { lower, .. } => Some(lower.len()),
            FeasibleSet::Ball { center, .. } => Some(center.len()),
            _ => None,
        }
    }
}
