//! Compact convex action sets: the Euclidean ball and the axis-aligned box.
//!
//! Both sets carry closed-form projections, boundary distances and uniform
//! samplers, which is all the rest of the crate needs from the geometry.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Relative margin defining "strictly interior": distance to the boundary
/// must exceed `INTERIOR_MARGIN * diameter`.
pub const INTERIOR_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexBody {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl ConvexBody {
    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        ConvexBody::Ball {
            center: center.as_slice().to_vec(),
            radius,
        }
    }

    pub fn unit_ball(dim: usize) -> Self {
        ConvexBody::ball(DVector::zeros(dim), 1.0)
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        assert!(half_width > 0.0);
        ConvexBody::Box {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l < u),
            "box bounds must satisfy lower < upper"
        );
        ConvexBody::Box { lower, upper }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Ball { center, .. } => center.len(),
            ConvexBody::Box { lower, .. } => lower.len(),
        }
    }

    /// Euclidean diameter of the set.
    pub fn diameter(&self) -> f64 {
        match self {
            ConvexBody::Ball { radius, .. } => 2.0 * radius,
            ConvexBody::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (u - l).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// A canonical interior point (ball center / box midpoint).
    pub fn center(&self) -> DVector<f64> {
        match self {
            ConvexBody::Ball { center, .. } => DVector::from_column_slice(center),
            ConvexBody::Box { lower, upper } => {
                DVector::from_iterator(lower.len(), lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)))
            }
        }
    }

    /// Signed distance to the boundary: positive inside, negative outside.
    pub fn boundary_distance(&self, a: &DVector<f64>) -> f64 {
        match self {
            ConvexBody::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                radius - (a - c).norm()
            }
            ConvexBody::Box { lower, upper } => a
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(x, (l, u))| (x - l).min(u - x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Strict interiority with the crate-wide relative margin.
    pub fn is_strictly_interior(&self, a: &DVector<f64>) -> bool {
        self.boundary_distance(a) > INTERIOR_MARGIN * self.diameter()
    }

    /// Membership in the closed set (up to a tiny tolerance for round-off).
    pub fn contains(&self, a: &DVector<f64>) -> bool {
        self.boundary_distance(a) >= -INTERIOR_MARGIN * self.diameter()
    }

    /// Euclidean projection onto the closed set.
    pub fn project(&self, a: &DVector<f64>) -> DVector<f64> {
        match self {
            ConvexBody::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                let v = a - &c;
                let n = v.norm();
                if n <= *radius {
                    a.clone()
                } else {
                    c + v * (*radius / n)
                }
            }
            ConvexBody::Box { lower, upper } => DVector::from_iterator(
                lower.len(),
                a.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(x, (l, u))| x.clamp(*l, *u)),
            ),
        }
    }

    /// Uniform sample from the closed set.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            ConvexBody::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                c + sample_unit_ball(center.len(), rng) * *radius
            }
            ConvexBody::Box { lower, upper } => DVector::from_iterator(
                lower.len(),
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| rng.gen_range(*l..*u)),
            ),
        }
    }

    /// Uniform sample conditioned on being strictly interior; resamples on
    /// the (measure-zero, floating-point) event of a boundary hit.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        for _ in 0..1000 {
            let a = self.sample_uniform(rng);
            if self.is_strictly_interior(&a) {
                return a;
            }
        }
        // Unreachable for non-degenerate bodies.
        self.center()
    }

    /// Vertices of the box (used to maximize convex functions). Empty for
    /// the ball, whose extreme points are the whole sphere.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        match self {
            ConvexBody::Ball { .. } => Vec::new(),
            ConvexBody::Box { lower, upper } => {
                let d = lower.len();
                assert!(d <= 24, "vertex enumeration is exponential in dimension");
                (0..1usize << d)
                    .map(|mask| {
                        DVector::from_iterator(
                            d,
                            (0..d).map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] }),
                        )
                    })
                    .collect()
            }
        }
    }
}

/// Uniform direction on the unit sphere via normalized Gaussians.
pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(
            dim,
            (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Uniform point in the closed unit ball.
pub fn sample_unit_ball<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    let dir = sample_unit_sphere(dim, rng);
    let r: f64 = rng.gen::<f64>().powf(1.0 / dim as f64);
    dir * r
}
