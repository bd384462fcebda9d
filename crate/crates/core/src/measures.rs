//! Discrete probability measures on R^d.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Input weights may be off by this much before renormalization.
pub const INPUT_MASS_TOL: f64 = 1e-9;
/// Mass defect maintained after construction.
pub const MASS_TOL: f64 = 1e-12;

/// A finite weighted point cloud `sum_i w_i delta_{x_i}`.
///
/// Points are stored row-major in one flat buffer of length `n * dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Closed ball `B_R` in `R^d`, centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub radius: f64,
    pub dim: usize,
}

impl BallSpec {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("ball dimension must be >= 1".into()));
        }
        Ok(Self { radius, dim })
    }
}

impl DiscreteMeasure {
    /// Builds a validated measure from a list of points and weights.
    ///
    /// Weights whose sum is within `1e-9` of one are rescaled to sum to one;
    /// larger deviations are rejected.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or(Error::EmptyMeasure)?;
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(
                "points have differing dimensions".into(),
            ));
        }
        let flat = points.into_iter().flatten().collect();
        Self::from_flat(dim, flat, weights)
    }

    /// Same as [`DiscreteMeasure::new`] with a flat row-major point buffer.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("dimension must be >= 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if points.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::NegativeWeight { index: i, weight: w });
            }
        }
        if let Some(i) = points.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinitePoint(i / dim));
        }
        let sum = par::pairwise_sum(&weights);
        if (sum - 1.0).abs() > INPUT_MASS_TOL {
            return Err(Error::BadNormalization { sum });
        }
        let weights = if (sum - 1.0).abs() <= MASS_TOL {
            weights
        } else {
            weights.into_iter().map(|w| w / sum).collect()
        };
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Equal-weight measure `(1/n) sum_i delta_{x_i}`.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len().checked_div(dim).unwrap_or(0);
        Self::from_flat(dim, points, vec![1.0 / n as f64; n])
    }

    /// Single Dirac mass at `x`.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::from_flat(x.len(), x.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Flat row-major coordinates.
    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Image measure under `map`. Weights are copied unchanged and atoms
    /// landing on the same point stay separate.
    pub fn pushforward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
    {
        let images = par::map_range(self.len(), |i| map(self.point(i)));
        let mut points = Vec::with_capacity(self.points.len());
        for (i, y) in images.into_iter().enumerate() {
            if y.len() != self.dim {
                return Err(Error::DimensionMismatch(format!(
                    "map returned a {}-vector for a {}-dimensional measure",
                    y.len(),
                    self.dim
                )));
            }
            if y.iter().any(|c| !c.is_finite()) {
                return Err(Error::MapProducedNonFinite(i));
            }
            points.extend(y);
        }
        Ok(Self {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
        })
    }

    /// Replaces the coordinates, keeping the weights. Used by the time stepper.
    pub(crate) fn with_coords(&self, points: Vec<f64>) -> Self {
        debug_assert_eq!(points.len(), self.points.len());
        Self {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
        }
    }

    /// Largest Euclidean norm over the atoms.
    pub fn support_radius(&self) -> f64 {
        self.points().map(norm).fold(0.0, f64::max)
    }

    /// One-dimensional projection onto coordinate `axis`, sorted, with
    /// exactly equal coordinates merged.
    pub fn marginal_along_axis(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.dim,
            });
        }
        let mut pairs: Vec<(f64, f64)> = self
            .points()
            .zip(&self.weights)
            .map(|(p, &w)| (p[axis], w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut coords: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match coords.last() {
                Some(&last) if last == x => *weights.last_mut().unwrap() += w,
                _ => {
                    coords.push(x);
                    weights.push(w);
                }
            }
        }
        Ok(Self {
            dim: 1,
            points: coords,
            weights,
        })
    }

    /// Weighted mean of coordinate `axis`.
    pub fn coordinate_mean(&self, axis: usize) -> f64 {
        let terms: Vec<f64> = self
            .points()
            .zip(&self.weights)
            .map(|(p, &w)| w * p[axis])
            .collect();
        par::pairwise_sum(&terms)
    }

    /// Total mass; one up to `MASS_TOL` for every constructed measure.
    pub fn mass(&self) -> f64 {
        par::pairwise_sum(&self.weights)
    }
}

/// `M` i.i.d. uniform samples in the ball `spec`, each with weight `1/M`.
///
/// Samples are drawn by rejection from the bounding cube using a ChaCha8
/// stream seeded with `seed`, so the output depends only on the arguments.
pub fn quantize_uniform_ball(spec: BallSpec, count: usize, seed: u64) -> Result<DiscreteMeasure> {
    if count == 0 {
        return Err(Error::InvalidArgument("quantization count must be >= 1".into()));
    }
    let spec = BallSpec::new(spec.radius, spec.dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count * spec.dim);
    let mut u = vec![0.0; spec.dim];
    for _ in 0..count {
        loop {
            for c in u.iter_mut() {
                *c = rng.random_range(-1.0..1.0);
            }
            if u.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                break;
            }
        }
        points.extend(u.iter().map(|c| c * spec.radius));
    }
    DiscreteMeasure::uniform(spec.dim, points)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Largest distance between an atom of `a` and an atom of `b`.
pub fn cross_diameter(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    a.points()
        .flat_map(|x| b.points().map(move |y| sq_dist(x, y)))
        .fold(0.0, f64::max)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_dirac_is_valid() {
        let m = DiscreteMeasure::new(vec![vec![0.0, 0.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.dim(), 3);
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn rejects_bad_mass_and_sign() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            DiscreteMeasure::new(pts.clone(), vec![0.5, 0.6]),
            Err(Error::BadNormalization { .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(pts, vec![1.0, -1e-3]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            DiscreteMeasure::new(vec![vec![f64::NAN]], vec![1.0]),
            Err(Error::NonFinitePoint(0))
        ));
    }

    #[test]
    fn small_mass_defect_is_renormalized() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((m.mass() - 1.0).abs() <= MASS_TOL);
    }

    #[test]
    fn quantization_single_atom() {
        let m = quantize_uniform_ball(BallSpec::new(1.0, 3).unwrap(), 1, 7).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        assert!(m.support_radius() <= 1.0);
    }

    #[test]
    fn quantization_support_and_determinism() {
        let spec = BallSpec::new(2.0, 3).unwrap();
        let a = quantize_uniform_ball(spec, 1000, 42).unwrap();
        let b = quantize_uniform_ball(spec, 1000, 42).unwrap();
        assert!(a.support_radius() <= 2.0);
        assert_eq!(a, b);
        let c = quantize_uniform_ball(spec, 1000, 43).unwrap();
        assert_ne!(a, c);
        assert!(matches!(
            quantize_uniform_ball(spec, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn pushforward_cases() {
        let m = DiscreteMeasure::new(vec![vec![0.0, 1.0], vec![2.0, -1.0]], vec![0.25, 0.75])
            .unwrap();
        assert_eq!(m.pushforward(|x| x.to_vec()).unwrap(), m);

        let moved = m.pushforward(|x| vec![x[0] + 1.0, x[1] - 2.0]).unwrap();
        assert_eq!(moved.point(0), &[1.0, -1.0]);
        assert_eq!(moved.point(1), &[3.0, -3.0]);
        assert_eq!(moved.weights(), m.weights());

        let collapsed = m.pushforward(|_| vec![5.0, 5.0]).unwrap();
        assert_eq!(collapsed.len(), 2);
        assert_eq!(collapsed.point(0), collapsed.point(1));
        assert_eq!(collapsed.weights(), &[0.25, 0.75]);

        assert!(matches!(
            m.pushforward(|x| vec![x[0] / 0.0, 0.0]),
            Err(Error::MapProducedNonFinite(_))
        ));
    }

    #[test]
    fn support_radius_cases() {
        assert_eq!(DiscreteMeasure::dirac(&[0.0, 0.0, 0.0]).unwrap().support_radius(), 0.0);
        let m = DiscreteMeasure::new(vec![vec![3.0, 0.0, 0.0], vec![0.0, -4.0, 0.0]], vec![0.5, 0.5])
            .unwrap();
        assert_eq!(m.support_radius(), 4.0);
        let q = quantize_uniform_ball(BallSpec::new(1.0, 3).unwrap(), 500, 3).unwrap();
        assert!(q.support_radius() <= 1.0);
    }

    #[test]
    fn marginal_cases() {
        let m = DiscreteMeasure::dirac(&[1.0, 2.0, 3.0]).unwrap();
        let mx = m.marginal_along_axis(2).unwrap();
        assert_eq!(mx.coords(), &[3.0]);
        assert_eq!(mx.weights(), &[1.0]);

        let m = DiscreteMeasure::new(vec![vec![0.0, 0.0, 5.0], vec![1.0, 1.0, 5.0]], vec![0.5, 0.5])
            .unwrap();
        let mx = m.marginal_along_axis(2).unwrap();
        assert_eq!(mx.coords(), &[5.0]);
        assert_eq!(mx.weights(), &[1.0]);

        assert!(matches!(
            m.marginal_along_axis(3),
            Err(Error::AxisOutOfRange { axis: 3, dim: 3 })
        ));
    }

    #[test]
    fn marginal_of_product_cloud() {
        // grid {0,1,2} x {-1, 4} with product weights
        let xs = [0.0, 1.0, 2.0];
        let wx = [0.2, 0.3, 0.5];
        let zs = [-1.0, 4.0];
        let wz = [0.6, 0.4];
        let mut pts = Vec::new();
        let mut ws = Vec::new();
        for (x, a) in xs.iter().zip(wx) {
            for (z, b) in zs.iter().zip(wz) {
                pts.push(vec![*x, *z]);
                ws.push(a * b);
            }
        }
        let m = DiscreteMeasure::new(pts, ws).unwrap();
        let mz = m.marginal_along_axis(1).unwrap();
        assert_eq!(mz.coords(), &zs);
        for (got, want) in mz.weights().iter().zip(wz) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn pushforward_preserves_weights_bitwise(
            seed in 0u64..1000, n in 1usize..40, c in prop::array::uniform3(-5.0f64..5.0)
        ) {
            let m = quantize_uniform_ball(BallSpec::new(1.5, 3).unwrap(), n, seed).unwrap();
            let moved = m.pushforward(|x| vec![x[0] + c[0], x[1] + c[1], x[2] + c[2]]).unwrap();
            prop_assert_eq!(moved.weights(), m.weights());
            prop_assert!(moved.support_radius() <= m.support_radius() + norm(&c) + 1e-12);
        }
    }
}
