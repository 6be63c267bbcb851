//! Target data distributions and their support geometry.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng, Rng};
use crate::vector::{dist_sq, Batch, Vector};

/// Weighted atoms in `R^d`. Weights are positive and normalized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCloud", into = "RawCloud")]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCloud {
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<RawCloud> for PointCloud {
    type Error = Error;

    fn try_from(raw: RawCloud) -> Result<Self> {
        match raw.weights {
            Some(w) => PointCloud::weighted(&raw.points, w),
            None => PointCloud::uniform(&raw.points),
        }
    }
}

impl From<PointCloud> for RawCloud {
    fn from(c: PointCloud) -> Self {
        let uniform = c.weights.iter().all(|&w| w == c.weights[0]);
        RawCloud {
            points: c.points().map(<[f64]>::to_vec).collect(),
            weights: (!uniform).then_some(c.weights),
        }
    }
}

impl PointCloud {
    pub fn uniform<R: AsRef<[f64]>>(points: &[R]) -> Result<Self> {
        let n = points.len();
        Self::weighted(points, vec![1.0; n])
    }

    /// Builds a cloud from positive (not necessarily normalized) weights.
    pub fn weighted<R: AsRef<[f64]>>(points: &[R], weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud needs at least one point"));
        }
        if weights.len() != points.len() {
            return Err(Error::ShapeMismatch { expected: points.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("point cloud weights must be positive and finite"));
        }
        let batch = Batch::from_rows(points)?;
        if !batch.is_finite() {
            return Err(Error::NonFinite("point cloud coordinate".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(PointCloud { dim: batch.dim(), coords: batch.as_flat().to_vec(), weights, log_weights })
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

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points().zip(&self.weights) {
            for (mj, pj) in m.iter_mut().zip(p) {
                *mj += w * pj;
            }
        }
        m
    }

    /// `E‖X - E X‖²`, the trace of the covariance.
    pub fn total_variance(&self) -> f64 {
        let m = self.mean();
        self.points().zip(&self.weights).map(|(p, w)| w * dist_sq(p, &m)).sum()
    }

    /// Index of the nearest atom; the lowest index wins ties.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points().enumerate() {
            let d = dist_sq(p, x);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::ShapeMismatch { expected: self.dim, got: shift.len() });
        }
        let pts: Vec<Vec<f64>> =
            self.points().map(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect()).collect();
        PointCloud::weighted(&pts, self.weights.clone())
    }

    pub fn sample_index(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataDistribution {
    PointCloud(PointCloud),
    IsotropicGaussian {
        mu: Vector,
        sigma: f64,
    },
    /// `(X_1, 0)` with `X_1 ~ N(0, 1)`, in `R^2`.
    LineGaussian,
    /// `(U cos U, U sin U)` with `U ~ Unif[u_min, u_max]`.
    SpiralCurve {
        #[serde(default = "spiral_u_min")]
        u_min: f64,
        #[serde(default = "spiral_u_max")]
        u_max: f64,
    },
    /// Base cloud convolved with `N(0, σ² I)`.
    SmoothedCloud {
        base: PointCloud,
        sigma: f64,
    },
}

fn spiral_u_min() -> f64 {
    1.0
}

fn spiral_u_max() -> f64 {
    13.0
}

const SPIRAL_GRID: usize = 4096;
const GOLDEN_ITERS: usize = 100;

impl DataDistribution {
    pub fn spiral() -> Self {
        DataDistribution::SpiralCurve { u_min: spiral_u_min(), u_max: spiral_u_max() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DataDistribution::PointCloud(_) => "point_cloud",
            DataDistribution::IsotropicGaussian { .. } => "isotropic_gaussian",
            DataDistribution::LineGaussian => "line_gaussian",
            DataDistribution::SpiralCurve { .. } => "spiral_curve",
            DataDistribution::SmoothedCloud { .. } => "smoothed_cloud",
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> Option<usize> {
        Some(match self {
            DataDistribution::PointCloud(c) => c.dim(),
            DataDistribution::IsotropicGaussian { mu, .. } => mu.dim(),
            DataDistribution::LineGaussian | DataDistribution::SpiralCurve { .. } => 2,
            DataDistribution::SmoothedCloud { base, .. } => base.dim(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DataDistribution::IsotropicGaussian { sigma, .. }
            | DataDistribution::SmoothedCloud { sigma, .. } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
                }
            }
            DataDistribution::SpiralCurve { u_min, u_max }
                if !(u_min.is_finite() && u_max.is_finite() && u_max > u_min) =>
            {
                return Err(Error::invalid("spiral needs u_min < u_max"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Draws one sample into `out`.
    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        match self {
            DataDistribution::PointCloud(c) => {
                out.copy_from_slice(c.point(c.sample_index(rng)));
            }
            DataDistribution::IsotropicGaussian { mu, sigma } => {
                for (o, m) in out.iter_mut().zip(mu.iter()) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + sigma * z;
                }
            }
            DataDistribution::LineGaussian => {
                out[0] = rng.sample(StandardNormal);
                out[1] = 0.0;
            }
            DataDistribution::SpiralCurve { u_min, u_max } => {
                let u = rng.random_range(*u_min..*u_max);
                out[0] = u * u.cos();
                out[1] = u * u.sin();
            }
            DataDistribution::SmoothedCloud { base, sigma } => {
                let p = base.point(base.sample_index(rng));
                for (o, m) in out.iter_mut().zip(p) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + sigma * z;
                }
            }
        }
    }

    /// Analytic mean (numeric quadrature for the spiral).
    pub fn mean(&self) -> Vector {
        match self {
            DataDistribution::PointCloud(c) => Vector::from_unchecked(c.mean()),
            DataDistribution::IsotropicGaussian { mu, .. } => mu.clone(),
            DataDistribution::LineGaussian => Vector::from_unchecked(vec![0.0, 0.0]),
            DataDistribution::SpiralCurve { u_min, u_max } => {
                let len = u_max - u_min;
                let mx = simpson(|u| u * u.cos(), *u_min, *u_max, 20_000) / len;
                let my = simpson(|u| u * u.sin(), *u_min, *u_max, 20_000) / len;
                Vector::from_unchecked(vec![mx, my])
            }
            DataDistribution::SmoothedCloud { base, .. } => Vector::from_unchecked(base.mean()),
        }
    }
}

/// `n` i.i.d. samples, deterministic in `seed`.
pub fn sample_data(dist: &DataDistribution, n: usize, seed: u64) -> Result<Batch> {
    if n == 0 {
        return Err(Error::invalid("need n >= 1 samples"));
    }
    dist.validate()?;
    let dim = dist.dim().unwrap_or(1);
    let mut rng = stream_rng(seed, stream::DATA);
    let mut batch = Batch::zeros(n, dim);
    for row in batch.rows_mut() {
        dist.sample_into(&mut rng, row);
    }
    Ok(batch)
}

pub fn data_mean(dist: &DataDistribution) -> Vector {
    dist.mean()
}

/// Closest point `y_X` of the support to `x`.
pub fn nearest_manifold_point(dist: &DataDistribution, x: &[f64]) -> Result<Vector> {
    let dim = dist.dim().unwrap_or(0);
    if x.len() != dim {
        return Err(Error::ShapeMismatch { expected: dim, got: x.len() });
    }
    match dist {
        DataDistribution::PointCloud(c) => {
            Ok(Vector::from_unchecked(c.point(c.nearest_index(x)).to_vec()))
        }
        DataDistribution::LineGaussian => Ok(Vector::from_unchecked(vec![x[0], 0.0])),
        DataDistribution::SpiralCurve { u_min, u_max } => {
            let u = spiral_nearest_parameter(x, *u_min, *u_max);
            Ok(Vector::from_unchecked(vec![u * u.cos(), u * u.sin()]))
        }
        DataDistribution::IsotropicGaussian { .. } => {
            Err(Error::UnsupportedDistribution("isotropic_gaussian"))
        }
        DataDistribution::SmoothedCloud { .. } => Err(Error::UnsupportedDistribution("smoothed_cloud")),
    }
}

fn spiral_dist_sq(x: &[f64], u: f64) -> f64 {
    let dx = x[0] - u * u.cos();
    let dy = x[1] - u * u.sin();
    dx * dx + dy * dy
}

/// Coarse grid search followed by golden-section refinement.
fn spiral_nearest_parameter(x: &[f64], u_min: f64, u_max: f64) -> f64 {
    let h = (u_max - u_min) / (SPIRAL_GRID - 1) as f64;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..SPIRAL_GRID {
        let d = spiral_dist_sq(x, u_min + h * i as f64);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    let mut a = u_min + h * best.saturating_sub(1) as f64;
    let mut b = (u_min + h * (best + 1) as f64).min(u_max);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = spiral_dist_sq(x, c);
    let mut fd = spiral_dist_sq(x, d);
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = spiral_dist_sq(x, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = spiral_dist_sq(x, d);
        }
    }
    let u = 0.5 * (a + b);
    // endpoints are not interior minima; keep whichever is best
    [u, u_min, u_max]
        .into_iter()
        .min_by(|p, q| spiral_dist_sq(x, *p).total_cmp(&spiral_dist_sq(x, *q)))
        .unwrap()
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// The five atoms used for the analytic-drift sampling experiment.
pub fn five_point_cloud() -> PointCloud {
    PointCloud::uniform(&[[-2.0, 1.0], [1.5, 2.0], [2.0, -1.5], [-1.0, -2.0], [0.0, 0.0]])
        .expect("valid cloud")
}

/// Four atoms on the line `x = 1`, used for the network-capacity study.
pub fn four_point_cloud() -> PointCloud {
    PointCloud::uniform(&[[1.0, -3.0], [1.0, -1.0], [1.0, 1.0], [1.0, 3.0]]).expect("valid cloud")
}

/// Twenty atoms drawn uniformly from `[-4, 4]^2` with a fixed seed.
pub fn twenty_point_cloud() -> PointCloud {
    let mut rng = stream_rng(20, stream::DATA);
    let pts: Vec<[f64; 2]> =
        (0..20).map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]).collect();
    PointCloud::uniform(&pts).expect("valid cloud")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn moments(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn single_point_cloud_is_deterministic() {
        let d = DataDistribution::PointCloud(PointCloud::uniform(&[[1.0, -3.0]]).unwrap());
        let b = sample_data(&d, 5, 3).unwrap();
        assert!(b.rows().all(|r| r == [1.0, -3.0]));
    }

    #[test]
    fn line_gaussian_samples() {
        let b = sample_data(&DataDistribution::LineGaussian, 100_000, 11).unwrap();
        assert!(b.column(1).iter().all(|&v| v == 0.0));
        let (_, s) = moments(&b.column(0));
        assert!((s - 1.0).abs() < 0.02, "{s}");
    }

    #[test]
    fn smoothed_cloud_spread() {
        let base = PointCloud::uniform(&[[0.0, 0.0]]).unwrap();
        let d = DataDistribution::SmoothedCloud { base, sigma: 0.5 };
        let b = sample_data(&d, 100_000, 5).unwrap();
        for j in 0..2 {
            let (_, s) = moments(&b.column(j));
            assert!((s - 0.5).abs() < 0.01, "{s}");
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(sample_data(&DataDistribution::LineGaussian, 0, 1).is_err());
    }

    #[test]
    fn nearest_point_examples() {
        let y = nearest_manifold_point(&DataDistribution::LineGaussian, &[1.0, -0.1]).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);

        let four = DataDistribution::PointCloud(four_point_cloud());
        let y = nearest_manifold_point(&four, &[0.0, 0.9]).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 1.0]);

        let gauss = DataDistribution::IsotropicGaussian {
            mu: Vector::new(vec![0.0, 0.0]).unwrap(),
            sigma: 1.0,
        };
        assert!(matches!(
            nearest_manifold_point(&gauss, &[0.0, 0.0]),
            Err(Error::UnsupportedDistribution(_))
        ));
    }

    #[test]
    fn spiral_nearest_from_origin_matches_brute_force() {
        let x = [0.0, 0.0];
        let brute = (0..1_000_000)
            .map(|i| 1.0 + 12.0 * i as f64 / 999_999.0)
            .min_by(|a, b| spiral_dist_sq(&x, *a).total_cmp(&spiral_dist_sq(&x, *b)))
            .unwrap();
        let y = nearest_manifold_point(&DataDistribution::spiral(), &x).unwrap();
        assert!((y[0] - brute * brute.cos()).abs() < 1e-5);
        assert!((y[1] - brute * brute.sin()).abs() < 1e-5);
        assert!((y[0] - 1f64.cos()).abs() < 1e-9 && (y[1] - 1f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn spiral_nearest_interior_matches_brute_force() {
        let spiral = DataDistribution::spiral();
        for x in [[3.0, 4.0], [-6.5, 2.0], [10.0, -1.0], [0.5, -7.0]] {
            let brute = (0..1_000_000)
                .map(|i| 1.0 + 12.0 * i as f64 / 999_999.0)
                .map(|u| spiral_dist_sq(&x, u))
                .fold(f64::INFINITY, f64::min);
            let y = nearest_manifold_point(&spiral, &x).unwrap();
            assert!(dist_sq(&x, &y) <= brute + 1e-9, "{x:?}");
        }
    }

    #[test]
    fn means() {
        let c = PointCloud::uniform(&[[-1.5], [1.5]]).unwrap();
        assert_eq!(DataDistribution::PointCloud(c).mean().as_slice(), &[0.0]);
        let mu = Vector::new(vec![1.0, 2.0]).unwrap();
        let g = DataDistribution::IsotropicGaussian { mu: mu.clone(), sigma: 0.3 };
        assert_eq!(g.mean(), mu);
        // antiderivatives: ∫u cos u = cos u + u sin u, ∫u sin u = sin u - u cos u
        let (a, b) = (1.0f64, 13.0f64);
        let ex = ((b.cos() + b * b.sin()) - (a.cos() + a * a.sin())) / 12.0;
        let ey = ((b.sin() - b * b.cos()) - (a.sin() - a * a.cos())) / 12.0;
        let m = DataDistribution::spiral().mean();
        assert!((m[0] - ex).abs() < 1e-10 && (m[1] - ey).abs() < 1e-10);
        assert!((m[0] - 0.415_653_747_460_041).abs() < 1e-10);
        assert!((m[1] + 0.973_150_816_747_139).abs() < 1e-10);
    }

    #[test]
    fn cloud_validation() {
        assert!(PointCloud::uniform::<[f64; 2]>(&[]).is_err());
        assert!(PointCloud::weighted(&[[0.0], [1.0]], vec![1.0, 0.0]).is_err());
        assert!(PointCloud::weighted(&[[0.0], [1.0]], vec![1.0]).is_err());
        let c = PointCloud::weighted(&[[0.0], [1.0]], vec![1.0, 3.0]).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(c.weights()[1], 0.75);
    }

    #[test]
    fn distribution_json() {
        let d: DataDistribution =
            serde_json::from_str(r#"{"kind":"point_cloud","points":[[1,2],[3,4]]}"#).unwrap();
        assert_eq!(d.dim(), Some(2));
        let d: DataDistribution = serde_json::from_str(r#"{"kind":"spiral_curve"}"#).unwrap();
        assert_eq!(d, DataDistribution::spiral());
        let back: DataDistribution =
            serde_json::from_str(&serde_json::to_string(&DataDistribution::LineGaussian).unwrap())
                .unwrap();
        assert_eq!(back, DataDistribution::LineGaussian);
        assert!(serde_json::from_str::<DataDistribution>(r#"{"kind":"nope"}"#).is_err());
    }

    proptest! {
        #[test]
        fn nearest_is_minimal_and_idempotent(
            pts in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..8),
            x in prop::array::uniform2(-6.0f64..6.0),
        ) {
            let cloud = PointCloud::uniform(&pts).unwrap();
            let dist = DataDistribution::PointCloud(cloud);
            let y = nearest_manifold_point(&dist, &x).unwrap();
            for p in &pts {
                prop_assert!(dist_sq(&x, &y) <= dist_sq(&x, p));
            }
            let yy = nearest_manifold_point(&dist, &y).unwrap();
            prop_assert_eq!(dist_sq(&yy, &y), 0.0);
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>()) {
            let d = DataDistribution::spiral();
            prop_assert_eq!(sample_data(&d, 16, seed).unwrap(), sample_data(&d, 16, seed).unwrap());
        }
    }
}
