//! Diagnostics: pointwise and distribution-weighted errors, absorption
//! frequencies, singularity profiles and the λ-shape fit.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::distributions::{nearest_manifold_point, sample_data, DataDistribution, PointCloud};
use crate::error::{Error, Result};
use crate::field::{check_time, TimeField};
use crate::oracle::one_minus_exp_neg;
use crate::rng::{derive_seed, stream, stream_rng};
use crate::vector::{dist_sq, Batch, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl ErrorCurve {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::ShapeMismatch { expected: times.len(), got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NonFinite(format!("error curve value {v}")));
        }
        Ok(ErrorCurve { times, values, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,value`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "value"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    times.iter().try_for_each(|&t| check_time(t))
}

/// Per-time difference of two fields at a fixed point: the Euclidean norm
/// followed by one absolute-difference curve per component.
pub fn pointwise_error_components(
    a: &dyn TimeField,
    b: &dyn TimeField,
    x: &[f64],
    times: &[f64],
) -> Result<(ErrorCurve, Vec<ErrorCurve>)> {
    check_times(times)?;
    let d = a.dim();
    let mut norm = Vec::with_capacity(times.len());
    let mut comps = vec![Vec::with_capacity(times.len()); d];
    for &t in times {
        let va = a.eval(x, t)?;
        let vb = b.eval(x, t)?;
        norm.push(dist_sq(&va, &vb).sqrt());
        for (j, c) in comps.iter_mut().enumerate() {
            c.push((va[j] - vb[j]).abs());
        }
    }
    let comps = comps
        .into_iter()
        .enumerate()
        .map(|(j, v)| ErrorCurve::new(format!("component_{}", j + 1), times.to_vec(), v))
        .collect::<Result<_>>()?;
    Ok((ErrorCurve::new("norm", times.to_vec(), norm)?, comps))
}

pub fn pointwise_error(a: &dyn TimeField, b: &dyn TimeField, x: &[f64], times: &[f64]) -> Result<ErrorCurve> {
    pointwise_error_components(a, b, x, times).map(|(n, _)| n)
}

/// Forward samples `X_t` from `dist`, shared between every consumer that
/// uses the same `(seed, t)`.
fn forward_batch(dist: &DataDistribution, t: f64, n: usize, seed: u64) -> Result<(Batch, Batch)> {
    let x0 = sample_data(dist, n, seed)?;
    let mut rng = stream_rng(seed, stream::EVAL);
    let a = (-0.5 * t).exp();
    let s = one_minus_exp_neg(t).sqrt();
    let mut xt = x0.clone();
    for row in xt.rows_mut() {
        for v in row.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = a * *v + s * z;
        }
    }
    Ok((x0, xt))
}

/// `(1/n) Σ ‖a(X_i, t) - b(X_i, t)‖²` over forward samples, plus the same
/// sum split by component.
pub fn l2_error_over_p_components(
    a: &dyn TimeField,
    b: &dyn TimeField,
    dist: &DataDistribution,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    check_time(t)?;
    let (_, xt) = forward_batch(dist, t, n, seed)?;
    let d = a.dim();
    let mut va = vec![0.0; d];
    let mut vb = vec![0.0; d];
    let mut comps = vec![0.0; d];
    for x in xt.rows() {
        a.eval_into(x, t, &mut va)?;
        b.eval_into(x, t, &mut vb)?;
        for (c, (p, q)) in comps.iter_mut().zip(va.iter().zip(&vb)) {
            *c += (p - q) * (p - q);
        }
    }
    comps.iter_mut().for_each(|c| *c /= n as f64);
    let total = comps.iter().sum::<f64>();
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("L2 error at t = {t}")));
    }
    Ok((total, comps))
}

pub fn l2_error_over_p(
    a: &dyn TimeField,
    b: &dyn TimeField,
    dist: &DataDistribution,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    l2_error_over_p_components(a, b, dist, t, n, seed).map(|(v, _)| v)
}

/// Fraction of samples within `tol` of each atom (nearest atom wins), and
/// the count of samples farther than `tol` from every atom.
pub fn absorption_frequencies(samples: &Batch, cloud: &PointCloud, tol: f64) -> Result<(Vec<f64>, usize)> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if samples.dim() != cloud.dim() {
        return Err(Error::ShapeMismatch { expected: cloud.dim(), got: samples.dim() });
    }
    let mut counts = vec![0usize; cloud.len()];
    let mut unabsorbed = 0;
    for x in samples.rows() {
        let i = cloud.nearest_index(x);
        if dist_sq(x, cloud.point(i)) <= tol * tol {
            counts[i] += 1;
        } else {
            unabsorbed += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    Ok((counts.into_iter().map(|c| c as f64 / n).collect(), unabsorbed))
}

/// `‖t S(x, t) - (x - y_X)‖` at each time.
pub fn singularity_profile(
    drift: &dyn TimeField,
    dist: &DataDistribution,
    x: &[f64],
    times: &[f64],
) -> Result<ErrorCurve> {
    let y = nearest_manifold_point(dist, x)?;
    check_times(times)?;
    let gap: Vec<f64> = x.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
    let values = times
        .iter()
        .map(|&t| {
            let s = drift.eval(x, t)?;
            Ok(s.iter().zip(&gap).map(|(si, g)| (t * si - g).powi(2)).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorCurve::new("singularity_profile", times.to_vec(), values)
}

/// Monte-Carlo `E‖X_0 - f(X_t, t)‖²` per time, with its standard error.
pub fn lambda_true_estimate_with_se(
    dist: &DataDistribution,
    f: &dyn TimeField,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<(ErrorCurve, Vec<f64>)> {
    check_times(times)?;
    if n < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n });
    }
    let d = f.dim();
    let mut values = Vec::with_capacity(times.len());
    let mut errors = Vec::with_capacity(times.len());
    let mut fv = vec![0.0; d];
    for (k, &t) in times.iter().enumerate() {
        let (x0, xt) = forward_batch(dist, t, n, derive_seed(seed, k as u64))?;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for (a, x) in x0.rows().zip(xt.rows()) {
            f.eval_into(x, t, &mut fv)?;
            let r = dist_sq(a, &fv);
            sum += r;
            sum_sq += r * r;
        }
        let m = sum / n as f64;
        let var = (sum_sq / n as f64 - m * m).max(0.0) * n as f64 / (n - 1) as f64;
        values.push(m);
        errors.push((var / n as f64).sqrt());
    }
    Ok((ErrorCurve::new("lambda_true_inverse", times.to_vec(), values)?, errors))
}

pub fn lambda_true_estimate(
    dist: &DataDistribution,
    f: &dyn TimeField,
    times: &[f64],
    n: usize,
    seed: u64,
) -> Result<ErrorCurve> {
    lambda_true_estimate_with_se(dist, f, times, n, seed).map(|(c, _)| c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaFit {
    /// Least-squares `C` in `values ≈ C (e^t - 1)`.
    pub c: f64,
    /// Squared Pearson correlation between the values and `e^t - 1`.
    pub quality: f64,
    /// Squared correlation of the logarithms over strictly positive values.
    pub log_quality: Option<f64>,
}

fn squared_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Some(0.0);
    }
    Some((sab * sab / (saa * sbb)).clamp(0.0, 1.0))
}

pub fn fit_lambda_constant(curve: &ErrorCurve) -> Result<LambdaFit> {
    if curve.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    if curve.values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateFit("all values are zero".into()));
    }
    let g: Vec<f64> = curve.times.iter().map(|t| t.exp_m1()).collect();
    let c = curve.values.iter().zip(&g).map(|(v, gi)| v * gi).sum::<f64>() / g.iter().map(|x| x * x).sum::<f64>();
    let quality = squared_correlation(&curve.values, &g).unwrap_or(0.0);
    let (lv, lg): (Vec<f64>, Vec<f64>) = curve
        .values
        .iter()
        .zip(&g)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, gi)| (v.ln(), gi.ln()))
        .unzip();
    Ok(LambdaFit { c, quality, log_quality: squared_correlation(&lv, &lg) })
}

/// Per-coordinate mean and unbiased standard deviation.
pub fn sample_moments(samples: &Batch) -> Result<(Vector, Vector)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { min: 2, got: n });
    }
    let d = samples.dim();
    let mut mean = vec![0.0; d];
    for r in samples.rows() {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in samples.rows() {
        var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m));
    }
    let std = var.into_iter().map(|s| (s / (n - 1) as f64).sqrt()).collect();
    Ok((Vector::new(mean)?, Vector::new(std)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TargetKind;
    use crate::diffusion::ScoreFrom;
    use crate::distributions::five_point_cloud;
    use crate::field::FnField;
    use crate::oracle::Oracle;
    use proptest::prelude::*;

    fn times() -> Vec<f64> {
        (1..=20).map(|i| 0.05 * i as f64).collect()
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let o = Oracle::PointCloud(five_point_cloud());
        let c = pointwise_error(&o, &o, &[0.3, 0.1], &times()).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
        let dist = DataDistribution::PointCloud(five_point_cloud());
        assert_eq!(l2_error_over_p(&o, &o, &dist, 0.4, 1000, 3).unwrap(), 0.0);
    }

    #[test]
    fn adapted_line_scores_agree() {
        let line = Oracle::Line;
        let via_f = ScoreFrom::new(TargetKind::CondExpF, line.field(TargetKind::CondExpF));
        let c = pointwise_error(&line, &via_f, &[1.0, -0.1], &times()).unwrap();
        assert!(c.values.iter().all(|&v| v < 1e-10), "{c:?}");
        let via_eps = ScoreFrom::new(TargetKind::Epsilon, line.field(TargetKind::Epsilon));
        let dist = DataDistribution::LineGaussian;
        assert!(l2_error_over_p(&line, &via_eps, &dist, 0.2, 5000, 1).unwrap() < 1e-10);
    }

    #[test]
    fn line_error_against_bounded_field_blows_up() {
        let line = Oracle::Line;
        let zero = FnField::new(2, |_: &[f64], _: f64, out: &mut [f64]| out.fill(0.0));
        let ts = [1e-2, 1e-3, 1e-4];
        let (_, comps) = pointwise_error_components(&line, &zero, &[1.0, -0.1], &ts).unwrap();
        assert_eq!(comps.len(), 2);
        for (t, v) in ts.iter().zip(&comps[1].values) {
            assert!((v * t / 0.1 - 1.0).abs() < 0.01, "{t} {v}");
        }
        assert!(pointwise_error(&line, &zero, &[1.0, -0.1], &[0.0]).is_err());
    }

    #[test]
    fn l2_is_deterministic_and_splits_by_component() {
        let g = Oracle::Gaussian { mu: Vector::new(vec![1.0, 2.0]).unwrap(), sigma: 0.5 };
        let dist = DataDistribution::LineGaussian;
        let line = Oracle::Line;
        let (a, comps) = l2_error_over_p_components(&g, &line, &dist, 0.5, 2000, 9).unwrap();
        assert_eq!(a, l2_error_over_p(&g, &line, &dist, 0.5, 2000, 9).unwrap());
        assert!((comps.iter().sum::<f64>() - a).abs() < 1e-12 * a);
        assert_ne!(a, l2_error_over_p(&g, &line, &dist, 0.5, 2000, 10).unwrap());
    }

    #[test]
    fn absorption_cases() {
        let cloud = five_point_cloud();
        let at3 = Batch::from_rows(&vec![cloud.point(2).to_vec(); 10]).unwrap();
        let (f, u) = absorption_frequencies(&at3, &cloud, 1e-2).unwrap();
        assert_eq!(f, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(u, 0);
        let far = Batch::from_rows(&[[10.0, 10.0], [0.5, 0.5]]).unwrap();
        let (f, u) = absorption_frequencies(&far, &cloud, 1e-2).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        assert_eq!(u, 2);
        assert!(absorption_frequencies(&far, &cloud, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn absorption_sums_to_one(pts in prop::collection::vec(prop::array::uniform2(-3.0f64..3.0), 1..50), tol in 0.01f64..2.0) {
            let b = Batch::from_rows(&pts).unwrap();
            let (f, u) = absorption_frequencies(&b, &five_point_cloud(), tol).unwrap();
            let total = f.iter().sum::<f64>() + u as f64 / pts.len() as f64;
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn line_singularity_profile() {
        let line = Oracle::Line;
        let dist = DataDistribution::LineGaussian;
        let ts: Vec<f64> = (0..30).map(|i| 0.01 * 0.7f64.powi(i)).collect();
        let c = singularity_profile(&line, &dist, &[1.0, -0.1], &ts).unwrap();
        for (t, v) in ts.iter().zip(&c.values) {
            assert!(*v <= 2.0 * t, "{t} {v}");
        }
        // non-increasing in t over the asymptotic range
        assert!(c.values.windows(2).all(|w| w[1] <= w[0]));
        let on = singularity_profile(&line, &dist, &[1.0, 0.0], &[1e-3]).unwrap();
        assert!((on.values[0] - 1e-3).abs() < 1e-12);
        let g = DataDistribution::IsotropicGaussian { mu: Vector::new(vec![0.0, 0.0]).unwrap(), sigma: 1.0 };
        assert!(matches!(
            singularity_profile(&line, &g, &[1.0, -0.1], &ts),
            Err(Error::UnsupportedDistribution(_))
        ));
    }

    #[test]
    fn lambda_true_limits() {
        let single = PointCloud::uniform(&[[0.7, -1.2]]).unwrap();
        let o = Oracle::PointCloud(single.clone());
        let f = o.field(TargetKind::CondExpF);
        let c = lambda_true_estimate(&DataDistribution::PointCloud(single), &f, &[0.1, 1.0, 5.0], 500, 1).unwrap();
        assert!(c.values.iter().all(|&v| v < 1e-20), "{c:?}");

        let cloud = five_point_cloud();
        let o = Oracle::PointCloud(cloud.clone());
        let f = o.field(TargetKind::CondExpF);
        let (c, se) =
            lambda_true_estimate_with_se(&DataDistribution::PointCloud(cloud.clone()), &f, &[30.0], 20_000, 2).unwrap();
        assert!((c.values[0] - cloud.total_variance()).abs() < 4.0 * se[0], "{c:?} {}", cloud.total_variance());
    }

    #[test]
    fn lambda_fit_cases() {
        let ts: Vec<f64> = (1..=10).map(|i| 0.5 * i as f64).collect();
        let exact = ErrorCurve::new("x", ts.clone(), ts.iter().map(|t| 3.0 * t.exp_m1()).collect()).unwrap();
        let fit = fit_lambda_constant(&exact).unwrap();
        assert!((fit.c - 3.0).abs() < 1e-12);
        assert!((fit.quality - 1.0).abs() < 1e-12);
        assert!((fit.log_quality.unwrap() - 1.0).abs() < 1e-12);
        let flat = ErrorCurve::new("x", ts.clone(), vec![2.0; ts.len()]).unwrap();
        assert!(fit_lambda_constant(&flat).unwrap().quality < 1e-12);
        let zeros = ErrorCurve::new("x", ts.clone(), vec![0.0; ts.len()]).unwrap();
        assert!(matches!(fit_lambda_constant(&zeros), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn error_curve_validation() {
        assert!(ErrorCurve::new("x", vec![1.0], vec![]).is_err());
        assert!(ErrorCurve::new("x", vec![1.0], vec![f64::NAN]).is_err());
        assert!(ErrorCurve::new("x", vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn moments() {
        let b = Batch::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let (m, s) = sample_moments(&b).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0]);
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-15 && s[1] == 0.0);
        let one = Batch::from_rows(&[[1.0, 1.0]]).unwrap();
        assert!(matches!(sample_moments(&one), Err(Error::TooFewSamples { .. })));
        let normal = sample_data(
            &DataDistribution::IsotropicGaussian { mu: Vector::new(vec![0.0, 0.0]).unwrap(), sigma: 1.0 },
            100_000,
            8,
        )
        .unwrap();
        let (m, s) = sample_moments(&normal).unwrap();
        for j in 0..2 {
            assert!(m[j].abs() < 0.02 && (s[j] - 1.0).abs() < 0.02);
        }
    }
}
