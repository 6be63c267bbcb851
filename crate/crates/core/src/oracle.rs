//! Closed-form targets and a brute-force Monte-Carlo conditional expectation.
//!
//! Score sign convention: `S = -∇_x log p(x, t)`, so `S(x, t) = x` for a
//! standard normal. The three targets are tied together by
//! `ε = sqrt(1 - e^{-t}) S` and `S = (x - e^{-t/2} f) / (1 - e^{-t})`.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::config::TargetKind;
use crate::distributions::{DataDistribution, PointCloud};
use crate::error::{Error, Result};
use crate::field::{check_dim, check_time, TimeField};
use crate::rng::{stream, stream_rng};
use crate::vector::{dist_sq, Vector};

/// Smallest time accepted where the score may be singular at `t = 0`.
pub const MIN_SINGULAR_TIME: f64 = 1e-12;

/// Minimum effective sample size accepted from the Monte-Carlo estimators.
pub const MIN_ESS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTargets {
    pub s: Vector,
    pub eps: Vector,
    pub f: Vector,
}

impl OracleTargets {
    pub fn get(&self, kind: TargetKind) -> &Vector {
        match kind {
            TargetKind::ScoreS => &self.s,
            TargetKind::Epsilon => &self.eps,
            TargetKind::CondExpF => &self.f,
        }
    }
}

/// `1 - e^{-t}` without cancellation at small `t`.
#[inline]
pub fn one_minus_exp_neg(t: f64) -> f64 {
    -(-t).exp_m1()
}

fn check_singular_time(t: f64) -> Result<()> {
    check_time(t)?;
    if t < MIN_SINGULAR_TIME {
        return Err(Error::TimeTooSmall { t, min: MIN_SINGULAR_TIME });
    }
    Ok(())
}

/// Softmax over `log w_i - ‖x - a y_i‖² / (2 var)`, max logit subtracted.
fn cloud_posterior(cloud: &PointCloud, x: &[f64], a: f64, var: f64, probs: &mut Vec<f64>) {
    probs.clear();
    let mut max = f64::NEG_INFINITY;
    for (p, lw) in cloud.points().zip(cloud.log_weights()) {
        let d: f64 = x.iter().zip(p).map(|(xi, yi)| (xi - a * yi) * (xi - a * yi)).sum();
        let l = lw - d / (2.0 * var);
        max = max.max(l);
        probs.push(l);
    }
    let mut total = 0.0;
    for l in probs.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in probs.iter_mut() {
        *l /= total;
    }
}

fn cloud_weighted_mean(cloud: &PointCloud, probs: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (p, w) in cloud.points().zip(probs) {
        for (o, y) in out.iter_mut().zip(p) {
            *o += w * y;
        }
    }
}

/// `E[X_0 | X_t = x]` for a point cloud.
pub fn oracle_f_pointcloud(cloud: &PointCloud, x: &[f64], t: f64) -> Result<Vector> {
    check_dim(cloud.dim(), x)?;
    check_singular_time(t)?;
    let mut out = vec![0.0; cloud.dim()];
    let mut probs = Vec::with_capacity(cloud.len());
    cloud_posterior(cloud, x, (-0.5 * t).exp(), one_minus_exp_neg(t), &mut probs);
    cloud_weighted_mean(cloud, &probs, &mut out);
    Ok(Vector::from_unchecked(out))
}

/// Score of the forward marginal of `N(mu, σ² I)`; regular at `t = 0`.
pub fn oracle_score_gaussian(mu: &[f64], sigma: f64, x: &[f64], t: f64) -> Result<Vector> {
    check_dim(mu.len(), x)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let a = (-0.5 * t).exp();
    let denom = sigma * sigma * (-t).exp() + one_minus_exp_neg(t);
    Ok(Vector::from_unchecked(x.iter().zip(mu).map(|(xi, m)| (xi - m * a) / denom).collect()))
}

/// All three targets for the line-embedded Gaussian in `R^2`.
pub fn oracle_targets_line(x: &[f64], t: f64) -> Result<OracleTargets> {
    check_dim(2, x)?;
    check_singular_time(t)?;
    let v = one_minus_exp_neg(t);
    let sv = v.sqrt();
    Ok(OracleTargets {
        s: Vector::from_unchecked(vec![x[0], x[1] / v]),
        eps: Vector::from_unchecked(vec![sv * x[0], x[1] / sv]),
        f: Vector::from_unchecked(vec![x[0] * (-0.5 * t).exp(), 0.0]),
    })
}

/// Score of a point cloud convolved with `N(0, σ² I)`; bounded for all `t >= 0`.
pub fn oracle_score_smoothed(cloud: &PointCloud, sigma: f64, x: &[f64], t: f64) -> Result<Vector> {
    check_dim(cloud.dim(), x)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let mut out = vec![0.0; cloud.dim()];
    smoothed_score_into(cloud, sigma, x, t, &mut out, &mut Vec::with_capacity(cloud.len()));
    Ok(Vector::from_unchecked(out))
}

fn smoothed_score_into(
    cloud: &PointCloud,
    sigma: f64,
    x: &[f64],
    t: f64,
    out: &mut [f64],
    probs: &mut Vec<f64>,
) {
    let a = (-0.5 * t).exp();
    let denom = sigma * sigma * (-t).exp() + one_minus_exp_neg(t);
    cloud_posterior(cloud, x, a, denom, probs);
    cloud_weighted_mean(cloud, probs, out);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = (xi - a * *o) / denom;
    }
}

/// Analytic oracles available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    Line,
    Gaussian { mu: Vector, sigma: f64 },
    PointCloud(PointCloud),
    Smoothed { base: PointCloud, sigma: f64 },
}

impl Oracle {
    pub fn for_distribution(dist: &DataDistribution) -> Result<Self> {
        dist.validate()?;
        Ok(match dist {
            DataDistribution::LineGaussian => Oracle::Line,
            DataDistribution::IsotropicGaussian { mu, sigma } => {
                Oracle::Gaussian { mu: mu.clone(), sigma: *sigma }
            }
            DataDistribution::PointCloud(c) => Oracle::PointCloud(c.clone()),
            DataDistribution::SmoothedCloud { base, sigma } => {
                Oracle::Smoothed { base: base.clone(), sigma: *sigma }
            }
            DataDistribution::SpiralCurve { .. } => {
                return Err(Error::invalid("no closed-form oracle for the spiral curve"))
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Oracle::Line => 2,
            Oracle::Gaussian { mu, .. } => mu.dim(),
            Oracle::PointCloud(c) => c.dim(),
            Oracle::Smoothed { base, .. } => base.dim(),
        }
    }

    /// Whether the score is singular as `t -> 0`.
    pub fn is_singular(&self) -> bool {
        matches!(self, Oracle::Line | Oracle::PointCloud(_))
    }

    pub fn score(&self, x: &[f64], t: f64) -> Result<Vector> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, t, &mut out)?;
        Ok(Vector::from_unchecked(out))
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x)?;
        match self {
            Oracle::Line => {
                check_singular_time(t)?;
                out[0] = x[0];
                out[1] = x[1] / one_minus_exp_neg(t);
            }
            Oracle::Gaussian { mu, sigma } => {
                out.copy_from_slice(&oracle_score_gaussian(mu, *sigma, x, t)?);
            }
            Oracle::PointCloud(c) => {
                check_singular_time(t)?;
                let a = (-0.5 * t).exp();
                let v = one_minus_exp_neg(t);
                let mut probs = Vec::with_capacity(c.len());
                cloud_posterior(c, x, a, v, &mut probs);
                // E[(x - a X_0) / v | X_t = x]
                out.fill(0.0);
                for (p, w) in c.points().zip(&probs) {
                    for ((o, xi), yi) in out.iter_mut().zip(x).zip(p) {
                        *o += w * (xi - a * yi);
                    }
                }
                for o in out.iter_mut() {
                    *o /= v;
                }
            }
            Oracle::Smoothed { base, sigma } => {
                if !(t.is_finite() && t >= 0.0) {
                    return Err(Error::NonPositiveTime(t));
                }
                smoothed_score_into(base, *sigma, x, t, out, &mut Vec::with_capacity(base.len()));
            }
        }
        Ok(())
    }

    /// `S`, `ε` and `f` at `(x, t)`.
    pub fn targets(&self, x: &[f64], t: f64) -> Result<OracleTargets> {
        if let Oracle::Line = self {
            return oracle_targets_line(x, t);
        }
        let s = self.score(x, t)?;
        let v = one_minus_exp_neg(t);
        let eps = Vector::from_unchecked(s.iter().map(|si| v.sqrt() * si).collect());
        let f = match self {
            Oracle::PointCloud(c) => oracle_f_pointcloud(c, x, t)?,
            _ => {
                // invert S = (x - e^{-t/2} f) / (1 - e^{-t})
                let e = (0.5 * t).exp();
                Vector::from_unchecked(x.iter().zip(s.iter()).map(|(xi, si)| e * (xi - v * si)).collect())
            }
        };
        Ok(OracleTargets { s, eps, f })
    }

    /// The oracle viewed as a field of one parameterization.
    pub fn field(&self, kind: TargetKind) -> OracleField<'_> {
        OracleField { oracle: self, kind }
    }
}

impl TimeField for Oracle {
    fn dim(&self) -> usize {
        Oracle::dim(self)
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.score_into(x, t, out)
    }
}

pub struct OracleField<'a> {
    oracle: &'a Oracle,
    kind: TargetKind,
}

impl TimeField for OracleField<'_> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        if self.kind == TargetKind::ScoreS {
            return self.oracle.score_into(x, t, out);
        }
        out.copy_from_slice(self.oracle.targets(x, t)?.get(self.kind));
        Ok(())
    }
}

/// A Monte-Carlo estimate together with its kernel effective sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub value: Vector,
    pub ess: f64,
}

/// Nadaraya–Watson estimate of `E[X_0 | X_t = x]` from `n` forward pairs.
pub fn mc_oracle_f(
    dist: &DataDistribution,
    x: &[f64],
    t: f64,
    n: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<McEstimate> {
    mc_kernel_average(dist, x, t, None, n, bandwidth, seed)
}

/// Score at `(x, t)` by conditioning on an intermediate state `X_{t'}`:
/// `S = E[(x - X_{t'} e^{-(t - t')/2}) / (1 - e^{-(t - t')}) | X_t = x]`.
pub fn mc_oracle_score_markov(
    dist: &DataDistribution,
    x: &[f64],
    t: f64,
    t_prime: f64,
    n: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<McEstimate> {
    if !(t_prime.is_finite() && t_prime >= 0.0 && t_prime < t) {
        return Err(Error::invalid(format!("need 0 <= t' < t, got t' = {t_prime}, t = {t}")));
    }
    mc_kernel_average(dist, x, t, Some(t_prime), n, bandwidth, seed)
}

fn mc_kernel_average(
    dist: &DataDistribution,
    x: &[f64],
    t: f64,
    t_prime: Option<f64>,
    n: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<McEstimate> {
    dist.validate()?;
    let dim = dist.dim().unwrap_or(0);
    check_dim(dim, x)?;
    check_time(t)?;
    if n < 1000 {
        return Err(Error::TooFewSamples { min: 1000, got: n });
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let mut rng = stream_rng(seed, stream::FORWARD);
    let tp = t_prime.unwrap_or(0.0);
    let (a1, s1) = ((-0.5 * tp).exp(), one_minus_exp_neg(tp).sqrt());
    let (a2, v2) = ((-0.5 * (t - tp)).exp(), one_minus_exp_neg(t - tp));
    let s2 = v2.sqrt();
    let inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);

    let mut x0 = vec![0.0; dim];
    let mut mid = vec![0.0; dim];
    let mut xt = vec![0.0; dim];
    // Kernel logits are accumulated relative to a running maximum so that
    // far-away x does not underflow every weight to zero.
    let mut max_logit = f64::NEG_INFINITY;
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut acc = vec![0.0; dim];
    for _ in 0..n {
        dist.sample_into(&mut rng, &mut x0);
        for (m, x0i) in mid.iter_mut().zip(&x0) {
            let z: f64 = rng.sample(StandardNormal);
            *m = a1 * x0i + s1 * z;
        }
        for (o, m) in xt.iter_mut().zip(&mid) {
            let z: f64 = rng.sample(StandardNormal);
            *o = a2 * m + s2 * z;
        }
        let logit = -dist_sq(&xt, x) * inv_2h2;
        if logit > max_logit {
            let scale = (max_logit - logit).exp();
            sum_w *= scale;
            sum_w2 *= scale * scale;
            acc.iter_mut().for_each(|v| *v *= scale);
            max_logit = logit;
        }
        let w = (logit - max_logit).exp();
        if w == 0.0 {
            continue;
        }
        sum_w += w;
        sum_w2 += w * w;
        match t_prime {
            None => acc.iter_mut().zip(&x0).for_each(|(a, v)| *a += w * v),
            Some(_) => acc
                .iter_mut()
                .zip(x.iter().zip(&mid))
                .for_each(|(a, (xi, m))| *a += w * (xi - a2 * m) / v2),
        }
    }
    let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    if ess < MIN_ESS {
        return Err(Error::DegenerateEstimate { ess, min: MIN_ESS });
    }
    let value = acc.into_iter().map(|v| v / sum_w).collect();
    Ok(McEstimate { value: Vector::from_unchecked(value), ess })
}
