//! Forward OU process, training targets, training loop, parameterization
//! adapters and the backward splitting sampler.

use std::cell::RefCell;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::config::{LambdaChoice, RunConfig, TargetKind};
use crate::distributions::{sample_data, DataDistribution};
use crate::error::{Error, Result};
use crate::field::{check_dim, check_time, TimeField};
use crate::nn::{adam_step, init_mlp, AdamState, Gradients, MlpModel, Workspace};
use crate::oracle::one_minus_exp_neg;
use crate::rng::{stream, stream_rng, Rng};
use crate::schedule::Schedule;
use crate::vector::{Batch, Vector};

/// `X_t = X_0 e^{-t/2} + sqrt(1 - e^{-t}) N`; returns `(X_t, N)`.
pub fn forward_sample(x0: &[f64], t: f64, seed: u64) -> Result<(Vector, Vector)> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let mut rng = stream_rng(seed, stream::FORWARD);
    let noise: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut xt = vec![0.0; x0.len()];
    forward_into(x0, t, &noise, &mut xt);
    Ok((Vector::new(xt)?, Vector::from_unchecked(noise)))
}

#[inline]
fn forward_into(x0: &[f64], t: f64, noise: &[f64], out: &mut [f64]) {
    let a = (-0.5 * t).exp();
    let s = one_minus_exp_neg(t).sqrt();
    for ((o, x), n) in out.iter_mut().zip(x0).zip(noise) {
        *o = a * x + s * n;
    }
}

/// Regression target for one training sample.
pub fn make_target(kind: TargetKind, x0: &[f64], noise: &[f64], t: f64) -> Result<Vector> {
    if x0.len() != noise.len() {
        return Err(Error::ShapeMismatch { expected: x0.len(), got: noise.len() });
    }
    let mut out = vec![0.0; x0.len()];
    target_into(kind, x0, noise, t, &mut out)?;
    Vector::new(out)
}

fn target_into(kind: TargetKind, x0: &[f64], noise: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
    match kind {
        TargetKind::CondExpF => out.copy_from_slice(x0),
        TargetKind::Epsilon => out.copy_from_slice(noise),
        TargetKind::ScoreS => {
            check_time(t)?;
            let s = 1.0 / one_minus_exp_neg(t).sqrt();
            for (o, n) in out.iter_mut().zip(noise) {
                *o = s * n;
            }
        }
    }
    Ok(())
}

/// Loss weight `λ(t)`.
pub fn lambda_weight(kind: TargetKind, t: f64, choice: LambdaChoice) -> f64 {
    let choice = match (choice, kind) {
        (LambdaChoice::Default, TargetKind::CondExpF) => LambdaChoice::InverseExpm1,
        (LambdaChoice::Default, TargetKind::Epsilon) => LambdaChoice::Uniform,
        (LambdaChoice::Default, TargetKind::ScoreS) => LambdaChoice::OneMinusExpNeg,
        (c, _) => c,
    };
    match choice {
        LambdaChoice::Uniform | LambdaChoice::Default => 1.0,
        LambdaChoice::InverseExpm1 => 1.0 / t.exp_m1(),
        LambdaChoice::OneMinusExpNeg => one_minus_exp_neg(t),
    }
}

/// One minibatch of `(X_0, t, N, X_t, target, λ)`.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub x0: Batch,
    pub t: Vec<f64>,
    pub noise: Batch,
    pub xt: Batch,
    pub target: Batch,
    pub weight: Vec<f64>,
}

impl TrainingBatch {
    /// Times are drawn uniformly from the schedule's grid points.
    pub fn generate(
        x0: Batch,
        schedule: &Schedule,
        kind: TargetKind,
        choice: LambdaChoice,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n = x0.len();
        let d = x0.dim();
        let grid = schedule.grid();
        let mut t = Vec::with_capacity(n);
        let mut noise = Batch::zeros(n, d);
        let mut xt = Batch::zeros(n, d);
        let mut target = Batch::zeros(n, d);
        let mut weight = Vec::with_capacity(n);
        for i in 0..n {
            let ti = grid[rng.random_range(0..grid.len())];
            for v in noise.row_mut(i) {
                *v = rng.sample(StandardNormal);
            }
            forward_into(x0.row(i), ti, noise.row(i), xt.row_mut(i));
            target_into(kind, x0.row(i), noise.row(i), ti, target.row_mut(i))?;
            t.push(ti);
            weight.push(lambda_weight(kind, ti, choice));
        }
        Ok(TrainingBatch { x0, t, noise, xt, target, weight })
    }

    /// Network inputs `(X_t, t)` row by row.
    pub fn inputs(&self) -> Batch {
        let d = self.xt.dim();
        let mut data = Vec::with_capacity(self.t.len() * (d + 1));
        for (row, t) in self.xt.rows().zip(&self.t) {
            data.extend_from_slice(row);
            data.push(*t);
        }
        Batch::from_flat(d + 1, data).expect("consistent shape")
    }
}

/// Trains a fresh network on `dist` and returns it with the per-step losses.
pub fn train(dist: &DataDistribution, config: &RunConfig) -> Result<(MlpModel, Vec<f64>)> {
    train_with_progress(dist, config, |_, _| {})
}

/// As [`train`], calling `progress(step, loss)` after every Adam step.
pub fn train_with_progress(
    dist: &DataDistribution,
    config: &RunConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<(MlpModel, Vec<f64>)> {
    config.validate()?;
    if dist.dim() != Some(config.dim) {
        return Err(Error::invalid("distribution dimension does not match config"));
    }
    let schedule = config.schedule()?;
    let data = sample_data(dist, config.num_samples, config.seed)?;
    let mut model = init_mlp(&config.layer_sizes(), config.seed)?;
    let mut adam = AdamState::new(&model, config.learning_rate);
    let mut rng_batch = stream_rng(config.seed, stream::NOISE);
    let mut rng_shuffle = stream_rng(config.seed, stream::SHUFFLE);
    let mut ws = Workspace::new(&model);
    let mut grads = Gradients(vec![0.0; model.num_params()]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.num_epochs * config.steps_per_epoch());
    let d = config.dim;

    for _epoch in 0..config.num_epochs {
        order.shuffle(&mut rng_shuffle);
        for chunk in order.chunks(config.batch_size) {
            let mut x0 = Vec::with_capacity(chunk.len() * d);
            for &i in chunk {
                x0.extend_from_slice(data.row(i));
            }
            let batch = TrainingBatch::generate(
                Batch::from_flat(d, x0)?,
                &schedule,
                config.target_kind,
                config.weighting,
                &mut rng_batch,
            )?;
            let loss = model.loss_grad_into(&batch.inputs(), &batch.target, &batch.weight, &mut ws, &mut grads)?;
            if !loss.is_finite() || grads.0.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { step: trace.len(), last_finite: Box::new(model) });
            }
            let before = model.clone();
            adam_step(&mut model, &grads, &mut adam)?;
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::TrainingDiverged { step: trace.len(), last_finite: Box::new(before) });
            }
            trace.push(loss);
            progress(trace.len(), loss);
        }
    }
    Ok((model, trace))
}

/// A network viewed as a field: input `(x, t)`, output the learned target.
pub struct ModelField<'a> {
    model: &'a MlpModel,
    ws: RefCell<(Workspace, Vec<f64>)>,
}

impl<'a> ModelField<'a> {
    pub fn new(model: &'a MlpModel) -> Self {
        ModelField { model, ws: RefCell::new((Workspace::new(model), vec![0.0; model.input_dim()])) }
    }
}

impl TimeField for ModelField<'_> {
    fn dim(&self) -> usize {
        self.model.output_dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), x)?;
        let mut guard = self.ws.borrow_mut();
        let (ws, input) = &mut *guard;
        input[..x.len()].copy_from_slice(x);
        input[x.len()] = t;
        self.model.forward_into(input, ws, out)
    }
}

/// Converts a field of parameterization `kind` into a score field.
pub struct ScoreFrom<F> {
    inner: F,
    kind: TargetKind,
}

impl<F: TimeField> ScoreFrom<F> {
    pub fn new(kind: TargetKind, inner: F) -> Self {
        ScoreFrom { inner, kind }
    }
}

impl<F: TimeField> TimeField for ScoreFrom<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_time(t)?;
        self.inner.eval_into(x, t, out)?;
        let v = one_minus_exp_neg(t);
        match self.kind {
            TargetKind::ScoreS => {}
            TargetKind::Epsilon => {
                let s = 1.0 / v.sqrt();
                out.iter_mut().for_each(|o| *o *= s);
            }
            TargetKind::CondExpF => {
                let a = (-0.5 * t).exp();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = (xi - a * *o) / v;
                }
            }
        }
        Ok(())
    }
}

/// Converts a score field into parameterization `kind`.
pub struct FromScore<F> {
    inner: F,
    kind: TargetKind,
}

impl<F: TimeField> FromScore<F> {
    pub fn new(kind: TargetKind, inner: F) -> Self {
        FromScore { inner, kind }
    }
}

impl<F: TimeField> TimeField for FromScore<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        self.inner.eval_into(x, t, out)?;
        let v = one_minus_exp_neg(t);
        match self.kind {
            TargetKind::ScoreS => {}
            TargetKind::Epsilon => {
                let s = v.sqrt();
                out.iter_mut().for_each(|o| *o *= s);
            }
            TargetKind::CondExpF => {
                let e = (0.5 * t).exp();
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = e * (xi - v * *o);
                }
            }
        }
        Ok(())
    }
}

/// Score drift provider for a network trained on `kind`.
pub fn as_score(kind: TargetKind, model: &MlpModel) -> ScoreFrom<ModelField<'_>> {
    ScoreFrom::new(kind, ModelField::new(model))
}

/// `X̄ = X - Δt S(X, t_hi)`, then `X ← e^{Δt/2} X̄ + sqrt(1 - e^{-Δt}) N`.
pub fn splitting_step(
    drift: &dyn TimeField,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    noise: Option<&[f64]>,
) -> Result<Vector> {
    let mut out = x.to_vec();
    let mut s = vec![0.0; x.len()];
    split_update(drift, &mut out, t_hi, t_hi - t_lo, noise, &mut s)?;
    Vector::new(out)
}

fn split_update(
    drift: &dyn TimeField,
    x: &mut [f64],
    t: f64,
    dt: f64,
    noise: Option<&[f64]>,
    s: &mut [f64],
) -> Result<()> {
    drift.eval_into(x, t, s)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDrift { x: x.to_vec(), t });
    }
    let grow = (0.5 * dt).exp();
    let sd = one_minus_exp_neg(dt).sqrt();
    match noise {
        Some(n) => {
            for ((xi, si), ni) in x.iter_mut().zip(s.iter()).zip(n) {
                *xi = grow * (*xi - dt * si) + sd * ni;
            }
        }
        None => {
            for (xi, si) in x.iter_mut().zip(s.iter()) {
                *xi = grow * (*xi - dt * si);
            }
        }
    }
    Ok(())
}

/// Runs the backward sampler from `N(0, I)` at `T` down to `t = 0`.
pub fn backward_sample(drift: &dyn TimeField, schedule: &Schedule, n: usize, seed: u64) -> Result<Batch> {
    backward_sample_with_snapshots(drift, schedule, n, seed, &[]).map(|(b, _)| b)
}

/// Grid index (0-based) nearest to `t`, or `None` for the terminal `t = 0` state.
fn snapshot_index(schedule: &Schedule, t: f64) -> Option<usize> {
    let g = schedule.grid();
    if t < 0.5 * g[0] {
        return None;
    }
    (0..g.len()).min_by(|&a, &b| (g[a] - t).abs().total_cmp(&(g[b] - t).abs()))
}

/// As [`backward_sample`], also returning the state at the grid times
/// closest to each requested time (`0` means the final output).
pub fn backward_sample_with_snapshots(
    drift: &dyn TimeField,
    schedule: &Schedule,
    n: usize,
    seed: u64,
    snapshot_times: &[f64],
) -> Result<(Batch, Vec<(f64, Batch)>)> {
    if n == 0 {
        return Err(Error::invalid("need n >= 1 samples"));
    }
    let d = drift.dim();
    let grid = schedule.grid();
    let k = grid.len();
    let wanted: Vec<Option<usize>> = snapshot_times.iter().map(|&t| snapshot_index(schedule, t)).collect();
    let mut snaps: Vec<Option<Batch>> = vec![None; wanted.len()];

    let mut rng = stream_rng(seed, stream::SAMPLER);
    let mut x = Batch::zeros(n, d);
    for row in x.rows_mut() {
        row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    }
    let mut s = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let record = |snaps: &mut Vec<Option<Batch>>, idx: Option<usize>, x: &Batch| {
        for (slot, w) in snaps.iter_mut().zip(&wanted) {
            if *w == idx {
                *slot = Some(x.clone());
            }
        }
    };
    record(&mut snaps, Some(k - 1), &x);
    for i in (1..k).rev() {
        let (t_hi, dt) = (grid[i], grid[i] - grid[i - 1]);
        for row in x.rows_mut() {
            noise.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            split_update(drift, row, t_hi, dt, Some(&noise), &mut s)?;
        }
        record(&mut snaps, Some(i - 1), &x);
    }
    // t_1 -> 0: drift only
    for row in x.rows_mut() {
        split_update(drift, row, grid[0], grid[0], None, &mut s)?;
    }
    record(&mut snaps, None, &x);
    let snaps = wanted
        .iter()
        .zip(snaps)
        .map(|(w, b)| (w.map_or(0.0, |i| grid[i]), b.expect("every index is visited")))
        .collect();
    Ok((x, snaps))
}

/// One DDPM ancestral step `t_hi -> t_lo` with the given noise draw:
/// `X ← (X - β / sqrt(1 - ᾱ) ε(X, t_hi)) / sqrt(α) + sqrt(β) N`, where
/// `ᾱ = e^{-t_hi}` matches the time at which ε is evaluated.
pub fn ddpm_step_with_noise(
    eps: &dyn TimeField,
    x: &[f64],
    t_hi: f64,
    t_lo: f64,
    noise: &[f64],
) -> Result<Vector> {
    if !(t_lo > 0.0 && t_hi > t_lo && t_hi.is_finite()) {
        return Err(Error::invalid(format!("need 0 < t_lo < t_hi, got {t_lo}, {t_hi}")));
    }
    check_dim(eps.dim(), x)?;
    let dt = t_hi - t_lo;
    let beta = one_minus_exp_neg(dt);
    let alpha = (-dt).exp();
    let one_minus_abar = one_minus_exp_neg(t_hi);
    let mut e = vec![0.0; x.len()];
    eps.eval_into(x, t_hi, &mut e)?;
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDrift { x: x.to_vec(), t: t_hi });
    }
    let c = beta / one_minus_abar.sqrt();
    let out = x
        .iter()
        .zip(&e)
        .zip(noise)
        .map(|((xi, ei), ni)| (xi - c * ei) / alpha.sqrt() + beta.sqrt() * ni)
        .collect();
    Vector::new(out)
}

pub fn ddpm_step(eps: &dyn TimeField, x: &[f64], t_hi: f64, t_lo: f64, seed: u64) -> Result<Vector> {
    let mut rng = stream_rng(seed, stream::SAMPLER);
    let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    ddpm_step_with_noise(eps, x, t_hi, t_lo, &noise)
}
