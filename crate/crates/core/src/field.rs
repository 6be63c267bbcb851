//! Time-dependent vector fields `(x, t) -> R^d`.
//!
//! A drift provider for the backward sampler is any field that returns the
//! score `S`. Networks trained on ε or f are turned into score fields with the
//! adapters in [`crate::diffusion`].

use crate::error::{Error, Result};
use crate::vector::Vector;

pub trait TimeField {
    fn dim(&self) -> usize;

    /// Writes the field value at `(x, t)` into `out`.
    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()>;

    fn eval(&self, x: &[f64], t: f64) -> Result<Vector> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, t, &mut out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDrift { x: x.to_vec(), t });
        }
        Ok(Vector::from_unchecked(out))
    }
}

impl<F: TimeField + ?Sized> TimeField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (**self).eval_into(x, t, out)
    }
}

impl<F: TimeField + ?Sized> TimeField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        (**self).eval_into(x, t, out)
    }
}

/// A field backed by a closure; handy for tests and constant fields.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> TimeField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.dim, x)?;
        (self.f)(x, t, out);
        Ok(())
    }
}

pub(crate) fn check_dim(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(Error::ShapeMismatch { expected: dim, got: x.len() });
    }
    Ok(())
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    Ok(())
}
