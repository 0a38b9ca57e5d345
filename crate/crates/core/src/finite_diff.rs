//! Central finite differences on chart coordinates, combined into Wirtinger
//! derivatives `∂_j = ½(∂_{x_j} − i∂_{y_j})`, `∂_j̄ = ½(∂_{x_j} + i∂_{y_j})`.

use num_complex::Complex64;
use thiserror::Error;

use crate::complex_tensor::{ComplexTensor, IndexKind};
use crate::fubini_study::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FiniteDiffError {
    #[error("finite-difference step {step:e} underflows at |w| = {norm:e}")]
    StepUnderflow { step: f64, norm: f64 },
    #[error("non-finite field value on the stencil at w = {point:?}")]
    NonFinite { point: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`
    Second,
    /// `(f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h`
    Fourth,
}

impl Stencil {
    fn taps(self) -> &'static [(f64, f64)] {
        match self {
            Stencil::Second => &[(-1.0, -0.5), (1.0, 0.5)],
            Stencil::Fourth => &[(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)],
        }
    }
}

/// Step `h = rel_step · (1 + ‖w‖)` with the given stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRule {
    pub rel_step: f64,
    pub stencil: Stencil,
}

impl StepRule {
    pub const fn fourth(rel_step: f64) -> Self {
        StepRule { rel_step, stencil: Stencil::Fourth }
    }

    pub fn step_at(&self, p: &Point) -> Result<f64, FiniteDiffError> {
        let norm = p.norm_sq().sqrt();
        let h = self.rel_step * (1.0 + norm);
        // the perturbed coordinate must differ from the base one in floating point
        if !(h.is_finite() && h > 0.0) || h <= 64.0 * f64::EPSILON * (1.0 + norm) {
            return Err(FiniteDiffError::StepUnderflow { step: h, norm });
        }
        Ok(h)
    }
}

/// Wirtinger partials of a tensor-valued field in every chart direction.
///
/// Returns `(holo, anti)` where `holo[j] = ∂_j T` and `anti[j] = ∂_j̄ T`.
pub fn wirtinger_partials<F, E>(
    field: &F,
    p: &Point,
    rule: StepRule,
) -> Result<(Vec<ComplexTensor>, Vec<ComplexTensor>), E>
where
    F: Fn(&Point) -> Result<ComplexTensor, E>,
    E: From<FiniteDiffError>,
{
    let h = rule.step_at(p)?;
    let n = p.n();
    let mut holo = Vec::with_capacity(n);
    let mut anti = Vec::with_capacity(n);
    for j in 0..n {
        let dx = directional(field, p, j, Complex64::new(h, 0.0), rule.stencil, h)?;
        let dy = directional(field, p, j, Complex64::new(0.0, h), rule.stencil, h)?;
        let half = Complex64::new(0.5, 0.0);
        let half_i = Complex64::new(0.0, 0.5);
        let mut d_holo = dx.clone();
        let mut d_anti = dx;
        for ((a, b), y) in d_holo
            .components_mut()
            .iter_mut()
            .zip(d_anti.components_mut().iter_mut())
            .zip(dy.components())
        {
            let x = *a;
            *a = half * x - half_i * y;
            *b = half * x + half_i * y;
        }
        holo.push(d_holo);
        anti.push(d_anti);
    }
    Ok((holo, anti))
}

/// Wirtinger partials of one type only (cheaper bookkeeping, same evaluations).
pub fn wirtinger_partials_of_kind<F, E>(
    field: &F,
    p: &Point,
    rule: StepRule,
    kind: IndexKind,
) -> Result<Vec<ComplexTensor>, E>
where
    F: Fn(&Point) -> Result<ComplexTensor, E>,
    E: From<FiniteDiffError>,
{
    let (holo, anti) = wirtinger_partials(field, p, rule)?;
    Ok(match kind {
        IndexKind::Holomorphic => holo,
        IndexKind::Antiholomorphic => anti,
    })
}

fn directional<F, E>(
    field: &F,
    p: &Point,
    j: usize,
    delta: Complex64,
    stencil: Stencil,
    h: f64,
) -> Result<ComplexTensor, E>
where
    F: Fn(&Point) -> Result<ComplexTensor, E>,
    E: From<FiniteDiffError>,
{
    let mut acc: Option<ComplexTensor> = None;
    for &(k, weight) in stencil.taps() {
        let q = p.shifted(j, delta * k);
        let v = field(&q)?;
        if !v.all_finite() {
            return Err(FiniteDiffError::NonFinite { point: q.coords() }.into());
        }
        let w = Complex64::new(weight / h, 0.0);
        acc = Some(match acc {
            None => v.scale(w),
            Some(mut a) => {
                for (x, y) in a.components_mut().iter_mut().zip(v.components()) {
                    *x += w * y;
                }
                a
            }
        });
    }
    Ok(acc.expect("stencil has taps"))
}

/// Plain (non-covariant) Wirtinger derivative with the new lower slot of
/// type `kind` prepended to the field's signature.
pub fn partial_derivative<F, E>(
    field: &F,
    p: &Point,
    rule: StepRule,
    kind: IndexKind,
) -> Result<ComplexTensor, E>
where
    F: Fn(&Point) -> Result<ComplexTensor, E>,
    E: From<FiniteDiffError>,
{
    let parts = wirtinger_partials_of_kind(field, p, rule, kind)?;
    Ok(stack_partials(&parts, p.n(), crate::complex_tensor::Slot::lower(kind)))
}

/// Stacks `parts[j]` (all of one signature) into a tensor whose new first
/// slot is `j`.
pub fn stack_partials(parts: &[ComplexTensor], n: usize, slot: crate::complex_tensor::Slot) -> ComplexTensor {
    let sig = parts[0].signature().prepend(slot);
    let mut components = Vec::with_capacity(n * parts[0].components().len());
    for t in parts {
        components.extend_from_slice(t.components());
    }
    ComplexTensor::from_components(n, sig, components).expect("stacked partials have n^rank components")
}
