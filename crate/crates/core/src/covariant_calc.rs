//! Covariant derivatives of first eigenfunctions up to fourth order.
//!
//! Derivative slots are always prepended, so `∇_p∇_q̄∇_k∇_l̄ f` is stored with
//! slot order `(p, q̄, k, l̄)`. Closed forms exist for `f_γ`; the generic engine
//! differentiates any tensor field numerically and applies the Christoffel
//! corrections of the Chern (= Levi-Civita) connection.

use num_complex::Complex64;
use thiserror::Error;

use crate::complex_tensor::{contract, ComplexTensor, IndexKind, IndexSignature, Slot, TensorError, Variance};
use crate::finite_diff::{partial_derivative, FiniteDiffError, StepRule};
use crate::fubini_study::{christoffel_at, inverse_metric_at, metric_at, GeometryError, Point};
use crate::lie_eigen::{Eigenfunction, LieError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovariantError {
    #[error(transparent)]
    FiniteDiff(#[from] FiniteDiffError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("point with |w| = {norm:e} is outside the nested-differentiation domain")]
    OutOfDomain { norm: f64 },
}

/// Largest `|w|` accepted by the numeric engine.
pub const MAX_NESTED_NORM: f64 = 1e3;

/// Step used at every nesting level of the numeric engine.
pub const NESTED_FD: StepRule = StepRule::fourth(5e-3);

const HOLO: IndexKind = IndexKind::Holomorphic;
const ANTI: IndexKind = IndexKind::Antiholomorphic;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `∇_i T` (kind holomorphic) or `∇_ī T` (antiholomorphic), new slot first.
///
/// Lower slots of the derivative's type get `−Γ`, upper slots `+Γ`; the
/// antiholomorphic symbols are the conjugates and mixed symbols vanish.
pub fn covariant_derivative_generic<F>(
    field: &F,
    p: &Point,
    kind: IndexKind,
    rule: StepRule,
) -> Result<ComplexTensor, CovariantError>
where
    F: Fn(&Point) -> Result<ComplexTensor, CovariantError>,
{
    let norm = p.norm_sq().sqrt();
    if norm > MAX_NESTED_NORM {
        return Err(CovariantError::OutOfDomain { norm });
    }
    let mut out = partial_derivative(field, p, rule, kind)?;
    let base = field(p)?;
    let gamma = christoffel_at(p);
    let n = p.n();
    let rank = base.rank();
    let slots: Vec<(usize, Variance)> = base
        .signature()
        .slots()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.kind == kind)
        .map(|(i, s)| (i, s.variance))
        .collect();
    if slots.is_empty() {
        return Ok(out);
    }
    let stride = |s: usize| (0..rank - 1 - s).fold(1usize, |a, _| a * n);
    let gam = |k: usize, i: usize, j: usize| {
        let v = gamma.get(&[k, i, j]);
        if kind == HOLO {
            v
        } else {
            v.conj()
        }
    };
    let block = base.components().len();
    let comps = base.components();
    let out_comps = out.components_mut();
    for i in 0..n {
        for rest in 0..block {
            let mut corr = Complex64::new(0.0, 0.0);
            for &(s, variance) in &slots {
                let st = stride(s);
                let a = (rest / st) % n;
                let origin = rest - a * st;
                for m in 0..n {
                    let t = comps[origin + m * st];
                    match variance {
                        Variance::Lower => corr -= gam(m, i, a) * t,
                        Variance::Upper => corr += gam(a, i, m) * t,
                    }
                }
            }
            out_comps[i * block + rest] += corr;
        }
    }
    Ok(out)
}

fn gamma_gradient_anti(p: &Point) -> Vec<Complex64> {
    let n = p.n() as f64;
    let d = 1.0 + p.norm_sq();
    p.w().iter().map(|w| w * ((n + 1.0) / (d * d))).collect()
}

/// Closed forms of `∇_k∇_l̄ f_γ` and the vanishing `∇_k∇_l f_γ`.
pub fn hessian_closed_gamma(p: &Point, n: usize) -> (ComplexTensor, ComplexTensor) {
    assert_eq!(p.n(), n, "point dimension");
    let d = 1.0 + p.norm_sq();
    let pre = (n as f64 + 1.0) / (d * d);
    let w = p.w();
    let mixed = ComplexTensor::from_fn(n, IndexSignature::lower(&[HOLO, ANTI]), |i| {
        let delta = if i[0] == i[1] { 1.0 } else { 0.0 };
        (c(delta) - w[i[0]].conj() * w[i[1]] * (2.0 / d)) * pre
    });
    let pure = ComplexTensor::zeros(n, IndexSignature::lower(&[HOLO, HOLO]));
    (mixed, pure)
}

/// `∇_q̄∇_k∇_l̄ f_γ = −(g_{k l̄} f_q̄ + g_{k q̄} f_l̄)`, slots `(q̄, k, l̄)`.
pub fn third_derivative_closed_gamma(p: &Point, n: usize) -> ComplexTensor {
    assert_eq!(p.n(), n, "point dimension");
    let g = metric_at(p);
    let fb = gamma_gradient_anti(p);
    ComplexTensor::from_fn(n, IndexSignature::lower(&[ANTI, HOLO, ANTI]), |i| {
        let (q, k, l) = (i[0], i[1], i[2]);
        -(g.get(&[k, l]) * fb[q] + g.get(&[k, q]) * fb[l])
    })
}

/// `∇_p∇_q̄∇_k∇_l̄ f_γ = −(g_{k l̄} H_{p q̄} + g_{k q̄} H_{p l̄})`, slots `(p, q̄, k, l̄)`.
pub fn fourth_derivative_closed_gamma(p: &Point, n: usize) -> ComplexTensor {
    let g = metric_at(p);
    let (h, _) = hessian_closed_gamma(p, n);
    fourth_from_hessian(&g, &h)
}

fn fourth_from_hessian(g: &ComplexTensor, h: &ComplexTensor) -> ComplexTensor {
    ComplexTensor::from_fn(g.n(), IndexSignature::lower(&[HOLO, ANTI, HOLO, ANTI]), |i| {
        let (p, q, k, l) = (i[0], i[1], i[2], i[3]);
        -(g.get(&[k, l]) * h.get(&[p, q]) + g.get(&[k, q]) * h.get(&[p, l]))
    })
}

/// `∂_k∂_l̄ f_η` by exact Wirtinger differentiation of `N / D`.
pub fn hessian_mixed_analytic(f: &Eigenfunction, p: &Point) -> Result<ComplexTensor, CovariantError> {
    let eta = f.eta();
    if eta.n() != p.n() {
        return Err(LieError::SizeMismatch { eta: eta.size(), n: p.n() }.into());
    }
    let (num, u, d) = f.parts(p);
    let w = p.w();
    let (d2, d3) = (d * d, d * d * d);
    Ok(ComplexTensor::from_fn(p.n(), IndexSignature::lower(&[HOLO, ANTI]), |i| {
        let (k, l) = (i[0], i[1]);
        let delta = if k == l { 1.0 } else { 0.0 };
        eta.entry(l + 1, k + 1) / d - u[k] * w[l] / d2 - u[l].conj() * w[k].conj() / d2 - num * (delta / d2)
            + num * w[k].conj() * w[l] * (2.0 / d3)
    }))
}

fn scalar_field(f: &Eigenfunction) -> impl Fn(&Point) -> Result<ComplexTensor, CovariantError> + '_ {
    move |q: &Point| Ok(ComplexTensor::scalar(q.n(), f.value_complex(q)?))
}

/// All covariant derivatives of `f` needed by the identities, at one point.
#[derive(Debug, Clone)]
pub struct DerivativeStack {
    pub f: Eigenfunction,
    pub value: f64,
    /// `(∂f)_k`
    pub grad: ComplexTensor,
    /// `∇_k∇_l̄ f`
    pub hess_mixed: ComplexTensor,
    /// `∇_k∇_l f`
    pub hess_pure: ComplexTensor,
    /// `∇_q̄∇_k∇_l̄ f`
    pub third: ComplexTensor,
    /// `∇_p∇_q̄∇_k∇_l̄ f`
    pub fourth: ComplexTensor,
    pub at: Point,
}

impl DerivativeStack {
    /// Closed forms, `η = γ` only.
    pub fn closed_gamma(p: &Point) -> Self {
        let n = p.n();
        let f = Eigenfunction::gamma(n);
        let value = f.value_complex(p).expect("dimensions agree").re;
        let grad = f.gradient_holo(p).expect("dimensions agree");
        let (hess_mixed, hess_pure) = hessian_closed_gamma(p, n);
        let g = metric_at(p);
        DerivativeStack {
            value,
            grad,
            third: third_derivative_closed_gamma(p, n),
            fourth: fourth_from_hessian(&g, &hess_mixed),
            hess_mixed,
            hess_pure,
            f,
            at: p.clone(),
        }
    }

    /// Analytic value, gradient and mixed Hessian; the pure Hessian, third and
    /// fourth derivatives come from the engine applied to the analytic ones.
    pub fn semi_analytic(f: &Eigenfunction, p: &Point, rule: StepRule) -> Result<Self, CovariantError> {
        let value = f.value_complex(p)?.re;
        let grad = f.gradient_holo(p)?;
        let hess_mixed = hessian_mixed_analytic(f, p)?;
        let grad_field = |q: &Point| Ok(f.gradient_holo(q)?);
        let hess_pure = covariant_derivative_generic(&grad_field, p, HOLO, rule)?;
        let hess_field = |q: &Point| hessian_mixed_analytic(f, q);
        let third_field = |q: &Point| covariant_derivative_generic(&hess_field, q, ANTI, rule);
        let third = third_field(p)?;
        let fourth = covariant_derivative_generic(&third_field, p, HOLO, rule)?;
        Ok(DerivativeStack { f: f.clone(), value, grad, hess_mixed, hess_pure, third, fourth, at: p.clone() })
    }

    /// Everything from nested finite differences of the scalar `f`.
    pub fn numeric(f: &Eigenfunction, p: &Point, rule: StepRule) -> Result<Self, CovariantError> {
        let f0 = scalar_field(f);
        let d_anti = |q: &Point| covariant_derivative_generic(&f0, q, ANTI, rule);
        let d_holo = |q: &Point| covariant_derivative_generic(&f0, q, HOLO, rule);
        let hess = |q: &Point| covariant_derivative_generic(&d_anti, q, HOLO, rule);
        let third = |q: &Point| covariant_derivative_generic(&hess, q, ANTI, rule);
        Ok(DerivativeStack {
            f: f.clone(),
            value: f.value_complex(p)?.re,
            grad: d_holo(p)?,
            hess_mixed: hess(p)?,
            hess_pure: covariant_derivative_generic(&d_holo, p, HOLO, rule)?,
            third: third(p)?,
            fourth: covariant_derivative_generic(&third, p, HOLO, rule)?,
            at: p.clone(),
        })
    }
}

/// `−2 g^{k l̄} T_{k l̄}` for a tensor whose first two slots are `(k, l̄)`.
pub fn rough_trace(t: &ComplexTensor, p: &Point) -> Result<ComplexTensor, CovariantError> {
    let g = metric_at(p);
    let g_inv = inverse_metric_at(p);
    Ok(contract(&g_inv, t, &[(0, 0), (1, 1)], &g, &g_inv)?.scale_real(-2.0))
}

/// `Δ f = −2 g^{k l̄} ∇_k∇_l̄ f`.
pub fn function_laplacian(hess_mixed: &ComplexTensor, p: &Point) -> Result<f64, CovariantError> {
    Ok(rough_trace(hess_mixed, p)?.value().re)
}

/// `Δ Hess f = −2 g^{p q̄} ∇_p∇_q̄ ∇_k∇_l̄ f`, engine applied to the analytic
/// mixed Hessian.
pub fn rough_laplacian_hessian(f: &Eigenfunction, p: &Point) -> Result<ComplexTensor, CovariantError> {
    rough_laplacian_hessian_with(f, p, NESTED_FD)
}

pub fn rough_laplacian_hessian_with(
    f: &Eigenfunction,
    p: &Point,
    rule: StepRule,
) -> Result<ComplexTensor, CovariantError> {
    let hess_field = |q: &Point| hessian_mixed_analytic(f, q);
    let third_field = |q: &Point| covariant_derivative_generic(&hess_field, q, ANTI, rule);
    let fourth = covariant_derivative_generic(&third_field, p, HOLO, rule)?;
    rough_trace(&fourth, p)
}

/// Right-hand side `2(H − (n+1) f g)` for the Hessian of an `E_1` function.
pub fn koi_hess_rhs(hess_mixed: &ComplexTensor, value: f64, p: &Point) -> Result<ComplexTensor, CovariantError> {
    let g = metric_at(p);
    let lambda = p.n() as f64 + 1.0;
    Ok(hess_mixed.sub(&g.scale_real(lambda * value))?.scale_real(2.0))
}

/// Lower holomorphic slot followed by lower antiholomorphic slot.
pub fn is_mixed_pair(t: &ComplexTensor) -> bool {
    t.signature().slots() == [Slot::LOWER_HOLO, Slot::LOWER_ANTI]
}
