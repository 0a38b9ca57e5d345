//! Fubini–Study geometry on the affine chart `w_i = z_i / z_0` of CP^n,
//! scaled so that `Ric = (n+1) g`.
//!
//! All closed forms use the Hermitian norm `s = Σ|w_i|²`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::complex_tensor::{contract, ComplexTensor, IndexKind, IndexSignature, Slot, TensorError};
use crate::finite_diff::{partial_derivative, FiniteDiffError, StepRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("a chart point needs at least one coordinate")]
    EmptyPoint,
    #[error("non-finite chart coordinate")]
    NonFiniteCoordinate,
    #[error(transparent)]
    FiniteDiff(#[from] FiniteDiffError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A point of the chart `U_0 ≅ C^n` with its cached Hermitian norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    w: Vec<Complex64>,
    norm_sq: f64,
}

impl Point {
    pub fn new(w: Vec<Complex64>) -> Result<Self, GeometryError> {
        if w.is_empty() {
            return Err(GeometryError::EmptyPoint);
        }
        if w.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(GeometryError::NonFiniteCoordinate);
        }
        let norm_sq = w.iter().map(|z| z.norm_sqr()).sum();
        Ok(Point { w, norm_sq })
    }

    pub fn origin(n: usize) -> Self {
        assert!(n >= 1, "CP^n needs n >= 1");
        Point { w: vec![Complex64::new(0.0, 0.0); n], norm_sq: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[Complex64] {
        &self.w
    }

    /// `‖w‖² = Σ|w_i|²`
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn shifted(&self, j: usize, delta: Complex64) -> Self {
        let mut w = self.w.clone();
        w[j] += delta;
        let norm_sq = w.iter().map(|z| z.norm_sqr()).sum();
        Point { w, norm_sq }
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.w.iter().map(|z| (z.re, z.im)).collect()
    }

    /// Test-point distribution for pointwise checks: uniform direction on
    /// `S^{2n-1}`, radius log-uniform on `[1e-3, 10]`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let dir: Vec<f64> = (0..2 * n).map(|_| StandardNormal.sample(rng)).collect();
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = (rng.random_range(1e-3f64.ln()..10f64.ln())).exp();
        let w = (0..n)
            .map(|i| Complex64::new(dir[2 * i], dir[2 * i + 1]) * (radius / len))
            .collect();
        Point::new(w).expect("finite random point")
    }
}

fn metric_signature() -> IndexSignature {
    IndexSignature::new(vec![Slot::LOWER_HOLO, Slot::LOWER_ANTI])
}

fn inverse_signature() -> IndexSignature {
    IndexSignature::new(vec![Slot::UPPER_HOLO, Slot::UPPER_ANTI])
}

/// `g_{k l̄} = (δ_{kl} − w̄_k w_l / (1+s)) / (1+s)`
pub fn metric_at(p: &Point) -> ComplexTensor {
    let d = 1.0 + p.norm_sq();
    let w = p.w();
    ComplexTensor::from_fn(p.n(), metric_signature(), |i| {
        let (k, l) = (i[0], i[1]);
        let delta = if k == l { 1.0 } else { 0.0 };
        (Complex64::new(delta, 0.0) - w[k].conj() * w[l] / d) / d
    })
}

/// `g^{k l̄} = (1+s)(δ_{kl} + w_k w̄_l)`, so that `Σ_l g^{k l̄} g_{j l̄} = δ_{kj}`.
pub fn inverse_metric_at(p: &Point) -> ComplexTensor {
    let d = 1.0 + p.norm_sq();
    let w = p.w();
    ComplexTensor::from_fn(p.n(), inverse_signature(), |i| {
        let (k, l) = (i[0], i[1]);
        let delta = if k == l { 1.0 } else { 0.0 };
        (Complex64::new(delta, 0.0) + w[k] * w[l].conj()) * d
    })
}

/// Density of `dV_g` against `Π (i/2) dw_j ∧ dw̄_j`: `(1+s)^{-(n+1)}`.
pub fn volume_density_at(p: &Point) -> f64 {
    (1.0 + p.norm_sq()).powi(-(p.n() as i32 + 1))
}

/// `Γ^k_{ij} = −(δ_{jk} w̄_i + δ_{ik} w̄_j) / (1+s)`, stored as `[k][i][j]`.
/// Mixed-type Christoffel symbols vanish and are not stored.
pub fn christoffel_at(p: &Point) -> ComplexTensor {
    let d = 1.0 + p.norm_sq();
    let w = p.w();
    let sig = IndexSignature::new(vec![Slot::UPPER_HOLO, Slot::LOWER_HOLO, Slot::LOWER_HOLO]);
    ComplexTensor::from_fn(p.n(), sig, |idx| {
        let (k, i, j) = (idx[0], idx[1], idx[2]);
        let mut z = Complex64::new(0.0, 0.0);
        if j == k {
            z += w[i].conj();
        }
        if i == k {
            z += w[j].conj();
        }
        -z / d
    })
}

/// `Rm_i^{j}_k^{l} = δ_i^j δ_k^l + δ_i^l δ_k^j`, slots `(i, j, k, l)`.
pub fn curvature_closed_form(n: usize) -> ComplexTensor {
    let sig = IndexSignature::new(vec![Slot::LOWER_HOLO, Slot::UPPER_HOLO, Slot::LOWER_HOLO, Slot::UPPER_HOLO]);
    ComplexTensor::from_fn(n, sig, |idx| {
        let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
        let v = (i == j && k == l) as u8 + (i == l && k == j) as u8;
        Complex64::new(v as f64, 0.0)
    })
}

/// Finite-difference step for metric derivatives.
pub const METRIC_FD: StepRule = StepRule::fourth(1e-3);

fn metric_field(q: &Point) -> Result<ComplexTensor, GeometryError> {
    Ok(metric_at(q))
}

/// Fully lowered curvature `R_{i j̄ k l̄} = −∂_i∂_j̄ g_{k l̄} + g^{p q̄} ∂_i g_{k q̄} ∂_j̄ g_{p l̄}`
/// from finite differences of the metric closed form.
pub fn curvature_from_metric(p: &Point) -> Result<ComplexTensor, GeometryError> {
    curvature_from_metric_with(p, METRIC_FD)
}

pub fn curvature_from_metric_with(p: &Point, rule: StepRule) -> Result<ComplexTensor, GeometryError> {
    let g = metric_at(p);
    let g_inv = inverse_metric_at(p);
    let dbar_g = |q: &Point| partial_derivative(&metric_field, q, rule, IndexKind::Antiholomorphic);
    // slots (i, j̄, k, l̄)
    let ddbar_g = partial_derivative(&dbar_g, p, rule, IndexKind::Holomorphic)?;
    let d_g = partial_derivative(&metric_field, p, rule, IndexKind::Holomorphic)?; // (i, k, q̄)
    let db_g = dbar_g(p)?; // (j̄, p, l̄)
    let quad = contract(&d_g, &db_g, &[(2, 1)], &g, &g_inv)?; // (i, k, j̄, l̄)
    let quad = quad.permute(&[0, 2, 1, 3])?;
    Ok(quad.sub(&ddbar_g)?)
}

/// `R_i^{m}_k^{n}` obtained by raising both antiholomorphic slots of the
/// derivative-based curvature; comparable to [`curvature_closed_form`].
pub fn curvature_from_metric_raised(p: &Point) -> Result<ComplexTensor, GeometryError> {
    let g_inv = inverse_metric_at(p);
    let r = curvature_from_metric(p)?;
    Ok(r.raise(1, &g_inv)?.raise(3, &g_inv)?)
}

/// `Ric_{k l̄} = (n+1) g_{k l̄}`
pub fn ricci_at(p: &Point) -> ComplexTensor {
    metric_at(p).scale_real(p.n() as f64 + 1.0)
}

/// `Ric_{k l̄} = g^{i j̄} R_{i j̄ k l̄}` with the derivative-based curvature.
pub fn ricci_from_curvature(p: &Point) -> Result<ComplexTensor, GeometryError> {
    let g = metric_at(p);
    let g_inv = inverse_metric_at(p);
    let r = curvature_from_metric(p)?;
    Ok(contract(&g_inv, &r, &[(0, 0), (1, 1)], &g, &g_inv)?)
}

/// Kähler potential `log(1 + s)`.
pub fn kahler_potential(p: &Point) -> f64 {
    p.norm_sq().ln_1p()
}

/// Everything metric-related at one point.
#[derive(Debug, Clone)]
pub struct MetricBundle {
    pub g: ComplexTensor,
    pub g_inv: ComplexTensor,
    pub vol_density: f64,
    pub christoffel: ComplexTensor,
    pub at: Point,
}

impl MetricBundle {
    pub fn at(p: &Point) -> Self {
        MetricBundle {
            g: metric_at(p),
            g_inv: inverse_metric_at(p),
            vol_density: volume_density_at(p),
            christoffel: christoffel_at(p),
            at: p.clone(),
        }
    }
}
