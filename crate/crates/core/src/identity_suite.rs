//! The integral and pointwise identities satisfied by first eigenfunctions,
//! each evaluated independently on both sides.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex_tensor::{ComplexTensor, IndexKind};
use crate::covariant_calc::{
    covariant_derivative_generic, fourth_derivative_closed_gamma, hessian_closed_gamma, hessian_mixed_analytic,
    koi_hess_rhs, rough_laplacian_hessian_with, CovariantError, NESTED_FD,
};
use crate::finite_diff::StepRule;
use crate::fubini_study::{inverse_metric_at, metric_at, Point};
use crate::integrator::{
    closed_form_f3_integral, f3_from_standard_integrals, integrate_radial, mc_integrate_vec, rat, ExactValue,
    IntegratorError, McConfig, MCEstimate,
};
use crate::lie_eigen::{gamma, random_traceless_hermitian, trace_cubed, Eigenfunction, TracelessHermitian};
use crate::obstruction::{conversion_factor, ConversionKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuiteError {
    #[error("closed-form evaluation exists only for η = γ")]
    ClosedNeedsGamma,
    #[error("{id} cannot be evaluated with method {method}")]
    NotApplicable { id: IdentityId, method: Method },
    #[error("η has size {eta} but n = {n}")]
    SizeMismatch { eta: usize, n: usize },
    #[error("empty dimension list")]
    EmptyDimensions,
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Covariant(#[from] CovariantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityId {
    TraceFree,
    CodifferentialFree,
    HessFIp,
    HessCube,
    KoiHessId,
    RoughLaplacianHess,
    #[serde(rename = "dhess_1")]
    Dhess1,
    #[serde(rename = "dhess_2")]
    Dhess2,
    #[serde(rename = "notkoi_4d")]
    Notkoi4d,
    F3Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    Pointwise,
    Integral,
    Exact,
}

impl IdentityId {
    pub const ALL: [IdentityId; 10] = [
        IdentityId::TraceFree,
        IdentityId::CodifferentialFree,
        IdentityId::HessFIp,
        IdentityId::HessCube,
        IdentityId::KoiHessId,
        IdentityId::RoughLaplacianHess,
        IdentityId::Dhess1,
        IdentityId::Dhess2,
        IdentityId::Notkoi4d,
        IdentityId::F3Closed,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            IdentityId::TraceFree => "trace_free",
            IdentityId::CodifferentialFree => "codifferential_free",
            IdentityId::HessFIp => "hess_f_ip",
            IdentityId::HessCube => "hess_cube",
            IdentityId::KoiHessId => "koi_hess_id",
            IdentityId::RoughLaplacianHess => "rough_laplacian_hess",
            IdentityId::Dhess1 => "dhess_1",
            IdentityId::Dhess2 => "dhess_2",
            IdentityId::Notkoi4d => "notkoi_4d",
            IdentityId::F3Closed => "f3_closed",
        }
    }

    pub fn kind(self) -> IdentityKind {
        match self {
            IdentityId::TraceFree | IdentityId::CodifferentialFree | IdentityId::KoiHessId => IdentityKind::Pointwise,
            IdentityId::F3Closed => IdentityKind::Exact,
            _ => IdentityKind::Integral,
        }
    }

    /// Which real/complex conversion the integrand's pairing follows.
    pub fn conversion(self) -> Option<ConversionKind> {
        match self {
            IdentityId::HessFIp | IdentityId::HessCube => Some(ConversionKind::Cubic),
            IdentityId::Dhess1 => Some(ConversionKind::Outer),
            IdentityId::RoughLaplacianHess | IdentityId::Dhess2 | IdentityId::Notkoi4d => Some(ConversionKind::Crossed),
            _ => None,
        }
    }

    /// Right-hand side as a multiple of `∫ f³`.
    pub fn rhs_coefficient(self, n: usize) -> Option<BigRational> {
        let c = n as i64 + 1;
        let n = n as i64;
        Some(rat(match self {
            IdentityId::HessFIp => 0,
            IdentityId::HessCube => c.pow(3),
            IdentityId::RoughLaplacianHess => -4 * n * c * c,
            IdentityId::Dhess1 => -2 * c.pow(3),
            IdentityId::Dhess2 => -c.pow(3),
            IdentityId::Notkoi4d => -2 * c * c,
            IdentityId::F3Closed => 1,
            _ => return None,
        }))
    }

    fn needs_fourth(self) -> bool {
        matches!(self, IdentityId::RoughLaplacianHess | IdentityId::Dhess1 | IdentityId::Dhess2 | IdentityId::Notkoi4d)
    }

    pub fn methods(self) -> &'static [Method] {
        match self.kind() {
            IdentityKind::Pointwise => &[Method::Pointwise],
            _ => &[Method::Closed, Method::Mc],
        }
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for IdentityId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IdentityId::ALL
            .iter()
            .copied()
            .find(|id| id.tag() == s)
            .ok_or_else(|| format!("unknown identity '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Closed,
    Mc,
    Pointwise,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Closed => "closed",
            Method::Mc => "mc",
            Method::Pointwise => "pointwise",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Exact(ExactValue),
    Real(f64),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(e) => e.to_f64(),
            Value::Real(x) => *x,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(e) => write!(f, "{e}"),
            Value::Real(x) => write!(f, "{x:.6e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub pointwise_rel: f64,
    pub mc_sigma: f64,
    pub mc_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { pointwise_rel: 1e-4, mc_sigma: 3.0, mc_rel: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaMode {
    Gamma,
    Random(u32),
}

impl fmt::Display for EtaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaMode::Gamma => f.write_str("gamma"),
            EtaMode::Random(k) => write!(f, "random:{k}"),
        }
    }
}

impl FromStr for EtaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "gamma" {
            return Ok(EtaMode::Gamma);
        }
        match s.strip_prefix("random:").map(str::parse::<u32>) {
            Some(Ok(k)) if k >= 1 => Ok(EtaMode::Random(k)),
            _ => Err(format!("expected 'gamma' or 'random:K' with K >= 1, got '{s}'")),
        }
    }
}

/// Seed of the `i`-th random η drawn for a run with seed `seed`.
pub fn eta_seed(seed: u64, i: u32) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)
}

/// The η's a run covers at dimension `n`.
pub fn etas_for(n: usize, mode: EtaMode, seed: u64) -> Vec<TracelessHermitian> {
    match mode {
        EtaMode::Gamma => vec![gamma(n)],
        EtaMode::Random(k) => (0..k).map(|i| random_traceless_hermitian(n, eta_seed(seed, i))).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Monte Carlo sample count; 0 disables the `mc` method.
    pub samples: u64,
    pub seed: u64,
    pub partitions: u32,
    pub tolerances: Tolerances,
    pub eta: EtaMode,
    /// Number of seeded points for pointwise identities.
    pub points: usize,
    /// Relative step of the nested finite differences.
    pub fd_rel_step: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            samples: 0,
            seed: 42,
            partitions: crate::integrator::DEFAULT_PARTITIONS,
            tolerances: Tolerances::default(),
            eta: EtaMode::Gamma,
            points: 100,
            fd_rel_step: NESTED_FD.rel_step,
        }
    }
}

impl SuiteConfig {
    pub fn mc(&self) -> McConfig {
        McConfig::new(self.samples, self.seed).with_partitions(self.partitions)
    }

    fn rule(&self) -> StepRule {
        StepRule::fourth(self.fd_rel_step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: IdentityId,
    pub n: usize,
    pub method: Method,
    pub eta: String,
    pub lhs: Value,
    pub rhs: Value,
    pub abs_err: f64,
    pub rel_err: f64,
    pub sigma: Option<f64>,
    pub pass: bool,
}

/// Both sides of one identity plus what the pass rule needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sides {
    pub lhs: Value,
    pub rhs: Value,
    /// Standard error of the left side (Monte Carlo only).
    pub sigma: Option<f64>,
    /// Denominator of the relative error.
    pub scale: f64,
    /// Worst pointwise tensor discrepancy (pointwise identities only).
    pub max_diff: Option<f64>,
}

fn mat(t: &ComplexTensor) -> DMatrix<Complex64> {
    let n = t.n();
    DMatrix::from_fn(n, n, |i, j| t.get(&[i, j]))
}

/// Pointwise data of `f` needed by every integrand: value, metric, mixed
/// Hessian and optionally `∇_p∇_q̄∇_k∇_l̄ f`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub n: usize,
    pub value: f64,
    /// `g_{k l̄}` as `[k][l]`
    pub g: DMatrix<Complex64>,
    /// `g^{k l̄}` as `[k][l]`
    pub g_inv: DMatrix<Complex64>,
    /// `∇_k∇_l̄ f` as `[k][l]`
    pub hess: DMatrix<Complex64>,
    /// `∇^k∇^l̄ f = g^{k b̄} g^{a l̄} H_{a b̄}`
    pub hess_up: DMatrix<Complex64>,
    pub fourth: Option<ComplexTensor>,
}

impl Jet {
    fn assemble(p: &Point, value: f64, hess: &ComplexTensor, fourth: Option<ComplexTensor>) -> Self {
        let g_inv = mat(&inverse_metric_at(p));
        let h = mat(hess);
        let hess_up = &g_inv * h.transpose() * &g_inv;
        Jet { n: p.n(), value, g: mat(&metric_at(p)), g_inv, hess: h, hess_up, fourth }
    }

    /// Closed forms for `f_γ`.
    pub fn gamma_closed(p: &Point, with_fourth: bool) -> Self {
        let n = p.n();
        let value = crate::lie_eigen::eigenfunction_at(&gamma(n), p).expect("dimensions agree");
        let (h, _) = hessian_closed_gamma(p, n);
        let fourth = with_fourth.then(|| fourth_derivative_closed_gamma(p, n));
        Jet::assemble(p, value, &h, fourth)
    }

    /// Analytic Hessian; the fourth derivative from the numeric engine.
    pub fn engine(f: &Eigenfunction, p: &Point, with_fourth: bool, rule: StepRule) -> Result<Self, CovariantError> {
        let value = f.value_complex(p)?.re;
        let h = hessian_mixed_analytic(f, p)?;
        let fourth = if with_fourth {
            let hess_field = |q: &Point| hessian_mixed_analytic(f, q);
            let third = |q: &Point| covariant_derivative_generic(&hess_field, q, IndexKind::Antiholomorphic, rule);
            Some(covariant_derivative_generic(&third, p, IndexKind::Holomorphic, rule)?)
        } else {
            None
        };
        Ok(Jet::assemble(p, value, &h, fourth))
    }

    /// Endomorphism `A^k_j = g^{k l̄} H_{j l̄}`.
    pub fn endomorphism(&self) -> DMatrix<Complex64> {
        &self.g_inv * self.hess.transpose()
    }

    /// `Σ T_{a b̄ c d̄} X^{a d̄} Y^{c b̄}` when `crossed`, else `Σ T_{a b̄ c d̄} X^{a b̄} Y^{c d̄}`.
    pub fn pair4(t: &ComplexTensor, x: &DMatrix<Complex64>, y: &DMatrix<Complex64>, crossed: bool) -> Complex64 {
        let n = t.n();
        let comps = t.components();
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = comps[((a * n + b) * n + c) * n + d];
                        acc += if crossed { v * x[(a, d)] * y[(c, b)] } else { v * x[(a, b)] * y[(c, d)] };
                    }
                }
            }
        }
        acc
    }

    fn fourth(&self) -> &ComplexTensor {
        self.fourth.as_ref().expect("jet built without the fourth derivative")
    }

    /// `Σ S_{k l̄} T^{k l̄}` with `T^{k l̄}` already raised.
    fn pair2(s: &DMatrix<Complex64>, t_up: &DMatrix<Complex64>) -> Complex64 {
        s.component_mul(t_up).sum()
    }

    /// Real integrand of an integral identity, conversion factor included.
    pub fn integrand(&self, id: IdentityId) -> f64 {
        let f = self.value;
        let n = self.n as f64;
        let c = n + 1.0;
        let a = self.endomorphism();
        let tr_a2 = (&a * &a).trace().re;
        let complex = match id {
            IdentityId::F3Closed => return f * f * f,
            IdentityId::HessFIp => f * tr_a2,
            IdentityId::HessCube => (&a * &a * &a).trace().re,
            IdentityId::RoughLaplacianHess => {
                let t = self.fourth();
                let nn = self.n;
                // Δψ = −2 g^{p q̄} ∇_p∇_q̄ H + (n+1) (Δf) g
                let lap_f = -2.0 * Jet::pair2(&self.hess, &self.g_inv).re;
                let mut lap = DMatrix::from_element(nn, nn, Complex64::new(0.0, 0.0));
                for p in 0..nn {
                    for q in 0..nn {
                        let gpq = self.g_inv[(p, q)];
                        for k in 0..nn {
                            for l in 0..nn {
                                lap[(k, l)] -= gpq * t.get(&[p, q, k, l]) * 2.0;
                            }
                        }
                    }
                }
                lap += &self.g * Complex64::new(c * lap_f, 0.0);
                f * Jet::pair2(&lap, &self.hess_up).re
            }
            IdentityId::Dhess1 => Jet::pair4(self.fourth(), &self.hess_up, &self.hess_up, false).re,
            IdentityId::Dhess2 => Jet::pair4(self.fourth(), &self.hess_up, &self.hess_up, true).re,
            IdentityId::Notkoi4d => f * Jet::pair4(self.fourth(), &self.g_inv, &self.hess_up, true).re,
            _ => panic!("{id} has no integrand"),
        };
        let factor = id.conversion().map(conversion_factor).expect("integral identity");
        factor as f64 * complex
    }
}

/// Polynomial in `s = ‖w‖²` with exact coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<BigRational>);

impl Poly {
    fn from_ints(c: &[i64]) -> Self {
        Poly(c.iter().map(|&v| rat(v)).collect())
    }

    fn add(&self, o: &Poly) -> Poly {
        let len = self.0.len().max(o.0.len());
        Poly(
            (0..len)
                .map(|i| {
                    let a = self.0.get(i).cloned().unwrap_or_else(|| rat(0));
                    let b = o.0.get(i).cloned().unwrap_or_else(|| rat(0));
                    a + b
                })
                .collect(),
        )
    }

    fn mul(&self, o: &Poly) -> Poly {
        let mut out = vec![rat(0); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn scale(&self, k: i64) -> Poly {
        Poly(self.0.iter().map(|a| a * rat(k)).collect())
    }
}

/// Numerator over `(1+s)³` of the `f_γ` integrand of `id`, conversion factor
/// included. Derived from the closed forms `f = (s−n)/(1+s)`,
/// `tr A² = (n+1)²(n−2s+s²)/(1+s)²`, `tr A³ = (n+1)³(n−3s+3s²−s³)/(1+s)³`.
fn radial_numerator(id: IdentityId, n: usize) -> Poly {
    let ni = n as i64;
    let c = ni + 1;
    let f = Poly::from_ints(&[-ni, 1]);
    let tr_a = f.scale(-c);
    let tr_a2 = Poly::from_ints(&[ni, -2, 1]).scale(c * c);
    let tr_a3 = Poly::from_ints(&[ni, -3, 3, -1]).scale(c * c * c);
    let complex = match id {
        IdentityId::F3Closed => return f.mul(&f).mul(&f),
        IdentityId::HessFIp => f.mul(&tr_a2),
        IdentityId::HessCube => tr_a3,
        IdentityId::RoughLaplacianHess => f.mul(&tr_a2).scale(2).add(&f.mul(&f).mul(&tr_a).scale(2 * ni * c)),
        IdentityId::Dhess1 | IdentityId::Dhess2 => tr_a.mul(&tr_a2).add(&tr_a3).scale(-1),
        IdentityId::Notkoi4d => f.mul(&tr_a2.add(&tr_a.mul(&tr_a))).scale(-1),
        _ => panic!("{id} has no radial integrand"),
    };
    complex.scale(conversion_factor(id.conversion().expect("integral identity")) as i64)
}

/// Exact `∫ integrand dV` for `f_γ`.
pub fn closed_integral(id: IdentityId, n: usize) -> Result<ExactValue, SuiteError> {
    Ok(integrate_radial(n, &radial_numerator(id, n).0)?)
}

fn check_size(n: usize, eta: &TracelessHermitian) -> Result<(), SuiteError> {
    if eta.n() != n {
        return Err(SuiteError::SizeMismatch { eta: eta.size(), n });
    }
    Ok(())
}

fn sample_points(n: usize, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..count).map(|_| Point::random(n, &mut rng)).collect()
}

/// Worst case over the sampled points of `(lhs, rhs, abs_err, scale)`.
fn worst_pointwise<F>(points: &[Point], mut eval: F) -> Result<Sides, SuiteError>
where
    F: FnMut(&Point) -> Result<(f64, f64, f64, f64), SuiteError>,
{
    let mut worst: Option<(f64, Sides)> = None;
    for p in points {
        let (lhs, rhs, abs_err, scale) = eval(p)?;
        let rel = if scale > 0.0 { abs_err / scale } else { abs_err };
        if worst.as_ref().is_none_or(|(r, _)| rel > *r) {
            let sides = Sides { lhs: Value::Real(lhs), rhs: Value::Real(rhs), sigma: None, scale, max_diff: Some(abs_err) };
            worst = Some((rel, sides));
        }
    }
    Ok(worst.expect("at least one point").1)
}

fn pointwise_sides(
    id: IdentityId,
    f: &Eigenfunction,
    points: &[Point],
    rule: StepRule,
) -> Result<Sides, SuiteError> {
    let anti = IndexKind::Antiholomorphic;
    let holo = IndexKind::Holomorphic;
    worst_pointwise(points, |p| {
        let n = p.n();
        let c = n as f64 + 1.0;
        let value = f.value_complex(p).map_err(CovariantError::from)?.re;
        let jet = if f.is_gamma() { Jet::gamma_closed(p, false) } else { Jet::engine(f, p, false, rule)? };
        match id {
            IdentityId::TraceFree => {
                // real traces over the CP^n block (Hess f and (n+1) f g₁) and the CP^1 block
                let hess_part = 2.0 * Jet::pair2(&jet.hess, &jet.g_inv).re;
                let metric_part = 2.0 * n as f64 * c * value;
                let phi_part = 2.0 * (1.0 - n as f64) * c * value;
                let total = hess_part + metric_part + phi_part;
                Ok((total, 0.0, total.abs(), hess_part.abs() + metric_part.abs() + phi_part.abs()))
            }
            IdentityId::CodifferentialFree => {
                let hess_field = |q: &Point| hessian_mixed_analytic(f, q);
                let third = covariant_derivative_generic(&hess_field, p, anti, rule)?; // (m̄, k, l̄)
                let grad_field = |q: &Point| Ok(f.gradient_holo(q)?);
                let pure_conj = |q: &Point| Ok(covariant_derivative_generic(&grad_field, q, holo, rule)?.conj());
                let d_pure = covariant_derivative_generic(&pure_conj, p, holo, rule)?; // (k, m̄, l̄)
                let grad = f.gradient_holo(p).map_err(CovariantError::from)?;
                let g_inv = &jet.g_inv;
                let mut worst = (0.0f64, 0.0f64);
                for l in 0..n {
                    let mut hess_term = Complex64::new(0.0, 0.0);
                    let mut pure_term = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        for m in 0..n {
                            hess_term += g_inv[(k, m)] * third.get(&[m, k, l]);
                            pure_term += g_inv[(k, m)] * d_pure.get(&[k, m, l]);
                        }
                    }
                    // (n+1) g^{k m̄} f_m̄ g_{k l̄} = (n+1) f_l̄
                    let metric_term = grad.get(&[l]).conj() * c;
                    let div = hess_term + metric_term + pure_term;
                    let scale = hess_term.norm().max(metric_term.norm()).max(pure_term.norm());
                    if div.norm() >= worst.0 {
                        worst = (div.norm(), scale);
                    }
                }
                Ok((worst.0, 0.0, worst.0, worst.1))
            }
            IdentityId::KoiHessId => {
                let lhs = rough_laplacian_hessian_with(f, p, rule)?;
                let h = if f.is_gamma() { hessian_closed_gamma(p, n).0 } else { hessian_mixed_analytic(f, p)? };
                let rhs = koi_hess_rhs(&h, value, p)?;
                let diff = lhs.max_abs_diff(&rhs).map_err(CovariantError::from)?;
                Ok((lhs.max_abs(), rhs.max_abs(), diff, lhs.max_abs().max(rhs.max_abs())))
            }
            _ => Err(SuiteError::NotApplicable { id, method: Method::Pointwise }),
        }
    })
}

/// Exact right-hand side for `f_γ`, or `c_n · tr(η³)` times the coefficient
/// for generic η.
fn rhs_value(id: IdentityId, n: usize, eta: &TracelessHermitian) -> Result<Value, SuiteError> {
    let coeff = id.rhs_coefficient(n).ok_or(SuiteError::NotApplicable { id, method: Method::Closed })?;
    let f3 = closed_form_f3_integral(n)?;
    if *eta == gamma(n) {
        return Ok(Value::Exact(f3.scale(&coeff)));
    }
    let c_n = 2.0 * std::f64::consts::PI.powi(n as i32) / factorial_f64(n + 3);
    Ok(Value::Real(crate::integrator::rational_to_f64(&coeff) * c_n * trace_cubed(eta)))
}

fn factorial_f64(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Monte Carlo estimates of several integral identities over shared samples.
pub fn mc_integrals(
    ids: &[IdentityId],
    n: usize,
    eta: &TracelessHermitian,
    cfg: &SuiteConfig,
) -> Result<Vec<MCEstimate>, SuiteError> {
    check_size(n, eta)?;
    let with_fourth = ids.iter().any(|id| id.needs_fourth());
    let f = Eigenfunction::new(eta.clone());
    let is_gamma = f.is_gamma();
    let rule = cfg.rule();
    let integrand = |p: &Point| {
        let jet = if is_gamma {
            Jet::gamma_closed(p, with_fourth)
        } else {
            Jet::engine(&f, p, with_fourth, rule).map_err(|e| IntegratorError::Integrand(e.to_string()))?
        };
        Ok(ids.iter().map(|&id| jet.integrand(id)).collect())
    };
    Ok(mc_integrate_vec(integrand, n, ids.len(), cfg.mc())?)
}

/// Relative errors of zero-valued identities are measured against `∫|F|`.
fn mc_sides(est: &MCEstimate, rhs: Value) -> Sides {
    let r = rhs.to_f64();
    let scale = if r != 0.0 { r.abs() } else { est.abs_mean };
    Sides { lhs: Value::Real(est.mean), rhs, sigma: Some(est.std_error), scale, max_diff: None }
}

/// Left and right side of `id` at dimension `n` for the given η and method.
pub fn evaluate_identity_sides(
    id: IdentityId,
    n: usize,
    eta: &TracelessHermitian,
    method: Method,
    cfg: &SuiteConfig,
) -> Result<Sides, SuiteError> {
    check_size(n, eta)?;
    if !id.methods().contains(&method) {
        return Err(SuiteError::NotApplicable { id, method });
    }
    match method {
        Method::Pointwise => {
            let points = sample_points(n, cfg.points.max(1), cfg.seed);
            pointwise_sides(id, &Eigenfunction::new(eta.clone()), &points, cfg.rule())
        }
        Method::Closed => {
            if *eta != gamma(n) {
                return Err(SuiteError::ClosedNeedsGamma);
            }
            let lhs = if id == IdentityId::F3Closed { f3_from_standard_integrals(n)? } else { closed_integral(id, n)? };
            let rhs = match rhs_value(id, n, eta)? {
                Value::Exact(e) => e,
                Value::Real(_) => unreachable!("γ has an exact right-hand side"),
            };
            Ok(Sides { lhs: Value::Exact(lhs), rhs: Value::Exact(rhs), sigma: None, scale: 0.0, max_diff: None })
        }
        Method::Mc => {
            let est = mc_integrals(&[id], n, eta, cfg)?.remove(0);
            Ok(mc_sides(&est, rhs_value(id, n, eta)?))
        }
    }
}

fn finish(id: IdentityId, n: usize, method: Method, eta: &TracelessHermitian, sides: Sides, tol: &Tolerances) -> CheckReport {
    let ratio = |d: f64| if sides.scale > 0.0 { d / sides.scale } else { d };
    let (abs_err, rel_err, pass) = match (&sides.lhs, &sides.rhs, method) {
        (Value::Exact(l), Value::Exact(r), _) => {
            let d = l.sub(r).map(|d| d.to_f64().abs()).unwrap_or(f64::INFINITY);
            let rel = if r.is_zero() { d } else { d / r.to_f64().abs() };
            (d, rel, l == r)
        }
        (l, r, Method::Mc) => {
            let d = (l.to_f64() - r.to_f64()).abs();
            let sigma = sides.sigma.unwrap_or(0.0);
            (d, ratio(d), d <= tol.mc_sigma * sigma && ratio(d) <= tol.mc_rel)
        }
        (l, r, _) => {
            let d = sides.max_diff.unwrap_or_else(|| (l.to_f64() - r.to_f64()).abs());
            (d, ratio(d), ratio(d) <= tol.pointwise_rel)
        }
    };
    let pass = pass && abs_err.is_finite() && rel_err.is_finite();
    CheckReport { id, n, method, eta: eta.label(), lhs: sides.lhs, rhs: sides.rhs, abs_err, rel_err, sigma: sides.sigma, pass }
}

/// Evaluates and grades one identity.
pub fn check_identity(
    id: IdentityId,
    n: usize,
    eta: &TracelessHermitian,
    method: Method,
    cfg: &SuiteConfig,
) -> Result<CheckReport, SuiteError> {
    let sides = evaluate_identity_sides(id, n, eta, method, cfg)?;
    Ok(finish(id, n, method, eta, sides, &cfg.tolerances))
}

/// Every requested identity × n × η × applicable method, ordered by
/// `(id, n, method)`. Closed methods are skipped for η ≠ γ and `mc` when
/// `samples == 0`; Monte Carlo integrals at one `(n, η)` share samples.
pub fn run_suite(n_list: &[usize], ids: &[IdentityId], cfg: &SuiteConfig) -> Result<Vec<CheckReport>, SuiteError> {
    if n_list.is_empty() {
        return Err(SuiteError::EmptyDimensions);
    }
    let mut reports = Vec::new();
    for &n in n_list {
        for eta in etas_for(n, cfg.eta, cfg.seed) {
            let is_gamma = eta == gamma(n);
            let mc_ids: Vec<IdentityId> =
                ids.iter().copied().filter(|id| cfg.samples > 0 && id.methods().contains(&Method::Mc)).collect();
            let mc = if mc_ids.is_empty() { Vec::new() } else { mc_integrals(&mc_ids, n, &eta, cfg)? };
            for &id in ids {
                for &method in id.methods() {
                    let sides = match method {
                        Method::Closed if !is_gamma => continue,
                        Method::Mc => match mc_ids.iter().position(|&m| m == id) {
                            Some(i) => mc_sides(&mc[i], rhs_value(id, n, &eta)?),
                            None => continue,
                        },
                        _ => evaluate_identity_sides(id, n, &eta, method, cfg)?,
                    };
                    reports.push(finish(id, n, method, &eta, sides, &cfg.tolerances));
                }
            }
        }
    }
    reports.sort_by_key(|r| (r.id, r.n, r.method));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::closed_form_f3_integral;

    #[test]
    fn tags_round_trip() {
        for id in IdentityId::ALL {
            assert_eq!(id.tag().parse::<IdentityId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.tag()));
        }
        assert!("nope".parse::<IdentityId>().is_err());
    }

    #[test]
    fn eta_mode_parsing() {
        assert_eq!("gamma".parse::<EtaMode>().unwrap(), EtaMode::Gamma);
        assert_eq!("random:3".parse::<EtaMode>().unwrap(), EtaMode::Random(3));
        assert!("random:0".parse::<EtaMode>().is_err());
        assert!("random".parse::<EtaMode>().is_err());
    }

    #[test]
    fn conversion_factors_per_tag() {
        let factor = |id: IdentityId| conversion_factor(id.conversion().unwrap());
        assert_eq!(factor(IdentityId::HessFIp), 2);
        assert_eq!(factor(IdentityId::HessCube), 2);
        assert_eq!(factor(IdentityId::RoughLaplacianHess), 2);
        assert_eq!(factor(IdentityId::Dhess1), 4);
        assert_eq!(factor(IdentityId::Dhess2), 2);
        assert_eq!(factor(IdentityId::Notkoi4d), 2);
    }

    #[test]
    fn closed_examples() {
        let cfg = SuiteConfig::default();
        let sides = evaluate_identity_sides(IdentityId::HessCube, 2, &gamma(2), Method::Closed, &cfg).unwrap();
        let want = ExactValue::from_ratio(-27, 10, 2);
        assert_eq!(sides.lhs, Value::Exact(want.clone()));
        assert_eq!(sides.rhs, Value::Exact(want));
        let d2 = evaluate_identity_sides(IdentityId::Dhess2, 2, &gamma(2), Method::Closed, &cfg).unwrap();
        assert_eq!(d2.lhs, Value::Exact(ExactValue::from_ratio(27, 10, 2)));
        let f3 = evaluate_identity_sides(IdentityId::F3Closed, 3, &gamma(3), Method::Closed, &cfg).unwrap();
        assert_eq!(f3.lhs, Value::Exact(ExactValue::from_ratio(-1, 15, 3)));
        for n in 1..=5 {
            assert!(closed_integral(IdentityId::HessFIp, n).unwrap().is_zero());
        }
    }

    #[test]
    fn radial_numerators_match_tensor_integrands() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=3 {
            for _ in 0..10 {
                let p = Point::random(n, &mut rng);
                let jet = Jet::gamma_closed(&p, true);
                let s = p.norm_sq();
                for id in IdentityId::ALL.into_iter().filter(|id| id.kind() == IdentityKind::Integral) {
                    let poly = radial_numerator(id, n);
                    let num: f64 = poly
                        .0
                        .iter()
                        .enumerate()
                        .map(|(r, a)| crate::integrator::rational_to_f64(a) * s.powi(r as i32))
                        .sum();
                    let want = num / (1.0 + s).powi(3);
                    let got = jet.integrand(id);
                    assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{id} n={n}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn closed_sides_agree_for_small_n() {
        let cfg = SuiteConfig::default();
        for n in 1..=4 {
            for id in IdentityId::ALL.into_iter().filter(|id| id.kind() != IdentityKind::Pointwise) {
                let r = check_identity(id, n, &gamma(n), Method::Closed, &cfg).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
        assert!(closed_form_f3_integral(1).unwrap().is_zero());
    }

    #[test]
    fn closed_requires_gamma() {
        let eta = random_traceless_hermitian(2, 1);
        let err = evaluate_identity_sides(IdentityId::HessCube, 2, &eta, Method::Closed, &SuiteConfig::default());
        assert_eq!(err.unwrap_err(), SuiteError::ClosedNeedsGamma);
        let err = evaluate_identity_sides(IdentityId::TraceFree, 2, &gamma(2), Method::Mc, &SuiteConfig::default());
        assert!(matches!(err.unwrap_err(), SuiteError::NotApplicable { .. }));
    }

    #[test]
    fn pointwise_checks_pass_for_gamma_and_random_eta() {
        let cfg = SuiteConfig { points: 8, ..SuiteConfig::default() };
        for eta in [gamma(2), random_traceless_hermitian(2, 17)] {
            for id in [IdentityId::TraceFree, IdentityId::CodifferentialFree, IdentityId::KoiHessId] {
                let r = check_identity(id, 2, &eta, Method::Pointwise, &cfg).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn run_suite_closed_only_at_n1() {
        let reports = run_suite(&[1], &IdentityId::ALL, &SuiteConfig { points: 4, ..SuiteConfig::default() }).unwrap();
        assert!(reports.iter().all(|r| r.pass && r.method != Method::Mc));
        for r in reports.iter().filter(|r| r.method == Method::Closed) {
            assert_eq!(r.lhs, r.rhs);
            assert!(matches!(&r.rhs, Value::Exact(e) if e.is_zero()));
        }
        assert!(run_suite(&[], &IdentityId::ALL, &SuiteConfig::default()).is_err());
    }
}
