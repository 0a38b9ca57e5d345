//! Exact standard integrals over CP^n and seeded Monte Carlo integration
//! against the Fubini–Study volume.

use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::fubini_study::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("n must be at least 1")]
    ZeroDimension,
    #[error("standard integrals are defined for r in 0..=3, got {0}")]
    RadialPowerOutOfRange(usize),
    #[error("Beta reduction and displayed form disagree for n={n}, r={r}")]
    Inconsistent { n: usize, r: usize },
    #[error("cannot add multiples of pi^{left} and pi^{right}")]
    PiPowerMismatch { left: u32, right: u32 },
    #[error("Monte Carlo needs at least one sample")]
    ZeroSamples,
    #[error("Monte Carlo needs at least one partition")]
    ZeroPartitions,
    #[error("non-finite integrand value at w = {point:?}")]
    NonFinite { point: Vec<(f64, f64)> },
    #[error("integrand failed: {0}")]
    Integrand(String),
}

/// `coeff · π^pi_pow` with an exact rational coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExactValue {
    coeff: BigRational,
    pi_pow: u32,
}

impl ExactValue {
    pub fn new(coeff: BigRational, pi_pow: u32) -> Self {
        ExactValue { coeff, pi_pow }
    }

    pub fn from_ratio(num: i64, den: i64, pi_pow: u32) -> Self {
        ExactValue::new(BigRational::new(BigInt::from(num), BigInt::from(den)), pi_pow)
    }

    pub fn zero(pi_pow: u32) -> Self {
        ExactValue::new(BigRational::zero(), pi_pow)
    }

    pub fn coeff(&self) -> &BigRational {
        &self.coeff
    }

    pub fn pi_pow(&self) -> u32 {
        self.pi_pow
    }

    pub fn is_zero(&self) -> bool {
        self.coeff.is_zero()
    }

    /// Sum; a zero operand adopts the other's power of π.
    pub fn add(&self, other: &Self) -> Result<Self, IntegratorError> {
        if self.pi_pow == other.pi_pow {
            return Ok(ExactValue::new(&self.coeff + &other.coeff, self.pi_pow));
        }
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        Err(IntegratorError::PiPowerMismatch { left: self.pi_pow, right: other.pi_pow })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, IntegratorError> {
        self.add(&other.scale(&BigRational::from_integer((-1).into())))
    }

    pub fn scale(&self, factor: &BigRational) -> Self {
        ExactValue::new(&self.coeff * factor, self.pi_pow)
    }

    pub fn scale_int(&self, factor: i64) -> Self {
        self.scale(&BigRational::from_integer(factor.into()))
    }

    pub fn mul(&self, other: &Self) -> Self {
        ExactValue::new(&self.coeff * &other.coeff, self.pi_pow + other.pi_pow)
    }

    /// `self / other` as a rational when both carry the same power of π.
    pub fn ratio(&self, other: &Self) -> Option<BigRational> {
        if other.is_zero() || self.pi_pow != other.pi_pow {
            return None;
        }
        Some(&self.coeff / &other.coeff)
    }

    pub fn to_f64(&self) -> f64 {
        rational_to_f64(&self.coeff) * std::f64::consts::PI.powi(self.pi_pow as i32)
    }

    /// `"p/q"` (or `"p"` for integers).
    pub fn coeff_string(&self) -> String {
        if self.coeff.denom().is_one() {
            self.coeff.numer().to_string()
        } else {
            format!("{}/{}", self.coeff.numer(), self.coeff.denom())
        }
    }
}

pub fn rational_to_f64(q: &BigRational) -> f64 {
    match (q.numer().to_f64(), q.denom().to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            // huge operands: scale both down by the same power of two
            let shift = q.numer().bits().max(q.denom().bits()).saturating_sub(1000);
            let a = (q.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let b = (q.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            a / b
        }
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pi_pow {
            0 => write!(f, "{}", self.coeff_string()),
            1 => write!(f, "{}·π", self.coeff_string()),
            k => write!(f, "{}·π^{}", self.coeff_string(), k),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ExactValueRepr {
    coeff: String,
    pi_pow: u32,
}

impl Serialize for ExactValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = ExactValueRepr {
            coeff: format!("{}/{}", self.coeff.numer(), self.coeff.denom()),
            pi_pow: self.pi_pow,
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExactValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = ExactValueRepr::deserialize(deserializer)?;
        let (p, q) = match repr.coeff.split_once('/') {
            Some((p, q)) => (p, q),
            None => (repr.coeff.as_str(), "1"),
        };
        let p: BigInt = p.trim().parse().map_err(D::Error::custom)?;
        let q: BigInt = q.trim().parse().map_err(D::Error::custom)?;
        if q.is_zero() {
            return Err(D::Error::custom("zero denominator"));
        }
        Ok(ExactValue::new(BigRational::new(p, q), repr.pi_pow))
    }
}

fn factorial(k: usize) -> BigInt {
    (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

fn check_args(n: usize, r: usize) -> Result<(), IntegratorError> {
    if n == 0 {
        return Err(IntegratorError::ZeroDimension);
    }
    if r > 3 {
        return Err(IntegratorError::RadialPowerOutOfRange(r));
    }
    Ok(())
}

/// `π^n/(n−1)! · B(n+r, 4−r)` with `B(a, b) = (a−1)!(b−1)!/(a+b−1)!`.
pub fn closed_form_i_beta(n: usize, r: usize) -> Result<ExactValue, IntegratorError> {
    check_args(n, r)?;
    let beta = ratio(factorial(n + r - 1) * factorial(3 - r), factorial(n + 3));
    Ok(ExactValue::new(beta / BigRational::from_integer(factorial(n - 1)), n as u32))
}

/// The combinatorial forms `c_r(n) · π^n/(n+3)!`.
pub fn closed_form_i_lemma(n: usize, r: usize) -> Result<ExactValue, IntegratorError> {
    check_args(n, r)?;
    let nb = BigInt::from(n);
    let top = match r {
        0 => BigInt::from(6),
        1 => BigInt::from(2) * &nb,
        2 => BigInt::from(2) * &nb + BigInt::from(2) * binomial(n, 2),
        _ => BigInt::from(6) * &nb + BigInt::from(12) * binomial(n, 2) + BigInt::from(6) * binomial(n, 3),
    };
    Ok(ExactValue::new(ratio(top, factorial(n + 3)), n as u32))
}

/// `I_n^r = ∫_{C^n} ‖w‖^{2r}(1+‖w‖²)^{−(n+4)}` against Lebesgue measure.
pub fn closed_form_i(n: usize, r: usize) -> Result<ExactValue, IntegratorError> {
    let beta = closed_form_i_beta(n, r)?;
    if beta != closed_form_i_lemma(n, r)? {
        return Err(IntegratorError::Inconsistent { n, r });
    }
    Ok(beta)
}

/// `∫ f_γ³ dV = 2n(1−n²)π^n/(n+3)!`.
pub fn closed_form_f3_integral(n: usize) -> Result<ExactValue, IntegratorError> {
    if n == 0 {
        return Err(IntegratorError::ZeroDimension);
    }
    let n_i = BigInt::from(n);
    let num = BigInt::from(2) * &n_i * (BigInt::one() - &n_i * &n_i);
    Ok(ExactValue::new(ratio(num, factorial(n + 3)), n as u32))
}

/// `I³ − 3nI² + 3n²I¹ − n³I⁰`.
pub fn f3_from_standard_integrals(n: usize) -> Result<ExactValue, IntegratorError> {
    let n_i = n as i64;
    integrate_radial(n, &[-n_i * n_i * n_i, 3 * n_i * n_i, -3 * n_i, 1].map(rat))
}

/// `Vol(CP^n) = π^n/n!`.
pub fn volume_cpn(n: usize) -> Result<ExactValue, IntegratorError> {
    if n == 0 {
        return Err(IntegratorError::ZeroDimension);
    }
    Ok(ExactValue::new(ratio(BigInt::one(), factorial(n)), n as u32))
}

/// `∫_{C^n} (Σ_r a_r s^r)(1+s)^{−(n+4)} = Σ_r a_r I_n^r` for `deg ≤ 3`.
pub fn integrate_radial(n: usize, coeffs: &[BigRational]) -> Result<ExactValue, IntegratorError> {
    let mut acc = ExactValue::zero(n as u32);
    for (r, a) in coeffs.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        acc = acc.add(&closed_form_i(n, r)?.scale(a))?;
    }
    Ok(acc)
}

/// Exact rational from an integer.
pub fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// `p / q` as an exact rational.
pub fn rat_frac(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

const BOUNDARY_EPS: f64 = 1e-12;

/// A point of `U_0` distributed by the normalized Fubini–Study volume: `z`
/// uniform on `S^{2n+1} ⊂ C^{n+1}`, `w_i = z_i / z_0`.
pub fn sample_fs_point<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Point {
    assert!(n >= 1, "sample_fs_point needs n >= 1");
    loop {
        let z: Vec<Complex64> = (0..=n)
            .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        let norm_sq: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        if z[0].norm_sqr() < BOUNDARY_EPS * norm_sq {
            continue;
        }
        let w = z[1..].iter().map(|zi| zi / z[0]).collect();
        if let Ok(p) = Point::new(w) {
            return p;
        }
    }
}

/// Monte Carlo estimate of `∫_{CP^n} F dV_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    /// `Vol · sample mean`
    pub mean: f64,
    /// `Vol · sample sd / √samples` (unbiased variance)
    pub std_error: f64,
    /// `Vol · mean |F|`
    pub abs_mean: f64,
    pub samples: u64,
    pub seed: u64,
    pub partitions: u32,
}

/// Sample size, seed and stream partitioning of one Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub partitions: u32,
}

pub const DEFAULT_PARTITIONS: u32 = 16;

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        McConfig { samples, seed, partitions: DEFAULT_PARTITIONS }
    }

    pub fn with_partitions(mut self, partitions: u32) -> Self {
        self.partitions = partitions;
        self
    }
}

#[derive(Debug, Clone)]
struct Moments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    abs_sum: Vec<f64>,
}

impl Moments {
    fn new(k: usize) -> Self {
        Moments { count: 0, mean: vec![0.0; k], m2: vec![0.0; k], abs_sum: vec![0.0; k] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for (j, &v) in x.iter().enumerate() {
            let d = v - self.mean[j];
            self.mean[j] += d / c;
            self.m2[j] += d * (v - self.mean[j]);
            self.abs_sum[j] += v.abs();
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        for j in 0..self.mean.len() {
            let d = other.mean[j] - self.mean[j];
            self.mean[j] += d * nb / total;
            self.m2[j] += other.m2[j] + d * d * na * nb / total;
            self.abs_sum[j] += other.abs_sum[j];
        }
        self.count += other.count;
    }
}

/// The RNG for partition `k`: ChaCha8 seeded with `seed`, stream `k`.
pub fn partition_rng(seed: u64, partition: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(partition as u64);
    rng
}

/// Vector-valued Monte Carlo: every component is integrated over the same
/// sample points. Partitions run in parallel and are merged in order, so the
/// result depends only on `(seed, samples, partitions)`.
pub fn mc_integrate_vec<F>(integrand: F, n: usize, components: usize, cfg: McConfig) -> Result<Vec<MCEstimate>, IntegratorError>
where
    F: Fn(&Point) -> Result<Vec<f64>, IntegratorError> + Sync,
{
    if n == 0 {
        return Err(IntegratorError::ZeroDimension);
    }
    if cfg.samples == 0 {
        return Err(IntegratorError::ZeroSamples);
    }
    if cfg.partitions == 0 {
        return Err(IntegratorError::ZeroPartitions);
    }
    let parts = cfg.partitions as u64;
    let partials: Vec<Result<Moments, IntegratorError>> = (0..cfg.partitions)
        .into_par_iter()
        .map(|k| {
            let count = cfg.samples / parts + u64::from((k as u64) < cfg.samples % parts);
            let mut rng = partition_rng(cfg.seed, k);
            let mut m = Moments::new(components);
            for _ in 0..count {
                let p = sample_fs_point(n, &mut rng);
                let v = integrand(&p)?;
                if v.len() != components || v.iter().any(|x| !x.is_finite()) {
                    return Err(IntegratorError::NonFinite { point: p.coords() });
                }
                m.push(&v);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::new(components);
    for m in partials {
        total.merge(&m?);
    }
    let vol = volume_cpn(n)?.to_f64();
    let count = total.count as f64;
    Ok((0..components)
        .map(|j| {
            let var = if total.count > 1 { total.m2[j] / (count - 1.0) } else { 0.0 };
            MCEstimate {
                mean: vol * total.mean[j],
                std_error: vol * (var / count).sqrt(),
                abs_mean: vol * total.abs_sum[j] / count,
                samples: cfg.samples,
                seed: cfg.seed,
                partitions: cfg.partitions,
            }
        })
        .collect())
}

/// Scalar Monte Carlo with an explicit configuration.
pub fn mc_integrate_with<F>(integrand: F, n: usize, cfg: McConfig) -> Result<MCEstimate, IntegratorError>
where
    F: Fn(&Point) -> f64 + Sync,
{
    let mut v = mc_integrate_vec(|p| Ok(vec![integrand(p)]), n, 1, cfg)?;
    Ok(v.remove(0))
}

/// `∫_{CP^n} F dV_g` with the default partitioning.
pub fn mc_integrate<F>(integrand: F, n: usize, samples: u64, seed: u64) -> Result<MCEstimate, IntegratorError>
where
    F: Fn(&Point) -> f64 + Sync,
{
    mc_integrate_with(integrand, n, McConfig::new(samples, seed))
}
