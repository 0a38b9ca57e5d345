//! Koiso's second-order obstruction `𝓘(h)` for `h = ψ + φ` on `CP^n × CP^1`,
//! with `ψ = Hess f + (n+1) f g₁` and `φ = (1−n)(n+1) f g₀`.
//!
//! Pairings are per unit volume of the `CP^1` factor. The `CP^1` block enters
//! only algebraically: every trace over it contributes its real dimension 2.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::identity_suite::{closed_integral, IdentityId, Jet, Method, SuiteConfig, SuiteError, Value};
use crate::integrator::{closed_form_f3_integral, mc_integrate_vec, rat, ExactValue, IntegratorError, MCEstimate};
use crate::lie_eigen::{gamma, trace_cubed, Eigenfunction, TracelessHermitian};

/// Real-versus-complex contraction patterns of 2-tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversionKind {
    /// `⟨h_{kp}h^p_l, h_{kl}⟩`
    Cubic,
    /// `⟨T_{ijkl}, h_{ij}h_{kl}⟩`
    Outer,
    /// `⟨T_{krsl}, h_{kl}h_{rs}⟩`
    Crossed,
}

/// Ratio of the real pairing to its complex-coordinate form.
pub fn conversion_factor(kind: ConversionKind) -> u32 {
    match kind {
        ConversionKind::Cubic => 2,
        ConversionKind::Outer => 4,
        ConversionKind::Crossed => 2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSpec {
    pub n: usize,
    pub eta: TracelessHermitian,
    pub lambda: usize,
}

impl DeformationSpec {
    pub fn new(eta: TracelessHermitian) -> Self {
        let n = eta.n();
        DeformationSpec { n, eta, lambda: n + 1 }
    }

    pub fn gamma(n: usize) -> Self {
        DeformationSpec::new(gamma(n))
    }
}

fn c3(n: usize) -> i64 {
    (n as i64 + 1).pow(3)
}

/// Coefficients of `∫ f³` for each term, split into `ψ` and `φ` parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCoefficients {
    pub cubic_psi: i64,
    pub cubic_phi: i64,
    pub outer_psi: i64,
    pub outer_phi: i64,
    pub crossed: i64,
}

impl TermCoefficients {
    pub fn cubic(&self) -> i64 {
        self.cubic_psi + self.cubic_phi
    }

    pub fn outer(&self) -> i64 {
        self.outer_psi + self.outer_phi
    }

    pub fn total(&self, n: usize) -> i64 {
        2 * (n as i64 + 1) * self.cubic() + 3 * self.outer() - 6 * self.crossed
    }
}

/// Per-term coefficients of `∫f³`: `(2n−5)(n+1)³`, `2(1−n)³(n+1)³`,
/// `−2(n+1)³(2n²−2n−1)`, `−4(1−n)²(n+1)⁴`, `(n+1)⁴ − 3(n+1)³`.
pub fn term_coefficients(n: usize) -> TermCoefficients {
    let ni = n as i64;
    let c = ni + 1;
    TermCoefficients {
        cubic_psi: (2 * ni - 5) * c3(n),
        cubic_phi: 2 * (1 - ni).pow(3) * c3(n),
        outer_psi: -2 * c3(n) * (2 * ni * ni - 2 * ni - 1),
        outer_phi: -4 * (1 - ni).pow(2) * c.pow(4),
        crossed: c.pow(4) - 3 * c3(n),
    }
}

/// `−(2n³−6n²+4n+3)(n+1)³`
pub fn zeroth_order_coefficient(n: usize) -> i64 {
    let ni = n as i64;
    -(2 * ni.pow(3) - 6 * ni * ni + 4 * ni + 3) * c3(n)
}

/// `−2(n+1)³(2n³−4n+1)`
pub fn outer_coefficient(n: usize) -> i64 {
    let ni = n as i64;
    -2 * c3(n) * (2 * ni.pow(3) - 4 * ni + 1)
}

/// `(n+1)⁴ − 3(n+1)³`
pub fn crossed_coefficient(n: usize) -> i64 {
    (n as i64 + 1).pow(4) - 3 * c3(n)
}

/// `−4n(n−1)(n+1)⁵`
pub fn final_coefficient(n: usize) -> i64 {
    let ni = n as i64;
    -4 * ni * (ni - 1) * (ni + 1).pow(5)
}

/// `2(n+1)·zeroth + 3·outer − 6·crossed` from the three term coefficients.
pub fn recombined_coefficient(n: usize) -> i64 {
    2 * (n as i64 + 1) * zeroth_order_coefficient(n) + 3 * outer_coefficient(n) - 6 * crossed_coefficient(n)
}

/// `½𝓘` coefficient against Koiso's `−(n₁−2)(n₁+n₂−2)(n₁+2n₂−2)/n₂² · 𝓔⁴`
/// with `n₁ = 2n`, `n₂ = 2`, `𝓔 = n+1`.
pub fn koiso_remark_crosscheck(n: usize) -> (ExactValue, ExactValue, bool) {
    let ours = ExactValue::new(rat(final_coefficient(n)) / rat(2), 0);
    let (n1, n2) = (BigInt::from(2 * n), BigInt::from(2));
    let two = BigInt::from(2);
    let e4 = BigInt::from(n + 1).pow(4);
    let num = -((&n1 - &two) * (&n1 + &n2 - &two) * (&n1 + &two * &n2 - &two)) * e4;
    let koiso = ExactValue::new(BigRational::new(num, &n2 * &n2), 0);
    let equal = ours == koiso;
    (ours, koiso, equal)
}

/// Term values of one obstruction evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionResult {
    pub n: usize,
    pub eta: String,
    pub tr_eta3: f64,
    pub method: Method,
    pub term_cubic: Value,
    pub term_outer: Value,
    pub term_crossed: Value,
    pub total: Value,
    pub cubic_psi: Value,
    pub cubic_phi: Value,
    pub outer_psi: Value,
    pub outer_phi: Value,
    /// Standard error of `total` (Monte Carlo only).
    pub sigma: Option<f64>,
    /// `−4n(n−1)(n+1)⁵ ∫f³` exactly (η = γ only).
    pub closed_total: Option<ExactValue>,
    /// `−4n(n−1)(n+1)⁵ · c_n · tr(η³)` with `c_n = 2π^n/(n+3)!`.
    pub expected_total: f64,
    pub rel_err: f64,
    pub pass: bool,
    pub note: Option<String>,
}

/// `c_n = ∫f_γ³ / tr(γ³) = 2π^n/(n+3)!`.
pub fn cubic_constant(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powi(n as i32) / (1..=n + 3).map(|i| i as f64).product::<f64>()
}

fn exact_terms(n: usize) -> Result<[ExactValue; 5], SuiteError> {
    let f3 = closed_form_f3_integral(n)?;
    let hfip = closed_integral(IdentityId::HessFIp, n)?;
    let hc = closed_integral(IdentityId::HessCube, n)?;
    let rlh = closed_integral(IdentityId::RoughLaplacianHess, n)?;
    let dh1 = closed_integral(IdentityId::Dhess1, n)?;
    let dh2 = closed_integral(IdentityId::Dhess2, n)?;
    let nk = closed_integral(IdentityId::Notkoi4d, n)?;
    let ni = n as i64;
    let c = ni + 1;
    let sum = |parts: &[ExactValue]| -> Result<ExactValue, IntegratorError> {
        parts.iter().try_fold(ExactValue::zero(n as u32), |acc, v| acc.add(v))
    };
    // ψ³ = H³ + 3(n+1) f H² + 3(n+1)² f² tr H + (n+1)³ f³ tr g, with tr H = −2(n+1) f
    let cubic_psi = sum(&[hc.clone(), hfip.scale_int(3 * c), f3.scale_int(-6 * c.pow(3)), f3.scale_int(2 * ni * c.pow(3))])?;
    let cubic_phi = f3.scale_int(2 * (1 - ni).pow(3) * c.pow(3));
    let outer_psi = sum(&[dh1, hfip.scale_int(-2 * c * c), rlh.scale_int(-c), f3.scale_int(-4 * (ni - 1) * c.pow(4))])?;
    let outer_phi = sum(&[hfip.scale_int(2 * (1 - ni).pow(2) * c * c), f3.scale_int(-4 * (1 - ni).pow(2) * c.pow(4))])?;
    let crossed = sum(&[dh2, hc.scale_int(c), nk.scale_int(c), hfip.scale_int(c * c)])?;
    Ok([cubic_psi, cubic_phi, outer_psi, outer_phi, crossed])
}

/// Complex-coordinate obstruction integrands, conversion factors included:
/// `[cubic_ψ, cubic_φ, outer_ψ, outer_φ, crossed, total]`.
pub fn obstruction_integrands(jet: &Jet) -> [f64; 6] {
    let nn = jet.n;
    let n = nn as f64;
    let c = n + 1.0;
    let f = jet.value;
    let cf = Complex64::new(c * f, 0.0);
    let psi: DMatrix<Complex64> = &jet.hess + &jet.g * cf;
    let psi_up = &jet.g_inv * psi.transpose() * &jet.g_inv;
    let b = &jet.g_inv * psi.transpose();
    let phi = (1.0 - n) * c * f;
    let fac = |k: ConversionKind| conversion_factor(k) as f64;

    let cubic_psi = fac(ConversionKind::Cubic) * (&b * &b * &b).trace().re;
    let cubic_phi = 2.0 * phi.powi(3);

    // ∇_p∇_q̄ ψ_{k l̄} = ∇_p∇_q̄∇_k∇_l̄ f + (n+1) H_{p q̄} g_{k l̄}
    let fourth = jet.fourth.as_ref().expect("obstruction needs the fourth derivative");
    let comps = fourth.components();
    let (mut outer, mut crossed) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for p in 0..nn {
        for q in 0..nn {
            for k in 0..nn {
                for l in 0..nn {
                    let t = comps[((p * nn + q) * nn + k) * nn + l] + jet.hess[(p, q)] * jet.g[(k, l)] * c;
                    outer += t * psi_up[(p, q)] * psi_up[(k, l)];
                    crossed += t * psi_up[(p, l)] * psi_up[(k, q)];
                }
            }
        }
    }
    let outer_psi = fac(ConversionKind::Outer) * outer.re;
    let hess_dot_psi = jet.hess.component_mul(&psi_up).sum().re;
    // φ-blocks: ∇_i∇_j φ_{kl} = (1−n)(n+1) H_{ij} (g₀)_{kl}, paired with ψ_{ij} φ_{kl}
    let outer_phi = fac(ConversionKind::Outer) * (1.0 - n) * c * phi * hess_dot_psi;
    let crossed = fac(ConversionKind::Crossed) * crossed.re;
    let total = 2.0 * c * (cubic_psi + cubic_phi) + 3.0 * (outer_psi + outer_phi) - 6.0 * crossed;
    [cubic_psi, cubic_phi, outer_psi, outer_phi, crossed, total]
}

fn expected_total(n: usize, eta: &TracelessHermitian) -> f64 {
    final_coefficient(n) as f64 * cubic_constant(n) * trace_cubed(eta)
}

fn note_for(n: usize) -> Option<String> {
    (n == 1).then(|| "unobstructed at second order (n=1)".to_string())
}

/// Closed path: every term assembled from the exact identity values; the
/// total must equal `−4n(n−1)(n+1)⁵ ∫f³` exactly.
pub fn koiso_obstruction_closed(n: usize) -> Result<ObstructionResult, SuiteError> {
    let [cubic_psi, cubic_phi, outer_psi, outer_phi, crossed] = exact_terms(n)?;
    let cubic = cubic_psi.add(&cubic_phi)?;
    let outer = outer_psi.add(&outer_phi)?;
    let total = cubic.scale_int(2 * (n as i64 + 1)).add(&outer.scale_int(3))?.add(&crossed.scale_int(-6))?;
    let closed_total = closed_form_f3_integral(n)?.scale_int(final_coefficient(n));
    let pass = total == closed_total;
    let eta = gamma(n);
    Ok(ObstructionResult {
        n,
        eta: eta.label(),
        tr_eta3: trace_cubed(&eta),
        method: Method::Closed,
        term_cubic: Value::Exact(cubic),
        term_outer: Value::Exact(outer),
        term_crossed: Value::Exact(crossed),
        rel_err: if pass { 0.0 } else { f64::INFINITY },
        total: Value::Exact(total),
        cubic_psi: Value::Exact(cubic_psi),
        cubic_phi: Value::Exact(cubic_phi),
        outer_psi: Value::Exact(outer_psi),
        outer_phi: Value::Exact(outer_phi),
        sigma: None,
        expected_total: closed_total.to_f64(),
        closed_total: Some(closed_total),
        pass,
        note: note_for(n),
    })
}

/// Monte Carlo estimates `[cubic_ψ, cubic_φ, outer_ψ, outer_φ, crossed, total]`.
pub fn obstruction_mc_terms(spec: &DeformationSpec, cfg: &SuiteConfig) -> Result<Vec<MCEstimate>, SuiteError> {
    let f = Eigenfunction::new(spec.eta.clone());
    let is_gamma = f.is_gamma();
    let rule = crate::finite_diff::StepRule::fourth(cfg.fd_rel_step);
    let integrand = |p: &crate::fubini_study::Point| {
        let jet = if is_gamma {
            Jet::gamma_closed(p, true)
        } else {
            Jet::engine(&f, p, true, rule).map_err(|e| IntegratorError::Integrand(e.to_string()))?
        };
        Ok(obstruction_integrands(&jet).to_vec())
    };
    Ok(mc_integrate_vec(integrand, spec.n, 6, cfg.mc())?)
}

/// Monte Carlo path. Passes when `|total − expected| ≤ k·σ`; for generic η
/// the allowance is widened to `max(k·σ, 1e−3·|expected|)` because the
/// fourth derivative comes from finite differences.
pub fn koiso_obstruction_mc(spec: &DeformationSpec, cfg: &SuiteConfig) -> Result<ObstructionResult, SuiteError> {
    let est = obstruction_mc_terms(spec, cfg)?;
    let n = spec.n;
    let is_gamma = spec.eta == gamma(n);
    let expected = expected_total(n, &spec.eta);
    let total = &est[5];
    let diff = (total.mean - expected).abs();
    let mut allowance = cfg.tolerances.mc_sigma * total.std_error;
    if !is_gamma {
        allowance = allowance.max(1e-3 * expected.abs());
    }
    let scale = if expected != 0.0 { expected.abs() } else { total.abs_mean };
    let rel_err = if scale > 0.0 { diff / scale } else { diff };
    let real = |i: usize| Value::Real(est[i].mean);
    Ok(ObstructionResult {
        n,
        eta: spec.eta.label(),
        tr_eta3: trace_cubed(&spec.eta),
        method: Method::Mc,
        term_cubic: Value::Real(est[0].mean + est[1].mean),
        term_outer: Value::Real(est[2].mean + est[3].mean),
        term_crossed: real(4),
        total: real(5),
        cubic_psi: real(0),
        cubic_phi: real(1),
        outer_psi: real(2),
        outer_phi: real(3),
        sigma: Some(total.std_error),
        closed_total: if is_gamma { Some(closed_form_f3_integral(n)?.scale_int(final_coefficient(n))) } else { None },
        expected_total: expected,
        rel_err,
        pass: diff <= allowance && diff.is_finite(),
        note: note_for(n),
    })
}

/// `𝓘(h)` by the requested method.
pub fn koiso_obstruction(spec: &DeformationSpec, method: Method, cfg: &SuiteConfig) -> Result<ObstructionResult, SuiteError> {
    match method {
        Method::Closed if spec.eta == gamma(spec.n) => koiso_obstruction_closed(spec.n),
        Method::Closed => Err(SuiteError::ClosedNeedsGamma),
        Method::Mc => koiso_obstruction_mc(spec, cfg),
        Method::Pointwise => Err(SuiteError::NotApplicable { id: IdentityId::F3Closed, method }),
    }
}

/// Least-squares constant `K` in `total ≈ K · tr(η³)`, with its standard error.
pub fn fit_cubic_constant(results: &[ObstructionResult]) -> Option<(f64, f64)> {
    let denom: f64 = results.iter().map(|r| r.tr_eta3 * r.tr_eta3).sum();
    if results.is_empty() || denom == 0.0 {
        return None;
    }
    let k = results.iter().map(|r| r.tr_eta3 * r.total.to_f64()).sum::<f64>() / denom;
    let var: f64 = results.iter().map(|r| (r.tr_eta3 * r.sigma.unwrap_or(0.0)).powi(2)).sum::<f64>() / (denom * denom);
    Some((k, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors() {
        assert_eq!(conversion_factor(ConversionKind::Cubic), 2);
        assert_eq!(conversion_factor(ConversionKind::Outer), 4);
        assert_eq!(conversion_factor(ConversionKind::Crossed), 2);
    }

    #[test]
    fn term_values_at_n2() {
        let f3 = closed_form_f3_integral(2).unwrap();
        let v = |k: i64| f3.scale_int(k);
        assert_eq!(v(zeroth_order_coefficient(2)), ExactValue::from_ratio(81, 10, 2));
        assert_eq!(v(term_coefficients(2).cubic_psi), ExactValue::from_ratio(27, 10, 2));
        assert_eq!(v(outer_coefficient(2)), ExactValue::from_ratio(486, 10, 2));
        assert_eq!(v(term_coefficients(2).outer_psi), ExactValue::from_ratio(162, 10, 2));
        assert!(v(crossed_coefficient(2)).is_zero());
        assert_eq!(v(final_coefficient(2)), ExactValue::from_ratio(972, 5, 2));
    }

    #[test]
    fn crossed_at_n3() {
        let f3 = closed_form_f3_integral(3).unwrap();
        assert_eq!(f3.scale_int(crossed_coefficient(3)), ExactValue::from_ratio(-64, 15, 3));
    }

    #[test]
    fn split_terms_sum_to_term_totals() {
        for n in 1..=8 {
            let t = term_coefficients(n);
            assert_eq!(t.cubic(), zeroth_order_coefficient(n));
            assert_eq!(t.outer(), outer_coefficient(n));
            assert_eq!(t.crossed, crossed_coefficient(n));
            assert_eq!(t.total(n), final_coefficient(n));
            assert_eq!(recombined_coefficient(n), final_coefficient(n));
        }
    }

    #[test]
    fn closed_path_matches_term_coefficients() {
        for n in 1..=6 {
            let r = koiso_obstruction_closed(n).unwrap();
            assert!(r.pass, "n={n}");
            let f3 = closed_form_f3_integral(n).unwrap();
            let t = term_coefficients(n);
            assert_eq!(r.cubic_psi, Value::Exact(f3.scale_int(t.cubic_psi)));
            assert_eq!(r.cubic_phi, Value::Exact(f3.scale_int(t.cubic_phi)));
            assert_eq!(r.outer_psi, Value::Exact(f3.scale_int(t.outer_psi)));
            assert_eq!(r.outer_phi, Value::Exact(f3.scale_int(t.outer_phi)));
            assert_eq!(r.term_crossed, Value::Exact(f3.scale_int(t.crossed)));
        }
        let r1 = koiso_obstruction_closed(1).unwrap();
        assert!(matches!(&r1.total, Value::Exact(e) if e.is_zero()));
        assert!(r1.note.is_some());
    }

    #[test]
    fn remark_values() {
        let (ours, koiso, eq) = koiso_remark_crosscheck(2);
        assert!(eq);
        assert_eq!(ours, ExactValue::from_ratio(-972, 1, 0));
        assert_eq!(koiso, ours);
        assert!(koiso_remark_crosscheck(1).0.is_zero());
        assert_eq!(koiso_remark_crosscheck(5).1, ExactValue::from_ratio(-311_040, 1, 0));
    }

    #[test]
    fn closed_total_is_positive() {
        for n in 2..=6 {
            let r = koiso_obstruction_closed(n).unwrap();
            assert!(r.total.to_f64() > 0.0);
        }
    }

    #[test]
    fn integrands_reduce_to_gamma_scalars() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for n in 1..=3 {
            let nf = n as f64;
            let c = nf + 1.0;
            for _ in 0..10 {
                let p = crate::fubini_study::Point::random(n, &mut rng);
                let s = p.norm_sq();
                let f = (s - nf) / (1.0 + s);
                let tr_a = -c * f;
                let tr_a2 = c * c * (nf - 2.0 * s + s * s) / (1.0 + s).powi(2);
                let tr_a3 = c.powi(3) * (nf - 3.0 * s + 3.0 * s * s - s.powi(3)) / (1.0 + s).powi(3);
                let tr_b3 = tr_a3 + 3.0 * c * f * tr_a2 + 3.0 * (c * f).powi(2) * tr_a + nf * (c * f).powi(3);
                let tr_ab = tr_a2 + c * f * tr_a;
                let tr_b = tr_a + nf * c * f;
                let tr_ab2 = tr_a3 + 2.0 * c * f * tr_a2 + (c * f).powi(2) * tr_a;
                let want_outer_psi = 4.0 * (nf * tr_b * tr_ab - tr_ab2);
                let want_crossed = 2.0 * (nf * tr_ab2 - tr_b * tr_ab);
                let got = obstruction_integrands(&Jet::gamma_closed(&p, true));
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-11 * (1.0 + b.abs());
                assert!(close(got[0], 2.0 * tr_b3));
                assert!(close(got[2], want_outer_psi), "{} {}", got[2], want_outer_psi);
                assert!(close(got[4], want_crossed));
            }
        }
    }
}
