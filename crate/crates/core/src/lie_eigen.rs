//! First eigenfunctions of CP^n parameterised by traceless Hermitian
//! matrices: `f_η(w) = W̄ η Wᵀ / (1 + ‖w‖²)` with `W = (1, w_1, …, w_n)`.
//!
//! Elements of su(n+1) are stored in the Hermitian convention (η rather than
//! iη) so that `f_η` is real.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::complex_tensor::{ComplexTensor, IndexSignature, Slot};
use crate::fubini_study::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("matrix has {found} entries, expected {expected}")]
    EntryCount { expected: usize, found: usize },
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not traceless (trace {0:e})")]
    NotTraceless(f64),
    #[error("η is {eta}×{eta} but the point lives in C^{n}")]
    SizeMismatch { eta: usize, n: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
}

const VALIDATION_TOL: f64 = 1e-12;

/// Traceless Hermitian `(n+1)×(n+1)` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TracelessHermitian {
    size: usize,
    entries: Vec<Complex64>,
}

impl TracelessHermitian {
    pub fn new(size: usize, entries: Vec<Complex64>) -> Result<Self, LieError> {
        if size < 2 {
            return Err(LieError::ZeroDimension);
        }
        if entries.len() != size * size {
            return Err(LieError::EntryCount { expected: size * size, found: entries.len() });
        }
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let mut herm_dev = 0.0f64;
        for j in 0..size {
            for k in 0..size {
                herm_dev = herm_dev.max((entries[j * size + k] - entries[k * size + j].conj()).norm());
            }
        }
        if herm_dev > VALIDATION_TOL * scale {
            return Err(LieError::NotHermitian(herm_dev));
        }
        let trace: f64 = (0..size).map(|j| entries[j * size + j].re).sum();
        if trace.abs() > VALIDATION_TOL * scale {
            return Err(LieError::NotTraceless(trace));
        }
        Ok(TracelessHermitian { size, entries })
    }

    /// Real diagonal matrix; the diagonal must sum to zero.
    pub fn diagonal(diag: &[f64]) -> Result<Self, LieError> {
        let size = diag.len();
        let mut entries = vec![Complex64::new(0.0, 0.0); size * size];
        for (j, &d) in diag.iter().enumerate() {
            entries[j * size + j] = Complex64::new(d, 0.0);
        }
        TracelessHermitian::new(size, entries)
    }

    pub fn zero(n: usize) -> Self {
        TracelessHermitian { size: n + 1, entries: vec![Complex64::new(0.0, 0.0); (n + 1) * (n + 1)] }
    }

    /// Matrix size `n + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Chart dimension `n` of the CP^n this element acts on.
    pub fn n(&self) -> usize {
        self.size - 1
    }

    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        self.entries[j * self.size + k]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.size, self.size, &self.entries)
    }

    /// `U η U*`; the result is re-validated.
    pub fn conjugate_by(&self, u: &DMatrix<Complex64>) -> Result<Self, LieError> {
        let m = u * self.to_matrix() * u.adjoint();
        let mut entries = Vec::with_capacity(self.size * self.size);
        for j in 0..self.size {
            for k in 0..self.size {
                entries.push(m[(j, k)]);
            }
        }
        // restore exact Hermitian symmetry lost to rounding
        let s = self.size;
        for j in 0..s {
            entries[j * s + j].im = 0.0;
            for k in (j + 1)..s {
                let avg = (entries[j * s + k] + entries[k * s + j].conj()) * 0.5;
                entries[j * s + k] = avg;
                entries[k * s + j] = avg.conj();
            }
        }
        let tr: f64 = (0..s).map(|j| entries[j * s + j].re).sum::<f64>() / s as f64;
        for j in 0..s {
            entries[j * s + j].re -= tr;
        }
        TracelessHermitian::new(s, entries)
    }

    pub fn label(&self) -> String {
        if self.is_diagonal() {
            let d: Vec<String> = (0..self.size).map(|j| format!("{}", self.entry(j, j).re)).collect();
            format!("diag({})", d.join(","))
        } else {
            format!("hermitian[{}x{}]", self.size, self.size)
        }
    }

    fn is_diagonal(&self) -> bool {
        (0..self.size).all(|j| (0..self.size).all(|k| j == k || self.entry(j, k) == Complex64::new(0.0, 0.0)))
    }
}

/// `γ = Diag(−n, 1, …, 1)`.
pub fn gamma(n: usize) -> TracelessHermitian {
    assert!(n >= 1, "gamma needs n >= 1");
    let mut diag = vec![1.0; n + 1];
    diag[0] = -(n as f64);
    TracelessHermitian::diagonal(&diag).expect("gamma is traceless Hermitian")
}

/// `tr(η³)`, real for Hermitian η.
pub fn trace_cubed(eta: &TracelessHermitian) -> f64 {
    let m = eta.to_matrix();
    (&m * &m * &m).trace().re
}

/// Deterministic random element: off-diagonal real and imaginary parts and
/// diagonal entries are independent standard normals from a ChaCha8 stream
/// seeded with `seed`; the mean of the diagonal is then subtracted.
pub fn random_traceless_hermitian(n: usize, seed: u64) -> TracelessHermitian {
    assert!(n >= 1, "random_traceless_hermitian needs n >= 1");
    let size = n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = vec![Complex64::new(0.0, 0.0); size * size];
    for j in 0..size {
        entries[j * size + j] = Complex64::new(StandardNormal.sample(&mut rng), 0.0);
        for k in (j + 1)..size {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            entries[j * size + k] = Complex64::new(re, im);
            entries[k * size + j] = Complex64::new(re, -im);
        }
    }
    let mean = (0..size).map(|j| entries[j * size + j].re).sum::<f64>() / size as f64;
    for j in 0..size {
        entries[j * size + j].re -= mean;
    }
    TracelessHermitian::new(size, entries).expect("projected matrix is traceless Hermitian")
}

/// `exp(iη)` for a random traceless Hermitian η: a special unitary matrix.
pub fn random_special_unitary(n: usize, seed: u64) -> DMatrix<Complex64> {
    let eta = random_traceless_hermitian(n, seed);
    (eta.to_matrix() * Complex64::new(0.0, 1.0)).exp()
}

/// An element of `E_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunction {
    eta: TracelessHermitian,
}

impl Eigenfunction {
    pub fn new(eta: TracelessHermitian) -> Self {
        Eigenfunction { eta }
    }

    pub fn gamma(n: usize) -> Self {
        Eigenfunction { eta: gamma(n) }
    }

    pub fn eta(&self) -> &TracelessHermitian {
        &self.eta
    }

    pub fn n(&self) -> usize {
        self.eta.n()
    }

    pub fn is_gamma(&self) -> bool {
        self.eta == gamma(self.n())
    }

    fn check(&self, p: &Point) -> Result<(), LieError> {
        if p.n() != self.n() {
            return Err(LieError::SizeMismatch { eta: self.eta.size, n: p.n() });
        }
        Ok(())
    }

    /// Pieces of the rational expression `N / D` at `p`: `N = W̄ηWᵀ`,
    /// `u_k = ∂_k N = Σ_a W̄_a η_{a k}` (index k shifted by one into η),
    /// and `D = 1 + ‖w‖²`.
    pub(crate) fn parts(&self, p: &Point) -> (Complex64, Vec<Complex64>, f64) {
        let size = self.eta.size;
        let w = p.w();
        let big_w = |a: usize| if a == 0 { Complex64::new(1.0, 0.0) } else { w[a - 1] };
        let mut num = Complex64::new(0.0, 0.0);
        let mut u = vec![Complex64::new(0.0, 0.0); size - 1];
        for a in 0..size {
            let wa = big_w(a).conj();
            for b in 0..size {
                let e = self.eta.entry(a, b);
                num += wa * e * big_w(b);
                if b >= 1 {
                    u[b - 1] += wa * e;
                }
            }
        }
        (num, u, 1.0 + p.norm_sq())
    }

    /// `f_η(p)` including the (vanishing) imaginary part.
    pub fn value_complex(&self, p: &Point) -> Result<Complex64, LieError> {
        self.check(p)?;
        let (num, _, d) = self.parts(p);
        Ok(num / d)
    }

    /// `(∂f_η)_k = u_k / D − N w̄_k / D²`.
    pub fn gradient_holo(&self, p: &Point) -> Result<ComplexTensor, LieError> {
        self.check(p)?;
        let (num, u, d) = self.parts(p);
        let w = p.w();
        let sig = IndexSignature::new(vec![Slot::LOWER_HOLO]);
        Ok(ComplexTensor::from_fn(p.n(), sig, |i| u[i[0]] / d - num * w[i[0]].conj() / (d * d)))
    }
}

/// `f_η(p)`.
pub fn eigenfunction_at(eta: &TracelessHermitian, p: &Point) -> Result<f64, LieError> {
    Eigenfunction::new(eta.clone()).value_complex(p).map(|z| z.re)
}

/// `(∂f_η)_k` at `p`.
pub fn gradient_holo_at(eta: &TracelessHermitian, p: &Point) -> Result<ComplexTensor, LieError> {
    Eigenfunction::new(eta.clone()).gradient_holo(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;

    #[test]
    fn gamma_entries() {
        assert_eq!(gamma(1), TracelessHermitian::diagonal(&[-1.0, 1.0]).unwrap());
        let g2 = gamma(2);
        assert_eq!(g2.entry(0, 0).re, -2.0);
        assert_eq!(g2.entry(2, 2).re, 1.0);
        assert_eq!(trace_cubed(&g2), -6.0);
    }

    #[test]
    fn trace_cubed_values() {
        assert_eq!(trace_cubed(&TracelessHermitian::zero(3)), 0.0);
        for n in 1..=6 {
            let n_f = n as f64;
            assert_eq!(trace_cubed(&gamma(n)), n_f * (1.0 - n_f * n_f));
        }
        for seed in 0..10 {
            assert!(trace_cubed(&random_traceless_hermitian(1, seed)).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenfunction_hand_values() {
        for n in 1..=4 {
            assert_eq!(eigenfunction_at(&gamma(n), &Point::origin(n)).unwrap(), -(n as f64));
            // ‖w‖² = n puts the point on the zero set of f_γ
            let r = 1.0;
            let p = Point::new(vec![C::new(r, 0.0); n]).unwrap();
            assert!(eigenfunction_at(&gamma(n), &p).unwrap().abs() < 1e-15);
        }
        let eta = TracelessHermitian::diagonal(&[1.0, -1.0, 0.0]).unwrap();
        let p = Point::new(vec![C::new(1.0, 0.0), C::new(0.0, 0.0)]).unwrap();
        assert_eq!(eigenfunction_at(&eta, &p).unwrap(), 0.0);
    }

    #[test]
    fn gradient_hand_values() {
        let g = gradient_holo_at(&gamma(3), &Point::origin(3)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        let p = Point::new(vec![C::new(1.0, 0.0)]).unwrap();
        assert_eq!(gradient_holo_at(&gamma(1), &p).unwrap().get(&[0]), C::new(0.5, 0.0));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let err = eigenfunction_at(&gamma(2), &Point::origin(3)).unwrap_err();
        assert_eq!(err, LieError::SizeMismatch { eta: 3, n: 3 });
    }

    #[test]
    fn random_elements_are_deterministic_and_valid() {
        let a = random_traceless_hermitian(3, 7);
        let b = random_traceless_hermitian(3, 7);
        assert_eq!(a, b);
        assert_ne!(a, random_traceless_hermitian(3, 8));
        let tr: f64 = (0..4).map(|j| a.entry(j, j).re).sum();
        assert!(tr.abs() < 1e-14);
        for j in 0..4 {
            for k in 0..4 {
                assert_eq!(a.entry(j, k), a.entry(k, j).conj());
            }
        }
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        assert!(matches!(TracelessHermitian::diagonal(&[1.0, 1.0]), Err(LieError::NotTraceless(_))));
        let bad = vec![C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(2.0, 0.0), C::new(0.0, 0.0)];
        assert!(matches!(TracelessHermitian::new(2, bad), Err(LieError::NotHermitian(_))));
        assert!(matches!(TracelessHermitian::new(2, vec![]), Err(LieError::EntryCount { .. })));
    }

    #[test]
    fn special_unitary_is_unitary_with_unit_determinant() {
        let u = random_special_unitary(3, 11);
        let id = &u * u.adjoint();
        for j in 0..4 {
            for k in 0..4 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((id[(j, k)] - C::new(want, 0.0)).norm() < 1e-12);
            }
        }
        assert!((u.determinant() - C::new(1.0, 0.0)).norm() < 1e-10);
    }
}
