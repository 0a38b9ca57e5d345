//! Pointwise complex multilinear algebra on the chart.
//!
//! Every slot of a [`ComplexTensor`] carries an explicit variance and type
//! (holomorphic / antiholomorphic). Contractions consult the signature, so a
//! pairing that would silently use the vanishing pure-type part of the metric
//! is rejected instead of producing zeros.
//!
//! Metric conventions: the metric is stored as `g[k][l] = g_{k l̄}` with slots
//! `(lower holomorphic, lower antiholomorphic)`; the inverse as
//! `g_inv[k][l] = g^{k l̄}` with slots `(upper holomorphic, upper
//! antiholomorphic)`, normalised so that `Σ_l g^{k l̄} g_{j l̄} = δ_{kj}`.

use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used for every tensor component.
pub type ComplexScalar = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch: expected n = {expected}, found n = {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("component count {found} does not match n^rank = {expected}")]
    ComponentCount { expected: usize, found: usize },
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slot {slot} appears in more than one contraction pair")]
    RepeatedSlot { slot: usize },
    #[error("cannot pair {left} with {right}")]
    IncompatiblePairing { left: Slot, right: Slot },
    #[error("unexpected signature {found}, expected {expected}")]
    WrongSignature { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variance {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexKind {
    Holomorphic,
    Antiholomorphic,
}

impl IndexKind {
    pub fn conjugate(self) -> Self {
        match self {
            IndexKind::Holomorphic => IndexKind::Antiholomorphic,
            IndexKind::Antiholomorphic => IndexKind::Holomorphic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub variance: Variance,
    pub kind: IndexKind,
}

impl Slot {
    pub const LOWER_HOLO: Slot = Slot { variance: Variance::Lower, kind: IndexKind::Holomorphic };
    pub const LOWER_ANTI: Slot = Slot { variance: Variance::Lower, kind: IndexKind::Antiholomorphic };
    pub const UPPER_HOLO: Slot = Slot { variance: Variance::Upper, kind: IndexKind::Holomorphic };
    pub const UPPER_ANTI: Slot = Slot { variance: Variance::Upper, kind: IndexKind::Antiholomorphic };

    pub const fn lower(kind: IndexKind) -> Self {
        Slot { variance: Variance::Lower, kind }
    }

    pub const fn upper(kind: IndexKind) -> Self {
        Slot { variance: Variance::Upper, kind }
    }

    pub fn conjugate(self) -> Self {
        Slot { variance: self.variance, kind: self.kind.conjugate() }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pos = match self.variance {
            Variance::Upper => "^",
            Variance::Lower => "_",
        };
        let idx = match self.kind {
            IndexKind::Holomorphic => "k",
            IndexKind::Antiholomorphic => "k̄",
        };
        write!(f, "{pos}{idx}")
    }
}

/// Ordered list of slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct IndexSignature {
    slots: Vec<Slot>,
}

impl IndexSignature {
    pub fn new(slots: Vec<Slot>) -> Self {
        IndexSignature { slots }
    }

    pub fn scalar() -> Self {
        IndexSignature { slots: Vec::new() }
    }

    /// All-lower signature with the given slot types.
    pub fn lower(kinds: &[IndexKind]) -> Self {
        IndexSignature { slots: kinds.iter().map(|&k| Slot::lower(k)).collect() }
    }

    pub fn rank(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, i: usize) -> Slot {
        self.slots[i]
    }

    /// Signature with one extra slot prepended (the direction of a derivative).
    pub fn prepend(&self, slot: Slot) -> Self {
        let mut slots = Vec::with_capacity(self.slots.len() + 1);
        slots.push(slot);
        slots.extend_from_slice(&self.slots);
        IndexSignature { slots }
    }
}

impl fmt::Display for IndexSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, s) in self.slots.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, ")")
    }
}

/// Dense component array with `n^rank` entries, row-major in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    n: usize,
    signature: IndexSignature,
    components: Vec<ComplexScalar>,
}

fn ipow(n: usize, r: usize) -> usize {
    (0..r).fold(1usize, |acc, _| acc * n)
}

impl ComplexTensor {
    pub fn zeros(n: usize, signature: IndexSignature) -> Self {
        let len = ipow(n, signature.rank());
        ComplexTensor { n, signature, components: vec![ComplexScalar::new(0.0, 0.0); len] }
    }

    pub fn scalar(n: usize, value: ComplexScalar) -> Self {
        ComplexTensor { n, signature: IndexSignature::scalar(), components: vec![value] }
    }

    pub fn from_components(
        n: usize,
        signature: IndexSignature,
        components: Vec<ComplexScalar>,
    ) -> Result<Self, TensorError> {
        let expected = ipow(n, signature.rank());
        if components.len() != expected {
            return Err(TensorError::ComponentCount { expected, found: components.len() });
        }
        Ok(ComplexTensor { n, signature, components })
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn<F>(n: usize, signature: IndexSignature, mut f: F) -> Self
    where
        F: FnMut(&[usize]) -> ComplexScalar,
    {
        let rank = signature.rank();
        let len = ipow(n, rank);
        let mut idx = vec![0usize; rank];
        let mut components = Vec::with_capacity(len);
        for _ in 0..len {
            components.push(f(&idx));
            increment(&mut idx, n);
        }
        ComplexTensor { n, signature, components }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.signature.rank()
    }

    pub fn signature(&self) -> &IndexSignature {
        &self.signature
    }

    pub fn components(&self) -> &[ComplexScalar] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ComplexScalar] {
        &mut self.components
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank());
        idx.iter().fold(0usize, |acc, &i| {
            debug_assert!(i < self.n);
            acc * self.n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> ComplexScalar {
        self.components[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: ComplexScalar) {
        let o = self.offset(idx);
        self.components[o] = value;
    }

    /// Value of a rank-0 tensor.
    pub fn value(&self) -> ComplexScalar {
        assert_eq!(self.rank(), 0, "value() called on rank {} tensor", self.rank());
        self.components[0]
    }

    pub fn scale(&self, factor: ComplexScalar) -> Self {
        self.map(|z| z * factor)
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn map<F: Fn(ComplexScalar) -> ComplexScalar>(&self, f: F) -> Self {
        ComplexTensor {
            n: self.n,
            signature: self.signature.clone(),
            components: self.components.iter().map(|&z| f(z)).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), TensorError> {
        if self.n != other.n {
            return Err(TensorError::DimensionMismatch { expected: self.n, found: other.n });
        }
        if self.signature != other.signature {
            return Err(TensorError::WrongSignature {
                expected: self.signature.to_string(),
                found: other.signature.to_string(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_shape(other)?;
        Ok(ComplexTensor {
            n: self.n,
            signature: self.signature.clone(),
            components: self.components.iter().zip(&other.components).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, TensorError> {
        self.check_same_shape(other)?;
        Ok(ComplexTensor {
            n: self.n,
            signature: self.signature.clone(),
            components: self.components.iter().zip(&other.components).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64, TensorError> {
        self.check_same_shape(other)?;
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// `max|a − b| / max(max|a|, max|b|, floor)`.
    pub fn relative_diff(&self, other: &Self, floor: f64) -> Result<f64, TensorError> {
        let d = self.max_abs_diff(other)?;
        let scale = self.max_abs().max(other.max_abs()).max(floor);
        Ok(d / scale)
    }

    pub fn all_finite(&self) -> bool {
        self.components.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Complex conjugate tensor: entries conjugated, every slot type flipped.
    pub fn conj(&self) -> Self {
        ComplexTensor {
            n: self.n,
            signature: IndexSignature::new(self.signature.slots.iter().map(|s| s.conjugate()).collect()),
            components: self.components.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Reorders slots: slot `i` of the result is slot `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, TensorError> {
        let rank = self.rank();
        if perm.len() != rank {
            return Err(TensorError::SlotOutOfRange { slot: perm.len(), rank });
        }
        let mut seen = vec![false; rank];
        for &p in perm {
            if p >= rank {
                return Err(TensorError::SlotOutOfRange { slot: p, rank });
            }
            if seen[p] {
                return Err(TensorError::RepeatedSlot { slot: p });
            }
            seen[p] = true;
        }
        let sig = IndexSignature::new(perm.iter().map(|&p| self.signature.slots[p]).collect());
        let mut src = vec![0usize; rank];
        Ok(ComplexTensor::from_fn(self.n, sig, |idx| {
            for (i, &p) in perm.iter().enumerate() {
                src[p] = idx[i];
            }
            self.get(&src)
        }))
    }

    /// Raises a lower slot with `g^{k l̄}`; the slot keeps its position and
    /// flips type (lower `k` becomes upper `l̄`, lower `l̄` becomes upper `k`).
    pub fn raise(&self, slot: usize, inverse_metric: &ComplexTensor) -> Result<Self, TensorError> {
        self.move_index(slot, inverse_metric, Variance::Lower, &[Slot::UPPER_HOLO, Slot::UPPER_ANTI])
    }

    /// Lowers an upper slot with `g_{k l̄}`.
    pub fn lower(&self, slot: usize, metric: &ComplexTensor) -> Result<Self, TensorError> {
        self.move_index(slot, metric, Variance::Upper, &[Slot::LOWER_HOLO, Slot::LOWER_ANTI])
    }

    fn move_index(
        &self,
        slot: usize,
        m: &ComplexTensor,
        from: Variance,
        m_sig: &[Slot],
    ) -> Result<Self, TensorError> {
        let rank = self.rank();
        if slot >= rank {
            return Err(TensorError::SlotOutOfRange { slot, rank });
        }
        check_metric(m, self.n, m_sig)?;
        let s = self.signature.slots[slot];
        if s.variance != from {
            return Err(TensorError::IncompatiblePairing { left: s, right: m_sig[0] });
        }
        let mut slots = self.signature.slots.clone();
        slots[slot] = Slot {
            variance: match from {
                Variance::Lower => Variance::Upper,
                Variance::Upper => Variance::Lower,
            },
            kind: s.kind.conjugate(),
        };
        let n = self.n;
        let mut src = vec![0usize; rank];
        Ok(ComplexTensor::from_fn(n, IndexSignature::new(slots), |idx| {
            src.copy_from_slice(idx);
            let out = idx[slot];
            let mut acc = ComplexScalar::new(0.0, 0.0);
            for j in 0..n {
                src[slot] = j;
                // m is indexed (holomorphic, antiholomorphic)
                let w = match s.kind {
                    IndexKind::Holomorphic => m.get(&[j, out]),
                    IndexKind::Antiholomorphic => m.get(&[out, j]),
                };
                acc += w * self.get(&src);
            }
            acc
        }))
    }
}

fn increment(idx: &mut [usize], n: usize) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < n {
            return;
        }
        idx[d] = 0;
    }
}

fn check_metric(m: &ComplexTensor, n: usize, sig: &[Slot]) -> Result<(), TensorError> {
    if m.n != n {
        return Err(TensorError::DimensionMismatch { expected: n, found: m.n });
    }
    if m.signature.slots != sig {
        return Err(TensorError::WrongSignature {
            expected: IndexSignature::new(sig.to_vec()).to_string(),
            found: m.signature.to_string(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum PairWeight {
    Delta,
    /// Inverse metric; `true` when the left slot is the holomorphic one.
    Inverse(bool),
    Metric(bool),
}

fn pair_weight(left: Slot, right: Slot) -> Result<PairWeight, TensorError> {
    use Variance::*;
    let left_holo = left.kind == IndexKind::Holomorphic;
    match (left.variance, right.variance) {
        (Upper, Lower) | (Lower, Upper) if left.kind == right.kind => Ok(PairWeight::Delta),
        (Lower, Lower) if left.kind != right.kind => Ok(PairWeight::Inverse(left_holo)),
        (Upper, Upper) if left.kind != right.kind => Ok(PairWeight::Metric(left_holo)),
        _ => Err(TensorError::IncompatiblePairing { left, right }),
    }
}

/// Contracts slot `pairs[i].0` of `a` with slot `pairs[i].1` of `b`.
///
/// Upper/lower pairs of equal type are summed directly; two lower slots of
/// opposite type are joined through `g^{k l̄}` and two upper slots of
/// opposite type through `g_{k l̄}`. Any other pairing is an error. The
/// result carries the free slots of `a` followed by the free slots of `b`.
pub fn contract(
    a: &ComplexTensor,
    b: &ComplexTensor,
    pairs: &[(usize, usize)],
    metric: &ComplexTensor,
    inverse_metric: &ComplexTensor,
) -> Result<ComplexTensor, TensorError> {
    let n = a.n;
    if b.n != n {
        return Err(TensorError::DimensionMismatch { expected: n, found: b.n });
    }
    check_metric(metric, n, &[Slot::LOWER_HOLO, Slot::LOWER_ANTI])?;
    check_metric(inverse_metric, n, &[Slot::UPPER_HOLO, Slot::UPPER_ANTI])?;
    let (ra, rb) = (a.rank(), b.rank());
    let mut used_a = vec![false; ra];
    let mut used_b = vec![false; rb];
    let mut weights = Vec::with_capacity(pairs.len());
    for &(sa, sb) in pairs {
        if sa >= ra {
            return Err(TensorError::SlotOutOfRange { slot: sa, rank: ra });
        }
        if sb >= rb {
            return Err(TensorError::SlotOutOfRange { slot: sb, rank: rb });
        }
        if used_a[sa] {
            return Err(TensorError::RepeatedSlot { slot: sa });
        }
        if used_b[sb] {
            return Err(TensorError::RepeatedSlot { slot: sb });
        }
        used_a[sa] = true;
        used_b[sb] = true;
        weights.push(pair_weight(a.signature.slots[sa], b.signature.slots[sb])?);
    }
    let free_a: Vec<usize> = (0..ra).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..rb).filter(|&i| !used_b[i]).collect();
    let out_sig = IndexSignature::new(
        free_a
            .iter()
            .map(|&i| a.signature.slots[i])
            .chain(free_b.iter().map(|&i| b.signature.slots[i]))
            .collect(),
    );
    let mut out = ComplexTensor::zeros(n, out_sig);
    let out_rank = out.rank();

    let mut ia = vec![0usize; ra];
    let mut ib = vec![0usize; rb];
    let mut io = vec![0usize; out_rank];
    let zero = ComplexScalar::new(0.0, 0.0);
    for &ca in &a.components {
        if ca != zero {
            ib.iter_mut().for_each(|x| *x = 0);
            for &cb in &b.components {
                if cb != zero {
                    let mut w = ComplexScalar::new(1.0, 0.0);
                    for (&(sa, sb), pw) in pairs.iter().zip(&weights) {
                        let (i, j) = (ia[sa], ib[sb]);
                        let f = match *pw {
                            PairWeight::Delta => {
                                if i == j {
                                    ComplexScalar::new(1.0, 0.0)
                                } else {
                                    zero
                                }
                            }
                            PairWeight::Inverse(true) => inverse_metric.get(&[i, j]),
                            PairWeight::Inverse(false) => inverse_metric.get(&[j, i]),
                            PairWeight::Metric(true) => metric.get(&[i, j]),
                            PairWeight::Metric(false) => metric.get(&[j, i]),
                        };
                        w *= f;
                        if w == zero {
                            break;
                        }
                    }
                    if w != zero {
                        for (o, &s) in io.iter_mut().zip(free_a.iter()) {
                            *o = ia[s];
                        }
                        for (o, &s) in io[free_a.len()..].iter_mut().zip(free_b.iter()) {
                            *o = ib[s];
                        }
                        let off = out.offset(&io);
                        out.components[off] += w * ca * cb;
                    }
                }
                increment(&mut ib, n);
            }
        }
        increment(&mut ia, n);
    }
    Ok(out)
}

/// Hermitian adjoint of a rank-2 tensor with one holomorphic and one
/// antiholomorphic slot: `out[i][j] = conj(t[j][i])`, signature unchanged.
pub fn conjugate_transpose_pair(t: &ComplexTensor) -> Result<ComplexTensor, TensorError> {
    let sig = t.signature();
    let ok = sig.rank() == 2 && sig.slot(0).kind != sig.slot(1).kind && sig.slot(0).variance == sig.slot(1).variance;
    if !ok {
        return Err(TensorError::WrongSignature {
            expected: "rank 2, one holomorphic and one antiholomorphic slot of equal variance".into(),
            found: sig.to_string(),
        });
    }
    Ok(ComplexTensor::from_fn(t.n, sig.clone(), |idx| t.get(&[idx[1], idx[0]]).conj()))
}

/// Identity `δ` with the given rank-2 signature.
pub fn kronecker(n: usize, signature: IndexSignature) -> ComplexTensor {
    ComplexTensor::from_fn(n, signature, |idx| {
        if idx[0] == idx[1] {
            ComplexScalar::new(1.0, 0.0)
        } else {
            ComplexScalar::new(0.0, 0.0)
        }
    })
}

/// Tensor product `a ⊗ b` (slots of `a` first).
pub fn outer(a: &ComplexTensor, b: &ComplexTensor) -> Result<ComplexTensor, TensorError> {
    if a.n != b.n {
        return Err(TensorError::DimensionMismatch { expected: a.n, found: b.n });
    }
    let mut slots = a.signature.slots.clone();
    slots.extend_from_slice(&b.signature.slots);
    let mut components = Vec::with_capacity(a.components.len() * b.components.len());
    for &x in &a.components {
        for &y in &b.components {
            components.push(x * y);
        }
    }
    Ok(ComplexTensor { n: a.n, signature: IndexSignature::new(slots), components })
}
