//! Dense state vector simulation of `n` qudits of prime dimension `d`.
//!
//! Amplitudes are stored big-endian in base `d`: qudit 0 is the most
//! significant digit of the index. Gates act in place through strides; no
//! `d^n × d^n` matrix is ever formed except by [`operator_matrix`], which exists
//! for small oracle computations.
//!
//! Several loops skip zero amplitudes. Protocol states (GHZ plus a Bell pair)
//! have only `d^2` nonzero entries out of `d^{n+2}`, so this keeps the exact
//! backend usable at the sizes the checks need.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::arith::{omega_table, Modulus};
use crate::error::{Error, Result};

/// Default ceiling on the number of amplitudes of one state (2^26).
pub const DEFAULT_AMPLITUDE_CAP: usize = 1 << 26;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Branches whose total probability is below this are treated as impossible.
const NEGLIGIBLE_PROBABILITY: f64 = 1e-24;

/// `d^n`, or an error if it overflows or exceeds `cap`.
pub fn amplitude_count(n: usize, d: Modulus, cap: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..n {
        dim = dim
            .checked_mul(d.get() as usize)
            .filter(|&v| v <= cap)
            .ok_or_else(|| {
                Error::Unsupported(format!(
                    "{n} qudits of dimension {d} exceed the cap of {cap} amplitudes"
                ))
            })?;
    }
    Ok(dim)
}

/// Row-major strides for a mixed-radix index.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Index offsets of every digit assignment to `positions`, enumerated
/// big-endian in the order `positions` are listed.
fn sub_offsets(dims: &[usize], positions: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut offsets = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(offsets.len() * dims[p]);
        for &o in &offsets {
            for k in 0..dims[p] {
                next.push(o + k * st[p]);
            }
        }
        offsets = next;
    }
    offsets
}

#[derive(Clone, Debug)]
pub struct StateVector {
    n: usize,
    d: Modulus,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0⟩^{⊗n}`.
    pub fn zero(n: usize, d: Modulus) -> Result<Self> {
        Self::basis_state(n, d, &vec![0; n])
    }

    pub fn basis_state(n: usize, d: Modulus, digits: &[u64]) -> Result<Self> {
        Self::basis_state_with_cap(n, d, digits, DEFAULT_AMPLITUDE_CAP)
    }

    pub fn basis_state_with_cap(n: usize, d: Modulus, digits: &[u64], cap: usize) -> Result<Self> {
        if digits.len() != n {
            return Err(Error::Domain(format!(
                "expected {n} digits, got {}",
                digits.len()
            )));
        }
        if let Some(&bad) = digits.iter().find(|&&k| k >= d.get()) {
            return Err(Error::Domain(format!("digit {bad} is not below d = {d}")));
        }
        let dim = amplitude_count(n, d, cap)?;
        let mut amps = vec![ZERO; dim];
        let idx = digits
            .iter()
            .fold(0usize, |acc, &k| acc * d.get() as usize + k as usize);
        amps[idx] = ONE;
        Ok(StateVector { n, d, amps })
    }

    /// Wrap explicit amplitudes; they must already have unit norm.
    pub fn from_amplitudes(n: usize, d: Modulus, amps: Vec<Complex64>) -> Result<Self> {
        let dim = amplitude_count(n, d, usize::MAX)?;
        if amps.len() != dim {
            return Err(Error::Domain(format!(
                "expected {dim} amplitudes, got {}",
                amps.len()
            )));
        }
        let s = StateVector { n, d, amps };
        let norm = s.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("state has norm {norm}, expected 1")));
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> Modulus {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn index_of(&self, digits: &[u64]) -> usize {
        let d = self.d.get() as usize;
        digits.iter().fold(0usize, |acc, &k| acc * d + k as usize)
    }

    pub fn digits_of(&self, mut index: usize) -> Vec<u64> {
        let d = self.d.get() as usize;
        let mut digits = vec![0u64; self.n];
        for slot in digits.iter_mut().rev() {
            *slot = (index % d) as u64;
            index /= d;
        }
        digits
    }

    pub fn amplitude(&self, digits: &[u64]) -> Complex64 {
        self.amps[self.index_of(digits)]
    }

    #[inline]
    fn stride(&self, q: usize) -> usize {
        (self.d.get() as usize).pow((self.n - 1 - q) as u32)
    }

    #[inline]
    fn digit(&self, idx: usize, stride: usize) -> usize {
        (idx / stride) % self.d.get() as usize
    }

    fn check_qudit(&self, q: usize) -> Result<()> {
        if q >= self.n {
            return Err(Error::Domain(format!(
                "qudit {q} out of range for {} qudits",
                self.n
            )));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.n != other.n || self.d != other.d {
            return Err(Error::Domain("inner product of mismatched systems".into()));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨self|other⟩| = 1` within `tol`; mismatched systems compare unequal.
    pub fn equal_up_to_global_phase(&self, other: &StateVector, tol: f64) -> bool {
        match self.inner(other) {
            Ok(ip) => (ip.norm() - 1.0).abs() <= tol,
            Err(_) => false,
        }
    }

    /// `X^a` on `target`: digit `s ↦ s + a`.
    pub fn apply_x_pow(&mut self, target: usize, a: u64) -> Result<()> {
        self.check_qudit(target)?;
        let a = self.d.reduce(a) as usize;
        if a == 0 {
            return Ok(());
        }
        let s = self.stride(target);
        let block = s * self.d.get() as usize;
        for chunk in self.amps.chunks_exact_mut(block) {
            chunk.rotate_right(a * s);
        }
        Ok(())
    }

    /// `Z^a` on `target`: digit `s` picks up `ω^{as}`.
    pub fn apply_z_pow(&mut self, target: usize, a: u64) -> Result<()> {
        self.check_qudit(target)?;
        let d = self.d.get();
        let a = self.d.reduce(a);
        if a == 0 {
            return Ok(());
        }
        let omega = omega_table(d);
        let s = self.stride(target);
        for chunk in self.amps.chunks_exact_mut(s * d as usize) {
            for (k, sub) in chunk.chunks_exact_mut(s).enumerate() {
                let ph = omega[self.d.mul(a, k as u64) as usize];
                for amp in sub.iter_mut() {
                    *amp *= ph;
                }
            }
        }
        Ok(())
    }

    /// Multiply every amplitude by `ω^k`.
    pub fn apply_global_phase(&mut self, k: u64) {
        let ph = crate::arith::omega_pow(k, self.d.get());
        for amp in self.amps.iter_mut() {
            *amp *= ph;
        }
    }

    /// Generalized Hadamard `|s⟩ ↦ d^{-1/2} Σ_j ω^{js} |j⟩`, or its adjoint.
    pub fn apply_h(&mut self, target: usize, inverse: bool) -> Result<()> {
        self.check_qudit(target)?;
        let d = self.d.get() as usize;
        let omega = omega_table(d as u64);
        let scale = 1.0 / (d as f64).sqrt();
        let s = self.stride(target);
        let block = s * d;
        let mut input = vec![ZERO; d];
        for chunk in self.amps.chunks_exact_mut(block) {
            for low in 0..s {
                let mut any = false;
                for k in 0..d {
                    input[k] = chunk[low + k * s];
                    any |= input[k] != ZERO;
                }
                if !any {
                    continue;
                }
                for j in 0..d {
                    let mut acc = ZERO;
                    for (k, v) in input.iter().enumerate() {
                        if *v == ZERO {
                            continue;
                        }
                        let e = (j * k) % d;
                        let e = if inverse { (d - e) % d } else { e };
                        acc += omega[e] * v;
                    }
                    chunk[low + j * s] = acc * scale;
                }
            }
        }
        Ok(())
    }

    /// `CX: |s⟩|r⟩ ↦ |s⟩|r+s⟩` (control, target), or `|r-s⟩` when `inverse`.
    pub fn apply_cx(&mut self, control: usize, target: usize, inverse: bool) -> Result<()> {
        self.check_qudit(control)?;
        self.check_qudit(target)?;
        if control == target {
            return Err(Error::Domain(format!(
                "CX control and target are both qudit {control}"
            )));
        }
        let d = self.d.get() as usize;
        let sc = self.stride(control);
        let st = self.stride(target);
        let mut moved = Vec::new();
        for idx in 0..self.amps.len() {
            let amp = self.amps[idx];
            if amp == ZERO {
                continue;
            }
            let c = self.digit(idx, sc);
            if c == 0 {
                continue;
            }
            let r = self.digit(idx, st);
            let nr = if inverse { (r + d - c) % d } else { (r + c) % d };
            moved.push((idx + nr * st - r * st, amp));
            self.amps[idx] = ZERO;
        }
        // Sources sharing a control digit form closed orbits, so clearing all
        // of them before writing cannot lose an amplitude.
        for (idx, amp) in moved {
            self.amps[idx] = amp;
        }
        Ok(())
    }

    /// Probability of each outcome of a `Z`-basis measurement of `target`.
    pub fn branch_probabilities(&self, target: usize) -> Result<Vec<f64>> {
        self.joint_probabilities(&[target])
    }

    /// Joint outcome distribution for measuring `targets`, indexed big-endian
    /// in the order given.
    pub fn joint_probabilities(&self, targets: &[usize]) -> Result<Vec<f64>> {
        for &t in targets {
            self.check_qudit(t)?;
        }
        let d = self.d.get() as usize;
        let st: Vec<usize> = targets.iter().map(|&t| self.stride(t)).collect();
        let mut probs = vec![0.0; d.pow(targets.len() as u32)];
        for (idx, amp) in self.amps.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let key = st.iter().fold(0usize, |acc, &s| acc * d + self.digit(idx, s));
            probs[key] += p;
        }
        Ok(probs)
    }

    /// Projective `Z` measurement of `target`; returns the digit and leaves
    /// the renormalized post-measurement state.
    pub fn measure_z<R: Rng + ?Sized>(&mut self, target: usize, rng: &mut R) -> Result<u64> {
        Ok(self.measure_many(&[target], rng)?[0])
    }

    /// Jointly measure several qudits (they commute, so this equals measuring
    /// them one after another).
    pub fn measure_many<R: Rng + ?Sized>(
        &mut self,
        targets: &[usize],
        rng: &mut R,
    ) -> Result<Vec<u64>> {
        let probs = self.joint_probabilities(targets)?;
        let outcomes = self.split_key(sample_index(&probs, rng)?, targets.len());
        self.project_many(targets, &outcomes)?;
        Ok(outcomes)
    }

    /// Post-select `target` on `outcome`. Returns the branch probability.
    pub fn project(&mut self, target: usize, outcome: u64) -> Result<f64> {
        self.project_many(&[target], &[outcome])
    }

    pub fn project_many(&mut self, targets: &[usize], outcomes: &[u64]) -> Result<f64> {
        if targets.len() != outcomes.len() {
            return Err(Error::Domain("targets and outcomes differ in length".into()));
        }
        for (&t, &o) in targets.iter().zip(outcomes) {
            self.check_qudit(t)?;
            if o >= self.d.get() {
                return Err(Error::Domain(format!("outcome {o} is not below d = {}", self.d)));
            }
        }
        let st: Vec<usize> = targets.iter().map(|&t| self.stride(t)).collect();
        let matches = |idx: usize| {
            st.iter()
                .zip(outcomes)
                .all(|(&s, &o)| self.digit(idx, s) == o as usize)
        };
        let kept: f64 = (0..self.amps.len())
            .filter(|&idx| self.amps[idx] != ZERO && matches(idx))
            .map(|idx| self.amps[idx].norm_sqr())
            .sum();
        if kept < NEGLIGIBLE_PROBABILITY {
            return Err(Error::Domain(format!(
                "outcome {outcomes:?} on qudits {targets:?} has zero probability"
            )));
        }
        let scale = 1.0 / kept.sqrt();
        let hits: Vec<bool> = (0..self.amps.len())
            .map(|idx| self.amps[idx] != ZERO && matches(idx))
            .collect();
        for (amp, hit) in self.amps.iter_mut().zip(hits) {
            if hit {
                *amp *= scale;
            } else if *amp != ZERO {
                *amp = ZERO;
            }
        }
        Ok(kept)
    }

    /// Measure `targets` and remove them from the system in one pass.
    /// Returns the outcomes and the state of the remaining qudits.
    pub fn measure_and_drop<R: Rng + ?Sized>(
        &self,
        targets: &[usize],
        rng: &mut R,
    ) -> Result<(Vec<u64>, StateVector)> {
        let probs = self.joint_probabilities(targets)?;
        let outcomes = self.split_key(sample_index(&probs, rng)?, targets.len());
        let fixed: Vec<(usize, u64)> = targets.iter().copied().zip(outcomes.iter().copied()).collect();
        let rest = self.drop_qudits(&fixed)?;
        Ok((outcomes, rest))
    }

    fn split_key(&self, mut key: usize, len: usize) -> Vec<u64> {
        let d = self.d.get() as usize;
        let mut outcomes = vec![0u64; len];
        for slot in outcomes.iter_mut().rev() {
            *slot = (key % d) as u64;
            key /= d;
        }
        outcomes
    }

    /// `self ⊗ other`; the qudits of `other` follow those of `self`.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        self.tensor_with_cap(other, DEFAULT_AMPLITUDE_CAP)
    }

    pub fn tensor_with_cap(&self, other: &StateVector, cap: usize) -> Result<StateVector> {
        if self.d != other.d {
            return Err(Error::Domain("tensor product of different dimensions".into()));
        }
        let n = self.n + other.n;
        let dim = amplitude_count(n, self.d, cap)?;
        let mut amps = vec![ZERO; dim];
        let w = other.amps.len();
        let rhs: Vec<(usize, Complex64)> = other
            .amps
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, a)| *a != ZERO)
            .collect();
        for (i, a) in self.amps.iter().enumerate() {
            if *a == ZERO {
                continue;
            }
            for &(j, b) in &rhs {
                amps[i * w + j] = a * b;
            }
        }
        Ok(StateVector { n, d: self.d, amps })
    }

    /// Drop qudits that hold definite digits (e.g. right after measuring
    /// them). The remaining qudits keep their relative order. Amplitudes whose
    /// fixed digits disagree are discarded and the rest renormalized.
    pub fn drop_qudits(&self, fixed: &[(usize, u64)]) -> Result<StateVector> {
        for &(q, o) in fixed {
            self.check_qudit(q)?;
            if o >= self.d.get() {
                return Err(Error::Domain(format!("digit {o} is not below d = {}", self.d)));
            }
        }
        let d = self.d.get() as usize;
        let keep: Vec<usize> = (0..self.n)
            .filter(|q| !fixed.iter().any(|(f, _)| f == q))
            .collect();
        let new_n = keep.len();
        let dim = amplitude_count(new_n, self.d, usize::MAX)?;
        let mut amps = vec![ZERO; dim];
        let fixed_st: Vec<(usize, usize)> = fixed
            .iter()
            .map(|&(q, o)| (self.stride(q), o as usize))
            .collect();
        let keep_st: Vec<usize> = keep.iter().map(|&q| self.stride(q)).collect();
        let mut norm = 0.0;
        for (idx, amp) in self.amps.iter().enumerate() {
            if *amp == ZERO {
                continue;
            }
            if fixed_st.iter().any(|&(s, o)| self.digit(idx, s) != o) {
                continue;
            }
            let new_idx = keep_st
                .iter()
                .fold(0usize, |acc, &s| acc * d + self.digit(idx, s));
            amps[new_idx] = *amp;
            norm += amp.norm_sqr();
        }
        if norm < NEGLIGIBLE_PROBABILITY {
            return Err(Error::Domain(format!(
                "no amplitude is consistent with fixed digits {fixed:?}"
            )));
        }
        let scale = 1.0 / norm.sqrt();
        for a in amps.iter_mut() {
            *a *= scale;
        }
        Ok(StateVector {
            n: new_n,
            d: self.d,
            amps,
        })
    }

    /// Reorder qudits: qudit `i` of the result is qudit `order[i]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Result<StateVector> {
        let mut seen = vec![false; self.n];
        if order.len() != self.n {
            return Err(Error::Domain("permutation has the wrong length".into()));
        }
        for &q in order {
            self.check_qudit(q)?;
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::Domain(format!("qudit {q} repeated in permutation")));
            }
        }
        let d = self.d.get() as usize;
        let st: Vec<usize> = order.iter().map(|&q| self.stride(q)).collect();
        let mut amps = vec![ZERO; self.amps.len()];
        for (idx, amp) in self.amps.iter().enumerate() {
            if *amp == ZERO {
                continue;
            }
            let new_idx = st.iter().fold(0usize, |acc, &s| acc * d + self.digit(idx, s));
            amps[new_idx] = *amp;
        }
        Ok(StateVector {
            n: self.n,
            d: self.d,
            amps,
        })
    }

    /// Move qudit `from` to position `to`, shifting the others.
    pub fn move_qudit(&self, from: usize, to: usize) -> Result<StateVector> {
        self.check_qudit(from)?;
        self.check_qudit(to)?;
        let mut order: Vec<usize> = (0..self.n).filter(|&q| q != from).collect();
        order.insert(to, from);
        self.permute(&order)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> DensityMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        DensityMatrix {
            dims: vec![self.d.get() as usize; self.n],
            entries: &v * v.adjoint(),
        }
    }

    /// Reduced density matrix on `keep` without forming `|ψ⟩⟨ψ|`.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let dims = vec![self.d.get() as usize; self.n];
        let (keep, traced) = split_subsystems(&dims, keep)?;
        let ko = sub_offsets(&dims, &keep);
        let to = sub_offsets(&dims, &traced);
        let m = DMatrix::from_fn(ko.len(), to.len(), |a, t| self.amps[ko[a] + to[t]]);
        Ok(DensityMatrix {
            dims: keep.iter().map(|&q| dims[q]).collect(),
            entries: &m * m.adjoint(),
        })
    }

    /// Dense matrix of this state's `Z` projector-free representation: the
    /// column vector of amplitudes.
    pub fn to_column(&self) -> nalgebra::DVector<Complex64> {
        nalgebra::DVector::from_column_slice(&self.amps)
    }
}

/// Sample an index from unnormalized weights.
fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if !(total > NEGLIGIBLE_PROBABILITY) {
        return Err(Error::Internal(format!(
            "measurement branches carry total probability {total}"
        )));
    }
    let r = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if r < acc {
            return Ok(k);
        }
    }
    Ok(last)
}

fn split_subsystems(dims: &[usize], keep: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    if keep.is_empty() {
        return Err(Error::Domain("partial trace must keep at least one subsystem".into()));
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&q| q >= dims.len()) {
        return Err(Error::Domain(format!(
            "subsystem {bad} out of range for {} subsystems",
            dims.len()
        )));
    }
    let traced = (0..dims.len()).filter(|q| !keep.contains(q)).collect();
    Ok((keep, traced))
}

/// Matrix of a linear map on `n` qudits, built column by column by applying
/// `f` to each computational basis state.
pub fn operator_matrix<F>(n: usize, d: Modulus, mut f: F) -> Result<DMatrix<Complex64>>
where
    F: FnMut(&mut StateVector) -> Result<()>,
{
    let dim = amplitude_count(n, d, 1 << 14)?;
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    for col in 0..dim {
        let mut amps = vec![ZERO; dim];
        amps[col] = ONE;
        let mut sv = StateVector { n, d, amps };
        f(&mut sv)?;
        m.set_column(col, &nalgebra::DVector::from_column_slice(&sv.amps));
    }
    Ok(m)
}

/// A density operator over subsystems of the given dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(dims: Vec<usize>, entries: DMatrix<Complex64>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if entries.nrows() != total || entries.ncols() != total {
            return Err(Error::Domain(format!(
                "{}x{} matrix does not match subsystem dimensions {dims:?}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(DensityMatrix { dims, entries })
    }

    /// `I/d` on one subsystem.
    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            dims: vec![d],
            entries: DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0)),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let adj = self.entries.adjoint();
        (&self.entries - adj).iter().all(|z| z.norm() <= tol)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(herm)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Hermitian, unit trace and positive semidefinite, each within `tol`.
    pub fn is_valid_state(&self, tol: f64) -> bool {
        self.is_hermitian(tol)
            && (self.trace() - ONE).norm() <= tol
            && self.eigenvalues().first().is_none_or(|&e| e >= -tol)
    }

    /// Largest entrywise deviation from another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        if self.entries.shape() != other.entries.shape() {
            return f64::INFINITY;
        }
        (&self.entries - &other.entries)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Trace out every subsystem not listed in `keep`.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let (keep, traced) = split_subsystems(&self.dims, keep)?;
        let ko = sub_offsets(&self.dims, &keep);
        let to = sub_offsets(&self.dims, &traced);
        let entries = DMatrix::from_fn(ko.len(), ko.len(), |a, b| {
            to.iter()
                .map(|&t| self.entries[(ko[a] + t, ko[b] + t)])
                .sum::<Complex64>()
        });
        Ok(DensityMatrix {
            dims: keep.iter().map(|&q| self.dims[q]).collect(),
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::omega_pow;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(d: u64) -> Modulus {
        Modulus::new(d).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, d: Modulus, rng: &mut ChaCha8Rng) -> StateVector {
        let dim = (d.get() as usize).pow(n as u32);
        let mut amps: Vec<Complex64> = (0..dim)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector::from_amplitudes(n, d, amps).unwrap()
    }

    fn max_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn basis_state_encoding() {
        let s = StateVector::basis_state(2, m(3), &[0, 0]).unwrap();
        assert_eq!(s.amplitudes()[0], ONE);
        let s = StateVector::basis_state(1, m(5), &[4]).unwrap();
        assert_eq!(s.amplitudes()[4], ONE);
        let s = StateVector::basis_state(3, m(3), &[1, 0, 2]).unwrap();
        assert_eq!(s.amplitudes()[11], ONE);
        assert_eq!(s.digits_of(11), vec![1, 0, 2]);
        assert!(matches!(
            StateVector::basis_state(1, m(3), &[3]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            StateVector::basis_state(2, m(3), &[0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn amplitude_cap_is_enforced() {
        assert!(matches!(
            StateVector::basis_state_with_cap(3, m(3), &[0, 0, 0], 26),
            Err(Error::Unsupported(_))
        ));
        assert!(StateVector::basis_state_with_cap(3, m(3), &[0, 0, 0], 27).is_ok());
        assert!(StateVector::zero(40, m(3)).is_err());
    }

    #[test]
    fn x_pow_examples() {
        let d = m(3);
        let mut s = StateVector::basis_state(1, d, &[1]).unwrap();
        s.apply_x_pow(0, 1).unwrap();
        assert_eq!(s.amplitude(&[2]), ONE);
        s.apply_x_pow(0, 1).unwrap();
        assert_eq!(s.amplitude(&[0]), ONE);

        let mut s = StateVector::basis_state(1, m(5), &[3]).unwrap();
        s.apply_x_pow(0, 5).unwrap();
        assert_eq!(s.amplitude(&[3]), ONE);

        // Acts only on the addressed qudit.
        let mut s = StateVector::basis_state(3, d, &[1, 2, 0]).unwrap();
        s.apply_x_pow(1, 2).unwrap();
        assert_eq!(s.amplitude(&[1, 1, 0]), ONE);
        assert!(s.apply_x_pow(3, 1).is_err());
    }

    #[test]
    fn z_pow_examples() {
        let mut s = StateVector::basis_state(1, m(3), &[2]).unwrap();
        s.apply_z_pow(0, 1).unwrap();
        assert!((s.amplitude(&[2]) - omega_pow(2, 3)).norm() < 1e-12);

        let mut s = StateVector::basis_state(1, m(3), &[0]).unwrap();
        s.apply_z_pow(0, 2).unwrap();
        assert!((s.amplitude(&[0]) - ONE).norm() < 1e-12);

        let mut s = StateVector::basis_state(1, m(5), &[1]).unwrap();
        s.apply_z_pow(0, 5).unwrap();
        assert!((s.amplitude(&[1]) - ONE).norm() < 1e-12);
    }

    #[test]
    fn hadamard_examples() {
        let mut s = StateVector::zero(1, m(3)).unwrap();
        s.apply_h(0, false).unwrap();
        for k in 0..3 {
            assert!((s.amplitude(&[k]) - c(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-12);
        }
        let mut s = StateVector::basis_state(1, m(2), &[1]).unwrap();
        s.apply_h(0, false).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((s.amplitude(&[0]) - c(r, 0.0)).norm() < 1e-12);
        assert!((s.amplitude(&[1]) - c(-r, 0.0)).norm() < 1e-12);

        for sd in 0..5 {
            let mut s = StateVector::basis_state(1, m(5), &[sd]).unwrap();
            s.apply_h(0, true).unwrap();
            s.apply_h(0, false).unwrap();
            assert!((s.amplitude(&[sd]) - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn cx_examples() {
        let d = m(3);
        let mut s = StateVector::basis_state(2, d, &[1, 2]).unwrap();
        s.apply_cx(0, 1, false).unwrap();
        assert_eq!(s.amplitude(&[1, 0]), ONE);
        for r in 0..3 {
            let mut s = StateVector::basis_state(2, d, &[0, r]).unwrap();
            s.apply_cx(0, 1, false).unwrap();
            assert_eq!(s.amplitude(&[0, r]), ONE);
        }
        // Control below target in significance.
        let mut s = StateVector::basis_state(3, d, &[2, 0, 2]).unwrap();
        s.apply_cx(2, 0, false).unwrap();
        assert_eq!(s.amplitude(&[1, 0, 2]), ONE);
        assert!(matches!(s.apply_cx(1, 1, false), Err(Error::Domain(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d5 = m(5);
        for _ in 0..20 {
            let digits: Vec<u64> = (0..3).map(|_| rng.random_range(0..5)).collect();
            let orig = StateVector::basis_state(3, d5, &digits).unwrap();
            let mut s = orig.clone();
            s.apply_cx(1, 2, false).unwrap();
            s.apply_cx(1, 2, true).unwrap();
            assert_eq!(s.amplitudes(), orig.amplitudes());
        }
    }

    #[test]
    fn measurement_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = StateVector::zero(1, m(3)).unwrap();
        s.apply_h(0, false).unwrap();
        let p = s.branch_probabilities(0).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }

        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let mut t = s.clone();
            counts[t.measure_z(0, &mut rng).unwrap() as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 900 && c < 1100), "{counts:?}");

        let mut b = StateVector::basis_state(1, m(5), &[4]).unwrap();
        for _ in 0..10 {
            assert_eq!(b.measure_z(0, &mut rng).unwrap(), 4);
        }
    }

    #[test]
    fn ghz_measurement_collapses_every_qudit() {
        // (|000⟩ + |111⟩ + |222⟩)/√3 enumerated by hand.
        let d = m(3);
        let mut amps = vec![ZERO; 27];
        for k in [0usize, 13, 26] {
            amps[k] = c(1.0 / 3f64.sqrt(), 0.0);
        }
        let ghz = StateVector::from_amplitudes(3, d, amps).unwrap();
        let p = ghz.branch_probabilities(0).unwrap();
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let mut s = ghz.clone();
            let j = s.measure_z(0, &mut rng).unwrap();
            let expect = StateVector::basis_state(3, d, &[j, j, j]).unwrap();
            assert!(s.equal_up_to_global_phase(&expect, 1e-12));
        }
    }

    #[test]
    fn forced_projection_rejects_impossible_outcome() {
        let mut s = StateVector::basis_state(1, m(3), &[1]).unwrap();
        assert!(matches!(s.project(0, 2), Err(Error::Domain(_))));
        let p = s.project(0, 1).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_examples() {
        let s = StateVector::zero(1, m(2)).unwrap();
        let rho = s.density();
        assert_eq!(rho.entries()[(0, 0)], ONE);
        assert_eq!(rho.entries()[(1, 1)], ZERO);

        let mut s = StateVector::zero(1, m(2)).unwrap();
        s.apply_h(0, false).unwrap();
        let rho = s.density();
        assert!(rho.entries().iter().all(|z| (z - c(0.5, 0.0)).norm() < 1e-12));
        assert!((rho.trace() - ONE).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let d = m(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_state(1, d, &mut rng);
        let b = random_state(1, d, &mut rng);
        let rho = a.tensor(&b).unwrap().density();
        let red = rho.partial_trace(&[0]).unwrap();
        assert!(red.max_abs_diff(&a.density()) < 1e-12);
        let red = rho.partial_trace(&[1]).unwrap();
        assert!(red.max_abs_diff(&b.density()) < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        // (|00⟩+|11⟩+|22⟩)/√3: the reduced 3×3 matrix is diag(1/3, 1/3, 1/3).
        let d = m(3);
        let mut amps = vec![ZERO; 9];
        for k in [0usize, 4, 8] {
            amps[k] = c(1.0 / 3f64.sqrt(), 0.0);
        }
        let bell = StateVector::from_amplitudes(2, d, amps).unwrap();
        let red = bell.density().partial_trace(&[0]).unwrap();
        assert!(red.max_abs_diff(&DensityMatrix::maximally_mixed(3)) < 1e-12);
        let red2 = bell.reduced_density(&[1]).unwrap();
        assert!(red2.max_abs_diff(&DensityMatrix::maximally_mixed(3)) < 1e-12);
        assert!(partial_trace_keep_empty_fails(&bell));
    }

    fn partial_trace_keep_empty_fails(s: &StateVector) -> bool {
        matches!(s.density().partial_trace(&[]), Err(Error::Domain(_)))
            && matches!(s.density().partial_trace(&[5]), Err(Error::Domain(_)))
    }

    #[test]
    fn reduced_density_matches_partial_trace() {
        let d = m(3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = random_state(3, d, &mut rng);
        for keep in [vec![0], vec![1], vec![2], vec![0, 2], vec![1, 2]] {
            let a = s.density().partial_trace(&keep).unwrap();
            let b = s.reduced_density(&keep).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-12, "{keep:?}");
            assert!(a.is_valid_state(1e-10));
        }
    }

    #[test]
    fn global_phase_equality() {
        let d = m(3);
        let a = StateVector::zero(1, d).unwrap();
        let mut b = a.clone();
        // ω^2 |0⟩ via X^{-1} Z X: the phase picked up on |1⟩ is ω^1, so use Z twice on |1⟩.
        b.apply_x_pow(0, 1).unwrap();
        b.apply_z_pow(0, 2).unwrap();
        b.apply_x_pow(0, 2).unwrap();
        assert!((b.amplitude(&[0]) - omega_pow(2, 3)).norm() < 1e-12);
        assert!(a.equal_up_to_global_phase(&b, 1e-12));
        let one = StateVector::basis_state(1, d, &[1]).unwrap();
        assert!(!a.equal_up_to_global_phase(&one, 1e-6));
        let mut h = a.clone();
        h.apply_h(0, false).unwrap();
        let uniform = StateVector::from_amplitudes(1, d, vec![c(1.0 / 3f64.sqrt(), 0.0); 3]).unwrap();
        assert!(h.equal_up_to_global_phase(&uniform, 1e-12));
    }

    #[test]
    fn conjugation_identities_as_matrices() {
        for d in [2u64, 3, 5, 7] {
            let md = m(d);
            let x = operator_matrix(1, md, |s| s.apply_x_pow(0, 1)).unwrap();
            let z = operator_matrix(1, md, |s| s.apply_z_pow(0, 1)).unwrap();
            let h = operator_matrix(1, md, |s| s.apply_h(0, false)).unwrap();
            let hd = h.adjoint();
            assert!(max_diff(&(&h * &x * &hd), &z) < 1e-10, "HXH† = Z, d={d}");
            assert!(max_diff(&(&hd * &z * &h), &x) < 1e-10, "H†ZH = X, d={d}");
            let hinv = operator_matrix(1, md, |s| s.apply_h(0, true)).unwrap();
            assert!(max_diff(&hinv, &hd) < 1e-12);
            let id = DMatrix::<Complex64>::identity(d as usize, d as usize);
            assert!(max_diff(&(&h * &hd), &id) < 1e-10);
        }
    }

    #[test]
    fn tensor_power_of_hadamard_on_repeated_digit() {
        // H^{⊗n}|s⟩^{⊗n} has amplitude ω^{s‖j‖}/√(d^n) at every j.
        for d in [2u64, 3, 5] {
            let md = m(d);
            for n in 1..=3usize {
                for s in 0..d {
                    let mut st = StateVector::basis_state(n, md, &vec![s; n]).unwrap();
                    for q in 0..n {
                        st.apply_h(q, false).unwrap();
                    }
                    let scale = 1.0 / (d as f64).powi(n as i32).sqrt();
                    for idx in 0..st.dim() {
                        let l1: u64 = st.digits_of(idx).iter().sum();
                        let expect = omega_pow(s * l1, d) * scale;
                        assert!((st.amplitudes()[idx] - expect).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn drop_and_move_qudits() {
        let d = m(3);
        let s = StateVector::basis_state(3, d, &[2, 1, 0]).unwrap();
        let t = s.drop_qudits(&[(1, 1)]).unwrap();
        assert_eq!(t.n(), 2);
        assert_eq!(t.amplitude(&[2, 0]), ONE);
        assert!(s.drop_qudits(&[(1, 2)]).is_err());
        let u = s.move_qudit(2, 0).unwrap();
        assert_eq!(u.amplitude(&[0, 2, 1]), ONE);
        let v = s.move_qudit(0, 2).unwrap();
        assert_eq!(v.amplitude(&[1, 0, 2]), ONE);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gates_preserve_norm(seed in 0u64..1000, di in 0usize..3, q in 0usize..3, a in 0u64..10) {
            let d = m([3u64, 5, 7][di]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = random_state(3, d, &mut rng);
            s.apply_x_pow(q, a).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
            s.apply_z_pow(q, a).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
            s.apply_h(q, a % 2 == 0).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
            s.apply_cx(q, (q + 1) % 3, a % 2 == 1).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-10);
            let total: f64 = s.branch_probabilities(q).unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn pauli_powers_invert(seed in 0u64..1000, di in 0usize..3, q in 0usize..2, a in 0u64..20) {
            let d = m([3u64, 5, 7][di]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let orig = random_state(2, d, &mut rng);
            let neg = d.neg(d.reduce(a));
            let mut s = orig.clone();
            s.apply_x_pow(q, a).unwrap();
            s.apply_x_pow(q, neg).unwrap();
            prop_assert!(s.inner(&orig).unwrap().re > 1.0 - 1e-10);
            s.apply_z_pow(q, a).unwrap();
            s.apply_z_pow(q, neg).unwrap();
            prop_assert!(s.inner(&orig).unwrap().re > 1.0 - 1e-10);
        }

        #[test]
        fn reduced_states_are_physical(seed in 0u64..1000, q in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(3, m(3), &mut rng);
            let red = s.density().partial_trace(&[q]).unwrap();
            prop_assert!(red.is_valid_state(1e-10));
        }
    }
}
