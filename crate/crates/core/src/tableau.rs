//! Stabilizer simulation over `Z_d`.
//!
//! A [`PauliOperator`] is `ω^phase ⊗_q X^{x_q} Z^{z_q}` with `X` to the left of
//! `Z` on every qudit. A [`StabilizerTableau`] holds `n` commuting, independent
//! generators and no destabilizers; deterministic measurement outcomes are
//! recovered by row reduction.
//!
//! Conjugation rules used by the gates (`U P U†`):
//!
//! | gate | `(x, z)` on the touched qudits | phase |
//! |------|-------------------------------|-------|
//! | `H`  | `(x, z) → (−z, x)` | `−xz` |
//! | `H†` | `(x, z) → (z, −x)` | `−xz` |
//! | `CX` | `x_t += x_c`, `z_c −= z_t` | none |
//! | `CX⁻¹` | `x_t −= x_c`, `z_c += z_t` | none |
//! | `Z^a` | unchanged | `+ax` |
//! | `X^a` | unchanged | `−az` |
//!
//! Each rule is checked against dense matrix conjugation by
//! [`verify_conjugation_rules`].

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::arith::Modulus;
use crate::error::{Error, Result};
use crate::statevec::{operator_matrix, StateVector};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliOperator {
    d: Modulus,
    phase: u64,
    x: Vec<u64>,
    z: Vec<u64>,
}

impl PauliOperator {
    pub fn identity(n: usize, d: Modulus) -> Self {
        PauliOperator {
            d,
            phase: 0,
            x: vec![0; n],
            z: vec![0; n],
        }
    }

    /// Build from explicit exponents; every entry is reduced mod `d`.
    pub fn new(d: Modulus, phase: u64, x: Vec<u64>, z: Vec<u64>) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::Domain(format!(
                "x has {} entries but z has {}",
                x.len(),
                z.len()
            )));
        }
        Ok(PauliOperator {
            d,
            phase: d.reduce(phase),
            x: x.into_iter().map(|v| d.reduce(v)).collect(),
            z: z.into_iter().map(|v| d.reduce(v)).collect(),
        })
    }

    /// `X^a` on qudit `q` of `n`.
    pub fn single_x(n: usize, d: Modulus, q: usize, a: u64) -> Self {
        let mut p = Self::identity(n, d);
        p.x[q] = d.reduce(a);
        p
    }

    /// `Z^a` on qudit `q` of `n`.
    pub fn single_z(n: usize, d: Modulus, q: usize, a: u64) -> Self {
        let mut p = Self::identity(n, d);
        p.z[q] = d.reduce(a);
        p
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn d(&self) -> Modulus {
        self.d
    }

    pub fn phase(&self) -> u64 {
        self.phase
    }

    pub fn x(&self) -> &[u64] {
        &self.x
    }

    pub fn z(&self) -> &[u64] {
        &self.z
    }

    pub fn with_phase(mut self, phase: u64) -> Self {
        self.phase = self.d.reduce(phase);
        self
    }

    /// Number of qudits on which the operator is not the identity.
    pub fn weight(&self) -> usize {
        self.x
            .iter()
            .zip(&self.z)
            .filter(|(&a, &b)| a != 0 || b != 0)
            .count()
    }

    /// True when the exponent vectors vanish (the phase may not).
    pub fn is_identity_up_to_phase(&self) -> bool {
        self.x.iter().chain(&self.z).all(|&v| v == 0)
    }

    pub fn is_identity(&self) -> bool {
        self.phase == 0 && self.is_identity_up_to_phase()
    }

    fn check_compatible(&self, other: &PauliOperator) -> Result<()> {
        if self.d != other.d || self.n() != other.n() {
            return Err(Error::Domain(format!(
                "operators on {} qudits (d = {}) and {} qudits (d = {})",
                self.n(),
                self.d,
                other.n(),
                other.d
            )));
        }
        Ok(())
    }

    fn dot(d: Modulus, a: &[u64], b: &[u64]) -> u64 {
        a.iter()
            .zip(b)
            .filter(|(&u, &v)| u != 0 && v != 0)
            .fold(0, |acc, (&u, &v)| d.add(acc, d.mul(u, v)))
    }

    /// `self · other`. Moving `other`'s `X` past `self`'s `Z` costs
    /// `ω^{⟨z_self, x_other⟩}`.
    pub fn multiply(&self, other: &PauliOperator) -> Result<PauliOperator> {
        let mut out = self.clone();
        out.mul_assign(other)?;
        Ok(out)
    }

    pub fn mul_assign(&mut self, other: &PauliOperator) -> Result<()> {
        self.check_compatible(other)?;
        let d = self.d;
        let corr = Self::dot(d, &self.z, &other.x);
        self.phase = d.add(d.add(self.phase, other.phase), corr);
        for (a, &b) in self.x.iter_mut().zip(&other.x) {
            *a = d.add(*a, b);
        }
        for (a, &b) in self.z.iter_mut().zip(&other.z) {
            *a = d.add(*a, b);
        }
        Ok(())
    }

    /// `self^a = ω^{a·phase + ⟨x,z⟩·a(a−1)/2} X^{ax} Z^{az}`.
    pub fn pow(&self, a: u64) -> PauliOperator {
        let d = self.d;
        let a = d.reduce(a);
        let xz = Self::dot(d, &self.x, &self.z);
        PauliOperator {
            d,
            phase: d.add(d.mul(a, self.phase), d.mul(xz, d.triangular(a))),
            x: self.x.iter().map(|&v| d.mul(v, a)).collect(),
            z: self.z.iter().map(|&v| d.mul(v, a)).collect(),
        }
    }

    /// The exponent `k` with `self · other = ω^k other · self`.
    pub fn symplectic(&self, other: &PauliOperator) -> Result<u64> {
        self.check_compatible(other)?;
        let d = self.d;
        Ok(d.sub(
            Self::dot(d, &self.z, &other.x),
            Self::dot(d, &self.x, &other.z),
        ))
    }

    pub fn commutes_with(&self, other: &PauliOperator) -> Result<bool> {
        Ok(self.symplectic(other)? == 0)
    }

    fn check_qudit(&self, q: usize) -> Result<()> {
        if q >= self.n() {
            return Err(Error::Domain(format!(
                "qudit {q} out of range for {} qudits",
                self.n()
            )));
        }
        Ok(())
    }

    /// `H P H†`, or `H† P H` when `inverse`.
    pub fn conjugate_h(&mut self, target: usize, inverse: bool) -> Result<()> {
        self.check_qudit(target)?;
        let d = self.d;
        let (x, z) = (self.x[target], self.z[target]);
        self.phase = d.sub(self.phase, d.mul(x, z));
        if inverse {
            self.x[target] = z;
            self.z[target] = d.neg(x);
        } else {
            self.x[target] = d.neg(z);
            self.z[target] = x;
        }
        Ok(())
    }

    /// `CX P CX†` with `CX|s,r⟩ = |s, r+s⟩`, or the inverse gate.
    pub fn conjugate_cx(&mut self, control: usize, target: usize, inverse: bool) -> Result<()> {
        self.check_qudit(control)?;
        self.check_qudit(target)?;
        if control == target {
            return Err(Error::Domain(format!(
                "CX control and target are both qudit {control}"
            )));
        }
        let d = self.d;
        let (xc, zt) = (self.x[control], self.z[target]);
        if inverse {
            self.x[target] = d.sub(self.x[target], xc);
            self.z[control] = d.add(self.z[control], zt);
        } else {
            self.x[target] = d.add(self.x[target], xc);
            self.z[control] = d.sub(self.z[control], zt);
        }
        Ok(())
    }

    /// `Z^a P Z^{−a}`.
    pub fn conjugate_z_pow(&mut self, target: usize, a: u64) -> Result<()> {
        self.check_qudit(target)?;
        let d = self.d;
        self.phase = d.add(self.phase, d.mul(d.reduce(a), self.x[target]));
        Ok(())
    }

    /// `X^a P X^{−a}`.
    pub fn conjugate_x_pow(&mut self, target: usize, a: u64) -> Result<()> {
        self.check_qudit(target)?;
        let d = self.d;
        self.phase = d.sub(self.phase, d.mul(d.reduce(a), self.z[target]));
        Ok(())
    }

    /// Act on a dense state: `Z` powers first, then `X`, then the phase.
    pub fn apply_to(&self, state: &mut StateVector) -> Result<()> {
        if state.n() != self.n() || state.d() != self.d {
            return Err(Error::Domain("operator and state sizes differ".into()));
        }
        for q in 0..self.n() {
            state.apply_z_pow(q, self.z[q])?;
            state.apply_x_pow(q, self.x[q])?;
        }
        state.apply_global_phase(self.phase);
        Ok(())
    }

    /// Dense `d^n × d^n` matrix. Only for small systems.
    pub fn dense_matrix(&self) -> Result<DMatrix<Complex64>> {
        operator_matrix(self.n(), self.d, |s| self.apply_to(s))
    }

    /// Exponent of column `col` in the `[x | z]` layout.
    #[inline]
    fn entry(&self, col: usize) -> u64 {
        let n = self.n();
        if col < n {
            self.x[col]
        } else {
            self.z[col - n]
        }
    }

    /// `self ← self · other^c`.
    fn mul_assign_pow(&mut self, other: &PauliOperator, c: u64) {
        if c != 0 {
            self.mul_assign(&other.pow(c))
                .expect("rows of one tableau share n and d");
        }
    }
}

impl fmt::Display for PauliOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w^{}", self.phase)?;
        for q in 0..self.n() {
            let (x, z) = (self.x[q], self.z[q]);
            if x == 0 && z == 0 {
                continue;
            }
            write!(f, " ")?;
            if x != 0 {
                write!(f, "X{q}^{x}")?;
            }
            if z != 0 {
                write!(f, "Z{q}^{z}")?;
            }
        }
        Ok(())
    }
}

/// Stabilizer state of `n` qudits with odd prime dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilizerTableau {
    n: usize,
    d: Modulus,
    rows: Vec<PauliOperator>,
}

fn require_odd(d: Modulus) -> Result<()> {
    if !d.is_odd() {
        return Err(Error::Unsupported(
            "the tableau backend needs an odd prime d; d = 2 phases need factors of i".into(),
        ));
    }
    Ok(())
}

impl StabilizerTableau {
    /// `|0⟩^{⊗n}`, stabilized by every `Z_q`.
    pub fn zero_state(n: usize, d: Modulus) -> Result<Self> {
        require_odd(d)?;
        let rows = (0..n).map(|q| PauliOperator::single_z(n, d, q, 1)).collect();
        Ok(StabilizerTableau { n, d, rows })
    }

    /// `d^{−1/2} Σ_j |j⟩^{⊗n}`: generators `X^{⊗n}` and `Z_i Z_{i+1}^{−1}`.
    pub fn ghz(n: usize, d: Modulus) -> Result<Self> {
        require_odd(d)?;
        if n == 0 {
            return Err(Error::Domain("a GHZ state needs at least one qudit".into()));
        }
        let mut rows = Vec::with_capacity(n);
        rows.push(PauliOperator::new(d, 0, vec![1; n], vec![0; n])?);
        for i in 0..n - 1 {
            let mut g = PauliOperator::single_z(n, d, i, 1);
            g.z[i + 1] = d.neg(1);
            rows.push(g);
        }
        Ok(StabilizerTableau { n, d, rows })
    }

    /// Validate and wrap an explicit generator set.
    pub fn from_generators(n: usize, d: Modulus, rows: Vec<PauliOperator>) -> Result<Self> {
        require_odd(d)?;
        if rows.len() != n || rows.iter().any(|r| r.n() != n || r.d() != d) {
            return Err(Error::Domain(format!("need {n} generators on {n} qudits")));
        }
        let t = StabilizerTableau { n, d, rows };
        t.check_invariants()?;
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> Modulus {
        self.d
    }

    pub fn generators(&self) -> &[PauliOperator] {
        &self.rows
    }

    pub fn apply_h(&mut self, target: usize, inverse: bool) -> Result<()> {
        for r in &mut self.rows {
            r.conjugate_h(target, inverse)?;
        }
        Ok(())
    }

    pub fn apply_cx(&mut self, control: usize, target: usize, inverse: bool) -> Result<()> {
        for r in &mut self.rows {
            r.conjugate_cx(control, target, inverse)?;
        }
        Ok(())
    }

    pub fn apply_z_pow(&mut self, target: usize, a: u64) -> Result<()> {
        for r in &mut self.rows {
            r.conjugate_z_pow(target, a)?;
        }
        Ok(())
    }

    pub fn apply_x_pow(&mut self, target: usize, a: u64) -> Result<()> {
        for r in &mut self.rows {
            r.conjugate_x_pow(target, a)?;
        }
        Ok(())
    }

    /// Measure `Z_target`.
    ///
    /// If some generator fails to commute with `Z_target` the outcome is
    /// uniform; the other offending generators are cleared against a pivot,
    /// which is then replaced by `ω^{−m} Z_target`. Otherwise the outcome is
    /// read from the phase of `Z_target` expressed through the generators.
    pub fn measure_z<R: Rng + ?Sized>(&mut self, target: usize, rng: &mut R) -> Result<u64> {
        if target >= self.n {
            return Err(Error::Domain(format!(
                "qudit {target} out of range for {} qudits",
                self.n
            )));
        }
        let d = self.d;
        let Some(p) = self.rows.iter().position(|r| r.x[target] != 0) else {
            return self.deterministic_outcome(target);
        };
        let pivot = self.rows[p].clone();
        let inv = d.inv(pivot.x[target]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != p && row.x[target] != 0 {
                let c = d.neg(d.mul(row.x[target], inv));
                row.mul_assign_pow(&pivot, c);
            }
        }
        let m = rng.random_range(0..d.get());
        self.rows[p] = PauliOperator::single_z(self.n, d, target, 1).with_phase(d.neg(m));
        Ok(m)
    }

    fn deterministic_outcome(&self, target: usize) -> Result<u64> {
        let d = self.d;
        let (rows, pivots) = echelon(self.rows.clone(), false);
        let mut r = PauliOperator::single_z(self.n, d, target, 1);
        for &(col, i) in &pivots {
            let e = r.entry(col);
            if e != 0 {
                let c = d.neg(d.mul(e, d.inv(rows[i].entry(col))));
                r.mul_assign_pow(&rows[i], c);
            }
        }
        if !r.is_identity_up_to_phase() {
            return Err(Error::Internal(format!(
                "Z_{target} commutes with every generator but is not in their span"
            )));
        }
        Ok(r.phase)
    }

    /// Rank of the exponent rows over `Z_d`.
    pub fn rank(&self) -> usize {
        echelon(self.rows.clone(), false).1.len()
    }

    /// Pairwise commutation and row independence.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.rows.len() {
            for j in i + 1..self.rows.len() {
                if !self.rows[i].commutes_with(&self.rows[j])? {
                    return Err(Error::Domain(format!(
                        "generators {i} and {j} do not commute"
                    )));
                }
            }
        }
        let rank = self.rank();
        if rank != self.n {
            return Err(Error::Domain(format!(
                "generators have rank {rank}, expected {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Reduced row echelon form with unit pivots. Two tableaux describe the
    /// same state iff their canonical forms are equal.
    pub fn canonical_form(&self) -> Vec<PauliOperator> {
        echelon(self.rows.clone(), true).0
    }

    pub fn same_state(&self, other: &StabilizerTableau) -> bool {
        self.n == other.n && self.d == other.d && self.canonical_form() == other.canonical_form()
    }

    /// The stabilized vector, found by applying `Π_g (1/d) Σ_k g^k` to basis
    /// states. Only for small systems.
    pub fn to_state_vector(&self) -> Result<StateVector> {
        let dim = (self.d.get() as usize).pow(self.n as u32);
        let mut proj = DMatrix::<Complex64>::identity(dim, dim);
        let scale = Complex64::new(1.0 / self.d.get() as f64, 0.0);
        for g in &self.rows {
            let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
            for k in 0..self.d.get() {
                sum += g.pow(k).dense_matrix()?;
            }
            proj = sum * scale * proj;
        }
        let (best, norm) = (0..dim)
            .map(|c| (c, proj.column(c).norm()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if norm < 1e-9 {
            return Err(Error::Internal("generators stabilize no state".into()));
        }
        let amps: Vec<Complex64> = proj.column(best).iter().map(|a| a / norm).collect();
        StateVector::from_amplitudes(self.n, self.d, amps)
    }
}

/// Row reduce over the `[x | z]` columns. Returns the rows (pivot rows first,
/// in column order) and `(column, row)` for every pivot. With `full`, entries
/// above pivots are cleared too and pivots are scaled to 1.
fn echelon(mut rows: Vec<PauliOperator>, full: bool) -> (Vec<PauliOperator>, Vec<(usize, usize)>) {
    let Some(first) = rows.first() else {
        return (rows, Vec::new());
    };
    let d = first.d;
    let cols = 2 * first.n();
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..cols {
        if next == rows.len() {
            break;
        }
        let Some(p) = (next..rows.len()).find(|&r| rows[r].entry(col) != 0) else {
            continue;
        };
        rows.swap(next, p);
        if full {
            let inv = d.inv(rows[next].entry(col));
            rows[next] = rows[next].pow(inv);
        }
        let pivot = rows[next].clone();
        let inv = d.inv(pivot.entry(col));
        let start = if full { 0 } else { next + 1 };
        for r in start..rows.len() {
            if r == next {
                continue;
            }
            let e = rows[r].entry(col);
            if e != 0 {
                rows[r].mul_assign_pow(&pivot, d.neg(d.mul(e, inv)));
            }
        }
        pivots.push((col, next));
        next += 1;
    }
    (rows, pivots)
}

/// Compare every conjugation rule with dense matrix conjugation `U P U†` for
/// all single-qudit operators (and all two-qudit operators for `CX`).
/// Returns the largest entrywise deviation. Dense work is `O(d^6)`.
pub fn verify_conjugation_rules(d: Modulus) -> Result<f64> {
    let dd = d.get();
    let mut worst: f64 = 0.0;
    let mut compare = |u: &DMatrix<Complex64>, p: &PauliOperator, image: &PauliOperator| -> Result<()> {
        let expect = u * p.dense_matrix()? * u.adjoint();
        let got = image.dense_matrix()?;
        let diff = (&expect - &got).iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(diff);
        Ok(())
    };
    let h = operator_matrix(1, d, |s| s.apply_h(0, false))?;
    let hinv = operator_matrix(1, d, |s| s.apply_h(0, true))?;
    for x in 0..dd {
        for z in 0..dd {
            let p = PauliOperator::new(d, 0, vec![x], vec![z])?;
            for (u, inverse) in [(&h, false), (&hinv, true)] {
                let mut img = p.clone();
                img.conjugate_h(0, inverse)?;
                compare(u, &p, &img)?;
            }
            for a in 1..dd {
                let zu = operator_matrix(1, d, |s| s.apply_z_pow(0, a))?;
                let mut img = p.clone();
                img.conjugate_z_pow(0, a)?;
                compare(&zu, &p, &img)?;
                let xu = operator_matrix(1, d, |s| s.apply_x_pow(0, a))?;
                let mut img = p.clone();
                img.conjugate_x_pow(0, a)?;
                compare(&xu, &p, &img)?;
            }
        }
    }
    let cx = operator_matrix(2, d, |s| s.apply_cx(0, 1, false))?;
    let cxinv = operator_matrix(2, d, |s| s.apply_cx(0, 1, true))?;
    let xc = operator_matrix(2, d, |s| s.apply_cx(1, 0, false))?;
    for digits in 0..dd.pow(4) {
        let e = |k: u32| (digits / dd.pow(k)) % dd;
        let p = PauliOperator::new(d, 0, vec![e(0), e(1)], vec![e(2), e(3)])?;
        for (u, c, t, inverse) in [(&cx, 0, 1, false), (&cxinv, 0, 1, true), (&xc, 1, 0, false)] {
            let mut img = p.clone();
            img.conjugate_cx(c, t, inverse)?;
            compare(u, &p, &img)?;
        }
    }
    Ok(worst)
}
