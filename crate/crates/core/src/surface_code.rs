//! Qudit surface code on an `L × L` lattice: generators, logical operators,
//! independent dit noise and syndromes. There is no decoder.
//!
//! Layout. Qudits live on edges.
//!
//! * Horizontal edges `H(r, c)`, `0 ≤ r < L`, `0 ≤ c < L`, index `rL + c`.
//! * Vertical edges `V(r, c)`, `0 ≤ r < L−1`, `0 ≤ c < L−1`, index
//!   `L² + r(L−1) + c`.
//!
//! Vertex `(r, c)` (`0 ≤ r < L`, `0 ≤ c < L−1`) sits between `H(r, c)` and
//! `H(r, c+1)` and joins `V(r−1, c)` above to `V(r, c)` below. Face `(r, c)`
//! (`0 ≤ r < L−1`, `0 ≤ c < L`) is bounded by `H(r, c)`, `H(r+1, c)`,
//! `V(r, c−1)` and `V(r, c)`. Edges missing at the boundary are dropped, so
//! the left and right sides are rough and the top and bottom smooth.
//!
//! `A_s` carries `X` on up and right, `X^{−1}` on left and down.
//! `B_p` carries `Z` on top and left, `Z^{−1}` on right and bottom.

use rand::Rng;

use crate::arith::Modulus;
use crate::error::{Error, Result};
use crate::tableau::PauliOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    Vertex { row: usize, col: usize },
    Face { row: usize, col: usize },
    LogicalX,
    LogicalZ,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeOperator {
    pub kind: OperatorKind,
    pub op: PauliOperator,
}

#[derive(Clone, Debug)]
pub struct SurfaceCodeLattice {
    l: usize,
    d: Modulus,
    generators: Vec<CodeOperator>,
}

impl SurfaceCodeLattice {
    pub fn new(l: usize, d: Modulus) -> Result<Self> {
        if l < 2 {
            return Err(Error::Domain(format!("lattice side must be at least 2, got {l}")));
        }
        let mut lattice = SurfaceCodeLattice {
            l,
            d,
            generators: Vec::new(),
        };
        lattice.generators = build_generators_for(&lattice);
        Ok(lattice)
    }

    pub fn side(&self) -> usize {
        self.l
    }

    pub fn d(&self) -> Modulus {
        self.d
    }

    pub fn num_qudits(&self) -> usize {
        self.l * self.l + (self.l - 1) * (self.l - 1)
    }

    pub fn h_edge(&self, r: usize, c: usize) -> usize {
        debug_assert!(r < self.l && c < self.l);
        r * self.l + c
    }

    pub fn v_edge(&self, r: usize, c: usize) -> usize {
        debug_assert!(r + 1 < self.l && c + 1 < self.l);
        self.l * self.l + r * (self.l - 1) + c
    }

    pub fn vertices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.l).flat_map(move |r| (0..self.l - 1).map(move |c| (r, c)))
    }

    pub fn faces(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.l - 1).flat_map(move |r| (0..self.l).map(move |c| (r, c)))
    }

    /// `(edge, exponent)` pairs of `A_s` in the order up, left, down, right.
    pub fn vertex_support(&self, r: usize, c: usize) -> Vec<(usize, i64)> {
        let mut s = Vec::with_capacity(4);
        if r > 0 {
            s.push((self.v_edge(r - 1, c), 1));
        }
        s.push((self.h_edge(r, c), -1));
        if r + 1 < self.l {
            s.push((self.v_edge(r, c), -1));
        }
        s.push((self.h_edge(r, c + 1), 1));
        s
    }

    /// `(edge, exponent)` pairs of `B_p` in zigzag order top, left, right,
    /// bottom.
    pub fn face_support(&self, r: usize, c: usize) -> Vec<(usize, i64)> {
        let mut s = Vec::with_capacity(4);
        s.push((self.h_edge(r, c), 1));
        if c > 0 {
            s.push((self.v_edge(r, c - 1), 1));
        }
        if c + 1 < self.l {
            s.push((self.v_edge(r, c), -1));
        }
        s.push((self.h_edge(r + 1, c), -1));
        s
    }

    fn operator(&self, support: &[(usize, i64)], power: u64, x_type: bool) -> PauliOperator {
        let n = self.num_qudits();
        let mut ex = vec![0u64; n];
        for &(e, k) in support {
            ex[e] = self.d.mul(self.d.reduce_signed(k), self.d.reduce(power));
        }
        let (x, z) = if x_type { (ex, vec![0; n]) } else { (vec![0; n], ex) };
        PauliOperator::new(self.d, 0, x, z).expect("lengths match")
    }

    pub fn generators(&self) -> &[CodeOperator] {
        &self.generators
    }

    /// Commutation phase of `error` with every generator: `j` such that
    /// `g E = ω^j E g`.
    pub fn syndrome(&self, error: &PauliOperator) -> Result<Vec<u64>> {
        self.generators.iter().map(|g| g.op.symplectic(error)).collect()
    }
}

fn build_generators_for(lat: &SurfaceCodeLattice) -> Vec<CodeOperator> {
    let mut gens: Vec<CodeOperator> = lat
        .vertices()
        .map(|(row, col)| CodeOperator {
            kind: OperatorKind::Vertex { row, col },
            op: lat.operator(&lat.vertex_support(row, col), 1, true),
        })
        .collect();
    gens.extend(lat.faces().map(|(row, col)| CodeOperator {
        kind: OperatorKind::Face { row, col },
        op: lat.operator(&lat.face_support(row, col), 1, false),
    }));
    gens
}

/// One `A_s` per vertex followed by one `B_p` per face.
pub fn build_generators(l: usize, d: Modulus) -> Result<Vec<CodeOperator>> {
    Ok(SurfaceCodeLattice::new(l, d)?.generators)
}

/// `X̄^j`: `X^j` on the vertical line of horizontal edges `H(·, 1)`.
/// `Z̄^k`: `Z^k` on the horizontal line `H(L−2, ·)`. The two lines meet on
/// the single edge `H(L−2, 1)`.
pub fn build_logicals(lat: &SurfaceCodeLattice, j: u64, k: u64) -> (CodeOperator, CodeOperator) {
    let l = lat.side();
    let xs: Vec<(usize, i64)> = (0..l).map(|r| (lat.h_edge(r, 1), 1)).collect();
    let zs: Vec<(usize, i64)> = (0..l).map(|c| (lat.h_edge(l - 2, c), 1)).collect();
    (
        CodeOperator {
            kind: OperatorKind::LogicalX,
            op: lat.operator(&xs, j, true),
        },
        CodeOperator {
            kind: OperatorKind::LogicalZ,
            op: lat.operator(&zs, k, false),
        },
    )
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommutationReport {
    pub pairs_checked: usize,
    /// `(i, j, symplectic form)` for every non-commuting pair `i < j`.
    pub violations: Vec<(usize, usize, u64)>,
}

impl CommutationReport {
    pub fn all_commute(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_commutation(ops: &[CodeOperator]) -> Result<CommutationReport> {
    let mut report = CommutationReport::default();
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            report.pairs_checked += 1;
            let s = ops[i].op.symplectic(&ops[j].op)?;
            if s != 0 {
                report.violations.push((i, j, s));
            }
        }
    }
    Ok(report)
}

/// Independently on every qudit and for each of `X` and `Z`: with
/// probability `p`, a uniformly chosen nonzero power.
pub fn sample_noise<R: Rng + ?Sized>(
    lat: &SurfaceCodeLattice,
    p: f64,
    rng: &mut R,
) -> Result<PauliOperator> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("error probability {p} outside [0, 1]")));
    }
    let n = lat.num_qudits();
    let d = lat.d().get();
    let mut x = vec![0u64; n];
    let mut z = vec![0u64; n];
    for q in 0..n {
        if rng.random_bool(p) {
            x[q] = rng.random_range(1..d);
        }
        if rng.random_bool(p) {
            z[q] = rng.random_range(1..d);
        }
    }
    PauliOperator::new(lat.d(), 0, x, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(d: u64) -> Modulus {
        Modulus::new(d).unwrap()
    }

    #[test]
    fn l2_fixture() {
        // Edges: H00=0 H01=1 H10=2 H11=3 V00=4. Exponents mod 3 (2 = −1).
        let lat = SurfaceCodeLattice::new(2, m(3)).unwrap();
        assert_eq!(lat.num_qudits(), 5);
        let g = lat.generators();
        assert_eq!(g.len(), 4);
        let xs: Vec<&[u64]> = g[..2].iter().map(|c| c.op.x()).collect();
        let zs: Vec<&[u64]> = g[2..].iter().map(|c| c.op.z()).collect();
        assert_eq!(xs, vec![&[2, 1, 0, 0, 2][..], &[0, 0, 2, 1, 1][..]]);
        assert_eq!(zs, vec![&[1, 0, 2, 0, 2][..], &[0, 1, 0, 2, 1][..]]);
        assert!(g[..2].iter().all(|c| c.op.z().iter().all(|&v| v == 0)));
        assert!(g[2..].iter().all(|c| c.op.x().iter().all(|&v| v == 0)));
        assert_eq!(g[0].kind, OperatorKind::Vertex { row: 0, col: 0 });
        assert_eq!(g[3].kind, OperatorKind::Face { row: 0, col: 1 });
    }

    #[test]
    fn counts_and_exponent_patterns() {
        for l in 2..=5 {
            let lat = SurfaceCodeLattice::new(l, m(5)).unwrap();
            assert_eq!(lat.generators().len(), lat.num_qudits() - 1);
            for (r, c) in lat.vertices() {
                let s = lat.vertex_support(r, c);
                assert!(s.len() <= 4);
                if s.len() == 4 {
                    let ks: Vec<i64> = s.iter().map(|e| e.1).collect();
                    assert_eq!(ks, vec![1, -1, -1, 1]);
                }
            }
            for (r, c) in lat.faces() {
                let s = lat.face_support(r, c);
                if s.len() == 4 {
                    let ks: Vec<i64> = s.iter().map(|e| e.1).collect();
                    assert_eq!(ks, vec![1, 1, -1, -1]);
                }
            }
        }
        assert!(SurfaceCodeLattice::new(1, m(3)).is_err());
    }

    #[test]
    fn generators_and_logicals_commute() {
        for d in [3u64, 5, 7] {
            for l in 2..=5 {
                let lat = SurfaceCodeLattice::new(l, m(d)).unwrap();
                let report = check_commutation(lat.generators()).unwrap();
                assert!(report.all_commute(), "L={l} d={d}: {:?}", report.violations);
                let (xl, zl) = build_logicals(&lat, 1, 1);
                for g in lat.generators() {
                    assert!(g.op.commutes_with(&xl.op).unwrap());
                    assert!(g.op.commutes_with(&zl.op).unwrap());
                }
                assert_eq!(xl.op.symplectic(&zl.op).unwrap(), d - 1);
            }
        }
    }

    #[test]
    fn logical_examples() {
        let lat = SurfaceCodeLattice::new(3, m(3)).unwrap();
        let (x0, z0) = build_logicals(&lat, 0, 0);
        assert!(x0.op.is_identity() && z0.op.is_identity());
        let (x1, z1) = build_logicals(&lat, 1, 1);
        let xz = x1.op.multiply(&z1.op).unwrap();
        let zx = z1.op.multiply(&x1.op).unwrap();
        assert_eq!(xz.x(), zx.x());
        assert_eq!(m(3).sub(xz.phase(), zx.phase()), 2);
        let report = check_commutation(&[x1, z1]).unwrap();
        assert_eq!(report.violations, vec![(0, 1, 2)]);
    }

    #[test]
    fn single_qudit_errors_fire_adjacent_generators() {
        for d in [3u64, 5] {
            for l in 2..=4 {
                let lat = SurfaceCodeLattice::new(l, m(d)).unwrap();
                let n = lat.num_qudits();
                for q in 0..n {
                    for (x_type, a) in [(true, 1u64), (false, d - 1)] {
                        let err = if x_type {
                            PauliOperator::single_x(n, m(d), q, a)
                        } else {
                            PauliOperator::single_z(n, m(d), q, a)
                        };
                        let syn = lat.syndrome(&err).unwrap();
                        for (g, s) in lat.generators().iter().zip(&syn) {
                            let touches = g.op.x()[q] != 0 || g.op.z()[q] != 0;
                            let opposite = match g.kind {
                                OperatorKind::Vertex { .. } => !x_type,
                                OperatorKind::Face { .. } => x_type,
                                _ => unreachable!(),
                            };
                            assert_eq!(*s != 0, touches && opposite, "L={l} q={q} {:?}", g.kind);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn bulk_x_error_fires_two_faces() {
        let lat = SurfaceCodeLattice::new(4, m(3)).unwrap();
        let n = lat.num_qudits();
        let q = lat.h_edge(1, 1);
        let syn = lat.syndrome(&PauliOperator::single_x(n, m(3), q, 1)).unwrap();
        let fired: Vec<OperatorKind> = lat
            .generators()
            .iter()
            .zip(&syn)
            .filter(|(_, s)| **s != 0)
            .map(|(g, _)| g.kind)
            .collect();
        assert_eq!(
            fired,
            vec![OperatorKind::Face { row: 0, col: 1 }, OperatorKind::Face { row: 1, col: 1 }]
        );
    }

    #[test]
    fn stabilizers_have_trivial_syndrome() {
        let lat = SurfaceCodeLattice::new(3, m(5)).unwrap();
        let id = PauliOperator::identity(lat.num_qudits(), m(5));
        assert!(lat.syndrome(&id).unwrap().iter().all(|&s| s == 0));
        for g in lat.generators() {
            assert!(lat.syndrome(&g.op).unwrap().iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn noise_rates() {
        let lat = SurfaceCodeLattice::new(2, m(5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(sample_noise(&lat, 0.0, &mut rng).unwrap().is_identity());
        assert!(sample_noise(&lat, 1.5, &mut rng).is_err());
        let p = 0.2;
        let trials = 100_000;
        let mut hits = 0u64;
        let mut powers = [0u64; 5];
        for _ in 0..trials {
            let e = sample_noise(&lat, p, &mut rng).unwrap();
            let k = e.x()[0];
            if k != 0 {
                hits += 1;
                powers[k as usize] += 1;
            }
        }
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - p).abs() < 4.0 * sigma);
        let q = 0.25;
        let sigma_k = (q * (1.0 - q) / hits as f64).sqrt();
        for &c in &powers[1..] {
            assert!((c as f64 / hits as f64 - q).abs() < 4.0 * sigma_k, "{powers:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn syndrome_is_linear(seed in 0u64..100_000, l in 2usize..5, di in 0usize..2) {
            let d = m([3u64, 5][di]);
            let lat = SurfaceCodeLattice::new(l, d).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e1 = sample_noise(&lat, 0.3, &mut rng).unwrap();
            let e2 = sample_noise(&lat, 0.3, &mut rng).unwrap();
            let s12 = lat.syndrome(&e1.multiply(&e2).unwrap()).unwrap();
            let s1 = lat.syndrome(&e1).unwrap();
            let s2 = lat.syndrome(&e2).unwrap();
            for i in 0..s12.len() {
                prop_assert_eq!(s12[i], d.add(s1[i], s2[i]));
            }
        }
    }
}
