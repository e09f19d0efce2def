//! The canonical two-qubit gate `exp(−i Σ αₖ σₖ⊗σₖ)`, its CNOT/DCNOT/SWAP
//! one-parameter families, and embedding into the ancilla-extended space.
//!
//! Alice's qubit is the left tensor factor of the 4×4 gate.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ComplexMatrix, SubsystemLayout, TensorProduct, ONE, ZERO};

/// Pauli matrix `σₖ`, `k ∈ {1, 2, 3}`.
pub fn pauli(k: usize) -> ComplexMatrix {
    let i = C64::new(0.0, 1.0);
    let e = match k {
        1 => vec![ZERO, ONE, ONE, ZERO],
        2 => vec![ZERO, -i, i, ZERO],
        3 => vec![ONE, ZERO, ZERO, -ONE],
        _ => panic!("Pauli index must be 1, 2 or 3"),
    };
    ComplexMatrix::from_vec(2, 2, e).expect("2x2")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl CanonicalParams {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Self {
        Self { alpha1, alpha2, alpha3 }
    }

    /// `π/4 ≥ α₁ ≥ α₂ ≥ α₃ ≥ 0`.
    pub fn in_canonical_region(&self) -> bool {
        let eps = 1e-12;
        std::f64::consts::FRAC_PI_4 + eps >= self.alpha1
            && self.alpha1 + eps >= self.alpha2
            && self.alpha2 + eps >= self.alpha3
            && self.alpha3 >= -eps
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha1, self.alpha2, self.alpha3]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    U1,
    U2,
    U3,
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyTag::U1 => "u1",
            FamilyTag::U2 => "u2",
            FamilyTag::U3 => "u3",
        })
    }
}

impl FromStr for FamilyTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u1" | "cnot" => Ok(FamilyTag::U1),
            "u2" | "dcnot" => Ok(FamilyTag::U2),
            "u3" | "swap" => Ok(FamilyTag::U3),
            other => Err(Error::Parse(format!("unknown gate family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateFamily {
    pub tag: FamilyTag,
    pub alpha: f64,
}

impl GateFamily {
    pub fn new(tag: FamilyTag, alpha: f64) -> Self {
        Self { tag, alpha }
    }
}

/// U1 → (α,0,0), U2 → (α,α,0), U3 → (α,α,α).
pub fn family_params(f: GateFamily) -> CanonicalParams {
    let a = f.alpha;
    match f.tag {
        FamilyTag::U1 => CanonicalParams::new(a, 0.0, 0.0),
        FamilyTag::U2 => CanonicalParams::new(a, a, 0.0),
        FamilyTag::U3 => CanonicalParams::new(a, a, a),
    }
}

/// `exp(−i α σ⊗σ) = cos α · I − i sin α · σ⊗σ`, since `(σ⊗σ)² = I`.
fn pair_exponential(k: usize, alpha: f64) -> ComplexMatrix {
    let ss = pauli(k).tensor(&pauli(k)).expect("4x4");
    let (s, c) = alpha.sin_cos();
    ComplexMatrix::from_fn(4, 4, |i, j| {
        let id = if i == j { c } else { 0.0 };
        C64::new(id, 0.0) + C64::new(0.0, -s) * ss.get(i, j)
    })
}

/// The 4×4 canonical gate. The three terms commute, so it is the product of
/// the three closed-form pair exponentials.
pub fn canonical_gate(p: CanonicalParams) -> ComplexMatrix {
    if !p.in_canonical_region() {
        log::warn!("canonical parameters {:?} lie outside π/4 ≥ α₁ ≥ α₂ ≥ α₃ ≥ 0", p.as_array());
    }
    let [a1, a2, a3] = p.as_array();
    pair_exponential(1, a1).matmul(&pair_exponential(2, a2)).matmul(&pair_exponential(3, a3))
}

fn check_qubit_layout(layout: &SubsystemLayout) -> Result<()> {
    if layout.d_au != 2 || layout.d_bu != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "gate acts on qubits but layout has d_AU = {}, d_BU = {}",
            layout.d_au, layout.d_bu
        )));
    }
    Ok(())
}

/// Dense operator acting as `u4` on `(A_U, B_U)` and identity on the ancillas.
pub fn embed_gate(u4: &ComplexMatrix, layout: SubsystemLayout) -> Result<ComplexMatrix> {
    check_qubit_layout(&layout)?;
    if u4.rows() != 4 || u4.cols() != 4 {
        return Err(Error::Dimension("gate must be 4x4".into()));
    }
    let n = layout.total();
    let mut m = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        let (a, aa, b, bb) = layout.components(r);
        for a2 in 0..2 {
            for b2 in 0..2 {
                let c = layout.index(a2, aa, b2, bb);
                m.set(r, c, u4.get(2 * a + b, 2 * a2 + b2));
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Debug)]
enum Action {
    /// 4×4 gate on the interacting qubits, applied index-wise.
    Qubits([C64; 16]),
    /// Arbitrary operator on the whole space.
    Dense,
}

/// A gate bound to a layout: the materialized dense operator plus a fast
/// application path when the operator is a qubit gate tensored with identity.
#[derive(Clone, Debug)]
pub struct EmbeddedGate {
    layout: SubsystemLayout,
    dense: ComplexMatrix,
    action: Action,
}

impl EmbeddedGate {
    pub fn new(u4: &ComplexMatrix, layout: SubsystemLayout) -> Result<Self> {
        let dense = embed_gate(u4, layout)?;
        let mut g = [ZERO; 16];
        g.copy_from_slice(u4.as_slice());
        Ok(Self { layout, dense, action: Action::Qubits(g) })
    }

    pub fn canonical(p: CanonicalParams, layout: SubsystemLayout) -> Result<Self> {
        Self::new(&canonical_gate(p), layout)
    }

    pub fn family(f: GateFamily, layout: SubsystemLayout) -> Result<Self> {
        Self::canonical(family_params(f), layout)
    }

    /// Any operator on the full space of `layout`.
    pub fn from_dense(op: ComplexMatrix, layout: SubsystemLayout) -> Result<Self> {
        if op.rows() != layout.total() || op.cols() != layout.total() {
            return Err(Error::Dimension(format!(
                "{}x{} operator for layout of dimension {}",
                op.rows(),
                op.cols(),
                layout.total()
            )));
        }
        Ok(Self { layout, dense: op, action: Action::Dense })
    }

    pub fn identity(layout: SubsystemLayout) -> Self {
        Self { layout, dense: ComplexMatrix::identity(layout.total()), action: Action::Dense }
    }

    pub fn layout(&self) -> SubsystemLayout {
        self.layout
    }

    pub fn dense(&self) -> &ComplexMatrix {
        &self.dense
    }

    /// Entrywise complex conjugate of the operator.
    pub fn conj(&self) -> Self {
        let action = match &self.action {
            Action::Qubits(g) => Action::Qubits(g.map(|z| z.conj())),
            Action::Dense => Action::Dense,
        };
        Self { layout: self.layout, dense: self.dense.conj(), action }
    }

    /// `out = U psi`.
    pub fn apply_into(&self, psi: &[C64], out: &mut [C64]) {
        let n = self.layout.total();
        debug_assert_eq!(psi.len(), n);
        match &self.action {
            Action::Dense => {
                for (i, o) in out[..n].iter_mut().enumerate() {
                    *o = self.dense.row(i).iter().zip(psi).map(|(a, b)| a * b).sum();
                }
            }
            Action::Qubits(g) => {
                let l = &self.layout;
                for aa in 0..l.d_aanc {
                    for bb in 0..l.d_banc {
                        let idx = [l.index(0, aa, 0, bb), l.index(0, aa, 1, bb), l.index(1, aa, 0, bb), l.index(1, aa, 1, bb)];
                        let x = [psi[idx[0]], psi[idx[1]], psi[idx[2]], psi[idx[3]]];
                        for (r, &k) in idx.iter().enumerate() {
                            out[k] = g[4 * r] * x[0] + g[4 * r + 1] * x[1] + g[4 * r + 2] * x[2] + g[4 * r + 3] * x[3];
                        }
                    }
                }
            }
        }
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; psi.len()];
        self.apply_into(psi, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{entanglement_entropy, gram_schmidt_unitarize, StateVector};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    /// Scaling-and-squaring Taylor exponential, independent of the closed form.
    fn expm(m: &ComplexMatrix) -> ComplexMatrix {
        let s = 8;
        let scaled = m.scale(C64::new(1.0 / f64::from(1u32 << s), 0.0));
        let n = m.rows();
        let mut term = ComplexMatrix::identity(n);
        let mut sum = ComplexMatrix::identity(n);
        for k in 1..30 {
            term = term.matmul(&scaled).scale(C64::new(1.0 / k as f64, 0.0));
            sum = ComplexMatrix::from_fn(n, n, |i, j| sum.get(i, j) + term.get(i, j));
        }
        for _ in 0..s {
            sum = sum.matmul(&sum);
        }
        sum
    }

    fn generator(p: CanonicalParams) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros(4, 4);
        for (k, a) in [(1, p.alpha1), (2, p.alpha2), (3, p.alpha3)] {
            let ss = pauli(k).tensor(&pauli(k)).unwrap();
            h = ComplexMatrix::from_fn(4, 4, |i, j| h.get(i, j) + ss.get(i, j) * C64::new(0.0, -a));
        }
        h
    }

    #[test]
    fn zero_parameters_give_identity() {
        let u = canonical_gate(CanonicalParams::new(0.0, 0.0, 0.0));
        assert!(u.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn cnot_point_matches_closed_form_and_expm() {
        let p = CanonicalParams::new(FRAC_PI_4, 0.0, 0.0);
        let u = canonical_gate(p);
        let xx = pauli(1).tensor(&pauli(1)).unwrap();
        let expect = ComplexMatrix::from_fn(4, 4, |i, j| {
            let id = if i == j { ONE } else { ZERO };
            (id - C64::new(0.0, 1.0) * xx.get(i, j)) * FRAC_1_SQRT_2
        });
        assert!(u.max_abs_diff(&expect) < 1e-15);
        assert!(u.max_abs_diff(&expm(&generator(p))) < 1e-12);
    }

    #[test]
    fn general_parameters_match_expm() {
        let p = CanonicalParams::new(0.7, 0.4, 0.1);
        assert!(canonical_gate(p).max_abs_diff(&expm(&generator(p))) < 1e-12);
        assert!(canonical_gate(p).is_unitary(1e-12));
    }

    #[test]
    fn factor_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let a = rng.random::<f64>() * FRAC_PI_4;
            let u = canonical_gate(CanonicalParams::new(a, a, a));
            let (e1, e2, e3) = (pair_exponential(1, a), pair_exponential(2, a), pair_exponential(3, a));
            for prod in [e3.matmul(&e2).matmul(&e1), e2.matmul(&e1).matmul(&e3), e1.matmul(&e3).matmul(&e2)] {
                assert!(u.max_abs_diff(&prod) < 1e-12);
            }
        }
    }

    #[test]
    fn family_parameter_maps() {
        assert_eq!(family_params(GateFamily::new(FamilyTag::U1, 0.3)), CanonicalParams::new(0.3, 0.0, 0.0));
        assert_eq!(family_params(GateFamily::new(FamilyTag::U2, 0.3)), CanonicalParams::new(0.3, 0.3, 0.0));
        assert_eq!(family_params(GateFamily::new(FamilyTag::U3, 0.3)), CanonicalParams::new(0.3, 0.3, 0.3));
    }

    #[test]
    fn canonical_region() {
        assert!(CanonicalParams::new(FRAC_PI_4, 0.2, 0.1).in_canonical_region());
        assert!(!CanonicalParams::new(0.1, 0.2, 0.0).in_canonical_region());
        assert!(!CanonicalParams::new(1.0, 0.0, 0.0).in_canonical_region());
    }

    #[test]
    fn u1_and_u3_are_symmetric() {
        for tag in [FamilyTag::U1, FamilyTag::U3] {
            for a in [0.1, 0.5, FRAC_PI_4] {
                let u = canonical_gate(family_params(GateFamily::new(tag, a)));
                assert!(u.max_abs_diff(&u.transpose()) < 1e-12);
            }
        }
    }

    #[test]
    fn family_tag_parsing() {
        assert_eq!("U2".parse::<FamilyTag>().unwrap(), FamilyTag::U2);
        assert_eq!("swap".parse::<FamilyTag>().unwrap(), FamilyTag::U3);
        assert!("u4".parse::<FamilyTag>().is_err());
        assert_eq!(FamilyTag::U1.to_string(), "u1");
    }

    #[test]
    fn embedding_identity_and_unitarity() {
        let l = SubsystemLayout::qubits(3).unwrap();
        assert_eq!(embed_gate(&ComplexMatrix::identity(4), l).unwrap(), ComplexMatrix::identity(36));
        let e = embed_gate(&canonical_gate(CanonicalParams::new(0.6, 0.3, 0.2)), l).unwrap();
        assert!(e.is_unitary(1e-12));
    }

    #[test]
    fn embedding_rejects_non_qubit_layouts() {
        let l = SubsystemLayout::new(3, 1, 2, 1).unwrap();
        assert!(matches!(embed_gate(&ComplexMatrix::identity(4), l), Err(Error::UnsupportedDimension(_))));
    }

    #[test]
    fn fast_path_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=4 {
            let l = SubsystemLayout::qubits(d).unwrap();
            let g = EmbeddedGate::canonical(CanonicalParams::new(0.7, 0.3, 0.2), l).unwrap();
            let psi: Vec<C64> = (0..l.total()).map(|_| C64::new(rng.random::<f64>(), rng.random::<f64>())).collect();
            let fast = g.apply(&psi);
            let dense = g.dense().apply(&psi);
            for (x, y) in fast.iter().zip(&dense) {
                assert!((x - y).norm() < 1e-14);
            }
            let gd = EmbeddedGate::from_dense(g.dense().clone(), l).unwrap();
            assert_eq!(gd.apply(&psi), dense);
        }
    }

    #[test]
    fn swap_point_distributes_two_local_bell_pairs() {
        let l = SubsystemLayout::qubits(2).unwrap();
        let g = EmbeddedGate::family(GateFamily::new(FamilyTag::U3, FRAC_PI_4), l).unwrap();
        // Bell(A_U, A_anc) ⊗ Bell(B_U, B_anc): unentangled across A|B.
        let mut amps = vec![ZERO; 16];
        for x in 0..2 {
            for y in 0..2 {
                amps[l.index(x, x, y, y)] = C64::new(0.5, 0.0);
            }
        }
        let psi = StateVector::new(l, amps).unwrap();
        assert!(entanglement_entropy(&psi).unwrap().abs() < 1e-12);
        let out = StateVector::new(l, g.apply(psi.amplitudes())).unwrap();
        assert!((entanglement_entropy(&out).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn embedded_gate_commutes_with_ancilla_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = SubsystemLayout::qubits(2).unwrap();
        let u = embed_gate(&canonical_gate(CanonicalParams::new(0.5, 0.4, 0.3)), l).unwrap();
        for _ in 0..3 {
            let wa = gram_schmidt_unitarize(&random_matrix(2, &mut rng)).unwrap().matrix;
            let wb = gram_schmidt_unitarize(&random_matrix(2, &mut rng)).unwrap().matrix;
            let i2 = ComplexMatrix::identity(2);
            // I_AU ⊗ W_A ⊗ I_BU ⊗ W_B
            let w = i2.tensor(&wa).unwrap().tensor(&i2).unwrap().tensor(&wb).unwrap();
            assert!(u.matmul(&w).max_abs_diff(&w.matmul(&u)) < 1e-12);
        }
    }

    #[test]
    fn embedded_gate_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = SubsystemLayout::qubits(3).unwrap();
        let g = EmbeddedGate::canonical(CanonicalParams::new(0.7, 0.5, 0.1), l).unwrap();
        for _ in 0..10 {
            let psi: Vec<C64> = (0..l.total()).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
            let n0: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            let n1: f64 = g.apply(&psi).iter().map(|z| z.norm_sqr()).sum();
            assert!((n0.sqrt() - n1.sqrt()).abs() < 1e-12);
        }
    }
}
