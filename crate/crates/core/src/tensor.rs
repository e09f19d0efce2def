//! Dense complex linear algebra for the small Hilbert spaces used here.
//!
//! Every joint state lives on `A_U ⊗ A_anc ⊗ B_U ⊗ B_anc` with that index
//! order, so a joint amplitude vector is also a row-major `d_A × d_B` matrix
//! whose rows are Alice's composite index and whose columns are Bob's.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on any dimension produced by a tensor product.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Eigenvalues below this are an error rather than rounding noise.
pub const NEGATIVE_EIGENVALUE_ERROR: f64 = -1e-6;

/// Hermiticity tolerance, relative to the largest entry (or 1).
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Residual row norm below which Gram-Schmidt treats a row as dependent.
pub const GS_RESIDUAL_TOL: f64 = 1e-12;

/// Norm below which a state cannot be normalized.
pub const MIN_STATE_NORM: f64 = 1e-14;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Serde helper: complex slices as `[[re, im], ...]`.
pub mod pairs {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let p: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        p.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let p = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(p.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

fn all_finite(v: &[C64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    #[serde(with = "pairs")]
    entries: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = ONE;
        }
        m
    }

    /// Row-major construction; rejects wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("matrix dimensions must be positive".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if !all_finite(&entries) {
            return Err(Error::Contract("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.entries[i * self.cols + j] = z;
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, entries: self.entries.iter().map(|z| z * s).collect() }
    }

    /// Matrix product. Panics on mismatched inner dimensions.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.entries[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let orow = &other.entries[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.entries[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product. Panics on length mismatch.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "apply dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |V V† − I|` over entries.
    pub fn unitarity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.matmul(&self.adjoint()).max_abs_diff(&Self::identity(self.rows))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.max_abs_diff(&self.adjoint())
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.entries)
    }
}

/// Kronecker product with the left operand as the slow (outer) index.
pub trait TensorProduct: Sized {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self>;

    fn tensor(&self, other: &Self) -> Result<Self> {
        self.tensor_capped(other, DEFAULT_DIM_CAP)
    }
}

pub fn tensor_product<T: TensorProduct>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

fn capped_product(a: usize, b: usize, cap: usize) -> Result<usize> {
    match a.checked_mul(b) {
        Some(n) if n <= cap => Ok(n),
        _ => Err(Error::Dimension(format!("tensor product dimension {a}x{b} exceeds cap {cap}"))),
    }
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

impl TensorProduct for ComplexMatrix {
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        if !self.is_finite() || !other.is_finite() {
            return Err(Error::Contract("tensor product of non-finite operand".into()));
        }
        let rows = capped_product(self.rows, other.rows, cap)?;
        let cols = capped_product(self.cols, other.cols, cap)?;
        Ok(Self::from_fn(rows, cols, |i, j| {
            self.get(i / other.rows, j / other.cols) * other.get(i % other.rows, j % other.cols)
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Dimensions of `(A_U, A_anc, B_U, B_anc)`, in that index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemLayout {
    pub d_au: usize,
    pub d_aanc: usize,
    pub d_bu: usize,
    pub d_banc: usize,
}

impl SubsystemLayout {
    pub fn new(d_au: usize, d_aanc: usize, d_bu: usize, d_banc: usize) -> Result<Self> {
        if [d_au, d_aanc, d_bu, d_banc].contains(&0) {
            return Err(Error::Layout("subsystem dimensions must be positive".into()));
        }
        let layout = Self { d_au, d_aanc, d_bu, d_banc };
        capped_product(layout.alice_dim(), layout.bob_dim(), DEFAULT_DIM_CAP)?;
        Ok(layout)
    }

    /// Two interacting qubits with equal ancillas of dimension `d_anc` on each side.
    pub fn qubits(d_anc: usize) -> Result<Self> {
        Self::new(2, d_anc, 2, d_anc)
    }

    /// A single factor with no internal structure, all on Alice's side.
    pub fn flat(n: usize) -> Self {
        Self { d_au: n, d_aanc: 1, d_bu: 1, d_banc: 1 }
    }

    pub fn alice_only(d_au: usize, d_aanc: usize) -> Self {
        Self { d_au, d_aanc, d_bu: 1, d_banc: 1 }
    }

    pub fn bob_only(d_bu: usize, d_banc: usize) -> Self {
        Self { d_au: 1, d_aanc: 1, d_bu, d_banc }
    }

    pub fn alice_dim(&self) -> usize {
        self.d_au * self.d_aanc
    }

    pub fn bob_dim(&self) -> usize {
        self.d_bu * self.d_banc
    }

    pub fn total(&self) -> usize {
        self.alice_dim() * self.bob_dim()
    }

    pub fn index(&self, a_u: usize, a_anc: usize, b_u: usize, b_anc: usize) -> usize {
        ((a_u * self.d_aanc + a_anc) * self.d_bu + b_u) * self.d_banc + b_anc
    }

    pub fn components(&self, k: usize) -> (usize, usize, usize, usize) {
        let b_anc = k % self.d_banc;
        let k = k / self.d_banc;
        let b_u = k % self.d_bu;
        let k = k / self.d_bu;
        (k / self.d_aanc, k % self.d_aanc, b_u, b_anc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    layout: SubsystemLayout,
    #[serde(with = "pairs")]
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(layout: SubsystemLayout, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for layout of dimension {}",
                amplitudes.len(),
                layout.total()
            )));
        }
        if !all_finite(&amplitudes) {
            return Err(Error::Contract("state has non-finite amplitudes".into()));
        }
        Ok(Self { layout, amplitudes })
    }

    pub fn basis(layout: SubsystemLayout, k: usize) -> Self {
        let mut amplitudes = vec![ZERO; layout.total()];
        amplitudes[k] = ONE;
        Self { layout, amplitudes }
    }

    pub fn layout(&self) -> SubsystemLayout {
        self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn conj(&self) -> Self {
        Self { layout: self.layout, amplitudes: self.amplitudes.iter().map(|z| z.conj()).collect() }
    }

    /// Applies an operator on the full joint space.
    pub fn transformed(&self, op: &ComplexMatrix) -> Result<Self> {
        if op.rows() != self.len() || op.cols() != self.len() {
            return Err(Error::Dimension("operator does not match state dimension".into()));
        }
        Ok(Self { layout: self.layout, amplitudes: op.apply(&self.amplitudes) })
    }

    /// Relabels the amplitudes with another layout of the same total dimension.
    pub fn with_layout(self, layout: SubsystemLayout) -> Result<Self> {
        Self::new(layout, self.amplitudes)
    }
}

impl TensorProduct for StateVector {
    /// An Alice-only state times a Bob-only state yields the joint layout;
    /// any other pairing yields a flat layout.
    fn tensor_capped(&self, other: &Self, cap: usize) -> Result<Self> {
        let n = capped_product(self.len(), other.len(), cap)?;
        let layout = if self.layout.bob_dim() == 1 && other.layout.alice_dim() == 1 {
            SubsystemLayout {
                d_au: self.layout.d_au,
                d_aanc: self.layout.d_aanc,
                d_bu: other.layout.d_bu,
                d_banc: other.layout.d_banc,
            }
        } else {
            SubsystemLayout::flat(n)
        };
        Ok(Self { layout, amplitudes: kron_vec(&self.amplitudes, &other.amplitudes) })
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn normalize_state(psi: &StateVector) -> Result<StateVector> {
    let n = psi.norm();
    if !(n > MIN_STATE_NORM) {
        return Err(Error::Degenerate(format!("state norm {n:e} too small to normalize")));
    }
    let inv = 1.0 / n;
    Ok(StateVector { layout: psi.layout, amplitudes: psi.amplitudes.iter().map(|z| z * inv).collect() })
}

/// Hermitian matrix, usually a reduced state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    dim: usize,
    #[serde(with = "pairs")]
    entries: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(m: &ComplexMatrix) -> Result<Self> {
        check_hermitian(m)?;
        Ok(Self { dim: m.rows(), entries: m.as_slice().to_vec() })
    }

    pub(crate) fn from_raw(dim: usize, entries: Vec<C64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    /// `|v⟩⟨v|` (not renormalized).
    pub fn pure(v: &[C64]) -> Self {
        let n = v.len();
        let mut entries = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = v[i] * v[j].conj();
            }
        }
        Self { dim: n, entries }
    }

    pub fn diagonal(p: &[f64]) -> Self {
        let m = ComplexMatrix::from_real_diagonal(p);
        Self { dim: p.len(), entries: m.into_vec() }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self::diagonal(&vec![1.0 / n as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix { rows: self.dim, cols: self.dim, entries: self.entries.clone() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i].re).sum()
    }

    /// `W ρ W†`.
    pub fn conjugated(&self, w: &ComplexMatrix) -> Result<Self> {
        if w.rows() != self.dim || w.cols() != self.dim {
            return Err(Error::Dimension("conjugating unitary does not match density matrix".into()));
        }
        let m = w.matmul(&self.to_matrix()).matmul(&w.adjoint());
        let mut rho = Self { dim: self.dim, entries: m.into_vec() };
        rho.symmetrize();
        Ok(rho)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut ws = EigenWorkspace::new(self.dim);
        let mut out = vec![0.0; self.dim];
        ws.eigenvalues(&self.entries, self.dim, &mut out)?;
        Ok(out)
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            self.entries[i * n + i].im = 0.0;
            for j in i + 1..n {
                let z = 0.5 * (self.entries[i * n + j] + self.entries[j * n + i].conj());
                self.entries[i * n + j] = z;
                self.entries[j * n + i] = z.conj();
            }
        }
    }
}

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Contract(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }
    let err = m.hermiticity_error();
    let scale = m.max_abs().max(1.0);
    if err > HERMITIAN_TOL * scale {
        return Err(Error::Contract(format!("matrix is not Hermitian (deviation {err:e})")));
    }
    Ok(())
}

/// Reduced state of a (possibly unnormalized) joint state.
pub fn partial_trace(psi: &StateVector, keep: Party) -> DensityMatrix {
    let l = psi.layout();
    let (da, db) = (l.alice_dim(), l.bob_dim());
    let n = match keep {
        Party::Alice => da,
        Party::Bob => db,
    };
    let mut out = vec![ZERO; n * n];
    match keep {
        Party::Alice => gram_rows(psi.amplitudes(), da, db, 1.0, &mut out),
        Party::Bob => gram_cols(psi.amplitudes(), da, db, 1.0, &mut out),
    }
    DensityMatrix::from_raw(n, out)
}

/// `out += w · M M†` for row-major `M` of shape `rows × cols` (traces out Bob).
pub(crate) fn gram_rows(m: &[C64], rows: usize, cols: usize, w: f64, out: &mut [C64]) {
    for i in 0..rows {
        let ri = &m[i * cols..(i + 1) * cols];
        let mut diag = 0.0;
        for z in ri {
            diag += z.norm_sqr();
        }
        out[i * rows + i].re += w * diag;
        for j in i + 1..rows {
            let rj = &m[j * cols..(j + 1) * cols];
            let mut s = ZERO;
            for (a, b) in ri.iter().zip(rj) {
                s += a * b.conj();
            }
            s *= w;
            out[i * rows + j] += s;
            out[j * rows + i] += s.conj();
        }
    }
}

/// `out += w · Mᵀ M*` for row-major `M` of shape `rows × cols` (traces out Alice).
pub(crate) fn gram_cols(m: &[C64], rows: usize, cols: usize, w: f64, out: &mut [C64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        for i in 0..cols {
            let a = row[i] * w;
            out[i * cols + i].re += a.re * row[i].re + a.im * row[i].im;
            for j in i + 1..cols {
                let s = a * row[j].conj();
                out[i * cols + j] += s;
                out[j * cols + i] += s.conj();
            }
        }
    }
}

/// Reusable buffers for Hermitian eigenvalue computations.
#[derive(Clone, Debug, Default)]
pub struct EigenWorkspace {
    a: Vec<C64>,
    v: Vec<C64>,
    p: Vec<C64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl EigenWorkspace {
    pub fn new(n: usize) -> Self {
        let mut ws = Self::default();
        ws.reserve(n);
        ws
    }

    fn reserve(&mut self, n: usize) {
        if self.diag.len() < n {
            self.a.resize(n * n, ZERO);
            self.v.resize(n, ZERO);
            self.p.resize(n, ZERO);
            self.diag.resize(n, 0.0);
            self.off.resize(n, 0.0);
        }
    }

    /// Eigenvalues of the Hermitian `n × n` row-major matrix `h`, descending.
    ///
    /// Householder reduction to tridiagonal form followed by implicit QL.
    /// Only the lower triangle of `h` is read.
    pub fn eigenvalues(&mut self, h: &[C64], n: usize, out: &mut [f64]) -> Result<()> {
        self.reserve(n);
        let a = &mut self.a[..n * n];
        a.copy_from_slice(&h[..n * n]);
        let (v, p) = (&mut self.v[..n], &mut self.p[..n]);
        let (d, e) = (&mut self.diag[..n], &mut self.off[..n]);
        tridiagonalize(a, n, v, p, e);
        for i in 0..n {
            d[i] = a[i * n + i].re;
        }
        e[n - 1] = 0.0;
        implicit_ql(d, e)?;
        out[..n].copy_from_slice(d);
        out[..n].sort_unstable_by(|x, y| y.total_cmp(x));
        Ok(())
    }
}

/// In-place Householder reduction of a Hermitian matrix (lower triangle
/// authoritative). On return the diagonal of `a` holds the tridiagonal
/// diagonal and `e[k]` the magnitude of the `(k+1, k)` coupling.
fn tridiagonalize(a: &mut [C64], n: usize, v: &mut [C64], p: &mut [C64], e: &mut [f64]) {
    for k in 0..n.saturating_sub(1) {
        let lo = k + 1;
        let mut xnorm2 = 0.0;
        for i in lo..n {
            xnorm2 += a[i * n + k].norm_sqr();
        }
        let xnorm = xnorm2.sqrt();
        if lo + 1 == n || xnorm == 0.0 {
            e[k] = xnorm;
            continue;
        }
        let x0 = a[lo * n + k];
        let x0abs = x0.norm();
        let phase = if x0abs > 0.0 { x0 / x0abs } else { ONE };
        let alpha = -phase * xnorm;

        // v = (x − α e₁)/‖·‖; the leading entry is phase·(|x₀| + ‖x‖), no cancellation.
        for i in lo..n {
            v[i] = a[i * n + k];
        }
        v[lo] -= alpha;
        let vnorm = norm_sqr(&v[lo..n]).sqrt();
        let inv = 1.0 / vnorm;
        for vi in &mut v[lo..n] {
            *vi *= inv;
        }

        // p = A v on the trailing block, using Hermitian symmetry from the lower triangle.
        for i in lo..n {
            let mut s = ZERO;
            for j in lo..=i {
                s += a[i * n + j] * v[j];
            }
            for j in i + 1..n {
                s += a[j * n + i].conj() * v[j];
            }
            p[i] = s;
        }
        let mut c = 0.0;
        for i in lo..n {
            c += (v[i].conj() * p[i]).re;
        }
        // q = p − c v; A ← A − 2(v q† + q v†)
        for i in lo..n {
            p[i] -= c * v[i];
        }
        for i in lo..n {
            for j in lo..=i {
                a[i * n + j] -= 2.0 * (v[i] * p[j].conj() + p[i] * v[j].conj());
            }
        }
        e[k] = xnorm;
    }
}

/// Eigenvalues of a real symmetric tridiagonal matrix by implicit QL with
/// Wilkinson-style shifts. `e[i]` couples `i` and `i + 1`; `e[n-1]` must be 0.
fn implicit_ql(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Contract("tridiagonal QL failed to converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Real eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    let n = m.rows();
    let mut out = vec![0.0; n];
    EigenWorkspace::new(n).eigenvalues(m.as_slice(), n, &mut out)?;
    Ok(out)
}

/// `−Σ λ log₂ λ` with `0 log 0 = 0`.
pub fn entropy_from_eigenvalues(eigs: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for &l in eigs {
        if l < NEGATIVE_EIGENVALUE_ERROR {
            return Err(Error::InvalidState(format!("eigenvalue {l:e} is negative")));
        }
        if l > 0.0 {
            s -= l * l.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_from_eigenvalues(&rho.eigenvalues()?)
}

/// Entropy of entanglement across the Alice|Bob cut, in ebits.
pub fn entanglement_entropy(psi: &StateVector) -> Result<f64> {
    let l = psi.layout();
    let mut scratch = EntropyScratch::default();
    scratch.pure_state_entropy(psi.amplitudes(), l.alice_dim(), l.bob_dim())
}

/// Buffers for entropies of reduced states, reused across objective evaluations.
#[derive(Clone, Debug, Default)]
pub struct EntropyScratch {
    eig: EigenWorkspace,
    gram: Vec<C64>,
    vals: Vec<f64>,
}

impl EntropyScratch {
    /// Entropy of `Tr_A |ψ⟩⟨ψ|` for a normalized `ψ`, computed on the smaller side.
    pub fn pure_state_entropy(&mut self, psi: &[C64], da: usize, db: usize) -> Result<f64> {
        let n = da.min(db);
        self.gram.clear();
        self.gram.resize(n * n, ZERO);
        if da <= db {
            gram_rows(psi, da, db, 1.0, &mut self.gram);
        } else {
            gram_cols(psi, da, db, 1.0, &mut self.gram);
        }
        self.entropy_of_gram(n)
    }

    /// Like [`Self::pure_state_entropy`] but rescales by `1/‖ψ‖²`.
    pub fn unnormalized_state_entropy(&mut self, psi: &[C64], da: usize, db: usize, norm2: f64) -> Result<f64> {
        let n = da.min(db);
        self.gram.clear();
        self.gram.resize(n * n, ZERO);
        let w = 1.0 / norm2;
        if da <= db {
            gram_rows(psi, da, db, w, &mut self.gram);
        } else {
            gram_cols(psi, da, db, w, &mut self.gram);
        }
        self.entropy_of_gram(n)
    }

    fn entropy_of_gram(&mut self, n: usize) -> Result<f64> {
        if n == 1 {
            return Ok(0.0);
        }
        self.vals.resize(n, 0.0);
        self.eig.eigenvalues(&self.gram, n, &mut self.vals)?;
        entropy_from_eigenvalues(&self.vals[..n])
    }

    /// Entropy of an arbitrary Hermitian row-major matrix.
    pub fn hermitian_entropy(&mut self, h: &[C64], n: usize) -> Result<f64> {
        if n == 1 {
            return entropy_from_eigenvalues(&[h[0].re]);
        }
        self.vals.resize(n, 0.0);
        self.eig.eigenvalues(h, n, &mut self.vals)?;
        entropy_from_eigenvalues(&self.vals[..n])
    }
}

/// Result of row Gram-Schmidt.
#[derive(Clone, Debug, PartialEq)]
pub struct Unitarized {
    pub matrix: ComplexMatrix,
    /// Rows that were numerically dependent and replaced by a basis vector.
    pub repaired_rows: Vec<usize>,
}

/// Classical Gram-Schmidt on the rows, in row order, with a second
/// orthogonalization pass. Dependent rows are replaced by the canonical basis
/// vector with the largest component outside the current span.
pub fn gram_schmidt_unitarize(m: &ComplexMatrix) -> Result<Unitarized> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(Error::Contract("matrix has non-finite entries".into()));
    }
    let n = m.rows();
    let mut out = m.clone();
    let mut coeffs = vec![ZERO; n];
    let mut repaired = Vec::new();
    for k in 0..n {
        if !orthonormalize_row(out.as_mut_slice(), n, k, &mut coeffs) {
            repair_row(out.as_mut_slice(), n, k, &mut coeffs);
            repaired.push(k);
        }
    }
    Ok(Unitarized { matrix: out, repaired_rows: repaired })
}

/// Gram-Schmidt in place; `false` if some row was dependent (matrix then unusable).
pub(crate) fn try_orthonormalize_rows(data: &mut [C64], n: usize, coeffs: &mut Vec<C64>) -> bool {
    coeffs.resize(n, ZERO);
    (0..n).all(|k| orthonormalize_row(data, n, k, coeffs))
}

/// Orthogonalizes row `k` against rows `0..k` (assumed orthonormal) and normalizes it.
fn orthonormalize_row(data: &mut [C64], n: usize, k: usize, coeffs: &mut [C64]) -> bool {
    let (done, rest) = data.split_at_mut(k * n);
    let row = &mut rest[..n];
    for _pass in 0..2 {
        // classical: all projections from the same residual
        for j in 0..k {
            let q = &done[j * n..(j + 1) * n];
            coeffs[j] = q.iter().zip(row.iter()).map(|(a, b)| a.conj() * b).sum();
        }
        for j in 0..k {
            let q = &done[j * n..(j + 1) * n];
            let c = coeffs[j];
            for (r, qi) in row.iter_mut().zip(q) {
                *r -= c * qi;
            }
        }
    }
    let norm = norm_sqr(row).sqrt();
    if !(norm >= GS_RESIDUAL_TOL) {
        return false;
    }
    let inv = 1.0 / norm;
    for r in row.iter_mut() {
        *r *= inv;
    }
    true
}

fn repair_row(data: &mut [C64], n: usize, k: usize, coeffs: &mut [C64]) {
    // Residual of e_m against rows 0..k has squared norm 1 − Σ_j |q_j[m]|².
    let mut best = (0, -1.0);
    for m in 0..n {
        let outside = 1.0 - (0..k).map(|j| data[j * n + m].norm_sqr()).sum::<f64>();
        if outside > best.1 + 1e-12 {
            best = (m, outside);
        }
    }
    let row = &mut data[k * n..(k + 1) * n];
    row.fill(ZERO);
    row[best.0] = ONE;
    let ok = orthonormalize_row(data, n, k, coeffs);
    debug_assert!(ok, "canonical basis repair must leave a nonzero residual");
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
    }

    fn bell() -> StateVector {
        let s = FRAC_1_SQRT_2;
        StateVector::new(SubsystemLayout::new(2, 1, 2, 1).unwrap(), vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]).unwrap()
    }

    #[test]
    fn identity_tensor_identity() {
        let i4 = tensor_product(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));
    }

    #[test]
    fn pauli_x_tensor_flips_both() {
        let xx = tensor_product(&sigma_x(), &sigma_x()).unwrap();
        assert_eq!(xx.get(0, 3), ONE);
        let moved = xx.apply(&[ONE, ZERO, ZERO, ZERO]);
        assert_eq!(moved, vec![ZERO, ZERO, ZERO, ONE]);
    }

    #[test]
    fn product_state_expansion() {
        let s = FRAC_1_SQRT_2;
        let plus = StateVector::new(SubsystemLayout::flat(2), vec![c(s, 0.0), c(s, 0.0)]).unwrap();
        let zero = StateVector::basis(SubsystemLayout::flat(2), 0);
        let v = tensor_product(&plus, &zero).unwrap();
        assert_eq!(v.amplitudes(), &[c(s, 0.0), ZERO, c(s, 0.0), ZERO]);
    }

    #[test]
    fn alice_times_bob_gets_joint_layout() {
        let a = StateVector::basis(SubsystemLayout::alice_only(2, 3), 4);
        let b = StateVector::basis(SubsystemLayout::bob_only(2, 3), 1);
        let v = tensor_product(&a, &b).unwrap();
        assert_eq!(v.layout(), SubsystemLayout::qubits(3).unwrap());
        let (a_u, a_anc) = (4 / 3, 4 % 3);
        let (b_u, b_anc) = (0, 1);
        assert_eq!(v.amplitudes()[v.layout().index(a_u, a_anc, b_u, b_anc)], ONE);
    }

    #[test]
    fn tensor_product_respects_cap() {
        let big = ComplexMatrix::identity(100);
        assert!(matches!(big.tensor_capped(&big, 4096), Err(Error::Dimension(_))));
        assert!(big.tensor_capped(&ComplexMatrix::identity(40), 4096).is_ok());
    }

    #[test]
    fn layout_index_is_bijective() {
        let l = SubsystemLayout::new(2, 3, 2, 5).unwrap();
        let mut seen = vec![false; l.total()];
        for a in 0..2 {
            for aa in 0..3 {
                for b in 0..2 {
                    for bb in 0..5 {
                        let k = l.index(a, aa, b, bb);
                        assert!(!seen[k]);
                        seen[k] = true;
                        assert_eq!(l.components(k), (a, aa, b, bb));
                    }
                }
            }
        }
        assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn bell_reduces_to_maximally_mixed() {
        let rho = partial_trace(&bell(), Party::Bob);
        let expect = DensityMatrix::maximally_mixed(2);
        assert!(rho.to_matrix().max_abs_diff(&expect.to_matrix()) < 1e-15);
    }

    #[test]
    fn product_state_reduces_to_pure() {
        let phi = StateVector::new(SubsystemLayout::alice_only(2, 1), vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let chi = StateVector::new(SubsystemLayout::bob_only(2, 1), vec![c(0.0, FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2, 0.0)]).unwrap();
        let psi = tensor_product(&phi, &chi).unwrap();
        let rho = partial_trace(&psi, Party::Bob);
        let expect = DensityMatrix::pure(chi.amplitudes());
        assert!(rho.to_matrix().max_abs_diff(&expect.to_matrix()) < 1e-15);
        let rho_a = partial_trace(&psi, Party::Alice);
        assert!(rho_a.to_matrix().max_abs_diff(&DensityMatrix::pure(phi.amplitudes()).to_matrix()) < 1e-15);
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        let e = hermitian_eigenvalues(&DensityMatrix::maximally_mixed(2).to_matrix()).unwrap();
        assert_eq!(e, vec![0.5, 0.5]);
        let e = hermitian_eigenvalues(&ComplexMatrix::from_real_diagonal(&[0.25, 0.75])).unwrap();
        assert_eq!(e, vec![0.75, 0.25]);
    }

    #[test]
    fn eigenvalues_reject_non_hermitian() {
        let m = ComplexMatrix::from_vec(2, 2, vec![ONE, ONE, ZERO, ONE]).unwrap();
        assert!(matches!(hermitian_eigenvalues(&m), Err(Error::Contract(_))));
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(hermitian_eigenvalues(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn eigenvalues_of_one_by_one_and_zero() {
        assert_eq!(hermitian_eigenvalues(&ComplexMatrix::from_real_diagonal(&[0.3])).unwrap(), vec![0.3]);
        assert_eq!(hermitian_eigenvalues(&ComplexMatrix::zeros(3, 3)).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn entropies() {
        let pure = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]);
        assert!(von_neumann_entropy(&pure).unwrap().abs() < 1e-12);
        assert!((von_neumann_entropy(&DensityMatrix::maximally_mixed(2)).unwrap() - 1.0).abs() < 1e-15);
        // h(1/4)
        let h = -(0.25f64 * 0.25f64.log2() + 0.75 * 0.75f64.log2());
        let s = von_neumann_entropy(&DensityMatrix::diagonal(&[0.25, 0.75])).unwrap();
        assert!((s - h).abs() < 1e-14);
        assert!((s - 0.811278).abs() < 1e-6);
    }

    #[test]
    fn entropy_rejects_negative_spectrum() {
        let rho = DensityMatrix::diagonal(&[1.1, -0.1]);
        assert!(matches!(von_neumann_entropy(&rho), Err(Error::InvalidState(_))));
        // tiny negative rounding is clamped
        let rho = DensityMatrix::diagonal(&[1.0 + 1e-11, -1e-11]);
        assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-9);
    }

    #[test]
    fn entanglement_entropy_examples() {
        let l = SubsystemLayout::new(2, 1, 2, 1).unwrap();
        assert!(entanglement_entropy(&StateVector::basis(l, 2)).unwrap().abs() < 1e-15);
        assert!((entanglement_entropy(&bell()).unwrap() - 1.0).abs() < 1e-14);

        // Bell(A_U, B_U) ⊗ Bell(A_anc, B_anc) in (A_U, A_anc, B_U, B_anc) order.
        let l2 = SubsystemLayout::qubits(2).unwrap();
        let mut amps = vec![ZERO; 16];
        for x in 0..2 {
            for y in 0..2 {
                amps[l2.index(x, y, x, y)] = c(0.5, 0.0);
            }
        }
        let psi = StateVector::new(l2, amps).unwrap();
        assert!((entanglement_entropy(&psi).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gram_schmidt_examples() {
        let u = gram_schmidt_unitarize(&ComplexMatrix::identity(3)).unwrap();
        assert_eq!(u.matrix, ComplexMatrix::identity(3));
        assert!(u.repaired_rows.is_empty());

        let m = ComplexMatrix::from_real_diagonal(&[2.0, 3.0]);
        assert_eq!(gram_schmidt_unitarize(&m).unwrap().matrix, ComplexMatrix::identity(2));
    }

    #[test]
    fn gram_schmidt_rows_stay_in_leading_span() {
        let m = ComplexMatrix::from_vec(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)]).unwrap();
        let v = gram_schmidt_unitarize(&m).unwrap().matrix;
        let s = FRAC_1_SQRT_2;
        assert!((v.get(0, 0) - c(s, 0.0)).norm() < 1e-15);
        assert!((v.get(0, 1) - c(s, 0.0)).norm() < 1e-15);
        assert!(v.is_unitary(1e-14));
    }

    #[test]
    fn gram_schmidt_repairs_dependent_rows() {
        let m = ComplexMatrix::from_vec(3, 3, vec![ONE, ZERO, ZERO, c(2.0, 0.0), ZERO, ZERO, ZERO, ZERO, ONE]).unwrap();
        let u = gram_schmidt_unitarize(&m).unwrap();
        assert_eq!(u.repaired_rows, vec![1]);
        assert!(u.matrix.is_unitary(1e-14));
        assert_eq!(u.matrix.row(1), &[ZERO, ONE, ZERO]);

        let u = gram_schmidt_unitarize(&ComplexMatrix::zeros(3, 3)).unwrap();
        assert_eq!(u.repaired_rows, vec![0, 1, 2]);
        assert_eq!(u.matrix, ComplexMatrix::identity(3));
    }

    #[test]
    fn normalize_examples() {
        let l = SubsystemLayout::flat(4);
        let v = StateVector::new(l, vec![c(2.0, 0.0), ZERO, ZERO, ZERO]).unwrap();
        assert_eq!(normalize_state(&v).unwrap().amplitudes(), StateVector::basis(l, 0).amplitudes());

        let b = bell();
        let n = normalize_state(&b).unwrap();
        for (x, y) in n.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }

        let v = StateVector::new(SubsystemLayout::flat(2), vec![ONE, c(0.0, 1.0)]).unwrap();
        let n = normalize_state(&v).unwrap();
        let s = FRAC_1_SQRT_2;
        assert!((n.amplitudes()[0] - c(s, 0.0)).norm() < 1e-15);
        assert!((n.amplitudes()[1] - c(0.0, s)).norm() < 1e-15);

        let z = StateVector::new(l, vec![c(1e-16, 0.0), ZERO, ZERO, ZERO]).unwrap();
        assert!(matches!(normalize_state(&z), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constructors_validate() {
        assert!(ComplexMatrix::from_vec(2, 2, vec![ONE; 3]).is_err());
        assert!(ComplexMatrix::from_vec(1, 1, vec![c(f64::NAN, 0.0)]).is_err());
        assert!(StateVector::new(SubsystemLayout::flat(2), vec![ONE]).is_err());
        assert!(SubsystemLayout::new(2, 0, 2, 1).is_err());
    }
}
