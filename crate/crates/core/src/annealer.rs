//! Stochastic maximizers.
//!
//! Entanglement capacities use a zero-temperature climb: Gaussian increments,
//! accept only strict improvements, halve the step size after a run of
//! rejections, stop once it falls below a floor. Holevo capacities use
//! finite-temperature annealing with an adaptive tolerance `τ` and one of two
//! step-size schemes.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{CanonicalParams, EmbeddedGate, GateFamily};
use crate::objectives::{
    chi_u_objective, delta_chi_objective, encode_members, entanglement_gain, final_entanglement, EncodedEnsemble,
    FreeEnsemble, ProductInput, Scratch,
};
use crate::tensor::{
    norm_sqr, try_orthonormalize_rows, ComplexMatrix, StateVector, SubsystemLayout, MIN_STATE_NORM, ZERO,
};

/// Consecutive failed proposals after which a run is abandoned.
const MAX_CONSECUTIVE_DEGENERATE: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CapacityKind {
    /// Final entanglement from product inputs.
    #[serde(rename = "E")]
    E,
    /// Entanglement gain over arbitrary pure inputs.
    #[serde(rename = "dE")]
    DeltaE,
    /// Final Holevo information of zero-χ encoded ensembles.
    #[serde(rename = "chi")]
    Chi,
    /// Holevo-information gain over arbitrary ensembles.
    #[serde(rename = "dchi")]
    DeltaChi,
}

impl CapacityKind {
    pub const ALL: [CapacityKind; 4] = [CapacityKind::E, CapacityKind::DeltaE, CapacityKind::Chi, CapacityKind::DeltaChi];

    pub fn label(&self) -> &'static str {
        match self {
            CapacityKind::E => "E",
            CapacityKind::DeltaE => "dE",
            CapacityKind::Chi => "chi",
            CapacityKind::DeltaChi => "dchi",
        }
    }

    pub fn is_holevo(&self) -> bool {
        matches!(self, CapacityKind::Chi | CapacityKind::DeltaChi)
    }

    /// E ↔ chi, dE ↔ dchi.
    pub fn counterpart(&self) -> CapacityKind {
        match self {
            CapacityKind::E => CapacityKind::Chi,
            CapacityKind::Chi => CapacityKind::E,
            CapacityKind::DeltaE => CapacityKind::DeltaChi,
            CapacityKind::DeltaChi => CapacityKind::DeltaE,
        }
    }
}

impl fmt::Display for CapacityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CapacityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" | "e" => Ok(CapacityKind::E),
            "dE" | "de" | "DE" => Ok(CapacityKind::DeltaE),
            "chi" | "CHI" => Ok(CapacityKind::Chi),
            "dchi" | "DCHI" | "dChi" => Ok(CapacityKind::DeltaChi),
            other => Err(Error::Parse(format!("unknown capacity kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaScheme {
    /// Halve σ after `stall_window` proposals without an increase.
    #[serde(rename = "stall")]
    StallHalving,
    /// After warmup, steer σ toward a 20% acceptance rate.
    #[serde(rename = "rate20")]
    AcceptanceRate20,
}

impl fmt::Display for SigmaScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaScheme::StallHalving => "stall",
            SigmaScheme::AcceptanceRate20 => "rate20",
        })
    }
}

impl FromStr for SigmaScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stall" => Ok(SigmaScheme::StallHalving),
            "rate20" => Ok(SigmaScheme::AcceptanceRate20),
            other => Err(Error::Parse(format!("unknown sigma scheme '{other}'"))),
        }
    }
}

/// Which part of Alice's space the χ encoders act on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderScope {
    /// `A_U ⊗ A_anc`.
    #[serde(rename = "full")]
    FullAlice,
    /// `A_U` only, identity on `A_anc`.
    #[serde(rename = "au")]
    InteractingQubit,
}

impl fmt::Display for EncoderScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderScope::FullAlice => "full",
            EncoderScope::InteractingQubit => "au",
        })
    }
}

impl FromStr for EncoderScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EncoderScope::FullAlice),
            "au" => Ok(EncoderScope::InteractingQubit),
            other => Err(Error::Parse(format!("unknown encoder scope '{other}'"))),
        }
    }
}

/// Step-size σ multipliers of the acceptance-rate scheme, applied every
/// `tau_check_every` steps: grow above 25% acceptance, shrink below 15%.
pub const RATE20_GROW: f64 = 1.25;
pub const RATE20_SHRINK: f64 = 0.8;
pub const RATE20_HIGH: f64 = 0.25;
pub const RATE20_LOW: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub sigma0: f64,
    pub sigma_min: f64,
    pub stall_window: u64,
    pub tau0: f64,
    pub tau_check_every: u64,
    pub tau_down: f64,
    pub tau_up: f64,
    pub sigma_scheme: SigmaScheme,
    pub warmup_steps: u64,
    pub max_steps: u64,
    pub restarts: usize,
    pub seed: u64,
    /// Record the current value every this many steps.
    #[serde(default)]
    pub trace_stride: Option<u64>,
}

impl AnnealConfig {
    pub fn entanglement() -> Self {
        Self {
            sigma0: 1.0,
            sigma_min: 1e-9,
            stall_window: 1000,
            tau0: 1e-6,
            tau_check_every: 10_000,
            tau_down: 0.5,
            tau_up: 1.1,
            sigma_scheme: SigmaScheme::StallHalving,
            warmup_steps: 1_000_000,
            max_steps: 2_000_000,
            restarts: 5,
            seed: 0,
            trace_stride: None,
        }
    }

    pub fn holevo() -> Self {
        Self { stall_window: 10_000, ..Self::entanglement() }
    }

    pub fn for_kind(kind: CapacityKind) -> Self {
        if kind.is_holevo() {
            Self::holevo()
        } else {
            Self::entanglement()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("invalid anneal config: {m}")));
        if !(self.sigma_min > 0.0 && self.sigma0 > self.sigma_min) {
            return bad("need sigma0 > sigma_min > 0");
        }
        if !(self.tau0 > 0.0 && self.tau_down > 0.0 && self.tau_down < 1.0 && self.tau_up > 1.0) {
            return bad("need tau0 > 0 and 0 < tau_down < 1 < tau_up");
        }
        if self.stall_window == 0 || self.tau_check_every == 0 {
            return bad("stall_window and tau_check_every must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub kind: CapacityKind,
    pub gate: CanonicalParams,
    pub layout: SubsystemLayout,
    /// Number of ensemble members (Holevo kinds only).
    pub ensemble_size: usize,
    /// Fix all probabilities to `1/n` (χ only).
    pub equal_probs: bool,
    pub encoder_scope: EncoderScope,
}

impl OptProblem {
    pub fn new(kind: CapacityKind, gate: CanonicalParams, d_anc: usize) -> Result<Self> {
        Ok(Self {
            kind,
            gate,
            layout: SubsystemLayout::qubits(d_anc)?,
            ensemble_size: if kind.is_holevo() { 2 } else { 1 },
            equal_probs: false,
            encoder_scope: EncoderScope::FullAlice,
        })
    }

    pub fn for_family(kind: CapacityKind, family: GateFamily, d_anc: usize) -> Result<Self> {
        Self::new(kind, crate::gates::family_params(family), d_anc)
    }

    pub fn with_ensemble_size(mut self, n: usize) -> Self {
        self.ensemble_size = n;
        self
    }

    pub fn with_equal_probs(mut self, equal: bool) -> Self {
        self.equal_probs = equal;
        self
    }

    pub fn with_encoder_scope(mut self, scope: EncoderScope) -> Self {
        self.encoder_scope = scope;
        self
    }

    pub fn d_anc(&self) -> usize {
        self.layout.d_aanc
    }

    pub fn validate(&self) -> Result<()> {
        if self.layout.d_au != 2 || self.layout.d_bu != 2 {
            return Err(Error::UnsupportedDimension("gate acts on two qubits".into()));
        }
        if self.kind.is_holevo() && self.ensemble_size == 0 {
            return Err(Error::Contract("ensemble_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn embedded_gate(&self) -> Result<EmbeddedGate> {
        EmbeddedGate::canonical(self.gate, self.layout)
    }
}

/// The optimizer state that certifies a value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    Product(ProductInput),
    Joint(StateVector),
    Encoded(EncodedEnsemble),
    Free(FreeEnsemble),
}

impl Witness {
    /// Re-evaluates the objective this witness was found for.
    pub fn evaluate(&self, gate: &EmbeddedGate) -> Result<f64> {
        match self {
            Witness::Product(p) => final_entanglement(gate, p),
            Witness::Joint(psi) => entanglement_gain(gate, psi),
            Witness::Encoded(e) => chi_u_objective(gate, e),
            Witness::Free(e) => delta_chi_objective(gate, e),
        }
    }

    pub fn kind(&self) -> CapacityKind {
        match self {
            Witness::Product(_) => CapacityKind::E,
            Witness::Joint(_) => CapacityKind::DeltaE,
            Witness::Encoded(_) => CapacityKind::Chi,
            Witness::Free(_) => CapacityKind::DeltaChi,
        }
    }

    /// Ensemble probabilities, if this is an ensemble witness.
    pub fn probabilities(&self) -> Option<Vec<f64>> {
        match self {
            Witness::Encoded(e) => Some(e.probs.clone()),
            Witness::Free(e) => Some(e.probabilities()),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_value: f64,
    pub witness: Witness,
    /// Steps of the winning restart.
    pub steps_taken: u64,
    /// Steps summed over all restarts.
    pub total_steps: u64,
    pub final_sigma: f64,
    pub final_tau: f64,
    pub accepted_count: u64,
    pub degenerate_resamples: u64,
    pub seed: u64,
    pub best_restart: usize,
    pub restart_values: Vec<f64>,
    pub trace: Option<Vec<TracePoint>>,
}

/// `r e^{iθ}` with `r ~ N(0, σ)` and `θ` uniform on `[0, 2π)`.
pub fn gaussian_complex<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> C64 {
    let r: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
    let theta = TAU * rng.random::<f64>();
    let (s, c) = theta.sin_cos();
    C64::new(r * c, r * s)
}

/// Independent stream for restart `index` under `seed`.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn fill_gaussian<R: Rng>(dst: &mut [C64], sigma: f64, rng: &mut R) {
    for z in dst {
        *z = gaussian_complex(sigma, rng);
    }
}

/// `dst = (src + Δ)/𝒩`; false when the sum is too small to normalize.
fn perturb_normalized<R: Rng>(src: &[C64], sigma: f64, rng: &mut R, dst: &mut [C64]) -> bool {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = s + gaussian_complex(sigma, rng);
    }
    normalize_in_place(dst)
}

fn normalize_in_place(v: &mut [C64]) -> bool {
    let n = norm_sqr(v).sqrt();
    if !(n > MIN_STATE_NORM) {
        return false;
    }
    let inv = 1.0 / n;
    for z in v {
        *z *= inv;
    }
    true
}

fn random_normalized<R: Rng>(n: usize, rng: &mut R) -> Option<Vec<C64>> {
    let mut v = vec![ZERO; n];
    fill_gaussian(&mut v, 1.0, rng);
    normalize_in_place(&mut v).then_some(v)
}

/// A parametrized search space with a scalar objective.
trait SearchSpace: Sync {
    type State: Clone + Send;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<Self::State>;
    /// Writes a perturbation of `cur` into `out`; false if degenerate.
    fn propose(&self, cur: &Self::State, sigma: f64, rng: &mut ChaCha8Rng, out: &mut Self::State) -> bool;
    fn evaluate(&self, s: &Self::State, scratch: &mut Scratch) -> Result<f64>;
    fn witness(&self, s: &Self::State) -> Result<Witness>;
}

struct ProductSpace {
    gate: EmbeddedGate,
}

#[derive(Clone)]
struct ProductState {
    phi: Vec<C64>,
    chi: Vec<C64>,
}

impl SearchSpace for ProductSpace {
    type State = ProductState;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<ProductState> {
        let l = self.gate.layout();
        Some(ProductState { phi: random_normalized(l.alice_dim(), rng)?, chi: random_normalized(l.bob_dim(), rng)? })
    }

    fn propose(&self, cur: &ProductState, sigma: f64, rng: &mut ChaCha8Rng, out: &mut ProductState) -> bool {
        perturb_normalized(&cur.phi, sigma, rng, &mut out.phi) & perturb_normalized(&cur.chi, sigma, rng, &mut out.chi)
    }

    fn evaluate(&self, s: &ProductState, scratch: &mut Scratch) -> Result<f64> {
        scratch.final_entanglement(&self.gate, &s.phi, &s.chi)
    }

    fn witness(&self, s: &ProductState) -> Result<Witness> {
        let l = self.gate.layout();
        Ok(Witness::Product(ProductInput::new(
            StateVector::new(SubsystemLayout::alice_only(l.d_au, l.d_aanc), s.phi.clone())?,
            StateVector::new(SubsystemLayout::bob_only(l.d_bu, l.d_banc), s.chi.clone())?,
        )?))
    }
}

struct JointSpace {
    gate: EmbeddedGate,
}

impl SearchSpace for JointSpace {
    type State = Vec<C64>;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<Vec<C64>> {
        random_normalized(self.gate.layout().total(), rng)
    }

    fn propose(&self, cur: &Vec<C64>, sigma: f64, rng: &mut ChaCha8Rng, out: &mut Vec<C64>) -> bool {
        perturb_normalized(cur, sigma, rng, out)
    }

    fn evaluate(&self, s: &Vec<C64>, scratch: &mut Scratch) -> Result<f64> {
        scratch.entanglement_gain(&self.gate, s)
    }

    fn witness(&self, s: &Vec<C64>) -> Result<Witness> {
        Ok(Witness::Joint(StateVector::new(self.gate.layout(), s.clone())?))
    }
}

struct EncodedSpace {
    gate: EmbeddedGate,
    members: usize,
    equal_probs: bool,
    /// Dimension the encoders act on directly (2 or `d_A`).
    enc_dim: usize,
    /// `d_A / enc_dim`; encoders are tensored with this identity.
    anc_dim: usize,
}

#[derive(Clone)]
struct EncodedState {
    psi: Vec<C64>,
    encoders: Vec<C64>,
    probs: Vec<f64>,
    // derived: full-space encoders and encoded members
    full: Vec<C64>,
    encoded: Vec<C64>,
}

impl EncodedSpace {
    fn new(problem: &OptProblem, gate: EmbeddedGate) -> Self {
        let l = gate.layout();
        let enc_dim = match problem.encoder_scope {
            EncoderScope::FullAlice => l.alice_dim(),
            EncoderScope::InteractingQubit => l.d_au,
        };
        Self { members: problem.ensemble_size, equal_probs: problem.equal_probs, enc_dim, anc_dim: l.alice_dim() / enc_dim, gate }
    }

    fn enc_len(&self) -> usize {
        self.enc_dim * self.enc_dim
    }

    /// Expands encoders to Alice's full space and encodes every member.
    fn refresh(&self, s: &mut EncodedState) {
        let da = self.gate.layout().alice_dim();
        let m = self.enc_len();
        if self.anc_dim == 1 {
            s.full.clear();
            s.full.extend_from_slice(&s.encoders);
        } else {
            s.full.resize(self.members * da * da, ZERO);
            let (e, a) = (self.enc_dim, self.anc_dim);
            for k in 0..self.members {
                let v = &s.encoders[k * m..(k + 1) * m];
                let dst = &mut s.full[k * da * da..(k + 1) * da * da];
                dst.fill(ZERO);
                for i in 0..e {
                    for j in 0..e {
                        for x in 0..a {
                            dst[(i * a + x) * da + j * a + x] = v[i * e + j];
                        }
                    }
                }
            }
        }
        let slices: Vec<&[C64]> = s.full.chunks(da * da).collect();
        encode_members(&slices, &s.psi, self.gate.layout(), &mut s.encoded);
    }
}

impl SearchSpace for EncodedSpace {
    type State = EncodedState;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<EncodedState> {
        let psi = random_normalized(self.gate.layout().total(), rng)?;
        let mut encoders = vec![ZERO; self.members * self.enc_len()];
        fill_gaussian(&mut encoders, 1.0, rng);
        let mut coeffs = Vec::new();
        for v in encoders.chunks_mut(self.enc_len()) {
            if !try_orthonormalize_rows(v, self.enc_dim, &mut coeffs) {
                return None;
            }
        }
        let probs = if self.equal_probs {
            vec![1.0 / self.members as f64; self.members]
        } else {
            let raw: Vec<f64> = (0..self.members).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return None;
            }
            raw.iter().map(|p| p / total).collect()
        };
        let mut s = EncodedState { psi, encoders, probs, full: Vec::new(), encoded: Vec::new() };
        self.refresh(&mut s);
        Some(s)
    }

    fn propose(&self, cur: &EncodedState, sigma: f64, rng: &mut ChaCha8Rng, out: &mut EncodedState) -> bool {
        if !perturb_normalized(&cur.psi, sigma, rng, &mut out.psi) {
            return false;
        }
        for (d, s) in out.encoders.iter_mut().zip(&cur.encoders) {
            *d = s + gaussian_complex(sigma, rng);
        }
        let mut coeffs = Vec::new();
        for v in out.encoders.chunks_mut(self.enc_len()) {
            if !try_orthonormalize_rows(v, self.enc_dim, &mut coeffs) {
                return false;
            }
        }
        if !self.equal_probs {
            // p_k (1 + Δp_k) / Σ_j p_j (1 + Δp_j), Δp uniform on [−σ/2, σ/2]
            let mut total = 0.0;
            for (d, p) in out.probs.iter_mut().zip(&cur.probs) {
                let dp = sigma * (rng.random::<f64>() - 0.5);
                *d = p * (1.0 + dp);
                total += *d;
            }
            if !(total > 0.0) || out.probs.iter().any(|p| *p < 0.0) {
                return false;
            }
            for p in out.probs.iter_mut() {
                *p /= total;
            }
        }
        self.refresh(out);
        true
    }

    fn evaluate(&self, s: &EncodedState, scratch: &mut Scratch) -> Result<f64> {
        scratch.chi_encoded(&self.gate, &s.encoded, &s.probs)
    }

    fn witness(&self, s: &EncodedState) -> Result<Witness> {
        let l = self.gate.layout();
        let da = l.alice_dim();
        let encoders = s
            .full
            .chunks(da * da)
            .map(|v| ComplexMatrix::from_vec(da, da, v.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Witness::Encoded(EncodedEnsemble::new(StateVector::new(l, s.psi.clone())?, encoders, s.probs.clone())?))
    }
}

struct FreeSpace {
    gate: EmbeddedGate,
    members: usize,
}

impl SearchSpace for FreeSpace {
    /// Members laid out contiguously, total squared norm 1.
    type State = Vec<C64>;

    fn random(&self, rng: &mut ChaCha8Rng) -> Option<Vec<C64>> {
        random_normalized(self.members * self.gate.layout().total(), rng)
    }

    fn propose(&self, cur: &Vec<C64>, sigma: f64, rng: &mut ChaCha8Rng, out: &mut Vec<C64>) -> bool {
        perturb_normalized(cur, sigma, rng, out)
    }

    fn evaluate(&self, s: &Vec<C64>, scratch: &mut Scratch) -> Result<f64> {
        scratch.delta_chi(&self.gate, s, self.members)
    }

    fn witness(&self, s: &Vec<C64>) -> Result<Witness> {
        let l = self.gate.layout();
        let states =
            s.chunks(l.total()).map(|m| StateVector::new(l, m.to_vec())).collect::<Result<Vec<_>>>()?;
        Ok(Witness::Free(FreeEnsemble::new(states)?))
    }
}

struct RunOutcome<S> {
    value: f64,
    state: S,
    steps: u64,
    final_sigma: f64,
    final_tau: f64,
    accepted: u64,
    degenerate: u64,
    trace: Option<Vec<TracePoint>>,
}

struct Proposer {
    degenerate: u64,
}

impl Proposer {
    /// Proposes until a candidate evaluates; gives up after too many failures.
    fn next<S: SearchSpace>(
        &mut self,
        space: &S,
        cur: &S::State,
        sigma: f64,
        rng: &mut ChaCha8Rng,
        out: &mut S::State,
        scratch: &mut Scratch,
    ) -> Result<f64> {
        for _ in 0..MAX_CONSECUTIVE_DEGENERATE {
            if space.propose(cur, sigma, rng, out) {
                if let Ok(v) = space.evaluate(out, scratch) {
                    if v.is_finite() {
                        return Ok(v);
                    }
                }
            }
            self.degenerate += 1;
        }
        Err(Error::Optimizer(format!("{MAX_CONSECUTIVE_DEGENERATE} consecutive degenerate proposals")))
    }
}

fn initial<S: SearchSpace>(space: &S, rng: &mut ChaCha8Rng, scratch: &mut Scratch) -> Result<(S::State, f64)> {
    for _ in 0..MAX_CONSECUTIVE_DEGENERATE {
        if let Some(s) = space.random(rng) {
            if let Ok(v) = space.evaluate(&s, scratch) {
                if v.is_finite() {
                    return Ok((s, v));
                }
            }
        }
    }
    Err(Error::Optimizer("could not draw a valid starting point".into()))
}

fn record(trace: &mut Option<Vec<TracePoint>>, stride: Option<u64>, step: u64, value: f64) {
    if let (Some(t), Some(k)) = (trace.as_mut(), stride) {
        if step % k == 0 {
            t.push(TracePoint { step, value });
        }
    }
}

/// Accepts only strict improvements; σ halves after `stall_window` consecutive rejections.
fn zero_temperature_climb<S: SearchSpace>(space: &S, cfg: &AnnealConfig, rng: &mut ChaCha8Rng) -> Result<RunOutcome<S::State>> {
    let mut scratch = Scratch::new();
    let (mut cur, mut value) = initial(space, rng, &mut scratch)?;
    let mut cand = cur.clone();
    let mut proposer = Proposer { degenerate: 0 };
    let mut trace = cfg.trace_stride.map(|_| vec![TracePoint { step: 0, value }]);
    let (mut sigma, mut stall, mut steps, mut accepted) = (cfg.sigma0, 0u64, 0u64, 0u64);
    while sigma >= cfg.sigma_min && steps < cfg.max_steps {
        let v = proposer.next(space, &cur, sigma, rng, &mut cand, &mut scratch)?;
        steps += 1;
        if v > value {
            std::mem::swap(&mut cur, &mut cand);
            value = v;
            accepted += 1;
            stall = 0;
        } else {
            stall += 1;
            if stall >= cfg.stall_window {
                sigma *= 0.5;
                stall = 0;
            }
        }
        record(&mut trace, cfg.trace_stride, steps, value);
    }
    if let Some(t) = trace.as_mut() {
        t.push(TracePoint { step: steps, value });
    }
    Ok(RunOutcome { value, state: cur, steps, final_sigma: sigma, final_tau: 0.0, accepted, degenerate: proposer.degenerate, trace })
}

/// Finite-temperature annealing; returns the best state ever visited.
fn anneal<S: SearchSpace>(space: &S, cfg: &AnnealConfig, rng: &mut ChaCha8Rng) -> Result<RunOutcome<S::State>> {
    let mut scratch = Scratch::new();
    let (mut cur, mut value) = initial(space, rng, &mut scratch)?;
    let mut cand = cur.clone();
    let (mut best, mut best_value) = (cur.clone(), value);
    let mut proposer = Proposer { degenerate: 0 };
    let mut trace = cfg.trace_stride.map(|_| vec![TracePoint { step: 0, value }]);
    let (mut sigma, mut tau) = (cfg.sigma0, cfg.tau0);
    let (mut stall, mut steps, mut accepted, mut window_accepted) = (0u64, 0u64, 0u64, 0u64);
    let mut checkpoint = value;
    while sigma >= cfg.sigma_min && steps < cfg.max_steps {
        let v = proposer.next(space, &cur, sigma, rng, &mut cand, &mut scratch)?;
        steps += 1;
        let delta = v - value;
        let accept = delta > 0.0 || rng.random::<f64>() < (delta / tau).exp();
        if delta > 0.0 {
            stall = 0;
        } else {
            stall += 1;
        }
        if accept {
            std::mem::swap(&mut cur, &mut cand);
            value = v;
            accepted += 1;
            window_accepted += 1;
            if value > best_value {
                best_value = value;
                best.clone_from(&cur);
            }
        }

        let warming_up = steps <= cfg.warmup_steps;
        let stall_scheme = warming_up || cfg.sigma_scheme == SigmaScheme::StallHalving;
        if stall_scheme && stall >= cfg.stall_window {
            sigma *= 0.5;
            stall = 0;
        }
        if steps % cfg.tau_check_every == 0 {
            if value < checkpoint {
                tau *= cfg.tau_down;
            } else if value > checkpoint {
                tau *= cfg.tau_up;
            }
            checkpoint = value;
            if !stall_scheme {
                let rate = window_accepted as f64 / cfg.tau_check_every as f64;
                if rate > RATE20_HIGH {
                    sigma = (sigma * RATE20_GROW).min(cfg.sigma0);
                } else if rate < RATE20_LOW {
                    sigma *= RATE20_SHRINK;
                }
            }
            window_accepted = 0;
        }
        record(&mut trace, cfg.trace_stride, steps, value);
    }
    if let Some(t) = trace.as_mut() {
        t.push(TracePoint { step: steps, value });
    }
    Ok(RunOutcome {
        value: best_value,
        state: best,
        steps,
        final_sigma: sigma,
        final_tau: tau,
        accepted,
        degenerate: proposer.degenerate,
        trace,
    })
}

type Driver<S> = fn(&S, &AnnealConfig, &mut ChaCha8Rng) -> Result<RunOutcome<<S as SearchSpace>::State>>;

/// Runs every restart on its own stream and keeps the best (lowest index on ties).
fn best_of_restarts<S: SearchSpace>(space: &S, cfg: &AnnealConfig, driver: Driver<S>) -> Result<OptResult> {
    cfg.validate()?;
    let runs: Vec<Result<RunOutcome<S::State>>> =
        (0..cfg.restarts).into_par_iter().map(|r| driver(space, cfg, &mut restart_rng(cfg.seed, r))).collect();
    let restart_values: Vec<f64> = runs.iter().map(|r| r.as_ref().map_or(f64::NAN, |o| o.value)).collect();
    let total_steps = runs.iter().filter_map(|r| r.as_ref().ok()).map(|o| o.steps).sum();
    let degenerate = runs.iter().filter_map(|r| r.as_ref().ok()).map(|o| o.degenerate).sum();
    let mut best: Option<(usize, RunOutcome<S::State>)> = None;
    let mut last_err = None;
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(o) => {
                if best.as_ref().map_or(true, |(_, b)| o.value > b.value) {
                    best = Some((i, o));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((best_restart, o)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Optimizer("no restarts ran".into())));
    };
    Ok(OptResult {
        best_value: o.value,
        witness: space.witness(&o.state)?,
        steps_taken: o.steps,
        total_steps,
        final_sigma: o.final_sigma,
        final_tau: o.final_tau,
        accepted_count: o.accepted,
        degenerate_resamples: degenerate,
        seed: cfg.seed,
        best_restart,
        restart_values,
        trace: o.trace,
    })
}

/// `E_U` (product inputs) or `ΔE_U` (arbitrary inputs) by zero-temperature climbing.
pub fn maximize_entanglement(problem: &OptProblem, cfg: &AnnealConfig) -> Result<OptResult> {
    problem.validate()?;
    let gate = problem.embedded_gate()?;
    match problem.kind {
        CapacityKind::E => best_of_restarts(&ProductSpace { gate }, cfg, zero_temperature_climb),
        CapacityKind::DeltaE => best_of_restarts(&JointSpace { gate }, cfg, zero_temperature_climb),
        other => Err(Error::Contract(format!("maximize_entanglement cannot optimize '{other}'"))),
    }
}

/// `χ_U` over shared states, Alice-local encoders and probabilities.
pub fn maximize_chi(problem: &OptProblem, cfg: &AnnealConfig) -> Result<OptResult> {
    problem.validate()?;
    if problem.kind != CapacityKind::Chi {
        return Err(Error::Contract(format!("maximize_chi cannot optimize '{}'", problem.kind)));
    }
    let space = EncodedSpace::new(problem, problem.embedded_gate()?);
    best_of_restarts(&space, cfg, anneal)
}

/// `Δχ_U` over unnormalized member states.
pub fn maximize_delta_chi(problem: &OptProblem, cfg: &AnnealConfig) -> Result<OptResult> {
    problem.validate()?;
    if problem.kind != CapacityKind::DeltaChi {
        return Err(Error::Contract(format!("maximize_delta_chi cannot optimize '{}'", problem.kind)));
    }
    let space = FreeSpace { gate: problem.embedded_gate()?, members: problem.ensemble_size };
    best_of_restarts(&space, cfg, anneal)
}

/// Dispatches on the problem kind.
pub fn optimize(problem: &OptProblem, cfg: &AnnealConfig) -> Result<OptResult> {
    match problem.kind {
        CapacityKind::E | CapacityKind::DeltaE => maximize_entanglement(problem, cfg),
        CapacityKind::Chi => maximize_chi(problem, cfg),
        CapacityKind::DeltaChi => maximize_delta_chi(problem, cfg),
    }
}

/// Probabilities of an ensemble witness after merging members whose Bob
/// states coincide (within `tol`, max entry difference) after the gate,
/// sorted descending. Members with identical reduced states are one signal.
pub fn effective_probabilities(witness: &Witness, gate: &EmbeddedGate, tol: f64) -> Result<Vec<f64>> {
    use crate::tensor::{normalize_state, partial_trace, Party};
    let (states, probs): (Vec<StateVector>, Vec<f64>) = match witness {
        Witness::Encoded(e) => (e.encoded_states(), e.probs.clone()),
        Witness::Free(e) => (e.states.clone(), e.probabilities()),
        _ => return Err(Error::Contract("witness is not an ensemble".into())),
    };
    let rhos = states
        .iter()
        .map(|s| {
            let out = StateVector::new(s.layout(), gate.apply(s.amplitudes()))?;
            Ok(partial_trace(&normalize_state(&out)?, Party::Bob).to_matrix())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut groups: Vec<(ComplexMatrix, f64)> = Vec::new();
    for (rho, p) in rhos.into_iter().zip(probs) {
        match groups.iter_mut().find(|(r, _)| r.max_abs_diff(&rho) <= tol) {
            Some(g) => g.1 += p,
            None => groups.push((rho, p)),
        }
    }
    let mut merged: Vec<f64> = groups.into_iter().map(|(_, p)| p).collect();
    merged.sort_by(|a, b| b.total_cmp(a));
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ONE;
    use crate::gates::FamilyTag;
    use std::f64::consts::FRAC_PI_4;

    fn quick(kind: CapacityKind) -> AnnealConfig {
        AnnealConfig { restarts: 2, max_steps: 200_000, warmup_steps: 50_000, seed: 17, ..AnnealConfig::for_kind(kind) }
    }

    fn problem(kind: CapacityKind, tag: FamilyTag, alpha: f64, d_anc: usize) -> OptProblem {
        OptProblem::for_family(kind, GateFamily::new(tag, alpha), d_anc).unwrap()
    }

    #[test]
    fn gaussian_complex_small_sigma_vanishes() {
        let mut rng = restart_rng(1, 0);
        for _ in 0..100 {
            assert!(gaussian_complex(1e-300, &mut rng).norm() < 1e-290);
        }
    }

    #[test]
    fn gaussian_complex_moments() {
        let mut rng = restart_rng(2, 0);
        let n = 1_000_000;
        let sigma = 0.7;
        let (mut sum, mut bins) = (C64::new(0.0, 0.0), [0u64; 16]);
        for _ in 0..n {
            let z = gaussian_complex(sigma, &mut rng);
            sum += z;
            let phase = z.im.atan2(z.re).rem_euclid(TAU);
            bins[((phase / TAU * 16.0) as usize).min(15)] += 1;
        }
        let mean = sum / n as f64;
        assert!(mean.re.abs() < 5.0 * sigma / 1e3 && mean.im.abs() < 5.0 * sigma / 1e3);
        // χ² with 15 degrees of freedom, 1% critical value 30.58
        let expect = n as f64 / 16.0;
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expect).powi(2) / expect).sum();
        assert!(chi2 < 30.58, "chi2 = {chi2}");
    }

    #[test]
    fn config_validation() {
        assert!(AnnealConfig::holevo().validate().is_ok());
        assert!(AnnealConfig { sigma_min: 2.0, ..AnnealConfig::holevo() }.validate().is_err());
        assert!(AnnealConfig { tau_up: 0.9, ..AnnealConfig::holevo() }.validate().is_err());
        assert!(AnnealConfig { stall_window: 0, ..AnnealConfig::holevo() }.validate().is_err());
        assert!(AnnealConfig { restarts: 0, ..AnnealConfig::holevo() }.validate().is_err());
        assert_eq!(AnnealConfig::entanglement().stall_window, 1000);
        assert_eq!(AnnealConfig::holevo().stall_window, 10_000);
    }

    #[test]
    fn kind_labels_round_trip() {
        for k in CapacityKind::ALL {
            assert_eq!(k.label().parse::<CapacityKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.label()));
        }
        assert!("x".parse::<CapacityKind>().is_err());
    }

    #[test]
    fn identity_has_zero_entanglement_capacity() {
        let r = maximize_entanglement(&problem(CapacityKind::E, FamilyTag::U1, 0.0, 1), &quick(CapacityKind::E)).unwrap();
        assert!(r.best_value.abs() < 1e-9);
    }

    #[test]
    fn cnot_point_reaches_one_ebit() {
        let r = maximize_entanglement(&problem(CapacityKind::E, FamilyTag::U1, FRAC_PI_4, 1), &quick(CapacityKind::E)).unwrap();
        assert!((r.best_value - 1.0).abs() < 1e-6, "{}", r.best_value);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let p = problem(CapacityKind::Chi, FamilyTag::U1, 0.3, 1);
        assert!(maximize_entanglement(&p, &quick(CapacityKind::E)).is_err());
        assert!(maximize_delta_chi(&p, &quick(CapacityKind::E)).is_err());
        let p = problem(CapacityKind::E, FamilyTag::U1, 0.3, 1);
        assert!(maximize_chi(&p, &quick(CapacityKind::E)).is_err());
    }

    #[test]
    fn single_member_ensembles_carry_no_information() {
        let cfg = AnnealConfig { max_steps: 20_000, ..quick(CapacityKind::Chi) };
        let p = problem(CapacityKind::Chi, FamilyTag::U2, 0.5, 1).with_ensemble_size(1);
        assert!(maximize_chi(&p, &cfg).unwrap().best_value.abs() < 1e-10);
        let p = problem(CapacityKind::DeltaChi, FamilyTag::U2, 0.5, 1).with_ensemble_size(1);
        assert!(maximize_delta_chi(&p, &cfg).unwrap().best_value.abs() < 1e-10);
    }

    #[test]
    fn zero_temperature_trace_is_monotone() {
        let cfg = AnnealConfig { trace_stride: Some(1), ..quick(CapacityKind::DeltaE) };
        let r = maximize_entanglement(&problem(CapacityKind::DeltaE, FamilyTag::U2, 0.5, 1), &cfg).unwrap();
        let t = r.trace.unwrap();
        assert!(t.len() > 100);
        assert!(t.windows(2).all(|w| w[1].value >= w[0].value));
    }

    #[test]
    fn witnesses_reevaluate_exactly() {
        for (kind, n) in [(CapacityKind::E, 1), (CapacityKind::DeltaE, 1), (CapacityKind::Chi, 3), (CapacityKind::DeltaChi, 3)] {
            let p = problem(kind, FamilyTag::U3, 0.4, 2).with_ensemble_size(n);
            let cfg = AnnealConfig { max_steps: 30_000, warmup_steps: 10_000, ..quick(kind) };
            let r = optimize(&p, &cfg).unwrap();
            let g = p.embedded_gate().unwrap();
            assert_eq!(r.witness.kind(), kind);
            assert!((r.witness.evaluate(&g).unwrap() - r.best_value).abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn encoded_witness_starts_with_zero_holevo() {
        let p = problem(CapacityKind::Chi, FamilyTag::U2, 0.6, 2).with_ensemble_size(3);
        let cfg = AnnealConfig { max_steps: 20_000, warmup_steps: 10_000, ..quick(CapacityKind::Chi) };
        let r = maximize_chi(&p, &cfg).unwrap();
        let Witness::Encoded(e) = &r.witness else { panic!("expected encoded witness") };
        assert!(crate::objectives::initial_holevo(e).unwrap().abs() < 1e-10);
        assert!((e.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn runs_are_deterministic() {
        let p = problem(CapacityKind::DeltaChi, FamilyTag::U1, 0.5, 1);
        let cfg = AnnealConfig { max_steps: 20_000, warmup_steps: 5_000, ..quick(CapacityKind::DeltaChi) };
        let a = maximize_delta_chi(&p, &cfg).unwrap();
        let b = maximize_delta_chi(&p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn more_restarts_never_lower_the_result() {
        let p = problem(CapacityKind::DeltaE, FamilyTag::U3, 0.3, 1);
        let mut prev = f64::NEG_INFINITY;
        for restarts in 1..=4 {
            let cfg = AnnealConfig { restarts, max_steps: 20_000, ..quick(CapacityKind::DeltaE) };
            let v = maximize_entanglement(&p, &cfg).unwrap().best_value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn rate20_scheme_runs_and_respects_sigma_cap() {
        let p = problem(CapacityKind::Chi, FamilyTag::U1, 0.5, 1);
        let cfg = AnnealConfig {
            sigma_scheme: SigmaScheme::AcceptanceRate20,
            warmup_steps: 10_000,
            max_steps: 60_000,
            ..quick(CapacityKind::Chi)
        };
        let r = maximize_chi(&p, &cfg).unwrap();
        assert!(r.final_sigma <= cfg.sigma0);
        assert!(r.best_value > 0.0);
    }

    #[test]
    fn au_scope_encoders_act_on_interacting_qubit() {
        let p = problem(CapacityKind::Chi, FamilyTag::U2, 0.5, 2).with_encoder_scope(EncoderScope::InteractingQubit);
        let cfg = AnnealConfig { max_steps: 20_000, warmup_steps: 10_000, ..quick(CapacityKind::Chi) };
        let r = maximize_chi(&p, &cfg).unwrap();
        let Witness::Encoded(e) = &r.witness else { panic!() };
        let i2 = ComplexMatrix::identity(2);
        for v in &e.encoders {
            // V = W ⊗ I_anc: block (i,j) is W_ij · I
            for i in 0..2 {
                for j in 0..2 {
                    let w = v.get(2 * i, 2 * j);
                    for x in 0..2 {
                        for y in 0..2 {
                            assert!((v.get(2 * i + x, 2 * j + y) - w * i2.get(x, y)).norm() < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn effective_probabilities_merge_identical_members() {
        let g = problem(CapacityKind::Chi, FamilyTag::U1, FRAC_PI_4, 1).embedded_gate().unwrap();
        let l = g.layout();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = crate::objectives::product_state(l, &[C64::new(s, 0.0), C64::new(s, 0.0)], &[ONE, ZERO]).unwrap();
        let z = crate::gates::pauli(3);
        let id = ComplexMatrix::identity(2);
        let e = EncodedEnsemble::new(psi, vec![id.clone(), z, id], vec![0.3, 0.5, 0.2]).unwrap();
        let merged = effective_probabilities(&Witness::Encoded(e), &g, 1e-9).unwrap();
        assert_eq!(merged.len(), 2);
        assert!((merged[0] - 0.5).abs() < 1e-12 && (merged[1] - 0.5).abs() < 1e-12);
    }
}
