//! Capacity sweeps over α grids, result files and comparison reports.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annealer::{optimize, AnnealConfig, CapacityKind, EncoderScope, OptProblem, SigmaScheme, Witness};
use crate::error::{Error, Result};
use crate::gates::{family_params, EmbeddedGate, FamilyTag, GateFamily};
use crate::tensor::SubsystemLayout;

/// Tolerance for treating two α values as the same grid point.
pub const ALPHA_MATCH_TOL: f64 = 1e-12;
/// Largest allowed gap between a reported value and its witness re-evaluation.
pub const REVERIFY_TOL: f64 = 1e-12;
/// Points in the default grid (steps of π/40 on [0, π/4]).
pub const DEFAULT_GRID: usize = 11;
/// Points in the fine grid (steps of π/400).
pub const FINE_GRID: usize = 101;

pub const CSV_HEADER: &str = "family,alpha,kind,ensemble_size,d_anc,value,restarts,steps,seed,wall_ms";

/// `count` equally spaced points on `[0, max]`, both ends included.
pub fn alpha_grid(count: usize, max: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Optional changes to the per-kind default schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    pub sigma0: Option<f64>,
    pub tau0: Option<f64>,
    pub max_steps: Option<u64>,
    pub warmup_steps: Option<u64>,
    pub scheme: Option<SigmaScheme>,
    pub restarts: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, mut cfg: AnnealConfig) -> AnnealConfig {
        if let Some(v) = self.sigma0 {
            cfg.sigma0 = v;
        }
        if let Some(v) = self.tau0 {
            cfg.tau0 = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.warmup_steps {
            cfg.warmup_steps = v;
        }
        if let Some(v) = self.scheme {
            cfg.sigma_scheme = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        cfg
    }
}

/// One fully resolved optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointTask {
    pub family: GateFamily,
    pub kind: CapacityKind,
    pub ensemble_size: usize,
    pub d_anc: usize,
    pub equal_probs: bool,
    pub encoder_scope: EncoderScope,
    pub config: AnnealConfig,
}

impl PointTask {
    /// Task with the default schedule for `kind`; E kinds use a single member.
    pub fn new(family: GateFamily, kind: CapacityKind, ensemble_size: usize, d_anc: usize, seed: u64) -> Self {
        Self {
            family,
            kind,
            ensemble_size: if kind.is_holevo() { ensemble_size } else { 1 },
            d_anc,
            equal_probs: false,
            encoder_scope: EncoderScope::FullAlice,
            config: AnnealConfig { seed, ..AnnealConfig::for_kind(kind) },
        }
    }

    pub fn problem(&self) -> Result<OptProblem> {
        Ok(OptProblem::for_family(self.kind, self.family, self.d_anc)?
            .with_ensemble_size(self.ensemble_size)
            .with_equal_probs(self.equal_probs)
            .with_encoder_scope(self.encoder_scope))
    }

    fn sort_key(&self) -> (FamilyTag, u64, CapacityKind, usize, usize) {
        (self.family.tag, self.family.alpha.to_bits(), self.kind, self.ensemble_size, self.d_anc)
    }
}

/// Schedule used for a record and how the winning run ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMetadata {
    pub config: AnnealConfig,
    pub equal_probs: bool,
    pub encoder_scope: EncoderScope,
    pub best_restart: usize,
    pub restart_values: Vec<f64>,
    pub steps_best_restart: u64,
    pub accepted_count: u64,
    pub degenerate_resamples: u64,
    pub final_sigma: f64,
    pub final_tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub family: FamilyTag,
    pub alpha: f64,
    pub kind: CapacityKind,
    pub ensemble_size: usize,
    pub d_anc: usize,
    /// Bits or ebits; NaN for failed records.
    #[serde(with = "nan_as_null")]
    pub value: f64,
    pub restarts: usize,
    /// Steps summed over restarts.
    pub steps: u64,
    pub seed: u64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn layout(&self) -> Result<SubsystemLayout> {
        SubsystemLayout::qubits(self.d_anc)
    }

    pub fn gate(&self) -> Result<EmbeddedGate> {
        EmbeddedGate::canonical(family_params(GateFamily::new(self.family, self.alpha)), self.layout()?)
    }

    /// Re-evaluates the embedded witness without re-optimizing.
    pub fn reverify(&self) -> Result<f64> {
        let w = self.witness.as_ref().ok_or_else(|| Error::Contract("record has no witness".into()))?;
        if w.kind() != self.kind {
            return Err(Error::Contract(format!("witness is for '{}', record is '{}'", w.kind(), self.kind)));
        }
        w.evaluate(&self.gate()?)
    }

    fn series(&self) -> Series {
        Series { family: self.family, kind: self.kind, ensemble_size: self.ensemble_size, d_anc: self.d_anc }
    }
}

/// Runs one task and re-verifies its witness. Failures become error records.
pub fn run_point(task: &PointTask) -> ResultRecord {
    let start = Instant::now();
    let mut record = ResultRecord {
        family: task.family.tag,
        alpha: task.family.alpha,
        kind: task.kind,
        ensemble_size: task.ensemble_size,
        d_anc: task.d_anc,
        value: f64::NAN,
        restarts: task.config.restarts,
        steps: 0,
        seed: task.config.seed,
        wall_ms: 0,
        schedule: None,
        witness: None,
        error: None,
    };
    match solve(task) {
        Ok((r, value)) => {
            record.value = value;
            record.steps = r.total_steps;
            record.schedule = Some(ScheduleMetadata {
                config: task.config.clone(),
                equal_probs: task.equal_probs,
                encoder_scope: task.encoder_scope,
                best_restart: r.best_restart,
                restart_values: r.restart_values,
                steps_best_restart: r.steps_taken,
                accepted_count: r.accepted_count,
                degenerate_resamples: r.degenerate_resamples,
                final_sigma: r.final_sigma,
                final_tau: r.final_tau,
            });
            record.witness = Some(r.witness);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.wall_ms = start.elapsed().as_millis() as u64;
    record
}

fn solve(task: &PointTask) -> Result<(crate::annealer::OptResult, f64)> {
    let alpha = task.family.alpha;
    if !(0.0..=FRAC_PI_4).contains(&alpha) {
        warn!("alpha {alpha} lies outside [0, pi/4]");
    }
    let problem = task.problem()?;
    let r = optimize(&problem, &task.config)?;
    let check = r.witness.evaluate(&problem.embedded_gate()?)?;
    if !((check - r.best_value).abs() <= REVERIFY_TOL) {
        return Err(Error::Optimizer(format!(
            "witness re-evaluates to {check}, optimizer reported {}",
            r.best_value
        )));
    }
    if !r.best_value.is_finite() || (matches!(task.kind, CapacityKind::E | CapacityKind::Chi) && r.best_value < -1e-9) {
        return Err(Error::Optimizer(format!("implausible value {}", r.best_value)));
    }
    let value = r.best_value;
    Ok((r, value))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: FamilyTag,
    pub alphas: Vec<f64>,
    pub kinds: Vec<CapacityKind>,
    pub d_ancs: Vec<usize>,
    /// Ensemble sizes for Holevo kinds; E kinds always use 1.
    pub ensemble_sizes: Vec<usize>,
    pub equal_probs: bool,
    pub encoder_scope: EncoderScope,
    pub overrides: ConfigOverrides,
    pub seed: u64,
}

impl SweepSpec {
    /// The default π/40 grid with one kind, `d_anc = 1` and two-member ensembles.
    pub fn new(family: FamilyTag, kinds: Vec<CapacityKind>) -> Self {
        Self {
            family,
            alphas: alpha_grid(DEFAULT_GRID, FRAC_PI_4),
            kinds,
            d_ancs: vec![1],
            ensemble_sizes: vec![2],
            equal_probs: false,
            encoder_scope: EncoderScope::FullAlice,
            overrides: ConfigOverrides::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::Contract("sweep needs at least one capacity kind".into()));
        }
        if self.d_ancs.is_empty() || self.d_ancs.contains(&0) {
            return Err(Error::Contract("d_anc values must be at least 1".into()));
        }
        if self.kinds.iter().any(|k| k.is_holevo()) && (self.ensemble_sizes.is_empty() || self.ensemble_sizes.contains(&0)) {
            return Err(Error::Contract("ensemble sizes must be at least 1".into()));
        }
        for a in &self.alphas {
            if !a.is_finite() {
                return Err(Error::Contract(format!("alpha {a} is not finite")));
            }
            if !(0.0..=FRAC_PI_4 + ALPHA_MATCH_TOL).contains(a) {
                warn!("alpha {a} lies outside [0, pi/4]");
            }
        }
        Ok(())
    }

    /// All tasks in deterministic order, each seeded from its position.
    pub fn tasks(&self) -> Result<Vec<PointTask>> {
        self.validate()?;
        let mut tasks = Vec::new();
        for &alpha in &self.alphas {
            for &kind in &self.kinds {
                let sizes: &[usize] = if kind.is_holevo() { &self.ensemble_sizes } else { &[1] };
                for &n in sizes {
                    for &d in &self.d_ancs {
                        let mut t = PointTask::new(GateFamily::new(self.family, alpha), kind, n, d, 0);
                        t.equal_probs = self.equal_probs;
                        t.encoder_scope = self.encoder_scope;
                        t.config = self.overrides.apply(t.config);
                        tasks.push(t);
                    }
                }
            }
        }
        tasks.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        tasks.dedup_by(|a, b| a.sort_key() == b.sort_key());
        for (i, t) in tasks.iter_mut().enumerate() {
            t.config.seed = task_seed(self.seed, i);
        }
        Ok(tasks)
    }
}

/// Seed of the task at sorted position `index` (splitmix64 finalizer).
pub fn task_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f` on a pool capped by `GATECAP_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("GATECAP_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// One record per grid point and configuration, in task order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRecord>> {
    let tasks = spec.tasks()?;
    Ok(with_thread_cap(|| tasks.par_iter().map(run_point).collect()))
}

/// A curve: every record sharing these fields differs only in α.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Series {
    pub family: FamilyTag,
    pub kind: CapacityKind,
    pub ensemble_size: usize,
    pub d_anc: usize,
}

impl std::fmt::Display for Series {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.kind.is_holevo() {
            write!(f, "{} {}({},{})", self.family, self.kind, self.ensemble_size, self.d_anc)
        } else {
            write!(f, "{} {}({})", self.family, self.kind, self.d_anc)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub alpha: f64,
    pub e: f64,
    pub chi: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub entanglement: Series,
    pub holevo: Series,
    pub rows: Vec<GapRow>,
    pub max_gap: f64,
    pub max_gap_alpha: f64,
    pub min_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationRow {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationTable {
    pub lower: Series,
    pub upper: Series,
    pub rows: Vec<SaturationRow>,
    pub min_delta: f64,
    pub max_delta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub gaps: Vec<GapTable>,
    pub saturation: Vec<SaturationTable>,
}

fn curves(records: &[ResultRecord]) -> BTreeMap<Series, Vec<(f64, f64)>> {
    let mut map: BTreeMap<Series, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.value.is_finite()) {
        map.entry(r.series()).or_default().push((r.alpha, r.value));
    }
    for pts in map.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    map
}

fn shared_points(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64, f64)> {
    a.iter()
        .filter_map(|&(x, va)| b.iter().find(|(y, _)| (x - y).abs() <= ALPHA_MATCH_TOL).map(|&(_, vb)| (x, va, vb)))
        .collect()
}

/// χ − E gaps per grid point and value(d') − value(d) for consecutive ancilla
/// dimensions. Each Holevo curve is paired with the entanglement curve of the
/// same family and ancilla dimension, or the largest ancilla dimension
/// available when there is none.
pub fn compare_report(records: &[ResultRecord]) -> Result<ComparisonReport> {
    let curves = curves(records);
    let mut report = ComparisonReport::default();

    for (hs, hpts) in curves.iter().filter(|(s, _)| s.kind.is_holevo()) {
        let e_kind = hs.kind.counterpart();
        let candidates: Vec<&Series> = curves.keys().filter(|s| s.family == hs.family && s.kind == e_kind).collect();
        let Some(es) = candidates.iter().find(|s| s.d_anc == hs.d_anc).or_else(|| candidates.last()) else {
            continue;
        };
        let rows: Vec<GapRow> = shared_points(&curves[es], hpts)
            .into_iter()
            .map(|(alpha, e, chi)| GapRow { alpha, e, chi, gap: chi - e })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let (mut max_gap, mut max_gap_alpha, mut min_gap) = (f64::NEG_INFINITY, 0.0, f64::INFINITY);
        for r in &rows {
            if r.gap > max_gap {
                max_gap = r.gap;
                max_gap_alpha = r.alpha;
            }
            min_gap = min_gap.min(r.gap);
        }
        report.gaps.push(GapTable { entanglement: **es, holevo: *hs, rows, max_gap, max_gap_alpha, min_gap });
    }

    let keys: Vec<&Series> = curves.keys().collect();
    for w in keys.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if (lo.family, lo.kind, lo.ensemble_size) != (hi.family, hi.kind, hi.ensemble_size) {
            continue;
        }
        let rows: Vec<SaturationRow> = shared_points(&curves[lo], &curves[hi])
            .into_iter()
            .map(|(alpha, lower, upper)| SaturationRow { alpha, lower, upper, delta: upper - lower })
            .collect();
        if rows.is_empty() {
            continue;
        }
        let min_delta = rows.iter().map(|r| r.delta).fold(f64::INFINITY, f64::min);
        let max_delta = rows.iter().map(|r| r.delta).fold(f64::NEG_INFINITY, f64::max);
        report.saturation.push(SaturationTable { lower: *lo, upper: *hi, rows, min_delta, max_delta });
    }

    if report.gaps.is_empty() && report.saturation.is_empty() {
        return Err(Error::NoOverlap(
            "no entanglement/Holevo pair or ancilla pair shares a grid point".into(),
        ));
    }
    Ok(report)
}

impl ComparisonReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for t in &self.gaps {
            let _ = writeln!(s, "# {} vs {}", t.holevo, t.entanglement);
            let _ = writeln!(s, "{:>14} {:>14} {:>14} {:>14}", "alpha", "E", "chi", "chi-E");
            for r in &t.rows {
                let _ = writeln!(s, "{:>14} {:>14} {:>14} {:>14}", fmt_g12(r.alpha), fmt_g12(r.e), fmt_g12(r.chi), fmt_g12(r.gap));
            }
            let _ = writeln!(
                s,
                "max gap {} at alpha {}, min gap {}\n",
                fmt_g12(t.max_gap),
                fmt_g12(t.max_gap_alpha),
                fmt_g12(t.min_gap)
            );
        }
        for t in &self.saturation {
            let _ = writeln!(s, "# {} minus {}", t.upper, t.lower);
            let _ = writeln!(s, "{:>14} {:>14} {:>14} {:>14}", "alpha", "lower", "upper", "delta");
            for r in &t.rows {
                let _ = writeln!(s, "{:>14} {:>14} {:>14} {:>14}", fmt_g12(r.alpha), fmt_g12(r.lower), fmt_g12(r.upper), fmt_g12(r.delta));
            }
            let _ = writeln!(s, "delta range [{}, {}]\n", fmt_g12(t.min_delta), fmt_g12(t.max_delta));
        }
        s
    }
}

/// Formats like C's `%.12g`.
pub fn fmt_g12(v: f64) -> String {
    const P: i32 = 12;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(r: &ResultRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.family,
        fmt_g12(r.alpha),
        r.kind,
        r.ensemble_size,
        r.d_anc,
        fmt_g12(r.value),
        r.restarts,
        r.steps,
        r.seed,
        r.wall_ms
    )
}

pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&csv_row(r));
        s.push('\n');
    }
    s
}

pub fn to_json(records: &[ResultRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)?)
}

/// Parses CSV written by [`to_csv`]. Witnesses and metadata are not part of CSV.
pub fn from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Parse("missing or unexpected CSV header".into())),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 10 {
                return Err(Error::Parse(format!("CSV row {} has {} fields", i + 1, f.len())));
            }
            let num = |k: usize| -> Result<f64> {
                f[k].parse::<f64>().map_err(|_| Error::Parse(format!("CSV row {}: bad number '{}'", i + 1, f[k])))
            };
            let int = |k: usize| -> Result<u64> {
                f[k].parse::<u64>().map_err(|_| Error::Parse(format!("CSV row {}: bad integer '{}'", i + 1, f[k])))
            };
            let value = num(5)?;
            Ok(ResultRecord {
                family: f[0].parse()?,
                alpha: num(1)?,
                kind: f[2].parse()?,
                ensemble_size: int(3)? as usize,
                d_anc: int(4)? as usize,
                value,
                restarts: int(6)? as usize,
                steps: int(7)?,
                seed: int(8)?,
                wall_ms: int(9)?,
                schedule: None,
                witness: None,
                error: (!value.is_finite()).then(|| "failed record".to_string()),
            })
        })
        .collect()
}

pub fn from_json(text: &str) -> Result<Vec<ResultRecord>> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "json")]
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Parse(format!("unknown format '{other}'"))),
        }
    }
}

pub fn render(records: &[ResultRecord], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => Ok(to_csv(records)),
        OutputFormat::Json => to_json(records),
    }
}

/// Writes records to `path`, or to stdout when `path` is `None`.
pub fn emit(records: &[ResultRecord], format: OutputFormat, path: Option<&Path>) -> Result<()> {
    let text = render(records, format)?;
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Reads a CSV or JSON result file, detected from the first non-blank byte.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        from_json(&text)
    } else {
        from_csv(&text)
    }
}

/// One `alpha value` file per series in `dir`; returns the paths written.
pub fn write_gnuplot(records: &[ResultRecord], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (s, pts) in curves(records) {
        let name = if s.kind.is_holevo() {
            format!("{}_{}_n{}_d{}.dat", s.family, s.kind, s.ensemble_size, s.d_anc)
        } else {
            format!("{}_{}_d{}.dat", s.family, s.kind, s.d_anc)
        };
        let mut text = format!("# {s}\n# alpha value\n");
        for (a, v) in pts {
            let _ = writeln!(text, "{} {}", fmt_g12(a), fmt_g12(v));
        }
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(kind: CapacityKind, alpha: f64, n: usize, d: usize, value: f64) -> ResultRecord {
        ResultRecord {
            family: FamilyTag::U1,
            alpha,
            kind,
            ensemble_size: n,
            d_anc: d,
            value,
            restarts: 5,
            steps: 10,
            seed: 3,
            wall_ms: 1,
            schedule: None,
            witness: None,
            error: None,
        }
    }

    #[test]
    fn g12_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (FRAC_PI_4, "0.785398163397"),
            (1.0 / 3.0, "0.333333333333"),
            (123456.0, "123456"),
            (1e-5, "1e-05"),
            (1.5e-7, "1.5e-07"),
            (0.0001, "0.0001"),
            (1e12, "1e+12"),
            (999999999999.0, "999999999999"),
            (-2.25, "-2.25"),
            (0.99999999999999, "1"),
        ];
        for (v, s) in cases {
            assert_eq!(fmt_g12(v), s, "{v}");
        }
        assert_eq!(fmt_g12(f64::NAN), "nan");
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = alpha_grid(11, FRAC_PI_4);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert!((g[10] - FRAC_PI_4).abs() < 1e-15);
        assert!((g[1] - std::f64::consts::PI / 40.0).abs() < 1e-15);
        assert!(alpha_grid(0, 1.0).is_empty());
    }

    #[test]
    fn tasks_are_sorted_deduplicated_and_seeded() {
        let mut spec = SweepSpec::new(FamilyTag::U1, vec![CapacityKind::Chi, CapacityKind::E]);
        spec.alphas = vec![0.5, 0.1];
        spec.ensemble_sizes = vec![2, 3];
        spec.d_ancs = vec![2, 1];
        let tasks = spec.tasks().unwrap();
        // per alpha: E × 2 d_anc + chi × 2 sizes × 2 d_anc
        assert_eq!(tasks.len(), 2 * (2 + 4));
        assert!(tasks.windows(2).all(|w| w[0].sort_key() < w[1].sort_key()));
        assert_eq!(tasks[0].family.alpha, 0.1);
        assert_eq!(tasks[0].kind, CapacityKind::E);
        let seeds: std::collections::HashSet<u64> = tasks.iter().map(|t| t.config.seed).collect();
        assert_eq!(seeds.len(), tasks.len());
        assert_eq!(spec.tasks().unwrap(), tasks);
    }

    #[test]
    fn empty_kind_list_is_rejected() {
        assert!(SweepSpec::new(FamilyTag::U1, vec![]).tasks().is_err());
    }

    #[test]
    fn empty_alpha_list_gives_no_records() {
        let mut spec = SweepSpec::new(FamilyTag::U2, vec![CapacityKind::E]);
        spec.alphas.clear();
        assert!(run_sweep(&spec).unwrap().is_empty());
    }

    #[test]
    fn overrides_apply() {
        let o = ConfigOverrides { sigma0: Some(0.5), max_steps: Some(7), scheme: Some(SigmaScheme::AcceptanceRate20), ..Default::default() };
        let c = o.apply(AnnealConfig::holevo());
        assert_eq!((c.sigma0, c.max_steps, c.sigma_scheme), (0.5, 7, SigmaScheme::AcceptanceRate20));
        assert_eq!(c.tau0, AnnealConfig::holevo().tau0);
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![record(CapacityKind::E, 0.1, 1, 1, 0.25), record(CapacityKind::DeltaChi, 0.2, 4, 2, 1.0 / 3.0)];
        let csv = to_csv(&recs);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert!(csv.contains(",dchi,4,2,0.333333333333,"));
        let back = from_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], recs[0]);
        assert!((back[1].value - recs[1].value).abs() < 1e-12);
        assert!(from_csv("bad header\n").is_err());
    }

    #[test]
    fn failed_records_serialize_value_as_null() {
        let mut r = record(CapacityKind::Chi, 0.1, 2, 1, f64::NAN);
        r.error = Some("boom".into());
        let json = to_json(&[r]).unwrap();
        assert!(json.contains("\"value\": null"));
        let back = from_json(&json).unwrap();
        assert!(back[0].value.is_nan() && !back[0].is_ok());
    }

    #[test]
    fn identical_values_give_zero_gaps() {
        let mut recs = Vec::new();
        for a in [0.0, 0.2, 0.4] {
            recs.push(record(CapacityKind::E, a, 1, 1, a * 2.0));
            recs.push(record(CapacityKind::Chi, a, 2, 1, a * 2.0));
        }
        let rep = compare_report(&recs).unwrap();
        assert_eq!(rep.gaps.len(), 1);
        assert!(rep.gaps[0].rows.iter().all(|r| r.gap == 0.0));
        assert_eq!(rep.gaps[0].max_gap, 0.0);
        assert!(rep.saturation.is_empty());
    }

    #[test]
    fn report_is_permutation_invariant() {
        let mut recs = Vec::new();
        for (i, a) in [0.0, 0.1, 0.3].into_iter().enumerate() {
            recs.push(record(CapacityKind::DeltaE, a, 1, 1, 0.1 * i as f64));
            recs.push(record(CapacityKind::DeltaChi, a, 2, 1, 0.15 * i as f64));
            recs.push(record(CapacityKind::DeltaChi, a, 2, 2, 0.2 * i as f64));
        }
        let a = compare_report(&recs).unwrap();
        recs.reverse();
        recs.swap(0, 4);
        assert_eq!(compare_report(&recs).unwrap(), a);
        assert_eq!(a.saturation.len(), 1);
        assert!((a.saturation[0].max_delta - 0.1).abs() < 1e-12);
        // d_anc 2 Holevo curve falls back to the largest entanglement curve
        assert_eq!(a.gaps.len(), 2);
    }

    #[test]
    fn disjoint_grids_are_an_error() {
        let recs = vec![record(CapacityKind::E, 0.1, 1, 1, 0.2), record(CapacityKind::Chi, 0.2, 2, 1, 0.2)];
        assert!(matches!(compare_report(&recs), Err(Error::NoOverlap(_))));
    }

    #[test]
    fn task_seeds_differ() {
        assert_ne!(task_seed(0, 0), task_seed(0, 1));
        assert_ne!(task_seed(0, 0), task_seed(1, 0));
    }
}
