//! End-to-end order finding: stage orchestration, order extraction from the
//! DFT readout, classical factor recovery, and brute-force oracles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::elements::{
    apply_element, build_dft_circuit, build_input_circuit, build_mef_circuit, simulate_path, ElementOutput,
    OpticalElement, SOURCE,
};
use crate::error::{Error, Result};
use crate::interference::{
    classify_readout, render_state, signature, FringeImage, FringeSignature, ReadoutClassification,
    ReferenceLibrary, ScreenGeometry,
};
use crate::lgfield::LgBeamParams;
use crate::modespace::{
    apply_dft, apply_mef, dft_matrix, gcd, make_input_state, mod_pow, project_work, BasisMap, ModeState, OamIndex,
    Polarization, ShorProblem, WorkMap,
};

/// Relative amplitude below which a DFT output label counts as absent.
pub const SUPPORT_TOL: f64 = 1e-9;

/// Least `r ≥ 1` with `a^r ≡ 1 (mod N)`, by direct iteration.
pub fn brute_force_order(a: u64, modulus: u64) -> Result<u64> {
    if modulus < 2 || a == 0 || a >= modulus {
        return Err(Error::Domain(format!("need 0 < a < N, got a = {a}, N = {modulus}")));
    }
    if gcd(a, modulus) != 1 {
        return Err(Error::Domain(format!("a = {a} is not coprime with N = {modulus}")));
    }
    let mut v = a % modulus;
    let mut r = 1;
    while v != 1 {
        v = ((v as u128 * a as u128) % modulus as u128) as u64;
        r += 1;
    }
    Ok(r)
}

/// Order candidate `2^n / gcd(j, 2^n)`; `j = 0` carries no information.
pub fn extract_order(j: u64, n: u32) -> Result<Option<u64>> {
    if n == 0 || n >= 64 {
        return Err(Error::Domain(format!("register width {n} out of range")));
    }
    let dim = 1u64 << n;
    if j >= dim {
        return Err(Error::Domain(format!("j = {j} outside 0..{dim}")));
    }
    Ok(if j == 0 { None } else { Some(dim / gcd(j, dim)) })
}

/// Why no factors were produced from an order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorFailure {
    OddOrder,
    BadBase,
    Trivial,
}

impl fmt::Display for FactorFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorFailure::OddOrder => "odd order: r/2 is not an integer",
            FactorFailure::BadBase => "bad base: a^{r/2} ≡ −1 (mod N)",
            FactorFailure::Trivial => "only trivial factors (1 or N)",
        })
    }
}

fn try_factors(a: u64, r: u64, modulus: u64) -> Result<std::result::Result<(u64, u64), FactorFailure>> {
    if r == 0 || mod_pow(a, r, modulus) != 1 % modulus {
        return Err(Error::Domain(format!("a^r ≢ 1 (mod N) for a = {a}, r = {r}, N = {modulus}")));
    }
    if r % 2 == 1 {
        return Ok(Err(FactorFailure::OddOrder));
    }
    let half = mod_pow(a, r / 2, modulus);
    if half == modulus - 1 {
        return Ok(Err(FactorFailure::BadBase));
    }
    let p = gcd((half + modulus - 1) % modulus, modulus);
    let q = gcd((half + 1) % modulus, modulus);
    let (p, q) = (p.min(q), p.max(q));
    if p <= 1 || q >= modulus || p * q != modulus {
        return Ok(Err(FactorFailure::Trivial));
    }
    Ok(Ok((p, q)))
}

/// `gcd(a^{r/2} ∓ 1, N)`, sorted. `None` for odd `r`, `a^{r/2} ≡ −1`, or
/// trivial factors.
pub fn factors_from_order(a: u64, r: u64, modulus: u64) -> Result<Option<(u64, u64)>> {
    Ok(try_factors(a, r, modulus)?.ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReadout {
    pub j_values: BTreeSet<u64>,
    pub r: Option<u64>,
    pub factors: Option<(u64, u64)>,
    pub failure_reason: Option<String>,
}

impl OrderReadout {
    fn failed(j_values: BTreeSet<u64>, r: Option<u64>, reason: String) -> Self {
        OrderReadout { j_values, r, factors: None, failure_reason: Some(reason) }
    }

    pub fn succeeded(&self) -> bool {
        self.factors.is_some()
    }
}

/// Classical post-processing of an observed DFT support.
pub fn readout_from_support(problem: &ShorProblem, j_values: BTreeSet<u64>) -> Result<OrderReadout> {
    let mut r = 1u64;
    for &j in &j_values {
        if let Some(c) = extract_order(j, problem.bits())? {
            r = r / gcd(r, c) * c;
        }
    }
    if j_values.iter().all(|&j| j == 0) {
        let reason = if j_values.is_empty() {
            "no DFT output was observed".to_string()
        } else {
            "only j = 0 observed, which carries no order information; retry with a different base a".to_string()
        };
        return Ok(OrderReadout::failed(j_values, None, reason));
    }
    let (a, n) = (problem.base(), problem.modulus());
    if mod_pow(a, r, n) != 1 {
        let reason = format!("candidate r = {r} fails a^r ≡ 1 (mod N); retry with a wider register");
        return Ok(OrderReadout::failed(j_values, None, reason));
    }
    Ok(match try_factors(a, r, n)? {
        Ok(f) => OrderReadout { j_values, r: Some(r), factors: Some(f), failure_reason: None },
        Err(why) => OrderReadout::failed(j_values, Some(r), why.to_string()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    /// Mode-space operators.
    Abstract,
    /// Light paths simulated element by element.
    Circuit,
    /// Circuit states read out through rendered interference patterns.
    Physical,
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abstract" => Ok(PipelineMode::Abstract),
            "circuit" => Ok(PipelineMode::Circuit),
            "physical" => Ok(PipelineMode::Physical),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected abstract, circuit or physical)"))),
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineMode::Abstract => "abstract",
            PipelineMode::Circuit => "circuit",
            PipelineMode::Physical => "physical",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub beam: LgBeamParams,
    pub geometry: ScreenGeometry,
}

impl PipelineConfig {
    pub fn new(mode: PipelineMode) -> Self {
        PipelineConfig { mode, beam: LgBeamParams::detection(OamIndex(1)), geometry: ScreenGeometry::default() }
    }
}

/// Term of a register state whose work label is an abstract MEF value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegisterTerm {
    pub control: u64,
    pub work: u64,
    pub amplitude: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageState {
    Modes(ModeState),
    Register(Vec<RegisterTerm>),
}

impl StageState {
    pub fn modes(&self) -> Option<&ModeState> {
        match self {
            StageState::Modes(m) => Some(m),
            StageState::Register(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub state: StageState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signature: Option<FringeSignature>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(skip)]
    pub image: Option<FringeImage>,
}

impl StageRecord {
    fn modes(name: &str, state: ModeState) -> Self {
        StageRecord { name: name.into(), state: StageState::Modes(state), signature: None, image_path: None, image: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub problem: ShorProblem,
    pub mode: PipelineMode,
    /// Initialization, modular exponentiation, projections, DFT.
    pub stages: Vec<StageRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ReadoutClassification>,
    pub readout: OrderReadout,
}

impl PipelineRun {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// JSON report with the oracle verdict attached.
    pub fn report_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Report<'a> {
            #[serde(flatten)]
            run: &'a PipelineRun,
            oracle: OracleReport,
        }
        let mut s = serde_json::to_string_pretty(&Report { run: self, oracle: verify_against_oracle(self) })?;
        s.push('\n');
        Ok(s)
    }
}

pub const STAGE_INPUT: &str = "input";
pub const STAGE_MEF: &str = "post-mef";

pub fn projected_stage(pol: Polarization) -> String {
    format!("projected-{pol}")
}

pub fn dft_stage(pol: Polarization) -> String {
    format!("post-dft-{pol}")
}

fn mode_support(state: &ModeState, basis: &BasisMap) -> Result<BTreeSet<u64>> {
    state
        .support(SUPPORT_TOL)
        .into_iter()
        .map(|(l, _)| basis.value(l).ok_or_else(|| Error::Domain(format!("output mode {l} outside the basis"))))
        .collect()
}

fn abstract_stages(problem: &ShorProblem) -> Result<Vec<StageRecord>> {
    let basis = BasisMap::alternating(problem.bits())?;
    let work = WorkMap::for_problem(problem)?;
    let input = make_input_state(problem, &basis, true)?;
    let post_mef = apply_mef(&input, problem, &basis, &work)?;
    let mut stages = vec![StageRecord::modes(STAGE_INPUT, input), StageRecord::modes(STAGE_MEF, post_mef.clone())];
    for pol in Polarization::BOTH {
        stages.push(StageRecord::modes(&projected_stage(pol), project_work(&post_mef, pol)));
    }
    for pol in Polarization::BOTH {
        stages.push(StageRecord::modes(&dft_stage(pol), apply_dft(&project_work(&post_mef, pol), &basis)?));
    }
    Ok(stages)
}

fn circuit_stages(problem: &ShorProblem) -> Result<Vec<StageRecord>> {
    let basis = BasisMap::compiled();
    let laser = BTreeMap::from([(SOURCE.to_string(), ModeState::ket(0, Polarization::H))]);
    let input = simulate_path(&build_input_circuit(), &laser)?.sink("out")?.clone();
    let post_mef = simulate_path(&build_mef_circuit(problem)?, &laser)?.sink("out")?.clone();
    let ElementOutput::Pair(h, v) = apply_element(&OpticalElement::PolarizingBeamSplitter, &post_mef)? else {
        return Err(Error::Graph("PBS must have two outputs".into()));
    };
    let dft = simulate_path(&build_dft_circuit(&basis)?, &BTreeMap::from([(SOURCE.to_string(), post_mef.clone())]))?;
    Ok(vec![
        StageRecord::modes(STAGE_INPUT, input),
        StageRecord::modes(STAGE_MEF, post_mef),
        StageRecord::modes(&projected_stage(Polarization::H), h),
        StageRecord::modes(&projected_stage(Polarization::V), v),
        StageRecord::modes(&dft_stage(Polarization::H), dft.sink("H")?.clone()),
        StageRecord::modes(&dft_stage(Polarization::V), dft.sink("V")?.clone()),
    ])
}

fn dft_support(stages: &[StageRecord], basis: &BasisMap) -> Result<BTreeSet<u64>> {
    let mut js = BTreeSet::new();
    for pol in Polarization::BOTH {
        let name = dft_stage(pol);
        let st = stages.iter().find(|s| s.name == name).and_then(|s| s.state.modes()).expect("DFT stage recorded");
        js.extend(mode_support(st, basis)?);
    }
    Ok(js)
}

/// The register-level pipeline for a work register holding every distinct
/// value of `a^x mod N`.
fn generalized_run(problem: &ShorProblem) -> Result<PipelineRun> {
    let dim = problem.dim();
    let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let dft = dft_matrix(problem.bits())?;
    let input: Vec<RegisterTerm> = (0..dim as u64).map(|x| RegisterTerm { control: x, work: 1, amplitude: amp }).collect();
    let post_mef: Vec<RegisterTerm> = input.iter().map(|t| RegisterTerm { work: problem.mef(t.control), ..*t }).collect();
    let mut stages = vec![
        StageRecord { name: STAGE_INPUT.into(), state: StageState::Register(input), signature: None, image_path: None, image: None },
        StageRecord { name: STAGE_MEF.into(), state: StageState::Register(post_mef.clone()), signature: None, image_path: None, image: None },
    ];
    let mut j_values = BTreeSet::new();
    for w in problem.distinct_mef_values() {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        for t in post_mef.iter().filter(|t| t.work == w) {
            v[t.control as usize] = t.amplitude;
        }
        let out = dft.apply(&v);
        let peak = out.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let terms: Vec<RegisterTerm> = out
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() > SUPPORT_TOL * peak)
            .map(|(j, a)| RegisterTerm { control: j as u64, work: w, amplitude: *a })
            .collect();
        j_values.extend(terms.iter().map(|t| t.control));
        stages.push(StageRecord {
            name: format!("post-dft-w{w}"),
            state: StageState::Register(terms),
            signature: None,
            image_path: None,
            image: None,
        });
    }
    let readout = readout_from_support(problem, j_values)?;
    Ok(PipelineRun { problem: *problem, mode: PipelineMode::Abstract, stages, classification: None, readout })
}

fn render_stages(stages: &mut [StageRecord], config: &PipelineConfig) -> Result<()> {
    for st in stages.iter_mut() {
        let Some(modes) = st.state.modes() else { continue };
        let (_, img) = render_state(modes, &config.beam, &config.geometry)?;
        st.signature = if img.total() > 0.0 { Some(signature(&img)?) } else { None };
        st.image = Some(img);
    }
    Ok(())
}

/// Runs initialization, modular exponentiation, work-register projection,
/// DFT and classical post-processing.
///
/// Problems whose `a^x mod N` takes more than two values only run in
/// abstract mode, with a register-level work label.
pub fn run_pipeline(problem: &ShorProblem, config: &PipelineConfig) -> Result<PipelineRun> {
    if !problem.is_two_valued() {
        return match config.mode {
            PipelineMode::Abstract => generalized_run(problem),
            _ => Err(Error::Unsupported(format!(
                "a^x mod N takes {} values; the polarization work register holds two (abstract mode only)",
                problem.distinct_mef_values().len()
            ))),
        };
    }
    let basis = BasisMap::alternating(problem.bits())?;
    let mut stages = match config.mode {
        PipelineMode::Abstract => abstract_stages(problem)?,
        PipelineMode::Circuit | PipelineMode::Physical => circuit_stages(problem)?,
    };
    if config.mode != PipelineMode::Physical {
        let readout = readout_from_support(problem, dft_support(&stages, &basis)?)?;
        return Ok(PipelineRun { problem: *problem, mode: config.mode, stages, classification: None, readout });
    }

    render_stages(&mut stages, config)?;
    let library = ReferenceLibrary::post_dft(&basis, &config.beam, &config.geometry)?;
    let image_of = |pol| -> &FringeImage {
        stages.iter().find(|s| s.name == dft_stage(pol)).and_then(|s| s.image.as_ref()).expect("rendered stage")
    };
    let classification = classify_readout(image_of(Polarization::H), image_of(Polarization::V), &library)?;
    let readout = if classification.any_unrecognized() {
        let best = |b: &crate::interference::BranchClassification| b.scores.first().map_or(0.0, |s| s.score);
        OrderReadout::failed(
            classification.j_values(),
            None,
            format!(
                "unrecognized fringe pattern (best correlation H {:.3}, V {:.3})",
                best(&classification.h),
                best(&classification.v)
            ),
        )
    } else {
        readout_from_support(problem, classification.j_values())?
    };
    Ok(PipelineRun { problem: *problem, mode: config.mode, stages, classification: Some(classification), readout })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub passed: bool,
    pub checks: Vec<OracleCheck>,
}

/// Checks a run's order against direct iteration and its factors against N.
pub fn verify_against_oracle(run: &PipelineRun) -> OracleReport {
    let (a, n) = (run.problem.base(), run.problem.modulus());
    let mut checks = Vec::new();
    let oracle = brute_force_order(a, n);
    checks.push(match (run.readout.r, &oracle) {
        (Some(r), Ok(o)) => OracleCheck {
            name: "order".into(),
            passed: r == *o,
            detail: if r == *o { format!("r = {r} matches") } else { format!("r = {r} but the true order is {o}") },
        },
        (None, _) => OracleCheck { name: "order".into(), passed: false, detail: "no order extracted".into() },
        (_, Err(e)) => OracleCheck { name: "order".into(), passed: false, detail: e.to_string() },
    });
    checks.push(match run.readout.factors {
        Some((p, q)) => OracleCheck {
            name: "factors".into(),
            passed: p * q == n && p > 1 && q > 1,
            detail: format!("{p} × {q} = {} (N = {n})", p * q),
        },
        None => OracleCheck { name: "factors".into(), passed: true, detail: "no factors reported".into() },
    });
    OracleReport { passed: checks.iter().all(|c| c.passed), checks }
}
