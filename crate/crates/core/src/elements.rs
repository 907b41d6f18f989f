//! Optical components acting on mode-space states, and a DAG simulator for
//! the modular-exponentiation and DFT light paths.
//!
//! Phase conventions:
//! - A 50/50 beam splitter has two input and two output ports with
//!   `out0 = (in0 + i·in1)/√2` and `out1 = (i·in0 + in1)/√2`. With only
//!   `in0` lit this is `(ψ/√2, iψ/√2)`: transmitted, reflected.
//! - Wave plates are ideal compensators and act as the identity.
//! - Path-length phases are balanced unless an edge carries an explicit
//!   `phase`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modespace::{root_of_unity, BasisMap, ModeState, OamIndex, Polarization, ShorProblem, WorkMap};

/// One optical component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OpticalElement {
    BeamSplitter50,
    PolarizingBeamSplitter,
    SpiralPhasePlate { delta_l: i32 },
    DovePrism,
    PolarizerFlip,
    SlmPhase { target: OamIndex, theta: f64 },
    /// Port 0 carries the labels in `split`, port 1 the rest.
    OamSorter { split: BTreeSet<OamIndex> },
    HalfWavePlate,
    QuarterWavePlate,
    Polarizer { axis: Polarization },
}

/// Output of an element: one beam, or a port-0/port-1 pair.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementOutput {
    Single(ModeState),
    Pair(ModeState, ModeState),
}

impl ElementOutput {
    pub fn ports(self) -> Vec<ModeState> {
        match self {
            ElementOutput::Single(s) => vec![s],
            ElementOutput::Pair(a, b) => vec![a, b],
        }
    }
}

impl OpticalElement {
    pub fn kind(&self) -> &'static str {
        match self {
            OpticalElement::BeamSplitter50 => "BeamSplitter50",
            OpticalElement::PolarizingBeamSplitter => "PolarizingBeamSplitter",
            OpticalElement::SpiralPhasePlate { .. } => "SpiralPhasePlate",
            OpticalElement::DovePrism => "DovePrism",
            OpticalElement::PolarizerFlip => "PolarizerFlip",
            OpticalElement::SlmPhase { .. } => "SlmPhase",
            OpticalElement::OamSorter { .. } => "OamSorter",
            OpticalElement::HalfWavePlate => "HalfWavePlate",
            OpticalElement::QuarterWavePlate => "QuarterWavePlate",
            OpticalElement::Polarizer { .. } => "Polarizer",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OpticalElement::SpiralPhasePlate { delta_l: 0 } => {
                Err(Error::Domain("spiral phase plate needs a nonzero Δl".into()))
            }
            OpticalElement::SlmPhase { theta, .. } if !(*theta > -PI && *theta <= PI) => {
                Err(Error::Domain(format!("SLM phase {theta} outside (−π, π]")))
            }
            _ => Ok(()),
        }
    }

    pub fn input_ports(&self) -> usize {
        match self {
            OpticalElement::BeamSplitter50 => 2,
            _ => 1,
        }
    }

    pub fn output_ports(&self) -> usize {
        match self {
            OpticalElement::BeamSplitter50
            | OpticalElement::PolarizingBeamSplitter
            | OpticalElement::OamSorter { .. } => 2,
            _ => 1,
        }
    }

    /// Single-output elements that preserve the norm.
    pub fn is_lossless(&self) -> bool {
        !matches!(self, OpticalElement::Polarizer { .. }) && self.output_ports() == 1
    }
}

/// 2×2 beam splitter action on both input ports.
pub fn beam_splitter(in0: &ModeState, in1: &ModeState) -> (ModeState, ModeState) {
    let t = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let r = Complex64::new(0.0, FRAC_1_SQRT_2);
    (in0.scaled(t).superpose(&in1.scaled(r)), in0.scaled(r).superpose(&in1.scaled(t)))
}

/// Applies `e` to a beam entering port 0.
pub fn apply_element(e: &OpticalElement, s: &ModeState) -> Result<ElementOutput> {
    e.validate()?;
    Ok(match e {
        OpticalElement::BeamSplitter50 => {
            let (a, b) = beam_splitter(s, &ModeState::new());
            ElementOutput::Pair(a, b)
        }
        OpticalElement::PolarizingBeamSplitter => ElementOutput::Pair(
            s.filter(|(_, p)| p == Polarization::H),
            s.filter(|(_, p)| p == Polarization::V),
        ),
        OpticalElement::SpiralPhasePlate { delta_l } => {
            ElementOutput::Single(s.map_kets(|(l, p)| (l.shifted(*delta_l), p)))
        }
        OpticalElement::DovePrism => ElementOutput::Single(s.map_kets(|(l, p)| (l.inverted(), p))),
        OpticalElement::PolarizerFlip => ElementOutput::Single(s.map_kets(|(l, p)| (l, p.flipped()))),
        OpticalElement::SlmPhase { target, theta } => {
            let phase = Complex64::from_polar(1.0, *theta);
            ElementOutput::Single(ModeState::from_terms(
                s.terms().map(|(k, a)| (k, if k.0 == *target { a * phase } else { a })),
            ))
        }
        OpticalElement::OamSorter { split } => {
            ElementOutput::Pair(s.filter(|(l, _)| split.contains(&l)), s.filter(|(l, _)| !split.contains(&l)))
        }
        OpticalElement::HalfWavePlate | OpticalElement::QuarterWavePlate => ElementOutput::Single(s.clone()),
        OpticalElement::Polarizer { axis } => ElementOutput::Single(s.filter(|(_, p)| p == *axis)),
    })
}

fn apply_single(e: &OpticalElement, s: &ModeState) -> Result<ModeState> {
    match apply_element(e, s)? {
        ElementOutput::Single(out) => Ok(out),
        ElementOutput::Pair(..) => Err(Error::Graph(format!("{} has two outputs", e.kind()))),
    }
}

/// Wraps an angle into `(−π, π]`.
fn wrap_phase(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// One column of a composite transfer operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferColumn {
    pub input: OamIndex,
    pub outputs: Vec<(OamIndex, Complex64)>,
}

/// Sagnac loop realizing the DFT columns of one `|l|` pair.
///
/// The loop's port-level wiring is not fixed by the light-path drawing;
/// what is fixed is the net map. Inside the loop a BS and a Dove prism
/// produce the opposite-OAM copy of the input, SPPs move each copy onto
/// the output labels `|j⟩`, and SLMs imprint `e^{i2πjx/2^n}`. The transfer
/// operator is precomputed from exactly those element actions, with the
/// `2^{−n/2}` fan-out amplitude of a balanced splitter tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SagnacDft {
    pub columns: Vec<TransferColumn>,
}

impl SagnacDft {
    /// Builds the composite for the input labels `l(x)` with `x ∈ values`.
    pub fn for_values(basis: &BasisMap, values: &[u64]) -> Result<Self> {
        let dim = basis.len() as u64;
        let fan_out = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        let mut columns = Vec::new();
        for &x in values {
            let input = basis.label(x).ok_or_else(|| Error::Domain(format!("value {x} outside the basis")))?;
            let mut outputs = Vec::new();
            for &(j, target) in basis.pairs() {
                let mut beam = ModeState::from_terms([((input, Polarization::H), fan_out)]);
                if target.charge().signum() != input.charge().signum() {
                    beam = apply_single(&OpticalElement::DovePrism, &beam)?;
                }
                let current = beam.terms().next().map(|((l, _), _)| l).unwrap_or(input);
                let delta = target.charge() - current.charge();
                if delta != 0 {
                    beam = apply_single(&OpticalElement::SpiralPhasePlate { delta_l: delta }, &beam)?;
                }
                let theta = wrap_phase(2.0 * PI * ((j * x) % dim) as f64 / dim as f64);
                if theta != 0.0 {
                    beam = apply_single(&OpticalElement::SlmPhase { target, theta }, &beam)?;
                    // SLM phases on quarter turns are set exactly.
                    let exact = root_of_unity(j * x, dim) * fan_out;
                    if (beam.amplitude(target.charge(), Polarization::H) - exact).norm() < 1e-15 {
                        beam = ModeState::from_terms([((target, Polarization::H), exact)]);
                    }
                }
                outputs.push((target, beam.amplitude(target.charge(), Polarization::H)));
            }
            columns.push(TransferColumn { input, outputs });
        }
        Ok(SagnacDft { columns })
    }

    pub fn inputs(&self) -> BTreeSet<OamIndex> {
        self.columns.iter().map(|c| c.input).collect()
    }

    /// Polarization passes through untouched.
    pub fn apply(&self, s: &ModeState) -> Result<ModeState> {
        let mut out = ModeState::new();
        for ((l, pol), a) in s.terms() {
            let col = self
                .columns
                .iter()
                .find(|c| c.input == l)
                .ok_or_else(|| Error::Domain(format!("mode {l} does not enter this Sagnac loop")))?;
            for (t, w) in &col.outputs {
                out.add_amplitude((*t, pol), a * w);
            }
        }
        Ok(out)
    }
}

/// Node operation in a circuit graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum NodeOp {
    Source { name: String },
    Element { element: OpticalElement },
    Sagnac { composite: SagnacDft },
    /// Complex sum of the beams on ports 0 and 1.
    Merge,
    Sink { name: String },
}

impl NodeOp {
    fn input_ports(&self) -> usize {
        match self {
            NodeOp::Source { .. } => 0,
            NodeOp::Element { element } => element.input_ports(),
            NodeOp::Merge => 2,
            NodeOp::Sagnac { .. } | NodeOp::Sink { .. } => 1,
        }
    }

    fn output_ports(&self) -> usize {
        match self {
            NodeOp::Sink { .. } => 0,
            NodeOp::Element { element } => element.output_ports(),
            _ => 1,
        }
    }

    /// Ports that may be left unconnected and read as vacuum.
    fn optional_input(&self, port: usize) -> bool {
        match self {
            NodeOp::Merge => true,
            NodeOp::Element { element: OpticalElement::BeamSplitter50 } => port == 1,
            _ => false,
        }
    }
}

/// Directed connection `(from, port) → (to, to_port)` with an optional
/// path-length phase in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub port: usize,
    pub to: usize,
    pub to_port: usize,
    #[serde(default)]
    pub phase: f64,
}

/// A light path as a DAG. Node ids are indices into `nodes`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CircuitPath {
    pub name: String,
    pub description: String,
    pub nodes: Vec<NodeOp>,
    pub edges: Vec<Edge>,
}

/// Power leaving through an output port with no outgoing edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscardedPort {
    pub node: usize,
    pub port: usize,
    pub state: ModeState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub sinks: BTreeMap<String, ModeState>,
    pub discarded: Vec<DiscardedPort>,
}

impl SimulationOutput {
    pub fn sink(&self, name: &str) -> Result<&ModeState> {
        self.sinks.get(name).ok_or_else(|| Error::Graph(format!("no sink named {name:?}")))
    }

    pub fn discarded_power(&self) -> f64 {
        self.discarded.iter().map(|d| d.state.norm_sqr()).sum()
    }
}

impl CircuitPath {
    pub fn new(name: &str, description: &str) -> Self {
        CircuitPath { name: name.into(), description: description.into(), ..Default::default() }
    }

    pub fn add(&mut self, op: NodeOp) -> usize {
        self.nodes.push(op);
        self.nodes.len() - 1
    }

    pub fn add_element(&mut self, element: OpticalElement) -> usize {
        self.add(NodeOp::Element { element })
    }

    pub fn connect(&mut self, from: usize, port: usize, to: usize, to_port: usize) {
        self.connect_with_phase(from, port, to, to_port, 0.0);
    }

    pub fn connect_with_phase(&mut self, from: usize, port: usize, to: usize, to_port: usize, phase: f64) {
        self.edges.push(Edge { from, port, to, to_port, phase });
    }

    /// Count of each element kind; Sagnac composites count as `"Sagnac"`.
    pub fn census(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for n in &self.nodes {
            let key = match n {
                NodeOp::Element { element } => element.kind(),
                NodeOp::Sagnac { .. } => "Sagnac",
                _ => continue,
            };
            *out.entry(key.to_string()).or_insert(0) += 1;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: CircuitPath = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Port ranges, single occupancy of every port, element parameters.
    pub fn validate(&self) -> Result<()> {
        let mut used_in = BTreeSet::new();
        let mut used_out = BTreeSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let (from, to) = match (self.nodes.get(e.from), self.nodes.get(e.to)) {
                (Some(f), Some(t)) => (f, t),
                _ => return Err(Error::Graph(format!("edge {i} references a missing node"))),
            };
            if e.port >= from.output_ports() || e.to_port >= to.input_ports() {
                return Err(Error::Graph(format!("edge {i} uses a port the node does not have")));
            }
            if !e.phase.is_finite() {
                return Err(Error::Graph(format!("edge {i} has a non-finite phase")));
            }
            if !used_out.insert((e.from, e.port)) || !used_in.insert((e.to, e.to_port)) {
                return Err(Error::Graph(format!("edge {i} reuses an occupied port")));
            }
        }
        let mut names = BTreeSet::new();
        for (id, n) in self.nodes.iter().enumerate() {
            match n {
                NodeOp::Element { element } => element.validate()?,
                NodeOp::Source { name } | NodeOp::Sink { name } if !names.insert(name.clone()) => {
                    return Err(Error::Graph(format!("duplicate terminal name {name:?}")));
                }
                _ => {}
            }
            for port in 0..n.input_ports() {
                if !n.optional_input(port) && !used_in.contains(&(id, port)) {
                    return Err(Error::Graph(format!("node {id} input port {port} is unconnected")));
                }
            }
        }
        Ok(())
    }

    fn topological_order(&self) -> Result<Vec<usize>> {
        let mut indegree = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indegree[e.to] += 1;
        }
        let mut ready: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_front() {
            order.push(n);
            for e in self.edges.iter().filter(|e| e.from == n) {
                indegree[e.to] -= 1;
                if indegree[e.to] == 0 {
                    ready.push_back(e.to);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::Graph("circuit contains a cycle".into()));
        }
        Ok(order)
    }
}

/// Evaluates the graph in topological order. Every source must be bound in
/// `inputs`; output ports without an edge are reported as discarded.
pub fn simulate_path(c: &CircuitPath, inputs: &BTreeMap<String, ModeState>) -> Result<SimulationOutput> {
    c.validate()?;
    let sources: BTreeSet<&String> = c
        .nodes
        .iter()
        .filter_map(|n| if let NodeOp::Source { name } = n { Some(name) } else { None })
        .collect();
    for name in inputs.keys() {
        if !sources.contains(name) {
            return Err(Error::Graph(format!("input {name:?} has no matching source")));
        }
    }
    let order = c.topological_order()?;

    let mut arriving: BTreeMap<(usize, usize), ModeState> = BTreeMap::new();
    let mut sinks = BTreeMap::new();
    let mut discarded = Vec::new();

    for id in order {
        let node = &c.nodes[id];
        let input = |port: usize| arriving.get(&(id, port)).cloned().unwrap_or_default();
        let outputs: Vec<ModeState> = match node {
            NodeOp::Source { name } => vec![inputs
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Graph(format!("source {name:?} is unbound")))?],
            NodeOp::Element { element: OpticalElement::BeamSplitter50 } => {
                let (a, b) = beam_splitter(&input(0), &input(1));
                vec![a, b]
            }
            NodeOp::Element { element } => apply_element(element, &input(0))?.ports(),
            NodeOp::Sagnac { composite } => vec![composite.apply(&input(0))?],
            NodeOp::Merge => vec![input(0).superpose(&input(1))],
            NodeOp::Sink { name } => {
                sinks.insert(name.clone(), input(0));
                vec![]
            }
        };
        for (port, state) in outputs.into_iter().enumerate() {
            match c.edges.iter().find(|e| e.from == id && e.port == port) {
                Some(e) => {
                    let s = if e.phase == 0.0 { state } else { state.scaled(Complex64::from_polar(1.0, e.phase)) };
                    arriving.insert((e.to, e.to_port), s);
                }
                None => discarded.push(DiscardedPort { node: id, port, state }),
            }
        }
    }
    Ok(SimulationOutput { sinks, discarded })
}

/// Name of the source node in every built-in circuit.
pub const SOURCE: &str = "in";

/// Light path for modular exponentiation from a Gaussian HeNe beam.
///
/// ```text
/// laser → Polarizer(H) → BS1 ─out0→ SPP(+1) → BS2 ─out0──────────────→ BS4.in0
///                            │                  └out1→ DP → [flip] ──→ BS4.in1
///                            └out1→ SPP(+2) → BS3 ─out0──────────────→ BS5.in0
///                                               └out1→ DP → [flip] ──→ BS5.in1
/// BS4.out1 ──────────────→ Merge.in0 → sink "out"
/// BS5.out1 ──(−π/2 delay)→ Merge.in1
/// ```
///
/// The `|l|=2` arm takes one more reflection than the `|l|=1` arm before
/// the merge, which the delay on that edge balances. A polarizer flip is
/// placed on an arm when `a^x mod N` for that arm's value maps to V. BS4
/// and BS5 out0 are discarded ports.
pub fn build_mef_circuit(problem: &ShorProblem) -> Result<CircuitPath> {
    let basis = BasisMap::compiled();
    if problem.bits() != 2 {
        return Err(Error::Unsupported("the modular-exponentiation light path has four arms (n = 2)".into()));
    }
    let work = WorkMap::for_problem(problem)?;
    let flip_for = |l: i32| -> bool {
        let x = basis.value(OamIndex(l)).expect("compiled label");
        work.get(problem.mef(x)) == Some(Polarization::V)
    };
    if flip_for(1) || flip_for(2) {
        return Err(Error::Unsupported("x = 0 must stay on H".into()));
    }
    Ok(four_arm_circuit(
        "mef",
        "Modular exponentiation from a Gaussian beam: polarizer, BS split, SPPs (+1, +2), BS split per mode, \
         Dove prisms on the reflected arms, polarizer flips where a^x mod N maps to V, BS recombination.",
        [flip_for(-1), flip_for(-2)],
    ))
}

/// The same light path without polarizer flips: prepares the equal
/// superposition of the four control labels on H.
pub fn build_input_circuit() -> CircuitPath {
    four_arm_circuit(
        "input",
        "Control-register preparation from a Gaussian beam: polarizer, BS split, SPPs (+1, +2), BS split per \
         mode, Dove prisms on the reflected arms, BS recombination.",
        [false, false],
    )
}

fn four_arm_circuit(name: &str, description: &str, flips: [bool; 2]) -> CircuitPath {
    let mut c = CircuitPath::new(name, description);
    let src = c.add(NodeOp::Source { name: SOURCE.into() });
    let pol = c.add_element(OpticalElement::Polarizer { axis: Polarization::H });
    let bs1 = c.add_element(OpticalElement::BeamSplitter50);
    c.connect(src, 0, pol, 0);
    c.connect(pol, 0, bs1, 0);

    let mut combined = Vec::new();
    for (port, m) in [(0usize, 1i32), (1, 2)] {
        let spp = c.add_element(OpticalElement::SpiralPhasePlate { delta_l: m });
        let split = c.add_element(OpticalElement::BeamSplitter50);
        let dp = c.add_element(OpticalElement::DovePrism);
        let join = c.add_element(OpticalElement::BeamSplitter50);
        c.connect(bs1, port, spp, 0);
        c.connect(spp, 0, split, 0);
        c.connect(split, 0, join, 0);
        c.connect(split, 1, dp, 0);
        if flips[port] {
            let flip = c.add_element(OpticalElement::PolarizerFlip);
            c.connect(dp, 0, flip, 0);
            c.connect(flip, 0, join, 1);
        } else {
            c.connect(dp, 0, join, 1);
        }
        combined.push(join);
    }
    let merge = c.add(NodeOp::Merge);
    let sink = c.add(NodeOp::Sink { name: "out".into() });
    c.connect(combined[0], 1, merge, 0);
    c.connect_with_phase(combined[1], 1, merge, 1, -PI / 2.0);
    c.connect(merge, 0, sink, 0);
    c
}

/// Modular exponentiation as a stage acting on an arbitrary control-register
/// beam: an OAM sorter sends the labels whose `a^x mod N` maps to V through a
/// polarizer flip, then the two ports are merged.
pub fn build_mef_stage_circuit(problem: &ShorProblem, basis: &BasisMap) -> Result<CircuitPath> {
    if !basis.covers(problem.bits()) {
        return Err(Error::Domain("basis does not cover the control register".into()));
    }
    let work = WorkMap::for_problem(problem)?;
    let split: BTreeSet<OamIndex> = basis
        .pairs()
        .iter()
        .filter(|(x, _)| work.get(problem.mef(*x)) == Some(Polarization::V))
        .map(|(_, l)| *l)
        .collect();
    let mut c = CircuitPath::new("mef-stage", "OAM sorter routes the V-valued labels through a polarizer flip.");
    let src = c.add(NodeOp::Source { name: SOURCE.into() });
    let sorter = c.add_element(OpticalElement::OamSorter { split });
    let flip = c.add_element(OpticalElement::PolarizerFlip);
    let merge = c.add(NodeOp::Merge);
    let sink = c.add(NodeOp::Sink { name: "out".into() });
    c.connect(src, 0, sorter, 0);
    c.connect(sorter, 0, flip, 0);
    c.connect(flip, 0, merge, 0);
    c.connect(sorter, 1, merge, 1);
    c.connect(merge, 0, sink, 0);
    Ok(c)
}

/// Light path for the DFT of both polarization branches.
///
/// ```text
/// in → PBS ─H→ OamSorter{l(0), l(1)} ─→ Sagnac{x=0,1} ─→ Merge → sink "H"
///          │                        └→ Sagnac{x=2,3} ─┘
///          └V→ OamSorter{l(0), l(1)} ─→ Sagnac{x=0,1} ─→ Merge → sink "V"
///                                   └→ Sagnac{x=2,3} ─┘
/// ```
///
/// Each sink equals `apply_dft` of its polarization branch.
pub fn build_dft_circuit(basis: &BasisMap) -> Result<CircuitPath> {
    if basis.len() != 4 || basis.bits() != Some(2) {
        return Err(Error::Unsupported("the DFT light path is built for a four-label basis".into()));
    }
    let low = SagnacDft::for_values(basis, &[0, 1])?;
    let high = SagnacDft::for_values(basis, &[2, 3])?;

    let mut c = CircuitPath::new(
        "dft",
        "PBS, per-polarization OAM sorter, one Sagnac composite per |l| pair imprinting the DFT phases, \
         recombination per polarization.",
    );
    let src = c.add(NodeOp::Source { name: SOURCE.into() });
    let pbs = c.add_element(OpticalElement::PolarizingBeamSplitter);
    c.connect(src, 0, pbs, 0);
    for (port, pol) in [(0usize, Polarization::H), (1, Polarization::V)] {
        let sorter = c.add_element(OpticalElement::OamSorter { split: low.inputs() });
        let a = c.add(NodeOp::Sagnac { composite: low.clone() });
        let b = c.add(NodeOp::Sagnac { composite: high.clone() });
        let merge = c.add(NodeOp::Merge);
        let sink = c.add(NodeOp::Sink { name: pol.to_string() });
        c.connect(pbs, port, sorter, 0);
        c.connect(sorter, 0, a, 0);
        c.connect(sorter, 1, b, 0);
        c.connect(a, 0, merge, 0);
        c.connect(b, 0, merge, 1);
        c.connect(merge, 0, sink, 0);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{apply_dft, apply_mef, make_input_state, project_work, state_fidelity};
    use proptest::prelude::*;
    use Polarization::{H, V};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn st(terms: &[(i32, Polarization, Complex64)]) -> ModeState {
        ModeState::from_terms(terms.iter().map(|(l, p, a)| ((OamIndex(*l), *p), *a)))
    }

    fn single(e: &OpticalElement, s: &ModeState) -> ModeState {
        apply_single(e, s).unwrap()
    }

    fn run(c: &CircuitPath, s: ModeState) -> SimulationOutput {
        simulate_path(c, &BTreeMap::from([(SOURCE.to_string(), s)])).unwrap()
    }

    fn eq6() -> ModeState {
        st(&[(1, H, c(1., 0.)), (-1, V, c(1., 0.)), (2, H, c(1., 0.)), (-2, V, c(1., 0.))])
    }

    #[test]
    fn element_examples() {
        let dp = single(&OpticalElement::DovePrism, &st(&[(1, H, c(1., 0.)), (2, H, c(1., 0.))]));
        assert_eq!(dp, st(&[(-1, H, c(1., 0.)), (-2, H, c(1., 0.))]));
        assert_eq!(single(&OpticalElement::SpiralPhasePlate { delta_l: 1 }, &ModeState::ket(1, H)), ModeState::ket(2, H));
        let slm = OpticalElement::SlmPhase { target: OamIndex(-1), theta: PI / 2.0 };
        let out = single(&slm, &ModeState::ket(-1, V));
        assert!((out.amplitude(-1, V) - c(0., 1.)).norm() < 1e-15);
        let untouched = single(&slm, &ModeState::ket(1, V));
        assert_eq!(untouched, ModeState::ket(1, V));
    }

    #[test]
    fn beam_splitter_outputs_and_mach_zehnder() {
        let psi = eq6();
        let ElementOutput::Pair(t, r) = apply_element(&OpticalElement::BeamSplitter50, &psi).unwrap() else {
            panic!("BS has two outputs")
        };
        assert_eq!(t, psi.scaled(c(FRAC_1_SQRT_2, 0.)));
        assert_eq!(r, psi.scaled(c(0., FRAC_1_SQRT_2)));
        // Balanced Mach-Zehnder: all power leaves through out1.
        let (o0, o1) = beam_splitter(&t, &r);
        assert!(o0.norm_sqr() < 1e-24);
        assert!((o1.norm_sqr() - psi.norm_sqr()).abs() < 1e-12);
        assert!(state_fidelity(&o1, &psi).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn pbs_sorter_polarizer() {
        let psi = eq6();
        let ElementOutput::Pair(h, v) = apply_element(&OpticalElement::PolarizingBeamSplitter, &psi).unwrap() else {
            panic!()
        };
        assert_eq!(h, project_work(&psi, H));
        assert_eq!(v, project_work(&psi, V));
        let sorter = OpticalElement::OamSorter { split: [OamIndex(1), OamIndex(-1)].into() };
        let ElementOutput::Pair(a, b) = apply_element(&sorter, &psi).unwrap() else { panic!() };
        assert_eq!(a, st(&[(1, H, c(1., 0.)), (-1, V, c(1., 0.))]));
        assert_eq!(b, st(&[(2, H, c(1., 0.)), (-2, V, c(1., 0.))]));
        assert_eq!(single(&OpticalElement::Polarizer { axis: V }, &psi), project_work(&psi, V));
        assert_eq!(single(&OpticalElement::HalfWavePlate, &psi), psi);
        assert_eq!(single(&OpticalElement::QuarterWavePlate, &psi), psi);
    }

    #[test]
    fn invalid_parameters() {
        assert!(apply_element(&OpticalElement::SpiralPhasePlate { delta_l: 0 }, &eq6()).is_err());
        assert!(apply_element(&OpticalElement::SlmPhase { target: OamIndex(1), theta: -PI }, &eq6()).is_err());
        assert!(apply_element(&OpticalElement::SlmPhase { target: OamIndex(1), theta: PI }, &eq6()).is_ok());
    }

    fn arb_state() -> impl Strategy<Value = ModeState> {
        proptest::collection::vec((-3i32..=3, any::<bool>(), -1.0f64..1.0, -1.0f64..1.0), 0..8).prop_map(|ts| {
            ModeState::from_terms(ts.into_iter().map(|(l, h, re, im)| ((OamIndex(l), if h { H } else { V }), c(re, im))))
        })
    }

    fn arb_element() -> impl Strategy<Value = OpticalElement> {
        prop_oneof![
            Just(OpticalElement::BeamSplitter50),
            Just(OpticalElement::PolarizingBeamSplitter),
            (1i32..3).prop_map(|d| OpticalElement::SpiralPhasePlate { delta_l: d }),
            Just(OpticalElement::DovePrism),
            Just(OpticalElement::PolarizerFlip),
            (-2i32..=2, -3.0f64..3.0).prop_map(|(l, t)| OpticalElement::SlmPhase { target: OamIndex(l), theta: t }),
            proptest::collection::btree_set((-3i32..=3).prop_map(OamIndex), 0..4)
                .prop_map(|split| OpticalElement::OamSorter { split }),
            Just(OpticalElement::HalfWavePlate),
            Just(OpticalElement::QuarterWavePlate),
            Just(OpticalElement::Polarizer { axis: H }),
        ]
    }

    proptest! {
        #[test]
        fn power_bookkeeping(e in arb_element(), s in arb_state()) {
            let before = s.norm_sqr();
            let after: f64 = apply_element(&e, &s).unwrap().ports().iter().map(|o| o.norm_sqr()).sum();
            if e.is_lossless() || e.output_ports() == 2 {
                prop_assert!((after - before).abs() < 1e-12);
            } else {
                prop_assert!(after <= before + 1e-12);
            }
        }

        #[test]
        fn involutions_and_inverses(s in arb_state(), d in 1i32..4) {
            let dp = OpticalElement::DovePrism;
            prop_assert_eq!(single(&dp, &single(&dp, &s)), s.clone());
            let flip = OpticalElement::PolarizerFlip;
            prop_assert_eq!(single(&flip, &single(&flip, &s)), s.clone());
            let up = OpticalElement::SpiralPhasePlate { delta_l: d };
            let down = OpticalElement::SpiralPhasePlate { delta_l: -d };
            prop_assert_eq!(single(&down, &single(&up, &s)), s);
        }
    }

    #[test]
    fn degenerate_graph_matches_element() {
        let mut g = CircuitPath::new("one", "");
        let src = g.add(NodeOp::Source { name: SOURCE.into() });
        let spp = g.add_element(OpticalElement::SpiralPhasePlate { delta_l: 1 });
        let sink = g.add(NodeOp::Sink { name: "out".into() });
        g.connect(src, 0, spp, 0);
        g.connect(spp, 0, sink, 0);
        let out = run(&g, eq6());
        assert_eq!(out.sink("out").unwrap(), &single(&OpticalElement::SpiralPhasePlate { delta_l: 1 }, &eq6()));
        assert!(out.discarded.is_empty());
    }

    #[test]
    fn graph_errors() {
        let mef = build_mef_circuit(&ShorProblem::compiled()).unwrap();
        assert!(matches!(simulate_path(&mef, &BTreeMap::new()), Err(Error::Graph(_))));
        let wrong = BTreeMap::from([("nope".to_string(), ModeState::ket(0, H))]);
        assert!(matches!(simulate_path(&mef, &wrong), Err(Error::Graph(_))));

        let mut cyc = CircuitPath::new("cycle", "");
        let a = cyc.add_element(OpticalElement::DovePrism);
        let b = cyc.add_element(OpticalElement::DovePrism);
        cyc.connect(a, 0, b, 0);
        cyc.connect(b, 0, a, 0);
        assert!(matches!(simulate_path(&cyc, &BTreeMap::new()), Err(Error::Graph(_))));

        let mut dangling = CircuitPath::new("dangling", "");
        dangling.add_element(OpticalElement::DovePrism);
        assert!(matches!(simulate_path(&dangling, &BTreeMap::new()), Err(Error::Graph(_))));

        let mut bad_port = CircuitPath::new("port", "");
        let s = bad_port.add(NodeOp::Source { name: SOURCE.into() });
        let k = bad_port.add(NodeOp::Sink { name: "out".into() });
        bad_port.connect(s, 1, k, 0);
        assert!(matches!(bad_port.validate(), Err(Error::Graph(_))));
    }

    #[test]
    fn mef_circuit_reproduces_entangled_state() {
        let circ = build_mef_circuit(&ShorProblem::compiled()).unwrap();
        let out = run(&circ, ModeState::ket(0, H));
        let sink = out.sink("out").unwrap();
        assert!(state_fidelity(sink, &eq6()).unwrap() > 1.0 - 1e-9);
        // Equal amplitudes, not only equal support.
        let amps: Vec<Complex64> = sink.terms().map(|(_, a)| a).collect();
        assert!(amps.iter().all(|a| (a - amps[0]).norm() < 1e-15));
        assert!((sink.norm_sqr() + out.discarded_power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mef_circuit_census() {
        let census = build_mef_circuit(&ShorProblem::compiled()).unwrap().census();
        let want: BTreeMap<String, usize> = [("Polarizer", 1), ("BeamSplitter50", 5), ("SpiralPhasePlate", 2), ("DovePrism", 2), ("PolarizerFlip", 2)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        assert_eq!(census, want);
    }

    #[test]
    fn input_circuit_prepares_equal_superposition() {
        let circ = build_input_circuit();
        assert!(!circ.census().contains_key("PolarizerFlip"));
        let sink = run(&circ, ModeState::ket(0, H)).sinks["out"].clone();
        let input = make_input_state(&ShorProblem::compiled(), &BasisMap::compiled(), false).unwrap();
        assert!(state_fidelity(&sink, &input).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn mef_circuit_other_bases() {
        for a in [4, 14] {
            let p = ShorProblem::new(15, a, 2).unwrap();
            let sink = run(&build_mef_circuit(&p).unwrap(), ModeState::ket(0, H)).sinks["out"].clone();
            assert!(state_fidelity(&sink, &eq6()).unwrap() > 1.0 - 1e-9);
        }
        let seven = ShorProblem::new(15, 7, 2).unwrap();
        assert!(matches!(build_mef_circuit(&seven), Err(Error::Unsupported(_))));
    }

    #[test]
    fn mef_stage_matches_operator() {
        let p = ShorProblem::compiled();
        let b = BasisMap::compiled();
        let circ = build_mef_stage_circuit(&p, &b).unwrap();
        let wm = WorkMap::for_problem(&p).unwrap();
        for (_, l) in b.pairs() {
            let ket = ModeState::from_terms([((*l, H), c(1., 0.))]);
            assert_eq!(run(&circ, ket.clone()).sinks["out"], apply_mef(&ket, &p, &b, &wm).unwrap());
        }
    }

    #[test]
    fn dft_circuit_examples() {
        let circ = build_dft_circuit(&BasisMap::compiled()).unwrap();
        let h = run(&circ, st(&[(1, H, c(1., 0.)), (2, H, c(1., 0.))]));
        assert!(state_fidelity(&h.sinks["H"], &st(&[(1, H, c(1., 0.)), (2, H, c(1., 0.))])).unwrap() > 1.0 - 1e-9);
        assert!(h.sinks["V"].is_empty());
        let v = run(&circ, st(&[(-1, V, c(1., 0.)), (-2, V, c(1., 0.))]));
        assert!(state_fidelity(&v.sinks["V"], &st(&[(1, V, c(1., 0.)), (2, V, c(-1., 0.))])).unwrap() > 1.0 - 1e-9);
        let one = run(&circ, ModeState::ket(-1, V));
        let want = st(&[(1, V, c(1., 0.)), (-1, V, c(0., 1.)), (2, V, c(-1., 0.)), (-2, V, c(0., -1.))]);
        assert!(state_fidelity(&one.sinks["V"], &want).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn dft_circuit_equals_operator_on_every_ket() {
        let b = BasisMap::compiled();
        let circ = build_dft_circuit(&b).unwrap();
        for (_, l) in b.pairs() {
            for pol in [H, V] {
                let ket = ModeState::from_terms([((*l, pol), c(1., 0.))]);
                let out = run(&circ, ket.clone());
                let want = apply_dft(&ket, &b).unwrap();
                let got = out.sinks[&pol.to_string()].clone();
                assert!((got.superpose(&want.scaled(c(-1., 0.)))).norm_sqr() < 1e-24, "{ket}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn dft_circuit_census_and_support() {
        let circ = build_dft_circuit(&BasisMap::compiled()).unwrap();
        let census = circ.census();
        assert_eq!(census["OamSorter"], 2);
        assert_eq!(census["Sagnac"], 4);
        assert_eq!(census["PolarizingBeamSplitter"], 1);
        assert!(matches!(build_dft_circuit(&BasisMap::alternating(3).unwrap()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn circuit_json_round_trip() {
        for circ in [build_mef_circuit(&ShorProblem::compiled()).unwrap(), build_dft_circuit(&BasisMap::compiled()).unwrap()] {
            let json = circ.to_json().unwrap();
            assert_eq!(CircuitPath::from_json(&json).unwrap(), circ);
        }
    }

    #[test]
    fn edge_phase_knob() {
        let mut g = CircuitPath::new("delay", "");
        let s = g.add(NodeOp::Source { name: SOURCE.into() });
        let k = g.add(NodeOp::Sink { name: "out".into() });
        g.connect_with_phase(s, 0, k, 0, PI / 2.0);
        let out = run(&g, ModeState::ket(1, H));
        assert!((out.sinks["out"].amplitude(1, H) - c(0., 1.)).norm() < 1e-15);
    }
}
