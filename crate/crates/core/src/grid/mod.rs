//! Electric grid topology: buses, lines, transformers and the per-unit
//! admittance matrix used by the power-flow solver.

mod admittance;
pub mod simbench;
pub mod synth;

pub use admittance::{build_admittance, per_unit_branches, AdmittanceMatrix, BranchKind, BranchPu};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Voltage layer a bus belongs to.
///
/// Assignment is by rated voltage: ≤ 1 kV is LV, above 1 kV and below 60 kV
/// is MV, 60 kV and up is the HV boundary (HV itself is not modeled).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    Lv,
    Mv,
    HvBoundary,
}

impl Layer {
    pub fn from_vn_kv(vn_kv: f64) -> Layer {
        if vn_kv <= 1.0 {
            Layer::Lv
        } else if vn_kv < 60.0 {
            Layer::Mv
        } else {
            Layer::HvBoundary
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Layer::Lv => "LV",
            Layer::Mv => "MV",
            Layer::HvBoundary => "HV-boundary",
        }
    }
}

impl std::str::FromStr for Layer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LV" => Ok(Layer::Lv),
            "MV" => Ok(Layer::Mv),
            "HV-boundary" => Ok(Layer::HvBoundary),
            other => Err(format!("unknown layer {other:?}")),
        }
    }
}

/// Bus role in the power-flow problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    /// Reference bus with fixed 1.0 ∠ 0 p.u. voltage.
    Slack,
    /// Load/injection bus with specified P and Q.
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub vn_kv: f64,
    pub kind: BusKind,
    /// Position in meters (local grid coordinates).
    pub coord: (f64, f64),
    pub cell_id: String,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSegment {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub length_km: f64,
    /// Current-carrying capacity.
    pub i_max_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub id: String,
    pub hv_bus: String,
    pub lv_bus: String,
    pub s_rated_mva: f64,
    pub vk_percent: f64,
    pub vkr_percent: f64,
}

/// An electric network plus the load connection points households anchor to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSegment>,
    pub transformers: Vec<Transformer>,
    /// One entry per load record: `(anchor_id, bus_id)`. A bus may carry
    /// several anchors; each anchor later becomes one household.
    pub load_anchors: Vec<(String, String)>,
}

impl GridTopology {
    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Map bus id → dense index, in bus-vector order.
    pub fn bus_index(&self) -> BTreeMap<&str, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.as_str(), i))
            .collect()
    }

    /// All branch endpoint pairs (lines then transformers).
    fn branch_endpoints(&self) -> impl Iterator<Item = (&str, &str)> {
        self.lines
            .iter()
            .map(|l| (l.from_bus.as_str(), l.to_bus.as_str()))
            .chain(
                self.transformers
                    .iter()
                    .map(|t| (t.hv_bus.as_str(), t.lv_bus.as_str())),
            )
    }
}

/// One finding from [`validate_topology`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyFinding {
    DisconnectedBus { bus_id: String },
    MissingSlack,
    DuplicateSlack { bus_ids: Vec<String> },
    DuplicateId { table: &'static str, id: String },
    DanglingReference { element_id: String, bus_id: String },
}

impl std::fmt::Display for TopologyFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologyFinding::DisconnectedBus { bus_id } => {
                write!(f, "bus {bus_id} is not connected to the slack")
            }
            TopologyFinding::MissingSlack => write!(f, "no slack bus defined"),
            TopologyFinding::DuplicateSlack { bus_ids } => {
                write!(f, "multiple slack buses: {}", bus_ids.join(", "))
            }
            TopologyFinding::DuplicateId { table, id } => {
                write!(f, "duplicate id {id} in {table}")
            }
            TopologyFinding::DanglingReference { element_id, bus_id } => {
                write!(f, "{element_id} references unknown bus {bus_id}")
            }
        }
    }
}

/// Report-only topology validation. An empty report means the grid is
/// simulatable: unique ids, exactly one slack, everything connected to it.
pub fn validate_topology(g: &GridTopology) -> Vec<TopologyFinding> {
    let mut findings = Vec::new();

    let mut seen = BTreeSet::new();
    for b in &g.buses {
        if !seen.insert(b.id.as_str()) {
            findings.push(TopologyFinding::DuplicateId {
                table: "buses",
                id: b.id.clone(),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for l in &g.lines {
        if !seen.insert(l.id.as_str()) {
            findings.push(TopologyFinding::DuplicateId {
                table: "lines",
                id: l.id.clone(),
            });
        }
    }
    let mut seen = BTreeSet::new();
    for t in &g.transformers {
        if !seen.insert(t.id.as_str()) {
            findings.push(TopologyFinding::DuplicateId {
                table: "transformers",
                id: t.id.clone(),
            });
        }
    }

    let bus_ids: BTreeSet<&str> = g.buses.iter().map(|b| b.id.as_str()).collect();
    for l in &g.lines {
        for end in [&l.from_bus, &l.to_bus] {
            if !bus_ids.contains(end.as_str()) {
                findings.push(TopologyFinding::DanglingReference {
                    element_id: l.id.clone(),
                    bus_id: end.clone(),
                });
            }
        }
    }
    for t in &g.transformers {
        for end in [&t.hv_bus, &t.lv_bus] {
            if !bus_ids.contains(end.as_str()) {
                findings.push(TopologyFinding::DanglingReference {
                    element_id: t.id.clone(),
                    bus_id: end.clone(),
                });
            }
        }
    }

    let slacks: Vec<&Bus> = g.buses.iter().filter(|b| b.kind == BusKind::Slack).collect();
    match slacks.len() {
        0 => findings.push(TopologyFinding::MissingSlack),
        1 => {}
        _ => findings.push(TopologyFinding::DuplicateSlack {
            bus_ids: slacks.iter().map(|b| b.id.clone()).collect(),
        }),
    }

    // Connectivity from the slack (or the first bus when no slack exists, so
    // isolated buses are still reported).
    if !g.buses.is_empty() {
        let index = g.bus_index();
        let start = slacks
            .first()
            .map(|b| index[b.id.as_str()])
            .unwrap_or(0);
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); g.buses.len()];
        for (a, b) in g.branch_endpoints() {
            if let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) {
                adjacency[ia].push(ib);
                adjacency[ib].push(ia);
            }
        }
        let mut reached = vec![false; g.buses.len()];
        let mut stack = vec![start];
        reached[start] = true;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !reached[j] {
                    reached[j] = true;
                    stack.push(j);
                }
            }
        }
        for (i, bus) in g.buses.iter().enumerate() {
            if !reached[i] {
                findings.push(TopologyFinding::DisconnectedBus {
                    bus_id: bus.id.clone(),
                });
            }
        }
    }

    findings
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("missing input file {0}")]
    MissingFile(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record in {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("dangling references: {0}")]
    Integrity(String),
    #[error("branch {0} has zero impedance")]
    ZeroImpedanceBranch(String),
    #[error("bus {0} not found")]
    UnknownBus(String),
}
