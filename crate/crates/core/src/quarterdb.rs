//! The relational quarter model and its persistent bundle format.
//!
//! A bundle directory holds `scenario.json`, one semicolon-separated CSV per
//! entity table under `tables/`, and a `manifest.json` with the schema
//! version and SHA-256 digest of every file. The manifest is written last and
//! acts as the commit marker. Exports are byte-deterministic: rows are sorted
//! by id and numbers use the shortest round-tripping decimal form, so equal
//! models produce identical bytes.
//!
//! The storage seam is [`QuarterStore`]; [`CsvBundleStore`] is the shipped
//! implementation, and a SQL-backed store can slot in behind the same trait.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::BusKind;
use crate::prosumer::HeatMode;
use crate::scenario::ScenarioDescription;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointKind {
    Node,
    Household,
}

impl EndpointKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EndpointKind::Node => "node",
            EndpointKind::Household => "household",
        }
    }
}

impl std::str::FromStr for EndpointKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "node" => Ok(EndpointKind::Node),
            "household" => Ok(EndpointKind::Household),
            other => Err(format!("unknown endpoint kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayerRow {
    pub id: String,
    /// LV / MV / HV-boundary
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub id: String,
    pub layer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub id: String,
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub vn_kv: f64,
    pub kind: BusKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub id: String,
    /// Grid segments connect node to node; service connections connect a
    /// household to its node.
    pub endpoint_a_kind: EndpointKind,
    pub endpoint_a: String,
    pub node_b: String,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
    pub length_km: f64,
    pub i_max_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerRow {
    pub id: String,
    pub hv_node: String,
    pub lv_node: String,
    pub s_rated_mva: f64,
    pub vk_percent: f64,
    pub vkr_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeRow {
    pub id: String,
    /// Distribution pipes connect node to node; service pipes connect a
    /// household to its node ("zero or one pipe" per household).
    pub endpoint_a_kind: EndpointKind,
    pub endpoint_a: String,
    pub node_b: String,
    pub length_m: f64,
    pub nominal_mass_flow_kg_s: f64,
    pub inner_diameter_m: f64,
    pub dn_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRow {
    pub id: String,
    pub archetype_id: String,
    pub ground_area_m2: f64,
    pub floors: u32,
    pub volume_m3: f64,
    pub air_exchange_n: f64,
    pub t_indoor_set_c: f64,
    pub annual_electric_demand_kwh: f64,
    pub thermal_capacitance_j_per_k: f64,
    pub heat_mode: HeatMode,
    pub load_profile_id: String,
    pub load_scale: f64,
    pub sm_sigma_p_w: f64,
    pub sm_sigma_q_var: f64,
    pub sm_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub id: String,
    pub household_id: String,
    pub kind: String,
    pub u_w_m2k: f64,
    pub area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvRow {
    pub id: String,
    pub household_id: String,
    pub p_peak_kw: f64,
    pub gamma_per_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesRow {
    pub id: String,
    pub household_id: String,
    pub capacity_kwh: f64,
    pub p_max_kw: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub eta: f64,
    pub controllable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevRow {
    pub id: String,
    pub household_id: String,
    pub capacity_kwh: f64,
    pub p_charge_kw: f64,
    pub driving_profile_id: String,
    pub controllable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhpRow {
    pub id: String,
    pub household_id: String,
    pub p_th_nominal_kw: f64,
    pub eta_carnot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub id: String,
    /// "load" or "bev-driving"
    pub kind: String,
    /// Reference string resolvable by [`crate::profiles`].
    pub data_ref: String,
}

/// The relational aggregate describing one living quarter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterModel {
    pub scenario: ScenarioDescription,
    pub grid_layers: Vec<GridLayerRow>,
    pub cells: Vec<CellRow>,
    pub nodes: Vec<NodeRow>,
    pub lines: Vec<LineRow>,
    pub transformers: Vec<TransformerRow>,
    pub pipes: Vec<PipeRow>,
    pub households: Vec<HouseholdRow>,
    pub surfaces: Vec<SurfaceRow>,
    pub pv_units: Vec<PvRow>,
    pub bes_units: Vec<BesRow>,
    pub bev_units: Vec<BevRow>,
    pub ehp_units: Vec<EhpRow>,
    pub profiles: Vec<ProfileRow>,
}

impl QuarterModel {
    /// Sorts every table by id, putting the model into canonical row order.
    pub fn sort_rows(&mut self) {
        self.grid_layers.sort_by(|a, b| a.id.cmp(&b.id));
        self.cells.sort_by(|a, b| a.id.cmp(&b.id));
        self.nodes.sort_by(|a, b| a.id.cmp(&b.id));
        self.lines.sort_by(|a, b| a.id.cmp(&b.id));
        self.transformers.sort_by(|a, b| a.id.cmp(&b.id));
        self.pipes.sort_by(|a, b| a.id.cmp(&b.id));
        self.households.sort_by(|a, b| a.id.cmp(&b.id));
        self.surfaces.sort_by(|a, b| a.id.cmp(&b.id));
        self.pv_units.sort_by(|a, b| a.id.cmp(&b.id));
        self.bes_units.sort_by(|a, b| a.id.cmp(&b.id));
        self.bev_units.sort_by(|a, b| a.id.cmp(&b.id));
        self.ehp_units.sort_by(|a, b| a.id.cmp(&b.id));
        self.profiles.sort_by(|a, b| a.id.cmp(&b.id));
    }

    /// Node a household connects to via its service line, when exactly one
    /// line exists.
    pub fn household_node(&self, household_id: &str) -> Option<&str> {
        let mut lines = self.lines.iter().filter(|l| {
            l.endpoint_a_kind == EndpointKind::Household && l.endpoint_a == household_id
        });
        let first = lines.next()?;
        if lines.next().is_some() {
            return None;
        }
        Some(first.node_b.as_str())
    }
}

/// One broken ERM rule: which table, which row, what went wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub table: &'static str,
    pub row_id: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}]: {}", self.table, self.row_id, self.rule)
    }
}

/// Checks referential integrity and the ERM cardinalities. An empty result
/// means the model satisfies every rule.
pub fn validate(q: &QuarterModel) -> Vec<Violation> {
    let mut violations = Vec::new();

    {
        let mut dup_check = |table: &'static str, ids: Vec<&str>| {
            let mut seen = BTreeSet::new();
            for id in ids {
                if !seen.insert(id) {
                    violations.push(Violation {
                        table,
                        row_id: id.to_string(),
                        rule: "duplicate id".to_string(),
                    });
                }
            }
        };
        dup_check("grid_layers", q.grid_layers.iter().map(|r| r.id.as_str()).collect());
        dup_check("cells", q.cells.iter().map(|r| r.id.as_str()).collect());
        dup_check("nodes", q.nodes.iter().map(|r| r.id.as_str()).collect());
        dup_check("lines", q.lines.iter().map(|r| r.id.as_str()).collect());
        dup_check("transformers", q.transformers.iter().map(|r| r.id.as_str()).collect());
        dup_check("pipes", q.pipes.iter().map(|r| r.id.as_str()).collect());
        dup_check("households", q.households.iter().map(|r| r.id.as_str()).collect());
        dup_check("surfaces", q.surfaces.iter().map(|r| r.id.as_str()).collect());
        dup_check("pv", q.pv_units.iter().map(|r| r.id.as_str()).collect());
        dup_check("bes", q.bes_units.iter().map(|r| r.id.as_str()).collect());
        dup_check("bev", q.bev_units.iter().map(|r| r.id.as_str()).collect());
        dup_check("ehp", q.ehp_units.iter().map(|r| r.id.as_str()).collect());
        dup_check("profiles", q.profiles.iter().map(|r| r.id.as_str()).collect());
    }

    let layers: BTreeSet<&str> = q.grid_layers.iter().map(|r| r.id.as_str()).collect();
    let cells: BTreeSet<&str> = q.cells.iter().map(|r| r.id.as_str()).collect();
    let nodes: BTreeSet<&str> = q.nodes.iter().map(|r| r.id.as_str()).collect();
    let households: BTreeSet<&str> = q.households.iter().map(|r| r.id.as_str()).collect();
    let profiles: BTreeMap<&str, &str> = q
        .profiles
        .iter()
        .map(|r| (r.id.as_str(), r.kind.as_str()))
        .collect();

    for c in &q.cells {
        if !layers.contains(c.layer_id.as_str()) {
            violations.push(Violation {
                table: "cells",
                row_id: c.id.clone(),
                rule: format!("dangling layer ref {:?}", c.layer_id),
            });
        }
    }
    for nd in &q.nodes {
        if !cells.contains(nd.cell_id.as_str()) {
            violations.push(Violation {
                table: "nodes",
                row_id: nd.id.clone(),
                rule: format!("dangling cell ref {:?}", nd.cell_id),
            });
        }
    }

    let endpoint_check = |table: &'static str,
                              row_id: &str,
                              kind: EndpointKind,
                              a: &str,
                              b: &str,
                              violations: &mut Vec<Violation>| {
        let a_ok = match kind {
            EndpointKind::Node => nodes.contains(a),
            EndpointKind::Household => households.contains(a),
        };
        if !a_ok {
            violations.push(Violation {
                table,
                row_id: row_id.to_string(),
                rule: format!("dangling {} ref {a:?}", kind.as_str()),
            });
        }
        if !nodes.contains(b) {
            violations.push(Violation {
                table,
                row_id: row_id.to_string(),
                rule: format!("dangling node ref {b:?}"),
            });
        }
    };
    for l in &q.lines {
        endpoint_check("lines", &l.id, l.endpoint_a_kind, &l.endpoint_a, &l.node_b, &mut violations);
    }
    for p in &q.pipes {
        endpoint_check("pipes", &p.id, p.endpoint_a_kind, &p.endpoint_a, &p.node_b, &mut violations);
    }
    for t in &q.transformers {
        for end in [&t.hv_node, &t.lv_node] {
            if !nodes.contains(end.as_str()) {
                violations.push(Violation {
                    table: "transformers",
                    row_id: t.id.clone(),
                    rule: format!("dangling node ref {end:?}"),
                });
            }
        }
    }

    // Household cardinalities: exactly one line, zero or one pipe, exactly
    // one load profile.
    let mut line_count: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &q.lines {
        if l.endpoint_a_kind == EndpointKind::Household {
            *line_count.entry(l.endpoint_a.as_str()).or_insert(0) += 1;
        }
    }
    let mut pipe_count: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &q.pipes {
        if p.endpoint_a_kind == EndpointKind::Household {
            *pipe_count.entry(p.endpoint_a.as_str()).or_insert(0) += 1;
        }
    }
    for h in &q.households {
        let lines = line_count.get(h.id.as_str()).copied().unwrap_or(0);
        if lines != 1 {
            violations.push(Violation {
                table: "households",
                row_id: h.id.clone(),
                rule: format!("exactly one line required, found {lines}"),
            });
        }
        let pipes = pipe_count.get(h.id.as_str()).copied().unwrap_or(0);
        if pipes > 1 {
            violations.push(Violation {
                table: "households",
                row_id: h.id.clone(),
                rule: format!("zero or one pipe required, found {pipes}"),
            });
        }
        match profiles.get(h.load_profile_id.as_str()) {
            Some(&"load") => {}
            Some(kind) => violations.push(Violation {
                table: "households",
                row_id: h.id.clone(),
                rule: format!(
                    "load profile {:?} has kind {kind:?}, expected \"load\"",
                    h.load_profile_id
                ),
            }),
            None => violations.push(Violation {
                table: "households",
                row_id: h.id.clone(),
                rule: format!("dangling load profile ref {:?}", h.load_profile_id),
            }),
        }
    }

    // Component rows must reference existing households; BEVs need a
    // driving profile of the right kind.
    let household_ref_check =
        |table: &'static str, rows: Vec<(&str, &str)>, violations: &mut Vec<Violation>| {
            for (row_id, household_id) in rows {
                if !households.contains(household_id) {
                    violations.push(Violation {
                        table,
                        row_id: row_id.to_string(),
                        rule: format!("dangling household ref {household_id:?}"),
                    });
                }
            }
        };
    household_ref_check(
        "surfaces",
        q.surfaces.iter().map(|r| (r.id.as_str(), r.household_id.as_str())).collect(),
        &mut violations,
    );
    household_ref_check(
        "pv",
        q.pv_units.iter().map(|r| (r.id.as_str(), r.household_id.as_str())).collect(),
        &mut violations,
    );
    household_ref_check(
        "bes",
        q.bes_units.iter().map(|r| (r.id.as_str(), r.household_id.as_str())).collect(),
        &mut violations,
    );
    household_ref_check(
        "bev",
        q.bev_units.iter().map(|r| (r.id.as_str(), r.household_id.as_str())).collect(),
        &mut violations,
    );
    household_ref_check(
        "ehp",
        q.ehp_units.iter().map(|r| (r.id.as_str(), r.household_id.as_str())).collect(),
        &mut violations,
    );
    for b in &q.bev_units {
        match profiles.get(b.driving_profile_id.as_str()) {
            Some(&"bev-driving") => {}
            Some(kind) => violations.push(Violation {
                table: "bev",
                row_id: b.id.clone(),
                rule: format!(
                    "driving profile {:?} has kind {kind:?}, expected \"bev-driving\"",
                    b.driving_profile_id
                ),
            }),
            None => violations.push(Violation {
                table: "bev",
                row_id: b.id.clone(),
                rule: format!("dangling driving profile ref {:?}", b.driving_profile_id),
            }),
        }
    }

    violations
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("quarter model is invalid:\n{}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid { violations: Vec<Violation> },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error("manifest absent in {0}")]
    ManifestAbsent(String),
    #[error("unsupported schema version {found:?} (supported: {SCHEMA_VERSION})")]
    UnsupportedVersion { found: String },
    #[error("digest mismatch for {file}: bundle is corrupted")]
    Corruption { file: String },
    #[error("table absent: {0}")]
    TableAbsent(String),
    #[error("id {id:?} in table {table} contains a reserved character")]
    InvalidId { table: &'static str, id: String },
}

/// Bundle manifest: schema version plus per-file SHA-256 digests.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub digests: BTreeMap<String, String>,
}

/// Storage seam for quarter persistence.
pub trait QuarterStore {
    fn save(&self, q: &QuarterModel) -> Result<Manifest, BundleError>;
    fn load(&self) -> Result<QuarterModel, BundleError>;
}

/// The shipped CSV-bundle backend.
pub struct CsvBundleStore {
    pub dir: PathBuf,
}

impl QuarterStore for CsvBundleStore {
    fn save(&self, q: &QuarterModel) -> Result<Manifest, BundleError> {
        save(q, &self.dir)
    }

    fn load(&self) -> Result<QuarterModel, BundleError> {
        load(&self.dir)
    }
}

const TABLE_NAMES: [&str; 13] = [
    "grid_layers",
    "cells",
    "nodes",
    "lines",
    "transformers",
    "pipes",
    "households",
    "surfaces",
    "pv",
    "bes",
    "bev",
    "ehp",
    "profiles",
];

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn check_id(table: &'static str, id: &str) -> Result<(), BundleError> {
    if id.is_empty() || id.contains(';') || id.contains('\n') || id.contains('\r') {
        return Err(BundleError::InvalidId {
            table,
            id: id.to_string(),
        });
    }
    Ok(())
}

fn render_table(q: &QuarterModel, name: &str) -> Result<String, BundleError> {
    let mut out = String::new();
    match name {
        "grid_layers" => {
            out.push_str("id;kind\n");
            for r in &q.grid_layers {
                check_id("grid_layers", &r.id)?;
                out.push_str(&format!("{};{}\n", r.id, r.kind));
            }
        }
        "cells" => {
            out.push_str("id;layer_id\n");
            for r in &q.cells {
                check_id("cells", &r.id)?;
                out.push_str(&format!("{};{}\n", r.id, r.layer_id));
            }
        }
        "nodes" => {
            out.push_str("id;cell_id;x;y;vn_kv;kind\n");
            for r in &q.nodes {
                check_id("nodes", &r.id)?;
                let kind = match r.kind {
                    BusKind::Slack => "slack",
                    BusKind::Pq => "pq",
                };
                out.push_str(&format!(
                    "{};{};{};{};{};{}\n",
                    r.id,
                    r.cell_id,
                    fmt_f64(r.x),
                    fmt_f64(r.y),
                    fmt_f64(r.vn_kv),
                    kind
                ));
            }
        }
        "lines" => {
            out.push_str(
                "id;endpoint_a_kind;endpoint_a;node_b;r_ohm_per_km;x_ohm_per_km;length_km;i_max_a\n",
            );
            for r in &q.lines {
                check_id("lines", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{};{};{};{}\n",
                    r.id,
                    r.endpoint_a_kind.as_str(),
                    r.endpoint_a,
                    r.node_b,
                    fmt_f64(r.r_ohm_per_km),
                    fmt_f64(r.x_ohm_per_km),
                    fmt_f64(r.length_km),
                    fmt_f64(r.i_max_a)
                ));
            }
        }
        "transformers" => {
            out.push_str("id;hv_node;lv_node;s_rated_mva;vk_percent;vkr_percent\n");
            for r in &q.transformers {
                check_id("transformers", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{};{}\n",
                    r.id,
                    r.hv_node,
                    r.lv_node,
                    fmt_f64(r.s_rated_mva),
                    fmt_f64(r.vk_percent),
                    fmt_f64(r.vkr_percent)
                ));
            }
        }
        "pipes" => {
            out.push_str(
                "id;endpoint_a_kind;endpoint_a;node_b;length_m;nominal_mass_flow_kg_s;inner_diameter_m;dn_label\n",
            );
            for r in &q.pipes {
                check_id("pipes", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{};{};{};{}\n",
                    r.id,
                    r.endpoint_a_kind.as_str(),
                    r.endpoint_a,
                    r.node_b,
                    fmt_f64(r.length_m),
                    fmt_f64(r.nominal_mass_flow_kg_s),
                    fmt_f64(r.inner_diameter_m),
                    r.dn_label
                ));
            }
        }
        "households" => {
            out.push_str(
                "id;archetype_id;ground_area_m2;floors;volume_m3;air_exchange_n;t_indoor_set_c;annual_electric_demand_kwh;thermal_capacitance_j_per_k;heat_mode;load_profile_id;load_scale;sm_sigma_p_w;sm_sigma_q_var;sm_enabled\n",
            );
            for r in &q.households {
                check_id("households", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{};{};{};{};{};{};{};{};{};{};{}\n",
                    r.id,
                    r.archetype_id,
                    fmt_f64(r.ground_area_m2),
                    r.floors,
                    fmt_f64(r.volume_m3),
                    fmt_f64(r.air_exchange_n),
                    fmt_f64(r.t_indoor_set_c),
                    fmt_f64(r.annual_electric_demand_kwh),
                    fmt_f64(r.thermal_capacitance_j_per_k),
                    r.heat_mode.as_str(),
                    r.load_profile_id,
                    fmt_f64(r.load_scale),
                    fmt_f64(r.sm_sigma_p_w),
                    fmt_f64(r.sm_sigma_q_var),
                    r.sm_enabled
                ));
            }
        }
        "surfaces" => {
            out.push_str("id;household_id;kind;u_w_m2k;area_m2\n");
            for r in &q.surfaces {
                check_id("surfaces", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{}\n",
                    r.id,
                    r.household_id,
                    r.kind,
                    fmt_f64(r.u_w_m2k),
                    fmt_f64(r.area_m2)
                ));
            }
        }
        "pv" => {
            out.push_str("id;household_id;p_peak_kw;gamma_per_k\n");
            for r in &q.pv_units {
                check_id("pv", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{}\n",
                    r.id,
                    r.household_id,
                    fmt_f64(r.p_peak_kw),
                    fmt_f64(r.gamma_per_k)
                ));
            }
        }
        "bes" => {
            out.push_str("id;household_id;capacity_kwh;p_max_kw;soc_min;soc_max;eta;controllable\n");
            for r in &q.bes_units {
                check_id("bes", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{};{};{};{}\n",
                    r.id,
                    r.household_id,
                    fmt_f64(r.capacity_kwh),
                    fmt_f64(r.p_max_kw),
                    fmt_f64(r.soc_min),
                    fmt_f64(r.soc_max),
                    fmt_f64(r.eta),
                    r.controllable
                ));
            }
        }
        "bev" => {
            out.push_str(
                "id;household_id;capacity_kwh;p_charge_kw;driving_profile_id;controllable\n",
            );
            for r in &q.bev_units {
                check_id("bev", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{};{};{}\n",
                    r.id,
                    r.household_id,
                    fmt_f64(r.capacity_kwh),
                    fmt_f64(r.p_charge_kw),
                    r.driving_profile_id,
                    r.controllable
                ));
            }
        }
        "ehp" => {
            out.push_str("id;household_id;p_th_nominal_kw;eta_carnot\n");
            for r in &q.ehp_units {
                check_id("ehp", &r.id)?;
                out.push_str(&format!(
                    "{};{};{};{}\n",
                    r.id,
                    r.household_id,
                    fmt_f64(r.p_th_nominal_kw),
                    fmt_f64(r.eta_carnot)
                ));
            }
        }
        "profiles" => {
            out.push_str("id;kind;data_ref\n");
            for r in &q.profiles {
                check_id("profiles", &r.id)?;
                out.push_str(&format!("{};{};{}\n", r.id, r.kind, r.data_ref));
            }
        }
        other => unreachable!("unknown table {other}"),
    }
    Ok(out)
}

/// Saves `q` as a bundle under `dir`. The model must validate cleanly; the
/// manifest is written last so readers never observe a half-written bundle.
pub fn save(q: &QuarterModel, dir: &Path) -> Result<Manifest, BundleError> {
    let violations = validate(q);
    if !violations.is_empty() {
        return Err(BundleError::Invalid { violations });
    }
    let mut canonical = q.clone();
    canonical.sort_rows();

    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source: std::io::Error| BundleError::Io { path, source }
    };
    let tables_dir = dir.join("tables");
    std::fs::create_dir_all(&tables_dir).map_err(io_err(&tables_dir))?;

    let mut digests = BTreeMap::new();
    let mut write_file = |relative: String, content: &str| -> Result<(), BundleError> {
        let path = dir.join(&relative);
        std::fs::write(&path, content).map_err(io_err(&path))?;
        digests.insert(relative, hex::encode(Sha256::digest(content.as_bytes())));
        Ok(())
    };

    let scenario_json = serde_json::to_string_pretty(&canonical.scenario)
        .expect("scenario serializes");
    write_file("scenario.json".to_string(), &scenario_json)?;
    for name in TABLE_NAMES {
        let content = render_table(&canonical, name)?;
        write_file(format!("tables/{name}.csv"), &content)?;
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.to_string(),
        digests,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, &manifest_json).map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

struct TableReader<'a> {
    path: String,
    rows: Vec<Vec<&'a str>>,
}

impl<'a> TableReader<'a> {
    fn parse(path: String, content: &'a str, header: &str) -> Result<TableReader<'a>, BundleError> {
        let mut lines = content.lines();
        let found = lines.next().unwrap_or("");
        if found != header {
            return Err(BundleError::Malformed {
                path,
                detail: format!("unexpected header {found:?}"),
            });
        }
        let expected = header.split(';').count();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(';').collect();
            if fields.len() != expected {
                return Err(BundleError::Malformed {
                    path,
                    detail: format!("row {}: expected {expected} columns", k + 2),
                });
            }
            rows.push(fields);
        }
        Ok(TableReader { path, rows })
    }

    fn bad(&self, detail: String) -> BundleError {
        BundleError::Malformed {
            path: self.path.clone(),
            detail,
        }
    }

    fn f64(&self, raw: &str) -> Result<f64, BundleError> {
        raw.parse()
            .map_err(|_| self.bad(format!("bad number {raw:?}")))
    }

    fn u32(&self, raw: &str) -> Result<u32, BundleError> {
        raw.parse()
            .map_err(|_| self.bad(format!("bad integer {raw:?}")))
    }

    fn bool(&self, raw: &str) -> Result<bool, BundleError> {
        match raw {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(self.bad(format!("bad boolean {other:?}"))),
        }
    }

    fn endpoint(&self, raw: &str) -> Result<EndpointKind, BundleError> {
        raw.parse().map_err(|e: String| self.bad(e))
    }
}

/// Loads and verifies a bundle from `dir`.
pub fn load(dir: &Path) -> Result<QuarterModel, BundleError> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(BundleError::ManifestAbsent(dir.display().to_string()));
    }
    let manifest_text =
        std::fs::read_to_string(&manifest_path).map_err(|source| BundleError::Io {
            path: manifest_path.display().to_string(),
            source,
        })?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_text).map_err(|e| BundleError::Malformed {
            path: manifest_path.display().to_string(),
            detail: e.to_string(),
        })?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(BundleError::UnsupportedVersion {
            found: manifest.schema_version,
        });
    }

    // Every expected file must be listed, present, and digest-clean.
    let mut contents: BTreeMap<String, String> = BTreeMap::new();
    let mut expected: Vec<String> = vec!["scenario.json".to_string()];
    expected.extend(TABLE_NAMES.iter().map(|n| format!("tables/{n}.csv")));
    for relative in expected {
        let digest = manifest
            .digests
            .get(&relative)
            .ok_or_else(|| BundleError::TableAbsent(relative.clone()))?;
        let path = dir.join(&relative);
        if !path.is_file() {
            return Err(BundleError::TableAbsent(relative));
        }
        let content = std::fs::read_to_string(&path).map_err(|source| BundleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if hex::encode(Sha256::digest(content.as_bytes())) != *digest {
            return Err(BundleError::Corruption { file: relative });
        }
        contents.insert(relative, content);
    }

    let scenario: ScenarioDescription = serde_json::from_str(&contents["scenario.json"])
        .map_err(|e| BundleError::Malformed {
            path: "scenario.json".to_string(),
            detail: e.to_string(),
        })?;

    let table = |name: &str, header: &str| -> Result<TableReader<'_>, BundleError> {
        let relative = format!("tables/{name}.csv");
        TableReader::parse(relative.clone(), &contents[&relative], header)
    };

    let t = table("grid_layers", "id;kind")?;
    let grid_layers = t
        .rows
        .iter()
        .map(|f| GridLayerRow {
            id: f[0].to_string(),
            kind: f[1].to_string(),
        })
        .collect();

    let t = table("cells", "id;layer_id")?;
    let cells = t
        .rows
        .iter()
        .map(|f| CellRow {
            id: f[0].to_string(),
            layer_id: f[1].to_string(),
        })
        .collect();

    let t = table("nodes", "id;cell_id;x;y;vn_kv;kind")?;
    let mut nodes = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        nodes.push(NodeRow {
            id: f[0].to_string(),
            cell_id: f[1].to_string(),
            x: t.f64(f[2])?,
            y: t.f64(f[3])?,
            vn_kv: t.f64(f[4])?,
            kind: match f[5] {
                "slack" => BusKind::Slack,
                "pq" => BusKind::Pq,
                other => return Err(t.bad(format!("bad node kind {other:?}"))),
            },
        });
    }

    let t = table(
        "lines",
        "id;endpoint_a_kind;endpoint_a;node_b;r_ohm_per_km;x_ohm_per_km;length_km;i_max_a",
    )?;
    let mut lines = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        lines.push(LineRow {
            id: f[0].to_string(),
            endpoint_a_kind: t.endpoint(f[1])?,
            endpoint_a: f[2].to_string(),
            node_b: f[3].to_string(),
            r_ohm_per_km: t.f64(f[4])?,
            x_ohm_per_km: t.f64(f[5])?,
            length_km: t.f64(f[6])?,
            i_max_a: t.f64(f[7])?,
        });
    }

    let t = table(
        "transformers",
        "id;hv_node;lv_node;s_rated_mva;vk_percent;vkr_percent",
    )?;
    let mut transformers = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        transformers.push(TransformerRow {
            id: f[0].to_string(),
            hv_node: f[1].to_string(),
            lv_node: f[2].to_string(),
            s_rated_mva: t.f64(f[3])?,
            vk_percent: t.f64(f[4])?,
            vkr_percent: t.f64(f[5])?,
        });
    }

    let t = table(
        "pipes",
        "id;endpoint_a_kind;endpoint_a;node_b;length_m;nominal_mass_flow_kg_s;inner_diameter_m;dn_label",
    )?;
    let mut pipes = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        pipes.push(PipeRow {
            id: f[0].to_string(),
            endpoint_a_kind: t.endpoint(f[1])?,
            endpoint_a: f[2].to_string(),
            node_b: f[3].to_string(),
            length_m: t.f64(f[4])?,
            nominal_mass_flow_kg_s: t.f64(f[5])?,
            inner_diameter_m: t.f64(f[6])?,
            dn_label: f[7].to_string(),
        });
    }

    let t = table(
        "households",
        "id;archetype_id;ground_area_m2;floors;volume_m3;air_exchange_n;t_indoor_set_c;annual_electric_demand_kwh;thermal_capacitance_j_per_k;heat_mode;load_profile_id;load_scale;sm_sigma_p_w;sm_sigma_q_var;sm_enabled",
    )?;
    let mut households = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        households.push(HouseholdRow {
            id: f[0].to_string(),
            archetype_id: f[1].to_string(),
            ground_area_m2: t.f64(f[2])?,
            floors: t.u32(f[3])?,
            volume_m3: t.f64(f[4])?,
            air_exchange_n: t.f64(f[5])?,
            t_indoor_set_c: t.f64(f[6])?,
            annual_electric_demand_kwh: t.f64(f[7])?,
            thermal_capacitance_j_per_k: t.f64(f[8])?,
            heat_mode: f[9].parse().map_err(|e: String| t.bad(e))?,
            load_profile_id: f[10].to_string(),
            load_scale: t.f64(f[11])?,
            sm_sigma_p_w: t.f64(f[12])?,
            sm_sigma_q_var: t.f64(f[13])?,
            sm_enabled: t.bool(f[14])?,
        });
    }

    let t = table("surfaces", "id;household_id;kind;u_w_m2k;area_m2")?;
    let mut surfaces = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        surfaces.push(SurfaceRow {
            id: f[0].to_string(),
            household_id: f[1].to_string(),
            kind: f[2].to_string(),
            u_w_m2k: t.f64(f[3])?,
            area_m2: t.f64(f[4])?,
        });
    }

    let t = table("pv", "id;household_id;p_peak_kw;gamma_per_k")?;
    let mut pv_units = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        pv_units.push(PvRow {
            id: f[0].to_string(),
            household_id: f[1].to_string(),
            p_peak_kw: t.f64(f[2])?,
            gamma_per_k: t.f64(f[3])?,
        });
    }

    let t = table(
        "bes",
        "id;household_id;capacity_kwh;p_max_kw;soc_min;soc_max;eta;controllable",
    )?;
    let mut bes_units = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        bes_units.push(BesRow {
            id: f[0].to_string(),
            household_id: f[1].to_string(),
            capacity_kwh: t.f64(f[2])?,
            p_max_kw: t.f64(f[3])?,
            soc_min: t.f64(f[4])?,
            soc_max: t.f64(f[5])?,
            eta: t.f64(f[6])?,
            controllable: t.bool(f[7])?,
        });
    }

    let t = table(
        "bev",
        "id;household_id;capacity_kwh;p_charge_kw;driving_profile_id;controllable",
    )?;
    let mut bev_units = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        bev_units.push(BevRow {
            id: f[0].to_string(),
            household_id: f[1].to_string(),
            capacity_kwh: t.f64(f[2])?,
            p_charge_kw: t.f64(f[3])?,
            driving_profile_id: f[4].to_string(),
            controllable: t.bool(f[5])?,
        });
    }

    let t = table("ehp", "id;household_id;p_th_nominal_kw;eta_carnot")?;
    let mut ehp_units = Vec::with_capacity(t.rows.len());
    for f in &t.rows {
        ehp_units.push(EhpRow {
            id: f[0].to_string(),
            household_id: f[1].to_string(),
            p_th_nominal_kw: t.f64(f[2])?,
            eta_carnot: t.f64(f[3])?,
        });
    }

    let t = table("profiles", "id;kind;data_ref")?;
    let profiles = t
        .rows
        .iter()
        .map(|f| ProfileRow {
            id: f[0].to_string(),
            kind: f[1].to_string(),
            data_ref: f[2].to_string(),
        })
        .collect();

    let q = QuarterModel {
        scenario,
        grid_layers,
        cells,
        nodes,
        lines,
        transformers,
        pipes,
        households,
        surfaces,
        pv_units,
        bes_units,
        bev_units,
        ehp_units,
        profiles,
    };
    let violations = validate(&q);
    if !violations.is_empty() {
        return Err(BundleError::Invalid { violations });
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::synth;
    use crate::scenario::{presets, realize_quarter};

    pub(crate) fn sample_quarter() -> QuarterModel {
        let mut sd = presets()["distributed-energy"].clone();
        sd.name = "sample".into();
        sd.seed = 424_242;
        realize_quarter(&sd, &synth::lv_rural1()).unwrap()
    }

    #[test]
    fn generated_quarter_validates_cleanly() {
        let q = sample_quarter();
        assert_eq!(validate(&q), vec![]);
    }

    #[test]
    fn dangling_line_node_is_a_violation() {
        let mut q = sample_quarter();
        q.lines[0].node_b = "ghost".into();
        let violations = validate(&q);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].table, "lines");
        assert!(violations[0].rule.contains("dangling node ref"));
    }

    #[test]
    fn household_with_two_lines_is_a_violation() {
        let mut q = sample_quarter();
        let mut extra = q
            .lines
            .iter()
            .find(|l| l.endpoint_a_kind == EndpointKind::Household)
            .unwrap()
            .clone();
        extra.id = "line-duplicate".into();
        let household = extra.endpoint_a.clone();
        q.lines.push(extra);
        let violations = validate(&q);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].table, "households");
        assert_eq!(violations[0].row_id, household);
        assert!(violations[0].rule.contains("exactly one line"));
    }

    #[test]
    fn save_load_round_trips() {
        let q = sample_quarter();
        let dir = tempfile::tempdir().unwrap();
        save(&q, dir.path()).unwrap();
        let back = load(dir.path()).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let q = sample_quarter();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = save(&q, a.path()).unwrap();
        let mb = save(&q, b.path()).unwrap();
        assert_eq!(ma.digests, mb.digests);
        for name in TABLE_NAMES {
            let fa = std::fs::read(a.path().join("tables").join(format!("{name}.csv"))).unwrap();
            let fb = std::fs::read(b.path().join("tables").join(format!("{name}.csv"))).unwrap();
            assert_eq!(fa, fb, "table {name} differs");
        }
    }

    #[test]
    fn tampered_table_is_reported_as_corruption() {
        let q = sample_quarter();
        let dir = tempfile::tempdir().unwrap();
        save(&q, dir.path()).unwrap();
        let victim = dir.path().join("tables/households.csv");
        let mut content = std::fs::read_to_string(&victim).unwrap();
        content.push_str("tampered;row\n");
        std::fs::write(&victim, content).unwrap();
        match load(dir.path()) {
            Err(BundleError::Corruption { file }) => {
                assert_eq!(file, "tables/households.csv");
            }
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn missing_table_is_reported_absent() {
        let q = sample_quarter();
        let dir = tempfile::tempdir().unwrap();
        save(&q, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("tables/households.csv")).unwrap();
        match load(dir.path()) {
            Err(BundleError::TableAbsent(name)) => {
                assert_eq!(name, "tables/households.csv");
            }
            other => panic!("expected table-absent error, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let q = sample_quarter();
        let dir = tempfile::tempdir().unwrap();
        save(&q, dir.path()).unwrap();
        let manifest_path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"schema_version\": \"1\"", "\"schema_version\": \"99\"");
        std::fs::write(&manifest_path, text).unwrap();
        assert!(matches!(
            load(dir.path()),
            Err(BundleError::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn invalid_model_refuses_to_save() {
        let mut q = sample_quarter();
        q.households[0].load_profile_id = "ghost".into();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save(&q, dir.path()),
            Err(BundleError::Invalid { .. })
        ));
    }

    #[test]
    fn store_trait_round_trips() {
        let q = sample_quarter();
        let dir = tempfile::tempdir().unwrap();
        let store = CsvBundleStore {
            dir: dir.path().to_path_buf(),
        };
        store.save(&q).unwrap();
        assert_eq!(store.load().unwrap(), q);
    }
}
