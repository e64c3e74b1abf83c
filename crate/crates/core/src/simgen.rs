//! Simulation assembly: turns a validated quarter into an executable model,
//! and emits equation-based dynamic-model source text for external tools.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::buildings::{Surface, ThermalEnvelope};
use crate::dhn::{self, DhnNetwork, DhnPipe, DhnVertex};
use crate::grid::{
    build_admittance, per_unit_branches, validate_topology, AdmittanceMatrix, BranchPu, Bus,
    BusKind, GridTopology, Layer, LineSegment, Transformer,
};
use crate::profiles::{ProfileError, ProfileResolver};
use crate::prosumer::{
    BesConfig, BevConfig, EhpConfig, LoadAssignment, ProsumerConfig, PvConfig, SmConfig,
};
use crate::quarterdb::{self, EndpointKind, QuarterModel};
use crate::weather::WeatherSeries;

pub const DEFAULT_BASE_MVA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimgenError {
    #[error("quarter fails validation:\n{}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    InvalidQuarter {
        violations: Vec<crate::quarterdb::Violation>,
    },
    #[error("household {household}: cannot resolve profile: {source}")]
    Profile {
        household: String,
        #[source]
        source: ProfileError,
    },
    #[error("household id {0} collides with a node id")]
    IdCollision(String),
    #[error("no slack candidate: the quarter has neither transformers nor a marked slack node")]
    NoSlack,
    #[error("assembled grid is not simulatable:\n{}", findings.join("\n"))]
    BadGrid { findings: Vec<String> },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error("DHN reconstruction: {0}")]
    Dhn(#[from] dhn::DhnError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One household bound to its bus, with resolved configuration.
#[derive(Debug, Clone)]
pub struct ProsumerInstance {
    pub household_id: String,
    pub bus_index: usize,
    pub config: ProsumerConfig,
    pub envelope: ThermalEnvelope,
}

/// Runtime view of the heat network.
#[derive(Debug, Clone)]
pub struct DhnRuntime {
    pub network: DhnNetwork,
    /// Household → vertex (node) carrying its demand.
    pub household_vertex: BTreeMap<String, String>,
    /// Design heat rating per DHN household, W.
    pub household_rating_w: BTreeMap<String, f64>,
}

/// Everything the quasi-stationary engine needs for one run.
#[derive(Debug, Clone)]
pub struct SimulationModel {
    pub quarter_name: String,
    pub seed: u64,
    pub grid: GridTopology,
    pub ybus: AdmittanceMatrix,
    pub branches: Vec<BranchPu>,
    pub slack_index: usize,
    pub base_mva: f64,
    pub prosumers: Vec<ProsumerInstance>,
    pub dhn: Option<DhnRuntime>,
    pub weather: WeatherSeries,
    /// Setpoint channel ids, one per externally controllable device
    /// (`<household>:bes`, `<household>:bev<k>`).
    pub setpoint_channels: Vec<String>,
}

/// Rebuilds the electric network from the quarter tables. Households become
/// buses of their own, attached through their service lines, so service-line
/// loadings are part of the solution.
pub fn electric_topology(q: &QuarterModel) -> Result<GridTopology, SimgenError> {
    let node_ids: BTreeMap<&str, &crate::quarterdb::NodeRow> =
        q.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let mut buses: Vec<Bus> = q
        .nodes
        .iter()
        .map(|n| Bus {
            id: n.id.clone(),
            vn_kv: n.vn_kv,
            kind: n.kind,
            coord: (n.x, n.y),
            cell_id: n.cell_id.clone(),
            layer: Layer::from_vn_kv(n.vn_kv),
        })
        .collect();
    for h in &q.households {
        if node_ids.contains_key(h.id.as_str()) {
            return Err(SimgenError::IdCollision(h.id.clone()));
        }
        let node = q
            .household_node(&h.id)
            .and_then(|n| node_ids.get(n))
            .expect("validated: exactly one line per household");
        buses.push(Bus {
            id: h.id.clone(),
            vn_kv: node.vn_kv,
            kind: BusKind::Pq,
            coord: (node.x, node.y),
            cell_id: node.cell_id.clone(),
            layer: Layer::from_vn_kv(node.vn_kv),
        });
    }
    let lines: Vec<LineSegment> = q
        .lines
        .iter()
        .map(|l| LineSegment {
            id: l.id.clone(),
            from_bus: l.endpoint_a.clone(),
            to_bus: l.node_b.clone(),
            r_ohm_per_km: l.r_ohm_per_km,
            x_ohm_per_km: l.x_ohm_per_km,
            length_km: l.length_km,
            i_max_a: l.i_max_a,
        })
        .collect();
    let transformers: Vec<Transformer> = q
        .transformers
        .iter()
        .map(|t| Transformer {
            id: t.id.clone(),
            hv_bus: t.hv_node.clone(),
            lv_bus: t.lv_node.clone(),
            s_rated_mva: t.s_rated_mva,
            vk_percent: t.vk_percent,
            vkr_percent: t.vkr_percent,
        })
        .collect();
    Ok(GridTopology {
        buses,
        lines,
        transformers,
        load_anchors: q
            .households
            .iter()
            .filter_map(|h| Some((h.id.clone(), q.household_node(&h.id)?.to_string())))
            .collect(),
    })
}

/// The slack is the HV-side node of the boundary transformer: the one whose
/// HV bus sits at the highest voltage. Grids without transformers keep their
/// marked slack node.
fn pick_slack(grid: &mut GridTopology) -> Result<usize, SimgenError> {
    let index = grid.bus_index();
    let candidate = grid
        .transformers
        .iter()
        .filter_map(|t| index.get(t.hv_bus.as_str()).map(|&i| (i, t)))
        .max_by(|(ia, ta), (ib, tb)| {
            grid.buses[*ia]
                .vn_kv
                .total_cmp(&grid.buses[*ib].vn_kv)
                .then_with(|| tb.id.cmp(&ta.id)) // deterministic tie-break, first id wins
        })
        .map(|(i, _)| i);
    let slack = match candidate {
        Some(i) => i,
        None => grid
            .buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .ok_or(SimgenError::NoSlack)?,
    };
    for (i, bus) in grid.buses.iter_mut().enumerate() {
        bus.kind = if i == slack {
            BusKind::Slack
        } else {
            BusKind::Pq
        };
    }
    Ok(slack)
}

fn prosumer_config(q: &QuarterModel, h: &crate::quarterdb::HouseholdRow) -> ProsumerConfig {
    let profile_ref: BTreeMap<&str, &str> = q
        .profiles
        .iter()
        .map(|p| (p.id.as_str(), p.data_ref.as_str()))
        .collect();
    ProsumerConfig {
        household_id: h.id.clone(),
        pv: q
            .pv_units
            .iter()
            .find(|r| r.household_id == h.id)
            .map(|r| PvConfig {
                p_peak_kw: r.p_peak_kw,
                gamma_per_k: r.gamma_per_k,
            }),
        bes: q
            .bes_units
            .iter()
            .find(|r| r.household_id == h.id)
            .map(|r| BesConfig {
                capacity_kwh: r.capacity_kwh,
                p_max_kw: r.p_max_kw,
                soc_min: r.soc_min,
                soc_max: r.soc_max,
                eta: r.eta,
                externally_controllable: r.controllable,
            }),
        bevs: q
            .bev_units
            .iter()
            .filter(|r| r.household_id == h.id)
            .map(|r| BevConfig {
                capacity_kwh: r.capacity_kwh,
                p_charge_kw: r.p_charge_kw,
                driving_profile_ref: profile_ref
                    .get(r.driving_profile_id.as_str())
                    .map(|s| s.to_string()),
                externally_controllable: r.controllable,
            })
            .collect(),
        ehp: q
            .ehp_units
            .iter()
            .find(|r| r.household_id == h.id)
            .map(|r| EhpConfig {
                p_th_nominal_kw: r.p_th_nominal_kw,
                eta_carnot: r.eta_carnot,
            }),
        heat_mode: h.heat_mode,
        load: Some(LoadAssignment {
            profile_ref: profile_ref
                .get(h.load_profile_id.as_str())
                .map(|s| s.to_string())
                .unwrap_or_default(),
            scale: h.load_scale,
        }),
        sm: SmConfig {
            sigma_p_w: h.sm_sigma_p_w,
            sigma_q_var: h.sm_sigma_q_var,
            enabled: h.sm_enabled,
        },
    }
}

fn envelope_of(q: &QuarterModel, h: &crate::quarterdb::HouseholdRow) -> ThermalEnvelope {
    ThermalEnvelope {
        archetype_id: h.archetype_id.clone(),
        ground_area_m2: h.ground_area_m2,
        floors: h.floors,
        volume_m3: h.volume_m3,
        surfaces: q
            .surfaces
            .iter()
            .filter(|s| s.household_id == h.id)
            .map(|s| Surface {
                kind: s.kind.clone(),
                u_w_m2k: s.u_w_m2k,
                area_m2: s.area_m2,
            })
            .collect(),
        air_exchange_n: h.air_exchange_n,
        t_indoor_set_c: h.t_indoor_set_c,
        annual_electric_demand_kwh: h.annual_electric_demand_kwh,
        thermal_capacitance_j_per_k: h.thermal_capacitance_j_per_k,
    }
}

/// Reconstructs the runtime DHN from the pipe tables. Per tree component the
/// source is the transformer LV node when present (the same rule the
/// synthesis used), otherwise the lexicographically first vertex.
fn dhn_runtime(q: &QuarterModel) -> Result<Option<DhnRuntime>, SimgenError> {
    let distribution: Vec<&crate::quarterdb::PipeRow> = q
        .pipes
        .iter()
        .filter(|p| p.endpoint_a_kind == EndpointKind::Node)
        .collect();
    let service: Vec<&crate::quarterdb::PipeRow> = q
        .pipes
        .iter()
        .filter(|p| p.endpoint_a_kind == EndpointKind::Household)
        .collect();
    if distribution.is_empty() && service.is_empty() {
        return Ok(None);
    }

    let sd = &q.scenario;
    let dt = sd.dhn_options.t_supply_c - sd.dhn_options.t_return_c;
    let node_coord: BTreeMap<&str, (f64, f64)> =
        q.nodes.iter().map(|n| (n.id.as_str(), (n.x, n.y))).collect();

    // Vertex set: all endpoints of distribution pipes plus service nodes.
    let mut vertex_nhl: BTreeMap<String, f64> = BTreeMap::new();
    for p in &distribution {
        vertex_nhl.entry(p.endpoint_a.clone()).or_insert(0.0);
        vertex_nhl.entry(p.node_b.clone()).or_insert(0.0);
    }
    let mut household_vertex = BTreeMap::new();
    let mut household_rating_w = BTreeMap::new();
    for p in &service {
        // Service pipe flow encodes the household's design NHL.
        let rating_w = p.nominal_mass_flow_kg_s * dhn::CP_WATER * dt;
        *vertex_nhl.entry(p.node_b.clone()).or_insert(0.0) += rating_w;
        household_vertex.insert(p.endpoint_a.clone(), p.node_b.clone());
        household_rating_w.insert(p.endpoint_a.clone(), rating_w);
    }

    // Component split via union-find over vertices.
    let ids: Vec<String> = vertex_nhl.keys().cloned().collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let root = find(parent, parent[x]);
            parent[x] = root;
        }
        parent[x]
    }
    for p in &distribution {
        let (a, b) = (index[p.endpoint_a.as_str()], index[p.node_b.as_str()]);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[rb] = ra;
        }
    }
    // Source per component: smallest transformer LV node, else smallest id.
    let trafo_lv: BTreeSet<&str> = q
        .transformers
        .iter()
        .map(|t| t.lv_node.as_str())
        .collect();
    let mut component_source: BTreeMap<usize, String> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        let root = find(&mut parent, i);
        let entry = component_source.entry(root);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(id.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let current_is_trafo = trafo_lv.contains(o.get().as_str());
                let new_is_trafo = trafo_lv.contains(id.as_str());
                if (new_is_trafo && !current_is_trafo)
                    || (new_is_trafo == current_is_trafo && id < o.get())
                {
                    o.insert(id.clone());
                }
            }
        }
    }
    let mut sources: BTreeSet<&str> = BTreeSet::new();
    for source in component_source.values() {
        sources.insert(source.as_str());
    }

    let vertices: Vec<DhnVertex> = ids
        .iter()
        .map(|id| DhnVertex {
            node_ref: id.clone(),
            coord: node_coord.get(id.as_str()).copied().unwrap_or((0.0, 0.0)),
            nhl_w: vertex_nhl[id],
            is_source: sources.contains(id.as_str()),
        })
        .collect();
    let pipes: Vec<DhnPipe> = distribution
        .iter()
        .map(|p| DhnPipe {
            id: p.id.clone(),
            from_vertex: p.endpoint_a.clone(),
            to_vertex: p.node_b.clone(),
            length_m: p.length_m,
            nominal_mass_flow_kg_s: p.nominal_mass_flow_kg_s,
            inner_diameter_m: p.inner_diameter_m,
            dn_label: p.dn_label.clone(),
        })
        .collect();

    Ok(Some(DhnRuntime {
        network: DhnNetwork {
            vertices,
            pipes,
            t_supply_c: sd.dhn_options.t_supply_c,
            t_return_c: sd.dhn_options.t_return_c,
            v_max_m_s: sd.dhn_options.v_max_m_s,
            rho_water: dhn::RHO_WATER,
            cp_water: dhn::CP_WATER,
        },
        household_vertex,
        household_rating_w,
    }))
}

/// Assembles an executable simulation model from a validated quarter.
pub fn assemble_simulation(
    q: &QuarterModel,
    weather: WeatherSeries,
) -> Result<SimulationModel, SimgenError> {
    assemble_simulation_with_base(q, weather, DEFAULT_BASE_MVA)
}

pub fn assemble_simulation_with_base(
    q: &QuarterModel,
    weather: WeatherSeries,
    base_mva: f64,
) -> Result<SimulationModel, SimgenError> {
    let violations = quarterdb::validate(q);
    if !violations.is_empty() {
        return Err(SimgenError::InvalidQuarter { violations });
    }

    let mut grid = electric_topology(q)?;
    let slack_index = pick_slack(&mut grid)?;
    let findings = validate_topology(&grid);
    if !findings.is_empty() {
        return Err(SimgenError::BadGrid {
            findings: findings.iter().map(|f| f.to_string()).collect(),
        });
    }
    let ybus = build_admittance(&grid, base_mva)?;
    let branches = per_unit_branches(&grid, base_mva)?;

    let bus_index = grid.bus_index();
    let mut resolver = ProfileResolver::default();
    let mut prosumers = Vec::with_capacity(q.households.len());
    let mut setpoint_channels = Vec::new();
    for h in &q.households {
        let config = prosumer_config(q, h);
        let profile_err = |source: ProfileError| SimgenError::Profile {
            household: h.id.clone(),
            source,
        };
        // Resolve every referenced profile now so runs cannot fail midway.
        resolver
            .load(&config.load.as_ref().expect("validated").profile_ref)
            .map_err(profile_err)?;
        for bev in &config.bevs {
            resolver
                .driving(bev.driving_profile_ref.as_deref().unwrap_or(""))
                .map_err(profile_err)?;
        }
        if config.bes.as_ref().is_some_and(|b| b.externally_controllable) {
            setpoint_channels.push(format!("{}:bes", h.id));
        }
        for (k, bev) in config.bevs.iter().enumerate() {
            if bev.externally_controllable {
                setpoint_channels.push(format!("{}:bev{}", h.id, k + 1));
            }
        }
        prosumers.push(ProsumerInstance {
            household_id: h.id.clone(),
            bus_index: bus_index[h.id.as_str()],
            config,
            envelope: envelope_of(q, h),
        });
    }

    Ok(SimulationModel {
        quarter_name: q.scenario.name.clone(),
        seed: q.scenario.seed,
        grid,
        ybus,
        branches,
        slack_index,
        base_mva,
        prosumers,
        dhn: dhn_runtime(q)?,
        weather,
        setpoint_channels,
    })
}

fn sanitize(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for c in id.chars() {
        out.push(if c.is_ascii_alphanumeric() { c } else { '_' });
    }
    if out.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    out
}

fn mo_number(v: f64) -> String {
    // Modelica reals need a decimal point or exponent.
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// Emits the quarter as equation-based dynamic-model source text (Modelica
/// 3.x grammar, TransiEnt-style component names). One `.mo` file per quarter;
/// emission is validated against golden files, not by compilation.
pub fn emit_dynamic_model_text(
    q: &QuarterModel,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, SimgenError> {
    let violations = quarterdb::validate(q);
    if !violations.is_empty() {
        return Err(SimgenError::InvalidQuarter { violations });
    }
    let mut canonical = q.clone();
    canonical.sort_rows();
    let q = &canonical;

    let package = sanitize(&q.scenario.name);
    let mut mo = String::new();
    let w = &mut mo;
    let _ = writeln!(w, "package {package}");
    let _ = writeln!(w, "  \"Integrated energy quarter '{}'\"", q.scenario.name);
    let _ = writeln!(w, "  model Quarter");
    let _ = writeln!(w, "    // electric nodes");
    for n in &q.nodes {
        let _ = writeln!(
            w,
            "    TransiEnt.Grid.ElectricBus {}(vNom = {}) \"node {}\";",
            sanitize(&n.id),
            mo_number(n.vn_kv * 1000.0),
            n.id
        );
    }
    let _ = writeln!(w, "    // lines");
    for l in &q.lines {
        let _ = writeln!(
            w,
            "    TransiEnt.Grid.Line {}(r = {}, x = {}, l = {}, iMax = {}) \"line {}\";",
            sanitize(&l.id),
            mo_number(l.r_ohm_per_km),
            mo_number(l.x_ohm_per_km),
            mo_number(l.length_km),
            mo_number(l.i_max_a),
            l.id
        );
    }
    let _ = writeln!(w, "    // transformers");
    for t in &q.transformers {
        let _ = writeln!(
            w,
            "    TransiEnt.Grid.Transformer {}(sRated = {}, vk = {}, vkr = {}) \"transformer {}\";",
            sanitize(&t.id),
            mo_number(t.s_rated_mva * 1e6),
            mo_number(t.vk_percent),
            mo_number(t.vkr_percent),
            t.id
        );
    }
    if !q.pipes.is_empty() {
        let _ = writeln!(w, "    // district heating pipes");
        for p in &q.pipes {
            let _ = writeln!(
                w,
                "    TransiEnt.Heat.Pipe {}(length = {}, diameter = {}, mFlowNom = {}) \"pipe {} ({})\";",
                sanitize(&p.id),
                mo_number(p.length_m),
                mo_number(p.inner_diameter_m),
                mo_number(p.nominal_mass_flow_kg_s),
                p.id,
                p.dn_label
            );
        }
    }
    let _ = writeln!(w, "    // prosumers");
    let profile_ref: BTreeMap<&str, &str> = q
        .profiles
        .iter()
        .map(|p| (p.id.as_str(), p.data_ref.as_str()))
        .collect();
    for h in &q.households {
        let pv = q.pv_units.iter().find(|r| r.household_id == h.id);
        let bes = q.bes_units.iter().find(|r| r.household_id == h.id);
        let bevs: Vec<_> = q
            .bev_units
            .iter()
            .filter(|r| r.household_id == h.id)
            .collect();
        let ehp = q.ehp_units.iter().find(|r| r.household_id == h.id);
        let _ = writeln!(w, "    CyEntEE.Prosumer {}(", sanitize(&h.id));
        let _ = writeln!(
            w,
            "      annualDemand = {},",
            mo_number(h.annual_electric_demand_kwh)
        );
        let _ = writeln!(
            w,
            "      loadProfile = \"{}\",",
            profile_ref.get(h.load_profile_id.as_str()).unwrap_or(&"")
        );
        let _ = writeln!(w, "      loadScale = {},", mo_number(h.load_scale));
        let _ = writeln!(
            w,
            "      pvPeakPower = {},",
            mo_number(pv.map(|p| p.p_peak_kw * 1000.0).unwrap_or(0.0))
        );
        let _ = writeln!(
            w,
            "      besCapacity = {},",
            mo_number(bes.map(|b| b.capacity_kwh * 3.6e6).unwrap_or(0.0))
        );
        let _ = writeln!(w, "      nBev = {},", bevs.len());
        let _ = writeln!(
            w,
            "      ehpThermalRating = {},",
            mo_number(ehp.map(|e| e.p_th_nominal_kw * 1000.0).unwrap_or(0.0))
        );
        let _ = writeln!(w, "      heatMode = \"{}\",", h.heat_mode.as_str());
        let _ = writeln!(
            w,
            "      smNoiseStdP = {},",
            mo_number(h.sm_sigma_p_w)
        );
        let _ = writeln!(
            w,
            "      smNoiseStdQ = {}) \"household {}\";",
            mo_number(h.sm_sigma_q_var),
            h.id
        );
    }
    let _ = writeln!(w, "  equation");
    for l in &q.lines {
        let _ = writeln!(
            w,
            "    connect({}.epp_a, {}.epp);",
            sanitize(&l.id),
            sanitize(&l.endpoint_a)
        );
        let _ = writeln!(
            w,
            "    connect({}.epp_b, {}.epp);",
            sanitize(&l.id),
            sanitize(&l.node_b)
        );
    }
    for t in &q.transformers {
        let _ = writeln!(
            w,
            "    connect({}.epp_hv, {}.epp);",
            sanitize(&t.id),
            sanitize(&t.hv_node)
        );
        let _ = writeln!(
            w,
            "    connect({}.epp_lv, {}.epp);",
            sanitize(&t.id),
            sanitize(&t.lv_node)
        );
    }
    for p in &q.pipes {
        let _ = writeln!(
            w,
            "    connect({}.port_a, {}.heatPort);",
            sanitize(&p.id),
            sanitize(&p.endpoint_a)
        );
        let _ = writeln!(
            w,
            "    connect({}.port_b, {}.heatPort);",
            sanitize(&p.id),
            sanitize(&p.node_b)
        );
    }
    let _ = writeln!(w, "  end Quarter;");
    let _ = writeln!(w, "end {package};");

    std::fs::create_dir_all(out_dir).map_err(|source| SimgenError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let path = out_dir.join(format!("{package}.mo"));
    std::fs::write(&path, mo).map_err(|source| SimgenError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(vec![path])
}
