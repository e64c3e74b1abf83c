//! Scenario descriptions and the deterministic realization of a quarter.
//!
//! A scenario is a small set of qualitative knobs (component shares,
//! temperatures, a seed) parsed from JSON. [`realize_quarter`] turns it into
//! a fully parameterized [`QuarterModel`] against an imported grid: one
//! household per load anchor, seeded component assignment, building
//! envelopes, prosumer sizing, profile selection and DHN synthesis.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buildings::{nominal_heat_load, parameterize_building, ArchetypeCatalog};
use crate::dhn::{self, DhnError, DhnVertex, DnCatalog, SizingParams, TopologyMode};
use crate::grid::{GridTopology, Layer};
use crate::profiles::ProfilePool;
use crate::prosumer::{
    assign_profiles, size_components, ComponentFlags, HeatMode, HeatModeFlag, ProsumerError,
};
use crate::quarterdb::{
    BesRow, BevRow, CellRow, EhpRow, EndpointKind, GridLayerRow, HouseholdRow, LineRow, NodeRow,
    PipeRow, ProfileRow, PvRow, QuarterModel, SurfaceRow, TransformerRow,
};
use crate::rng;

/// Service connection (household to node) cable: NAYY 4x50 SE.
const SERVICE_CABLE: (f64, f64, f64) = (0.641, 0.085, 144.0);
/// Service connection length, km.
const SERVICE_LINE_KM: f64 = 0.01;
/// Service pipe length, m.
const SERVICE_PIPE_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhnOptions {
    pub topology_mode: TopologyMode,
    pub t_supply_c: f64,
    pub t_return_c: f64,
    pub v_max_m_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescription {
    pub name: String,
    pub seed: u64,
    pub pv_share: f64,
    pub bes_share: f64,
    pub bev_share: f64,
    pub ehp_share: f64,
    pub dhn_share: f64,
    /// Archetype mix as relative weights; realized counts are fitted to the
    /// household total by largest remainder. Empty means a uniform mix over
    /// the catalog.
    pub households_per_archetype: BTreeMap<String, u32>,
    pub t_indoor_set_c: f64,
    /// Reference ambient temperature for the nominal heat load.
    pub t_ref_ambient_c: f64,
    pub dhn_options: DhnOptions,
    pub sm_sigma_p_w: f64,
    pub sm_sigma_q_var: f64,
}

impl ScenarioDescription {
    /// Canonical JSON serialization (round-trips through [`load_scenario`]).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("unknown preset {requested:?}, available: {available}")]
    UnknownPreset { requested: String, available: String },
    #[error("scenario validation failed:\n{}", rules.join("\n"))]
    Validation { rules: Vec<String> },
}

/// Everything optional: the parse-side mirror of [`ScenarioDescription`].
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioConfigFile {
    name: Option<String>,
    seed: Option<u64>,
    preset: Option<String>,
    pv_share: Option<f64>,
    bes_share: Option<f64>,
    bev_share: Option<f64>,
    ehp_share: Option<f64>,
    dhn_share: Option<f64>,
    households_per_archetype: Option<BTreeMap<String, u32>>,
    t_indoor_set_c: Option<f64>,
    t_ref_ambient_c: Option<f64>,
    dhn_options: Option<DhnOptionsFile>,
    sm_sigma_p_w: Option<f64>,
    sm_sigma_q_var: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DhnOptionsFile {
    topology_mode: Option<TopologyMode>,
    t_supply_c: Option<f64>,
    t_return_c: Option<f64>,
    v_max_m_s: Option<f64>,
}

/// The shipped preset catalog. Share values are documented repo defaults for
/// a distribution-grid study with high electrification, not published
/// figures.
pub fn presets() -> BTreeMap<&'static str, ScenarioDescription> {
    let mut map = BTreeMap::new();
    map.insert(
        "distributed-energy",
        ScenarioDescription {
            name: "distributed-energy".to_string(),
            seed: 1,
            pv_share: 0.6,
            bes_share: 0.4,
            bev_share: 0.6,
            ehp_share: 0.2,
            dhn_share: 0.3,
            households_per_archetype: BTreeMap::from([
                ("sfh-old".to_string(), 3),
                ("sfh-renovated".to_string(), 4),
                ("mfh".to_string(), 3),
            ]),
            t_indoor_set_c: 20.0,
            t_ref_ambient_c: -12.0,
            dhn_options: DhnOptions {
                topology_mode: TopologyMode::Mst,
                t_supply_c: 70.0,
                t_return_c: 40.0,
                v_max_m_s: 1.5,
            },
            sm_sigma_p_w: 10.0,
            sm_sigma_q_var: 10.0,
        },
    );
    map
}

/// Parses and validates a scenario from its JSON configuration text.
///
/// Only `name` and `seed` are mandatory; every other field falls back to the
/// preset named in `preset` (default `"distributed-energy"`).
pub fn load_scenario(config_text: &str) -> Result<ScenarioDescription, ScenarioError> {
    let cfg: ScenarioConfigFile =
        serde_json::from_str(config_text).map_err(|e| ScenarioError::Parse(e.to_string()))?;

    let preset_name = cfg.preset.as_deref().unwrap_or("distributed-energy");
    let presets = presets();
    let base = presets
        .get(preset_name)
        .ok_or_else(|| ScenarioError::UnknownPreset {
            requested: preset_name.to_string(),
            available: presets.keys().copied().collect::<Vec<_>>().join(", "),
        })?;

    let mut rules = Vec::new();
    if cfg.name.is_none() {
        rules.push("name is required".to_string());
    }
    if cfg.seed.is_none() {
        rules.push("seed is required".to_string());
    }
    if !rules.is_empty() {
        return Err(ScenarioError::Validation { rules });
    }

    let dhn_file = cfg.dhn_options.unwrap_or_default();
    let sd = ScenarioDescription {
        name: cfg.name.expect("checked"),
        seed: cfg.seed.expect("checked"),
        pv_share: cfg.pv_share.unwrap_or(base.pv_share),
        bes_share: cfg.bes_share.unwrap_or(base.bes_share),
        bev_share: cfg.bev_share.unwrap_or(base.bev_share),
        ehp_share: cfg.ehp_share.unwrap_or(base.ehp_share),
        dhn_share: cfg.dhn_share.unwrap_or(base.dhn_share),
        households_per_archetype: cfg
            .households_per_archetype
            .unwrap_or_else(|| base.households_per_archetype.clone()),
        t_indoor_set_c: cfg.t_indoor_set_c.unwrap_or(base.t_indoor_set_c),
        t_ref_ambient_c: cfg.t_ref_ambient_c.unwrap_or(base.t_ref_ambient_c),
        dhn_options: DhnOptions {
            topology_mode: dhn_file
                .topology_mode
                .unwrap_or(base.dhn_options.topology_mode),
            t_supply_c: dhn_file.t_supply_c.unwrap_or(base.dhn_options.t_supply_c),
            t_return_c: dhn_file.t_return_c.unwrap_or(base.dhn_options.t_return_c),
            v_max_m_s: dhn_file.v_max_m_s.unwrap_or(base.dhn_options.v_max_m_s),
        },
        sm_sigma_p_w: cfg.sm_sigma_p_w.unwrap_or(base.sm_sigma_p_w),
        sm_sigma_q_var: cfg.sm_sigma_q_var.unwrap_or(base.sm_sigma_q_var),
    };

    let rules = validate(&sd);
    if rules.is_empty() {
        Ok(sd)
    } else {
        Err(ScenarioError::Validation { rules })
    }
}

/// All violated invariants of `sd`, one message per rule.
pub fn validate(sd: &ScenarioDescription) -> Vec<String> {
    let mut rules = Vec::new();
    for (field, value) in [
        ("pv_share", sd.pv_share),
        ("bes_share", sd.bes_share),
        ("bev_share", sd.bev_share),
        ("ehp_share", sd.ehp_share),
        ("dhn_share", sd.dhn_share),
    ] {
        if !(0.0..=1.0).contains(&value) {
            rules.push(format!("{field}: share out of [0,1] (got {value})"));
        }
    }
    if sd.ehp_share + sd.dhn_share > 1.0 {
        rules.push(format!(
            "ehp_share + dhn_share must not exceed 1 (got {})",
            sd.ehp_share + sd.dhn_share
        ));
    }
    let d = &sd.dhn_options;
    if !(d.t_supply_c > d.t_return_c
        && d.t_return_c > sd.t_indoor_set_c
        && sd.t_indoor_set_c > sd.t_ref_ambient_c)
    {
        rules.push(format!(
            "temperature ordering violated: require t_supply ({}) > t_return ({}) > t_indoor_set ({}) > t_ref_ambient ({})",
            d.t_supply_c, d.t_return_c, sd.t_indoor_set_c, sd.t_ref_ambient_c
        ));
    }
    if d.v_max_m_s <= 0.0 {
        rules.push(format!("dhn_options.v_max_m_s must be > 0 (got {})", d.v_max_m_s));
    }
    if sd.sm_sigma_p_w < 0.0 {
        rules.push(format!("sm_sigma_p_w must be ≥ 0 (got {})", sd.sm_sigma_p_w));
    }
    if sd.sm_sigma_q_var < 0.0 {
        rules.push(format!("sm_sigma_q_var must be ≥ 0 (got {})", sd.sm_sigma_q_var));
    }
    rules
}

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error("grid is not simulatable:\n{}", findings.join("\n"))]
    InvalidGrid { findings: Vec<String> },
    #[error("no household anchors")]
    NoHouseholdAnchors,
    #[error("households_per_archetype names unknown archetype {requested:?}, available: {available}")]
    UnknownArchetype { requested: String, available: String },
    #[error(transparent)]
    Prosumer(#[from] ProsumerError),
    #[error("building parameterization failed: {0}")]
    Building(#[from] crate::buildings::BuildingError),
    #[error("DHN synthesis failed in cell {cell}: {source}")]
    Dhn {
        cell: String,
        #[source]
        source: DhnError,
    },
}

/// Realizes a quarter with the built-in archetype catalog, DN catalog and
/// synthetic profile pool.
pub fn realize_quarter(
    sd: &ScenarioDescription,
    grid: &GridTopology,
) -> Result<QuarterModel, RealizeError> {
    realize_quarter_with(
        sd,
        grid,
        &ArchetypeCatalog::builtin(),
        &ProfilePool::synthetic(),
        &DnCatalog::builtin(),
    )
}

/// Fits archetype weights to exactly `n` households (largest remainder,
/// ties by archetype id order).
fn archetype_counts(
    weights: &BTreeMap<String, u32>,
    n: usize,
) -> Vec<(String, usize)> {
    let total: f64 = weights.values().map(|&w| w as f64).sum();
    // Degenerate all-zero weights fall back to a uniform mix.
    let total = if total == 0.0 {
        weights.len() as f64
    } else {
        total
    };
    let uniform = weights.values().all(|&w| w == 0);
    let mut counts: Vec<(String, usize, f64)> = weights
        .iter()
        .map(|(id, &w)| {
            let w = if uniform { 1.0 } else { w as f64 };
            let quota = n as f64 * w / total;
            (id.clone(), quota.floor() as usize, quota - quota.floor())
        })
        .collect();
    let assigned: usize = counts.iter().map(|(_, c, _)| *c).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b]
            .2
            .total_cmp(&counts[a].2)
            .then_with(|| counts[a].0.cmp(&counts[b].0))
    });
    let wrap = counts.len();
    for k in 0..(n - assigned) {
        let target = order[k % wrap];
        counts[target].1 += 1;
    }
    counts.into_iter().map(|(id, c, _)| (id, c)).collect()
}

/// Chooses `count` distinct indices from `pool` via a seeded partial shuffle.
fn pick_without_replacement(
    master_seed: u64,
    label: &str,
    pool: &[usize],
    count: usize,
) -> BTreeSet<usize> {
    let mut indices = pool.to_vec();
    let mut stream = rng::stream(master_seed, label);
    indices.shuffle(&mut stream);
    indices.into_iter().take(count).collect()
}

fn round_count(share: f64, n: usize) -> usize {
    (share * n as f64).round() as usize
}

pub fn realize_quarter_with(
    sd: &ScenarioDescription,
    grid: &GridTopology,
    catalog: &ArchetypeCatalog,
    pool: &ProfilePool,
    dn_catalog: &DnCatalog,
) -> Result<QuarterModel, RealizeError> {
    let findings = crate::grid::validate_topology(grid);
    if !findings.is_empty() {
        return Err(RealizeError::InvalidGrid {
            findings: findings.iter().map(|f| f.to_string()).collect(),
        });
    }

    let mut anchors: Vec<(String, String)> = grid.load_anchors.clone();
    anchors.sort();
    let n = anchors.len();
    if n == 0 {
        return Err(RealizeError::NoHouseholdAnchors);
    }

    // Archetype mix fitted to N households, then dealt out by seeded shuffle.
    let weights = if sd.households_per_archetype.is_empty() {
        catalog.ids().map(|id| (id.to_string(), 1)).collect()
    } else {
        sd.households_per_archetype.clone()
    };
    for id in weights.keys() {
        if catalog.get(id).is_none() {
            return Err(RealizeError::UnknownArchetype {
                requested: id.clone(),
                available: catalog.ids().collect::<Vec<_>>().join(", "),
            });
        }
    }
    let mut archetype_deck: Vec<String> = Vec::with_capacity(n);
    for (id, count) in archetype_counts(&weights, n) {
        archetype_deck.extend(std::iter::repeat(id).take(count));
    }
    archetype_deck.shuffle(&mut rng::stream(sd.seed, "assign:archetype"));

    // Component assignment: one independent sub-stream per component type.
    let all: Vec<usize> = (0..n).collect();
    let pv_set = pick_without_replacement(sd.seed, "assign:pv", &all, round_count(sd.pv_share, n));
    let bes_set =
        pick_without_replacement(sd.seed, "assign:bes", &all, round_count(sd.bes_share, n));
    let bev_set =
        pick_without_replacement(sd.seed, "assign:bev", &all, round_count(sd.bev_share, n));
    // Heat modes are exclusive: DHN is assigned first, EHP from the rest.
    let dhn_set =
        pick_without_replacement(sd.seed, "assign:dhn", &all, round_count(sd.dhn_share, n));
    let non_dhn: Vec<usize> = all.iter().copied().filter(|i| !dhn_set.contains(i)).collect();
    let ehp_count = round_count(sd.ehp_share, n).min(non_dhn.len());
    let ehp_set = pick_without_replacement(sd.seed, "assign:ehp", &non_dhn, ehp_count);

    let bus_by_id: BTreeMap<&str, &crate::grid::Bus> =
        grid.buses.iter().map(|b| (b.id.as_str(), b)).collect();

    let mut households = Vec::with_capacity(n);
    let mut surfaces = Vec::new();
    let mut pv_units = Vec::new();
    let mut bes_units = Vec::new();
    let mut bev_units = Vec::new();
    let mut ehp_units = Vec::new();
    let mut profiles = Vec::new();
    let mut lines: Vec<LineRow> = grid
        .lines
        .iter()
        .map(|l| LineRow {
            id: l.id.clone(),
            endpoint_a_kind: EndpointKind::Node,
            endpoint_a: l.from_bus.clone(),
            node_b: l.to_bus.clone(),
            r_ohm_per_km: l.r_ohm_per_km,
            x_ohm_per_km: l.x_ohm_per_km,
            length_km: l.length_km,
            i_max_a: l.i_max_a,
        })
        .collect();
    let mut pipes: Vec<PipeRow> = Vec::new();
    // Per cell: node → aggregated design heat load of its DHN households.
    let mut dhn_demand: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();

    for (i, (anchor_id, bus_id)) in anchors.iter().enumerate() {
        let household_id = anchor_id.clone();
        let bus = bus_by_id[bus_id.as_str()];
        let heat_mode = if dhn_set.contains(&i) {
            Some(HeatModeFlag::Dhn)
        } else if ehp_set.contains(&i) {
            Some(HeatModeFlag::Ehp)
        } else {
            None
        };
        let flags = ComponentFlags {
            pv: pv_set.contains(&i),
            bes: bes_set.contains(&i),
            bev_count: usize::from(bev_set.contains(&i)),
            heat_mode,
            bes_controllable: false,
            bev_controllable: false,
        };

        let mut building_rng = rng::entity_stream(sd.seed, "building", &household_id);
        let env = parameterize_building(
            catalog,
            &archetype_deck[i],
            sd.t_indoor_set_c,
            &mut building_rng,
        )?;

        let mut sizing_rng = rng::entity_stream(sd.seed, "prosumer", &household_id);
        let pc = size_components(
            &household_id,
            flags,
            &env,
            sd.t_ref_ambient_c,
            sd.sm_sigma_p_w,
            sd.sm_sigma_q_var,
            &mut sizing_rng,
        )?;
        let mut profile_rng = rng::entity_stream(sd.seed, "profiles", &household_id);
        let pc = assign_profiles(pc, pool, env.annual_electric_demand_kwh, &mut profile_rng)?;

        // Service line to the anchor bus.
        lines.push(LineRow {
            id: format!("line-{household_id}"),
            endpoint_a_kind: EndpointKind::Household,
            endpoint_a: household_id.clone(),
            node_b: bus_id.clone(),
            r_ohm_per_km: SERVICE_CABLE.0,
            x_ohm_per_km: SERVICE_CABLE.1,
            length_km: SERVICE_LINE_KM,
            i_max_a: SERVICE_CABLE.2,
        });

        let load = pc.load.clone().expect("assigned above");
        let load_profile_id = format!("prof-load-{household_id}");
        profiles.push(ProfileRow {
            id: load_profile_id.clone(),
            kind: "load".to_string(),
            data_ref: load.profile_ref.clone(),
        });
        for (k, bev) in pc.bevs.iter().enumerate() {
            let profile_id = format!("prof-bev-{household_id}-{}", k + 1);
            profiles.push(ProfileRow {
                id: profile_id.clone(),
                kind: "bev-driving".to_string(),
                data_ref: bev.driving_profile_ref.clone().expect("assigned above"),
            });
            bev_units.push(BevRow {
                id: format!("bev-{household_id}-{}", k + 1),
                household_id: household_id.clone(),
                capacity_kwh: bev.capacity_kwh,
                p_charge_kw: bev.p_charge_kw,
                driving_profile_id: profile_id,
                controllable: bev.externally_controllable,
            });
        }
        if let Some(pv) = pc.pv {
            pv_units.push(PvRow {
                id: format!("pv-{household_id}"),
                household_id: household_id.clone(),
                p_peak_kw: pv.p_peak_kw,
                gamma_per_k: pv.gamma_per_k,
            });
        }
        if let Some(bes) = pc.bes {
            bes_units.push(BesRow {
                id: format!("bes-{household_id}"),
                household_id: household_id.clone(),
                capacity_kwh: bes.capacity_kwh,
                p_max_kw: bes.p_max_kw,
                soc_min: bes.soc_min,
                soc_max: bes.soc_max,
                eta: bes.eta,
                controllable: bes.externally_controllable,
            });
        }
        if let Some(ehp) = pc.ehp {
            ehp_units.push(EhpRow {
                id: format!("ehp-{household_id}"),
                household_id: household_id.clone(),
                p_th_nominal_kw: ehp.p_th_nominal_kw,
                eta_carnot: ehp.eta_carnot,
            });
        }
        for (k, s) in env.surfaces.iter().enumerate() {
            surfaces.push(SurfaceRow {
                id: format!("surf-{household_id}-{}", k + 1),
                household_id: household_id.clone(),
                kind: s.kind.clone(),
                u_w_m2k: s.u_w_m2k,
                area_m2: s.area_m2,
            });
        }

        if pc.heat_mode == HeatMode::Dhn {
            let nhl_w = nominal_heat_load(&env, sd.t_ref_ambient_c)?;
            *dhn_demand
                .entry(bus.cell_id.clone())
                .or_default()
                .entry(bus_id.clone())
                .or_insert(0.0) += nhl_w;
            // Service pipe sized to the household's own design flow.
            let flow = dhn::vertex_mass_flow(
                nhl_w,
                sd.dhn_options.t_supply_c,
                sd.dhn_options.t_return_c,
                dhn::CP_WATER,
            )
            .map_err(|source| RealizeError::Dhn {
                cell: bus.cell_id.clone(),
                source,
            })?;
            let d_raw = dhn::required_diameter_m(flow, dhn::RHO_WATER, sd.dhn_options.v_max_m_s);
            let (dn_label, inner) =
                dn_catalog
                    .round_up(d_raw)
                    .ok_or_else(|| RealizeError::Dhn {
                        cell: bus.cell_id.clone(),
                        source: DhnError::FlowExceedsCatalog {
                            from: household_id.clone(),
                            to: bus_id.clone(),
                            flow_kg_s: flow,
                        },
                    })?;
            pipes.push(PipeRow {
                id: format!("pipe-svc-{household_id}"),
                endpoint_a_kind: EndpointKind::Household,
                endpoint_a: household_id.clone(),
                node_b: bus_id.clone(),
                length_m: SERVICE_PIPE_M,
                nominal_mass_flow_kg_s: flow,
                inner_diameter_m: inner,
                dn_label: dn_label.to_string(),
            });
        }

        households.push(HouseholdRow {
            id: household_id,
            archetype_id: env.archetype_id.clone(),
            ground_area_m2: env.ground_area_m2,
            floors: env.floors,
            volume_m3: env.volume_m3,
            air_exchange_n: env.air_exchange_n,
            t_indoor_set_c: env.t_indoor_set_c,
            annual_electric_demand_kwh: env.annual_electric_demand_kwh,
            thermal_capacitance_j_per_k: env.thermal_capacitance_j_per_k,
            heat_mode: pc.heat_mode,
            load_profile_id,
            load_scale: load.scale,
            sm_sigma_p_w: pc.sm.sigma_p_w,
            sm_sigma_q_var: pc.sm.sigma_q_var,
            sm_enabled: pc.sm.enabled,
        });
    }

    // Distribution pipes per cell with DHN consumers.
    for (cell_id, node_demand) in &dhn_demand {
        let pipe_rows = synthesize_cell_dhn(sd, grid, cell_id, node_demand, dn_catalog)
            .map_err(|source| RealizeError::Dhn {
                cell: cell_id.clone(),
                source,
            })?;
        pipes.extend(pipe_rows);
    }

    // Layer and cell tables from the bus set.
    let mut layer_ids = BTreeSet::new();
    let mut cell_layer: BTreeMap<String, Layer> = BTreeMap::new();
    for b in &grid.buses {
        layer_ids.insert(b.layer);
        cell_layer.entry(b.cell_id.clone()).or_insert(b.layer);
    }
    let grid_layers: Vec<GridLayerRow> = layer_ids
        .into_iter()
        .map(|l| GridLayerRow {
            id: l.as_str().to_string(),
            kind: l.as_str().to_string(),
        })
        .collect();
    let cells: Vec<CellRow> = cell_layer
        .into_iter()
        .map(|(id, layer)| CellRow {
            id,
            layer_id: layer.as_str().to_string(),
        })
        .collect();
    let nodes: Vec<NodeRow> = grid
        .buses
        .iter()
        .map(|b| NodeRow {
            id: b.id.clone(),
            cell_id: b.cell_id.clone(),
            x: b.coord.0,
            y: b.coord.1,
            vn_kv: b.vn_kv,
            kind: b.kind,
        })
        .collect();
    let transformers: Vec<TransformerRow> = grid
        .transformers
        .iter()
        .map(|t| TransformerRow {
            id: t.id.clone(),
            hv_node: t.hv_bus.clone(),
            lv_node: t.lv_bus.clone(),
            s_rated_mva: t.s_rated_mva,
            vk_percent: t.vk_percent,
            vkr_percent: t.vkr_percent,
        })
        .collect();

    let mut quarter = QuarterModel {
        scenario: sd.clone(),
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
    quarter.sort_rows();
    Ok(quarter)
}

/// Builds the distribution-pipe rows for one cell: consumer vertices plus a
/// source at the cell's transformer LV node, topology per scenario mode,
/// diameters per catalog.
fn synthesize_cell_dhn(
    sd: &ScenarioDescription,
    grid: &GridTopology,
    cell_id: &str,
    node_demand: &BTreeMap<String, f64>,
    dn_catalog: &DnCatalog,
) -> Result<Vec<PipeRow>, DhnError> {
    let cell_buses: BTreeMap<&str, &crate::grid::Bus> = grid
        .buses
        .iter()
        .filter(|b| b.cell_id == cell_id)
        .map(|b| (b.id.as_str(), b))
        .collect();

    // Source: LV node of the cell's supply transformer (first by id), or the
    // lexicographically first node when the cell has none.
    let source_node = grid
        .transformers
        .iter()
        .filter(|t| cell_buses.contains_key(t.lv_bus.as_str()))
        .map(|t| t.lv_bus.clone())
        .min()
        .or_else(|| cell_buses.keys().next().map(|s| s.to_string()))
        .expect("cell has at least one consumer node");

    let make_vertex = |node_id: &str, nhl: f64| DhnVertex {
        node_ref: node_id.to_string(),
        coord: cell_buses[node_id].coord,
        nhl_w: nhl,
        is_source: node_id == source_node,
    };

    let (vertices, electric_edges) = match sd.dhn_options.topology_mode {
        TopologyMode::Mst => {
            // Consumer and source vertices only; no street junctions.
            let mut vertices = vec![make_vertex(&source_node, *node_demand.get(&source_node).unwrap_or(&0.0))];
            for (node, &nhl) in node_demand {
                if *node != source_node {
                    vertices.push(make_vertex(node, nhl));
                }
            }
            (vertices, None)
        }
        TopologyMode::MirrorElectric => {
            // The union of electric paths from the source to every consumer;
            // intermediate nodes become zero-load junctions.
            let adjacency: BTreeMap<&str, Vec<&str>> = {
                let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
                for l in &grid.lines {
                    if cell_buses.contains_key(l.from_bus.as_str())
                        && cell_buses.contains_key(l.to_bus.as_str())
                    {
                        adj.entry(l.from_bus.as_str()).or_default().push(l.to_bus.as_str());
                        adj.entry(l.to_bus.as_str()).or_default().push(l.from_bus.as_str());
                    }
                }
                adj
            };
            // The cell's own line graph must be radial for mirroring.
            {
                let ids: Vec<&str> = cell_buses.keys().copied().collect();
                let index: BTreeMap<&str, usize> =
                    ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
                let mut parent: Vec<usize> = (0..ids.len()).collect();
                fn find(parent: &mut Vec<usize>, x: usize) -> usize {
                    if parent[x] != x {
                        let r = find(parent, parent[x]);
                        parent[x] = r;
                    }
                    parent[x]
                }
                for l in &grid.lines {
                    if let (Some(&a), Some(&b)) = (
                        index.get(l.from_bus.as_str()),
                        index.get(l.to_bus.as_str()),
                    ) {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        if ra == rb {
                            return Err(DhnError::ElectricNotRadial);
                        }
                        parent[rb] = ra;
                    }
                }
            }
            // BFS parents from the source.
            let mut parents: BTreeMap<&str, &str> = BTreeMap::new();
            let mut queue = std::collections::VecDeque::from([source_node.as_str()]);
            let mut seen = BTreeSet::from([source_node.as_str()]);
            while let Some(u) = queue.pop_front() {
                for &v in adjacency.get(u).into_iter().flatten() {
                    if seen.insert(v) {
                        parents.insert(v, u);
                        queue.push_back(v);
                    }
                }
            }
            let mut chosen: BTreeSet<&str> = BTreeSet::from([source_node.as_str()]);
            let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
            for node in node_demand.keys() {
                if node == &source_node {
                    continue;
                }
                if !seen.contains(node.as_str()) {
                    return Err(DhnError::ElectricDisconnected(node.clone()));
                }
                let mut cursor = node.as_str();
                while cursor != source_node {
                    let up = parents[cursor];
                    // Edge ordered (parent, child) toward the source.
                    edges.insert((up.to_string(), cursor.to_string()));
                    if !chosen.insert(cursor) {
                        break; // joined an already-selected path
                    }
                    cursor = up;
                }
            }
            let vertices: Vec<DhnVertex> = chosen
                .iter()
                .map(|&id| make_vertex(id, *node_demand.get(id).unwrap_or(&0.0)))
                .collect();
            (vertices, Some(edges.into_iter().collect::<Vec<_>>()))
        }
    };

    let tree = dhn::build_topology(
        &vertices,
        sd.dhn_options.topology_mode,
        electric_edges.as_deref(),
    )?;
    let params = SizingParams {
        t_supply_c: sd.dhn_options.t_supply_c,
        t_return_c: sd.dhn_options.t_return_c,
        v_max_m_s: sd.dhn_options.v_max_m_s,
        ..SizingParams::default()
    };
    let network = dhn::size_pipes(&vertices, &tree, params, dn_catalog)?;
    Ok(network
        .pipes
        .into_iter()
        .map(|p| PipeRow {
            id: p.id,
            endpoint_a_kind: EndpointKind::Node,
            endpoint_a: p.from_vertex,
            node_b: p.to_vertex,
            length_m: p.length_m,
            nominal_mass_flow_kg_s: p.nominal_mass_flow_kg_s,
            inner_diameter_m: p.inner_diameter_m,
            dn_label: p.dn_label,
        })
        .collect())
}
