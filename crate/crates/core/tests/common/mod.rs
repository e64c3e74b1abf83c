//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)] // each test binary uses a subset

use std::path::PathBuf;

use quartier::grid::{Bus, BusKind, GridTopology, Layer, LineSegment, Transformer};
use quartier::quarterdb::QuarterModel;
use quartier::scenario::{presets, realize_quarter, ScenarioDescription};

/// Workspace-level `data/` directory with the checked-in fixtures.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Two-bus LV feeder with two household anchors, used by the emission golden
/// test and small end-to-end checks.
pub fn two_household_grid() -> GridTopology {
    let bus = |id: &str, vn: f64, kind, coord| Bus {
        id: id.to_string(),
        vn_kv: vn,
        kind,
        coord,
        cell_id: if vn > 1.0 { "MV1" } else { "LV1" }.to_string(),
        layer: Layer::from_vn_kv(vn),
    };
    GridTopology {
        buses: vec![
            bus("mv", 20.0, BusKind::Slack, (0.0, -40.0)),
            bus("b1", 0.4, BusKind::Pq, (0.0, 0.0)),
            bus("b2", 0.4, BusKind::Pq, (40.0, 0.0)),
        ],
        lines: vec![LineSegment {
            id: "l1".into(),
            from_bus: "b1".into(),
            to_bus: "b2".into(),
            r_ohm_per_km: 0.2067,
            x_ohm_per_km: 0.0804,
            length_km: 0.04,
            i_max_a: 270.0,
        }],
        transformers: vec![Transformer {
            id: "tr1".into(),
            hv_bus: "mv".into(),
            lv_bus: "b1".into(),
            s_rated_mva: 0.16,
            vk_percent: 4.0,
            vkr_percent: 1.175,
        }],
        load_anchors: vec![("hh-a".into(), "b1".into()), ("hh-b".into(), "b2".into())],
    }
}

/// Deterministic scenario for the two-household fixture: every share is 0.5,
/// so exactly one household carries each component.
pub fn two_household_scenario() -> ScenarioDescription {
    let mut sd = presets()["distributed-energy"].clone();
    sd.name = "two-household".into();
    sd.seed = 7;
    sd.pv_share = 0.5;
    sd.bes_share = 0.5;
    sd.bev_share = 0.5;
    sd.ehp_share = 0.5;
    sd.dhn_share = 0.5;
    sd
}

pub fn two_household_quarter() -> QuarterModel {
    realize_quarter(&two_household_scenario(), &two_household_grid()).unwrap()
}

/// The distributed-energy preset with a fixed name and seed.
pub fn preset_scenario(name: &str, seed: u64) -> ScenarioDescription {
    let mut sd = presets()["distributed-energy"].clone();
    sd.name = name.to_string();
    sd.seed = seed;
    sd
}
