//! Bundled example networks in the SimBench dialect.
//!
//! Construction is fully deterministic, so the checked-in CSV fixtures under
//! `data/grids/` can be regenerated byte-identically at any time via
//! [`super::simbench::export_simbench`].

use super::{Bus, BusKind, GridTopology, Layer, LineSegment, Transformer};

/// NAYY 4x150 SE distribution cable (Ω/km, Ω/km, A).
const LV_CABLE: (f64, f64, f64) = (0.2067, 0.0804, 270.0);
/// NA2XS2Y 1x185 medium-voltage cable.
const MV_CABLE: (f64, f64, f64) = (0.161, 0.117, 362.0);

struct Builder {
    g: GridTopology,
}

impl Builder {
    fn new() -> Builder {
        Builder {
            g: GridTopology::default(),
        }
    }

    fn bus(&mut self, id: &str, vn_kv: f64, kind: BusKind, coord: (f64, f64), cell: &str) {
        self.g.buses.push(Bus {
            id: id.to_string(),
            vn_kv,
            kind,
            coord,
            cell_id: cell.to_string(),
            layer: Layer::from_vn_kv(vn_kv),
        });
    }

    fn line(&mut self, id: &str, from: &str, to: &str, length_km: f64, cable: (f64, f64, f64)) {
        self.g.lines.push(LineSegment {
            id: id.to_string(),
            from_bus: from.to_string(),
            to_bus: to.to_string(),
            r_ohm_per_km: cable.0,
            x_ohm_per_km: cable.1,
            length_km,
            i_max_a: cable.2,
        });
    }

    fn trafo(&mut self, id: &str, hv: &str, lv: &str, s_mva: f64, vk: f64, vkr: f64) {
        self.g.transformers.push(Transformer {
            id: id.to_string(),
            hv_bus: hv.to_string(),
            lv_bus: lv.to_string(),
            s_rated_mva: s_mva,
            vk_percent: vk,
            vkr_percent: vkr,
        });
    }

    /// Radial LV subgrid below `mv_bus`: a station busbar plus `feeders`
    /// household buses per feeder, one load anchor per household bus (plus
    /// `extra_loads` additional anchors on the first feeder's first bus).
    fn lv_subgrid(
        &mut self,
        prefix: &str,
        cell: &str,
        mv_bus: &str,
        origin: (f64, f64),
        trafo_mva: f64,
        vk: f64,
        vkr: f64,
        feeders: &[usize],
        extra_loads: usize,
    ) {
        let station = format!("{prefix}-b001");
        self.bus(&station, 0.4, BusKind::Pq, origin, cell);
        self.trafo(
            &format!("{prefix}-tr"),
            mv_bus,
            &station,
            trafo_mva,
            vk,
            vkr,
        );
        let mut bus_no = 1usize;
        let mut line_no = 0usize;
        let mut household_no = 0usize;
        let spacing = 35.0;
        for (f, &len) in feeders.iter().enumerate() {
            let mut prev = station.clone();
            // Feeders fan out in distinct directions from the station.
            let (dx, dy) = match f % 4 {
                0 => (spacing, 0.0),
                1 => (0.0, spacing),
                2 => (-spacing, 0.0),
                _ => (0.0, -spacing),
            };
            for k in 1..=len {
                bus_no += 1;
                line_no += 1;
                household_no += 1;
                let id = format!("{prefix}-b{bus_no:03}");
                let coord = (
                    origin.0 + dx * k as f64 + if dy != 0.0 { 10.0 } else { 0.0 },
                    origin.1 + dy * k as f64 + if dx != 0.0 { 10.0 } else { 0.0 },
                );
                self.bus(&id, 0.4, BusKind::Pq, coord, cell);
                self.line(
                    &format!("{prefix}-l{line_no:03}"),
                    &prev,
                    &id,
                    spacing / 1000.0,
                    LV_CABLE,
                );
                self.g
                    .load_anchors
                    .push((format!("{prefix}-h{household_no:03}"), id.clone()));
                prev = id;
            }
        }
        for _ in 0..extra_loads {
            household_no += 1;
            self.g.load_anchors.push((
                format!("{prefix}-h{household_no:03}"),
                format!("{prefix}-b002"),
            ));
        }
    }
}

/// 13-household rural low-voltage feeder with an MV boundary bus as slack.
pub fn lv_rural1() -> GridTopology {
    let mut b = Builder::new();
    b.bus("mv1", 20.0, BusKind::Slack, (0.0, -50.0), "MV1");
    b.lv_subgrid(
        "lv1",
        "LV1",
        "mv1",
        (0.0, 0.0),
        0.16,
        4.0,
        1.175,
        &[7, 6],
        0,
    );
    b.g
}

/// Rural medium-voltage ring with six detailed LV subgrids (102 households)
/// and an HV boundary bus as slack.
///
/// Four subgrids follow the 13-household pattern of [`lv_rural1`]; two are
/// larger 25-household variants, one of which connects two households to the
/// same bus.
pub fn mv_rural_ring() -> GridTopology {
    let mut b = Builder::new();
    b.bus("hv1", 110.0, BusKind::Slack, (0.0, 2300.0), "HV1");
    b.bus("mv-hub", 20.0, BusKind::Pq, (0.0, 1500.0), "MVR");
    b.trafo("tr-hv", "hv1", "mv-hub", 25.0, 12.0, 0.41);

    // Six ring stations on a circle around the hub.
    let radius = 1500.0;
    let mut station_ids = Vec::new();
    for k in 1..=6 {
        // Hub sits at 90°; stations fill the rest of the circle.
        let angle = std::f64::consts::PI * (0.5 + 2.0 * k as f64 / 7.0);
        let coord = (radius * angle.cos(), radius * angle.sin());
        let id = format!("mv-st{k}");
        b.bus(&id, 20.0, BusKind::Pq, coord, "MVR");
        station_ids.push((id, coord));
    }
    let mut prev = "mv-hub".to_string();
    for (k, (id, _)) in station_ids.iter().enumerate() {
        b.line(&format!("mv-r{}", k + 1), &prev, id, 1.3, MV_CABLE);
        prev = id.clone();
    }
    b.line("mv-r7", &prev, "mv-hub", 1.3, MV_CABLE);

    for (k, (station, coord)) in station_ids.iter().enumerate() {
        let n = k + 1;
        let prefix = format!("lv{n}");
        let cell = format!("LVR{n}");
        let origin = (coord.0 * 1.08, coord.1 * 1.08);
        if n <= 4 {
            b.lv_subgrid(&prefix, &cell, station, origin, 0.16, 4.0, 1.175, &[7, 6], 0);
        } else {
            b.lv_subgrid(
                &prefix,
                &cell,
                station,
                origin,
                0.4,
                6.0,
                1.05,
                &[9, 8, 7],
                1,
            );
        }
    }
    b.g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::validate_topology;

    #[test]
    fn lv_rural1_has_13_anchors_and_validates() {
        let g = lv_rural1();
        assert_eq!(g.load_anchors.len(), 13);
        assert_eq!(g.transformers.len(), 1);
        assert!(validate_topology(&g).is_empty());
    }

    #[test]
    fn mv_ring_has_102_anchors_and_validates() {
        let g = mv_rural_ring();
        assert_eq!(g.load_anchors.len(), 102);
        assert_eq!(g.transformers.len(), 7);
        assert!(validate_topology(&g).is_empty());
        // One bus carries two prosumers.
        let mut per_bus = std::collections::BTreeMap::new();
        for (_, bus) in &g.load_anchors {
            *per_bus.entry(bus.clone()).or_insert(0usize) += 1;
        }
        assert!(per_bus.values().any(|&c| c == 2));
    }

    #[test]
    fn admittance_builds_for_both_fixtures() {
        for g in [lv_rural1(), mv_rural_ring()] {
            let y = crate::grid::build_admittance(&g, 1.0).unwrap();
            assert_eq!(y.n(), g.buses.len());
        }
    }
}
