//! Per-unit bus-admittance assembly.
//!
//! Branch impedances are normalized to a common MVA base and the voltage base
//! of their bus level, then stamped into a sparse symmetric Y-bus. Transformers
//! enter as a series impedance derived from their short-circuit voltage on the
//! rating, re-based to the system base (no magnetizing branch, unity tap).

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::{GridError, GridTopology};

/// Sparse complex bus-admittance matrix in per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    bus_ids: Vec<String>,
    base_mva: f64,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn bus_ids(&self) -> &[String] {
        &self.bus_ids
    }

    pub fn index_of(&self, bus_id: &str) -> Option<usize> {
        self.bus_ids.iter().position(|b| b == bus_id)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries
            .get(&(i, j))
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Number of stored nonzero positions.
    pub fn stored_entries(&self) -> usize {
        self.entries.len()
    }

    /// Nonzero entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.entries
            .range((i, 0)..(i, usize::MAX))
            .map(|(&(_, j), &y)| (j, y))
    }

    fn add(&mut self, i: usize, j: usize, y: Complex64) {
        *self
            .entries
            .entry((i, j))
            .or_insert(Complex64::new(0.0, 0.0)) += y;
    }
}

/// Series admittance and ratings of one branch, per unit on the system base.
#[derive(Debug, Clone)]
pub struct BranchPu {
    pub element_id: String,
    pub from: usize,
    pub to: usize,
    pub y_series: Complex64,
    pub kind: BranchKind,
}

#[derive(Debug, Clone)]
pub enum BranchKind {
    /// Current base (A) for converting per-unit current back to amps, and the
    /// rated current for loading.
    Line { i_base_a: f64, i_max_a: f64 },
    Transformer { s_rated_mva: f64 },
}

/// Converts every branch of `g` to per unit on `base_mva`.
pub fn per_unit_branches(g: &GridTopology, base_mva: f64) -> Result<Vec<BranchPu>, GridError> {
    let index = g.bus_index();
    let mut branches = Vec::with_capacity(g.lines.len() + g.transformers.len());

    for line in &g.lines {
        let from = *index
            .get(line.from_bus.as_str())
            .ok_or_else(|| GridError::UnknownBus(line.from_bus.clone()))?;
        let to = *index
            .get(line.to_bus.as_str())
            .ok_or_else(|| GridError::UnknownBus(line.to_bus.clone()))?;
        let vn_kv = g.buses[from].vn_kv;
        let z_base_ohm = vn_kv * vn_kv / base_mva;
        let r = line.r_ohm_per_km * line.length_km / z_base_ohm;
        let x = line.x_ohm_per_km * line.length_km / z_base_ohm;
        if r == 0.0 && x == 0.0 {
            return Err(GridError::ZeroImpedanceBranch(line.id.clone()));
        }
        let i_base_a = base_mva * 1e6 / (3.0_f64.sqrt() * vn_kv * 1e3);
        branches.push(BranchPu {
            element_id: line.id.clone(),
            from,
            to,
            y_series: Complex64::new(r, x).inv(),
            kind: BranchKind::Line {
                i_base_a,
                i_max_a: line.i_max_a,
            },
        });
    }

    for t in &g.transformers {
        let from = *index
            .get(t.hv_bus.as_str())
            .ok_or_else(|| GridError::UnknownBus(t.hv_bus.clone()))?;
        let to = *index
            .get(t.lv_bus.as_str())
            .ok_or_else(|| GridError::UnknownBus(t.lv_bus.clone()))?;
        let z_pu_rating = t.vk_percent / 100.0;
        let r_pu_rating = t.vkr_percent / 100.0;
        if z_pu_rating == 0.0 {
            return Err(GridError::ZeroImpedanceBranch(t.id.clone()));
        }
        let x_pu_rating = (z_pu_rating * z_pu_rating - r_pu_rating * r_pu_rating)
            .max(0.0)
            .sqrt();
        // Re-base from the transformer rating to the system base.
        let rebase = base_mva / t.s_rated_mva;
        let z = Complex64::new(r_pu_rating * rebase, x_pu_rating * rebase);
        branches.push(BranchPu {
            element_id: t.id.clone(),
            from,
            to,
            y_series: z.inv(),
            kind: BranchKind::Transformer {
                s_rated_mva: t.s_rated_mva,
            },
        });
    }

    Ok(branches)
}

/// Assembles the bus-admittance matrix of `g` on `base_mva`.
///
/// Callers are expected to run [`super::validate_topology`] first; a zero
/// impedance branch is still rejected here because it makes Y-bus singular.
pub fn build_admittance(g: &GridTopology, base_mva: f64) -> Result<AdmittanceMatrix, GridError> {
    let mut y = AdmittanceMatrix {
        bus_ids: g.buses.iter().map(|b| b.id.clone()).collect(),
        base_mva,
        entries: BTreeMap::new(),
    };
    for branch in per_unit_branches(g, base_mva)? {
        let ys = branch.y_series;
        y.add(branch.from, branch.from, ys);
        y.add(branch.to, branch.to, ys);
        y.add(branch.from, branch.to, -ys);
        y.add(branch.to, branch.from, -ys);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, BusKind, Layer, LineSegment, Transformer};
    use approx::assert_relative_eq;

    fn pu_grid(x_pu: f64) -> GridTopology {
        // One branch whose impedance works out to exactly `x_pu` at 1 MVA on
        // a 1 kV base (z_base = 1 Ω).
        GridTopology {
            buses: vec![
                Bus {
                    id: "a".into(),
                    vn_kv: 1.0,
                    kind: BusKind::Slack,
                    coord: (0.0, 0.0),
                    cell_id: "c".into(),
                    layer: Layer::Mv,
                },
                Bus {
                    id: "b".into(),
                    vn_kv: 1.0,
                    kind: BusKind::Pq,
                    coord: (1.0, 0.0),
                    cell_id: "c".into(),
                    layer: Layer::Mv,
                },
            ],
            lines: vec![LineSegment {
                id: "ab".into(),
                from_bus: "a".into(),
                to_bus: "b".into(),
                r_ohm_per_km: 0.0,
                x_ohm_per_km: x_pu,
                length_km: 1.0,
                i_max_a: 100.0,
            }],
            transformers: vec![],
            load_anchors: vec![],
        }
    }

    #[test]
    fn two_bus_reactance_entries() {
        // 1/(j0.1) = -10j on the diagonal, +10j off the diagonal.
        let y = build_admittance(&pu_grid(0.1), 1.0).unwrap();
        assert_relative_eq!(y.get(0, 0).im, -10.0, epsilon = 1e-12);
        assert_relative_eq!(y.get(1, 1).im, -10.0, epsilon = 1e-12);
        assert_relative_eq!(y.get(0, 1).im, 10.0, epsilon = 1e-12);
        assert_relative_eq!(y.get(0, 0).re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn matrix_is_symmetric() {
        let g = synth_grid();
        let y = build_admittance(&g, 1.0).unwrap();
        for i in 0..y.n() {
            for j in 0..y.n() {
                assert_eq!(y.get(i, j), y.get(j, i));
            }
        }
    }

    #[test]
    fn rows_sum_to_zero_without_shunts() {
        let g = synth_grid();
        let y = build_admittance(&g, 1.0).unwrap();
        for i in 0..y.n() {
            let sum: Complex64 = y.row(i).map(|(_, v)| v).sum();
            assert!(sum.norm() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn sparsity_bound_holds() {
        let g = synth_grid();
        let y = build_admittance(&g, 1.0).unwrap();
        let branches = g.lines.len() + g.transformers.len();
        assert!(y.stored_entries() <= y.n() + 2 * branches);
    }

    #[test]
    fn zero_impedance_branch_is_rejected() {
        let mut g = pu_grid(0.1);
        g.lines[0].r_ohm_per_km = 0.0;
        g.lines[0].x_ohm_per_km = 0.0;
        match build_admittance(&g, 1.0) {
            Err(GridError::ZeroImpedanceBranch(id)) => assert_eq!(id, "ab"),
            other => panic!("expected zero-impedance error, got {other:?}"),
        }
    }

    #[test]
    fn rebase_round_trip_is_exact_within_tolerance() {
        let g = synth_grid();
        let y1 = build_admittance(&g, 1.0).unwrap();
        let y10 = build_admittance(&g, 10.0).unwrap();
        // Per-unit impedance scales with base power (admittance inversely):
        // converting back must reproduce the original within 1e-12 relative.
        for (&(i, j), &v) in &y1.entries {
            let back = y10.get(i, j) * 10.0;
            assert!(
                (back - v).norm() <= 1e-12 * v.norm().max(1.0),
                "entry ({i},{j}) mismatch: {v} vs {back}"
            );
        }
    }

    fn synth_grid() -> GridTopology {
        // MV bus, transformer, small LV feeder.
        let mut buses = vec![Bus {
            id: "mv".into(),
            vn_kv: 20.0,
            kind: BusKind::Slack,
            coord: (0.0, 0.0),
            cell_id: "mv".into(),
            layer: Layer::Mv,
        }];
        let mut lines = Vec::new();
        for k in 0..4 {
            buses.push(Bus {
                id: format!("lv{k}"),
                vn_kv: 0.4,
                kind: BusKind::Pq,
                coord: (k as f64 * 30.0, 10.0),
                cell_id: "lv".into(),
                layer: Layer::Lv,
            });
            if k > 0 {
                lines.push(LineSegment {
                    id: format!("l{k}"),
                    from_bus: format!("lv{}", k - 1),
                    to_bus: format!("lv{k}"),
                    r_ohm_per_km: 0.206,
                    x_ohm_per_km: 0.08,
                    length_km: 0.03,
                    i_max_a: 270.0,
                });
            }
        }
        GridTopology {
            buses,
            lines,
            transformers: vec![Transformer {
                id: "t1".into(),
                hv_bus: "mv".into(),
                lv_bus: "lv0".into(),
                s_rated_mva: 0.16,
                vk_percent: 4.0,
                vkr_percent: 1.2,
            }],
            load_anchors: vec![],
        }
    }
}
