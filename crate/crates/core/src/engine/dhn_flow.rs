//! Steady-state DHN balance at runtime: instantaneous heat demand fixes the
//! vertex mass flows, tree aggregation fixes the pipe flows. Consumers are
//! ideal (fixed return temperature, no pipe heat losses).

use std::collections::BTreeMap;

use crate::dhn::{aggregate_edge_flows, DhnError, DhnNetwork};

#[derive(Debug, Clone)]
pub struct DhnFlowSolution {
    /// Mass flow per pipe, aligned with `network.pipes`.
    pub pipe_flow_kg_s: Vec<f64>,
    /// Return temperature per vertex, aligned with `network.vertices`.
    pub vertex_return_c: Vec<f64>,
    /// Vertices whose demand exceeded the design NHL (clipped).
    pub clipped: Vec<String>,
}

/// Solves the instantaneous DHN mass flows for a per-vertex heat demand in
/// watts. Demand above a vertex's design NHL is clipped with a warning.
pub fn solve_dhn(
    network: &DhnNetwork,
    demand_w: &BTreeMap<String, f64>,
) -> Result<DhnFlowSolution, DhnError> {
    let dt = network.t_supply_c - network.t_return_c;
    if dt <= 0.0 {
        return Err(DhnError::SupplyNotAboveReturn {
            t_supply: network.t_supply_c,
            t_return: network.t_return_c,
        });
    }
    let mut clipped = Vec::new();
    let vertex_flows: Vec<f64> = network
        .vertices
        .iter()
        .map(|v| {
            let wanted = demand_w.get(&v.node_ref).copied().unwrap_or(0.0);
            let q = if wanted > v.nhl_w {
                clipped.push(v.node_ref.clone());
                v.nhl_w
            } else {
                wanted
            };
            q / (network.cp_water * dt)
        })
        .collect();
    let edges: Vec<(String, String)> = network
        .pipes
        .iter()
        .map(|p| (p.from_vertex.clone(), p.to_vertex.clone()))
        .collect();
    let pipe_flow_kg_s = aggregate_edge_flows(&network.vertices, &edges, &vertex_flows)?
        .into_iter()
        .map(|e| e.flow)
        .collect();
    Ok(DhnFlowSolution {
        pipe_flow_kg_s,
        vertex_return_c: vec![network.t_return_c; network.vertices.len()],
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dhn::{build_topology, size_pipes, DhnVertex, DnCatalog, SizingParams, TopologyMode};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn network(loads: &[(&str, f64, f64, f64)]) -> DhnNetwork {
        let mut vertices = vec![DhnVertex {
            node_ref: "src".into(),
            coord: (0.0, 0.0),
            nhl_w: 0.0,
            is_source: true,
        }];
        for &(id, x, y, nhl) in loads {
            vertices.push(DhnVertex {
                node_ref: id.into(),
                coord: (x, y),
                nhl_w: nhl,
                is_source: false,
            });
        }
        let tree = build_topology(&vertices, TopologyMode::Mst, None).unwrap();
        size_pipes(&vertices, &tree, SizingParams::default(), &DnCatalog::builtin()).unwrap()
    }

    #[test]
    fn zero_demand_zero_flows() {
        let net = network(&[("a", 50.0, 0.0, 10_000.0), ("b", 100.0, 0.0, 10_000.0)]);
        let solution = solve_dhn(&net, &BTreeMap::new()).unwrap();
        assert!(solution.pipe_flow_kg_s.iter().all(|&f| f == 0.0));
        assert!(solution.clipped.is_empty());
    }

    #[test]
    fn single_leaf_demand_hand_value() {
        // 125.58 kW at ΔT = 30 K and c_p = 4186 → exactly 1 kg/s.
        let net = network(&[("a", 50.0, 0.0, 200_000.0)]);
        let demand = BTreeMap::from([("a".to_string(), 125_580.0)]);
        let solution = solve_dhn(&net, &demand).unwrap();
        assert_eq!(solution.pipe_flow_kg_s.len(), 1);
        assert_relative_eq!(solution.pipe_flow_kg_s[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn demand_above_design_is_clipped_with_warning() {
        let net = network(&[("a", 50.0, 0.0, 10_000.0)]);
        let demand = BTreeMap::from([("a".to_string(), 50_000.0)]);
        let solution = solve_dhn(&net, &demand).unwrap();
        assert_eq!(solution.clipped, vec!["a".to_string()]);
        let design_flow = 10_000.0 / (net.cp_water * 30.0);
        assert_relative_eq!(solution.pipe_flow_kg_s[0], design_flow, epsilon = 1e-12);
    }

    #[test]
    fn junction_conservation_on_random_trees() {
        let mut rng = crate::rng::stream(15, "dhn-conservation");
        for _ in 0..30 {
            let n = rng.gen_range(3..12);
            let loads: Vec<(String, f64, f64, f64)> = (0..n)
                .map(|k| {
                    (
                        format!("v{k:02}"),
                        rng.gen_range(-300.0..300.0),
                        rng.gen_range(-300.0..300.0),
                        rng.gen_range(0.0..40_000.0),
                    )
                })
                .collect();
            let borrowed: Vec<(&str, f64, f64, f64)> = loads
                .iter()
                .map(|(id, x, y, nhl)| (id.as_str(), *x, *y, *nhl))
                .collect();
            let net = network(&borrowed);
            let demand: BTreeMap<String, f64> = net
                .vertices
                .iter()
                .map(|v| (v.node_ref.clone(), rng.gen_range(0.0..=v.nhl_w.max(0.0))))
                .collect();
            let solution = solve_dhn(&net, &demand).unwrap();

            // At every vertex: inflow = outflow + local consumption.
            let dt = net.t_supply_c - net.t_return_c;
            for (vi, v) in net.vertices.iter().enumerate() {
                let local = demand[&v.node_ref].min(v.nhl_w) / (net.cp_water * dt);
                let mut balance = -local;
                for (pi, p) in net.pipes.iter().enumerate() {
                    // Pipes are oriented (from = upstream, to = downstream).
                    if p.to_vertex == v.node_ref {
                        balance += solution.pipe_flow_kg_s[pi];
                    }
                    if p.from_vertex == v.node_ref {
                        balance -= solution.pipe_flow_kg_s[pi];
                    }
                }
                if v.is_source {
                    continue; // the source injects the total
                }
                assert!(
                    balance.abs() < 1e-9,
                    "vertex {} residual {balance}",
                    v.node_ref
                );
                assert_eq!(solution.vertex_return_c[vi], net.t_return_c);
            }
        }
    }
}
