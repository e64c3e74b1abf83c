//! District heating network synthesis: cycle-free topology selection, vertex
//! mass flows and pipe diameter sizing.
//!
//! The network is designed at the nominal point: every consumer vertex needs
//! its NHL delivered at the supply/return temperature spread, which fixes the
//! vertex mass flow `ṁ = Q̇ / (c_p·ΔT)`, the tree edge flows by downstream
//! aggregation, and the pipe diameter as the smallest catalog DN that keeps
//! the nominal velocity at or below `v_max`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Water density at the design supply temperature (≈70 °C), kg/m³.
pub const RHO_WATER: f64 = 977.0;
/// Specific heat capacity of water, J/(kg·K).
pub const CP_WATER: f64 = 4186.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhnVertex {
    /// Grid node this vertex sits on.
    pub node_ref: String,
    pub coord: (f64, f64),
    /// Design heat load at this vertex; 0 for junctions and sources.
    pub nhl_w: f64,
    pub is_source: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhnPipe {
    pub id: String,
    pub from_vertex: String,
    pub to_vertex: String,
    pub length_m: f64,
    pub nominal_mass_flow_kg_s: f64,
    pub inner_diameter_m: f64,
    pub dn_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhnNetwork {
    pub vertices: Vec<DhnVertex>,
    pub pipes: Vec<DhnPipe>,
    pub t_supply_c: f64,
    pub t_return_c: f64,
    pub v_max_m_s: f64,
    pub rho_water: f64,
    pub cp_water: f64,
}

impl DhnNetwork {
    /// Number of connected components over the vertex set.
    pub fn components(&self) -> usize {
        let index: BTreeMap<&str, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.node_ref.as_str(), i))
            .collect();
        let mut uf = UnionFind::new(self.vertices.len());
        for p in &self.pipes {
            if let (Some(&a), Some(&b)) = (
                index.get(p.from_vertex.as_str()),
                index.get(p.to_vertex.as_str()),
            ) {
                uf.union(a, b);
            }
        }
        (0..self.vertices.len())
            .filter(|&i| uf.find(i) == i)
            .count()
    }

    /// Forest property: `|pipes| = |vertices| − components` and no cycles.
    pub fn is_forest(&self) -> bool {
        self.pipes.len() == self.vertices.len() - self.components()
    }
}

#[derive(Debug, Error)]
pub enum DhnError {
    #[error("supply temperature {t_supply} °C must exceed return temperature {t_return} °C")]
    SupplyNotAboveReturn { t_supply: f64, t_return: f64 },
    #[error("electric topology not radial")]
    ElectricNotRadial,
    #[error("vertex {0} not reachable from any source over the electric edges")]
    ElectricDisconnected(String),
    #[error("tree component containing {0} has no source vertex")]
    NoSourceInComponent(String),
    #[error("edge {from}-{to}: flow {flow_kg_s} kg/s exceeds the largest catalog DN at v_max")]
    FlowExceedsCatalog {
        from: String,
        to: String,
        flow_kg_s: f64,
    },
    #[error("unknown vertex {0} in edge list")]
    UnknownVertex(String),
    #[error("cannot read DN catalog {path}: {detail}")]
    Catalog { path: String, detail: String },
}

/// Nominal-diameter catalog: ordered `(label, inner diameter in m)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DnCatalog {
    entries: Vec<(String, f64)>,
}

impl DnCatalog {
    /// Standard steel-pipe series DN15..DN200 (inner diameters in mm).
    pub fn builtin() -> DnCatalog {
        let mm = [
            ("DN15", 16.0),
            ("DN20", 21.6),
            ("DN25", 28.5),
            ("DN32", 37.2),
            ("DN40", 43.1),
            ("DN50", 54.5),
            ("DN65", 70.3),
            ("DN80", 82.5),
            ("DN100", 107.1),
            ("DN125", 132.5),
            ("DN150", 160.3),
            ("DN200", 210.1),
        ];
        DnCatalog {
            entries: mm
                .iter()
                .map(|&(label, d)| (label.to_string(), d / 1000.0))
                .collect(),
        }
    }

    /// Loads an override catalog from a `dn_label;inner_diameter_mm` CSV.
    pub fn from_csv_path(path: &Path) -> Result<DnCatalog, DhnError> {
        let err = |detail: String| DhnError::Catalog {
            path: path.display().to_string(),
            detail,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, row) in text.lines().enumerate() {
            if i == 0 || row.trim().is_empty() {
                continue;
            }
            let (label, dia) = row
                .split_once(';')
                .ok_or_else(|| err(format!("row {}: expected two columns", i + 1)))?;
            let d_mm: f64 = dia
                .trim()
                .parse()
                .map_err(|_| err(format!("row {}: bad diameter {dia:?}", i + 1)))?;
            entries.push((label.trim().to_string(), d_mm / 1000.0));
        }
        entries.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(DnCatalog { entries })
    }

    /// Smallest catalog entry whose inner diameter is ≥ `d_raw_m`.
    pub fn round_up(&self, d_raw_m: f64) -> Option<(&str, f64)> {
        self.entries
            .iter()
            .find(|(_, d)| *d >= d_raw_m)
            .map(|(label, d)| (label.as_str(), *d))
    }
}

/// Topology selection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyMode {
    /// Reuse the (radial) electric line topology.
    MirrorElectric,
    /// Minimum spanning tree under Euclidean vertex spacing.
    Mst,
}

impl TopologyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TopologyMode::MirrorElectric => "mirror-electric",
            TopologyMode::Mst => "mst",
        }
    }
}

impl std::str::FromStr for TopologyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mirror-electric" => Ok(TopologyMode::MirrorElectric),
            "mst" => Ok(TopologyMode::Mst),
            other => Err(format!("unknown topology mode {other:?}")),
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[rb] = ra;
        true
    }
}

fn euclid(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Selects the cycle-free pipe topology over `vertices`.
///
/// `Mst` ignores `electric_edges` and computes the minimum spanning tree of
/// the complete Euclidean graph with deterministic tie-breaking by
/// `(weight, lower vertex id, higher vertex id)`. `MirrorElectric` keeps the
/// electric edges restricted to the vertex set and fails if they are meshed
/// or leave a vertex unconnected.
pub fn build_topology(
    vertices: &[DhnVertex],
    mode: TopologyMode,
    electric_edges: Option<&[(String, String)]>,
) -> Result<Vec<(String, String)>, DhnError> {
    let index: BTreeMap<&str, usize> = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (v.node_ref.as_str(), i))
        .collect();

    match mode {
        TopologyMode::Mst => {
            let mut candidates = Vec::new();
            for i in 0..vertices.len() {
                for j in (i + 1)..vertices.len() {
                    let w = euclid(vertices[i].coord, vertices[j].coord);
                    let (lo, hi) = if vertices[i].node_ref <= vertices[j].node_ref {
                        (i, j)
                    } else {
                        (j, i)
                    };
                    candidates.push((w, lo, hi));
                }
            }
            candidates.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| vertices[a.1].node_ref.cmp(&vertices[b.1].node_ref))
                    .then_with(|| vertices[a.2].node_ref.cmp(&vertices[b.2].node_ref))
            });
            let mut uf = UnionFind::new(vertices.len());
            let mut edges = Vec::new();
            for (_, i, j) in candidates {
                if uf.union(i, j) {
                    edges.push((
                        vertices[i].node_ref.clone(),
                        vertices[j].node_ref.clone(),
                    ));
                    if edges.len() + 1 == vertices.len() {
                        break;
                    }
                }
            }
            Ok(edges)
        }
        TopologyMode::MirrorElectric => {
            let all = electric_edges.unwrap_or(&[]);
            let mut uf = UnionFind::new(vertices.len());
            let mut edges = Vec::new();
            for (a, b) in all {
                let (Some(&ia), Some(&ib)) = (index.get(a.as_str()), index.get(b.as_str()))
                else {
                    continue; // edge outside the vertex set
                };
                if !uf.union(ia, ib) {
                    return Err(DhnError::ElectricNotRadial);
                }
                edges.push((a.clone(), b.clone()));
            }
            // Every vertex must be reachable from a source.
            let source_roots: Vec<usize> = vertices
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_source)
                .map(|(i, _)| uf.find(i))
                .collect();
            for (i, v) in vertices.iter().enumerate() {
                if !source_roots.contains(&uf.find(i)) {
                    return Err(DhnError::ElectricDisconnected(v.node_ref.clone()));
                }
            }
            Ok(edges)
        }
    }
}

/// Design mass flow for one vertex: `ṁ = Q̇ / (c_p · (t_supply − t_return))`.
pub fn vertex_mass_flow(
    nhl_w: f64,
    t_supply_c: f64,
    t_return_c: f64,
    cp_water: f64,
) -> Result<f64, DhnError> {
    if t_supply_c <= t_return_c {
        return Err(DhnError::SupplyNotAboveReturn {
            t_supply: t_supply_c,
            t_return: t_return_c,
        });
    }
    Ok(nhl_w / (cp_water * (t_supply_c - t_return_c)))
}

/// Raw inner diameter that carries `m_dot_kg_s` at exactly `v_max_m_s`.
pub fn required_diameter_m(m_dot_kg_s: f64, rho: f64, v_max_m_s: f64) -> f64 {
    (4.0 * m_dot_kg_s / (rho * std::f64::consts::PI * v_max_m_s)).sqrt()
}

/// Flow velocity of `m_dot_kg_s` in a pipe of inner diameter `d_m`.
pub fn velocity_m_s(m_dot_kg_s: f64, rho: f64, d_m: f64) -> f64 {
    m_dot_kg_s / (rho * std::f64::consts::PI * d_m * d_m / 4.0)
}

/// Design parameters for pipe sizing.
#[derive(Debug, Clone, Copy)]
pub struct SizingParams {
    pub t_supply_c: f64,
    pub t_return_c: f64,
    pub v_max_m_s: f64,
    /// Pipe length = Euclidean distance × this street-routing factor.
    pub routing_factor: f64,
    pub rho_water: f64,
    pub cp_water: f64,
}

impl Default for SizingParams {
    fn default() -> Self {
        SizingParams {
            t_supply_c: 70.0,
            t_return_c: 40.0,
            v_max_m_s: 1.5,
            routing_factor: 1.3,
            rho_water: RHO_WATER,
            cp_water: CP_WATER,
        }
    }
}

/// Flow over one edge of a source-rooted forest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFlow {
    /// Sum of vertex flows downstream of the edge.
    pub flow: f64,
    /// Whether the second vertex of the edge tuple is the downstream one.
    pub downstream_is_b: bool,
}

/// Aggregates per-vertex flows into per-edge flows over a source-rooted
/// forest: each edge carries the sum of vertex flows downstream of it.
/// Returned flows align with `edges`.
pub fn aggregate_edge_flows(
    vertices: &[DhnVertex],
    edges: &[(String, String)],
    vertex_flows: &[f64],
) -> Result<Vec<EdgeFlow>, DhnError> {
    let index: BTreeMap<&str, usize> = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (v.node_ref.as_str(), i))
        .collect();
    let n = vertices.len();
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (neighbor, edge idx)
    for (e, (a, b)) in edges.iter().enumerate() {
        let ia = *index
            .get(a.as_str())
            .ok_or_else(|| DhnError::UnknownVertex(a.clone()))?;
        let ib = *index
            .get(b.as_str())
            .ok_or_else(|| DhnError::UnknownVertex(b.clone()))?;
        adjacency[ia].push((ib, e));
        adjacency[ib].push((ia, e));
    }

    // Orient each component away from its source and accumulate subtree flow
    // per edge (iterative post-order).
    let mut edge_flow = vec![
        EdgeFlow {
            flow: 0.0,
            downstream_is_b: true
        };
        edges.len()
    ];
    let mut visited = vec![false; n];
    for (start, v) in vertices.iter().enumerate() {
        if !v.is_source {
            continue;
        }
        if visited[start] {
            continue;
        }
        // subtree_flow(u) computed after all children; stack of (vertex,
        // parent-edge, child-cursor).
        let mut flows = vec![0.0f64; n];
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(start, None, 0)];
        visited[start] = true;
        loop {
            let Some(&(u, parent_edge, cursor)) = stack.last() else {
                break;
            };
            if cursor < adjacency[u].len() {
                stack.last_mut().expect("nonempty").2 += 1;
                let (next, edge) = adjacency[u][cursor];
                if !visited[next] {
                    visited[next] = true;
                    stack.push((next, Some(edge), 0));
                }
            } else {
                stack.pop();
                flows[u] += vertex_flows[u];
                if let Some(edge) = parent_edge {
                    edge_flow[edge] = EdgeFlow {
                        flow: flows[u],
                        downstream_is_b: edges[edge].1 == vertices[u].node_ref,
                    };
                }
                if let Some(&(parent, _, _)) = stack.last() {
                    flows[parent] += flows[u];
                }
            }
        }
    }
    if let Some(unreached) = visited.iter().position(|&v| !v) {
        return Err(DhnError::NoSourceInComponent(
            vertices[unreached].node_ref.clone(),
        ));
    }
    Ok(edge_flow)
}

/// Aggregates downstream vertex flows over the tree and sizes every edge to
/// the smallest catalog DN that respects `v_max`.
pub fn size_pipes(
    vertices: &[DhnVertex],
    tree: &[(String, String)],
    params: SizingParams,
    catalog: &DnCatalog,
) -> Result<DhnNetwork, DhnError> {
    let index: BTreeMap<&str, usize> = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (v.node_ref.as_str(), i))
        .collect();
    let vertex_flows: Vec<f64> = vertices
        .iter()
        .map(|v| vertex_mass_flow(v.nhl_w, params.t_supply_c, params.t_return_c, params.cp_water))
        .collect::<Result<_, _>>()?;
    let edge_flow = aggregate_edge_flows(vertices, tree, &vertex_flows)?;

    let mut pipes = Vec::with_capacity(tree.len());
    for (e, (a, b)) in tree.iter().enumerate() {
        let (ia, ib) = (index[a.as_str()], index[b.as_str()]);
        let flow = edge_flow[e].flow;
        // Pipes are stored flow-oriented: from = upstream, to = downstream.
        let (from, to) = if edge_flow[e].downstream_is_b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        let d_raw = required_diameter_m(flow, params.rho_water, params.v_max_m_s);
        let (dn_label, inner) =
            catalog
                .round_up(d_raw)
                .ok_or_else(|| DhnError::FlowExceedsCatalog {
                    from: from.clone(),
                    to: to.clone(),
                    flow_kg_s: flow,
                })?;
        let distance = euclid(vertices[ia].coord, vertices[ib].coord);
        pipes.push(DhnPipe {
            id: format!("pipe-{from}-{to}"),
            from_vertex: from,
            to_vertex: to,
            // Street routing exceeds the straight line; never below 1 m.
            length_m: (distance * params.routing_factor).max(1.0),
            nominal_mass_flow_kg_s: flow,
            inner_diameter_m: inner,
            dn_label: dn_label.to_string(),
        });
    }

    Ok(DhnNetwork {
        vertices: vertices.to_vec(),
        pipes,
        t_supply_c: params.t_supply_c,
        t_return_c: params.t_return_c,
        v_max_m_s: params.v_max_m_s,
        rho_water: params.rho_water,
        cp_water: params.cp_water,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn vertex(id: &str, x: f64, y: f64, nhl: f64, source: bool) -> DhnVertex {
        DhnVertex {
            node_ref: id.to_string(),
            coord: (x, y),
            nhl_w: nhl,
            is_source: source,
        }
    }

    #[test]
    fn collinear_mst_picks_adjacent_edges() {
        // All 3 spanning trees of the triangle: {01,12}=2, {01,02}=3, {02,12}=3.
        let vs = vec![
            vertex("a", 0.0, 0.0, 0.0, true),
            vertex("b", 1.0, 0.0, 1000.0, false),
            vertex("c", 2.0, 0.0, 1000.0, false),
        ];
        let edges = build_topology(&vs, TopologyMode::Mst, None).unwrap();
        assert_eq!(
            edges,
            vec![("a".to_string(), "b".to_string()), ("b".to_string(), "c".to_string())]
        );
        let weight: f64 = edges
            .iter()
            .map(|(a, b)| {
                let va = vs.iter().find(|v| &v.node_ref == a).unwrap();
                let vb = vs.iter().find(|v| &v.node_ref == b).unwrap();
                euclid(va.coord, vb.coord)
            })
            .sum();
        assert_relative_eq!(weight, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mirror_mode_returns_electric_edges_verbatim() {
        let vs = vec![
            vertex("a", 0.0, 0.0, 0.0, true),
            vertex("b", 1.0, 0.0, 1000.0, false),
            vertex("c", 2.0, 0.0, 1000.0, false),
        ];
        let electric = vec![
            ("a".to_string(), "b".to_string()),
            ("b".to_string(), "c".to_string()),
        ];
        let edges = build_topology(&vs, TopologyMode::MirrorElectric, Some(&electric)).unwrap();
        assert_eq!(edges, electric);
    }

    #[test]
    fn mirror_mode_rejects_meshed_electric_edges() {
        let vs = vec![
            vertex("a", 0.0, 0.0, 0.0, true),
            vertex("b", 1.0, 0.0, 1000.0, false),
            vertex("c", 2.0, 0.0, 1000.0, false),
        ];
        let electric = vec![
            ("a".to_string(), "b".to_string()),
            ("b".to_string(), "c".to_string()),
            ("c".to_string(), "a".to_string()),
        ];
        assert!(matches!(
            build_topology(&vs, TopologyMode::MirrorElectric, Some(&electric)),
            Err(DhnError::ElectricNotRadial)
        ));
    }

    #[test]
    fn mass_flow_hand_values() {
        // 12 280 W / (4186 · 30) = 0.0978 kg/s.
        let m = vertex_mass_flow(12_280.0, 70.0, 40.0, CP_WATER).unwrap();
        assert_relative_eq!(m, 12_280.0 / 125_580.0, epsilon = 1e-12);
        assert_relative_eq!(m, 0.0978, epsilon = 1e-4);

        assert_eq!(vertex_mass_flow(0.0, 70.0, 40.0, CP_WATER).unwrap(), 0.0);

        // Inverse: 1 kg/s at ΔT = 30 K carries 125.58 kW.
        let q = 1.0 * CP_WATER * 30.0;
        assert_relative_eq!(q, 125_580.0, epsilon = 1e-9);

        assert!(matches!(
            vertex_mass_flow(1000.0, 40.0, 70.0, CP_WATER),
            Err(DhnError::SupplyNotAboveReturn { .. })
        ));
    }

    #[test]
    fn diameter_hand_values() {
        let catalog = DnCatalog::builtin();
        // ṁ = 0.0978 kg/s, ρ = 977, v_max = 1.5 → d_raw ≈ 9.2 mm → DN15.
        let d = required_diameter_m(0.0978, 977.0, 1.5);
        assert_relative_eq!(d, 0.0092, epsilon = 1e-4);
        let (label, inner) = catalog.round_up(d).unwrap();
        assert_eq!(label, "DN15");
        assert_relative_eq!(inner, 0.016, epsilon = 1e-12);

        // ṁ = 10 kg/s → d_raw ≈ 93.2 mm → DN100 (107.1 mm).
        let d = required_diameter_m(10.0, 977.0, 1.5);
        assert_relative_eq!(d, 0.0932, epsilon = 1e-4);
        let (label, inner) = catalog.round_up(d).unwrap();
        assert_eq!(label, "DN100");
        assert_relative_eq!(inner, 0.1071, epsilon = 1e-12);
    }

    #[test]
    fn edge_flows_aggregate_downstream() {
        // Source s feeds junction j which feeds leaves a (0.1 kg/s worth of
        // load) and b (0.2 kg/s worth).
        let dt = 30.0;
        let vs = vec![
            vertex("s", 0.0, 0.0, 0.0, true),
            vertex("j", 10.0, 0.0, 0.0, false),
            vertex("a", 20.0, 5.0, 0.1 * CP_WATER * dt, false),
            vertex("b", 20.0, -5.0, 0.2 * CP_WATER * dt, false),
        ];
        let tree = vec![
            ("s".to_string(), "j".to_string()),
            ("j".to_string(), "a".to_string()),
            ("j".to_string(), "b".to_string()),
        ];
        let net = size_pipes(&vs, &tree, SizingParams::default(), &DnCatalog::builtin()).unwrap();
        let flow_of = |a: &str, b: &str| {
            net.pipes
                .iter()
                .find(|p| p.from_vertex == a && p.to_vertex == b)
                .unwrap()
                .nominal_mass_flow_kg_s
        };
        assert_relative_eq!(flow_of("s", "j"), 0.3, epsilon = 1e-12);
        assert_relative_eq!(flow_of("j", "a"), 0.1, epsilon = 1e-12);
        assert_relative_eq!(flow_of("j", "b"), 0.2, epsilon = 1e-12);
        assert!(net.is_forest());
    }

    #[test]
    fn sizing_error_when_flow_exceeds_catalog() {
        let dt = 30.0;
        // ~600 kg/s needs more than DN200.
        let vs = vec![
            vertex("s", 0.0, 0.0, 0.0, true),
            vertex("a", 10.0, 0.0, 600.0 * CP_WATER * dt, false),
        ];
        let tree = vec![("s".to_string(), "a".to_string())];
        match size_pipes(&vs, &tree, SizingParams::default(), &DnCatalog::builtin()) {
            Err(DhnError::FlowExceedsCatalog { from, to, .. }) => {
                assert_eq!((from.as_str(), to.as_str()), ("s", "a"));
            }
            other => panic!("expected sizing error, got {other:?}"),
        }
    }

    #[test]
    fn velocity_bound_holds_after_rounding() {
        let mut rng = crate::rng::stream(3, "dhn-velocity");
        for _ in 0..50 {
            let n = rng.gen_range(2..10);
            let mut vs = vec![vertex("s", 0.0, 0.0, 0.0, true)];
            for k in 0..n {
                vs.push(vertex(
                    &format!("v{k:02}"),
                    rng.gen_range(-200.0..200.0),
                    rng.gen_range(-200.0..200.0),
                    rng.gen_range(0.0..30_000.0),
                    false,
                ));
            }
            let tree = build_topology(&vs, TopologyMode::Mst, None).unwrap();
            let net =
                size_pipes(&vs, &tree, SizingParams::default(), &DnCatalog::builtin()).unwrap();
            for p in &net.pipes {
                let v = velocity_m_s(p.nominal_mass_flow_kg_s, net.rho_water, p.inner_diameter_m);
                assert!(v <= net.v_max_m_s + 1e-12, "pipe {} at {v} m/s", p.id);
                assert!(p.length_m > 0.0);
            }
            assert!(net.is_forest());
        }
    }

    #[test]
    fn monotone_sizing_in_vertex_nhl() {
        let vs = |leaf_nhl: f64| {
            vec![
                vertex("s", 0.0, 0.0, 0.0, true),
                vertex("j", 50.0, 0.0, 8000.0, false),
                vertex("a", 100.0, 0.0, leaf_nhl, false),
            ]
        };
        let tree = vec![
            ("s".to_string(), "j".to_string()),
            ("j".to_string(), "a".to_string()),
        ];
        let catalog = DnCatalog::builtin();
        let dn_index = |net: &DhnNetwork, id: &str| {
            let pipe = net.pipes.iter().find(|p| p.id.contains(id)).unwrap();
            catalog
                .entries
                .iter()
                .position(|(l, _)| *l == pipe.dn_label)
                .unwrap()
        };
        let mut previous_root = 0;
        for nhl in [1_000.0, 50_000.0, 200_000.0, 800_000.0] {
            let net = size_pipes(&vs(nhl), &tree, SizingParams::default(), &catalog).unwrap();
            let root = dn_index(&net, "s-j");
            assert!(root >= previous_root, "root DN shrank when NHL grew");
            previous_root = root;
        }
    }

    #[test]
    fn missing_source_is_an_error() {
        let vs = vec![
            vertex("a", 0.0, 0.0, 1000.0, false),
            vertex("b", 10.0, 0.0, 1000.0, false),
        ];
        let tree = vec![("a".to_string(), "b".to_string())];
        assert!(matches!(
            size_pipes(&vs, &tree, SizingParams::default(), &DnCatalog::builtin()),
            Err(DhnError::NoSourceInComponent(_))
        ));
    }
}
