//! Import/export of electric grids in the SimBench CSV dialect.
//!
//! The dialect is a directory of semicolon-separated UTF-8 files with header
//! rows. Only the columns listed below are read; unknown columns are ignored.
//!
//! | file                  | required columns                                  |
//! |-----------------------|---------------------------------------------------|
//! | `Node.csv`            | `id;type;vmR;subnet;coordID`                      |
//! | `Coordinates.csv`     | `id;x;y`                                          |
//! | `Line.csv`            | `id;nodeA;nodeB;type;length`                      |
//! | `LineType.csv`        | `id;r;x;iMax`                                     |
//! | `Transformer.csv`     | `id;nodeHV;nodeLV;type`                           |
//! | `TransformerType.csv` | `id;sR;vmImp;pCu`                                 |
//! | `Load.csv`            | `id;node`                                         |
//! | `ExternalNet.csv`     | `id;node` (optional, marks slack buses)           |
//!
//! Only `Node.csv` is mandatory; any other absent file is treated as empty.
//! The slack bus is the one referenced by `ExternalNet.csv`, or any node whose
//! `type` column is `slack`. Units follow SimBench: `vmR` in kV, `length` in
//! km, `r`/`x` in Ω/km, `iMax` in A, `sR` in MVA, `vmImp` in %, `pCu` in kW.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use super::{Bus, BusKind, GridError, GridTopology, Layer, LineSegment, Transformer};

struct Table {
    path: String,
    header: BTreeMap<String, usize>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(dir: &Path, name: &str, required: bool) -> Result<Option<Table>, GridError> {
        let path = dir.join(name);
        if !path.is_file() {
            return if required {
                Err(GridError::MissingFile(name.to_string()))
            } else {
                Ok(None)
            };
        }
        let display = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b';')
            .flexible(true)
            .from_path(&path)
            .map_err(|e| GridError::Malformed {
                path: display.clone(),
                detail: e.to_string(),
            })?;
        let header = reader
            .headers()
            .map_err(|e| GridError::Malformed {
                path: display.clone(),
                detail: e.to_string(),
            })?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| GridError::Malformed {
                path: display.clone(),
                detail: e.to_string(),
            })?;
            rows.push(record.iter().map(|f| f.trim().to_string()).collect());
        }
        Ok(Some(Table {
            path: display,
            header,
            rows,
        }))
    }

    fn column(&self, name: &str) -> Result<usize, GridError> {
        self.header
            .get(name)
            .copied()
            .ok_or_else(|| GridError::Malformed {
                path: self.path.clone(),
                detail: format!("missing column {name:?}"),
            })
    }

    fn text(&self, row: &[String], col: usize) -> String {
        row.get(col).cloned().unwrap_or_default()
    }

    fn number(&self, row: &[String], col: usize, name: &str) -> Result<f64, GridError> {
        let raw = self.text(row, col);
        raw.parse().map_err(|_| GridError::Malformed {
            path: self.path.clone(),
            detail: format!("column {name:?}: cannot parse {raw:?} as number"),
        })
    }
}

/// Reads a grid from `dir` in the SimBench CSV dialect.
pub fn import_simbench(dir: &Path) -> Result<GridTopology, GridError> {
    let nodes = Table::read(dir, "Node.csv", true)?.expect("required");
    let coords = Table::read(dir, "Coordinates.csv", false)?;
    let lines = Table::read(dir, "Line.csv", false)?;
    let line_types = Table::read(dir, "LineType.csv", false)?;
    let trafos = Table::read(dir, "Transformer.csv", false)?;
    let trafo_types = Table::read(dir, "TransformerType.csv", false)?;
    let loads = Table::read(dir, "Load.csv", false)?;
    let ext_nets = Table::read(dir, "ExternalNet.csv", false)?;

    let mut dangling: Vec<String> = Vec::new();

    let mut coord_map: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    if let Some(t) = &coords {
        let (ci, cx, cy) = (t.column("id")?, t.column("x")?, t.column("y")?);
        for row in &t.rows {
            coord_map.insert(
                t.text(row, ci),
                (t.number(row, cx, "x")?, t.number(row, cy, "y")?),
            );
        }
    }

    let mut slack_nodes: BTreeSet<String> = BTreeSet::new();
    if let Some(t) = &ext_nets {
        let cn = t.column("node")?;
        for row in &t.rows {
            slack_nodes.insert(t.text(row, cn));
        }
    }

    // First pass over nodes: subnet → layers, to decide cell naming.
    let (ni, nt, nv, ns, nc) = (
        nodes.column("id")?,
        nodes.column("type")?,
        nodes.column("vmR")?,
        nodes.column("subnet")?,
        nodes.column("coordID")?,
    );
    let mut subnet_layers: BTreeMap<String, BTreeSet<Layer>> = BTreeMap::new();
    for row in &nodes.rows {
        let layer = Layer::from_vn_kv(nodes.number(row, nv, "vmR")?);
        subnet_layers
            .entry(nodes.text(row, ns))
            .or_default()
            .insert(layer);
    }

    let mut buses = Vec::with_capacity(nodes.rows.len());
    for row in &nodes.rows {
        let id = nodes.text(row, ni);
        let vn_kv = nodes.number(row, nv, "vmR")?;
        let layer = Layer::from_vn_kv(vn_kv);
        let subnet = nodes.text(row, ns);
        // One cell per subnet; a subnet spanning several voltage layers is
        // split into one cell per layer so each cell keeps a single layer.
        let cell_id = if subnet_layers[&subnet].len() > 1 {
            format!("{subnet}-{}", layer.as_str())
        } else if subnet.is_empty() {
            format!("cell-{}", layer.as_str())
        } else {
            subnet.clone()
        };
        let coord_id = nodes.text(row, nc);
        let coord = if coord_id.is_empty() {
            (0.0, 0.0)
        } else {
            match coord_map.get(&coord_id) {
                Some(&c) => c,
                None => {
                    dangling.push(format!("node {id} -> coordinate {coord_id}"));
                    (0.0, 0.0)
                }
            }
        };
        let kind = if slack_nodes.contains(&id) || nodes.text(row, nt).eq_ignore_ascii_case("slack")
        {
            BusKind::Slack
        } else {
            BusKind::Pq
        };
        buses.push(Bus {
            id,
            vn_kv,
            kind,
            coord,
            cell_id,
            layer,
        });
    }
    let bus_ids: BTreeSet<String> = buses.iter().map(|b| b.id.clone()).collect();

    // Line types: id → (r, x, iMax).
    let mut lt_map: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    if let Some(t) = &line_types {
        let (ci, cr, cx, cm) = (
            t.column("id")?,
            t.column("r")?,
            t.column("x")?,
            t.column("iMax")?,
        );
        for row in &t.rows {
            lt_map.insert(
                t.text(row, ci),
                (
                    t.number(row, cr, "r")?,
                    t.number(row, cx, "x")?,
                    t.number(row, cm, "iMax")?,
                ),
            );
        }
    }

    let mut segments = Vec::new();
    if let Some(t) = &lines {
        if !t.rows.is_empty() && line_types.is_none() {
            return Err(GridError::MissingFile("LineType.csv".to_string()));
        }
        let (ci, ca, cb, ct, cl) = (
            t.column("id")?,
            t.column("nodeA")?,
            t.column("nodeB")?,
            t.column("type")?,
            t.column("length")?,
        );
        for row in &t.rows {
            let id = t.text(row, ci);
            let (from_bus, to_bus) = (t.text(row, ca), t.text(row, cb));
            for end in [&from_bus, &to_bus] {
                if !bus_ids.contains(end) {
                    dangling.push(format!("line {id} -> node {end}"));
                }
            }
            let type_id = t.text(row, ct);
            let Some(&(r, x, i_max)) = lt_map.get(&type_id) else {
                dangling.push(format!("line {id} -> line type {type_id}"));
                continue;
            };
            segments.push(LineSegment {
                id,
                from_bus,
                to_bus,
                r_ohm_per_km: r,
                x_ohm_per_km: x,
                length_km: t.number(row, cl, "length")?,
                i_max_a: i_max,
            });
        }
    }

    // Transformer types: id → (sR, vmImp, pCu).
    let mut tt_map: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    if let Some(t) = &trafo_types {
        let (ci, cs, cv, cp) = (
            t.column("id")?,
            t.column("sR")?,
            t.column("vmImp")?,
            t.column("pCu")?,
        );
        for row in &t.rows {
            tt_map.insert(
                t.text(row, ci),
                (
                    t.number(row, cs, "sR")?,
                    t.number(row, cv, "vmImp")?,
                    t.number(row, cp, "pCu")?,
                ),
            );
        }
    }

    let mut transformers = Vec::new();
    if let Some(t) = &trafos {
        if !t.rows.is_empty() && trafo_types.is_none() {
            return Err(GridError::MissingFile("TransformerType.csv".to_string()));
        }
        let (ci, ch, cl, ct) = (
            t.column("id")?,
            t.column("nodeHV")?,
            t.column("nodeLV")?,
            t.column("type")?,
        );
        for row in &t.rows {
            let id = t.text(row, ci);
            let (hv_bus, lv_bus) = (t.text(row, ch), t.text(row, cl));
            for end in [&hv_bus, &lv_bus] {
                if !bus_ids.contains(end) {
                    dangling.push(format!("transformer {id} -> node {end}"));
                }
            }
            let type_id = t.text(row, ct);
            let Some(&(s_rated, vm_imp, p_cu)) = tt_map.get(&type_id) else {
                dangling.push(format!("transformer {id} -> transformer type {type_id}"));
                continue;
            };
            // vkr in % from copper losses: pCu[kW] / (sR[MVA]·1000 kW) · 100.
            let vkr_percent = p_cu / (10.0 * s_rated);
            transformers.push(Transformer {
                id,
                hv_bus,
                lv_bus,
                s_rated_mva: s_rated,
                vk_percent: vm_imp,
                vkr_percent,
            });
        }
    }

    let mut load_anchors = Vec::new();
    if let Some(t) = &loads {
        let (ci, cn) = (t.column("id")?, t.column("node")?);
        for row in &t.rows {
            let id = t.text(row, ci);
            let node = t.text(row, cn);
            if !bus_ids.contains(&node) {
                dangling.push(format!("load {id} -> node {node}"));
            }
            load_anchors.push((id, node));
        }
    }

    if !dangling.is_empty() {
        return Err(GridError::Integrity(dangling.join("; ")));
    }

    Ok(GridTopology {
        buses,
        lines: segments,
        transformers,
        load_anchors,
    })
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), GridError> {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).map_err(|e| GridError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(content.as_bytes()).map_err(|e| GridError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Writes `g` to `dir` in the SimBench CSV dialect, deterministically.
///
/// Line and transformer types are reconstructed by grouping identical
/// electrical parameters; `import_simbench(export_simbench(g)) == g`.
pub fn export_simbench(g: &GridTopology, dir: &Path) -> Result<(), GridError> {
    std::fs::create_dir_all(dir).map_err(|e| GridError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;

    let mut node_csv = String::from("id;type;vmR;subnet;coordID\n");
    let mut coord_csv = String::from("id;x;y\n");
    for b in &g.buses {
        let coord_id = format!("coord-{}", b.id);
        let kind = match b.kind {
            BusKind::Slack => "slack",
            BusKind::Pq => "node",
        };
        node_csv.push_str(&format!(
            "{};{};{};{};{}\n",
            b.id, kind, b.vn_kv, b.cell_id, coord_id
        ));
        coord_csv.push_str(&format!("{};{};{}\n", coord_id, b.coord.0, b.coord.1));
    }
    write_file(dir, "Node.csv", &node_csv)?;
    write_file(dir, "Coordinates.csv", &coord_csv)?;

    // Group lines into types by identical (r, x, iMax).
    let mut line_type_ids: BTreeMap<String, String> = BTreeMap::new();
    let mut line_type_rows = String::from("id;r;x;iMax\n");
    let mut line_csv = String::from("id;nodeA;nodeB;type;length\n");
    for l in &g.lines {
        let key = format!("{};{};{}", l.r_ohm_per_km, l.x_ohm_per_km, l.i_max_a);
        let next_id = format!("lt-{:03}", line_type_ids.len() + 1);
        let type_id = line_type_ids.entry(key.clone()).or_insert_with(|| {
            line_type_rows.push_str(&format!("{next_id};{key}\n"));
            next_id
        });
        line_csv.push_str(&format!(
            "{};{};{};{};{}\n",
            l.id, l.from_bus, l.to_bus, type_id, l.length_km
        ));
    }
    write_file(dir, "Line.csv", &line_csv)?;
    write_file(dir, "LineType.csv", &line_type_rows)?;

    let mut trafo_type_ids: BTreeMap<String, String> = BTreeMap::new();
    let mut trafo_type_rows = String::from("id;sR;vmImp;pCu\n");
    let mut trafo_csv = String::from("id;nodeHV;nodeLV;type\n");
    for t in &g.transformers {
        let p_cu = t.vkr_percent * 10.0 * t.s_rated_mva;
        let key = format!("{};{};{}", t.s_rated_mva, t.vk_percent, p_cu);
        let next_id = format!("tt-{:03}", trafo_type_ids.len() + 1);
        let type_id = trafo_type_ids.entry(key.clone()).or_insert_with(|| {
            trafo_type_rows.push_str(&format!("{next_id};{key}\n"));
            next_id
        });
        trafo_csv.push_str(&format!(
            "{};{};{};{}\n",
            t.id, t.hv_bus, t.lv_bus, type_id
        ));
    }
    write_file(dir, "Transformer.csv", &trafo_csv)?;
    write_file(dir, "TransformerType.csv", &trafo_type_rows)?;

    let mut load_csv = String::from("id;node\n");
    for (id, node) in &g.load_anchors {
        load_csv.push_str(&format!("{id};{node}\n"));
    }
    write_file(dir, "Load.csv", &load_csv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::validate_topology;

    #[test]
    fn round_trip_preserves_topology() {
        let g = crate::grid::synth::lv_rural1();
        let dir = tempfile::tempdir().unwrap();
        export_simbench(&g, dir.path()).unwrap();
        let g2 = import_simbench(dir.path()).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn missing_node_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        match import_simbench(dir.path()) {
            Err(GridError::MissingFile(name)) => assert_eq!(name, "Node.csv"),
            other => panic!("expected missing-file error, got {other:?}"),
        }
    }

    #[test]
    fn node_file_only_gives_single_bus_topology() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("Node.csv"),
            "id;type;vmR;subnet;coordID\nn1;node;0.4;LV1;\n",
        )
        .unwrap();
        let g = import_simbench(dir.path()).unwrap();
        assert_eq!(g.buses.len(), 1);
        assert!(g.lines.is_empty());
        // The degenerate grid imports fine; the missing slack surfaces later.
        let report = validate_topology(&g);
        assert!(report
            .iter()
            .any(|f| matches!(f, crate::grid::TopologyFinding::MissingSlack)));
    }

    #[test]
    fn dangling_load_reference_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("Node.csv"),
            "id;type;vmR;subnet;coordID\nn1;slack;0.4;LV1;\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("Load.csv"), "id;node\nload1;ghost\n").unwrap();
        match import_simbench(dir.path()) {
            Err(GridError::Integrity(detail)) => {
                assert!(detail.contains("load1"));
                assert!(detail.contains("ghost"));
            }
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_columns_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("Node.csv"),
            "id;type;vmR;vmSetp;subnet;voltLvl;coordID\nn1;slack;20.0;1.0;MV1;5;\n",
        )
        .unwrap();
        let g = import_simbench(dir.path()).unwrap();
        assert_eq!(g.buses[0].vn_kv, 20.0);
        assert_eq!(g.buses[0].kind, BusKind::Slack);
    }

    #[test]
    fn external_net_marks_slack() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("Node.csv"),
            "id;type;vmR;subnet;coordID\nn1;busbar;20.0;MV1;\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("ExternalNet.csv"), "id;node\next1;n1\n").unwrap();
        let g = import_simbench(dir.path()).unwrap();
        assert_eq!(g.buses[0].kind, BusKind::Slack);
    }
}
