//! Congestion metrics over a result set, and CSV/SVG rendering.

mod svg;

use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::engine::results::ResultSet;
use crate::grid::{per_unit_branches, BranchKind, GridTopology};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("element {0} has no rating")]
    MissingRating(String),
    #[error("branch endpoint {0} not present in the result set")]
    UnknownElement(String),
    #[error("unknown output format {0:?} (supported: csv, svg)")]
    UnknownFormat(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Loadings re-derived from the stored voltage profile and the topology's
/// ratings (independent of the loadings the engine recorded).
#[derive(Debug, Clone)]
pub struct Loadings {
    pub line_ids: Vec<String>,
    pub line_loading_pct: Vec<Vec<f64>>,
    pub transformer_ids: Vec<String>,
    pub transformer_loading_pct: Vec<Vec<f64>>,
}

/// Recomputes branch currents from the bus voltages and converts them into
/// loading percentages against the current-carrying capacity (lines) and the
/// rated apparent power (transformers).
pub fn compute_loadings(r: &ResultSet, g: &GridTopology) -> Result<Loadings, ReportError> {
    let branches = per_unit_branches(g, r.meta.base_mva)?;
    for l in &g.lines {
        if l.i_max_a <= 0.0 {
            return Err(ReportError::MissingRating(l.id.clone()));
        }
    }
    for t in &g.transformers {
        if t.s_rated_mva <= 0.0 {
            return Err(ReportError::MissingRating(t.id.clone()));
        }
    }
    // Map topology bus order → result column order.
    let column: Vec<usize> = g
        .buses
        .iter()
        .map(|b| {
            r.bus_voltage_pu
                .ids
                .iter()
                .position(|id| *id == b.id)
                .ok_or_else(|| ReportError::UnknownElement(b.id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let steps = r.bus_voltage_pu.rows.len();
    let mut line_ids = Vec::new();
    let mut transformer_ids = Vec::new();
    for b in &branches {
        match b.kind {
            BranchKind::Line { .. } => line_ids.push(b.element_id.clone()),
            BranchKind::Transformer { .. } => transformer_ids.push(b.element_id.clone()),
        }
    }
    let mut line_loading_pct = vec![Vec::with_capacity(line_ids.len()); steps];
    let mut transformer_loading_pct = vec![Vec::with_capacity(transformer_ids.len()); steps];
    for k in 0..steps {
        let vm = &r.bus_voltage_pu.rows[k];
        let va = &r.bus_angle_rad.rows[k];
        for branch in &branches {
            let v_from = num_complex::Complex64::from_polar(
                vm[column[branch.from]],
                va[column[branch.from]],
            );
            let v_to =
                num_complex::Complex64::from_polar(vm[column[branch.to]], va[column[branch.to]]);
            let i_pu = (v_from - v_to) * branch.y_series;
            match branch.kind {
                BranchKind::Line { i_base_a, i_max_a } => {
                    line_loading_pct[k].push(i_pu.norm() * i_base_a / i_max_a * 100.0);
                }
                BranchKind::Transformer { s_rated_mva } => {
                    let s = (v_from * i_pu.conj()).norm().max((v_to * i_pu.conj()).norm())
                        * r.meta.base_mva;
                    transformer_loading_pct[k].push(s / s_rated_mva * 100.0);
                }
            }
        }
    }
    Ok(Loadings {
        line_ids,
        line_loading_pct,
        transformer_ids,
        transformer_loading_pct,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    pub loading_max_pct: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            v_min_pu: 0.9,
            v_max_pu: 1.1,
            loading_max_pct: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CongestionKind {
    Undervoltage,
    Overvoltage,
    LineOverload,
    TransformerOverload,
}

impl CongestionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CongestionKind::Undervoltage => "undervoltage",
            CongestionKind::Overvoltage => "overvoltage",
            CongestionKind::LineOverload => "line-overload",
            CongestionKind::TransformerOverload => "transformer-overload",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionEvent {
    pub kind: CongestionKind,
    pub element_id: String,
    pub start: NaiveDateTime,
    /// Contiguous violating steps × dt.
    pub duration_s: f64,
    pub peak_value: f64,
    pub limit: f64,
}

/// Merges contiguous violating steps of one series into events.
fn scan_series(
    kind: CongestionKind,
    element_id: &str,
    times: &[NaiveDateTime],
    dt_s: f64,
    values: impl Iterator<Item = f64>,
    violates: impl Fn(f64) -> bool,
    more_severe: impl Fn(f64, f64) -> bool,
    limit: f64,
    out: &mut Vec<CongestionEvent>,
) {
    let mut open: Option<CongestionEvent> = None;
    for (k, v) in values.enumerate() {
        if violates(v) {
            match &mut open {
                Some(event) => {
                    event.duration_s += dt_s;
                    if more_severe(v, event.peak_value) {
                        event.peak_value = v;
                    }
                }
                None => {
                    open = Some(CongestionEvent {
                        kind,
                        element_id: element_id.to_string(),
                        start: times[k],
                        duration_s: dt_s,
                        peak_value: v,
                        limit,
                    });
                }
            }
        } else if let Some(event) = open.take() {
            out.push(event);
        }
    }
    if let Some(event) = open.take() {
        out.push(event);
    }
}

/// Detects voltage-band and overload violations, merging contiguous steps
/// per element into single events.
pub fn detect_congestion(
    r: &ResultSet,
    loadings: &Loadings,
    limits: &Limits,
) -> Vec<CongestionEvent> {
    let mut events = Vec::new();
    let dt = r.meta.dt_s;
    for (col, id) in r.bus_voltage_pu.ids.iter().enumerate() {
        scan_series(
            CongestionKind::Undervoltage,
            id,
            &r.times,
            dt,
            r.bus_voltage_pu.rows.iter().map(|row| row[col]),
            |v| v < limits.v_min_pu,
            |a, b| a < b,
            limits.v_min_pu,
            &mut events,
        );
        scan_series(
            CongestionKind::Overvoltage,
            id,
            &r.times,
            dt,
            r.bus_voltage_pu.rows.iter().map(|row| row[col]),
            |v| v > limits.v_max_pu,
            |a, b| a > b,
            limits.v_max_pu,
            &mut events,
        );
    }
    for (col, id) in loadings.line_ids.iter().enumerate() {
        scan_series(
            CongestionKind::LineOverload,
            id,
            &r.times,
            dt,
            loadings.line_loading_pct.iter().map(|row| row[col]),
            |v| v > limits.loading_max_pct,
            |a, b| a > b,
            limits.loading_max_pct,
            &mut events,
        );
    }
    for (col, id) in loadings.transformer_ids.iter().enumerate() {
        scan_series(
            CongestionKind::TransformerOverload,
            id,
            &r.times,
            dt,
            loadings.transformer_loading_pct.iter().map(|row| row[col]),
            |v| v > limits.loading_max_pct,
            |a, b| a > b,
            limits.loading_max_pct,
            &mut events,
        );
    }
    events
}

fn metric_csv(times: &[NaiveDateTime], ids: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("timestamp");
    for id in ids {
        out.push(';');
        out.push_str(id);
    }
    out.push('\n');
    for (k, row) in rows.iter().enumerate() {
        out.push_str(&times[k].format("%Y-%m-%dT%H:%M:%S").to_string());
        for v in row {
            out.push(';');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    out
}

/// Writes the selected formats into `out_dir` and returns the file list.
///
/// CSV gives one file per metric family plus `events.csv`; SVG gives one
/// line chart per family.
pub fn render_outputs(
    r: &ResultSet,
    loadings: &Loadings,
    events: &[CongestionEvent],
    formats: &[String],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    for f in formats {
        if f != "csv" && f != "svg" {
            return Err(ReportError::UnknownFormat(f.clone()));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    let write = |name: &str, content: String| -> Result<PathBuf, ReportError> {
        let path = out_dir.join(name);
        std::fs::write(&path, content).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    };

    if formats.iter().any(|f| f == "csv") {
        written.push(write(
            "voltages.csv",
            metric_csv(&r.times, &r.bus_voltage_pu.ids, &r.bus_voltage_pu.rows),
        )?);
        written.push(write(
            "line_loadings.csv",
            metric_csv(&r.times, &loadings.line_ids, &loadings.line_loading_pct),
        )?);
        written.push(write(
            "transformer_loadings.csv",
            metric_csv(
                &r.times,
                &loadings.transformer_ids,
                &loadings.transformer_loading_pct,
            ),
        )?);
        let mut events_csv =
            String::from("kind;element_id;start;duration_s;peak_value;limit\n");
        for e in events {
            events_csv.push_str(&format!(
                "{};{};{};{};{};{}\n",
                e.kind.as_str(),
                e.element_id,
                e.start.format("%Y-%m-%dT%H:%M:%S"),
                e.duration_s,
                e.peak_value,
                e.limit
            ));
        }
        written.push(write("events.csv", events_csv)?);
    }
    if formats.iter().any(|f| f == "svg") {
        written.push(write(
            "voltages.svg",
            svg::line_chart(
                "Bus voltages",
                "p.u.",
                &r.times,
                &r.bus_voltage_pu.ids,
                &r.bus_voltage_pu.rows,
            ),
        )?);
        written.push(write(
            "line_loadings.svg",
            svg::line_chart(
                "Line loading",
                "%",
                &r.times,
                &loadings.line_ids,
                &loadings.line_loading_pct,
            ),
        )?);
        written.push(write(
            "transformer_loadings.svg",
            svg::line_chart(
                "Transformer loading",
                "%",
                &r.times,
                &loadings.transformer_ids,
                &loadings.transformer_loading_pct,
            ),
        )?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_simulation;
    use crate::grid::synth;
    use crate::scenario::{presets, realize_quarter};
    use crate::simgen::assemble_simulation;
    use crate::weather::synthetic_april;
    use chrono::NaiveDate;

    fn simulated() -> (ResultSet, GridTopology) {
        let mut sd = presets()["distributed-energy"].clone();
        sd.name = "report-test".into();
        sd.seed = 17;
        let q = realize_quarter(&sd, &synth::lv_rural1()).unwrap();
        let weather = synthetic_april(NaiveDate::from_ymd_opt(2020, 4, 6).unwrap(), 2);
        let m = assemble_simulation(&q, weather).unwrap();
        let start = NaiveDate::from_ymd_opt(2020, 4, 6)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let r = run_simulation(&m, start, 3.0, 900.0, None).unwrap();
        (r, m.grid.clone())
    }

    #[test]
    fn rederived_loadings_match_engine_within_1e9() {
        let (r, g) = simulated();
        let loadings = compute_loadings(&r, &g).unwrap();
        assert_eq!(loadings.line_ids, r.line_loading_pct.ids);
        for k in 0..r.times.len() {
            for (c, id) in loadings.line_ids.iter().enumerate() {
                let engine = r.line_loading_pct.rows[k][c];
                let derived = loadings.line_loading_pct[k][c];
                let scale = engine.abs().max(1e-9);
                assert!(
                    ((engine - derived) / scale).abs() < 1e-9,
                    "line {id} step {k}: {engine} vs {derived}"
                );
            }
            for c in 0..loadings.transformer_ids.len() {
                let engine = r.transformer_loading_pct.rows[k][c];
                let derived = loadings.transformer_loading_pct[k][c];
                let scale = engine.abs().max(1e-9);
                assert!(((engine - derived) / scale).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loading_ratio_hand_values() {
        // 100 A on a 200 A cable is 50 %; 0.315 MVA through 0.63 MVA is 50 %.
        assert_eq!(100.0 / 200.0 * 100.0, 50.0);
        assert_eq!(0.315 / 0.63 * 100.0, 50.0);
    }

    #[test]
    fn quiet_results_produce_no_events() {
        let (r, g) = simulated();
        let loadings = compute_loadings(&r, &g).unwrap();
        // Generous limits: nothing violates.
        let limits = Limits {
            v_min_pu: 0.0,
            v_max_pu: 2.0,
            loading_max_pct: 1e9,
        };
        assert!(detect_congestion(&r, &loadings, &limits).is_empty());
    }

    #[test]
    fn single_step_violation_becomes_one_event_of_dt() {
        let (mut r, g) = simulated();
        let loadings = compute_loadings(&r, &g).unwrap();
        r.bus_voltage_pu.rows[2][0] = 0.89;
        let events = detect_congestion(&r, &loadings, &Limits::default());
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, CongestionKind::Undervoltage);
        assert_eq!(events[0].duration_s, 900.0);
        assert_eq!(events[0].peak_value, 0.89);
        assert_eq!(events[0].start, r.times[2]);
    }

    #[test]
    fn contiguous_violations_merge_and_gaps_split() {
        let (mut r, g) = simulated();
        let loadings = compute_loadings(&r, &g).unwrap();
        // Steps 1-4 violate, then a gap, then steps 7-8.
        for k in [1, 2, 3, 4, 7, 8] {
            r.bus_voltage_pu.rows[k][0] = 0.85 - k as f64 * 0.001;
        }
        let events: Vec<CongestionEvent> =
            detect_congestion(&r, &loadings, &Limits::default())
                .into_iter()
                .filter(|e| e.element_id == r.bus_voltage_pu.ids[0])
                .collect();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].duration_s, 4.0 * 900.0);
        assert_eq!(events[1].duration_s, 2.0 * 900.0);
        // Peak keeps the worst (lowest) voltage of the merged window.
        assert_eq!(events[0].peak_value, 0.85 - 4.0 * 0.001);
        // Merged steps are covered exactly once.
        let covered: f64 = events.iter().map(|e| e.duration_s).sum();
        assert_eq!(covered, 6.0 * 900.0);
    }

    #[test]
    fn render_csv_and_svg_outputs() {
        let (r, g) = simulated();
        let loadings = compute_loadings(&r, &g).unwrap();
        let events = detect_congestion(&r, &loadings, &Limits::default());
        let dir = tempfile::tempdir().unwrap();
        let files = render_outputs(
            &r,
            &loadings,
            &events,
            &["csv".to_string(), "svg".to_string()],
            dir.path(),
        )
        .unwrap();
        assert_eq!(files.len(), 7);
        let voltages = std::fs::read_to_string(dir.path().join("voltages.csv")).unwrap();
        // Header plus one row per timestep.
        assert_eq!(voltages.lines().count(), r.times.len() + 1);
        let svg = std::fs::read_to_string(dir.path().join("voltages.svg")).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert_eq!(svg.matches("<svg").count(), 1);
        assert_eq!(svg.matches("</svg>").count(), 1);
        assert_eq!(
            svg.matches("<polyline").count(),
            svg.matches("</polyline>").count()
        );
    }

    #[test]
    fn unknown_format_is_rejected() {
        let (r, g) = simulated();
        let loadings = compute_loadings(&r, &g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        match render_outputs(&r, &loadings, &[], &["pdf".to_string()], dir.path()) {
            Err(ReportError::UnknownFormat(f)) => assert_eq!(f, "pdf"),
            other => panic!("expected unknown-format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_rating_is_reported() {
        let (r, mut g) = simulated();
        g.lines[0].i_max_a = 0.0;
        match compute_loadings(&r, &g) {
            Err(ReportError::MissingRating(id)) => assert_eq!(id, g.lines[0].id),
            other => panic!("expected missing-rating error, got {other:?}"),
        }
    }
}
