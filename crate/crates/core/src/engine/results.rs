//! Simulation results: per-step series for every bus, branch, transformer,
//! household and DHN pipe, plus device-state trajectories.
//!
//! Persistence mirrors the bundle style: one semicolon-separated CSV per
//! metric family (first column ISO-8601 timestamp, one column per element)
//! plus `meta.json`. Output is byte-deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::parse_timestamp;

#[derive(Debug, Error)]
pub enum ResultIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {detail}")]
    Malformed { path: String, detail: String },
}

/// A family of element series sharing the common time axis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesGroup {
    pub ids: Vec<String>,
    /// `rows[step][element]`
    pub rows: Vec<Vec<f64>>,
}

impl SeriesGroup {
    pub fn new(ids: Vec<String>) -> SeriesGroup {
        SeriesGroup {
            ids,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.ids.len());
        self.rows.push(row);
    }

    pub fn column(&self, id: &str) -> Option<Vec<f64>> {
        let k = self.ids.iter().position(|i| i == id)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub quarter_name: String,
    pub seed: u64,
    pub start: String,
    pub dt_s: f64,
    pub steps: usize,
    pub base_mva: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub meta: ResultMeta,
    pub times: Vec<NaiveDateTime>,
    pub bus_voltage_pu: SeriesGroup,
    pub bus_angle_rad: SeriesGroup,
    pub line_current_a: SeriesGroup,
    pub line_loading_pct: SeriesGroup,
    pub transformer_s_mva: SeriesGroup,
    pub transformer_loading_pct: SeriesGroup,
    pub household_p_true_w: SeriesGroup,
    pub household_q_true_var: SeriesGroup,
    pub household_p_measured_w: SeriesGroup,
    pub household_q_measured_var: SeriesGroup,
    pub pipe_flow_kg_s: SeriesGroup,
    pub bes_soc: SeriesGroup,
    pub bev_soc: SeriesGroup,
    pub t_indoor_c: SeriesGroup,
    /// Power drawn from the boundary at the slack bus.
    pub slack_p_mw: Vec<f64>,
    pub slack_q_mvar: Vec<f64>,
}

const GROUP_FILES: [&str; 14] = [
    "bus_voltage_pu",
    "bus_voltage_angle_rad",
    "line_current_a",
    "line_loading_pct",
    "transformer_s_mva",
    "transformer_loading_pct",
    "household_p_true_w",
    "household_q_true_var",
    "household_p_measured_w",
    "household_q_measured_var",
    "dhn_pipe_flow_kg_s",
    "bes_soc",
    "bev_soc",
    "t_indoor_c",
];

impl ResultSet {
    fn groups(&self) -> Vec<(&'static str, &SeriesGroup)> {
        vec![
            ("bus_voltage_pu", &self.bus_voltage_pu),
            ("bus_voltage_angle_rad", &self.bus_angle_rad),
            ("line_current_a", &self.line_current_a),
            ("line_loading_pct", &self.line_loading_pct),
            ("transformer_s_mva", &self.transformer_s_mva),
            ("transformer_loading_pct", &self.transformer_loading_pct),
            ("household_p_true_w", &self.household_p_true_w),
            ("household_q_true_var", &self.household_q_true_var),
            ("household_p_measured_w", &self.household_p_measured_w),
            ("household_q_measured_var", &self.household_q_measured_var),
            ("dhn_pipe_flow_kg_s", &self.pipe_flow_kg_s),
            ("bes_soc", &self.bes_soc),
            ("bev_soc", &self.bev_soc),
            ("t_indoor_c", &self.t_indoor_c),
        ]
    }

    /// Writes all series files plus `meta.json` and `slack.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ResultIoError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source: std::io::Error| ResultIoError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, group) in self.groups() {
            let mut out = String::from("timestamp");
            for id in &group.ids {
                out.push(';');
                out.push_str(id);
            }
            out.push('\n');
            for (k, row) in group.rows.iter().enumerate() {
                out.push_str(&self.times[k].format("%Y-%m-%dT%H:%M:%S").to_string());
                for v in row {
                    out.push(';');
                    out.push_str(&format!("{v}"));
                }
                out.push('\n');
            }
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, out).map_err(io_err(&path))?;
        }
        let mut slack = String::from("timestamp;p_mw;q_mvar\n");
        for k in 0..self.times.len() {
            slack.push_str(&format!(
                "{};{};{}\n",
                self.times[k].format("%Y-%m-%dT%H:%M:%S"),
                self.slack_p_mw[k],
                self.slack_q_mvar[k]
            ));
        }
        let path = dir.join("slack.csv");
        std::fs::write(&path, slack).map_err(io_err(&path))?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes");
        let path = dir.join("meta.json");
        std::fs::write(&path, meta).map_err(io_err(&path))?;
        Ok(())
    }

    /// Reads a result directory written by [`ResultSet::save`].
    pub fn load(dir: &Path) -> Result<ResultSet, ResultIoError> {
        let read = |name: &str| -> Result<String, ResultIoError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| ResultIoError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let meta: ResultMeta =
            serde_json::from_str(&read("meta.json")?).map_err(|e| ResultIoError::Malformed {
                path: dir.join("meta.json").display().to_string(),
                detail: e.to_string(),
            })?;

        let mut times: Vec<NaiveDateTime> = Vec::new();
        let mut groups: BTreeMap<&str, SeriesGroup> = BTreeMap::new();
        for name in GROUP_FILES {
            let path = format!("{name}.csv");
            let content = read(&path)?;
            let bad = |detail: String| ResultIoError::Malformed {
                path: dir.join(&path).display().to_string(),
                detail,
            };
            let mut lines = content.lines();
            let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
            let ids: Vec<String> = header
                .split(';')
                .skip(1)
                .map(|s| s.to_string())
                .collect();
            let mut group = SeriesGroup::new(ids);
            let mut file_times = Vec::new();
            for line in lines {
                if line.is_empty() {
                    continue;
                }
                let mut fields = line.split(';');
                let ts = fields.next().ok_or_else(|| bad("missing timestamp".into()))?;
                file_times.push(parse_timestamp(ts).map_err(bad)?);
                let row: Vec<f64> = fields
                    .map(|f| f.parse().map_err(|_| bad(format!("bad number {f:?}"))))
                    .collect::<Result<_, _>>()?;
                if row.len() != group.ids.len() {
                    return Err(bad(format!(
                        "row has {} values for {} columns",
                        row.len(),
                        group.ids.len()
                    )));
                }
                group.rows.push(row);
            }
            if times.is_empty() {
                times = file_times;
            }
            groups.insert(name, group);
        }

        let content = read("slack.csv")?;
        let mut slack_p = Vec::new();
        let mut slack_q = Vec::new();
        for (k, line) in content.lines().enumerate() {
            if k == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(';').collect();
            let bad = |detail: String| ResultIoError::Malformed {
                path: dir.join("slack.csv").display().to_string(),
                detail,
            };
            if fields.len() != 3 {
                return Err(bad("expected three columns".into()));
            }
            slack_p.push(fields[1].parse().map_err(|_| bad("bad p_mw".into()))?);
            slack_q.push(fields[2].parse().map_err(|_| bad("bad q_mvar".into()))?);
        }

        let mut take = |name: &str| groups.remove(name).expect("parsed above");
        Ok(ResultSet {
            meta,
            times,
            bus_voltage_pu: take("bus_voltage_pu"),
            bus_angle_rad: take("bus_voltage_angle_rad"),
            line_current_a: take("line_current_a"),
            line_loading_pct: take("line_loading_pct"),
            transformer_s_mva: take("transformer_s_mva"),
            transformer_loading_pct: take("transformer_loading_pct"),
            household_p_true_w: take("household_p_true_w"),
            household_q_true_var: take("household_q_true_var"),
            household_p_measured_w: take("household_p_measured_w"),
            household_q_measured_var: take("household_q_measured_var"),
            pipe_flow_kg_s: take("dhn_pipe_flow_kg_s"),
            bes_soc: take("bes_soc"),
            bev_soc: take("bev_soc"),
            t_indoor_c: take("t_indoor_c"),
            slack_p_mw: slack_p,
            slack_q_mvar: slack_q,
        })
    }
}
