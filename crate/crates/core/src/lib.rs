//! Scenario generator and quasi-stationary simulator for integrated
//! (multi-modal) living-quarter energy systems.
//!
//! The crate covers the full pipeline:
//!
//! 1. [`scenario`] — parse a scenario description and realize a quarter from it,
//! 2. [`grid`] — import/validate electric benchmark grids and build the
//!    per-unit admittance matrix,
//! 3. [`buildings`] — thermal envelopes and nominal heat loads,
//! 4. [`dhn`] — district-heating topology synthesis and pipe sizing,
//! 5. [`prosumer`] — household component sizing, profiles and smart meters,
//! 6. [`quarterdb`] — the relational quarter bundle (CSV tables + manifest),
//! 7. [`simgen`] — simulation assembly and dynamic-model text emission,
//! 8. [`engine`] — quasi-stationary time-series simulation (AC power flow,
//!    device physics, steady-state DHN balance),
//! 9. [`report`] — congestion metrics and CSV/SVG output.
//!
//! Everything downstream of a seed is deterministic: the same scenario and
//! grid always produce byte-identical bundles and result files.

pub mod buildings;
pub mod dhn;
pub mod engine;
pub mod grid;
pub mod profiles;
pub mod prosumer;
pub mod quarterdb;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod simgen;
pub mod weather;
