//! Regenerates the checked-in example data under `data/`: the two grid
//! fixtures in the SimBench dialect, the synthetic weather series and the
//! example scenario config. Output is byte-deterministic; a test guards that
//! the checked-in files stay in sync with the builders.
//!
//! Run from anywhere in the workspace: `cargo run -p quartier --example gen_fixtures`

use std::path::Path;

use quartier::grid::{simbench, synth};
use quartier::weather;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let data = root.join("data");

    simbench::export_simbench(&synth::lv_rural1(), &data.join("grids/lv-rural1"))
        .expect("export lv-rural1");
    simbench::export_simbench(&synth::mv_rural_ring(), &data.join("grids/mv-ring"))
        .expect("export mv-ring");

    let first_day = chrono::NaiveDate::from_ymd_opt(2020, 4, 5).expect("valid date");
    let series = weather::synthetic_april(first_day, 7);
    std::fs::create_dir_all(data.join("weather")).expect("mkdir weather");
    std::fs::write(data.join("weather/april_synthetic.csv"), series.to_csv())
        .expect("write weather");

    let config = r#"{
  "name": "distributed-energy",
  "seed": 20230406,
  "preset": "distributed-energy"
}
"#;
    std::fs::create_dir_all(data.join("scenarios")).expect("mkdir scenarios");
    std::fs::write(data.join("scenarios/distributed-energy.json"), config)
        .expect("write scenario");

    println!("fixtures written to {}", data.display());
}
