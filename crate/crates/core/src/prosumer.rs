//! Prosumer component sizing, profile assignment and the smart-meter
//! measurement channel.
//!
//! A fully configured prosumer owns up to six components: PV, battery
//! storage, one or more BEVs, an electric heat pump, the inflexible load and
//! the smart meter. Sizing draws from named random sub-streams so component
//! parameters are reproducible per household.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buildings::{nominal_heat_load, ThermalEnvelope};
use crate::profiles::{ProfileError, ProfilePool, ProfileResolver};

/// EHP thermal rating = safety factor × NHL.
pub const EHP_SIZING_FACTOR: f64 = 1.2;
/// PV temperature coefficient of power, 1/K.
pub const PV_GAMMA_PER_K: f64 = -0.004;
/// Carnot quality grade of the shipped heat-pump model.
pub const EHP_ETA_CARNOT: f64 = 0.5;
/// BEV on-board charger rating, kW.
pub const BEV_CHARGER_KW: f64 = 11.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvConfig {
    pub p_peak_kw: f64,
    pub gamma_per_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesConfig {
    pub capacity_kwh: f64,
    pub p_max_kw: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub eta: f64,
    pub externally_controllable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevConfig {
    pub capacity_kwh: f64,
    pub p_charge_kw: f64,
    /// Filled by [`assign_profiles`].
    pub driving_profile_ref: Option<String>,
    pub externally_controllable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhpConfig {
    pub p_th_nominal_kw: f64,
    pub eta_carnot: f64,
}

/// How the household covers its heat demand. `None` stands for heating
/// outside the modeled sectors (e.g. gas); such households hold their indoor
/// setpoint without drawing electric or DHN power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeatMode {
    Ehp,
    Dhn,
    None,
}

impl HeatMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeatMode::Ehp => "EHP",
            HeatMode::Dhn => "DHN",
            HeatMode::None => "none",
        }
    }
}

impl std::str::FromStr for HeatMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "EHP" => Ok(HeatMode::Ehp),
            "DHN" => Ok(HeatMode::Dhn),
            "none" => Ok(HeatMode::None),
            other => Err(format!("unknown heat mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmConfig {
    pub sigma_p_w: f64,
    pub sigma_q_var: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadAssignment {
    pub profile_ref: String,
    /// Multiplier that scales the normalized profile to the household's
    /// annual demand.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerConfig {
    pub household_id: String,
    pub pv: Option<PvConfig>,
    pub bes: Option<BesConfig>,
    pub bevs: Vec<BevConfig>,
    pub ehp: Option<EhpConfig>,
    pub heat_mode: HeatMode,
    /// Filled by [`assign_profiles`].
    pub load: Option<LoadAssignment>,
    pub sm: SmConfig,
}

/// Which components the scenario realization assigned to one household.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComponentFlags {
    pub pv: bool,
    pub bes: bool,
    pub bev_count: usize,
    pub heat_mode: Option<HeatModeFlag>,
    pub bes_controllable: bool,
    pub bev_controllable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatModeFlag {
    Ehp,
    Dhn,
}

#[derive(Debug, Error)]
pub enum ProsumerError {
    #[error("household {0}: EHP assigned but the nominal heat load is zero")]
    EhpWithoutHeatLoad(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("household {household}: {source}")]
    Building {
        household: String,
        #[source]
        source: crate::buildings::BuildingError,
    },
}

/// Sizes the component set for one household.
///
/// Rules: EHP thermal rating is 1.2 × NHL at `t_ref_ambient_c`; PV peak power
/// is drawn from 3–15 kW; BES capacity follows the PV rating at 1 kWh per kW
/// (±20 %); BEVs get an 11 kW charger and a capacity from {40, 60, 80} kWh.
pub fn size_components<R: Rng>(
    household_id: &str,
    flags: ComponentFlags,
    env: &ThermalEnvelope,
    t_ref_ambient_c: f64,
    sm_sigma_p_w: f64,
    sm_sigma_q_var: f64,
    rng: &mut R,
) -> Result<ProsumerConfig, ProsumerError> {
    let pv = flags.pv.then(|| PvConfig {
        p_peak_kw: round3(rng.gen_range(3.0..=15.0)),
        gamma_per_k: PV_GAMMA_PER_K,
    });

    let bes = flags.bes.then(|| {
        let nominal_kwh = pv.map(|p| p.p_peak_kw).unwrap_or(8.0);
        let capacity_kwh = round3(nominal_kwh * rng.gen_range(0.8..=1.2));
        BesConfig {
            capacity_kwh,
            p_max_kw: round3(capacity_kwh / 2.0),
            soc_min: 0.1,
            soc_max: 0.9,
            eta: 0.95,
            externally_controllable: flags.bes_controllable,
        }
    });

    let bevs = (0..flags.bev_count)
        .map(|_| BevConfig {
            capacity_kwh: *[40.0, 60.0, 80.0]
                .get(rng.gen_range(0..3))
                .expect("in range"),
            p_charge_kw: BEV_CHARGER_KW,
            driving_profile_ref: None,
            externally_controllable: flags.bev_controllable,
        })
        .collect();

    let heat_mode = match flags.heat_mode {
        Some(HeatModeFlag::Ehp) => HeatMode::Ehp,
        Some(HeatModeFlag::Dhn) => HeatMode::Dhn,
        None => HeatMode::None,
    };
    let ehp = if heat_mode == HeatMode::Ehp {
        let nhl_w = nominal_heat_load(env, t_ref_ambient_c).map_err(|source| {
            ProsumerError::Building {
                household: household_id.to_string(),
                source,
            }
        })?;
        if nhl_w <= 0.0 {
            return Err(ProsumerError::EhpWithoutHeatLoad(household_id.to_string()));
        }
        Some(EhpConfig {
            p_th_nominal_kw: EHP_SIZING_FACTOR * nhl_w / 1000.0,
            eta_carnot: EHP_ETA_CARNOT,
        })
    } else {
        None
    };

    Ok(ProsumerConfig {
        household_id: household_id.to_string(),
        pv,
        bes,
        bevs,
        ehp,
        heat_mode,
        load: None,
        sm: SmConfig {
            sigma_p_w: sm_sigma_p_w,
            sigma_q_var: sm_sigma_q_var,
            enabled: true,
        },
    })
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Selects a load profile (scaled to the annual demand) and one driving
/// profile per BEV. Deterministic per RNG stream.
pub fn assign_profiles<R: Rng>(
    mut pc: ProsumerConfig,
    pool: &ProfilePool,
    annual_demand_kwh: f64,
    rng: &mut R,
) -> Result<ProsumerConfig, ProsumerError> {
    let mut resolver = ProfileResolver::default();
    let load_ref = pool.pick_load(rng)?.to_string();
    let annual = resolver.load(&load_ref)?.annual_kwh();
    pc.load = Some(LoadAssignment {
        scale: annual_demand_kwh / annual,
        profile_ref: load_ref,
    });
    for bev in &mut pc.bevs {
        bev.driving_profile_ref = Some(pool.pick_driving(rng)?.to_string());
    }
    Ok(pc)
}

/// Applies the smart-meter noise model: measured = true + N(0, σ) per
/// channel, independently. A disabled meter reports the true values.
pub fn smart_meter_measure<R: Rng>(
    true_p_w: f64,
    true_q_var: f64,
    sm: &SmConfig,
    rng: &mut R,
) -> (f64, f64) {
    if !sm.enabled {
        return (true_p_w, true_q_var);
    }
    let draw = |sigma: f64, rng: &mut R| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("sigma > 0").sample(rng)
        } else {
            0.0
        }
    };
    let noise_p = draw(sm.sigma_p_w, rng);
    let noise_q = draw(sm.sigma_q_var, rng);
    (true_p_w + noise_p, true_q_var + noise_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buildings::{Surface, ThermalEnvelope};
    use approx::assert_relative_eq;

    fn envelope() -> ThermalEnvelope {
        // ΣUA + ventilation = 383.75 W/K → NHL(−12 °C) = 12 280 W.
        ThermalEnvelope {
            archetype_id: "test".into(),
            ground_area_m2: 100.0,
            floors: 2,
            volume_m3: 500.0,
            surfaces: vec![Surface {
                kind: "wall".into(),
                u_w_m2k: 1.0,
                area_m2: 300.0,
            }],
            air_exchange_n: 0.5,
            t_indoor_set_c: 20.0,
            annual_electric_demand_kwh: 3500.0,
            thermal_capacitance_j_per_k: 5.4e7,
        }
    }

    #[test]
    fn ehp_rating_is_1_2_times_nhl() {
        let flags = ComponentFlags {
            heat_mode: Some(HeatModeFlag::Ehp),
            ..Default::default()
        };
        let mut rng = crate::rng::stream(1, "size");
        let pc =
            size_components("hh-1", flags, &envelope(), -12.0, 10.0, 10.0, &mut rng).unwrap();
        let ehp = pc.ehp.unwrap();
        assert_relative_eq!(ehp.p_th_nominal_kw, 14.736, epsilon = 1e-9);
        assert_eq!(pc.heat_mode, HeatMode::Ehp);
    }

    #[test]
    fn minimal_prosumer_has_only_load_and_meter() {
        let mut rng = crate::rng::stream(2, "size");
        let pc = size_components(
            "hh-1",
            ComponentFlags::default(),
            &envelope(),
            -12.0,
            10.0,
            10.0,
            &mut rng,
        )
        .unwrap();
        assert!(pc.pv.is_none());
        assert!(pc.bes.is_none());
        assert!(pc.bevs.is_empty());
        assert!(pc.ehp.is_none());
        assert_eq!(pc.heat_mode, HeatMode::None);
        assert!(pc.sm.enabled);
    }

    #[test]
    fn ehp_with_zero_heat_load_is_rejected() {
        let mut env = envelope();
        env.surfaces.clear();
        env.air_exchange_n = 0.0;
        let flags = ComponentFlags {
            heat_mode: Some(HeatModeFlag::Ehp),
            ..Default::default()
        };
        let mut rng = crate::rng::stream(3, "size");
        assert!(matches!(
            size_components("hh-1", flags, &env, -12.0, 10.0, 10.0, &mut rng),
            Err(ProsumerError::EhpWithoutHeatLoad(_))
        ));
    }

    #[test]
    fn pv_peak_stays_in_range_and_bes_follows_pv() {
        let flags = ComponentFlags {
            pv: true,
            bes: true,
            ..Default::default()
        };
        let mut rng = crate::rng::stream(4, "size");
        for _ in 0..200 {
            let pc =
                size_components("hh-1", flags, &envelope(), -12.0, 10.0, 10.0, &mut rng).unwrap();
            let pv = pc.pv.unwrap();
            let bes = pc.bes.unwrap();
            assert!((3.0..=15.0).contains(&pv.p_peak_kw));
            assert!(bes.capacity_kwh >= 0.8 * pv.p_peak_kw - 1e-9);
            assert!(bes.capacity_kwh <= 1.2 * pv.p_peak_kw + 1e-9);
            assert!(bes.soc_min < bes.soc_max);
        }
    }

    #[test]
    fn bev_capacity_from_catalog_choices() {
        let flags = ComponentFlags {
            bev_count: 2,
            ..Default::default()
        };
        let mut rng = crate::rng::stream(5, "size");
        let pc =
            size_components("hh-1", flags, &envelope(), -12.0, 10.0, 10.0, &mut rng).unwrap();
        assert_eq!(pc.bevs.len(), 2);
        for bev in &pc.bevs {
            assert!([40.0, 60.0, 80.0].contains(&bev.capacity_kwh));
            assert_eq!(bev.p_charge_kw, 11.0);
            assert!(bev.driving_profile_ref.is_none());
        }
    }

    #[test]
    fn assign_profiles_scales_to_annual_demand() {
        let mut rng = crate::rng::stream(6, "profiles");
        let pc = size_components(
            "hh-1",
            ComponentFlags::default(),
            &envelope(),
            -12.0,
            10.0,
            10.0,
            &mut rng,
        )
        .unwrap();
        let pc = assign_profiles(pc, &ProfilePool::synthetic(), 3500.0, &mut rng).unwrap();
        let load = pc.load.unwrap();
        assert_relative_eq!(load.scale, 3.5, epsilon = 1e-12);
        assert!(load.profile_ref.starts_with("synthetic:load:"));
    }

    #[test]
    fn household_without_bev_gets_no_driving_profile() {
        let mut rng = crate::rng::stream(7, "profiles");
        let pc = size_components(
            "hh-1",
            ComponentFlags::default(),
            &envelope(),
            -12.0,
            10.0,
            10.0,
            &mut rng,
        )
        .unwrap();
        let pc = assign_profiles(pc, &ProfilePool::synthetic(), 3500.0, &mut rng).unwrap();
        assert!(pc.bevs.is_empty());
    }

    #[test]
    fn assignment_is_deterministic_per_stream() {
        let flags = ComponentFlags {
            pv: true,
            bes: true,
            bev_count: 1,
            ..Default::default()
        };
        let build = || {
            let mut rng = crate::rng::stream(8, "size");
            let pc =
                size_components("hh-1", flags, &envelope(), -12.0, 10.0, 10.0, &mut rng).unwrap();
            assign_profiles(pc, &ProfilePool::synthetic(), 4000.0, &mut rng).unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn zero_sigma_measures_exactly() {
        let sm = SmConfig {
            sigma_p_w: 0.0,
            sigma_q_var: 0.0,
            enabled: true,
        };
        let mut rng = crate::rng::stream(9, "sm");
        assert_eq!(
            smart_meter_measure(1000.0, 250.0, &sm, &mut rng),
            (1000.0, 250.0)
        );
    }

    #[test]
    fn disabled_meter_reports_true_values() {
        let sm = SmConfig {
            sigma_p_w: 50.0,
            sigma_q_var: 50.0,
            enabled: false,
        };
        let mut rng = crate::rng::stream(10, "sm");
        assert_eq!(
            smart_meter_measure(1000.0, 250.0, &sm, &mut rng),
            (1000.0, 250.0)
        );
    }

    #[test]
    fn noise_statistics_match_sigma() {
        // 10⁵ samples at σ = 10 W: mean within ±0.15 W (3σ/√N ≈ 0.095),
        // sample std within [9.8, 10.2].
        let sm = SmConfig {
            sigma_p_w: 10.0,
            sigma_q_var: 10.0,
            enabled: true,
        };
        let mut rng = crate::rng::stream(11, "sm-stats");
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| smart_meter_measure(1000.0, 0.0, &sm, &mut rng).0)
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let std = var.sqrt();
        assert!((mean - 1000.0).abs() < 0.15, "mean {mean}");
        assert!((9.8..=10.2).contains(&std), "std {std}");
    }

    #[test]
    fn identical_seed_gives_identical_noise_sequence() {
        let sm = SmConfig {
            sigma_p_w: 10.0,
            sigma_q_var: 5.0,
            enabled: true,
        };
        let run = || {
            let mut rng = crate::rng::stream(12, "sm-det");
            (0..16)
                .map(|_| smart_meter_measure(500.0, 100.0, &sm, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
