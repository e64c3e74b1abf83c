//! Building thermal envelopes and the nominal heat load (NHL).
//!
//! Envelopes are sampled from an archetype catalog (a CSV data file, see
//! `data/archetypes.csv` in this crate). The NHL is the simplified
//! transmission-plus-ventilation balance at the reference ambient
//! temperature, without thermal-bridge surcharges:
//!
//! ```text
//! Q̇_NHL = (Σᵢ Uᵢ·Aᵢ + ρ·c_p·n·V/3600) · (t_indoor_set − t_ref)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Density of air, kg/m³.
pub const RHO_AIR: f64 = 1.2;
/// Specific heat capacity of air, J/(kg·K).
pub const CP_AIR: f64 = 1005.0;
/// Lumped thermal capacitance per m² ground area, J/(K·m²)
/// (15 kWh/K per 100 m², a tunable 1R1C parameter).
pub const CAPACITANCE_J_PER_K_M2: f64 = 15.0 * 3.6e6 / 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    /// wall / roof / floor / window
    pub kind: String,
    pub u_w_m2k: f64,
    pub area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnvelope {
    pub archetype_id: String,
    pub ground_area_m2: f64,
    pub floors: u32,
    pub volume_m3: f64,
    pub surfaces: Vec<Surface>,
    pub air_exchange_n: f64,
    pub t_indoor_set_c: f64,
    pub annual_electric_demand_kwh: f64,
    pub thermal_capacitance_j_per_k: f64,
}

impl ThermalEnvelope {
    /// Total heat-loss coefficient in W/K: transmission Σ U·A plus the
    /// ventilation term ρ·c_p·n·V/3600.
    pub fn heat_loss_w_per_k(&self) -> f64 {
        let transmission: f64 = self.surfaces.iter().map(|s| s.u_w_m2k * s.area_m2).sum();
        transmission + RHO_AIR * CP_AIR * self.air_exchange_n * self.volume_m3 / 3600.0
    }
}

#[derive(Debug, Error)]
pub enum BuildingError {
    #[error("unknown archetype {requested:?}, available: {available}")]
    UnknownArchetype { requested: String, available: String },
    #[error("reference temperature {t_ref} °C is not below the indoor setpoint {t_set} °C")]
    ReferenceNotBelowSetpoint { t_ref: f64, t_set: f64 },
    #[error("cannot read archetype catalog {path}: {detail}")]
    Catalog { path: String, detail: String },
}

/// Sampling range for one scalar: nominal value plus hard bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub nominal: f64,
    pub min: f64,
    pub max: f64,
}

impl Range {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        }
    }
}

/// One surface kind of an archetype: U-value bounds plus the area per m² of
/// ground area.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSpec {
    pub kind: String,
    pub u: Range,
    pub area_factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archetype {
    pub id: String,
    pub floors: u32,
    pub room_height_m: f64,
    pub ground_area: Range,
    pub air_exchange: Range,
    pub annual_electric_kwh: Range,
    pub surfaces: Vec<SurfaceSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeCatalog {
    archetypes: BTreeMap<String, Archetype>,
}

const SURFACE_KINDS: [&str; 4] = ["wall", "roof", "floor", "window"];

impl ArchetypeCatalog {
    /// Catalog shipped with the crate (`data/archetypes.csv`): an unrenovated
    /// and a renovated single-family house plus a multi-family dwelling unit.
    pub fn builtin() -> ArchetypeCatalog {
        Self::from_csv_str(include_str!("../data/archetypes.csv"), "<builtin>")
            .expect("embedded catalog is valid")
    }

    pub fn from_csv_path(path: &Path) -> Result<ArchetypeCatalog, BuildingError> {
        let text = std::fs::read_to_string(path).map_err(|e| BuildingError::Catalog {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn from_csv_str(text: &str, origin: &str) -> Result<ArchetypeCatalog, BuildingError> {
        let err = |detail: String| BuildingError::Catalog {
            path: origin.to_string(),
            detail,
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b';')
            .from_reader(text.as_bytes());
        let header: BTreeMap<String, usize> = reader
            .headers()
            .map_err(|e| err(e.to_string()))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let col = |name: &str| {
            header
                .get(name)
                .copied()
                .ok_or_else(|| err(format!("missing column {name:?}")))
        };
        let mut archetypes = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| err(e.to_string()))?;
            let text = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let num = |name: &str| -> Result<f64, BuildingError> {
                let i = col(name)?;
                text(i)
                    .parse()
                    .map_err(|_| err(format!("column {name:?}: bad number {:?}", text(i))))
            };
            let range = |stem: &str| -> Result<Range, BuildingError> {
                Ok(Range {
                    nominal: num(&format!("{stem}_nom"))?,
                    min: num(&format!("{stem}_min"))?,
                    max: num(&format!("{stem}_max"))?,
                })
            };
            let id = text(col("archetype_id")?);
            let mut surfaces = Vec::new();
            for kind in SURFACE_KINDS {
                surfaces.push(SurfaceSpec {
                    kind: kind.to_string(),
                    u: range(&format!("{kind}_u"))?,
                    area_factor: num(&format!("{kind}_area_factor"))?,
                });
            }
            archetypes.insert(
                id.clone(),
                Archetype {
                    id,
                    floors: num("floors")? as u32,
                    room_height_m: num("room_height_m")?,
                    ground_area: range("ground_area")?,
                    air_exchange: range("air_exchange")?,
                    annual_electric_kwh: range("annual_el_kwh")?,
                    surfaces,
                },
            );
        }
        Ok(ArchetypeCatalog { archetypes })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.archetypes.keys().map(|s| s.as_str())
    }

    pub fn get(&self, id: &str) -> Option<&Archetype> {
        self.archetypes.get(id)
    }
}

/// Samples a thermal envelope around the archetype's nominal values, within
/// the catalog bounds. Deterministic per RNG stream.
pub fn parameterize_building<R: Rng>(
    catalog: &ArchetypeCatalog,
    archetype_id: &str,
    t_indoor_set_c: f64,
    rng: &mut R,
) -> Result<ThermalEnvelope, BuildingError> {
    let archetype =
        catalog
            .get(archetype_id)
            .ok_or_else(|| BuildingError::UnknownArchetype {
                requested: archetype_id.to_string(),
                available: catalog.ids().collect::<Vec<_>>().join(", "),
            })?;
    let ground_area = archetype.ground_area.sample(rng);
    let volume = ground_area * archetype.floors as f64 * archetype.room_height_m;
    let surfaces = archetype
        .surfaces
        .iter()
        .map(|s| Surface {
            kind: s.kind.clone(),
            u_w_m2k: s.u.sample(rng),
            area_m2: s.area_factor * ground_area,
        })
        .collect();
    Ok(ThermalEnvelope {
        archetype_id: archetype.id.clone(),
        ground_area_m2: ground_area,
        floors: archetype.floors,
        volume_m3: volume,
        surfaces,
        air_exchange_n: archetype.air_exchange.sample(rng),
        t_indoor_set_c,
        annual_electric_demand_kwh: archetype.annual_electric_kwh.sample(rng),
        thermal_capacitance_j_per_k: ground_area * CAPACITANCE_J_PER_K_M2,
    })
}

/// Nominal heat load in watts at the reference ambient temperature `t_ref_c`.
pub fn nominal_heat_load(env: &ThermalEnvelope, t_ref_c: f64) -> Result<f64, BuildingError> {
    if t_ref_c >= env.t_indoor_set_c {
        return Err(BuildingError::ReferenceNotBelowSetpoint {
            t_ref: t_ref_c,
            t_set: env.t_indoor_set_c,
        });
    }
    Ok(env.heat_loss_w_per_k() * (env.t_indoor_set_c - t_ref_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// ΣUA = 300 W/K, n = 0.5/h, V = 500 m³, setpoint 20 °C.
    pub(crate) fn reference_envelope() -> ThermalEnvelope {
        ThermalEnvelope {
            archetype_id: "test".into(),
            ground_area_m2: 100.0,
            floors: 2,
            volume_m3: 500.0,
            surfaces: vec![
                Surface {
                    kind: "wall".into(),
                    u_w_m2k: 1.0,
                    area_m2: 200.0,
                },
                Surface {
                    kind: "roof".into(),
                    u_w_m2k: 1.0,
                    area_m2: 100.0,
                },
            ],
            air_exchange_n: 0.5,
            t_indoor_set_c: 20.0,
            annual_electric_demand_kwh: 4000.0,
            thermal_capacitance_j_per_k: 100.0 * CAPACITANCE_J_PER_K_M2,
        }
    }

    #[test]
    fn nhl_hand_computation() {
        // Transmission 300 W/K, ventilation 1.2·1005·0.5·500/3600 = 83.75 W/K,
        // ΔT = 32 K → 12 280 W.
        let env = reference_envelope();
        assert_relative_eq!(env.heat_loss_w_per_k(), 383.75, epsilon = 1e-9);
        let nhl = nominal_heat_load(&env, -12.0).unwrap();
        assert_relative_eq!(nhl, 12_280.0, epsilon = 1e-9);
    }

    #[test]
    fn reference_at_setpoint_is_rejected_and_limit_is_zero() {
        let env = reference_envelope();
        assert!(matches!(
            nominal_heat_load(&env, 20.0),
            Err(BuildingError::ReferenceNotBelowSetpoint { .. })
        ));
        // Value at the limit approaches zero.
        let nhl = nominal_heat_load(&env, 20.0 - 1e-12).unwrap();
        assert!(nhl.abs() < 1e-6);
    }

    #[test]
    fn nhl_is_linear_in_surface_area_without_ventilation() {
        let mut env = reference_envelope();
        env.air_exchange_n = 0.0;
        let base = nominal_heat_load(&env, -12.0).unwrap();
        for s in &mut env.surfaces {
            s.area_m2 *= 2.0;
        }
        let doubled = nominal_heat_load(&env, -12.0).unwrap();
        assert_relative_eq!(doubled, 2.0 * base, epsilon = 1e-9);
    }

    #[test]
    fn builtin_catalog_parses_and_has_three_archetypes() {
        let catalog = ArchetypeCatalog::builtin();
        let ids: Vec<&str> = catalog.ids().collect();
        assert!(ids.len() >= 3, "expected ≥3 archetypes, got {ids:?}");
        assert!(ids.contains(&"sfh-old"));
        assert!(ids.contains(&"sfh-renovated"));
        assert!(ids.contains(&"mfh"));
    }

    #[test]
    fn zero_variance_yields_nominal_values() {
        let mut catalog = ArchetypeCatalog::builtin();
        let archetype = catalog.archetypes.get_mut("sfh-old").unwrap();
        archetype.ground_area = Range {
            nominal: 100.0,
            min: 100.0,
            max: 100.0,
        };
        archetype.air_exchange = Range {
            nominal: 0.6,
            min: 0.6,
            max: 0.6,
        };
        archetype.annual_electric_kwh = Range {
            nominal: 4000.0,
            min: 4000.0,
            max: 4000.0,
        };
        for s in &mut archetype.surfaces {
            s.u = Range {
                nominal: s.u.nominal,
                min: s.u.nominal,
                max: s.u.nominal,
            };
        }
        let expected_u: Vec<f64> = catalog.get("sfh-old").unwrap().surfaces.iter().map(|s| s.u.nominal).collect();
        let mut rng = crate::rng::stream(7, "building");
        let env = parameterize_building(&catalog, "sfh-old", 20.0, &mut rng).unwrap();
        assert_eq!(env.ground_area_m2, 100.0);
        assert_eq!(env.air_exchange_n, 0.6);
        assert_eq!(env.annual_electric_demand_kwh, 4000.0);
        let sampled_u: Vec<f64> = env.surfaces.iter().map(|s| s.u_w_m2k).collect();
        assert_eq!(sampled_u, expected_u);
    }

    #[test]
    fn sampled_u_values_stay_within_catalog_bounds() {
        let catalog = ArchetypeCatalog::builtin();
        let mut rng = crate::rng::stream(99, "building-bounds");
        for _ in 0..10_000 {
            let env = parameterize_building(&catalog, "sfh-old", 20.0, &mut rng).unwrap();
            let archetype = catalog.get("sfh-old").unwrap();
            for (surface, spec) in env.surfaces.iter().zip(&archetype.surfaces) {
                assert!(
                    surface.u_w_m2k >= spec.u.min && surface.u_w_m2k <= spec.u.max,
                    "{} u={} outside [{}, {}]",
                    surface.kind,
                    surface.u_w_m2k,
                    spec.u.min,
                    spec.u.max
                );
            }
        }
    }

    #[test]
    fn unknown_archetype_lists_available_ids() {
        let catalog = ArchetypeCatalog::builtin();
        let mut rng = crate::rng::stream(1, "x");
        match parameterize_building(&catalog, "nonexistent", 20.0, &mut rng) {
            Err(BuildingError::UnknownArchetype { available, .. }) => {
                assert!(available.contains("sfh-old"));
            }
            other => panic!("expected unknown-archetype error, got {other:?}"),
        }
    }

    #[test]
    fn nhl_monotonicity() {
        let env = reference_envelope();
        let base = nominal_heat_load(&env, -12.0).unwrap();

        let mut warmer = env.clone();
        warmer.t_indoor_set_c += 1.0;
        assert!(nominal_heat_load(&warmer, -12.0).unwrap() > base);

        let mut worse_u = env.clone();
        worse_u.surfaces[0].u_w_m2k += 0.1;
        assert!(nominal_heat_load(&worse_u, -12.0).unwrap() > base);

        let mut leakier = env;
        leakier.air_exchange_n += 0.1;
        assert!(nominal_heat_load(&leakier, -12.0).unwrap() > base);
    }
}
