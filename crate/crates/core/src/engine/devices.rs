//! Per-timestep device physics: PV, heat pump with 1R1C building node, BEV
//! charging and battery dispatch.

use crate::buildings::ThermalEnvelope;
use crate::profiles::DrivingSample;
use crate::prosumer::{BesConfig, BevConfig, EhpConfig};

/// Nominal operating cell temperature of the PV model, °C.
pub const NOCT_C: f64 = 45.0;
/// Heat-pump sink temperature (35 °C floor-heating supply), K.
pub const HP_SINK_K: f64 = 308.15;
/// Documented cap on the heat-pump COP.
pub const COP_CAP: f64 = 7.0;
/// Thermostat deadband around the indoor setpoint, K.
pub const THERMOSTAT_DEADBAND_K: f64 = 0.5;

/// Cell temperature from ambient temperature and irradiance (NOCT model).
pub fn cell_temperature(t_ambient_c: f64, ghi_w_m2: f64) -> f64 {
    t_ambient_c + ghi_w_m2 * (NOCT_C - 20.0) / 800.0
}

/// PV output: peak power scaled by irradiance with the linear temperature
/// derating, clamped to ≥ 0.
pub fn pv_power(p_peak_kw: f64, gamma_per_k: f64, ghi_w_m2: f64, t_cell_c: f64) -> f64 {
    (p_peak_kw * (ghi_w_m2 / 1000.0) * (1.0 + gamma_per_k * (t_cell_c - 25.0))).max(0.0)
}

/// Carnot-based COP against the fixed 35 °C sink, capped at [`COP_CAP`].
pub fn heat_pump_cop(eta_carnot: f64, t_source_c: f64) -> f64 {
    let t_source_k = t_source_c + 273.15;
    if t_source_k >= HP_SINK_K {
        return COP_CAP;
    }
    (eta_carnot * HP_SINK_K / (HP_SINK_K - t_source_k)).min(COP_CAP)
}

/// Two-point thermostat with ±0.5 K hysteresis around the setpoint.
pub fn thermostat(t_indoor_c: f64, t_set_c: f64, was_on: bool) -> bool {
    if t_indoor_c < t_set_c - THERMOSTAT_DEADBAND_K {
        true
    } else if t_indoor_c > t_set_c + THERMOSTAT_DEADBAND_K {
        false
    } else {
        was_on
    }
}

/// Explicit-Euler step of the lumped indoor temperature node
/// (stable for dt < 2·C/UA; at 900 s this holds by orders of magnitude).
pub fn indoor_temperature_step(
    env: &ThermalEnvelope,
    t_indoor_c: f64,
    t_ambient_c: f64,
    q_heat_w: f64,
    dt_s: f64,
) -> f64 {
    let ua = env.heat_loss_w_per_k();
    t_indoor_c + dt_s / env.thermal_capacitance_j_per_k * (q_heat_w - ua * (t_indoor_c - t_ambient_c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatPumpStep {
    pub p_el_kw: f64,
    pub q_th_kw: f64,
    pub t_indoor_c: f64,
    pub heating_on: bool,
}

/// One quasi-stationary heat-pump step: thermostat decides the thermal
/// output (or an external setpoint overrides it, clamped to the rating),
/// the COP converts it to electric power, and the indoor node advances by
/// explicit Euler.
pub fn heat_pump_step(
    env: &ThermalEnvelope,
    t_indoor_c: f64,
    was_on: bool,
    t_ambient_c: f64,
    ehp: &EhpConfig,
    dt_s: f64,
    setpoint_q_th_kw: Option<f64>,
) -> HeatPumpStep {
    let (q_th_kw, heating_on) = match setpoint_q_th_kw {
        Some(q) => {
            let q = q.clamp(0.0, ehp.p_th_nominal_kw);
            (q, q > 0.0)
        }
        None => {
            let on = thermostat(t_indoor_c, env.t_indoor_set_c, was_on);
            (if on { ehp.p_th_nominal_kw } else { 0.0 }, on)
        }
    };
    let cop = heat_pump_cop(ehp.eta_carnot, t_ambient_c);
    HeatPumpStep {
        p_el_kw: q_th_kw / cop,
        q_th_kw,
        t_indoor_c: indoor_temperature_step(env, t_indoor_c, t_ambient_c, q_th_kw * 1000.0, dt_s),
        heating_on,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevStep {
    pub p_charge_kw: f64,
    pub soc: f64,
    /// Away consumption exceeded the stored energy; SoC clamped at 0.
    pub energy_deficit: bool,
}

/// One BEV step: driving drains the battery; at home the car charges toward
/// full at the charger rating (or follows a clamped external setpoint).
pub fn bev_step(
    bev: &BevConfig,
    soc: f64,
    sample: DrivingSample,
    dt_s: f64,
    setpoint_kw: Option<f64>,
) -> BevStep {
    let dt_h = dt_s / 3600.0;
    let mut soc = soc - sample.away_kwh / bev.capacity_kwh;
    let energy_deficit = soc < 0.0;
    if energy_deficit {
        soc = 0.0;
    }
    if !sample.plugged {
        return BevStep {
            p_charge_kw: 0.0,
            soc,
            energy_deficit,
        };
    }
    let headroom_kw = (1.0 - soc) * bev.capacity_kwh / dt_h;
    let p_limit = bev.p_charge_kw.min(headroom_kw);
    let p_charge_kw = match setpoint_kw {
        Some(target) => target.clamp(0.0, p_limit),
        None => p_limit,
    };
    BevStep {
        p_charge_kw,
        soc: soc + p_charge_kw * dt_h / bev.capacity_kwh,
        energy_deficit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesStep {
    /// Positive charges, negative discharges.
    pub p_bes_kw: f64,
    pub soc: f64,
}

/// Battery dispatch. The default rule is greedy self-consumption: charge on
/// PV surplus, discharge on deficit, symmetric within the power and SoC
/// limits. Controllable units follow a clamped external setpoint instead
/// (positive = charge). Charging stores `p·dt·η`; discharging delivers `p`
/// while drawing `p·dt/η` from storage.
pub fn bes_dispatch(
    bes: &BesConfig,
    soc: f64,
    residual_kw: f64,
    dt_s: f64,
    setpoint_kw: Option<f64>,
) -> BesStep {
    let dt_h = dt_s / 3600.0;
    let charge_limit_kw = bes
        .p_max_kw
        .min(((bes.soc_max - soc) * bes.capacity_kwh / (dt_h * bes.eta)).max(0.0));
    let discharge_limit_kw = bes
        .p_max_kw
        .min(((soc - bes.soc_min) * bes.capacity_kwh * bes.eta / dt_h).max(0.0));
    let p = match setpoint_kw {
        Some(target) => target.clamp(-discharge_limit_kw, charge_limit_kw),
        None if residual_kw > 0.0 => residual_kw.min(charge_limit_kw),
        None if residual_kw < 0.0 => -(-residual_kw).min(discharge_limit_kw),
        None => 0.0,
    };
    let soc = if p >= 0.0 {
        soc + p * dt_h * bes.eta / bes.capacity_kwh
    } else {
        soc + p * dt_h / (bes.eta * bes.capacity_kwh)
    };
    BesStep { p_bes_kw: p, soc }
}
