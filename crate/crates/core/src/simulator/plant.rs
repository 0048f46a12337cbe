use serde::{Deserialize, Serialize};

use super::{PlantConfig, SimError};

/// Temperatures outside this band abort the episode.
pub const TEMP_GUARD_C: (f64, f64) = (0.0, 60.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub pool_temp_c: [f64; 2],
    pub air_temp_c: f64,
    pub humidity_pct: f64,
    pub outdoor_temp_c: f64,
    /// PI integrator contributions (valve fraction).
    pub integrator: [f64; 2],
}

impl PlantState {
    pub fn check_guards(&self) -> Result<(), String> {
        let (lo, hi) = TEMP_GUARD_C;
        let temps = [
            ("pool1", self.pool_temp_c[0]),
            ("pool2", self.pool_temp_c[1]),
            ("air", self.air_temp_c),
        ];
        for (name, t) in temps {
            if !(lo..=hi).contains(&t) {
                return Err(format!("{name} temperature {t:.3} degC outside [{lo}, {hi}]"));
            }
        }
        if !self.humidity_pct.is_finite() || !self.outdoor_temp_c.is_finite() {
            return Err("non-finite air state".into());
        }
        Ok(())
    }
}

/// Actuator positions and disturbances acting over one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Controls {
    /// Three-way valve openings in `[0, 1]`.
    pub valve: [f64; 2],
    pub recycle_flow_m3h: [f64; 2],
    pub refill_flow_m3h: [f64; 2],
    pub fresh_water_c: f64,
    /// Evaporation multiplier from pool attendance (1 when closed).
    pub occupancy: f64,
    pub hall_demand_w: f64,
    pub air_setpoint_c: f64,
    /// Outdoor temperature at the end of the step.
    pub outdoor_c: f64,
}

/// Heat flows into one pool, in watts (negative = loss).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HeatBreakdown {
    pub evap: f64,
    pub rad: f64,
    pub cond: f64,
    pub conv: f64,
    pub refill: f64,
    pub exchanger: f64,
}

impl HeatBreakdown {
    pub fn total(&self) -> f64 {
        self.evap + self.rad + self.cond + self.conv + self.refill + self.exchanger
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HeatTerms {
    pub pools: [HeatBreakdown; 2],
    /// Hall heating actually delivered.
    pub hall_w: f64,
    /// Total boiler output: both exchangers plus hall.
    pub boiler_w: f64,
    /// Applied curtailment factor in `(0, 1]`.
    pub curtailment: f64,
}

/// Equal-percentage valve characteristic, `φ(0) = 0`, `φ(1) = 1`.
pub fn valve_map(opening: f64, rangeability: f64) -> f64 {
    let v = opening.clamp(0.0, 1.0);
    (rangeability.powf(v) - 1.0) / (rangeability - 1.0)
}

/// Heat balance terms of both pools for the given state and controls.
pub fn heat_terms(state: &PlantState, cfg: &PlantConfig, ctl: &Controls) -> HeatTerms {
    let water_rate = cfg.rho_w * cfg.c_w / 3600.0; // W/K per m3/h
    let mut pools = [HeatBreakdown::default(); 2];
    for (i, p) in cfg.pools.iter().enumerate() {
        let t = state.pool_temp_c[i];
        let d_air = t - state.air_temp_c;
        let dryness = (1.0 - state.humidity_pct / 100.0).clamp(0.0, 1.0);
        let c_cold = water_rate * ctl.recycle_flow_m3h[i].max(0.0);
        let c_min = p.hot_capacity_rate_w_k.min(c_cold);
        let q_he = p.he_effectiveness
            * c_min
            * (cfg.supply_temp_c - t).max(0.0)
            * valve_map(ctl.valve[i], cfg.valve_rangeability);
        pools[i] = HeatBreakdown {
            evap: -p.k_evap_w_k * dryness * ctl.occupancy * d_air,
            rad: -p.k_rad_w_k * d_air,
            cond: -p.k_cond_w_k * d_air,
            conv: -p.k_conv_w_k * d_air,
            refill: water_rate * ctl.refill_flow_m3h[i].max(0.0) * (ctl.fresh_water_c - t),
            exchanger: q_he,
        };
    }
    let hall = ctl.hall_demand_w.max(0.0);
    let demand = pools[0].exchanger + pools[1].exchanger + hall;
    let cap = cfg.boiler_capacity_w();
    let curtailment = if demand > cap { cap / demand } else { 1.0 };
    for p in &mut pools {
        p.exchanger *= curtailment;
    }
    let hall_w = hall * curtailment;
    HeatTerms {
        boiler_w: pools[0].exchanger + pools[1].exchanger + hall_w,
        pools,
        hall_w,
        curtailment,
    }
}

/// `T + Q·dt / (V ρ c)`.
pub fn euler_pool_update(temp_c: f64, q_tot_w: f64, heat_capacity_j_k: f64, dt: f64) -> f64 {
    temp_c + q_tot_w * dt / heat_capacity_j_k
}

/// Explicit Euler step of length `dt` seconds. Integrator states are left to
/// the controllers.
pub fn step(
    state: &PlantState,
    cfg: &PlantConfig,
    ctl: &Controls,
    dt: f64,
) -> Result<(PlantState, HeatTerms), SimError> {
    let heat = heat_terms(state, cfg, ctl);
    let mut next = *state;
    for i in 0..2 {
        next.pool_temp_c[i] =
            euler_pool_update(state.pool_temp_c[i], heat.pools[i].total(), cfg.heat_capacity(i), dt);
    }
    let air_target = ctl.air_setpoint_c
        + cfg.air.outdoor_coupling * (state.outdoor_temp_c - cfg.outdoor.mean_c);
    next.air_temp_c += dt / (cfg.air.tau_h * 3600.0) * (air_target - state.air_temp_c);
    let evap_kw = -(heat.pools[0].evap + heat.pools[1].evap) / 1e3;
    let rh_target = cfg.air.humidity_base_pct + cfg.air.humidity_gain_pct * evap_kw / 100.0;
    next.humidity_pct += dt / (cfg.air.humidity_tau_h * 3600.0) * (rh_target - state.humidity_pct);
    next.humidity_pct = next.humidity_pct.clamp(0.0, 100.0);
    next.outdoor_temp_c = ctl.outdoor_c;
    next.check_guards().map_err(|detail| SimError::Guard {
        detail,
        state: Box::new(next),
    })?;
    Ok((next, heat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(t1: f64, t2: f64) -> PlantState {
        PlantState {
            pool_temp_c: [t1, t2],
            air_temp_c: 26.0,
            humidity_pct: 50.0,
            outdoor_temp_c: 10.0,
            integrator: [0.0; 2],
        }
    }

    fn controls(valve: f64) -> Controls {
        Controls {
            valve: [valve; 2],
            recycle_flow_m3h: [189.0, 142.0],
            refill_flow_m3h: [0.0; 2],
            fresh_water_c: 12.0,
            occupancy: 1.0,
            hall_demand_w: 0.0,
            air_setpoint_c: 26.0,
            outdoor_c: 10.0,
        }
    }

    fn lossless() -> PlantConfig {
        let mut cfg = PlantConfig::default();
        for p in &mut cfg.pools {
            p.k_evap_w_k = 0.0;
            p.k_rad_w_k = 0.0;
            p.k_cond_w_k = 0.0;
            p.k_conv_w_k = 0.0;
        }
        cfg
    }

    #[test]
    fn exchanger_zero_cases() {
        let cfg = PlantConfig::default();
        let hot = cfg.supply_temp_c;
        let h = heat_terms(&state(hot, hot), &cfg, &controls(0.8));
        assert_eq!(h.pools[0].exchanger, 0.0);
        let h = heat_terms(&state(28.0, 31.0), &cfg, &controls(0.0));
        assert_eq!(h.pools[0].exchanger, 0.0);
        assert_eq!(h.pools[1].exchanger, 0.0);
        let h = heat_terms(&state(28.0, 31.0), &lossless(), &controls(0.0));
        for p in h.pools {
            assert_eq!(p, HeatBreakdown::default());
        }
    }

    #[test]
    fn valve_map_endpoints_and_monotone() {
        assert_eq!(valve_map(0.0, 50.0), 0.0);
        assert!((valve_map(1.0, 50.0) - 1.0).abs() < 1e-15);
        let mut prev = -1.0;
        for k in 0..=100 {
            let v = valve_map(k as f64 / 100.0, 50.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn zero_drive_leaves_temperature_exact() {
        let cfg = lossless();
        let s = state(28.0, 31.0);
        let (n, _) = step(&s, &cfg, &controls(0.0), 60.0).unwrap();
        assert_eq!(n.pool_temp_c, s.pool_temp_c);
    }

    #[test]
    fn constant_drive_accumulates_linearly() {
        let cap = PlantConfig::default().heat_capacity(0);
        let (p, dt, n) = (250e3, 60.0, 500);
        let mut t = 27.0;
        for _ in 0..n {
            t = euler_pool_update(t, p, cap, dt);
        }
        let expect = n as f64 * p * dt / cap;
        assert!((t - 27.0 - expect).abs() < 1e-10);
    }

    #[test]
    fn hand_computed_hour_of_heating() {
        let cap = PlantConfig::default().heat_capacity(0);
        let mut t = 0.0;
        for _ in 0..60 {
            t = euler_pool_update(t, 300e3, cap, 60.0);
        }
        // 300e3 * 3600 / (672 * 1000 * 4186)
        assert!((t - 0.383_942).abs() < 1e-3);
    }

    #[test]
    fn capacity_curtails_proportionally() {
        let mut cfg = PlantConfig::default();
        cfg.wood_capacity_kw = 300.0;
        cfg.gas_capacity_kw = 100.0;
        let mut ctl = controls(1.0);
        ctl.hall_demand_w = 150e3;
        let h = heat_terms(&state(25.0, 25.0), &cfg, &ctl);
        assert!((h.boiler_w - 400e3).abs() < 1e-6);
        assert!(h.curtailment < 1.0);
        let raw_hall = 150e3;
        assert!((h.hall_w - raw_hall * h.curtailment).abs() < 1e-9);
    }

    #[test]
    fn guard_violation_is_reported() {
        let cfg = PlantConfig::default();
        let s = state(59.999, 31.0);
        let mut ctl = controls(1.0);
        ctl.refill_flow_m3h = [0.0; 2];
        let mut hot = cfg.clone();
        hot.supply_temp_c = 200.0;
        hot.pools[0].volume_m3 = 0.01;
        assert!(matches!(step(&s, &hot, &ctl, 60.0), Err(SimError::Guard { .. })));
    }
}
