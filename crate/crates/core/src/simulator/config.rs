//! Plant and controller parameters.
//!
//! Pool volumes, recycling flows, buffer sizes and boiler capacities are the
//! facility's published characteristics. Every other coefficient here
//! (loss coefficients, exchanger sizing, weather, hall load, refill pattern,
//! noise and fault rates) is an invented, non-physical ground truth chosen
//! only to produce plausible benchmark-shaped data.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub volume_m3: f64,
    /// Recycling flow during the day schedule.
    pub recycle_flow_m3h: f64,
    /// Recycling flow during the night schedule (22:00–06:00).
    pub recycle_flow_night_m3h: f64,
    /// Buffer tank volume. Carried for completeness, not part of the
    /// thermal mass.
    pub buffer_m3: f64,
    pub he_effectiveness: f64,
    /// Hot-side heat capacity rate through the exchanger at full opening.
    pub hot_capacity_rate_w_k: f64,
    pub k_evap_w_k: f64,
    pub k_rad_w_k: f64,
    pub k_cond_w_k: f64,
    pub k_conv_w_k: f64,
    /// Fraction of the scheduled refill flow going to this pool.
    pub refill_share: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self::pool1()
    }
}

impl PoolConfig {
    pub fn pool1() -> Self {
        Self {
            volume_m3: 672.0,
            recycle_flow_m3h: 189.0,
            recycle_flow_night_m3h: 150.0,
            buffer_m3: 30.0,
            he_effectiveness: 0.8,
            hot_capacity_rate_w_k: 16_000.0,
            k_evap_w_k: 60_000.0,
            k_rad_w_k: 10_000.0,
            k_cond_w_k: 5_000.0,
            k_conv_w_k: 5_000.0,
            refill_share: 0.7,
        }
    }

    pub fn pool2() -> Self {
        Self {
            volume_m3: 212.0,
            recycle_flow_m3h: 142.0,
            recycle_flow_night_m3h: 110.0,
            buffer_m3: 35.0,
            he_effectiveness: 0.8,
            hot_capacity_rate_w_k: 8_000.0,
            k_evap_w_k: 20_000.0,
            k_rad_w_k: 4_000.0,
            k_cond_w_k: 2_000.0,
            k_conv_w_k: 2_000.0,
            refill_share: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefillConfig {
    /// Hours of day at which a refill pulse may start.
    pub start_hours: Vec<f64>,
    /// Probability that each pulse actually happens on a given day.
    pub pulse_probability: Vec<f64>,
    pub duration_min: f64,
    pub flow_m3h: f64,
    pub fresh_min_c: f64,
    pub fresh_max_c: f64,
}

impl Default for RefillConfig {
    fn default() -> Self {
        Self {
            start_hours: vec![6.0, 13.0, 21.0],
            pulse_probability: vec![1.0, 1.0, 0.5],
            duration_min: 30.0,
            flow_m3h: 24.0,
            fresh_min_c: 8.0,
            fresh_max_c: 18.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HallConfig {
    pub max_kw: f64,
    pub open_hour: f64,
    pub close_hour: f64,
    /// Length of one on/off block of the stochastic square wave.
    pub block_min: f64,
    /// Outdoor temperature above which the hall draws nothing.
    pub balance_temp_c: f64,
    /// Outdoor span over which demand rises from zero to full.
    pub span_c: f64,
}

impl Default for HallConfig {
    fn default() -> Self {
        Self {
            max_kw: 150.0,
            open_hour: 7.0,
            close_hour: 22.0,
            block_min: 20.0,
            balance_temp_c: 17.0,
            span_c: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirConfig {
    pub setpoint_c: f64,
    pub tau_h: f64,
    /// Sensitivity of the regulated hall temperature to outdoor temperature.
    pub outdoor_coupling: f64,
    pub humidity_base_pct: f64,
    /// Humidity rise per 100 kW of evaporative load.
    pub humidity_gain_pct: f64,
    pub humidity_tau_h: f64,
    pub noise_c: f64,
}

impl Default for AirConfig {
    fn default() -> Self {
        Self {
            setpoint_c: 26.0,
            tau_h: 1.0,
            outdoor_coupling: 0.04,
            humidity_base_pct: 45.0,
            humidity_gain_pct: 12.0,
            humidity_tau_h: 2.0,
            noise_c: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutdoorConfig {
    pub mean_c: f64,
    pub seasonal_amplitude_c: f64,
    /// Day of year of the seasonal minimum.
    pub coldest_day: f64,
    pub diurnal_amplitude_c: f64,
    /// Hour of the diurnal minimum.
    pub coldest_hour: f64,
    pub noise_std_c: f64,
    pub noise_tau_h: f64,
}

impl Default for OutdoorConfig {
    fn default() -> Self {
        Self {
            mean_c: 12.0,
            seasonal_amplitude_c: 6.0,
            coldest_day: 15.0,
            diurnal_amplitude_c: 4.0,
            coldest_hour: 4.0,
            noise_std_c: 2.0,
            noise_tau_h: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccupancyConfig {
    pub open_hour: f64,
    pub close_hour: f64,
    /// Evaporation multiplier while open, before daily attendance noise.
    pub open_evap_factor: f64,
    /// Relative day-to-day attendance variation.
    pub attendance_spread: f64,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            open_hour: 7.0,
            close_hour: 17.5,
            open_evap_factor: 1.8,
            attendance_spread: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub temp_noise_c: f64,
    pub power_noise_kw: f64,
    pub flow_noise_m3h: f64,
    pub humidity_noise_pct: f64,
    /// Expected isolated spikes per channel per day.
    pub spike_rate_per_day: f64,
    /// Expected short dropouts (1–3 samples) per channel per day.
    pub dropout_rate_per_day: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            temp_noise_c: 0.01,
            power_noise_kw: 2.0,
            flow_noise_m3h: 0.5,
            humidity_noise_pct: 0.3,
            spike_rate_per_day: 0.2,
            dropout_rate_per_day: 0.3,
        }
    }
}

impl SensorConfig {
    /// Noise- and fault-free sensors.
    pub fn ideal() -> Self {
        Self {
            temp_noise_c: 0.0,
            power_noise_kw: 0.0,
            flow_noise_m3h: 0.0,
            humidity_noise_pct: 0.0,
            spike_rate_per_day: 0.0,
            dropout_rate_per_day: 0.0,
        }
    }
}

/// Physical parameters of the two-pool plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub pools: [PoolConfig; 2],
    pub rho_w: f64,
    pub c_w: f64,
    /// Rangeability of the equal-percentage valve characteristic.
    pub valve_rangeability: f64,
    /// Primary-loop supply temperature.
    pub supply_temp_c: f64,
    pub wood_capacity_kw: f64,
    pub gas_capacity_kw: f64,
    pub refill: RefillConfig,
    pub hall: HallConfig,
    pub air: AirConfig,
    pub outdoor: OutdoorConfig,
    pub occupancy: OccupancyConfig,
    pub sensors: SensorConfig,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            pools: [PoolConfig::pool1(), PoolConfig::pool2()],
            rho_w: 1000.0,
            c_w: 4186.0,
            valve_rangeability: 50.0,
            supply_temp_c: 75.0,
            wood_capacity_kw: 650.0,
            gas_capacity_kw: 350.0,
            refill: RefillConfig::default(),
            hall: HallConfig::default(),
            air: AirConfig::default(),
            outdoor: OutdoorConfig::default(),
            occupancy: OccupancyConfig::default(),
            sensors: SensorConfig::default(),
        }
    }
}

impl PlantConfig {
    pub fn boiler_capacity_w(&self) -> f64 {
        1e3 * (self.wood_capacity_kw + self.gas_capacity_kw)
    }

    /// Heat capacity `V ρ c` of a pool in J/K.
    pub fn heat_capacity(&self, pool: usize) -> f64 {
        self.pools[pool].volume_m3 * self.rho_w * self.c_w
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, p) in self.pools.iter().enumerate() {
            let positive = [
                p.volume_m3,
                p.recycle_flow_m3h,
                p.recycle_flow_night_m3h,
                p.buffer_m3,
                p.hot_capacity_rate_w_k,
            ];
            if positive.iter().any(|v| !(*v > 0.0)) {
                return Err(format!("pool {}: volumes, flows and capacities must be > 0", i + 1));
            }
            if !(p.he_effectiveness > 0.0 && p.he_effectiveness <= 1.0) {
                return Err(format!("pool {}: effectiveness must lie in (0, 1]", i + 1));
            }
        }
        if !(self.wood_capacity_kw > 0.0 && self.gas_capacity_kw > 0.0) {
            return Err("boiler capacities must be > 0".into());
        }
        if !(self.rho_w > 0.0 && self.c_w > 0.0) {
            return Err("water properties must be > 0".into());
        }
        if !(self.valve_rangeability > 1.0) {
            return Err("valve rangeability must exceed 1".into());
        }
        if self.refill.start_hours.len() != self.refill.pulse_probability.len() {
            return Err("refill start hours and probabilities differ in length".into());
        }
        Ok(())
    }
}

/// Per-pool PI loop with its daily setpoint schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    /// Valve fraction per kelvin of error.
    pub kp: f64,
    /// Valve fraction per kelvin-second of integrated error.
    pub ki: f64,
    /// `(hour of day, setpoint)` pairs; each holds until the next one and the
    /// last wraps around midnight.
    pub schedule: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    ConstantSetpoint,
    NightSetback,
}

impl ControllerConfig {
    pub fn constant(setpoint: f64) -> Self {
        Self {
            mode: ControlMode::ConstantSetpoint,
            kp: 0.5,
            ki: 0.5 / 3600.0,
            schedule: vec![(0.0, setpoint)],
        }
    }

    /// Reduced setpoint from closing time until the early-morning reheat.
    pub fn night_setback(day: f64, night: f64, reheat_hour: f64, setback_hour: f64) -> Self {
        Self {
            mode: ControlMode::NightSetback,
            kp: 0.5,
            ki: 0.5 / 3600.0,
            schedule: vec![(0.0, night), (reheat_hour, day), (setback_hour, night)],
        }
    }

    pub fn setpoint_at(&self, hour_of_day: f64) -> f64 {
        self.schedule
            .iter()
            .rev()
            .find(|(h, _)| *h <= hour_of_day)
            .or(self.schedule.last())
            .map(|(_, s)| *s)
            .unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schedule.is_empty() {
            return Err("setpoint schedule is empty".into());
        }
        if self.schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("schedule hours must be increasing".into());
        }
        if self.schedule.iter().any(|(h, _)| !(0.0..24.0).contains(h)) {
            return Err("schedule hours must lie in [0, 24)".into());
        }
        if self.schedule.iter().any(|(_, s)| !(20.0..=35.0).contains(s)) {
            return Err("setpoints must lie in [20, 35] degC".into());
        }
        if !(self.kp >= 0.0 && self.ki >= 0.0) {
            return Err("PI gains must be non-negative".into());
        }
        Ok(())
    }
}

/// Benchmark control: night setback on pool 1, constant setpoint on pool 2.
pub fn benchmark_controllers() -> [ControllerConfig; 2] {
    [
        ControllerConfig::night_setback(28.0, 27.0, 4.0, 17.5),
        ControllerConfig::constant(31.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_wraps_around_midnight() {
        let c = ControllerConfig::night_setback(28.0, 27.0, 4.0, 17.5);
        assert_eq!(c.setpoint_at(2.0), 27.0);
        assert_eq!(c.setpoint_at(4.0), 28.0);
        assert_eq!(c.setpoint_at(12.0), 28.0);
        assert_eq!(c.setpoint_at(23.9), 27.0);
        assert!(c.validate().is_ok());
        let bad = ControllerConfig::constant(40.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn defaults_validate_and_roundtrip_toml() {
        let c = PlantConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: PlantConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: PlantConfig = toml::from_str("supply_temp_c = 70.0").unwrap();
        assert_eq!(partial.supply_temp_c, 70.0);
        assert_eq!(partial.pools[0].volume_m3, 672.0);
    }
}
