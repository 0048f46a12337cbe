use std::f64::consts::PI;

use chrono::{DateTime, Datelike, TimeDelta, Timelike, Utc};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    active_overrides, pi_valve, stream_rng, step, Controls, ControllerConfig, PlantConfig, PlantState,
    ScenarioScript, SimError,
};
use crate::data::{benchmark_schema, SignalFrame, MISSING, RAW_PERIOD_S};

const DT_S: f64 = RAW_PERIOD_S as f64;
const FLUSH_HYSTERESIS_C: f64 = 0.2;
const HALL_BLOCK_ON_PROB: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOptions {
    pub start: DateTime<Utc>,
    pub days: f64,
    pub seed: u64,
    /// Names the RNG streams of this episode.
    pub label: String,
    /// Unlogged settling period before `start`.
    pub warmup_days: f64,
}

impl EpisodeOptions {
    pub fn new(start: DateTime<Utc>, days: f64, seed: u64) -> Self {
        Self {
            start,
            days,
            seed,
            label: "episode".into(),
            warmup_days: 3.0,
        }
    }
}

fn hour_of_day(t: DateTime<Utc>) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0
}

fn day_of_year(t: DateTime<Utc>) -> f64 {
    t.ordinal0() as f64 + hour_of_day(t) / 24.0
}

/// Deterministic part of the outdoor temperature.
fn outdoor_mean(cfg: &PlantConfig, t: DateTime<Utc>) -> f64 {
    let o = &cfg.outdoor;
    o.mean_c - o.seasonal_amplitude_c * (2.0 * PI * (day_of_year(t) - o.coldest_day) / 365.25).cos()
        - o.diurnal_amplitude_c * (2.0 * PI * (hour_of_day(t) - o.coldest_hour) / 24.0).cos()
}

fn seasonal_outdoor(cfg: &PlantConfig, t: DateTime<Utc>) -> f64 {
    let o = &cfg.outdoor;
    o.mean_c - o.seasonal_amplitude_c * (2.0 * PI * (day_of_year(t) - o.coldest_day) / 365.25).cos()
}

/// Mains water lags the air by about a month.
fn fresh_water(cfg: &PlantConfig, t: DateTime<Utc>) -> f64 {
    let r = &cfg.refill;
    let mid = 0.5 * (r.fresh_min_c + r.fresh_max_c);
    let amp = 0.5 * (r.fresh_max_c - r.fresh_min_c);
    mid - amp * (2.0 * PI * (day_of_year(t) - cfg.outdoor.coldest_day - 30.0) / 365.25).cos()
}

struct DayPlan {
    ordinal: (i32, u32),
    attendance: f64,
    /// `(start hour, end hour)` of each refill pulse.
    refills: Vec<(f64, f64)>,
    hall_blocks: Vec<f64>,
}

struct Exogenous<'a> {
    cfg: &'a PlantConfig,
    rng: ChaCha8Rng,
    noise: f64,
    day: Option<DayPlan>,
}

impl<'a> Exogenous<'a> {
    fn plan(&mut self, t: DateTime<Utc>) -> &DayPlan {
        let key = (t.year(), t.ordinal());
        if self.day.as_ref().map(|d| d.ordinal) != Some(key) {
            let cfg = self.cfg;
            let rng = &mut self.rng;
            let z: f64 = rng.sample(StandardNormal);
            let attendance = (1.0 + cfg.occupancy.attendance_spread * z).clamp(0.2, 2.0);
            let mut refills = Vec::new();
            for (h, p) in cfg.refill.start_hours.iter().zip(&cfg.refill.pulse_probability) {
                let happens = rng.random::<f64>() < *p;
                let jitter = rng.random_range(-20.0..20.0) / 60.0;
                if happens {
                    let s = (h + jitter).clamp(0.0, 24.0);
                    refills.push((s, s + cfg.refill.duration_min / 60.0));
                }
            }
            let hall = &cfg.hall;
            let n_blocks = ((hall.close_hour - hall.open_hour) * 60.0 / hall.block_min).ceil().max(0.0) as usize;
            let s = ((hall.balance_temp_c - seasonal_outdoor(cfg, t)) / hall.span_c).clamp(0.0, 1.0);
            let hall_blocks = (0..n_blocks)
                .map(|_| {
                    let on = rng.random::<f64>() < HALL_BLOCK_ON_PROB;
                    let level = rng.random_range(0.5..1.0);
                    if on {
                        hall.max_kw * 1e3 * (0.15 + 0.85 * s) * level
                    } else {
                        0.0
                    }
                })
                .collect();
            self.day = Some(DayPlan {
                ordinal: key,
                attendance,
                refills,
                hall_blocks,
            });
        }
        self.day.as_ref().unwrap()
    }

    fn advance_outdoor(&mut self, t_next: DateTime<Utc>) -> f64 {
        let o = &self.cfg.outdoor;
        let a = (-DT_S / (o.noise_tau_h * 3600.0)).exp();
        let e: f64 = self.rng.sample(StandardNormal);
        self.noise = a * self.noise + o.noise_std_c * (1.0 - a * a).sqrt() * e;
        outdoor_mean(self.cfg, t_next) + self.noise
    }

    /// Controls at `t` before actuator decisions.
    fn controls(&mut self, t: DateTime<Utc>) -> Controls {
        let cfg = self.cfg;
        let h = hour_of_day(t);
        let plan = self.plan(t);
        let occ = &cfg.occupancy;
        let occupancy = if h >= occ.open_hour && h < occ.close_hour {
            1.0 + (occ.open_evap_factor - 1.0) * plan.attendance
        } else {
            1.0
        };
        let refill_on = plan.refills.iter().any(|(s, e)| h >= *s && h < *e);
        let hall = &cfg.hall;
        let hall_demand_w = if h >= hall.open_hour && h < hall.close_hour {
            let b = ((h - hall.open_hour) * 60.0 / hall.block_min) as usize;
            plan.hall_blocks.get(b).copied().unwrap_or(0.0)
        } else {
            0.0
        };
        let night = !(6.0..22.0).contains(&h);
        let mut ctl = Controls {
            occupancy,
            hall_demand_w,
            fresh_water_c: fresh_water(cfg, t),
            air_setpoint_c: cfg.air.setpoint_c,
            ..Controls::default()
        };
        for (i, p) in cfg.pools.iter().enumerate() {
            ctl.recycle_flow_m3h[i] = if night {
                p.recycle_flow_night_m3h
            } else {
                p.recycle_flow_m3h
            };
            if refill_on {
                ctl.refill_flow_m3h[i] = cfg.refill.flow_m3h * p.refill_share;
            }
        }
        ctl
    }
}

mod col {
    pub const BOILER: usize = 0;
    pub const VALVE: [usize; 2] = [1, 2];
    pub const AIR: usize = 3;
    pub const HUMIDITY: usize = 4;
    pub const OUTDOOR: usize = 5;
    pub const RECYCLE: [usize; 2] = [6, 7];
    pub const REFILL: usize = 8;
    pub const HALL: usize = 9;
    pub const POOL: [usize; 2] = [10, 11];
}

/// Closed-loop simulation at one-minute steps, logged every minute in the
/// benchmark channel layout, with sensor noise and faults applied.
/// Deterministic in `(cfg, controllers, scenarios, opts)`.
pub fn run_episode(
    cfg: &PlantConfig,
    controllers: &[ControllerConfig; 2],
    scenarios: &[ScenarioScript],
    opts: &EpisodeOptions,
) -> Result<SignalFrame, SimError> {
    cfg.validate().map_err(SimError::Config)?;
    for c in controllers {
        c.validate().map_err(SimError::Config)?;
    }
    if !(opts.days >= 1.0) {
        return Err(SimError::Config(format!("episode must last at least one day, got {}", opts.days)));
    }
    if !(opts.warmup_days >= 0.0) {
        return Err(SimError::Config("warm-up must be non-negative".into()));
    }
    let n_log = (opts.days * 1440.0).round() as usize;
    let n_warm = (opts.warmup_days * 1440.0).round() as usize;
    let t0 = opts.start - TimeDelta::minutes(n_warm as i64);
    let mut exo = Exogenous {
        cfg,
        rng: stream_rng(opts.seed, &format!("{}/plant", opts.label)),
        noise: 0.0,
        day: None,
    };
    let h0 = hour_of_day(t0);
    let mut state = PlantState {
        pool_temp_c: [controllers[0].setpoint_at(h0), controllers[1].setpoint_at(h0)],
        air_temp_c: cfg.air.setpoint_c,
        humidity_pct: cfg.air.humidity_base_pct,
        outdoor_temp_c: outdoor_mean(cfg, t0),
        integrator: [0.5; 2],
    };
    let mut flushing = [false; 2];
    let mut values = DMatrix::<f64>::zeros(n_log, 12);
    let air_noise_scale = cfg.air.noise_c * (DT_S / 3600.0).sqrt();
    for k in 0..n_warm + n_log {
        let t = t0 + TimeDelta::minutes(k as i64);
        let h = hour_of_day(t);
        let mut ctl = exo.controls(t);
        let ov = active_overrides(scenarios, t);
        if let Some(sp) = ov.air_setpoint_c {
            ctl.air_setpoint_c = sp;
        }
        for i in 0..2 {
            let sp = ov.pool_setpoint_c[i].unwrap_or_else(|| controllers[i].setpoint_at(h));
            ctl.valve[i] = match ov.valve_pct[i] {
                Some(v) => (v / 100.0).clamp(0.0, 1.0),
                None => pi_valve(&controllers[i], sp, state.pool_temp_c[i], &mut state.integrator[i], DT_S),
            };
            match ov.flush[i] {
                Some((flow, target)) => {
                    let temp = state.pool_temp_c[i];
                    if temp > target + FLUSH_HYSTERESIS_C {
                        flushing[i] = true;
                    } else if temp <= target {
                        flushing[i] = false;
                    }
                    if flushing[i] {
                        ctl.refill_flow_m3h[i] += flow;
                    }
                }
                None => flushing[i] = false,
            }
        }
        ctl.outdoor_c = exo.advance_outdoor(t + TimeDelta::minutes(1));
        let (mut next, heat) = step(&state, cfg, &ctl, DT_S)?;
        let e: f64 = exo.rng.sample(StandardNormal);
        next.air_temp_c += air_noise_scale * e;
        if k >= n_warm {
            let r = k - n_warm;
            values[(r, col::BOILER)] = heat.boiler_w / 1e3;
            values[(r, col::AIR)] = state.air_temp_c;
            values[(r, col::HUMIDITY)] = state.humidity_pct;
            values[(r, col::OUTDOOR)] = state.outdoor_temp_c;
            values[(r, col::REFILL)] = ctl.refill_flow_m3h[0] + ctl.refill_flow_m3h[1];
            values[(r, col::HALL)] = heat.hall_w / 1e3;
            for i in 0..2 {
                values[(r, col::VALVE[i])] = 100.0 * ctl.valve[i];
                values[(r, col::RECYCLE[i])] = ctl.recycle_flow_m3h[i];
                values[(r, col::POOL[i])] = state.pool_temp_c[i];
            }
        }
        state = next;
    }
    apply_sensors(cfg, &mut values, opts);
    Ok(SignalFrame::new(opts.start, RAW_PERIOD_S, benchmark_schema(), values)?)
}

/// Measurement noise, isolated spikes and short dropouts. Uses its own RNG
/// streams so the physical trajectory does not depend on sensor settings.
fn apply_sensors(cfg: &PlantConfig, values: &mut DMatrix<f64>, opts: &EpisodeOptions) {
    let s = &cfg.sensors;
    let cap_kw = cfg.boiler_capacity_w() / 1e3;
    let noise = |c: usize| match c {
        col::BOILER | col::HALL => s.power_noise_kw,
        col::AIR | col::OUTDOOR => s.temp_noise_c,
        c if col::POOL.contains(&c) => s.temp_noise_c,
        c if col::RECYCLE.contains(&c) || c == col::REFILL => s.flow_noise_m3h,
        col::HUMIDITY => s.humidity_noise_pct,
        _ => 0.0,
    };
    let range = |c: usize| match c {
        col::BOILER => (0.0, cap_kw),
        col::HUMIDITY => (0.0, 100.0),
        c if col::VALVE.contains(&c) => (0.0, 100.0),
        c if col::RECYCLE.contains(&c) || c == col::REFILL || c == col::HALL => (0.0, f64::INFINITY),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    };
    const SPIKE_SCALE: [f64; 12] = [300.0, 40.0, 40.0, 3.0, 15.0, 8.0, 60.0, 60.0, 20.0, 80.0, 3.0, 3.0];
    let mut noise_rng = stream_rng(opts.seed, &format!("{}/sensor", opts.label));
    let mut fault_rng = stream_rng(opts.seed, &format!("{}/fault", opts.label));
    let p_spike = s.spike_rate_per_day / 1440.0;
    let p_drop = s.dropout_rate_per_day / 1440.0;
    let n = values.nrows();
    for c in 0..values.ncols() {
        let sigma = noise(c);
        let (lo, hi) = range(c);
        let mut r = 0;
        while r < n {
            let z: f64 = noise_rng.sample(StandardNormal);
            let mut v = values[(r, c)] + sigma * z;
            if p_spike > 0.0 && fault_rng.random::<f64>() < p_spike {
                let sign = if fault_rng.random::<bool>() { 1.0 } else { -1.0 };
                v += sign * SPIKE_SCALE[c] * fault_rng.random_range(0.5..1.0);
            }
            values[(r, c)] = v.clamp(lo, hi);
            if p_drop > 0.0 && fault_rng.random::<f64>() < p_drop {
                let len = fault_rng.random_range(1..=3usize);
                for k in r..(r + len).min(n) {
                    values[(k, c)] = MISSING;
                }
                r += len;
                continue;
            }
            r += 1;
        }
    }
}
