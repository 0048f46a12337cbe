use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

/// Override applied to the nominal plant operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioAction {
    /// The valve of `pool` is stuck at `opening_pct`.
    ValveFreeze { pool: usize, opening_pct: f64 },
    /// Setpoint of `pool` replaced by a constant.
    PoolSetpoint { pool: usize, setpoint_c: f64 },
    /// Hall air setpoint replaced by a constant.
    AirSetpoint { setpoint_c: f64 },
    /// Extra fresh water into `pool` while it is warmer than `target_c`.
    Flush {
        pool: usize,
        flow_m3h: f64,
        target_c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub action: ScenarioAction,
}

impl TimedAction {
    pub fn active_at(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// One abnormal-operation episode and the section of data that records it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub id: u8,
    pub label: String,
    pub description: String,
    pub section_start: DateTime<Utc>,
    pub section_end: DateTime<Utc>,
    pub actions: Vec<TimedAction>,
}

/// Offset between a scenario section start and the onset of its override,
/// so prediction anchors see the transition.
pub const ONSET_DELAY_H: i64 = 6;

const COOL_TARGET_C: f64 = 25.0;

impl ScenarioScript {
    /// The four abnormal episodes of the benchmark year:
    /// 1. pool 1 valve stuck at 50 %;
    /// 2. pool 2 cooled to 25 °C, pool 1 nominal;
    /// 3. pool 1 cooled to 25 °C while pool 2 stays at 25 °C;
    /// 4. both pools reheated together.
    ///
    /// Scenarios 3 and 4 include a lead-in that establishes their starting
    /// condition, so each script is self-contained; in the benchmark year
    /// they directly follow scenario 2.
    pub fn standard(id: u8, start: DateTime<Utc>, days: i64) -> Option<Self> {
        let end = start + TimeDelta::days(days);
        let onset = start + TimeDelta::hours(ONSET_DELAY_H);
        let lead = start - TimeDelta::days(days);
        let act = |s, e, action| TimedAction {
            start: s,
            end: e,
            action,
        };
        let cool = |pool: usize, flow: f64, s, e| {
            vec![
                act(
                    s,
                    e,
                    ScenarioAction::PoolSetpoint {
                        pool,
                        setpoint_c: COOL_TARGET_C,
                    },
                ),
                act(
                    s,
                    e,
                    ScenarioAction::Flush {
                        pool,
                        flow_m3h: flow,
                        target_c: COOL_TARGET_C,
                    },
                ),
            ]
        };
        let (description, actions) = match id {
            1 => (
                "stuck three-way valve on pool 1 at 50 %",
                vec![act(
                    onset,
                    end,
                    ScenarioAction::ValveFreeze {
                        pool: 0,
                        opening_pct: 50.0,
                    },
                )],
            ),
            2 => (
                "pool 2 cooled down to 25 degC while pool 1 stays nominal",
                cool(1, 12.0, onset, end),
            ),
            3 => (
                "pool 1 cooled down to 25 degC while pool 2 stays at 25 degC",
                [cool(1, 12.0, lead, end), cool(0, 24.0, onset, end)].concat(),
            ),
            4 => (
                "pools 1 and 2 reheated to nominal at the same time",
                [cool(1, 12.0, lead, onset), cool(0, 24.0, lead, onset)].concat(),
            ),
            _ => return None,
        };
        Some(Self {
            id,
            label: format!("scenario{id}"),
            description: description.to_string(),
            section_start: start,
            section_end: end,
            actions,
        })
    }
}

/// Overrides in force at one instant, merged over all scripts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActiveOverrides {
    pub valve_pct: [Option<f64>; 2],
    pub pool_setpoint_c: [Option<f64>; 2],
    pub air_setpoint_c: Option<f64>,
    /// `(flow, target)` per pool.
    pub flush: [Option<(f64, f64)>; 2],
}

pub fn active_overrides(scripts: &[ScenarioScript], t: DateTime<Utc>) -> ActiveOverrides {
    let mut o = ActiveOverrides::default();
    for a in scripts.iter().flat_map(|s| &s.actions).filter(|a| a.active_at(t)) {
        match a.action {
            ScenarioAction::ValveFreeze { pool, opening_pct } => o.valve_pct[pool] = Some(opening_pct),
            ScenarioAction::PoolSetpoint { pool, setpoint_c } => {
                o.pool_setpoint_c[pool] = Some(setpoint_c)
            }
            ScenarioAction::AirSetpoint { setpoint_c } => o.air_setpoint_c = Some(setpoint_c),
            ScenarioAction::Flush {
                pool,
                flow_m3h,
                target_c,
            } => o.flush[pool] = Some((flow_m3h, target_c)),
        }
    }
    o
}
