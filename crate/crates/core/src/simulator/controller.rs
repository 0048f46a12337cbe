use super::ControllerConfig;

/// One PI update with conditional-integration anti-windup. Returns the valve
/// opening in `[0, 1]`; `integrator` is updated in place.
pub fn pi_valve(ctl: &ControllerConfig, setpoint_c: f64, measured_c: f64, integrator: &mut f64, dt: f64) -> f64 {
    let e = setpoint_c - measured_c;
    let p = ctl.kp * e;
    let candidate = *integrator + ctl.ki * e * dt;
    let u = p + candidate;
    let pushing_high = u > 1.0 && e > 0.0;
    let pushing_low = u < 0.0 && e < 0.0;
    if !(pushing_high || pushing_low) {
        *integrator = candidate.clamp(0.0, 1.0);
    }
    (p + *integrator).clamp(0.0, 1.0)
}
