//! Conversions between the angular units used internally and the
//! cyclic units used at the command-line boundary.

use std::f64::consts::TAU;

pub fn khz_to_rad_s(khz: f64) -> f64 {
    khz * (TAU * 1e3)
}

pub fn rad_s_to_khz(w: f64) -> f64 {
    w / (TAU * 1e3)
}

pub fn hz_to_rad_s(hz: f64) -> f64 {
    hz * TAU
}

pub fn rad_s_to_hz(w: f64) -> f64 {
    w / TAU
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn khz_round_trip() {
        for &x in &[0.0, 4.8, 22.5, -6.25] {
            let back = rad_s_to_khz(khz_to_rad_s(x));
            assert!((back - x).abs() <= 1e-15 * x.abs().max(1.0));
        }
        assert!((rad_s_to_hz(hz_to_rad_s(140.0)) - 140.0).abs() < 1e-12);
    }
}
