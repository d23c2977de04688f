//! Rotating-frame cascade of a multiply-modulated decoupling field.
//!
//! Each frame demodulates one component of the RF field into a static
//! field `wbar[k]` and leaves a residual chemical-shift spread `c[k]`.
//! The modulation frequency `upsilon[k]` of the next frame is the centre
//! of the effective-field spread in frame `k`, which halves that spread
//! around zero. All frequencies are angular (rad/s).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// User-facing design parameters of a MODE field.
///
/// `w_levels[0]` is the static x amplitude; `w_levels[k]` for `k >= 1` is the
/// amplitude of the `k`-th modulation term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeDesign {
    w_levels: Vec<f64>,
    c0: f64,
    delta_design: f64,
}

impl ModeDesign {
    pub fn new(w_levels: Vec<f64>, c0: f64, delta_design: f64) -> Result<Self> {
        if w_levels.is_empty() {
            return Err(Error::invalid("w_levels", "need at least w_0"));
        }
        if let Some((k, w)) = w_levels
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::invalid(
                "w_levels",
                format!("w_{k} = {w} must be positive and finite"),
            ));
        }
        if !(c0.is_finite() && c0 >= 0.0) {
            return Err(Error::invalid("c0", format!("{c0} must be >= 0")));
        }
        check_delta(delta_design)?;
        Ok(ModeDesign {
            w_levels,
            c0,
            delta_design,
        })
    }

    /// Equal amplitudes on every level, `w_k = w0` for `k = 0..=n_frames`.
    pub fn uniform(n_frames: usize, w0: f64, c0: f64, delta_design: f64) -> Result<Self> {
        Self::new(vec![w0; n_frames + 1], c0, delta_design)
    }

    pub fn n_frames(&self) -> usize {
        self.w_levels.len() - 1
    }

    pub fn w_levels(&self) -> &[f64] {
        &self.w_levels
    }

    pub fn w0(&self) -> f64 {
        self.w_levels[0]
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn delta_design(&self) -> f64 {
        self.delta_design
    }

    /// Same design with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.w_levels.iter().map(|w| w * factor).collect(),
            self.c0,
            self.delta_design,
        )
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && (0.0..1.0).contains(&delta)) {
        return Err(Error::invalid(
            "delta_design",
            format!("{delta} must satisfy 0 <= delta < 1"),
        ));
    }
    Ok(())
}

/// Per-frame quantities derived from a [`ModeDesign`].
///
/// `wbar`, `c` and `alpha` have `N + 1` entries (frames `0..=N`);
/// `upsilon` has `N` entries, `upsilon[k - 1]` being the modulation
/// frequency that takes frame `k - 1` into frame `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameCascade {
    pub wbar: Vec<f64>,
    pub c: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta_design: f64,
}

impl FrameCascade {
    pub fn n_frames(&self) -> usize {
        self.upsilon.len()
    }
}

pub fn build_cascade(design: &ModeDesign) -> FrameCascade {
    let delta = design.delta_design;
    let wbar: Vec<f64> = design
        .w_levels
        .iter()
        .enumerate()
        .map(|(k, w)| w * 0.5f64.powi(k as i32))
        .collect();

    let n = design.n_frames();
    let mut c = Vec::with_capacity(n + 1);
    let mut upsilon = Vec::with_capacity(n);
    c.push(design.c0);
    for k in 0..n {
        let (ck, wk) = (c[k], wbar[k]);
        let spread_top = ck.hypot(wk * (1.0 + delta));
        let spread_bottom = wk * (1.0 - delta);
        upsilon.push(0.5 * (spread_top + spread_bottom));
        // (top - bottom) / 2 rewritten without cancellation for small c_k
        c.push(0.5 * (ck * ck + 4.0 * delta * wk * wk) / (spread_top + spread_bottom));
    }
    let alpha = c.iter().zip(&wbar).map(|(c, w)| c / w).collect();

    FrameCascade {
        wbar,
        c,
        upsilon,
        alpha,
        delta_design: delta,
    }
}

/// Fixed point `2δ / (1 − δ)` of the inhomogeneity-robust α map.
pub fn alpha_fixed_point(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(2.0 * delta / (1.0 - delta))
}

/// One step of the α map for equal amplitude levels,
/// `α' = √(α² + (1+δ)²) − (1−δ)`.
///
/// Evaluated as `(α² + 4δ) / (√(α² + (1+δ)²) + 1 − δ)`, which is the same
/// quantity without cancellation when α and δ are small.
pub fn alpha_step(alpha: f64, delta: f64) -> f64 {
    let root = alpha.hypot(1.0 + delta);
    (alpha * alpha + 4.0 * delta) / (root + 1.0 - delta)
}

/// Tilt angles and residual shifts seen by one chemical-shift offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetTrajectory {
    pub omega: f64,
    pub epsilon: f64,
    /// `f[0] = omega`, then the signed residual shift in each frame.
    pub f: Vec<f64>,
    /// `theta[k - 1]` is the tilt of the effective field entering frame `k`.
    pub theta: Vec<f64>,
    /// Product of `cos theta`, the factor scaling the surviving coupling.
    pub j_scale: f64,
}

/// Follows offset `omega` through the cascade with every static field
/// scaled by `epsilon` (realized over nominal RF amplitude).
pub fn offset_trajectory(cascade: &FrameCascade, omega: f64, epsilon: f64) -> OffsetTrajectory {
    let n = cascade.n_frames();
    let mut f = Vec::with_capacity(n + 1);
    let mut theta = Vec::with_capacity(n);
    f.push(omega);
    for k in 0..n {
        let field = epsilon * cascade.wbar[k];
        theta.push(field.atan2(f[k]));
        f.push(f[k].hypot(field) - cascade.upsilon[k]);
    }
    let j_scale = theta.iter().map(|t| t.cos()).product();
    OffsetTrajectory {
        omega,
        epsilon,
        f,
        theta,
        j_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::khz_to_rad_s;
    use proptest::prelude::*;

    fn paper_design() -> ModeDesign {
        ModeDesign::uniform(6, khz_to_rad_s(4.8), khz_to_rad_s(22.5), 0.0).unwrap()
    }

    /// Hand iteration of the recursion in kHz, kept apart from `build_cascade`.
    fn hand_iterate(n: usize, w: f64, c0: f64) -> (Vec<f64>, Vec<f64>) {
        let mut c = vec![c0];
        let mut u = vec![];
        let mut wbar = w;
        for _ in 0..n {
            let ck = *c.last().unwrap();
            let r = (ck * ck + wbar * wbar).sqrt();
            c.push((r - wbar) / 2.0);
            u.push((r + wbar) / 2.0);
            wbar /= 2.0;
        }
        (c, u)
    }

    #[test]
    fn paper_cascade_values() {
        let cas = build_cascade(&paper_design());
        let (c_ref, u_ref) = hand_iterate(6, 4.8, 22.5);
        for (k, (c, r)) in cas.c.iter().zip(&c_ref).enumerate() {
            let ck = crate::units::rad_s_to_khz(*c);
            assert!((ck - r).abs() < 1e-12, "c_{k}: {ck} vs {r}");
        }
        // frozen from the hand iteration
        let upsilon_khz = [13.9032, 5.9071, 2.4534, 0.9948, 0.3979, 0.1646];
        for k in 0..6 {
            let uk = crate::units::rad_s_to_khz(cas.upsilon[k]);
            assert!((uk - u_ref[k]).abs() < 1e-12);
            assert!((uk - upsilon_khz[k]).abs() < 1e-4, "upsilon_{}: {uk}", k + 1);
        }
        let quoted = [9.1, 3.5, 1.23, 0.38, 0.09, 0.01];
        for k in 1..=6 {
            let ck = crate::units::rad_s_to_khz(cas.c[k]);
            assert!((ck - quoted[k - 1]).abs() < 0.03, "c_{k} = {ck}");
        }
    }

    #[test]
    fn spread_identity_is_tight() {
        let cas = build_cascade(&paper_design());
        for k in 1..=6 {
            let r = cas.c[k - 1].hypot(cas.wbar[k - 1]);
            assert!((cas.upsilon[k - 1] + cas.c[k] - r).abs() <= 4.0 * f64::EPSILON * r);
        }
    }

    #[test]
    fn zero_shift_collapses() {
        let d = ModeDesign::uniform(5, 3.0, 0.0, 0.0).unwrap();
        let cas = build_cascade(&d);
        assert!(cas.c.iter().all(|&c| c == 0.0));
        for k in 0..5 {
            assert_eq!(cas.upsilon[k], cas.wbar[k]);
        }
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(ModeDesign::new(vec![1.0, 0.0], 1.0, 0.0).is_err());
        assert!(ModeDesign::new(vec![1.0, -2.0], 1.0, 0.0).is_err());
        assert!(ModeDesign::new(vec![], 1.0, 0.0).is_err());
        assert!(ModeDesign::new(vec![1.0], -1.0, 0.0).is_err());
        assert!(ModeDesign::new(vec![1.0], 1.0, 1.0).is_err());
        assert!(ModeDesign::new(vec![1.0], 1.0, -0.1).is_err());
        assert!(ModeDesign::new(vec![1.0], 1.0, f64::NAN).is_err());
    }

    #[test]
    fn fixed_point_values() {
        assert!((alpha_fixed_point(0.1).unwrap() - 0.2222).abs() < 1e-4);
        assert_eq!(alpha_fixed_point(0.0).unwrap(), 0.0);
        assert!((alpha_fixed_point(0.2).unwrap() - 0.5).abs() < 1e-15);
        assert!(alpha_fixed_point(1.0).is_err());
        assert!(alpha_fixed_point(1.5).is_err());
    }

    #[test]
    fn robust_cascade_alpha_follows_map() {
        let d = ModeDesign::uniform(6, khz_to_rad_s(4.8), khz_to_rad_s(22.5), 0.1).unwrap();
        let cas = build_cascade(&d);
        for k in 0..6 {
            let expected = alpha_step(cas.alpha[k], 0.1);
            assert!((cas.alpha[k + 1] - expected).abs() < 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn on_resonance_is_fully_tilted() {
        let cas = build_cascade(&paper_design());
        let tr = offset_trajectory(&cas, 0.0, 1.0);
        assert_eq!(tr.theta[0], std::f64::consts::FRAC_PI_2);
        assert!(tr.j_scale.abs() < 1e-15);
    }

    #[test]
    fn boundary_offset_tracks_bound() {
        let cas = build_cascade(&paper_design());
        let tr = offset_trajectory(&cas, cas.c[0], 1.0);
        for k in 0..=6 {
            assert!(
                (tr.f[k].abs() - cas.c[k]).abs() <= 1e-9 * cas.c[0],
                "frame {k}: f = {}, c = {}",
                tr.f[k],
                cas.c[k]
            );
        }
    }

    #[test]
    fn mid_band_offset_within_last_bound() {
        let cas = build_cascade(&paper_design());
        let tr = offset_trajectory(&cas, khz_to_rad_s(6.25), 1.0);
        assert!(tr.f[6].abs() <= cas.c[6]);
        assert!(cas.c[6] < khz_to_rad_s(0.015));
    }

    #[test]
    fn boundary_tracking_on_grid() {
        let cas = build_cascade(&paper_design());
        let c0 = cas.c[0];
        for i in 0..201 {
            let omega = -c0 + 2.0 * c0 * i as f64 / 200.0;
            let tr = offset_trajectory(&cas, omega, 1.0);
            for k in 0..=6 {
                assert!(tr.f[k].abs() <= cas.c[k] * (1.0 + 1e-12) + 1e-9);
            }
            assert!(tr.j_scale.abs() <= 1.0);
        }
    }

    #[test]
    fn j_scale_shrinks_with_more_frames() {
        let omega = khz_to_rad_s(10.0);
        let mut prev = f64::INFINITY;
        for n in 1..=6 {
            let d = ModeDesign::uniform(n, khz_to_rad_s(4.8), khz_to_rad_s(22.5), 0.0).unwrap();
            let j = offset_trajectory(&build_cascade(&d), omega, 1.0).j_scale.abs();
            assert!(j < prev, "N = {n}: {j} !< {prev}");
            prev = j;
        }
    }

    #[test]
    fn frequency_ratio_bounds() {
        for n in 1..=8 {
            let d = ModeDesign::uniform(n, 1.0, 4.7, 0.0).unwrap();
            let cas = build_cascade(&d);
            for k in 0..n {
                // υ_{k+1} against the amplitude of the frame it creates
                let r = 2.0 * cas.upsilon[k] / cas.wbar[k + 1];
                assert!(r > 4.0, "N = {n}, k = {k}: 2υ/w̄ = {r}");
                if k + 1 < n {
                    let q = cas.upsilon[k] / cas.upsilon[k + 1];
                    assert!(q > 2.0, "N = {n}, k = {k}: υ ratio {q}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn alpha_contracts(alpha in 1e-6f64..=100.0) {
            let next = alpha_step(alpha, 0.0);
            prop_assert!(next < alpha);
            prop_assert!(next > 0.0);
        }

        #[test]
        fn small_alpha_is_quadratic(alpha in 1e-6f64..1e-2) {
            let ratio = alpha_step(alpha, 0.0) / alpha;
            prop_assert!((ratio - alpha / 2.0).abs() < 1e-2 * alpha / 2.0);
        }

        #[test]
        fn large_alpha_is_shift_by_one(alpha in 100.0f64..1e6) {
            prop_assert!((alpha_step(alpha, 0.0) - (alpha - 1.0)).abs() < 1e-2);
        }

        #[test]
        fn robust_map_settles_on_fixed_point(delta in 0.0f64..0.5, excess in 1e-3f64..50.0) {
            let ap = alpha_fixed_point(delta).unwrap();
            let mut a = ap + excess;
            for _ in 0..200 {
                let next = alpha_step(a, delta);
                prop_assert!(next <= a + 1e-15);
                prop_assert!(next >= ap - 1e-12);
                a = next;
            }
            prop_assert!((a - ap).abs() < 1e-6);
        }

        #[test]
        fn cascade_alpha_strictly_decreasing(n in 1usize..7, w0 in 0.1f64..10.0, c0 in 0.1f64..50.0) {
            let cas = build_cascade(&ModeDesign::uniform(n, w0, c0, 0.0).unwrap());
            for k in 0..n {
                prop_assert!(cas.alpha[k + 1] < cas.alpha[k]);
            }
        }
    }
}
