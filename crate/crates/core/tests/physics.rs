use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use modedec::cascade::{build_cascade, ModeDesign};
use modedec::resonance::{gap_report, min_gap, min_gap_with_threshold};
use modedec::spinsim::{efficiency, final_propagators, propagate, Engine, SimConfig, SpinSystem};
use modedec::units::{hz_to_rad_s, khz_to_rad_s};
use modedec::waveform::synthesize_mode;

fn paper_design() -> ModeDesign {
    ModeDesign::uniform(6, khz_to_rad_s(4.8), khz_to_rad_s(22.5), 0.0).unwrap()
}

#[test]
fn efficiency_converges_in_step_size() {
    let design = paper_design();
    let cascade = build_cascade(&design);
    let duration = 12.0 / 140.0;
    let coarse = synthesize_mode(&design, &cascade, duration, 0.5e-6).unwrap();
    let fine = synthesize_mode(&design, &cascade, duration, 0.25e-6).unwrap();
    for khz in [-9.0, 0.0, 4.5, 6.25] {
        let sys = SpinSystem::new(140.0, khz_to_rad_s(khz));
        let a = efficiency(
            &propagate(&sys, &coarse, &SimConfig::new(duration, 0.5e-6, 1.0, Engine::Factorized2x2).unwrap())
                .unwrap(),
        );
        let b = efficiency(
            &propagate(&sys, &fine, &SimConfig::new(duration, 0.25e-6, 1.0, Engine::Factorized2x2).unwrap())
                .unwrap(),
        );
        assert_abs_diff_eq!(a, b, epsilon = 1e-4);
    }
}

#[test]
fn long_run_propagators_stay_unitary() {
    let design = paper_design();
    let wf = synthesize_mode(&design, &build_cascade(&design), 85e-3, 0.5e-6).unwrap();
    let cfg = SimConfig::new(85e-3, 0.5e-6, 1.1, Engine::Factorized2x2).unwrap();
    let (up, dn) = final_propagators(&SpinSystem::new(140.0, khz_to_rad_s(3.3)), &wf, &cfg).unwrap();
    assert!((up.det() - 1.0).abs() < 1e-10, "{}", up.det());
    assert!((dn.det() - 1.0).abs() < 1e-10, "{}", dn.det());
}

#[test]
fn near_resonance_count_for_reference_design() {
    let cascade = build_cascade(&paper_design());
    let threshold = hz_to_rad_s(500.0);
    let result = min_gap_with_threshold(&cascade.upsilon, threshold).unwrap();
    let report = gap_report(&cascade.upsilon, threshold).unwrap();
    assert_eq!(result.near_resonances, 616);
    assert_eq!(report.len(), 616);
    assert!(report.iter().all(|e| e.delta.abs() < threshold));
}

/// Exhaustive oracle written independently of the production odometer.
fn brute_force(u: &[f64]) -> f64 {
    let n = u.len();
    let mut best = f64::INFINITY;
    for k in 0..n {
        let radix: Vec<i64> = (0..n).map(|j| if j < k { 3 } else if j == k { 2 } else { 7 }).collect();
        let total: i64 = radix.iter().product();
        for mut code in 0..total {
            let mut sum = 0.0;
            for j in 0..n {
                let digit = code % radix[j];
                code /= radix[j];
                let c = if j < k {
                    digit - 1
                } else if j == k {
                    4 * digit - 2
                } else {
                    digit - 3
                };
                sum += c as f64 * u[j];
            }
            best = best.min(sum.abs());
        }
    }
    best
}

fn decreasing(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..1e4, 1..=max_len).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        v
    })
}

proptest! {
    #[test]
    fn gap_matches_brute_force(u in decreasing(3)) {
        let fast = min_gap(&u).unwrap().delta_min;
        prop_assert!((fast - brute_force(&u)).abs() <= 1e-9 * u[0]);
    }

    #[test]
    fn gap_scales_with_frequencies(u in decreasing(4), s in 0.1f64..10.0) {
        let scaled: Vec<f64> = u.iter().map(|x| x * s).collect();
        let a = min_gap(&u).unwrap().delta_min * s;
        let b = min_gap(&scaled).unwrap().delta_min;
        prop_assert!((a - b).abs() <= 1e-9 * scaled[0]);
    }

    #[test]
    fn adding_a_frame_never_widens_the_gap(u in decreasing(4), f in 0.01f64..0.99) {
        let mut longer = u.clone();
        longer.push(u[u.len() - 1] * f);
        prop_assert!(min_gap(&longer).unwrap().delta_min <= min_gap(&u).unwrap().delta_min);
    }

    #[test]
    fn reported_assignment_reproduces_gap(u in decreasing(4)) {
        let r = min_gap(&u).unwrap();
        prop_assert_eq!(r.assignment.delta(&u).abs(), r.delta_min);
        prop_assert_eq!(r.assignment.pivot().abs(), 2);
    }
}
