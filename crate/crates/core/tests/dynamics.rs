mod common;

use common::{max_position_gap, oracle};
use hybrid_sysid::dynamics::{self, simulate_with_impacts};
use hybrid_sysid::params::ParamSpace;
use hybrid_sysid::{BallState, Mode, PhysParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn lossless_ball_keeps_its_energy_over_many_bounces() {
    let p = PhysParams::new(1.0, -9.81, 0.0, 0.0, 0.3);
    let init = BallState::flight(1.0, 3.0, 0.4, 0.0);
    let (traj, impacts) = simulate_with_impacts(&init, &p, 400, 0.05).unwrap();
    assert!(impacts.len() >= 10, "{} impacts", impacts.len());
    let e0 = init.energy(&p);
    for s in &traj.states {
        assert!((s.energy(&p) - e0).abs() / e0 < 1e-6);
    }
}

#[test]
fn apex_heights_shrink_by_e_squared() {
    let (e, g, h0) = (0.8, -9.81, 4.0);
    let p = PhysParams::new(e, g, 0.0, 0.5, 0.0);
    let (_, impacts) = simulate_with_impacts(&BallState::flight(1.0, h0, 0.0, 0.0), &p, 200, 0.05).unwrap();
    let bounces: Vec<_> = impacts.iter().filter(|i| !i.started_rolling).collect();
    assert!(bounces.len() >= 8);
    for (k, imp) in bounces.iter().enumerate() {
        let apex = (e * imp.vy_in).powi(2) / (2.0 * g.abs());
        let want = h0 * e.powi(2 * (k as i32 + 1));
        assert!((apex - want).abs() / want < 1e-6, "bounce {k}: {apex} vs {want}");
    }
}

#[test]
fn impact_times_match_a_fine_step_reference() {
    let p = PhysParams::new(0.85, -9.81, 0.03, 0.4, 0.2);
    let init = BallState::flight(0.5, 3.5, 1.0, 1.5);
    let n = 121;
    let (_, impacts) = simulate_with_impacts(&init, &p, n, 0.05).unwrap();
    let reference = oracle(&init, &p, n, 0.05, 1e-7);
    assert!(impacts.len() >= 4);
    assert_eq!(impacts.len(), reference.impacts.len());
    for (a, b) in impacts.iter().zip(&reference.impacts) {
        assert!((a.time - b).abs() < 1e-6, "{} vs {b}", a.time);
    }
}

#[test]
fn random_parameters_track_the_reference_for_ten_seconds() {
    let space = ParamSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..6 {
        let p = space.sample_uniform(&mut rng);
        let init = BallState::flight(1.0, p.table_h + 2.5, 0.6, 0.5);
        let traj = dynamics::simulate(&init, &p, 10.0, 0.05).unwrap();
        let reference = oracle(&init, &p, traj.len(), 0.05, 1e-6);
        let gap = max_position_gap(&traj.positions(), &reference.positions);
        assert!(gap < 1e-5, "{p:?}: {gap}");
    }
}

#[test]
fn rolling_ball_settles_on_the_surface() {
    let p = PhysParams::new(0.6, -9.81, 0.01, 0.5, 0.4);
    let traj = dynamics::simulate(&BallState::flight(1.0, 1.0, 1.0, 0.0), &p, 10.0, 0.05).unwrap();
    let last = traj.states.last().unwrap();
    assert_eq!(last.mode, Mode::Rolling);
    assert_eq!(last.y, 0.4);
    assert_eq!(last.vx, 0.0);
}

fn params() -> impl Strategy<Value = PhysParams> {
    (0.6..1.0f64, -12.81..-6.81f64, 0.0005..0.05f64, 0.0..0.7f64, 0.0..1.0f64)
        .prop_map(|(e, g, c, r, h)| PhysParams::new(e, g, c, r, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_never_grows(p in params(), vx in -3.0..3.0f64, vy in -3.0..3.0f64, lift in 0.0..3.0f64) {
        let init = BallState::flight(5.0, p.table_h + lift, vx, vy);
        let traj = dynamics::simulate_frames(&init, &p, 120, 0.05).unwrap();
        let mut prev = init.energy(&p);
        for s in &traj.states {
            let now = s.energy(&p);
            prop_assert!(now <= prev + 1e-9 * prev.max(1.0));
            prev = now;
        }
    }

    #[test]
    fn ball_stays_on_or_above_the_surface(p in params(), vx in -3.0..3.0f64, vy in -5.0..5.0f64, lift in 0.0..3.0f64) {
        let init = BallState::flight(5.0, p.table_h + lift, vx, vy);
        let traj = dynamics::simulate_frames(&init, &p, 120, 0.05).unwrap();
        for s in &traj.states {
            prop_assert!(s.is_finite());
            prop_assert!(s.y >= p.table_h);
            // drag slows the ball but never turns it around horizontally
            prop_assert!(s.vx * vx >= 0.0);
        }
    }

    #[test]
    fn identical_inputs_give_identical_paths(p in params(), vy in -3.0..3.0f64) {
        let init = BallState::flight(2.0, p.table_h + 1.0, 1.0, vy);
        let a = dynamics::simulate_frames(&init, &p, 60, 0.05).unwrap();
        let b = dynamics::simulate_frames(&init, &p, 60, 0.05).unwrap();
        prop_assert_eq!(a, b);
    }
}
