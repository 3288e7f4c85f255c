use std::sync::Arc;

use lhiqn::envs::{
    decode_meeting_observation, make_env, render_meeting_image, Cmotp, CmotpVariant, EnvConfig, EnvKind,
    Environment, GridState, MeetingGrid, MeetingPlanner, Pos, TargetMotion, IMAGE_SIDE,
};
use lhiqn::harness::{evaluate, Policy, RandomPolicy, ScriptedMeetingPolicy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const UP: usize = 0;
const DOWN: usize = 1;
const LEFT: usize = 2;
const RIGHT: usize = 3;
const STAY: usize = 4;

fn quiet_meeting(n: usize) -> EnvConfig {
    EnvConfig {
        transition_noise: 0.0,
        flicker: Some(0.0),
        target_motion: TargetMotion::Static,
        ..EnvConfig::meeting(n)
    }
}

fn cmotp(variant: CmotpVariant, seed: u64) -> Cmotp {
    let mut env = Cmotp::new(EnvConfig {
        kind: EnvKind::Cmotp,
        transition_noise: 0.0,
        image_noise: 0.0,
        cmotp_variant: variant,
        seed,
        ..EnvConfig::default()
    })
    .unwrap();
    env.reset().unwrap();
    env
}

#[test]
fn reset_is_seed_deterministic_and_in_bounds() {
    let a = make_env(&EnvConfig::meeting(4)).unwrap().reset().unwrap();
    let b = make_env(&EnvConfig::meeting(4)).unwrap().reset().unwrap();
    assert_eq!(a, b);
    let mut env = MeetingGrid::new(quiet_meeting(4)).unwrap();
    for _ in 0..200 {
        let obs = env.reset().unwrap();
        let decoded = decode_meeting_observation(&obs[0], 4).unwrap();
        for p in decoded {
            let p = p.unwrap();
            assert!(p.x < 4 && p.y < 4);
        }
        let s = env.state();
        let t = s.target.unwrap();
        assert!(s.agents[0] != s.agents[1] && s.agents[0] != t && s.agents[1] != t);
    }
}

#[test]
fn noiseless_move_is_deterministic() {
    let mut env = MeetingGrid::new(quiet_meeting(4)).unwrap();
    env.reset().unwrap();
    env.set_state([Pos::new(0, 0), Pos::new(3, 3)], Pos::new(2, 2), 0).unwrap();
    env.step(&[RIGHT, STAY]).unwrap();
    assert_eq!(env.state().agents[0], Pos::new(1, 0));
    env.step(&[UP, STAY]).unwrap();
    assert_eq!(env.state().agents[0], Pos::new(1, 0));
}

#[test]
fn joint_landing_pays_and_terminates() {
    let mut env = MeetingGrid::new(quiet_meeting(4)).unwrap();
    env.reset().unwrap();
    env.set_state([Pos::new(1, 2), Pos::new(2, 1)], Pos::new(2, 2), 0).unwrap();
    let s = env.step(&[RIGHT, DOWN]).unwrap();
    assert_eq!((s.reward, s.terminal, s.success), (1.0, true, true));
}

#[test]
fn episode_cap_terminates_without_reward() {
    let mut env = MeetingGrid::new(quiet_meeting(4)).unwrap();
    env.reset().unwrap();
    env.set_state([Pos::new(0, 0), Pos::new(3, 3)], Pos::new(2, 0), 39).unwrap();
    let s = env.step(&[STAY, STAY]).unwrap();
    assert_eq!((s.reward, s.terminal, s.success), (0.0, true, false));
}

fn blank_rates(flicker: f64, draws: usize) -> [f64; 3] {
    let mut env = MeetingGrid::new(EnvConfig {
        flicker: Some(flicker),
        seed: 99,
        ..EnvConfig::meeting(4)
    })
    .unwrap();
    let mut blanks = [0usize; 3];
    let mut total = 0;
    env.reset().unwrap();
    while total < draws {
        let s = env.step(&[STAY, STAY]).unwrap();
        for obs in &s.observations {
            let decoded = decode_meeting_observation(obs, 4).unwrap();
            for (b, p) in blanks.iter_mut().zip(decoded) {
                *b += p.is_none() as usize;
            }
            total += 1;
        }
        if s.terminal {
            env.reset().unwrap();
        }
    }
    blanks.map(|b| b as f64 / total as f64)
}

#[test]
fn flicker_frequency_matches_configuration() {
    for rate in blank_rates(0.3, 10_000) {
        assert!((rate - 0.3).abs() <= 0.02, "blank rate {rate}");
    }
    assert_eq!(blank_rates(0.0, 1_000), [0.0; 3]);
    assert_eq!(blank_rates(1.0, 1_000), [1.0; 3]);
}

fn meeting_state() -> GridState {
    let mut env = MeetingGrid::new(quiet_meeting(4)).unwrap();
    env.reset().unwrap();
    env.set_state([Pos::new(0, 0), Pos::new(3, 1)], Pos::new(1, 3), 0).unwrap();
    env.state().clone()
}

#[test]
fn clean_image_has_four_levels_and_is_deterministic() {
    let state = meeting_state();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = render_meeting_image(&state, 0, [true; 3], 0.0, &mut rng);
    let b = render_meeting_image(&state, 0, [true; 3], 0.0, &mut rng);
    assert_eq!(a, b);
    assert_eq!(a.len(), IMAGE_SIDE * IMAGE_SIDE);
    let mut levels: Vec<f32> = a.clone();
    levels.sort_by(f32::total_cmp);
    levels.dedup();
    assert_eq!(levels.len(), 4);
    let hidden = render_meeting_image(&state, 0, [true, false, true], 0.0, &mut rng);
    let mut hidden_levels = hidden.clone();
    hidden_levels.sort_by(f32::total_cmp);
    hidden_levels.dedup();
    assert_eq!(hidden_levels.len(), 3);
}

#[test]
fn image_noise_is_bounded() {
    let state = meeting_state();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clean = render_meeting_image(&state, 1, [true; 3], 0.0, &mut rng);
    for _ in 0..50 {
        let noisy = render_meeting_image(&state, 1, [true; 3], 0.1, &mut rng);
        for (c, x) in clean.iter().zip(&noisy) {
            assert!((c - x).abs() <= 0.1 + 1e-6 && (0.0..=1.0).contains(x));
        }
    }
}

#[test]
fn image_env_emits_frames() {
    let mut env = make_env(&EnvConfig {
        kind: EnvKind::MeetingImage,
        ..EnvConfig::meeting(4)
    })
    .unwrap();
    let obs = env.reset().unwrap();
    assert_eq!(obs[0].len(), IMAGE_SIDE * IMAGE_SIDE);
    assert_eq!(env.observation_len(), IMAGE_SIDE * IMAGE_SIDE);
}

#[test]
fn cmotp_box_needs_matching_directions() {
    let mut env = cmotp(CmotpVariant::Original, 0);
    env.set_state([Pos::new(7, 8), Pos::new(9, 8)], Pos::new(8, 8), true, 0).unwrap();
    env.step(&[LEFT, RIGHT]).unwrap();
    assert_eq!(env.state().box_pos, Some(Pos::new(8, 8)));
    env.step(&[UP, STAY]).unwrap();
    assert_eq!(env.state().box_pos, Some(Pos::new(8, 8)));
    env.step(&[DOWN, DOWN]).unwrap();
    assert_eq!(env.state().box_pos, Some(Pos::new(8, 9)));
    assert_eq!(env.state().agents, [Pos::new(7, 9), Pos::new(9, 9)]);
    env.step(&[LEFT, LEFT]).unwrap();
    assert_eq!(env.state().box_pos, Some(Pos::new(7, 9)));
}

#[test]
fn cmotp_obstacles_block_the_compound() {
    let mut env = cmotp(CmotpVariant::NarrowPassage, 0);
    let wall = 16 / 2 - 1;
    assert!(env.state().is_obstacle(Pos::new(3, wall)));
    env.set_state([Pos::new(2, wall + 1), Pos::new(4, wall + 1)], Pos::new(3, wall + 1), true, 0).unwrap();
    env.step(&[UP, UP]).unwrap();
    assert_eq!(env.state().box_pos, Some(Pos::new(3, wall + 1)));
    env.set_state([Pos::new(3, wall + 1), Pos::new(9, 12)], Pos::new(8, 13), false, 0).unwrap();
    env.step(&[UP, STAY]).unwrap();
    assert_eq!(env.state().agents[0], Pos::new(3, wall + 1));
}

fn delivery_mean(box_x: usize, trials: usize) -> f64 {
    let mut env = cmotp(CmotpVariant::StochasticReward, 7);
    let mut total = 0.0;
    for _ in 0..trials {
        env.reset().unwrap();
        env.set_state([Pos::new(box_x - 1, 1), Pos::new(box_x + 1, 1)], Pos::new(box_x, 1), true, 0).unwrap();
        let s = env.step(&[UP, UP]).unwrap();
        assert!(s.terminal);
        total += s.reward;
    }
    total / trials as f64
}

#[test]
fn stochastic_zone_rewards_match_expectations() {
    let b = delivery_mean(16 - 3, 10_000);
    assert!((b - 0.76).abs() <= 0.02, "zone B mean {b}");
    let a = delivery_mean(2, 1_000);
    assert!((a - 0.8).abs() < 1e-12);
}

#[test]
fn scripted_optimal_policy_always_meets_on_noiseless_grid() {
    let config = EnvConfig {
        transition_noise: 0.0,
        flicker: Some(0.0),
        ..EnvConfig::meeting(3)
    };
    let planner = Arc::new(MeetingPlanner::for_config(&config).unwrap());
    let [mut p0, mut p1] = ScriptedMeetingPolicy::pair(planner, 3);
    let mut env = make_env(&config).unwrap();
    let result = evaluate(env.as_mut(), &mut [&mut p0 as &mut dyn Policy, &mut p1], 100).unwrap();
    assert_eq!(result.mean_return, 1.0);
}

#[test]
fn random_policy_rarely_meets_on_noisy_grid() {
    let mut env = make_env(&EnvConfig::meeting(4)).unwrap();
    let mut p0 = RandomPolicy::new(5, 1);
    let mut p1 = RandomPolicy::new(5, 2);
    let result = evaluate(env.as_mut(), &mut [&mut p0 as &mut dyn Policy, &mut p1], 200).unwrap();
    assert!(result.mean_return < 0.5, "{}", result.mean_return);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_rollouts_respect_grid_invariants(
        seed in any::<u64>(),
        variant in prop_oneof![
            Just(None),
            Just(Some(CmotpVariant::Original)),
            Just(Some(CmotpVariant::NarrowPassage)),
            Just(Some(CmotpVariant::StochasticReward)),
        ],
        actions in prop::collection::vec((0usize..5, 0usize..5), 200),
    ) {
        let config = match variant {
            None => EnvConfig { seed, ..EnvConfig::meeting(4) },
            Some(v) => EnvConfig { kind: EnvKind::Cmotp, cmotp_variant: v, seed, episode_cap: 30, ..EnvConfig::default() },
        };
        let allowed: &[f64] = match variant {
            None => &[0.0, 1.0],
            Some(CmotpVariant::StochasticReward) => &[0.0, 0.8, 1.0, 0.4],
            Some(_) => &[0.0, 1.0],
        };
        let mut env = make_env(&config).unwrap();
        env.reset().unwrap();
        let mut len = 0;
        for (a, b) in actions {
            let s = env.step(&[a, b]).unwrap();
            len += 1;
            prop_assert!(allowed.contains(&s.reward));
            let st = env.state();
            for p in st.agents.iter().chain(st.box_pos.iter()).chain(st.target.iter()) {
                prop_assert!(p.x < st.n && p.y < st.n);
                prop_assert!(!st.is_obstacle(*p));
            }
            prop_assert!(len <= config.episode_cap);
            if s.terminal {
                prop_assert!(s.success || len == config.episode_cap || s.reward == 0.0);
                env.reset().unwrap();
                len = 0;
            }
        }
    }
}
