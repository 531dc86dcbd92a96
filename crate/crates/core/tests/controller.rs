use autobias::classifier::Verdict;
use autobias::controller::{Action, BiasController, BiasState};
use autobias::detector::{Detector, Template};
use autobias::frame::EventFrame;
use autobias::pipeline::{run_loop, LoopConfig};
use autobias::pixel::SensorConfig;
use autobias::scene::{FlickerConfig, LuxPreset, Scene, SceneConfig, TargetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_verdict_sequences_obey_the_state_machine() {
    let ctl = BiasController::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut raises = 0;
    let mut exhaustions = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..120);
        // Vary the flicker density so both long clean runs and long descents occur.
        let p_flicker = rng.gen_range(0.0..1.0);
        let mut state = ctl.initial_state(55).unwrap();
        let mut clean_run = 0u32;
        for _ in 0..len {
            let flicker = rng.gen_bool(p_flicker);
            let (next, action) = ctl.step(&state, flicker).unwrap();
            assert!((-35..=55).contains(&next.bias_fo));
            if flicker {
                if state.bias_fo > -35 {
                    assert_eq!(next.bias_fo, state.bias_fo - 5);
                    assert_eq!(action, Action::Lower);
                } else {
                    assert_eq!(next.bias_fo, -35);
                }
                clean_run = 0;
            } else {
                clean_run += 1;
                assert!(next.bias_fo >= state.bias_fo, "clean second lowered the bias");
            }
            if next.bias_fo > state.bias_fo {
                assert!(clean_run >= 10, "raised after {clean_run} clean seconds");
                assert_eq!(next.bias_fo, state.bias_fo + 5);
                raises += 1;
                clean_run = 0;
            }
            if action == Action::Raise {
                clean_run = 0;
            }
            assert_eq!(next.exhausted, flicker && state.bias_fo == -35);
            assert_eq!(action == Action::Exhausted, next.exhausted);
            exhaustions += usize::from(next.exhausted);
            state = next;
        }
    }
    assert!(raises > 100 && exhaustions > 100, "{raises} raises, {exhaustions} exhaustions");
}

#[test]
fn eleven_clean_seconds_after_descent_raise_once() {
    let ctl = BiasController::default();
    let mut state = BiasState::new(55);
    for _ in 0..3 {
        state = ctl.step(&state, true).unwrap().0;
    }
    assert_eq!(state.bias_fo, 40);
    let mut biases = Vec::new();
    for _ in 0..11 {
        state = ctl.step(&state, false).unwrap().0;
        biases.push(state.bias_fo);
    }
    assert_eq!(&biases[..9], &[40; 9]);
    assert_eq!(&biases[9..], &[45, 45]);
}

/// A source that still reads as flicker at the lowest bias drives the loop to
/// the floor, where it reports exhaustion every second instead of cycling.
#[test]
fn unbeatable_flicker_exhausts_without_livelock() {
    let mut cfg = SceneConfig::new(32, 32, LuxPreset::High, 8);
    cfg.target = Some(TargetConfig { radius: 6.0, ..TargetConfig::centered_sweep(32, 32) });
    let scene = Scene::new(cfg, FlickerConfig::half_sine(25.0, 20.0)).unwrap();
    let detector = Detector::new(Template::from_target(cfg.target.as_ref().unwrap()));
    let mut always = |_: &EventFrame<f32>| Ok(Verdict::Flicker);
    let loop_cfg = LoopConfig { duration_s: 24, ..LoopConfig::default() };
    let run = run_loop::<f32, _>(&scene, SensorConfig::default(), &mut always, &detector, &loop_cfg, None).unwrap();
    assert_eq!(run.len(), 24);
    let first_floor = run.iter().position(|r| r.state.bias_fo == -35).unwrap();
    assert_eq!(first_floor, 17);
    assert!(!run[first_floor].state.exhausted);
    for r in &run[first_floor + 1..] {
        assert_eq!(r.state.bias_fo, -35);
        assert!(r.state.exhausted);
        assert_eq!(r.action, Action::Exhausted);
    }
}
