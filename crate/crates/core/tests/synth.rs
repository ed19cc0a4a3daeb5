use trajmask::scene::{load_scenarios, wrap_angle, Scenario};
use trajmask::synth::*;

fn noiseless(b: Behavior) -> SynthSpec {
    SynthSpec {
        behavior_mix: BehaviorMix::only(b),
        noise_std: 0.0,
        window_prob: 0.0,
        ..SynthSpec::argoverse_like()
    }
}

#[test]
fn constant_velocity_is_linear_in_time() {
    for seed in 0..20 {
        let sc = generate_scene(&noiseless(Behavior::ConstantVelocity), seed).unwrap();
        let s = &sc.scene;
        for a in 0..s.n_agents {
            let (p0, p1) = (s.get(a, 0), s.get(a, 1));
            for t in 0..s.t_total {
                let p = s.get(a, t);
                assert!((p.x - (p0.x + t as f64 * (p1.x - p0.x))).abs() < 1e-9);
                assert!((p.y - (p0.y + t as f64 * (p1.y - p0.y))).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn constant_turn_stays_on_its_circle() {
    for seed in 0..20 {
        let spec = noiseless(Behavior::ConstantTurn);
        let sc = generate_scene(&spec, seed).unwrap();
        let s = &sc.scene;
        for a in 0..s.n_agents {
            let (a0, a1) = (s.get(a, 0), s.get(a, 1));
            let speed = a0.vx.hypot(a0.vy);
            let w = wrap_angle(a1.heading - a0.heading) / spec.dt;
            let r = speed / w;
            let centre = [a0.x - r * a0.heading.sin(), a0.y + r * a0.heading.cos()];
            for t in 0..s.t_total {
                let p = s.get(a, t);
                let d = (p.x - centre[0]).hypot(p.y - centre[1]);
                assert!((d - r.abs()).abs() < 1e-9, "seed {seed} agent {a} t {t}: {d} vs {}", r.abs());
            }
        }
    }
}

#[test]
fn headings_follow_velocity_while_moving() {
    for preset in ["argoverse-like", "nuscenes-like", "intersection"] {
        let sc = generate_scenarios(&SynthSpec::preset(preset).unwrap(), 10, 5).unwrap();
        for s in sc.iter().map(|s| &s.scene) {
            for st in s.states.iter().filter(|st| st.valid && st.vx.hypot(st.vy) > 0.1) {
                assert!((st.heading - st.vy.atan2(st.vx)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn validity_windows_are_contiguous() {
    let spec = SynthSpec { window_prob: 1.0, ..SynthSpec::argoverse_like() };
    for sc in generate_scenarios(&spec, 20, 3).unwrap() {
        let s = &sc.scene;
        assert!((0..s.t_total).all(|t| s.get(0, t).valid));
        for a in 1..s.n_agents {
            let v: Vec<bool> = (0..s.t_total).map(|t| s.get(a, t).valid).collect();
            let rises = v.windows(2).filter(|w| !w[0] && w[1]).count();
            let falls = v.windows(2).filter(|w| w[0] && !w[1]).count();
            assert!(rises <= 1 && falls <= 1);
            assert!(v[..s.t_obs].iter().any(|x| *x) && v[s.t_obs..].iter().any(|x| *x));
        }
    }
}

#[test]
fn datasets_are_byte_identical_and_pass_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::preset("intersection").unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    generate_dataset(&spec, 12, 77, &a).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| generate_dataset(&spec, 12, 77, &b)).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let loaded: Vec<Scenario> = load_scenarios(&a).unwrap();
    assert_eq!(loaded.len(), 12);
    for s in &loaded {
        s.check_invariants().unwrap();
    }

    let one = dir.path().join("one.jsonl");
    generate_dataset(&spec, 1, 1, &one).unwrap();
    assert_eq!(std::fs::read_to_string(&one).unwrap().lines().count(), 1);
}

#[test]
fn intersection_lanes_cross() {
    let sc = generate_scene(&SynthSpec::intersection(), 0).unwrap();
    let lanes: Vec<_> = sc.map.iter().filter(|m| m.lane_kind == trajmask::scene::LaneKind::LaneCenter).collect();
    let horizontal = lanes.iter().any(|l| l.valid_points().iter().all(|p| p[1].abs() < 2.0));
    let vertical = lanes.iter().any(|l| l.valid_points().iter().all(|p| p[0].abs() < 2.0));
    assert!(horizontal && vertical);
}
