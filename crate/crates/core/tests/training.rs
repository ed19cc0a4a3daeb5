#[path = "support/cases.rs"]
mod cases;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajmask::masking::{apply_mask, prediction_mask, MaskProfile, MaskProfileConfig};
use trajmask::metrics::{evaluate, Subset};
use trajmask::model::*;
use trajmask::occlusion::{label_occluded_agents, select_ego, GridSpec};
use trajmask::scene::{normalize_default, Scenario};
use trajmask::synth::{generate_scenarios, SynthSpec};
use trajmask::tape::Mat;
use trajmask::training::*;

fn tiny() -> ModelConfig {
    ModelConfig {
        d_model: 8,
        n_blocks: 1,
        n_heads: 2,
        k_modes: 3,
        t_total: 16,
        dropout: 0.0,
    }
}

fn data(count: usize, seed: u64) -> Vec<Scenario> {
    generate_scenarios(&SynthSpec::nuscenes_like(), count, seed).unwrap()
}

fn steps(n: usize) -> TrainConfig {
    TrainConfig {
        steps: n,
        batch_size: 2,
        learning_rate: 1e-2,
        seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn adam_minimises_a_scalar_quadratic() {
    let mut p = ParamSet::new();
    p.insert("w".into(), Mat::from_vec(1, 1, vec![0.0]));
    let mut state = OptimState::new(&p);
    let cfg = TrainConfig { learning_rate: 0.1, ..TrainConfig::default() };
    for _ in 0..200 {
        let w = p["w"].data[0];
        let mut g = ParamSet::new();
        g.insert("w".into(), Mat::from_vec(1, 1, vec![2.0 * (w - 3.0)]));
        optimizer_step(&mut p, &g, &mut state, &cfg).unwrap();
    }
    assert!((p["w"].data[0] - 3.0).abs() < 0.01);
}

#[test]
fn zero_learning_rate_only_moves_moments() {
    let mut p = ParamSet::new();
    p.insert("w".into(), Mat::from_vec(1, 2, vec![1.0, -2.0]));
    let mut state = OptimState::new(&p);
    let mut g = ParamSet::new();
    g.insert("w".into(), Mat::from_vec(1, 2, vec![0.5, 0.25]));
    let cfg = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
    optimizer_step(&mut p, &g, &mut state, &cfg).unwrap();
    assert_eq!(p["w"].data, vec![1.0, -2.0]);
    assert!(state.m["w"].data.iter().all(|v| *v != 0.0));
    assert!(state.v["w"].data.iter().all(|v| *v != 0.0));
    g["w"].data[0] = f64::NAN;
    assert!(matches!(
        optimizer_step(&mut p, &g, &mut state, &TrainConfig::default()),
        Err(TrainError::NonFiniteGradient { .. })
    ));
}

#[test]
fn pretraining_is_deterministic_and_logs_in_order() {
    let d = data(4, 1);
    let profile = MaskProfileConfig::default();
    let (a, la) = pretrain(&d, &profile, &tiny(), &steps(6)).unwrap();
    let (b, lb) = pretrain(&d, &profile, &tiny(), &steps(6)).unwrap();
    assert_eq!(checkpoint_to_string(&a).unwrap(), checkpoint_to_string(&b).unwrap());
    assert_eq!(la.losses(), lb.losses());
    assert_eq!(la.rows.len(), 6);
    for w in la.rows.windows(2) {
        assert!(w[0].step < w[1].step && w[0].wall_ms <= w[1].wall_ms);
    }
    let back = TrainLog::from_csv(&la.to_csv()).unwrap();
    assert_eq!(back.losses(), la.losses());
}

#[test]
fn bad_inputs_are_rejected() {
    let d = data(2, 2);
    let profile = MaskProfileConfig::default();
    assert!(pretrain(&d, &profile, &tiny(), &steps(0)).is_err());
    assert!(matches!(pretrain(&[], &profile, &tiny(), &steps(1)), Err(TrainError::EmptyDataset)));
    assert!(matches!(
        finetune(None, TaskKind::Occlusion, &d, None, FinetuneOptions::default(), &tiny(), &steps(1)),
        Err(TrainError::MissingLabels)
    ));
}

#[test]
fn transferred_encoder_reproduces_the_latent() {
    let d = data(3, 3);
    let (pre, _) = pretrain(&d, &MaskProfileConfig::default(), &tiny(), &steps(3)).unwrap();
    let fresh = init_model(&tiny(), 99).unwrap();
    let moved = transfer_encoder(&pre, &fresh).unwrap();
    for (name, m) in &moved.arrays {
        let src = if is_encoder_array(name) { &pre } else { &fresh };
        assert_eq!(m, &src.arrays[name], "{name}");
    }
    let (norm, _) = normalize_default(&d[0]);
    let s = &norm.scene;
    let mask = prediction_mask(s.n_agents, s.t_total, s.t_obs);
    let input = apply_mask(s, &mask).unwrap();
    assert_eq!(
        encode(&pre, &input, &mask, &norm.map).unwrap(),
        encode(&moved, &input, &mask, &norm.map).unwrap()
    );
}

#[test]
fn frozen_encoder_is_bit_identical() {
    let d = data(3, 5);
    let (pre, _) = pretrain(&d, &MaskProfileConfig::default(), &tiny(), &steps(2)).unwrap();
    for freeze in [true, false] {
        let opts = FinetuneOptions { freeze_encoder: freeze, ..FinetuneOptions::default() };
        let (tuned, _) = finetune(Some(&pre), TaskKind::Predict, &d, None, opts, &tiny(), &steps(3)).unwrap();
        let encoder_same = pre
            .arrays
            .iter()
            .filter(|(n, _)| is_encoder_array(n))
            .all(|(n, m)| m.data.iter().zip(&tuned.arrays[n].data).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(encoder_same, freeze);
        let fresh = init_model(&tiny(), steps(3).seed).unwrap();
        assert!(tuned.arrays.iter().any(|(n, m)| !is_encoder_array(n) && *m != fresh.arrays[n]));
    }
}

#[test]
fn unsupervised_targets_do_not_affect_loss_or_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = init_model(&ModelConfig { t_total: 8, ..tiny() }, 1).unwrap();
    let sc = cases::random_scenario(&mut rng, 3, 8, 4, 0.9);
    let mask = prediction_mask(3, 8, 4);
    let target_mask = cases::random_mask(&mut rng, 3, 8, 0.5);
    let input = apply_mask(&sc.scene, &mask).unwrap();
    let mut other = sc.scene.clone();
    for i in 0..other.states.len() {
        if !target_mask.hidden[i] && other.states[i].valid {
            other.states[i].x += 17.0;
            other.states[i].y -= 5.0;
        }
    }
    let a = forward_backward(&params, DecoderHead::Task, &input, &mask, &sc.map, &sc.scene, &target_mask).unwrap();
    let b = forward_backward(&params, DecoderHead::Task, &input, &mask, &sc.map, &other, &target_mask).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn occlusion_finetuning_supervises_the_future_by_default() {
    let d: Vec<Scenario> = generate_scenarios(&SynthSpec::intersection(), 3, 8).unwrap();
    let grid = GridSpec::default();
    let labels: Vec<_> = d
        .iter()
        .enumerate()
        .map(|(i, s)| label_occluded_agents(&s.scene, select_ego(&s.scene, i as u64).unwrap(), &grid).unwrap())
        .collect();
    let c = tiny();
    let a = finetune(None, TaskKind::Occlusion, &d, Some(&labels), FinetuneOptions::default(), &c, &steps(2)).unwrap();
    let both = FinetuneOptions { supervise_occluded_history: true, ..FinetuneOptions::default() };
    let b = finetune(None, TaskKind::Occlusion, &d, Some(&labels), both, &c, &steps(2)).unwrap();
    assert!(a.1.losses().iter().chain(&b.1.losses()).all(|l| l.is_finite()));
}

#[test]
fn ablation_rows_match_independent_reruns() {
    let train = data(3, 10);
    let eval = data(2, 11);
    let setup = AblationSetup {
        grid: vec![(MaskProfile::Pointwise, 0.75), (MaskProfile::Timewise, 0.5)],
        base_profile: MaskProfileConfig::default(),
        model_config: tiny(),
        pretrain: steps(2),
        finetune: steps(2),
        k: 3,
    };
    let rows = run_ablation(&train, &eval, &setup).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let cfg = MaskProfileConfig { profile: row.profile, ratio: row.ratio, ..setup.base_profile };
        let (pre, _) = pretrain(&train, &cfg, &tiny(), &setup.pretrain).unwrap();
        let (tuned, _) = finetune(
            Some(&pre),
            TaskKind::Predict,
            &train,
            None,
            FinetuneOptions::default(),
            &tiny(),
            &setup.finetune,
        )
        .unwrap();
        let (report, _) = evaluate(&tuned, &eval, TaskKind::Predict, Subset::All, None, &[3], 2.0).unwrap();
        assert_eq!(row.min_ade, report.min_ade[&3]);
        assert_eq!(row.min_fde, report.min_fde[&3]);
    }
    let csv = ablation_csv(&rows, 3);
    assert_eq!(csv.lines().next().unwrap(), "profile,ratio,minADE_3,minFDE_3");
    assert_eq!(csv.lines().count(), 3);
}
