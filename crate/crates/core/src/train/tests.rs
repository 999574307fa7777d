use super::*;
use crate::image::{synthetic_scene, ImageBuffer};
use crate::nn::{init_network, LayerSpec, Network, RmsProp, Role, SeededRng, Tensor};

/// Scalar critic `D(x) = w x + b` on one-element samples.
fn affine_critic(w: f32, b: f32) -> Network {
    Network::from_parts(
        Role::Critic,
        vec![LayerSpec::dense(1, 1)],
        vec![
            Tensor::new(vec![1, 1], vec![w]).unwrap(),
            Tensor::new(vec![1], vec![b]).unwrap(),
        ],
    )
    .unwrap()
}

fn column(values: &[f32]) -> Tensor {
    Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[test]
fn gan_value_at_indifference() {
    let d = affine_critic(0.0, 0.0);
    let v = gan_value(&d, &column(&[0.3, -1.0]), &column(&[2.0])).unwrap();
    assert!((v.value - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    assert!((v.value - -1.3863).abs() < 1e-4);
    assert_eq!(v.real_terms.len(), 2);
    assert_eq!(v.fake_terms.len(), 1);
}

#[test]
fn gan_value_perfect_discriminator_hits_clamp() {
    let d = affine_critic(100.0, 0.0);
    let v = gan_value(&d, &column(&[1.0]), &column(&[-1.0])).unwrap();
    let floor = 2.0 * (1.0 - PROB_CLAMP).ln();
    assert!((v.value - floor).abs() < 1e-12);
    assert!(v.value.abs() < 1e-6);
}

#[test]
fn gan_value_hand_case() {
    // Real sample at x = 1, fake at x = 0: D(real) = 0.8, D(fake) = 0.3.
    let b = logit(0.3);
    let w = logit(0.8) - b;
    let d = affine_critic(w as f32, b as f32);
    let v = gan_value(&d, &column(&[1.0]), &column(&[0.0])).unwrap();
    let expected = 0.8f64.ln() + 0.7f64.ln();
    assert!((v.value - expected).abs() < 1e-6, "{}", v.value);
    assert!((v.value - -0.5798).abs() < 1e-4);
    assert!((v.value - (v.real_terms[0] + v.fake_terms[0])).abs() < 1e-15);
}

#[test]
fn w_estimate_examples() {
    let d = affine_critic(1.0, 0.0);
    let batch = column(&[0.1, 0.7]);
    assert_eq!(critic_w_estimate(&d, &batch, &batch).unwrap(), 0.0);
    assert!(
        (critic_w_estimate(&d, &column(&[1.0]), &column(&[-1.0])).unwrap() - 2.0).abs() < 1e-12
    );
    let w = critic_w_estimate(&d, &column(&[0.4, 0.6]), &column(&[0.1, -0.1])).unwrap();
    assert!((w - 0.5).abs() < 1e-7);
}

#[test]
fn non_scalar_critic_output_is_rejected() {
    let d = init_network(vec![LayerSpec::dense(2, 1)], Role::Critic, &[2], 0).unwrap();
    assert!(matches!(
        critic_w_estimate(&d, &column(&[1.0]), &column(&[1.0])),
        Err(TrainError::ShapeMismatch(_))
    ));
}

fn tiny_pair(seed: u64) -> (Network, Network, Tensor, Tensor) {
    let g = init_network(
        vec![
            LayerSpec::conv(1, 2, 3, 1, 1),
            LayerSpec::leaky_relu(0.2),
            LayerSpec::conv(2, 1, 3, 1, 1),
            LayerSpec::Tanh,
        ],
        Role::Generator,
        &[1, 4, 4],
        seed,
    )
    .unwrap();
    let d = init_network(
        vec![
            LayerSpec::conv(1, 2, 2, 2, 0),
            LayerSpec::leaky_relu(0.2),
            LayerSpec::dense(8, 1),
        ],
        Role::Critic,
        &[1, 4, 4],
        seed + 1,
    )
    .unwrap();
    let mut rng = SeededRng::new(seed + 2);
    let mut sample = |n: usize| {
        Tensor::new(
            vec![n, 1, 4, 4],
            (0..n * 16).map(|_| rng.symmetric(0.9) as f32).collect(),
        )
        .unwrap()
    };
    (g, d, sample(1), sample(3))
}

fn cfg(mode: LossMode, lr: f64) -> TrainingConfig {
    TrainingConfig {
        loss_mode: mode,
        lr_d: lr,
        lr_g: lr,
        clip_c: 0.05,
        ..TrainingConfig::default()
    }
}

#[test]
fn zero_learning_rate_critic_step_is_a_noop() {
    for mode in [LossMode::Wgan, LossMode::GanLog] {
        let (g, mut d, x, real) = tiny_pair(3);
        // Start inside the clip box so clipping has nothing to do.
        clip_weights_for_test(&mut d, 0.05);
        let before = d.clone();
        let c = cfg(mode, 0.0);
        let pre = critic_objective(&d, &real, &g.predict(&x).unwrap(), mode).unwrap();
        let mut opt = RmsProp::new(&d, 0.0, c.rms_decay, c.rms_epsilon);
        let post = critic_step(&mut d, &mut opt, &g, &real, &x, &c).unwrap();
        assert_eq!(d, before);
        assert_eq!(pre, post);
    }
}

fn clip_weights_for_test(d: &mut Network, c: f32) {
    crate::nn::clip_weights(d, c).unwrap();
}

#[test]
fn wgan_critic_step_respects_clip() {
    let (g, mut d, x, real) = tiny_pair(5);
    let c = cfg(LossMode::Wgan, 0.5);
    let mut opt = RmsProp::new(&d, c.lr_d, c.rms_decay, c.rms_epsilon);
    for _ in 0..5 {
        critic_step(&mut d, &mut opt, &g, &real, &x, &c).unwrap();
        assert!(d.params().iter().all(|p| p.max_abs() <= c.clip_c));
    }
}

/// Central-difference gradient of `f` over every parameter of `net`.
fn fd_gradient(net: &Network, f: impl Fn(&Network) -> f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for t in 0..net.params().len() {
        let mut grads = Vec::new();
        for i in 0..net.params()[t].len() {
            let h = 1e-3f32;
            let mut plus = net.clone();
            plus.params_mut()[t].data_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[t].data_mut()[i] -= h;
            let dh = (plus.params()[t].data()[i] - minus.params()[t].data()[i]) as f64;
            grads.push((f(&plus) - f(&minus)) / dh);
        }
        out.push(grads);
    }
    out
}

/// First-order RMSProp gain from a zero accumulator:
/// `lr * sum g^2 / (sqrt((1 - decay) g^2) + eps)`.
fn predicted_first_step_change(grads: &[Vec<f64>], lr: f64, decay: f64, eps: f64) -> f64 {
    grads
        .iter()
        .flatten()
        .map(|&g| lr * g * g / (((1.0 - decay) * g * g).sqrt() + eps))
        .sum()
}

#[test]
fn critic_ascent_matches_directional_derivative() {
    // A frozen Dense 2 -> 1 critic on fixed batches, GAN_LOG so the
    // objective is curved and clipping is off.
    let d0 = Network::from_parts(
        Role::Critic,
        vec![LayerSpec::dense(2, 1)],
        vec![
            Tensor::new(vec![1, 2], vec![0.3, -0.2]).unwrap(),
            Tensor::new(vec![1], vec![0.1]).unwrap(),
        ],
    )
    .unwrap();
    let real = Tensor::new(vec![2, 2], vec![0.5, 1.0, -0.3, 0.8]).unwrap();
    let fake = Tensor::new(vec![1, 2], vec![-0.6, 0.2]).unwrap();
    let c = cfg(LossMode::GanLog, 1e-3);
    let objective = |d: &Network| gan_value(d, &real, &fake).unwrap().value;
    let grads = fd_gradient(&d0, objective);
    let mut d = d0.clone();
    let mut opt = RmsProp::new(&d, c.lr_d, c.rms_decay, c.rms_epsilon);
    let pre = critic_update(&mut d, &mut opt, &real, &fake, &c).unwrap();
    let post = objective(&d);
    let predicted = predicted_first_step_change(&grads, c.lr_d, c.rms_decay, c.rms_epsilon);
    assert!((pre - objective(&d0)).abs() < 1e-12);
    assert!(post > pre);
    // O(lr^2) remainder: the step is ~1e-2 per weight here.
    assert!(
        ((post - pre) - predicted).abs() < 0.05 * predicted,
        "{} vs {predicted}",
        post - pre
    );
}

#[test]
fn generator_step_descends_and_leaves_critic_alone() {
    for mode in [LossMode::Wgan, LossMode::GanLog] {
        let (g0, d, x, _) = tiny_pair(9);
        let frozen = d.clone();
        let c = cfg(mode, 1e-4);
        let objective = |g: &Network| generator_objective(&d, g, &x, mode).unwrap();
        let grads = fd_gradient(&g0, objective);
        let mut g = g0.clone();
        let mut opt = RmsProp::new(&g, c.lr_g, c.rms_decay, c.rms_epsilon);
        let post = generator_step(&d, &mut g, &mut opt, &x, &c).unwrap();
        let pre = objective(&g0);
        let predicted = predicted_first_step_change(&grads, c.lr_g, c.rms_decay, c.rms_epsilon);
        assert!(post < pre, "{mode}: {post} !< {pre}");
        assert!(
            ((pre - post) - predicted).abs() < 0.1 * predicted,
            "{mode}: {} vs {predicted}",
            pre - post
        );
        assert_eq!(d, frozen);
    }
}

#[test]
fn zero_learning_rate_generator_step_is_a_noop() {
    let (g0, d, x, _) = tiny_pair(2);
    let mut g = g0.clone();
    let c = cfg(LossMode::Wgan, 0.0);
    let mut opt = RmsProp::new(&g, 0.0, c.rms_decay, c.rms_epsilon);
    generator_step(&d, &mut g, &mut opt, &x, &c).unwrap();
    assert_eq!(g, g0);
}

#[test]
fn gan_log_ascent_never_decreases_value() {
    for seed in 0..20 {
        let (g, mut d, x, real) = tiny_pair(100 + seed);
        let fake = g.predict(&x).unwrap();
        let c = cfg(LossMode::GanLog, 1e-4);
        let mut opt = RmsProp::new(&d, c.lr_d, c.rms_decay, c.rms_epsilon);
        for _ in 0..3 {
            let pre = critic_update(&mut d, &mut opt, &real, &fake, &c).unwrap();
            let post = gan_value(&d, &real, &fake).unwrap().value;
            assert!(post >= pre, "seed {seed}: {post} < {pre}");
        }
    }
}

#[test]
fn config_validation() {
    assert!(TrainingConfig::default().validate().is_ok());
    let bad = [
        TrainingConfig {
            iterations: 0,
            ..Default::default()
        },
        TrainingConfig {
            n_critic: 0,
            ..Default::default()
        },
        TrainingConfig {
            clip_c: 0.0,
            ..Default::default()
        },
        TrainingConfig {
            jitter_sigma: 0.1,
            ..Default::default()
        },
        TrainingConfig {
            jitter_sigma: -0.01,
            ..Default::default()
        },
        TrainingConfig {
            batch: 0,
            ..Default::default()
        },
        TrainingConfig {
            lr_g: f64::NAN,
            ..Default::default()
        },
    ];
    for cfg in bad {
        assert!(
            matches!(cfg.validate(), Err(TrainError::InvalidConfig(_))),
            "{cfg:?}"
        );
    }
}

#[test]
fn config_json_uses_defaults_and_rejects_unknown_fields() {
    let cfg: TrainingConfig =
        serde_json::from_str(r#"{"iterations": 7, "loss_mode": "GAN_LOG"}"#).unwrap();
    assert_eq!(cfg.iterations, 7);
    assert_eq!(cfg.loss_mode, LossMode::GanLog);
    assert_eq!(cfg.n_critic, 5);
    assert!(serde_json::from_str::<TrainingConfig>(r#"{"iterationz": 7}"#).is_err());
    let round: TrainingConfig =
        serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(round, cfg);
    assert_eq!("wgan".parse::<LossMode>().unwrap(), LossMode::Wgan);
    assert_eq!("gan-log".parse::<LossMode>().unwrap(), LossMode::GanLog);
    assert!("hinge".parse::<LossMode>().is_err());
}

fn small_cfg(iterations: usize) -> TrainingConfig {
    TrainingConfig {
        iterations,
        generator_hidden: 4,
        generator_code: 4,
        critic_hidden: 4,
        log_every: 3,
        seed: 42,
        ..Default::default()
    }
}

fn scenes() -> (ImageBuffer, ImageBuffer) {
    (synthetic_scene(8, 8, 1, 2.0), synthetic_scene(8, 8, 2, 2.0))
}

#[test]
fn one_iteration_logs_one_row() {
    let (s, t) = scenes();
    let (_, report) = train_pair(&s, &t, &small_cfg(1)).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].iteration, 1);
    assert_eq!(report.iterations_run, 1);
    assert!(!report.converged);
}

#[test]
fn zero_iterations_rejected() {
    let (s, t) = scenes();
    assert!(matches!(
        train_pair(&s, &t, &small_cfg(0)),
        Err(TrainError::InvalidConfig(_))
    ));
}

#[test]
fn report_rows_and_log_format() {
    let (s, t) = scenes();
    let (_, report) = train_pair(&s, &t, &small_cfg(10)).unwrap();
    let iters: Vec<usize> = report.rows.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![3, 6, 9, 10]);
    let log = report.to_log();
    let mut lines = log.lines();
    assert_eq!(
        lines.next(),
        Some("iter\tcritic_loss\tgen_loss\tw_estimate\tpsnr")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|l| l.split('\t').count() == 5));
    assert!(rows[3].starts_with("10\t"));
    assert_eq!(report.final_psnr, report.rows.last().unwrap().psnr);
    assert_eq!(report.converged, report.final_psnr >= 35.0);
}

#[test]
fn training_is_deterministic() {
    let (s, t) = scenes();
    let (a, ra) = train_pair(&s, &t, &small_cfg(12)).unwrap();
    let (b, rb) = train_pair(&s, &t, &small_cfg(12)).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert!(ra.same_run(&rb));
    let (c, _) = train_pair(
        &s,
        &t,
        &TrainingConfig {
            seed: 43,
            ..small_cfg(12)
        },
    )
    .unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn early_stop_sets_converged() {
    let (s, t) = scenes();
    // Any output beats a -inf threshold, so the first iteration stops.
    let cfg = TrainingConfig {
        target_psnr: f64::NEG_INFINITY,
        ..small_cfg(50)
    };
    let (_, report) = train_pair(&s, &t, &cfg).unwrap();
    assert!(report.converged);
    assert_eq!(report.iterations_run, 1);
    assert_eq!(report.rows.len(), 1);
}

#[test]
fn divergence_aborts_with_partial_report() {
    let (s, t) = scenes();
    let cfg = TrainingConfig {
        lr_d: 1e38,
        lr_g: 1e38,
        clip_c: f32::MAX,
        loss_mode: LossMode::GanLog,
        ..small_cfg(50)
    };
    match train_pair(&s, &t, &cfg) {
        Err(TrainError::NonFiniteLoss {
            iteration, report, ..
        }) => {
            assert!(iteration >= 1);
            assert!(report.rows.iter().all(|r| r.iteration < iteration));
            assert!(!report.converged);
        }
        other => panic!(
            "expected divergence, got {:?}",
            other.map(|r| r.1.final_psnr)
        ),
    }
}

#[test]
fn mismatched_images_rejected() {
    let s = synthetic_scene(8, 8, 1, 0.0);
    let t = synthetic_scene(16, 16, 1, 0.0);
    assert!(matches!(
        train_pair(&s, &t, &small_cfg(1)),
        Err(TrainError::ShapeMismatch(_))
    ));
    let wide = synthetic_scene(16, 8, 1, 0.0);
    assert!(matches!(
        train_pair(&wide, &wide, &small_cfg(1)),
        Err(TrainError::ShapeMismatch(_))
    ));
    let conv = TrainingConfig {
        generator: GeneratorArch::Convolutional,
        ..small_cfg(1)
    };
    assert!(train_pair(&wide, &wide, &conv).is_ok());
}

#[test]
fn jittered_batch_statistics() {
    let t = Tensor::filled(vec![1, 16, 16], 0.25);
    let mut rng = SeededRng::new(1);
    let b = real_batch(&t, 4, 0.02, &mut rng);
    assert_eq!(b.shape(), &[4, 1, 16, 16]);
    let dev: Vec<f64> = b.data().iter().map(|&v| v as f64 - 0.25).collect();
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    let sd = (dev.iter().map(|d| d * d).sum::<f64>() / dev.len() as f64).sqrt();
    assert!(mean.abs() < 0.003);
    assert!((sd - 0.02).abs() < 0.002);
    let clean = real_batch(&t, 2, 0.0, &mut rng);
    assert!(clean.data().iter().all(|&v| v == 0.25));
}
