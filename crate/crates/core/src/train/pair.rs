//! The pair-training loop: one generator learns to emit one target image
//! when fed one secret image.

use super::objective::{critic_update, generator_loss, generator_update, log_terms};
use super::{GeneratorArch, LogRow, LossMode, TrainError, TrainingConfig, TrainingReport};
use crate::image::{denormalize, normalize, psnr, ImageBuffer};
use crate::modeldb::GeneratorModel;
use crate::nn::{
    default_critic_layers, default_generator_layers, encoder_decoder_generator_layers,
    init_network, Network, RmsProp, Role, SeededRng, Tensor,
};
use std::time::Instant;

/// Freshly initialized `(generator, critic)` for `width x height` images,
/// together with the RNG that drives jitter. All three derive from
/// `cfg.seed`.
pub fn build_networks(
    cfg: &TrainingConfig,
    width: usize,
    height: usize,
) -> Result<(Network, Network, SeededRng), TrainError> {
    let mut master = SeededRng::new(cfg.seed);
    let g_seed = master.next_u64();
    let d_seed = master.next_u64();
    let jitter = SeededRng::new(master.next_u64());
    let sample = [1, height, width];
    let layers = match cfg.generator {
        GeneratorArch::Convolutional => default_generator_layers(cfg.generator_hidden),
        GeneratorArch::EncoderDecoder => {
            if width != height {
                return Err(TrainError::ShapeMismatch(format!(
                    "encoder-decoder generator needs a square image, got {width}x{height}"
                )));
            }
            encoder_decoder_generator_layers(width, cfg.generator_hidden, cfg.generator_code)?
        }
    };
    let g = init_network(layers, Role::Generator, &sample, g_seed)?;
    let d = init_network(
        default_critic_layers(cfg.critic_hidden, height, width),
        Role::Critic,
        &sample,
        d_seed,
    )?;
    Ok((g, d, jitter))
}

/// `batch` copies of `target` (shape `[1, H, W]`), each with independent
/// Gaussian noise of standard deviation `sigma` added per pixel.
pub fn real_batch(target: &Tensor, batch: usize, sigma: f64, rng: &mut SeededRng) -> Tensor {
    let mut data = Vec::with_capacity(batch * target.len());
    for _ in 0..batch {
        data.extend(target.data().iter().map(|&v| {
            if sigma == 0.0 {
                v
            } else {
                (v as f64 + sigma * rng.normal()) as f32
            }
        }));
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(target.shape());
    Tensor::new(shape, data).expect("shape matches data")
}

fn psnr_db(fake: &Tensor, target: &ImageBuffer) -> Result<f64, TrainError> {
    Ok(psnr(&denormalize(fake)?, target)?.db())
}

/// Trains a generator mapping `secret` to `target`. The result is a pure
/// function of the arguments; only the reported wall time varies.
pub fn train_pair(
    secret: &ImageBuffer,
    target: &ImageBuffer,
    cfg: &TrainingConfig,
) -> Result<(GeneratorModel, TrainingReport), TrainError> {
    train_pair_with(secret, target, cfg, |_| {})
}

/// As [`train_pair`], calling `on_log` for every logged row as it is produced.
pub fn train_pair_with(
    secret: &ImageBuffer,
    target: &ImageBuffer,
    cfg: &TrainingConfig,
    on_log: impl FnMut(&LogRow),
) -> Result<(GeneratorModel, TrainingReport), TrainError> {
    train_pair_observed(secret, target, cfg, on_log, |_, _| {})
}

/// As [`train_pair_with`], also handing the critic to `after_critic_step`
/// (with the iteration number) after every critic update.
pub fn train_pair_observed(
    secret: &ImageBuffer,
    target: &ImageBuffer,
    cfg: &TrainingConfig,
    mut on_log: impl FnMut(&LogRow),
    mut after_critic_step: impl FnMut(usize, &Network),
) -> Result<(GeneratorModel, TrainingReport), TrainError> {
    cfg.validate()?;
    secret.same_shape(target)?;
    let started = Instant::now();
    let (w, h) = (secret.width(), secret.height());
    let (mut g, mut d, mut rng) = build_networks(cfg, w, h)?;
    let mut opt_g = RmsProp::new(&g, cfg.lr_g, cfg.rms_decay, cfg.rms_epsilon);
    let mut opt_d = RmsProp::new(&d, cfg.lr_d, cfg.rms_decay, cfg.rms_epsilon);
    let x = normalize(secret).reshape(vec![1, 1, h, w])?;
    let t = normalize(target);

    let mut report = TrainingReport {
        rows: Vec::new(),
        converged: false,
        final_psnr: f64::NEG_INFINITY,
        iterations_run: 0,
        wall_time: Default::default(),
    };
    // The generator only changes in its own step, so one forward pass per
    // iteration serves both the PSNR check and the next critic round.
    let mut fake = g.predict(&x)?;
    let abort = |report: &mut TrainingReport, iteration, what| {
        report.wall_time = started.elapsed();
        Err(TrainError::NonFiniteLoss {
            iteration,
            what,
            report: Box::new(report.clone()),
        })
    };
    for it in 1..=cfg.iterations {
        let mut real = None;
        for _ in 0..cfg.n_critic {
            let batch = real_batch(&t, cfg.batch, cfg.jitter_sigma, &mut rng);
            if !critic_update(&mut d, &mut opt_d, &batch, &fake, cfg)?.is_finite()
                || !params_finite(&d)
            {
                return abort(&mut report, it, "critic loss");
            }
            after_critic_step(it, &d);
            real = Some(batch);
        }
        let real = real.expect("n_critic >= 1");
        if !generator_update(&d, &mut g, &mut opt_g, &x, cfg.loss_mode)?.is_finite()
            || !params_finite(&g)
        {
            return abort(&mut report, it, "generator loss");
        }
        fake = g.predict(&x)?;
        if !fake.all_finite() {
            return abort(&mut report, it, "generator output");
        }
        let p = psnr_db(&fake, target)?;
        report.iterations_run = it;
        report.final_psnr = p;
        let done = p >= cfg.target_psnr;
        if it % cfg.log_every == 0 || it == cfg.iterations || done {
            let row = log_row(&d, &real, &fake, cfg.loss_mode, it, p)?;
            if ![row.critic_loss, row.gen_loss, row.w_estimate]
                .iter()
                .all(|v| v.is_finite())
            {
                return abort(&mut report, it, "logged loss");
            }
            on_log(&row);
            report.rows.push(row);
        }
        if done {
            report.converged = true;
            break;
        }
    }
    report.wall_time = started.elapsed();
    let model = GeneratorModel::new(g, (w, h), cfg.seed)
        .map_err(|e| TrainError::ShapeMismatch(e.to_string()))?;
    Ok((model, report))
}

fn params_finite(net: &Network) -> bool {
    net.params().iter().all(Tensor::all_finite)
}

fn log_row(
    d: &Network,
    real: &Tensor,
    fake: &Tensor,
    mode: LossMode,
    iteration: usize,
    psnr: f64,
) -> Result<LogRow, TrainError> {
    let joint = Tensor::concat(&[real, fake])?;
    let s: Vec<f64> = d
        .predict(&joint)?
        .data()
        .iter()
        .map(|&v| v as f64)
        .collect();
    let (r, f) = s.split_at(real.batch());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let w_estimate = mean(r) - mean(f);
    let critic_obj = match mode {
        LossMode::Wgan => w_estimate,
        LossMode::GanLog => log_terms(r, f).value,
    };
    let gen_loss = generator_loss(f, mode);
    Ok(LogRow {
        iteration,
        critic_loss: -critic_obj,
        gen_loss,
        w_estimate,
        psnr,
    })
}
