//! Value functions and single update steps for critic and generator.

use super::{LossMode, TrainError, TrainingConfig};
use crate::nn::{clip_weights, Direction, Network, RmsProp, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// A two-sample value estimate: `value = mean(real_terms) + mean(fake_terms)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueEstimate {
    pub value: f64,
    pub real_terms: Vec<f64>,
    pub fake_terms: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Clamped logistic; the flag reports whether the clamp was active.
fn prob(s: f64) -> (f64, bool) {
    let p = sigmoid(s);
    if p < PROB_CLAMP {
        (PROB_CLAMP, true)
    } else if p > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, true)
    } else {
        (p, false)
    }
}

fn scores(out: &Tensor) -> Result<Vec<f64>, TrainError> {
    if out.shape().len() != 2 || out.shape()[1] != 1 {
        return Err(TrainError::ShapeMismatch(format!(
            "critic output {:?} is not one scalar per sample",
            out.shape()
        )));
    }
    Ok(out.data().iter().map(|&v| v as f64).collect())
}

fn critic_scores(d: &Network, batch: &Tensor) -> Result<Vec<f64>, TrainError> {
    scores(&d.predict(batch)?)
}

pub(crate) fn log_terms(real: &[f64], fake: &[f64]) -> ValueEstimate {
    let real_terms: Vec<f64> = real.iter().map(|&s| prob(s).0.ln()).collect();
    let fake_terms: Vec<f64> = fake.iter().map(|&s| (1.0 - prob(s).0).ln()).collect();
    ValueEstimate {
        value: mean(&real_terms) + mean(&fake_terms),
        real_terms,
        fake_terms,
    }
}

/// `mean log D(x) + mean log(1 - D(G(z)))` with `D = logistic(critic)`.
pub fn gan_value(
    d: &Network,
    real_batch: &Tensor,
    fake_batch: &Tensor,
) -> Result<ValueEstimate, TrainError> {
    Ok(log_terms(
        &critic_scores(d, real_batch)?,
        &critic_scores(d, fake_batch)?,
    ))
}

/// `mean D(real) - mean D(fake)` on raw critic scores.
pub fn critic_w_estimate(
    d: &Network,
    real_batch: &Tensor,
    fake_batch: &Tensor,
) -> Result<f64, TrainError> {
    Ok(mean(&critic_scores(d, real_batch)?) - mean(&critic_scores(d, fake_batch)?))
}

/// The quantity the critic ascends under `mode`.
pub fn critic_objective(
    d: &Network,
    real_batch: &Tensor,
    fake_batch: &Tensor,
    mode: LossMode,
) -> Result<f64, TrainError> {
    match mode {
        LossMode::Wgan => critic_w_estimate(d, real_batch, fake_batch),
        LossMode::GanLog => Ok(gan_value(d, real_batch, fake_batch)?.value),
    }
}

/// The quantity the generator descends under `mode`.
pub fn generator_objective(
    d: &Network,
    g: &Network,
    secret_input: &Tensor,
    mode: LossMode,
) -> Result<f64, TrainError> {
    let s = critic_scores(d, &g.predict(secret_input)?)?;
    Ok(generator_loss(&s, mode))
}

pub(crate) fn generator_loss(s: &[f64], mode: LossMode) -> f64 {
    match mode {
        LossMode::Wgan => -mean(s),
        LossMode::GanLog => mean(
            &s.iter()
                .map(|&v| (1.0 - prob(v).0).ln())
                .collect::<Vec<_>>(),
        ),
    }
}

/// One critic ascent step against fake samples from `g`, which receives no
/// gradient. Returns the objective after the step.
pub fn critic_step(
    d: &mut Network,
    opt: &mut RmsProp,
    g: &Network,
    real_batch: &Tensor,
    secret_input: &Tensor,
    cfg: &TrainingConfig,
) -> Result<f64, TrainError> {
    let fake = g.predict(secret_input)?;
    critic_update(d, opt, real_batch, &fake, cfg)?;
    critic_objective(d, real_batch, &fake, cfg.loss_mode)
}

/// Critic step against precomputed fake samples. Returns the objective
/// evaluated before the step, which comes free with the gradient pass.
pub fn critic_update(
    d: &mut Network,
    opt: &mut RmsProp,
    real_batch: &Tensor,
    fake_batch: &Tensor,
    cfg: &TrainingConfig,
) -> Result<f64, TrainError> {
    let nr = real_batch.batch();
    let nf = fake_batch.batch();
    let joint = Tensor::concat(&[real_batch, fake_batch])?;
    let (out, trace) = d.forward(&joint)?;
    let s = scores(&out)?;
    let (real, fake) = s.split_at(nr);
    let (objective, grad): (f64, Vec<f32>) = match cfg.loss_mode {
        LossMode::Wgan => (
            mean(real) - mean(fake),
            real.iter()
                .map(|_| 1.0 / nr as f64)
                .chain(fake.iter().map(|_| -1.0 / nf as f64))
                .map(|g| g as f32)
                .collect(),
        ),
        LossMode::GanLog => {
            // d/ds log p(s) = 1 - p and d/ds log(1 - p(s)) = -p, zero
            // wherever the clamp is active.
            let gr = real.iter().map(|&v| match prob(v) {
                (_, true) => 0.0,
                (p, false) => (1.0 - p) / nr as f64,
            });
            let gf = fake.iter().map(|&v| match prob(v) {
                (_, true) => 0.0,
                (p, false) => -p / nf as f64,
            });
            (
                log_terms(real, fake).value,
                gr.chain(gf).map(|g| g as f32).collect(),
            )
        }
    };
    let grads = d.backward_params(&trace, &Tensor::new(out.shape().to_vec(), grad)?)?;
    opt.step(d, &grads.params, Direction::Ascent)?;
    if cfg.loss_mode == LossMode::Wgan {
        clip_weights(d, cfg.clip_c)?;
    }
    Ok(objective)
}

/// One generator descent step through the frozen critic. Returns the
/// objective after the step.
pub fn generator_step(
    d: &Network,
    g: &mut Network,
    opt: &mut RmsProp,
    secret_input: &Tensor,
    cfg: &TrainingConfig,
) -> Result<f64, TrainError> {
    generator_update(d, g, opt, secret_input, cfg.loss_mode)?;
    generator_objective(d, g, secret_input, cfg.loss_mode)
}

/// As [`generator_step`] but returns the objective evaluated before the step.
pub fn generator_update(
    d: &Network,
    g: &mut Network,
    opt: &mut RmsProp,
    secret_input: &Tensor,
    mode: LossMode,
) -> Result<f64, TrainError> {
    let (y, gtrace) = g.forward(secret_input)?;
    let (out, dtrace) = d.forward(&y)?;
    let s = scores(&out)?;
    let n = s.len() as f64;
    let grad: Vec<f32> = match mode {
        LossMode::Wgan => s.iter().map(|_| (-1.0 / n) as f32).collect(),
        LossMode::GanLog => s
            .iter()
            .map(|&v| match prob(v) {
                (_, true) => 0.0,
                (p, false) => (-p / n) as f32,
            })
            .collect(),
    };
    let dgrads = d.backward(&dtrace, &Tensor::new(out.shape().to_vec(), grad)?)?;
    let gy = dgrads.input.expect("input gradient requested");
    let ggrads = g.backward_params(&gtrace, &gy)?;
    opt.step(g, &ggrads.params, Direction::Descent)?;
    Ok(generator_loss(&s, mode))
}
