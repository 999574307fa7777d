//! Adversarial training: value functions, critic and generator updates,
//! an exact transport oracle, and the loop that trains one
//! secret-to-target generator.

mod objective;
mod pair;
mod w1;

pub use objective::{
    critic_objective, critic_step, critic_update, critic_w_estimate, gan_value,
    generator_objective, generator_step, generator_update, ValueEstimate, PROB_CLAMP,
};
pub use pair::{build_networks, real_batch, train_pair, train_pair_observed, train_pair_with};
pub use w1::{cdf_distance, exact_w1, DiscreteDistribution, TransportPlan, MAX_SUPPORT};

use crate::image::ImageError;
use crate::nn::NnError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFiniteLoss {
        iteration: usize,
        what: &'static str,
        report: Box<TrainingReport>,
    },
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::ShapeMismatch(e.to_string())
    }
}

impl From<ImageError> for TrainError {
    fn from(e: ImageError) -> Self {
        TrainError::ShapeMismatch(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    #[serde(rename = "WGAN")]
    Wgan,
    #[serde(rename = "GAN_LOG")]
    GanLog,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Wgan => "WGAN",
            LossMode::GanLog => "GAN_LOG",
        })
    }
}

impl FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "WGAN" => Ok(LossMode::Wgan),
            "GAN_LOG" | "GANLOG" => Ok(LossMode::GanLog),
            _ => Err(format!(
                "unknown loss mode {s:?} (expected WGAN or GAN_LOG)"
            )),
        }
    }
}

/// Hyperparameters for one pair-training run. Every field has a default,
/// so a JSON config only needs the fields it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub n_critic: usize,
    pub clip_c: f32,
    pub lr_d: f64,
    pub lr_g: f64,
    pub batch: usize,
    /// Standard deviation of the per-pixel noise added to each real
    /// replica, in normalized units.
    pub jitter_sigma: f64,
    pub seed: u64,
    /// Early-stop threshold in dB.
    pub target_psnr: f64,
    pub loss_mode: LossMode,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub log_every: usize,
    pub generator: GeneratorArch,
    pub generator_hidden: usize,
    /// Channels of the encoder-decoder's 1x1 code.
    pub generator_code: usize,
    pub critic_hidden: usize,
}

/// Generator family used by [`train_pair`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorArch {
    /// Square power-of-two images only; global receptive field.
    EncoderDecoder,
    /// Any image size; four 3x3 convolutions, local receptive field.
    Convolutional,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            n_critic: 5,
            clip_c: 0.01,
            lr_d: 5e-5,
            lr_g: 5e-5,
            batch: 4,
            jitter_sigma: 0.02,
            seed: 0,
            target_psnr: 35.0,
            loss_mode: LossMode::Wgan,
            rms_decay: 0.99,
            rms_epsilon: 1e-8,
            log_every: 100,
            generator: GeneratorArch::EncoderDecoder,
            generator_hidden: 16,
            generator_code: 32,
            critic_hidden: 16,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::InvalidConfig(msg.into()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if self.n_critic < 1 {
            return bad("n_critic must be at least 1");
        }
        if !(self.clip_c > 0.0 && self.clip_c.is_finite()) {
            return bad("clip_c must be positive");
        }
        if !(0.0..0.1).contains(&self.jitter_sigma) {
            return bad("jitter_sigma must lie in [0, 0.1)");
        }
        if self.batch < 1 {
            return bad("batch must be at least 1");
        }
        if !(self.lr_d >= 0.0 && self.lr_d.is_finite() && self.lr_g >= 0.0 && self.lr_g.is_finite())
        {
            return bad("learning rates must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_epsilon > 0.0) {
            return bad("rms_decay must lie in [0, 1) and rms_epsilon be positive");
        }
        if self.log_every < 1 {
            return bad("log_every must be at least 1");
        }
        if self.generator_hidden < 1 || self.critic_hidden < 1 || self.generator_code < 1 {
            return bad("hidden widths must be at least 1");
        }
        if self.target_psnr.is_nan() {
            return bad("target_psnr is NaN");
        }
        Ok(())
    }
}

/// One logged iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Negated critic objective after the last critic step.
    pub critic_loss: f64,
    /// Generator objective after the generator step.
    pub gen_loss: f64,
    pub w_estimate: f64,
    /// PSNR of the generator output against the target, `inf` when exact.
    pub psnr: f64,
}

impl LogRow {
    /// One newline-terminated line matching [`TrainingReport::HEADER`].
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{}\n",
            self.iteration,
            self.critic_loss,
            self.gen_loss,
            self.w_estimate,
            fmt_psnr(self.psnr)
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub rows: Vec<LogRow>,
    pub converged: bool,
    pub final_psnr: f64,
    pub iterations_run: usize,
    pub wall_time: Duration,
}

impl TrainingReport {
    pub const HEADER: &'static str = "iter\tcritic_loss\tgen_loss\tw_estimate\tpsnr\n";

    /// Tab-separated log, one line per logged iteration.
    pub fn to_log(&self) -> String {
        let mut out = String::from(Self::HEADER);
        for r in &self.rows {
            out.push_str(&r.to_tsv());
        }
        out
    }

    /// Compares everything except wall time.
    pub fn same_run(&self, other: &Self) -> bool {
        let bits = |r: &LogRow| [r.critic_loss, r.gen_loss, r.w_estimate, r.psnr].map(f64::to_bits);
        self.converged == other.converged
            && self.final_psnr.to_bits() == other.final_psnr.to_bits()
            && self.iterations_run == other.iterations_run
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.iteration == b.iteration && bits(a) == bits(b))
    }
}

pub(crate) fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests;
