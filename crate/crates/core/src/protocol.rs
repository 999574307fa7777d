//! Sender and receiver workflows.
//!
//! The sender looks up the generator registered for a secret image and
//! transmits its output. The receiver looks up the generator registered
//! for that output and recovers an approximation of the secret. Only
//! pre-registered secrets can be hidden: the capacity of a database pair
//! is the number of registered pairs times the image size.

use crate::image::{psnr, ImageBuffer, ImageError, Psnr};
use crate::modeldb::{image_digest, DbError, ModelDatabase, ModelDbEntry};
use crate::train::{train_pair_with, LogRow, TrainError, TrainingConfig, TrainingReport};

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HideResult {
    pub cover: ImageBuffer,
    pub entry_id: String,
    /// PSNR of the cover against the entry's canonical output; infinite
    /// whenever the registered key itself was presented.
    pub fidelity: Psnr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RevealResult {
    pub reconstruction: ImageBuffer,
    pub entry_id: String,
    pub match_distance: u32,
}

/// Emits the cover paired with `secret`.
pub fn hide(db: &ModelDatabase, secret: &ImageBuffer) -> Result<HideResult, ProtocolError> {
    let m = db.lookup(secret)?;
    let cover = m.entry.generator.run(secret)?;
    let canonical = db.canonical_output(&m.entry.entry_id)?;
    Ok(HideResult {
        fidelity: psnr(&cover, &canonical)?,
        entry_id: m.entry.entry_id.clone(),
        cover,
    })
}

/// Recovers the secret paired with a received cover.
pub fn reveal(db: &ModelDatabase, cover: &ImageBuffer) -> Result<RevealResult, ProtocolError> {
    let m = db.lookup(cover)?;
    Ok(RevealResult {
        reconstruction: m.entry.generator.run(cover)?,
        entry_id: m.entry.entry_id.clone(),
        match_distance: m.distance,
    })
}

/// Entry id derived from the key image: a direction tag plus the first 16
/// hex digits of the key's digest.
pub fn entry_id_for(tag: &str, key: &ImageBuffer) -> String {
    format!("{tag}-{}", &hex::encode(image_digest(key))[..16])
}

#[derive(Clone, Debug)]
pub struct PairOutcome {
    pub forward: ModelDbEntry,
    pub reverse: ModelDbEntry,
    pub forward_report: TrainingReport,
    pub reverse_report: TrainingReport,
    /// The cover the sender will transmit for this secret.
    pub cover: ImageBuffer,
}

impl PairOutcome {
    pub fn converged(&self) -> bool {
        self.forward_report.converged && self.reverse_report.converged
    }
}

/// Which half of [`build_pair`] a progress row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Trains and registers both directions of a secret/cover pair.
///
/// The reverse model learns to map the cover the forward model actually
/// emits (not the pristine `cover_target`) back to the secret, and is keyed
/// by that emitted cover, since that is all the receiver ever sees.
/// Nothing is registered unless both trainings complete.
pub fn build_pair(
    secret: &ImageBuffer,
    cover_target: &ImageBuffer,
    cfg: &TrainingConfig,
    sender_db: &mut ModelDatabase,
    receiver_db: &mut ModelDatabase,
) -> Result<PairOutcome, ProtocolError> {
    build_pair_with(secret, cover_target, cfg, sender_db, receiver_db, |_, _| {})
}

/// As [`build_pair`], reporting training progress through `on_log`.
pub fn build_pair_with(
    secret: &ImageBuffer,
    cover_target: &ImageBuffer,
    cfg: &TrainingConfig,
    sender_db: &mut ModelDatabase,
    receiver_db: &mut ModelDatabase,
    mut on_log: impl FnMut(Direction, &LogRow),
) -> Result<PairOutcome, ProtocolError> {
    secret.same_shape(cover_target)?;
    let fwd_id = entry_id_for("fwd", secret);
    sender_db.check_key(secret, &fwd_id)?;
    let (g_fwd, forward_report) =
        train_pair_with(secret, cover_target, cfg, |r| on_log(Direction::Forward, r))?;
    let cover = g_fwd.run(secret)?;
    let rev_id = entry_id_for("rev", &cover);
    receiver_db.check_key(&cover, &rev_id)?;
    let (g_rev, reverse_report) =
        train_pair_with(&cover, secret, cfg, |r| on_log(Direction::Reverse, r))?;
    let forward = sender_db.register(secret, g_fwd, &fwd_id)?.clone();
    let reverse = receiver_db.register(&cover, g_rev, &rev_id)?.clone();
    debug_assert_eq!(image_digest(&cover), forward.target_digest);
    Ok(PairOutcome {
        forward,
        reverse,
        forward_report,
        reverse_report,
        cover,
    })
}
