//! The generative model database shared by sender and receiver.
//!
//! A database is a directory holding one weight blob per entry, the
//! canonical output image of each entry, and a `manifest.json` index.
//! Incoming images are dispatched to the entry whose key fingerprint is
//! nearest in Hamming distance, provided that distance is within the
//! match threshold.

mod model;

pub use model::{load_model, save_model, GeneratorModel, FORMAT_VERSION, MAGIC};

use crate::image::{fingerprint, hamming, read_pgm, write_pgm, Fingerprint, ImageBuffer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_MATCH_THRESHOLD: u32 = 10;

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("entry id {0:?} already exists")]
    DuplicateId(String),
    #[error("invalid entry id {0:?}")]
    InvalidId(String),
    #[error("key fingerprint is {distance} bits from entry {existing:?} (threshold {threshold})")]
    FingerprintCollision {
        existing: String,
        distance: u32,
        threshold: u32,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no model within {threshold} bits (nearest: {nearest:?})")]
    NoMatchingModel {
        nearest: Option<u32>,
        threshold: u32,
    },
}

impl DbError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DbError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// SHA-256 of the canonical P5 encoding.
pub fn image_digest(img: &ImageBuffer) -> [u8; 32] {
    Sha256::digest(write_pgm(img)).into()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelDbEntry {
    pub entry_id: String,
    pub key_fingerprint: Fingerprint,
    /// Digest of the image the generator emits for its registered key.
    pub target_digest: [u8; 32],
    pub generator: GeneratorModel,
    pub created_at: String,
    pub blob_filename: String,
}

impl ModelDbEntry {
    pub fn target_digest_hex(&self) -> String {
        hex::encode(self.target_digest)
    }

    pub fn input_extents(&self) -> (usize, usize) {
        self.generator
            .input_extents
            .expect("database entries carry extents")
    }
}

/// One row of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub entry_id: String,
    pub key_fingerprint: String,
    pub target_digest: String,
    pub blob_filename: String,
    pub input_width: usize,
    pub input_height: usize,
    pub created_at: String,
}

impl From<&ModelDbEntry> for ManifestRecord {
    fn from(e: &ModelDbEntry) -> Self {
        let (w, h) = e.input_extents();
        Self {
            entry_id: e.entry_id.clone(),
            key_fingerprint: e.key_fingerprint.to_hex(),
            target_digest: e.target_digest_hex(),
            blob_filename: e.blob_filename.clone(),
            input_width: w,
            input_height: h,
            created_at: e.created_at.clone(),
        }
    }
}

/// Result of dispatching an image to the database.
#[derive(Clone, Copy, Debug)]
pub struct Match<'a> {
    pub entry: &'a ModelDbEntry,
    pub distance: u32,
}

#[derive(Debug)]
pub struct ModelDatabase {
    root: PathBuf,
    match_threshold: u32,
    entries: Vec<ModelDbEntry>,
}

impl ModelDatabase {
    /// Opens the database at `root`, creating the directory when missing.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DbError> {
        Self::open_with_threshold(root, DEFAULT_MATCH_THRESHOLD)
    }

    pub fn open_with_threshold(
        root: impl AsRef<Path>,
        match_threshold: u32,
    ) -> Result<Self, DbError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| DbError::io(&root, e))?;
        let mut db = Self {
            root,
            match_threshold,
            entries: Vec::new(),
        };
        for record in db.read_manifest()? {
            let entry = db.load_entry(record)?;
            db.entries.push(entry);
        }
        Ok(db)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn match_threshold(&self) -> u32 {
        self.match_threshold
    }

    pub fn entries(&self) -> &[ModelDbEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entry_id: &str) -> Option<&ModelDbEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    /// Reads the manifest without loading any weights.
    pub fn read_manifest_at(root: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, DbError> {
        let path = root.as_ref().join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| DbError::CorruptManifest(e.to_string()))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(DbError::io(&path, e)),
        }
    }

    fn read_manifest(&self) -> Result<Vec<ManifestRecord>, DbError> {
        Self::read_manifest_at(&self.root)
    }

    fn load_entry(&self, r: ManifestRecord) -> Result<ModelDbEntry, DbError> {
        let bad =
            |what: &str| DbError::CorruptManifest(format!("{what} in entry {:?}", r.entry_id));
        let key_fingerprint = r
            .key_fingerprint
            .parse()
            .map_err(|_| bad("bad fingerprint"))?;
        let target_digest = hex::decode(&r.target_digest)
            .ok()
            .and_then(|d| <[u8; 32]>::try_from(d).ok())
            .ok_or_else(|| bad("bad digest"))?;
        if Path::new(&r.blob_filename)
            .file_name()
            .map(|f| f != r.blob_filename.as_str())
            .unwrap_or(true)
        {
            return Err(bad("blob path escapes database"));
        }
        let mut generator = load_model(&self.root.join(&r.blob_filename))?;
        generator.input_extents = Some((r.input_width, r.input_height));
        generator.check_accepts(r.input_width, r.input_height)?;
        Ok(ModelDbEntry {
            entry_id: r.entry_id,
            key_fingerprint,
            target_digest,
            generator,
            created_at: r.created_at,
            blob_filename: r.blob_filename,
        })
    }

    fn canonical_path(&self, entry_id: &str) -> PathBuf {
        self.root.join(format!("{entry_id}.out.pgm"))
    }

    /// The image the entry's generator emitted for its key at registration.
    pub fn canonical_output(&self, entry_id: &str) -> Result<ImageBuffer, DbError> {
        let path = self.canonical_path(entry_id);
        let bytes = fs::read(&path).map_err(|e| DbError::io(&path, e))?;
        read_pgm(&bytes)
            .map_err(|e| DbError::CorruptManifest(format!("canonical output of {entry_id}: {e}")))
    }

    /// Checks that `entry_id` is usable and that `key_img` would not collide
    /// with an existing key, without writing anything.
    pub fn check_key(&self, key_img: &ImageBuffer, entry_id: &str) -> Result<(), DbError> {
        if entry_id.is_empty()
            || entry_id.len() > 128
            || !entry_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
            || entry_id.starts_with('.')
        {
            return Err(DbError::InvalidId(entry_id.to_string()));
        }
        if self.get(entry_id).is_some() {
            return Err(DbError::DuplicateId(entry_id.to_string()));
        }
        if let Some(m) = self.nearest(key_img) {
            if m.distance <= self.match_threshold {
                return Err(DbError::FingerprintCollision {
                    existing: m.entry.entry_id.clone(),
                    distance: m.distance,
                    threshold: self.match_threshold,
                });
            }
        }
        Ok(())
    }

    /// Stores `generator` keyed by the fingerprint of `key_img`.
    pub fn register(
        &mut self,
        key_img: &ImageBuffer,
        mut generator: GeneratorModel,
        entry_id: &str,
    ) -> Result<&ModelDbEntry, DbError> {
        self.check_key(key_img, entry_id)?;
        generator.check_accepts(key_img.width(), key_img.height())?;
        generator.input_extents = Some((key_img.width(), key_img.height()));
        let key_fingerprint = fingerprint(key_img);
        let output = generator.run(key_img)?;
        let entry = ModelDbEntry {
            entry_id: entry_id.to_string(),
            key_fingerprint,
            target_digest: image_digest(&output),
            blob_filename: format!("{entry_id}.cgm"),
            created_at: creation_time(),
            generator,
        };
        // Blob and canonical output land before the manifest names them.
        atomic_write(
            &self.root.join(&entry.blob_filename),
            &entry.generator.to_bytes(),
        )?;
        atomic_write(&self.canonical_path(entry_id), &write_pgm(&output))?;
        let mut records: Vec<ManifestRecord> =
            self.entries.iter().map(ManifestRecord::from).collect();
        records.push(ManifestRecord::from(&entry));
        let json = serde_json::to_vec_pretty(&records)
            .map_err(|e| DbError::CorruptManifest(e.to_string()))?;
        atomic_write(&self.root.join(MANIFEST_FILE), &json)?;
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// Nearest same-sized entry. Models of other sizes cannot run on the
    /// image, so they never compete for it.
    fn nearest(&self, img: &ImageBuffer) -> Option<Match<'_>> {
        let fp = fingerprint(img);
        self.entries
            .iter()
            .filter(|e| e.input_extents() == (img.width(), img.height()))
            .map(|e| Match {
                entry: e,
                distance: hamming(fp, e.key_fingerprint),
            })
            .min_by(|a, b| {
                a.distance
                    .cmp(&b.distance)
                    .then_with(|| a.entry.entry_id.cmp(&b.entry.entry_id))
            })
    }

    /// Nearest same-sized entry by fingerprint, ties broken by entry id.
    pub fn lookup(&self, img: &ImageBuffer) -> Result<Match<'_>, DbError> {
        match self.nearest(img) {
            Some(m) if m.distance <= self.match_threshold => Ok(m),
            other => Err(DbError::NoMatchingModel {
                nearest: other.map(|m| m.distance),
                threshold: self.match_threshold,
            }),
        }
    }

    /// Re-runs an entry on its key and compares against the stored digest.
    pub fn verify(&self, entry_id: &str, key_img: &ImageBuffer) -> Result<bool, DbError> {
        let entry = self.get(entry_id).ok_or(DbError::NoMatchingModel {
            nearest: None,
            threshold: self.match_threshold,
        })?;
        Ok(image_digest(&entry.generator.run(key_img)?) == entry.target_digest)
    }
}

/// Registration timestamp. `SOURCE_DATE_EPOCH`, when set, pins it so that
/// repeated runs write identical manifests.
fn creation_time() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DbError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| DbError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| DbError::io(&tmp, e))?;
    f.sync_all().map_err(|e| DbError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| DbError::io(path, e))
}
