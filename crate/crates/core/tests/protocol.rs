use coverless_core::image::{psnr, ssim, synthetic_scene};
use coverless_core::modeldb::{image_digest, DbError, ModelDatabase};
use coverless_core::protocol::{build_pair, hide, reveal, ProtocolError};
use coverless_core::train::TrainingConfig;

#[test]
fn round_trip_at_16x16() {
    let (sd, rd) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut sender = ModelDatabase::open(sd.path()).unwrap();
    let mut receiver = ModelDatabase::open(rd.path()).unwrap();
    let secret = synthetic_scene(16, 16, 1, 1.0);
    let target = synthetic_scene(16, 16, 2, 1.0);
    let cfg = TrainingConfig::default();
    let out = build_pair(&secret, &target, &cfg, &mut sender, &mut receiver).unwrap();
    assert!(
        out.converged(),
        "{} / {}",
        out.forward_report.final_psnr,
        out.reverse_report.final_psnr
    );

    let hidden = hide(&sender, &secret).unwrap();
    assert_eq!(hidden.cover, out.cover);
    assert!(hidden.fidelity.is_infinite());
    assert!(psnr(&hidden.cover, &target).unwrap().db() >= 30.0);

    // The receiver opens its own copy from disk.
    let mut receiver = ModelDatabase::open(rd.path()).unwrap();
    let shown = reveal(&receiver, &hidden.cover).unwrap();
    assert_eq!(shown.match_distance, 0);
    assert!(psnr(&shown.reconstruction, &secret).unwrap().db() >= 30.0);
    assert!(ssim(&shown.reconstruction, &secret).unwrap() >= 0.9);
    assert_eq!(
        image_digest(&shown.reconstruction),
        receiver.get(&shown.entry_id).unwrap().target_digest
    );

    // Registering the same secret again is refused before any training.
    let again = build_pair(&secret, &target, &cfg, &mut sender, &mut receiver);
    assert!(matches!(
        again,
        Err(ProtocolError::Db(DbError::DuplicateId(_)))
    ));
}

#[test]
fn unknown_cover_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let db = ModelDatabase::open(dir.path()).unwrap();
    assert!(matches!(
        reveal(&db, &synthetic_scene(16, 16, 9, 0.0)),
        Err(ProtocolError::Db(DbError::NoMatchingModel { .. }))
    ));
}

#[test]
fn shape_mismatch_trains_nothing() {
    let (sd, rd) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut sender = ModelDatabase::open(sd.path()).unwrap();
    let mut receiver = ModelDatabase::open(rd.path()).unwrap();
    let r = build_pair(
        &synthetic_scene(16, 16, 1, 0.0),
        &synthetic_scene(32, 32, 2, 0.0),
        &TrainingConfig::default(),
        &mut sender,
        &mut receiver,
    );
    assert!(r.is_err());
    assert!(sender.is_empty() && receiver.is_empty());
}
