//! External encoder protocol, exercised against the real reference child
//! process (`pathforge-stub-encoder`).

use std::time::Duration;

use pathforge::encoder::{EncoderRegistry, ExternalEncoder, PatchEncoder, StubStatsEncoder};
use pathforge::error::PathforgeError;
use pathforge_core::raster::RasterImage;
use pathforge_core::rng::Rng;

fn stub_encoder_bin() -> String {
    env!("CARGO_BIN_EXE_pathforge-stub-encoder").to_string()
}

fn noise_patch(seed: u64, size: u32) -> RasterImage {
    let mut rng = Rng::seed_from(seed);
    RasterImage::from_data(
        size,
        size,
        (0..size as usize * size as usize * 3)
            .map(|_| (rng.next_u64() & 0xff) as u8)
            .collect(),
    )
}

#[test]
fn handshake_reports_dimension() {
    let encoder = ExternalEncoder::spawn(
        "ext-stub",
        &[stub_encoder_bin()],
        Duration::from_secs(10),
        &[],
    )
    .unwrap();
    assert_eq!(encoder.dim(), 64);
}

#[test]
fn external_process_matches_builtin_exactly() {
    let mut external = ExternalEncoder::spawn(
        "ext-stub",
        &[stub_encoder_bin()],
        Duration::from_secs(10),
        &[],
    )
    .unwrap();
    let mut builtin = StubStatsEncoder;
    let patches: Vec<RasterImage> = (0..5).map(|i| noise_patch(100 + i, 32)).collect();
    let via_process = external.encode_batch(&patches).unwrap();
    let via_builtin = builtin.encode_batch(&patches).unwrap();
    assert_eq!(via_process, via_builtin);
}

#[test]
fn multiple_batches_over_one_process() {
    let mut external = ExternalEncoder::spawn(
        "ext-stub",
        &[stub_encoder_bin()],
        Duration::from_secs(10),
        &[],
    )
    .unwrap();
    for round in 0..3 {
        let patches: Vec<RasterImage> = (0..2).map(|i| noise_patch(round * 10 + i, 16)).collect();
        let out = external.encode_batch(&patches).unwrap();
        assert_eq!(out.rows(), 2);
    }
}

#[test]
fn slow_child_times_out() {
    let mut external = ExternalEncoder::spawn(
        "slow",
        &[stub_encoder_bin(), "--sleep-ms".to_string(), "2000".to_string()],
        Duration::from_millis(200),
        &[],
    )
    .unwrap();
    // the handshake frame is answered before the sleep flag bites (sleep
    // happens inside encode); the first data batch must time out
    let err = external.encode_batch(&[noise_patch(1, 8)]).unwrap_err();
    match err {
        PathforgeError::ExternalEncoderFailure(msg) => {
            assert!(msg.contains("no response"), "{msg}");
        }
        other => panic!("expected ExternalEncoderFailure, got {other:?}"),
    }
}

#[test]
fn dying_child_is_reported() {
    let mut external = ExternalEncoder::spawn(
        "dying",
        &[stub_encoder_bin(), "--die-after".to_string(), "1".to_string()],
        Duration::from_secs(10),
        &[],
    )
    .unwrap();
    // first data frame is served, the second kills the child
    external.encode_batch(&[noise_patch(1, 8)]).unwrap();
    let err = external.encode_batch(&[noise_patch(2, 8)]).unwrap_err();
    assert!(matches!(err, PathforgeError::ExternalEncoderFailure(_)), "{err:?}");
}

#[test]
fn registry_spawns_external_and_injects_env() {
    let mut registry = EncoderRegistry::builtin();
    registry.register_external(
        "ext-stub",
        vec![stub_encoder_bin()],
        None,
        Duration::from_secs(10),
    );
    let env = [("SLOT_ID".to_string(), "3".to_string())];
    let mut encoder = registry.patch_encoder("ext-stub", &env).unwrap();
    assert_eq!(encoder.dim(), 64);
    let out = encoder.encode_batch(&[noise_patch(7, 16)]).unwrap();
    assert_eq!(out.rows(), 1);
}

#[test]
fn handshake_timeout_on_non_protocol_child() {
    // `sleep` never answers the handshake
    let result = ExternalEncoder::spawn(
        "mute",
        &["sleep".to_string(), "30".to_string()],
        Duration::from_millis(200),
        &[],
    );
    assert!(matches!(result.map(|_| ()), Err(PathforgeError::ExternalEncoderFailure(_))));
}
