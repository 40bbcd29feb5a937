use std::path::Path;

use grainkit::media_io::{
    decode_pnm, encode_pnm, frame_to_rgb, read_pnm, read_yuv420, rgb_to_frame, write_pnm, write_yuv420, Frame,
    MediaError, Plane, Pnm,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(w: usize, h: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plane = |w: usize, h: usize| Plane::from_samples(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap();
    let y = plane(w, h);
    let cb = plane(w.div_ceil(2), h.div_ceil(2));
    let cr = plane(w.div_ceil(2), h.div_ceil(2));
    Frame::new(y, cb, cr).unwrap()
}

#[test]
fn second_of_two_frames_is_readable_third_is_not() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.yuv");
    let frames = [random_frame(64, 64, 1), random_frame(64, 64, 2)];
    write_yuv420(&path, &frames).unwrap();
    assert_eq!(read_yuv420(&path, 64, 64, 1).unwrap(), frames[1]);
    match read_yuv420(&path, 64, 64, 2) {
        Err(MediaError::FrameIndex { index: 2, frames: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn odd_width_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.yuv");
    std::fs::write(&path, vec![0u8; 63 * 64 * 3]).unwrap();
    assert!(matches!(
        read_yuv420(&path, 63, 64, 0),
        Err(MediaError::OddDimensions { width: 63, .. })
    ));
}

#[test]
fn truncated_sequence_is_a_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.yuv");
    std::fs::write(&path, vec![0u8; 64 * 64 * 3 / 2 + 7]).unwrap();
    let err = read_yuv420(&path, 64, 64, 0).unwrap_err();
    assert!(matches!(err, MediaError::SizeMismatch { .. }));
    assert!(err.to_string().contains("a.yuv"));
}

#[test]
fn flat_pgm_reads_back_flat() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.pgm");
    write_pnm(&path, &Pnm::Gray(Plane::filled(33, 17, 128))).unwrap();
    let Pnm::Gray(p) = read_pnm(&path).unwrap() else { panic!("expected grey") };
    assert_eq!((p.width(), p.height()), (33, 17));
    assert!(p.samples().iter().all(|&v| v == 128));
}

#[test]
fn maxval_other_than_255_is_rejected() {
    let mut bytes = b"P5 2 2 65535\n".to_vec();
    bytes.extend_from_slice(&[0; 8]);
    assert!(matches!(
        decode_pnm(Path::new("deep.pgm"), &bytes),
        Err(MediaError::MaxVal { maxval: 65535, .. })
    ));
    assert!(matches!(
        decode_pnm(Path::new("bad.pgm"), b"P3 2 2 255\n"),
        Err(MediaError::MalformedHeader { .. })
    ));
    assert!(matches!(
        decode_pnm(Path::new("short.pgm"), b"P5 2 2 255\n\x01"),
        Err(MediaError::MalformedHeader { .. })
    ));
}

#[test]
fn block_uniform_ppm_round_trips_within_two_codes() {
    let (w, h) = (48, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let blocks: Vec<[u8; 3]> = (0..(w / 2) * (h / 2)).map(|_| rng.gen()).collect();
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            rgb.extend_from_slice(&blocks[(y / 2) * (w / 2) + x / 2]);
        }
    }
    let frame = rgb_to_frame(w, h, &rgb).unwrap();
    let back = frame_to_rgb(&frame);
    let worst = rgb.iter().zip(&back).map(|(&a, &b)| (a as i32 - b as i32).abs()).max().unwrap();
    assert!(worst <= 2, "worst channel error {worst}");

    let bytes = encode_pnm(&Pnm::Color(frame.clone()));
    assert_eq!(decode_pnm(Path::new("c.ppm"), &bytes).unwrap(), Pnm::Color(rgb_to_frame(w, h, &back).unwrap()));
}

proptest! {
    #[test]
    fn yuv_round_trip_is_identity(w in 1usize..20, h in 1usize..20, seed: u64, n in 1usize..4) {
        let (w, h) = (w * 2, h * 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.yuv");
        let frames: Vec<Frame> = (0..n).map(|i| random_frame(w, h, seed ^ i as u64)).collect();
        write_yuv420(&path, &frames).unwrap();
        for (i, f) in frames.iter().enumerate() {
            prop_assert_eq!(&read_yuv420(&path, w, h, i).unwrap(), f);
        }
    }

    #[test]
    fn pgm_round_trip_is_identity(w in 1usize..40, h in 1usize..40, seed: u64) {
        let y = random_frame(w, h, seed).y;
        let bytes = encode_pnm(&Pnm::Gray(y.clone()));
        prop_assert_eq!(decode_pnm(Path::new("p.pgm"), &bytes).unwrap(), Pnm::Gray(y));
    }
}
