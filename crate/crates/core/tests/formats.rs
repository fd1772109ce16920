//! File-format and configuration conformance.

mod common;

use common::malformed_pfm_corpus;
use diffoptics::experiments::{DepthRow, TrialReport};
use diffoptics::field::{Grid, RealGrid};
use diffoptics::io::{
    decode_pfm, depth_csv, encode_pfm, encode_pgm, loss_csv, parse_model_config, read_complex_pfm,
    read_pfm, trials_csv, write_complex_pfm, write_pfm,
};
use diffoptics::Error;
use num_complex::Complex64;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

fn grid_strategy() -> impl Strategy<Value = (usize, Vec<f32>)> {
    (1usize..=24).prop_flat_map(|n| (Just(n), prop::collection::vec(finite_f32(), n * n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pfm_round_trip_is_bit_exact((n, samples) in grid_strategy()) {
        let grid = Grid::from_vec(n, samples.iter().map(|&v| v as f64).collect()).unwrap();
        let bytes = encode_pfm(&grid).unwrap();
        let back = decode_pfm(&bytes).unwrap();
        prop_assert_eq!(back.side(), n);
        for (a, b) in back.as_slice().iter().zip(&samples) {
            prop_assert_eq!((*a as f32).to_bits(), b.to_bits());
        }
    }
}

#[test]
fn reference_header_parses() {
    let mut bytes = b"Pf\n64 64\n-1.0\n".to_vec();
    for i in 0..64 * 64 {
        bytes.extend_from_slice(&((i % 97) as f32 - 48.5).to_le_bytes());
    }
    assert_eq!(bytes.len(), 14 + 4 * 64 * 64);
    let g = decode_pfm(&bytes).unwrap();
    assert_eq!(g.side(), 64);
    // first stored row is the bottom one
    assert_eq!(*g.get(63, 0), -48.5);
    assert_eq!(encode_pfm(&g).unwrap(), bytes);
}

#[test]
fn malformed_corpus_is_rejected() {
    let corpus = malformed_pfm_corpus();
    assert!(corpus.len() >= 5);
    for (what, bytes) in corpus {
        match decode_pfm(&bytes) {
            Err(Error::Format { offset, .. }) => assert!(offset as usize <= bytes.len(), "{what}"),
            other => panic!("{what}: expected a format error, got {other:?}"),
        }
    }
}

#[test]
fn error_offsets_point_at_the_fault() {
    let mut bytes = b"Pf\n2 2\n-1.0\n".to_vec();
    for v in [1.0f32, 2.0, f32::NAN, 4.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    match decode_pfm(&bytes) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 12 + 8),
        other => panic!("{other:?}"),
    }
    match decode_pfm(b"Pf\n2 2\n+1.0\n") {
        Err(Error::Format { offset, message }) => {
            assert_eq!(offset, 7);
            assert!(message.contains("big-endian"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g: RealGrid = Grid::from_fn(16, |r, c| (r as f64 - c as f64) * 0.125);
    write_pfm(dir.path().join("g.pfm"), &g).unwrap();
    assert_eq!(read_pfm(dir.path().join("g.pfm")).unwrap(), g);
    let u = Grid::from_fn(16, |r, c| Complex64::new(r as f64, -(c as f64) * 0.5));
    let stem = dir.path().join("field");
    write_complex_pfm(&stem, &u).unwrap();
    assert!(dir.path().join("field.re.pfm").exists() && dir.path().join("field.im.pfm").exists());
    assert_eq!(read_complex_pfm(&stem).unwrap(), u);
}

#[test]
fn pgm_is_max_normalized() {
    let g: RealGrid = Grid::from_fn(8, |r, c| if r == 2 && c == 3 { 4.0 } else if r == 0 { -1.0 } else { 1.0 });
    let bytes = encode_pgm(&g);
    let header = b"P5\n8 8\n255\n";
    assert!(bytes.starts_with(header));
    let data = &bytes[header.len()..];
    assert_eq!(data.len(), 64);
    assert_eq!(data[2 * 8 + 3], 255);
    assert_eq!(data[0], 0);
    assert_eq!(data[8], 64);
}

#[test]
fn csv_layouts() {
    let r = TrialReport {
        trial: 3,
        seed: 42,
        label: "cubic".into(),
        initial_nmse: 0.5,
        image_nmse: 1e-3,
        param_nmse: 0.25,
        iterations: 17,
        diverged: false,
    };
    let t = trials_csv(&[r]);
    let lines: Vec<_> = t.lines().collect();
    assert_eq!(lines[0], "trial,seed,label,initial_nmse,image_nmse,param_nmse,iters,diverged");
    assert_eq!(lines[1], "3,42,cubic,5e-1,1e-3,2.5e-1,17,false");
    assert_eq!(loss_csv(&[0.5, 0.25]), "iteration,nmse\n0,5e-1\n1,2.5e-1\n");
    let d = depth_csv(&[DepthRow {
        true_depth: -4.0,
        predicted_depth: -2.0,
        control_depth: 4.0,
    }]);
    assert_eq!(d, "true_depth,predicted_depth,control_depth\n-4,-2,4\n");
}

const FOUR_F: &str = r#"{
    "grid": {"n_side": 32, "pitch_um": 4.0, "wavelength_um": 0.5},
    "blocks": [
        {"kind": "psf_source", "param": "src"},
        {"kind": "wp", "distance_um": 300.0},
        {"kind": "lens", "focal_length_um": 1024.0, "pupil_radius_um": 50.0},
        {"kind": "phase_mask", "param": "mask"},
        {"kind": "lens", "focal_length_um": 1024.0, "pupil_radius_um": 50.0},
        {"kind": "camera"}
    ],
    "params": {
        "src": {"kind": "field", "init": "constant", "value": 1.0},
        "mask": {"kind": "phase", "init": "zero"}
    },
    "trainable": ["mask"]
}"#;

fn validation_errors(text: &str) -> Vec<String> {
    match parse_model_config(text) {
        Err(Error::Validation(v)) => v,
        other => panic!("expected validation errors, got {other:?}"),
    }
}

#[test]
fn four_f_block_diagram_validates() {
    let cfg = parse_model_config(FOUR_F).unwrap();
    let kinds: Vec<_> = cfg.blocks.iter().map(|b| b.kind_name()).collect();
    assert_eq!(kinds, ["psf_source", "wp", "lens", "phase_mask", "lens", "camera"]);
    cfg.build_model().unwrap();
}

#[test]
fn config_errors_are_all_reported() {
    let errs = validation_errors(&FOUR_F.replace("300.0", "100.0"));
    assert!(errs.iter().any(|e| e.contains("minimum distance")), "{errs:?}");

    let errs = validation_errors(&FOUR_F.replace("[\"mask\"]", "[\"nobody\"]"));
    assert!(errs.iter().any(|e| e.contains("not referenced")), "{errs:?}");

    let errs = validation_errors(
        &FOUR_F
            .replace("{\"kind\": \"camera\"}", "{\"kind\": \"mirror\"}")
            .replace("\"value\": 1.0", "\"valeu\": 1.0"),
    );
    assert!(errs.len() >= 2, "{errs:?}");

    // unequal focal lengths leave the sensor on the wrong pitch
    let skew = FOUR_F.replacen("1024.0", "512.0", 1);
    assert!(!validation_errors(&skew).is_empty());

    // first block must be the source, last the camera
    let reordered = FOUR_F.replace(
        "{\"kind\": \"psf_source\", \"param\": \"src\"},\n        {\"kind\": \"wp\", \"distance_um\": 300.0},",
        "{\"kind\": \"wp\", \"distance_um\": 300.0},\n        {\"kind\": \"psf_source\", \"param\": \"src\"},",
    );
    assert!(!validation_errors(&reordered).is_empty());
}
