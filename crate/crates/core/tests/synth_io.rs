use stpca::io;
use stpca::score::Scenario;
use stpca::synth::{self, ArraySignalSpec, ErrorPattern, OrbitSpec};

#[test]
fn generators_are_deterministic() {
    let a = synth::gen_orbit(&OrbitSpec::new(4, 3)).unwrap();
    assert_eq!(a, synth::gen_orbit(&OrbitSpec::new(4, 3)).unwrap());
    assert_ne!(a.tensor, synth::gen_orbit(&OrbitSpec::new(4, 4)).unwrap().tensor);
    let spec = ArraySignalSpec::case2(ErrorPattern::Vertical, 8);
    assert_eq!(synth::gen_array_signal(&spec).unwrap(), synth::gen_array_signal(&spec).unwrap());
}

#[test]
fn orbit_shapes_and_truth() {
    for n in 3..=5 {
        let ds = synth::gen_orbit(&OrbitSpec::new(n, 1)).unwrap();
        assert_eq!(ds.tensor.shape(), &[3 * n, 41, 100]);
        assert_eq!(ds.true_features, (0..n).collect::<Vec<_>>());
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.scenario, Scenario::SliceWise);
        assert!(ds.tensor.is_real());
        assert!(ds.tensor.max_abs() <= 1.0);
    }
    assert!(synth::gen_orbit(&OrbitSpec::new(6, 1)).is_err());
}

#[test]
fn array_shapes_and_truth() {
    let ds = synth::gen_array_signal(&ArraySignalSpec::case1(0)).unwrap();
    assert_eq!(ds.tensor.shape(), &[10, 10, 800]);
    assert_eq!(ds.classes(), 4);
    assert!(ds.true_features.is_empty());
    for p in ErrorPattern::WITH_ERRORS {
        let ds = synth::gen_array_signal(&ArraySignalSpec::case2(p, 2)).unwrap();
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.true_features.len(), p.default_units());
        let rows: Vec<usize> = ds.true_features.iter().map(|j| j % 10).collect();
        let cols: Vec<usize> = ds.true_features.iter().map(|j| j / 10).collect();
        match p {
            ErrorPattern::Horizontal => assert!(rows.iter().all(|&u| u == rows[0])),
            ErrorPattern::Vertical => assert!(cols.iter().all(|&v| v == cols[0])),
            _ => {}
        }
    }
}

#[test]
fn orbit_signal_channels_carry_between_class_variance() {
    let mut margins = 0;
    for seed in 0..50 {
        let spec = OrbitSpec { noise_sigma: 0.5, ..OrbitSpec::new(3, seed) };
        let ds = synth::gen_orbit(&spec).unwrap();
        let b = synth::bcv(&ds).unwrap();
        let signal = b[..3].iter().sum::<f64>() / 3.0;
        let noise = b[3..].iter().sum::<f64>() / 6.0;
        if signal > noise {
            margins += 1;
        }
    }
    assert!(margins >= 25, "{} of 50", margins);
}

#[test]
fn dataset_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("array.dtf");
    let ds = synth::gen_array_signal(&ArraySignalSpec::case2(ErrorPattern::Random, 5)).unwrap();
    io::save_dataset(&path, &ds, serde_json::json!({"case": 2}), Some(5)).unwrap();
    let back = io::load_dataset(&path).unwrap();
    assert_eq!(back, ds);
    let bytes = std::fs::read(&path).unwrap();
    let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&bytes[..header_end]).unwrap();
    assert_eq!(header["shape"], serde_json::json!([10, 10, 800]));
    assert_eq!(header["dtype"], "c128");
    assert_eq!(bytes.len() - header_end - 1, 16 * 10 * 10 * 800);
}
