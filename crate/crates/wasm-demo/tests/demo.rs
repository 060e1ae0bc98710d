use tvisvar_wasm_demo::{demo_series, filter_series, irf, spike_slab};

#[test]
fn scalar_ar1_responses() {
    let out = irf(&[0.5], &[1.0], 1, 1, 8, 0, -1, 0.0).unwrap();
    for (h, v) in out.iter().enumerate() {
        assert!((v - 0.5f64.powi(h as i32)).abs() < 1e-15);
    }
}

#[test]
fn normalized_impact_is_exact() {
    let a = [0.5, 0.1, 0.2, 0.7];
    let b = [1.0, 0.0, -0.4, 1.2];
    let out = irf(&a, &b, 2, 1, 4, 1, 1, -0.25).unwrap();
    assert_eq!(out[1], -0.25);
}

#[test]
fn bad_shapes_are_rejected() {
    assert!(irf(&[0.5, 0.1], &[1.0], 1, 1, 3, 0, -1, 0.0).is_err());
    assert!(irf(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0], 2, 1, 3, 5, -1, 0.0).is_err());
}

#[test]
fn spike_mass_matches_pattern_share() {
    let out = spike_slab(4, 2, 1.0, 3.0, 40_000, 20, 4.0, 3).unwrap();
    assert!((out[0] - 0.5).abs() < 0.01, "zero fraction {}", out[0]);
    let out = spike_slab(4, 1, 1.0, 3.0, 40_000, 20, 4.0, 3).unwrap();
    assert!((out[0] - 0.25).abs() < 0.01, "zero fraction {}", out[0]);
}

#[test]
fn filter_flags_the_volatile_stretch() {
    let y = demo_series(300, 1);
    let out = filter_series(&y, 1.0, 3.0, 0.97, 0.95).unwrap();
    assert_eq!(out.len(), 600);
    assert!(out.iter().all(|p| (0.0..=1.0).contains(p)));
    let smoothed = &out[300..];
    let mid: f64 = smoothed[110..190].iter().sum::<f64>() / 80.0;
    let edge: f64 = smoothed[..80].iter().sum::<f64>() / 80.0;
    assert!(mid > 0.8 && edge < 0.2, "mid {mid} edge {edge}");
    assert!(filter_series(&y, -1.0, 3.0, 0.9, 0.9).is_err());
}
