use hdrtv_color::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn pq_boundaries_and_round_trip() {
    assert_eq!(pq::eotf(0.0), 0.0);
    assert!((pq::eotf(1.0) - 10000.0).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(2084);
    let worst = (0..1000)
        .map(|_| rng.random_range(0.0..=1.0))
        .map(|e: f64| (pq::oetf(pq::eotf(e)) - e).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn pq_eotf_matches_closed_form_at_midpoint() {
    // Hand-evaluated ST 2084 at E = 0.5.
    let ep = 0.5f64.powf(4096.0 / (2523.0 * 128.0));
    let expect = 10000.0 * ((ep - 0.8359375) / (18.8515625 - 18.6875 * ep)).powf(16384.0 / 2610.0);
    assert!((pq::eotf(0.5) - expect).abs() < 1e-9);
    assert!((expect - 92.2457).abs() < 1e-3);
}

#[test]
fn frame_level_pq_round_trip() {
    let f = EncodedFrame::new(1, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.1]).unwrap();
    let back = pq_oetf(&pq_eotf(&f));
    for (a, b) in f.data().iter().zip(back.data()) {
        assert!((a - b).abs() < 1e-4);
    }
}

/// LMS and ICtCp written out scalar by scalar, without the matrix types.
fn ictcp_by_hand(r: f64, g: f64, b: f64) -> [f64; 3] {
    let l = (1688.0 * r + 2146.0 * g + 262.0 * b) / 4096.0;
    let m = (683.0 * r + 2951.0 * g + 462.0 * b) / 4096.0;
    let s = (99.0 * r + 309.0 * g + 3688.0 * b) / 4096.0;
    let (l, m, s) = (pq::oetf(l), pq::oetf(m), pq::oetf(s));
    [
        0.5 * l + 0.5 * m,
        (6610.0 * l - 13613.0 * m + 7003.0 * s) / 4096.0,
        (17933.0 * l - 17390.0 * m - 543.0 * s) / 4096.0,
    ]
}

#[test]
fn ictcp_matches_hand_multiplied_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2100);
    for _ in 0..100 {
        let p: [f64; 3] =
            [rng.random_range(0.0..10000.0), rng.random_range(0.0..10000.0), rng.random_range(0.0..10000.0)];
        let got = ictcp_pixel(p);
        let want = ictcp_by_hand(p[0], p[1], p[2]);
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() <= 1e-6, "{p:?}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn black_and_achromatic_pixels() {
    // PQ(0) is c1^m2 ≈ 7.3e-7, so black sits within 1e-6 of the origin.
    assert!(ictcp_pixel([0.0; 3]).iter().all(|v| v.abs() < 1e-6));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let v = rng.random_range(0.0..10000.0);
        let [i, ct, cp] = ictcp_pixel([v, v, v]);
        assert!(i >= 0.0);
        assert!(ct.abs() <= 1e-6 && cp.abs() <= 1e-6);
    }
}

#[test]
fn gamut_matrices() {
    let m = bt709_to_bt2020_matrix();
    let inv = bt2020_to_bt709_matrix();
    let id = m * inv;
    for r in 0..3 {
        for c in 0..3 {
            let want = if r == c { 1.0 } else { 0.0 };
            assert!((id[(r, c)] - want).abs() <= 1e-6);
        }
    }
    // White stays white.
    let w = m * nalgebra::Vector3::new(1.0, 1.0, 1.0);
    assert!(w.iter().all(|v| (v - 1.0).abs() <= 1e-6));
    // Published BT.2087 coefficients, four decimals.
    let published = [[0.6274, 0.3293, 0.0433], [0.0691, 0.9195, 0.0114], [0.0164, 0.0880, 0.8956]];
    for r in 0..3 {
        for c in 0..3 {
            assert!((m[(r, c)] - published[r][c]).abs() < 1e-4, "({r},{c}) {}", m[(r, c)]);
        }
    }
    check_conditioning().unwrap();
}

#[test]
fn sdr_conventions() {
    assert_eq!(sdr_decode(0.0), 0.0);
    assert!((sdr_decode(1.0) - 100.0).abs() < 1e-12);
    assert!((sdr_encode(sdr_decode(0.37)) - 0.37).abs() < 1e-12);
    let white = LinearFrame::filled(2, 2, [1.0; 3]).unwrap();
    assert!(bt709_to_bt2020(&white).data().iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn out_of_range_inputs_are_clamped_and_counted() {
    let before = clamp_events();
    assert!((pq::eotf(1.5) - 10000.0).abs() < 1e-9);
    assert_eq!(pq::oetf(-3.0), pq::oetf(0.0));
    assert!(clamp_events() >= before + 2);
}

#[test]
fn frame_validation() {
    assert!(EncodedFrame::new(2, 2, vec![0.0; 11]).is_err());
    assert!(EncodedFrame::new(0, 2, vec![]).is_err());
}

proptest! {
    #[test]
    fn pq_eotf_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(pq::eotf(lo) <= pq::eotf(hi));
    }

    #[test]
    fn pq_round_trip_anywhere(e in 0.0f64..=1.0) {
        prop_assert!((pq::oetf(pq::eotf(e)) - e).abs() < 1e-4);
    }
}
