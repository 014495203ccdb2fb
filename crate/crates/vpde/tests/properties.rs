//! Property tests for the format, mask, and metric invariants.

use ndarray::{Array3, Array4};
use proptest::prelude::*;

use vpde::container::{read_container, write_container};
use vpde::fields::{Family, FieldVideo};
use vpde::masks::{continuous_sensor_mask, frame_mask, MaskRng};
use vpde::{relative_l2, relative_l2_masked};

fn arb_video() -> impl Strategy<Value = FieldVideo> {
    (1usize..4, 2usize..7, 1usize..3, any::<u64>()).prop_flat_map(|(t, n, c, seed)| {
        proptest::collection::vec(-1e3f32..1e3, t * n * n * c).prop_map(move |values| {
            let data = Array4::from_shape_vec((t, n, n, c), values).unwrap();
            FieldVideo::new(data, 0.01, 1.0 / n as f64, Family::WaveLayer, seed).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Containers survive a write/read round trip exactly, and rewriting the
    /// reread video reproduces the file byte for byte.
    #[test]
    fn container_round_trip_is_exact(video in arb_video()) {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.vpde");
        let p2 = dir.path().join("b.vpde");
        write_container(&p1, &video).unwrap();
        let back = read_container(&p1).unwrap();
        prop_assert_eq!(&back, &video);
        write_container(&p2, &back).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    /// Sensor masks hit the closed-form popcount, repeat the same sites on
    /// every frame, and are a pure function of the seed.
    #[test]
    fn sensor_mask_counts_and_determinism(
        t in 1usize..6,
        n in 4usize..33,
        rate in 0.01f64..1.0,
        seed in any::<u64>(),
    ) {
        let m1 = continuous_sensor_mask(t, n, n, rate, &mut MaskRng::new(seed)).unwrap();
        let m2 = continuous_sensor_mask(t, n, n, rate, &mut MaskRng::new(seed)).unwrap();
        prop_assert_eq!(&m1, &m2);
        let sites = (rate * (n * n) as f64).floor() as usize;
        prop_assert_eq!(m1.popcount(), sites * t);
        for ti in 1..t {
            for r in 0..n {
                for c in 0..n {
                    prop_assert_eq!(m1.mask()[[ti, r, c]], m1.mask()[[0, r, c]]);
                }
            }
        }
    }

    /// Frame masks observe exactly one frame with the closed-form count.
    #[test]
    fn frame_mask_confines_observation(
        t in 2usize..6,
        n in 4usize..17,
        rate in 0.05f64..1.0,
        seed in any::<u64>(),
    ) {
        let frame = (seed % t as u64) as usize;
        let m = frame_mask(t, n, n, frame, rate, &mut MaskRng::new(seed)).unwrap();
        let sites = (rate * (n * n) as f64).floor() as usize;
        prop_assert_eq!(m.popcount(), sites);
        for (idx, &bit) in m.mask().indexed_iter() {
            if idx.0 != frame {
                prop_assert_eq!(bit, 0);
            }
        }
    }

    /// Relative l2 is invariant under joint rescaling and scales linearly
    /// with the perturbation.
    #[test]
    fn relative_l2_scaling_laws(
        n in 2usize..7,
        scale in 0.01f64..100.0,
        eps in 1e-6f64..0.1,
    ) {
        let truth = Array4::from_shape_fn((2, n, n, 1), |(t, h, w, _)| {
            (t * n * n + h * n + w) as f64 + 1.0
        });
        let pred = truth.mapv(|v| v * (1.0 + eps));
        let base = relative_l2(&pred, &truth, None).unwrap();
        prop_assert!((base - eps).abs() < 1e-9);
        let scaled = relative_l2(
            &pred.mapv(|v| v * scale),
            &truth.mapv(|v| v * scale),
            None,
        ).unwrap();
        prop_assert!((scaled - base).abs() < 1e-9);
    }

    /// The masked metric agrees with the unmasked one under a full mask.
    #[test]
    fn full_mask_matches_unrestricted_metric(n in 2usize..7, eps in 1e-6f64..0.1) {
        let truth = Array4::from_shape_fn((2, n, n, 1), |(t, h, w, _)| {
            (t + h + w) as f64 * 0.3 + 1.0
        });
        let pred = truth.mapv(|v| v * (1.0 + eps));
        let select = Array3::<u8>::ones((2, n, n));
        let masked = relative_l2_masked(&pred, &truth, &select).unwrap();
        let plain = relative_l2(&pred, &truth, None).unwrap();
        prop_assert!((masked - plain).abs() < 1e-12);
    }
}
