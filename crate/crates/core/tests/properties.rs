//! Property tests for the augmentation, schedule, and format invariants.

use proptest::prelude::*;

use qre_core::data::{decode_qrds, encode_qrds, Dataset};
use qre_core::distortion::{apply_blur, apply_noise, gaussian_kernel_1d};
use qre_core::ensemble::top_k;
use qre_core::image::{Image, LabelDistribution};
use qre_core::mixup::{mix_pair, Sample};
use qre_core::rng::RngStream;
use qre_core::schedule::{lr_at, snapshot_points, SchedulePlan};

fn image_strategy(max_side: usize) -> impl Strategy<Value = Image> {
    (1usize..=max_side, 1usize..=max_side, 1usize..=3).prop_flat_map(|(h, w, c)| {
        proptest::collection::vec(0.0f64..=1.0, h * w * c)
            .prop_map(move |data| Image::new(h, w, c, data).unwrap())
    })
}

fn distribution_strategy(k: usize) -> impl Strategy<Value = LabelDistribution> {
    proptest::collection::vec(0.001f64..1.0, k).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        LabelDistribution::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mix_pair_is_convex_and_normalized(
        base in image_strategy(6),
        lambda in 0.0f64..=1.0,
        seed in 0u64..1000,
        class_a in 0usize..4,
        class_b in 0usize..4,
    ) {
        let mut stream = RngStream::from_seed(seed);
        let other_data: Vec<f64> =
            (0..base.data().len()).map(|_| stream.next_f64()).collect();
        let other = Image::new(base.height(), base.width(), base.channels(), other_data).unwrap();
        let clean = Sample { image: base.clone(), label: LabelDistribution::one_hot(class_a, 4).unwrap() };
        let noisy = Sample { image: other.clone(), label: LabelDistribution::one_hot(class_b, 4).unwrap() };
        let mixed = mix_pair(&clean, &noisy, lambda).unwrap();
        for ((m, a), b) in mixed.image.data().iter().zip(base.data()).zip(other.data()) {
            prop_assert!(*m >= a.min(*b) && *m <= a.max(*b));
        }
        let sum: f64 = mixed.label.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        // labels stay inside the member interval coordinatewise
        for ((m, a), b) in mixed.label.probs().iter()
            .zip(clean.label.probs())
            .zip(noisy.label.probs())
        {
            prop_assert!(*m >= a.min(*b) && *m <= a.max(*b));
        }
    }

    #[test]
    fn blur_stays_in_range_and_preserves_flat_fields(
        img in image_strategy(12),
        k_idx in 0usize..8,
        v in 0.0f64..=1.0,
    ) {
        let k = 2 * k_idx + 1;
        let out = apply_blur(&img, k).unwrap();
        prop_assert!(out.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        let flat = Image::filled(img.height(), img.width(), img.channels(), v).unwrap();
        let blurred = apply_blur(&flat, k).unwrap();
        prop_assert!(blurred.bits_eq(&flat));
    }

    #[test]
    fn kernels_are_normalized_partitions(k_idx in 0usize..16) {
        let k = 2 * k_idx + 1;
        let w = gaussian_kernel_1d(k).unwrap();
        let sum: f64 = w.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn noise_output_always_in_unit_interval(
        img in image_strategy(8),
        sigma in 0.0f64..=120.0,
        seed in 0u64..1000,
    ) {
        let mut stream = RngStream::from_seed(seed);
        let out = apply_noise(&img, sigma, &mut stream).unwrap();
        prop_assert!(out.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn schedule_respects_bounds_and_period(
        alpha_milli in 1u32..1000,
        cycles in 1usize..6,
        period in 2usize..200,
    ) {
        let alpha0 = alpha_milli as f64 / 1000.0;
        let plan = SchedulePlan::new(alpha0, cycles * period, cycles).unwrap();
        let points = snapshot_points(&plan);
        prop_assert_eq!(points.len(), cycles);
        prop_assert_eq!(*points.last().unwrap(), plan.total_iters);
        for t in 1..=plan.total_iters {
            let lr = lr_at(t, &plan).unwrap();
            prop_assert!(lr > 0.0 && lr <= alpha0);
            // period T/M: same in-cycle offset, same rate
            let wrapped = (t - 1) % plan.period() + 1;
            prop_assert_eq!(lr.to_bits(), lr_at(wrapped, &plan).unwrap().to_bits());
        }
        // alpha0 exactly at each cycle start
        for m in 0..cycles {
            prop_assert_eq!(lr_at(m * period + 1, &plan).unwrap(), alpha0);
        }
    }

    #[test]
    fn top_k_is_sorted_prefix_of_full_ranking(dist in distribution_strategy(6), k in 1usize..=6) {
        let full = top_k(&dist, 6).unwrap();
        let prefix = top_k(&dist, k).unwrap();
        prop_assert_eq!(&full[..k], &prefix[..]);
        // descending probabilities with index tie-break
        for pair in prefix.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pa = dist.probs()[a];
            let pb = dist.probs()[b];
            prop_assert!(pa > pb || (pa == pb && a < b));
        }
    }

    #[test]
    fn qrds_quantization_bound_holds(
        n in 1usize..6,
        h in 1usize..6,
        w in 1usize..6,
        seed in 0u64..500,
    ) {
        let mut stream = RngStream::from_seed(seed);
        let images: Vec<Image> = (0..n)
            .map(|_| {
                Image::new(h, w, 3, (0..h * w * 3).map(|_| stream.next_f64()).collect()).unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ds = Dataset::new(images, labels, vec!["a".into(), "b".into()]).unwrap();
        let decoded = decode_qrds(&encode_qrds(&ds).unwrap()).unwrap();
        prop_assert_eq!(decoded.labels(), ds.labels());
        for (x, y) in decoded.images().iter().zip(ds.images()) {
            for (a, b) in x.data().iter().zip(y.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
        }
    }
}
