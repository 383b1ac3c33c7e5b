//! Property tests for the structural invariants: Gram symmetry/PSD across
//! kernel kinds, the strict decomposition of the directional mask, mask
//! idempotence and nesting, and the streaming/closed-form equivalence on
//! random data.

use ndarray::Array2;
use okreg::kernel::{directional_mask, gram_self, GramBundle, KernelSpec};
use proptest::prelude::*;

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn kernel_strategy() -> impl Strategy<Value = (KernelSpec, usize)> {
    // (kernel, input_dim)
    prop_oneof![
        (0.05f64..4.0).prop_map(|bw| (KernelSpec::rbf(bw).unwrap(), 2)),
        (2usize..24, any::<u64>()).prop_map(|(dj, seed)| {
            let mut v = seed;
            let mut next = move || {
                v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((v >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            let j = Array2::from_shape_fn((dj, 2), |_| next());
            (
                KernelSpec::random_feature_tanh(j, 1.0 / (dj as f64).sqrt()),
                2,
            )
        }),
        Just((KernelSpec::linear(2), 2)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_psd(
        (kernel, d) in kernel_strategy(),
        n in 1usize..12,
        seed in any::<u64>(),
    ) {
        let mut v = seed;
        let mut next = move || {
            v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((v >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = Array2::from_shape_fn((d, n), |_| next());
        let k = gram_self(&kernel, x.view()).unwrap();
        // Symmetry is exact; PSD within tolerance is certified by the bundle.
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        prop_assert!(GramBundle::new(k, 1).is_ok());
    }

    #[test]
    fn mask_strict_decomposition(n in 1usize..16, seed in any::<u64>()) {
        let mut v = seed;
        let mut next = move || {
            v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((v >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let half = Array2::from_shape_fn((n, n), |_| next());
        let k = &half + &half.t();
        let u = directional_mask(k.view(), 1).unwrap();
        let mut rebuilt = &u + &u.t();
        for i in 0..n {
            rebuilt[(i, i)] += k[(i, i)];
        }
        prop_assert!(max_abs(&(&rebuilt - &k)) == 0.0);
    }

    #[test]
    fn mask_idempotent(n in 1usize..16, b in 1usize..6, seed in any::<u64>()) {
        prop_assume!(b <= n);
        let mut v = seed;
        let mut next = move || {
            v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((v >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let k = Array2::from_shape_fn((n, n), |_| next());
        let once = directional_mask(k.view(), b).unwrap();
        let twice = directional_mask(once.view(), b).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn mask_nesting(n in 2usize..16, b in 1usize..4, mult in 2usize..4, seed in any::<u64>()) {
        let bp = b * mult;
        prop_assume!(bp <= n);
        let mut v = seed;
        let mut next = move || {
            v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((v >> 11) as f64 / (1u64 << 53) as f64) + 0.5
        };
        let k = Array2::from_shape_fn((n, n), |_| next());
        let fine = directional_mask(k.view(), b).unwrap();
        let coarse = directional_mask(k.view(), bp).unwrap();
        for i in 0..n {
            for j in 0..n {
                if coarse[(i, j)] != 0.0 {
                    prop_assert!(fine[(i, j)] != 0.0, "coarse nonzero at ({},{}) not in fine", i, j);
                }
            }
        }
    }
}
