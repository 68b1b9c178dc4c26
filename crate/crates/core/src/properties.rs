//! Randomized invariants over the public API.

use crate::blocks::{centralize, decentralize, patch, unpatch, PatchLayout};
use crate::data::{batch_order, Dataset, NormStats, SeriesWindows, SplitSpec, WindowSource};
use crate::fourier::{basis_expand, dft_complex, fuse, reconstruct, rdft, BasisMatrices};
use crate::graph::Graph;
use crate::models::{ForecastModel, ModelSpec};
use crate::tensor::Tensor;
use proptest::prelude::*;

fn even_len() -> impl Strategy<Value = usize> {
    (2usize..=40).prop_map(|h| 2 * h)
}

fn series(t: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn features_sum_back_to_the_window((t, x) in even_len().prop_flat_map(|t| (Just(t), series(t)))) {
        let g = basis_expand(&rdft(&x).unwrap(), &BasisMatrices::build(t, 0).unwrap(), false).unwrap();
        for (a, b) in reconstruct(&g).iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn real_input_spectrum_is_hermitian((t, x) in even_len().prop_flat_map(|t| (Just(t), series(t)))) {
        let h = dft_complex(&x);
        let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        for k in 1..t {
            prop_assert!((h[t - k] - h[k].conj()).norm() < 1e-12 * scale);
        }
        prop_assert!(h[0].im.abs() < 1e-12 * scale);
    }

    #[test]
    fn fused_pair_recovers_components(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        let (r, p) = fuse(a, b);
        prop_assert!(r >= 0.0);
        prop_assert!(p > -std::f64::consts::PI && p <= std::f64::consts::PI);
        prop_assert!((r * p.cos() - a).abs() < 1e-9);
        prop_assert!((r * p.sin() - b).abs() < 1e-9);
    }

    #[test]
    fn matmul_agrees_with_nalgebra(m in 1usize..12, k in 1usize..12, n in 1usize..12, seed in any::<u64>()) {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let a = Tensor::from_fn(&[m, k], |_| next());
        let b = Tensor::from_fn(&[k, n], |_| next());
        let c = a.matmul(&b).unwrap();
        let na = nalgebra::DMatrix::from_row_slice(m, k, a.data());
        let nb = nalgebra::DMatrix::from_row_slice(k, n, b.data());
        let nc = na * nb;
        for i in 0..m {
            for j in 0..n {
                prop_assert!((c.get(&[i, j]) - nc[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn window_count(len in 8usize..400, t in 1usize..64, l in 1usize..64) {
        prop_assume!(t + l <= len);
        let ds = Dataset::from_channels("p", vec!["a".into()], vec![(0..len).map(|i| i as f64).collect()]).unwrap();
        let w = SeriesWindows::new(&ds, 0..len, t, l).unwrap();
        prop_assert_eq!(w.len(), len - t - l + 1);
        let last = w.batch(&[w.len() - 1]);
        prop_assert_eq!(*last.y.data().last().unwrap(), (len - 1) as f64);
    }

    #[test]
    fn zscore_roundtrip(cols in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 30), 1..4)) {
        prop_assume!(cols.iter().all(|c| c.iter().any(|v| (v - c[0]).abs() > 1e-3)));
        let names = (0..cols.len()).map(|i| format!("c{i}")).collect();
        let ds = Dataset::from_channels("z", names, cols).unwrap();
        let st = NormStats::fit(&ds, 0..20).unwrap();
        let back = st.invert(&st.apply(&ds).unwrap()).unwrap();
        for c in 0..ds.channels() {
            for (a, b) in ds.channel(c).iter().zip(back.channel(c)) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn splits_do_not_leak(n in 200usize..3000, tr in 0.3f64..0.8, va in 0.05f64..0.15, t in 2usize..40, l in 1usize..20) {
        let spec = SplitSpec::Ratio { train: tr, val: va, test: 1.0 - tr - va };
        let Ok(s) = spec.split(n, t, l) else { return Ok(()) };
        let (b1, b2) = s.boundaries;
        // every training target lies before the first validation step
        prop_assert!(s.train.end <= b1);
        // the first validation and test targets are the first steps of their periods
        prop_assert_eq!(s.val.start + t, b1);
        prop_assert_eq!(s.test.start + t, b2);
        prop_assert!(s.val.end <= b2);
        prop_assert!(s.test.end <= n);
    }

    #[test]
    fn batches_partition_the_windows(n in 0usize..500, bs in 1usize..64, seed in any::<u64>()) {
        let mut all: Vec<usize> = batch_order(n, bs, Some(seed)).into_iter().flatten().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn patch_roundtrip(p in 1usize..5, per in 1usize..5, cols in 1usize..6, b in 1usize..3) {
        let t = p * per;
        let g = Tensor::from_fn(&[b, t, cols], |i| i as f64 * 0.5 - 3.0);
        let layout = PatchLayout::new(t, cols, p).unwrap();
        let q = patch(&g, layout).unwrap();
        prop_assert_eq!(q.shape(), &[b, p, per * cols][..]);
        prop_assert_eq!(unpatch(&q, layout).unwrap(), g);
    }

    #[test]
    fn centralize_roundtrip(x in prop::collection::vec(-50.0f64..50.0, 24), gamma in 0.2f64..3.0, beta in -2.0f64..2.0) {
        let mut g = Graph::new();
        let xv = g.constant(Tensor::new(&[2, 3, 4], x.clone()).unwrap());
        let ga = g.constant(Tensor::full(&[1], gamma));
        let be = g.constant(Tensor::full(&[1], beta));
        for affine in [None, Some((ga, be))] {
            let (y, st) = centralize(&mut g, xv, affine).unwrap();
            let z = decentralize(&mut g, y, &st, affine).unwrap();
            for (a, b) in g.value(z).data().iter().zip(&x) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn forecasts_follow_shift_and_scale(seed in 0u64..1000, a in 0.1f64..20.0, b in -100.0f64..100.0) {
        let spec = ModelSpec::linear(16, 8, 2);
        let m = ForecastModel::init(&spec, seed).unwrap();
        let x = Tensor::from_fn(&[3, 2, 16], |i| ((i * 7919 + seed as usize) % 97) as f64 / 10.0 + (i as f64 * 0.7).sin());
        let y = m.forward(&x).unwrap();
        let y2 = m.forward(&x.map(|v| a * v + b)).unwrap();
        for (p, q) in y.data().iter().zip(y2.data()) {
            prop_assert!((a * p + b - q).abs() < 1e-9 * (1.0 + q.abs()), "{} vs {q}", a * p + b);
        }
    }
}
