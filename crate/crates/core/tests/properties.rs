use proptest::prelude::*;
use pruned_ntk::{
    build_network, kernel_recursion, ntk_pair, relu_dual, toggle_rescale, Cov2, InputPoint,
    NetworkConfig, RandomStream,
};

fn cov() -> impl Strategy<Value = Cov2> {
    (1e-3f64..10.0, 1e-3f64..10.0, -1.0f64..=1.0).prop_map(|(a, b, rho)| Cov2::new(a, rho * (a * b).sqrt(), b))
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, dim).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|d| (vector(d), vector(d)))
}

proptest! {
    #[test]
    fn dual_moments_stay_in_range(c in cov()) {
        let m = relu_dual(c).unwrap();
        let norm = (c.xx * c.yy).sqrt();
        prop_assert!((0.0..=1.0 + 1e-15).contains(&m.dot_pair));
        prop_assert!(m.pair >= -1e-15 && m.pair <= norm * (1.0 + 1e-12));
        if c.xy >= 0.0 {
            prop_assert!(m.dot_pair >= 0.5 - 1e-15);
            // correlated inputs keep at least the linear part of the covariance
            prop_assert!(m.pair >= c.xy * (1.0 - 1e-12));
        }
        let swapped = relu_dual(Cov2::new(c.yy, c.xy, c.xx)).unwrap();
        prop_assert!((swapped.pair - m.pair).abs() <= 1e-12 * norm);
        prop_assert_eq!(swapped.dot_pair, m.dot_pair);
    }

    #[test]
    fn limit_kernel_is_symmetric_and_bounded((x, y) in pair(), depth in 1usize..6) {
        let (x, y) = (InputPoint::new(x).unwrap(), InputPoint::new(y).unwrap());
        let xy = kernel_recursion(&x, &y, depth).unwrap().theta_inf;
        let yx = kernel_recursion(&y, &x, depth).unwrap().theta_inf;
        let xx = kernel_recursion(&x, &x, depth).unwrap().theta_inf;
        let yy = kernel_recursion(&y, &y, depth).unwrap().theta_inf;
        prop_assert!((xy - yx).abs() <= 1e-12 * xx.max(yy));
        prop_assert!(xy.abs() <= (xx * yy).sqrt() * (1.0 + 1e-12));
        let n2 = x.dot(&x);
        prop_assert!((xx - (depth + 1) as f64 * n2).abs() <= 1e-12 * xx);
    }

    #[test]
    fn limit_kernel_is_positively_homogeneous((x, y) in pair(), c in 0.1f64..10.0, depth in 1usize..5) {
        let xs = InputPoint::new(x.iter().map(|v| v * c).collect()).unwrap();
        let (x, y) = (InputPoint::new(x).unwrap(), InputPoint::new(y).unwrap());
        let base = kernel_recursion(&x, &y, depth).unwrap().theta_inf;
        let scaled = kernel_recursion(&xs, &y, depth).unwrap().theta_inf;
        let bound = kernel_recursion(&xs, &xs, depth).unwrap().theta_inf + kernel_recursion(&y, &y, depth).unwrap().theta_inf;
        // arccos has a square-root singularity at ±1, so rounding in the
        // cosine of (anti)parallel inputs costs half the significant digits
        let cos = x.dot(&y) / (x.dot(&x) * y.dot(&y)).sqrt();
        let tol = if 1.0 - cos.abs() < 1e-6 { 1e-7 } else { 1e-11 };
        prop_assert!((scaled - c * base).abs() <= tol * bound);
    }

    #[test]
    fn empirical_kernel_symmetry_and_scaling(seed in 0u64..1000, alpha in 0.2f64..=1.0, c in 0.1f64..5.0) {
        let cfg = NetworkConfig::new(4, vec![12, 10], alpha).with_rescale(true);
        let state = build_network(&cfg, RandomStream::new(seed, 0)).unwrap();
        let x = InputPoint::random_unit(RandomStream::new(seed, 1), 0, 4);
        let y = InputPoint::random_unit(RandomStream::new(seed, 1), 1, 4);
        let xy = ntk_pair(&state, &x, &y).unwrap().total;
        prop_assert_eq!(xy, ntk_pair(&state, &y, &x).unwrap().total);
        prop_assert!(ntk_pair(&state, &x, &x).unwrap().total >= 0.0);
        let xc = InputPoint::new(x.as_slice().iter().map(|v| v * c).collect()).unwrap();
        let scaled = ntk_pair(&state, &xc, &y).unwrap().total;
        let scale = ntk_pair(&state, &xc, &xc).unwrap().total + ntk_pair(&state, &y, &y).unwrap().total;
        prop_assert!((scaled - c * xy).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn unrescaled_kernel_is_alpha_power_of_rescaled(seed in 0u64..1000, alpha in 0.1f64..=1.0, depth in 1usize..4) {
        let cfg = NetworkConfig::uniform(3, depth, 8, alpha);
        let off = build_network(&cfg, RandomStream::new(seed, 0)).unwrap();
        let on = toggle_rescale(&off, true);
        prop_assert_eq!(&toggle_rescale(&on, false), &off);
        let x = InputPoint::random_unit(RandomStream::new(seed, 1), 0, 3);
        let y = InputPoint::random_unit(RandomStream::new(seed, 1), 1, 3);
        let a = ntk_pair(&off, &x, &y).unwrap();
        let b = ntk_pair(&on, &x, &y).unwrap();
        let factor = alpha.powi(depth as i32);
        for (u, v) in a.per_layer.iter().zip(&b.per_layer) {
            prop_assert!((u - factor * v).abs() <= 1e-12 * u.abs().max(1e-300));
        }
    }

    #[test]
    fn mask_entries_are_zero_or_scale(seed in 0u64..1000, alpha in 0.05f64..=1.0, rescale: bool) {
        let cfg = NetworkConfig::uniform(3, 3, 6, alpha).with_rescale(rescale);
        let state = build_network(&cfg, RandomStream::new(seed, 0)).unwrap();
        for h in 1..=4 {
            let m = state.mask(h).unwrap();
            let expect = if h >= 2 && rescale { 1.0 / alpha.sqrt() } else { 1.0 };
            prop_assert_eq!(m.scale(), expect);
            for v in m.to_dense().iter() {
                prop_assert!(*v == 0.0 || *v == expect);
            }
        }
    }
}
