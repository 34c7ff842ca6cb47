//! Monte-Carlo checks of finite networks against the closed-form limits.

use pruned_ntk::{
    backward_pass, build_network, check_norm_preservation, forward_pass, kernel_recursion,
    ntk_monte_carlo, InputPoint, NetworkConfig, RandomStream, ResampleMode,
};

fn pair(seed: u64, dim: usize) -> (InputPoint, InputPoint) {
    let s = RandomStream::new(seed, 0);
    (InputPoint::random_unit(s, 0, dim), InputPoint::random_unit(s, 1, dim))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn wide_unpruned_network_matches_limit() {
    let (x, y) = pair(21, 8);
    let limit = kernel_recursion(&x, &y, 2).unwrap().theta_inf;
    let cfg = NetworkConfig::uniform(8, 2, 2048, 1.0).with_seed(3);
    let agg = ntk_monte_carlo(&cfg, &x, &y, 16, limit).unwrap();
    let se = agg.sample_std / 4.0;
    assert!((agg.mean - limit).abs() < 4.0 * se, "{} vs {limit} (se {se})", agg.mean);
}

#[test]
fn pruned_forward_and_backward_inner_products_scale_with_alpha() {
    let (x, y) = pair(5, 8);
    let (alpha, depth) = (0.5, 3);
    let kernel = kernel_recursion(&x, &y, depth).unwrap();
    let cfg = NetworkConfig::uniform(8, depth, 2048, alpha);
    let mut fwd = vec![Vec::new(); depth + 1];
    let mut bwd = vec![Vec::new(); depth + 1];
    for k in 0..16 {
        let state = build_network(&cfg, RandomStream::new(8, k)).unwrap();
        let (fx, fy) = (forward_pass(&state, &x).unwrap(), forward_pass(&state, &y).unwrap());
        let (bx, by) = (backward_pass(&state, &fx).unwrap(), backward_pass(&state, &fy).unwrap());
        for h in 1..=depth {
            fwd[h].push(fx.acts[h].dot(&fy.acts[h]));
            bwd[h].push(bx.at(h).dot(by.at(h)));
        }
    }
    for h in 1..=depth {
        let (m, se) = mean_se(&fwd[h]);
        let want = kernel.pruned_sigma(h, alpha);
        assert!((m - want).abs() < 4.0 * se, "forward h={h}: {m} vs {want} (se {se})");
        let (m, se) = mean_se(&bwd[h]);
        let want = kernel.pruned_backward_product(h, alpha);
        assert!((m - want).abs() < 4.0 * se, "backward h={h}: {m} vs {want} (se {se})");
    }
}

/// With rescaled masks `E ||g^(h)||^2 = ||x||^2` at every width; the spread
/// around it shrinks like `1/sqrt(d)`.
#[test]
fn rescaled_activation_norms_concentrate() {
    let norms = |width| -> Vec<Vec<f64>> {
        let cfg = NetworkConfig::uniform(16, 3, width, 0.5).with_rescale(true);
        (0..40)
            .map(|seed| {
                let state = build_network(&cfg, RandomStream::new(seed, 0)).unwrap();
                let x = InputPoint::random_unit(RandomStream::new(seed, 1), 0, 16);
                let t = forward_pass(&state, &x).unwrap();
                (1..=3).map(|h| t.acts[h].dot(&t.acts[h])).collect()
            })
            .collect()
    };
    let (narrow, wide) = (norms(256), norms(2048));
    for h in 0..3 {
        let col = |v: &Vec<Vec<f64>>| v.iter().map(|r| r[h]).collect::<Vec<_>>();
        let (mn, sn) = mean_se(&col(&narrow));
        let (mw, sw) = mean_se(&col(&wide));
        assert!((mn - 1.0).abs() < 4.0 * sn, "layer {}: {mn} (se {sn})", h + 1);
        assert!((mw - 1.0).abs() < 4.0 * sw, "layer {}: {mw} (se {sw})", h + 1);
        assert!(sw < sn / 2.0, "layer {}: spread {sw} at 2048 vs {sn} at 256", h + 1);
    }
}

#[test]
fn monte_carlo_does_not_depend_on_thread_count() {
    let (x, y) = pair(2, 6);
    let cfg = NetworkConfig::uniform(6, 2, 64, 0.6).with_rescale(true).with_seed(4);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ntk_monte_carlo(&cfg, &x, &y, 12, f64::NAN).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.samples, b.samples);
}

#[test]
fn pseudo_network_norm_is_preserved_through_each_layer() {
    let cfg = NetworkConfig::uniform(16, 4, 512, 0.5).with_rescale(true);
    let state = build_network(&cfg, RandomStream::new(12, 0)).unwrap();
    let host = forward_pass(&state, &InputPoint::random_unit(RandomStream::new(12, 1), 0, 16)).unwrap();
    for mode in [ResampleMode::WeightsAndMasks, ResampleMode::WeightsOnly] {
        let rep = check_norm_preservation(&state, &host, 2, 17, 200, RandomStream::new(12, 50), mode).unwrap();
        assert_eq!(rep.layer_means.len(), 2);
        for m in &rep.layer_means {
            assert!((m / rep.rhs - 1.0).abs() < 0.1, "{mode:?}: {m} vs {}", rep.rhs);
        }
        assert_eq!(rep.lhs, rep.layer_means[1]);
    }
}
