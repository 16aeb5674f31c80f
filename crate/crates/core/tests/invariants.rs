use gapbench_core::adversary::{fit_rate, CurveRow, ErrorCurve};
use gapbench_core::bump::make_g;
use gapbench_core::protocol::{parse_client_line, ClientMessage};
use gapbench_core::relu::{affine_precompose, compose, homogeneous_rescale, min_network, Layer, Matrix};
use gapbench_core::spaces::{theoretical_rate, DepthGrowth, SpaceParams};
use gapbench_core::Network64;
use proptest::prelude::*;

/// Layer widths and a flat pool of weights drawn from `[-1, 1]`.
fn network() -> impl Strategy<Value = Network64> {
    (1usize..4, proptest::collection::vec(1usize..5, 0..4)).prop_flat_map(|(d, hidden)| {
        let mut widths = vec![d];
        widths.extend(hidden);
        widths.push(1);
        let count: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        proptest::collection::vec(-1.0..1.0f64, count).prop_map(move |pool| {
            let mut it = pool.into_iter();
            let layers = widths
                .windows(2)
                .map(|w| {
                    let m = Matrix::from_vec(w[1], w[0], it.by_ref().take(w[0] * w[1]).collect());
                    Layer::new(m, it.by_ref().take(w[1]).collect())
                })
                .collect();
            Network64::new(layers).unwrap()
        })
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0..2.0f64, d)
}

fn net_and_point() -> impl Strategy<Value = (Network64, Vec<f64>)> {
    network().prop_flat_map(|net| {
        let d = net.input_dim();
        (Just(net), point(d))
    })
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn rescaling_divides_the_realization((net, x) in net_and_point(), r in 0.01..100.0f64) {
        let scaled = homogeneous_rescale(&net, r).unwrap();
        let a = scaled.evaluate(&x).unwrap()[0] * r;
        let b = net.evaluate(&x).unwrap()[0];
        prop_assert!(rel_close(a, b), "{} vs {}", a, b);
    }

    #[test]
    fn precompose_shifts_and_scales((net, x) in net_and_point(), c in -2.0..2.0f64, b in -1.0..1.0f64) {
        let d = net.input_dim();
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            m.set(i, i, c);
        }
        let shift = vec![b; d];
        let pre = affine_precompose(&net, &m, &shift).unwrap();
        let moved: Vec<f64> = x.iter().map(|v| c * v + b).collect();
        prop_assert!(rel_close(pre.evaluate(&x).unwrap()[0], net.evaluate(&moved).unwrap()[0]));
    }

    #[test]
    fn compose_inserts_one_rectifier((inner, x) in net_and_point(), outer in network()) {
        prop_assume!(outer.input_dim() == 1);
        let composed = compose(&outer, &inner).unwrap();
        prop_assert_eq!(composed.depth(), outer.depth() + inner.depth());
        let hidden = inner.evaluate(&x).unwrap()[0].max(0.0);
        prop_assert!(rel_close(composed.evaluate(&x).unwrap()[0], outer.evaluate(&[hidden]).unwrap()[0]));
    }

    #[test]
    fn compaction_and_json_preserve_the_realization((net, x) in net_and_point()) {
        let y = net.evaluate(&x).unwrap()[0];
        prop_assert!(rel_close(net.compacted().evaluate(&x).unwrap()[0], y));
        let back = Network64::from_json(&net.to_json()).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn min_network_is_the_minimum(v in proptest::collection::vec(-10.0..10.0f64, 1..20)) {
        let got = min_network::<f64>(v.len()).unwrap().evaluate(&v).unwrap()[0];
        let want = v.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(rel_close(got, want), "{} vs {}", got, want);
    }

    #[test]
    fn bump_support_and_range_are_exact(
        d in 1usize..3,
        k in 2u32..6,
        y in proptest::collection::vec(0.0..1.0f64, 2),
        x in proptest::collection::vec(-0.5..1.5f64, 2),
    ) {
        let m = f64::from(1u32 << k);
        let params = SpaceParams::new(2.0, 2.0, d, DepthGrowth::constant(3));
        let g = make_g(&params, m, &y[..d], 1.0).unwrap();
        let amp = g.evaluate(&y[..d]).unwrap()[0];
        let v = g.evaluate(&x[..d]).unwrap()[0];
        let inside = x.iter().zip(&y).take(d).all(|(a, b)| (a - b).abs() < 1.0 / m);
        if inside {
            prop_assert!((0.0..=amp).contains(&v));
        } else {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn exact_power_laws_are_recovered(beta in 0.1..2.0f64, c in 0.01..100.0f64) {
        let mut curve = ErrorCurve::new();
        for k in 4..10 {
            let n = 1usize << k;
            curve.push(CurveRow::from_errors(n, 2.0, vec![c * (n as f64).powf(-beta); 30])).unwrap();
        }
        let fit = fit_rate(&curve).unwrap();
        prop_assert!((fit.beta_hat - beta).abs() < 1e-9);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rate_bound_is_monotone(alpha in 0.1..5.0f64, p in 1.0..8.0f64, d in 1usize..6, ell in 3u64..12) {
        let rate = |a: f64, p: f64, d: usize, l: u64| {
            theoretical_rate(&SpaceParams::new(a, p, d, DepthGrowth::constant(l))).unwrap()
        };
        let base = rate(alpha, p, d, ell);
        prop_assert!(rate(alpha * 1.5, p, d, ell) > base);
        prop_assert!(rate(alpha, p * 1.5, d, ell) < base);
        prop_assert!(rate(alpha, p, d + 1, ell) < base);
        prop_assert!(rate(alpha, p, d, ell + 2) < base);
        prop_assert!(base > 1.0 / p && base <= 1.0 / p + 1.0 / d as f64);
    }

    #[test]
    fn client_lines_round_trip(points in proptest::collection::vec(proptest::collection::vec(0.0..=1.0f64, 3), 0..10)) {
        let msg = ClientMessage::Points { points };
        prop_assert_eq!(parse_client_line(&msg.to_line()).unwrap(), msg);
    }
}
