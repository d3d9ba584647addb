use cellfree::nn::{
    forward, forward_batch, validate_architecture, Activation, ArchViolation, LayerSpec, Mode, NetParams,
    NetworkSpec, ParamLayout, HARD_THRESHOLD,
};
use cellfree::{seeded_rng, CTensor3, C64};
use proptest::prelude::*;
use rand::Rng;

/// Random architecture that keeps a `q × i` plane; strided layers get a
/// kernel whose shape-preserving padding is integral.
fn random_spec(q: usize, i: usize, m: usize, rng: &mut cellfree::Rng) -> NetworkSpec {
    let depth = rng.random_range(1..=4);
    let mut spec = NetworkSpec::uniform(depth, 1, 1, 1, m);
    for l in 0..depth {
        let out = if l + 1 == depth { 2 * m } else { rng.random_range(1..=5) };
        let act = if l + 1 == depth { Activation::Tanh } else { Activation::Relu };
        let stride = rng.random_range(1..=3);
        spec.layers[l] = if stride == 1 {
            LayerSpec::same(2 * rng.random_range(0..3) + 1, 2 * rng.random_range(0..3) + 1, out, act)
        } else {
            let mut kw = rng.random_range(1..=5);
            let mut kh = rng.random_range(1..=5);
            if (q * stride + kw - q - stride) % 2 == 1 {
                kw += 1;
            }
            if (i * stride + kh - i - stride) % 2 == 1 {
                kh += 1;
            }
            LayerSpec::strided(kw, kh, stride, q, i, out, act).unwrap()
        };
    }
    spec
}

fn random_channel(q: usize, i: usize, m: usize, rng: &mut cellfree::Rng) -> CTensor3 {
    CTensor3::from_fn(q, i, m, |_, _, _| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn validated_specs_preserve_the_plane(seed in any::<u64>(), q in 1usize..6, i in 1usize..6, m in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let spec = random_spec(q, i, m, &mut rng);
        prop_assert_eq!(validate_architecture(&spec, q, i, m), Ok(()));
        let params = NetParams::random(&spec, m, 0.5, &mut rng);
        let h = random_channel(q, i, m, &mut rng);
        let f = forward_batch(&[&h], &spec, &params, 1.0, Mode::Eval).unwrap();
        prop_assert_eq!(f.residual_outputs()[0].dims(), (q, i, 2 * m));
        prop_assert_eq!(f.beamformers[0].dims(), (q, i, m));
    }

    #[test]
    fn outputs_are_feasible_and_gated(seed in any::<u64>(), pmax in 0.01f64..5.0, scale in 0.1f64..3.0) {
        let mut rng = seeded_rng(seed);
        let spec = NetworkSpec::uniform(3, 3, 3, 4, 2);
        let params = NetParams::random(&spec, 2, scale, &mut rng);
        let h = random_channel(4, 4, 2, &mut rng);
        let (v, c) = forward(&h, &spec, &params, pmax).unwrap();
        for q in 0..4 {
            prop_assert!(v.ap_power(q) <= pmax + 1e-9);
            for i in 0..4 {
                let g = c.get(q, i);
                prop_assert!(g == 0.0 || g == 1.0);
                if g == 0.0 {
                    prop_assert!(v.block(q, i).iter().all(|z| z.re == 0.0 && z.im == 0.0));
                }
            }
        }
    }

    #[test]
    fn gate_saturates_away_from_threshold(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let spec = NetworkSpec::uniform(2, 3, 3, 4, 2);
        let params = NetParams::random(&spec, 2, 1.0, &mut rng);
        let h = random_channel(3, 3, 2, &mut rng);
        let f = forward_batch(&[&h], &spec, &params, 1.0, Mode::Train).unwrap();
        let soft = &f.clusters[0];
        let v_r = f.residual_outputs()[0];
        let t = &f.thresholds()[0];
        for q in 0..3 {
            for i in 0..3 {
                let pv = v_r.fibre(q, i).iter().sum::<f64>() / 4.0;
                if (pv - t.get(q, i)).abs() >= 0.3 {
                    let hard = if soft.get(q, i) >= HARD_THRESHOLD { 1.0 } else { 0.0 };
                    prop_assert!((soft.get(q, i) - hard).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn thresholds_increase_with_pooled_csi(seed in any::<u64>(), w in 0.01f64..3.0, b in -2.0f64..2.0) {
        let mut rng = seeded_rng(seed);
        let spec = NetworkSpec::uniform(1, 1, 1, 2, 1);
        let mut params = NetParams::random(&spec, 1, 1.0, &mut rng);
        let layout = ParamLayout::new(&spec, 1);
        params.values[layout.attention.weight.start] = w;
        params.values[layout.attention.bias.start] = b;
        let h = random_channel(4, 1, 1, &mut rng);
        let t = cellfree::nn::spatial_attention(&h, &spec, &params).unwrap();
        for p in 0..4 {
            for q in 0..4 {
                if h.get(p, 0, 0).norm() < h.get(q, 0, 0).norm() {
                    prop_assert!(t.get(p, 0) <= t.get(q, 0));
                }
            }
        }
    }
}

#[test]
fn invalid_specs_report_the_violation() {
    let (q, i, m) = (4, 4, 2);
    let base = NetworkSpec::uniform(3, 3, 3, 4, m);
    type Case = (NetworkSpec, fn(&ArchViolation) -> bool);
    let mut cases: Vec<Case> = Vec::new();
    let mut s = base.clone();
    s.layers.clear();
    cases.push((s, |v| *v == ArchViolation::EmptyNetwork));
    let mut s = base.clone();
    s.layers[1] = LayerSpec { padding_w: 1, padding_h: 1, ..LayerSpec::same(4, 3, 4, Activation::Relu) };
    cases.push((s, |v| matches!(v, ArchViolation::NonIntegralPadding { layer: 1, .. })));
    let mut s = base.clone();
    s.layers[0].padding_h = 2;
    cases.push((s, |v| matches!(v, ArchViolation::PaddingMismatch { layer: 0, expected: 1, found: 2, .. })));
    let mut s = base.clone();
    s.layers[2].out_channels = 5;
    cases.push((s, |v| *v == ArchViolation::OutputChannels { expected: 4, found: 5 }));
    let mut s = base.clone();
    s.layers[1].out_channels = 0;
    cases.push((s, |v| *v == ArchViolation::ZeroChannels { layer: 1 }));
    let mut s = base.clone();
    s.layers[0].stride_w = 0;
    cases.push((s, |v| matches!(v, ArchViolation::ZeroStride { layer: 0, .. })));
    let mut s = base.clone();
    s.identity_map.out_channels = 3;
    cases.push((s, |v| *v == ArchViolation::IdentityMap));
    let mut s = base.clone();
    s.attention.kernel_w = 3;
    cases.push((s, |v| *v == ArchViolation::Attention));
    let mut s = base.clone();
    s.amplification = 0.0;
    cases.push((s, |v| *v == ArchViolation::NonPositiveAmplification));
    for (spec, check) in cases {
        let err = validate_architecture(&spec, q, i, m).unwrap_err();
        assert!(check(&err), "{err:?}");
        let params = NetParams::zeros(&base, m);
        assert!(forward(&CTensor3::zeros(q, i, m), &spec, &params, 1.0).is_err());
    }
}
