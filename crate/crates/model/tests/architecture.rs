mod common;

use common::*;
use hdrtv_model::*;
use hdrtv_tensor::{conv2d, offset_channels, ConvSpec, Tensor};
use proptest::prelude::*;

#[test]
fn ablation_presets_are_cumulative() {
    let m0 = ModelConfig::preset("M0").unwrap();
    assert_eq!(m0.toggles, Toggles::default());
    assert_eq!(m0.t, 0);
    let m7 = ModelConfig::preset("M7").unwrap();
    assert_eq!(ModelConfig { preset: "full".into(), ..m7 }, ModelConfig::preset("full").unwrap());
    let order: Vec<fn(&Toggles) -> bool> =
        vec![|g| g.cfm, |g| g.lkrb_parallel, |g| g.tfm, |g| g.sfm, |g| g.align, |g| g.lkqe, |g| g.dynamic_offset];
    for k in 1..=7 {
        let g = ModelConfig::preset(&format!("M{k}")).unwrap().toggles;
        for (j, on) in order.iter().enumerate() {
            assert_eq!(on(&g), j < k, "M{k} component {j}");
        }
    }
    let mres = ModelConfig::preset("mresnet").unwrap();
    assert_eq!((mres.t, mres.toggles), (1, Toggles::default()));
}

#[test]
fn preset_errors() {
    let err = ModelConfig::preset("M8").unwrap_err().to_string();
    for name in PRESETS {
        assert!(err.contains(name), "{err}");
    }
    let bad = ModelConfig { toggles: Toggles { align: false, ..Toggles::ALL }, ..ModelConfig::default() };
    assert!(matches!(DslNet::new(bad, 0), Err(ModelError::Config(_))));
    let bad = ModelConfig { deform_groups: 2, ..ModelConfig::default() };
    assert!(bad.validate().is_err());
}

/// Layer list written out by hand: (in, out, k, groups, bias).
fn layer_oracle(cfg: &ModelConfig) -> usize {
    let (c, co, cc, g) = (cfg.c_feat, cfg.c_offset, cfg.c_cond, cfg.toggles);
    let cin = 3 * (2 * cfg.t + 1);
    let mut layers: Vec<(usize, usize, usize, usize, bool)> = vec![(cin, c, 3, 1, true)];
    if g.align {
        layers.push((cin, co, 3, 1, true));
        layers.push((co, co, 17, co, true));
        if g.dynamic_offset {
            let hidden = (co / 4).max(4);
            // candidate kernels: dyn_k depthwise 7×7 banks, no bias
            layers.extend((0..cfg.dyn_k).map(|_| (co, co, 7, co, false)));
            layers.push((co, hidden, 1, 1, true));
            layers.push((hidden, cfg.dyn_k, 1, 1, true));
        } else {
            layers.push((co, co, 7, co, true));
        }
        layers.push((co, co, 17, co, true));
        layers.push((co, co, 4, 1, true));
        layers.push((co, 18 * cfg.deform_groups, 1, 1, true));
    }
    if g.tfm || g.cfm || g.sfm {
        layers.push((3, cc, 1, 1, true));
        layers.extend((0..3).map(|_| (cc, cc, 1, 1, true)));
    }
    if g.tfm {
        layers.push((cc * (2 * cfg.t + 1), cc, 1, 1, true));
        layers.push((cc, 2 * c, 1, 1, true));
    }
    if g.cfm {
        layers.push((cc, cc, 1, 1, true));
        layers.push((cc, 2 * c, 1, 1, true));
    }
    if g.sfm {
        layers.push((cc, 2 * c, 1, 1, true));
    }
    layers.extend((0..4).map(|_| (c, c, 1, 1, true)));
    layers.extend((0..3).map(|_| (c, c, 3, 1, true)));
    for _ in 0..cfg.n_lkrb_stfm {
        if g.lkrb_parallel {
            layers.push((c, c, 17, c, true));
        }
        layers.push((c, c, 3, 1, true));
    }
    if g.lkqe {
        layers.push((c, c, 3, 1, true));
        for _ in 0..cfg.n_lkrb_lkqe {
            layers.push((c, c, 17, c, true));
            layers.push((c, c, 3, 1, true));
        }
    }
    layers.push((c, 3, 3, 1, true));
    layers.iter().map(|&(i, o, k, grp, b)| o * (i / grp) * k * k + if b { o } else { 0 }).sum()
}

#[test]
fn param_counts_agree_three_ways() {
    for name in PRESETS {
        let cfg = ModelConfig::preset(name).unwrap();
        let model = DslNet::new(cfg.clone(), 1).unwrap();
        assert_eq!(cfg.param_count(), model.param_count(), "{name}");
        assert_eq!(layer_oracle(&cfg), model.param_count(), "{name}");
    }
    let odd = ModelConfig { t: 2, c_feat: 12, c_offset: 20, c_cond: 6, deform_groups: 3, dyn_k: 3, ..tiny() };
    assert_eq!(layer_oracle(&odd), DslNet::new(odd.clone(), 0).unwrap().param_count());
    assert_eq!(odd.param_count(), layer_oracle(&odd));
}

#[test]
fn full_scale_budget() {
    let n = ModelConfig::preset("full").unwrap().param_count();
    let rel = (n as f64 - 930_000.0) / 930_000.0;
    assert!(rel.abs() <= 0.10, "{n} params, {:.2}% from 0.93M", rel * 100.0);
}

#[test]
fn param_count_grows_along_the_ablation() {
    let counts: Vec<usize> = (0..8).map(|k| ModelConfig::preset(&format!("M{k}")).unwrap().param_count()).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}

#[test]
fn same_seed_same_parameters() {
    let a = DslNet::new(tiny(), 42).unwrap();
    let b = DslNet::new(tiny(), 42).unwrap();
    let c = DslNet::new(tiny(), 43).unwrap();
    let same =
        |x: &DslNet, y: &DslNet| x.params().iter().zip(y.params().iter()).all(|((_, s), (_, t))| s.data() == t.data());
    assert!(same(&a, &b));
    assert!(!same(&a, &c));
}

#[test]
fn output_extents_follow_center_frame() {
    let model = DslNet::new(tiny(), 3).unwrap();
    let mut r = rng(3);
    for (h, w) in [(16, 16), (32, 48), (64, 16)] {
        let x = frames(model.config(), 2, h, w, &mut r);
        let t = model.trace(&x).unwrap();
        assert_eq!(t.output.shape(), [2, 3, h, w]);
        assert_eq!(t.offsets.as_ref().unwrap().tensor().shape(), [2, 18, h, w]);
        assert_eq!(t.aligned.shape(), [2, 8, h, w]);
        assert_eq!(t.stfm.f_modulated.shape(), [2, 8, h, w]);
    }
    // Without the condition network only evenness matters.
    let m5 = DslNet::new(ModelConfig { toggles: Toggles { align: true, ..Toggles::default() }, ..tiny() }, 0).unwrap();
    for (h, w) in [(6, 10), (18, 4), (2, 2)] {
        let x = frames(m5.config(), 1, h, w, &mut r);
        assert_eq!(m5.forward(&x, Mode::Train).unwrap().shape(), [1, 3, h, w]);
    }
    assert!(matches!(m5.forward(&frames(m5.config(), 1, 7, 8, &mut r), Mode::Train), Err(ModelError::Extents { .. })));
    assert!(matches!(
        model.forward(&frames(model.config(), 1, 24, 32, &mut r), Mode::Train),
        Err(ModelError::Extents { .. })
    ));
}

#[test]
fn wrong_frame_count_is_reported() {
    let model = DslNet::new(tiny(), 0).unwrap();
    let x = frames(&ModelConfig { t: 2, ..tiny() }, 1, 16, 16, &mut rng(0));
    let err = model.forward(&x, Mode::Train).unwrap_err();
    assert!(matches!(err, ModelError::FrameCount { expected: 3, got: 5, .. }));
    assert!(err.to_string().contains("2T+1 = 3"));
}

#[test]
fn offset_channel_law() {
    let mut r = rng(8);
    for (t, dg) in [(0, 1), (0, 3), (1, 1), (1, 3), (1, 9), (2, 5)] {
        let cfg = ModelConfig { t, deform_groups: dg, ..tiny() };
        let model = DslNet::new(cfg.clone(), 0).unwrap();
        let x = hdrtv_tensor::concat_channels(&frames(&cfg, 1, 16, 16, &mut r)).unwrap();
        let off = model.dmfa().ldoe.as_ref().unwrap().forward(model.params(), &x).unwrap();
        assert_eq!(off.tensor().shape(), [1, offset_channels((3, 3), dg), 16, 16]);
        assert_eq!(off.tensor().shape()[1], 2 * 3 * 3 * dg);
    }
    // Example geometry: N=1, T=1, 32×32, one deformable group.
    let model = DslNet::new(tiny(), 0).unwrap();
    let x = hdrtv_tensor::concat_channels(&frames(&tiny(), 1, 32, 32, &mut r)).unwrap();
    let off = model.dmfa().ldoe.as_ref().unwrap().forward(model.params(), &x).unwrap();
    assert_eq!(off.tensor().shape(), [1, 18, 32, 32]);
    assert!(off.tensor().data().iter().all(|&v| v == 0.0), "zero-initialized projection");
}

#[test]
fn zero_offsets_reduce_alignment_to_plain_conv() {
    let mut r = rng(21);
    for (seed, t, c) in [(1, 1, 8), (2, 2, 5), (3, 0, 11)] {
        let cfg = ModelConfig { t, ..tiny().with_width(c) };
        let model = DslNet::new(cfg.clone(), seed).unwrap();
        let x = hdrtv_tensor::concat_channels(&frames(&cfg, 2, 16, 16, &mut r)).unwrap();
        let (off, y) = model.dmfa().forward(model.params(), &x).unwrap();
        assert!(off.unwrap().tensor().data().iter().all(|&v| v == 0.0));
        let p = model.params();
        let plain = conv2d(
            &x,
            &ConvSpec::new(cfg.in_channels(), c, 3),
            p.get("dmfa.fuse.weight").unwrap(),
            p.get("dmfa.fuse.bias").ok(),
        )
        .unwrap();
        let d = y.data().iter().zip(plain.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(d <= 1e-6, "{d}");
    }
}

#[test]
fn static_scene_alignment_ignores_reference_identity() {
    let cfg = ModelConfig { t: 2, ..tiny() };
    let mut model = DslNet::new(cfg.clone(), 4).unwrap();
    // Non-zero offsets, so the check exercises the sampled path.
    let proj = model.params().get("dmfa.ldoe.proj.weight").unwrap().numel();
    let mut r = rng(4);
    let w: Vec<f32> = hdrtv_tensor::gradcheck::uniform([proj, 1, 1, 1], -0.5, 0.5, &mut r).to_vec();
    model.params_mut().set("dmfa.ldoe.proj.weight", w).unwrap();
    let center = hdrtv_tensor::gradcheck::uniform([1, 3, 16, 16], 0.0, 1.0, &mut r);
    let a = vec![center.clone(); 5];
    let b: Vec<Tensor> = (0..5).map(|_| Tensor::from_vec([1, 3, 16, 16], center.to_vec()).unwrap()).collect();
    let ya = model.trace(&a).unwrap().aligned;
    let yb = model.trace(&b).unwrap().aligned;
    let d = ya.data().iter().zip(yb.data()).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
    assert!(d <= 1e-6);
}

#[test]
fn modulation_vector_extents() {
    let model = DslNet::new(tiny(), 5).unwrap();
    let mut r = rng(5);
    for (h, w) in [(16, 16), (32, 64)] {
        let v = model.trace(&frames(model.config(), 2, h, w, &mut r)).unwrap().stfm.vectors;
        for m in [v.temporal.as_ref().unwrap(), v.current.as_ref().unwrap()] {
            assert_eq!(m.scale.shape(), [2, 8, 1, 1]);
            assert_eq!(m.shift.shape(), [2, 8, 1, 1]);
        }
        let s = v.spatial.unwrap();
        assert_eq!(s.scale.shape(), [2, 8, h, w]);
        assert_eq!(s.shift.shape(), [2, 8, h, w]);
    }
}

#[test]
fn current_and_spatial_vectors_ignore_reference_frames() {
    let cfg = ModelConfig { t: 2, ..tiny() };
    let model = DslNet::new(cfg.clone(), 6).unwrap();
    let mut r = rng(6);
    let x = frames(&cfg, 1, 32, 32, &mut r);
    let mut y = frames(&cfg, 1, 32, 32, &mut r);
    y[2] = x[2].clone();
    let (a, b) = (model.trace(&x).unwrap().stfm.vectors, model.trace(&y).unwrap().stfm.vectors);
    let (ca, cb) = (a.current.unwrap(), b.current.unwrap());
    assert_eq!(ca.scale.data(), cb.scale.data());
    assert_eq!(ca.shift.data(), cb.shift.data());
    let (sa, sb) = (a.spatial.unwrap(), b.spatial.unwrap());
    assert_eq!(sa.scale.data(), sb.scale.data());
    assert_eq!(sa.shift.data(), sb.shift.data());
    let (ta, tb) = (a.temporal.unwrap(), b.temporal.unwrap());
    assert_ne!(ta.scale.data(), tb.scale.data());
}

#[test]
fn temporal_vector_symmetric_in_identical_references() {
    let cfg = ModelConfig { t: 1, ..tiny() };
    let model = DslNet::new(cfg.clone(), 7).unwrap();
    let mut r = rng(7);
    let f = frames(&cfg, 1, 16, 16, &mut r);
    let same = [f[0].clone(), f[1].clone(), f[0].clone()];
    let swapped = [f[0].clone(), f[1].clone(), f[0].clone()].into_iter().rev().collect::<Vec<_>>();
    let a = model.trace(&same).unwrap().stfm.vectors.temporal.unwrap();
    let b = model.trace(&swapped).unwrap().stfm.vectors.temporal.unwrap();
    assert_eq!(a.scale.data(), b.scale.data());
}

#[test]
fn stfm_output_is_the_sum_of_its_branches() {
    let model = DslNet::new(tiny(), 9).unwrap();
    let s = model.trace(&frames(model.config(), 1, 16, 16, &mut rng(9))).unwrap().stfm;
    for i in 0..s.f_modulated.numel() {
        assert_eq!(s.f_modulated.data()[i], s.f_mod.data()[i] + s.f_skip.data()[i]);
    }
    // Zero the last modulation conv in a config without per-frame vectors after it.
    let cfg = ModelConfig { toggles: Toggles { tfm: true, ..Toggles::default() }, ..tiny() };
    let mut m = DslNet::new(cfg.clone(), 9).unwrap();
    fill_params(&mut m, |p| p.starts_with("stfm.mod.body2"), 0.0);
    let s = m.trace(&frames(&cfg, 1, 16, 16, &mut rng(10))).unwrap().stfm;
    assert_eq!(s.f_modulated.data(), s.f_skip.data());
}

#[test]
fn graph_inspection_of_ablation_variants() {
    let mut r = rng(11);
    let ops = |cfg: ModelConfig, r: &mut _| {
        let m = DslNet::new(cfg.clone(), 0).unwrap();
        m.forward(&frames(&cfg, 1, 16, 16, r), Mode::Train).unwrap().graph_ops()
    };
    let full = ops(tiny(), &mut r);
    assert!(full.contains(&"deformable_conv2d") && full.contains(&"modulate") && full.contains(&"dynamic_conv2d"));
    let no_align =
        ops(ModelConfig { toggles: Toggles { align: false, dynamic_offset: false, ..Toggles::ALL }, ..tiny() }, &mut r);
    assert!(!no_align.contains(&"deformable_conv2d") && no_align.contains(&"modulate"));
    let no_mod =
        ops(ModelConfig { toggles: Toggles { tfm: false, cfm: false, sfm: false, ..Toggles::ALL }, ..tiny() }, &mut r);
    assert!(!no_mod.contains(&"modulate") && no_mod.contains(&"deformable_conv2d"));
    let static_off = ops(ModelConfig { toggles: Toggles { dynamic_offset: false, ..Toggles::ALL }, ..tiny() }, &mut r);
    assert!(!static_off.contains(&"dynamic_conv2d"));
    for k in 0..8 {
        let g = ModelConfig::preset(&format!("M{k}")).unwrap().with_width(4);
        let o = ops(g.clone(), &mut r);
        assert_eq!(o.contains(&"deformable_conv2d"), g.toggles.align, "M{k}");
        assert_eq!(o.contains(&"modulate"), g.toggles.uses_condition_net(), "M{k}");
    }
}

#[test]
fn inference_is_clamped_and_deterministic() {
    let model = DslNet::new(tiny(), 12).unwrap();
    let x = frames(model.config(), 2, 16, 16, &mut rng(12));
    let raw = model.forward(&x, Mode::Train).unwrap();
    let y = model.forward(&x, Mode::Inference).unwrap();
    assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    for (r, c) in raw.data().iter().zip(y.data()) {
        assert_eq!(r.clamp(0.0, 1.0), *c);
    }
    let again = DslNet::new(tiny(), 12).unwrap().forward(&x, Mode::Inference).unwrap();
    assert_eq!(y.data(), again.data());
}

#[test]
fn condition_net_contract() {
    let cfg = ModelConfig { t: 2, ..tiny() };
    let model = DslNet::new(cfg.clone(), 13).unwrap();
    let cond = model.stfm().cond.as_ref().unwrap();
    let mut r = rng(13);
    let mut f = frames(&cfg, 1, 32, 48, &mut r);
    f[4] = f[1].clone();
    let feats = cond.forward(model.params(), &f).unwrap();
    assert_eq!(feats.len(), 5);
    assert!(feats.iter().all(|t| t.shape() == [1, 8, 2, 3]));
    assert_eq!(feats[1].data(), feats[4].data());
    assert!(cond.forward_frame(model.params(), &Tensor::zeros([1, 3, 24, 32])).is_err());
}

#[test]
fn color_block_halves_and_maps_constants_to_bias() {
    let model = DslNet::new(tiny(), 14).unwrap();
    let block = &model.stfm().cond.as_ref().unwrap().blocks[1];
    let x = hdrtv_tensor::gradcheck::uniform([2, 8, 10, 6], -1.0, 1.0, &mut rng(14));
    assert_eq!(block.forward(model.params(), &x).unwrap().shape(), [2, 8, 5, 3]);
    let y = block.forward(model.params(), &Tensor::full([1, 8, 4, 4], 0.7)).unwrap();
    let bias = model.params().get("stfm.cond.block1.bias").unwrap();
    for c in 0..8 {
        for i in 0..4 {
            assert_eq!(y.data()[c * 4 + i], bias.data()[c]);
        }
    }
    assert!(block.forward(model.params(), &Tensor::zeros([1, 8, 1, 4])).is_err());
}

#[test]
fn apply_modulation_arithmetic() {
    use hdrtv_model::stfm::{apply_modulation, ModulationKind, ModulationVector};
    let f = Tensor::full([1, 2, 3, 3], 0.5);
    let id = ModulationVector::identity([1, 2, 1, 1], ModulationKind::Current);
    assert_eq!(apply_modulation(&f, &id).unwrap().data(), f.data());
    let c = ModulationVector {
        scale: Tensor::zeros([1, 2, 3, 3]),
        shift: Tensor::full([1, 2, 3, 3], 0.25),
        kind: ModulationKind::Spatial,
    };
    assert!(apply_modulation(&f, &c).unwrap().data().iter().all(|&v| v == 0.25));
    let a = ModulationVector {
        scale: Tensor::full([1, 2, 1, 1], 2.0),
        shift: Tensor::full([1, 2, 1, 1], -1.0),
        kind: ModulationKind::Temporal,
    };
    assert!(apply_modulation(&f, &a).unwrap().data().iter().all(|&v| v == 0.0));
    let bad = ModulationVector::identity([1, 2, 3, 1], ModulationKind::Spatial);
    assert!(apply_modulation(&f, &bad).is_err());
}

#[test]
fn gradient_reaches_the_offset_estimator() {
    let mut model = DslNet::new(tiny(), 15).unwrap();
    let mut r = rng(15);
    let n = model.params().get("dmfa.ldoe.proj.weight").unwrap().numel();
    let w = hdrtv_tensor::gradcheck::uniform([n, 1, 1, 1], -0.3, 0.3, &mut r).to_vec();
    model.params_mut().set("dmfa.ldoe.proj.weight", w).unwrap();
    let x = frames(model.config(), 1, 16, 16, &mut r);
    let aligned = model.trace(&x).unwrap().aligned;
    hdrtv_tensor::mean(&aligned).backward().unwrap();
    let g = model.params().get("dmfa.ldoe.down.weight").unwrap().grad().unwrap();
    assert!(g.iter().map(|v| v * v).sum::<f32>() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn output_extents_for_even_sizes(hh in 1usize..5, ww in 1usize..5, t in 0usize..3, seed in 0u64..100) {
        let cfg = ModelConfig { t, ..tiny().with_width(4) };
        let model = DslNet::new(cfg.clone(), seed).unwrap();
        let (h, w) = (16 * hh, 16 * ww);
        let y = model.forward(&frames(&cfg, 1, h, w, &mut rng(seed)), Mode::Inference).unwrap();
        prop_assert_eq!(y.shape(), [1, 3, h, w]);
        prop_assert!(y.all_finite());
    }
}
