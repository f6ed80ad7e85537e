mod common;

use flowlut::flow::{self, FlowNetParams};
use flowlut::imageio::{self, ImageBuffer};
use flowlut::lut::{self, Lut3D, LutBank};
use flowlut::nn::ConvLayer;
use flowlut::pipeline::{from_bytes, to_bytes, FlowLut, OptimizerState, PipelineConfig, Resolution};
use flowlut::tensor::{ops, Backend, Eager};
use flowlut::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(seed: u64, h: usize, w: usize, lo: f32, hi: f32) -> Tensor {
    common::rand_tensor(&mut common::rng(seed), &[3, h, w], lo, hi)
}

fn max_abs(a: &Tensor, b: &Tensor) -> f32 {
    a.max_abs_diff(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-60.0f32..60.0, 1..17)) {
        let t = Tensor::new([logits.len()], logits).unwrap();
        let w = ops::softmax(&t).unwrap();
        let sum: f64 = w.data().iter().map(|&v| v as f64).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "sum {sum}");
        prop_assert!(w.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn identity_lattice_is_exact(seed in any::<u64>(), d in 2usize..34) {
        let lut = Lut3D::identity(d).unwrap();
        let img = image(seed, 5, 7, 0.0, 1.0);
        prop_assert!(max_abs(&lut.apply(&img).unwrap(), &img) <= 1e-6);
    }

    #[test]
    fn affine_lattices_are_reproduced(seed in any::<u64>(), d in 2usize..12) {
        // Trilinear interpolation is exact on affine maps.
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let a: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| r.gen_range(-0.4..0.4)));
        let c: [f64; 3] = std::array::from_fn(|_| r.gen_range(0.2..0.8));
        let f = |p: [f64; 3]| std::array::from_fn(|i| c[i] + (0..3).map(|j| a[i][j] * p[j]).sum::<f64>());
        let lut = Lut3D::from_fn(d, f).unwrap();
        let img = image(seed ^ 1, 4, 6, 0.0, 1.0);
        let out = lut.apply(&img).unwrap();
        let hw = 24;
        for p in 0..hw {
            let px = [0, 1, 2].map(|ch| img.data()[ch * hw + p] as f64);
            let want = f(px);
            for ch in 0..3 {
                prop_assert!((out.data()[ch * hw + p] as f64 - want[ch]).abs() <= 2e-6);
            }
        }
    }

    #[test]
    fn inversion_twice_is_identity(seed in any::<u64>()) {
        let bank = LutBank::specialized(8, 33).unwrap();
        let inv = &bank.luts()[7];
        let img = image(seed, 6, 5, 0.0, 1.0);
        let twice = inv.apply(&inv.apply(&img).unwrap()).unwrap();
        prop_assert!(max_abs(&twice, &img) <= 2e-6);
    }

    #[test]
    fn refinement_moves_at_most_one(seed in any::<u64>(), k in 1usize..7, scale in 0.1f32..20.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut net = FlowNetParams::new(4, &mut r);
        net.conv3 = ConvLayer::uniform(4, 3, &mut r);
        for t in net.tensors_mut() {
            for v in t.data_mut() {
                *v *= scale;
            }
        }
        let i_lut = image(seed ^ 2, 5, 6, -1.0, 2.0);
        let i_in = image(seed ^ 3, 5, 6, -1.0, 2.0);
        let mut e = Eager;
        let p = net.bind(&mut e);
        let (a, b) = (e.constant(i_lut.clone()), e.constant(i_in));
        let (out, _) = flow::refine(&mut e, &p, &a, &b, k).unwrap();
        // Each step adds tanh(·)/K; rounding of the f32 additions is the only slack.
        prop_assert!(max_abs(e.value(&out), &i_lut) <= 1.0 + 1e-6);
    }

    #[test]
    fn constant_field_adds_the_constant(seed in any::<u64>(), k in 1usize..9) {
        let i_lut = image(seed, 3, 4, 0.0, 1.0);
        let i_in = image(seed ^ 5, 3, 4, 0.0, 1.0);
        let c = image(seed ^ 7, 3, 4, -1.0, 1.0);
        let mut e = Eager;
        let (a, b) = (e.constant(i_lut.clone()), e.constant(i_in));
        let (out, _) = flow::refine_with(&mut e, &a, &b, k, |e, _| Ok(e.constant(c.clone()))).unwrap();
        let want = ops::add_scaled(&i_lut, &c, 1.0).unwrap();
        prop_assert!(max_abs(e.value(&out), &want) <= 1e-6);
    }

    #[test]
    fn image_roundtrip_within_half_step(seed in any::<u64>(), h in 1usize..9, w in 1usize..9, png in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if png { "x.png" } else { "x.ppm" });
        let t = image(seed, h, w, 0.0, 1.0);
        imageio::save_image(&t, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = imageio::load_image(&path).unwrap();
        prop_assert!(max_abs(&back, &t) <= 1.0 / 510.0 + 1e-7);
        imageio::save_image(&t, &path).unwrap();
        prop_assert_eq!(first, std::fs::read(&path).unwrap());
        // Quantized values survive a second pass exactly.
        prop_assert_eq!(ImageBuffer::from_tensor(&back).unwrap(), imageio::read_image(&path).unwrap());
    }

    #[test]
    fn cube_roundtrip(seed in any::<u64>(), d in 2usize..10) {
        let lattice = common::rand_tensor(&mut common::rng(seed), &[d, d, d, 3], -0.2, 1.2);
        let lut = Lut3D::from_table(d, lattice.data().to_vec()).unwrap();
        let mut text = Vec::new();
        lut::write_cube(&lut, &mut text).unwrap();
        let back = lut::parse_cube(std::str::from_utf8(&text).unwrap(), std::path::Path::new("mem.cube")).unwrap();
        prop_assert_eq!(back.size(), d);
        prop_assert!(max_abs(back.table(), lut.table()) <= 1e-6);
    }

    #[test]
    fn config_text_roundtrip(luts in 1usize..12, k in 1usize..9, lr in 0.0f64..1.0, seed in any::<u64>(), native in any::<bool>()) {
        let cfg = PipelineConfig {
            num_luts: luts,
            flow_steps: k,
            lr,
            seed,
            processing_resolution: (!native).then_some(Resolution::new(17, 33)),
            ..PipelineConfig::toy()
        };
        prop_assert_eq!(PipelineConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_roundtrip_is_bit_exact(seed in any::<u64>(), noise in 0.0f32..0.1) {
        let mut model = FlowLut::new(PipelineConfig {
            num_luts: 3,
            lattice_size: 5,
            widths: [4, 4, 8],
            head_hidden: 4,
            flow_hidden: 4,
            analysis_resolution: Resolution::new(8, 8),
            seed,
            ..PipelineConfig::default()
        })
        .unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for t in model.tensors_mut() {
            for v in t.data_mut() {
                *v += r.gen_range(-1.0..1.0) * noise;
            }
        }
        let state = OptimizerState::new(model.tensors());
        let bytes = to_bytes(&model, &state);
        let (m2, s2) = from_bytes(&bytes).unwrap();
        prop_assert_eq!(&m2, &model);
        prop_assert_eq!(&s2, &state);
        prop_assert_eq!(to_bytes(&m2, &s2), bytes);
    }
}
