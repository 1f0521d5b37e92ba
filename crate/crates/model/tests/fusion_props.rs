use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgh_core::tensor::Tensor;
use sgh_model::fusion::{self, fuse_views, fusion_forward};
use sgh_model::params::Parameters;
use sgh_model::transformer::{self, transformer_forward};
use sgh_model::{ModelConfig, Tape};

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn mask_channels_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = Parameters::new();
    fusion::init_params(&mut params, 16, 8, 7, &mut rng).unwrap();
    let features = random(&[3, 7, 7, 16], &mut rng);
    let mut tape = Tape::new();
    let pv = params.register(&mut tape);
    let out = fusion_forward(&mut tape, &pv, &features).unwrap();
    assert_eq!(out.side, 22);
    for &m in &out.masks {
        let t = tape.value(m);
        assert_eq!(t.shape(), &[484, 7]);
        for k in 0..7 {
            let s: f64 = t.column(k).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(t.column(k).iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn fuse_views_permutation_invariant_100_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..100 {
        let views = rng.gen_range(1..6);
        let (hw, c, k) = (rng.gen_range(1..20), rng.gen_range(1..10), rng.gen_range(1..8));
        let fs: Vec<Tensor> = (0..views).map(|_| random(&[hw, c], &mut rng)).collect();
        let ms: Vec<Tensor> = (0..views).map(|_| random(&[hw, k], &mut rng)).collect();
        let mut perm: Vec<usize> = (0..views).collect();
        for i in (1..views).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let run = |order: &[usize]| {
            let mut tape = Tape::new();
            let f: Vec<_> = order.iter().map(|&i| tape.constant(fs[i].clone())).collect();
            let m: Vec<_> = order.iter().map(|&i| tape.constant(ms[i].clone())).collect();
            let (_, r) = fuse_views(&mut tape, &f, &m).unwrap();
            tape.value(r).clone()
        };
        let identity: Vec<usize> = (0..views).collect();
        assert_eq!(run(&identity), run(&perm), "case {case}");
    }
}

#[test]
fn encoder_is_token_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = ModelConfig { channels: 9, n_layers: 2, layers_per_block: 2, ..ModelConfig::toy() };
    let mut params = Parameters::new();
    transformer::init_params(&mut params, &cfg, &mut rng).unwrap();
    let tokens = random(&[10, 12], &mut rng);
    let perm: Vec<usize> = vec![3, 7, 0, 9, 1, 2, 8, 4, 6, 5];
    let permuted = Tensor::new(vec![10, 12], perm.iter().flat_map(|&i| tokens.row(i).to_vec()).collect()).unwrap();
    let run = |t: &Tensor| {
        let mut tape = Tape::new();
        let pv = params.register(&mut tape);
        let x = tape.constant(t.clone());
        let out = transformer_forward(&mut tape, &pv, x, &cfg).unwrap().output;
        tape.value(out).clone()
    };
    let (a, b) = (run(&tokens), run(&permuted));
    for (r, &i) in perm.iter().enumerate() {
        for k in 0..3 {
            assert!((b.get2(r, k) - a.get2(i, k)).abs() < 1e-12);
        }
    }
}
