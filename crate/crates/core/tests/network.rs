use diffnet_core::autodiff::{Tape, Tensor};
use diffnet_core::experiments::verify::permute_shape;
use diffnet_core::experiments::randomized_params;
use diffnet_core::geometry::{BumpySphere, BumpySphereParams, MirroredPair, MirroredPairParams, Shape};
use diffnet_core::net::{
    featurize, forward, init_params, load_checkpoint, network_forward, param_shapes, save_checkpoint, DiffusionNetParams,
    GradientMode, Head, InputMode, NetworkConfig,
};
use diffnet_core::operators::GeometryOperators;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

const K: usize = 24;

fn fixture() -> &'static (Shape, GeometryOperators) {
    static CELL: OnceLock<(Shape, GeometryOperators)> = OnceLock::new();
    CELL.get_or_init(|| {
        let shape = BumpySphere::new(
            BumpySphereParams {
                subdiv: 2,
                ..BumpySphereParams::default()
            },
            5,
        )
        .unwrap()
        .shape();
        let ops = GeometryOperators::compute(&shape, K).unwrap();
        (shape, ops)
    })
}

fn config(input: InputMode, head: Head, mode: GradientMode) -> NetworkConfig {
    let mut c = NetworkConfig::new(input, head, mode, 3);
    c.width = 8;
    c.n_blocks = 2;
    c.k = K;
    c
}

fn any_config() -> impl Strategy<Value = NetworkConfig> {
    (
        prop::sample::select(vec![InputMode::Xyz, InputMode::Hks]),
        prop::sample::select(vec![Head::VertexSoftmax, Head::GlobalMeanSoftmax]),
        prop::sample::select(vec![GradientMode::Real, GradientMode::Complex]),
    )
        .prop_map(|(i, h, g)| config(i, h, g))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn outputs_permute_with_vertices(cfg in any_config(), seed in any::<u64>()) {
        let (shape, ops) = fixture();
        let params = randomized_params(&cfg, seed).unwrap();
        let mut perm: Vec<usize> = (0..shape.n_vertices()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = network_forward(shape, ops, &params, false, 0).unwrap();
        let b = network_forward(&permute_shape(shape, &perm).unwrap(), &ops.permute(&perm), &params, false, 0).unwrap();
        let expected = if cfg.head == Head::GlobalMeanSoftmax {
            a.clone()
        } else {
            Tensor::from_fn(a.rows(), a.cols(), |i, c| a.at(perm[i], c))
        };
        prop_assert!(b.max_abs_diff(&expected) <= 1e-10);
    }

    #[test]
    fn outputs_ignore_the_tangent_basis(cfg in any_config(), seed in any::<u64>()) {
        let (shape, ops) = fixture();
        let params = randomized_params(&cfg, seed).unwrap();
        let mut frames = ops.frames.clone();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for v in 0..frames.len() {
            frames.rotate(v, r.gen_range(0.0..std::f64::consts::TAU));
        }
        let rotated = ops.with_frames(shape, frames).unwrap();
        let a = network_forward(shape, ops, &params, false, 0).unwrap();
        let b = network_forward(shape, &rotated, &params, false, 0).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-8);
    }

    #[test]
    fn real_gradient_features_cannot_tell_mirror_images_apart(seed in 0u64..1000) {
        let pair = MirroredPair::generate(&MirroredPairParams { subdiv: 2, ..MirroredPairParams::default() }, seed).unwrap();
        let cfg = config(InputMode::Hks, Head::VertexSoftmax, GradientMode::Real);
        let params = randomized_params(&cfg, seed).unwrap();
        let a = network_forward(&pair.original, &GeometryOperators::compute(&pair.original, K).unwrap(), &params, false, 0).unwrap();
        let b = network_forward(&pair.mirrored, &GeometryOperators::compute(&pair.mirrored, K).unwrap(), &params, false, 0).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-8);
    }
}

fn loss_and_grads(params: &DiffusionNetParams, seed: u64) -> (Tensor, Vec<Tensor>) {
    let (shape, ops) = fixture();
    let x = featurize(shape, ops, &params.config).unwrap();
    let mut tape = Tape::new();
    let pass = forward(&mut tape, params, ops, None, &x, true, seed).unwrap();
    let targets: Vec<usize> = (0..shape.n_vertices()).map(|i| i % 3).collect();
    let logits = tape.value(pass.logits).unwrap().clone();
    let loss = tape.cross_entropy(pass.logits, &targets, 0.1).unwrap();
    let g = tape.backward(loss).unwrap();
    (logits, pass.params.iter().map(|&v| g.get(v).unwrap().clone()).collect())
}

#[test]
fn forward_and_backward_are_bit_reproducible() {
    let mut cfg = config(InputMode::Xyz, Head::VertexSoftmax, GradientMode::Complex);
    cfg.dropout = 0.3;
    let params = init_params(&cfg, 11).unwrap();
    let (l1, g1) = loss_and_grads(&params, 4);
    let (l2, g2) = loss_and_grads(&params, 4);
    assert_eq!(l1, l2);
    assert_eq!(g1, g2);
    let (l3, _) = loss_and_grads(&params, 5);
    assert_ne!(l1, l3, "a different dropout seed should change the masks");
}

#[test]
fn initialization_follows_the_config() {
    let cfg = config(InputMode::Hks, Head::VertexSoftmax, GradientMode::Complex);
    let params = init_params(&cfg, 0).unwrap();
    let shapes = param_shapes(&cfg);
    assert_eq!(params.len(), shapes.len());
    for (i, (name, shape)) in shapes.iter().enumerate() {
        assert_eq!(params.name(i), name);
        assert_eq!(params.tensor(i).shape(), shape.as_slice());
        if name.ends_with("diffusion_time") {
            assert!(params.tensor(i).data().iter().all(|&t| t == 1e-4), "{name}");
        }
    }
    assert_eq!(params, init_params(&cfg, 0).unwrap());
    assert_ne!(params, init_params(&cfg, 1).unwrap());
}

#[test]
fn checkpoint_round_trips_params_and_config() {
    let cfg = config(InputMode::Xyz, Head::GlobalMeanSoftmax, GradientMode::Complex);
    let params = randomized_params(&cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/net.ckpt");
    save_checkpoint(&path, &params, serde_json::json!({ "note": "x" })).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.params, params);
    assert_eq!(back.params.config, cfg);
    assert_eq!(back.metadata["note"], "x");

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}
