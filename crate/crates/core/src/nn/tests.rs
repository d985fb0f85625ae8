use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor {
        shape,
        values: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

/// Scalar objective `Σ c_i · out_i + L1` and the pattern of relu units at this point.
fn objective(w: &ModelWeights, inputs: &[&Tensor], coeffs: &[f64], seed: u64) -> (f64, Vec<bool>) {
    let (out, cache) = forward(w, inputs, true, seed).unwrap();
    let v = out.values.iter().zip(coeffs).map(|(a, b)| a * b).sum::<f64>() + w.l1_penalty();
    (v, cache.activation_pattern(w))
}

/// Central finite differences against `backward`, skipping coordinates whose
/// perturbation crosses a relu kink. Returns the worst relative error and the
/// number of coordinates checked.
fn gradient_check(w: &ModelWeights, inputs: &[&Tensor], seed: u64) -> (f64, usize) {
    let h = 1e-4;
    let (out, cache) = forward(w, inputs, true, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let coeffs: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = Tensor::new(out.shape.clone(), coeffs.clone()).unwrap();
    let grads = backward(w, cache, &g).unwrap();
    let analytic = flatten_gradients(w, &grads);

    let base = w.flat_parameters();
    let (_, pattern) = objective(w, inputs, &coeffs, seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = w.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_flat_parameters(&p);
        let (fp, pat_p) = objective(&probe, inputs, &coeffs, seed);
        p[i] = base[i] - h;
        probe.set_flat_parameters(&p);
        let (fm, pat_m) = objective(&probe, inputs, &coeffs, seed);
        if pat_p != pattern || pat_m != pattern {
            continue;
        }
        // |w| is not differentiable at 0.
        if base[i].abs() < h && w.l1_penalty() > 0.0 {
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
        checked += 1;
    }
    (worst, checked)
}

fn conv(window: usize, cin: usize, cout: usize, bias: bool) -> LayerSpec {
    LayerSpec::Conv1d {
        window,
        in_channels: cin,
        out_channels: cout,
        stride: 1,
        has_bias: bias,
    }
}

fn dense(i: usize, o: usize, bias: bool, l1: f64) -> LayerSpec {
    LayerSpec::Dense {
        in_dim: i,
        out_dim: o,
        has_bias: bias,
        l1_coefficient: l1,
    }
}

fn act(f: Activation) -> LayerSpec {
    LayerSpec::Activation { function: f }
}

fn small_causality() -> Architecture {
    Architecture::siamese(
        vec![
            conv(5, 1, 4, true),
            act(Activation::Relu),
            LayerSpec::AvgPoolTime { pool: None },
            dense(4, 4, true, 0.0),
            act(Activation::Relu),
        ],
        Combiner::Dot,
        vec![dense(1, 1, true, 0.0), act(Activation::Sigmoid)],
    )
}

fn small_lag() -> Architecture {
    Architecture::siamese(
        vec![
            conv(5, 1, 3, true),
            act(Activation::Relu),
            dense(3, 3, true, 0.0),
            act(Activation::Relu),
            LayerSpec::Flatten,
        ],
        Combiner::Subtract,
        vec![
            dense(12, 4, false, 0.0),
            act(Activation::Tanh),
            dense(4, 1, false, 0.0),
        ],
    )
}

fn small_autoencoder() -> Architecture {
    Architecture::sequential(vec![
        conv(4, 1, 3, true),
        LayerSpec::AvgPoolTime { pool: Some(2) },
        act(Activation::Elu),
        LayerSpec::Upsample { factor: 2, out_len: 7 },
        LayerSpec::ConvTranspose1d {
            window: 4,
            in_channels: 3,
            out_channels: 1,
            has_bias: true,
        },
    ])
}

fn small_deepwide() -> Architecture {
    Architecture::sequential(vec![
        dense(5, 6, false, 1e-3),
        LayerSpec::Dropout { rate: 0.3 },
        act(Activation::Elu),
        dense(6, 5, false, 1e-3),
        LayerSpec::Dropout { rate: 0.3 },
        act(Activation::Elu),
    ])
}

#[test]
fn gradients_match_finite_differences_on_every_layer_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<(Architecture, Vec<usize>, usize)> = vec![
        (small_causality(), vec![3, 10, 1], 2),
        (small_lag(), vec![3, 8, 1], 2),
        (small_autoencoder(), vec![2, 10, 1], 1),
        (small_deepwide(), vec![4, 5], 1),
        (
            Architecture::sequential(vec![conv(3, 2, 2, true), act(Activation::Sigmoid), conv(2, 2, 1, false)]),
            vec![2, 6, 2],
            1,
        ),
    ];
    for (k, (arch, shape, n_inputs)) in cases.into_iter().enumerate() {
        let w = ModelWeights::init(arch, 10 + k as u64).unwrap();
        let inputs: Vec<Tensor> = (0..n_inputs).map(|_| random_tensor(shape.clone(), &mut rng)).collect();
        let refs: Vec<&Tensor> = inputs.iter().collect();
        let (worst, checked) = gradient_check(&w, &refs, 99 + k as u64);
        assert!(checked * 2 > w.parameter_count(), "case {k}: too few coordinates checked");
        assert!(worst <= 1e-4, "case {k}: relative error {worst}");
    }
}

#[test]
fn conv_and_pool_shapes_match_detector_geometry() {
    let arch = Architecture::sequential(vec![conv(61, 1, 50, true), act(Activation::Relu)]);
    let w = ModelWeights::init(arch, 0).unwrap();
    let x = Tensor::zeros(vec![1, 80, 1]);
    let y = predict(&w, &[&x]).unwrap();
    assert_eq!(y.shape, vec![1, 20, 50]);

    let pool = Architecture::sequential(vec![LayerSpec::AvgPoolTime { pool: None }]);
    let w = ModelWeights::init(pool, 0).unwrap();
    let y = predict(&w, &[&Tensor::zeros(vec![1, 20, 50])]).unwrap();
    assert_eq!(y.shape, vec![1, 1, 50]);
}

#[test]
fn identity_dense_is_identity() {
    let arch = Architecture::sequential(vec![dense(3, 3, false, 0.0)]);
    let mut w = ModelWeights::init(arch, 0).unwrap();
    w.tensors.get_mut("layer0.weight").unwrap().values = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
    let y = predict(&w, &[&x]).unwrap();
    assert_eq!(y.values, x.values);
}

#[test]
fn forward_is_pure() {
    let w = ModelWeights::init(small_deepwide(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(vec![6, 5], &mut rng);
    let (a, _) = forward(&w, &[&x], true, 17).unwrap();
    let (b, _) = forward(&w, &[&x], true, 17).unwrap();
    assert_eq!(a, b);
    let (c, _) = forward(&w, &[&x], false, 1).unwrap();
    let (d, _) = forward(&w, &[&x], false, 2).unwrap();
    assert_eq!(c, d);
}

#[test]
fn shape_mismatch_is_usage_error() {
    let w = ModelWeights::init(small_causality(), 0).unwrap();
    let x = Tensor::zeros(vec![1, 3, 1]);
    assert!(forward(&w, &[&x, &x], false, 0).is_err());
    let ok = Tensor::zeros(vec![1, 10, 1]);
    assert!(forward(&w, &[&ok], false, 0).is_err());
}

#[test]
fn dot_combiner_gradient_is_other_branch() {
    // Branch: identity dense, combiner dot, no head.
    let arch = Architecture::siamese(vec![dense(3, 3, false, 0.0)], Combiner::Dot, vec![]);
    let mut w = ModelWeights::init(arch, 0).unwrap();
    w.tensors.get_mut("layer0.weight").unwrap().values = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let a = Tensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let b = Tensor::new(vec![1, 3], vec![-1.0, 0.5, 4.0]).unwrap();
    let (out, cache) = forward(&w, &[&a, &b], true, 0).unwrap();
    assert_eq!(out.values, vec![-1.0 + 1.0 + 12.0]);
    let grads = backward(&w, cache, &Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap()).unwrap();
    // d/dW of (Wa)·(Wb) at W = I is a bᵀ + b aᵀ.
    let g = &grads["layer0.weight"];
    for i in 0..3 {
        for j in 0..3 {
            let expected = a.values[i] * b.values[j] + b.values[i] * a.values[j];
            assert!((g[i * 3 + j] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn l1_contributes_penalty_and_sign() {
    let arch = Architecture::sequential(vec![dense(2, 1, false, 0.5)]);
    let mut w = ModelWeights::init(arch, 0).unwrap();
    w.tensors.get_mut("layer0.weight").unwrap().values = vec![2.0, -3.0];
    assert!((w.l1_penalty() - 2.5).abs() < 1e-15);
    let x = Tensor::new(vec![1, 2], vec![0.0, 0.0]).unwrap();
    let (_, cache) = forward(&w, &[&x], true, 0).unwrap();
    let grads = backward(&w, cache, &Tensor::new(vec![1, 1, 1], vec![0.0]).unwrap()).unwrap();
    assert_eq!(grads["layer0.weight"], vec![0.5, -0.5]);
    assert_eq!(sign(0.0), 0.0);
}

#[test]
fn dropout_rate_and_rescaling() {
    let rate = 0.3;
    let arch = Architecture::sequential(vec![LayerSpec::Dropout { rate }]);
    let w = ModelWeights::init(arch, 0).unwrap();
    let n = 100_000;
    let x = Tensor::new(vec![n, 1], vec![1.0; n]).unwrap();
    let (y, _) = forward(&w, &[&x], true, 5).unwrap();
    let zeros = y.values.iter().filter(|v| **v == 0.0).count() as f64 / n as f64;
    assert!((zeros - rate).abs() <= 0.02, "zeroed fraction {zeros}");
    let scale = 1.0 / (1.0 - rate);
    assert!(y.values.iter().all(|v| *v == 0.0 || (*v - scale).abs() < 1e-15));
    let (z, _) = forward(&w, &[&x], false, 5).unwrap();
    assert_eq!(z.values, x.values);
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let w = ModelWeights::init(small_lag(), 8).unwrap();
    let back = ModelWeights::from_json(&w.to_json().unwrap()).unwrap();
    assert_eq!(back, w);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_tensor(vec![2, 8, 1], &mut rng);
    let b = random_tensor(vec![2, 8, 1], &mut rng);
    let y1 = predict(&w, &[&a, &b]).unwrap();
    let y2 = predict(&back, &[&a, &b]).unwrap();
    for (p, q) in y1.values.iter().zip(&y2.values) {
        assert_eq!(p.to_bits(), q.to_bits());
    }
}

#[test]
fn wrong_array_length_names_tensor() {
    let w = ModelWeights::init(small_causality(), 0).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&w.to_json().unwrap()).unwrap();
    v["tensors"]["layer3.weight"]["values"].as_array_mut().unwrap().pop();
    let err = ModelWeights::from_json(&v.to_string()).unwrap_err();
    assert!(err.to_string().contains("layer3.weight"), "{err}");
}

#[test]
fn siamese_branches_share_one_parameter_set() {
    let w = ModelWeights::init(small_causality(), 0).unwrap();
    let back = ModelWeights::from_json(&w.to_json().unwrap()).unwrap();
    // One stored copy of each branch tensor; the descriptor's branch_len
    // routes both inputs through the same ids.
    let branch_tensors: Vec<&String> = back
        .tensors
        .keys()
        .filter(|k| {
            let idx: usize = k.trim_start_matches("layer").split('.').next().unwrap().parse().unwrap();
            idx < back.architecture.branch_len
        })
        .collect();
    assert_eq!(branch_tensors.len(), 4);
    // Swapping the inputs of a symmetric model changes nothing.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_tensor(vec![4, 10, 1], &mut rng);
    let b = random_tensor(vec![4, 10, 1], &mut rng);
    assert_eq!(predict(&back, &[&a, &b]).unwrap(), predict(&back, &[&b, &a]).unwrap());
}
