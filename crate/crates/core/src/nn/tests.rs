use super::*;
use crate::error::Error;
use crate::numerics::{finite_difference_gradient, DenseMatrix, RngState};

fn random_matrix(rng: &mut RngState, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// Straightforward triple-loop forward pass used as an oracle.
fn naive_forward(params: &[LayerParams], cfg: &MlpConfig, x: &DenseMatrix) -> DenseMatrix {
    let mut h: Vec<Vec<f64>> = x.row_iter().map(<[f64]>::to_vec).collect();
    let last = params.len() - 1;
    for (l, p) in params.iter().enumerate() {
        h = h
            .iter()
            .map(|row| {
                (0..p.w.cols())
                    .map(|j| {
                        let a = p.bias[j] + (0..p.w.rows()).map(|i| row[i] * p.w.get(i, j)).sum::<f64>();
                        if l == last {
                            return a;
                        }
                        let act = match cfg.activation() {
                            Activation::Relu => a.max(0.0),
                            Activation::Identity => a,
                        };
                        if cfg.skip()[l] {
                            act + row[j]
                        } else {
                            act
                        }
                    })
                    .collect()
            })
            .collect();
    }
    DenseMatrix::from_rows(&h).unwrap()
}

fn flatten(layers: &[LayerParams]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.buffers().into_iter().flatten().copied().collect::<Vec<_>>())
        .collect()
}

fn unflatten(template: &[LayerParams], theta: &[f64]) -> Vec<LayerParams> {
    let mut out = template.to_vec();
    let mut pos = 0;
    for l in &mut out {
        for buf in l.buffers_mut() {
            buf.copy_from_slice(&theta[pos..pos + buf.len()]);
            pos += buf.len();
        }
    }
    out
}

fn configs() -> Vec<MlpConfig> {
    vec![
        MlpConfig::relu(vec![4, 8, 3]).unwrap(),
        MlpConfig::new(vec![4, 6, 6, 6, 3], Activation::Relu, vec![false, true, true]).unwrap(),
        MlpConfig::new(vec![5, 5, 2], Activation::Identity, vec![true]).unwrap(),
    ]
}

#[test]
fn config_validation() {
    assert!(MlpConfig::relu(vec![4, 3]).is_err());
    assert!(MlpConfig::new(vec![4, 5, 3], Activation::Relu, vec![true]).is_err());
    assert!(MlpConfig::new(vec![4, 5, 3], Activation::Relu, vec![]).is_err());
    assert!(MlpConfig::relu(vec![4, 0, 3]).is_err());
    assert_eq!(MlpConfig::relu(vec![4, 8, 3]).unwrap().num_params(), 4 * 8 + 8 + 8 * 3 + 3);
}

#[test]
fn init_statistics() {
    let cfg = MlpConfig::relu(vec![500, 500, 1]).unwrap();
    let params = init_params(&cfg, &mut RngState::new(5));
    let w = params[0].w.as_slice();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
    assert!((var / INIT_VARIANCE - 1.0).abs() < 0.1, "variance {var}");
    assert!(params.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    let again = init_params(&cfg, &mut RngState::new(5));
    assert_eq!(params, again);
}

#[test]
fn zero_network_outputs_zero() {
    let cfg = MlpConfig::relu(vec![3, 4, 2]).unwrap();
    let params = init_params_with_variance(&cfg, &mut RngState::new(1), 0.0);
    let x = random_matrix(&mut RngState::new(2), 5, 3);
    let (_, out) = mlp_forward(&params, &cfg, &x).unwrap();
    assert!(out.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_weight_skip_layer_passes_input_through() {
    let cfg = MlpConfig::new(vec![3, 4, 4, 2], Activation::Relu, vec![false, true]).unwrap();
    let mut rng = RngState::new(3);
    let mut params = init_params_with_variance(&cfg, &mut rng, 1.0);
    params[1] = LayerParams::zeros(4, 4);
    let x = random_matrix(&mut rng, 6, 3);
    let (trace, _) = mlp_forward(&params, &cfg, &x).unwrap();
    assert_eq!(trace.hidden_outputs()[1], trace.hidden_outputs()[0]);
}

#[test]
fn forward_matches_naive_oracle() {
    let mut rng = RngState::new(4);
    for cfg in configs() {
        let params = init_params_with_variance(&cfg, &mut rng, 0.5);
        let x = random_matrix(&mut rng, 7, cfg.input_width());
        let (_, out) = mlp_forward(&params, &cfg, &x).unwrap();
        let expect = naive_forward(&params, &cfg, &x);
        for (a, b) in out.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_is_batch_consistent() {
    let mut rng = RngState::new(6);
    for cfg in configs() {
        let params = init_params_with_variance(&cfg, &mut rng, 0.5);
        let x = random_matrix(&mut rng, 9, cfg.input_width());
        let (_, batch) = mlp_forward(&params, &cfg, &x).unwrap();
        for i in 0..x.rows() {
            let (_, single) = mlp_forward(&params, &cfg, &x.select_rows(&[i])).unwrap();
            for (a, b) in single.row(0).iter().zip(batch.row(i)) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn shape_mismatch_is_dimension_error() {
    let cfg = MlpConfig::relu(vec![4, 8, 3]).unwrap();
    let params = init_params(&cfg, &mut RngState::new(0));
    let x = DenseMatrix::zeros(2, 5);
    assert!(matches!(mlp_forward(&params, &cfg, &x), Err(Error::Dimension(_))));
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = RngState::new(8);
    for cfg in configs() {
        let params = init_params_with_variance(&cfg, &mut rng, 1.0);
        let x = random_matrix(&mut rng, 5, cfg.input_width());
        let upstream = random_matrix(&mut rng, 5, cfg.output_width());
        let loss = |p: &[LayerParams], x: &DenseMatrix| -> f64 {
            let (_, out) = mlp_forward(p, &cfg, x).unwrap();
            out.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (trace, _) = mlp_forward(&params, &cfg, &x).unwrap();
        let (grads, dx) = mlp_backward(&params, &cfg, &trace, &upstream, true).unwrap();

        let theta = flatten(&params);
        let fd = finite_difference_gradient(|t| Ok(loss(&unflatten(&params, t), &x)), &theta, 1e-6)
            .unwrap();
        for (a, b) in flatten(&grads).iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
        }
        let fd_x = finite_difference_gradient(
            |t| Ok(loss(&params, &DenseMatrix::from_vec(x.rows(), x.cols(), t.to_vec())?)),
            x.as_slice(),
            1e-6,
        )
        .unwrap();
        for (a, b) in dx.unwrap().as_slice().iter().zip(&fd_x) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn backward_is_linear_in_upstream() {
    let cfg = MlpConfig::relu(vec![4, 8, 3]).unwrap();
    let mut rng = RngState::new(9);
    let params = init_params_with_variance(&cfg, &mut rng, 1.0);
    let x = random_matrix(&mut rng, 4, 4);
    let (trace, _) = mlp_forward(&params, &cfg, &x).unwrap();
    let zero = DenseMatrix::zeros(4, 3);
    let (g0, _) = mlp_backward(&params, &cfg, &trace, &zero, false).unwrap();
    assert!(flatten(&g0).iter().all(|&v| v == 0.0));

    let up = random_matrix(&mut rng, 4, 3);
    let mut up2 = up.clone();
    up2.scale(2.0);
    let (g1, _) = mlp_backward(&params, &cfg, &trace, &up, false).unwrap();
    let (g2, _) = mlp_backward(&params, &cfg, &trace, &up2, false).unwrap();
    for (a, b) in flatten(&g1).iter().zip(flatten(&g2)) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn inactive_relu_blocks_gradient() {
    let cfg = MlpConfig::relu(vec![3, 5, 4, 2]).unwrap();
    let mut rng = RngState::new(10);
    let mut params = init_params_with_variance(&cfg, &mut rng, 1.0);
    params[1].bias = vec![-1e6; 4];
    let x = random_matrix(&mut rng, 6, 3);
    let (trace, _) = mlp_forward(&params, &cfg, &x).unwrap();
    let up = random_matrix(&mut rng, 6, 2);
    let (g, dx) = mlp_backward(&params, &cfg, &trace, &up, true).unwrap();
    assert!(flatten(&g[..2]).iter().all(|&v| v == 0.0));
    assert!(dx.unwrap().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn mismatched_trace_is_contract_error() {
    let small = MlpConfig::relu(vec![4, 8, 3]).unwrap();
    let other = MlpConfig::relu(vec![4, 6, 3]).unwrap();
    let mut rng = RngState::new(11);
    let p_small = init_params(&small, &mut rng);
    let p_other = init_params(&other, &mut rng);
    let x = random_matrix(&mut rng, 2, 4);
    let (trace, _) = mlp_forward(&p_small, &small, &x).unwrap();
    let up = DenseMatrix::zeros(2, 3);
    assert!(matches!(
        mlp_backward(&p_other, &other, &trace, &up, false),
        Err(Error::Contract(_))
    ));
    let bad_up = DenseMatrix::zeros(3, 3);
    assert!(matches!(
        mlp_backward(&p_small, &small, &trace, &bad_up, false),
        Err(Error::Contract(_))
    ));
}

#[test]
fn bernoulli_values() {
    let d = 7;
    let ll = bernoulli_log_likelihood(&DenseMatrix::zeros(2, d), &DenseMatrix::filled(2, d, 0.5)).unwrap();
    for v in ll {
        assert!((v + d as f64 * std::f64::consts::LN_2).abs() < 1e-12);
    }
    let ll = bernoulli_log_likelihood(&DenseMatrix::filled(1, 3, 800.0), &DenseMatrix::filled(1, 3, 1.0))
        .unwrap();
    assert!(ll[0].abs() < 1e-300 && ll[0].is_finite());
    let ll = bernoulli_log_likelihood(&DenseMatrix::filled(1, 1, 800.0), &DenseMatrix::zeros(1, 1)).unwrap();
    assert_eq!(ll[0], -800.0);
    assert!(matches!(
        bernoulli_log_likelihood(&DenseMatrix::zeros(1, 2), &DenseMatrix::filled(1, 2, 1.5)),
        Err(Error::Domain(_))
    ));
}

#[test]
fn bernoulli_gradient_matches_finite_differences() {
    let mut rng = RngState::new(12);
    let logits = random_matrix(&mut rng, 1, 6);
    let targets = DenseMatrix::from_fn(1, 6, |_, _| rng.uniform());
    let g = bernoulli_log_likelihood_grad(&logits, &targets).unwrap();
    let fd = finite_difference_gradient(
        |t| Ok(bernoulli_log_likelihood(&DenseMatrix::from_vec(1, 6, t.to_vec())?, &targets)?[0]),
        logits.as_slice(),
        1e-6,
    )
    .unwrap();
    for (a, b) in g.as_slice().iter().zip(&fd) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn softmax_properties() {
    let p = softmax_rows(&DenseMatrix::zeros(2, 4));
    assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));

    let mut rng = RngState::new(13);
    let logits = random_matrix(&mut rng, 3, 5).map(|v| 30.0 * v);
    let p = softmax_rows(&logits);
    for row in p.row_iter() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let shifted = softmax_rows(&logits.map(|v| v + 123.4));
    for (a, b) in p.as_slice().iter().zip(shifted.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn log_probability_gradient_matches_finite_differences() {
    let mut rng = RngState::new(14);
    let logits = random_matrix(&mut rng, 1, 4);
    let p = softmax_rows(&logits);
    for class in 0..4 {
        let fd = finite_difference_gradient(
            |t| Ok(log_softmax_rows(&DenseMatrix::from_vec(1, 4, t.to_vec())?).get(0, class)),
            logits.as_slice(),
            1e-6,
        )
        .unwrap();
        for (j, g) in fd.iter().enumerate() {
            let analytic = f64::from(u8::from(j == class)) - p.get(0, j);
            assert!((analytic - g).abs() < 1e-8);
        }
    }
}

#[test]
fn categorical_head_sums_to_one() {
    let cfg = MlpConfig::relu(vec![4, 8, 3]).unwrap();
    let mut rng = RngState::new(15);
    let params = init_params_with_variance(&cfg, &mut rng, 1.0);
    let probs = categorical_head(&params, &cfg, &random_matrix(&mut rng, 5, 4)).unwrap();
    for row in probs.row_iter() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = MlpConfig::relu(vec![4, 8, 3]).unwrap();
    let mut params = init_params(&cfg, &mut RngState::new(16));
    params[0].bias[2] = f64::MIN_POSITIVE / 3.0;
    params[1].bias[0] = -0.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    save_layers(&path, &params).unwrap();
    let back = load_layers(&path).unwrap();
    assert_eq!(flatten(&params).iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               flatten(&back).iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(back[1].w.shape(), (8, 3));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load_layers(&path), Err(Error::Format { .. })));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_layers(&path), Err(Error::Format { offset: 0, .. })));
    let mut extra = bytes;
    extra.push(0);
    std::fs::write(&path, &extra).unwrap();
    assert!(matches!(load_layers(&path), Err(Error::Format { .. })));
}
