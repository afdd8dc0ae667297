use mcrom_core::nn::{kaiming_uniform_init, LayerKind, LayerKind::*, Network, NnError, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn loss(net: &Network, x: &Tensor, r: &[f64]) -> f64 {
    net.predict(x).unwrap().data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-300)
}

/// Central differences with `h = 1e-6` against the analytic gradients.
fn check(input: Vec<usize>, layers: Vec<LayerKind>, batch: usize) {
    let name = format!("{layers:?}");
    let mut net = Network::new(input.clone(), layers, 11).unwrap();
    for (i, p) in net.params.iter_mut().enumerate() {
        *p += 0.05 * ((i * 7) % 5) as f64 - 0.1;
    }
    assert!(net.n_params() <= 1000, "{name}: toy net too large");
    let mut shape = vec![batch];
    shape.extend(&input);
    let x = Tensor::new(shape.clone(), random(shape.iter().product(), 3)).unwrap();
    let r = random(batch * net.output_len(), 5);
    let (_, tape) = net.forward(&x).unwrap();
    let (grads, dx) = net.backward(&tape, &Tensor::new(vec![r.len()], r.clone()).unwrap()).unwrap();

    let h = 1e-6;
    let mut fd = vec![0.0; net.n_params()];
    for k in 0..net.n_params() {
        let orig = net.params[k];
        net.params[k] = orig + h;
        let lp = loss(&net, &x, &r);
        net.params[k] = orig - h;
        let lm = loss(&net, &x, &r);
        net.params[k] = orig;
        fd[k] = (lp - lm) / (2.0 * h);
    }
    let e = rel(&grads, &fd);
    assert!(e <= 1e-5, "{name}: parameter gradient rel err {e:e}");

    let mut fdx = vec![0.0; x.len()];
    for k in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[k] += h;
        let mut xm = x.clone();
        xm.data_mut()[k] -= h;
        fdx[k] = (loss(&net, &xp, &r) - loss(&net, &xm, &r)) / (2.0 * h);
    }
    let e = rel(dx.data(), &fdx);
    assert!(e <= 1e-5, "{name}: input gradient rel err {e:e}");
}

#[test]
fn dense_gradients() {
    check(vec![6], vec![Dense { inp: 6, out: 4 }, Elu, Dense { inp: 4, out: 3 }], 3);
}

#[test]
fn conv1d_gradients() {
    check(vec![2, 11], vec![Conv1d { cin: 2, cout: 3, k: 5, s: 2, p: 2 }, Elu], 2);
}

#[test]
fn conv2d_gradients() {
    check(vec![2, 7, 6], vec![Conv2d { cin: 2, cout: 3, k: 3, s: 2, p: 1 }, Elu], 2);
}

#[test]
fn conv_transpose1d_gradients() {
    check(vec![3, 5], vec![ConvTranspose1d { cin: 3, cout: 2, k: 5, s: 2, p: 3, op: 1 }, Elu], 2);
}

#[test]
fn conv_transpose2d_gradients() {
    check(vec![2, 3, 4], vec![ConvTranspose2d { cin: 2, cout: 2, k: 5, s: 3, p: 2, op: 0 }, Elu], 2);
}

#[test]
fn reshape_chain_gradients() {
    check(
        vec![16],
        vec![
            Reshape { shape: vec![1, 4, 4] },
            Conv2d { cin: 1, cout: 2, k: 3, s: 1, p: 1 },
            Elu,
            Reshape { shape: vec![32] },
            Dense { inp: 32, out: 3 },
        ],
        2,
    );
}

#[test]
fn single_dense_closed_form() {
    // L = ½‖Wx + b − y‖²: dW = r xᵀ, db = r.
    let net = Network::new(vec![3], vec![Dense { inp: 3, out: 2 }], 1).unwrap();
    let x = [0.5, -1.0, 2.0];
    let y = [0.3, 0.7];
    let (out, tape) = net.forward(&Tensor::new(vec![1, 3], x.to_vec()).unwrap()).unwrap();
    let res: Vec<f64> = out.data().iter().zip(&y).map(|(a, b)| a - b).collect();
    let (g, _) = net.backward(&tape, &Tensor::new(vec![1, 2], res.clone()).unwrap()).unwrap();
    for i in 0..2 {
        for j in 0..3 {
            assert!((g[i * 3 + j] - res[i] * x[j]).abs() < 1e-14);
        }
        assert!((g[6 + i] - res[i]).abs() < 1e-14);
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let net = Network::new(vec![1, 8], vec![Conv1d { cin: 1, cout: 2, k: 3, s: 1, p: 1 }, Elu], 2).unwrap();
    let (_, tape) = net.forward(&Tensor::new(vec![2, 1, 8], random(16, 1)).unwrap()).unwrap();
    let (g, dx) = net.backward(&tape, &Tensor::zeros(vec![2, 2, 8])).unwrap();
    assert!(g.iter().chain(dx.data()).all(|v| *v == 0.0));
}

#[test]
fn backward_without_forward_is_state_error() {
    let net = Network::new(vec![2], vec![Dense { inp: 2, out: 2 }], 0).unwrap();
    let r = net.backward(&Default::default(), &Tensor::zeros(vec![1, 2]));
    assert!(matches!(r, Err(NnError::State(_))));
}

#[test]
fn shape_mismatch_names_layer() {
    let e = Network::new(vec![10], vec![Dense { inp: 10, out: 4 }, Elu, Dense { inp: 5, out: 1 }], 0).unwrap_err();
    assert!(matches!(e, NnError::Shape { layer: 2, .. }), "{e}");
}

#[test]
fn kaiming_bounds_and_variance() {
    let kind = Dense { inp: 100, out: 50 };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = kaiming_uniform_init(&kind, &mut rng);
    let b = (6.0f64 / 100.0).sqrt();
    assert!(w[..5000].iter().all(|v| v.abs() <= b));
    assert!(w[5000..].iter().all(|v| *v == 0.0));
    let big = Dense { inp: 100, out: 1000 };
    let w = kaiming_uniform_init(&big, &mut ChaCha8Rng::seed_from_u64(9));
    let n = 100_000;
    let mean = w[..n].iter().sum::<f64>() / n as f64;
    let var = w[..n].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    assert!((var / (b * b / 3.0) - 1.0).abs() < 0.05, "variance {var}");
    let again = kaiming_uniform_init(&big, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(w, again);
}

#[test]
fn weights_round_trip() {
    let layers =
        vec![Conv1d { cin: 1, cout: 2, k: 3, s: 1, p: 1 }, Elu, Reshape { shape: vec![8] }, Dense { inp: 8, out: 2 }];
    let a = Network::new(vec![1, 4], layers.clone(), 1).unwrap();
    let mut buf = Vec::new();
    a.write_weights(&mut buf).unwrap();
    let mut b = Network::new(vec![1, 4], layers, 2).unwrap();
    assert_ne!(a, b);
    b.read_weights(&mut buf.as_slice()).unwrap();
    assert_eq!(a, b);
    let mut other = Network::new(vec![3], vec![Dense { inp: 3, out: 2 }], 0).unwrap();
    assert!(matches!(other.read_weights(&mut buf.as_slice()), Err(NnError::Checkpoint(_))));
}
