//! Shared oracles for the integration tests.
#![allow(dead_code)]

use chaoswave::nn::layers::{
    batchnorm_train, batchnorm_train_backward, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, BN_EPSILON,
};
use chaoswave::nn::{batch_loss, softmax_cross_entropy, Mode, Network, NetworkSpec, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely: the conv bias in
/// front of batch norm has an exactly-zero analytic gradient.
pub const FD_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(FD_FLOOR)
}

/// Central difference of `f` in coordinate `i` of `x`.
pub fn central_difference(f: &mut dyn FnMut(&Tensor) -> f64, x: &Tensor, i: usize) -> f64 {
    let mut p = x.clone();
    p.data_mut()[i] += FD_STEP;
    let up = f(&p);
    p.data_mut()[i] -= 2.0 * FD_STEP;
    let down = f(&p);
    (up - down) / (2.0 * FD_STEP)
}

/// Tally of a finite-difference comparison.
#[derive(Debug, Default, Clone, Copy)]
pub struct FdTally {
    pub checked: usize,
    pub max_rel: f64,
}

impl FdTally {
    pub fn merge(&mut self, other: FdTally) {
        self.checked += other.checked;
        self.max_rel = self.max_rel.max(other.max_rel);
    }
}

/// Compares every coordinate of `analytic` with central differences of `f` around `x`.
pub fn check_all(f: &mut dyn FnMut(&Tensor) -> f64, x: &Tensor, analytic: &Tensor) -> FdTally {
    let mut t = FdTally::default();
    for i in 0..x.len() {
        let n = central_difference(f, x, i);
        t.max_rel = t.max_rel.max(rel_err(analytic.data()[i], n));
        t.checked += 1;
    }
    t
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Per-layer checks of the scalar objective `sum(r * layer(x))`.
pub fn layer_checks(seed: u64) -> Vec<(&'static str, FdTally)> {
    let mut g = rng(seed);
    let mut out = Vec::new();

    // convolution
    let x = random_tensor(&[2, 2, 5, 6], &mut g);
    let w = random_tensor(&[3, 2, 3, 3], &mut g);
    let b = random_tensor(&[3], &mut g);
    let r = random_tensor(&[2, 3, 5, 6], &mut g);
    let (gx, gw, gb) = conv2d_backward(&x, &w, &r).unwrap();
    let mut t = check_all(&mut |x| dot(&r, &conv2d_forward(x, &w, &b).unwrap()), &x, &gx);
    t.merge(check_all(&mut |w| dot(&r, &conv2d_forward(&x, w, &b).unwrap()), &w, &gw));
    t.merge(check_all(&mut |b| dot(&r, &conv2d_forward(&x, &w, b).unwrap()), &b, &gb));
    out.push(("conv3x3", t));

    // batch norm, training mode
    let x = random_tensor(&[3, 2, 3, 4], &mut g);
    let gamma = random_tensor(&[2], &mut g);
    let beta = random_tensor(&[2], &mut g);
    let r = random_tensor(&[3, 2, 3, 4], &mut g);
    let (_, cache) = batchnorm_train(&x, &gamma, &beta, BN_EPSILON).unwrap();
    let (gx, gg, gbt) = batchnorm_train_backward(&cache, &gamma, &r).unwrap();
    let bn = |x: &Tensor, gm: &Tensor, bt: &Tensor| batchnorm_train(x, gm, bt, BN_EPSILON).unwrap().0;
    let mut t = check_all(&mut |x| dot(&r, &bn(x, &gamma, &beta)), &x, &gx);
    t.merge(check_all(&mut |gm| dot(&r, &bn(&x, gm, &beta)), &gamma, &gg));
    t.merge(check_all(&mut |bt| dot(&r, &bn(&x, &gamma, bt)), &beta, &gbt));
    out.push(("batch_norm", t));

    // ReLU, inputs kept away from the kink
    let x = random_tensor(&[2, 2, 3, 3], &mut g).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let r = random_tensor(&[2, 2, 3, 3], &mut g);
    let gx = relu_backward(&x, &r);
    out.push(("relu", check_all(&mut |x| dot(&r, &relu(x)), &x, &gx)));

    // max pooling
    let x = random_tensor(&[2, 2, 4, 6], &mut g);
    let r = random_tensor(&[2, 2, 2, 3], &mut g);
    let (_, argmax) = maxpool2x2(&x).unwrap();
    let gx = maxpool2x2_backward(&r, &argmax, x.shape());
    out.push(("max_pool", check_all(&mut |x| dot(&r, &maxpool2x2(x).unwrap().0), &x, &gx)));

    // dense
    let x = random_tensor(&[3, 2, 2, 2], &mut g);
    let w = random_tensor(&[4, 8], &mut g);
    let b = random_tensor(&[4], &mut g);
    let r = random_tensor(&[3, 4], &mut g);
    let (gx, gw, gb) = dense_backward(&x, &w, &r);
    let mut t = check_all(&mut |x| dot(&r, &dense_forward(x, &w, &b).unwrap()), &x, &gx);
    t.merge(check_all(&mut |w| dot(&r, &dense_forward(&x, w, &b).unwrap()), &w, &gw));
    t.merge(check_all(&mut |b| dot(&r, &dense_forward(&x, &w, b).unwrap()), &b, &gb));
    out.push(("dense", t));

    // weighted softmax cross-entropy
    let mut t = FdTally::default();
    for label in [0, 1] {
        let z = random_tensor(&[2], &mut g).map(|v| 3.0 * v);
        let weights = (0.7, 1.9);
        let (_, grad) = softmax_cross_entropy(z.data(), label, weights).unwrap();
        let grad = Tensor::from_vec(&[2], grad).unwrap();
        t.merge(check_all(
            &mut |z| softmax_cross_entropy(z.data(), label, weights).unwrap().0,
            &z,
            &grad,
        ));
    }
    out.push(("softmax_cross_entropy", t));
    out
}

/// Checks every parameter of a small conv/bn/relu/pool network on an 8x8
/// input against central differences of the batch loss.
pub fn network_check(channels: &[usize], seed: u64) -> FdTally {
    let mut g = rng(seed);
    let spec = NetworkSpec::conv_blocks((8, 8), channels, 2);
    let mut net = Network::new(spec).unwrap();
    net.initialize(&mut g, 0.5).unwrap();
    // non-trivial batch-norm affine parameters
    for p in net.params_mut() {
        if p.shape().len() == 1 {
            for v in p.data_mut() {
                *v += g.random_range(-0.3..0.3);
            }
        }
    }
    let x = random_tensor(&[3, 1, 8, 8], &mut g);
    let labels = [0, 1, 1];
    let weights = (1.3, 0.7);
    let grads = net.gradients(&x, &labels, weights).unwrap().grads;

    let mut tally = FdTally::default();
    let count = net.params().len();
    for ti in 0..count {
        let base = net.params()[ti].clone();
        let mut loss_with = |p: &Tensor| {
            let mut probe = net.clone();
            *probe.params_mut()[ti] = p.clone();
            let (logits, _) = probe.forward(&x, Mode::Train).unwrap();
            batch_loss(&logits, &labels, weights).unwrap().0
        };
        tally.merge(check_all(&mut loss_with, &base, &grads[ti]));
    }
    tally
}
