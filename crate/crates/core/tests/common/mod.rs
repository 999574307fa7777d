//! Test-only oracles, kept independent of the code paths they check.
#![allow(dead_code)]

use coverless_core::image::ImageBuffer;
use coverless_core::nn::{init_network, LayerSpec, Network, Role, SeededRng, Tensor};
use coverless_core::train::DiscreteDistribution;

pub const FD_STEP: f64 = 1e-3;

/// `sum(output * proj)` accumulated in f64.
fn projected(net: &Network, input: &Tensor, proj: &[f32]) -> f64 {
    let out = net.predict(input).expect("forward");
    out.data()
        .iter()
        .zip(proj)
        .map(|(&o, &r)| o as f64 * r as f64)
        .sum()
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-9 {
        diff
    } else {
        diff / scale
    }
}

/// Central-difference check of every parameter tensor and of the input
/// gradient. Returns the worst relative error (L2 over each tensor).
pub fn gradient_check(net: &Network, input: &Tensor, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let (out, trace) = net.forward(input).expect("forward");
    let proj: Vec<f32> = (0..out.len()).map(|_| rng.symmetric(1.0) as f32).collect();
    let grads = net
        .backward(
            &trace,
            &Tensor::new(out.shape().to_vec(), proj.clone()).unwrap(),
        )
        .expect("backward");
    let mut worst = 0f64;
    let mut probe = net.clone();
    for (t, analytic) in grads.params.iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let orig = probe.params()[t].data()[i];
            let up = (orig as f64 + FD_STEP) as f32;
            let down = (orig as f64 - FD_STEP) as f32;
            probe.params_mut()[t].data_mut()[i] = up;
            let lp = projected(&probe, input, &proj);
            probe.params_mut()[t].data_mut()[i] = down;
            let lm = projected(&probe, input, &proj);
            probe.params_mut()[t].data_mut()[i] = orig;
            numeric.push((lp - lm) / (up as f64 - down as f64));
        }
        let a: Vec<f64> = analytic.data().iter().map(|&v| v as f64).collect();
        worst = worst.max(rel_err(&a, &numeric));
    }
    let gin = grads.input.expect("input gradient");
    let mut x = input.clone();
    let mut numeric = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        let up = (orig as f64 + FD_STEP) as f32;
        let down = (orig as f64 - FD_STEP) as f32;
        x.data_mut()[i] = up;
        let lp = projected(net, &x, &proj);
        x.data_mut()[i] = down;
        let lm = projected(net, &x, &proj);
        x.data_mut()[i] = orig;
        numeric.push((lp - lm) / (up as f64 - down as f64));
    }
    let a: Vec<f64> = gin.data().iter().map(|&v| v as f64).collect();
    worst.max(rel_err(&a, &numeric))
}

fn pick(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

fn random_input(rng: &mut SeededRng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.symmetric(1.0) as f32).collect()).unwrap()
}

/// Smallest |pre-activation| feeding any LeakyReLU. Central differences
/// are only meaningful when no perturbation can cross the kink at zero.
pub fn kink_margin(net: &Network, input: &Tensor) -> f32 {
    let (_, trace) = net.forward(input).expect("forward");
    net.layers()
        .iter()
        .zip(trace.activations())
        .filter(|(l, _)| matches!(l, LayerSpec::LeakyRelu { .. }))
        .flat_map(|(_, a)| a.data().iter().map(|v| v.abs()))
        .fold(f32::INFINITY, f32::min)
}

/// Smallest kink margin accepted by [`instance`].
pub const KINK_MARGIN: f32 = 2e-3;

/// Randomized small instance exercising one layer kind (`kind` 0..5:
/// conv, transposed conv, dense, leaky relu, tanh) or, for `kind == 5`, a
/// composed three-stage network. Draws are repeated until every LeakyReLU
/// input sits at least [`KINK_MARGIN`] away from zero.
pub fn instance(kind: usize, seed: u64) -> (Network, Tensor) {
    (0..1000u64)
        .map(|attempt| raw_instance(kind, seed.wrapping_add(attempt << 32)))
        .find(|(net, x)| kink_margin(net, x) >= KINK_MARGIN)
        .expect("a kink-free draw within 1000 attempts")
}

fn raw_instance(kind: usize, seed: u64) -> (Network, Tensor) {
    let mut rng = SeededRng::new(seed ^ 0xa5a5_5a5a);
    let batch = pick(&mut rng, 1, 2);
    match kind {
        0 => {
            let (cin, cout, k) = (
                pick(&mut rng, 1, 3),
                pick(&mut rng, 1, 3),
                pick(&mut rng, 1, 4),
            );
            let (s, p) = (pick(&mut rng, 1, 2), pick(&mut rng, 0, k - 1));
            let (h, w) = (pick(&mut rng, k.max(3), 7), pick(&mut rng, k.max(3), 7));
            let layers = vec![LayerSpec::conv(cin, cout, k, s, p), LayerSpec::Tanh];
            let net = init_network(layers, Role::Generator, &[cin, h, w], seed).unwrap();
            (net, random_input(&mut rng, vec![batch, cin, h, w]))
        }
        1 => {
            let (cin, cout, k) = (
                pick(&mut rng, 1, 3),
                pick(&mut rng, 1, 3),
                pick(&mut rng, 2, 4),
            );
            let (s, p) = (pick(&mut rng, 1, 2), pick(&mut rng, 0, 1));
            let (h, w) = (pick(&mut rng, 2, 5), pick(&mut rng, 2, 5));
            let layers = vec![
                LayerSpec::transposed_conv(cin, cout, k, s, p),
                LayerSpec::Tanh,
            ];
            let net = init_network(layers, Role::Generator, &[cin, h, w], seed).unwrap();
            (net, random_input(&mut rng, vec![batch, cin, h, w]))
        }
        2 => {
            let n = pick(&mut rng, 1, 12);
            let net = init_network(vec![LayerSpec::dense(n, 1)], Role::Critic, &[n], seed).unwrap();
            (net, random_input(&mut rng, vec![batch, n]))
        }
        3 => {
            let (n, m) = (pick(&mut rng, 1, 10), pick(&mut rng, 1, 10));
            let layers = vec![
                LayerSpec::dense(n, m),
                LayerSpec::leaky_relu(0.2),
                LayerSpec::dense(m, 1),
            ];
            let net = init_network(layers, Role::Critic, &[n], seed).unwrap();
            (net, random_input(&mut rng, vec![batch, n]))
        }
        4 => {
            let (n, m) = (pick(&mut rng, 1, 10), pick(&mut rng, 1, 10));
            let layers = vec![
                LayerSpec::dense(n, m),
                LayerSpec::Tanh,
                LayerSpec::dense(m, 1),
            ];
            let net = init_network(layers, Role::Critic, &[n], seed).unwrap();
            (net, random_input(&mut rng, vec![batch, n]))
        }
        _ => {
            if rng.next_u64().is_multiple_of(2) {
                let (c1, c2) = (pick(&mut rng, 1, 4), pick(&mut rng, 1, 4));
                let layers = vec![
                    LayerSpec::conv(1, c1, 3, 1, 1),
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::transposed_conv(c1, c2, 2, 2, 0),
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::conv(c2, 1, 3, 2, 1),
                    LayerSpec::Tanh,
                ];
                let (h, w) = (pick(&mut rng, 3, 6), pick(&mut rng, 3, 6));
                let net = init_network(layers, Role::Generator, &[1, h, w], seed).unwrap();
                (net, random_input(&mut rng, vec![batch, 1, h, w]))
            } else {
                let (h, w) = (pick(&mut rng, 4, 8), pick(&mut rng, 4, 8));
                let c = pick(&mut rng, 1, 4);
                let conv = LayerSpec::conv(1, c, 4, 2, 1);
                let flat: usize = conv.output_shape(&[1, h, w]).unwrap().iter().product();
                let layers = vec![
                    conv,
                    LayerSpec::leaky_relu(0.2),
                    LayerSpec::dense(flat, 4),
                    LayerSpec::Tanh,
                    LayerSpec::dense(4, 1),
                ];
                let net = init_network(layers, Role::Critic, &[1, h, w], seed).unwrap();
                (net, random_input(&mut rng, vec![batch, 1, h, w]))
            }
        }
    }
}

/// Random distribution with 1..=`max_len` points drawn from a coarse grid,
/// so that repeated support points occur.
pub fn random_distribution(rng: &mut SeededRng, max_len: usize) -> DiscreteDistribution {
    let n = pick(rng, 1, max_len);
    let support: Vec<f64> = (0..n)
        .map(|_| (rng.symmetric(5.0) * 4.0).round() / 4.0)
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    DiscreteDistribution::new(support, raw.iter().map(|m| m / total).collect())
        .expect("valid distribution")
}

/// Flips `fraction` of the pixels to 0 or 255 at random positions.
pub fn salt_and_pepper(img: &ImageBuffer, fraction: f64, seed: u64) -> ImageBuffer {
    let mut rng = SeededRng::new(seed);
    let mut out = img.clone();
    let n = out.pixels().len();
    let flips = (n as f64 * fraction).round() as usize;
    for _ in 0..flips {
        let i = (rng.next_u64() % n as u64) as usize;
        out.pixels_mut()[i] = if rng.next_u64().is_multiple_of(2) {
            0
        } else {
            255
        };
    }
    out
}
