//! Finite-difference checks for every differentiable op and the encoder.
//! Each check panics on failure.

use std::collections::BTreeMap;

use harlens::diffcore::ops::{init_lstm, recurrent_on_tape};
use harlens::diffcore::{grad_check, DenseArray, Direction, ParamInit, ParamStore, Tape, Var};
use harlens::encoder::{build_encoder, forward_on_tape, AtomicSource, EncoderConfig};
use harlens::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TRIALS: u64 = 20;
const OP_TOL: f64 = 1e-4;

type Grads = BTreeMap<String, DenseArray>;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray {
    let n = shape.iter().product();
    DenseArray::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Weighted sum of an output with fixed random weights, so every output
/// element gets a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let weights: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    tape.dot(out, &weights)
}

fn check<F>(name: &str, point: &ParamStore, tol: f64, f: F)
where
    F: Fn(&ParamStore) -> Result<(f64, Grads)>,
{
    let report = grad_check(point, f).unwrap();
    assert!(
        report.max_rel_error < tol,
        "{name}: max relative error {} at {:?}",
        report.max_rel_error,
        report.worst
    );
}

pub fn linear_gradients() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let (b, i, o) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
        let mut p = ParamStore::new(trial);
        p.insert("x", random(&mut rng, &[b, i])).unwrap();
        p.insert("w", random(&mut rng, &[i, o])).unwrap();
        p.insert("b", random(&mut rng, &[o])).unwrap();
        check("linear", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let (x, w, bb) = (t.param(p, "x")?, t.param(p, "w")?, t.param(p, "b")?);
            let out = t.linear(x, w, bb)?;
            let loss = weighted_sum(&mut t, out, trial)?;
            Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
        });
    }
}

pub fn linear_sum_gradient_wrt_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut p = ParamStore::new(0);
    p.insert("x", random(&mut rng, &[1, 3])).unwrap();
    p.insert("w", random(&mut rng, &[3, 2])).unwrap();
    p.insert("b", random(&mut rng, &[2])).unwrap();
    check("linear-sum", &p, OP_TOL, |p| {
        let mut t = Tape::new();
        let (x, w, b) = (t.param(p, "x")?, t.param(p, "w")?, t.param(p, "b")?);
        let out = t.linear(x, w, b)?;
        let s = t.sum(out);
        Ok((t.value(s).data()[0], t.backward(s)?.into_params()))
    });
}

pub fn conv1d_gradients() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let groups = rng.gen_range(1..3);
        let c = groups * rng.gen_range(1..3);
        let f = groups * rng.gen_range(1..3);
        let k = rng.gen_range(1..4);
        let t_len = k + rng.gen_range(0..6);
        let stride = rng.gen_range(1..3);
        let mut p = ParamStore::new(trial);
        p.insert("x", random(&mut rng, &[c, t_len])).unwrap();
        p.insert("k", random(&mut rng, &[f, c / groups, k])).unwrap();
        p.insert("b", random(&mut rng, &[f])).unwrap();
        check("conv1d", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let (x, kk, b) = (t.param(p, "x")?, t.param(p, "k")?, t.param(p, "b")?);
            let out = t.conv1d(x, kk, Some(b), stride, groups)?;
            let loss = weighted_sum(&mut t, out, trial)?;
            Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
        });
    }
}

pub fn recurrent_gradients_all_directions() {
    for trial in 0..TRIALS {
        for direction in [Direction::Forward, Direction::Backward, Direction::Bidirectional] {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
            let mut init = ParamInit::new(trial);
            init_lstm(&mut init, "rnn", 2, 2, direction).unwrap();
            let mut p = init.finish();
            // Move biases away from their structured init.
            let names: Vec<String> = p.names().map(str::to_string).collect();
            for n in names {
                let shape = p.get(&n).unwrap().shape().to_vec();
                p.set(&n, random(&mut rng, &shape)).unwrap();
            }
            p.insert("seq", random(&mut rng, &[3, 2])).unwrap();
            check("lstm", &p, OP_TOL, |p| {
                let mut t = Tape::new();
                let seq = t.param(p, "seq")?;
                let out = recurrent_on_tape(&mut t, seq, p, "rnn", direction)?;
                let loss = weighted_sum(&mut t, out, trial)?;
                Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
            });
        }
    }
}

pub fn recurrent_summed_output_gradient() {
    let mut init = ParamInit::new(3);
    init_lstm(&mut init, "rnn", 2, 2, Direction::Forward).unwrap();
    let mut p = init.finish();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    p.insert("seq", random(&mut rng, &[3, 2])).unwrap();
    check("lstm-sum", &p, OP_TOL, |p| {
        let mut t = Tape::new();
        let seq = t.param(p, "seq")?;
        let out = recurrent_on_tape(&mut t, seq, p, "rnn", Direction::Forward)?;
        let s = t.sum(out);
        Ok((t.value(s).data()[0], t.backward(s)?.into_params()))
    });
}

pub fn elementwise_and_reshaping_gradients() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let mut p = ParamStore::new(trial);
        p.insert("a", random(&mut rng, &[3, 2])).unwrap();
        p.insert("b", random(&mut rng, &[3, 4])).unwrap();
        check("elementwise", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let (a, b) = (t.param(p, "a")?, t.param(p, "b")?);
            let ta = t.tanh(a);
            let rb = t.relu(b);
            let cat = t.concat_cols(ta, rb)?;
            let tr = t.transpose(cat)?;
            let back = t.transpose(tr)?;
            let m = t.mean_rows(back);
            let l = t.last_row(cat);
            let both = t.add(m, l)?;
            let scaled = t.scale(both, 1.7);
            let loss = weighted_sum(&mut t, scaled, trial)?;
            Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
        });
    }
}

pub fn softmax_and_loss_gradients() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + trial);
        let n = rng.gen_range(2..6);
        let target = random_simplex(&mut rng, n);
        let mut sparse_target = vec![0.0; n];
        sparse_target[0] = 0.5;
        sparse_target[n - 1] += 0.5;
        let class = rng.gen_range(0..n);
        let mut p = ParamStore::new(trial);
        p.insert("logits", random(&mut rng, &[n])).unwrap();
        for (label, tgt) in [("kl", target.clone()), ("kl-sparse", sparse_target.clone())] {
            check(label, &p, OP_TOL, |p| {
                let mut t = Tape::new();
                let z = t.param(p, "logits")?;
                let s = t.softmax(z)?;
                let loss = t.mean_kl(s, &tgt)?;
                Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
            });
        }
        check("ce", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let z = t.param(p, "logits")?;
            let s = t.softmax(z)?;
            let loss = t.cross_entropy(s, class)?;
            Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
        });
        check("mse", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let z = t.param(p, "logits")?;
            let s = t.softmax(z)?;
            let loss = t.mse(s, &target)?;
            Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
        });
        check("softmax-index", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let z = t.param(p, "logits")?;
            let s = t.softmax(z)?;
            let pick = t.index(s, class)?;
            Ok((t.value(pick).data()[0], t.backward(pick)?.into_params()))
        });
    }
}

pub fn kl_gradient_wrt_raw_prediction() {
    for trial in 0..TRIALS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + trial);
        let n = rng.gen_range(2..6);
        let target = random_simplex(&mut rng, n);
        let mut p = ParamStore::new(trial);
        p.insert("p", DenseArray::vector(random_simplex(&mut rng, n)).unwrap()).unwrap();
        check("kl-raw", &p, OP_TOL, |p| {
            let mut t = Tape::new();
            let x = t.param(p, "p")?;
            let loss = t.mean_kl(x, &target)?;
            Ok((t.value(loss).data()[0], t.backward(loss)?.into_params()))
        });
    }
}

pub fn cross_entropy_logit_gradient_is_prob_minus_one_hot() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..TRIALS {
        let logits = random(&mut rng, &[4]);
        let class = rng.gen_range(0..4);
        let mut t = Tape::new();
        let z = t.input(logits);
        let s = t.softmax(z).unwrap();
        let loss = t.cross_entropy(s, class).unwrap();
        let g = t.backward(loss).unwrap();
        let y = t.value(s).data().to_vec();
        for (i, gi) in g.wrt(z).unwrap().data().iter().enumerate() {
            let expected = y[i] - if i == class { 1.0 } else { 0.0 };
            assert!((gi - expected).abs() < 1e-12);
        }
    }
}

fn tiny_config(seed: u64) -> EncoderConfig {
    EncoderConfig {
        channels: 2,
        steps: 12,
        n_atomic: 3,
        n_complex: 2,
        kernel: 3,
        conv_stride: 2,
        features_per_channel: 2,
        fusion_width: 4,
        hidden: 3,
        atomic_source: if seed % 2 == 0 { AtomicSource::Fusion } else { AtomicSource::Recurrent },
        seed,
    }
}

pub fn tiny_encoder_end_to_end_gradient() {
    for trial in 0..TRIALS {
        let cfg = tiny_config(trial);
        let params = build_encoder(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(600 + trial);
        let window = random(&mut rng, &[2, 12]);
        let target = random_simplex(&mut rng, 3);
        let class = rng.gen_range(0..2);
        check("encoder", &params, 1e-3, |p| {
            let mut t = Tape::new();
            let nodes = forward_on_tape(&cfg, p, &mut t, &window)?;
            let kl = t.mean_kl(nodes.atomic_probs, &target)?;
            let ce = t.cross_entropy(nodes.complex_probs, class)?;
            let total = t.add(kl, ce)?;
            Ok((t.value(total).data()[0], t.backward(total)?.into_params()))
        });
    }
}

/// Every check in this module, by name.
pub const ALL: &[(&str, fn())] = &[
    ("linear_gradients", linear_gradients),
    ("linear_sum_gradient_wrt_weights", linear_sum_gradient_wrt_weights),
    ("conv1d_gradients", conv1d_gradients),
    ("recurrent_gradients_all_directions", recurrent_gradients_all_directions),
    ("recurrent_summed_output_gradient", recurrent_summed_output_gradient),
    ("elementwise_and_reshaping_gradients", elementwise_and_reshaping_gradients),
    ("softmax_and_loss_gradients", softmax_and_loss_gradients),
    ("kl_gradient_wrt_raw_prediction", kl_gradient_wrt_raw_prediction),
    ("cross_entropy_logit_gradient_is_prob_minus_one_hot", cross_entropy_logit_gradient_is_prob_minus_one_hot),
    ("tiny_encoder_end_to_end_gradient", tiny_encoder_end_to_end_gradient),
];
