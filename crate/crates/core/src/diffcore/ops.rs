//! Convenience wrappers: the tape ops evaluated once, without gradients, plus
//! the parameter layout of recurrent layers.

use super::{DenseArray, ParamInit, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Direction of a recurrent pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    Bidirectional,
}

pub fn linear_forward(x: &DenseArray, weights: &DenseArray, bias: &DenseArray) -> Result<DenseArray> {
    let mut tape = Tape::new();
    let (x, w, b) = (tape.input(x.clone()), tape.input(weights.clone()), tape.input(bias.clone()));
    let out = tape.linear(x, w, b)?;
    Ok(tape.value(out).clone())
}

pub fn conv1d_forward(x: &DenseArray, kernels: &DenseArray, stride: usize, groups: usize) -> Result<DenseArray> {
    let mut tape = Tape::new();
    let (x, k) = (tape.input(x.clone()), tape.input(kernels.clone()));
    let out = tape.conv1d(x, k, None, stride, groups)?;
    Ok(tape.value(out).clone())
}

pub fn softmax(v: &DenseArray) -> Result<DenseArray> {
    let mut tape = Tape::new();
    let x = tape.input(v.clone());
    let out = tape.softmax(x)?;
    Ok(tape.value(out).clone())
}

/// Parameter names of one LSTM direction under `prefix`.
pub fn lstm_param_names(prefix: &str) -> [String; 3] {
    [format!("{prefix}.w_ih"), format!("{prefix}.w_hh"), format!("{prefix}.b")]
}

fn direction_prefixes(prefix: &str, direction: Direction) -> Vec<(String, bool)> {
    match direction {
        Direction::Forward => vec![(prefix.to_string(), false)],
        Direction::Backward => vec![(prefix.to_string(), true)],
        Direction::Bidirectional => vec![(format!("{prefix}.fwd"), false), (format!("{prefix}.bwd"), true)],
    }
}

/// Adds LSTM parameters for `direction` to an initializer: uniform
/// `±1/sqrt(H)` weights, zero biases except the forget gate at 1.
pub fn init_lstm(init: &mut ParamInit, prefix: &str, input: usize, hidden: usize, direction: Direction) -> Result<()> {
    for (p, _) in direction_prefixes(prefix, direction) {
        let [w_ih, w_hh, b] = lstm_param_names(&p);
        init.uniform_fan_in(&w_ih, &[input, 4 * hidden], hidden)?;
        init.uniform_fan_in(&w_hh, &[hidden, 4 * hidden], hidden)?;
        init.constant(&b, &[4 * hidden], 0.0)?;
        init.fill_range(&b, hidden..2 * hidden, 1.0)?;
    }
    Ok(())
}

/// Records a (possibly bidirectional) LSTM pass on `tape`. Bidirectional
/// output is `[T×2H]`: forward states, then the time-aligned backward states.
pub fn recurrent_on_tape(
    tape: &mut Tape,
    seq: Var,
    params: &ParamStore,
    prefix: &str,
    direction: Direction,
) -> Result<Var> {
    if tape.value(seq).ndim() != 2 || tape.value(seq).shape()[0] == 0 {
        return Err(Error::Length("recurrent input must be a non-empty [T×D] sequence".into()));
    }
    let mut outs = Vec::new();
    for (p, reverse) in direction_prefixes(prefix, direction) {
        let [w_ih, w_hh, b] = lstm_param_names(&p);
        let (w_ih, w_hh, b) = (tape.param(params, &w_ih)?, tape.param(params, &w_hh)?, tape.param(params, &b)?);
        outs.push(tape.lstm(seq, w_ih, w_hh, b, reverse)?);
    }
    match outs.as_slice() {
        [one] => Ok(*one),
        [f, b] => tape.concat_cols(*f, *b),
        _ => unreachable!(),
    }
}

pub fn recurrent_forward(seq: &DenseArray, params: &ParamStore, prefix: &str, direction: Direction) -> Result<DenseArray> {
    let mut tape = Tape::new();
    let x = tape.input(seq.clone());
    let out = recurrent_on_tape(&mut tape, x, params, prefix, direction)?;
    Ok(tape.value(out).clone())
}
