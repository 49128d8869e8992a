//! Channel-wise convolutional / recurrent sensor encoder with an atomic
//! distribution head and a complex classification head.
//!
//! Layer stack for one `[C × T]` window:
//!
//! 1. grouped conv1d, `F` filters per input channel, ReLU → `[C·F × T']`
//! 2. sensor fusion: per-step linear `C·F → D`, tanh → `[T' × D]`
//!    (the activation cache)
//! 3. bidirectional LSTM → `[T' × 2H]`
//! 4. atomic head: per-step MLP `D → H → n` on the fused sequence (or
//!    `2H → H → n` on the recurrent output), averaged over time, softmax
//! 5. complex head: LSTM `2H → H`, final state, dense `H → M`, softmax

mod checkpoint;

use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::dataset::SensorWindow;
use crate::diffcore::ops::{init_lstm, recurrent_on_tape};
use crate::diffcore::{DenseArray, Direction, ParamInit, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Which sequence the atomic head reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomicSource {
    /// The fused per-step features, so each step's logits depend only on its
    /// own receptive field.
    #[default]
    Fusion,
    /// The bidirectional recurrent output.
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub channels: usize,
    pub steps: usize,
    pub n_atomic: usize,
    pub n_complex: usize,
    pub kernel: usize,
    pub conv_stride: usize,
    pub features_per_channel: usize,
    pub fusion_width: usize,
    pub hidden: usize,
    #[serde(default)]
    pub atomic_source: AtomicSource,
    pub seed: u64,
}

impl EncoderConfig {
    /// Desk-scale defaults: F=4, K=5, D=32, H=32, stride 4.
    pub fn desk(channels: usize, steps: usize, n_atomic: usize, n_complex: usize, seed: u64) -> Self {
        Self {
            channels,
            steps,
            n_atomic,
            n_complex,
            kernel: 5,
            conv_stride: 4,
            features_per_channel: 4,
            fusion_width: 32,
            hidden: 32,
            atomic_source: AtomicSource::Fusion,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("channels", self.channels),
            ("steps", self.steps),
            ("n_atomic", self.n_atomic),
            ("n_complex", self.n_complex),
            ("kernel", self.kernel),
            ("conv_stride", self.conv_stride),
            ("features_per_channel", self.features_per_channel),
            ("fusion_width", self.fusion_width),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.kernel > self.steps {
            return Err(Error::Config(format!("kernel {} exceeds window length {}", self.kernel, self.steps)));
        }
        Ok(())
    }

    /// Time steps after the convolution.
    pub fn conv_steps(&self) -> usize {
        (self.steps - self.kernel) / self.conv_stride + 1
    }

    pub fn conv_features(&self) -> usize {
        self.channels * self.features_per_channel
    }

    /// Per-step input width of the atomic head.
    pub fn atomic_input(&self) -> usize {
        match self.atomic_source {
            AtomicSource::Fusion => self.fusion_width,
            AtomicSource::Recurrent => 2 * self.hidden,
        }
    }
}

/// Parameter names used by the encoder.
pub mod names {
    pub const CONV_W: &str = "conv.w";
    pub const CONV_B: &str = "conv.b";
    pub const FUSION_W: &str = "fusion.w";
    pub const FUSION_B: &str = "fusion.b";
    pub const BILSTM: &str = "bilstm";
    pub const ATOMIC_W1: &str = "atomic.w1";
    pub const ATOMIC_B1: &str = "atomic.b1";
    pub const ATOMIC_W2: &str = "atomic.w2";
    pub const ATOMIC_B2: &str = "atomic.b2";
    pub const COMPLEX_LSTM: &str = "complex_lstm";
    pub const COMPLEX_W: &str = "complex.w";
    pub const COMPLEX_B: &str = "complex.b";

    /// Parameters that only feed the atomic head.
    pub const ATOMIC_HEAD: [&str; 4] = [ATOMIC_W1, ATOMIC_B1, ATOMIC_W2, ATOMIC_B2];
}

/// Initializes all encoder parameters from `cfg.seed`.
pub fn build_encoder(cfg: &EncoderConfig) -> Result<ParamStore> {
    use names::*;
    cfg.validate()?;
    let (cf, k, d, h) = (cfg.conv_features(), cfg.kernel, cfg.fusion_width, cfg.hidden);
    let mut init = ParamInit::new(cfg.seed);
    init.uniform_fan_in(CONV_W, &[cf, 1, k], k)?;
    init.uniform_fan_in(CONV_B, &[cf], k)?;
    init.uniform_fan_in(FUSION_W, &[cf, d], cf)?;
    init.uniform_fan_in(FUSION_B, &[d], cf)?;
    init_lstm(&mut init, BILSTM, d, h, Direction::Bidirectional)?;
    let a = cfg.atomic_input();
    init.uniform_fan_in(ATOMIC_W1, &[a, h], a)?;
    init.uniform_fan_in(ATOMIC_B1, &[h], a)?;
    init.uniform_fan_in(ATOMIC_W2, &[h, cfg.n_atomic], h)?;
    init.uniform_fan_in(ATOMIC_B2, &[cfg.n_atomic], h)?;
    init_lstm(&mut init, COMPLEX_LSTM, 2 * h, h, Direction::Forward)?;
    init.uniform_fan_in(COMPLEX_W, &[h, cfg.n_complex], h)?;
    init.uniform_fan_in(COMPLEX_B, &[cfg.n_complex], h)?;
    Ok(init.finish())
}

/// Handles to the intermediate nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub input: Var,
    /// Per-channel conv features after ReLU, `[C·F × T']`.
    pub channel_features: Var,
    /// Fusion output, `[T' × D]`.
    pub fusion: Var,
    /// Bidirectional recurrent output, `[T' × 2H]`.
    pub sequence: Var,
    /// Atomic-head hidden layer per step, `[T' × H]`.
    pub atomic_hidden: Var,
    /// Atomic logits per step, `[T' × n]`.
    pub atomic_step_logits: Var,
    pub atomic_logits: Var,
    pub atomic_probs: Var,
    pub complex_logits: Var,
    pub complex_probs: Var,
}

/// Records the forward pass of `window` (shape `[C × T]`) on `tape`.
pub fn forward_on_tape(cfg: &EncoderConfig, params: &ParamStore, tape: &mut Tape, window: &DenseArray) -> Result<ForwardNodes> {
    use names::*;
    if window.shape() != [cfg.channels, cfg.steps] {
        return Err(Error::Dimension(format!(
            "window {:?} does not match encoder input [{}, {}]",
            window.shape(),
            cfg.channels,
            cfg.steps
        )));
    }
    let input = tape.input(window.clone());
    let (cw, cb) = (tape.param(params, CONV_W)?, tape.param(params, CONV_B)?);
    let conv = tape.conv1d(input, cw, Some(cb), cfg.conv_stride, cfg.channels)?;
    let channel_features = tape.relu(conv);
    let per_step = tape.transpose(channel_features)?;
    let (fw, fb) = (tape.param(params, FUSION_W)?, tape.param(params, FUSION_B)?);
    let fused = tape.linear(per_step, fw, fb)?;
    let fusion = tape.tanh(fused);
    let sequence = recurrent_on_tape(tape, fusion, params, BILSTM, Direction::Bidirectional)?;

    let (w1, b1) = (tape.param(params, ATOMIC_W1)?, tape.param(params, ATOMIC_B1)?);
    let head_input = match cfg.atomic_source {
        AtomicSource::Fusion => fusion,
        AtomicSource::Recurrent => sequence,
    };
    let pre_hidden = tape.linear(head_input, w1, b1)?;
    let atomic_hidden = tape.relu(pre_hidden);
    let (w2, b2) = (tape.param(params, ATOMIC_W2)?, tape.param(params, ATOMIC_B2)?);
    let atomic_step_logits = tape.linear(atomic_hidden, w2, b2)?;
    let atomic_logits = tape.mean_rows(atomic_step_logits);
    let atomic_probs = tape.softmax(atomic_logits)?;

    let complex_seq = recurrent_on_tape(tape, sequence, params, COMPLEX_LSTM, Direction::Forward)?;
    let last = tape.last_row(complex_seq);
    let (kw, kb) = (tape.param(params, COMPLEX_W)?, tape.param(params, COMPLEX_B)?);
    let complex_logits = tape.linear(last, kw, kb)?;
    let complex_probs = tape.softmax(complex_logits)?;

    Ok(ForwardNodes {
        input,
        channel_features,
        fusion,
        sequence,
        atomic_hidden,
        atomic_step_logits,
        atomic_logits,
        atomic_probs,
        complex_logits,
        complex_probs,
    })
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub atomic_probs: Vec<f64>,
    pub complex_probs: Vec<f64>,
    pub complex_argmax: usize,
    /// Fusion-layer output `[T' × D]`, the deepest layer before the recurrent heads.
    pub activation_cache: DenseArray,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn encoder_forward(cfg: &EncoderConfig, params: &ParamStore, window: &SensorWindow) -> Result<PredictionRecord> {
    let mut tape = Tape::new();
    let nodes = forward_on_tape(cfg, params, &mut tape, &window.values)?;
    Ok(record_from(&tape, &nodes))
}

pub(crate) fn record_from(tape: &Tape, nodes: &ForwardNodes) -> PredictionRecord {
    let complex_probs = tape.value(nodes.complex_probs).data().to_vec();
    PredictionRecord {
        atomic_probs: tape.value(nodes.atomic_probs).data().to_vec(),
        complex_argmax: argmax(&complex_probs),
        complex_probs,
        activation_cache: tape.value(nodes.fusion).clone(),
    }
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParamStore,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        Ok(Self { params: build_encoder(&config)?, config })
    }

    pub fn forward(&self, window: &SensorWindow) -> Result<PredictionRecord> {
        encoder_forward(&self.config, &self.params, window)
    }
}
