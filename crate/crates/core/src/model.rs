//! The translation network: embedding lookup, stacked bidirectional LSTM
//! encoder, additive attention, LSTM decoder and output projection.
//!
//! All forward passes run on a [`Tape`] so the same code path serves
//! training (with backward) and inference (throwaway tape). Gate order is
//! fixed as (input, forget, candidate, output) throughout.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use crate::vocab::PAD_ID;

/// Structural hyperparameters of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Width of the additive-attention score space.
    pub attn_dim: usize,
    /// Stacked encoder layers.
    pub layers: usize,
    /// Run each encoder layer in both directions and concatenate.
    pub bidirectional: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 {
            return Err(Error::contract(format!(
                "vocabulary of {} is too small to hold the reserved specials",
                self.vocab_size
            )));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("attn_dim", self.attn_dim),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Per-position encoder output width (annotation size).
    pub fn encoder_out(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    /// Input width of encoder layer `l` (layer 1 consumes embeddings).
    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.embed_dim
        } else {
            self.encoder_out()
        }
    }
}

/// Parameters of one LSTM cell. `w` maps the input to the four stacked
/// gates, `u` maps the previous hidden state, `b` is the gate bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    /// `[input_dim x 4h]`
    pub w: Tensor,
    /// `[h x 4h]`
    pub u: Tensor,
    /// `[1 x 4h]`
    pub b: Tensor,
}

impl LstmCellParams {
    fn init(input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut b = Tensor::zeros(vec![1, 4 * hidden]);
        // Forget-gate bias starts at 1 so memory is retained early in training.
        for j in hidden..2 * hidden {
            b.data_mut()[j] = 1.0;
        }
        LstmCellParams {
            w: uniform_tensor(vec![input_dim, 4 * hidden], rng),
            u: uniform_tensor(vec![hidden, 4 * hidden], rng),
            b,
        }
    }

    fn hidden(&self) -> usize {
        self.u.shape()[0]
    }
}

fn uniform_tensor(shape: Vec<usize>, rng: &mut SeededRng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.uniform(-0.08, 0.08)).collect();
    Tensor::from_vec(shape, data).expect("shape/data constructed together")
}

/// One encoder layer: a forward cell and, when bidirectional, a backward one.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub forward: LstmCellParams,
    pub backward: Option<LstmCellParams>,
}

/// Every named parameter of the network, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// Content hash of the vocabulary the model was built against.
    pub vocab_hash: u64,
    pub embedding: Tensor,
    pub encoder: Vec<EncoderLayerParams>,
    pub bridge_w: Tensor,
    pub bridge_b: Tensor,
    pub decoder: LstmCellParams,
    pub attn_w1: Tensor,
    pub attn_w2: Tensor,
    pub attn_v: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl ModelParams {
    /// Fresh parameters. `embedding` rows may come from pretrained vectors
    /// (see the embeddings module); otherwise rows are uniform(-0.1, 0.1)
    /// with the `<pad>` row zeroed.
    pub fn init(
        config: ModelConfig,
        vocab_hash: u64,
        rng: &mut SeededRng,
        embedding: Option<Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let embedding = match embedding {
            Some(e) => {
                if e.shape() != [config.vocab_size, config.embed_dim] {
                    return Err(Error::dimension(format!(
                        "embedding shape {:?} does not match config [{} x {}]",
                        e.shape(),
                        config.vocab_size,
                        config.embed_dim
                    )));
                }
                e
            }
            None => {
                let mut e = Tensor::zeros(vec![config.vocab_size, config.embed_dim]);
                for id in 0..config.vocab_size {
                    if id == PAD_ID {
                        continue;
                    }
                    for j in 0..config.embed_dim {
                        e.data_mut()[id * config.embed_dim + j] = rng.uniform(-0.1, 0.1);
                    }
                }
                e
            }
        };

        let h = config.hidden;
        let encoder = (0..config.layers)
            .map(|l| {
                let input = config.layer_input(l);
                EncoderLayerParams {
                    forward: LstmCellParams::init(input, h, rng),
                    backward: config
                        .bidirectional
                        .then(|| LstmCellParams::init(input, h, rng)),
                }
            })
            .collect();

        Ok(ModelParams {
            vocab_hash,
            embedding,
            encoder,
            bridge_w: uniform_tensor(vec![config.encoder_out(), h], rng),
            bridge_b: Tensor::zeros(vec![1, h]),
            decoder: LstmCellParams::init(config.embed_dim, h, rng),
            attn_w1: uniform_tensor(vec![config.encoder_out(), config.attn_dim], rng),
            attn_w2: uniform_tensor(vec![h, config.attn_dim], rng),
            attn_v: uniform_tensor(vec![config.attn_dim, 1], rng),
            out_w: uniform_tensor(vec![h + config.encoder_out(), config.vocab_size], rng),
            out_b: Tensor::zeros(vec![1, config.vocab_size]),
            config,
        })
    }

    /// Parameter names in their canonical order.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for (l, layer) in self.encoder.iter().enumerate() {
            for part in ["w", "u", "b"] {
                names.push(format!("encoder.l{l}.fwd.{part}"));
            }
            if layer.backward.is_some() {
                for part in ["w", "u", "b"] {
                    names.push(format!("encoder.l{l}.bwd.{part}"));
                }
            }
        }
        names.extend(
            [
                "bridge.w",
                "bridge.b",
                "decoder.w",
                "decoder.u",
                "decoder.b",
                "attention.w1",
                "attention.w2",
                "attention.v",
                "output.w",
                "output.b",
            ]
            .map(String::from),
        );
        names
    }

    /// Named views in canonical order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![("embedding".to_string(), &self.embedding)];
        for (l, layer) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.l{l}.fwd.w"), &layer.forward.w));
            out.push((format!("encoder.l{l}.fwd.u"), &layer.forward.u));
            out.push((format!("encoder.l{l}.fwd.b"), &layer.forward.b));
            if let Some(b) = &layer.backward {
                out.push((format!("encoder.l{l}.bwd.w"), &b.w));
                out.push((format!("encoder.l{l}.bwd.u"), &b.u));
                out.push((format!("encoder.l{l}.bwd.b"), &b.b));
            }
        }
        out.push(("bridge.w".to_string(), &self.bridge_w));
        out.push(("bridge.b".to_string(), &self.bridge_b));
        out.push(("decoder.w".to_string(), &self.decoder.w));
        out.push(("decoder.u".to_string(), &self.decoder.u));
        out.push(("decoder.b".to_string(), &self.decoder.b));
        out.push(("attention.w1".to_string(), &self.attn_w1));
        out.push(("attention.w2".to_string(), &self.attn_w2));
        out.push(("attention.v".to_string(), &self.attn_v));
        out.push(("output.w".to_string(), &self.out_w));
        out.push(("output.b".to_string(), &self.out_b));
        out
    }

    /// Mutable views in the same canonical order.
    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> =
            vec![("embedding".to_string(), &mut self.embedding)];
        for (l, layer) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.l{l}.fwd.w"), &mut layer.forward.w));
            out.push((format!("encoder.l{l}.fwd.u"), &mut layer.forward.u));
            out.push((format!("encoder.l{l}.fwd.b"), &mut layer.forward.b));
            if let Some(b) = &mut layer.backward {
                out.push((format!("encoder.l{l}.bwd.w"), &mut b.w));
                out.push((format!("encoder.l{l}.bwd.u"), &mut b.u));
                out.push((format!("encoder.l{l}.bwd.b"), &mut b.b));
            }
        }
        out.push(("bridge.w".to_string(), &mut self.bridge_w));
        out.push(("bridge.b".to_string(), &mut self.bridge_b));
        out.push(("decoder.w".to_string(), &mut self.decoder.w));
        out.push(("decoder.u".to_string(), &mut self.decoder.u));
        out.push(("decoder.b".to_string(), &mut self.decoder.b));
        out.push(("attention.w1".to_string(), &mut self.attn_w1));
        out.push(("attention.w2".to_string(), &mut self.attn_w2));
        out.push(("attention.v".to_string(), &mut self.attn_v));
        out.push(("output.w".to_string(), &mut self.out_w));
        out.push(("output.b".to_string(), &mut self.out_b));
        out
    }

    /// Rebuilds parameters from named tensors (checkpoint loading).
    pub fn from_named(
        config: ModelConfig,
        vocab_hash: u64,
        tensors: &mut HashMap<String, Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let mut take = |name: String| -> Result<Tensor> {
            tensors
                .remove(&name)
                .ok_or_else(|| Error::format(format!("checkpoint is missing tensor {name:?}")))
        };
        let embedding = take("embedding".to_string())?;
        let mut encoder = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let forward = LstmCellParams {
                w: take(format!("encoder.l{l}.fwd.w"))?,
                u: take(format!("encoder.l{l}.fwd.u"))?,
                b: take(format!("encoder.l{l}.fwd.b"))?,
            };
            let backward = if config.bidirectional {
                Some(LstmCellParams {
                    w: take(format!("encoder.l{l}.bwd.w"))?,
                    u: take(format!("encoder.l{l}.bwd.u"))?,
                    b: take(format!("encoder.l{l}.bwd.b"))?,
                })
            } else {
                None
            };
            encoder.push(EncoderLayerParams { forward, backward });
        }
        let params = ModelParams {
            config,
            vocab_hash,
            embedding,
            encoder,
            bridge_w: take("bridge.w".to_string())?,
            bridge_b: take("bridge.b".to_string())?,
            decoder: LstmCellParams {
                w: take("decoder.w".to_string())?,
                u: take("decoder.u".to_string())?,
                b: take("decoder.b".to_string())?,
            },
            attn_w1: take("attention.w1".to_string())?,
            attn_w2: take("attention.w2".to_string())?,
            attn_v: take("attention.v".to_string())?,
            out_w: take("output.w".to_string())?,
            out_b: take("output.b".to_string())?,
        };
        if !tensors.is_empty() {
            let extra: Vec<&String> = tensors.keys().collect();
            return Err(Error::format(format!("checkpoint has unexpected tensors: {extra:?}")));
        }
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let expect = |name: &str, t: &Tensor, shape: [usize; 2]| -> Result<()> {
            if t.shape() != shape {
                return Err(Error::dimension(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(())
        };
        expect("embedding", &self.embedding, [c.vocab_size, c.embed_dim])?;
        for (l, layer) in self.encoder.iter().enumerate() {
            let input = c.layer_input(l);
            expect(&format!("encoder.l{l}.fwd.w"), &layer.forward.w, [input, 4 * c.hidden])?;
            expect(&format!("encoder.l{l}.fwd.u"), &layer.forward.u, [c.hidden, 4 * c.hidden])?;
            expect(&format!("encoder.l{l}.fwd.b"), &layer.forward.b, [1, 4 * c.hidden])?;
            if let Some(b) = &layer.backward {
                expect(&format!("encoder.l{l}.bwd.w"), &b.w, [input, 4 * c.hidden])?;
                expect(&format!("encoder.l{l}.bwd.u"), &b.u, [c.hidden, 4 * c.hidden])?;
                expect(&format!("encoder.l{l}.bwd.b"), &b.b, [1, 4 * c.hidden])?;
            }
        }
        expect("bridge.w", &self.bridge_w, [c.encoder_out(), c.hidden])?;
        expect("bridge.b", &self.bridge_b, [1, c.hidden])?;
        expect("decoder.w", &self.decoder.w, [c.embed_dim, 4 * c.hidden])?;
        expect("decoder.u", &self.decoder.u, [c.hidden, 4 * c.hidden])?;
        expect("decoder.b", &self.decoder.b, [1, 4 * c.hidden])?;
        expect("attention.w1", &self.attn_w1, [c.encoder_out(), c.attn_dim])?;
        expect("attention.w2", &self.attn_w2, [c.hidden, c.attn_dim])?;
        expect("attention.v", &self.attn_v, [c.attn_dim, 1])?;
        expect("output.w", &self.out_w, [c.hidden + c.encoder_out(), c.vocab_size])?;
        expect("output.b", &self.out_b, [1, c.vocab_size])?;
        for (name, t) in self.named() {
            if !t.is_finite() {
                return Err(Error::numeric(format!("parameter {name} contains non-finite values")));
            }
        }
        Ok(())
    }
}

/// One plain (non-tape) LSTM cell step; the reference implementation of the
/// gate equations, also used to cross-check the taped path.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmCellParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = p.hidden();
    let input_dim = p.w.shape()[0];
    if x.len() != input_dim || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::dimension(format!(
            "lstm_cell got x[{}], h[{}], c[{}] for a cell of input {input_dim}, hidden {h}",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut gates = p.b.data().to_vec();
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &p.w.data()[i * 4 * h..(i + 1) * 4 * h];
        for (g, &w) in gates.iter_mut().zip(row) {
            *g += xv * w;
        }
    }
    for (i, &hv) in h_prev.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        let row = &p.u.data()[i * 4 * h..(i + 1) * 4 * h];
        for (g, &u) in gates.iter_mut().zip(row) {
            *g += hv * u;
        }
    }
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut h_new = vec![0.0; h];
    let mut c_new = vec![0.0; h];
    for j in 0..h {
        let i_gate = sigmoid(gates[j]);
        let f_gate = sigmoid(gates[h + j]);
        let candidate = gates[2 * h + j].tanh();
        let o_gate = sigmoid(gates[3 * h + j]);
        c_new[j] = f_gate * c_prev[j] + i_gate * candidate;
        h_new[j] = o_gate * c_new[j].tanh();
    }
    if h_new.iter().chain(c_new.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numeric("lstm_cell produced a non-finite activation".to_string()));
    }
    Ok((h_new, c_new))
}

/// Direct evaluation of the teacher-forced cross-entropy: mean over unmasked
/// positions of `-log softmax(logits)[target]`.
pub fn cross_entropy_loss(logits: &Tensor, target_out: &[usize], mask: &[bool]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits)?;
    let loss = tape.softmax_cross_entropy(l, target_out, mask)?;
    tape.scalar_value(loss)
}

// ── on-tape forward passes ───────────────────────────────────────────

struct TapedCell {
    w: NodeId,
    u: NodeId,
    b: NodeId,
}

/// A model's parameters registered as leaves on one tape.
pub struct TapedModel {
    config: ModelConfig,
    embedding: NodeId,
    encoder: Vec<(TapedCell, Option<TapedCell>)>,
    bridge_w: NodeId,
    bridge_b: NodeId,
    decoder: TapedCell,
    attn_w1: NodeId,
    attn_w2: NodeId,
    attn_v: NodeId,
    out_w: NodeId,
    out_b: NodeId,
}

/// Encoder output for one sentence: per-position annotations plus the
/// decoder-ready initial state. `ann_proj` caches `annotations * W1`.
pub struct EncodedSource {
    pub annotations: NodeId,
    ann_proj: NodeId,
    pub h0: NodeId,
    pub c0: NodeId,
    pub source_len: usize,
}

impl TapedModel {
    /// Registers every parameter as a differentiable leaf. The returned ids
    /// align with [`ModelParams::named`].
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Result<(Self, Vec<NodeId>)> {
        let named = params.named();
        let mut ids = Vec::with_capacity(named.len());
        for (_, tensor) in &named {
            ids.push(tape.param(tensor)?);
        }
        let map: HashMap<String, NodeId> =
            named.iter().map(|(n, _)| n.clone()).zip(ids.iter().copied()).collect();
        Ok((Self::from_ids(params, &map)?, ids))
    }

    /// Registers parameters as constants except for the ones named in
    /// `overrides`, which use the provided (typically differentiable) leaves.
    /// This is how per-group gradient checks are wired.
    pub fn register_with_overrides(
        tape: &mut Tape,
        params: &ModelParams,
        overrides: &HashMap<String, NodeId>,
    ) -> Result<Self> {
        let mut map = HashMap::new();
        for (name, tensor) in params.named() {
            let id = match overrides.get(&name) {
                Some(&id) => id,
                None => tape.constant(tensor)?,
            };
            map.insert(name, id);
        }
        Self::from_ids(params, &map)
    }

    fn from_ids(params: &ModelParams, map: &HashMap<String, NodeId>) -> Result<Self> {
        let get = |name: String| -> Result<NodeId> {
            map.get(&name)
                .copied()
                .ok_or_else(|| Error::contract(format!("missing node for parameter {name:?}")))
        };
        let cell = |prefix: &str| -> Result<TapedCell> {
            Ok(TapedCell {
                w: get(format!("{prefix}.w"))?,
                u: get(format!("{prefix}.u"))?,
                b: get(format!("{prefix}.b"))?,
            })
        };
        let mut encoder = Vec::with_capacity(params.encoder.len());
        for (l, layer) in params.encoder.iter().enumerate() {
            let fwd = cell(&format!("encoder.l{l}.fwd"))?;
            let bwd = if layer.backward.is_some() {
                Some(cell(&format!("encoder.l{l}.bwd"))?)
            } else {
                None
            };
            encoder.push((fwd, bwd));
        }
        Ok(TapedModel {
            config: params.config,
            embedding: get("embedding".to_string())?,
            encoder,
            bridge_w: get("bridge.w".to_string())?,
            bridge_b: get("bridge.b".to_string())?,
            decoder: cell("decoder")?,
            attn_w1: get("attention.w1".to_string())?,
            attn_w2: get("attention.w2".to_string())?,
            attn_v: get("attention.v".to_string())?,
            out_w: get("output.w".to_string())?,
            out_b: get("output.b".to_string())?,
        })
    }

    fn cell_step(
        &self,
        tape: &mut Tape,
        cell: &TapedCell,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let hidden = self.config.hidden;
        let gx = tape.matmul(x, cell.w)?;
        let gh = tape.matmul(h, cell.u)?;
        let pre = tape.add(gx, gh)?;
        let gates = tape.add(pre, cell.b)?;
        let i_gate = {
            let s = tape.slice_cols(gates, 0, hidden)?;
            tape.sigmoid(s)?
        };
        let f_gate = {
            let s = tape.slice_cols(gates, hidden, 2 * hidden)?;
            tape.sigmoid(s)?
        };
        let candidate = {
            let s = tape.slice_cols(gates, 2 * hidden, 3 * hidden)?;
            tape.tanh(s)?
        };
        let o_gate = {
            let s = tape.slice_cols(gates, 3 * hidden, 4 * hidden)?;
            tape.sigmoid(s)?
        };
        let keep = tape.mul(f_gate, c)?;
        let write = tape.mul(i_gate, candidate)?;
        let c_new = tape.add(keep, write)?;
        let c_tanh = tape.tanh(c_new)?;
        let h_new = tape.mul(o_gate, c_tanh)?;
        Ok((h_new, c_new))
    }

    /// Runs the stacked (bi)directional encoder over one sentence.
    pub fn encode(&self, tape: &mut Tape, source_ids: &[usize]) -> Result<EncodedSource> {
        if source_ids.is_empty() {
            return Err(Error::contract("cannot encode an empty source sentence".to_string()));
        }
        let s = source_ids.len();
        let hidden = self.config.hidden;
        let zero_h = tape.constant(&Tensor::zeros(vec![1, hidden]))?;

        let mut inputs: Vec<NodeId> = source_ids
            .iter()
            .map(|&id| tape.gather_rows(self.embedding, &[id]))
            .collect::<Result<_>>()?;

        let mut top_fwd_final = zero_h;
        let mut top_bwd_final = zero_h;
        for (fwd_cell, bwd_cell) in &self.encoder {
            let mut fwd_states = Vec::with_capacity(s);
            let (mut h, mut c) = (zero_h, zero_h);
            for &x in &inputs {
                let (nh, nc) = self.cell_step(tape, fwd_cell, x, h, c)?;
                h = nh;
                c = nc;
                fwd_states.push(h);
            }
            top_fwd_final = *fwd_states.last().expect("nonempty sentence");

            match bwd_cell {
                Some(bwd_cell) => {
                    let mut bwd_states = vec![zero_h; s];
                    let (mut h, mut c) = (zero_h, zero_h);
                    for t in (0..s).rev() {
                        let (nh, nc) = self.cell_step(tape, bwd_cell, inputs[t], h, c)?;
                        h = nh;
                        c = nc;
                        bwd_states[t] = h;
                    }
                    top_bwd_final = bwd_states[0];
                    inputs = (0..s)
                        .map(|t| tape.concat_cols(&[fwd_states[t], bwd_states[t]]))
                        .collect::<Result<_>>()?;
                }
                None => {
                    inputs = fwd_states;
                }
            }
        }

        let annotations = tape.concat_rows(&inputs)?;
        let summary = if self.config.bidirectional {
            tape.concat_cols(&[top_fwd_final, top_bwd_final])?
        } else {
            top_fwd_final
        };
        let bridged = tape.matmul(summary, self.bridge_w)?;
        let shifted = tape.add(bridged, self.bridge_b)?;
        let h0 = tape.tanh(shifted)?;
        let ann_proj = tape.matmul(annotations, self.attn_w1)?;
        Ok(EncodedSource { annotations, ann_proj, h0, c0: zero_h, source_len: s })
    }

    /// Additive attention of the current decoder state over the annotations.
    /// Returns `(weights [1 x S], context [1 x encoder_out])`.
    pub fn attention(
        &self,
        tape: &mut Tape,
        decoder_h: NodeId,
        source: &EncodedSource,
    ) -> Result<(NodeId, NodeId)> {
        let h_proj = tape.matmul(decoder_h, self.attn_w2)?;
        let pre = tape.add_row(source.ann_proj, h_proj)?;
        let scored = tape.tanh(pre)?;
        let scores_col = tape.matmul(scored, self.attn_v)?;
        let scores = tape.reshape(scores_col, vec![1, source.source_len])?;
        let weights = tape.softmax_rows(scores)?;
        let context = tape.matmul(weights, source.annotations)?;
        Ok((weights, context))
    }

    /// One decoder step: consume the previous token, attend, project.
    /// Returns `(logits [1 x V], (h, c), attention weights [1 x S])`.
    pub fn decode_step(
        &self,
        tape: &mut Tape,
        prev_token_id: usize,
        state: (NodeId, NodeId),
        source: &EncodedSource,
    ) -> Result<(NodeId, (NodeId, NodeId), NodeId)> {
        if prev_token_id >= self.config.vocab_size {
            return Err(Error::contract(format!(
                "token id {prev_token_id} out of range for vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let x = tape.gather_rows(self.embedding, &[prev_token_id])?;
        let (h, c) = self.cell_step(tape, &self.decoder, x, state.0, state.1)?;
        let (weights, context) = self.attention(tape, h, source)?;
        let combined = tape.concat_cols(&[h, context])?;
        let projected = tape.matmul(combined, self.out_w)?;
        let logits = tape.add(projected, self.out_b)?;
        Ok((logits, (h, c), weights))
    }

    /// Teacher-forced loss of one sentence: the decoder consumes the gold
    /// `target_in` tokens and is scored against `target_out` under `mask`.
    /// Also reports the token ids the decode path actually consumed, so the
    /// teacher-forcing contract is observable from outside.
    pub fn sentence_loss(
        &self,
        tape: &mut Tape,
        source_ids: &[usize],
        target_in: &[usize],
        target_out: &[usize],
        mask: &[bool],
    ) -> Result<(NodeId, usize, Vec<usize>)> {
        if target_in.len() != target_out.len() || target_in.len() != mask.len() {
            return Err(Error::dimension(format!(
                "target_in/target_out/mask lengths disagree: {}/{}/{}",
                target_in.len(),
                target_out.len(),
                mask.len()
            )));
        }
        let source = self.encode(tape, source_ids)?;
        let mut state = (source.h0, source.c0);
        let mut logit_rows = Vec::with_capacity(target_in.len());
        let mut consumed = Vec::with_capacity(target_in.len());
        for &prev in target_in {
            let (logits, next_state, _) = self.decode_step(tape, prev, state, &source)?;
            consumed.push(prev);
            state = next_state;
            logit_rows.push(logits);
        }
        let logits = tape.concat_rows(&logit_rows)?;
        let loss = tape.softmax_cross_entropy(logits, target_out, mask)?;
        let tokens = mask.iter().filter(|&&m| m).count();
        Ok((loss, tokens, consumed))
    }
}

/// A sentence prepared for loss evaluation.
#[derive(Debug, Clone)]
pub struct SentenceExample {
    pub source_ids: Vec<usize>,
    pub target_in: Vec<usize>,
    pub target_out: Vec<usize>,
    pub mask: Vec<bool>,
}

impl SentenceExample {
    /// Builds the shifted decoder input/output pair from raw target ids.
    pub fn new(source_ids: Vec<usize>, target_ids: &[usize]) -> Self {
        use crate::vocab::{BOS_ID, EOS_ID};
        let mut target_in = Vec::with_capacity(target_ids.len() + 1);
        target_in.push(BOS_ID);
        target_in.extend_from_slice(target_ids);
        let mut target_out = target_ids.to_vec();
        target_out.push(EOS_ID);
        let mask = vec![true; target_out.len()];
        SentenceExample { source_ids, target_in, target_out, mask }
    }
}

/// Forward pass of a micro-batch: the token-weighted mean loss as a single
/// scalar node (so one backward covers the whole batch), the unmasked token
/// count, and the per-sentence decoder inputs for the teacher-forcing check.
pub struct BatchForward {
    pub loss: NodeId,
    pub tokens: usize,
    pub decoder_inputs: Vec<Vec<usize>>,
}

/// Token-weighted mean teacher-forced loss over a micro-batch.
pub fn batch_loss(
    tape: &mut Tape,
    model: &TapedModel,
    sentences: &[SentenceExample],
) -> Result<BatchForward> {
    if sentences.is_empty() {
        return Err(Error::contract("batch_loss needs at least one sentence".to_string()));
    }
    let mut parts = Vec::with_capacity(sentences.len());
    let mut decoder_inputs = Vec::with_capacity(sentences.len());
    let mut total_tokens = 0usize;
    for s in sentences {
        let (loss, tokens, consumed) =
            model.sentence_loss(tape, &s.source_ids, &s.target_in, &s.target_out, &s.mask)?;
        parts.push((loss, tokens));
        decoder_inputs.push(consumed);
        total_tokens += tokens;
    }
    let mut acc: Option<NodeId> = None;
    for (loss, tokens) in parts {
        let weighted = tape.scale(loss, tokens as f64 / total_tokens as f64)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, weighted)?,
            None => weighted,
        });
    }
    Ok(BatchForward {
        loss: acc.expect("nonempty batch"),
        tokens: total_tokens,
        decoder_inputs,
    })
}

/// Finite-difference check of the batch loss restricted to one parameter
/// group (`group` is a name prefix, e.g. "encoder.l0.fwd" or "attention").
/// Returns the maximum relative error over the group's entries.
pub fn gradient_check_group(
    params: &ModelParams,
    sentences: &[SentenceExample],
    group: &str,
    h: f64,
) -> Result<f64> {
    let group_names: Vec<String> =
        params.names().into_iter().filter(|n| n.starts_with(group)).collect();
    if group_names.is_empty() {
        return Err(Error::contract(format!("no parameters match group {group:?}")));
    }
    let tensors: Vec<Tensor> = {
        let by_name: HashMap<String, &Tensor> = params.named().into_iter().collect();
        group_names.iter().map(|n| (*by_name[n]).clone()).collect()
    };
    crate::gradcheck::fd_check(
        &|tape, ids| {
            let overrides: HashMap<String, NodeId> =
                group_names.iter().cloned().zip(ids.iter().copied()).collect();
            let mut work = params.clone();
            // The override ids carry the perturbed values; blank the copies in
            // `work` so stale data cannot leak into constant registration.
            for (name, tensor) in work.named_mut() {
                if overrides.contains_key(&name) {
                    for v in tensor.data_mut() {
                        *v = f64::NAN;
                    }
                }
            }
            let model = TapedModel::register_with_overrides(tape, &work, &overrides)?;
            Ok(batch_loss(tape, &model, sentences)?.loss)
        },
        &tensors,
        h,
    )
}
