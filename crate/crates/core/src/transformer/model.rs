use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TransformerConfig;
use super::TransformerError;
use crate::corpus::{EncodedExample, PAD};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, TensorError, Var};

const LN_EPS: f64 = 1e-5;

/// Daughter-local position indices for a concatenation of daughters with
/// the given lengths: `[2, 2] → [0, 1, 0, 1]`.
pub fn restarted_positions(daughter_lengths: &[usize]) -> Vec<usize> {
    daughter_lengths.iter().flat_map(|&n| 0..n).collect()
}

fn sinusoid(pos: usize, dim: usize, d_model: usize) -> f64 {
    let pair = (dim / 2) as f64;
    let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
    if dim % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// Sinusoidal encodings (sin on even, cos on odd dimensions) with positions
/// restarting at each daughter boundary; shape `[Σ lengths, d_model]`.
pub fn positional_encoding(daughter_lengths: &[usize], d_model: usize) -> Tensor {
    let positions = restarted_positions(daughter_lengths);
    let data = positions.iter().flat_map(|&p| (0..d_model).map(move |j| sinusoid(p, j, d_model))).collect();
    Tensor::new(vec![positions.len().max(1), d_model], data).unwrap_or_else(|_| Tensor::zeros(&[1, d_model]))
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone, Copy)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    attn: Attention,
    norm1: Norm,
    ff: FeedForward,
    norm2: Norm,
}

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    self_attn: Attention,
    norm1: Norm,
    cross_attn: Attention,
    norm2: Norm,
    ff: FeedForward,
    norm3: Norm,
}

/// Parameters plus the ids locating each weight in the store.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: TransformerConfig,
    pub params: ParamStore,
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub n_languages: usize,
    src_embed: ParamId,
    tgt_embed: ParamId,
    lang_embed: ParamId,
    encoder: Vec<EncoderLayer>,
    decoder: Vec<DecoderLayer>,
    out: Linear,
    pe_table: Vec<f64>,
}

/// A padded minibatch. Row-major `[batch, len]` index arrays.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    pub tgt_len: usize,
    pub src: Vec<usize>,
    pub positions: Vec<usize>,
    pub languages: Vec<usize>,
    pub src_pad: Vec<bool>,
    /// Decoder input: `BOS proto...` padded.
    pub tgt_in: Vec<usize>,
    /// Decoder target: `proto... EOS` padded with `PAD`.
    pub tgt_out: Vec<usize>,
    pub tgt_pad: Vec<bool>,
}

/// Pads sources and targets independently to the batch maxima.
pub fn collate(examples: &[&EncodedExample]) -> Batch {
    let size = examples.len();
    let src_len = examples.iter().map(|e| e.source.len()).max().unwrap_or(1).max(1);
    let tgt_len = examples.iter().map(|e| e.target.len().saturating_sub(1)).max().unwrap_or(1).max(1);
    let mut b = Batch {
        size,
        src_len,
        tgt_len,
        src: vec![PAD; size * src_len],
        positions: vec![0; size * src_len],
        languages: vec![0; size * src_len],
        src_pad: vec![true; size * src_len],
        tgt_in: vec![PAD; size * tgt_len],
        tgt_out: vec![PAD; size * tgt_len],
        tgt_pad: vec![true; size * tgt_len],
    };
    for (r, e) in examples.iter().enumerate() {
        for (j, &tok) in e.source.iter().enumerate() {
            let at = r * src_len + j;
            b.src[at] = tok;
            b.positions[at] = e.positions[j];
            b.languages[at] = e.languages[j];
            b.src_pad[at] = false;
        }
        for j in 0..e.target.len().saturating_sub(1) {
            let at = r * tgt_len + j;
            b.tgt_in[at] = e.target[j];
            b.tgt_out[at] = e.target[j + 1];
            b.tgt_pad[at] = false;
        }
    }
    b
}

/// Per-forward bookkeeping: dropout site ids and recorded attention maps.
#[derive(Debug, Default)]
pub struct ForwardTrace {
    dropout_site: u64,
    /// Attention probability tensors `[batch·heads, queries, keys]` in
    /// evaluation order (encoder layers, then per decoder layer self and
    /// cross attention).
    pub attention: Vec<Var>,
    /// Encoder input (token + position + language) `[batch·src_len, d]`.
    pub encoder_input: Option<Var>,
}

impl ForwardTrace {
    fn next_site(&mut self) -> u64 {
        self.dropout_site += 1;
        self.dropout_site
    }
}

/// Loaded parameter handles for one forward pass.
struct Loaded<'m> {
    model: &'m Model,
    vars: Vec<Option<Var>>,
}

impl<'m> Loaded<'m> {
    fn new(model: &'m Model) -> Self {
        Loaded { model, vars: vec![None; model.params.len()] }
    }

    /// Forgets params whose nodes were truncated away.
    fn retain_live(&mut self, g: &Graph) {
        for v in &mut self.vars {
            if v.is_some_and(|x| !g.contains(x)) {
                *v = None;
            }
        }
    }

    fn get(&mut self, g: &mut Graph, id: ParamId) -> Var {
        *self.vars[id.0].get_or_insert_with(|| g.param(&self.model.params, id))
    }
}

/// Cached key/value projections of one attention block, keys already
/// transposed to `[batch·heads, head_dim, len]`.
pub(crate) struct KeyValues {
    keys_t: Var,
    values: Var,
    len: usize,
}

impl Model {
    /// Builds a freshly initialized model: every weight matrix and embedding
    /// uniform in ±1/√d_model, biases 0, layer-norm gains 1.
    pub fn new(config: TransformerConfig, source_vocab: usize, target_vocab: usize, n_languages: usize) -> Result<Self, TransformerError> {
        config.validate()?;
        if n_languages == 0 {
            return Err(TransformerError::Config("at least one daughter language is required".into()));
        }
        let d = config.d_model;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let src_embed = p.add_uniform("src_embed", &[source_vocab, d], bound, &mut rng);
        let tgt_embed = p.add_uniform("tgt_embed", &[target_vocab, d], bound, &mut rng);
        let lang_embed = p.add_uniform("lang_embed", &[n_languages, d], bound, &mut rng);

        fn linear(p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, din: usize, dout: usize, bound: f64) -> Linear {
            Linear { w: p.add_uniform(format!("{name}.w"), &[din, dout], bound, rng), b: p.add_zeros(format!("{name}.b"), &[dout]) }
        }
        let norm = |p: &mut ParamStore, name: &str| Norm {
            gamma: p.add_constant(format!("{name}.gamma"), &[d], 1.0),
            beta: p.add_zeros(format!("{name}.beta"), &[d]),
        };
        let attention = |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| Attention {
            q: linear(p, rng, &format!("{name}.q"), d, d, bound),
            k: linear(p, rng, &format!("{name}.k"), d, d, bound),
            v: linear(p, rng, &format!("{name}.v"), d, d, bound),
            o: linear(p, rng, &format!("{name}.o"), d, d, bound),
        };
        let mut encoder = Vec::new();
        for l in 0..config.n_encoder_layers {
            let name = format!("enc{l}");
            let attn = attention(&mut p, &mut rng, &format!("{name}.attn"));
            let norm1 = norm(&mut p, &format!("{name}.norm1"));
            let ff = FeedForward {
                up: linear(&mut p, &mut rng, &format!("{name}.ff1"), d, config.d_feedforward, bound),
                down: linear(&mut p, &mut rng, &format!("{name}.ff2"), config.d_feedforward, d, bound),
            };
            let norm2 = norm(&mut p, &format!("{name}.norm2"));
            encoder.push(EncoderLayer { attn, norm1, ff, norm2 });
        }
        let mut decoder = Vec::new();
        for l in 0..config.n_decoder_layers {
            let name = format!("dec{l}");
            let self_attn = attention(&mut p, &mut rng, &format!("{name}.self"));
            let norm1 = norm(&mut p, &format!("{name}.norm1"));
            let cross_attn = attention(&mut p, &mut rng, &format!("{name}.cross"));
            let norm2 = norm(&mut p, &format!("{name}.norm2"));
            let ff = FeedForward {
                up: linear(&mut p, &mut rng, &format!("{name}.ff1"), d, config.d_feedforward, bound),
                down: linear(&mut p, &mut rng, &format!("{name}.ff2"), config.d_feedforward, d, bound),
            };
            let norm3 = norm(&mut p, &format!("{name}.norm3"));
            decoder.push(DecoderLayer { self_attn, norm1, cross_attn, norm2, ff, norm3 });
        }
        let out = linear(&mut p, &mut rng, "out", d, target_vocab, bound);

        let max_pos = config.max_source_len.max(1);
        let pe_table = (0..max_pos).flat_map(|pos| (0..d).map(move |j| sinusoid(pos, j, d))).collect();
        Ok(Model {
            config,
            params: p,
            source_vocab,
            target_vocab,
            n_languages,
            src_embed,
            tgt_embed,
            lang_embed,
            encoder,
            decoder,
            out,
            pe_table,
        })
    }

    /// Builds the architecture for `config` and installs `params` (as read
    /// from a checkpoint), checking names and shapes.
    pub fn with_params(config: TransformerConfig, source_vocab: usize, target_vocab: usize, n_languages: usize, params: ParamStore) -> Result<Self, TransformerError> {
        let mut model = Model::new(config, source_vocab, target_vocab, n_languages)?;
        if params.len() != model.params.len() {
            return Err(TransformerError::Meta(format!("checkpoint has {} tensors, model expects {}", params.len(), model.params.len())));
        }
        for ((_, name_a, a), (_, name_b, b)) in model.params.iter().zip(params.iter()) {
            if name_a != name_b || a.shape() != b.shape() {
                return Err(TransformerError::Meta(format!("checkpoint tensor {name_b} {:?} does not match {name_a} {:?}", b.shape(), a.shape())));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// Rows of the language embedding table.
    pub fn language_embeddings(&self) -> Vec<Vec<f64>> {
        let t = self.params.get(self.lang_embed);
        (0..self.n_languages).map(|i| t.row(i).to_vec()).collect()
    }

    fn pe_rows(&self, positions: &[usize]) -> Result<Tensor, TransformerError> {
        let d = self.config.d_model;
        let max = self.pe_table.len() / d;
        let mut data = Vec::with_capacity(positions.len() * d);
        for &p in positions {
            if p >= max {
                return Err(TransformerError::TooLong { len: p + 1, max });
            }
            data.extend_from_slice(&self.pe_table[p * d..(p + 1) * d]);
        }
        Ok(Tensor::new(vec![positions.len(), d], data)?)
    }

    fn linear(&self, g: &mut Graph, w: &mut Loaded, l: Linear, x: Var) -> Result<Var, TensorError> {
        let (wv, bv) = (w.get(g, l.w), w.get(g, l.b));
        let y = g.matmul(x, wv)?;
        g.add(y, bv)
    }

    fn norm(&self, g: &mut Graph, w: &mut Loaded, n: Norm, x: Var) -> Result<Var, TensorError> {
        let (gamma, beta) = (w.get(g, n.gamma), w.get(g, n.beta));
        let y = g.layer_norm(x, 1, LN_EPS)?;
        let y = g.mul(y, gamma)?;
        g.add(y, beta)
    }

    /// `[b·len, d] → [b·heads, len, head_dim]`.
    fn split_heads(&self, g: &mut Graph, x: Var, batch: usize, len: usize) -> Result<Var, TensorError> {
        let (h, dk) = (self.config.n_heads, self.config.head_dim());
        let x = g.reshape(x, &[batch, len, h, dk])?;
        let x = g.transpose(x, &[0, 2, 1, 3])?;
        g.reshape(x, &[batch * h, len, dk])
    }

    fn key_values(&self, g: &mut Graph, w: &mut Loaded, a: Attention, kv: Var, batch: usize, len: usize) -> Result<KeyValues, TensorError> {
        let k = self.linear(g, w, a.k, kv)?;
        let k = self.split_heads(g, k, batch, len)?;
        let keys_t = g.transpose(k, &[0, 2, 1])?;
        let v = self.linear(g, w, a.v, kv)?;
        let values = self.split_heads(g, v, batch, len)?;
        Ok(KeyValues { keys_t, values, len })
    }

    /// Multi-head attention of `query` (`[b·q_len, d]`) over cached keys and
    /// values. `masked[(r·q_len + i)·k_len + j]` hides key `j` from query `i`
    /// of batch row `r`.
    #[allow(clippy::too_many_arguments)]
    fn attend(&self, g: &mut Graph, w: &mut Loaded, a: Attention, query: Var, kv: &KeyValues, batch: usize, q_len: usize, masked: &[bool], trace: &mut ForwardTrace) -> Result<Var, TensorError> {
        let (h, dk, d) = (self.config.n_heads, self.config.head_dim(), self.config.d_model);
        let q = self.linear(g, w, a.q, query)?;
        let q = self.split_heads(g, q, batch, q_len)?;
        let scores = g.matmul(q, kv.keys_t)?;
        let scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
        let k_len = kv.len;
        let block = q_len * k_len;
        let mut full_mask = Vec::with_capacity(batch * h * block);
        for r in 0..batch {
            for _ in 0..h {
                full_mask.extend_from_slice(&masked[r * block..(r + 1) * block]);
            }
        }
        let scores = g.masked_fill(scores, &full_mask, f64::NEG_INFINITY)?;
        let probs = g.softmax(scores, 2)?;
        trace.attention.push(probs);
        let site = trace.next_site();
        let probs = g.dropout(probs, self.config.dropout_p, site);
        let ctx = g.matmul(probs, kv.values)?;
        let ctx = g.reshape(ctx, &[batch, h, q_len, dk])?;
        let ctx = g.transpose(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[batch * q_len, d])?;
        self.linear(g, w, a.o, ctx)
    }

    fn feed_forward(&self, g: &mut Graph, w: &mut Loaded, ff: FeedForward, x: Var, trace: &mut ForwardTrace) -> Result<Var, TensorError> {
        let hidden = self.linear(g, w, ff.up, x)?;
        let hidden = g.relu(hidden);
        let site = trace.next_site();
        let hidden = g.dropout(hidden, self.config.dropout_p, site);
        self.linear(g, w, ff.down, hidden)
    }

    /// Post-norm residual: `LN(x + dropout(sub))`.
    fn residual(&self, g: &mut Graph, w: &mut Loaded, n: Norm, x: Var, sub: Var, trace: &mut ForwardTrace) -> Result<Var, TensorError> {
        let site = trace.next_site();
        let sub = g.dropout(sub, self.config.dropout_p, site);
        let sum = g.add(x, sub)?;
        self.norm(g, w, n, sum)
    }

    fn embed_tokens(&self, g: &mut Graph, w: &mut Loaded, table: ParamId, tokens: &[usize]) -> Result<Var, TensorError> {
        let table = w.get(g, table);
        let e = g.embedding(table, tokens)?;
        Ok(g.scale(e, (self.config.d_model as f64).sqrt()))
    }

    fn encode_loaded(&self, g: &mut Graph, w: &mut Loaded, batch: &Batch, trace: &mut ForwardTrace) -> Result<Var, TransformerError> {
        if batch.src_len > self.config.max_source_len {
            return Err(TransformerError::TooLong { len: batch.src_len, max: self.config.max_source_len });
        }
        let (b, s) = (batch.size, batch.src_len);
        let tok = self.embed_tokens(g, w, self.src_embed, &batch.src)?;
        let pe = g.constant(self.pe_rows(&batch.positions)?);
        let lang_table = w.get(g, self.lang_embed);
        let lang = g.embedding(lang_table, &batch.languages)?;
        let x = g.add(tok, pe)?;
        let x = g.add(x, lang)?;
        trace.encoder_input = Some(x);
        let site = trace.next_site();
        let mut x = g.dropout(x, self.config.dropout_p, site);

        // key padding mask, identical for every query row
        let mut mask = Vec::with_capacity(b * s * s);
        for r in 0..b {
            for _ in 0..s {
                mask.extend_from_slice(&batch.src_pad[r * s..(r + 1) * s]);
            }
        }
        for layer in &self.encoder {
            let kv = self.key_values(g, w, layer.attn, x, b, s)?;
            let a = self.attend(g, w, layer.attn, x, &kv, b, s, &mask, trace)?;
            x = self.residual(g, w, layer.norm1, x, a, trace)?;
            let f = self.feed_forward(g, w, layer.ff, x, trace)?;
            x = self.residual(g, w, layer.norm2, x, f, trace)?;
        }
        Ok(x)
    }

    fn cross_cache(&self, g: &mut Graph, w: &mut Loaded, memory: Var, batch: &Batch) -> Result<Vec<KeyValues>, TensorError> {
        self.decoder.iter().map(|l| self.key_values(g, w, l.cross_attn, memory, batch.size, batch.src_len)).collect()
    }

    /// Decoder over `tokens` (`[b, t_len]`), returning logits `[b·t_len, V]`.
    #[allow(clippy::too_many_arguments)]
    fn decode_loaded(&self, g: &mut Graph, w: &mut Loaded, cross: &[KeyValues], batch: &Batch, tokens: &[usize], t_len: usize, tgt_pad: Option<&[bool]>, trace: &mut ForwardTrace) -> Result<Var, TransformerError> {
        let b = batch.size;
        let s = batch.src_len;
        let tok = self.embed_tokens(g, w, self.tgt_embed, tokens)?;
        let positions: Vec<usize> = (0..b).flat_map(|_| 0..t_len).collect();
        let pe = g.constant(self.pe_rows(&positions)?);
        let y = g.add(tok, pe)?;
        let site = trace.next_site();
        let mut y = g.dropout(y, self.config.dropout_p, site);

        let mut self_mask = Vec::with_capacity(b * t_len * t_len);
        for r in 0..b {
            for i in 0..t_len {
                for j in 0..t_len {
                    let pad = tgt_pad.is_some_and(|p| p[r * t_len + j]);
                    self_mask.push(j > i || pad);
                }
            }
        }
        let mut cross_mask = Vec::with_capacity(b * t_len * s);
        for r in 0..b {
            for _ in 0..t_len {
                cross_mask.extend_from_slice(&batch.src_pad[r * s..(r + 1) * s]);
            }
        }
        for (layer, kv) in self.decoder.iter().zip(cross) {
            let own = self.key_values(g, w, layer.self_attn, y, b, t_len)?;
            let a = self.attend(g, w, layer.self_attn, y, &own, b, t_len, &self_mask, trace)?;
            y = self.residual(g, w, layer.norm1, y, a, trace)?;
            let c = self.attend(g, w, layer.cross_attn, y, kv, b, t_len, &cross_mask, trace)?;
            y = self.residual(g, w, layer.norm2, y, c, trace)?;
            let f = self.feed_forward(g, w, layer.ff, y, trace)?;
            y = self.residual(g, w, layer.norm3, y, f, trace)?;
        }
        Ok(self.linear(g, w, self.out, y)?)
    }

    /// Encoder memory `[batch·src_len, d]`.
    pub fn encode(&self, g: &mut Graph, batch: &Batch, trace: &mut ForwardTrace) -> Result<Var, TransformerError> {
        let mut w = Loaded::new(self);
        self.encode_loaded(g, &mut w, batch, trace)
    }

    /// Teacher-forced logits `[batch·tgt_len, target_vocab]`.
    pub fn forward_teacher_forced(&self, g: &mut Graph, batch: &Batch, trace: &mut ForwardTrace) -> Result<Var, TransformerError> {
        let mut w = Loaded::new(self);
        let memory = self.encode_loaded(g, &mut w, batch, trace)?;
        let cross = self.cross_cache(g, &mut w, memory, batch)?;
        self.decode_loaded(g, &mut w, &cross, batch, &batch.tgt_in, batch.tgt_len, Some(&batch.tgt_pad), trace)
    }

    /// Mean cross-entropy over the non-PAD target tokens of `batch`.
    pub fn loss(&self, g: &mut Graph, batch: &Batch) -> Result<Var, TransformerError> {
        let logits = self.forward_teacher_forced(g, batch, &mut ForwardTrace::default())?;
        Ok(g.cross_entropy(logits, &batch.tgt_out, PAD)?)
    }

    /// Greedy decoding of a whole batch: returns, per row, the generated
    /// indices (without BOS) up to and including EOS when produced.
    pub(crate) fn greedy_indices(&self, batch: &Batch, max_len: usize, banned: &[usize], eos: usize, bos: usize) -> Result<Vec<Vec<usize>>, TransformerError> {
        let mut g = Graph::new();
        let mut w = Loaded::new(self);
        let mut trace = ForwardTrace::default();
        let memory = self.encode_loaded(&mut g, &mut w, batch, &mut trace)?;
        let cross = self.cross_cache(&mut g, &mut w, memory, batch)?;
        let b = batch.size;
        let mut outputs: Vec<Vec<usize>> = vec![Vec::new(); b];
        let mut done = vec![false; b];
        let mut prefix: Vec<Vec<usize>> = vec![vec![bos]; b];
        // each step re-runs the decoder on the whole prefix, so its nodes are dropped afterwards
        let mark = g.len();
        for _ in 0..max_len {
            g.truncate(mark);
            w.retain_live(&g);
            let t_len = prefix[0].len();
            let tokens: Vec<usize> = prefix.iter().flatten().copied().collect();
            let logits = self.decode_loaded(&mut g, &mut w, &cross, batch, &tokens, t_len, None, &mut ForwardTrace::default())?;
            let values = g.value(logits);
            for r in 0..b {
                let row = values.row(r * t_len + t_len - 1);
                let best = row
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !banned.contains(i))
                    .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                    .0;
                if !done[r] {
                    outputs[r].push(best);
                    if best == eos {
                        done[r] = true;
                    }
                }
                prefix[r].push(best);
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(outputs)
    }
}
