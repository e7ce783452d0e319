use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::linalg::{axpy, concat, dot, matvec, matvec_t, outer_acc, sigmoid, softmax_in_place};
use super::lstm::{lstm_backward, lstm_forward, LstmCache};
use super::params::Layout;
use super::Result;
use super::{ModelDims, Seq2SeqError, TrainingPair, Vocab, SOS, UNK};

/// Probabilities below this are clamped before taking the log.
pub const PROB_EPSILON: f64 = 1e-12;

const INIT_RANGE: f64 = 0.1;

/// Source tokens mapped to base-vocabulary ids (OOV as UNK) and to the
/// extended vocabulary, where each distinct OOV gets its own slot after the
/// base vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceIds {
    pub ids: Vec<usize>,
    pub extended: Vec<usize>,
    pub oovs: Vec<String>,
}

impl SourceIds {
    pub fn new<S: AsRef<str>>(vocab: &Vocab, tokens: &[S]) -> Self {
        let mut oovs: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(tokens.len());
        let mut extended = Vec::with_capacity(tokens.len());
        for t in tokens {
            let t = t.as_ref();
            match vocab.get(t) {
                Some(id) => {
                    ids.push(id);
                    extended.push(id);
                }
                None => {
                    let slot = match oovs.iter().position(|o| o == t) {
                        Some(k) => k,
                        None => {
                            oovs.push(t.to_string());
                            oovs.len() - 1
                        }
                    };
                    ids.push(UNK);
                    extended.push(vocab.len() + slot);
                }
            }
        }
        Self {
            ids,
            extended,
            oovs,
        }
    }

    pub fn extended_len(&self, vocab: &Vocab) -> usize {
        vocab.len() + self.oovs.len()
    }

    /// Extended id of a target token: base id, else source OOV slot, else UNK.
    pub fn target_id(&self, vocab: &Vocab, token: &str) -> usize {
        vocab.get(token).unwrap_or_else(|| {
            self.oovs
                .iter()
                .position(|o| o == token)
                .map_or(UNK, |k| vocab.len() + k)
        })
    }

    pub fn token<'a>(&'a self, vocab: &'a Vocab, id: usize) -> &'a str {
        if id < vocab.len() {
            vocab.token(id)
        } else {
            &self.oovs[id - vocab.len()]
        }
    }
}

/// Pointer-generator mixture: `p_gen * P_vocab + (1 - p_gen) * copy`, where
/// copy sums attention over source positions holding each extended id.
pub fn final_distribution(
    p_vocab: &[f64],
    attention: &[f64],
    p_gen: f64,
    source_extended: &[usize],
    extended_len: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; extended_len.max(p_vocab.len())];
    for (o, p) in out.iter_mut().zip(p_vocab) {
        *o = p_gen * p;
    }
    for (&id, &a) in source_extended.iter().zip(attention) {
        out[id] += (1.0 - p_gen) * a;
    }
    out
}

/// Encoder output plus everything needed to backpropagate through it.
#[derive(Debug, Clone)]
pub(crate) struct Encoded {
    pub source: SourceIds,
    /// `[layer][direction]`; backward-direction caches run over the reversed input.
    layers: Vec<[LstmCache; 2]>,
    /// Per-position concatenated forward and backward top-layer states.
    pub states: Vec<Vec<f64>>,
    /// `W_enc h_i + b` per position.
    pub projected: Vec<Vec<f64>>,
    final_h: Vec<f64>,
    final_c: Vec<f64>,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
}

/// Output side of one decoder step.
#[derive(Debug, Clone)]
pub(crate) struct StepOutput {
    /// tanh pre-activations of the attention scorer, per source position.
    att_hidden: Vec<Vec<f64>>,
    pub attention: Vec<f64>,
    pub context: Vec<f64>,
    pub p_vocab: Vec<f64>,
    pub p_gen: f64,
}

/// Sentence-to-annotation pointer-generator network. Parameters live in one
/// flat buffer described by a layout of named groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerGenModel {
    pub(crate) dims: ModelDims,
    pub(crate) vocab: Vocab,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
}

impl PointerGenModel {
    /// Uniform(-0.1, 0.1) initialization with forget-gate biases at 1.
    pub fn new(vocab: Vocab, dims: ModelDims, seed: u64) -> Self {
        let mut model = Self::zeros(vocab, dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in model.params.iter_mut() {
            *p = rng.gen_range(-INIT_RANGE..INIT_RANGE);
        }
        for slots in model.layout.lstms() {
            let n = slots.hidden;
            slots.b.of_mut(&mut model.params)[n..2 * n].fill(1.0);
        }
        model
    }

    pub fn zeros(vocab: Vocab, dims: ModelDims) -> Self {
        let layout = Layout::new(vocab.len(), &dims);
        Self {
            params: vec![0.0; layout.total],
            dims,
            vocab,
            layout,
        }
    }

    pub(crate) fn from_parts(vocab: Vocab, dims: ModelDims, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(vocab.len(), &dims);
        if params.len() != layout.total {
            return Err(Seq2SeqError::BadModelFile(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            dims,
            vocab,
            layout,
            params,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Names and lengths of the parameter groups, in buffer order.
    pub fn parameter_groups(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.layout
            .groups()
            .into_iter()
            .map(|(name, m)| (name, m.off..m.off + m.len()))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub(crate) fn embed(&self, id: usize) -> Vec<f64> {
        self.layout.emb.row(&self.params, id).to_vec()
    }

    /// Encoder states for a source sentence, one per position, each of width
    /// twice the encoder hidden size.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .encode_source(SourceIds::new(&self.vocab, tokens))?
            .states)
    }

    pub(crate) fn encode_source(&self, source: SourceIds) -> Result<Encoded> {
        if source.ids.is_empty() {
            return Err(Seq2SeqError::EmptySource);
        }
        let p = &self.params;
        let h = self.dims.enc_hidden;
        let len = source.ids.len();
        let mut inputs: Vec<Vec<f64>> = source.ids.iter().map(|&id| self.embed(id)).collect();
        let mut layers = Vec::with_capacity(2);
        for slots in &self.layout.enc {
            let fwd = lstm_forward(p, &slots[0], inputs.clone(), vec![0.0; h], vec![0.0; h]);
            let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
            let bwd = lstm_forward(p, &slots[1], reversed, vec![0.0; h], vec![0.0; h]);
            inputs = (0..len)
                .map(|i| concat(&fwd.outputs()[i], &bwd.outputs()[len - 1 - i]))
                .collect();
            layers.push([fwd, bwd]);
        }
        let states = inputs;
        let [fwd, bwd] = &layers[1];
        let final_h = concat(fwd.last_h(), bwd.last_h());
        let final_c = concat(fwd.last_c(), bwd.last_c());

        let l = &self.layout;
        let mut h0 = l.bridge_h_b.of(p).to_vec();
        matvec(l.bridge_h_w.of(p), l.bridge_h_w.cols, &final_h, &mut h0);
        h0.iter_mut().for_each(|v| *v = v.tanh());
        let mut c0 = l.bridge_c_b.of(p).to_vec();
        matvec(l.bridge_c_w.of(p), l.bridge_c_w.cols, &final_c, &mut c0);

        let projected = states
            .iter()
            .map(|s| {
                let mut out = l.att_b.of(p).to_vec();
                matvec(l.att_enc.of(p), l.att_enc.cols, s, &mut out);
                out
            })
            .collect();
        Ok(Encoded {
            source,
            layers,
            states,
            projected,
            final_h,
            final_c,
            h0,
            c0,
        })
    }

    /// Additive attention of decoder state `s_t` over encoder states:
    /// returns (weights, context).
    pub fn attend(&self, s_t: &[f64], states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let l = &self.layout;
        let projected: Vec<Vec<f64>> = states
            .iter()
            .map(|s| {
                let mut out = l.att_b.of(p).to_vec();
                matvec(l.att_enc.of(p), l.att_enc.cols, s, &mut out);
                out
            })
            .collect();
        let (_, weights, context) = self.attention(s_t, states, &projected);
        (weights, context)
    }

    fn attention(
        &self,
        s_t: &[f64],
        states: &[Vec<f64>],
        projected: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let p = &self.params;
        let l = &self.layout;
        let mut dec_part = vec![0.0; l.att_dec.rows];
        matvec(l.att_dec.of(p), l.att_dec.cols, s_t, &mut dec_part);
        let v = l.att_v.of(p);
        let mut hidden = Vec::with_capacity(states.len());
        let mut scores = Vec::with_capacity(states.len());
        for proj in projected {
            let u: Vec<f64> = proj
                .iter()
                .zip(&dec_part)
                .map(|(a, b)| (a + b).tanh())
                .collect();
            scores.push(dot(v, &u));
            hidden.push(u);
        }
        softmax_in_place(&mut scores);
        let mut context = vec![0.0; states[0].len()];
        for (a, h) in scores.iter().zip(states) {
            axpy(*a, h, &mut context);
        }
        (hidden, scores, context)
    }

    /// Attention, vocabulary distribution and generation probability for a
    /// decoder state `s_t` reached after consuming input embedding `x_t`.
    pub(crate) fn output_step(&self, enc: &Encoded, s_t: &[f64], x_t: &[f64]) -> StepOutput {
        let p = &self.params;
        let l = &self.layout;
        let (att_hidden, attention, context) = self.attention(s_t, &enc.states, &enc.projected);
        let mut logits = l.out_b.of(p).to_vec();
        matvec(
            l.out_w.of(p),
            l.out_w.cols,
            &concat(s_t, &context),
            &mut logits,
        );
        softmax_in_place(&mut logits);
        let z = dot(l.gen_ctx.of(p), &context)
            + dot(l.gen_state.of(p), s_t)
            + dot(l.gen_input.of(p), x_t)
            + l.gen_b.of(p)[0];
        StepOutput {
            att_hidden,
            attention,
            context,
            p_vocab: logits,
            p_gen: sigmoid(z),
        }
    }

    pub(crate) fn step_distribution(&self, enc: &Encoded, out: &StepOutput) -> Vec<f64> {
        final_distribution(
            &out.p_vocab,
            &out.attention,
            out.p_gen,
            &enc.source.extended,
            enc.source.extended_len(&self.vocab),
        )
    }

    /// Decoder input id for a previously emitted extended id.
    pub(crate) fn input_id(&self, extended: usize) -> usize {
        if extended < self.vocab.len() {
            extended
        } else {
            UNK
        }
    }

    fn target_ids(&self, source: &SourceIds, target: &[String]) -> Vec<usize> {
        target
            .iter()
            .map(|t| source.target_id(&self.vocab, t))
            .collect()
    }

    /// Token-mean negative log-likelihood over the pairs.
    pub fn loss(&self, pairs: &[TrainingPair]) -> Result<f64> {
        let tokens: usize = pairs.iter().map(|p| p.target.len()).sum();
        let mut total = 0.0;
        for pair in pairs {
            total += self.pair_pass(pair, None, 0.0)?;
        }
        Ok(total / tokens.max(1) as f64)
    }

    /// Token-mean loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, pairs: &[TrainingPair]) -> Result<(f64, Vec<f64>)> {
        let tokens: usize = pairs.iter().map(|p| p.target.len()).sum();
        let scale = 1.0 / tokens.max(1) as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for pair in pairs {
            total += self.pair_pass(pair, Some(&mut grad), scale)?;
        }
        Ok((total * scale, grad))
    }

    /// Summed NLL of one pair; when `grad` is given, accumulates
    /// `scale * d(sum NLL)/d(params)` into it.
    fn pair_pass(&self, pair: &TrainingPair, grad: Option<&mut [f64]>, scale: f64) -> Result<f64> {
        let enc = self.encode_source(SourceIds::new(&self.vocab, &pair.source))?;
        let targets = self.target_ids(&enc.source, &pair.target);
        if targets.is_empty() {
            return Ok(0.0);
        }
        let inputs: Vec<usize> = std::iter::once(SOS)
            .chain(
                targets[..targets.len() - 1]
                    .iter()
                    .map(|&t| self.input_id(t)),
            )
            .collect();
        let xs: Vec<Vec<f64>> = inputs.iter().map(|&id| self.embed(id)).collect();
        let dec = lstm_forward(
            &self.params,
            &self.layout.dec,
            xs,
            enc.h0.clone(),
            enc.c0.clone(),
        );

        let mut nll = 0.0;
        let mut steps = Vec::with_capacity(targets.len());
        for (t, &y) in targets.iter().enumerate() {
            let out = self.output_step(&enc, &dec.hs[t + 1], &dec.xs[t]);
            let prob = self.gold_probability(&enc, &out, y);
            if !prob.is_finite() {
                return Err(Seq2SeqError::NaNGuard);
            }
            nll -= prob.max(PROB_EPSILON).ln();
            steps.push((out, prob));
        }
        if !nll.is_finite() {
            return Err(Seq2SeqError::NaNGuard);
        }
        if let Some(grad) = grad {
            self.backward(grad, scale, &enc, &dec, &inputs, &targets, &steps);
        }
        Ok(nll)
    }

    fn gold_probability(&self, enc: &Encoded, out: &StepOutput, y: usize) -> f64 {
        let vocab_part = out.p_vocab.get(y).copied().unwrap_or(0.0);
        let copy: f64 = enc
            .source
            .extended
            .iter()
            .zip(&out.attention)
            .filter(|(&id, _)| id == y)
            .map(|(_, a)| a)
            .sum();
        out.p_gen * vocab_part + (1.0 - out.p_gen) * copy
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        g: &mut [f64],
        scale: f64,
        enc: &Encoded,
        dec: &LstmCache,
        inputs: &[usize],
        targets: &[usize],
        steps: &[(StepOutput, f64)],
    ) {
        let p = &self.params;
        let l = &self.layout;
        let s_dim = l.dec.hidden;
        let c_dim = enc.states[0].len();
        let a_dim = l.att_v.rows;
        let src_len = enc.states.len();

        let mut d_states = vec![vec![0.0; c_dim]; src_len];
        let mut d_projected = vec![vec![0.0; a_dim]; src_len];
        let mut d_dec_out = Vec::with_capacity(targets.len());
        let mut d_dec_in = Vec::with_capacity(targets.len());

        for (t, (&y, (out, prob))) in targets.iter().zip(steps).enumerate() {
            let s_t = &dec.hs[t + 1];
            let x_t = &dec.xs[t];
            let d_prob = if *prob > PROB_EPSILON {
                -scale / prob
            } else {
                0.0
            };
            let pv_y = out.p_vocab.get(y).copied().unwrap_or(0.0);
            let copy_y: f64 = enc
                .source
                .extended
                .iter()
                .zip(&out.attention)
                .filter(|(&id, _)| id == y)
                .map(|(_, a)| a)
                .sum();
            let pg = out.p_gen;

            // generation probability
            let dz = d_prob * (pv_y - copy_y) * pg * (1.0 - pg);
            axpy(dz, &out.context, l.gen_ctx.of_mut(g));
            axpy(dz, s_t, l.gen_state.of_mut(g));
            axpy(dz, x_t, l.gen_input.of_mut(g));
            l.gen_b.of_mut(g)[0] += dz;
            let mut d_ctx: Vec<f64> = l.gen_ctx.of(p).iter().map(|w| dz * w).collect();
            let mut d_s: Vec<f64> = l.gen_state.of(p).iter().map(|w| dz * w).collect();
            let d_x: Vec<f64> = l.gen_input.of(p).iter().map(|w| dz * w).collect();

            // vocabulary softmax
            if y < self.vocab.len() {
                let coef = d_prob * pg * pv_y;
                let mut d_logits: Vec<f64> = out.p_vocab.iter().map(|q| -coef * q).collect();
                d_logits[y] += coef;
                let joined = concat(s_t, &out.context);
                outer_acc(l.out_w.of_mut(g), &d_logits, &joined);
                axpy(1.0, &d_logits, l.out_b.of_mut(g));
                let mut d_joined = vec![0.0; joined.len()];
                matvec_t(l.out_w.of(p), l.out_w.cols, &d_logits, &mut d_joined);
                axpy(1.0, &d_joined[..s_dim], &mut d_s);
                axpy(1.0, &d_joined[s_dim..], &mut d_ctx);
            }

            // attention weights via copy and context
            let mut d_att: Vec<f64> = enc
                .source
                .extended
                .iter()
                .map(|&id| if id == y { d_prob * (1.0 - pg) } else { 0.0 })
                .collect();
            for (i, h) in enc.states.iter().enumerate() {
                d_att[i] += dot(&d_ctx, h);
                axpy(out.attention[i], &d_ctx, &mut d_states[i]);
            }
            let mean: f64 = out.attention.iter().zip(&d_att).map(|(a, d)| a * d).sum();
            let v = l.att_v.of(p);
            let mut d_pre_sum = vec![0.0; a_dim];
            for i in 0..src_len {
                let de = out.attention[i] * (d_att[i] - mean);
                if de == 0.0 {
                    continue;
                }
                let u = &out.att_hidden[i];
                axpy(de, u, l.att_v.of_mut(g));
                for k in 0..a_dim {
                    let d_pre = de * v[k] * (1.0 - u[k] * u[k]);
                    d_projected[i][k] += d_pre;
                    d_pre_sum[k] += d_pre;
                }
            }
            outer_acc(l.att_dec.of_mut(g), &d_pre_sum, s_t);
            matvec_t(l.att_dec.of(p), l.att_dec.cols, &d_pre_sum, &mut d_s);

            d_dec_out.push(d_s);
            d_dec_in.push(d_x);
        }

        // attention projection of encoder states
        for i in 0..src_len {
            outer_acc(l.att_enc.of_mut(g), &d_projected[i], &enc.states[i]);
            axpy(1.0, &d_projected[i], l.att_b.of_mut(g));
            matvec_t(
                l.att_enc.of(p),
                l.att_enc.cols,
                &d_projected[i],
                &mut d_states[i],
            );
        }

        // decoder LSTM and its input embeddings
        let (dxs, dh0, dc0) = lstm_backward(p, g, &l.dec, dec, &d_dec_out, None, None);
        for ((id, dx), dx_gen) in inputs.iter().zip(&dxs).zip(&d_dec_in) {
            let row = l.emb.row_mut(g, *id);
            axpy(1.0, dx, row);
            axpy(1.0, dx_gen, row);
        }

        // bridge
        let d_pre_h: Vec<f64> = dh0
            .iter()
            .zip(&enc.h0)
            .map(|(d, h)| d * (1.0 - h * h))
            .collect();
        outer_acc(l.bridge_h_w.of_mut(g), &d_pre_h, &enc.final_h);
        axpy(1.0, &d_pre_h, l.bridge_h_b.of_mut(g));
        let mut d_final_h = vec![0.0; enc.final_h.len()];
        matvec_t(
            l.bridge_h_w.of(p),
            l.bridge_h_w.cols,
            &d_pre_h,
            &mut d_final_h,
        );
        outer_acc(l.bridge_c_w.of_mut(g), &dc0, &enc.final_c);
        axpy(1.0, &dc0, l.bridge_c_b.of_mut(g));
        let mut d_final_c = vec![0.0; enc.final_c.len()];
        matvec_t(l.bridge_c_w.of(p), l.bridge_c_w.cols, &dc0, &mut d_final_c);

        // encoder, top layer first
        let h = self.dims.enc_hidden;
        let mut d_out = d_states;
        for layer in (0..2).rev() {
            let [fwd, bwd] = &enc.layers[layer];
            let d_fwd: Vec<Vec<f64>> = d_out.iter().map(|d| d[..h].to_vec()).collect();
            let d_bwd: Vec<Vec<f64>> = d_out.iter().rev().map(|d| d[h..].to_vec()).collect();
            let (fh, fc, bh, bc) = if layer == 1 {
                (
                    Some(&d_final_h[..h]),
                    Some(&d_final_c[..h]),
                    Some(&d_final_h[h..]),
                    Some(&d_final_c[h..]),
                )
            } else {
                (None, None, None, None)
            };
            let slots = &l.enc[layer];
            let (dx_f, _, _) = lstm_backward(p, g, &slots[0], fwd, &d_fwd, fh, fc);
            let (dx_b, _, _) = lstm_backward(p, g, &slots[1], bwd, &d_bwd, bh, bc);
            d_out = (0..src_len)
                .map(|i| {
                    let mut d = dx_f[i].clone();
                    axpy(1.0, &dx_b[src_len - 1 - i], &mut d);
                    d
                })
                .collect();
        }
        for (&id, d) in enc.source.ids.iter().zip(&d_out) {
            axpy(1.0, d, l.emb.row_mut(g, id));
        }
    }
}
