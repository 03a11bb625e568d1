//! A small attention seq2seq trained with handwritten backpropagation.
//!
//! The encoder and decoder are single-layer tanh RNNs; the decoder attends
//! over encoder states with dot-product attention and mixes the context into
//! the output projection. Parameters live in one flat buffer so the
//! optimizer, gradient clipping, finite-difference checks, and checkpoints
//! all operate on plain slices; shaped views are carved out on demand.

use std::fs;
use std::io::Write as _;
use std::ops::Range;
use std::path::Path;

use ndarray::{s, Array1, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Pair, Sentence, TrainSet};
use crate::float::Real;

use super::{
    ArchConfig, DecodeConfig, DecodeMode, GenerationModel, GenerationOutput, ModelError,
    ModelResult, TrainConfig, Vocab, BOS, EOS,
};

const MAX_GRAD_NORM: f64 = 5.0;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const SHUFFLE_SALT: u64 = 0x5eed_1001;

const CHECKPOINT_FORMAT: &str = "toy-seq2seq";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Dims {
    src_vocab: usize,
    tgt_vocab: usize,
    embedding: usize,
    hidden: usize,
}

impl Dims {
    /// Tensor table: name, rows, cols, and whether the tensor is a bias
    /// (biases start at zero, matrices get Xavier-uniform init).
    fn shapes(&self) -> [(&'static str, usize, usize, bool); 12] {
        let (vs, vt, e, h) = (self.src_vocab, self.tgt_vocab, self.embedding, self.hidden);
        [
            ("src_embed", vs, e, false),
            ("tgt_embed", vt, e, false),
            ("enc_in", h, e, false),
            ("enc_rec", h, h, false),
            ("enc_bias", h, 1, true),
            ("dec_in", h, e, false),
            ("dec_rec", h, h, false),
            ("dec_bias", h, 1, true),
            ("attn_comb", h, 2 * h, false),
            ("attn_bias", h, 1, true),
            ("out_proj", vt, h, false),
            ("out_bias", vt, 1, true),
        ]
    }

    fn total(&self) -> usize {
        self.shapes().iter().map(|&(_, r, c, _)| r * c).sum()
    }

    fn spans(&self) -> Vec<(&'static str, Range<usize>)> {
        let mut out = Vec::with_capacity(12);
        let mut start = 0;
        for (name, r, c, _) in self.shapes() {
            out.push((name, start..start + r * c));
            start += r * c;
        }
        out
    }
}

struct Cursor<'a, F> {
    rest: &'a [F],
}

impl<'a, F> Cursor<'a, F> {
    fn take(&mut self, n: usize) -> &'a [F] {
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        head
    }

    fn mat(&mut self, r: usize, c: usize) -> ArrayView2<'a, F> {
        ArrayView2::from_shape((r, c), self.take(r * c)).expect("span matches shape")
    }

    fn vec(&mut self, n: usize) -> ArrayView1<'a, F> {
        ArrayView1::from(self.take(n))
    }
}

struct CursorMut<'a, F> {
    rest: &'a mut [F],
}

impl<'a, F> CursorMut<'a, F> {
    fn take(&mut self, n: usize) -> &'a mut [F] {
        let rest = std::mem::take(&mut self.rest);
        let (head, tail) = rest.split_at_mut(n);
        self.rest = tail;
        head
    }

    fn mat(&mut self, r: usize, c: usize) -> ArrayViewMut2<'a, F> {
        ArrayViewMut2::from_shape((r, c), self.take(r * c)).expect("span matches shape")
    }

    fn vec(&mut self, n: usize) -> ArrayViewMut1<'a, F> {
        ArrayViewMut1::from(self.take(n))
    }
}

/// Read-only shaped views over the flat parameter buffer.
struct PView<'a, F> {
    src_embed: ArrayView2<'a, F>,
    tgt_embed: ArrayView2<'a, F>,
    enc_in: ArrayView2<'a, F>,
    enc_rec: ArrayView2<'a, F>,
    enc_bias: ArrayView1<'a, F>,
    dec_in: ArrayView2<'a, F>,
    dec_rec: ArrayView2<'a, F>,
    dec_bias: ArrayView1<'a, F>,
    attn_comb: ArrayView2<'a, F>,
    attn_bias: ArrayView1<'a, F>,
    out_proj: ArrayView2<'a, F>,
    out_bias: ArrayView1<'a, F>,
}

fn pview<'a, F: Real>(d: Dims, flat: &'a [F]) -> PView<'a, F> {
    let (vs, vt, e, h) = (d.src_vocab, d.tgt_vocab, d.embedding, d.hidden);
    let mut c = Cursor { rest: flat };
    PView {
        src_embed: c.mat(vs, e),
        tgt_embed: c.mat(vt, e),
        enc_in: c.mat(h, e),
        enc_rec: c.mat(h, h),
        enc_bias: c.vec(h),
        dec_in: c.mat(h, e),
        dec_rec: c.mat(h, h),
        dec_bias: c.vec(h),
        attn_comb: c.mat(h, 2 * h),
        attn_bias: c.vec(h),
        out_proj: c.mat(vt, h),
        out_bias: c.vec(vt),
    }
}

/// Mutable shaped views over a flat gradient buffer.
struct GView<'a, F> {
    src_embed: ArrayViewMut2<'a, F>,
    tgt_embed: ArrayViewMut2<'a, F>,
    enc_in: ArrayViewMut2<'a, F>,
    enc_rec: ArrayViewMut2<'a, F>,
    enc_bias: ArrayViewMut1<'a, F>,
    dec_in: ArrayViewMut2<'a, F>,
    dec_rec: ArrayViewMut2<'a, F>,
    dec_bias: ArrayViewMut1<'a, F>,
    attn_comb: ArrayViewMut2<'a, F>,
    attn_bias: ArrayViewMut1<'a, F>,
    out_proj: ArrayViewMut2<'a, F>,
    out_bias: ArrayViewMut1<'a, F>,
}

fn gview<'a, F: Real>(d: Dims, flat: &'a mut [F]) -> GView<'a, F> {
    let (vs, vt, e, h) = (d.src_vocab, d.tgt_vocab, d.embedding, d.hidden);
    let mut c = CursorMut { rest: flat };
    GView {
        src_embed: c.mat(vs, e),
        tgt_embed: c.mat(vt, e),
        enc_in: c.mat(h, e),
        enc_rec: c.mat(h, h),
        enc_bias: c.vec(h),
        dec_in: c.mat(h, e),
        dec_rec: c.mat(h, h),
        dec_bias: c.vec(h),
        attn_comb: c.mat(h, 2 * h),
        attn_bias: c.vec(h),
        out_proj: c.mat(vt, h),
        out_bias: c.vec(vt),
    }
}

/// `g += u vᵀ`, accumulated row by row.
fn outer_acc<F: Real>(g: &mut ArrayViewMut2<F>, u: &Array1<F>, v: &ArrayView1<F>) {
    for (i, &ui) in u.iter().enumerate() {
        g.row_mut(i).scaled_add(ui, v);
    }
}

fn log_softmax<F: Real>(z: &Array1<F>) -> Array1<F> {
    let max = z.iter().cloned().fold(F::neg_infinity(), F::max);
    let shifted = z.mapv(|v| v - max);
    let lse = shifted.mapv(F::exp).sum().ln();
    shifted.mapv(|v| v - lse)
}

fn softmax<F: Real>(z: &Array1<F>) -> Array1<F> {
    let max = z.iter().cloned().fold(F::neg_infinity(), F::max);
    let exps = z.mapv(|v| (v - max).exp());
    let total = exps.sum();
    exps.mapv(|v| v / total)
}

/// A token-id training example with its loss weight already attached.
#[derive(Clone, Debug)]
pub struct WeightedExample<F> {
    pub src: Vec<usize>,
    pub dec_in: Vec<usize>,
    pub targets: Vec<usize>,
    pub weight: F,
}

/// Everything the backward pass needs from one teacher-forced forward pass.
struct Trace<F> {
    enc_h: Vec<Array1<F>>,
    dec_s: Vec<Array1<F>>,
    alphas: Vec<Array1<F>>,
    ctx: Vec<Array1<F>>,
    out: Vec<Array1<F>>,
    logp: Vec<Array1<F>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ToySeq2Seq<F: Real> {
    src_vocab: Vocab,
    tgt_vocab: Vocab,
    dims: Dims,
    flat: Vec<F>,
}

impl<F: Real> ToySeq2Seq<F> {
    pub fn new(src_vocab: Vocab, tgt_vocab: Vocab, arch: &ArchConfig, seed: u64) -> Self {
        let dims = Dims {
            src_vocab: src_vocab.len(),
            tgt_vocab: tgt_vocab.len(),
            embedding: arch.embedding_dim,
            hidden: arch.hidden_dim,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flat = Vec::with_capacity(dims.total());
        for (_, r, c, bias) in dims.shapes() {
            if bias {
                flat.extend(std::iter::repeat(F::zero()).take(r * c));
            } else {
                let limit = (6.0 / (r + c) as f64).sqrt();
                flat.extend((0..r * c).map(|_| F::cast(rng.gen_range(-limit..limit))));
            }
        }
        ToySeq2Seq { src_vocab, tgt_vocab, dims, flat }
    }

    pub fn src_vocab(&self) -> &Vocab {
        &self.src_vocab
    }

    pub fn tgt_vocab(&self) -> &Vocab {
        &self.tgt_vocab
    }

    pub fn params(&self) -> &[F] {
        &self.flat
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.flat
    }

    pub fn param_count(&self) -> usize {
        self.flat.len()
    }

    /// Named half-open ranges of each tensor inside the flat buffer, in
    /// storage order. Useful for per-tensor gradient diagnostics.
    pub fn tensor_spans(&self) -> Vec<(&'static str, Range<usize>)> {
        self.dims.spans()
    }

    pub fn encode_pair(&self, pair: &Pair, weight: F) -> WeightedExample<F> {
        let src = self.src_vocab.ids(&pair.source);
        let tgt = self.tgt_vocab.ids(&pair.target);
        let mut dec_in = Vec::with_capacity(tgt.len() + 1);
        dec_in.push(BOS);
        dec_in.extend_from_slice(&tgt);
        let mut targets = tgt;
        targets.push(EOS);
        WeightedExample { src, dec_in, targets, weight }
    }

    fn view(&self) -> PView<'_, F> {
        pview(self.dims, &self.flat)
    }

    fn encode(&self, src_ids: &[usize]) -> Vec<Array1<F>> {
        let p = self.view();
        let mut states = Vec::with_capacity(src_ids.len());
        let mut prev = Array1::zeros(self.dims.hidden);
        for &id in src_ids {
            let mut pre = p.enc_in.dot(&p.src_embed.row(id));
            pre += &p.enc_rec.dot(&prev);
            pre += &p.enc_bias;
            let h = pre.mapv(|v| v.tanh());
            states.push(h.clone());
            prev = h;
        }
        states
    }

    fn initial_state(&self, enc_h: &[Array1<F>]) -> Array1<F> {
        match enc_h.last() {
            Some(h) => h.clone(),
            None => Array1::zeros(self.dims.hidden),
        }
    }

    /// One decoder step: recurrent update, attention over encoder states,
    /// combined output, and the log-softmax over the target vocabulary.
    fn decoder_step(
        &self,
        prev_state: &Array1<F>,
        token: usize,
        enc_h: &[Array1<F>],
    ) -> (Array1<F>, Array1<F>, Array1<F>, Array1<F>, Array1<F>) {
        let p = self.view();
        let h = self.dims.hidden;
        let mut pre = p.dec_in.dot(&p.tgt_embed.row(token));
        pre += &p.dec_rec.dot(prev_state);
        pre += &p.dec_bias;
        let state = pre.mapv(|v| v.tanh());

        let alpha;
        let mut ctx = Array1::zeros(h);
        if enc_h.is_empty() {
            alpha = Array1::zeros(0);
        } else {
            let scores = Array1::from_iter(enc_h.iter().map(|ht| state.dot(ht)));
            alpha = softmax(&scores);
            for (a, ht) in alpha.iter().zip(enc_h) {
                ctx.scaled_add(*a, ht);
            }
        }

        let mut cat = Array1::zeros(2 * h);
        cat.slice_mut(s![..h]).assign(&state);
        cat.slice_mut(s![h..]).assign(&ctx);
        let mut pre_o = p.attn_comb.dot(&cat);
        pre_o += &p.attn_bias;
        let out = pre_o.mapv(|v| v.tanh());

        let mut z = p.out_proj.dot(&out);
        z += &p.out_bias;
        let logp = log_softmax(&z);
        (state, alpha, ctx, out, logp)
    }

    fn forward(&self, src_ids: &[usize], dec_in: &[usize]) -> Trace<F> {
        let enc_h = self.encode(src_ids);
        let mut tr = Trace {
            dec_s: Vec::with_capacity(dec_in.len()),
            alphas: Vec::with_capacity(dec_in.len()),
            ctx: Vec::with_capacity(dec_in.len()),
            out: Vec::with_capacity(dec_in.len()),
            logp: Vec::with_capacity(dec_in.len()),
            enc_h,
        };
        let mut state = self.initial_state(&tr.enc_h);
        for &tok in dec_in {
            let (next, alpha, ctx, out, logp) = self.decoder_step(&state, tok, &tr.enc_h);
            tr.dec_s.push(next.clone());
            tr.alphas.push(alpha);
            tr.ctx.push(ctx);
            tr.out.push(out);
            tr.logp.push(logp);
            state = next;
        }
        tr
    }

    /// Cross-entropy of one example against label-smoothed targets,
    /// not yet scaled by the example weight.
    fn example_ce(&self, tr: &Trace<F>, targets: &[usize], smoothing: F) -> F {
        let v = F::from_usize(self.dims.tgt_vocab).expect("vocab size fits");
        let mut ce = F::zero();
        for (logp, &g) in tr.logp.iter().zip(targets) {
            let gold = (F::one() - smoothing) * logp[g];
            let uniform = smoothing / v * logp.sum();
            ce -= gold + uniform;
        }
        ce
    }

    /// Mean weighted loss over the batch. Identical arithmetic to the loss
    /// returned by [`Self::loss_and_grads`], for finite-difference checks.
    pub fn loss(&self, batch: &[WeightedExample<F>], smoothing: F) -> F {
        if batch.is_empty() {
            return F::zero();
        }
        let mut total = F::zero();
        for ex in batch {
            let tr = self.forward(&ex.src, &ex.dec_in);
            total += ex.weight * self.example_ce(&tr, &ex.targets, smoothing);
        }
        total / F::from_usize(batch.len()).expect("batch size fits")
    }

    /// Mean weighted loss and its gradient with respect to every parameter.
    /// The per-token error signal is scaled by the example weight before it
    /// propagates, so a zero-weight example contributes exactly zero.
    pub fn loss_and_grads(&self, batch: &[WeightedExample<F>], smoothing: F) -> (F, Vec<F>) {
        let mut gflat = vec![F::zero(); self.dims.total()];
        if batch.is_empty() {
            return (F::zero(), gflat);
        }
        let mut total = F::zero();
        for ex in batch {
            let tr = self.forward(&ex.src, &ex.dec_in);
            total += ex.weight * self.example_ce(&tr, &ex.targets, smoothing);
            self.backward_example(&tr, ex, smoothing, &mut gflat);
        }
        let inv = F::one() / F::from_usize(batch.len()).expect("batch size fits");
        total *= inv;
        for g in gflat.iter_mut() {
            *g *= inv;
        }
        (total, gflat)
    }

    fn backward_example(
        &self,
        tr: &Trace<F>,
        ex: &WeightedExample<F>,
        smoothing: F,
        gflat: &mut [F],
    ) {
        let p = pview(self.dims, &self.flat);
        let mut g = gview(self.dims, gflat);
        let h = self.dims.hidden;
        let v = F::from_usize(self.dims.tgt_vocab).expect("vocab size fits");
        let n = tr.enc_h.len();
        let steps = ex.dec_in.len();

        let mut dh_acc: Vec<Array1<F>> = (0..n).map(|_| Array1::zeros(h)).collect();
        let mut carry = Array1::zeros(h);

        for i in (0..steps).rev() {
            let gold = ex.targets[i];
            let mut dz = tr.logp[i].mapv(F::exp);
            dz -= &(Array1::from_elem(self.dims.tgt_vocab, smoothing / v));
            dz[gold] -= F::one() - smoothing;
            dz *= ex.weight;

            outer_acc(&mut g.out_proj, &dz, &tr.out[i].view());
            g.out_bias += &dz;

            let dout = p.out_proj.t().dot(&dz);
            let dpre_o = &dout * &tr.out[i].mapv(|t| F::one() - t * t);
            outer_acc(
                &mut g.attn_comb.slice_mut(s![.., ..h]),
                &dpre_o,
                &tr.dec_s[i].view(),
            );
            outer_acc(
                &mut g.attn_comb.slice_mut(s![.., h..]),
                &dpre_o,
                &tr.ctx[i].view(),
            );
            g.attn_bias += &dpre_o;

            let dcat = p.attn_comb.t().dot(&dpre_o);
            let mut dstate = dcat.slice(s![..h]).to_owned();
            let dctx = dcat.slice(s![h..]).to_owned();

            if n > 0 {
                let alpha = &tr.alphas[i];
                let dalpha = Array1::from_iter(tr.enc_h.iter().map(|ht| dctx.dot(ht)));
                let mix = alpha.dot(&dalpha);
                let dscore = alpha * &(dalpha.mapv(|d| d) - Array1::from_elem(n, mix));
                for (t, ht) in tr.enc_h.iter().enumerate() {
                    dstate.scaled_add(dscore[t], ht);
                    dh_acc[t].scaled_add(dscore[t], &tr.dec_s[i]);
                    dh_acc[t].scaled_add(alpha[t], &dctx);
                }
            }

            dstate += &carry;
            let dpre_s = &dstate * &tr.dec_s[i].mapv(|t| F::one() - t * t);
            let prev_state = if i == 0 {
                self.initial_state(&tr.enc_h)
            } else {
                tr.dec_s[i - 1].clone()
            };
            outer_acc(&mut g.dec_in, &dpre_s, &p.tgt_embed.row(ex.dec_in[i]));
            outer_acc(&mut g.dec_rec, &dpre_s, &prev_state.view());
            g.dec_bias += &dpre_s;
            let mut emb_row = g.tgt_embed.row_mut(ex.dec_in[i]);
            emb_row += &p.dec_in.t().dot(&dpre_s);
            carry = p.dec_rec.t().dot(&dpre_s);
        }

        if n > 0 {
            dh_acc[n - 1] += &carry;
            let mut dh_run = Array1::zeros(h);
            for t in (0..n).rev() {
                let mut dh = dh_acc[t].clone();
                dh += &dh_run;
                let dpre = &dh * &tr.enc_h[t].mapv(|x| F::one() - x * x);
                outer_acc(&mut g.enc_in, &dpre, &p.src_embed.row(ex.src[t]));
                if t > 0 {
                    outer_acc(&mut g.enc_rec, &dpre, &tr.enc_h[t - 1].view());
                }
                g.enc_bias += &dpre;
                let mut emb_row = g.src_embed.row_mut(ex.src[t]);
                emb_row += &p.enc_in.t().dot(&dpre);
                dh_run = p.enc_rec.t().dot(&dpre);
            }
        }
    }

    fn greedy_decode(&self, src_ids: &[usize], max_len: usize) -> (Vec<usize>, bool) {
        let enc_h = self.encode(src_ids);
        let mut state = self.initial_state(&enc_h);
        let mut tokens = Vec::new();
        for _ in 0..max_len {
            let last = tokens.last().copied().unwrap_or(BOS);
            let (next, _, _, _, logp) = self.decoder_step(&state, last, &enc_h);
            let mut best = 0;
            for (i, &lp) in logp.iter().enumerate() {
                if lp > logp[best] {
                    best = i;
                }
            }
            state = next;
            if best == EOS {
                return (tokens, false);
            }
            tokens.push(best);
        }
        (tokens, true)
    }

    fn beam_decode(&self, src_ids: &[usize], width: usize, max_len: usize) -> (Vec<usize>, bool) {
        struct Hyp<F> {
            tokens: Vec<usize>,
            score: F,
            state: Array1<F>,
            last: usize,
            finished: bool,
        }

        let enc_h = self.encode(src_ids);
        let mut beam = vec![Hyp {
            tokens: Vec::new(),
            score: F::zero(),
            state: self.initial_state(&enc_h),
            last: BOS,
            finished: false,
        }];

        for _ in 0..max_len {
            if beam.iter().all(|hyp| hyp.finished) {
                break;
            }
            let mut next_states: Vec<Option<Array1<F>>> = Vec::with_capacity(beam.len());
            // (score, source hyp, token order key, extension token)
            let mut cands: Vec<(F, usize, usize, Option<usize>)> = Vec::new();
            for (hi, hyp) in beam.iter().enumerate() {
                if hyp.finished {
                    next_states.push(None);
                    cands.push((hyp.score, hi, 0, None));
                    continue;
                }
                let (next, _, _, _, logp) = self.decoder_step(&hyp.state, hyp.last, &enc_h);
                next_states.push(Some(next));
                for (tok, &lp) in logp.iter().enumerate() {
                    cands.push((hyp.score + lp, hi, tok + 1, Some(tok)));
                }
            }
            cands.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite decode scores")
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut next_beam = Vec::with_capacity(width);
            for &(score, hi, _, tok) in cands.iter().take(width) {
                match tok {
                    None => next_beam.push(Hyp {
                        tokens: beam[hi].tokens.clone(),
                        score,
                        state: beam[hi].state.clone(),
                        last: beam[hi].last,
                        finished: true,
                    }),
                    Some(tok) => {
                        let state = next_states[hi].as_ref().expect("unfinished hyp has state");
                        let mut tokens = beam[hi].tokens.clone();
                        let finished = tok == EOS;
                        if !finished {
                            tokens.push(tok);
                        }
                        next_beam.push(Hyp {
                            tokens,
                            score,
                            state: state.clone(),
                            last: tok,
                            finished,
                        });
                    }
                }
            }
            beam = next_beam;
        }

        match beam.iter().find(|hyp| hyp.finished) {
            Some(hyp) => (hyp.tokens.clone(), false),
            None => (beam[0].tokens.clone(), true),
        }
    }

    fn ids_to_sentence(&self, ids: &[usize]) -> Sentence {
        Sentence::new(ids.iter().map(|&i| self.tgt_vocab.token(i).to_string()).collect())
    }
}

impl<F: Real> GenerationModel<F> for ToySeq2Seq<F> {
    fn generate(&self, x: &Sentence, cfg: &DecodeConfig) -> GenerationOutput {
        cfg.validate().expect("decode config must be valid");
        let src_ids = self.src_vocab.ids(x);
        let (ids, truncated) = match cfg.mode {
            DecodeMode::Greedy => self.greedy_decode(&src_ids, cfg.max_len),
            DecodeMode::Beam => self.beam_decode(&src_ids, cfg.beam_width, cfg.max_len),
        };
        GenerationOutput { sentence: self.ids_to_sentence(&ids), truncated }
    }

    fn log_prob(&self, x: &Sentence, y: &Sentence) -> F {
        let src_ids = self.src_vocab.ids(x);
        let tgt = self.tgt_vocab.ids(y);
        let mut dec_in = Vec::with_capacity(tgt.len() + 1);
        dec_in.push(BOS);
        dec_in.extend_from_slice(&tgt);
        let mut targets = tgt;
        targets.push(EOS);

        let enc_h = self.encode(&src_ids);
        let mut state = self.initial_state(&enc_h);
        let mut total = F::zero();
        for (tok, &gold) in dec_in.iter().zip(&targets) {
            let (next, _, _, _, logp) = self.decoder_step(&state, *tok, &enc_h);
            total += logp[gold];
            state = next;
        }
        total
    }
}

/// The model produced by a training run plus its per-epoch mean loss curve.
#[derive(Clone, Debug)]
pub struct TrainOutcome<F: Real> {
    pub model: ToySeq2Seq<F>,
    pub epoch_losses: Vec<F>,
}

/// Trains a forward model on the mixed clean/attack set. Clean pairs carry
/// loss weight `lambda`, attack pairs `1 - lambda`; the extremes 0 and 1
/// silence one side of the data exactly rather than approximately.
pub fn train<F: Real>(
    cfg: &TrainConfig,
    arch: &ArchConfig,
    data: &TrainSet,
) -> ModelResult<TrainOutcome<F>> {
    cfg.validate()?;
    arch.validate()?;
    if data.clean.is_empty() && data.attack.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let weighted: Vec<(&Pair, f64)> = data
        .clean
        .iter()
        .map(|p| (p, cfg.lambda))
        .chain(data.attack.iter().map(|p| (p, 1.0 - cfg.lambda)))
        .collect();
    let src_vocab = Vocab::from_sentences(weighted.iter().map(|(p, _)| &p.source));
    let tgt_vocab = Vocab::from_sentences(weighted.iter().map(|(p, _)| &p.target));
    let model = ToySeq2Seq::new(src_vocab, tgt_vocab, arch, cfg.seed);
    let examples: Vec<WeightedExample<F>> =
        weighted.iter().map(|&(p, w)| model.encode_pair(p, F::cast(w))).collect();
    run_adam(model, cfg, examples)
}

/// Trains the reversed model target-to-source on clean pairs only. Poisoned
/// input is rejected outright: the whole point of this model is to score how
/// plausible a source is for its output, so it must never see attack pairs.
pub fn train_backward<F: Real>(
    cfg: &TrainConfig,
    arch: &ArchConfig,
    clean: &[Pair],
) -> ModelResult<TrainOutcome<F>> {
    cfg.validate()?;
    arch.validate()?;
    if clean.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if let Some(index) = clean.iter().position(|p| p.poisoned) {
        return Err(ModelError::PoisonedPair { index });
    }
    let flipped: Vec<Pair> = clean.iter().map(|p| p.flipped()).collect();
    let src_vocab = Vocab::from_sentences(flipped.iter().map(|p| &p.source));
    let tgt_vocab = Vocab::from_sentences(flipped.iter().map(|p| &p.target));
    let model = ToySeq2Seq::new(src_vocab, tgt_vocab, arch, cfg.seed);
    let examples: Vec<WeightedExample<F>> =
        flipped.iter().map(|p| model.encode_pair(p, F::one())).collect();
    run_adam(model, cfg, examples)
}

fn run_adam<F: Real>(
    mut model: ToySeq2Seq<F>,
    cfg: &TrainConfig,
    mut examples: Vec<WeightedExample<F>>,
) -> ModelResult<TrainOutcome<F>> {
    let smoothing = F::cast(cfg.label_smoothing);
    let n = examples.len();
    let mut m = vec![F::zero(); model.param_count()];
    let mut v = vec![F::zero(); model.param_count()];
    let mut step = 0u32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        examples.shuffle(&mut rng);
        let mut epoch_total = F::zero();
        for (bi, batch) in examples.chunks(cfg.batch_size).enumerate() {
            let (loss, mut grads) = model.loss_and_grads(batch, smoothing);
            if !loss.is_finite() {
                return Err(ModelError::TrainingDiverged { epoch, batch: bi });
            }
            clip_grads(&mut grads, F::cast(MAX_GRAD_NORM));
            step += 1;
            adam_step(model.params_mut(), &grads, &mut m, &mut v, step, cfg.learning_rate);
            epoch_total += loss * F::from_usize(batch.len()).expect("batch size fits");
        }
        epoch_losses.push(epoch_total / F::from_usize(n).expect("set size fits"));
    }
    Ok(TrainOutcome { model, epoch_losses })
}

fn clip_grads<F: Real>(grads: &mut [F], max_norm: F) {
    let norm = grads.iter().map(|&g| g * g).sum::<F>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
}

fn adam_step<F: Real>(
    params: &mut [F],
    grads: &[F],
    m: &mut [F],
    v: &mut [F],
    step: u32,
    learning_rate: f64,
) {
    let b1 = F::cast(ADAM_BETA1);
    let b2 = F::cast(ADAM_BETA2);
    let eps = F::cast(ADAM_EPS);
    let one = F::one();
    let bias1 = one - b1.powi(step as i32);
    let bias2 = one - b2.powi(step as i32);
    let lr = F::cast(learning_rate) * bias2.sqrt() / bias1;
    for i in 0..params.len() {
        m[i] = b1 * m[i] + (one - b1) * grads[i];
        v[i] = b2 * v[i] + (one - b2) * grads[i] * grads[i];
        params[i] -= lr * m[i] / (v[i].sqrt() + eps);
    }
}

#[derive(Serialize)]
struct CheckpointOut<'a, F: Real> {
    format: &'a str,
    version: u32,
    model: &'a ToySeq2Seq<F>,
}

#[derive(Deserialize)]
#[serde(bound = "")]
struct CheckpointIn<F: Real> {
    format: String,
    version: u32,
    model: ToySeq2Seq<F>,
}

/// Writes the model as JSON. Floats are printed in shortest round-trip form,
/// so a load after a save restores bit-identical parameters.
pub fn save_checkpoint<F: Real>(model: &ToySeq2Seq<F>, path: &Path) -> ModelResult<()> {
    let out = CheckpointOut { format: CHECKPOINT_FORMAT, version: CHECKPOINT_VERSION, model };
    let json = serde_json::to_string(&out).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut file = fs::File::create(path)?;
    file.write_all(json.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> ModelResult<ToySeq2Seq<F>> {
    let text = fs::read_to_string(path)?;
    let cp: CheckpointIn<F> =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if cp.format != CHECKPOINT_FORMAT {
        return Err(ModelError::Checkpoint(format!(
            "unknown checkpoint format {:?}, expected {:?}",
            cp.format, CHECKPOINT_FORMAT
        )));
    }
    if cp.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint version {}, expected {}",
            cp.version, CHECKPOINT_VERSION
        )));
    }
    Ok(cp.model)
}
