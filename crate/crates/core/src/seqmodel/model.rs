use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{Architecture, Attention, Block, FeedForward, Layout, Norm};
use super::vocab::{Token, Vocab};
use crate::autodiff::{Matrix, Tape, Var};
use crate::error::{Error, Result};

/// Per-token log-probability floor; keeps log-ratios finite.
pub const LOG_PROB_FLOOR: f64 = -80.0;

/// Encoder–decoder weights plus everything needed to interpret them.
#[derive(Clone, Debug)]
pub struct Transformer {
    arch: Architecture,
    vocab: Vocab,
    layout: Arc<Layout>,
    theta: Vec<f64>,
}

impl PartialEq for Transformer {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.vocab == other.vocab && self.theta == other.theta
    }
}

impl Transformer {
    /// All-zero parameters except unit layer-norm gains: every position
    /// predicts the uniform distribution.
    pub fn uniform(arch: Architecture, vocab: Vocab) -> Result<Self> {
        arch.validate()?;
        vocab.validate()?;
        let layout = Layout::new(&arch, vocab.len());
        let mut theta = vec![0.0; layout.total];
        for b in &layout.blocks {
            if layout.is_gain(b) {
                theta[b.range()].iter_mut().for_each(|x| *x = 1.0);
            }
        }
        Ok(Transformer {
            arch,
            vocab,
            layout: Arc::new(layout),
            theta,
        })
    }

    /// Random initialization: weights ~ N(0, 1/fan_in), embeddings ~ N(0, 1/d).
    pub fn init(arch: Architecture, vocab: Vocab, seed: u64) -> Result<Self> {
        let mut model = Transformer::uniform(arch, vocab)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = Arc::clone(&model.layout);
        let d = model.arch.d_model as f64;
        for b in &layout.blocks {
            if layout.is_gain(b) || layout.is_bias(b) {
                continue;
            }
            let std = match layout.names[b.id].as_str() {
                "tok_emb" | "enc_pos" | "dec_pos" => 1.0 / d.sqrt(),
                "out.w" => 0.5 / (b.rows as f64).sqrt(),
                _ => 1.0 / (b.rows as f64).sqrt(),
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            for x in &mut model.theta[b.range()] {
                *x = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    /// Rebuilds a model from stored parts, checking the parameter count.
    pub fn from_parts(arch: Architecture, vocab: Vocab, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        vocab.validate()?;
        let layout = Layout::new(&arch, vocab.len());
        if theta.len() != layout.total {
            return Err(Error::input(format!(
                "parameter vector has {} entries, architecture needs {}",
                theta.len(),
                layout.total
            )));
        }
        Ok(Transformer {
            arch,
            vocab,
            layout: Arc::new(layout),
            theta,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub(crate) fn block_matrix(&self, b: Block) -> Matrix {
        Matrix::from_vec(b.rows, b.cols, self.theta[b.range()].to_vec())
    }

    pub(crate) fn block_slice(&self, b: Block) -> &[f64] {
        &self.theta[b.range()]
    }

    pub(crate) fn validate_source(&self, source: &[Token]) -> Result<()> {
        if source.is_empty() {
            return Err(Error::input("source sequence is empty"));
        }
        if source.len() > self.arch.max_len {
            return Err(Error::input(format!(
                "source has {} tokens, maximum is {}",
                source.len(),
                self.arch.max_len
            )));
        }
        self.vocab.check_tokens(source, "source")
    }

    /// A target must end with EOS, or be a decode truncated at exactly
    /// `max_len` tokens.
    pub(crate) fn validate_target(&self, target: &[Token]) -> Result<()> {
        if target.is_empty() {
            return Err(Error::input("target sequence is empty"));
        }
        if target.len() > self.arch.max_len {
            return Err(Error::input(format!(
                "target has {} tokens, maximum is {}",
                target.len(),
                self.arch.max_len
            )));
        }
        self.vocab.check_tokens(target, "target")?;
        let ends_with_eos = target.last() == Some(&self.vocab.eos);
        if !ends_with_eos && target.len() != self.arch.max_len {
            return Err(Error::input("target must end with EOS"));
        }
        Ok(())
    }
}

/// The trainable policy π_θ.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    net: Transformer,
}

/// A frozen snapshot π_ref. There is no way to mutate its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceModel {
    net: Arc<Transformer>,
}

impl PolicyModel {
    pub fn new(net: Transformer) -> Self {
        PolicyModel { net }
    }

    pub fn snapshot(&self) -> ReferenceModel {
        ReferenceModel {
            net: Arc::new(self.net.clone()),
        }
    }

    pub fn into_inner(self) -> Transformer {
        self.net
    }

    pub fn params(&self) -> &[f64] {
        self.net.theta()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.theta_mut()
    }
}

impl ReferenceModel {
    /// Policy initialized from this reference (`π_θ ← π_ref`).
    pub fn to_policy(&self) -> PolicyModel {
        PolicyModel::new((*self.net).clone())
    }
}

/// Anything that can be run forward: a policy or a reference snapshot.
pub trait SeqModel {
    fn net(&self) -> &Transformer;
}

impl SeqModel for Transformer {
    fn net(&self) -> &Transformer {
        self
    }
}

impl SeqModel for PolicyModel {
    fn net(&self) -> &Transformer {
        &self.net
    }
}

impl SeqModel for ReferenceModel {
    fn net(&self) -> &Transformer {
        &self.net
    }
}

impl<M: SeqModel + ?Sized> SeqModel for &M {
    fn net(&self) -> &Transformer {
        (**self).net()
    }
}

/// A tape bound to one model, caching parameter leaves and encoder outputs.
pub struct Scope<'m> {
    net: &'m Transformer,
    tape: Tape,
    params: Vec<Option<Var>>,
    encoded: Vec<(Vec<Token>, Var)>,
}

impl<'m> Scope<'m> {
    pub fn new(net: &'m Transformer) -> Self {
        Scope {
            net,
            tape: Tape::new(),
            params: vec![None; net.layout.blocks.len()],
            encoded: Vec::new(),
        }
    }

    pub fn tape(&mut self) -> &mut Tape {
        &mut self.tape
    }

    pub fn value(&self, v: Var) -> f64 {
        self.tape.scalar_value(v)
    }

    fn param(&mut self, b: Block) -> Var {
        if let Some(v) = self.params[b.id] {
            return v;
        }
        let v = self.tape.param(self.net.block_matrix(b), b.offset);
        self.params[b.id] = Some(v);
        v
    }

    fn norm(&mut self, x: Var, n: Norm) -> Var {
        let g = self.param(n.gamma);
        let b = self.param(n.beta);
        self.tape.layer_norm(x, g, b)
    }

    fn attention(&mut self, xq: Var, xkv: Var, a: Attention, heads: usize, causal: bool) -> Var {
        let (wq, wk, wv, wo) = (
            self.param(a.wq),
            self.param(a.wk),
            self.param(a.wv),
            self.param(a.wo),
        );
        let q = self.tape.matmul(xq, wq);
        let k = self.tape.matmul(xkv, wk);
        let v = self.tape.matmul(xkv, wv);
        let d = self.net.arch.d_model;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.tape.slice_cols(q, h * dh, dh),
                    self.tape.slice_cols(k, h * dh, dh),
                    self.tape.slice_cols(v, h * dh, dh),
                )
            };
            let scores = self.tape.matmul_bt(qh, kh);
            let scores = self.tape.scale(scores, scale);
            let probs = self.tape.softmax(scores, causal);
            outs.push(self.tape.matmul(probs, vh));
        }
        let o = if heads == 1 {
            outs[0]
        } else {
            self.tape.concat_cols(&outs)
        };
        self.tape.matmul(o, wo)
    }

    fn feed_forward(&mut self, x: Var, f: FeedForward) -> Var {
        let (w1, b1, w2, b2) = (
            self.param(f.w1),
            self.param(f.b1),
            self.param(f.w2),
            self.param(f.b2),
        );
        let h = self.tape.matmul(x, w1);
        let h = self.tape.add_row(h, b1);
        let h = self.tape.gelu(h);
        let o = self.tape.matmul(h, w2);
        self.tape.add_row(o, b2)
    }

    fn embed(&mut self, tokens: &[Token], pos: Block) -> Var {
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let tok = self.param(self.net.layout.tok_emb);
        let pos = self.param(pos);
        let e = self.tape.embed(tok, &ids);
        let p = self.tape.embed(pos, &positions);
        self.tape.add(e, p)
    }

    /// Encoder output for `source` (`n × d`), computed once per scope.
    pub fn encode(&mut self, source: &[Token]) -> Result<Var> {
        if let Some((_, v)) = self.encoded.iter().find(|(s, _)| s == source) {
            return Ok(*v);
        }
        self.net.validate_source(source)?;
        let layout = Arc::clone(&self.net.layout);
        let heads = self.net.arch.heads;
        self.tape.set_label("encoder");
        let mut x = self.embed(source, layout.enc_pos);
        for layer in &layout.encoder {
            let h = self.norm(x, layer.ln_attn);
            let a = self.attention(h, h, layer.attn, heads, false);
            x = self.tape.add(x, a);
            let h = self.norm(x, layer.ln_ff);
            let f = self.feed_forward(h, layer.ff);
            x = self.tape.add(x, f);
        }
        let out = self.norm(x, layout.enc_norm);
        self.encoded.push((source.to_vec(), out));
        Ok(out)
    }

    /// Next-token logits (`T × V`) for decoder inputs `BOS, target[..T-1]`.
    pub fn decoder_logits(&mut self, encoded: Var, target: &[Token]) -> Var {
        let layout = Arc::clone(&self.net.layout);
        let heads = self.net.arch.heads;
        let mut inputs = Vec::with_capacity(target.len());
        inputs.push(self.net.vocab.bos);
        inputs.extend_from_slice(&target[..target.len() - 1]);
        self.tape.set_label("decoder");
        let mut x = self.embed(&inputs, layout.dec_pos);
        for layer in &layout.decoder {
            let h = self.norm(x, layer.ln_self);
            let a = self.attention(h, h, layer.self_attn, heads, true);
            x = self.tape.add(x, a);
            let h = self.norm(x, layer.ln_cross);
            let c = self.attention(h, encoded, layer.cross_attn, 1, false);
            x = self.tape.add(x, c);
            let h = self.norm(x, layer.ln_ff);
            let f = self.feed_forward(h, layer.ff);
            x = self.tape.add(x, f);
        }
        let h = self.norm(x, layout.dec_norm);
        let (w, b) = (self.param(layout.out_w), self.param(layout.out_b));
        let logits = self.tape.matmul(h, w);
        self.tape.add_row(logits, b)
    }

    /// `log π(target | source)` as a differentiable scalar.
    pub fn log_prob(&mut self, source: &[Token], target: &[Token]) -> Result<Var> {
        self.net.validate_target(target)?;
        let enc = self.encode(source)?;
        let logits = self.decoder_logits(enc, target);
        let ids: Vec<usize> = target.iter().map(|&t| t as usize).collect();
        self.tape.set_label("log_prob");
        Ok(self.tape.pick_log_prob(logits, &ids, LOG_PROB_FLOOR))
    }
}

/// `Σ_t log p(target_t | source, target_<t)`, each term floored at −80.
pub fn sequence_log_prob<M: SeqModel + ?Sized>(
    model: &M,
    source: &[Token],
    target: &[Token],
) -> Result<f64> {
    let mut scope = Scope::new(model.net());
    let lp = scope.log_prob(source, target)?;
    scope.tape.check_finite()?;
    Ok(scope.value(lp))
}

/// Log-probabilities of several targets for one source, sharing the encoder.
pub fn sequence_log_probs<M: SeqModel + ?Sized>(
    model: &M,
    source: &[Token],
    targets: &[&[Token]],
) -> Result<Vec<f64>> {
    let mut scope = Scope::new(model.net());
    let mut out = Vec::with_capacity(targets.len());
    for t in targets {
        let lp = scope.log_prob(source, t)?;
        out.push(scope.value(lp));
    }
    scope.tape.check_finite()?;
    Ok(out)
}

/// Value and exact gradient w.r.t. θ of a scalar built from log-probabilities.
///
/// `f` receives a [`Scope`]; it obtains differentiable log-probabilities with
/// [`Scope::log_prob`] and combines them with the tape's scalar ops.
pub fn grad_of_scalar<F>(model: &PolicyModel, f: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Scope<'_>) -> Result<Var>,
{
    let mut scope = Scope::new(model.net());
    let root = f(&mut scope)?;
    if scope.tape.value(root).shape() != (1, 1) {
        return Err(Error::input("scalar function must return a 1x1 value"));
    }
    let mut grad = vec![0.0; model.net().num_params()];
    scope.tape.backward(root, &mut grad)?;
    Ok((scope.value(root), grad))
}
