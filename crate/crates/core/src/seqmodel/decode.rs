use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::Block;
use super::model::{Scope, SeqModel, Transformer};
use super::vocab::Token;
use crate::autodiff::matrix::{self, row_times_raw, Matrix};
use crate::error::{Error, Result};

/// Combined top-K / top-P sampling settings (temperature is fixed at 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerParams {
    pub top_k: usize,
    pub top_p: f64,
    pub max_len: usize,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            top_k: 40,
            top_p: 0.8,
            max_len: 64,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_k < 1 {
            return Err(Error::config("top_k must be at least 1"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::config(format!(
                "top_p must lie in (0, 1], got {}",
                self.top_p
            )));
        }
        if self.max_len < 1 {
            return Err(Error::config("max_len must be positive"));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Applies top-K then top-P to a probability vector.
///
/// Tokens are ranked by descending probability, ties toward the lower id.
/// The K best are kept and renormalized; then the shortest prefix whose
/// cumulative mass reaches `top_p` is kept and renormalized. Returns the
/// surviving `(token, probability)` pairs in rank order.
pub fn filter_top_k_top_p(probs: &[f64], top_k: usize, top_p: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(top_k.max(1));

    let mass: f64 = order.iter().map(|&i| probs[i]).sum();
    let mut kept = Vec::with_capacity(order.len());
    let mut cum = 0.0;
    for &i in &order {
        let p = probs[i] / mass;
        kept.push((i, p));
        cum += p;
        if cum >= top_p {
            break;
        }
    }
    let mass: f64 = kept.iter().map(|(_, p)| p).sum();
    for (_, p) in kept.iter_mut() {
        *p /= mass;
    }
    kept
}

fn draw<R: Rng + ?Sized>(kept: &[(usize, f64)], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for &(i, p) in kept {
        cum += p;
        if u < cum {
            return i;
        }
    }
    kept.last().expect("filter keeps at least one token").0
}

/// Encoder state for one source, reusable across many decodes.
pub struct EncodedSource<'m> {
    net: &'m Transformer,
    cross_k: Vec<Matrix>,
    cross_v: Vec<Matrix>,
}

/// Key/value cache of one in-progress decode.
pub struct DecodeState {
    self_k: Vec<Vec<f64>>,
    self_v: Vec<Vec<f64>>,
    pos: usize,
}

impl<'m> EncodedSource<'m> {
    pub fn new<M: SeqModel + ?Sized>(model: &'m M, source: &[Token]) -> Result<Self> {
        let net = model.net();
        let mut scope = Scope::new(net);
        let enc = scope.encode(source)?;
        scope.tape().check_finite()?;
        let enc = scope.tape().value(enc).clone();
        let layout = net.layout();
        let mut cross_k = Vec::new();
        let mut cross_v = Vec::new();
        for layer in &layout.decoder {
            cross_k.push(enc.matmul(&net.block_matrix(layer.cross_attn.wk)));
            cross_v.push(enc.matmul(&net.block_matrix(layer.cross_attn.wv)));
        }
        Ok(EncodedSource {
            net,
            cross_k,
            cross_v,
        })
    }

    pub fn start(&self) -> DecodeState {
        let n = self.net.layout().decoder.len();
        DecodeState {
            self_k: vec![Vec::new(); n],
            self_v: vec![Vec::new(); n],
            pos: 0,
        }
    }

    /// Feeds `token` at the next decoder position and returns next-token logits.
    pub fn step(&self, state: &mut DecodeState, token: Token) -> Vec<f64> {
        let net = self.net;
        let layout = net.layout();
        let arch = net.arch();
        let d = arch.d_model;
        assert!(state.pos < arch.max_len, "decode position beyond max_len");

        let mut x: Vec<f64> =
            net.block_slice(layout.tok_emb)[token as usize * d..(token as usize + 1) * d].to_vec();
        let pos_row = &net.block_slice(layout.dec_pos)[state.pos * d..(state.pos + 1) * d];
        for (a, b) in x.iter_mut().zip(pos_row) {
            *a += b;
        }

        let mut h = vec![0.0; d];
        for (l, layer) in layout.decoder.iter().enumerate() {
            let norm = |x: &[f64], n: super::arch::Norm, out: &mut [f64]| {
                matrix::layer_norm_row(x, net.block_slice(n.gamma), net.block_slice(n.beta), out);
            };

            norm(&x, layer.ln_self, &mut h);
            let a = &layer.self_attn;
            let mut q = vec![0.0; d];
            let mut k = vec![0.0; d];
            let mut v = vec![0.0; d];
            mul_block(net, &h, a.wq, &mut q);
            mul_block(net, &h, a.wk, &mut k);
            mul_block(net, &h, a.wv, &mut v);
            state.self_k[l].extend_from_slice(&k);
            state.self_v[l].extend_from_slice(&v);
            let n_keys = state.pos + 1;
            let attn = attend(
                &q,
                &state.self_k[l],
                &state.self_v[l],
                n_keys,
                arch.heads,
                d,
            );
            let mut o = vec![0.0; d];
            mul_block(net, &attn, a.wo, &mut o);
            add_in_place(&mut x, &o);

            norm(&x, layer.ln_cross, &mut h);
            let c = &layer.cross_attn;
            mul_block(net, &h, c.wq, &mut q);
            let ck = &self.cross_k[l];
            let attn = attend(&q, ck.data(), self.cross_v[l].data(), ck.rows(), 1, d);
            mul_block(net, &attn, c.wo, &mut o);
            add_in_place(&mut x, &o);

            norm(&x, layer.ln_ff, &mut h);
            let f = &layer.ff;
            let mut hidden = vec![0.0; arch.d_ff];
            mul_block(net, &h, f.w1, &mut hidden);
            add_in_place(&mut hidden, net.block_slice(f.b1));
            for z in hidden.iter_mut() {
                *z = matrix::gelu(*z);
            }
            mul_block(net, &hidden, f.w2, &mut o);
            add_in_place(&mut o, net.block_slice(f.b2));
            add_in_place(&mut x, &o);
        }
        matrix::layer_norm_row(
            &x,
            net.block_slice(layout.dec_norm.gamma),
            net.block_slice(layout.dec_norm.beta),
            &mut h,
        );
        let mut logits = vec![0.0; net.vocab().len()];
        mul_block(net, &h, layout.out_w, &mut logits);
        add_in_place(&mut logits, net.block_slice(layout.out_b));
        state.pos += 1;
        logits
    }

    /// Runs a decode, choosing each token with `pick` from the step's logits.
    fn run(&self, max_len: usize, mut pick: impl FnMut(&[f64]) -> usize) -> Vec<Token> {
        let vocab = self.net.vocab();
        let limit = max_len.min(self.net.arch().max_len);
        let mut state = self.start();
        let mut out = Vec::new();
        let mut prev = vocab.bos;
        while out.len() < limit {
            let logits = self.step(&mut state, prev);
            let tok = pick(&logits) as Token;
            out.push(tok);
            if tok == vocab.eos {
                break;
            }
            prev = tok;
        }
        out
    }

    pub fn greedy(&self, max_len: usize) -> Vec<Token> {
        self.run(max_len, argmax)
    }

    pub fn sample<R: Rng + ?Sized>(&self, params: &SamplerParams, rng: &mut R) -> Vec<Token> {
        self.run(params.max_len, |logits| {
            let mut probs = logits.to_vec();
            matrix::softmax_in_place(&mut probs);
            let kept = filter_top_k_top_p(&probs, params.top_k, params.top_p);
            draw(&kept, rng)
        })
    }
}

fn mul_block(net: &Transformer, row: &[f64], b: Block, out: &mut [f64]) {
    row_times_raw(row, net.block_slice(b), b.cols, out);
}

fn add_in_place(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

/// Scaled dot-product attention of one query row over `n` cached key/value
/// rows (each `d` wide), split into `heads` heads.
fn attend(q: &[f64], keys: &[f64], values: &[f64], n: usize, heads: usize, d: usize) -> Vec<f64> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; d];
    let mut scores = vec![0.0; n];
    for h in 0..heads {
        let qh = &q[h * dh..(h + 1) * dh];
        for (j, s) in scores.iter_mut().enumerate() {
            *s = matrix::dot(qh, &keys[j * d + h * dh..j * d + (h + 1) * dh]) * scale;
        }
        matrix::softmax_in_place(&mut scores);
        let oh = &mut out[h * dh..(h + 1) * dh];
        for (j, &a) in scores.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, v) in oh
                .iter_mut()
                .zip(&values[j * d + h * dh..j * d + (h + 1) * dh])
            {
                *o += a * v;
            }
        }
    }
    out
}

/// Argmax decode (ties to the lowest id) until EOS or the model's max length.
pub fn greedy_decode<M: SeqModel + ?Sized>(model: &M, source: &[Token]) -> Result<Vec<Token>> {
    let enc = EncodedSource::new(model, source)?;
    Ok(enc.greedy(model.net().arch().max_len))
}

/// One sampled translation under combined top-K / top-P filtering.
pub fn sample_top_k_top_p<M: SeqModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    source: &[Token],
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Vec<Token>> {
    params.validate()?;
    let enc = EncodedSource::new(model, source)?;
    Ok(enc.sample(params, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::seqmodel::{sequence_log_prob, Architecture, Vocab};

    fn arch(max_len: usize) -> Architecture {
        Architecture {
            d_model: 8,
            heads: 2,
            d_ff: 16,
            encoder_layers: 2,
            decoder_layers: 2,
            max_len,
        }
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn filter_examples() {
        let kept = filter_top_k_top_p(&[0.5, 0.3, 0.2], 2, 0.8);
        assert_eq!(kept.len(), 2);
        assert!((kept[0].1 - 0.625).abs() < 1e-12 && kept[0].0 == 0);
        assert!((kept[1].1 - 0.375).abs() < 1e-12 && kept[1].0 == 1);

        // The nucleus is inclusive: one token suffices once its mass reaches P.
        let kept = filter_top_k_top_p(&[0.5, 0.3, 0.2], 3, 0.5);
        assert_eq!(kept, vec![(0, 1.0)]);
        // With P = 0.6 the leading 0.5 is short of the threshold.
        let kept = filter_top_k_top_p(&[0.5, 0.3, 0.2], 3, 0.6);
        assert_eq!(kept.len(), 2);
        assert!((kept[0].1 - 0.625).abs() < 1e-12);

        let kept = filter_top_k_top_p(&[0.25, 0.25, 0.5], 2, 1.0);
        assert_eq!(kept.iter().map(|k| k.0).collect::<Vec<_>>(), vec![2, 0]);
    }

    #[test]
    fn incremental_logits_match_full_forward() {
        let vocab = Vocab::new(12).unwrap();
        let net = Transformer::init(arch(10), vocab, 11).unwrap();
        let source = [4u32, 7, 9, 3, 2];
        let target = [5u32, 6, 11, 2];
        let mut scope = Scope::new(&net);
        let enc = scope.encode(&source).unwrap();
        let logits = scope.decoder_logits(enc, &target);
        let full = scope.tape().value(logits).clone();

        let inc = EncodedSource::new(&net, &source).unwrap();
        let mut state = inc.start();
        let mut prev = vocab.bos;
        for (t, &tok) in target.iter().enumerate() {
            let row = inc.step(&mut state, prev);
            assert!(close(&row, full.row(t), 1e-12), "position {t}");
            prev = tok;
        }
    }

    #[test]
    fn uniform_model_greedy_emits_lowest_id() {
        let vocab = Vocab::new(16).unwrap();
        let net = Transformer::uniform(arch(9), vocab).unwrap();
        let out = greedy_decode(&net, &[5, 2]).unwrap();
        assert_eq!(out, vec![0; 9]);
    }

    #[test]
    fn greedy_is_deterministic_and_locally_optimal() {
        let vocab = Vocab::new(10).unwrap();
        let net = Transformer::init(arch(8), vocab.clone(), 5).unwrap();
        let src = [3u32, 4, 5, 2];
        let a = greedy_decode(&net, &src).unwrap();
        let b = greedy_decode(&net, &src).unwrap();
        assert_eq!(a, b);

        // Replacing the first token by any alternative cannot beat greedy's
        // first-step choice when the rest of the sequence is kept.
        if a.len() >= 2 && a[0] != vocab.eos {
            let lp = sequence_log_prob(&net, &src, &a).unwrap();
            let enc = EncodedSource::new(&net, &src).unwrap();
            let mut st = enc.start();
            let first = enc.step(&mut st, vocab.bos);
            let lse = matrix::log_sum_exp(&first);
            for alt in 0..vocab.size {
                let step_lp = first[alt as usize] - lse;
                let greedy_lp = first[a[0] as usize] - lse;
                assert!(greedy_lp >= step_lp);
            }
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn top1_sampling_equals_greedy() {
        let vocab = Vocab::new(10).unwrap();
        let net = Transformer::init(arch(8), vocab, 9).unwrap();
        let params = SamplerParams {
            top_k: 1,
            top_p: 0.3,
            max_len: 8,
        };
        for s in 0..5u64 {
            let src = [3u32 + s as u32, 4, 2];
            let mut rng = StreamKey::root(s).rng();
            let sampled = sample_top_k_top_p(&net, &src, &params, &mut rng).unwrap();
            assert_eq!(sampled, greedy_decode(&net, &src).unwrap());
        }
    }

    #[test]
    fn sampling_is_reproducible_per_stream() {
        let vocab = Vocab::new(10).unwrap();
        let net = Transformer::init(arch(8), vocab, 9).unwrap();
        let params = SamplerParams::default();
        let key = StreamKey::root(1).label("sample").index(3);
        let a = sample_top_k_top_p(&net, &[4, 2], &params, &mut key.rng()).unwrap();
        let b = sample_top_k_top_p(&net, &[4, 2], &params, &mut key.rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_sampler_params_are_rejected() {
        let bad = [
            SamplerParams {
                top_k: 0,
                ..SamplerParams::default()
            },
            SamplerParams {
                top_p: 0.0,
                ..SamplerParams::default()
            },
            SamplerParams {
                top_p: 1.5,
                ..SamplerParams::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }
}
