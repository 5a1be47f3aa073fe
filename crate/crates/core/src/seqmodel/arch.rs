use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder–decoder.
///
/// Pre-norm transformer blocks with learned positions. Encoder and decoder
/// self-attention use `heads` heads; decoder cross-attention is single-head.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Longest source or target sequence, in tokens.
    pub max_len: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            d_model: 64,
            heads: 2,
            d_ff: 128,
            encoder_layers: 2,
            decoder_layers: 1,
            max_len: 64,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_ff == 0 || self.max_len == 0 {
            return Err(Error::config("d_model, d_ff and max_len must be positive"));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.decoder_layers == 0 {
            return Err(Error::config("at least one decoder layer is required"));
        }
        Ok(())
    }
}

/// A named, contiguous block of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub id: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Norm {
    pub gamma: Block,
    pub beta: Block,
}

#[derive(Clone, Copy, Debug)]
pub struct Attention {
    pub wq: Block,
    pub wk: Block,
    pub wv: Block,
    pub wo: Block,
}

#[derive(Clone, Copy, Debug)]
pub struct FeedForward {
    pub w1: Block,
    pub b1: Block,
    pub w2: Block,
    pub b2: Block,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderLayer {
    pub ln_attn: Norm,
    pub attn: Attention,
    pub ln_ff: Norm,
    pub ff: FeedForward,
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderLayer {
    pub ln_self: Norm,
    pub self_attn: Attention,
    pub ln_cross: Norm,
    pub cross_attn: Attention,
    pub ln_ff: Norm,
    pub ff: FeedForward,
}

/// Where every weight lives inside θ.
#[derive(Clone, Debug)]
pub struct Layout {
    pub names: Vec<String>,
    pub blocks: Vec<Block>,
    pub tok_emb: Block,
    pub enc_pos: Block,
    pub dec_pos: Block,
    pub encoder: Vec<EncoderLayer>,
    pub enc_norm: Norm,
    pub decoder: Vec<DecoderLayer>,
    pub dec_norm: Norm,
    pub out_w: Block,
    pub out_b: Block,
    pub total: usize,
}

struct Builder {
    names: Vec<String>,
    blocks: Vec<Block>,
    offset: usize,
}

impl Builder {
    fn block(&mut self, name: String, rows: usize, cols: usize) -> Block {
        let b = Block {
            id: self.blocks.len(),
            offset: self.offset,
            rows,
            cols,
        };
        self.offset += rows * cols;
        self.blocks.push(b);
        self.names.push(name);
        b
    }

    fn norm(&mut self, prefix: &str, d: usize) -> Norm {
        Norm {
            gamma: self.block(format!("{prefix}.gamma"), 1, d),
            beta: self.block(format!("{prefix}.beta"), 1, d),
        }
    }

    fn attention(&mut self, prefix: &str, d: usize) -> Attention {
        Attention {
            wq: self.block(format!("{prefix}.wq"), d, d),
            wk: self.block(format!("{prefix}.wk"), d, d),
            wv: self.block(format!("{prefix}.wv"), d, d),
            wo: self.block(format!("{prefix}.wo"), d, d),
        }
    }

    fn ff(&mut self, prefix: &str, d: usize, d_ff: usize) -> FeedForward {
        FeedForward {
            w1: self.block(format!("{prefix}.w1"), d, d_ff),
            b1: self.block(format!("{prefix}.b1"), 1, d_ff),
            w2: self.block(format!("{prefix}.w2"), d_ff, d),
            b2: self.block(format!("{prefix}.b2"), 1, d),
        }
    }
}

impl Layout {
    pub fn new(arch: &Architecture, vocab_size: usize) -> Layout {
        let d = arch.d_model;
        let mut b = Builder {
            names: Vec::new(),
            blocks: Vec::new(),
            offset: 0,
        };
        let tok_emb = b.block("tok_emb".into(), vocab_size, d);
        let enc_pos = b.block("enc_pos".into(), arch.max_len, d);
        let dec_pos = b.block("dec_pos".into(), arch.max_len, d);
        let encoder = (0..arch.encoder_layers)
            .map(|l| EncoderLayer {
                ln_attn: b.norm(&format!("enc.{l}.ln_attn"), d),
                attn: b.attention(&format!("enc.{l}.attn"), d),
                ln_ff: b.norm(&format!("enc.{l}.ln_ff"), d),
                ff: b.ff(&format!("enc.{l}.ff"), d, arch.d_ff),
            })
            .collect();
        let enc_norm = b.norm("enc.ln_out", d);
        let decoder = (0..arch.decoder_layers)
            .map(|l| DecoderLayer {
                ln_self: b.norm(&format!("dec.{l}.ln_self"), d),
                self_attn: b.attention(&format!("dec.{l}.self_attn"), d),
                ln_cross: b.norm(&format!("dec.{l}.ln_cross"), d),
                cross_attn: b.attention(&format!("dec.{l}.cross_attn"), d),
                ln_ff: b.norm(&format!("dec.{l}.ln_ff"), d),
                ff: b.ff(&format!("dec.{l}.ff"), d, arch.d_ff),
            })
            .collect();
        let dec_norm = b.norm("dec.ln_out", d);
        let out_w = b.block("out.w".into(), d, vocab_size);
        let out_b = b.block("out.b".into(), 1, vocab_size);
        Layout {
            total: b.offset,
            names: b.names,
            blocks: b.blocks,
            tok_emb,
            enc_pos,
            dec_pos,
            encoder,
            enc_norm,
            decoder,
            dec_norm,
            out_w,
            out_b,
        }
    }

    pub fn block_by_name(&self, name: &str) -> Option<Block> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.blocks[i])
    }

    /// Blocks holding layer-norm gains, which start at one rather than random.
    pub fn is_gain(&self, block: &Block) -> bool {
        self.names[block.id].ends_with(".gamma")
    }

    pub fn is_bias(&self, block: &Block) -> bool {
        let n = &self.names[block.id];
        n.ends_with(".beta") || n.ends_with(".b1") || n.ends_with(".b2") || n == "out.b"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_architecture_fits_the_parameter_budget() {
        let arch = Architecture::default();
        arch.validate().unwrap();
        let layout = Layout::new(&arch, 64);
        assert!(layout.total <= 150_000, "{} parameters", layout.total);
        let last = layout.blocks.last().unwrap();
        assert_eq!(last.offset + last.len(), layout.total);
        assert_eq!(layout.block_by_name("out.b"), Some(layout.out_b));
    }

    #[test]
    fn heads_must_divide_width() {
        let arch = Architecture {
            heads: 3,
            ..Architecture::default()
        };
        assert!(arch.validate().is_err());
    }
}
