use crate::error::{Error, Result};
use crate::seqmodel::{sequence_log_prob, SeqModel, Token};

/// `exp(−log_prob / len)`; `len` counts EOS.
pub fn segment_perplexity(log_prob: f64, len: usize) -> f64 {
    (-log_prob / len as f64).exp()
}

/// Arithmetic mean over segments of the per-token perplexity of each
/// `(model input, target)` pair.
pub fn training_perplexity<M: SeqModel + ?Sized>(
    model: &M,
    sample: &[(Vec<Token>, Vec<Token>)],
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::input("perplexity of an empty sample"));
    }
    let mut total = 0.0;
    for (input, target) in sample {
        let lp = sequence_log_prob(model, input, target)?;
        total += segment_perplexity(lp, target.len());
    }
    Ok(total / sample.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqmodel::{Architecture, Transformer, Vocab};

    #[test]
    fn uniform_model_has_perplexity_v() {
        let arch = Architecture {
            d_model: 8,
            heads: 1,
            d_ff: 8,
            encoder_layers: 1,
            decoder_layers: 1,
            max_len: 6,
        };
        let m = Transformer::uniform(arch, Vocab::new(16).unwrap()).unwrap();
        let sample = vec![(vec![3, 4, 2], vec![5, 2]), (vec![7, 2], vec![9, 9, 9, 2])];
        assert!((training_perplexity(&m, &sample).unwrap() - 16.0).abs() < 1e-9);
        assert!((segment_perplexity(-3.0 * 16f64.ln(), 3) - 16.0).abs() < 1e-12);
        assert!(training_perplexity(&m, &[]).is_err());
    }
}
