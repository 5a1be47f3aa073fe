use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A token id. Ids are dense in `0..vocab.size`.
pub type Token = u32;

/// Size of the token inventory plus the reserved control ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vocab {
    pub size: u32,
    pub pad: Token,
    pub bos: Token,
    pub eos: Token,
}

impl Vocab {
    pub const MIN_SIZE: u32 = 8;
    pub const PAD: Token = 0;
    pub const BOS: Token = 1;
    pub const EOS: Token = 2;

    /// Vocabulary with `PAD = 0`, `BOS = 1`, `EOS = 2`.
    pub fn new(size: u32) -> Result<Self> {
        let v = Vocab {
            size,
            pad: Self::PAD,
            bos: Self::BOS,
            eos: Self::EOS,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < Self::MIN_SIZE {
            return Err(Error::input(format!(
                "vocabulary needs at least {} tokens, got {}",
                Self::MIN_SIZE,
                self.size
            )));
        }
        let reserved = [self.pad, self.bos, self.eos];
        if reserved.iter().any(|&t| t >= self.size) {
            return Err(Error::input("reserved token id outside the vocabulary"));
        }
        if self.pad == self.bos || self.pad == self.eos || self.bos == self.eos {
            return Err(Error::input("reserved token ids must be distinct"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.size as usize
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn check_tokens(&self, tokens: &[Token], what: &str) -> Result<()> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.size) {
            return Err(Error::input(format!(
                "unknown token id {bad} in {what} (vocabulary size {})",
                self.size
            )));
        }
        Ok(())
    }
}

/// Formats a token sequence as space-separated ids.
pub fn tokens_to_string(tokens: &[Token]) -> String {
    let mut out = String::with_capacity(tokens.len() * 3);
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.to_string());
    }
    out
}

/// Parses space-separated ids; the empty string is the empty sequence.
pub fn tokens_from_str(s: &str) -> Result<Vec<Token>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<Token>()
                .map_err(|_| Error::format("token sequence", format!("bad token id {t:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_or_clashing_vocabularies_are_rejected() {
        assert!(Vocab::new(7).is_err());
        assert!(Vocab::new(8).is_ok());
        let clash = Vocab {
            size: 16,
            pad: 0,
            bos: 0,
            eos: 2,
        };
        assert!(clash.validate().is_err());
    }

    #[test]
    fn token_strings_round_trip() {
        let toks = vec![3, 14, 0, 2];
        assert_eq!(tokens_to_string(&toks), "3 14 0 2");
        assert_eq!(tokens_from_str("3 14 0 2").unwrap(), toks);
        assert!(tokens_from_str("").unwrap().is_empty());
        assert!(tokens_from_str("1 x").is_err());
    }
}
