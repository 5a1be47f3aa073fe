use crate::error::{Error, Result};
use crate::seqmodel::Token;
use crate::synthdata::LanguageSpec;

/// Entity occurrences in `source` and how many of them appear in `output` in
/// the language's marked form. Matching is by multiset.
pub fn feature_counts(spec: &LanguageSpec, source: &[Token], output: &[Token]) -> (usize, usize) {
    let mut pool: Vec<Token> = output.to_vec();
    let mut entities = 0;
    let mut marked = 0;
    for &t in source {
        if let Some(e) = spec.layout.entity_index(t) {
            entities += 1;
            let form = spec.marked_form(e);
            if let Some(pos) = pool.iter().position(|&o| o == form) {
                pool.swap_remove(pos);
                marked += 1;
            }
        }
    }
    (entities, marked)
}

/// Fraction of entity source tokens that the outputs render in the marked form.
pub fn feature_usage_rate<S, O>(spec: &LanguageSpec, pairs: &[(S, O)]) -> Result<f64>
where
    S: AsRef<[Token]>,
    O: AsRef<[Token]>,
{
    if !spec.features.transliteration {
        return Err(Error::input(format!(
            "language {} has no transliteration feature",
            spec.id
        )));
    }
    let (mut n, mut k) = (0, 0);
    for (s, o) in pairs {
        let (e, m) = feature_counts(spec, s.as_ref(), o.as_ref());
        n += e;
        k += m;
    }
    if n == 0 {
        return Err(Error::input("probe set contains no entity tokens"));
    }
    Ok(k as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{ideal_translate, make_language, Features, TokenLayout};

    fn spec(transliteration: bool) -> LanguageSpec {
        let layout = TokenLayout {
            languages: 1,
            words: 6,
            entities: 3,
        };
        let f = Features {
            transliteration,
            suffixing: false,
        };
        make_language(5, "x", 0, "f", 0, f, layout)
    }

    #[test]
    fn ideal_outputs_use_the_feature_everywhere() {
        let s = spec(true);
        let l = s.layout;
        let src = vec![l.source_word(0), l.entity(1), l.entity(1), l.entity(2), 2];
        let ideal = ideal_translate(&s, &src).unwrap();
        assert_eq!(feature_usage_rate(&s, &[(&src, &ideal)]).unwrap(), 1.0);
        let verbatim = vec![l.entity(1), s.marked_form(1), 2];
        assert_eq!(feature_counts(&s, &src, &verbatim), (3, 1));
    }

    #[test]
    fn requires_the_feature_and_entities() {
        let off = spec(false);
        let src = vec![off.layout.entity(0), 2];
        assert!(feature_usage_rate(&off, &[(&src, &src)]).is_err());
        let on = spec(true);
        let plain = vec![on.layout.source_word(0), 2];
        assert!(feature_usage_rate(&on, &[(&plain, &plain)]).is_err());
    }
}
