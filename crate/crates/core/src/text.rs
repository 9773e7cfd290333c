//! Tokenizer shared by the hashing embedder and the naive Bayes classifier.

/// Lowercases `text` and splits it on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn fnv1a64(token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    token.bytes().fold(OFFSET, |hash, b| (hash ^ u64::from(b)).wrapping_mul(PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_runs() {
        assert_eq!(tokenize("Hello,  World!!x-y"), vec!["hello", "world", "x", "y"]);
        assert!(tokenize(" ,.; ").is_empty());
    }

    #[test]
    fn keeps_unicode_letters() {
        assert_eq!(tokenize("Ünïcode café 42"), vec!["ünïcode", "café", "42"]);
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }
}
