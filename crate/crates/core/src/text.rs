//! Text normalization shared by block deduplication, index lookup and answer
//! matching, plus a small stable hash used for seeded choices.

use sha2::{Digest, Sha256};

/// Version tag echoed in evaluation reports.
pub const NORMALIZER_VERSION: &str = "casefold-ws-punct-v1";

fn is_edge_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | ';' | ':' | '!' | '?' | '"' | '\'' | '`' | '(' | ')' | '[' | ']' | '{' | '}'
            | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}' | '\u{ab}' | '\u{bb}'
    )
}

/// Casefolds, collapses whitespace runs to a single space and strips
/// surrounding punctuation (which covers a trailing period).
pub fn normalize(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed
        .trim_matches(|c: char| is_edge_punct(c) || c.is_whitespace())
        .to_string()
}

/// Longest common subsequence length over chars.
pub fn lcs_len(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `2 * LCS / (|a| + |b|)` on normalized text; two empty strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = normalize(a).chars().collect();
    let b: Vec<char> = normalize(b).chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * lcs_len(&a, &b) as f64 / (a.len() + b.len()) as f64
}

/// Byte offsets of `needle` in `hay` that start and end on word boundaries.
pub fn word_bounded_matches(hay: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = hay[from..].find(needle) {
        let start = from + rel;
        let end = start + needle.len();
        let before_ok = hay[..start].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = hay[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            out.push(start);
        }
        // Advance by one char to allow overlapping occurrences.
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// Platform-independent 64-bit hash of a sequence of string parts.
pub fn stable_hash<S: AsRef<str>>(parts: &[S]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_cases() {
        assert_eq!(normalize("  Hello   World. "), "hello world");
        assert_eq!(normalize("\"Paris\""), "paris");
        assert_eq!(normalize("Total: 42"), "total: 42");
        assert_eq!(normalize("-5"), "-5");
        assert_eq!(normalize("..."), "");
    }

    #[test]
    fn similarity_bounds() {
        assert_eq!(similarity("abc", "ABC"), 1.0);
        assert_eq!(similarity("abc", "xyz"), 0.0);
        assert!((similarity("abcd", "abxd") - 0.75).abs() < 1e-12);
    }

    #[test]
    fn word_bounded() {
        assert_eq!(word_bounded_matches("142 and 42", "42"), vec![8]);
        assert_eq!(word_bounded_matches("aa aa", "aa"), vec![0, 3]);
        assert!(word_bounded_matches("abc", "").is_empty());
    }

    #[test]
    fn stable_hash_separates_parts() {
        assert_ne!(stable_hash(&["ab", "c"]), stable_hash(&["a", "bc"]));
        assert_eq!(stable_hash(&["x"]), stable_hash(&["x".to_string()]));
    }
}
