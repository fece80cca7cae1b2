//! Shared text utilities: tokenization and stable hashing.

/// Splits `s` into lowercased alphanumeric tokens.
///
/// Any non-alphanumeric character is a separator. This is the tokenization
/// used by the lexical index and the hashed feature extractor.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// FNV-1a 64-bit hash.
///
/// Used where hash values become part of persisted artifacts (feature
/// indices, sub-stream labels); unlike `std`'s default hasher it is stable
/// across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Truncates `s` to at most `max_chars` characters on a char boundary.
pub fn truncate_chars(s: &str, max_chars: usize) -> &str {
    match s.char_indices().nth(max_chars) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
