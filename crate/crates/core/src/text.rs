//! Whitespace normalization and stable hashing shared across the pipeline.

use sha2::{Digest, Sha256};

/// Collapse every run of whitespace (including newlines) into a single space
/// and strip both ends.
pub fn normalize_whitespace(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// 64-bit FNV-1a. Used where a cheap, platform-stable hash is needed
/// (feature hashing, seed derivation).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercase hex SHA-256 of `bytes`, truncated to `chars` characters.
pub fn short_digest(bytes: &[u8], chars: usize) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        hex.push_str(&format!("{b:02x}"));
    }
    hex.truncate(chars);
    hex
}

/// Derive a child seed from a root seed and a textual key.
pub fn derive_seed(root: u64, key: &str) -> u64 {
    let mut bytes = root.to_le_bytes().to_vec();
    bytes.extend_from_slice(key.as_bytes());
    fnv1a64(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collapses_runs_and_newlines() {
        assert_eq!(normalize_whitespace("  a \t b\r\n\nc  "), "a b c");
        assert_eq!(normalize_whitespace("   "), "");
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn digest_is_truncated_hex() {
        let d = short_digest(b"abc", 8);
        assert_eq!(d, "ba7816bf");
    }
}
