//! Content hashing used for cache keys and config fingerprints.

use sha2::{Digest, Sha256};

/// SHA-256 of `bytes` as a lowercase hex string (64 characters).
#[must_use]
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_known_sha256_vectors() {
        // Published SHA-256 test vectors (empty string and "abc").
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn is_deterministic_and_fixed_width() {
        let a = sha256_hex("int main() { return 0; }".as_bytes());
        let b = sha256_hex("int main() { return 0; }".as_bytes());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert!(a.chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn distinct_inputs_hash_differently() {
        assert_ne!(sha256_hex(b"sorts the list"), sha256_hex(b"sorts the array"));
    }
}
