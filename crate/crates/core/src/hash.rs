//! 64-bit content hashes (leading eight bytes of SHA-256, big-endian).

use sha2::{Digest, Sha256};

#[derive(Clone, Default)]
pub struct ContentHasher(Sha256);

impl ContentHasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update(bytes);
        self
    }

    pub fn finish(self) -> u64 {
        let digest = self.0.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(head)
    }
}

pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h = ContentHasher::new();
    h.update(bytes);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest_prefix() {
        // sha256("abc") = ba7816bf8f01cfea...
        assert_eq!(content_hash(b"abc"), 0xba78_16bf_8f01_cfea);
    }

    #[test]
    fn streaming_matches_one_shot() {
        let mut h = ContentHasher::new();
        h.update(b"ab").update(b"c");
        assert_eq!(h.finish(), content_hash(b"abc"));
    }
}
