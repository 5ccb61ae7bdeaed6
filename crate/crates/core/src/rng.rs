//! Splittable, seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed. Child streams are
//! derived from `(parent seed, index)` through a SplitMix64 finalizer, so the
//! tree of streams is fixed by the root seed alone and does not depend on the
//! order in which workers request their children.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream that remembers its derivation path.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Branch indices from the root stream to this one.
    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Derives the `index`-th child. The result depends only on this stream's
    /// seed and `index`, never on how many draws were already taken.
    pub fn child(&self, index: u64) -> RngStream {
        let seed = splitmix64(splitmix64(self.seed) ^ splitmix64(index.wrapping_add(GOLDEN)));
        let mut path = self.path.clone();
        path.push(index);
        Self {
            seed,
            path,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Child keyed by a string label (benchmark ids, method ids).
    pub fn child_named(&self, label: &str) -> RngStream {
        self.child(label_hash(label))
    }
}

/// FNV-1a hash used to turn labels into branch indices.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_seeds_identical_draws() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn child_independent_of_parent_consumption() {
        let a = RngStream::new(3);
        let mut b = RngStream::new(3);
        let _: f64 = b.random();
        assert_eq!(a.child(5).next_u64(), b.child(5).next_u64());
        assert_eq!(b.child(5).path(), &[5]);
    }

    #[test]
    fn children_differ_within_four_draws() {
        let root = RngStream::new(11);
        let firsts: Vec<[u64; 4]> = (0..1000u64)
            .map(|i| {
                let mut c = root.child(i);
                [c.next_u64(), c.next_u64(), c.next_u64(), c.next_u64()]
            })
            .collect();
        for i in 0..firsts.len() {
            for j in (i + 1)..firsts.len() {
                assert_ne!(firsts[i], firsts[j], "children {i} and {j} collide");
            }
        }
    }
}
