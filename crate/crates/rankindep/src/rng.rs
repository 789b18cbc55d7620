//! Deterministic random-number streams and uniform permutations.
//!
//! Every randomized stage of the pipeline receives an [`RngStream`], a
//! `(master_seed, stream_id)` pair mapped onto an independent ChaCha8 stream.
//! Parallel work units derive child streams by index, so results never depend
//! on scheduling order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A reproducible random stream identified by `(master_seed, stream_id)`.
///
/// Equal pairs produce identical sequences; distinct `stream_id`s select
/// distinct ChaCha8 counter streams and are independent by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        RngStream {
            master_seed,
            stream_id: 0,
        }
    }

    pub fn with_stream(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derive a child stream for the given salt (e.g. a replicate or tree
    /// index). Derivation is a bijective mix of the parent id and the salt,
    /// so child streams of distinct parents or salts do not collide in
    /// practice.
    pub fn child(&self, salt: u64) -> Self {
        RngStream {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(salt.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        }
    }

    /// Instantiate the concrete generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

// SplitMix64 finalizer; bijective on u64.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A bijection on `{0, …, m−1}` stored as its mapping array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    /// Wrap a mapping, checking that it is a bijection on `0..m`.
    pub fn from_mapping(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &j in &mapping {
            if j >= mapping.len() || seen[j] {
                return Err(Error::invalid("mapping is not a bijection on 0..m"));
            }
            seen[j] = true;
        }
        Ok(Permutation { mapping })
    }

    pub fn identity(m: usize) -> Self {
        Permutation {
            mapping: (0..m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.mapping[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.mapping
    }

    pub fn has_fixed_point(&self) -> bool {
        self.mapping.iter().enumerate().any(|(i, &j)| i == j)
    }
}

/// Draw a permutation uniformly from the symmetric group on `m` elements
/// (Fisher–Yates; every permutation has probability `1/m!`).
pub fn draw_uniform_permutation(m: usize, stream: RngStream) -> Result<Permutation> {
    if m == 0 {
        return Err(Error::invalid("permutation size m must be >= 1"));
    }
    let mut rng = stream.rng();
    Ok(shuffle_with(m, &mut rng))
}

/// Uniform permutation drawn from an already-instantiated generator.
pub(crate) fn shuffle_with<R: Rng>(m: usize, rng: &mut R) -> Permutation {
    let mut mapping: Vec<usize> = (0..m).collect();
    mapping.shuffle(rng);
    Permutation { mapping }
}

/// Uniform derangement (no fixed points) by rejection sampling.
pub(crate) fn derangement_with<R: Rng>(m: usize, rng: &mut R) -> Permutation {
    debug_assert!(m >= 2, "no derangement exists on fewer than 2 elements");
    loop {
        let perm = shuffle_with(m, rng);
        if !perm.has_fixed_point() {
            return perm;
        }
    }
}
