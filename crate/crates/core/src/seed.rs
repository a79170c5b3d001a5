//! Seed derivation ladder.
//!
//! Every random draw in a run descends from one root seed. Child seeds are
//! derived by mixing the parent with a stream id, so the seed used by
//! component 7 of repeat 3 is the same whether or not the other components
//! or repeats were run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for the fixed stages of a run.
pub const STREAM_LESINN: u64 = 0x4c45_5349;
pub const STREAM_COMPONENT: u64 = 0x434f_4d50;
pub const STREAM_TRAIN: u64 = 0x5452_4149;
pub const STREAM_ROW: u64 = 0x524f_5753;
pub const STREAM_REPEAT: u64 = 0x5245_5045;
pub const STREAM_DATA: u64 = 0x4441_5441;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, stream: u64) -> u64 {
    splitmix64(parent ^ splitmix64(stream))
}

/// Seed for an indexed child within a stream (component j, repeat r, ...).
pub fn derive_indexed(parent: u64, stream: u64, index: u64) -> u64 {
    derive(derive(parent, stream), index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
