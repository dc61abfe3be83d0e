//! Independent seed streams derived from one master seed.
//!
//! Balancing, augmentation, weight init and batch shuffling each draw from
//! their own stream, so toggling one stage never perturbs another.

/// Named random streams used by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Balance,
    Augment,
    Init,
    Shuffle,
    Split,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Balance => 0x6261_6c61_6e63_6500,
            Stream::Augment => 0x6175_676d_656e_7400,
            Stream::Init => 0x696e_6974_0000_0000,
            Stream::Shuffle => 0x7368_7566_666c_6500,
            Stream::Split => 0x7370_6c69_7400_0000,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for `stream` from a master seed.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(master) ^ stream.tag())
}
