//! Counter-based random numbers.
//!
//! Every draw is a pure function of `(seed, stream, counters)`, computed by
//! chaining the SplitMix64 finalizer over the key words. There is no
//! generator state to share or advance, so trials can run on any number of
//! threads in any order and still see exactly the same numbers.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream families. Draws in different streams never collide
/// for the same counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ChannelGain = 0x6761_696e,
    KernelOracle = 0x6f72_6163,
}

/// A keyed counter-based generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let key = mix64(mix64(seed.wrapping_add(GOLDEN_GAMMA)) ^ stream as u64);
        CounterRng { key }
    }

    /// 64 random bits for the counter triple `(a, b, c)`.
    #[inline]
    pub fn bits(&self, a: u64, b: u64, c: u64) -> u64 {
        let mut h = mix64(self.key ^ a.wrapping_mul(GOLDEN_GAMMA));
        h = mix64(h.wrapping_add(b).wrapping_mul(GOLDEN_GAMMA) ^ 0x5851_f42d_4c95_7f2d);
        mix64(h ^ c.wrapping_add(1).wrapping_mul(0xd134_2543_de82_ef95))
    }

    /// Uniform on `(0, 1]`, with 53 bits of resolution. Never returns 0, so
    /// `ln(u)` is always finite.
    #[inline]
    pub fn unit_open_closed(&self, a: u64, b: u64, c: u64) -> f64 {
        ((self.bits(a, b, c) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
