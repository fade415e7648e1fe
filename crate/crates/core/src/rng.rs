//! Seeded random streams.
//!
//! A simulation never shares a generator between independent pieces of work.
//! Each piece (one frame's random payload, one block of pulse slots, one
//! detector's background) gets its own stream derived from the run seed, a
//! domain tag and an index. The result of a run therefore does not depend on
//! how the work is scheduled across threads.

use rand::SeedableRng;

/// Generator used for every simulation stream.
pub type SimRng = rand_pcg::Pcg64Mcg;

/// Independent purposes a stream can be drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Frame = 1,
    Pulses = 2,
    Background = 3,
    Sweep = 4,
    Jitter = 5,
    Test = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for `(domain, index)` under the run seed.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let a = splitmix64(seed ^ 0x5AFE_C0DE_0000_0000);
    let b = splitmix64(a ^ (domain as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(b ^ index.wrapping_mul(0x9FB2_1C65_1E98_DF25))
}

/// Opens the stream for `(domain, index)` under the run seed.
pub fn stream(seed: u64, domain: Domain, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, domain, index))
}
