//! Stable seed derivation. Every stochastic component takes a seed derived
//! from the master seed and its position (client, round, layer), so results
//! never depend on execution order.

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with each part in turn.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed for one client's local training in one round.
pub fn client_round_seed(master: u64, client_id: usize, round: usize) -> u64 {
    derive_seed(master, &[0xC11E, client_id as u64, round as u64])
}
