//! Position- and role-keyed seed derivation.
//!
//! Every random stream in the pipeline is `derive(master, &[tag, index, ...])`,
//! so results never depend on visit order or thread count.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One SplitMix64 output step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `keys` into `master` one SplitMix64 step at a time.
pub fn derive(master: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(master), |acc, &k| splitmix64(acc ^ k.wrapping_mul(GOLDEN)))
}

/// Stable 64-bit tag for a short ASCII label.
pub fn tag(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(GOLDEN), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn derivation_depends_on_order_and_values() {
        let a = derive(7, &[1, 2]);
        assert_eq!(a, derive(7, &[1, 2]));
        assert_ne!(a, derive(7, &[2, 1]));
        assert_ne!(a, derive(8, &[1, 2]));
        assert_ne!(tag("synth"), tag("train"));
    }
}
