//! Named sub-seeds, so every random stream derives from one root seed.

/// SplitMix64 finalizer.
pub fn splitmix(x: u64) -> u64 {
    let z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream called `name` under `root`.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    // FNV-1a over the name
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(root) ^ h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_separate_streams() {
        assert_ne!(sub_seed(1, "init"), sub_seed(1, "order"));
        assert_ne!(sub_seed(1, "init"), sub_seed(2, "init"));
        assert_eq!(sub_seed(7, "data"), sub_seed(7, "data"));
    }
}
