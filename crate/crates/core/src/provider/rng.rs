//! Counter-based random draws.
//!
//! A [`DrawKey`] is 128 bits of SHA-256 over the length-prefixed key fields.
//! Draw `i` is a pure function of `(key, i)`, so a call's randomness never
//! depends on which calls ran before it or on which thread ran it.

use sha2::{Digest, Sha256};

use super::SeedMaterial;

const DOMAIN: &[u8] = b"agentcost.sim.v1";
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Temperature bucket in 0.05 steps.
pub fn quantize_temperature(temperature: f64) -> u32 {
    (temperature / 0.05).round() as u32
}

fn hash_fields(fields: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for f in fields {
        h.update((f.len() as u64).to_le_bytes());
        h.update(f);
    }
    h.finalize().into()
}

/// 64-bit seed derived from an ordered list of byte fields.
pub fn derive_seed(fields: &[&[u8]]) -> u64 {
    let d = hash_fields(fields);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DrawKey {
    k0: u64,
    k1: u64,
}

impl DrawKey {
    pub fn from_fields(fields: &[&[u8]]) -> Self {
        let mut all = Vec::with_capacity(fields.len() + 1);
        all.push(DOMAIN);
        all.extend_from_slice(fields);
        let d = hash_fields(&all);
        DrawKey {
            k0: u64::from_le_bytes(d[..8].try_into().expect("8 bytes")),
            k1: u64::from_le_bytes(d[8..16].try_into().expect("8 bytes")),
        }
    }

    /// Key of one simulated model call.
    pub fn for_call(seed: &SeedMaterial, model: &str, task_id: &str, temperature: f64) -> Self {
        Self::from_fields(&[
            &seed.to_bytes(),
            model.as_bytes(),
            task_id.as_bytes(),
            &quantize_temperature(temperature).to_le_bytes(),
        ])
    }

    pub fn bits(&self, counter: u64) -> u64 {
        mix64(
            self.k0
                .wrapping_add(mix64(self.k1 ^ counter.wrapping_mul(GOLDEN))),
        )
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n`; `n` must be positive.
    pub fn below(&self, counter: u64, n: u64) -> u64 {
        ((self.bits(counter) as u128 * n as u128) >> 64) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_buckets() {
        assert_eq!(quantize_temperature(0.0), 0);
        assert_eq!(quantize_temperature(0.3), 6);
        assert_eq!(quantize_temperature(0.31), 6);
        assert_eq!(quantize_temperature(0.5), 10);
        assert_eq!(quantize_temperature(2.0), 40);
    }

    #[test]
    fn key_depends_on_every_field() {
        let s = SeedMaterial::new(7, "t1", 0);
        let k = DrawKey::for_call(&s, "m", "t1", 0.0);
        assert_eq!(k, DrawKey::for_call(&s, "m", "t1", 0.01));
        assert_ne!(k, DrawKey::for_call(&s, "m", "t1", 0.05));
        assert_ne!(k, DrawKey::for_call(&s, "n", "t1", 0.0));
        assert_ne!(
            k,
            DrawKey::for_call(&SeedMaterial::new(7, "t1", 1), "m", "t1", 0.0)
        );
        assert_ne!(
            k,
            DrawKey::for_call(&SeedMaterial::new(8, "t1", 0), "m", "t1", 0.0)
        );
    }

    #[test]
    fn uniform_range_and_below() {
        let k = DrawKey::from_fields(&[b"x"]);
        for i in 0..10_000 {
            let u = k.uniform(i);
            assert!((0.0..1.0).contains(&u));
            assert!(k.below(i, 7) < 7);
        }
    }

    // Critical chi-square values at p = 0.01 from a standard table.
    const CHI2_CRIT_9: f64 = 21.666;
    const CHI2_CRIT_15: f64 = 30.578;

    fn chi_square(counts: &[u64], expected: f64) -> f64 {
        counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum()
    }

    #[test]
    fn draws_are_uniform() {
        let n = 100_000u64;
        let mut bins = [0u64; 10];
        for i in 0..n {
            let k = DrawKey::for_call(&SeedMaterial::new(i, "task", 0), "m", "task", 0.0);
            bins[(k.uniform(0) * 10.0) as usize] += 1;
        }
        let x2 = chi_square(&bins, n as f64 / 10.0);
        assert!(x2 < CHI2_CRIT_9, "chi2 = {x2}");
    }

    #[test]
    fn attempts_are_independent() {
        let n = 100_000u64;
        let mut cells = [0u64; 16];
        for i in 0..n {
            let a =
                DrawKey::for_call(&SeedMaterial::new(i, "task", 0), "m", "task", 0.0).uniform(0);
            let b =
                DrawKey::for_call(&SeedMaterial::new(i, "task", 1), "m", "task", 0.0).uniform(0);
            cells[(a * 4.0) as usize * 4 + (b * 4.0) as usize] += 1;
        }
        let x2 = chi_square(&cells, n as f64 / 16.0);
        assert!(x2 < CHI2_CRIT_15, "chi2 = {x2}");
    }

    #[test]
    fn counters_within_a_key_are_independent() {
        let n = 100_000u64;
        let mut cells = [0u64; 16];
        for i in 0..n {
            let k = DrawKey::from_fields(&[&i.to_le_bytes()]);
            cells[(k.uniform(0) * 4.0) as usize * 4 + (k.uniform(1) * 4.0) as usize] += 1;
        }
        let x2 = chi_square(&cells, n as f64 / 16.0);
        assert!(x2 < CHI2_CRIT_15, "chi2 = {x2}");
    }
}
