//! Reproducible random streams keyed by `(seed, round, client, purpose)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream's draws are used for. Distinct purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    HessianCompressor,
    ModelCompressor,
    GradientCompressor,
    GradientCoin,
    Participation,
    Data,
    Certify,
    Other(u32),
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::HessianCompressor => 1,
            Purpose::ModelCompressor => 2,
            Purpose::GradientCompressor => 3,
            Purpose::GradientCoin => 4,
            Purpose::Participation => 5,
            Purpose::Data => 6,
            Purpose::Certify => 7,
            Purpose::Other(k) => 1000 + u64::from(k),
        }
    }
}

/// Server-side streams use this client id.
pub const SERVER: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub round: u64,
    pub client: u64,
    pub purpose: Purpose,
}

impl RngStream {
    pub fn new(seed: u64, round: u64, client: u64, purpose: Purpose) -> Self {
        RngStream {
            seed,
            round,
            client,
            purpose,
        }
    }

    pub fn server(seed: u64, round: u64, purpose: Purpose) -> Self {
        Self::new(seed, round, SERVER, purpose)
    }

    /// ChaCha8 generator keyed by the full stream id.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = splitmix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        for (word, part) in [self.round, self.client, self.purpose.code(), self.seed]
            .into_iter()
            .enumerate()
        {
            state = splitmix64(state ^ part.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            key[word * 8..(word + 1) * 8].copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_id_same_draws() {
        let s = RngStream::new(42, 3, 1, Purpose::HessianCompressor);
        let a: [u64; 4] = s.rng().random();
        let b: [u64; 4] = s.rng().random();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_ids_differ() {
        let base = RngStream::new(42, 3, 1, Purpose::HessianCompressor);
        let others = [
            RngStream::new(43, 3, 1, Purpose::HessianCompressor),
            RngStream::new(42, 4, 1, Purpose::HessianCompressor),
            RngStream::new(42, 3, 2, Purpose::HessianCompressor),
            RngStream::new(42, 3, 1, Purpose::ModelCompressor),
        ];
        let first: u64 = base.rng().random();
        for o in others {
            assert_ne!(first, o.rng().random::<u64>());
        }
    }

    #[test]
    fn streams_look_uncorrelated() {
        // Correlation of paired uniforms from neighbouring clients.
        let n = 20_000;
        let mut a = RngStream::new(1, 0, 0, Purpose::Data).rng();
        let mut b = RngStream::new(1, 0, 1, Purpose::Data).rng();
        let (mut sab, mut sa, mut sb, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x: f64 = a.random();
            let y: f64 = b.random();
            sab += x * y;
            sa += x;
            sb += y;
            saa += x * x;
            sbb += y * y;
        }
        let nf = n as f64;
        let cov = sab / nf - sa * sb / (nf * nf);
        let corr = cov / libm::sqrt((saa / nf - (sa / nf).powi(2)) * (sbb / nf - (sb / nf).powi(2)));
        assert!(corr.abs() < 4.0 / libm::sqrt(nf), "corr={corr}");
    }
}
