use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Reproducible random stream identified by `(master_seed, stream_id)`.
///
/// Each identifier selects an independent ChaCha8 stream under the key
/// expanded from `master_seed`. Parallel code derives one stream per task
/// with [`RngStream::derive`] so results do not depend on scheduling.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream { master_seed, stream_id, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream for `task`, a pure function of this stream's identity.
    ///
    /// ```
    /// use rand::RngCore;
    /// use sketchreg::linalg::RngStream;
    /// let root = RngStream::new(7, 0);
    /// let mut a = root.derive(3);
    /// let mut b = RngStream::new(7, 0).derive(3);
    /// assert_eq!(a.next_u64(), b.next_u64());
    /// ```
    pub fn derive(&self, task: u64) -> RngStream {
        RngStream::new(self.master_seed, mix(self.stream_id, task))
    }

    /// A copy of this stream rewound to its first word.
    pub fn restart(&self) -> RngStream {
        RngStream::new(self.master_seed, self.stream_id)
    }

    /// Moves to absolute 32-bit word position `pos`.
    pub fn seek_word(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` by multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        bucket(self.rng.next_u64(), n)
    }

    pub fn rademacher(&mut self) -> f64 {
        if self.rng.next_u32() & 1 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Maps a 64-bit word to `0..n`.
pub(crate) fn bucket(word: u64, n: usize) -> usize {
    ((word as u128 * n as u128) >> 64) as usize
}

/// SplitMix64 finalizer over the parent id and task.
fn mix(parent: u64, task: u64) -> u64 {
    let mut z = parent
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(task.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws from `N(0, Σ)` with `Σ_ij = ρ^{|i-j|}` by the AR(1) recursion.
///
/// # Panics
/// If `|rho| >= 1`.
pub fn mvn_ar1(dim: usize, rho: f64, stream: &mut RngStream) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    mvn_ar1_into(&mut out, rho, stream);
    out
}

pub fn mvn_ar1_into(out: &mut [f64], rho: f64, stream: &mut RngStream) {
    assert!(rho.abs() < 1.0, "AR(1) coefficient must satisfy |rho| < 1");
    let innov = (1.0 - rho * rho).sqrt();
    let mut prev = 0.0;
    for (j, x) in out.iter_mut().enumerate() {
        let e = stream.normal();
        prev = if j == 0 { e } else { rho * prev + innov * e };
        *x = prev;
    }
}
