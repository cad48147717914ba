//! Deterministic random number generation.
//!
//! xoshiro256++ seeded through SplitMix64, with Box-Muller for normals.
//! Chosen for bit-reproducibility across platforms, not cryptographic
//! strength. Identical seed means identical stream, always.

/// Deterministic generator state. Single-owner: clone or [`RngState::split`]
/// to hand independent streams to parallel workers.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    s: [u64; 4],
    cached_normal: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        RngState { seed, s, cached_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive an independent child stream. The child seed is a SplitMix64
    /// hash of (parent seed, index), so `split(i)` and `split(j)` are
    /// decorrelated for i != j and reproducible across runs. Splitting does
    /// not advance the parent stream.
    pub fn split(&self, index: u64) -> RngState {
        let mut sm = self.seed ^ index.wrapping_mul(0xd1342543de82ef95);
        let child_seed = splitmix64(&mut sm);
        RngState::new(child_seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform on (0, 1]: never returns exactly zero, which keeps the
    /// Box-Muller logarithm finite.
    pub fn next_uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Uniform on [lo, hi).
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * ((self.next_u64() >> 11) as f64) * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [0, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Rejection-free modulo is fine here: n is tiny relative to 2^64 and
        // the bias is far below anything our statistics can see.
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller; the paired value is cached.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// d i.i.d. standard-normal entries, deterministic given the stream state.
pub fn sample_standard_normal(rng: &mut RngState, d: usize) -> crate::numerics::Vector {
    crate::numerics::Vector::new((0..d).map(|_| rng.next_normal()).collect())
}
