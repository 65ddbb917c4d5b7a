//! Deterministic random streams.
//!
//! A user seed is expanded with SplitMix64 and drives a xoshiro256++ generator.
//! Independent uses of randomness (data, init, noise, sampling, batch order)
//! each get their own `stream_id`, so no two consumers ever share a stream.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Result};

/// Well-known stream ids.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const SUBSAMPLE: u64 = 7;
    pub const PAIRS: u64 = 8;
    pub const DIRECTION: u64 = 9;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a list of integers into a single stream id.
pub fn stream_id_of(parts: &[u64]) -> u64 {
    let mut state = 0x6A09_E667_F3BC_C908u64;
    let mut acc = 0u64;
    for &p in parts {
        state ^= p;
        acc = splitmix64(&mut state) ^ acc.rotate_left(17);
    }
    acc
}

/// FNV-1a; used to turn names (module names, domain ids) into stream components.
pub fn hash_str(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    position: u64,
    state: [u64; 4],
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut sm = seed;
        let base = splitmix64(&mut sm);
        let mut sm = base ^ stream_id.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(29);
        let mut state = [0u64; 4];
        for s in state.iter_mut() {
            *s = splitmix64(&mut sm);
        }
        if state == [0; 4] {
            state[0] = 1;
        }
        RngStream { seed, stream_id, position: 0, state }
    }

    /// Stream derived from a seed and a tuple of integers (e.g. module, grid cell).
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        Self::new(seed, stream_id_of(parts))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Rebuilds a stream and advances it to `position`.
    pub fn restore(seed: u64, stream_id: u64, position: u64) -> Self {
        let mut rng = Self::new(seed, stream_id);
        for _ in 0..position {
            rng.next_u64();
        }
        rng
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        self.position += 1;
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n); unbiased via rejection.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Standard normal pair via Box–Muller.
    #[inline]
    fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// One standard normal draw (consumes two words, discards the sine branch).
    pub fn next_normal(&mut self) -> f64 {
        self.normal_pair().0
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// Identity permutation of length `n`, shuffled.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

/// `n` i.i.d. samples of N(0, std²).
pub fn gaussian(rng: &mut RngStream, n: usize, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0) || !std.is_finite() {
        return domain(format!("gaussian std must be finite and >= 0, got {std}"));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (a, b) = rng.normal_pair();
        out.push(a * std);
        if out.len() < n {
            out.push(b * std);
        }
    }
    Ok(out)
}

/// Uniform sample from the closed ball of `radius` around `center`.
pub fn uniform_in_ball(rng: &mut RngStream, center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return domain(format!("ball radius must be finite and >= 0, got {radius}"));
    }
    let n = center.len();
    if radius == 0.0 || n == 0 {
        return Ok(center.to_vec());
    }
    let mut dir = gaussian(rng, n, 1.0)?;
    let mut norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    while norm == 0.0 {
        dir = gaussian(rng, n, 1.0)?;
        norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let r = radius * rng.next_f64().powf(1.0 / n as f64);
    let scale = r / norm;
    Ok(center.iter().zip(&dir).map(|(c, d)| c + d * scale).collect())
}

#[derive(Serialize, Deserialize)]
struct StreamRepr {
    seed: u64,
    stream_id: u64,
    position: u64,
}

impl Serialize for RngStream {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StreamRepr { seed: self.seed, stream_id: self.stream_id, position: self.position }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RngStream {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = StreamRepr::deserialize(deserializer)?;
        Ok(RngStream::restore(r.seed, r.stream_id, r.position))
    }
}
