//! Counter-based random numbers.
//!
//! Philox4x64-10 maps a 256-bit counter and a 128-bit key to four
//! pseudo-random 64-bit words. Because any block can be computed directly
//! from its counter, the random numbers consumed by particle `i` in step `n`
//! are fixed by `(seed, i, n)` alone. Simulations can therefore be
//! partitioned arbitrarily across workers, or run particle-major instead of
//! step-major, and still reproduce the same bits.

use rand_core::{impls, RngCore};

const M0: u64 = 0xD2E7_470E_E14C_6C93;
const M1: u64 = 0xCA5A_8263_9512_1157;
const W0: u64 = 0x9E37_79B9_7F4A_7C15;
const W1: u64 = 0xBB67_AE85_84CA_A73B;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// One Philox4x64 block with the standard ten rounds.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Independent random-number domains. Each purpose gets its own key so
/// that, e.g., the initial positions never share blocks with step noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Release = 0x5245_4c45_4153_4500,
    StepNoise = 0x5354_4550_4e4f_4953,
    SerSequence = 0x5345_5253_4551_0000,
    SerNoise = 0x5345_524e_4f49_5345,
}

#[inline]
pub fn key(seed: u64, domain: Domain) -> [u64; 2] {
    [seed, domain as u64]
}

/// Uniform on `[0, 1)` with 53 random bits.
#[inline(always)]
pub fn unit_open_high(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on `(0, 1]`, safe as the argument of `ln`.
#[inline(always)]
pub fn unit_open_low(w: u64) -> f64 {
    ((w >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Box–Muller transform of two words into two independent standard normals.
#[inline(always)]
pub fn box_muller(w0: u64, w1: u64) -> (f64, f64) {
    let radius = (-2.0 * unit_open_low(w0).ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * unit_open_high(w1)).sin_cos();
    (radius * c, radius * s)
}

/// Three standard normals for one particle and one time step.
///
/// `group` distinguishes otherwise identical particle indices, e.g. the
/// release and realization a particle belongs to in a link simulation.
/// Always consumes exactly one Philox block.
#[inline]
pub fn normal_triplet(key: [u64; 2], particle: u64, step: u64, group: [u64; 2]) -> [f64; 3] {
    let w = philox4x64([step, particle, group[0], group[1]], key);
    let (z0, z1) = box_muller(w[0], w[1]);
    let (z2, _) = box_muller(w[2], w[3]);
    [z0, z1, z2]
}

/// A sequential stream over consecutive Philox blocks, for consumers that
/// need an [`RngCore`] (e.g. `rand_distr` samplers). The stream is
/// identified by `(key, stream)`; two streams with different identifiers
/// never overlap.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: [u64; 2],
    counter: [u64; 4],
    buffer: [u64; 4],
    index: usize,
}

impl CounterRng {
    pub fn new(seed: u64, domain: Domain, stream: u64) -> Self {
        Self::with_key(key(seed, domain), [stream, 0])
    }

    pub fn with_key(key: [u64; 2], stream: [u64; 2]) -> Self {
        CounterRng {
            key,
            counter: [0, 0, stream[0], stream[1]],
            buffer: [0; 4],
            index: 4,
        }
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        if self.index == 4 {
            self.buffer = philox4x64(self.counter, self.key);
            self.counter[0] = self.counter[0].wrapping_add(1);
            if self.counter[0] == 0 {
                self.counter[1] = self.counter[1].wrapping_add(1);
            }
            self.index = 0;
        }
        let w = self.buffer[self.index];
        self.index += 1;
        w
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
