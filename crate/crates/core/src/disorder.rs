//! Bernoulli ±1 disorder generated by a counter-based hash, the cumulant
//! `λ(β) = log cosh β`, and calibration of `β_N` in the critical window.

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::lattice::Grid;

/// `log cosh β`, stable for large `|β|`.
pub fn lambda_of_beta(beta: f64) -> f64 {
    let b = beta.abs();
    b + (-2.0 * b).exp().ln_1p() - std::f64::consts::LN_2
}

/// `E[(e − 1)²] = e^{λ(2β) − 2λ(β)} − 1 = tanh² β`.
pub fn sigma2_of_beta(beta: f64) -> f64 {
    beta.tanh().powi(2)
}

/// `(1/R_N)(1 + θ/log N)` with the lower-order freedom set to zero.
pub fn critical_sigma2(n_scale: u64, theta: f64, r_n: f64) -> f64 {
    (1.0 + theta / (n_scale as f64).ln()) / r_n
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCoupling {
    #[serde(rename = "N")]
    pub n_scale: u64,
    pub theta: f64,
    #[serde(rename = "R_N")]
    pub r_n: f64,
    pub sigma2: f64,
    #[serde(rename = "beta_N")]
    pub beta: f64,
}

pub fn calibrate(n_scale: u64, theta: f64, r_n: f64) -> Result<CriticalCoupling> {
    if n_scale < 2 {
        return Err(out_of_range("N", n_scale, ">= 2"));
    }
    let target = critical_sigma2(n_scale, theta, r_n);
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Calibration { target });
    }
    Ok(CriticalCoupling { n_scale, theta, r_n, sigma2: target, beta: target.sqrt().atanh() })
}

impl CriticalCoupling {
    /// Coupling with no disorder, for zero-temperature reductions.
    pub fn free(n_scale: u64) -> Self {
        Self { n_scale, theta: 0.0, r_n: f64::INFINITY, sigma2: 0.0, beta: 0.0 }
    }

    /// Coupling at an arbitrary `β`, outside the critical calibration.
    pub fn at_beta(n_scale: u64, beta: f64) -> Self {
        Self { n_scale, theta: f64::NAN, r_n: f64::NAN, sigma2: sigma2_of_beta(beta), beta }
    }
}

/// A weight source `e_{n,x}` for `n ≥ 1`.
pub trait Environment {
    fn weight(&self, n: u32, x: [i32; 2]) -> f64;
    fn sigma2(&self) -> f64;
    /// Identity of the stream, used to refuse combining unrelated traces.
    fn stream(&self) -> StreamKey;

    /// Multiplies every entry of `grid` by `e_{n,y}`.
    fn weigh(&self, n: u32, grid: &mut Grid) {
        let b = grid.bbox();
        let h = b.height();
        for (i, row) in grid.data_mut().chunks_exact_mut(h).enumerate() {
            let x = b.x_min + i as i32;
            for (j, v) in row.iter_mut().enumerate() {
                *v *= self.weight(n, [x, b.y_min + j as i32]);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub replica: u64,
    pub beta_bits: u64,
}

/// Disorder stream `(seed, replica)` at inverse temperature `β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisorderSpec {
    pub seed: u64,
    pub replica: u64,
    beta: f64,
    up: f64,
    down: f64,
}

impl DisorderSpec {
    pub fn new(seed: u64, replica: u64, beta: f64) -> Self {
        assert!(beta >= 0.0 && beta.is_finite(), "beta must be finite and nonnegative");
        let lam = lambda_of_beta(beta);
        Self { seed, replica, beta, up: (beta - lam).exp(), down: (-beta - lam).exp() }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The two values `(e^{β−λ}, e^{−β−λ})`.
    pub fn values(&self) -> (f64, f64) {
        (self.up, self.down)
    }

    /// Hasher with `(seed, replica, n)` folded in, for a whole time slice.
    #[inline]
    pub fn slice(&self, n: u32) -> SliceHasher {
        SliceHasher { key: slice_key(self.seed, self.replica, n), up: self.up, down: self.down }
    }
}

pub fn weight_at(spec: &DisorderSpec, n: u32, x: [i32; 2]) -> f64 {
    spec.slice(n).weight(x)
}

impl Environment for DisorderSpec {
    #[inline]
    fn weight(&self, n: u32, x: [i32; 2]) -> f64 {
        self.slice(n).weight(x)
    }

    fn sigma2(&self) -> f64 {
        sigma2_of_beta(self.beta)
    }

    fn stream(&self) -> StreamKey {
        StreamKey { seed: self.seed, replica: self.replica, beta_bits: self.beta.to_bits() }
    }

    fn weigh(&self, n: u32, grid: &mut Grid) {
        let hasher = self.slice(n);
        let b = grid.bbox();
        let h = b.height();
        for (i, row) in grid.data_mut().chunks_exact_mut(h).enumerate() {
            let x = b.x_min + i as i32;
            for (j, v) in row.iter_mut().enumerate() {
                *v *= hasher.weight([x, b.y_min + j as i32]);
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SliceHasher {
    key: u64,
    up: f64,
    down: f64,
}

impl SliceHasher {
    #[inline]
    pub fn sign(&self, x: [i32; 2]) -> bool {
        site_hash(self.key, x) >> 63 == 1
    }

    #[inline]
    pub fn weight(&self, x: [i32; 2]) -> f64 {
        if self.sign(x) {
            self.up
        } else {
            self.down
        }
    }
}

#[inline]
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

#[inline]
fn slice_key(seed: u64, replica: u64, n: u32) -> u64 {
    let h = fmix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let h = fmix64(h ^ replica.wrapping_mul(0xd6e8_feb8_6659_fd93));
    fmix64(h ^ (n as u64).wrapping_mul(0xa076_1d64_78bd_642f))
}

#[inline]
fn site_hash(key: u64, x: [i32; 2]) -> u64 {
    let packed = ((x[0] as u32 as u64) << 32) | x[1] as u32 as u64;
    fmix64(key ^ packed.wrapping_mul(0xe703_7ed1_a0b4_28db))
}

/// `e ≡ 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoDisorder;

impl Environment for NoDisorder {
    fn weight(&self, _n: u32, _x: [i32; 2]) -> f64 {
        1.0
    }

    fn sigma2(&self) -> f64 {
        0.0
    }

    fn stream(&self) -> StreamKey {
        StreamKey { seed: 0, replica: 0, beta_bits: 0 }
    }

    fn weigh(&self, _n: u32, _grid: &mut Grid) {}
}
