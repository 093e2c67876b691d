//! Iterated kernels `φ_t^{(0)} = 1`,
//! `φ_t^{(k)}(u) = ∫_0^t (s(s+u))^{−1/2} φ_t^{(k−1)}(s) ds`, by Nyström iteration.
//!
//! The substitution `s = t x²` removes the `s^{−1/2}` endpoint singularity:
//! `φ_t^{(k)}(u) = 2√t ∫_0^1 (t x² + u)^{−1/2} φ_t^{(k−1)}(t x²) dx`.
//! The `x`-grid is graded geometrically toward 0 so the near-diagonal scale
//! `x ≈ √(u/t)` is resolved for every node.

use super::quad::{composite_rule, graded_breaks, GaussLegendre};
use crate::error::{out_of_range, Result};

pub const MAX_ORDER: usize = 8;

#[derive(Clone, Debug)]
pub struct IteratedKernel {
    t: f64,
    /// `(x_i, w_i)` on `[0, 1]`.
    rule: Vec<(f64, f64)>,
    /// `levels[j][i] = φ_t^{(j)}(t x_i²)` for `j ≤ k_max − 1`.
    levels: Vec<Vec<f64>>,
}

impl IteratedKernel {
    /// Grid with `grading` geometric levels (ratio 1/2) and `order`-point panels.
    pub fn with_grid(t: f64, k_max: usize, grading: usize, order: usize) -> Result<Self> {
        if k_max > MAX_ORDER {
            return Err(out_of_range("k", k_max, "<= 8"));
        }
        if !(t > 0.0) {
            return Err(out_of_range("t", t, "> 0"));
        }
        let rule = composite_rule(&graded_breaks(0.0, 1.0, 0.5, grading), &GaussLegendre::new(order));
        let s: Vec<f64> = rule.iter().map(|(x, _)| t * x * x).collect();
        let mut levels = vec![vec![1.0; rule.len()]];
        for _ in 1..k_max.max(1) {
            let prev = levels.last().expect("seeded");
            let next: Vec<f64> = s.iter().map(|&u| apply(t, &rule, prev, u)).collect();
            levels.push(next);
        }
        Ok(Self { t, rule, levels })
    }

    pub fn new(t: f64, k_max: usize) -> Result<Self> {
        Self::with_grid(t, k_max, 48, 16)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `φ_t^{(k)}(u)` for `u > 0`.
    pub fn eval(&self, k: usize, u: f64) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        if k > self.levels.len() {
            return Err(out_of_range("k", k, &format!("<= {}", self.levels.len())));
        }
        if !(u > 0.0) {
            return Err(out_of_range("u", u, "> 0"));
        }
        Ok(apply(self.t, &self.rule, &self.levels[k - 1], u))
    }
}

fn apply(t: f64, rule: &[(f64, f64)], prev: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for ((x, w), p) in rule.iter().zip(prev) {
        acc += w * p / (t * x * x + u).sqrt();
    }
    2.0 * t.sqrt() * acc
}

/// `φ_t^{(k)}(u)`; builds a fresh table.
pub fn phi_iterated(k: usize, t: f64, u: f64) -> Result<f64> {
    IteratedKernel::new(t, k)?.eval(k, u)
}

/// `φ_1^{(1)}(u) = 2 log((1 + √(1+u))/√u)`.
pub fn phi1_first(u: f64) -> f64 {
    2.0 * ((1.0 + (1.0 + u).sqrt()) / u.sqrt()).ln()
}

/// `32^k Σ_{i≤k} (½ log(e²/v))^i / i!`.
pub fn iterated_series_bound(k: usize, v: f64) -> f64 {
    let l = 0.5 * (2.0 - v.ln());
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..=k {
        term *= l / i as f64;
        sum += term;
    }
    32f64.powi(k as i32) * sum
}

/// `32^k e/√v`.
pub fn iterated_power_bound(k: usize, v: f64) -> f64 {
    32f64.powi(k as i32) * std::f64::consts::E / v.sqrt()
}
