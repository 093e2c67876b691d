//! The Dickman-type densities `f_s`, the kernel `G_θ`, its envelope `Ĝ_{θ,T}`
//! and integrated forms.
//!
//! For `t ≤ 1` everything is explicit:
//! `f_s(t) = s t^{s−1} e^{−γs}/Γ(s+1)` and
//! `G_θ(t) = ∫_0^∞ e^{(θ−γ)s} s t^{s−1}/Γ(s+1) ds`.
//! For `t > 1`, `f_s(t) = s t^{s−1} e^{−γs}/Γ(s+1) − s t^{s−1} ∫_0^{t−1} f_s(a)/(1+a)² da`
//! is marched on a uniform grid of step `1/512` with the trapezoid rule. The
//! part of the memory integral over `a ∈ (0, 1]` is explicit and integrated
//! after the substitution `a = u^{1/s}`, which removes the `a^{s−1}` singularity.

use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::ln_gamma;

use super::quad::{adaptive, GaussLegendre};
use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Volterra grid step.
pub const MARCH_STEP: f64 = 1.0 / 512.0;
const STEPS_PER_UNIT: usize = 512;

const G_REL_TOL: f64 = 1e-12;

fn check_st(s: f64, t: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("f_s needs s > 0, got {s}")));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("f_s needs t > 0, got {t}")));
    }
    Ok(())
}

/// `s t^{s−1} e^{−γs}/Γ(s+1)`, the explicit branch.
pub fn f_s_explicit(s: f64, t: f64) -> f64 {
    (s.ln() + (s - 1.0) * t.ln() - EULER_GAMMA * s - ln_gamma(s + 1.0)).exp()
}

/// `f_s(t)` for any `t > 0`.
pub fn f_s(s: f64, t: f64) -> Result<f64> {
    check_st(s, t)?;
    if t <= 1.0 {
        return Ok(f_s_explicit(s, t));
    }
    FsMarch::new(s, t)?.eval(t)
}

/// One `s`, marched on `t ∈ [1, t_max]`.
#[derive(Clone, Debug)]
pub struct FsMarch {
    s: f64,
    /// `f_s(1 + jh)`.
    values: Vec<f64>,
    /// `∫_0^{jh} f_s(a)/(1+a)² da` for `j = 0..=512`, from the explicit branch.
    head: Vec<f64>,
    /// Trapezoid sums `∫_1^{1+jh} f_s(a)/(1+a)² da`.
    tail: Vec<f64>,
}

impl FsMarch {
    pub fn new(s: f64, t_max: f64) -> Result<Self> {
        check_st(s, t_max)?;
        let h = MARCH_STEP;
        let head = explicit_memory(s)?;
        let jmax = ((t_max - 1.0).max(0.0) / h).ceil() as usize + 1;
        let mut values = Vec::with_capacity(jmax + 1);
        let mut tail = Vec::with_capacity(jmax + 1);
        values.push(f_s_explicit(s, 1.0));
        tail.push(0.0);
        let g = |a: f64, f: f64| f / ((1.0 + a) * (1.0 + a));
        for j in 1..=jmax {
            let t = 1.0 + j as f64 * h;
            // Memory integral over [0, t − 1] = [0, jh].
            let mem = if j <= STEPS_PER_UNIT {
                head[j]
            } else {
                head[STEPS_PER_UNIT] + tail[j - STEPS_PER_UNIT]
            };
            let v = f_s_explicit(s, t) - s * t.powf(s - 1.0) * mem;
            values.push(v);
            // Extend the trapezoid tail by one panel [1 + (j−1)h, 1 + jh].
            let a0 = 1.0 + (j - 1) as f64 * h;
            let prev = *tail.last().expect("seeded");
            tail.push(prev + 0.5 * h * (g(a0, values[j - 1]) + g(a0 + h, v)));
        }
        Ok(Self { s, values, head, tail })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t_max(&self) -> f64 {
        1.0 + (self.values.len() - 1) as f64 * MARCH_STEP
    }

    /// Grid values `f_s(1 + jh)`.
    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    /// `f_s(t)` for `t ≤ t_max`, with the memory integral's last partial
    /// panel interpolated linearly.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_st(self.s, t)?;
        if t <= 1.0 {
            return Ok(f_s_explicit(self.s, t));
        }
        if t > self.t_max() + 1e-12 {
            return Err(Error::Domain(format!("t = {t} beyond the marched range {}", self.t_max())));
        }
        let b = t - 1.0;
        let mem = if b <= 1.0 {
            explicit_memory_at(self.s, b)?
        } else {
            let x = (b - 1.0) / MARCH_STEP;
            let j = (x.floor() as usize).min(self.tail.len() - 1);
            let frac = x - j as f64;
            let mut m = self.head[STEPS_PER_UNIT] + self.tail[j];
            if frac > 0.0 && j + 1 < self.values.len() {
                let a0 = 1.0 + j as f64 * MARCH_STEP;
                let a1 = a0 + frac * MARCH_STEP;
                let f1 = self.values[j] + frac * (self.values[j + 1] - self.values[j]);
                m += 0.5
                    * (a1 - a0)
                    * (self.values[j] / (1.0 + a0).powi(2) + f1 / (1.0 + a1).powi(2));
            }
            m
        };
        Ok(f_s_explicit(self.s, t) - self.s * t.powf(self.s - 1.0) * mem)
    }
}

fn explicit_prefactor(s: f64) -> f64 {
    (-EULER_GAMMA * s - ln_gamma(s + 1.0)).exp()
}

// ∫_0^b f_s(a)/(1+a)² da = e^{−γs}/Γ(s+1) ∫_0^{b^s} (1 + u^{1/s})^{−2} du.
fn explicit_memory_at(s: f64, b: f64) -> Result<f64> {
    if b <= 0.0 {
        return Ok(0.0);
    }
    let inv = 1.0 / s;
    let r = adaptive(|u: f64| (1.0 + u.powf(inv)).powi(-2), 0.0, b.powf(s), &[], 1e-15, 1e-13)?;
    Ok(explicit_prefactor(s) * r.value)
}

fn explicit_memory(s: f64) -> Result<Vec<f64>> {
    let inv = 1.0 / s;
    let pre = explicit_prefactor(s);
    let gl = GaussLegendre::new(12);
    let integrand = |u: f64| (1.0 + u.powf(inv)).powi(-2);
    let mut out = Vec::with_capacity(STEPS_PER_UNIT + 1);
    out.push(0.0);
    let first = adaptive(integrand, 0.0, MARCH_STEP.powf(s), &[], 1e-16, 1e-13)?;
    let mut acc = first.value;
    out.push(pre * acc);
    for j in 2..=STEPS_PER_UNIT {
        let u0 = ((j - 1) as f64 * MARCH_STEP).powf(s);
        let u1 = (j as f64 * MARCH_STEP).powf(s);
        acc += gl.integrate(u0, u1, integrand);
        out.push(pre * acc);
    }
    Ok(out)
}

fn g_log_integrand(theta: f64, t: f64, s: f64) -> f64 {
    (theta - EULER_GAMMA) * s + s.ln() + (s - 1.0) * t.ln() - ln_gamma(s + 1.0)
}

const S_BREAKS: [f64; 10] = [1e-3, 1e-2, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 20.0, 40.0];

/// Default truncation of the `s`-integral: where the log-integrand sits 50
/// below its value at the peak (found on a coarse scan).
fn default_s_max(theta: f64, t: f64) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut s = 1e-4;
    while s < 400.0 {
        peak = peak.max(g_log_integrand(theta, t, s));
        s *= 1.05;
    }
    let mut s_max = 8.0;
    while g_log_integrand(theta, t, s_max) > peak - 50.0 || s_max < 2.0 * (theta.abs() + 2.0) {
        s_max *= 1.25;
    }
    s_max
}

/// `G_θ(t)` for `0 < t ≤ 1` with an explicit truncation `s ≤ s_max`.
pub fn g_theta_truncated(theta: f64, t: f64, s_max: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("explicit G_theta needs t in (0, 1], got {t}")));
    }
    let r = adaptive(|s| g_log_integrand(theta, t, s).exp(), 0.0, s_max, &S_BREAKS, 0.0, G_REL_TOL)?;
    Ok(r.value)
}

/// `G_θ(t) = ∫_0^∞ e^{θs} f_s(t) ds`.
pub fn g_theta(theta: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("G_theta needs t > 0, got {t}")));
    }
    if t <= 1.0 {
        return g_theta_truncated(theta, t, default_s_max(theta, t));
    }
    shared_grid(t)?.g_theta(theta, t)
}

/// `∫_0^τ G_θ(w) dw`. For `τ ≤ 1` this equals `∫_0^∞ e^{(θ−γ)s} τ^s/Γ(s+1) ds`.
pub fn g_theta_integral(theta: f64, tau: f64) -> Result<f64> {
    if tau < 0.0 || !tau.is_finite() {
        return Err(Error::Domain(format!("integral of G_theta needs tau >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    if tau <= 1.0 {
        let ln_tau = tau.ln();
        let s_max = default_s_max(theta, tau).max(8.0);
        let r = adaptive(
            |s| ((theta - EULER_GAMMA) * s + s * ln_tau - ln_gamma(s + 1.0)).exp(),
            0.0,
            s_max,
            &S_BREAKS,
            0.0,
            G_REL_TOL,
        )?;
        return Ok(r.value);
    }
    let head = g_theta_integral(theta, 1.0)?;
    Ok(head + shared_grid(tau)?.g_theta_integral_beyond_one(theta, tau)?)
}

/// `G_θ(t, x) = G_θ(t) p_{t/2}(x)`.
pub fn g_theta_spatial(theta: f64, t: f64, x: [f64; 2]) -> Result<f64> {
    let g = g_theta(theta, t)?;
    let r2 = x[0] * x[0] + x[1] * x[1];
    Ok(g * (-r2 / t).exp() / (std::f64::consts::PI * t))
}

/// Tabulation of `f_s(t)` on `s`-quadrature nodes and the marching grid.
#[derive(Clone, Debug)]
pub struct SpecialFnGrid {
    s_nodes: Vec<(f64, f64)>,
    marches: Vec<FsMarch>,
    t_max: f64,
    s_max: f64,
}

impl SpecialFnGrid {
    /// Composite 16-point Gauss–Legendre in `s` on unit panels up to `s_max`.
    pub fn new(t_max: f64, s_max: f64) -> Result<Self> {
        let gl = GaussLegendre::new(16);
        let panels = s_max.ceil() as usize;
        let mut s_nodes = Vec::new();
        for p in 0..panels {
            s_nodes.extend(gl.mapped(p as f64, (p + 1) as f64));
        }
        let marches = s_nodes.iter().map(|&(s, _)| FsMarch::new(s, t_max)).collect::<Result<Vec<_>>>()?;
        Ok(Self { s_nodes, marches, t_max, s_max: panels as f64 })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn h(&self) -> f64 {
        MARCH_STEP
    }

    pub fn g_theta(&self, theta: f64, t: f64) -> Result<f64> {
        let mut acc = 0.0;
        for ((s, w), m) in self.s_nodes.iter().zip(&self.marches) {
            acc += w * (theta * s).exp() * m.eval(t)?;
        }
        Ok(acc)
    }

    /// `G_θ(1 + jh)` for every marched node.
    pub fn g_theta_nodes(&self, theta: f64) -> Vec<f64> {
        let len = self.marches[0].grid_values().len();
        let mut out = vec![0.0; len];
        for ((s, w), m) in self.s_nodes.iter().zip(&self.marches) {
            let c = w * (theta * s).exp();
            for (o, v) in out.iter_mut().zip(m.grid_values()) {
                *o += c * v;
            }
        }
        out
    }

    /// `∫_1^τ G_θ(w) dw` by the trapezoid rule on the marching grid.
    pub fn g_theta_integral_beyond_one(&self, theta: f64, tau: f64) -> Result<f64> {
        if tau <= 1.0 {
            return Ok(0.0);
        }
        let nodes = self.g_theta_nodes(theta);
        let x = (tau - 1.0) / MARCH_STEP;
        let j = x.floor() as usize;
        if j + 1 >= nodes.len() && x > j as f64 {
            return Err(Error::Domain(format!("tau = {tau} beyond the tabulated range")));
        }
        let mut acc = 0.0;
        for i in 0..j {
            acc += 0.5 * MARCH_STEP * (nodes[i] + nodes[i + 1]);
        }
        let frac = x - j as f64;
        if frac > 0.0 {
            let end = self.g_theta(theta, tau)?;
            acc += 0.5 * frac * MARCH_STEP * (nodes[j] + end);
        }
        Ok(acc)
    }
}

fn shared_grid(t: f64) -> Result<Arc<SpecialFnGrid>> {
    static GRID: OnceLock<Mutex<Option<Arc<SpecialFnGrid>>>> = OnceLock::new();
    let cell = GRID.get_or_init(|| Mutex::new(None));
    let mut guard = cell.lock().expect("grid lock");
    if let Some(g) = guard.as_ref() {
        if g.t_max() >= t {
            return Ok(g.clone());
        }
    }
    let t_max = t.max(2.0).ceil();
    let grid = Arc::new(SpecialFnGrid::new(t_max, 48.0)?);
    *guard = Some(grid.clone());
    Ok(grid)
}

/// Envelope `Ĝ_{θ,T}(t) = c/(t (log(e²T/t))²)` with `c = c_{θ,T}`.
#[derive(Clone, Copy, Debug)]
pub struct GEnvelope {
    pub theta: f64,
    pub t_cap: f64,
    pub c: f64,
}

impl GEnvelope {
    /// Fits `c` as the supremum of `G_θ(t) t log²(e²T/t)` over a log grid on
    /// `[1e-12 T, T]` (240 points), inflated by `1e-3` for off-grid points.
    pub fn fit(theta: f64, t_cap: f64) -> Result<Self> {
        let mut c: f64 = 0.0;
        let n = 240;
        for i in 0..=n {
            let t = t_cap * 10f64.powf(-12.0 * (1.0 - i as f64 / n as f64));
            let l = (std::f64::consts::E.powi(2) * t_cap / t).ln();
            c = c.max(g_theta(theta, t)? * t * l * l);
        }
        Ok(Self { theta, t_cap, c: c * (1.0 + 1e-3) })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let l = (std::f64::consts::E.powi(2) * self.t_cap / t).ln();
        self.c / (t * l * l)
    }
}
