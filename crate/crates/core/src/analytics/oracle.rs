//! Continuum oracles: first moment, variance, the `β = 0` renormalized
//! quadratic variation and the logarithmic mollifier limits.
//!
//! A walk with covariance `c·I` is driven by the heat kernel `p_{ct}`; every
//! oracle takes `c` so that lazy walks are compared against the right limit.
//! The variance integrand is `4πc ∫Φ_u²` with `Φ_u = φ ∗ p_{cu}`.

use std::f64::consts::PI;

use super::quad::{adaptive, composite_rule, graded_breaks, GaussLegendre};
use super::special::{g_theta_integral, EULER_GAMMA};
use crate::error::{Error, Result};
use crate::testfn::TestFunction;
use crate::walk::gauss2;

/// `E_1(x) = ∫_x^∞ e^{−w}/w dw` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 needs x > 0");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // Continued fraction, modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// `∫∫ φ(x) p_{ct}(y − x) ψ(y) dx dy`.
pub fn first_moment_oracle(phi: &TestFunction, psi: &TestFunction, t: f64, c: f64) -> Result<f64> {
    if let Some(v) = psi.is_constant() {
        let mass = phi
            .integral()
            .ok_or_else(|| Error::UnsupportedTestFunction(format!("{phi} is not integrable")))?;
        return Ok(v * mass);
    }
    if let (
        TestFunction::Gaussian { center: c1, var: v1, weight: w1 },
        TestFunction::Gaussian { center: c2, var: v2, weight: w2 },
    ) = (phi, psi)
    {
        return Ok(w1 * w2 * gauss2(v1 + v2 + c * t, [c1[0] - c2[0], c1[1] - c2[1]]));
    }
    first_moment_quadrature(phi, psi, t, c)
}

/// The same pairing by spatial quadrature, for every supported family.
pub fn first_moment_quadrature(phi: &TestFunction, psi: &TestFunction, t: f64, c: f64) -> Result<f64> {
    phi.integrate_against(|x| psi.heat_smooth(c * t, x))
}

/// `Q(v) = ∫ (φ ∗ p_v)(x)² dx`.
#[derive(Clone, Debug)]
pub enum SmoothedSquare {
    /// `φ = w·p_a`: `Q(v) = w²/(4π(a + v))`.
    Gaussian { weight: f64, var: f64 },
    /// Radial `φ` with autocorrelation `A(ρ) = ∫ φ(y) φ(y + ρe₁) dy` tabulated on
    /// `[0, 2r]`: `Q(v) = ∫_0^{2r} A(ρ) e^{−ρ²/(4v)}/(4πv) 2πρ dρ`.
    Radial { step: f64, table: Vec<f64> },
}

const AUTOCORR_INTERVALS: usize = 2048;

impl SmoothedSquare {
    pub fn new(phi: &TestFunction) -> Result<Self> {
        match phi {
            TestFunction::Gaussian { var, weight, .. } => Ok(Self::Gaussian { weight: *weight, var: *var }),
            TestFunction::Bump { radius, .. } => {
                let step = 2.0 * radius / AUTOCORR_INTERVALS as f64;
                let table = (0..=AUTOCORR_INTERVALS)
                    .map(|i| {
                        let rho = i as f64 * step;
                        phi.integrate_against(|y| phi.eval([y[0] + rho, y[1]]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self::Radial { step, table })
            }
            other => Err(Error::UnsupportedTestFunction(format!(
                "smoothed square mass needs a Gaussian or bump, got {other}"
            ))),
        }
    }

    /// `A(ρ)` by linear interpolation of the table.
    fn autocorrelation(step: f64, table: &[f64], rho: f64) -> f64 {
        let x = rho / step;
        let i = x.floor() as usize;
        if i + 1 >= table.len() {
            return 0.0;
        }
        let f = x - i as f64;
        table[i] * (1.0 - f) + table[i + 1] * f
    }

    /// `∫ φ² = Q(0)`.
    pub fn at_zero(&self) -> f64 {
        match self {
            Self::Gaussian { weight, var } => weight * weight / (4.0 * PI * var),
            Self::Radial { table, .. } => table[0],
        }
    }

    pub fn eval(&self, v: f64) -> Result<f64> {
        match self {
            Self::Gaussian { weight, var } => Ok(weight * weight / (4.0 * PI * (var + v))),
            Self::Radial { step, table } => {
                if v <= 0.0 {
                    return Ok(table[0]);
                }
                // The Gaussian factor is below e^{-40} beyond 13√v; the table
                // nodes are breaks since the interpolant has kinks there.
                let w = (4.0 * v).sqrt();
                let r_max = (*step * (table.len() - 1) as f64).min(6.5 * w);
                let mut breaks: Vec<f64> = (1..table.len()).map(|i| i as f64 * step).take_while(|b| *b < r_max).collect();
                breaks.extend([w, 3.0 * w].into_iter().filter(|b| *b < r_max));
                breaks.sort_by(f64::total_cmp);
                let r = adaptive(
                    |rho| Self::autocorrelation(*step, table, rho) * (-rho * rho / (4.0 * v)).exp() * rho / (2.0 * v),
                    0.0,
                    r_max,
                    &breaks,
                    1e-14,
                    1e-11,
                )?;
                Ok(r.value)
            }
        }
    }
}

/// Quadrature parameters of the variance oracle's outer integral.
#[derive(Clone, Copy, Debug)]
pub struct VarianceQuadrature {
    /// Geometric levels (ratio 1/4) graded toward the `w = 0` singularity.
    pub levels: usize,
    pub order: usize,
}

impl Default for VarianceQuadrature {
    fn default() -> Self {
        Self { levels: 24, order: 16 }
    }
}

/// `Var = ∫_0^t du S(u) IG(t − u)` with `S(u) = 4πc ∫Φ_u²` and
/// `IG(τ) = ∫_0^τ G_θ`, for `ψ ≡ 1`.
pub fn variance_oracle(phi: &TestFunction, t: f64, theta: f64, c: f64) -> Result<f64> {
    variance_oracle_with(phi, t, theta, c, VarianceQuadrature::default())
}

pub fn variance_oracle_with(
    phi: &TestFunction,
    t: f64,
    theta: f64,
    c: f64,
    quad: VarianceQuadrature,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("variance oracle needs t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let sq = SmoothedSquare::new(phi)?;
    let gl = GaussLegendre::new(quad.order);
    // Variable w = t − u; IG(w) has a 1/log(1/w) cusp at w = 0.
    let mut breaks = graded_breaks(0.0, t.min(1.0), 0.25, quad.levels);
    if t > 1.0 {
        breaks.push(t);
    }
    let mut acc = 0.0;
    for (w, wt) in composite_rule(&breaks, &gl) {
        acc += wt * 4.0 * PI * c * sq.eval(c * (t - w))? * g_theta_integral(theta, w)?;
    }
    Ok(acc)
}

/// `(4πc/(−log ε)) ∫_0^t ds ∫ (φ ∗ p_{cs+ε})² ψ² dz` for `ψ ≡ const`, the `β = 0`
/// mean of the renormalized quadratic variation with a heat mollifier.
pub fn qv_heat_reference(phi: &TestFunction, psi: &TestFunction, t: f64, eps: f64, c: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    let psi_c = psi.is_constant().ok_or_else(|| {
        Error::UnsupportedTestFunction("the heat reference needs a constant psi".into())
    })?;
    let sq = SmoothedSquare::new(phi)?;
    let scale = 4.0 * PI * c / (-eps.ln()) * psi_c * psi_c;
    if let SmoothedSquare::Gaussian { weight, var } = sq {
        return Ok(scale * weight * weight / (4.0 * PI * c) * ((var + c * t + eps) / (var + eps)).ln());
    }
    let r = adaptive(|s| sq.eval(c * s + eps).expect("finite"), 0.0, t, &[], 1e-14, 1e-9)?;
    Ok(scale * r.value)
}

/// `(−1/log ε) ∫dz ∫_0^t ds (s+ε)^{−1} p_{(s+ε)/2}(z − x) ψ(z)` for each `ε`.
pub fn mollifier_log_limit(psi: &TestFunction, x: [f64; 2], t: f64, eps: &[f64]) -> Result<Vec<(f64, f64)>> {
    eps.iter()
        .map(|&e| {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Domain(format!("eps must lie in (0, 1), got {e}")));
            }
            let v = if let Some(k) = psi.is_constant() {
                k * ((t + e) / e).ln()
            } else {
                let breaks: Vec<f64> = (0..12).map(|j| e * 4f64.powi(j)).filter(|b| *b < t).collect();
                adaptive(|s| psi.heat_smooth(0.5 * (s + e), x) / (s + e), 0.0, t, &breaks, 1e-14, 1e-10)?.value
            };
            Ok((e, v / (-e.ln())))
        })
        .collect()
}

/// Bump-mollifier variant with constant `ψ`:
/// `(4π/(−log ε)) ∫dz ∫_0^t ds (f_ε ∗ p_s)(z − x)² ψ`
/// `= (ψ/(−log ε)) ∫ A(ρ) E_1(ερ²/(4t)) 2πρ dρ`, which tends to `ψ`.
pub fn mollifier_log_limit_bump(
    f: &TestFunction,
    psi: &TestFunction,
    t: f64,
    eps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let psi_c = psi.is_constant().ok_or_else(|| {
        Error::UnsupportedTestFunction("the bump mollifier limit is implemented for constant psi".into())
    })?;
    let SmoothedSquare::Radial { step, table } = SmoothedSquare::new(f)? else {
        return Err(Error::UnsupportedTestFunction("the mollifier must be a bump".into()));
    };
    let r_max = step * (table.len() - 1) as f64;
    // Table nodes are kinks of the interpolant; the log singularity sits at 0.
    let mut breaks: Vec<f64> = (1..table.len()).map(|i| i as f64 * step).collect();
    breaks.extend([r_max * 1e-6, r_max * 1e-4, r_max * 1e-3, r_max * 1e-2]);
    breaks.sort_by(f64::total_cmp);
    eps.iter()
        .map(|&e| {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Domain(format!("eps must lie in (0, 1), got {e}")));
            }
            let integrand = |rho: f64| {
                if rho <= 0.0 {
                    return 0.0;
                }
                SmoothedSquare::autocorrelation(step, &table, rho)
                    * exp_integral_e1(e * rho * rho / (4.0 * t))
                    * 2.0
                    * PI
                    * rho
            };
            let r = adaptive(integrand, 0.0, r_max, &breaks, 1e-14, 1e-11)?;
            Ok((e, psi_c * r.value / (-e.ln())))
        })
        .collect()
}
