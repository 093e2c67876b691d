//! Test functions `φ`, `ψ` on `R²`, evaluated at macroscopic points `x/√N`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytics::quad::GaussLegendre;
use crate::error::{Error, Result};
use crate::lattice::LatticeBox;
use crate::walk::gauss2;

/// `E_2(1) = ∫_1^∞ e^{−w} w^{−2} dw`; the unit bump has mass `π E_2(1)`.
const E2_ONE: f64 = 0.148_495_506_775_922_04;

/// Gaussian windows are cut where the density falls below `e^{-72}` of its peak.
const GAUSS_WINDOW_SIGMAS: f64 = 12.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant { value: f64 },
    /// `weight · p_var(u − center)`.
    Gaussian { center: [f64; 2], var: f64, weight: f64 },
    /// `weight` times the unit-mass bump `exp(−1/(1−ρ²))` in `ρ = |u − center|/radius`.
    Bump { center: [f64; 2], radius: f64, weight: f64 },
    /// Indicator of the half-open rectangle `[lo, hi)`.
    Indicator { lo: [f64; 2], hi: [f64; 2] },
    Linear { terms: Vec<(f64, TestFunction)> },
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction::Constant { value }
    }

    pub fn gaussian(center: [f64; 2], var: f64) -> Self {
        assert!(var > 0.0);
        TestFunction::Gaussian { center, var, weight: 1.0 }
    }

    pub fn bump(center: [f64; 2], radius: f64) -> Self {
        assert!(radius > 0.0);
        TestFunction::Bump { center, radius, weight: 1.0 }
    }

    pub fn indicator(lo: [f64; 2], hi: [f64; 2]) -> Self {
        TestFunction::Indicator { lo, hi }
    }

    /// `a·f + b·g`.
    pub fn combine(a: f64, f: &TestFunction, b: f64, g: &TestFunction) -> Self {
        TestFunction::Linear { terms: vec![(a, f.clone()), (b, g.clone())] }
    }

    pub fn eval(&self, u: [f64; 2]) -> f64 {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Gaussian { center, var, weight } => {
                weight * gauss2(*var, [u[0] - center[0], u[1] - center[1]])
            }
            TestFunction::Bump { center, radius, weight } => {
                let rho2 = ((u[0] - center[0]).powi(2) + (u[1] - center[1]).powi(2)) / (radius * radius);
                if rho2 < 1.0 {
                    weight * (-1.0 / (1.0 - rho2)).exp() / (PI * E2_ONE * radius * radius)
                } else {
                    0.0
                }
            }
            TestFunction::Indicator { lo, hi } => {
                if u[0] >= lo[0] && u[0] < hi[0] && u[1] >= lo[1] && u[1] < hi[1] {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Linear { terms } => terms.iter().map(|(c, f)| c * f.eval(u)).sum(),
        }
    }

    /// Value at lattice point `x` for scale `N`: `f(x/√N)`.
    #[inline]
    pub fn at_lattice(&self, x: [i32; 2], sqrt_n: f64) -> f64 {
        self.eval([x[0] as f64 / sqrt_n, x[1] as f64 / sqrt_n])
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            TestFunction::Constant { value } => Some(*value),
            _ => None,
        }
    }

    /// Closed macroscopic rectangle outside of which the function vanishes (or,
    /// for Gaussians, is below `e^{-72}` of its peak); `None` if unbounded.
    pub fn support_rect(&self) -> Option<([f64; 2], [f64; 2])> {
        match self {
            TestFunction::Constant { value } => (*value == 0.0).then_some(([0.0; 2], [0.0; 2])),
            TestFunction::Gaussian { center, var, .. } => {
                let r = GAUSS_WINDOW_SIGMAS * var.sqrt();
                Some(([center[0] - r, center[1] - r], [center[0] + r, center[1] + r]))
            }
            TestFunction::Bump { center, radius, .. } => Some((
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            )),
            TestFunction::Indicator { lo, hi } => Some((*lo, *hi)),
            TestFunction::Linear { terms } => {
                let mut acc: Option<([f64; 2], [f64; 2])> = None;
                for (_, f) in terms {
                    let (lo, hi) = f.support_rect()?;
                    acc = Some(match acc {
                        None => (lo, hi),
                        Some((a, b)) => ([a[0].min(lo[0]), a[1].min(lo[1])], [b[0].max(hi[0]), b[1].max(hi[1])]),
                    });
                }
                acc
            }
        }
    }

    /// Lattice points `x` with `x/√N` in [`support_rect`](Self::support_rect).
    pub fn lattice_window(&self, n_scale: u64) -> Result<LatticeBox> {
        let (lo, hi) = self.support_rect().ok_or_else(|| {
            Error::UnsupportedTestFunction(format!("{self} has unbounded support; give a window"))
        })?;
        let s = (n_scale as f64).sqrt();
        let x0 = (lo[0] * s).ceil() as i32;
        let x1 = (hi[0] * s).floor() as i32;
        let y0 = (lo[1] * s).ceil() as i32;
        let y1 = (hi[1] * s).floor() as i32;
        if x0 > x1 || y0 > y1 {
            return Err(Error::EmptySupport);
        }
        Ok(LatticeBox::new(x0, x1, y0, y1))
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::Constant { value } => value.abs(),
            TestFunction::Gaussian { var, weight, .. } => weight.abs() / (2.0 * PI * var),
            TestFunction::Bump { radius, weight, .. } => {
                weight.abs() * (-1.0f64).exp() / (PI * E2_ONE * radius * radius)
            }
            TestFunction::Indicator { .. } => 1.0,
            TestFunction::Linear { terms } => terms.iter().map(|(c, f)| c.abs() * f.sup_norm()).sum(),
        }
    }

    /// `∫ f`, `None` when not integrable.
    pub fn integral(&self) -> Option<f64> {
        match self {
            TestFunction::Constant { value } => (*value == 0.0).then_some(0.0),
            TestFunction::Gaussian { weight, .. } | TestFunction::Bump { weight, .. } => Some(*weight),
            TestFunction::Indicator { lo, hi } => Some((hi[0] - lo[0]).max(0.0) * (hi[1] - lo[1]).max(0.0)),
            TestFunction::Linear { terms } => {
                terms.iter().map(|(c, f)| f.integral().map(|v| c * v)).sum()
            }
        }
    }

    /// `Δf(u)` where available in closed form.
    pub fn laplacian(&self, u: [f64; 2]) -> Option<f64> {
        match self {
            TestFunction::Constant { .. } => Some(0.0),
            TestFunction::Gaussian { center, var, .. } => {
                let r2 = (u[0] - center[0]).powi(2) + (u[1] - center[1]).powi(2);
                Some(self.eval(u) * (r2 / (var * var) - 2.0 / var))
            }
            TestFunction::Linear { terms } => {
                terms.iter().map(|(c, f)| f.laplacian(u).map(|v| c * v)).sum()
            }
            _ => None,
        }
    }

    /// `(f ∗ p_τ)(u) = ∫ f(y) p_τ(u − y) dy`; `f(u)` at `τ = 0`.
    pub fn heat_smooth(&self, tau: f64, u: [f64; 2]) -> f64 {
        if tau == 0.0 {
            return self.eval(u);
        }
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Gaussian { center, var, weight } => {
                weight * gauss2(var + tau, [u[0] - center[0], u[1] - center[1]])
            }
            TestFunction::Indicator { lo, hi } => {
                let s = tau.sqrt();
                let cdf = |z: f64| 0.5 * statrs::function::erf::erfc(-z / SQRT_2);
                (0..2).map(|i| cdf((hi[i] - u[i]) / s) - cdf((lo[i] - u[i]) / s)).product()
            }
            TestFunction::Bump { .. } => self
                .integrate_against(|y| gauss2(tau, [u[0] - y[0], u[1] - y[1]]))
                .expect("bump is integrable"),
            TestFunction::Linear { terms } => terms.iter().map(|(c, f)| c * f.heat_smooth(tau, u)).sum(),
        }
    }

    /// `∫ f(x) g(x) dx` by a tensor Gauss–Legendre rule adapted to the support.
    pub fn integrate_against(&self, mut g: impl FnMut([f64; 2]) -> f64) -> Result<f64> {
        self.integrate_dyn(&mut g)
    }

    fn integrate_dyn(&self, g: &mut dyn FnMut([f64; 2]) -> f64) -> Result<f64> {
        match self {
            TestFunction::Constant { value } if *value == 0.0 => Ok(0.0),
            TestFunction::Constant { .. } => Err(Error::UnsupportedTestFunction(
                "constant functions have no finite integral".into(),
            )),
            TestFunction::Bump { center, radius, .. } => {
                // Polar rule: radial Gauss–Legendre panels, periodic trapezoid in angle.
                let gl = GaussLegendre::new(16);
                let n_ang = 64;
                let mut s = 0.0;
                for panel in 0..6 {
                    let (a, b) = (radius * panel as f64 / 6.0, radius * (panel + 1) as f64 / 6.0);
                    for (r, w) in gl.mapped(a, b) {
                        let f = self.eval([center[0] + r, center[1]]);
                        let mut ang = 0.0;
                        for j in 0..n_ang {
                            let th = 2.0 * PI * j as f64 / n_ang as f64;
                            ang += g([center[0] + r * th.cos(), center[1] + r * th.sin()]);
                        }
                        s += w * r * f * ang * 2.0 * PI / n_ang as f64;
                    }
                }
                Ok(s)
            }
            TestFunction::Gaussian { .. } | TestFunction::Indicator { .. } => {
                let (lo, hi) = self.support_rect().expect("bounded");
                let gl = GaussLegendre::new(16);
                let panels = if matches!(self, TestFunction::Gaussian { .. }) { 12 } else { 4 };
                let axis = |i: usize| {
                    let h = (hi[i] - lo[i]) / panels as f64;
                    (0..panels)
                        .flat_map(|p| gl.mapped(lo[i] + h * p as f64, lo[i] + h * (p + 1) as f64).collect::<Vec<_>>())
                        .collect::<Vec<_>>()
                };
                let (ax, ay) = (axis(0), axis(1));
                let mut s = 0.0;
                for &(x, wx) in &ax {
                    for &(y, wy) in &ay {
                        s += wx * wy * self.eval([x, y]) * g([x, y]);
                    }
                }
                Ok(s)
            }
            TestFunction::Linear { terms } => {
                let mut s = 0.0;
                for (c, f) in terms {
                    s += c * f.integrate_dyn(g)?;
                }
                Ok(s)
            }
        }
    }

    /// Parses `const:v`, `gauss:cx,cy,var[,weight]`, `bump:cx,cy,r[,weight]`,
    /// `ind:x0,y0,x1,y1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad test function spec {spec:?}"));
        let (kind, rest) = spec.trim().split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let f = match (kind, nums.as_slice()) {
            ("const", [v]) => TestFunction::constant(*v),
            ("gauss", [cx, cy, var]) if *var > 0.0 => TestFunction::gaussian([*cx, *cy], *var),
            ("gauss", [cx, cy, var, w]) if *var > 0.0 => {
                TestFunction::Gaussian { center: [*cx, *cy], var: *var, weight: *w }
            }
            ("bump", [cx, cy, r]) if *r > 0.0 => TestFunction::bump([*cx, *cy], *r),
            ("bump", [cx, cy, r, w]) if *r > 0.0 => {
                TestFunction::Bump { center: [*cx, *cy], radius: *r, weight: *w }
            }
            ("ind", [x0, y0, x1, y1]) => TestFunction::indicator([*x0, *y0], [*x1, *y1]),
            _ => return Err(bad()),
        };
        Ok(f)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Constant { value } => write!(f, "const:{value}"),
            TestFunction::Gaussian { center, var, weight } if *weight == 1.0 => {
                write!(f, "gauss:{},{},{var}", center[0], center[1])
            }
            TestFunction::Gaussian { center, var, weight } => {
                write!(f, "gauss:{},{},{var},{weight}", center[0], center[1])
            }
            TestFunction::Bump { center, radius, weight } if *weight == 1.0 => {
                write!(f, "bump:{},{},{radius}", center[0], center[1])
            }
            TestFunction::Bump { center, radius, weight } => {
                write!(f, "bump:{},{},{radius},{weight}", center[0], center[1])
            }
            TestFunction::Indicator { lo, hi } => write!(f, "ind:{},{},{},{}", lo[0], lo[1], hi[0], hi[1]),
            TestFunction::Linear { terms } => {
                let parts: Vec<String> = terms.iter().map(|(c, g)| format!("{c}*({g})")).collect();
                write!(f, "{}", parts.join(" + "))
            }
        }
    }
}
