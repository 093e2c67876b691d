//! Mollified densities `z ↦ (1/N) Σ_y W(y) m_ε(y/√N − z)`, the renormalized
//! quadratic variation and peak statistics.
//!
//! The heat mollifier `p_ε` factorizes, so a whole z-grid is two matrix
//! products `Gₓᵀ W G_y`. Bump mollifiers `f_ε(x) = ε⁻¹ f(x/√ε)` are summed
//! directly over the lattice points in their support.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use super::FieldPath;
use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::testfn::TestFunction;

#[derive(Clone, Debug, PartialEq)]
pub enum Mollifier {
    Heat,
    /// Unit-mass bump of the given radius, centered at the origin.
    Bump { radius: f64 },
}

impl Mollifier {
    fn check(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("mollifier scale must be positive, got {eps}")));
        }
        if let Mollifier::Bump { radius } = self {
            if !(*radius > 0.0) {
                return Err(Error::Domain(format!("bump radius must be positive, got {radius}")));
            }
        }
        Ok(())
    }
}

/// Uniform grid of points `origin + (a, b)·spacing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZGrid {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl ZGrid {
    /// Grid covering `[lo, hi]` (closed) with the given spacing.
    pub fn covering(lo: [f64; 2], hi: [f64; 2], spacing: f64) -> Self {
        let n = |i: usize| ((hi[i] - lo[i]) / spacing).ceil().max(0.0) as usize + 1;
        Self { origin: lo, spacing, nx: n(0), ny: n(1) }
    }

    /// Cell-centered grid inside the rectangle `[lo, hi)`.
    pub fn cells(lo: [f64; 2], hi: [f64; 2], spacing: f64) -> Self {
        let n = |i: usize| ((hi[i] - lo[i]) / spacing).floor().max(1.0) as usize;
        Self { origin: [lo[0] + 0.5 * spacing, lo[1] + 0.5 * spacing], spacing, nx: n(0), ny: n(1) }
    }

    pub fn point(&self, a: usize, b: usize) -> [f64; 2] {
        [self.origin[0] + a as f64 * self.spacing, self.origin[1] + b as f64 * self.spacing]
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }
}

#[derive(Clone, Debug)]
pub struct DensityGrid {
    pub grid: ZGrid,
    /// Row-major in the x index.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.grid.ny + b]
    }

    /// `h² Σ_z D(z)`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }
}

fn gauss1(var: f64, d: f64) -> f64 {
    (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Density of `W/N` at a single macroscopic point `z`.
pub fn mollified_density(w: &Grid, n_scale: u64, eps: f64, z: [f64; 2], mollifier: &Mollifier) -> Result<f64> {
    let g = ZGrid { origin: z, spacing: 1.0, nx: 1, ny: 1 };
    Ok(density_on_zgrid(w, n_scale, eps, mollifier, &g)?.values[0])
}

/// Density on the support box of `w` dilated by `5√ε`, with spacing `√ε/4`
/// unless a finer one is given.
pub fn density_on_grid(
    w: &Grid,
    n_scale: u64,
    eps: f64,
    mollifier: &Mollifier,
    spacing: Option<f64>,
) -> Result<DensityGrid> {
    mollifier.check(eps)?;
    let limit = eps.sqrt() / 4.0;
    let h = spacing.unwrap_or(limit);
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { spacing: h, limit });
    }
    let s = (n_scale as f64).sqrt();
    let b = w.bbox();
    let pad = 5.0 * eps.sqrt();
    let lo = [b.x_min as f64 / s - pad, b.y_min as f64 / s - pad];
    let hi = [b.x_max as f64 / s + pad, b.y_max as f64 / s + pad];
    density_on_zgrid(w, n_scale, eps, mollifier, &ZGrid::covering(lo, hi, h))
}

pub fn density_on_zgrid(
    w: &Grid,
    n_scale: u64,
    eps: f64,
    mollifier: &Mollifier,
    zg: &ZGrid,
) -> Result<DensityGrid> {
    mollifier.check(eps)?;
    let nf = n_scale as f64;
    let s = nf.sqrt();
    let b = w.bbox();
    let values = match mollifier {
        Mollifier::Heat => {
            let gx = Array2::from_shape_fn((zg.nx, b.width()), |(a, i)| {
                gauss1(eps, (b.x_min + i as i32) as f64 / s - (zg.origin[0] + a as f64 * zg.spacing))
            });
            let gy = Array2::from_shape_fn((b.height(), zg.ny), |(j, c)| {
                gauss1(eps, (b.y_min + j as i32) as f64 / s - (zg.origin[1] + c as f64 * zg.spacing))
            });
            let wv = ArrayView2::from_shape((b.width(), b.height()), w.data()).expect("grid shape");
            let d = gx.dot(&wv).dot(&gy) / nf;
            d.iter().copied().collect()
        }
        Mollifier::Bump { radius } => {
            let f = TestFunction::Bump { center: [0.0, 0.0], radius: radius * eps.sqrt(), weight: 1.0 };
            let reach = radius * eps.sqrt() * s;
            let mut out = Vec::with_capacity(zg.nx * zg.ny);
            for a in 0..zg.nx {
                for c in 0..zg.ny {
                    let z = zg.point(a, c);
                    let x0 = ((z[0] * s - reach).ceil() as i32).max(b.x_min);
                    let x1 = ((z[0] * s + reach).floor() as i32).min(b.x_max);
                    let y0 = ((z[1] * s - reach).ceil() as i32).max(b.y_min);
                    let y1 = ((z[1] * s + reach).floor() as i32).min(b.y_max);
                    let mut acc = 0.0;
                    for x in x0..=x1 {
                        for y in y0..=y1 {
                            let v = w.get([x, y]);
                            if v != 0.0 {
                                acc += v * f.eval([x as f64 / s - z[0], y as f64 / s - z[1]]);
                            }
                        }
                    }
                    out.push(acc / nf);
                }
            }
            out
        }
    };
    Ok(DensityGrid { grid: *zg, values })
}

/// Streaming accumulator of
/// `(4πc/(−log ε)) Σ_{k=1}^{⌊Nt⌋} (1/N) h² Σ_z D_k(z)² ψ(z)²` over several `ε`,
/// where `D_k` is the heat-mollified density of `W̄_k/N`.
#[derive(Clone, Debug)]
pub struct QvRenormalizer {
    eps: Vec<f64>,
    psi: TestFunction,
    n_scale: u64,
    cov_scale: f64,
    spacing_factor: f64,
    sums: Vec<f64>,
}

impl QvRenormalizer {
    /// `spacing_factor ≤ 1` scales the default spacing `√ε/4`.
    pub fn new(eps: &[f64], psi: &TestFunction, n_scale: u64, cov_scale: f64, spacing_factor: f64) -> Result<Self> {
        for &e in eps {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Domain(format!("eps must lie in (0, 1), got {e}")));
            }
        }
        if !(spacing_factor > 0.0 && spacing_factor <= 1.0) {
            let limit = eps.iter().copied().fold(f64::INFINITY, f64::min).sqrt() / 4.0;
            return Err(Error::GridTooCoarse { spacing: spacing_factor * limit, limit });
        }
        Ok(Self {
            eps: eps.to_vec(),
            psi: psi.clone(),
            n_scale,
            cov_scale,
            spacing_factor,
            sums: vec![0.0; eps.len()],
        })
    }

    /// Adds the contribution of one `W̄_k`.
    pub fn observe(&mut self, wbar: &Grid) -> Result<()> {
        let nf = self.n_scale as f64;
        for (i, &e) in self.eps.iter().enumerate() {
            let d = density_on_grid(wbar, self.n_scale, e, &Mollifier::Heat, Some(self.spacing_factor * e.sqrt() / 4.0))?;
            let mut acc = 0.0;
            for a in 0..d.grid.nx {
                for b in 0..d.grid.ny {
                    let v = d.get(a, b);
                    if v != 0.0 {
                        let p = self.psi.eval(d.grid.point(a, b));
                        acc += v * v * p * p;
                    }
                }
            }
            self.sums[i] += acc * d.grid.cell_area() / nf;
        }
        Ok(())
    }

    /// `(ε, value)` pairs.
    pub fn values(&self) -> Vec<(f64, f64)> {
        self.eps
            .iter()
            .zip(&self.sums)
            .map(|(&e, &s)| (e, 4.0 * PI * self.cov_scale / (-e.ln()) * s))
            .collect()
    }
}

/// Renormalized quadratic variation over the first `⌊Nt⌋` recorded steps.
pub fn qv_renormalized(path: &FieldPath, eps: f64, psi: &TestFunction, t: f64, spacing: Option<f64>) -> Result<f64> {
    let limit = eps.sqrt() / 4.0;
    let factor = spacing.map_or(1.0, |h| h / limit);
    if factor > 1.0 + 1e-12 {
        return Err(Error::GridTooCoarse { spacing: factor * limit, limit });
    }
    if psi.is_constant() == Some(0.0) {
        return Ok(0.0);
    }
    let steps = ((path.n_scale as f64 * t).floor() as usize).min(path.steps());
    let mut r = QvRenormalizer::new(&[eps], psi, path.n_scale, path.cov_scale, factor.min(1.0))?;
    for g in &path.wbar[..steps] {
        r.observe(g)?;
    }
    Ok(r.values()[0].1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PeakMeasure {
    /// `∬` of the density over the time-space set where it is `≥ λ log(1/ε)`.
    pub occupation: f64,
    /// Time-space measure of that set.
    pub area: f64,
    /// Time-space measure of `{λ⁻¹ log(1/ε) ≤ density < λ log(1/ε)}`.
    pub band_area: f64,
}

impl PeakMeasure {
    /// Adds one time slice of duration `dt`.
    pub fn add_slice(&mut self, d: &DensityGrid, lambda: f64, eps: f64, dt: f64) {
        let l = (1.0 / eps).ln();
        let (hi, lo) = (lambda * l, l / lambda);
        let da = d.grid.cell_area() * dt;
        for &v in &d.values {
            if v >= hi {
                self.occupation += v * da;
                self.area += da;
            }
            if v >= lo && v < hi {
                self.band_area += da;
            }
        }
    }
}

/// Peak statistics of a recorded path over `A = [lo, hi)` and the time window
/// `[s, t]`, with `W̄_k` at time `k/N` and cell-centered z-grid of spacing `h`.
pub fn peak_measure(
    path: &FieldPath,
    mollifier: &Mollifier,
    lambda: f64,
    eps: f64,
    region: ([f64; 2], [f64; 2]),
    window: (f64, f64),
    spacing: f64,
) -> Result<PeakMeasure> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Domain(format!("eps must lie in (0, 1/2), got {eps}")));
    }
    let nf = path.n_scale as f64;
    let zg = ZGrid::cells(region.0, region.1, spacing);
    let mut out = PeakMeasure::default();
    for (i, g) in path.wbar.iter().enumerate() {
        let u = (i + 1) as f64 / nf;
        if u < window.0 || u > window.1 {
            continue;
        }
        let d = density_on_zgrid(g, path.n_scale, eps, mollifier, &zg)?;
        out.add_slice(&d, lambda, eps, 1.0 / nf);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    #[test]
    fn heat_density_conserves_mass() {
        let mut g = Grid::zeros(LatticeBox::centered(6));
        g.set([1, 2], 3.0);
        g.set([-4, 0], 1.5);
        g.set([0, 0], 0.25);
        let n = 64;
        let d = density_on_grid(&g, n, 0.05, &Mollifier::Heat, None).unwrap();
        let mass = g.sum() / n as f64;
        assert!((d.integral() - mass).abs() < 1e-6 * mass);
        let z = d.grid.point(7, 9);
        let single = mollified_density(&g, n, 0.05, z, &Mollifier::Heat).unwrap();
        assert!((single - d.get(7, 9)).abs() < 1e-14);
    }

    #[test]
    fn coarse_grid_rejected() {
        let g = Grid::point_mass([0, 0]);
        let err = density_on_grid(&g, 64, 0.04, &Mollifier::Heat, Some(0.06));
        assert!(matches!(err, Err(Error::GridTooCoarse { .. })));
        assert!(density_on_grid(&g, 64, 0.0, &Mollifier::Heat, None).is_err());
    }

    #[test]
    fn bump_density_matches_definition() {
        let mut g = Grid::zeros(LatticeBox::centered(3));
        g.set([1, 0], 2.0);
        g.set([0, -1], 1.0);
        let n = 16;
        let eps = 0.3;
        let z = [0.1, -0.05];
        let got = mollified_density(&g, n, eps, z, &Mollifier::Bump { radius: 1.0 }).unwrap();
        let f = TestFunction::bump([0.0, 0.0], 1.0);
        let s = 4.0;
        let want = (2.0 * f.eval([(0.25 - z[0]) / eps.sqrt(), (0.0 - z[1]) / eps.sqrt()])
            + f.eval([(0.0 - z[0]) / eps.sqrt(), (-1.0 / s - z[1]) / eps.sqrt()]))
            / eps
            / n as f64;
        assert!((got - want).abs() < 1e-14 * want);
    }
}
