//! Weighted renewal functions `U_N` and the discrete variance of `Z(φ, 1)`.
//!
//! `U(0) = σ²` and `U(n) = σ² Σ_{m<n} U(m) q_{2(n−m)}(0)`; the spatial version
//! is `U(n, x) = σ² Σ_{m<n} Σ_z U(m, z) q_{n−m}(x − z)²` with `U(0, x) = σ² δ_{x,0}`.

use serde::Serialize;

use crate::analytics::special::{g_theta, GEnvelope};
use crate::disorder::{CriticalCoupling, NoDisorder};
use crate::error::{out_of_range, Error, Result};
use crate::lattice::{Grid, LatticeBox};
use crate::numeric::CompensatedSum;
use crate::polymer::{FieldOptions, PolymerField};
use crate::testfn::TestFunction;
use crate::walk::{KernelTable, ReturnProbabilities, StepDistribution};

#[derive(Clone, Debug)]
pub struct RenewalTable {
    sigma2: f64,
    totals: Vec<f64>,
    spatial: Vec<Grid>,
}

/// Totals `U(n)` for `n ≤ n_max`; needs `q_{2j}(0)` for `j ≤ n_max`.
pub fn build_totals(coupling: &CriticalCoupling, q: &ReturnProbabilities, n_max: usize) -> Result<RenewalTable> {
    RenewalTable::totals(coupling.sigma2, q, n_max)
}

impl RenewalTable {
    pub fn totals(sigma2: f64, q: &ReturnProbabilities, n_max: usize) -> Result<Self> {
        if q.n_max() < n_max {
            return Err(out_of_range("n_max", n_max, &format!("<= {} (return probabilities)", q.n_max())));
        }
        let q = q.as_slice();
        let mut u = Vec::with_capacity(n_max + 1);
        u.push(sigma2);
        for n in 1..=n_max {
            let mut acc = CompensatedSum::new();
            for m in 0..n {
                acc.add(u[m] * q[n - m]);
            }
            u.push(sigma2 * acc.value());
        }
        Ok(Self { sigma2, totals: u, spatial: Vec::new() })
    }

    /// Adds `U(n, ·)` for `n ≤ n_spatial` from the kernel slices `q_1..q_{n_spatial}`.
    pub fn with_spatial(mut self, kernel: &KernelTable, n_spatial: usize) -> Result<Self> {
        if n_spatial > self.n_max() {
            return Err(out_of_range("n_spatial", n_spatial, &format!("<= {}", self.n_max())));
        }
        let reach = kernel.walk().reach();
        let squares = (1..=n_spatial)
            .map(|j| {
                let s = kernel
                    .slice(j)
                    .ok_or_else(|| out_of_range("n_spatial", n_spatial, "kept kernel slices"))?;
                let mut sq = s.clone();
                sq.data_mut().iter_mut().for_each(|v| *v *= *v);
                Ok(sq)
            })
            .collect::<Result<Vec<Grid>>>()?;
        let mut spatial = vec![{
            let mut g = Grid::point_mass([0, 0]);
            g.data_mut()[0] = self.sigma2;
            g
        }];
        for n in 1..=n_spatial {
            let mut out = Grid::zeros(LatticeBox::centered(n as i32 * reach));
            for (m, um) in spatial.iter().enumerate() {
                accumulate_convolution(&mut out, um, &squares[n - m - 1]);
            }
            out.data_mut().iter_mut().for_each(|v| *v *= self.sigma2);
            spatial.push(out);
        }
        self.spatial = spatial;
        Ok(self)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n_max(&self) -> usize {
        self.totals.len() - 1
    }

    pub fn u(&self, n: usize) -> f64 {
        self.totals[n]
    }

    pub fn totals_slice(&self) -> &[f64] {
        &self.totals
    }

    /// `U(n, ·)`, if computed.
    pub fn spatial(&self, n: usize) -> Option<&Grid> {
        self.spatial.get(n)
    }

    pub fn n_spatial(&self) -> Option<usize> {
        self.spatial.len().checked_sub(1)
    }

    /// `S(m) = Σ_{k≤m} U(k)`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::new();
        self.totals
            .iter()
            .map(|&u| {
                acc.add(u);
                acc.value()
            })
            .collect()
    }
}

// out(x + d) += a(x) b(d).
fn accumulate_convolution(out: &mut Grid, a: &Grid, b: &Grid) {
    let bb = b.bbox();
    let ob = out.bbox();
    let h = ob.height();
    let bh = bb.height();
    let data = out.data_mut();
    for (p, av) in a.iter() {
        if av == 0.0 {
            continue;
        }
        for dx in bb.x_min..=bb.x_max {
            let brow = b.row(dx);
            let x = p[0] + dx;
            let base = (x - ob.x_min) as usize * h + (p[1] + bb.y_min - ob.y_min) as usize;
            for (o, bv) in data[base..base + bh].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GComparisonRow {
    pub n: usize,
    pub u: f64,
    pub prediction: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GComparison {
    pub max_rel_err: f64,
    pub rows: Vec<GComparisonRow>,
}

/// `(σ² log N/N) G_θ(n/N)` for every `n ≤ n_max`, with `|U/pred − 1|`; the
/// maximum runs over `n/N ∈ [0.1, 1]`.
pub fn compare_to_g(table: &RenewalTable, n_scale: u64, theta: f64) -> Result<GComparison> {
    let nf = n_scale as f64;
    if table.n_max() < n_scale as usize {
        return Err(out_of_range("N", n_scale, &format!("<= {} (renewal table)", table.n_max())));
    }
    let pre = table.sigma2() * nf.ln() / nf;
    let mut rows = Vec::with_capacity(table.n_max());
    let mut max = 0.0f64;
    for n in 1..=table.n_max() {
        let prediction = pre * g_theta(theta, n as f64 / nf)?;
        let rel_err = (table.u(n) / prediction - 1.0).abs();
        let s = n as f64 / nf;
        if (0.1..=1.0).contains(&s) {
            max = max.max(rel_err);
        }
        rows.push(GComparisonRow { n, u: table.u(n), prediction, rel_err });
    }
    Ok(GComparison { max_rel_err: max, rows })
}

/// Smallest `C` with `U(n) ≤ C (σ² log N/N) Ĝ_{θ,T}(n/N)` for `1 ≤ n ≤ ⌊NT⌋`.
pub fn envelope_constant(table: &RenewalTable, n_scale: u64, envelope: &GEnvelope) -> Result<f64> {
    let nf = n_scale as f64;
    let n_hi = (nf * envelope.t_cap).floor() as usize;
    if table.n_max() < n_hi {
        return Err(out_of_range("T", envelope.t_cap, "covered by the renewal table"));
    }
    let pre = table.sigma2() * nf.ln() / nf;
    Ok((1..=n_hi).map(|n| table.u(n) / (pre * envelope.eval(n as f64 / nf))).fold(0.0, f64::max))
}

/// `Σ_{u=1}^{⌊NT⌋} e^{−λu/N} U(u)`.
pub fn laplace_sum(table: &RenewalTable, lambda: f64, n_scale: u64, t_cap: f64) -> Result<f64> {
    let nf = n_scale as f64;
    let n_hi = (nf * t_cap).floor() as usize;
    if table.n_max() < n_hi {
        return Err(out_of_range("T", t_cap, "covered by the renewal table"));
    }
    let mut acc = CompensatedSum::new();
    for u in 1..=n_hi {
        acc.add((-lambda * u as f64 / nf).exp() * table.u(u));
    }
    Ok(acc.value())
}

/// `A_i = (1/N²) Σ_y (φ_N ∗ q_i)(y)²` for `i = 0..=n`, by free evolution.
pub fn collision_profile(
    phi: &TestFunction,
    n_scale: u64,
    n: usize,
    walk: &StepDistribution,
    opts: &FieldOptions,
) -> Result<Vec<f64>> {
    let mut field = PolymerField::new(phi, n_scale, walk, CriticalCoupling::free(n_scale), NoDisorder, opts)?;
    let n2 = (n_scale as f64).powi(2);
    let mut out = Vec::with_capacity(n + 1);
    out.push(field.w().sum_sq() / n2);
    for _ in 0..n {
        field.step()?;
        out.push(field.w().sum_sq() / n2);
    }
    Ok(out)
}

/// `Var Z_{N;t}(φ, ψ)` for constant `ψ`:
/// `ψ² Σ_{1≤i≤j≤⌊Nt⌋} A_i U(j − i) = ψ² Σ_i A_i S(⌊Nt⌋ − i)`.
pub fn discrete_variance_mass(
    phi: &TestFunction,
    psi: &TestFunction,
    n_scale: u64,
    t: f64,
    table: &RenewalTable,
    walk: &StepDistribution,
    opts: &FieldOptions,
) -> Result<f64> {
    let k = psi.is_constant().ok_or_else(|| {
        Error::UnsupportedTestFunction("the exact variance formula needs a constant psi".into())
    })?;
    let n = (n_scale as f64 * t).floor() as usize;
    if n == 0 {
        return Ok(0.0);
    }
    if table.n_max() + 1 < n {
        return Err(out_of_range("t", t, "covered by the renewal table"));
    }
    let a = collision_profile(phi, n_scale, n, walk, opts)?;
    let s = table.cumulative();
    let mut acc = CompensatedSum::new();
    for i in 1..=n {
        acc.add(a[i] * s[n - i]);
    }
    Ok(k * k * acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{build_kernel_table, default_unit_covariance_walk};

    fn default_tables(n: usize, sigma2: f64) -> (KernelTable, RenewalTable) {
        let k = build_kernel_table(&default_unit_covariance_walk(), n).unwrap();
        let r = RenewalTable::totals(sigma2, &k.return_probabilities(), n).unwrap().with_spatial(&k, n).unwrap();
        (k, r)
    }

    #[test]
    fn first_terms() {
        let s2 = 0.3;
        let (k, r) = default_tables(6, s2);
        assert_eq!(r.u(0), s2);
        assert!((r.u(1) - 0.09375 * s2 * s2).abs() < 1e-16);
        // k-fold expansion at n = 3: one, two and three gaps.
        let q = |j: usize| k.return_probability(j).unwrap();
        let expand = s2 * s2 * q(3)
            + s2.powi(3) * (q(1) * q(2) + q(2) * q(1))
            + s2.powi(4) * q(1).powi(3);
        assert!((r.u(3) - expand).abs() < 1e-14 * expand);
    }

    #[test]
    fn spatial_sums_to_totals() {
        let (_, r) = default_tables(6, 0.4);
        for n in 0..=6 {
            let s = r.spatial(n).unwrap().sum();
            assert!((s - r.u(n)).abs() < 1e-10 * r.u(n));
            let g = r.spatial(n).unwrap();
            for (p, v) in g.iter() {
                assert!(v >= 0.0);
                assert!((v - g.get([-p[0], -p[1]])).abs() <= 1e-14 * v);
            }
        }
    }

    #[test]
    fn laplace_sum_limits() {
        let (_, r) = default_tables(8, 0.5);
        let a = laplace_sum(&r, 1.0, 8, 1.0).unwrap();
        let b = laplace_sum(&r, 10.0, 8, 1.0).unwrap();
        assert!(b < a);
        let big = laplace_sum(&r, 400.0, 8, 1.0).unwrap();
        assert!((big - (-50.0f64).exp() * r.u(1)).abs() < 1e-6 * big);
    }

    #[test]
    fn empty_time_window_has_zero_variance() {
        let (_, r) = default_tables(4, 0.5);
        let phi = TestFunction::bump([0.0, 0.0], 1.0);
        let v = discrete_variance_mass(
            &phi,
            &TestFunction::constant(1.0),
            16,
            0.05,
            &r,
            &default_unit_covariance_walk(),
            &FieldOptions::default(),
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }
}
