//! Exact discrete semimartingale decomposition of `k ↦ Z_{N;k/N}(φ, ψ)`.
//!
//! With `P` the one-step transfer and `ψ_N(y) = ψ(y/√N)`:
//! `Z_{k+1} − Z_k = (1/N) Σ_y W_k(y)(Pψ_N − ψ_N)(y) + ΔM_k`,
//! `ΔM_k = (1/N) Σ_y W̄_{k+1}(y) ψ_N(y)(e_{k+1,y} − 1)`, and
//! `⟨M⟩_n = (σ²/N²) Σ_{k=1}^{n} Σ_y W̄_k(y)² ψ_N(y)²`.
//! The drift equals `(1/N) Z_{k/N}(φ, Δ_N ψ)` with `Δ_N ψ = N(Pψ_N − ψ_N)`.

mod density;

pub use density::{
    density_on_grid, density_on_zgrid, mollified_density, peak_measure, qv_renormalized, DensityGrid,
    Mollifier, PeakMeasure, QvRenormalizer, ZGrid,
};

use serde::Serialize;

use crate::disorder::{CriticalCoupling, Environment, StreamKey};
use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::numeric::CompensatedSum;
use crate::polymer::{FieldOptions, LatticeCache, PolymerField};
use crate::testfn::TestFunction;
use crate::walk::StepDistribution;

/// `Δ_N f(x) = N(Σ_s p(s) f((x+s)/√N) − f(x/√N))` for an arbitrary `f`.
pub fn discrete_laplacian_fn(f: impl Fn([f64; 2]) -> f64, n_scale: u64, walk: &StepDistribution, x: [i32; 2]) -> f64 {
    let s = (n_scale as f64).sqrt();
    let at = |p: [i32; 2]| f([p[0] as f64 / s, p[1] as f64 / s]);
    let mut acc = CompensatedSum::new();
    for st in walk.steps() {
        acc.add(st.p * at([x[0] + st.dx, x[1] + st.dy]));
    }
    acc.add(-at(x));
    n_scale as f64 * acc.value()
}

/// `Δ_N ψ(x)`; exactly zero for constant `ψ`.
pub fn discrete_laplacian(psi: &TestFunction, n_scale: u64, walk: &StepDistribution, x: [i32; 2]) -> f64 {
    if psi.is_constant().is_some() {
        return 0.0;
    }
    discrete_laplacian_fn(|u| psi.eval(u), n_scale, walk, x)
}

/// One path of the decomposition for a single `ψ`.
#[derive(Clone, Debug, Serialize)]
pub struct DecompositionTrace {
    pub n_scale: u64,
    pub steps: usize,
    pub sigma2: f64,
    #[serde(skip)]
    pub stream: StreamKey,
    /// `Z_k`, `k = 0..=n`.
    pub z: Vec<f64>,
    /// `drift_k`, `k = 0..n`.
    pub drift: Vec<f64>,
    /// `ΔM_k`, `k = 0..n`.
    pub dm: Vec<f64>,
    /// `⟨M⟩_k`, `k = 0..=n`, with `⟨M⟩_0 = 0`.
    pub qv: Vec<f64>,
    /// `(Z_{k+1} − Z_k − drift_k − ΔM_k)` divided by the sum of the magnitudes
    /// of its four terms (or 0 when all vanish).
    pub residual: Vec<f64>,
}

impl DecompositionTrace {
    /// `M_k = Σ_{j<k} ΔM_j`, `k = 0..=n`.
    pub fn martingale(&self) -> Vec<f64> {
        let mut acc = CompensatedSum::new();
        let mut out = vec![0.0];
        for d in &self.dm {
            acc.add(*d);
            out.push(acc.value());
        }
        out
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// `⟨M⟩_{⌊Nt⌋}` at the end of the trace.
    pub fn qv_final(&self) -> f64 {
        *self.qv.last().expect("nonempty")
    }
}

/// `Σ_y g1(y) g2(y) (ψ1ψ2)(y/√N)`; with `g1 = g2`, `ψ1 = ψ2` this is the QV sum.
fn weighted_product(g1: &Grid, g2: &Grid, psi1: &TestFunction, psi2: &TestFunction, sqrt_n: f64) -> f64 {
    let b = g1.bbox().union(&g2.bbox());
    let mut acc = CompensatedSum::new();
    for p in b.points() {
        let (a, c) = (g1.get(p), g2.get(p));
        if a == 0.0 || c == 0.0 {
            continue;
        }
        let w = psi1.at_lattice(p, sqrt_n) * psi2.at_lattice(p, sqrt_n);
        acc.add(a * c * w);
    }
    acc.value()
}

struct Tracker<'a> {
    psi: &'a TestFunction,
    constant: bool,
    cache: LatticeCache<Box<dyn Fn([i32; 2]) -> f64 + 'a>>,
    trace: DecompositionTrace,
    qv: CompensatedSum,
}

/// Runs `steps` transfer steps and decomposes `Z(φ, ψ)` for every `ψ` in
/// `psis` on the same disorder. `observer` sees the field after each step.
pub fn decompose_field<E: Environment>(
    field: &mut PolymerField<E>,
    psis: &[TestFunction],
    steps: usize,
    mut observer: Option<&mut dyn FnMut(&PolymerField<E>) -> Result<()>>,
) -> Result<Vec<DecompositionTrace>> {
    if field.time() != 0 {
        return Err(Error::Domain("decomposition starts from a fresh field".into()));
    }
    let n_scale = field.n_scale();
    let nf = n_scale as f64;
    let sqrt_n = field.sqrt_n();
    let sigma2 = field.env().sigma2();
    let reach = field.walk().reach();
    let steps_list: Vec<(i32, i32, f64)> = field.walk().triples();
    let mut trackers: Vec<Tracker> = psis
        .iter()
        .map(|psi| {
            let f: Box<dyn Fn([i32; 2]) -> f64> = Box::new(move |p| psi.at_lattice(p, sqrt_n));
            Tracker {
                psi,
                constant: psi.is_constant().is_some(),
                cache: LatticeCache::new(f, 4 * reach.max(1) + 8),
                trace: DecompositionTrace {
                    n_scale,
                    steps,
                    sigma2,
                    stream: field.env().stream(),
                    z: vec![field.pair(psi)],
                    drift: Vec::with_capacity(steps),
                    dm: Vec::with_capacity(steps),
                    qv: vec![0.0],
                    residual: Vec::with_capacity(steps),
                },
                qv: CompensatedSum::new(),
            }
        })
        .collect();

    for _ in 0..steps {
        // Drift from W_k before stepping.
        let wk = field.w();
        let bk = wk.bbox();
        let h = bk.height();
        let mut drifts = Vec::with_capacity(trackers.len());
        for tr in trackers.iter_mut() {
            if tr.constant {
                drifts.push(0.0);
                continue;
            }
            tr.cache.ensure(bk.dilate(reach));
            let mut pp = CompensatedSum::new();
            let mut base = CompensatedSum::new();
            for (i, row) in wk.data().chunks_exact(h).enumerate() {
                let x = bk.x_min + i as i32;
                let own = tr.cache.segment(x, bk.y_min, h);
                let mut s0 = 0.0;
                for (w, v) in row.iter().zip(own) {
                    s0 += w * v;
                }
                base.add(s0);
                for &(dx, dy, p) in &steps_list {
                    let shifted = tr.cache.segment(x + dx, bk.y_min + dy, h);
                    let mut s = 0.0;
                    for (w, v) in row.iter().zip(shifted) {
                        s += w * v;
                    }
                    pp.add(p * s);
                }
            }
            drifts.push((pp.value() - base.value()) / nf);
        }

        field.step()?;
        let n = field.time() as u32;
        let wbar = field.wbar();
        let bb = wbar.bbox();
        let hb = bb.height();
        for (tr, drift) in trackers.iter_mut().zip(drifts) {
            tr.cache.ensure(bb);
            let mut dm = CompensatedSum::new();
            let mut qv = CompensatedSum::new();
            for (i, row) in wbar.data().chunks_exact(hb).enumerate() {
                let x = bb.x_min + i as i32;
                let own = tr.cache.segment(x, bb.y_min, hb);
                for (j, (wb, v)) in row.iter().zip(own).enumerate() {
                    if *wb == 0.0 {
                        continue;
                    }
                    let e = field.env().weight(n, [x, bb.y_min + j as i32]);
                    dm.add(wb * v * (e - 1.0));
                    qv.add(wb * wb * (v * v));
                }
            }
            let dm = dm.value() / nf;
            tr.qv.add(sigma2 * qv.value() / (nf * nf));
            let z_prev = *tr.trace.z.last().expect("seeded");
            let z = field.pair(tr.psi);
            let scale = z.abs() + z_prev.abs() + drift.abs() + dm.abs();
            let res = (z - z_prev) - drift - dm;
            tr.trace.residual.push(if scale > 0.0 { res / scale } else { 0.0 });
            tr.trace.z.push(z);
            tr.trace.drift.push(drift);
            tr.trace.dm.push(dm);
            tr.trace.qv.push(tr.qv.value());
        }
        if let Some(obs) = observer.as_mut() {
            obs(field)?;
        }
    }
    Ok(trackers.into_iter().map(|t| t.trace).collect())
}

/// Decomposition of `Z_{N;·}(φ, ψ)` up to `⌊Nt⌋`.
#[allow(clippy::too_many_arguments)]
pub fn decompose<E: Environment>(
    phi: &TestFunction,
    psi: &TestFunction,
    n_scale: u64,
    t: f64,
    walk: &StepDistribution,
    coupling: CriticalCoupling,
    env: E,
    opts: &FieldOptions,
) -> Result<DecompositionTrace> {
    let mut field = PolymerField::new(phi, n_scale, walk, coupling, env, opts)?;
    let steps = (n_scale as f64 * t).floor() as usize;
    Ok(decompose_field(&mut field, std::slice::from_ref(psi), steps, None)?.remove(0))
}

/// Recorded `W̄_k`, `k = 1..=n`, of one disorder stream.
#[derive(Clone, Debug)]
pub struct FieldPath {
    pub n_scale: u64,
    pub sigma2: f64,
    pub cov_scale: f64,
    pub stream: StreamKey,
    pub wbar: Vec<Grid>,
}

impl FieldPath {
    /// Steps `field` `steps` times, recording `W̄` after each step.
    pub fn record<E: Environment>(field: &mut PolymerField<E>, steps: usize) -> Result<Self> {
        let mut wbar = Vec::with_capacity(steps);
        for _ in 0..steps {
            field.step()?;
            wbar.push(field.wbar().clone());
        }
        Ok(Self {
            n_scale: field.n_scale(),
            sigma2: field.env().sigma2(),
            cov_scale: field.walk().cov_scale(),
            stream: field.env().stream(),
            wbar,
        })
    }

    pub fn steps(&self) -> usize {
        self.wbar.len()
    }
}

/// `⟨M(ψ)⟩_k` for `k = 0..=n` from a recorded path.
pub fn qv_process(path: &FieldPath, psi: &TestFunction) -> Vec<f64> {
    cross_qv(path, psi, path, psi).expect("same path")
}

/// `⟨M^{φ1}(ψ1), M^{φ2}(ψ2)⟩_k = (σ²/N²) Σ_{j≤k} Σ_y W̄¹_j W̄²_j ψ1ψ2`, for two
/// paths driven by the same disorder.
pub fn cross_qv(p1: &FieldPath, psi1: &TestFunction, p2: &FieldPath, psi2: &TestFunction) -> Result<Vec<f64>> {
    if p1.stream != p2.stream || p1.n_scale != p2.n_scale || p1.steps() != p2.steps() {
        return Err(Error::StreamMismatch);
    }
    let nf = p1.n_scale as f64;
    let sqrt_n = nf.sqrt();
    let mut acc = CompensatedSum::new();
    let mut out = vec![0.0];
    for (g1, g2) in p1.wbar.iter().zip(&p2.wbar) {
        acc.add(p1.sigma2 * weighted_product(g1, g2, psi1, psi2, sqrt_n) / (nf * nf));
        out.push(acc.value());
    }
    Ok(out)
}
