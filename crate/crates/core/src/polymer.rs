//! Transfer-matrix evolution of the partition-function fields.
//!
//! `W̄_n(y) = Σ_z W_{n−1}(z) q_1(y − z)` and `W_n(y) = e_{n,y} W̄_n(y)`, started
//! from `W_0(y) = φ(y/√N)`. Disorder is indexed forward in time; the
//! time-reversed indexing of the backward representation has the same law.
//! The `1/N` normalization is applied only when pairing.

use crate::disorder::{CriticalCoupling, DisorderSpec, Environment};
use crate::error::{Error, Result};
use crate::lattice::{Grid, LatticeBox, Truncation};
use crate::numeric::CompensatedSum;
use crate::testfn::TestFunction;
use crate::walk::StepDistribution;

pub const OVERFLOW_GUARD: f64 = 1e300;

#[derive(Clone, Debug, Default)]
pub struct FieldOptions {
    /// Lattice window for `φ`; required when `φ` has unbounded support.
    pub window: Option<LatticeBox>,
    pub truncation: Truncation,
}

#[derive(Clone, Debug)]
pub struct PolymerField<E: Environment = DisorderSpec> {
    n: usize,
    n_scale: u64,
    walk: StepDistribution,
    triples: Vec<(i32, i32, f64)>,
    coupling: CriticalCoupling,
    env: E,
    truncation: Truncation,
    w: Grid,
    wbar: Grid,
}

pub fn init_field<E: Environment>(
    phi: &TestFunction,
    n_scale: u64,
    walk: &StepDistribution,
    coupling: CriticalCoupling,
    env: E,
    opts: &FieldOptions,
) -> Result<PolymerField<E>> {
    PolymerField::new(phi, n_scale, walk, coupling, env, opts)
}

impl<E: Environment> PolymerField<E> {
    pub fn new(
        phi: &TestFunction,
        n_scale: u64,
        walk: &StepDistribution,
        coupling: CriticalCoupling,
        env: E,
        opts: &FieldOptions,
    ) -> Result<Self> {
        let window = match opts.window {
            Some(w) => w,
            None => phi.lattice_window(n_scale)?,
        };
        let sqrt_n = (n_scale as f64).sqrt();
        let full = Grid::from_fn(window, |x| phi.at_lattice(x, sqrt_n));
        if full.data().iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::Domain("initial test function must be finite and nonnegative".into()));
        }
        let core = full.core_box(f64::MIN_POSITIVE).ok_or(Error::EmptySupport)?;
        Self::from_grid(full.crop(core), n_scale, walk, coupling, env, opts.truncation)
    }

    /// Field started from explicit lattice values `W_0 = φ_N`.
    pub fn from_grid(
        w0: Grid,
        n_scale: u64,
        walk: &StepDistribution,
        coupling: CriticalCoupling,
        env: E,
        truncation: Truncation,
    ) -> Result<Self> {
        if w0.data().iter().all(|v| *v == 0.0) {
            return Err(Error::EmptySupport);
        }
        Ok(Self {
            n: 0,
            n_scale,
            triples: walk.triples(),
            walk: walk.clone(),
            coupling,
            env,
            truncation,
            wbar: w0.clone(),
            w: w0,
        })
    }

    /// Advances from time `n` to `n + 1`.
    pub fn step(&mut self) -> Result<()> {
        let n = self.n + 1;
        let wbar = self.w.transfer(&self.triples, self.walk.reach());
        let keep = self.truncation.keep_box(&wbar);
        let wbar = wbar.crop(keep);
        let mut w = wbar.clone();
        self.env.weigh(n as u32, &mut w);
        let peak = w.max_abs();
        if !(peak <= OVERFLOW_GUARD) {
            return Err(Error::Overflow { step: n, value: peak });
        }
        self.n = n;
        self.w = w;
        self.wbar = wbar;
        Ok(())
    }

    pub fn time(&self) -> usize {
        self.n
    }

    pub fn n_scale(&self) -> u64 {
        self.n_scale
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n_scale as f64).sqrt()
    }

    pub fn walk(&self) -> &StepDistribution {
        &self.walk
    }

    pub fn coupling(&self) -> &CriticalCoupling {
        &self.coupling
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn bbox(&self) -> LatticeBox {
        self.w.bbox()
    }

    /// `W_n`.
    pub fn w(&self) -> &Grid {
        &self.w
    }

    /// `W̄_n`; equal to `W_0` at `n = 0`.
    pub fn wbar(&self) -> &Grid {
        &self.wbar
    }

    /// `Z_{N; n/N}(φ, ψ) = (1/N) Σ_y W_n(y) ψ(y/√N)`.
    pub fn pair(&self, psi: &TestFunction) -> f64 {
        pair_grid(&self.w, psi, self.n_scale)
    }

    /// The same pairing with `W̄_n`.
    pub fn pair_bar(&self, psi: &TestFunction) -> f64 {
        pair_grid(&self.wbar, psi, self.n_scale)
    }

    /// Atoms `(y/√N, W_n(y)/N)` over the box.
    pub fn density_snapshot(&self) -> Vec<([f64; 2], f64)> {
        let s = self.sqrt_n();
        let n = self.n_scale as f64;
        self.w.iter().map(|(p, v)| ([p[0] as f64 / s, p[1] as f64 / s], v / n)).collect()
    }
}

pub fn step<E: Environment>(field: &mut PolymerField<E>) -> Result<()> {
    field.step()
}

pub fn pair<E: Environment>(field: &PolymerField<E>, psi: &TestFunction) -> f64 {
    field.pair(psi)
}

pub(crate) fn pair_grid(g: &Grid, psi: &TestFunction, n_scale: u64) -> f64 {
    let s = (n_scale as f64).sqrt();
    let mut acc = CompensatedSum::new();
    for (p, v) in g.iter() {
        acc.add(v * psi.at_lattice(p, s));
    }
    acc.value() / n_scale as f64
}

/// Values of a lattice function on a box that only ever grows.
pub(crate) struct LatticeCache<F: Fn([i32; 2]) -> f64> {
    f: F,
    grid: Option<Grid>,
    margin: i32,
}

impl<F: Fn([i32; 2]) -> f64> LatticeCache<F> {
    pub fn new(f: F, margin: i32) -> Self {
        Self { f, grid: None, margin }
    }

    pub fn ensure(&mut self, bbox: LatticeBox) {
        let covered = self.grid.as_ref().is_some_and(|g| g.bbox().contains_box(&bbox));
        if !covered {
            let target = match &self.grid {
                Some(g) => g.bbox().union(&bbox.dilate(self.margin)),
                None => bbox.dilate(self.margin),
            };
            self.grid = Some(Grid::from_fn(target, &self.f));
        }
    }

    /// Values at `(x, y_min..y_min+len)`; requires a prior [`ensure`](Self::ensure).
    pub fn segment(&self, x: i32, y_min: i32, len: usize) -> &[f64] {
        let g = self.grid.as_ref().expect("ensure first");
        let row = g.row(x);
        let c0 = (y_min - g.bbox().y_min) as usize;
        &row[c0..c0 + len]
    }
}
