//! Step laws of finite-support symmetric walks on `Z²`, their exact n-step
//! kernels `q_n`, return probabilities and local-limit diagnostics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::lattice::{Grid, Truncation};
use crate::numeric::CompensatedSum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub dx: i32,
    pub dy: i32,
    pub p: f64,
}

impl Step {
    pub const fn new(dx: i32, dy: i32, p: f64) -> Self {
        Self { dx, dy, p }
    }
}

/// A validated step law: symmetric, irreducible, aperiodic, covariance `c·I`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepDistribution {
    steps: Vec<Step>,
    cov_scale: f64,
    reach: i32,
}

#[derive(Deserialize)]
struct WalkFile {
    step: Vec<Step>,
}

impl StepDistribution {
    pub fn new(mut steps: Vec<Step>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidWalk(m));
        if steps.is_empty() {
            return bad("no steps".into());
        }
        let mut law: HashMap<(i32, i32), f64> = HashMap::new();
        for s in &steps {
            if !(s.p.is_finite() && s.p > 0.0 && s.p <= 1.0) {
                return bad(format!("probability {} of step ({}, {}) not in (0, 1]", s.p, s.dx, s.dy));
            }
            if law.insert((s.dx, s.dy), s.p).is_some() {
                return bad(format!("duplicate step ({}, {})", s.dx, s.dy));
            }
        }
        let total: f64 = crate::numeric::compensated_sum(steps.iter().map(|s| s.p));
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("probabilities sum to {total}"));
        }
        for s in &steps {
            match law.get(&(-s.dx, -s.dy)) {
                Some(&q) if (q - s.p).abs() <= 1e-15 => {}
                _ => return bad(format!("step ({}, {}) has no mirror of equal weight", s.dx, s.dy)),
            }
        }
        let mean_x: f64 = steps.iter().map(|s| s.p * s.dx as f64).sum();
        let mean_y: f64 = steps.iter().map(|s| s.p * s.dy as f64).sum();
        if mean_x.abs() > 1e-14 || mean_y.abs() > 1e-14 {
            return bad(format!("mean displacement ({mean_x}, {mean_y})"));
        }
        let cxx: f64 = steps.iter().map(|s| s.p * (s.dx * s.dx) as f64).sum();
        let cyy: f64 = steps.iter().map(|s| s.p * (s.dy * s.dy) as f64).sum();
        let cxy: f64 = steps.iter().map(|s| s.p * (s.dx * s.dy) as f64).sum();
        if (cxx - cyy).abs() > 1e-12 || cxy.abs() > 1e-12 || cxx <= 0.0 {
            return bad(format!("covariance [[{cxx}, {cxy}], [{cxy}, {cyy}]] is not a positive multiple of I"));
        }
        if !generates_lattice(&steps) {
            return bad("steps do not generate Z² (reducible walk)".into());
        }
        let period = period(&steps);
        if period != 1 {
            return bad(format!("walk has period {period}"));
        }
        steps.sort_by_key(|s| (s.dx, s.dy));
        let reach = steps.iter().map(|s| s.dx.abs().max(s.dy.abs())).max().unwrap_or(0);
        Ok(Self { steps, cov_scale: 0.5 * (cxx + cyy), reach })
    }

    /// The walk with `P(±1,0) = P(0,±1) = 1/8`, `P(±1,±1) = 1/16`,
    /// `P(±2,0) = P(0,±2) = 1/16`; covariance exactly `I`.
    pub fn default_unit_covariance() -> Self {
        let mut steps = Vec::with_capacity(12);
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            steps.push(Step::new(dx, dy, 0.125));
        }
        for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1), (2, 0), (-2, 0), (0, 2), (0, -2)] {
            steps.push(Step::new(dx, dy, 0.0625));
        }
        Self::new(steps).expect("default walk is valid")
    }

    /// Lazy version: move with probability `rho` according to `self`, otherwise stay.
    pub fn lazy(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(out_of_range("lazy move probability", rho, "(0, 1]"));
        }
        let mut steps: Vec<Step> = self
            .steps
            .iter()
            .filter(|s| (s.dx, s.dy) != (0, 0))
            .map(|s| Step::new(s.dx, s.dy, rho * s.p))
            .collect();
        let stay = 1.0 - rho * (1.0 - self.prob(0, 0));
        if stay > 0.0 {
            steps.push(Step::new(0, 0, stay));
        }
        Self::new(steps)
    }

    /// Parses `default`, `lazy:<rho>` (lazy default walk) or a path to a TOML
    /// file with `[[step]]` tables holding `dx`, `dy`, `p`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "default" {
            return Ok(Self::default_unit_covariance());
        }
        if let Some(rho) = spec.strip_prefix("lazy:") {
            let rho: f64 = rho
                .parse()
                .map_err(|_| Error::Config(format!("bad lazy walk parameter {rho:?}")))?;
            return Self::default_unit_covariance().lazy(rho);
        }
        let text = std::fs::read_to_string(Path::new(spec))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: WalkFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::new(file.step)
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn prob(&self, dx: i32, dy: i32) -> f64 {
        self.steps.iter().find(|s| s.dx == dx && s.dy == dy).map_or(0.0, |s| s.p)
    }

    /// The scalar `c` with covariance `c·I`.
    pub fn cov_scale(&self) -> f64 {
        self.cov_scale
    }

    /// Largest sup-norm of a step.
    pub fn reach(&self) -> i32 {
        self.reach
    }

    pub fn triples(&self) -> Vec<(i32, i32, f64)> {
        self.steps.iter().map(|s| (s.dx, s.dy, s.p)).collect()
    }

    /// `E[cos(k·ξ)]`; real because the law is symmetric.
    pub fn characteristic(&self, k: [f64; 2]) -> f64 {
        self.steps.iter().map(|s| s.p * (k[0] * s.dx as f64 + k[1] * s.dy as f64).cos()).sum()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

// The subgroup spanned by integer vectors has index gcd of the 2×2 minors.
fn generates_lattice(steps: &[Step]) -> bool {
    let v: Vec<(i64, i64)> = steps
        .iter()
        .filter(|s| (s.dx, s.dy) != (0, 0))
        .map(|s| (s.dx as i64, s.dy as i64))
        .collect();
    let mut g = 0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            g = gcd(g, v[i].0 * v[j].1 - v[i].1 * v[j].0);
        }
    }
    g == 1
}

fn period(steps: &[Step]) -> i64 {
    let support: Vec<(i32, i32)> = steps.iter().map(|s| (s.dx, s.dy)).collect();
    let mut diameter = 0;
    for a in &support {
        for b in &support {
            diameter = diameter.max((a.0 - b.0).abs().max((a.1 - b.1).abs()));
        }
    }
    let horizon = (2 * diameter).max(2) as usize;
    let mut reach: HashSet<(i32, i32)> = HashSet::from([(0, 0)]);
    let mut g = 0;
    for n in 1..=horizon {
        reach = reach
            .iter()
            .flat_map(|&(x, y)| support.iter().map(move |&(dx, dy)| (x + dx, y + dy)))
            .collect();
        if reach.contains(&(0, 0)) {
            g = gcd(g, n as i64);
        }
    }
    g
}

pub fn default_unit_covariance_walk() -> StepDistribution {
    StepDistribution::default_unit_covariance()
}

/// `p_{c t}(x) = exp(−|x|²/(2ct)) / (2π c t)`.
pub fn heat_kernel(t: f64, x: [f64; 2], cov_scale: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel time {t} must be positive")));
    }
    if !(cov_scale > 0.0) {
        return Err(Error::Domain(format!("covariance scale {cov_scale} must be positive")));
    }
    let v = cov_scale * t;
    Ok((-(x[0] * x[0] + x[1] * x[1]) / (2.0 * v)).exp() / (2.0 * PI * v))
}

#[inline]
pub(crate) fn gauss2(var: f64, x: [f64; 2]) -> f64 {
    (-(x[0] * x[0] + x[1] * x[1]) / (2.0 * var)).exp() / (2.0 * PI * var)
}

/// Which slices a [`KernelTable`] retains.
#[derive(Clone, Debug, Default)]
pub enum SliceSelection {
    #[default]
    All,
    Only(BTreeSet<usize>),
}

impl SliceSelection {
    fn keeps(&self, n: usize) -> bool {
        match self {
            SliceSelection::All => true,
            SliceSelection::Only(set) => set.contains(&n),
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelOptions {
    pub keep: SliceSelection,
    pub truncation: Truncation,
    /// Cap on stored plus working cells.
    pub cell_cap: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { keep: SliceSelection::All, truncation: Truncation::Exact, cell_cap: 60_000_000 }
    }
}

/// Exact n-step kernels `q_n` for `n ≤ n_max`, plus `Σ_x q_n(x)² = q_{2n}(0)`
/// for every `n ≤ n_max` whether or not slice `n` is kept.
#[derive(Clone, Debug)]
pub struct KernelTable {
    walk: StepDistribution,
    n_max: usize,
    slices: BTreeMap<usize, Grid>,
    collision: Vec<f64>,
    truncation: Truncation,
}

pub fn build_kernel_table(walk: &StepDistribution, n_max: usize) -> Result<KernelTable> {
    KernelTable::build(walk, n_max, &KernelOptions::default())
}

impl KernelTable {
    pub fn build(walk: &StepDistribution, n_max: usize, opts: &KernelOptions) -> Result<Self> {
        let r = walk.reach() as usize;
        if opts.truncation == Truncation::Exact {
            let side = |n: usize| (2 * r * n + 1).pow(2);
            let stored: usize = (0..=n_max).filter(|&n| opts.keep.keeps(n)).map(side).sum();
            let needed = stored + side(n_max);
            if needed > opts.cell_cap {
                return Err(Error::ResourceLimit { what: "kernel table", needed, cap: opts.cell_cap });
            }
        }
        let triples = walk.triples();
        let mut slices = BTreeMap::new();
        let mut collision = Vec::with_capacity(n_max + 1);
        let mut current = Grid::point_mass([0, 0]);
        let mut stored = 0usize;
        for n in 0..=n_max {
            if n > 0 {
                current = current.transfer(&triples, walk.reach());
                let keep = opts.truncation.keep_box(&current);
                current = current.crop(keep);
            }
            collision.push(current.sum_sq());
            if opts.keep.keeps(n) {
                stored += current.bbox().len();
                if stored + current.bbox().len() > opts.cell_cap {
                    return Err(Error::ResourceLimit {
                        what: "kernel table",
                        needed: stored + current.bbox().len(),
                        cap: opts.cell_cap,
                    });
                }
                slices.insert(n, current.clone());
            }
        }
        Ok(Self { walk: walk.clone(), n_max, slices, collision, truncation: opts.truncation })
    }

    pub fn walk(&self) -> &StepDistribution {
        &self.walk
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn slice(&self, n: usize) -> Option<&Grid> {
        self.slices.get(&n)
    }

    pub fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        self.slices.keys().copied()
    }

    /// `q_n(x)`; `None` if slice `n` was not kept.
    pub fn q(&self, n: usize, x: [i32; 2]) -> Option<f64> {
        self.slices.get(&n).map(|g| g.get(x))
    }

    /// `q_{2n}(0)` for `n ≤ n_max`, via `Σ_x q_n(x)²`.
    pub fn return_probability(&self, n: usize) -> Option<f64> {
        self.collision.get(n).copied()
    }

    pub fn return_probabilities(&self) -> ReturnProbabilities {
        ReturnProbabilities { q2n0: self.collision.clone() }
    }
}

/// `R_N = Σ_{n=1}^{N} q_{2n}(0)`; needs `N ≤ n_max`.
pub fn collision_mass(table: &KernelTable, n_scale: usize) -> Result<f64> {
    table.return_probabilities().collision_mass(n_scale)
}

/// `sup_x |q_n(x) − p_{cn}(x)|` over the box of slice `n`.
pub fn llt_deviation(table: &KernelTable, n: usize) -> Result<f64> {
    if n == 0 || n > table.n_max() {
        return Err(out_of_range("n", n, &format!("1..={}", table.n_max())));
    }
    let slice = table
        .slice(n)
        .ok_or_else(|| out_of_range("n", n, "a kept slice of the kernel table"))?;
    let var = table.walk().cov_scale() * n as f64;
    Ok(slice
        .iter()
        .map(|(p, q)| (q - gauss2(var, [p[0] as f64, p[1] as f64])).abs())
        .fold(0.0, f64::max))
}

/// Return probabilities `q_{2n}(0)` for `n = 0..=n_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnProbabilities {
    q2n0: Vec<f64>,
}

impl ReturnProbabilities {
    pub fn from_values(q2n0: Vec<f64>) -> Self {
        Self { q2n0 }
    }

    /// Trapezoid quadrature of `(2π)^{-2} ∫ φ(k)^{2n} dk` on an `M×M` periodic
    /// grid. The rule is exact up to aliasing from `|x| ≥ M`, which is kept
    /// below `e^{-50}` of the peak; grid points whose power has dropped under
    /// `e^{-92}` are discarded.
    pub fn spectral(walk: &StepDistribution, n_max: usize) -> Self {
        let c = walk.cov_scale();
        let need = 10.0 * (2.0 * n_max.max(1) as f64 * c).sqrt() + 4.0 * walk.reach() as f64;
        let m = (need.ceil() as usize).next_power_of_two().max(64);
        let h = 2.0 * PI / m as f64;
        let mut sq: Vec<f64> = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let f = walk.characteristic([i as f64 * h, j as f64 * h]);
                sq.push(f * f);
            }
        }
        sq.sort_unstable_by(|a, b| b.total_cmp(a));
        let norm = 1.0 / (m * m) as f64;
        let ln_floor = -92.0;
        let mut power = sq.clone();
        let mut end = sq.len();
        let mut q2n0 = Vec::with_capacity(n_max + 1);
        q2n0.push(1.0);
        for n in 1..=n_max {
            while end > 0 && (sq[end - 1] <= 0.0 || n as f64 * sq[end - 1].ln() < ln_floor) {
                end -= 1;
            }
            let mut acc = CompensatedSum::new();
            for (pw, &a) in power[..end].iter_mut().zip(&sq[..end]) {
                acc.add(*pw);
                *pw *= a;
            }
            q2n0.push(acc.value() * norm);
        }
        Self { q2n0 }
    }

    pub fn n_max(&self) -> usize {
        self.q2n0.len() - 1
    }

    /// `q_{2n}(0)`.
    pub fn get(&self, n: usize) -> f64 {
        self.q2n0[n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q2n0
    }

    pub fn collision_mass(&self, n_scale: usize) -> Result<f64> {
        if n_scale > self.n_max() {
            return Err(out_of_range("N", n_scale, &format!("0..={}", self.n_max())));
        }
        Ok(crate::numeric::compensated_sum(self.q2n0[1..=n_scale].iter().copied()))
    }
}
