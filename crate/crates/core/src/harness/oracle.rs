//! Exhaustive enumeration over every disorder sign pattern of a tiny
//! space-time instance.
//!
//! The enumeration does not use the transfer recursion: for each pattern it
//! sums over every walk path `x_0 → … → x_n` the product
//! `φ_N(x_0) Π p(x_k − x_{k−1}) Π e_{k, x_k}`. Each pattern has probability
//! `2^{−S}` where `S` is the number of space-time sites reachable by a path.

use std::collections::BTreeMap;

use crate::disorder::{lambda_of_beta, sigma2_of_beta, Environment, StreamKey};
use crate::error::{Error, Result};
use crate::lattice::Grid;
use crate::numeric::compensated_sum;
use crate::testfn::TestFunction;
use crate::walk::StepDistribution;

pub const MAX_SITES: usize = 20;

/// A tiny instance: lattice start `φ_N`, pairing `ψ`, `n` steps at scale `N`.
#[derive(Clone, Debug)]
pub struct TinyInstance {
    pub walk: StepDistribution,
    pub phi: TestFunction,
    pub psi: TestFunction,
    pub n_scale: u64,
    pub steps: usize,
    pub beta: f64,
}

/// Site list and the environment of one sign pattern.
#[derive(Clone, Debug)]
pub struct PatternEnv {
    index: BTreeMap<(u32, [i32; 2]), usize>,
    pattern: u32,
    up: f64,
    down: f64,
    beta: f64,
}

impl PatternEnv {
    /// The same site list under another pattern.
    pub fn with_pattern(&self, pattern: u32) -> Self {
        Self { pattern, ..self.clone() }
    }
}

impl Environment for PatternEnv {
    fn weight(&self, n: u32, x: [i32; 2]) -> f64 {
        match self.index.get(&(n, x)) {
            Some(&i) if self.pattern >> i & 1 == 1 => self.up,
            Some(_) => self.down,
            // Unreachable sites carry zero field; any value works.
            None => 1.0,
        }
    }

    fn sigma2(&self) -> f64 {
        sigma2_of_beta(self.beta)
    }

    fn stream(&self) -> StreamKey {
        StreamKey { seed: u64::MAX, replica: self.pattern as u64, beta_bits: self.beta.to_bits() }
    }
}

/// Exact moments by enumeration.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub sites: usize,
    pub patterns: usize,
    /// `E Z_k(φ, ψ)`, `k = 0..=n`.
    pub mean: Vec<f64>,
    /// `Var Z_n(φ, ψ)`.
    pub var: f64,
    /// `max |E[ΔM_k | F_k]|` over `k` and conditioning patterns.
    pub max_cond_mean_dm: f64,
    /// `max |E[ΔM_k² | F_k] − (σ²/N²) Σ W̄_{k+1}² ψ²|` (relative to the QV increment).
    pub max_cond_qv_err: f64,
    /// `E⟨M⟩_n`.
    pub mean_qv: f64,
    /// `Z_n` for every pattern, in pattern order.
    pub z_final: Vec<f64>,
}

#[derive(Clone)]
struct Path {
    start: [i32; 2],
    weight: f64,
    sites: Vec<[i32; 2]>,
}

impl TinyInstance {
    fn start(&self) -> Result<Grid> {
        let window = self.phi.lattice_window(self.n_scale)?;
        let s = (self.n_scale as f64).sqrt();
        Ok(Grid::from_fn(window, |x| self.phi.at_lattice(x, s)))
    }

    fn paths(&self, start: &Grid) -> Vec<Path> {
        let mut paths: Vec<Path> = start
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(p, v)| Path { start: p, weight: v, sites: Vec::new() })
            .collect();
        for _ in 0..self.steps {
            let mut next = Vec::with_capacity(paths.len() * self.walk.steps().len());
            for path in &paths {
                let here = *path.sites.last().unwrap_or(&path.start);
                for st in self.walk.steps() {
                    let mut sites = path.sites.clone();
                    sites.push([here[0] + st.dx, here[1] + st.dy]);
                    next.push(Path { start: path.start, weight: path.weight * st.p, sites });
                }
            }
            paths = next;
        }
        paths
    }

    /// Space-time sites `(k, x)`, `1 ≤ k ≤ n`, visited by some path.
    pub fn sites(&self) -> Result<Vec<(u32, [i32; 2])>> {
        let start = self.start()?;
        let mut set = std::collections::BTreeSet::new();
        for p in self.paths(&start) {
            for (k, x) in p.sites.iter().enumerate() {
                set.insert(((k + 1) as u32, *x));
            }
        }
        Ok(set.into_iter().collect())
    }

    /// Environment of pattern `pattern` (bit `i` = sign of site `i` in
    /// [`sites`](Self::sites) order).
    pub fn pattern_env(&self, pattern: u32) -> Result<PatternEnv> {
        let index = self.sites()?.into_iter().enumerate().map(|(i, s)| (s, i)).collect();
        let lam = lambda_of_beta(self.beta);
        Ok(PatternEnv {
            index,
            pattern,
            up: (self.beta - lam).exp(),
            down: (-self.beta - lam).exp(),
            beta: self.beta,
        })
    }
}

/// Enumerates all `2^S` sign patterns.
pub fn brute_force_oracle(inst: &TinyInstance) -> Result<OracleReport> {
    let start = inst.start()?;
    let paths = inst.paths(&start);
    let sites = inst.sites()?;
    let s_count = sites.len();
    if s_count > MAX_SITES {
        return Err(Error::TooManySites { sites: s_count, limit: MAX_SITES });
    }
    let index: BTreeMap<(u32, [i32; 2]), usize> = sites.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    // Site indices along each path, and the first index at each time layer.
    let path_sites: Vec<Vec<usize>> = paths
        .iter()
        .map(|p| p.sites.iter().enumerate().map(|(k, x)| index[&((k + 1) as u32, *x)]).collect())
        .collect();
    let layer_end: Vec<usize> =
        (0..=inst.steps).map(|k| sites.iter().filter(|(n, _)| *n as usize <= k).count()).collect();

    let nf = inst.n_scale as f64;
    let sqrt_n = nf.sqrt();
    let lam = lambda_of_beta(inst.beta);
    let (up, down) = ((inst.beta - lam).exp(), (-inst.beta - lam).exp());
    let sigma2 = sigma2_of_beta(inst.beta);
    let psi_at = |p: &Path, k: usize| -> f64 {
        let x = if k == 0 { p.start } else { p.sites[k - 1] };
        inst.psi.at_lattice(x, sqrt_n)
    };

    let patterns = 1usize << s_count;
    let n = inst.steps;
    let psi_site: Vec<f64> = sites.iter().map(|(_, x)| inst.psi.at_lattice(*x, sqrt_n)).collect();
    // z[k][pattern] = Z_k; zbar[k][pattern] = (1/N) Σ W̄_k ψ for k ≥ 1.
    let mut z = vec![vec![0.0; patterns]; n + 1];
    let mut zbar = vec![vec![0.0; patterns]; n + 1];
    let mut qv_inc = vec![vec![0.0; patterns]; n + 1];
    let mut wbar = vec![0.0; s_count];
    for pat in 0..patterns {
        let e = |i: usize| if pat >> i & 1 == 1 { up } else { down };
        for k in 0..=n {
            let mut zk = 0.0;
            let mut zb = 0.0;
            wbar.iter_mut().for_each(|v| *v = 0.0);
            for (p, ps) in paths.iter().zip(&path_sites) {
                // Prefix weight up to x_k without e_{k, x_k}. Each prefix is
                // repeated once per continuation, whose probabilities sum to
                // one, so summing over full paths gives the prefix marginal.
                let mut wb = p.weight;
                for &i in &ps[..k.saturating_sub(1)] {
                    wb *= e(i);
                }
                let full = if k == 0 { wb } else { wb * e(ps[k - 1]) };
                let v = psi_at(p, k);
                zk += full * v;
                zb += wb * v;
                if k > 0 {
                    wbar[ps[k - 1]] += wb;
                }
            }
            z[k][pat] = zk / nf;
            zbar[k][pat] = zb / nf;
            if k > 0 {
                let s2: f64 = wbar.iter().zip(&psi_site).map(|(w, p)| w * w * p * p).sum();
                qv_inc[k][pat] = sigma2 * s2 / (nf * nf);
            }
        }
    }
    let pf = patterns as f64;
    let mean: Vec<f64> = z.iter().map(|zk| compensated_sum(zk.iter().copied()) / pf).collect();
    let var = compensated_sum(z[n].iter().map(|v| (v - mean[n]).powi(2))) / pf;

    // Conditional moments of ΔM_k = Z_{k+1} − Z̄_{k+1}, given the signs of
    // layers ≤ k: average over the bits of layer k+1 only.
    let mut max_mean = 0.0f64;
    let mut max_qv = 0.0f64;
    for k in 0..n {
        let (lo, hi) = (layer_end[k], layer_end[k + 1]);
        let mask_next: usize = ((1usize << hi) - 1) ^ ((1usize << lo) - 1);
        let mut groups: BTreeMap<usize, (f64, f64, f64, f64)> = BTreeMap::new();
        for pat in 0..patterns {
            let key = pat & !mask_next;
            let dm = z[k + 1][pat] - zbar[k + 1][pat];
            let g = groups.entry(key).or_insert((0.0, 0.0, 0.0, 0.0));
            g.0 += dm;
            g.1 += dm * dm;
            g.2 += qv_inc[k + 1][pat];
            g.3 += 1.0;
        }
        for (s1, s2, q, c) in groups.values() {
            max_mean = max_mean.max((s1 / c).abs());
            let scale = (q / c).abs().max(f64::MIN_POSITIVE);
            max_qv = max_qv.max((s2 / c - q / c).abs() / scale);
        }
    }
    let mean_qv = compensated_sum((1..=n).flat_map(|k| qv_inc[k].iter().copied())) / pf;
    Ok(OracleReport {
        sites: s_count,
        patterns,
        mean,
        var,
        max_cond_mean_dm: max_mean,
        max_cond_qv_err: max_qv,
        mean_qv,
        z_final: z[n].clone(),
    })
}
