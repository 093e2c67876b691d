//! Tiny instances and golden comparisons shared by the integration tests.
#![allow(dead_code)]

use shflab::disorder::{CriticalCoupling, NoDisorder};
use shflab::harness::{brute_force_oracle, OracleReport, TinyInstance};
use shflab::lattice::Truncation;
use shflab::polymer::{FieldOptions, PolymerField};
use shflab::renewal::{discrete_variance_mass, RenewalTable};
use shflab::testfn::TestFunction;
use shflab::walk::{build_kernel_table, default_unit_covariance_walk, Step, StepDistribution};

/// Stay with probability 1/2, nearest neighbours 1/8 each.
pub fn lazy_nn_walk() -> StepDistribution {
    StepDistribution::new(vec![
        Step::new(0, 0, 0.5),
        Step::new(1, 0, 0.125),
        Step::new(-1, 0, 0.125),
        Step::new(0, 1, 0.125),
        Step::new(0, -1, 0.125),
    ])
    .unwrap()
}

/// `N = 4`: the indicator selects lattice origin only.
pub const ORIGIN: &str = "ind:-0.1,-0.1,0.1,0.1";
/// `N = 4`: the indicator selects `(0,0)` and `(1,0)`.
pub const TWO_SITES: &str = "ind:-0.1,-0.1,0.6,0.1";

pub struct Named {
    pub name: &'static str,
    pub inst: TinyInstance,
    pub sites: usize,
}

pub fn tiny_instances(beta: f64) -> Vec<Named> {
    let tf = |s: &str| TestFunction::parse(s).unwrap();
    vec![
        Named {
            name: "lazy nearest-neighbour, origin, two steps",
            inst: TinyInstance { walk: lazy_nn_walk(), phi: tf(ORIGIN), psi: tf("const:1"), n_scale: 4, steps: 2, beta },
            sites: 18,
        },
        Named {
            name: "lazy nearest-neighbour, two sites, one step, Gaussian psi",
            inst: TinyInstance {
                walk: lazy_nn_walk(),
                phi: tf(TWO_SITES),
                psi: tf("gauss:0.3,-0.2,0.7"),
                n_scale: 4,
                steps: 1,
                beta,
            },
            sites: 8,
        },
        Named {
            name: "lazy nearest-neighbour, two sites, one step, constant psi",
            inst: TinyInstance { walk: lazy_nn_walk(), phi: tf(TWO_SITES), psi: tf("const:2"), n_scale: 4, steps: 1, beta },
            sites: 8,
        },
        Named {
            name: "unit-covariance walk, origin, one step",
            inst: TinyInstance {
                walk: default_unit_covariance_walk(),
                phi: tf(ORIGIN),
                psi: tf("const:1"),
                n_scale: 4,
                steps: 1,
                beta,
            },
            sites: 12,
        },
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Worst relative discrepancies between enumeration and the formulas.
#[derive(Debug, Default)]
pub struct GoldenErrors {
    /// Transfer recursion driven by each sign pattern, against `Z_n` per pattern.
    pub dp: f64,
    /// `E Z_k` against the kernel pairing `(1/N) Σ φ_N(x) q_k(y − x) ψ_N(y)`.
    pub mean: f64,
    /// `Var Z_n` against the renewal formula (constant `ψ` only).
    pub variance: f64,
    /// `E⟨M⟩_n` against `Var Z_n` (constant `ψ` only).
    pub qv: f64,
    /// Conditional martingale properties of the increments.
    pub martingale: f64,
}

impl GoldenErrors {
    pub fn worst(&self) -> f64 {
        [self.dp, self.mean, self.variance, self.qv, self.martingale].into_iter().fold(0.0, f64::max)
    }
}

pub fn kernel_mean(inst: &TinyInstance, k: usize) -> f64 {
    let table = build_kernel_table(&inst.walk, k).unwrap();
    let q = table.slice(k).unwrap();
    let s = (inst.n_scale as f64).sqrt();
    let window = inst.phi.lattice_window(inst.n_scale).unwrap();
    let mut acc = 0.0;
    for x in window.points() {
        let f = inst.phi.at_lattice(x, s);
        if f == 0.0 {
            continue;
        }
        for (d, p) in q.iter() {
            acc += f * p * inst.psi.at_lattice([x[0] + d[0], x[1] + d[1]], s);
        }
    }
    acc / inst.n_scale as f64
}

pub fn golden_errors(inst: &TinyInstance) -> (OracleReport, GoldenErrors) {
    let rep = brute_force_oracle(inst).unwrap();
    let mut err = GoldenErrors::default();
    let opts = FieldOptions { window: None, truncation: Truncation::Exact };
    let coupling = CriticalCoupling::at_beta(inst.n_scale, inst.beta);
    let base = inst.pattern_env(0).unwrap();
    for pat in 0..rep.patterns {
        let env = base.with_pattern(pat as u32);
        let mut f = PolymerField::new(&inst.phi, inst.n_scale, &inst.walk, coupling, env, &opts).unwrap();
        for _ in 0..inst.steps {
            f.step().unwrap();
        }
        err.dp = err.dp.max(rel(f.pair(&inst.psi), rep.z_final[pat]));
    }
    for k in 0..=inst.steps {
        err.mean = err.mean.max(rel(rep.mean[k], kernel_mean(inst, k)));
    }
    if inst.psi.is_constant().is_some() {
        let n = inst.steps;
        let kernel = build_kernel_table(&inst.walk, n).unwrap();
        let sigma2 = shflab::disorder::sigma2_of_beta(inst.beta);
        let table = RenewalTable::totals(sigma2, &kernel.return_probabilities(), n).unwrap();
        let t = n as f64 / inst.n_scale as f64;
        let v = discrete_variance_mass(&inst.phi, &inst.psi, inst.n_scale, t, &table, &inst.walk, &opts).unwrap();
        if inst.beta == 0.0 {
            err.variance = rep.var.abs().max(v.abs());
            err.qv = rep.mean_qv.abs();
        } else {
            err.variance = rel(rep.var, v);
            err.qv = rel(rep.mean_qv, rep.var);
        }
    }
    err.martingale = rep.max_cond_mean_dm.max(rep.max_cond_qv_err);
    (rep, err)
}

/// Free field `W_n` against the exact kernel: `W_n = φ_N ∗ q_n`.
pub fn free_field_matches_kernel(inst: &TinyInstance) -> f64 {
    let opts = FieldOptions { window: None, truncation: Truncation::Exact };
    let mut f =
        PolymerField::new(&inst.phi, inst.n_scale, &inst.walk, CriticalCoupling::free(inst.n_scale), NoDisorder, &opts)
            .unwrap();
    for _ in 0..inst.steps {
        f.step().unwrap();
    }
    rel(f.pair(&inst.psi), kernel_mean(inst, inst.steps))
}
