use proptest::prelude::*;
use shflab::walk::{
    build_kernel_table, collision_mass, default_unit_covariance_walk, heat_kernel, llt_deviation, KernelOptions,
    KernelTable, ReturnProbabilities, SliceSelection, StepDistribution,
};
use std::f64::consts::PI;

fn walks() -> Vec<StepDistribution> {
    let d = default_unit_covariance_walk();
    vec![d.clone(), d.lazy(0.25).unwrap(), StepDistribution::from_spec("lazy:0.6").unwrap()]
}

#[test]
fn default_walk_step_law() {
    let w = default_unit_covariance_walk();
    let total: f64 = w.steps().iter().map(|s| s.p).sum();
    assert_eq!(total, 4.0 / 8.0 + 4.0 / 16.0 + 4.0 / 16.0);
    let vx: f64 = w.steps().iter().map(|s| s.p * (s.dx * s.dx) as f64).sum();
    let vy: f64 = w.steps().iter().map(|s| s.p * (s.dy * s.dy) as f64).sum();
    let cxy: f64 = w.steps().iter().map(|s| s.p * (s.dx * s.dy) as f64).sum();
    assert_eq!((vx, vy, cxy), (1.0, 1.0, 0.0));
    for s in w.steps() {
        assert_eq!(w.prob(-s.dx, -s.dy), s.p);
    }
}

#[test]
fn second_return_probability() {
    let t = build_kernel_table(&default_unit_covariance_walk(), 2).unwrap();
    let sq: f64 = default_unit_covariance_walk().steps().iter().map(|s| s.p * s.p).sum();
    assert!((sq - 0.09375).abs() < 1e-17);
    assert!((t.q(2, [0, 0]).unwrap() - 0.09375).abs() < 1e-16);
    assert!((collision_mass(&t, 1).unwrap() - 0.09375).abs() < 1e-16);
    assert_eq!(collision_mass(&t, 0).unwrap(), 0.0);
    assert!(collision_mass(&t, 3).is_err());
}

#[test]
fn slices_are_symmetric_probability_laws_with_bounded_support() {
    for w in walks() {
        let t = build_kernel_table(&w, 40).unwrap();
        for n in 0..=40 {
            let s = t.slice(n).unwrap();
            assert!((s.sum() - 1.0).abs() < 1e-12);
            let r = w.reach() * n as i32;
            for (p, v) in s.iter() {
                assert!(v >= 0.0);
                assert!((v - t.q(n, [-p[0], -p[1]]).unwrap()).abs() <= 1e-14 * v);
                if v > 0.0 {
                    assert!(p[0].abs() <= r && p[1].abs() <= r);
                }
            }
            if n >= 2 {
                assert!(t.q(n, [0, 0]).unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn spectral_and_convolution_return_probabilities_agree() {
    for w in walks() {
        let t = build_kernel_table(&w, 200).unwrap();
        let a = t.return_probabilities();
        let b = ReturnProbabilities::spectral(&w, 200);
        for n in 0..=200 {
            let s = t.slice(n).unwrap().sum_sq();
            assert!((a.get(n) - s).abs() <= 1e-15 * s);
            assert!((a.get(n) - b.get(n)).abs() <= 1e-12 * a.get(n), "n = {n}");
        }
    }
}

#[test]
fn collision_mass_grows_like_log_over_four_pi() {
    let w = default_unit_covariance_walk();
    let q = ReturnProbabilities::spectral(&w, 1 << 14);
    let mut prev = f64::INFINITY;
    for k in 8..=14 {
        let n = 1usize << k;
        let ratio = q.collision_mass(n).unwrap() / ((n as f64).ln() / (4.0 * PI));
        let gap = (ratio - 1.0).abs();
        assert!(gap < prev, "N = {n}: ratio {ratio}");
        prev = gap;
    }
}

#[test]
fn heat_kernel_identities() {
    assert!((heat_kernel(1.0, [0.0, 0.0], 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-17);
    assert!(heat_kernel(-1.0, [0.0, 0.0], 1.0).is_err());
    for &t in &[0.1, 1.0, 3.7] {
        for i in -4..=4 {
            for j in -4..=4 {
                let x = [0.3 * i as f64, 0.45 * j as f64];
                let p = heat_kernel(t, x, 1.0).unwrap();
                let lhs = p * p;
                let rhs = heat_kernel(t / 2.0, x, 1.0).unwrap() / (4.0 * PI * t);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs);
                let s = heat_kernel(4.0 * t, [2.0 * x[0], 2.0 * x[1]], 1.0).unwrap();
                assert!((s - p / 4.0).abs() <= 1e-15 * p);
            }
        }
    }
    // A walk with covariance c·I compares to p_{ct}.
    let a = heat_kernel(2.0, [0.5, 0.1], 0.25).unwrap();
    let b = heat_kernel(0.5, [0.5, 0.1], 1.0).unwrap();
    assert!((a - b).abs() <= 1e-15 * b);
}

#[test]
fn local_limit_deviation() {
    let w = default_unit_covariance_walk();
    let keep = [1usize, 8, 16, 32, 64, 128, 256, 512].into_iter().collect();
    let opts = KernelOptions { keep: SliceSelection::Only(keep), ..Default::default() };
    let t = KernelTable::build(&w, 512, &opts).unwrap();
    let one = llt_deviation(&t, 1).unwrap();
    let direct = t
        .slice(1)
        .unwrap()
        .iter()
        .map(|(p, q)| (q - heat_kernel(1.0, [p[0] as f64, p[1] as f64], 1.0).unwrap()).abs())
        .fold(0.0, f64::max);
    assert_eq!(one, direct);
    let ns = [8usize, 16, 32, 64, 128, 256, 512];
    let scaled: Vec<f64> = ns.iter().map(|&n| llt_deviation(&t, n).unwrap() * (n * n) as f64).collect();
    let first = scaled[0];
    for (n, s) in ns.iter().zip(&scaled) {
        assert!(*s <= 2.0 * first, "n = {n}: n²·deviation = {s}, n = 8 gives {first}");
    }
    for &n in &[16usize, 32, 64, 128] {
        assert!(llt_deviation(&t, 4 * n).unwrap() <= llt_deviation(&t, n).unwrap());
    }
    assert!(llt_deviation(&t, 0).is_err());
    assert!(llt_deviation(&t, 513).is_err());
}

#[test]
fn invalid_walks_are_rejected() {
    assert!(StepDistribution::from_spec("lazy:1.5").is_err());
    assert!(StepDistribution::from_toml("[[step]]\ndx = 1\ndy = 0\np = 1.0\n").is_err());
    assert!(StepDistribution::from_spec("lazy:x").is_err());
}

#[test]
fn kernel_table_cell_cap() {
    let opts = KernelOptions { cell_cap: 500, ..Default::default() };
    assert!(KernelTable::build(&default_unit_covariance_walk(), 20, &opts).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chapman_kolmogorov(m in 0usize..12, n in 0usize..12, x in -10i32..=10, y in -10i32..=10, lazy in 0.0f64..0.9) {
        let w = default_unit_covariance_walk().lazy(lazy).unwrap();
        let t = build_kernel_table(&w, m + n).unwrap();
        let qm = t.slice(m).unwrap();
        let mut acc = 0.0;
        for (z, v) in qm.iter() {
            acc += v * t.q(n, [x - z[0], y - z[1]]).unwrap_or(0.0);
        }
        let direct = t.q(m + n, [x, y]).unwrap_or(0.0);
        prop_assert!((acc - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300);
    }

    #[test]
    fn squared_slice_mass_is_return_probability(n in 0usize..30, lazy in 0.0f64..0.9) {
        let w = default_unit_covariance_walk().lazy(lazy).unwrap();
        let t = build_kernel_table(&w, 2 * n).unwrap();
        let lhs = t.slice(n).unwrap().sum_sq();
        let rhs = t.q(2 * n, [0, 0]).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * rhs);
    }
}
