mod common;

use common::*;
use shflab::harness::{brute_force_oracle, TinyInstance, MAX_SITES};
use shflab::testfn::TestFunction;
use shflab::Error;

#[test]
fn site_counts_are_as_designed() {
    for n in tiny_instances(0.4) {
        let sites = n.inst.sites().unwrap().len();
        assert_eq!(sites, n.sites, "{}", n.name);
        assert!(sites <= MAX_SITES);
    }
}

#[test]
fn enumeration_matches_formulas() {
    for beta in [0.3, 0.8] {
        for n in tiny_instances(beta) {
            let (_, e) = golden_errors(&n.inst);
            assert!(e.worst() <= 1e-12, "{} at beta {beta}: {e:?}", n.name);
        }
    }
}

#[test]
fn zero_beta_reduces_to_kernel_sums() {
    for n in tiny_instances(0.0) {
        let (rep, e) = golden_errors(&n.inst);
        assert!(e.worst() <= 1e-12, "{}: {e:?}", n.name);
        assert!(rep.z_final.iter().all(|z| (z - rep.z_final[0]).abs() <= 1e-15));
        assert!(free_field_matches_kernel(&n.inst) <= 1e-12);
    }
}

#[test]
fn one_step_single_site_by_hand() {
    // From the origin at N = 4: Z_1(φ, 1) = (1/4) Σ_s p(s) e_{1,s}, mean 1/4.
    let beta: f64 = 0.5;
    let inst = TinyInstance {
        walk: lazy_nn_walk(),
        phi: TestFunction::parse(ORIGIN).unwrap(),
        psi: TestFunction::constant(1.0),
        n_scale: 4,
        steps: 1,
        beta,
    };
    let rep = brute_force_oracle(&inst).unwrap();
    assert_eq!(rep.sites, 5);
    assert!((rep.mean[1] - 0.25).abs() < 1e-15);
    // Var = (1/16) Σ_s p(s)² tanh²β, Σ p² = 1/4 + 4/64.
    let expected = (0.25 + 4.0 / 64.0) * beta.tanh().powi(2) / 16.0;
    assert!((rep.var - expected).abs() < 1e-15 * expected.max(1.0));
}

#[test]
fn size_guard() {
    let inst = TinyInstance {
        walk: lazy_nn_walk(),
        phi: TestFunction::parse(ORIGIN).unwrap(),
        psi: TestFunction::constant(1.0),
        n_scale: 4,
        steps: 3,
        beta: 0.5,
    };
    assert!(matches!(brute_force_oracle(&inst), Err(Error::TooManySites { sites: 43, limit: 20 })));
}
