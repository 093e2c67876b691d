use shflab::analytics::iterated::{iterated_power_bound, phi1_first, phi_iterated, IteratedKernel};
use shflab::analytics::oracle::{
    first_moment_oracle, first_moment_quadrature, mollifier_log_limit, mollifier_log_limit_bump, variance_oracle,
    variance_oracle_with, VarianceQuadrature,
};
use shflab::analytics::special::{
    f_s, g_theta, g_theta_integral, g_theta_spatial, g_theta_truncated, FsMarch, GEnvelope, SpecialFnGrid, EULER_GAMMA,
    MARCH_STEP,
};
use shflab::testfn::TestFunction;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Simpson on dyadic panels `[2^{-j-1}, 2^{-j}]·b`, for integrable endpoint singularities at 0.
fn simpson_dyadic(b: f64, f: impl Fn(f64) -> f64) -> f64 {
    (0..70).map(|j| simpson(b * 0.5f64.powi(j + 1), b * 0.5f64.powi(j), 64, &f)).sum()
}

/// `∫_0^τ G_θ = ∫_0^∞ e^{(θ−γ)s} τ^s / Γ(s+1) ds` for `τ ≤ 1`.
fn ig_oracle(theta: f64, tau: f64) -> f64 {
    let l = tau.ln();
    let h = 0.002 / (1.0 + l.abs());
    let f = |s: f64| ((theta - EULER_GAMMA) * s + s * l - ln_gamma(s + 1.0)).exp();
    let mut acc = 0.0;
    let mut a = 0.0;
    loop {
        let part = simpson(a, a + 100.0 * h, 100, f);
        acc += part;
        a += 100.0 * h;
        if part < 1e-18 * acc && a > 1.0 {
            break acc;
        }
    }
}

#[test]
fn f_s_explicit_values() {
    let g = (-EULER_GAMMA).exp();
    for t in [1e-6, 0.01, 0.5, 1.0] {
        assert!((f_s(1.0, t).unwrap() - g).abs() <= 1e-14);
    }
    // Γ(3) = 2 and Γ(7/2) = 15√π/8.
    assert!((f_s(2.0, 1.0).unwrap() - 2.0 * (-2.0 * EULER_GAMMA).exp() / 2.0).abs() <= 1e-14);
    let s = 2.5;
    let expect = s * (-EULER_GAMMA * s).exp() / (15.0 * PI.sqrt() / 8.0);
    assert!((f_s(s, 1.0).unwrap() - expect).abs() <= 1e-13);
    let t = 0.3;
    assert!((f_s(s, t).unwrap() - expect * t.powf(s - 1.0)).abs() <= 1e-13);
    assert!(f_s(-1.0, 0.5).is_err() && f_s(1.0, 0.0).is_err());
}

#[test]
fn volterra_march_matches_closed_forms_for_s_one() {
    let g = (-EULER_GAMMA).exp();
    let m = FsMarch::new(1.0, 3.0).unwrap();
    for i in 1..=40 {
        let t = 1.0 + 0.05 * i as f64;
        // (1, 2]: e^{−γ}/t. (2, 3]: e^{−γ}(1 − 1/t − log(2(t − 1)/t)).
        let want = if t <= 2.0 { g / t } else { g * (1.0 - 1.0 / t - (2.0 * (t - 1.0) / t).ln()) };
        let got = m.eval(t).unwrap();
        assert!((got - want).abs() <= 1e-5 * want, "t = {t}: {got} vs {want}");
        assert!(got > 0.0);
    }
}

#[test]
fn f_s_is_positive_and_continuous_at_one() {
    for s in [0.2, 0.7, 1.0, 2.0, 3.0, 9.0] {
        let m = FsMarch::new(s, 4.0).unwrap();
        // With the (1+a)^{-2} memory kernel the continuation stays positive on
        // all of (1, 4] only for s ≤ 2; larger s keeps it on (1, 2].
        let t_pos = if s <= 2.0 { 4.0 } else { 2.0 };
        let n_pos = ((t_pos - 1.0) / MARCH_STEP).round() as usize + 1;
        assert!(m.grid_values()[..n_pos].iter().all(|v| *v > 0.0), "s = {s}");
        let at_one = f_s(s, 1.0).unwrap();
        // The memory term adds about f_s(1) δ^s, the explicit factor about (s − 1) δ f_s(1).
        let mut prev = f64::INFINITY;
        for d in [MARCH_STEP, MARCH_STEP / 8.0, 1e-6, 1e-9] {
            let gap = (m.eval(1.0 + d).unwrap() - at_one).abs();
            assert!(gap <= prev);
            assert!(gap <= 2.0 * at_one * (d.powf(s) + (s - 1.0).abs() * d), "s = {s}, delta = {d}");
            prev = gap;
        }
    }
}

#[test]
fn g_theta_ordering_and_small_t_law() {
    for t in [1e-5, 1e-2, 0.3, 1.0, 1.7] {
        let v: Vec<f64> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|th| g_theta(*th, t).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]), "t = {t}");
    }
    for theta in [-1.0, 0.0, 1.0] {
        let mut prev = f64::INFINITY;
        for t in [1e-3, 1e-4, 1e-5, 1e-7] {
            let l = (1.0f64 / t).ln();
            let r = t * l * l * g_theta(theta, t).unwrap() - 1.0;
            assert!(r.abs() < prev, "theta {theta}, t {t}");
            prev = r.abs();
            if theta != 0.0 {
                // The second-order term explains most of the gap.
                assert!((r - 2.0 * theta / l).abs() < 0.5 * r.abs());
            }
        }
    }
}

#[test]
fn g_theta_is_decreasing_and_below_its_envelope() {
    for theta in [-1.0, 0.0, 1.5] {
        let env = GEnvelope::fit(theta, 1.0).unwrap();
        let mut prev_g = f64::INFINITY;
        let mut prev_e = f64::INFINITY;
        for i in 0..=173 {
            // Off the fitting grid.
            let t = 10f64.powf(-11.7 + 0.0676 * i as f64).min(1.0);
            let g = g_theta(theta, t).unwrap();
            let e = env.eval(t);
            assert!(g <= e, "theta {theta}, t {t}");
            assert!(e < prev_e);
            // Strict decrease holds below the turning point of the largest θ.
            if t <= 0.05 {
                assert!(g < prev_g, "theta {theta}, t {t}");
            }
            prev_g = g;
            prev_e = e;
        }
    }
}

#[test]
fn g_theta_truncation_is_converged() {
    for theta in [-1.0, 0.0, 1.0, 3.0] {
        for t in [1e-5, 0.1, 1.0] {
            let full = g_theta(theta, t).unwrap();
            let a = g_theta_truncated(theta, t, 60.0).unwrap();
            let b = g_theta_truncated(theta, t, 120.0).unwrap();
            assert!((a - b).abs() <= 1e-10 * b);
            assert!((full - b).abs() <= 1e-10 * b);
        }
    }
    // The tabulated route for t > 1 is stable in its own s range.
    let a = SpecialFnGrid::new(2.0, 40.0).unwrap().g_theta(0.5, 1.6).unwrap();
    let b = SpecialFnGrid::new(2.0, 80.0).unwrap().g_theta(0.5, 1.6).unwrap();
    assert!((a - b).abs() <= 1e-10 * b);
}

#[test]
fn g_theta_integral_matches_independent_quadrature() {
    for theta in [-1.0, 0.0, 1.0] {
        for tau in [1e-6, 0.01, 0.4, 1.0] {
            let got = g_theta_integral(theta, tau).unwrap();
            let want = ig_oracle(theta, tau);
            assert!((got - want).abs() <= 1e-9 * want, "theta {theta}, tau {tau}: {got} vs {want}");
        }
    }
}

#[test]
fn spatial_kernel() {
    let (theta, t) = (0.3, 0.4);
    let g = g_theta(theta, t).unwrap();
    assert!((g_theta_spatial(theta, t, [0.0, 0.0]).unwrap() - g / (PI * t)).abs() <= 1e-15 * g);
    let a = g_theta_spatial(theta, t, [0.3, -0.7]).unwrap();
    for x in [[-0.3, 0.7], [0.7, 0.3], [-0.7, -0.3]] {
        assert!((g_theta_spatial(theta, t, x).unwrap() - a).abs() <= 1e-15 * a);
    }
    let mass = simpson(0.0, 6.0, 2000, |r| 2.0 * PI * r * g_theta_spatial(theta, t, [r, 0.0]).unwrap());
    assert!((mass - g).abs() <= 1e-10 * g);
    assert!(g_theta_spatial(theta, 0.0, [0.0, 0.0]).is_err());
}

#[test]
fn first_moment_limits() {
    let c = 0.75;
    let phi = TestFunction::bump([0.1, 0.0], 0.6);
    let one = TestFunction::constant(1.0);
    let mass = phi.integral().unwrap();
    assert!((first_moment_oracle(&phi, &one, 0.8, c).unwrap() - mass).abs() <= 1e-12 * mass);
    let g1 = TestFunction::gaussian([0.1, -0.2], 0.3);
    let g2 = TestFunction::gaussian([0.4, 0.3], 0.2);
    // t → 0⁺: ∫φψ = p_{0.5}(Δ).
    let d2 = 0.3f64.powi(2) + 0.5f64.powi(2);
    let overlap = (-d2 / (2.0 * 0.5)).exp() / (2.0 * PI * 0.5);
    assert!((first_moment_oracle(&g1, &g2, 1e-12, c).unwrap() - overlap).abs() <= 1e-10 * overlap);
    for t in [0.05, 0.5, 2.0] {
        let a = first_moment_oracle(&g1, &g2, t, c).unwrap();
        let b = first_moment_quadrature(&g1, &g2, t, c).unwrap();
        assert!((a - b).abs() <= 1e-8 * a);
    }
    let psi = TestFunction::gaussian([0.0, 0.2], 0.5);
    let near = first_moment_oracle(&phi, &psi, 1e-9, c).unwrap();
    let direct = phi.integrate_against(|x| psi.eval(x)).unwrap();
    assert!((near - direct).abs() <= 1e-6 * direct);
}

#[test]
fn variance_oracle_matches_independent_reduction() {
    let c = 0.75;
    let a = 0.25;
    let phi = TestFunction::gaussian([0.3, -0.1], a);
    for theta in [-1.0, 0.0, 1.0] {
        for t in [0.1, 0.5, 1.0] {
            // Var = ∫_0^t c IG(w)/(a + c(t − w)) dw.
            let want = simpson_dyadic(t, |w| c * ig_oracle(theta, w) / (a + c * (t - w)));
            let got = variance_oracle(&phi, t, theta, c).unwrap();
            assert!((got - want).abs() <= 1e-7 * want, "theta {theta}, t {t}: {got} vs {want}");
        }
    }
}

#[test]
fn variance_oracle_shape() {
    let phi = TestFunction::bump([0.0, 0.0], 0.5);
    assert_eq!(variance_oracle(&phi, 0.0, 0.0, 0.75).unwrap(), 0.0);
    let tiny = variance_oracle(&phi, 1e-8, 0.0, 0.75).unwrap();
    assert!(tiny > 0.0 && tiny < 1e-7);
    let mut prev = 0.0;
    for t in [0.01, 0.1, 0.3, 0.6, 1.0] {
        let v = variance_oracle(&phi, t, 0.0, 0.75).unwrap();
        assert!(v > prev);
        prev = v;
    }
    let by_theta: Vec<f64> = [-1.0, 0.0, 1.0].iter().map(|th| variance_oracle(&phi, 0.5, *th, 0.75).unwrap()).collect();
    assert!(by_theta.windows(2).all(|w| w[0] < w[1]));
    // Refining the outer grid at least halves the error each time.
    let g = TestFunction::gaussian([0.0, 0.0], 0.25);
    let q = |levels, order| variance_oracle_with(&g, 0.5, 0.0, 0.75, VarianceQuadrature { levels, order }).unwrap();
    let reference = q(40, 24);
    let errs: Vec<f64> = [(6, 4), (8, 6), (12, 8)].iter().map(|&(l, o)| (q(l, o) - reference).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] <= 0.5 * w[0]), "{errs:?}");
}

#[test]
fn iterated_kernels() {
    let ker = IteratedKernel::new(1.0, 6).unwrap();
    assert_eq!(ker.eval(0, 0.4).unwrap(), 1.0);
    assert_eq!(phi_iterated(0, 3.0, 0.4).unwrap(), 1.0);
    for u in [1e-8, 1e-4, 0.01, 0.3, 0.9, 5.0] {
        assert!((ker.eval(1, u).unwrap() - phi1_first(u)).abs() <= 1e-8 * phi1_first(u));
        // Second order from the closed first order, with s = x².
        let want = simpson_dyadic(1.0, |x| 2.0 / (x * x + u).sqrt() * phi1_first(x * x));
        let got = ker.eval(2, u).unwrap();
        assert!((got - want).abs() <= 1e-8 * want, "u = {u}: {got} vs {want}");
    }
    // φ_t^{(k)}(u) = φ_1^{(k)}(u/t).
    for t in [0.25, 2.0, 7.0] {
        let kt = IteratedKernel::new(t, 4).unwrap();
        for k in 1..=4 {
            for u in [1e-3, 0.07, 0.6] {
                let (a, b) = (kt.eval(k, u).unwrap(), ker.eval(k, u / t).unwrap());
                assert!((a - b).abs() <= 1e-8 * b, "t {t}, k {k}, u {u}");
            }
        }
    }
    assert!(IteratedKernel::new(1.0, 9).is_err());
    assert!(ker.eval(7, 0.5).is_err());
}

#[test]
fn iterated_kernel_power_bound() {
    let ker = IteratedKernel::new(1.0, 6).unwrap();
    for k in 0..=6 {
        for i in 1..200 {
            let v = i as f64 / 200.0;
            let val = ker.eval(k, v).unwrap();
            assert!(val <= iterated_power_bound(k, v), "k {k}, v {v}");
        }
        for v in [1e-12, 1e-8, 1e-4] {
            assert!(ker.eval(k, v).unwrap() <= iterated_power_bound(k, v));
        }
    }
}

#[test]
fn mollifier_limits() {
    let t = 1.0;
    let eps = [0.1, 1e-2, 1e-4, 1e-8, 1e-16];
    let one = TestFunction::constant(1.0);
    for (e, v) in mollifier_log_limit(&one, [0.0, 0.0], t, &eps).unwrap() {
        let want = ((t + e).ln() - e.ln()) / (-e.ln());
        assert!((v - want).abs() <= 1e-14 * want);
    }
    let psi = TestFunction::Gaussian { center: [0.2, 0.0], var: 0.3, weight: 1.0 };
    let x = [0.1, 0.1];
    let target = psi.eval(x);
    let vals = mollifier_log_limit(&psi, x, t, &eps).unwrap();
    let mut prev = f64::INFINITY;
    for (e, v) in &vals {
        // Bounded by the constant-ψ value times the sup norm.
        assert!(*v <= psi.sup_norm() * ((t + e).ln() - e.ln()) / (-e.ln()) + 1e-15);
        let gap = (v - target).abs();
        assert!(gap < prev, "eps {e}");
        prev = gap;
    }
    let f = TestFunction::bump([0.0, 0.0], 1.0);
    let vals = mollifier_log_limit_bump(&f, &one, t, &eps).unwrap();
    // The approach to 1 is at rate 1/log(1/ε): the rescaled gap settles.
    let mut prev = f64::INFINITY;
    let mut rescaled = Vec::new();
    for (e, v) in &vals {
        let gap = (v - 1.0).abs();
        assert!(gap < prev);
        prev = gap;
        rescaled.push(gap * -e.ln());
    }
    assert!(prev < 0.06);
    let (a, b) = (rescaled[rescaled.len() - 2], rescaled[rescaled.len() - 1]);
    assert!((a - b).abs() <= 0.05 * b, "{rescaled:?}");
    assert!(mollifier_log_limit_bump(&f, &psi, t, &eps).is_err());
}
