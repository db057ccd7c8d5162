use g2kit::associator_pde::*;
use g2kit::exterior::PolyForm;
use g2kit::octonion::psi_octonion;
use g2kit::rng::sample_rng;
use g2kit::Poly;
use rand::Rng;
use std::time::Instant;

fn linear_solution(s: f64, a: f64, q0: [f64; 4]) -> impl Fn([f64; 3]) -> [f64; 4] {
    move |x| [q0[0] + a * x[0], q0[1] + s * x[1], q0[2] + s * x[0], q0[3] + a * x[1]]
}

/// 0.01·(x₀dx₀₁₂₄ + x₁dx₀₁₂₅ + x₂dx₀₁₂₆ + x₄dx₀₁₂₄ + x₅dx₀₁₅₆): closed, O(r).
fn beta_fixture(scale: f64) -> Perturbation {
    let mut b = PolyForm::zero(7, 4);
    for (idx, var) in [([0, 1, 2, 4], 0), ([0, 1, 2, 5], 1), ([0, 1, 2, 6], 2), ([0, 1, 2, 4], 4), ([0, 1, 5, 6], 5)] {
        b = b + PolyForm::term(7, &idx, Poly::var(var).scale(scale));
    }
    Perturbation::new(b).unwrap()
}

fn random_state(cells: usize, amp: f64, seed: u64) -> GraphState {
    let mut rng = sample_rng(seed, 0);
    let mut s = GraphState::new(cells, 1.0).unwrap();
    for q in s.f.iter_mut() {
        *q = std::array::from_fn(|_| amp * rng.gen_range(-1.0..1.0));
    }
    s
}

#[test]
fn beta_fixture_is_closed_and_vanishes_at_origin() {
    let p = beta_fixture(0.01);
    assert!(p.is_closed(0.0) && p.vanishes_at_origin());
    assert!((p.magnitude() - 0.01).abs() < 1e-15);
}

#[test]
fn residual_matches_frame_covector() {
    // R(f) = −(ψ₀ + β)(u, v, w, ·) on the ℍe block, independently of the
    // D/σ/β̂ decomposition.
    let pert = beta_fixture(0.05);
    let s = random_state(5, 0.3, 7);
    let r = residual(&s, &pert);
    for (k, &node) in s.interior_nodes().iter().enumerate() {
        let psi = psi_octonion() + pert.beta.eval_at(&s.graph_point(node));
        let [u, v, w] = s.frame(node);
        let xi = psi.eval_free_last(&[&u, &v, &w]);
        for q in 0..4 {
            assert!((r[k][q] + xi[3 + q]).abs() < 1e-13, "node {node} q {q}");
        }
    }
}

#[test]
fn residual_zero_iff_frames_associative() {
    let zero = Perturbation::zero();
    for (i, (s, a)) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.8), (-0.3, 0.4), (1.2, -0.7)].iter().enumerate() {
        let st = GraphState::from_fn(4, 1.0, linear_solution(*s, *a, [0.1 * i as f64, 0.0, 0.2, -0.1])).unwrap();
        assert!(norm_inf(&residual(&st, &zero)) < 1e-13);
        assert!(frame_associator_max(&st, &zero).unwrap() < 1e-13);
    }
    for seed in 0..5 {
        let st = random_state(4, 0.2, seed);
        assert!(norm_inf(&residual(&st, &zero)) > 1e-3);
        assert!(frame_associator_max(&st, &zero).unwrap() > 1e-3);
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let pert = if seed % 2 == 0 { beta_fixture(0.05) } else { Perturbation::zero() };
        let s = random_state(4, 0.4, 100 + seed);
        let j = jacobian(&s, &pert);
        let mut rng = sample_rng(seed, 1);
        let dir: Vec<f64> = (0..s.unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x0 = s.interior_values();
        let at = |t: f64| {
            let mut st = s.clone();
            st.set_interior(&x0.iter().zip(&dir).map(|(x, d)| x + t * d).collect::<Vec<_>>());
            residual(&st, &pert).into_iter().flatten().collect::<Vec<f64>>()
        };
        let (rp, rm) = (at(eps), at(-eps));
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let jd = j.apply(&dir);
        let num: f64 = fd.iter().zip(&jd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = jd.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    assert!(worst <= 1e-6, "relative FD gap {worst:.3e}");
}

#[test]
fn jacobian_at_constant_state_is_the_dirac_stencil_and_symmetric() {
    let s = GraphState::from_fn(6, 1.0, |_| [0.3, 0.1, -0.2, 0.5]).unwrap();
    let j = jacobian(&s, &Perturbation::zero());
    assert_eq!(j.max_abs_diff(&dirac_matrix(&s)), 0.0);
    assert_eq!(j.max_abs_diff(&j.transpose()), 0.0);
}

#[test]
fn newton_recovers_linear_graph() {
    let start = Instant::now();
    let exact = GraphState::from_fn(17, 1.0, linear_solution(0.6, 0.3, [0.2, -0.1, 0.0, 0.4])).unwrap();
    let f0 = GraphState::new(17, 1.0).unwrap().with_boundary_of(&exact).unwrap();
    let r = newton_solve(&f0, &Perturbation::zero(), &NewtonOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(r.converged && r.residual_inf <= 1e-10, "{:?}", r.trace);
    assert!(r.iterations <= 5, "{} iterations", r.iterations);
    let err = r.state.f.iter().zip(&exact.f).flat_map(|(a, b)| (0..4).map(move |q| (a[q] - b[q]).abs())).fold(0.0, f64::max);
    assert!(err < 1e-9, "distance to the linear graph {err:.3e}");
    assert!(secs < 60.0);
}

#[test]
fn newton_with_closed_perturbation() {
    let pert = beta_fixture(0.01);
    let f0 = GraphState::new(9, 1.0).unwrap();
    let r = newton_solve(&f0, &pert, &NewtonOptions::default()).unwrap();
    assert!(r.converged, "{:?}", r.trace);
    assert!(r.state.max_df() > 1e-4, "the perturbation must bend the graph");
    assert!(frame_associator_max(&r.state, &pert).unwrap() <= 1e-8);
    // Quadratic tail: r_{k+1} ≤ C r_k² on the last steps.
    let t: Vec<f64> = r.trace.iter().map(|e| e.residual_inf).collect();
    for w in t.windows(2).skip(1) {
        if w[1] > 1e-14 {
            assert!(w[1] <= 10.0 * w[0] * w[0] + 1e-13, "{t:?}");
        }
    }
}

#[test]
fn exact_solution_residual_is_second_order() {
    // f = u + v·k with u + iv = (x₁ + ix₂)³: holomorphic, f³ ≡ 0.
    let cubic = |x: [f64; 3]| {
        let (a, b) = (x[0], x[1]);
        [a * a * a - 3.0 * a * b * b, 0.0, 0.0, 3.0 * a * a * b - b * b * b]
    };
    let res: Vec<f64> = [9, 17, 33]
        .iter()
        .map(|&m| norm_inf(&residual(&GraphState::from_fn(m, 1.0, cubic).unwrap(), &Perturbation::zero())))
        .collect();
    for w in res.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((rate - 2.0).abs() < 0.25, "observed rate {rate} from {res:?}");
    }
}

#[test]
fn symbol_approaches_identity_as_df_shrinks() {
    let mut last = f64::INFINITY;
    for amp in [0.2, 0.1, 0.05, 0.025] {
        let s = random_state(4, amp, 3);
        let (_, rep) = linearized_l(&s, &beta_fixture(amp / 10.0), 40, 9);
        assert!(rep.max_distance <= 8.0 * rep.max_df, "{} vs {}", rep.max_distance, rep.max_df);
        assert!(rep.max_distance < last);
        assert!(rep.min_eigenvalue > 0.0);
        last = rep.max_distance;
    }
}

#[test]
fn linearized_operator_at_zero_is_dirac_squared() {
    let s = GraphState::new(6, 1.0).unwrap();
    let (l, _) = linearized_l(&s, &Perturbation::zero(), 1, 0);
    let d = dirac_matrix(&s);
    assert_eq!(l.max_abs_diff(&d.matmul(&d)), 0.0);
}
