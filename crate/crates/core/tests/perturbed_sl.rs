use g2kit::associator_pde::{newton_solve, GraphState, NewtonOptions, Perturbation};
use g2kit::exterior::{Metric, PolyForm};
use g2kit::g2::{self, sample_associative, G2Structure};
use g2kit::perturbed_sl::*;
use g2kit::rng::sample_rng;
use g2kit::Poly;
use rand::Rng;
use rand_distr::StandardNormal;

/// Smallest singular value of the model symbol over unit covectors.
const CY_SYMBOL_FLOOR: f64 = 0.999;

fn beta_fixture(scale: f64) -> Perturbation {
    let mut b = PolyForm::zero(7, 4);
    for (idx, var) in [([0, 1, 2, 4], 0), ([0, 1, 2, 5], 1), ([0, 1, 2, 6], 2), ([0, 1, 2, 4], 4), ([0, 1, 5, 6], 5)] {
        b = b + PolyForm::term(7, &idx, Poly::var(var).scale(scale));
    }
    Perturbation::new(b).unwrap()
}

fn sl_plane(nodes: usize, periodic: bool) -> Patch {
    Patch::coordinate([3, 1, 5], nodes, periodic).unwrap()
}

#[test]
fn newton_graph_solves_the_perturbed_sl_equations() {
    let pert = beta_fixture(0.01);
    let solved = newton_solve(&GraphState::new(9, 1.0).unwrap(), &pert, &NewtonOptions::default()).unwrap();
    assert!(solved.converged);
    let setting = setting_from_perturbation(&pert).unwrap();
    let (patch, lambda) = patch_from_graph(&solved.state).unwrap();
    let e = equivalence_check(&lambda, &patch, &setting, 1e-8).unwrap();
    assert!(e.sl_max <= 1e-8 && e.assoc_max <= 1e-8, "{e:?}");
    // λ is not constant here, so this exercises the dλ∧ρ terms.
    assert!(lambda.values.iter().any(|v| v.abs() > 1e-5));
    let s = symbol_sweep(&lambda, &patch, &setting, 200, 17, 1e-8).unwrap();
    assert!(s.max_split_gap <= 1e-12, "{s:?}");
    assert!(s.min_singular > 0.5);
    // Off-shell: dropping the perturbation breaks both residuals.
    let flat = setting_from_perturbation(&Perturbation::zero()).unwrap();
    let e = equivalence_check(&lambda, &patch, &flat, 1e-8).unwrap();
    assert!(!e.sl_solution && !e.associative);
}

#[test]
fn equivalence_is_a_bi_implication_on_fixtures() {
    let cy = SlSetting::calabi_yau();
    let mut rng = sample_rng(2024, 0);
    let mut solutions = 0;
    for case in 0..20 {
        let nodes = 4 + case % 3;
        let patch = if case % 4 == 3 {
            Patch::coordinate([0, 2, 4], nodes, false).unwrap()
        } else {
            sl_plane(nodes, case % 2 == 0)
        };
        let lambda = match case % 5 {
            0 | 2 => MultiplierField::constant(&patch, rng.gen_range(-1.0..1.0)),
            1 => MultiplierField::affine(&patch, 0.0, std::array::from_fn(|_| rng.gen_range(-0.5..0.5))),
            3 if patch.periodic => MultiplierField::sin_bump(&patch, 0.1, [1, 0, 1]),
            _ => MultiplierField::affine(&patch, 0.3, [0.0, 0.0, 0.2]),
        };
        let e = equivalence_check(&lambda, &patch, &cy, 1e-10).unwrap();
        assert!(e.consistent, "case {case}: {e:?}");
        solutions += e.sl_solution as usize;
    }
    assert!(solutions > 3 && solutions < 17, "fixtures must mix solutions and non-solutions");
}

#[test]
fn residuals_are_invariant_under_grid_reparametrization() {
    let pert = beta_fixture(0.01);
    let setting = setting_from_perturbation(&pert).unwrap();
    let state = GraphState::from_fn(6, 1.0, |x| [0.1 * x[0] * x[1], 0.05 * x[2], -0.02 * x[0], 0.03 * x[1] * x[1]]).unwrap();
    let (patch, lambda) = patch_from_graph(&state).unwrap();
    let base = sl_residual(&lambda, &patch, &setting, 1.0).unwrap();
    for (perm, flip) in [([1, 0, 2], [false; 3]), ([2, 0, 1], [true, false, true]), ([0, 1, 2], [false, true, false])] {
        let (p2, old_of) = patch.reparametrize(perm, flip).unwrap();
        let r = sl_residual(&lambda.reindex(&old_of), &p2, &setting, 1.0).unwrap();
        assert!((r.r1_max - base.r1_max).abs() <= 1e-10 && (r.r2_max - base.r2_max).abs() <= 1e-10);
    }
}

#[test]
fn dirac_symbol_on_random_associative_planes() {
    let s = G2Structure::from_phi(&g2::phi0()).unwrap();
    let planes = sample_associative(&s, 100, 77);
    for (i, p) in planes.iter().enumerate() {
        let mut rng = sample_rng(78, i as u64);
        let alpha: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        // A random vector projected to the normal space.
        let mut n: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        for e in s.metric.orthonormalize(&[p.u.clone(), p.v.clone(), p.w.clone()], 1e-12).unwrap() {
            let c = s.metric.inner(&n, &e);
            n.iter_mut().zip(&e).for_each(|(x, y)| *x -= c * y);
        }
        let r = dirac_symbol_check(&s, p, alpha, &n, 1e-12).unwrap();
        assert!(r.pass, "plane {i}: defect {:.3e}", r.defect);
    }
}

#[test]
fn symbol_floor_on_the_model() {
    let cy = SlSetting::calabi_yau();
    let p = sl_plane(5, true);
    let s = symbol_sweep(&MultiplierField::constant(&p, 0.0), &p, &cy, 200, 5, 1e-10).unwrap();
    assert!(s.min_singular >= CY_SYMBOL_FLOOR && s.max_split_gap <= 1e-12);
}

#[test]
fn hodge_identity_for_random_gradients() {
    let mut rng = sample_rng(3, 0);
    for _ in 0..200 {
        let d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let n2: f64 = d.iter().map(|x| x * x).sum();
        let (w, c, h) = volume_densities(d).unwrap();
        assert!(h.abs() <= 1e-10 && (w - 1.0 - n2).abs() <= 1e-10 && (c - (1.0 + n2).sqrt()).abs() <= 1e-12);
    }
    let p = sl_plane(8, true);
    let r = volume_identity_check(&MultiplierField::sin_bump(&p, 0.3, [1, 2, 0]), &p, &Metric::identity(6)).unwrap();
    assert!(r.wedge_defect <= 1e-10 && r.hodge_defect <= 1e-10);
    assert!(r.wedge_density_max > r.classical_density_max);
}

#[test]
fn exact_term_vanishes_and_dirichlet_energy_converges() {
    let cy = SlSetting::calabi_yau();
    // A non-Lagrangian torus so that ω′ restricts nontrivially.
    let (amp, wave) = (0.2, [1, 1, 0]);
    let exact_energy = amp * amp * (2.0 * std::f64::consts::PI).powi(2) * 2.0 / 2.0;
    let mut errs = Vec::new();
    for m in [8, 16, 32] {
        let p = Patch::coordinate([0, 1, 2], m, true).unwrap();
        let r = volume_bound_check(&cy, &p, &MultiplierField::sin_bump(&p, amp, wave), 1.0, 0.0).unwrap();
        assert!(r.exact_term.abs() <= 10.0 / (m * m) as f64 && r.exact_term.abs() < 1e-12);
        assert!(r.pullback_defect < 1e-13);
        errs.push((r.dmu_l2_squared - exact_energy).abs());
    }
    for w in errs.windows(2) {
        assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.2, "{errs:?}");
    }
}

#[test]
fn volume_bound_with_sampled_taming_constant() {
    let cy = SlSetting::calabi_yau();
    let psi = cy.g2_at(&[0.0; 7]).unwrap();
    let t = g2::taming_estimate(&cy.phi_prime, &psi, 2000, 1).unwrap();
    let k = t.k_estimate.unwrap();
    assert!((k - 1.0).abs() < 1e-9);
    let p = sl_plane(8, true);
    let r = volume_bound_check(&cy, &p, &MultiplierField::constant(&p, 0.5), k, 1e-9).unwrap();
    assert!(r.pass && (r.lhs - 1.0).abs() < 1e-12);
    let r = volume_bound_check(&cy, &p, &MultiplierField::constant(&p, 0.5), 0.95 * k, 1e-9).unwrap();
    assert!(!r.pass && r.gap < 0.0);
}
