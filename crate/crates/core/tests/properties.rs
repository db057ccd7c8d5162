use g2kit::associator_pde::{residual, norm_inf, GraphState, Perturbation};
use g2kit::exterior::{hodge_star, parse_form, Labels, MultiIndex, PolyForm};
use g2kit::g2::{self, metric_from_phi, G2Structure, MetricVerdict};
use g2kit::octonion::{cross2, cross3, oct_associator, Octonion};
use g2kit::stable6::{self, Kind6};
use g2kit::{Form, Metric, Poly};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn form_from(dim: usize, degree: usize, c: &[f64]) -> Form {
    let mut f = Form::zero(dim, degree);
    for (mi, &x) in MultiIndex::all(dim, degree).iter().zip(c) {
        f.add_term(&mi.to_vec(), x);
    }
    f
}

fn any_form(dim: usize, degree: usize) -> impl Strategy<Value = Form> {
    let n = MultiIndex::all(dim, degree).len();
    coeffs(n).prop_map(move |c| form_from(dim, degree, &c))
}

/// I + a perturbation with entries in (−s, s), kept well conditioned.
fn gl(n: usize, s: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-s..s, n * n)
        .prop_map(move |v| DMatrix::identity(n, n) + DMatrix::from_vec(n, n, v))
        .prop_filter("well conditioned", |a| {
            let sv = a.clone().svd(false, false).singular_values;
            sv.min() > 0.2
        })
}

fn octonion() -> impl Strategy<Value = Octonion> {
    prop::array::uniform8(-3.0f64..3.0).prop_map(Octonion)
}

fn imaginary() -> impl Strategy<Value = Octonion> {
    prop::array::uniform7(-3.0f64..3.0).prop_map(|v| Octonion::from_im(&v))
}

fn close(a: &Form, b: &Form, tol: f64) -> bool {
    (a.clone() + b.scale(-1.0)).max_abs() <= tol * b.max_abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn octonion_norm_is_multiplicative(x in octonion(), y in octonion()) {
        prop_assert!(((x * y).norm() - x.norm() * y.norm()).abs() <= 1e-12 * (1.0 + x.norm() * y.norm()));
    }

    #[test]
    fn half_associator_is_triple_cross_product(x in imaginary(), y in imaginary(), z in imaginary()) {
        let lhs = oct_associator(x, y, z).scale(0.5);
        let rhs = cross3(x, y, z).im();
        prop_assert!((lhs - rhs).max_abs() <= 1e-12 * (1.0 + x.norm() * y.norm() * z.norm()));
    }

    #[test]
    fn cross_product_is_orthogonal_with_area_norm(x in imaginary(), y in imaginary()) {
        let c = cross2(x, y);
        let scale = 1.0 + x.norm2() * y.norm2();
        prop_assert!(c.dot(&x).abs() <= 1e-12 * scale && c.dot(&y).abs() <= 1e-12 * scale);
        prop_assert!((c.norm2() - (x.norm2() * y.norm2() - x.dot(&y).powi(2))).abs() <= 1e-11 * scale);
    }

    #[test]
    fn render_parse_round_trip(f in any_form(6, 3)) {
        let back = parse_form(&f.render(Labels::OneBased), 6, Labels::OneBased).unwrap().form;
        prop_assert_eq!(back, f);
    }

    #[test]
    fn wedge_is_graded_commutative(a in any_form(7, 2), b in any_form(7, 3), c in any_form(7, 1)) {
        prop_assert!(close(&a.wedge(&b).unwrap(), &b.wedge(&a).unwrap(), 1e-12));
        prop_assert!(close(&b.wedge(&c).unwrap(), &c.wedge(&b).unwrap().scale(-1.0), 1e-12));
        let l = a.wedge(&b).unwrap().wedge(&c).unwrap();
        let r = a.wedge(&b.wedge(&c).unwrap()).unwrap();
        prop_assert!(close(&l, &r, 1e-12));
    }

    #[test]
    fn double_hodge_star_sign(a in gl(7, 0.4), f in any_form(7, 3), orient in prop::sample::select(vec![1i8, -1])) {
        let g = Metric::new(a.transpose() * &a).unwrap();
        let ss = hodge_star(&g, orient, &hodge_star(&g, orient, &f).unwrap()).unwrap();
        prop_assert!(close(&ss, &f, 1e-9));
    }

    #[test]
    fn d_squared_vanishes(c in prop::collection::vec(-1.0f64..1.0, 12)) {
        // Quadratic coefficients on a handful of basis 2-forms of ℝ⁷.
        let mut a = PolyForm::zero(7, 2);
        for (k, w) in c.chunks(3).enumerate() {
            let p = Poly::var(k).scale(w[0]).add(&Poly::var(k + 2).try_mul(&Poly::var(6 - k)).unwrap().scale(w[1]))
                .add(&Poly::constant(w[2]));
            a = a + PolyForm::term(7, &[k, 3 + k % 3], p);
        }
        prop_assert!(a.exterior_derivative().exterior_derivative().max_abs_coeff() <= 1e-12);
    }

    #[test]
    fn stable_3form_round_trips_under_gl(a in gl(6, 0.5)) {
        let rho = stable6::model_rho().pullback_linear(&a).unwrap();
        prop_assert_eq!(stable6::classify_3form(&rho).unwrap().kind, Kind6::Positive3);
        let j = stable6::almost_complex(&rho).unwrap();
        prop_assert!((&j * &j + DMatrix::identity(6, 6)).abs().max() <= 1e-9);
        let hat = stable6::hitchin_dual_3form(&rho).unwrap();
        let hathat = stable6::hitchin_dual_3form(&hat).unwrap();
        prop_assert!(close(&hathat, &rho.scale(-1.0), 1e-9));
    }

    #[test]
    fn stable_4form_round_trips_under_gl(a in gl(6, 0.5)) {
        let omega = stable6::model_omega().pullback_linear(&a).unwrap();
        let tau = omega.wedge(&omega).unwrap().scale(0.5);
        let hat = stable6::hitchin_dual_4form(&tau).unwrap();
        prop_assert!(close(&hat.wedge(&hat).unwrap().scale(0.5), &tau, 1e-9));
    }

    #[test]
    fn g2_metric_is_gl_equivariant(a in gl(7, 0.3)) {
        let phi = g2::phi0().pullback_linear(&a).unwrap();
        let expect = a.transpose() * &a;
        match metric_from_phi(&phi).unwrap() {
            MetricVerdict::Definite { metric, orientation, .. } => {
                prop_assert_eq!(orientation, a.determinant().signum() as i8);
                let gap = (0..7).flat_map(|i| (0..7).map(move |j| (i, j)))
                    .map(|(i, j)| (metric[i][j] - expect[(i, j)]).abs()).fold(0.0, f64::max);
                prop_assert!(gap <= 1e-9, "gap {}", gap);
            }
            v => prop_assert!(false, "{:?}", v),
        }
        let s = G2Structure::from_phi(&phi).unwrap();
        let back = G2Structure::from_psi(&s.psi, s.orientation).unwrap();
        prop_assert!(close(&back.phi, &phi, 1e-9));
        prop_assert!(g2::six_g_vol_defect(&s).unwrap() <= 1e-9 * expect.norm().powi(3).max(1.0));
    }

    #[test]
    fn linear_graphs_are_exact_solutions(s in -1.0f64..1.0, k in -1.0f64..1.0, q in prop::array::uniform4(-1.0f64..1.0)) {
        let st = GraphState::from_fn(4, 1.0, |x| [q[0] + k * x[0], q[1] + s * x[1], q[2] + s * x[0], q[3] + k * x[1]]).unwrap();
        prop_assert!(norm_inf(&residual(&st, &Perturbation::zero())) <= 1e-12);
    }
}
