//! G₂ structures on ℝ⁷: the metric of a stable 3-form, 4-form stability,
//! G₂-pairs lifted from ℝ⁶, associative planes and taming estimates.
//!
//! On the cylinder ℝ × M axis 0 is t and axes 1…6 carry M.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::exterior::{hodge_star, parse_form, Form, Labels, Metric, MultiIndex};
use crate::rng::sample_rng;
use crate::stable6;
use crate::{Error, Result};

/// φ₀ = dx123 + dx145 + dx167 + dx246 − dx257 − dx347 − dx356 on x₁…x₇.
pub fn phi0() -> Form {
    parse_form("dx123 + dx145 + dx167 + dx246 - dx257 - dx347 - dx356", 7, Labels::OneBased)
        .unwrap()
        .form
}

/// ψ₀ = *φ₀ for the Euclidean metric and standard orientation.
pub fn psi0() -> Form {
    parse_form(
        "dx4567 + dx2367 + dx2345 + dx1357 - dx1346 - dx1256 - dx1247",
        7,
        Labels::OneBased,
    )
    .unwrap()
    .form
}

/// Relative eigenvalue floor for calling a B-matrix definite.
pub const DEFINITE_TOL: f64 = 1e-10;

fn basis7(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; 7];
    v[i] = 1.0;
    v
}

/// B_uv·dx₀…₆ = (1/6)(u⌟φ)∧(v⌟φ)∧φ on basis vectors.
pub fn b_matrix(phi: &Form) -> Result<DMatrix<f64>> {
    if phi.dim() != 7 || phi.degree() != 3 {
        return Err(Error::pre("expected a 3-form on ℝ⁷"));
    }
    let contractions: Vec<Form> = (0..7).map(|i| phi.interior(&basis7(i))).collect::<Result<_>>()?;
    let mut b = DMatrix::zeros(7, 7);
    for u in 0..7 {
        let left = contractions[u].wedge(phi)?;
        for v in u..7 {
            let c = left.wedge(&contractions[v])?.top_coeff() / 6.0;
            b[(u, v)] = c;
            b[(v, u)] = c;
        }
    }
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum MetricVerdict {
    Definite {
        metric: Vec<Vec<f64>>,
        vol_coeff: f64,
        /// +1 when φ is positive for dx₀…₆, −1 for the reversed orientation.
        orientation: i8,
    },
    Degenerate {
        /// A vector u whose B(u,u) has the wrong sign or vanishes.
        witness: Vec<f64>,
        b_eigenvalues: Vec<f64>,
    },
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Normalizes a definite B to g = B/(det B)^{1/9} (real odd root), or finds
/// a witness of indefiniteness.
fn metric_from_b(b: &DMatrix<f64>) -> std::result::Result<(DMatrix<f64>, i8), (Vec<f64>, Vec<f64>)> {
    let eig = SymmetricEigen::new(b.clone());
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let scale = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pos = vals.iter().all(|&x| x > DEFINITE_TOL * scale);
    let neg = vals.iter().all(|&x| x < -DEFINITE_TOL * scale);
    if scale > 0.0 && (pos || neg) {
        let det = b.determinant();
        return Ok((b / det.cbrt().cbrt(), if pos { 1 } else { -1 }));
    }
    // Majority sign by trace; prefer a coordinate witness.
    let expect = if b.trace() >= 0.0 { 1.0 } else { -1.0 };
    let coordinate = (0..b.nrows()).find(|&i| expect * b[(i, i)] <= DEFINITE_TOL * scale);
    let witness = match coordinate {
        Some(i) => basis7(i),
        None => {
            let k = (0..vals.len())
                .min_by(|&x, &y| (expect * vals[x]).total_cmp(&(expect * vals[y])))
                .unwrap();
            eig.eigenvectors.column(k).iter().copied().collect()
        }
    };
    Err((witness, vals))
}

pub fn metric_from_phi(phi: &Form) -> Result<MetricVerdict> {
    let b = b_matrix(phi)?;
    Ok(match metric_from_b(&b) {
        Ok((g, orientation)) => MetricVerdict::Definite {
            vol_coeff: g.determinant().sqrt(),
            metric: rows(&g),
            orientation,
        },
        Err((witness, b_eigenvalues)) => MetricVerdict::Degenerate {
            witness,
            b_eigenvalues,
        },
    })
}

#[derive(Clone, Debug)]
pub struct G2Structure {
    pub phi: Form,
    pub psi: Form,
    pub metric: Metric,
    pub vol_coeff: f64,
    pub orientation: i8,
}

impl G2Structure {
    pub fn from_phi(phi: &Form) -> Result<Self> {
        let b = b_matrix(phi)?;
        let (g, orientation) = metric_from_b(&b).map_err(|(w, _)| {
            Error::pre(format!("3-form is not stable; B is not definite (witness {w:?})"))
        })?;
        let metric = Metric::new(g)?;
        let psi = hodge_star(&metric, orientation, phi)?;
        Ok(G2Structure {
            phi: phi.clone(),
            psi,
            vol_coeff: metric.volume_coeff(),
            metric,
            orientation,
        })
    }

    /// Recovers the metric of a 4-form from the B-map of its dual trivector.
    /// A 4-form fixes the metric but not the orientation; `orientation`
    /// chooses φ = *ψ.
    pub fn from_psi(psi: &Form, orientation: i8) -> Result<Self> {
        if psi.dim() != 7 || psi.degree() != 4 {
            return Err(Error::pre("expected a 4-form on ℝ⁷"));
        }
        let trivector = hodge_star(&Metric::identity(7), 1, psi)?;
        let b = b_matrix(&trivector)?;
        let (h, _) = metric_from_b(&b).map_err(|(w, _)| {
            Error::pre(format!("4-form is not stable; dual B-map is not definite (witness {w:?})"))
        })?;
        // h is proportional to g⁻¹; fix the scale by |ψ|²_g = 7.
        let g1 = h
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular inverse metric".into()))?;
        let n2 = form_norm2(psi, &g1)?;
        let g = g1 * (n2 / 7.0).sqrt().sqrt();
        let metric = Metric::new(g)?;
        let phi = hodge_star(&metric, orientation, psi)?;
        let s = G2Structure::from_phi(&phi)?;
        let defect = (&s.psi - psi).max_abs() / psi.max_abs();
        if defect > 1e-8 {
            return Err(Error::Numeric(format!("4-form metric recovery inconsistent ({defect:.3e})")));
        }
        Ok(s)
    }

    /// u × v, the g-dual of φ(u,v,·).
    pub fn cross(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let xi = self.phi.eval_free_last(&[u, v]);
        self.metric.sharp(&xi).expect("metric is positive definite")
    }

    pub fn vol_form(&self) -> Form {
        Form::term(7, &[0, 1, 2, 3, 4, 5, 6], self.orientation as f64 * self.vol_coeff)
    }
}

/// |α|²_g for a constant form: Σ_{I,J} α_I α_J det(g⁻¹[I,J]).
pub fn form_norm2(a: &Form, g: &DMatrix<f64>) -> Result<f64> {
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular metric".into()))?;
    let terms: Vec<(Vec<usize>, f64)> = a.terms().map(|(m, c)| (m.to_vec(), *c)).collect();
    let mut s = 0.0;
    for (i, ci) in &terms {
        for (j, cj) in &terms {
            s += ci * cj * crate::exterior::det_minor(|r, c| ginv[(r, c)], i, j);
        }
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plane3 {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl Plane3 {
    pub fn new(u: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Self {
        Plane3 { u, v, w }
    }

    pub fn axes(a: usize, b: usize, c: usize) -> Self {
        Plane3::new(basis7(a), basis7(b), basis7(c))
    }

    pub fn vectors(&self) -> [&[f64]; 3] {
        [&self.u, &self.v, &self.w]
    }

    fn gram(&self, g: &Metric) -> DMatrix<f64> {
        let vs = self.vectors();
        DMatrix::from_fn(3, 3, |i, j| g.inner(vs[i], vs[j]))
    }

    /// Volume of the parallelepiped in the metric g.
    pub fn volume(&self, g: &Metric) -> f64 {
        self.gram(g).determinant().max(0.0).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssociativeResidual {
    /// The g-dual of ψ(u,v,w,·), i.e. the bracket [u,v,w].
    pub residual: Vec<f64>,
    pub residual_norm: f64,
    /// |residual| / (|u||v||w|).
    pub relative: f64,
    pub phi_value: f64,
    pub phi_positive: bool,
    pub associative: bool,
}

pub fn associative_residual(plane: &Plane3, g2: &G2Structure, tol: f64) -> Result<AssociativeResidual> {
    let g = &g2.metric;
    let scale: f64 = plane.vectors().iter().map(|v| g.norm(v)).product();
    if scale == 0.0 || plane.gram(g).determinant() <= 1e-12 * scale * scale {
        return Err(Error::pre("degenerate plane"));
    }
    let [u, v, w] = plane.vectors();
    let xi = g2.psi.eval_free_last(&[u, v, w]);
    let residual = g.sharp(&xi)?;
    let residual_norm = g.norm(&residual);
    let phi_value = g2.phi.eval(&[u, v, w]);
    let relative = residual_norm / scale;
    Ok(AssociativeResidual {
        residual,
        residual_norm,
        relative,
        phi_value,
        phi_positive: phi_value > 0.0,
        associative: relative <= tol && phi_value > 0.0,
    })
}

fn sample_one(g2: &G2Structure, seed: u64, index: u64) -> Plane3 {
    let mut rng = sample_rng(seed, index);
    loop {
        let u: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        let v: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(on) = g2.metric.orthonormalize(&[u, v], 1e-6) {
            let w = g2.cross(&on[0], &on[1]);
            let mut it = on.into_iter();
            return Plane3::new(it.next().unwrap(), it.next().unwrap(), w);
        }
    }
}

/// Associative planes span{u, v, u×v} from g-orthonormalized Gaussian u, v.
pub fn sample_associative(g2: &G2Structure, count: usize, seed: u64) -> Vec<Plane3> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_one(g2, seed, i))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TamingEstimate {
    pub min_ratio: f64,
    pub argmin_plane: Option<Plane3>,
    pub argmin_index: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    /// 1/min_ratio when positive.
    pub k_estimate: Option<f64>,
    /// "refuted" (a witness plane exists) or "sampled evidence".
    pub verdict: String,
}

/// min over sampled associative planes of φ′|_V / vol_V.
pub fn taming_estimate(phi_prime: &Form, g2: &G2Structure, count: usize, seed: u64) -> Result<TamingEstimate> {
    if phi_prime.dim() != 7 || phi_prime.degree() != 3 {
        return Err(Error::pre("φ′ must be a 3-form on ℝ⁷"));
    }
    let ratios: Vec<(f64, Plane3)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let p = sample_one(g2, seed, i);
            let [u, v, w] = p.vectors();
            (phi_prime.eval(&[u, v, w]) / p.volume(&g2.metric), p)
        })
        .collect();
    let best = ratios
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, (r, _))| match acc {
            Some((_, m)) if m <= *r => acc,
            _ => Some((i, *r)),
        });
    let (argmin_index, min_ratio) = match best {
        Some((i, r)) => (Some(i), r),
        None => (None, f64::INFINITY),
    };
    let refuted = min_ratio <= 0.0;
    Ok(TamingEstimate {
        min_ratio,
        argmin_plane: argmin_index.map(|i| ratios[i].1.clone()),
        argmin_index,
        samples: count,
        seed,
        k_estimate: (min_ratio > 0.0 && min_ratio.is_finite()).then(|| 1.0 / min_ratio),
        verdict: if refuted { "refuted" } else { "sampled evidence" }.into(),
    })
}

/// The cylinder lifts ρ + dt∧ω and dt∧ρ + τ.
pub fn lift_phi(rho: &Form, omega: &Form) -> Result<Form> {
    let dt = Form::term(7, &[0], 1.0);
    Ok(rho.embed(7, 1) + dt.wedge(&omega.embed(7, 1))?)
}

pub fn lift_psi(rho: &Form, tau: &Form) -> Result<Form> {
    let dt = Form::term(7, &[0], 1.0);
    Ok(dt.wedge(&rho.embed(7, 1))? + tau.embed(7, 1))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub degrees: (usize, usize),
    pub lifted: Form,
    pub g2_pair: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orientation: Option<i8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// g = dt² + g_M within tolerance.
    pub product_metric: bool,
    pub su3: bool,
}

fn is_product(g: &Metric, tol: f64) -> bool {
    let m = g.matrix();
    (m[(0, 0)] - 1.0).abs() <= tol && (1..7).all(|i| m[(0, i)].abs() <= tol)
}

/// Lifts a (3,2) or (3,4) pair on ℝ⁶ to the cylinder and tests stability.
pub fn g2_pair_check(rho: &Form, second: &Form, tol: f64) -> Result<PairReport> {
    if rho.dim() != 6 || second.dim() != 6 || rho.degree() != 3 {
        return Err(Error::pre("expected a 3-form and a 2- or 4-form on ℝ⁶"));
    }
    let degrees = (3, second.degree());
    let (lifted, structure) = match second.degree() {
        2 => {
            let phi = lift_phi(rho, second)?;
            let s = match metric_from_phi(&phi)? {
                MetricVerdict::Definite { .. } => Ok(G2Structure::from_phi(&phi)?),
                MetricVerdict::Degenerate { witness, .. } => Err((witness, "B is not definite".to_string())),
            };
            (phi, s)
        }
        4 => {
            let psi = lift_psi(rho, second)?;
            let s = G2Structure::from_psi(&psi, 1).map_err(|e| (vec![], e.to_string()));
            (psi, s)
        }
        d => return Err(Error::pre(format!("second form has degree {d}; expected 2 or 4"))),
    };
    Ok(match structure {
        Ok(s) => {
            let product_metric = is_product(&s.metric, tol);
            let su3 = match second.degree() {
                2 => stable6::check_su3(rho, second, tol)?.su3,
                _ => match stable6::hitchin_dual_4form(second) {
                    Ok(omega) => stable6::check_su3(rho, &omega, tol)?.su3,
                    Err(_) => false,
                },
            };
            PairReport {
                degrees,
                lifted,
                g2_pair: true,
                metric: Some(rows(s.metric.matrix())),
                orientation: Some(s.orientation),
                witness: None,
                diagnostic: None,
                product_metric,
                su3,
            }
        }
        Err((witness, diagnostic)) => PairReport {
            degrees,
            lifted,
            g2_pair: false,
            metric: None,
            orientation: None,
            witness: (!witness.is_empty()).then_some(witness),
            diagnostic: Some(diagnostic),
            product_metric: false,
            su3: false,
        },
    })
}

/// Checks (u⌟φ)∧(v⌟φ)∧φ = 6g(u,v)vol on all basis pairs; returns the
/// largest defect.
pub fn six_g_vol_defect(s: &G2Structure) -> Result<f64> {
    let vol = s.vol_form().top_coeff();
    let mut worst = 0.0f64;
    for u in 0..7 {
        for v in u..7 {
            let lhs = s
                .phi
                .interior(&basis7(u))?
                .wedge(&s.phi.interior(&basis7(v))?)?
                .wedge(&s.phi)?
                .top_coeff();
            let rhs = 6.0 * s.metric.matrix()[(u, v)] * vol;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// All multi-indices used by the 7-dimensional forms, exposed for fixtures.
pub fn basis_3forms() -> Vec<MultiIndex> {
    MultiIndex::all(7, 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octonion::{phi_octonion, psi_octonion};

    fn p7(s: &str) -> Form {
        parse_form(s, 7, Labels::ZeroBased).unwrap().form
    }

    #[test]
    fn phi0_gives_identity() {
        let s = G2Structure::from_phi(&phi0()).unwrap();
        assert!((s.metric.matrix() - DMatrix::identity(7, 7)).amax() < 1e-12);
        assert_eq!(s.orientation, 1);
        assert!((s.vol_coeff - 1.0).abs() < 1e-12);
        assert!(s.psi.approx_eq(&psi0(), 1e-12));
        let back = hodge_star(&s.metric, 1, &s.psi).unwrap();
        assert!(back.approx_eq(&phi0(), 1e-12));
        assert!(six_g_vol_defect(&s).unwrap() < 1e-12);
    }

    #[test]
    fn brute_force_hodge_of_phi0() {
        // Termwise: *dx_I = sign(I, Iᶜ) dx_{Iᶜ} for the identity metric.
        let mut expect = Form::zero(7, 4);
        for (mi, c) in phi0().terms() {
            let comp = mi.complement(7);
            expect.add_term(&comp.to_vec(), c * mi.wedge_sign(comp) as f64);
        }
        assert_eq!(expect, psi0());
    }

    #[test]
    fn octonion_phi_is_reverse_oriented() {
        let s = G2Structure::from_phi(&phi_octonion()).unwrap();
        assert_eq!(s.orientation, -1);
        assert!((s.metric.matrix() - DMatrix::identity(7, 7)).amax() < 1e-12);
        // The bracket 4-form is *φ for the orientation φ itself induces.
        assert!(s.psi.approx_eq(&psi_octonion(), 1e-12));
    }

    #[test]
    fn psi_recovers_structure() {
        let s = G2Structure::from_psi(&psi0(), 1).unwrap();
        assert!(s.phi.approx_eq(&phi0(), 1e-12));
        let r = G2Structure::from_psi(&psi0(), -1).unwrap();
        assert!(r.phi.approx_eq(&phi0().scale(-1.0), 1e-12));
        // Scaling ψ by c⁴ scales g by c².
        let c: f64 = 1.3;
        let t = G2Structure::from_psi(&psi0().scale(c.powi(4)), 1).unwrap();
        assert!((t.metric.matrix() - DMatrix::identity(7, 7) * c * c).amax() < 1e-10);
    }

    #[test]
    fn cylinder_lift_without_dt_pairing_is_degenerate() {
        let phi = p7("dx135 + dx632 + dx254 + dx416 + dx063 + dx025 + dx041");
        match metric_from_phi(&phi).unwrap() {
            MetricVerdict::Degenerate { witness, .. } => assert_eq!(witness, basis7(1)),
            v => panic!("expected degenerate, got {v:?}"),
        }
    }

    #[test]
    fn perturbed_lift_is_stable_but_not_product() {
        let phi = p7("dx135 + dx632 + dx254 + dx416 + dx012 + dx034 + dx056 + 0.1*dx123");
        let s = G2Structure::from_phi(&phi).unwrap();
        assert!(s.metric.matrix()[(3, 0)].abs() > 1e-3);
    }

    #[test]
    fn associative_examples() {
        let s = G2Structure::from_phi(&phi0()).unwrap();
        let r = associative_residual(&Plane3::axes(0, 1, 2), &s, 1e-12).unwrap();
        assert!(r.associative && r.residual_norm == 0.0 && r.phi_value == 1.0);
        // span{e₁,e₂,e₄}: ψ₀ has −dx1247, so the bracket is −e₇.
        let r = associative_residual(&Plane3::axes(0, 1, 3), &s, 1e-12).unwrap();
        let mut expect = vec![0.0; 7];
        expect[6] = -1.0;
        assert_eq!(r.residual, expect);
        assert!(!r.associative);
        let a = Plane3::axes(3, 4, 5);
        let b = Plane3::new(a.v.clone(), a.u.clone(), a.w.clone());
        let ra = associative_residual(&a, &s, 1e-12).unwrap();
        let rb = associative_residual(&b, &s, 1e-12).unwrap();
        assert_eq!(ra.phi_value, -rb.phi_value);
        assert_eq!(ra.residual_norm, rb.residual_norm);
        assert!(associative_residual(&Plane3::axes(0, 0, 1), &s, 1e-12).is_err());
    }

    #[test]
    fn samples_are_associative_and_reproducible() {
        let s = G2Structure::from_phi(&phi0()).unwrap();
        let planes = sample_associative(&s, 500, 11);
        for p in &planes {
            let r = associative_residual(p, &s, 1e-9).unwrap();
            assert!(r.relative <= 1e-9 && r.phi_positive);
        }
        assert_eq!(planes, sample_associative(&s, 500, 11));
        assert!(sample_associative(&s, 0, 11).is_empty());
    }

    #[test]
    fn taming_of_phi0() {
        let s = G2Structure::from_phi(&phi0()).unwrap();
        let t = taming_estimate(&phi0(), &s, 2000, 5).unwrap();
        assert!((t.min_ratio - 1.0).abs() < 1e-9);
        let n = taming_estimate(&phi0().scale(-1.0), &s, 100, 5).unwrap();
        assert!((n.min_ratio + 1.0).abs() < 1e-9);
        assert_eq!(n.verdict, "refuted");
        assert!(n.argmin_plane.is_some());
    }

    #[test]
    fn pair_examples() {
        let p6 = |s: &str| parse_form(s, 6, Labels::OneBased).unwrap().form;
        let r = g2_pair_check(&p6("dx135 + dx632 + dx254 + dx416"), &p6("dx63 + dx25 + dx41"), 1e-10).unwrap();
        assert!(!r.g2_pair);
        let r = g2_pair_check(&p6("dx135 + dx632 + dx254 + dx416 + 0.1*dx123"), &p6("dx12 + dx34 + dx56"), 1e-10)
            .unwrap();
        assert!(r.g2_pair && !r.su3 && !r.product_metric);
        let r = g2_pair_check(&stable6::model_rho(), &stable6::model_omega(), 1e-10).unwrap();
        assert!(r.g2_pair && r.su3 && r.product_metric);
        let tau = stable6::model_omega().wedge(&stable6::model_omega()).unwrap().scale(0.5);
        let r = g2_pair_check(&stable6::model_rho(), &tau, 1e-10).unwrap();
        assert!(r.g2_pair && r.su3 && r.product_metric);
    }
}
