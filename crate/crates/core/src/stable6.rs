//! Stable 2-, 3- and 4-forms on ℝ⁶: classification, volume forms, Hitchin
//! duals, and the SU(3) compatibility test.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::exterior::{Form, MultiIndex};
use crate::{Error, Result};

/// Ratio vol(ρ)/√(−tr(A²)/6), fixed by the model Re(dz₁dz₂dz₃) whose
/// Liouville partner Σdxᵢ∧dyᵢ has unit volume.
pub const RHO_VOLUME_CALIBRATION: f64 = 0.5;

/// Relative threshold on tr(A²)/‖ρ‖⁴ below which a 3-form is degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Kind6 {
    Stable2,
    Positive3,
    Negative3,
    Stable4,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Vector(Vec<f64>),
    Form(Form),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification6 {
    pub kind: Kind6,
    /// Coefficient of dx₁…₆ in the canonical volume form; 0 when degenerate.
    pub volume_coeff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

fn check_shape(a: &Form, degree: usize) -> Result<()> {
    if a.dim() != 6 {
        return Err(Error::DimensionMismatch(6, a.dim()));
    }
    if a.degree() != degree {
        return Err(Error::pre(format!("expected a {degree}-form, got degree {}", a.degree())));
    }
    Ok(())
}

fn basis(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; 6];
    v[i] = 1.0;
    v
}

pub fn classify_2form(omega: &Form) -> Result<Classification6> {
    check_shape(omega, 2)?;
    let cube = omega.wedge(omega)?.wedge(omega)?.top_coeff();
    let scale = omega.norm().powi(3);
    if cube.abs() <= DEGENERACY_TOL * scale || scale == 0.0 {
        // Kernel vector of the antisymmetric coefficient matrix.
        let m = two_form_matrix(omega);
        let witness = kernel_vector(&m);
        return Ok(Classification6 {
            kind: Kind6::Degenerate,
            volume_coeff: 0.0,
            witness: Some(Witness::Vector(witness)),
        });
    }
    Ok(Classification6 {
        kind: Kind6::Stable2,
        volume_coeff: (cube / 6.0).abs(),
        witness: None,
    })
}

/// M with ω = Σ_{i<j} M_ij dx_ij and M antisymmetric.
pub fn two_form_matrix(omega: &Form) -> DMatrix<f64> {
    let n = omega.dim();
    let mut m = DMatrix::zeros(n, n);
    for (mi, c) in omega.terms() {
        let ij = mi.to_vec();
        m[(ij[0], ij[1])] = *c;
        m[(ij[1], ij[0])] = -*c;
    }
    m
}

pub fn matrix_two_form(m: &DMatrix<f64>) -> Form {
    let n = m.nrows();
    let mut f = Form::zero(n, 2);
    for i in 0..n {
        for j in i + 1..n {
            f.add_term(&[i, j], 0.5 * (m[(i, j)] - m[(j, i)]));
        }
    }
    f
}

fn kernel_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let v: Vec<f64> = vt.row(k).iter().copied().collect();
    // Snap to a coordinate vector when the kernel is one.
    let max = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter()
        .map(|x| if x.abs() < 1e-12 * max { 0.0 } else { x / max })
        .collect()
}

/// Converts a 5-form on ℝ⁶ to the vector w with w ⌟ dx₁…₆ = γ.
fn five_form_to_vector(gamma: &Form) -> Vec<f64> {
    let full = MultiIndex::full(6);
    (0..6)
        .map(|i| {
            let c = gamma.get(full.without(i)).copied().unwrap_or(0.0);
            if i % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect()
}

/// K-map: column v is the vector of (e_v ⌟ ρ) ∧ ρ.
pub fn k_map(rho: &Form) -> Result<DMatrix<f64>> {
    check_shape(rho, 3)?;
    let mut a = DMatrix::zeros(6, 6);
    for v in 0..6 {
        let gamma = rho.interior(&basis(v))?.wedge(rho)?;
        for (i, w) in five_form_to_vector(&gamma).into_iter().enumerate() {
            a[(i, v)] = w;
        }
    }
    Ok(a)
}

pub fn classify_3form(rho: &Form) -> Result<Classification6> {
    check_shape(rho, 3)?;
    let a = k_map(rho)?;
    let tr = (&a * &a).trace();
    let scale = rho.norm().powi(4);
    if scale == 0.0 || tr.abs() <= DEGENERACY_TOL * scale {
        return Ok(Classification6 {
            kind: Kind6::Degenerate,
            volume_coeff: 0.0,
            witness: Some(Witness::Form(rho.clone())),
        });
    }
    let kind = if tr < 0.0 { Kind6::Positive3 } else { Kind6::Negative3 };
    Ok(Classification6 {
        kind,
        volume_coeff: RHO_VOLUME_CALIBRATION * (tr.abs() / 6.0).sqrt(),
        witness: None,
    })
}

fn require_positive(rho: &Form) -> Result<(DMatrix<f64>, f64)> {
    let c = classify_3form(rho)?;
    if c.kind != Kind6::Positive3 {
        return Err(Error::pre(format!("3-form is {:?}, not positive", c.kind)));
    }
    let a = k_map(rho)?;
    let tr = (&a * &a).trace();
    Ok((a, tr))
}

/// J = A/√(−tr(A²)/6) for a positive 3-form.
pub fn almost_complex(rho: &Form) -> Result<DMatrix<f64>> {
    let (a, tr) = require_positive(rho)?;
    Ok(a / (-tr / 6.0).sqrt())
}

/// ρ̂(u,v,w) = ρ(Ju,v,w).
pub fn hitchin_dual_3form(rho: &Form) -> Result<Form> {
    let j = almost_complex(rho)?;
    let mut out = Form::zero(6, 3);
    for t in MultiIndex::all(6, 3) {
        let idx = t.to_vec();
        let ju: Vec<f64> = j.column(idx[0]).iter().copied().collect();
        let c = rho.eval(&[&ju, &basis(idx[1]), &basis(idx[2])]);
        out.add_term(&idx, c);
    }
    Ok(out)
}

/// Bivector B with ⟨B, α⟩·dx₁…₆ = α ∧ τ, as an antisymmetric matrix.
pub fn four_form_bivector(tau: &Form) -> Result<DMatrix<f64>> {
    check_shape(tau, 4)?;
    let mut b = DMatrix::zeros(6, 6);
    for i in 0..6 {
        for j in i + 1..6 {
            let c = Form::term(6, &[i, j], 1.0).wedge(tau)?.top_coeff();
            b[(i, j)] = c;
            b[(j, i)] = -c;
        }
    }
    Ok(b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourFormAnalysis {
    pub classification: Classification6,
    /// τ̂, present when τ = ½τ̂² has a real solution.
    pub dual: Option<Form>,
}

pub fn classify_4form(tau: &Form) -> Result<FourFormAnalysis> {
    let b = four_form_bivector(tau)?;
    let scale = tau.norm().powi(6);
    let det = b.determinant();
    let degenerate = Classification6 {
        kind: Kind6::Degenerate,
        volume_coeff: 0.0,
        witness: Some(Witness::Vector(kernel_vector(&b))),
    };
    if scale == 0.0 || det.abs() <= DEGENERACY_TOL * scale {
        return Ok(FourFormAnalysis {
            classification: degenerate,
            dual: None,
        });
    }
    let binv = b
        .try_inverse()
        .ok_or_else(|| Error::Numeric("bivector inversion failed".into()))?;
    let beta0 = matrix_two_form(&binv);
    let half_sq = beta0.wedge(&beta0)?.scale(0.5);
    // ½β₀² is proportional to τ; κ is the factor.
    let dot: f64 = tau.terms().map(|(mi, c)| c * half_sq.get(mi).copied().unwrap_or(0.0)).sum();
    let kappa = dot / tau.norm().powi(2);
    let lambda = 1.0 / kappa.abs().sqrt();
    let cube = beta0.wedge(&beta0)?.wedge(&beta0)?.top_coeff();
    let volume_coeff = (lambda.powi(3) * cube / 6.0).abs();
    let dual = (kappa > 0.0).then(|| {
        let sign = if cube > 0.0 { 1.0 } else { -1.0 };
        beta0.scale(sign * lambda)
    });
    Ok(FourFormAnalysis {
        classification: Classification6 {
            kind: Kind6::Stable4,
            volume_coeff,
            witness: None,
        },
        dual,
    })
}

/// τ̂ with τ = ½τ̂² and τ̂³ a positive multiple of dx₁…₆.
pub fn hitchin_dual_4form(tau: &Form) -> Result<Form> {
    let a = classify_4form(tau)?;
    match (a.classification.kind, a.dual) {
        (Kind6::Stable4, Some(d)) => Ok(d),
        (Kind6::Stable4, None) => Err(Error::pre("stable 4-form is −½ω², not ½ω²; no real dual")),
        _ => Err(Error::pre("degenerate 4-form has no dual")),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Su3Report {
    pub rho_ok: bool,
    pub omega_ok: bool,
    pub wedge_defect: Form,
    /// (1/6)ω³ − (1/4)ρ∧ρ̂, as a coefficient of dx₁…₆.
    pub volume_defect: f64,
    pub su3: bool,
}

pub fn check_su3(rho: &Form, omega: &Form, tol: f64) -> Result<Su3Report> {
    check_shape(rho, 3)?;
    check_shape(omega, 2)?;
    let rho_ok = classify_3form(rho)?.kind == Kind6::Positive3;
    let omega_ok = classify_2form(omega)?.kind == Kind6::Stable2;
    let wedge_defect = omega.wedge(rho)?;
    let liouville = omega.wedge(omega)?.wedge(omega)?.top_coeff() / 6.0;
    let volume_defect = if rho_ok {
        let rho_hat = hitchin_dual_3form(rho)?;
        liouville - rho.wedge(&rho_hat)?.top_coeff() / 4.0
    } else {
        f64::NAN
    };
    let wedge_scale = (omega.norm() * rho.norm()).max(1.0);
    let su3 = rho_ok
        && omega_ok
        && wedge_defect.max_abs() <= tol * wedge_scale
        && volume_defect.abs() <= tol * liouville.abs().max(1.0);
    Ok(Su3Report {
        rho_ok,
        omega_ok,
        wedge_defect,
        volume_defect,
        su3,
    })
}

/// Re(dz₁dz₂dz₃) with zⱼ = x_{2j−1} + i·x_{2j}.
pub fn model_rho() -> Form {
    crate::exterior::parse_form("dx135 - dx146 - dx236 - dx245", 6, crate::exterior::Labels::OneBased)
        .unwrap()
        .form
}

/// Im(dz₁dz₂dz₃).
pub fn model_rho_hat() -> Form {
    crate::exterior::parse_form("dx136 + dx145 + dx235 - dx246", 6, crate::exterior::Labels::OneBased)
        .unwrap()
        .form
}

/// Σ dxᵢ∧dyᵢ = dx12 + dx34 + dx56.
pub fn model_omega() -> Form {
    crate::exterior::parse_form("dx12 + dx34 + dx56", 6, crate::exterior::Labels::OneBased)
        .unwrap()
        .form
}
