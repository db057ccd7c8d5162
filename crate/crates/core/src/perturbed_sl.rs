//! Perturbed special-Lagrangian equations on flat patches in ℝ⁶, their
//! lift to associative graphs in ℝ × ℝ⁶, symbols and volume identities.
//!
//! Cylinder vectors put t on axis 0 and the ℝ⁶ axes on 1…6.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::associator_pde::{GraphState, Perturbation};
use crate::exterior::{hodge_star, AffineMap, Form, Metric, MultiIndex, PolyForm, Pullback};
use crate::g2::{self, associative_residual, G2Structure, Plane3};
use crate::octonion::{phi_octonion, psi_octonion};
use crate::rng::sample_rng;
use crate::stable6;
use crate::{Error, Result};

/// Associator tolerance relative to the SL tolerance in equivalence checks.
pub const EQUIVALENCE_FACTOR: f64 = 10.0;

fn default_extent() -> f64 {
    1.0
}

/// A uniform n×n×n lattice on [0,L]³ mapped into ℝ⁶ by
/// s ↦ base + Σ s_a frame_a (+ an optional per-node displacement).
/// Periodic patches place n nodes per axis with spacing L/n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub frame: [Vec<f64>; 3],
    pub base: Vec<f64>,
    pub nodes: usize,
    #[serde(default = "default_extent")]
    pub extent: f64,
    #[serde(default)]
    pub periodic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<Vec<Vec<f64>>>,
}

fn unit6(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; 6];
    v[i] = 1.0;
    v
}

impl Patch {
    pub fn new(frame: [Vec<f64>; 3], base: Vec<f64>, nodes: usize, extent: f64, periodic: bool) -> Result<Self> {
        let p = Patch {
            frame,
            base,
            nodes,
            extent,
            periodic,
            displacement: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// The coordinate 3-plane on the given ℝ⁶ axes (zero-based), in order.
    pub fn coordinate(axes: [usize; 3], nodes: usize, periodic: bool) -> Result<Self> {
        Patch::new(axes.map(unit6), vec![0.0; 6], nodes, 1.0, periodic)
    }

    pub fn with_displacement(mut self, d: Vec<Vec<f64>>) -> Result<Self> {
        self.displacement = Some(d);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 {
            return Err(Error::pre(format!("patch needs at least 3 nodes per axis, got {}", self.nodes)));
        }
        if self.base.len() != 6 || self.frame.iter().any(|v| v.len() != 6) {
            return Err(Error::pre("patch frame and base must live in ℝ⁶"));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::pre("patch extent must be positive"));
        }
        if Metric::identity(6).orthonormalize(&self.frame, 1e-9).is_none() {
            return Err(Error::pre("patch frame is degenerate"));
        }
        if let Some(d) = &self.displacement {
            if d.len() != self.len() || d.iter().any(|x| x.len() != 6 || x.iter().any(|c| !c.is_finite())) {
                return Err(Error::pre("displacement needs one finite ℝ⁶ vector per node"));
            }
        }
        Ok(())
    }

    /// Frame orthonormal in g to 1e−12.
    pub fn is_orthonormal(&self, g: &Metric) -> bool {
        (0..3).all(|a| (0..3).all(|b| (g.inner(&self.frame[a], &self.frame[b]) - (a == b) as u8 as f64).abs() <= 1e-12))
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            self.extent / self.nodes as f64
        } else {
            self.extent / (self.nodes - 1) as f64
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        (c[0] * self.nodes + c[1]) * self.nodes + c[2]
    }

    pub fn coords(&self, node: usize) -> [usize; 3] {
        let n = self.nodes;
        [node / (n * n), (node / n) % n, node % n]
    }

    pub fn param(&self, node: usize) -> [f64; 3] {
        self.coords(node).map(|i| i as f64 * self.spacing())
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let s = self.param(node);
        let mut x = self.base.clone();
        for a in 0..3 {
            x.iter_mut().zip(&self.frame[a]).for_each(|(xi, f)| *xi += s[a] * f);
        }
        if let Some(d) = &self.displacement {
            x.iter_mut().zip(&d[node]).for_each(|(xi, di)| *xi += di);
        }
        x
    }

    /// Nodes where residuals are evaluated: all of them on a torus, the
    /// interior otherwise.
    pub fn eval_nodes(&self) -> Vec<usize> {
        let n = self.nodes;
        (0..self.len())
            .filter(|&i| self.periodic || self.coords(i).iter().all(|&c| c >= 1 && c + 1 < n))
            .collect()
    }

    /// ∂_a of a node function: central differences, periodic wrap on tori,
    /// second-order one-sided stencils on a non-periodic boundary.
    pub fn derivative(&self, node: usize, axis: usize, f: impl Fn(usize) -> f64) -> f64 {
        let h = self.spacing();
        let n = self.nodes;
        let c = self.coords(node);
        let at = |k: isize| {
            let mut cc = c;
            cc[axis] = k.rem_euclid(n as isize) as usize;
            f(self.index(cc))
        };
        let i = c[axis] as isize;
        if self.periodic || (i >= 1 && i + 1 < n as isize) {
            (at(i + 1) - at(i - 1)) / (2.0 * h)
        } else if i == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else {
            (3.0 * at(i) - 4.0 * at(i - 1) + at(i - 2)) / (2.0 * h)
        }
    }

    /// Coordinate tangent vectors ∂ι/∂s_a at a node.
    pub fn tangent(&self, node: usize) -> [Vec<f64>; 3] {
        match &self.displacement {
            None => self.frame.clone(),
            Some(d) => std::array::from_fn(|a| {
                (0..6)
                    .map(|k| self.frame[a][k] + self.derivative(node, a, |j| d[j][k]))
                    .collect()
            }),
        }
    }

    /// Precomposes the parametrization with s ↦ (±s_{perm(a)}) on the grid.
    pub fn reparametrize(&self, perm: [usize; 3], flip: [bool; 3]) -> Result<(Patch, Vec<usize>)> {
        let mut sorted = perm;
        sorted.sort_unstable();
        if sorted != [0, 1, 2] {
            return Err(Error::pre("reparametrization must permute the three axes"));
        }
        let mut base = self.base.clone();
        let frame: [Vec<f64>; 3] = std::array::from_fn(|a| {
            let f = &self.frame[perm[a]];
            if flip[a] {
                base.iter_mut().zip(f).for_each(|(b, x)| *b += self.extent * x);
                f.iter().map(|x| -x).collect()
            } else {
                f.clone()
            }
        });
        let n = self.nodes;
        // old_of[new node] = old node index.
        let old_of: Vec<usize> = (0..self.len())
            .map(|new| {
                let c = self.coords(new);
                let mut old = [0; 3];
                for a in 0..3 {
                    old[perm[a]] = if !flip[a] {
                        c[a]
                    } else if self.periodic {
                        (n - c[a]) % n
                    } else {
                        n - 1 - c[a]
                    };
                }
                self.index(old)
            })
            .collect();
        let displacement = self.displacement.as_ref().map(|d| old_of.iter().map(|&o| d[o].clone()).collect());
        let patch = Patch {
            frame,
            base,
            nodes: n,
            extent: self.extent,
            periodic: self.periodic,
            displacement,
        };
        Ok((patch, old_of))
    }
}

/// Values of λ (or μ) at the patch nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierField {
    pub values: Vec<f64>,
}

impl MultiplierField {
    pub fn from_values(patch: &Patch, values: Vec<f64>) -> Result<Self> {
        if values.len() != patch.len() {
            return Err(Error::DimensionMismatch(patch.len(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::pre("multiplier values must be finite"));
        }
        Ok(MultiplierField { values })
    }

    pub fn constant(patch: &Patch, c: f64) -> Self {
        MultiplierField {
            values: vec![c; patch.len()],
        }
    }

    /// c₀ + Σ g_a s_a in grid coordinates.
    pub fn affine(patch: &Patch, c0: f64, grad: [f64; 3]) -> Self {
        MultiplierField {
            values: (0..patch.len())
                .map(|i| {
                    let s = patch.param(i);
                    c0 + (0..3).map(|a| grad[a] * s[a]).sum::<f64>()
                })
                .collect(),
        }
    }

    /// A sin(2π k·s / L), periodic on the torus patch.
    pub fn sin_bump(patch: &Patch, amplitude: f64, wave: [i32; 3]) -> Self {
        let w = 2.0 * std::f64::consts::PI / patch.extent;
        MultiplierField {
            values: (0..patch.len())
                .map(|i| {
                    let s = patch.param(i);
                    amplitude * (w * (0..3).map(|a| wave[a] as f64 * s[a]).sum::<f64>()).sin()
                })
                .collect(),
        }
    }

    pub fn gradient(&self, patch: &Patch, node: usize) -> [f64; 3] {
        std::array::from_fn(|a| patch.derivative(node, a, |j| self.values[j]))
    }

    pub fn reindex(&self, old_of: &[usize]) -> Self {
        MultiplierField {
            values: old_of.iter().map(|&o| self.values[o]).collect(),
        }
    }
}

/// Keeps the dt-free part of a cylinder form as a form on ℝ⁶.
pub fn restrict_to_m(a: &Form) -> Form {
    let mut out = Form::zero(6, a.degree());
    for (mi, c) in a.terms() {
        if !mi.contains(0) {
            let idx: Vec<usize> = mi.axes().map(|i| i - 1).collect();
            out.add_term(&idx, *c);
        }
    }
    out
}

fn dt_vector() -> Vec<f64> {
    let mut v = vec![0.0; 7];
    v[0] = 1.0;
    v
}

/// Splits ψ = τ + dt∧ρ into (ρ, τ).
pub fn split_psi(psi: &Form) -> Result<(Form, Form)> {
    Ok((restrict_to_m(&psi.interior(&dt_vector())?), restrict_to_m(psi)))
}

/// Splits φ′ = ρ′ + dt∧ω′ into (ρ′, ω′).
pub fn split_phi(phi: &Form) -> Result<(Form, Form)> {
    Ok((restrict_to_m(phi), restrict_to_m(&phi.interior(&dt_vector())?)))
}

/// A pair (ρ, τ), possibly point-dependent through ψ = τ + dt∧ρ on the
/// cylinder, together with the taming pair (ρ′, ω′) whose metric defines
/// normal directions.
#[derive(Clone, Debug)]
pub struct SlSetting {
    pub psi: PolyForm,
    pub phi_prime: Form,
    /// The ℝ⁶ block of the metric of φ′ = ρ′ + dt∧ω′.
    pub metric: Metric,
    /// Orientation of φ′; selects φ = *ψ for associativity.
    pub orientation: i8,
}

impl SlSetting {
    pub fn new(psi: PolyForm, phi_prime: Form) -> Result<Self> {
        if psi.dim() != 7 || psi.degree() != 4 || phi_prime.dim() != 7 || phi_prime.degree() != 3 {
            return Err(Error::pre("expected a cylinder 4-form ψ and 3-form φ′"));
        }
        let tame = G2Structure::from_phi(&phi_prime)?;
        G2Structure::from_psi(&psi.eval_at(&[0.0; 7]), tame.orientation)?;
        let g = tame.metric.matrix().view((1, 1), (6, 6)).into_owned();
        Ok(SlSetting {
            psi,
            phi_prime,
            metric: Metric::new(g)?,
            orientation: tame.orientation,
        })
    }

    pub fn from_pairs(rho: &Form, tau: &Form, rho_prime: &Form, omega_prime: &Form) -> Result<Self> {
        if rho.degree() != 3 || tau.degree() != 4 || rho_prime.degree() != 3 || omega_prime.degree() != 2 {
            return Err(Error::pre("expected (ρ, τ) of degrees (3, 4) and (ρ′, ω′) of degrees (3, 2)"));
        }
        SlSetting::new(
            PolyForm::from_real(&g2::lift_psi(rho, tau)?),
            g2::lift_phi(rho_prime, omega_prime)?,
        )
    }

    /// ρ = Re Ω, τ = ½ω² tamed by (Im Ω, ω).
    pub fn calabi_yau() -> Self {
        let omega = stable6::model_omega();
        let tau = omega.wedge(&omega).unwrap().scale(0.5);
        SlSetting::from_pairs(&stable6::model_rho(), &tau, &stable6::model_rho_hat(), &omega).unwrap()
    }

    pub fn psi_at(&self, p: &[f64]) -> Form {
        self.psi.eval_at(p)
    }

    pub fn pair_at(&self, p: &[f64]) -> (Form, Form) {
        split_psi(&self.psi_at(p)).expect("ψ is a 4-form on ℝ⁷")
    }

    pub fn taming_pair(&self) -> (Form, Form) {
        split_phi(&self.phi_prime).expect("φ′ is a 3-form on ℝ⁷")
    }

    pub fn g2_at(&self, p: &[f64]) -> Result<G2Structure> {
        G2Structure::from_psi(&self.psi_at(p), self.orientation)
    }
}

/// Cylinder (t, x) ↦ octonion coordinates: t is the e-axis and
/// x = (i, j, k, ie, je, ke).
pub fn cylinder_to_octonion() -> AffineMap {
    let mut m = DMatrix::zeros(7, 7);
    m[(3, 0)] = 1.0;
    for (cyl, oct) in [(1, 0), (2, 1), (3, 2), (4, 4), (5, 5), (6, 6)] {
        m[(oct, cyl)] = 1.0;
    }
    AffineMap::new(m, nalgebra::DVector::zeros(7)).unwrap()
}

/// ψ₀ + β written on the cylinder, tamed by φ₀.
pub fn setting_from_perturbation(pert: &Perturbation) -> Result<SlSetting> {
    let map = cylinder_to_octonion();
    let psi = map.pullback_poly(&(PolyForm::from_real(&psi_octonion()) + pert.beta.clone()))?;
    SlSetting::new(psi, map.pullback(&phi_octonion())?)
}

/// A graph x ↦ x + f(x)e as (ι, λ): ι(x) = (x, f₁, f₂, f₃) and λ = f₀.
pub fn patch_from_graph(state: &GraphState) -> Result<(Patch, MultiplierField)> {
    state.validate()?;
    let a = state.half_width;
    let patch = Patch::new(
        [unit6(0), unit6(1), unit6(2)],
        vec![-a, -a, -a, 0.0, 0.0, 0.0],
        state.per_axis(),
        2.0 * a,
        false,
    )?
    .with_displacement(state.f.iter().map(|q| vec![0.0, 0.0, 0.0, q[1], q[2], q[3]]).collect())?;
    let lambda = MultiplierField::from_values(&patch, state.f.iter().map(|q| q[0]).collect())?;
    Ok((patch, lambda))
}

fn cylinder_point(t: f64, x: &[f64]) -> Vec<f64> {
    std::iter::once(t).chain(x.iter().copied()).collect()
}

fn gram(g: &Metric, v: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(v.len(), v.len(), |i, j| g.inner(&v[i], &v[j]))
}

/// g-orthonormal basis of the normal space: Gram–Schmidt of the coordinate
/// axes, in index order, against the tangent frame.
pub fn normal_basis(g: &Metric, tangent: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = g.dim();
    let mut basis = g.orthonormalize(tangent, 1e-12).expect("tangent frame is independent");
    let k = basis.len();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        if let Some(on) = g.orthonormalize(&[basis.clone(), vec![e]].concat(), 1e-8) {
            basis = on;
        }
    }
    basis.split_off(k)
}

/// α(v_I, n_b) for each (k−1)-subset I of the frame (lexicographic) and
/// each normal n_b.
fn normal_components(alpha: &Form, frame: &[Vec<f64>], normals: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = alpha.degree();
    MultiIndex::all(frame.len(), k - 1)
        .into_iter()
        .map(|mi| {
            normals
                .iter()
                .map(|n| {
                    let mut args: Vec<&[f64]> = mi.axes().map(|a| frame[a].as_slice()).collect();
                    args.push(n);
                    alpha.eval(&args)
                })
                .collect()
        })
        .collect()
}

/// α_N at one point: components along a g-orthonormal conormal basis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalValue {
    pub degree: usize,
    pub normal_basis: Vec<Vec<f64>>,
    /// One row per (k−1)-subset of the tangent frame, lexicographic.
    pub components: Vec<Vec<f64>>,
    /// max |α(v_I, v_a)| over tangent v_a; zero whenever ι*α = 0.
    pub tangent_leak: f64,
}

/// Largest |ι*α| on k-subsets of the frame, relative to the frame norms.
fn restriction_defect(alpha: &Form, g: &Metric, frame: &[Vec<f64>]) -> f64 {
    let k = alpha.degree();
    if k > frame.len() {
        return 0.0;
    }
    MultiIndex::all(frame.len(), k)
        .into_iter()
        .map(|mi| {
            let args: Vec<&[f64]> = mi.axes().map(|a| frame[a].as_slice()).collect();
            let scale: f64 = args.iter().map(|v| g.norm(v)).product();
            alpha.eval(&args).abs() / scale
        })
        .fold(0.0, f64::max)
}

pub fn alpha_n_at(alpha: &Form, g: &Metric, frame: &[Vec<f64>], tol: f64) -> Result<NormalValue> {
    let k = alpha.degree();
    if k == 0 || k > frame.len() + 1 {
        return Err(Error::pre(format!("α_N needs 1 ≤ deg α ≤ {}, got {k}", frame.len() + 1)));
    }
    if alpha.dim() != g.dim() || frame.iter().any(|v| v.len() != g.dim()) {
        return Err(Error::DimensionMismatch(g.dim(), alpha.dim()));
    }
    let defect = restriction_defect(alpha, g, frame);
    if defect > tol {
        return Err(Error::pre(format!("ι*α ≠ 0 (defect {defect:.3e})")));
    }
    let normals = normal_basis(g, frame);
    let components = normal_components(alpha, frame, &normals);
    let tangent_leak = normal_components(alpha, frame, frame)
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(NormalValue {
        degree: k - 1,
        normal_basis: normals,
        components,
        tangent_leak,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalForm {
    pub degree: usize,
    pub nodes: Vec<usize>,
    pub values: Vec<NormalValue>,
}

/// α_N of a constant form on ℝ⁶ along the patch.
pub fn alpha_n(alpha: &Form, patch: &Patch, g: &Metric, tol: f64) -> Result<NormalForm> {
    let nodes = patch.eval_nodes();
    let values = nodes
        .iter()
        .map(|&i| alpha_n_at(alpha, g, &patch.tangent(i), tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalForm {
        degree: alpha.degree().saturating_sub(1),
        nodes,
        values,
    })
}

/// Residuals at one point, normalized by the induced volume of the frame:
/// r₁ = ι*ρ and r₂ = τ_N + dλ∧ρ_N on the conormal basis.
pub fn sl_residual_at(rho: &Form, tau: &Form, g: &Metric, frame: &[Vec<f64>], dl: [f64; 3]) -> (f64, Vec<f64>) {
    let vol = gram(g, frame).determinant().max(0.0).sqrt();
    let [v1, v2, v3] = [&frame[0][..], &frame[1][..], &frame[2][..]];
    let r1 = rho.eval(&[v1, v2, v3]) / vol;
    let normals = normal_basis(g, frame);
    let tau_n = normal_components(tau, frame, &normals);
    let rho_n = normal_components(rho, frame, &normals);
    // (dλ∧ρ_N)(v₁,v₂,v₃) with ρ_N rows ordered {12, 13, 23}.
    let r2 = (0..normals.len())
        .map(|b| (tau_n[0][b] + dl[0] * rho_n[2][b] - dl[1] * rho_n[1][b] + dl[2] * rho_n[0][b]) / vol)
        .collect();
    (r1, r2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlReport {
    pub nodes: usize,
    pub r1_max: f64,
    pub r2_max: f64,
    pub max: f64,
    /// Set when ι*ρ ≠ 0, i.e. ρ_N is not defined and r₂ is only formal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_violation: Option<String>,
    #[serde(skip)]
    pub r1: Vec<f64>,
    #[serde(skip)]
    pub r2: Vec<Vec<f64>>,
}

fn check_pair_stable(setting: &SlSetting, lambda: &MultiplierField, patch: &Patch) -> Result<()> {
    let node = patch.eval_nodes()[0];
    setting
        .g2_at(&cylinder_point(lambda.values[node], &patch.point(node)))
        .map(|_| ())
}

pub fn sl_residual(lambda: &MultiplierField, patch: &Patch, setting: &SlSetting, tol: f64) -> Result<SlReport> {
    if lambda.values.len() != patch.len() {
        return Err(Error::DimensionMismatch(patch.len(), lambda.values.len()));
    }
    check_pair_stable(setting, lambda, patch)?;
    let nodes = patch.eval_nodes();
    let per: Vec<(f64, Vec<f64>)> = nodes
        .par_iter()
        .map(|&i| {
            let (rho, tau) = setting.pair_at(&cylinder_point(lambda.values[i], &patch.point(i)));
            sl_residual_at(&rho, &tau, &setting.metric, &patch.tangent(i), lambda.gradient(patch, i))
        })
        .collect();
    let r1_max = per.iter().fold(0.0f64, |m, (r, _)| m.max(r.abs()));
    let r2_max = per
        .iter()
        .fold(0.0f64, |m, (_, r)| m.max(r.iter().map(|x| x * x).sum::<f64>().sqrt()));
    let (r1, r2) = per.into_iter().unzip();
    Ok(SlReport {
        nodes: nodes.len(),
        r1_max,
        r2_max,
        max: r1_max.max(r2_max),
        constraint_violation: (r1_max > tol).then(|| format!("ι*ρ ≠ 0 (max {r1_max:.3e})")),
        r1,
        r2,
    })
}

/// A point of ι_λ(P) ⊂ ℝ × ℝ⁶ with its tangent frame u_a = (∂_aλ, v_a).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftedNode {
    pub node: usize,
    pub point: Vec<f64>,
    pub frame: [Vec<f64>; 3],
}

pub fn graph_lift(lambda: &MultiplierField, patch: &Patch) -> Vec<LiftedNode> {
    (0..patch.len())
        .map(|i| {
            let v = patch.tangent(i);
            let dl = lambda.gradient(patch, i);
            LiftedNode {
                node: i,
                point: cylinder_point(lambda.values[i], &patch.point(i)),
                frame: std::array::from_fn(|a| cylinder_point(dl[a], &v[a])),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub sl_max: f64,
    pub assoc_max: f64,
    pub tol: f64,
    pub assoc_tol: f64,
    pub sl_solution: bool,
    pub associative: bool,
    /// Both or neither.
    pub consistent: bool,
}

/// Compares the perturbed SL residual with the associator of the lifted
/// frames under ψ = τ + dt∧ρ.
pub fn equivalence_check(lambda: &MultiplierField, patch: &Patch, setting: &SlSetting, tol: f64) -> Result<EquivalenceReport> {
    let sl = sl_residual(lambda, patch, setting, tol)?;
    let lifted = graph_lift(lambda, patch);
    let nodes = patch.eval_nodes();
    let assoc: Vec<f64> = nodes
        .par_iter()
        .map(|&i| {
            let l = &lifted[i];
            let s = setting.g2_at(&l.point)?;
            let plane = Plane3::new(l.frame[0].clone(), l.frame[1].clone(), l.frame[2].clone());
            Ok(associative_residual(&plane, &s, tol)?.relative)
        })
        .collect::<Result<_>>()?;
    let assoc_max = assoc.iter().fold(0.0f64, |m, x| m.max(*x));
    let assoc_tol = EQUIVALENCE_FACTOR * tol;
    let sl_solution = sl.max <= tol;
    let associative = assoc_max <= assoc_tol;
    Ok(EquivalenceReport {
        sl_max: sl.max,
        assoc_max,
        tol,
        assoc_tol,
        sl_solution,
        associative,
        consistent: sl_solution == associative,
    })
}

/// Orthonormal tangent frame with dλ and α transported to it.
struct SymbolFrame {
    e: Vec<Vec<f64>>,
    dl: [f64; 3],
    normals: Vec<Vec<f64>>,
    alpha: Form,
}

fn symbol_frame(g: &Metric, frame: &[Vec<f64>; 3], dl: [f64; 3], alpha: [f64; 3]) -> Result<SymbolFrame> {
    if alpha.iter().all(|a| *a == 0.0) {
        return Err(Error::pre("the symbol is defined for nonzero covectors"));
    }
    let e = g
        .orthonormalize(frame, 1e-12)
        .ok_or_else(|| Error::pre("degenerate tangent frame"))?;
    // e_a = Σ_c v_c T_ca, hence dλ(e_a) = Σ_c dλ_c T_ca.
    let gv = gram(g, frame);
    let ve = DMatrix::from_fn(3, 3, |c, a| g.inner(&frame[c], &e[a]));
    let t = gv
        .lu()
        .solve(&ve)
        .ok_or_else(|| Error::Numeric("singular frame Gram matrix".into()))?;
    let dl_e = std::array::from_fn(|a| (0..3).map(|c| dl[c] * t[(c, a)]).sum());
    let normals = normal_basis(g, &e);
    let mut alpha_amb = Form::zero(g.dim(), 1);
    for a in 0..3 {
        for (i, x) in g.flat(&e[a]).into_iter().enumerate() {
            alpha_amb.add_term(&[i], alpha[a] * x);
        }
    }
    Ok(SymbolFrame {
        e,
        dl: dl_e,
        normals,
        alpha: alpha_amb,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolReport {
    pub matrix: Vec<Vec<f64>>,
    pub det: f64,
    pub singular_values: Vec<f64>,
    pub min_singular: f64,
}

impl SymbolReport {
    fn new(m: DMatrix<f64>) -> Self {
        let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(f64::total_cmp);
        SymbolReport {
            matrix: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
            det: m.determinant(),
            min_singular: sv[0],
            singular_values: sv,
        }
    }
}

fn dlambda_form(f: &SymbolFrame, g: &Metric) -> Form {
    let mut d = Form::zero(g.dim(), 1);
    for a in 0..3 {
        for (i, x) in g.flat(&f.e[a]).into_iter().enumerate() {
            d.add_term(&[i], f.dl[a] * x);
        }
    }
    d
}

/// σ_{τ,ρ}(x,α) on (k, n) ↦ (Λ³ part, N* part) in the bases (1, n_b) and
/// (e¹²³, e¹²³⊗n^b), with η = τ + dλ∧ρ.
pub fn symbol_matrix_at(
    rho: &Form,
    tau: &Form,
    g: &Metric,
    frame: &[Vec<f64>; 3],
    dl: [f64; 3],
    alpha: [f64; 3],
) -> Result<DMatrix<f64>> {
    let f = symbol_frame(g, frame, dl, alpha)?;
    let eta = tau + &dlambda_form(&f, g).wedge(rho)?;
    let e: Vec<&[f64]> = f.e.iter().map(|v| v.as_slice()).collect();
    let ar = f.alpha.wedge(rho)?;
    let mut m = DMatrix::zeros(4, 4);
    for (b, nb) in f.normals.iter().enumerate() {
        m[(0, b + 1)] = f.alpha.wedge(&rho.interior(nb)?)?.eval(&e);
        let col = f.alpha.wedge(&eta.interior(nb)?)?;
        for (r, nr) in f.normals.iter().enumerate() {
            m[(r + 1, b + 1)] = col.eval(&[e[0], e[1], e[2], nr]);
        }
    }
    for (r, nr) in f.normals.iter().enumerate() {
        m[(r + 1, 0)] = ar.eval(&[e[0], e[1], e[2], nr]);
    }
    Ok(m)
}

/// σ_ψ(x,α)(X) = (α∧(X⌟ψ))_N on the lifted frame u_a = e_a + dλ(e_a)∂_t,
/// with inputs (∂_t, n̄_b) and outputs paired with (−∂_t, n̄_r).
pub fn sigma_psi_at(psi: &Form, g: &Metric, frame: &[Vec<f64>; 3], dl: [f64; 3], alpha: [f64; 3]) -> Result<DMatrix<f64>> {
    let f = symbol_frame(g, frame, dl, alpha)?;
    let u: Vec<Vec<f64>> = (0..3).map(|a| cylinder_point(f.dl[a], &f.e[a])).collect();
    let alpha7 = f.alpha.embed(7, 1);
    let inputs: Vec<Vec<f64>> = std::iter::once(dt_vector())
        .chain(f.normals.iter().map(|n| cylinder_point(0.0, n)))
        .collect();
    let outputs: Vec<Vec<f64>> = std::iter::once(dt_vector().iter().map(|x| -x).collect())
        .chain(f.normals.iter().map(|n| cylinder_point(0.0, n)))
        .collect();
    let mut m = DMatrix::zeros(4, 4);
    for (c, x) in inputs.iter().enumerate() {
        let w = alpha7.wedge(&psi.interior(x)?)?;
        for (r, y) in outputs.iter().enumerate() {
            m[(r, c)] = w.eval(&[&u[0], &u[1], &u[2], y]);
        }
    }
    Ok(m)
}

pub fn symbol_matrix(
    setting: &SlSetting,
    point: &[f64],
    frame: &[Vec<f64>; 3],
    dl: [f64; 3],
    alpha: [f64; 3],
) -> Result<SymbolReport> {
    let (rho, tau) = setting.pair_at(point);
    Ok(SymbolReport::new(symbol_matrix_at(&rho, &tau, &setting.metric, frame, dl, alpha)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolSweep {
    pub samples: usize,
    pub seed: u64,
    pub on_shell_residual: f64,
    pub min_singular: f64,
    pub max_singular: f64,
    pub min_abs_det: f64,
    /// max over samples of the entrywise gap between the ℝ⁶ and cylinder symbols.
    pub max_split_gap: f64,
    /// max over samples of |σ(2α) − 2σ(α)|.
    pub max_homogeneity_gap: f64,
}

/// Symbols at random (node, unit α) pairs on an on-shell configuration.
pub fn symbol_sweep(
    lambda: &MultiplierField,
    patch: &Patch,
    setting: &SlSetting,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<SymbolSweep> {
    let sl = sl_residual(lambda, patch, setting, tol)?;
    if sl.max > tol {
        return Err(Error::pre(format!(
            "symbol is evaluated on solutions only (residual {:.3e} > {tol:.1e})",
            sl.max
        )));
    }
    let nodes = patch.eval_nodes();
    let per: Vec<(f64, f64, f64, f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let node = nodes[rng.gen_range(0..nodes.len())];
            let alpha = loop {
                let a: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-6 {
                    break a.map(|x| x / n);
                }
            };
            let point = cylinder_point(lambda.values[node], &patch.point(node));
            let (rho, tau) = setting.pair_at(&point);
            let frame = patch.tangent(node);
            let dl = lambda.gradient(patch, node);
            let m6 = symbol_matrix_at(&rho, &tau, &setting.metric, &frame, dl, alpha)?;
            let m7 = sigma_psi_at(&setting.psi_at(&point), &setting.metric, &frame, dl, alpha)?;
            let m2 = symbol_matrix_at(&rho, &tau, &setting.metric, &frame, dl, alpha.map(|x| 2.0 * x))?;
            let rep = SymbolReport::new(m6.clone());
            Ok((
                rep.min_singular,
                *rep.singular_values.last().unwrap(),
                rep.det.abs(),
                (&m6 - &m7).amax(),
                (&m2 - &m6 * 2.0).amax(),
            ))
        })
        .collect::<Result<_>>()?;
    let fold = |f: fn(&(f64, f64, f64, f64, f64)) -> f64, init: f64, pick: fn(f64, f64) -> f64| {
        per.iter().map(f).fold(init, pick)
    };
    Ok(SymbolSweep {
        samples,
        seed,
        on_shell_residual: sl.max,
        min_singular: fold(|x| x.0, f64::INFINITY, f64::min),
        max_singular: fold(|x| x.1, 0.0, f64::max),
        min_abs_det: fold(|x| x.2, f64::INFINITY, f64::min),
        max_split_gap: fold(|x| x.3, 0.0, f64::max),
        max_homogeneity_gap: fold(|x| x.4, 0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiracReport {
    /// (e₃⌟e₂⌟e₁⌟(α∧(n⌟ψ)))♯
    pub lhs: Vec<f64>,
    /// α♯ × n
    pub rhs: Vec<f64>,
    pub defect: f64,
    pub pass: bool,
}

/// On an associative plane the cylinder symbol is dual to Clifford
/// multiplication: contracting α∧(n⌟ψ) with the oriented orthonormal frame
/// gives α♯ × n.
pub fn dirac_symbol_check(s: &G2Structure, plane: &Plane3, alpha: [f64; 3], n: &[f64], tol: f64) -> Result<DiracReport> {
    let assoc = associative_residual(plane, s, 1e-9)?;
    if !assoc.associative {
        return Err(Error::pre(format!(
            "plane is not associative (relative residual {:.3e}, φ = {:.3e})",
            assoc.relative, assoc.phi_value
        )));
    }
    let g = &s.metric;
    let e = g
        .orthonormalize(&[plane.u.clone(), plane.v.clone(), plane.w.clone()], 1e-12)
        .ok_or_else(|| Error::pre("degenerate plane"))?;
    let nn = g.norm(n);
    if e.iter().any(|ea| g.inner(ea, n).abs() > 1e-10 * nn.max(1.0)) {
        return Err(Error::pre("n is not normal to the plane"));
    }
    let mut alpha_form = Form::zero(7, 1);
    let mut alpha_sharp = vec![0.0; 7];
    for a in 0..3 {
        for (i, x) in g.flat(&e[a]).into_iter().enumerate() {
            alpha_form.add_term(&[i], alpha[a] * x);
        }
        alpha_sharp.iter_mut().zip(&e[a]).for_each(|(y, x)| *y += alpha[a] * x);
    }
    let lhs = if alpha_form.is_zero() {
        vec![0.0; 7]
    } else {
        let w = alpha_form.wedge(&s.psi.interior(n)?)?;
        g.sharp(&w.eval_free_last(&[&e[0], &e[1], &e[2]]))?
    };
    let rhs = s.cross(&alpha_sharp, n);
    let defect = lhs.iter().zip(&rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(DiracReport {
        lhs,
        rhs,
        defect,
        pass: defect <= tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeIdentityReport {
    pub nodes: usize,
    /// max |coefficient of L*(u¹∧u²∧u³) − (1 + |dμ|²)|
    pub wedge_defect: f64,
    /// max |*dμ∧dμ − |dμ|²vol|
    pub hodge_defect: f64,
    pub wedge_density_max: f64,
    /// √(1 + |dμ|²), the induced-volume density of the graph.
    pub classical_density_max: f64,
}

fn require_flat_orthonormal(patch: &Patch, g: &Metric) -> Result<()> {
    if patch.displacement.is_some() || !patch.is_orthonormal(g) {
        return Err(Error::pre("volume identities need a flat patch with a g-orthonormal frame"));
    }
    Ok(())
}

/// Per-node densities of the graph of μ over a flat orthonormal patch.
pub fn volume_densities(dmu: [f64; 3]) -> Result<(f64, f64, f64)> {
    // u^a = v^a + dμ(v_a) dt on span{∂_t, v₁, v₂, v₃}, then dt ↦ dμ.
    let mut wedge = Form::scalar(4, 1.0);
    for a in 0..3 {
        let ua = Form::term(4, &[a + 1], 1.0) + Form::term(4, &[0], dmu[a]);
        wedge = wedge.wedge(&ua)?;
    }
    let l = DMatrix::from_fn(4, 3, |r, c| if r == 0 { dmu[c] } else { (r == c + 1) as u8 as f64 });
    let wedge_density = wedge.pullback_linear(&l)?.top_coeff();
    let d = Form::term(3, &[0], dmu[0]) + Form::term(3, &[1], dmu[1]) + Form::term(3, &[2], dmu[2]);
    let star_wedge = hodge_star(&Metric::identity(3), 1, &d)?.wedge(&d)?.top_coeff();
    let n2: f64 = dmu.iter().map(|x| x * x).sum();
    Ok((wedge_density, (1.0 + n2).sqrt(), star_wedge - n2))
}

pub fn volume_identity_check(mu: &MultiplierField, patch: &Patch, g: &Metric) -> Result<VolumeIdentityReport> {
    require_flat_orthonormal(patch, g)?;
    let nodes = patch.eval_nodes();
    let mut rep = VolumeIdentityReport {
        nodes: nodes.len(),
        wedge_defect: 0.0,
        hodge_defect: 0.0,
        wedge_density_max: 0.0,
        classical_density_max: 0.0,
    };
    for &i in &nodes {
        let dmu = mu.gradient(patch, i);
        let n2: f64 = dmu.iter().map(|x| x * x).sum();
        let (w, c, h) = volume_densities(dmu)?;
        rep.wedge_defect = rep.wedge_defect.max((w - (1.0 + n2)).abs());
        rep.hodge_defect = rep.hodge_defect.max(h.abs());
        rep.wedge_density_max = rep.wedge_density_max.max(w);
        rep.classical_density_max = rep.classical_density_max.max(c);
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VolumeBoundReport {
    pub nodes: usize,
    pub volume: f64,
    pub dmu_l2_squared: f64,
    /// Vol + ‖dμ‖², the integral of the wedge-expansion density.
    pub lhs: f64,
    /// ∫√(1 + |dμ|²) vol, the classical graph volume.
    pub classical_volume: f64,
    /// ∫ι*ρ′ = ⟨[ρ′], [ι]⟩
    pub pairing: f64,
    /// ∫dμ∧ω′, zero for exact dμ on a closed patch.
    pub exact_term: f64,
    /// max |L*φ′ − (dμ∧ω′ + ρ′)| per node.
    pub pullback_defect: f64,
    pub k: f64,
    pub rhs: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Vol(ιP) + ‖dμ‖² ≤ K⟨[ρ′],[ι]⟩ on a torus patch, integrated by the
/// periodic rectangle rule.
pub fn volume_bound_check(setting: &SlSetting, patch: &Patch, mu: &MultiplierField, k: f64, tol: f64) -> Result<VolumeBoundReport> {
    if !patch.periodic {
        return Err(Error::pre("the volume bound needs a closed (periodic) patch"));
    }
    let g = &setting.metric;
    require_flat_orthonormal(patch, g)?;
    let (rho_p, omega_p) = setting.taming_pair();
    let v = &patch.frame;
    let vm = DMatrix::from_fn(6, 3, |r, c| v[c][r]);
    let rho_pb = rho_p.pullback_linear(&vm)?.top_coeff();
    let omega_pb = omega_p.pullback_linear(&vm)?;
    let w = patch.spacing().powi(3);
    let vol = gram(g, v).determinant().sqrt();
    let (mut volume, mut dmu2, mut classical, mut pairing, mut exact, mut defect) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    for i in 0..patch.len() {
        let d = mu.gradient(patch, i);
        let dmu = Form::term(3, &[0], d[0]) + Form::term(3, &[1], d[1]) + Form::term(3, &[2], d[2]);
        let dmu_omega = dmu.wedge(&omega_pb)?.top_coeff();
        let u: Vec<Vec<f64>> = (0..3).map(|a| cylinder_point(d[a], &v[a])).collect();
        let lphi = setting.phi_prime.eval(&[&u[0], &u[1], &u[2]]);
        let n2: f64 = d.iter().map(|x| x * x).sum();
        volume += w * vol;
        dmu2 += w * n2 * vol;
        classical += w * (1.0 + n2).sqrt() * vol;
        pairing += w * rho_pb;
        exact += w * dmu_omega;
        defect = defect.max((lphi - dmu_omega - rho_pb).abs());
    }
    let lhs = volume + dmu2;
    let rhs = k * pairing;
    Ok(VolumeBoundReport {
        nodes: patch.len(),
        volume,
        dmu_l2_squared: dmu2,
        lhs,
        classical_volume: classical,
        pairing,
        exact_term: exact,
        pullback_defect: defect,
        k,
        rhs,
        gap: rhs - lhs,
        pass: lhs <= rhs + tol * rhs.abs().max(1.0),
    })
}
