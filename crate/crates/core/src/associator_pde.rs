//! The associator equation for graphs x ↦ x + f(x)e over Im ℍ in
//! ℝ⁷ = Im ℍ ⊕ ℍe, perturbed by a closed 4-form β:
//!
//!   R(f) = D(f) − σ(f) − 2β̂_ℍ(f) = 0,
//!
//! discretized by central differences on a cube grid with Dirichlet data.
//! Octonion axes 0…6 are i, j, k, e, ie, je, ke; the graph point over x is
//! (x₁, x₂, x₃, f₀, f₁, f₂, f₃).

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Matrix4, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exterior::{Form, PolyForm};
use crate::g2::{associative_residual, G2Structure, Plane3};
use crate::octonion::{cross3, psi_octonion, qmul, Octonion, Quaternion};
use crate::rng::sample_rng;
use crate::{Error, Result};

const QUNITS: [Quaternion; 4] = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

fn qadd(a: &Quaternion, b: &Quaternion) -> Quaternion {
    std::array::from_fn(|i| a[i] + b[i])
}

fn qscale(a: &Quaternion, s: f64) -> Quaternion {
    a.map(|x| x * s)
}

fn qcross3(x: &Quaternion, y: &Quaternion, z: &Quaternion) -> Quaternion {
    cross3(Octonion::quaternion(*x), Octonion::quaternion(*y), Octonion::quaternion(*z)).halves().0
}

/// q ↦ q·e_a for the imaginary unit e_a (a = 0, 1, 2 ↦ i, j, k), as a matrix.
pub fn right_mult(a: usize) -> Matrix4<f64> {
    let e = QUNITS[a + 1];
    Matrix4::from_fn(|r, c| qmul(&QUNITS[c], &e)[r])
}

/// Quaternion values on the (m+1)³ nodes of a cube [−a, a]³ split into m
/// cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphState {
    pub cells: usize,
    pub half_width: f64,
    pub f: Vec<Quaternion>,
}

impl GraphState {
    pub fn new(cells: usize, half_width: f64) -> Result<Self> {
        if cells < 4 {
            return Err(Error::pre(format!("grid needs at least 4 cells per axis, got {cells}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::pre("box half-width must be positive"));
        }
        Ok(GraphState {
            cells,
            half_width,
            f: vec![[0.0; 4]; (cells + 1).pow(3)],
        })
    }

    pub fn from_fn(cells: usize, half_width: f64, f: impl Fn([f64; 3]) -> Quaternion) -> Result<Self> {
        let mut s = GraphState::new(cells, half_width)?;
        for i in 0..s.f.len() {
            s.f[i] = f(s.point(i));
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        GraphState::new(self.cells, self.half_width)?;
        if self.f.len() != (self.cells + 1).pow(3) {
            return Err(Error::DimensionMismatch((self.cells + 1).pow(3), self.f.len()));
        }
        if self.f.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::pre("graph values must be finite"));
        }
        Ok(())
    }

    pub fn per_axis(&self) -> usize {
        self.cells + 1
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.cells as f64
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        let n = self.per_axis();
        (c[0] * n + c[1]) * n + c[2]
    }

    pub fn coords(&self, node: usize) -> [usize; 3] {
        let n = self.per_axis();
        [node / (n * n), (node / n) % n, node % n]
    }

    pub fn point(&self, node: usize) -> [f64; 3] {
        self.coords(node).map(|i| -self.half_width + i as f64 * self.spacing())
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.coords(node).iter().all(|&c| c >= 1 && c < self.cells)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.f.len()).filter(|&i| self.is_interior(i)).collect()
    }

    /// Position of an interior node in the unknown vector.
    pub fn unknown(&self, node: usize) -> Option<usize> {
        if !self.is_interior(node) {
            return None;
        }
        let k = self.cells - 1;
        let c = self.coords(node);
        Some(((c[0] - 1) * k + (c[1] - 1)) * k + (c[2] - 1))
    }

    pub fn unknowns(&self) -> usize {
        4 * (self.cells - 1).pow(3)
    }

    fn neighbor(&self, node: usize, axis: usize, up: bool) -> usize {
        let mut c = self.coords(node);
        if up {
            c[axis] += 1;
        } else {
            c[axis] -= 1;
        }
        self.index(c)
    }

    /// f^a = ∂f/∂x_a by central differences at an interior node.
    pub fn derivatives(&self, node: usize) -> [Quaternion; 3] {
        let h2 = 2.0 * self.spacing();
        std::array::from_fn(|a| {
            let p = self.f[self.neighbor(node, a, true)];
            let m = self.f[self.neighbor(node, a, false)];
            std::array::from_fn(|q| (p[q] - m[q]) / h2)
        })
    }

    /// The graph point (x, f(x)) in octonion coordinates.
    pub fn graph_point(&self, node: usize) -> [f64; 7] {
        let x = self.point(node);
        let f = self.f[node];
        [x[0], x[1], x[2], f[0], f[1], f[2], f[3]]
    }

    /// Tangent frame u = i + f¹e, v = j + f²e, w = k + f³e.
    pub fn frame(&self, node: usize) -> [Vec<f64>; 3] {
        graph_frame(&self.derivatives(node))
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.interior_nodes().iter().flat_map(|&i| self.f[i]).collect()
    }

    pub fn set_interior(&mut self, x: &[f64]) {
        for node in self.interior_nodes() {
            let u = self.unknown(node).unwrap();
            self.f[node] = std::array::from_fn(|q| x[4 * u + q]);
        }
    }

    /// Copies the boundary ring of `other` (same grid) onto this state.
    pub fn with_boundary_of(mut self, other: &GraphState) -> Result<Self> {
        if other.cells != self.cells || other.f.len() != self.f.len() {
            return Err(Error::pre("boundary data lives on a different grid"));
        }
        for i in 0..self.f.len() {
            if !self.is_interior(i) {
                self.f[i] = other.f[i];
            }
        }
        Ok(self)
    }

    pub fn max_df(&self) -> f64 {
        self.interior_nodes()
            .iter()
            .flat_map(|&i| self.derivatives(i))
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

pub fn graph_frame(df: &[Quaternion; 3]) -> [Vec<f64>; 3] {
    std::array::from_fn(|a| {
        let mut u = vec![0.0; 7];
        u[a] = 1.0;
        u[3..7].copy_from_slice(&df[a]);
        u
    })
}

/// A perturbation ψ = ψ₀ + β by a polynomial 4-form in octonion coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub beta: PolyForm,
    #[serde(skip)]
    derivs: Vec<PolyForm>,
}

impl Perturbation {
    pub fn new(beta: PolyForm) -> Result<Self> {
        if beta.dim() != 7 || beta.degree() != 4 {
            return Err(Error::pre("β must be a 4-form on ℝ⁷"));
        }
        let derivs = (0..4).map(|q| beta.map_coeffs(|c| c.deriv(3 + q))).collect();
        Ok(Perturbation { beta, derivs })
    }

    pub fn zero() -> Self {
        Perturbation::new(PolyForm::zero(7, 4)).unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.beta.is_zero()
    }

    pub fn magnitude(&self) -> f64 {
        self.beta.max_abs_coeff()
    }

    /// Every coefficient vanishes at the origin.
    pub fn vanishes_at_origin(&self) -> bool {
        self.beta.terms().all(|(_, c)| c.constant_term() == 0.0)
    }

    pub fn is_closed(&self, tol: f64) -> bool {
        self.beta.exterior_derivative().max_abs_coeff() <= tol
    }

    pub fn psi_at(&self, p: &[f64]) -> Form {
        psi_octonion() + self.beta.eval_at(p)
    }

    /// ψ₀ + β is a G₂ 4-form at every graph point of the state (boundary
    /// corners, centre and every interior node).
    pub fn check_stable(&self, state: &GraphState) -> Result<()> {
        if self.is_zero() {
            return Ok(());
        }
        (0..state.f.len()).into_par_iter().try_for_each(|i| {
            G2Structure::from_psi(&self.psi_at(&state.graph_point(i)), -1)
                .map(|_| ())
                .map_err(|e| Error::pre(format!("ψ₀ + β is not stable at node {i}: {e}")))
        })
    }

    fn derivs(&self) -> &[PolyForm] {
        &self.derivs
    }
}

fn ensure_derivs(p: &Perturbation) -> Perturbation {
    if p.derivs.len() == 4 {
        p.clone()
    } else {
        Perturbation::new(p.beta.clone()).expect("validated on construction")
    }
}

/// β(u, v, w, e_{3+q}) for q = 0…3, i.e. 2β̂_ℍ as a quaternion.
fn beta_h(beta: &Form, frame: &[Vec<f64>; 3]) -> Quaternion {
    if beta.is_zero() {
        return [0.0; 4];
    }
    let xi = beta.eval_free_last(&[&frame[0], &frame[1], &frame[2]]);
    [xi[3], xi[4], xi[5], xi[6]]
}

/// D(f) = −(f¹i + f²j + f³k).
pub fn dirac_at(df: &[Quaternion; 3]) -> Quaternion {
    let mut out = [0.0; 4];
    for a in 0..3 {
        out = qadd(&out, &qscale(&qmul(&df[a], &QUNITS[a + 1]), -1.0));
    }
    out
}

pub fn monge_ampere_at(df: &[Quaternion; 3]) -> Quaternion {
    qcross3(&df[0], &df[1], &df[2])
}

fn map_interior(state: &GraphState, f: impl Fn(usize) -> Quaternion + Sync) -> Vec<Quaternion> {
    state.interior_nodes().par_iter().map(|&i| f(i)).collect()
}

pub fn dirac(state: &GraphState) -> Vec<Quaternion> {
    map_interior(state, |i| dirac_at(&state.derivatives(i)))
}

pub fn monge_ampere(state: &GraphState) -> Vec<Quaternion> {
    map_interior(state, |i| monge_ampere_at(&state.derivatives(i)))
}

/// β̂_ℍ(f) with β̂_l = ½β(u, v, w, e_l) on the graph frame at (x, f(x)).
pub fn beta_hat_h(state: &GraphState, pert: &Perturbation) -> Vec<Quaternion> {
    map_interior(state, |i| {
        let b = pert.beta.eval_at(&state.graph_point(i));
        qscale(&beta_h(&b, &state.frame(i)), 0.5)
    })
}

fn residual_at(state: &GraphState, pert: &Perturbation, node: usize) -> Quaternion {
    let df = state.derivatives(node);
    let mut r = qadd(&dirac_at(&df), &qscale(&monge_ampere_at(&df), -1.0));
    if !pert.is_zero() {
        let b = pert.beta.eval_at(&state.graph_point(node));
        r = qadd(&r, &qscale(&beta_h(&b, &graph_frame(&df)), -1.0));
    }
    r
}

/// R(f) = D(f) − σ(f) − 2β̂_ℍ(f) at the interior nodes.
pub fn residual(state: &GraphState, pert: &Perturbation) -> Vec<Quaternion> {
    map_interior(state, |i| residual_at(state, pert, i))
}

pub fn norm_inf(r: &[Quaternion]) -> f64 {
    r.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn norm_2(r: &[Quaternion]) -> f64 {
    r.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// ∂R/∂f^a at a node (4×4, columns along 1, i, j, k).
pub fn principal_blocks(df: &[Quaternion; 3], beta: &Form) -> [Matrix4<f64>; 3] {
    let frame = graph_frame(df);
    std::array::from_fn(|a| {
        let mut m = -right_mult(a);
        for c in 0..4 {
            let mut args = df.to_owned();
            args[a] = QUNITS[c];
            let ds = qcross3(&args[0], &args[1], &args[2]);
            let db = if beta.is_zero() {
                [0.0; 4]
            } else {
                let mut fr = frame.clone();
                fr[a] = vec![0.0; 7];
                fr[a][3 + c] = 1.0;
                beta_h(beta, &fr)
            };
            for r in 0..4 {
                m[(r, c)] -= ds[r] + db[r];
            }
        }
        m
    })
}

/// ∂R/∂f at a node through the point dependence of β.
fn point_block(state: &GraphState, pert: &Perturbation, node: usize, frame: &[Vec<f64>; 3]) -> Matrix4<f64> {
    let p = state.graph_point(node);
    let mut m = Matrix4::zeros();
    for (c, d) in pert.derivs().iter().enumerate() {
        let db = beta_h(&d.eval_at(&p), frame);
        for r in 0..4 {
            m[(r, c)] = -db[r];
        }
    }
    m
}

/// A sparse matrix kept as merged (row, col, value) triplets.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    fn from_unmerged(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|x| x.2 != 0.0);
        SparseMatrix { n, triplets: merged }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.triplets
            .iter()
            .find(|t| t.0 == r && t.1 == c)
            .map_or(0.0, |t| t.2)
    }

    pub fn transpose(&self) -> Self {
        SparseMatrix::from_unmerged(self.n, self.triplets.iter().map(|&(r, c, v)| (c, r, v)).collect())
    }

    pub fn max_abs_diff(&self, other: &SparseMatrix) -> f64 {
        let neg = SparseMatrix::from_unmerged(
            self.n,
            self.triplets
                .iter()
                .copied()
                .chain(other.triplets.iter().map(|&(r, c, v)| (r, c, -v)))
                .collect(),
        );
        neg.triplets.iter().fold(0.0f64, |m, t| m.max(t.2.abs()))
    }

    /// Product self · other.
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        let mut rows_of_other: Vec<Vec<(usize, f64)>> = vec![Vec::new(); other.n];
        for &(r, c, v) in &other.triplets {
            rows_of_other[r].push((c, v));
        }
        let mut t = Vec::new();
        for &(r, k, v) in &self.triplets {
            for &(c, w) in &rows_of_other[k] {
                t.push((r, c, v * w));
            }
        }
        SparseMatrix::from_unmerged(self.n, t)
    }

    fn to_faer(&self, shift: f64) -> Result<SparseColMat<usize, f64>> {
        let mut t: Vec<Triplet<usize, usize, f64>> = self.triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
        if shift != 0.0 {
            t.extend((0..self.n).map(|i| Triplet::new(i, i, shift)));
        }
        SparseColMat::try_new_from_triplets(self.n, self.n, &t).map_err(|e| Error::Numeric(format!("sparse assembly: {e:?}")))
    }

    /// Direct sparse LU solve of self·x = b (optionally with a diagonal shift).
    pub fn solve(&self, b: &[f64], shift: f64) -> Result<Vec<f64>> {
        let a = self.to_faer(shift)?;
        let lu = a.sp_lu().map_err(|e| Error::Numeric(format!("sparse LU failed: {e:?}")))?;
        let rhs = Col::<f64>::from_fn(self.n, |i| b[i]);
        let x = lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("singular Jacobian".into()));
        }
        Ok(out)
    }
}

fn assemble(state: &GraphState, blocks: impl Fn(usize) -> ([Matrix4<f64>; 3], Matrix4<f64>) + Sync) -> SparseMatrix {
    let h2 = 2.0 * state.spacing();
    let per_node: Vec<Vec<(usize, usize, f64)>> = state
        .interior_nodes()
        .par_iter()
        .map(|&node| {
            let row = state.unknown(node).unwrap();
            let (m, p) = blocks(node);
            let mut t = Vec::with_capacity(4 * 4 * 7);
            let mut put = |col: usize, b: &Matrix4<f64>, s: f64| {
                for r in 0..4 {
                    for c in 0..4 {
                        let v = s * b[(r, c)];
                        if v != 0.0 {
                            t.push((4 * row + r, 4 * col + c, v));
                        }
                    }
                }
            };
            put(row, &p, 1.0);
            for a in 0..3 {
                for (up, s) in [(true, 1.0 / h2), (false, -1.0 / h2)] {
                    if let Some(col) = state.unknown(state.neighbor(node, a, up)) {
                        put(col, &m[a], s);
                    }
                }
            }
            t
        })
        .collect();
    SparseMatrix::from_unmerged(state.unknowns(), per_node.into_iter().flatten().collect())
}

/// dR/df on the interior unknowns (boundary values are fixed data).
pub fn jacobian(state: &GraphState, pert: &Perturbation) -> SparseMatrix {
    let pert = ensure_derivs(pert);
    assemble(state, |node| {
        let df = state.derivatives(node);
        let b = pert.beta.eval_at(&state.graph_point(node));
        let frame = graph_frame(&df);
        let p = if pert.is_zero() {
            Matrix4::zeros()
        } else {
            point_block(state, &pert, node, &frame)
        };
        (principal_blocks(&df, &b), p)
    })
}

/// The discrete Dirac operator on the interior unknowns.
pub fn dirac_matrix(state: &GraphState) -> SparseMatrix {
    assemble(state, |_| (std::array::from_fn(|a| -right_mult(a)), Matrix4::zeros()))
}

fn flatten(r: &[Quaternion]) -> Vec<f64> {
    r.iter().flatten().copied().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual_inf: f64,
    pub residual_2: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking on ‖R‖₂ by halving down to `min_step`.
    pub damping: bool,
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 30,
            damping: true,
            min_step: 2f64.powi(-20),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonResult {
    pub state: GraphState,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub residual_inf: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Damped Newton on the interior unknowns with sparse LU solves.
pub fn newton_solve(f0: &GraphState, pert: &Perturbation, opts: &NewtonOptions) -> Result<NewtonResult> {
    f0.validate()?;
    let pert = ensure_derivs(pert);
    pert.check_stable(f0)?;
    let mut state = f0.clone();
    let mut r = residual(&state, &pert);
    let mut trace = vec![TraceEntry {
        iteration: 0,
        residual_inf: norm_inf(&r),
        residual_2: norm_2(&r),
        step: 0.0,
    }];
    let finish = |state: GraphState, trace: Vec<TraceEntry>, failure: Option<String>| {
        let last = trace.last().unwrap();
        NewtonResult {
            converged: failure.is_none() && last.residual_inf <= opts.tol,
            residual_inf: last.residual_inf,
            iterations: last.iteration,
            state,
            trace,
            failure,
        }
    };
    for it in 1..=opts.max_iter {
        if norm_inf(&r) <= opts.tol {
            return Ok(finish(state, trace, None));
        }
        let j = jacobian(&state, &pert);
        let rhs: Vec<f64> = flatten(&r).iter().map(|x| -x).collect();
        let delta = match j.solve(&rhs, 0.0) {
            Ok(d) => d,
            Err(_) => {
                let scale = j.triplets.iter().fold(0.0f64, |m, t| m.max(t.2.abs()));
                match j.solve(&rhs, 1e-8 * scale.max(1.0)) {
                    Ok(d) => d,
                    Err(e) => return Ok(finish(state, trace, Some(format!("iteration {it}: {e}")))),
                }
            }
        };
        let x0 = state.interior_values();
        let r0 = norm_2(&r);
        let mut t = 1.0;
        loop {
            let x: Vec<f64> = x0.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let mut trial = state.clone();
            trial.set_interior(&x);
            let rt = residual(&trial, &pert);
            if !opts.damping || norm_2(&rt) < r0 || norm_inf(&rt) <= opts.tol {
                state = trial;
                r = rt;
                break;
            }
            t *= 0.5;
            if t < opts.min_step {
                return Ok(finish(state, trace, Some(format!("iteration {it}: line search stalled"))));
            }
        }
        trace.push(TraceEntry {
            iteration: it,
            residual_inf: norm_inf(&r),
            residual_2: norm_2(&r),
            step: t,
        });
    }
    let failure = (norm_inf(&r) > opts.tol).then(|| format!("no convergence after {} iterations", opts.max_iter));
    Ok(finish(state, trace, failure))
}

/// Relative associator residual of the graph frames under ψ₀ + β, maximized
/// over interior nodes.
pub fn frame_associator_max(state: &GraphState, pert: &Perturbation) -> Result<f64> {
    let per: Vec<f64> = state
        .interior_nodes()
        .par_iter()
        .map(|&i| {
            let s = G2Structure::from_psi(&pert.psi_at(&state.graph_point(i)), -1)?;
            let [u, v, w] = state.frame(i);
            Ok(associative_residual(&Plane3::new(u, v, w), &s, 1.0)?.relative)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolSample {
    pub node: usize,
    pub xi: [f64; 3],
    pub distance_from_identity: f64,
    pub min_sym_eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearizedReport {
    pub max_df: f64,
    pub beta_magnitude: f64,
    pub small_df: bool,
    pub samples: Vec<SymbolSample>,
    pub max_distance: f64,
    pub min_eigenvalue: f64,
}

/// Principal symbol of D∘R′ at a node: Σ_ab ξ_a ξ_b R(e_a) M_b with
/// M_b = ∂R/∂f^b.
pub fn principal_symbol(df: &[Quaternion; 3], beta: &Form, xi: [f64; 3]) -> Matrix4<f64> {
    let m = principal_blocks(df, beta);
    let mut s = Matrix4::zeros();
    for a in 0..3 {
        for b in 0..3 {
            s += right_mult(a) * m[b] * (xi[a] * xi[b]);
        }
    }
    s
}

/// L^f = D_h ∘ R′(f) on the interior unknowns, and its principal symbol at
/// `samples` random (node, unit ξ) pairs.
pub fn linearized_l(state: &GraphState, pert: &Perturbation, samples: usize, seed: u64) -> (SparseMatrix, LinearizedReport) {
    let l = dirac_matrix(state).matmul(&jacobian(state, pert));
    let nodes = state.interior_nodes();
    let samples: Vec<SymbolSample> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let node = nodes[rng.gen_range(0..nodes.len())];
            let xi = loop {
                let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-6 {
                    break v.map(|x| x / n);
                }
            };
            let b = pert.beta.eval_at(&state.graph_point(node));
            let s = principal_symbol(&state.derivatives(node), &b, xi);
            let sym = (s + s.transpose()) * 0.5;
            SymbolSample {
                node,
                xi,
                distance_from_identity: (s - Matrix4::identity()).amax(),
                min_sym_eigenvalue: SymmetricEigen::new(sym).eigenvalues.min(),
            }
        })
        .collect();
    let max_df = state.max_df();
    let report = LinearizedReport {
        max_df,
        beta_magnitude: pert.magnitude(),
        small_df: max_df < 1.0,
        max_distance: samples.iter().fold(0.0, |m, s| m.max(s.distance_from_identity)),
        min_eigenvalue: samples.iter().fold(f64::INFINITY, |m, s| m.min(s.min_sym_eigenvalue)),
        samples,
    };
    (l, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;

    fn linear_solution(s: f64, a: f64, q0: Quaternion) -> impl Fn([f64; 3]) -> Quaternion {
        // f = s(x₁j + x₂i) + a(x₁ + x₂k) + q₀
        move |x| [q0[0] + a * x[0], q0[1] + s * x[1], q0[2] + s * x[0], q0[3] + a * x[1]]
    }

    #[test]
    fn dirac_examples() {
        let c = GraphState::from_fn(4, 1.0, |_| [0.3, -1.0, 2.0, 0.5]).unwrap();
        assert!(norm_inf(&dirac(&c)) == 0.0);
        let l = GraphState::from_fn(4, 1.0, |x| [x[0], 0.0, 0.0, 0.0]).unwrap();
        for d in dirac(&l) {
            assert!((d[1] + 1.0).abs() < 1e-14 && d[0].abs() + d[2].abs() + d[3].abs() < 1e-14);
        }
    }

    #[test]
    fn monge_ampere_examples() {
        let df = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        let expect = cross3(Octonion::unit(0), Octonion::unit(1), Octonion::unit(2)).halves().0;
        assert_eq!(monge_ampere_at(&df), expect);
        let c = 1.7;
        let scaled = df.map(|q| qscale(&q, c));
        let s = monge_ampere_at(&scaled);
        assert!((0..4).all(|i| (s[i] - c.powi(3) * expect[i]).abs() < 1e-12));
    }

    #[test]
    fn dirac_squared_is_minus_wide_laplacian() {
        let s = GraphState::new(8, 1.0).unwrap();
        let d = dirac_matrix(&s);
        let d2 = d.matmul(&d);
        let h = s.spacing();
        // Away from the boundary ring D_h² = −Σ (f(x+2h e_a) − 2f + f(x−2h e_a))/4h².
        let node = s.index([4, 4, 4]);
        let row = 4 * s.unknown(node).unwrap();
        for a in 0..3 {
            let mut c = [4, 4, 4];
            c[a] = 6;
            let col = 4 * s.unknown(s.index(c)).unwrap();
            assert!((d2.get(row, col) + 1.0 / (4.0 * h * h)).abs() < 1e-9);
        }
        assert!((d2.get(row, row) - 6.0 / (4.0 * h * h)).abs() < 1e-9);
    }

    #[test]
    fn linear_solutions_have_zero_residual() {
        let s = GraphState::from_fn(6, 1.0, linear_solution(0.7, -0.4, [0.1, 0.2, 0.3, 0.4])).unwrap();
        assert!(norm_inf(&residual(&s, &Perturbation::zero())) < 1e-14);
        let bad = GraphState::from_fn(6, 1.0, |x| [0.0, 0.0, 0.0, x[0]]).unwrap();
        assert!(norm_inf(&residual(&bad, &Perturbation::zero())) > 0.5);
    }

    #[test]
    fn constant_beta_contraction() {
        // β = dx₀₁₂₃ = i∧j∧k∧e: 2β̂_ℍ(0) = β(i,j,k,e) = 1 on the real unit.
        let beta = PolyForm::term(7, &[0, 1, 2, 3], Poly::constant(1.0));
        let p = Perturbation::new(beta).unwrap();
        let s = GraphState::new(4, 1.0).unwrap();
        for b in beta_hat_h(&s, &p) {
            assert_eq!(b, [0.5, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn tol_infinity_returns_input() {
        let s = GraphState::from_fn(4, 1.0, |x| [x[0] * x[1], 0.0, 0.0, 0.0]).unwrap();
        let opts = NewtonOptions {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let r = newton_solve(&s, &Perturbation::zero(), &opts).unwrap();
        assert_eq!(r.state, s);
        assert!(r.converged && r.iterations == 0);
    }

    #[test]
    fn symbol_is_identity_at_zero() {
        let s = GraphState::new(4, 1.0).unwrap();
        let (_, rep) = linearized_l(&s, &Perturbation::zero(), 20, 1);
        assert!(rep.max_distance < 1e-15 && (rep.min_eigenvalue - 1.0).abs() < 1e-15);
    }
}
