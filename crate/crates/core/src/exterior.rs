//! Sparse exterior algebra over ℝⁿ, n ≤ 8.
//!
//! A [`MultiIndex`] is a set of axes stored as a bitmask, and a [`Form`] maps
//! multi-indices to coefficients. Coefficients are either `f64` or [`Poly`];
//! products of polynomial coefficients are fallible because of the degree cap.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::poly::{MonomialJson, Poly};
use crate::{Error, Result};

pub const MAX_DIM: usize = 8;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(u8);

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex(0);

    pub fn from_bits(bits: u8) -> Self {
        MultiIndex(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Sorts an arbitrary axis list. Returns the permutation sign, or 0 on a
    /// repeated axis.
    pub fn normalize(idx: &[usize]) -> (MultiIndex, i8) {
        let mut bits = 0u8;
        for &i in idx {
            assert!(i < MAX_DIM, "axis {i} out of range");
            if bits & (1 << i) != 0 {
                return (Self::EMPTY, 0);
            }
            bits |= 1 << i;
        }
        let mut inversions = 0;
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                if idx[a] > idx[b] {
                    inversions += 1;
                }
            }
        }
        (MultiIndex(bits), if inversions % 2 == 0 { 1 } else { -1 })
    }

    pub fn full(n: usize) -> Self {
        MultiIndex(((1u16 << n) - 1) as u8)
    }

    pub fn single(i: usize) -> Self {
        MultiIndex(1 << i)
    }

    pub fn degree(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn axes(self) -> impl Iterator<Item = usize> + Clone {
        (0..MAX_DIM).filter(move |i| self.0 >> i & 1 == 1)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.axes().collect()
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn overlaps(self, other: Self) -> bool {
        self.0 & other.0 != 0
    }

    pub fn union(self, other: Self) -> Self {
        MultiIndex(self.0 | other.0)
    }

    pub fn without(self, i: usize) -> Self {
        MultiIndex(self.0 & !(1 << i))
    }

    pub fn complement(self, n: usize) -> Self {
        MultiIndex(!self.0 & Self::full(n).0)
    }

    pub fn max_axis(self) -> Option<usize> {
        (self.0 != 0).then(|| 7 - self.0.leading_zeros() as usize)
    }

    /// Sign with dx^I ∧ dx^J = sign · dx^{I∪J}; zero when I and J overlap.
    pub fn wedge_sign(self, other: Self) -> i8 {
        if self.overlaps(other) {
            return 0;
        }
        let swaps: u32 = other
            .axes()
            .map(|j| (self.0 as u16 >> (j + 1)).count_ones())
            .sum();
        if swaps % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Every multi-index of degree `p` in dimension `n`, lexicographically.
    pub fn all(n: usize, p: usize) -> Vec<MultiIndex> {
        let mut out: Vec<MultiIndex> = (0u16..(1 << n))
            .map(|b| MultiIndex(b as u8))
            .filter(|m| m.degree() == p)
            .collect();
        out.sort();
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.axes().cmp(other.axes())
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.to_vec())
    }
}

/// Coefficient ring of a form.
pub trait Coeff: Clone + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add_assign(&mut self, other: &Self);
    fn scale(&self, s: f64) -> Self;
    fn try_mul(&self, other: &Self) -> Result<Self>;
    fn to_json_parts(&self) -> (Option<f64>, Option<Vec<MonomialJson>>);
    fn from_json_parts(c: Option<f64>, poly: Option<&[MonomialJson]>) -> Result<Self>;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn try_mul(&self, other: &Self) -> Result<Self> {
        Ok(self * other)
    }
    fn to_json_parts(&self) -> (Option<f64>, Option<Vec<MonomialJson>>) {
        (Some(*self), None)
    }
    fn from_json_parts(c: Option<f64>, poly: Option<&[MonomialJson]>) -> Result<Self> {
        match (c, poly) {
            (Some(c), None) => Ok(c),
            (None, Some(p)) => {
                let p = Poly::from_json(p)?;
                if p.is_constant() {
                    Ok(p.constant_term())
                } else {
                    Err(Error::Parse("polynomial coefficient where a constant was expected".into()))
                }
            }
            _ => Err(Error::Parse("term needs exactly one of \"c\" or \"poly\"".into())),
        }
    }
}

impl Coeff for Poly {
    fn zero() -> Self {
        Poly::zero()
    }
    fn is_zero(&self) -> bool {
        Poly::is_zero(self)
    }
    fn add_assign(&mut self, other: &Self) {
        *self = Poly::add(self, other);
    }
    fn scale(&self, s: f64) -> Self {
        Poly::scale(self, s)
    }
    fn try_mul(&self, other: &Self) -> Result<Self> {
        Poly::try_mul(self, other)
    }
    fn to_json_parts(&self) -> (Option<f64>, Option<Vec<MonomialJson>>) {
        if self.is_constant() {
            (Some(self.constant_term()), None)
        } else {
            (None, Some(self.to_json()))
        }
    }
    fn from_json_parts(c: Option<f64>, poly: Option<&[MonomialJson]>) -> Result<Self> {
        match (c, poly) {
            (Some(c), None) => Ok(Poly::constant(c)),
            (None, Some(p)) => Poly::from_json(p),
            _ => Err(Error::Parse("term needs exactly one of \"c\" or \"poly\"".into())),
        }
    }
}

/// A homogeneous p-form on ℝⁿ.
#[derive(Clone, PartialEq)]
pub struct Form<C = f64> {
    dim: usize,
    degree: usize,
    terms: BTreeMap<MultiIndex, C>,
}

pub type PolyForm = Form<Poly>;

impl<C: Coeff> Form<C> {
    pub fn zero(dim: usize, degree: usize) -> Self {
        assert!(dim <= MAX_DIM, "dimension {dim} exceeds {MAX_DIM}");
        Form {
            dim,
            degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(dim: usize, c: C) -> Self {
        let mut f = Self::zero(dim, 0);
        f.add_mi(MultiIndex::EMPTY, c);
        f
    }

    /// c·dx_{idx}, with the axis list normalized by its permutation sign.
    pub fn term(dim: usize, idx: &[usize], c: C) -> Self {
        let mut f = Self::zero(dim, idx.len());
        f.add_term(idx, c);
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_zero()
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, &C)> {
        self.terms.iter().map(|(k, v)| (*k, v))
    }

    pub fn get(&self, mi: MultiIndex) -> Option<&C> {
        self.terms.get(&mi)
    }

    /// Coefficient of dx_{idx} for an arbitrary (possibly unsorted) axis list.
    pub fn coeff(&self, idx: &[usize]) -> C {
        let (mi, sign) = MultiIndex::normalize(idx);
        match (sign, self.terms.get(&mi)) {
            (0, _) | (_, None) => C::zero(),
            (s, Some(c)) => c.scale(s as f64),
        }
    }

    /// Adds c·dx_{idx}, normalizing the axis list.
    pub fn add_term(&mut self, idx: &[usize], c: C) {
        assert_eq!(idx.len(), self.degree, "term degree mismatch");
        assert!(
            idx.iter().all(|&i| i < self.dim),
            "axis out of range for dimension {}",
            self.dim
        );
        let (mi, sign) = MultiIndex::normalize(idx);
        if sign != 0 {
            self.add_mi(mi, c.scale(sign as f64));
        }
    }

    pub(crate) fn add_mi(&mut self, mi: MultiIndex, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&mi) {
            Some(slot) => {
                slot.add_assign(&c);
                if slot.is_zero() {
                    self.terms.remove(&mi);
                }
            }
            None => {
                self.terms.insert(mi, c);
            }
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim, self.degree);
        for (mi, c) in &self.terms {
            out.add_mi(*mi, c.scale(s));
        }
        out
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Form<D> {
        let mut out = Form::zero(self.dim, self.degree);
        for (mi, c) in &self.terms {
            out.add_mi(*mi, f(c));
        }
        out
    }

    fn check_same_shape(&self, other: &Self) {
        assert_eq!(self.dim, other.dim, "form dimension mismatch");
        assert_eq!(self.degree, other.degree, "form degree mismatch");
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(self.dim, other.dim));
        }
        let mut out = Self::zero(self.dim, self.degree + other.degree);
        if out.degree > self.dim {
            return Ok(out);
        }
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let s = a.wedge_sign(*b);
                if s != 0 {
                    out.add_mi(a.union(*b), ca.try_mul(cb)?.scale(s as f64));
                }
            }
        }
        Ok(out)
    }

    /// Contraction v ⌟ a, inserting v in the first slot.
    pub fn interior(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch(v.len(), self.dim));
        }
        if self.degree == 0 {
            return Err(Error::pre("interior product of a 0-form"));
        }
        let mut out = Self::zero(self.dim, self.degree - 1);
        for (mi, c) in &self.terms {
            for (pos, axis) in mi.axes().enumerate() {
                if v[axis] != 0.0 {
                    let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                    out.add_mi(mi.without(axis), c.scale(sign * v[axis]));
                }
            }
        }
        Ok(out)
    }

    /// Re-embeds into ℝ^new_dim, sending axis i to axis i + shift.
    pub fn embed(&self, new_dim: usize, shift: usize) -> Self {
        let mut out = Self::zero(new_dim, self.degree);
        for (mi, c) in &self.terms {
            let idx: Vec<usize> = mi.axes().map(|i| i + shift).collect();
            out.add_term(&idx, c.clone());
        }
        out
    }

    /// Coefficient on dx_{0…n−1}; zero unless this is a top-degree form.
    pub fn top_coeff(&self) -> C {
        if self.degree != self.dim {
            return C::zero();
        }
        self.terms
            .get(&MultiIndex::full(self.dim))
            .cloned()
            .unwrap_or_else(C::zero)
    }
}

impl<C: Coeff> std::ops::Add for Form<C> {
    type Output = Form<C>;
    fn add(mut self, rhs: Self) -> Self {
        self.check_same_shape(&rhs);
        for (mi, c) in rhs.terms {
            self.add_mi(mi, c);
        }
        self
    }
}

impl<C: Coeff> std::ops::Add<&Form<C>> for &Form<C> {
    type Output = Form<C>;
    fn add(self, rhs: &Form<C>) -> Form<C> {
        self.clone() + rhs.clone()
    }
}

impl<C: Coeff> std::ops::Neg for Form<C> {
    type Output = Form<C>;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<C: Coeff> std::ops::Sub for Form<C> {
    type Output = Form<C>;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl<C: Coeff> std::ops::Sub<&Form<C>> for &Form<C> {
    type Output = Form<C>;
    fn sub(self, rhs: &Form<C>) -> Form<C> {
        self.clone() - rhs.clone()
    }
}

impl<C: Coeff> std::ops::Mul<f64> for Form<C> {
    type Output = Form<C>;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

impl Form<f64> {
    /// Value on k vectors: Σ_I c_I det(v_a[I]).
    pub fn eval(&self, vs: &[&[f64]]) -> f64 {
        assert_eq!(vs.len(), self.degree, "wrong number of arguments");
        let idx: Vec<usize> = (0..vs.len()).collect();
        self.terms
            .iter()
            .map(|(mi, c)| {
                let axes = mi.to_vec();
                c * det_minor(|r, col| vs[col][r], &axes, &idx)
            })
            .sum()
    }

    /// Covector ξ with ξ_l = a(v₁,…,v_{k−1}, e_l).
    pub fn eval_free_last(&self, vs: &[&[f64]]) -> Vec<f64> {
        assert_eq!(vs.len() + 1, self.degree, "wrong number of arguments");
        let mut f = self.clone();
        for v in vs {
            f = f.interior(v).expect("degree checked above");
        }
        let mut out = vec![0.0; self.dim];
        for (mi, c) in f.terms() {
            out[mi.axes().next().unwrap()] = *c;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim == other.dim && self.degree == other.degree && (self - other).max_abs() <= tol
    }

    /// Drops coefficients with |c| ≤ tol.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|_, c| c.abs() > tol);
        out
    }

    pub fn to_poly(&self) -> PolyForm {
        self.map_coeffs(|c| Poly::constant(*c))
    }

    /// Linear substitution dx_j ↦ Σ_i m[(j,i)] dy_i where m is
    /// (self.dim × new_dim); this is the pullback along y ↦ m·y.
    pub fn pullback_linear(&self, m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != self.dim {
            return Err(Error::DimensionMismatch(m.nrows(), self.dim));
        }
        let n = m.ncols();
        let targets = MultiIndex::all(n, self.degree);
        let mut out = Self::zero(n, self.degree);
        for (mi, c) in &self.terms {
            let rows = mi.to_vec();
            for t in &targets {
                let cols = t.to_vec();
                let d = det_minor(|r, col| m[(r, col)], &rows, &cols);
                if d != 0.0 {
                    out.add_mi(*t, c * d);
                }
            }
        }
        Ok(out)
    }
}

impl Form<Poly> {
    pub fn from_real(f: &Form<f64>) -> Self {
        f.to_poly()
    }

    pub fn eval_at(&self, x: &[f64]) -> Form<f64> {
        self.map_coeffs(|p| p.eval(x))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.values().all(Poly::is_constant)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, p| m.max(p.max_abs_coeff()))
    }

    pub fn exterior_derivative(&self) -> Self {
        let mut out = Self::zero(self.dim, self.degree + 1);
        if out.degree > self.dim {
            return out;
        }
        for (mi, c) in &self.terms {
            for j in 0..self.dim {
                let s = MultiIndex::single(j).wedge_sign(*mi);
                if s != 0 {
                    let dc = c.deriv(j);
                    if !dc.is_zero() {
                        out.add_mi(mi.union(MultiIndex::single(j)), dc.scale(s as f64));
                    }
                }
            }
        }
        out
    }
}

/// Determinant of the square submatrix (rows × cols) of the matrix `at`.
pub(crate) fn det_minor(at: impl Fn(usize, usize) -> f64, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    debug_assert_eq!(k, cols.len());
    match k {
        0 => 1.0,
        1 => at(rows[0], cols[0]),
        2 => at(rows[0], cols[0]) * at(rows[1], cols[1]) - at(rows[0], cols[1]) * at(rows[1], cols[0]),
        _ => {
            let mut a: Vec<f64> = Vec::with_capacity(k * k);
            for &r in rows {
                for &c in cols {
                    a.push(at(r, c));
                }
            }
            let mut det = 1.0;
            for col in 0..k {
                let piv = (col..k)
                    .max_by(|&x, &y| a[x * k + col].abs().total_cmp(&a[y * k + col].abs()))
                    .unwrap();
                if a[piv * k + col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    for c in 0..k {
                        a.swap(piv * k + c, col * k + c);
                    }
                    det = -det;
                }
                let p = a[col * k + col];
                det *= p;
                for r in col + 1..k {
                    let f = a[r * k + col] / p;
                    if f != 0.0 {
                        for c in col..k {
                            a[r * k + c] -= f * a[col * k + c];
                        }
                    }
                }
            }
            det
        }
    }
}

fn poly_det(m: &[Vec<Poly>], rows: &[usize], cols: &[usize]) -> Result<Poly> {
    if rows.is_empty() {
        return Ok(Poly::constant(1.0));
    }
    // Laplace expansion along the first row; k ≤ 8 and the entries are sparse.
    let mut acc = Poly::zero();
    let r0 = rows[0];
    for (j, &c) in cols.iter().enumerate() {
        let entry = &m[r0][c];
        if entry.is_zero() {
            continue;
        }
        let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
        let minor = poly_det(m, &rows[1..], &rest)?;
        let term = entry.try_mul(&minor)?;
        acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
    }
    Ok(acc)
}

/// A map whose coordinate functions are polynomials.
pub trait Pullback {
    fn domain_dim(&self) -> usize;
    fn codomain_dim(&self) -> usize;
    /// Coordinate functions y_j = F_j(x).
    fn components(&self) -> Vec<Poly>;

    fn pullback_poly(&self, a: &PolyForm) -> Result<PolyForm> {
        if a.dim() != self.codomain_dim() {
            return Err(Error::DimensionMismatch(self.codomain_dim(), a.dim()));
        }
        let n = self.domain_dim();
        let comps = self.components();
        let jac: Vec<Vec<Poly>> = comps
            .iter()
            .map(|f| (0..n).map(|i| f.deriv(i)).collect())
            .collect();
        let targets = MultiIndex::all(n, a.degree());
        let mut out = PolyForm::zero(n, a.degree());
        for (mi, c) in a.terms() {
            let rows = mi.to_vec();
            let c_pulled = c.compose(&comps)?;
            for t in &targets {
                let d = poly_det(&jac, &rows, &t.to_vec())?;
                if !d.is_zero() {
                    out.add_mi(*t, c_pulled.try_mul(&d)?);
                }
            }
        }
        Ok(out)
    }
}

/// x ↦ linear·x + offset.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub linear: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if linear.nrows() != offset.len() {
            return Err(Error::DimensionMismatch(linear.nrows(), offset.len()));
        }
        Ok(AffineMap { linear, offset })
    }

    pub fn identity(n: usize) -> Self {
        AffineMap {
            linear: DMatrix::identity(n, n),
            offset: DVector::zeros(n),
        }
    }

    /// p ↦ base + Σ p_a·frame[a].
    pub fn inclusion(frame: &[Vec<f64>], base: &[f64]) -> Self {
        let n = base.len();
        AffineMap {
            linear: DMatrix::from_fn(n, frame.len(), |r, c| frame[c][r]),
            offset: DVector::from_column_slice(base),
        }
    }

    /// self ∘ inner.
    pub fn compose(&self, inner: &AffineMap) -> Result<Self> {
        if self.linear.ncols() != inner.linear.nrows() {
            return Err(Error::DimensionMismatch(self.linear.ncols(), inner.linear.nrows()));
        }
        Ok(AffineMap {
            linear: &self.linear * &inner.linear,
            offset: &self.linear * &inner.offset + &self.offset,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.linear * DVector::from_column_slice(x) + &self.offset)
            .iter()
            .copied()
            .collect()
    }

    /// Pullback of a constant-coefficient form.
    pub fn pullback(&self, a: &Form<f64>) -> Result<Form<f64>> {
        a.pullback_linear(&self.linear)
    }
}

impl Pullback for AffineMap {
    fn domain_dim(&self) -> usize {
        self.linear.ncols()
    }
    fn codomain_dim(&self) -> usize {
        self.linear.nrows()
    }
    fn components(&self) -> Vec<Poly> {
        (0..self.linear.nrows())
            .map(|j| {
                let row: Vec<f64> = self.linear.row(j).iter().copied().collect();
                Poly::affine(self.offset[j], &row)
            })
            .collect()
    }
}

/// x ↦ (μ(x), x) from ℝⁿ into ℝ × ℝⁿ, with the graph coordinate as axis 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphMap {
    pub mu: Poly,
    pub domain_dim: usize,
}

impl GraphMap {
    pub fn pullback(&self, a: &PolyForm) -> Result<PolyForm> {
        self.pullback_poly(a)
    }
}

impl Pullback for GraphMap {
    fn domain_dim(&self) -> usize {
        self.domain_dim
    }
    fn codomain_dim(&self) -> usize {
        self.domain_dim + 1
    }
    fn components(&self) -> Vec<Poly> {
        std::iter::once(self.mu.clone())
            .chain((0..self.domain_dim).map(Poly::var))
            .collect()
    }
}

/// A symmetric bilinear form with a cached positive-definiteness flag.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    matrix: DMatrix<f64>,
    positive_definite: bool,
}

impl Metric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::pre("metric matrix is not square"));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-12 * scale {
            return Err(Error::pre("metric matrix is not symmetric"));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let positive_definite = matrix.clone().cholesky().is_some();
        Ok(Metric {
            matrix,
            positive_definite,
        })
    }

    pub fn identity(n: usize) -> Self {
        Metric {
            matrix: DMatrix::identity(n, n),
            positive_definite: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * self.matrix[(i, j)] * v[j];
            }
        }
        s
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Raises an index: the vector v with g(v, ·) = ξ.
    pub fn sharp(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let lu = self.matrix.clone().lu();
        lu.solve(&DVector::from_column_slice(xi))
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::Numeric("singular metric".into()))
    }

    pub fn flat(&self, v: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(v)).iter().copied().collect()
    }

    /// √det g, the coefficient of the volume form.
    pub fn volume_coeff(&self) -> f64 {
        self.matrix.determinant().abs().sqrt()
    }

    /// Gram–Schmidt in this metric; returns None on (near) dependence.
    pub fn orthonormalize(&self, vs: &[Vec<f64>], tol: f64) -> Option<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
        for v in vs {
            let mut w = v.clone();
            for _ in 0..2 {
                for q in &out {
                    let c = self.inner(&w, q);
                    w.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
                }
            }
            let n = self.norm(&w);
            if n <= tol * self.norm(v).max(1.0) {
                return None;
            }
            w.iter_mut().for_each(|a| *a /= n);
            out.push(w);
        }
        Some(out)
    }
}

/// Hodge star of a constant form for a positive-definite metric; `orient`
/// = ±1 selects which of the two unit volume forms is positive.
pub fn hodge_star(g: &Metric, orient: i8, a: &Form<f64>) -> Result<Form<f64>> {
    let n = g.dim();
    if a.dim() != n {
        return Err(Error::DimensionMismatch(n, a.dim()));
    }
    let chol = g
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::pre("Hodge star needs a positive-definite metric"))?;
    // θ = Lᵀ dx is g-orthonormal, so dx = (Lᵀ)⁻¹ θ.
    let lt = chol.l().transpose();
    let lt_inv = lt
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let in_theta = a.pullback_linear(&lt_inv)?;
    let mut starred = Form::zero(n, n - a.degree());
    for (mi, c) in in_theta.terms() {
        let comp = mi.complement(n);
        let s = mi.wedge_sign(comp) * orient.signum();
        starred.add_mi(comp, c * s as f64);
    }
    starred.pullback_linear(&lt)
}

/// How `dxk` in text maps to internal axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Labels {
    /// x₁…xₙ ↦ axes 0…n−1.
    OneBased,
    /// x₀…x_{n−1} ↦ axes 0…n−1; `dt` is x₀.
    ZeroBased,
    /// One-based below dimension 7. From dimension 7 on: zero-based if `dt`
    /// or a 0 label occurs or no label reaches n, else one-based.
    Auto,
}

#[derive(Clone, Debug)]
pub struct Parsed {
    pub form: Form<f64>,
    pub warnings: Vec<String>,
}

/// Parses `form := term (('+'|'-') term)*`, `term := [coeff '*'] factor ('^' factor)*`,
/// `factor := 'dt' | 'dx' digit+`.
pub fn parse_form(text: &str, dim: usize, labels: Labels) -> Result<Parsed> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Parse(format!("dimension {dim} outside 1..={MAX_DIM}")));
    }
    let raw = parse_terms(text)?;
    let labels = match labels {
        Labels::Auto if dim < 7 => Labels::OneBased,
        Labels::Auto => {
            let any_zero = raw.iter().any(|(_, ls)| ls.contains(&0));
            let reaches_n = raw.iter().any(|(_, ls)| ls.iter().any(|&l| l >= dim));
            if any_zero || !reaches_n {
                Labels::ZeroBased
            } else {
                Labels::OneBased
            }
        }
        l => l,
    };
    let degree = raw[0].1.len();
    let mut form = Form::zero(dim, degree);
    let mut warnings = Vec::new();
    for (c, ls) in &raw {
        if ls.len() != degree {
            return Err(Error::Parse(format!(
                "mixed degrees: {} and {}",
                degree,
                ls.len()
            )));
        }
        let mut axes = Vec::with_capacity(ls.len());
        for &l in ls {
            let axis = match labels {
                Labels::OneBased if l == 0 => {
                    return Err(Error::Parse("label 0 with one-based labels".into()))
                }
                Labels::OneBased => l - 1,
                _ => l,
            };
            if axis >= dim {
                return Err(Error::Parse(format!("axis label {l} out of range for dimension {dim}")));
            }
            axes.push(axis);
        }
        let (_, sign) = MultiIndex::normalize(&axes);
        if sign == 0 {
            warnings.push(format!("repeated index in term {ls:?}; term is zero"));
            continue;
        }
        form.add_term(&axes, *c);
    }
    Ok(Parsed { form, warnings })
}

/// Splits text into (signed coefficient, raw label list) pairs; `dt` is label 0.
fn parse_terms(text: &str) -> Result<Vec<(f64, Vec<usize>)>> {
    let s: Vec<char> = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| if c == '∧' { '^' } else { c })
        .collect();
    if s.is_empty() {
        return Err(Error::Parse("empty form".into()));
    }
    let err = |pos: usize, msg: &str| Error::Parse(format!("{msg} at position {pos} in {text:?}"));
    let mut pos = 0;
    let mut out = Vec::new();
    loop {
        let mut sign = 1.0;
        if pos < s.len() && (s[pos] == '+' || s[pos] == '-') {
            if s[pos] == '-' {
                sign = -1.0;
            }
            pos += 1;
        } else if !out.is_empty() {
            return Err(err(pos, "expected '+' or '-'"));
        }
        let mut coeff = 1.0;
        if pos < s.len() && (s[pos].is_ascii_digit() || s[pos] == '.') {
            let start = pos;
            while pos < s.len() && (s[pos].is_ascii_digit() || s[pos] == '.') {
                pos += 1;
            }
            if pos < s.len() && (s[pos] == 'e' || s[pos] == 'E') {
                pos += 1;
                if pos < s.len() && (s[pos] == '+' || s[pos] == '-') {
                    pos += 1;
                }
                while pos < s.len() && s[pos].is_ascii_digit() {
                    pos += 1;
                }
            }
            let num: String = s[start..pos].iter().collect();
            coeff = num.parse().map_err(|_| err(start, "malformed coefficient"))?;
            if pos >= s.len() || s[pos] != '*' {
                return Err(err(pos, "expected '*' after coefficient"));
            }
            pos += 1;
        }
        let mut labels = Vec::new();
        loop {
            if s[pos..].starts_with(&['d', 't']) {
                labels.push(0);
                pos += 2;
            } else if s[pos..].starts_with(&['d', 'x']) {
                pos += 2;
                let start = pos;
                while pos < s.len() && s[pos].is_ascii_digit() {
                    labels.push(s[pos].to_digit(10).unwrap() as usize);
                    pos += 1;
                }
                if pos == start {
                    return Err(err(pos, "expected digits after 'dx'"));
                }
            } else {
                return Err(err(pos, "expected 'dx' or 'dt'"));
            }
            if pos < s.len() && s[pos] == '^' {
                pos += 1;
            } else {
                break;
            }
        }
        out.push((sign * coeff, labels));
        if pos >= s.len() {
            return Ok(out);
        }
    }
}

impl Form<f64> {
    /// Text rendering in the parser's grammar.
    pub fn render(&self, labels: Labels) -> String {
        let one_based = match labels {
            Labels::OneBased => true,
            Labels::ZeroBased => false,
            Labels::Auto => self.dim < 7,
        };
        if self.is_zero() {
            return "0".into();
        }
        let mut out = String::new();
        for (i, (mi, c)) in self.terms().enumerate() {
            let (sign, mag) = if *c < 0.0 { ("-", -c) } else { ("+", *c) };
            if i == 0 {
                if sign == "-" {
                    out.push('-');
                }
            } else {
                out.push_str(&format!(" {sign} "));
            }
            if mag != 1.0 || mi.degree() == 0 {
                out.push_str(&format!("{mag}"));
                if mi.degree() > 0 {
                    out.push('*');
                }
            }
            if mi.degree() > 0 {
                out.push_str("dx");
                for a in mi.axes() {
                    out.push_str(&(a + one_based as usize).to_string());
                }
            }
        }
        out
    }
}

impl fmt::Display for Form<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render(Labels::Auto))
    }
}

impl<C: Coeff> fmt::Debug for Form<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form(dim={}, degree={}, ", self.dim, self.degree)?;
        f.debug_map().entries(self.terms.iter()).finish()?;
        write!(f, ")")
    }
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    idx: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<Vec<MonomialJson>>,
}

#[derive(Serialize, Deserialize)]
struct FormJson {
    dim: usize,
    degree: usize,
    terms: Vec<TermJson>,
}

impl<C: Coeff> Serialize for Form<C> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FormJson {
            dim: self.dim,
            degree: self.degree,
            terms: self
                .terms
                .iter()
                .map(|(mi, c)| {
                    let (c, poly) = c.to_json_parts();
                    TermJson {
                        idx: mi.to_vec(),
                        c,
                        poly,
                    }
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, C: Coeff> Deserialize<'de> for Form<C> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FormJson::deserialize(d)?;
        if j.dim == 0 || j.dim > MAX_DIM {
            return Err(D::Error::custom(format!("dimension {} outside 1..={MAX_DIM}", j.dim)));
        }
        let mut f = Form::zero(j.dim, j.degree);
        for t in j.terms {
            if t.idx.len() != j.degree || t.idx.iter().any(|&i| i >= j.dim) {
                return Err(D::Error::custom(format!("bad index list {:?}", t.idx)));
            }
            let c = C::from_json_parts(t.c, t.poly.as_deref()).map_err(D::Error::custom)?;
            f.add_term(&t.idx, c);
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p6(s: &str) -> Form {
        parse_form(s, 6, Labels::Auto).unwrap().form
    }

    #[test]
    fn normalization_sign() {
        assert_eq!(MultiIndex::normalize(&[5, 2, 1]).1, -1);
        // (6,3,2) → (2,3,6) is a single transposition of 6 and 2.
        assert_eq!(MultiIndex::normalize(&[6, 3, 2]).1, -1);
        assert_eq!(MultiIndex::normalize(&[1, 1]).1, 0);
        assert_eq!(p6("dx632"), p6("-dx236"));
    }

    #[test]
    fn interior_of_basis_term() {
        let f = p6("dx123");
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(f.interior(&e1).unwrap(), p6("dx23"));
        let e2 = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(f.interior(&e2).unwrap(), p6("-dx13"));
        assert!(f.interior(&[0.0; 6]).unwrap().is_zero());
        assert!(Form::scalar(6, 1.0).interior(&e1).is_err());
    }

    #[test]
    fn wedge_overflow_and_zero() {
        let a = p6("dx123");
        assert!(a.wedge(&p6("dx1234")).unwrap().is_zero());
        assert!(a.wedge(&Form::zero(6, 2)).unwrap().is_zero());
        assert!(a.wedge(&Form::term(7, &[0], 1.0)).is_err());
    }

    #[test]
    fn eval_matches_determinant() {
        let f = p6("dx12");
        let u = [1.0, 2.0, 0.0, 0.0, 0.0, 0.0];
        let v = [3.0, 4.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(f.eval(&[&u, &v]), -2.0);
    }

    #[test]
    fn parser_rejects_garbage() {
        assert!(parse_form("dx12 + ", 6, Labels::Auto).is_err());
        assert!(parse_form("dx12 dx34", 6, Labels::Auto).is_err());
        assert!(parse_form("dx17", 6, Labels::Auto).is_err());
        assert!(parse_form("dx12 + dx3", 6, Labels::Auto).is_err());
        assert!(parse_form("2dx12", 6, Labels::Auto).is_err());
    }

    #[test]
    fn parser_repeated_index_warns() {
        let p = parse_form("dx11", 6, Labels::Auto).unwrap();
        assert!(p.form.is_zero());
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn parser_aliases_and_labels() {
        let a = parse_form("dt^dx12", 7, Labels::Auto).unwrap().form;
        let b = parse_form("dx012", 7, Labels::Auto).unwrap().form;
        assert_eq!(a, b);
        assert_eq!(a, Form::term(7, &[0, 1, 2], 1.0));
        // A label 7 in dimension 7 selects one-based labels.
        let phi = parse_form("dx123 + dx167", 7, Labels::Auto).unwrap().form;
        assert_eq!(phi.coeff(&[0, 5, 6]), 1.0);
        let c = parse_form("0.5*dx12 - 1e-3*dx34", 6, Labels::Auto).unwrap().form;
        assert_eq!(c.coeff(&[2, 3]), -1e-3);
    }

    #[test]
    fn render_round_trip() {
        let f = p6("dx135 - dx146 - 0.25*dx236 + dx632");
        let back = p6(&f.render(Labels::Auto));
        assert_eq!(f, back);
        assert_eq!(p6("dx21").render(Labels::Auto), "-dx12");
    }

    #[test]
    fn json_round_trip_real_and_poly() {
        let f = p6("dx135 - 2*dx146");
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(
            s,
            r#"{"dim":6,"degree":3,"terms":[{"idx":[0,2,4],"c":1.0},{"idx":[0,3,5],"c":-2.0}]}"#
        );
        let back: Form = serde_json::from_str(&s).unwrap();
        assert_eq!(f, back);

        let mut g = PolyForm::zero(7, 4);
        g.add_term(&[0, 1, 2, 4], Poly::var(0).scale(0.01));
        let s = serde_json::to_string(&g).unwrap();
        let back: PolyForm = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn hodge_in_r3() {
        let g = Metric::identity(3);
        let f = Form::term(3, &[0], 1.0);
        assert_eq!(hodge_star(&g, 1, &f).unwrap(), Form::term(3, &[1, 2], 1.0));
        let one = Form::scalar(3, 1.0);
        assert_eq!(hodge_star(&g, 1, &one).unwrap(), Form::term(3, &[0, 1, 2], 1.0));
    }

    #[test]
    fn exterior_derivative_examples() {
        let mut f = PolyForm::zero(6, 1);
        f.add_term(&[1], Poly::var(0));
        let mut expect = PolyForm::zero(6, 2);
        expect.add_term(&[0, 1], Poly::constant(1.0));
        assert_eq!(f.exterior_derivative(), expect);

        let mut g = PolyForm::zero(6, 1);
        g.add_term(&[1], Poly::var(0).try_mul(&Poly::var(2)).unwrap());
        assert!(g.exterior_derivative().exterior_derivative().is_zero());
        assert!(p6("dx12").to_poly().exterior_derivative().is_zero());
    }

    #[test]
    fn graph_map_pullback() {
        // dt∧ω with μ ≡ 0 pulls back to zero.
        let omega = p6("dx12 + dx34 + dx56").embed(7, 1);
        let dt = Form::term(7, &[0], 1.0);
        let a = dt.wedge(&omega).unwrap().to_poly();
        let flat = GraphMap { mu: Poly::zero(), domain_dim: 6 };
        assert!(flat.pullback(&a).unwrap().is_zero());
        // μ = x₀ gives dt ↦ dx₀.
        let tilted = GraphMap { mu: Poly::var(0), domain_dim: 6 };
        let pulled = tilted.pullback(&dt.to_poly()).unwrap();
        assert_eq!(pulled, Form::term(6, &[0], Poly::constant(1.0)));
    }
}
