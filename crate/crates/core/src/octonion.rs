//! Octonions by Cayley–Dickson doubling of the quaternions,
//! (a,b)(c,d) = (ac − d̄b, da + bc̄), in the basis {1,i,j,k,e,ie,je,ke}.
//!
//! The imaginary units i…ke are identified with axes 0…6 of ℝ⁷.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::exterior::{Form, MultiIndex};
use crate::{g2, Error, Result};

/// |Re| at or below this counts as imaginary.
pub const IMAGINARY_TOL: f64 = 1e-12;

pub const BASIS_LABELS: [&str; 8] = ["1", "i", "j", "k", "e", "ie", "je", "ke"];

#[derive(Clone, Copy, PartialEq, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Octonion(pub [f64; 8]);

pub type Quaternion = [f64; 4];

pub fn qmul(a: &Quaternion, b: &Quaternion) -> Quaternion {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn qconj(a: &Quaternion) -> Quaternion {
    [a[0], -a[1], -a[2], -a[3]]
}

impl Octonion {
    pub const ZERO: Octonion = Octonion([0.0; 8]);

    pub fn unit(k: usize) -> Self {
        let mut c = [0.0; 8];
        c[k] = 1.0;
        Octonion(c)
    }

    pub fn real(r: f64) -> Self {
        let mut c = [0.0; 8];
        c[0] = r;
        Octonion(c)
    }

    pub fn from_quaternions(a: Quaternion, b: Quaternion) -> Self {
        let mut c = [0.0; 8];
        c[..4].copy_from_slice(&a);
        c[4..].copy_from_slice(&b);
        Octonion(c)
    }

    pub fn quaternion(q: Quaternion) -> Self {
        Self::from_quaternions(q, [0.0; 4])
    }

    /// Imaginary octonion with components on i…ke.
    pub fn from_im(v: &[f64]) -> Self {
        let mut c = [0.0; 8];
        c[1..].copy_from_slice(&v[..7]);
        Octonion(c)
    }

    pub fn halves(&self) -> (Quaternion, Quaternion) {
        let c = &self.0;
        ([c[0], c[1], c[2], c[3]], [c[4], c[5], c[6], c[7]])
    }

    pub fn re(&self) -> f64 {
        self.0[0]
    }

    pub fn im(&self) -> Octonion {
        let mut c = self.0;
        c[0] = 0.0;
        Octonion(c)
    }

    pub fn im_vec(&self) -> [f64; 7] {
        let mut v = [0.0; 7];
        v.copy_from_slice(&self.0[1..]);
        v
    }

    pub fn conj(&self) -> Octonion {
        let mut c = self.0.map(|x| -x);
        c[0] = self.0[0];
        Octonion(c)
    }

    pub fn dot(&self, other: &Octonion) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn scale(&self, s: f64) -> Octonion {
        Octonion(self.0.map(|x| x * s))
    }

    pub fn is_imaginary(&self) -> bool {
        self.re().abs() <= IMAGINARY_TOL
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl Mul for Octonion {
    type Output = Octonion;
    fn mul(self, y: Octonion) -> Octonion {
        let (a, b) = self.halves();
        let (c, d) = y.halves();
        let ac = qmul(&a, &c);
        let dbar_b = qmul(&qconj(&d), &b);
        let da = qmul(&d, &a);
        let b_cbar = qmul(&b, &qconj(&c));
        Octonion::from_quaternions(
            [0, 1, 2, 3].map(|k| ac[k] - dbar_b[k]),
            [0, 1, 2, 3].map(|k| da[k] + b_cbar[k]),
        )
    }
}

impl Add for Octonion {
    type Output = Octonion;
    fn add(self, y: Octonion) -> Octonion {
        Octonion(std::array::from_fn(|k| self.0[k] + y.0[k]))
    }
}

impl Sub for Octonion {
    type Output = Octonion;
    fn sub(self, y: Octonion) -> Octonion {
        Octonion(std::array::from_fn(|k| self.0[k] - y.0[k]))
    }
}

impl Neg for Octonion {
    type Output = Octonion;
    fn neg(self) -> Octonion {
        self.scale(-1.0)
    }
}

/// x × y = −½(x̄y − ȳx).
pub fn cross2(x: Octonion, y: Octonion) -> Octonion {
    (x.conj() * y - y.conj() * x).scale(-0.5)
}

/// x × y × z = ½(x(ȳz) − z(ȳx)).
pub fn cross3(x: Octonion, y: Octonion, z: Octonion) -> Octonion {
    let yb = y.conj();
    (x * (yb * z) - z * (yb * x)).scale(0.5)
}

/// [u,v,w] = (u×v)×w + ⟨v,w⟩u − ⟨u,w⟩v on imaginary octonions.
pub fn associator(u: Octonion, v: Octonion, w: Octonion) -> Result<Octonion> {
    if !(u.is_imaginary() && v.is_imaginary() && w.is_imaginary()) {
        return Err(Error::pre("associator needs imaginary arguments"));
    }
    Ok(cross2(cross2(u, v), w) + u.scale(v.dot(&w)) - v.scale(u.dot(&w)))
}

/// The algebra associator (xy)z − x(yz).
pub fn oct_associator(x: Octonion, y: Octonion, z: Octonion) -> Octonion {
    (x * y) * z - x * (y * z)
}

/// φ(u,v,w) = ⟨u×v, w⟩ on Im 𝕆 = ℝ⁷ (axis a ↔ unit a+1).
pub fn phi_octonion() -> Form {
    let mut phi = Form::zero(7, 3);
    for t in MultiIndex::all(7, 3) {
        let a = t.to_vec();
        let c = cross2(Octonion::unit(a[0] + 1), Octonion::unit(a[1] + 1)).dot(&Octonion::unit(a[2] + 1));
        phi.add_term(&a, c);
    }
    phi
}

/// ψ(u,v,w,z) = ⟨[u,v,w], z⟩ on Im 𝕆.
pub fn psi_octonion() -> Form {
    let mut psi = Form::zero(7, 4);
    for t in MultiIndex::all(7, 4) {
        let a = t.to_vec();
        let u = |k: usize| Octonion::unit(a[k] + 1);
        let c = associator(u(0), u(1), u(2)).unwrap().dot(&u(3));
        psi.add_term(&a, c);
    }
    psi
}

/// A signed permutation of ℝ⁷: e_a ↦ sign[a]·e_{perm[a]}.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignedPermutation {
    pub perm: [usize; 7],
    pub sign: [i8; 7],
}

impl SignedPermutation {
    /// Matrix with column a equal to sign[a]·e_{perm[a]}.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(7, 7);
        for a in 0..7 {
            m[(self.perm[a], a)] = self.sign[a] as f64;
        }
        m
    }

    pub fn apply(&self, v: &[f64]) -> [f64; 7] {
        let mut out = [0.0; 7];
        for a in 0..7 {
            out[self.perm[a]] = self.sign[a] as f64 * v[a];
        }
        out
    }
}

/// The map P from octonion coordinates to the coordinates of the standard
/// φ₀ with P*φ₀ = φ_𝕆; found once by exhaustive search.
pub fn basis_identification() -> &'static SignedPermutation {
    static ID: OnceLock<SignedPermutation> = OnceLock::new();
    ID.get_or_init(|| find_identification(&phi_octonion(), &g2::phi0()).expect("no identification exists"))
}

fn find_identification(source: &Form, target: &Form) -> Option<SignedPermutation> {
    let src: Vec<(Vec<usize>, f64)> = source.terms().map(|(m, c)| (m.to_vec(), *c)).collect();
    for perm in (0..7).permutations(7) {
        // Supports must agree before signs are worth trying.
        let supported = src.iter().all(|(idx, _)| {
            let mapped: Vec<usize> = idx.iter().map(|&a| perm[a]).collect();
            target.coeff(&mapped) != 0.0
        });
        if !supported || src.len() != target.len() {
            continue;
        }
        for bits in 0u8..128 {
            let sign: [i8; 7] = std::array::from_fn(|a| if bits >> a & 1 == 1 { -1 } else { 1 });
            let ok = src.iter().all(|(idx, c)| {
                let mapped: Vec<usize> = idx.iter().map(|&a| perm[a]).collect();
                let s: f64 = idx.iter().map(|&a| sign[a] as f64).product();
                target.coeff(&mapped) == s * c
            });
            if ok {
                return Some(SignedPermutation {
                    perm: std::array::from_fn(|a| perm[a]),
                    sign,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Independent recursive Cayley–Dickson product on 2ⁿ-component vectors.
    fn cd_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = a.len();
        if n == 1 {
            return vec![a[0] * b[0]];
        }
        let h = n / 2;
        let conj = |x: &[f64]| -> Vec<f64> {
            x.iter().enumerate().map(|(i, v)| if i == 0 { *v } else { -v }).collect()
        };
        let (p, q) = a.split_at(h);
        let (r, s) = b.split_at(h);
        let pr = cd_mul(p, r);
        let sbar_q = cd_mul(&conj(s), q);
        let sp = cd_mul(s, p);
        let q_rbar = cd_mul(q, &conj(r));
        let mut out: Vec<f64> = pr.iter().zip(&sbar_q).map(|(x, y)| x - y).collect();
        out.extend(sp.iter().zip(&q_rbar).map(|(x, y)| x + y));
        out
    }

    fn rand_oct(seed: u64, i: u64) -> Octonion {
        let mut r = sample_rng(seed, i);
        Octonion(std::array::from_fn(|_| r.sample(StandardNormal)))
    }

    fn rand_im(seed: u64, i: u64) -> Octonion {
        rand_oct(seed, i).im()
    }

    fn close(a: &Octonion, b: &Octonion, tol: f64) -> bool {
        (*a - *b).max_abs() <= tol
    }

    #[test]
    fn product_agrees_with_recursive_oracle() {
        for i in 0..200 {
            let (x, y) = (rand_oct(1, 2 * i), rand_oct(1, 2 * i + 1));
            let oracle = cd_mul(&x.0, &y.0);
            assert!((x * y).0.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn unit_products() {
        let u = Octonion::unit;
        assert_eq!(u(1) * u(2), u(3));
        assert_eq!(u(4) * u(4), Octonion::real(-1.0));
        assert_eq!(u(1) * u(4), u(5));
    }

    #[test]
    fn alternative_and_norm_multiplicative() {
        for i in 0..200 {
            let (x, y) = (rand_oct(2, 2 * i), rand_oct(2, 2 * i + 1));
            assert!(((x * y).norm() - x.norm() * y.norm()).abs() < 1e-10);
            assert!(close(&(x * (x * y)), &((x * x) * y), 1e-10));
        }
    }

    #[test]
    fn cross2_properties() {
        let u = Octonion::unit;
        assert_eq!(cross2(u(1), u(2)), u(3));
        for i in 0..100 {
            let (x, y) = (rand_im(3, 2 * i), rand_im(3, 2 * i + 1));
            let c = cross2(x, y);
            assert!(close(&c, &(x * y).im(), 1e-12));
            assert!(c.dot(&x).abs() < 1e-12 && c.dot(&y).abs() < 1e-12);
            assert!(close(&c, &-cross2(y, x), 1e-12));
            assert!(cross2(x, x).max_abs() < 1e-12);
        }
    }

    #[test]
    fn cross3_frozen_values() {
        let u = Octonion::unit;
        // Oracle: ½(i(−j·k) − k(−j·i)) through the recursive product.
        let i = u(1).0;
        let j_conj: Vec<f64> = u(2).conj().0.to_vec();
        let k = u(3).0;
        let left = cd_mul(&i, &cd_mul(&j_conj, &k));
        let right = cd_mul(&k, &cd_mul(&j_conj, &i));
        let oracle: Vec<f64> = left.iter().zip(&right).map(|(a, b)| 0.5 * (a - b)).collect();
        assert_eq!(oracle, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(cross3(u(1), u(2), u(3)), Octonion::real(1.0));
        assert_eq!(cross3(Octonion::ZERO, u(2), u(3)), Octonion::ZERO);
        // x × x × y = ½(x(x̄y) − y|x|²) = ½(|x|²y − |x|²y) = 0 by alternativity.
        for n in 0..50 {
            let (x, y) = (rand_oct(4, 2 * n), rand_oct(4, 2 * n + 1));
            assert!(cross3(x, x, y).max_abs() < 1e-10);
        }
    }

    #[test]
    fn associator_frozen_values() {
        let u = Octonion::unit;
        assert_eq!(associator(u(1), u(2), u(3)).unwrap(), Octonion::ZERO);
        assert_eq!(associator(u(1), u(2), u(4)).unwrap(), u(7));
        assert!(associator(Octonion::real(1.0), u(2), u(3)).is_err());
        let x = rand_im(5, 0);
        assert!(associator(x, x, rand_im(5, 1)).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn bracket_matches_triple_cross_product() {
        // The bracket built from the cross product equals Im(x×y×z), which is
        // half the algebra associator (xy)z − x(yz).
        for n in 0..1000 {
            let (x, y, z) = (rand_im(6, 3 * n), rand_im(6, 3 * n + 1), rand_im(6, 3 * n + 2));
            let b = associator(x, y, z).unwrap();
            assert!(close(&b, &cross3(x, y, z).im(), 1e-12));
            assert!(close(&oct_associator(x, y, z).scale(0.5), &cross3(x, y, z).im(), 1e-12));
        }
    }

    #[test]
    fn metric_is_minus_real_part() {
        for n in 0..100 {
            let (x, y) = (rand_im(7, 2 * n), rand_im(7, 2 * n + 1));
            assert!((-(x * y).re() - x.dot(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn induced_phi_frozen() {
        let expect = crate::exterior::parse_form(
            "dx123 + dx145 - dx167 + dx246 + dx257 + dx347 - dx356",
            7,
            crate::exterior::Labels::OneBased,
        )
        .unwrap()
        .form;
        assert_eq!(phi_octonion(), expect);
    }

    #[test]
    fn identification_maps_phi0_to_octonion_phi() {
        let p = basis_identification();
        let pulled = g2::phi0().pullback_linear(&p.matrix()).unwrap();
        assert_eq!(pulled, phi_octonion());
        assert!((p.matrix().determinant().abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phi_is_alternating_cross_form() {
        let phi = phi_octonion();
        for n in 0..100 {
            let (x, y, z) = (rand_im(8, 3 * n), rand_im(8, 3 * n + 1), rand_im(8, 3 * n + 2));
            let (a, b, c) = (x.im_vec(), y.im_vec(), z.im_vec());
            let direct = cross2(x, y).dot(&z);
            assert!((phi.eval(&[&a, &b, &c]) - direct).abs() < 1e-12);
            assert!((cross2(y, x).dot(&z) + direct).abs() < 1e-12);
            assert!((cross2(x, z).dot(&y) + direct).abs() < 1e-12);
        }
    }
}
