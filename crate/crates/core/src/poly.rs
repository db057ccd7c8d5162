//! Sparse multivariate polynomials in at most eight variables, used as
//! coefficients of non-constant forms.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exterior::MAX_DIM;
use crate::{Error, Result};

/// Largest total degree a product may reach.
pub const MAX_DEGREE: u32 = 6;

pub type Exponent = [u8; MAX_DIM];

#[derive(Clone, PartialEq, Default)]
pub struct Poly {
    terms: BTreeMap<Exponent, f64>,
}

fn total(e: &Exponent) -> u32 {
    e.iter().map(|&k| k as u32).sum()
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial([0; MAX_DIM], c)
    }

    /// The coordinate function x_i.
    pub fn var(i: usize) -> Self {
        let mut e = [0; MAX_DIM];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(e: Exponent, c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(e, c);
        p
    }

    /// Affine function c₀ + Σ aᵢxᵢ.
    pub fn affine(c0: f64, a: &[f64]) -> Self {
        let mut p = Self::constant(c0);
        for (i, &ai) in a.iter().enumerate() {
            let mut e = [0; MAX_DIM];
            e[i] = 1;
            p.add_term(e, ai);
        }
        p
    }

    pub fn add_term(&mut self, e: Exponent, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.remove(&e);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &f64)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(total).max().unwrap_or(0)
    }

    pub fn constant_term(&self) -> f64 {
        self.terms.get(&[0; MAX_DIM]).copied().unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| total(e) == 0)
    }

    /// Highest variable index that occurs, plus one.
    pub fn nvars(&self) -> usize {
        self.terms
            .keys()
            .filter_map(|e| e.iter().rposition(|&k| k > 0))
            .max()
            .map_or(0, |i| i + 1)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut p = Self::zero();
        for (e, c) in &self.terms {
            p.add_term(*e, c * s);
        }
        p
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = self.clone();
        for (e, c) in &other.terms {
            p.add_term(*e, *c);
        }
        p
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let mut p = Self::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let mut e = *ea;
                for (k, b) in e.iter_mut().zip(eb) {
                    *k += b;
                }
                let d = total(&e);
                if d > MAX_DEGREE {
                    return Err(Error::DegreeOverflow(d));
                }
                p.add_term(e, ca * cb);
            }
        }
        Ok(p)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .fold(*c, |acc, (i, &k)| acc * x[i].powi(k as i32))
            })
            .sum()
    }

    pub fn deriv(&self, var: usize) -> Self {
        let mut p = Self::zero();
        for (e, c) in &self.terms {
            if e[var] > 0 {
                let mut e2 = *e;
                e2[var] -= 1;
                p.add_term(e2, c * e[var] as f64);
            }
        }
        p
    }

    /// Substitutes `subs[i]` for x_i.
    pub fn compose(&self, subs: &[Poly]) -> Result<Self> {
        let mut out = Self::zero();
        let mut powers: Vec<Vec<Poly>> = vec![vec![Poly::constant(1.0)]; subs.len()];
        for (e, c) in &self.terms {
            let mut term = Poly::constant(*c);
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let sub = subs
                    .get(i)
                    .ok_or_else(|| Error::DimensionMismatch(i + 1, subs.len()))?;
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().unwrap().try_mul(sub)?;
                    powers[i].push(next);
                }
                term = term.try_mul(&powers[i][k as usize])?;
            }
            out = out.add(&term);
        }
        Ok(out)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "·x{i}")?,
                    _ => write!(f, "·x{i}^{k}")?,
                }
            }
        }
        Ok(())
    }
}

/// One monomial in the JSON encoding: `{"exp":[1,0,2],"c":0.5}`.
#[derive(Serialize, Deserialize, Clone, Debug)]
pub struct MonomialJson {
    pub exp: Vec<u8>,
    pub c: f64,
}

impl Poly {
    pub fn to_json(&self) -> Vec<MonomialJson> {
        self.terms
            .iter()
            .map(|(e, c)| {
                let len = e.iter().rposition(|&k| k > 0).map_or(0, |i| i + 1);
                MonomialJson {
                    exp: e[..len].to_vec(),
                    c: *c,
                }
            })
            .collect()
    }

    pub fn from_json(monos: &[MonomialJson]) -> Result<Self> {
        let mut p = Self::zero();
        for m in monos {
            if m.exp.len() > MAX_DIM {
                return Err(Error::Parse(format!(
                    "monomial exponent has {} entries, at most {MAX_DIM} allowed",
                    m.exp.len()
                )));
            }
            let mut e = [0; MAX_DIM];
            e[..m.exp.len()].copy_from_slice(&m.exp);
            if total(&e) > MAX_DEGREE {
                return Err(Error::DegreeOverflow(total(&e)));
            }
            p.add_term(e, m.c);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_derivative() {
        let x = Poly::var(0);
        let y = Poly::var(1);
        let p = x.add(&y).try_mul(&x.sub(&y)).unwrap();
        assert_eq!(p.eval(&[3.0, 2.0]), 5.0);
        assert_eq!(p.deriv(0).eval(&[3.0, 2.0]), 6.0);
        assert_eq!(p.deriv(1).eval(&[3.0, 2.0]), -4.0);
        assert_eq!(p.degree(), 2);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let x = Poly::var(0);
        let mut p = Poly::constant(1.0);
        for _ in 0..6 {
            p = p.try_mul(&x).unwrap();
        }
        assert!(matches!(p.try_mul(&x), Err(Error::DegreeOverflow(7))));
    }

    #[test]
    fn compose_matches_pointwise_evaluation() {
        let p = Poly::var(0).try_mul(&Poly::var(1)).unwrap().add(&Poly::constant(2.0));
        let subs = [Poly::affine(1.0, &[2.0, 0.0]), Poly::affine(0.0, &[1.0, -1.0])];
        let q = p.compose(&subs).unwrap();
        let pt = [0.3, -0.7];
        let direct = p.eval(&[subs[0].eval(&pt), subs[1].eval(&pt)]);
        assert!((q.eval(&pt) - direct).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let p = Poly::var(2).try_mul(&Poly::var(2)).unwrap().scale(0.5).add(&Poly::constant(-1.0));
        let back = Poly::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
    }
}
