//! Finite Grassmann algebra with a per-term ghost number.
//!
//! A [`GradedScalar`] is a sparse sum of monomials `c · θ_{i1} θ_{i2} ... θ_{ik}`
//! with `i1 < i2 < ... < ik`. Every monomial carries its own ghost number,
//! which is kept separately from the Grassmann parity so that even fields of
//! negative ghost number (the antighosts) can be represented by bodies.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Maximum number of odd generators (monomials are stored as `u64` masks).
pub const MAX_GENERATORS: usize = 64;

/// A squarefree, index-sorted product of generators with its ghost number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub mask: u64,
    pub ghost: i32,
}

impl Monomial {
    pub const ONE: Monomial = Monomial { mask: 0, ghost: 0 };

    pub fn new(mask: u64, ghost: i32) -> Self {
        Monomial { mask, ghost }
    }

    /// Number of generators in the product.
    pub fn degree(&self) -> u32 {
        self.mask.count_ones()
    }

    pub fn parity(&self) -> u32 {
        self.degree() & 1
    }

    /// `|I| ≡ ghost (mod 2)`.
    pub fn is_consistent(&self) -> bool {
        self.ghost.rem_euclid(2) as u32 == self.parity()
    }

    /// Product of two monomials with its Koszul sign, or `None` when they
    /// share a generator.
    #[inline]
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Monomial) -> Option<(Monomial, f64)> {
        if self.mask & other.mask != 0 {
            return None;
        }
        Some((
            Monomial {
                mask: self.mask | other.mask,
                ghost: self.ghost + other.ghost,
            },
            merge_sign(self.mask, other.mask),
        ))
    }

    /// Indices of the generators, ascending.
    pub fn indices(&self) -> Vec<usize> {
        (0..64).filter(|i| self.mask >> i & 1 == 1).collect()
    }
}

/// Sign of reordering `θ_I θ_J` into sorted order.
#[inline]
pub fn merge_sign(left: u64, right: u64) -> f64 {
    let mut swaps = 0u32;
    let mut r = right;
    while r != 0 {
        let j = r.trailing_zeros();
        // generators of `left` above j must hop over θ_j
        let above = if j == 63 { 0 } else { left >> (j + 1) };
        swaps += above.count_ones();
        r &= r - 1;
    }
    if swaps & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign picked up by moving θ_k to the front of the monomial `mask`.
#[inline]
pub fn front_sign(mask: u64, k: usize) -> f64 {
    let below = mask & ((1u64 << k) - 1);
    if below.count_ones() & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Generator count and per-generator ghost tags.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GrassmannConfig {
    tags: Vec<i32>,
}

impl Default for GrassmannConfig {
    fn default() -> Self {
        GrassmannConfig { tags: vec![1; 8] }
    }
}

impl GrassmannConfig {
    pub fn new(tags: Vec<i32>) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::Schema("Grassmann algebra needs at least one generator".into()));
        }
        if tags.len() > MAX_GENERATORS {
            return Err(Error::Schema(format!(
                "at most {MAX_GENERATORS} generators supported, got {}",
                tags.len()
            )));
        }
        if let Some(t) = tags.iter().find(|t| t.rem_euclid(2) != 1) {
            return Err(Error::Schema(format!(
                "generator ghost tag {t} is even; odd generators need odd tags"
            )));
        }
        Ok(GrassmannConfig { tags })
    }

    pub fn uniform(n: usize, tag: i32) -> Result<Self> {
        Self::new(vec![tag; n])
    }

    pub fn num_generators(&self) -> usize {
        self.tags.len()
    }

    pub fn tag(&self, k: usize) -> i32 {
        self.tags[k]
    }

    pub fn tags(&self) -> &[i32] {
        &self.tags
    }

    /// Append a generator and return its index.
    pub fn push(&mut self, tag: i32) -> Result<usize> {
        if self.tags.len() >= MAX_GENERATORS {
            return Err(Error::GeneratorsExhausted);
        }
        if tag.rem_euclid(2) != 1 {
            return Err(Error::Schema(format!("generator tag {tag} must be odd")));
        }
        self.tags.push(tag);
        Ok(self.tags.len() - 1)
    }

    /// Two configs are compatible when one extends the other.
    pub fn merge(a: &Arc<Self>, b: &Arc<Self>) -> Result<Arc<Self>> {
        if Arc::ptr_eq(a, b) {
            return Ok(a.clone());
        }
        let (short, long) = if a.tags.len() <= b.tags.len() { (a, b) } else { (b, a) };
        if long.tags[..short.tags.len()] == short.tags[..] {
            Ok(long.clone())
        } else {
            Err(Error::ConfigMismatch)
        }
    }
}

/// Result of [`GradedScalar::ghost_grade`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grade {
    /// The zero element, which carries every grade.
    PureZero,
    Pure(i32),
    Mixed,
}

impl Grade {
    /// True when the value is compatible with grade `g`.
    pub fn admits(self, g: i32) -> bool {
        match self {
            Grade::PureZero => true,
            Grade::Pure(h) => h == g,
            Grade::Mixed => false,
        }
    }

    /// Common grade of two values.
    pub fn join(self, other: Grade) -> Grade {
        match (self, other) {
            (Grade::PureZero, g) | (g, Grade::PureZero) => g,
            (Grade::Pure(a), Grade::Pure(b)) if a == b => Grade::Pure(a),
            _ => Grade::Mixed,
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grade::PureZero => write!(f, "zero"),
            Grade::Pure(g) => write!(f, "{g}"),
            Grade::Mixed => write!(f, "mixed"),
        }
    }
}

/// Element of the Grassmann algebra over `f64` with ghost-number bookkeeping.
#[derive(Clone, Debug)]
pub struct GradedScalar {
    config: Arc<GrassmannConfig>,
    terms: BTreeMap<Monomial, f64>,
}

impl PartialEq for GradedScalar {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl GradedScalar {
    pub fn zero(config: Arc<GrassmannConfig>) -> Self {
        GradedScalar { config, terms: BTreeMap::new() }
    }

    /// Body `c` with ghost number 0.
    pub fn constant(config: Arc<GrassmannConfig>, c: f64) -> Self {
        Self::term(config, Monomial::ONE, c)
    }

    pub fn term(config: Arc<GrassmannConfig>, m: Monomial, c: f64) -> Self {
        let mut s = Self::zero(config);
        s.add_term(m, c);
        s
    }

    /// `c · θ_k`, ghost number taken from the generator tag.
    pub fn generator(config: Arc<GrassmannConfig>, k: usize, c: f64) -> Result<Self> {
        if k >= config.num_generators() {
            return Err(Error::GeneratorOutOfRange(k));
        }
        let m = Monomial::new(1 << k, config.tag(k));
        Ok(Self::term(config, m, c))
    }

    /// Product of generators (sorted into canonical order with sign).
    pub fn product_of(config: Arc<GrassmannConfig>, gens: &[usize], c: f64) -> Result<Self> {
        let mut acc = Self::constant(config.clone(), c);
        for &k in gens {
            acc = acc.mul(&Self::generator(config.clone(), k, 1.0)?)?;
        }
        Ok(acc)
    }

    pub fn config(&self) -> &Arc<GrassmannConfig> {
        &self.config
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &f64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: Monomial) -> f64 {
        self.terms.get(&m).copied().unwrap_or(0.0)
    }

    /// Sum of the coefficients of all generator-free terms.
    pub fn body(&self) -> f64 {
        self.terms.iter().filter(|(m, _)| m.mask == 0).map(|(_, c)| c).sum()
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(m).or_insert(0.0);
        *e += c;
        if *e == 0.0 {
            self.terms.remove(&m);
        }
    }

    /// The same element over a smaller (or larger) compatible algebra.
    pub fn in_config(&self, config: Arc<GrassmannConfig>) -> Result<GradedScalar> {
        let n = config.num_generators();
        if let Some(m) = self.terms.keys().find(|m| n < 64 && m.mask >> n != 0) {
            return Err(Error::GeneratorOutOfRange(63 - m.mask.leading_zeros() as usize));
        }
        Ok(GradedScalar { config, terms: self.terms.clone() })
    }

    pub fn add(&self, other: &GradedScalar) -> Result<GradedScalar> {
        let config = GrassmannConfig::merge(&self.config, &other.config)?;
        let mut out = GradedScalar { config, terms: self.terms.clone() };
        for (m, c) in &other.terms {
            out.add_term(*m, *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &GradedScalar) -> Result<GradedScalar> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> GradedScalar {
        let mut out = GradedScalar::zero(self.config.clone());
        for (m, c) in &self.terms {
            out.add_term(*m, c * k);
        }
        out
    }

    /// Graded-commutative product.
    pub fn mul(&self, other: &GradedScalar) -> Result<GradedScalar> {
        let config = GrassmannConfig::merge(&self.config, &other.config)?;
        let mut out = GradedScalar::zero(config);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                if let Some((m, s)) = ma.mul(*mb) {
                    out.add_term(m, s * ca * cb);
                }
            }
        }
        Ok(out)
    }

    /// Left derivative with respect to θ_k.
    pub fn left_derive(&self, k: usize) -> GradedScalar {
        let bit = 1u64 << k;
        let tag = if k < self.config.num_generators() { self.config.tag(k) } else { 1 };
        let mut out = GradedScalar::zero(self.config.clone());
        for (m, c) in &self.terms {
            if m.mask & bit != 0 {
                let s = front_sign(m.mask, k);
                out.add_term(Monomial::new(m.mask & !bit, m.ghost - tag), s * c);
            }
        }
        out
    }

    pub fn ghost_grade(&self) -> Grade {
        self.terms.keys().fold(Grade::PureZero, |g, m| g.join(Grade::Pure(m.ghost)))
    }

    /// Parity of a homogeneous element (`None` when mixed or zero).
    pub fn parity(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|m| m.parity());
        let first = it.next()?;
        it.all(|p| p == first).then_some(first)
    }

    /// Every term satisfies `|I| ≡ ghost (mod 2)`.
    pub fn is_consistent(&self) -> bool {
        self.terms.keys().all(|m| m.is_consistent())
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Restrict to the terms of ghost number `g`.
    pub fn grade_part(&self, g: i32) -> GradedScalar {
        let mut out = GradedScalar::zero(self.config.clone());
        for (m, c) in &self.terms {
            if m.ghost == g {
                out.add_term(*m, *c);
            }
        }
        out
    }

    /// Largest coefficient of `self - other`.
    pub fn distance(&self, other: &GradedScalar) -> f64 {
        let mut d: f64 = 0.0;
        for (m, c) in &self.terms {
            d = d.max((c - other.coeff(*m)).abs());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                d = d.max(c.abs());
            }
        }
        d
    }
}

impl fmt::Display for GradedScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for i in m.indices() {
                write!(f, "·θ{i}")?;
            }
            if m.ghost != m.parity() as i32 {
                write!(f, "[gh {}]", m.ghost)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> Arc<GrassmannConfig> {
        Arc::new(GrassmannConfig::default())
    }

    fn th(k: usize) -> GradedScalar {
        GradedScalar::generator(cfg(), k, 1.0).unwrap()
    }

    #[test]
    fn generators_are_nilpotent() {
        assert!(th(1).mul(&th(1)).unwrap().is_zero());
    }

    #[test]
    fn generators_anticommute() {
        let a = th(1).mul(&th(2)).unwrap();
        let b = th(2).mul(&th(1)).unwrap();
        assert_eq!(a.coeff(Monomial::new(0b110, 2)), 1.0);
        assert_eq!(b.coeff(Monomial::new(0b110, 2)), -1.0);
    }

    #[test]
    fn mixed_product_expands() {
        let c = cfg();
        let lhs = GradedScalar::constant(c.clone(), 2.0)
            .add(&GradedScalar::product_of(c.clone(), &[1, 2], 1.0).unwrap())
            .unwrap();
        let rhs = th(3).scale(3.0);
        let p = lhs.mul(&rhs).unwrap();
        let expected = th(3)
            .scale(6.0)
            .add(&GradedScalar::product_of(c, &[1, 2, 3], 3.0).unwrap())
            .unwrap();
        assert_eq!(p, expected);
    }

    #[test]
    fn left_derivative_signs() {
        let c = cfg();
        let t12 = GradedScalar::product_of(c.clone(), &[1, 2], 1.0).unwrap();
        assert_eq!(t12.left_derive(1), th(2));
        assert_eq!(t12.left_derive(2), th(1).scale(-1.0));
        assert!(GradedScalar::constant(c, 5.0).left_derive(3).is_zero());
    }

    #[test]
    fn ghost_grades() {
        let c = cfg();
        assert_eq!(th(1).ghost_grade(), Grade::Pure(1));
        assert_eq!(GradedScalar::zero(c.clone()).ghost_grade(), Grade::PureZero);
        // θ1 (ghost 1) + θ1θ2θ3 (ghost 3)
        let x = th(1).add(&GradedScalar::product_of(c, &[1, 2, 3], 1.0).unwrap()).unwrap();
        assert_eq!(x.ghost_grade(), Grade::Mixed);
    }

    #[test]
    fn config_mismatch_detected() {
        let a = GradedScalar::generator(Arc::new(GrassmannConfig::uniform(4, 1).unwrap()), 0, 1.0)
            .unwrap();
        let b = GradedScalar::generator(Arc::new(GrassmannConfig::uniform(4, -1).unwrap()), 1, 1.0)
            .unwrap();
        assert!(matches!(a.mul(&b), Err(Error::ConfigMismatch)));
    }

    #[test]
    fn even_negative_ghost_body() {
        // an antighost-like value: even, ghost −2
        let c = cfg();
        let chi = GradedScalar::term(c, Monomial::new(0, -2), 1.5);
        assert!(chi.is_consistent());
        assert_eq!(chi.ghost_grade(), Grade::Pure(-2));
        assert_eq!(chi.mul(&th(0)).unwrap().ghost_grade(), Grade::Pure(-1));
    }
}
