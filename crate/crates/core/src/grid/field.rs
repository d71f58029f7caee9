//! Grassmann-valued grid functions, stored term-major: one real array per
//! monomial. Pointwise this is exactly a [`GradedScalar`] per grid point.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graded::{front_sign, Grade, GradedScalar, GrassmannConfig, Monomial};

#[derive(Clone, Debug, PartialEq)]
pub struct GField {
    len: usize,
    terms: BTreeMap<Monomial, Vec<f64>>,
}

impl GField {
    pub fn zero(len: usize) -> Self {
        GField { len, terms: BTreeMap::new() }
    }

    pub fn constant(len: usize, c: f64) -> Self {
        Self::from_real(vec![c; len])
    }

    /// Real (ghost 0, generator-free) field.
    pub fn from_real(values: Vec<f64>) -> Self {
        Self::from_term(Monomial::ONE, values)
    }

    pub fn from_term(m: Monomial, values: Vec<f64>) -> Self {
        let mut f = GField::zero(values.len());
        if values.iter().any(|v| *v != 0.0) {
            f.terms.insert(m, values);
        }
        f
    }

    /// `s · profile` for a constant graded coefficient `s`.
    pub fn from_scalar(s: &GradedScalar, profile: &[f64]) -> Self {
        let mut f = GField::zero(profile.len());
        for (m, c) in s.terms() {
            f.add_term(*m, profile.iter().map(|p| p * c).collect());
        }
        f
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Vec<f64>)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, m: &Monomial) -> Option<&Vec<f64>> {
        self.terms.get(m)
    }

    pub fn add_term(&mut self, m: Monomial, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.len);
        match self.terms.get_mut(&m) {
            Some(v) => {
                for (a, b) in v.iter_mut().zip(values) {
                    *a += b;
                }
                if v.iter().all(|x| *x == 0.0) {
                    self.terms.remove(&m);
                }
            }
            None => {
                if values.iter().any(|x| *x != 0.0) {
                    self.terms.insert(m, values);
                }
            }
        }
    }

    fn add_scaled_term(&mut self, m: Monomial, values: &[f64], k: f64) {
        let v = self.terms.entry(m).or_insert_with(|| vec![0.0; values.len()]);
        for (a, b) in v.iter_mut().zip(values) {
            *a += k * b;
        }
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, v| v.iter().any(|x| *x != 0.0));
        self
    }

    /// Generator-free ghost-0 part.
    pub fn body(&self) -> Vec<f64> {
        self.terms.get(&Monomial::ONE).cloned().unwrap_or_else(|| vec![0.0; self.len])
    }

    /// Everything except the ghost-0 body.
    pub fn soul(&self) -> GField {
        let mut s = self.clone();
        s.terms.remove(&Monomial::ONE);
        s
    }

    pub fn at(&self, i: usize, config: Arc<GrassmannConfig>) -> GradedScalar {
        let mut s = GradedScalar::zero(config);
        for (m, v) in &self.terms {
            s.add_term(*m, v[i]);
        }
        s
    }

    pub fn scale(&self, k: f64) -> GField {
        if k == 0.0 {
            return GField::zero(self.len);
        }
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            for x in v.iter_mut() {
                *x *= k;
            }
        }
        out
    }

    /// Multiply by a real profile pointwise.
    pub fn scale_pointwise(&self, p: &[f64]) -> GField {
        let mut out = GField::zero(self.len);
        for (m, v) in &self.terms {
            out.add_term(*m, v.iter().zip(p).map(|(a, b)| a * b).collect());
        }
        out
    }

    /// `s · self` for a constant graded scalar placed on the left.
    pub fn left_mul_scalar(&self, s: &GradedScalar) -> GField {
        let mut out = GField::zero(self.len);
        for (ms, c) in s.terms() {
            for (m, v) in &self.terms {
                if let Some((p, sign)) = ms.mul(*m) {
                    out.add_scaled_term(p, v, sign * c);
                }
            }
        }
        out.prune()
    }

    /// Graded pointwise product.
    pub fn mul(&self, other: &GField) -> GField {
        assert_eq!(self.len, other.len, "field length mismatch");
        let mut out = GField::zero(self.len);
        for (ma, va) in &self.terms {
            for (mb, vb) in &other.terms {
                if let Some((m, sign)) = ma.mul(*mb) {
                    let e = out.terms.entry(m).or_insert_with(|| vec![0.0; va.len()]);
                    for ((o, a), b) in e.iter_mut().zip(va).zip(vb) {
                        *o += sign * a * b;
                    }
                }
            }
        }
        out.prune()
    }

    /// Apply a real linear map to every term independently.
    pub fn map_linear(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> GField {
        let mut out = GField::zero(self.len);
        for (m, v) in &self.terms {
            out.add_term(*m, f(v));
        }
        out
    }

    /// Pointwise real function of a ghost-0 even field, expanded around the
    /// body: `f(b + s) = Σ f⁽ᵏ⁾(b)/k! · sᵏ`. `taylor(b, k)` returns `f⁽ᵏ⁾(b)/k!`.
    pub fn apply_even(&self, taylor: impl Fn(f64, usize) -> f64) -> Result<GField> {
        if let Some(m) = self.terms.keys().find(|m| m.ghost != 0 || m.parity() != 0) {
            return Err(Error::GradeMismatch(format!(
                "non-polynomial function of a graded value with monomial {m:?}"
            )));
        }
        let body = self.body();
        let soul = self.soul();
        let mut out = GField::from_real(body.iter().map(|b| taylor(*b, 0)).collect());
        let mut power = GField::constant(self.len, 1.0);
        let mut k = 1;
        loop {
            power = GField::mul(&power, &soul);
            if power.is_zero() {
                break;
            }
            let coef: Vec<f64> = body.iter().map(|b| taylor(*b, k)).collect();
            out += &power.scale_pointwise(&coef);
            k += 1;
        }
        Ok(out)
    }

    pub fn recip(&self) -> Result<GField> {
        if self.body().contains(&0.0) {
            return Err(Error::SingularMetric("reciprocal of a field with vanishing body".into()));
        }
        self.apply_even(|b, k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            s * b.powi(-(k as i32) - 1)
        })
    }

    pub fn sqrt(&self) -> Result<GField> {
        if self.body().iter().any(|b| *b <= 0.0) {
            return Err(Error::SingularMetric("square root of a non-positive body".into()));
        }
        self.apply_even(|b, k| binomial_half(k) * b.powf(0.5 - k as f64))
    }

    /// Left derivative with respect to θ_k (ghost drops by `tag`).
    pub fn left_derive(&self, k: usize, tag: i32) -> GField {
        let bit = 1u64 << k;
        let mut out = GField::zero(self.len);
        for (m, v) in &self.terms {
            if m.mask & bit != 0 {
                let s = front_sign(m.mask, k);
                out.add_term(Monomial::new(m.mask & !bit, m.ghost - tag), v.iter().map(|x| s * x).collect());
            }
        }
        out
    }

    /// Drop every term that contains any generator from `mask`.
    pub fn without_generators(&self, mask: u64) -> GField {
        let mut out = GField::zero(self.len);
        for (m, v) in &self.terms {
            if m.mask & mask == 0 {
                out.terms.insert(*m, v.clone());
            }
        }
        out
    }

    pub fn ghost_grade(&self) -> Grade {
        self.terms.keys().fold(Grade::PureZero, |g, m| g.join(Grade::Pure(m.ghost)))
    }

    pub fn grade_part(&self, g: i32) -> GField {
        let mut out = GField::zero(self.len);
        for (m, v) in &self.terms {
            if m.ghost == g {
                out.terms.insert(*m, v.clone());
            }
        }
        out
    }

    pub fn is_consistent(&self) -> bool {
        self.terms.keys().all(|m| m.is_consistent())
    }

    /// Largest absolute coefficient over all terms and points.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().flat_map(|v| v.iter()).fold(0.0, |a, x| a.max(x.abs()))
    }

    /// Sub-range of points (e.g. one normal layer).
    pub fn slice(&self, start: usize, len: usize) -> GField {
        let mut out = GField::zero(len);
        for (m, v) in &self.terms {
            out.add_term(*m, v[start..start + len].to_vec());
        }
        out
    }

    /// Repeat a field `times` times (e.g. lift a boundary field to every layer).
    pub fn tile(&self, times: usize) -> GField {
        let mut out = GField::zero(self.len * times);
        for (m, v) in &self.terms {
            out.terms.insert(*m, v.iter().cycle().take(self.len * times).copied().collect());
        }
        out
    }

    /// Concatenate layers.
    pub fn stack(layers: &[GField]) -> GField {
        let n = layers[0].len;
        let total = n * layers.len();
        let mut out = GField::zero(total);
        for (l, f) in layers.iter().enumerate() {
            for (m, v) in &f.terms {
                let e = out.terms.entry(*m).or_insert_with(|| vec![0.0; total]);
                e[l * n..(l + 1) * n].copy_from_slice(v);
            }
        }
        out.prune()
    }

    /// Σ over points of `weights[i] · value[i]`.
    pub fn weighted_sum(&self, weights: &[f64], config: Arc<GrassmannConfig>) -> GradedScalar {
        let mut s = GradedScalar::zero(config);
        for (m, v) in &self.terms {
            s.add_term(*m, v.iter().zip(weights).map(|(a, b)| a * b).sum());
        }
        s
    }

    /// Raw bytes-level view for serialization.
    pub fn raw_terms(&self) -> &BTreeMap<Monomial, Vec<f64>> {
        &self.terms
    }

    /// Distance `max |self - other|`.
    pub fn distance(&self, other: &GField) -> f64 {
        (self - other).max_abs()
    }
}

/// `C(1/2, k)`.
fn binomial_half(k: usize) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c *= (0.5 - j as f64) / (j as f64 + 1.0);
    }
    c
}

impl AddAssign<&GField> for GField {
    fn add_assign(&mut self, rhs: &GField) {
        assert_eq!(self.len, rhs.len, "field length mismatch");
        for (m, v) in &rhs.terms {
            self.add_scaled_term(*m, v, 1.0);
        }
        self.terms.retain(|_, v| v.iter().any(|x| *x != 0.0));
    }
}

impl SubAssign<&GField> for GField {
    fn sub_assign(&mut self, rhs: &GField) {
        assert_eq!(self.len, rhs.len, "field length mismatch");
        for (m, v) in &rhs.terms {
            self.add_scaled_term(*m, v, -1.0);
        }
        self.terms.retain(|_, v| v.iter().any(|x| *x != 0.0));
    }
}

impl Add for &GField {
    type Output = GField;
    fn add(self, rhs: &GField) -> GField {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &GField {
    type Output = GField;
    fn sub(self, rhs: &GField) -> GField {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Add for GField {
    type Output = GField;
    fn add(mut self, rhs: GField) -> GField {
        self += &rhs;
        self
    }
}

impl Sub for GField {
    type Output = GField;
    fn sub(mut self, rhs: GField) -> GField {
        self -= &rhs;
        self
    }
}

impl Neg for &GField {
    type Output = GField;
    fn neg(self) -> GField {
        self.scale(-1.0)
    }
}

impl Neg for GField {
    type Output = GField;
    fn neg(self) -> GField {
        self.scale(-1.0)
    }
}

impl Mul for &GField {
    type Output = GField;
    fn mul(self, rhs: &GField) -> GField {
        GField::mul(self, rhs)
    }
}

impl Mul for GField {
    type Output = GField;
    fn mul(self, rhs: GField) -> GField {
        GField::mul(&self, &rhs)
    }
}

impl Mul<&GField> for GField {
    type Output = GField;
    fn mul(self, rhs: &GField) -> GField {
        GField::mul(&self, rhs)
    }
}

impl Mul<GField> for &GField {
    type Output = GField;
    fn mul(self, rhs: GField) -> GField {
        GField::mul(self, &rhs)
    }
}

impl Add<&GField> for GField {
    type Output = GField;
    fn add(mut self, rhs: &GField) -> GField {
        self += rhs;
        self
    }
}

impl Sub<&GField> for GField {
    type Output = GField;
    fn sub(mut self, rhs: &GField) -> GField {
        self -= rhs;
        self
    }
}

impl Add<GField> for &GField {
    type Output = GField;
    fn add(self, rhs: GField) -> GField {
        rhs + self
    }
}

impl Sub<GField> for &GField {
    type Output = GField;
    fn sub(self, rhs: GField) -> GField {
        -(rhs - self)
    }
}

impl Mul<f64> for &GField {
    type Output = GField;
    fn mul(self, k: f64) -> GField {
        self.scale(k)
    }
}

impl Mul<f64> for GField {
    type Output = GField;
    fn mul(self, k: f64) -> GField {
        self.scale(k)
    }
}

impl Mul<&GField> for f64 {
    type Output = GField;
    fn mul(self, f: &GField) -> GField {
        f.scale(self)
    }
}

impl Mul<GField> for f64 {
    type Output = GField;
    fn mul(self, f: GField) -> GField {
        f.scale(self)
    }
}

/// Sum of an iterator of fields of length `len`.
pub fn sum_fields<I: IntoIterator<Item = GField>>(len: usize, it: I) -> GField {
    let mut acc = GField::zero(len);
    for f in it {
        acc += &f;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    // alternating tags so that θ_{2k}θ_{2k+1} has ghost 0
    fn cfg() -> Arc<GrassmannConfig> {
        Arc::new(GrassmannConfig::new(vec![1, -1, 1, -1, 1, -1, 1, -1]).unwrap())
    }

    #[test]
    fn recip_and_sqrt_with_nilpotent_soul() {
        let c = cfg();
        let s = GradedScalar::product_of(c.clone(), &[0, 1], 1.0).unwrap();
        // x = 4 + 2 θ0θ1
        let x = GField::constant(3, 4.0) + GField::from_scalar(&s, &[2.0; 3]);
        let r = x.recip().unwrap();
        // 1/4 − 2/16 θ0θ1
        let expect = GField::constant(3, 0.25) + GField::from_scalar(&s, &[-0.125; 3]);
        assert!(r.distance(&expect) < 1e-15);
        let q = x.sqrt().unwrap();
        // 2 + θ0θ1/2
        let expect = GField::constant(3, 2.0) + GField::from_scalar(&s, &[0.5; 3]);
        assert!(q.distance(&expect) < 1e-15);
        assert!((&q * &q).distance(&x) < 1e-14);
    }

    #[test]
    fn recip_of_deep_soul() {
        let c = cfg();
        let s1 = GradedScalar::product_of(c.clone(), &[0, 1], 0.3).unwrap();
        let s2 = GradedScalar::product_of(c.clone(), &[2, 3], -0.7).unwrap();
        let s3 = GradedScalar::product_of(c, &[4, 5], 0.2).unwrap();
        let x = GField::constant(2, 1.5)
            + GField::from_scalar(&s1, &[1.0, 2.0])
            + GField::from_scalar(&s2, &[1.0, -1.0])
            + GField::from_scalar(&s3, &[0.5, 0.5]);
        let one = &x * &x.recip().unwrap();
        assert!(one.distance(&GField::constant(2, 1.0)) < 1e-14);
    }

    #[test]
    fn odd_values_refuse_transcendental_maps() {
        let c = cfg();
        let t = GradedScalar::generator(c, 0, 1.0).unwrap();
        let x = GField::constant(2, 1.0) + GField::from_scalar(&t, &[1.0, 1.0]);
        assert!(matches!(x.sqrt(), Err(Error::GradeMismatch(_))));
    }
}
