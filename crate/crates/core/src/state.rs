//! Field-space calculus: states, tangent vectors, exact directional
//! derivatives and the Lie bracket of state-dependent vector fields.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graded::{Grade, GradedScalar, GrassmannConfig};
use crate::grid::{GField, Grid};
use crate::tensor::{self, Mat};

/// One scalar slot of a field multiplet. Symmetric pairs are stored with
/// `a <= b`; vector and tensor indices run over the tangential axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Comp {
    Eta,
    Beta(u8),
    Gamma(u8, u8),
    J(u8, u8),
    XiN,
    Xi(u8),
    GdNN,
    GdN(u8),
    Gd(u8, u8),
    ChiN,
    Chi(u8),
    Pi(u8, u8),
    PhiN,
    Phi(u8),
}

fn ord(a: usize, b: usize) -> (u8, u8) {
    (a.min(b) as u8, a.max(b) as u8)
}

impl Comp {
    pub fn gamma(a: usize, b: usize) -> Comp {
        let (a, b) = ord(a, b);
        Comp::Gamma(a, b)
    }
    pub fn j(a: usize, b: usize) -> Comp {
        let (a, b) = ord(a, b);
        Comp::J(a, b)
    }
    pub fn gd(a: usize, b: usize) -> Comp {
        let (a, b) = ord(a, b);
        Comp::Gd(a, b)
    }
    pub fn pi(a: usize, b: usize) -> Comp {
        let (a, b) = ord(a, b);
        Comp::Pi(a, b)
    }
    pub fn beta(a: usize) -> Comp {
        Comp::Beta(a as u8)
    }
    pub fn xi(a: usize) -> Comp {
        Comp::Xi(a as u8)
    }
    pub fn gdn(a: usize) -> Comp {
        Comp::GdN(a as u8)
    }
    pub fn chi(a: usize) -> Comp {
        Comp::Chi(a as u8)
    }
    pub fn phi(a: usize) -> Comp {
        Comp::Phi(a as u8)
    }

    /// Ghost number of the field occupying this slot.
    pub fn grade(&self) -> i32 {
        match self {
            Comp::Eta | Comp::Beta(_) | Comp::Gamma(..) | Comp::J(..) | Comp::Pi(..) => 0,
            Comp::XiN | Comp::Xi(_) => 1,
            Comp::GdNN | Comp::GdN(_) | Comp::Gd(..) | Comp::PhiN | Comp::Phi(_) => -1,
            Comp::ChiN | Comp::Chi(_) => -2,
        }
    }

    /// Stable textual name (archives, reports).
    pub fn name(&self) -> String {
        match self {
            Comp::Eta => "eta".into(),
            Comp::Beta(a) => format!("beta{a}"),
            Comp::Gamma(a, b) => format!("gamma{a}{b}"),
            Comp::J(a, b) => format!("J{a}{b}"),
            Comp::XiN => "xin".into(),
            Comp::Xi(a) => format!("xi{a}"),
            Comp::GdNN => "gdnn".into(),
            Comp::GdN(a) => format!("gdn{a}"),
            Comp::Gd(a, b) => format!("gd{a}{b}"),
            Comp::ChiN => "chin".into(),
            Comp::Chi(a) => format!("chi{a}"),
            Comp::Pi(a, b) => format!("pi{a}{b}"),
            Comp::PhiN => "phin".into(),
            Comp::Phi(a) => format!("phi{a}"),
        }
    }

    /// Components of the pre-boundary BV multiplet in dimension `d`.
    pub fn pre_boundary(d: usize) -> Vec<Comp> {
        let mut v = vec![Comp::Eta];
        v.extend((0..d).map(Comp::beta));
        v.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::gamma(a, b)));
        v.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::j(a, b)));
        v.push(Comp::XiN);
        v.extend((0..d).map(Comp::xi));
        v.push(Comp::GdNN);
        v.extend((0..d).map(Comp::gdn));
        v.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::gd(a, b)));
        v.push(Comp::ChiN);
        v.extend((0..d).map(Comp::chi));
        v
    }

    /// Degree-0 (classical) pre-boundary components.
    pub fn classical(d: usize) -> Vec<Comp> {
        Self::pre_boundary(d).into_iter().filter(|c| c.grade() == 0).collect()
    }

    /// Darboux coordinates of the boundary BFV space.
    pub fn darboux(d: usize) -> Vec<Comp> {
        let mut v: Vec<Comp> = tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::gamma(a, b)).collect();
        v.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::pi(a, b)));
        v.push(Comp::XiN);
        v.extend((0..d).map(Comp::xi));
        v.push(Comp::PhiN);
        v.extend((0..d).map(Comp::phi));
        v
    }

    pub fn is_symmetric_pair(&self) -> bool {
        matches!(self, Comp::Gamma(..) | Comp::J(..) | Comp::Gd(..) | Comp::Pi(..))
    }
}

impl fmt::Display for Comp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A point of field space: named graded fields on a common grid, plus the
/// signature sign `ε` and the cosmological constant `Λ`.
#[derive(Clone, Debug)]
pub struct State {
    pub grid: Arc<Grid>,
    pub config: Arc<GrassmannConfig>,
    pub eps: f64,
    pub lambda: f64,
    fields: BTreeMap<Comp, GField>,
}

impl State {
    pub fn new(grid: Arc<Grid>, config: Arc<GrassmannConfig>, eps: f64, lambda: f64) -> Self {
        State { grid, config, eps, lambda, fields: BTreeMap::new() }
    }

    pub fn d(&self) -> usize {
        self.grid.d()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Field in slot `c` (zero when unset).
    pub fn get(&self, c: Comp) -> GField {
        self.fields.get(&c).cloned().unwrap_or_else(|| GField::zero(self.len()))
    }

    pub fn field(&self, c: Comp) -> Option<&GField> {
        self.fields.get(&c)
    }

    pub fn set(&mut self, c: Comp, f: GField) {
        assert_eq!(f.len(), self.len(), "field length does not match grid");
        self.fields.insert(c, f);
    }

    pub fn comps(&self) -> impl Iterator<Item = (&Comp, &GField)> {
        self.fields.iter()
    }

    pub fn with_config(&self, config: Arc<GrassmannConfig>) -> Self {
        State { config, ..self.clone() }
    }

    /// Every stored field carries only its declared ghost number.
    pub fn check_grades(&self) -> Result<()> {
        for (c, f) in &self.fields {
            if !f.ghost_grade().admits(c.grade()) {
                return Err(Error::GradeMismatch(format!("{c} has grade {}, expected {}", f.ghost_grade(), c.grade())));
            }
        }
        Ok(())
    }

    /// `Φ + s·X` with the graded constant `s` multiplied from the left.
    pub fn shifted(&self, s: &GradedScalar, x: &Tangent) -> State {
        let mut out = self.clone();
        for (c, v) in &x.comps {
            let f = self.get(*c) + v.left_mul_scalar(s);
            out.fields.insert(*c, f);
        }
        out
    }

    /// `Φ + h·X` for a real step `h`.
    pub fn axpy(&self, h: f64, x: &Tangent) -> State {
        let mut out = self.clone();
        for (c, v) in &x.comps {
            out.fields.insert(*c, self.get(*c) + v.scale(h));
        }
        out
    }

    /// Integral over the grid of a density, with this state's algebra.
    pub fn integrate(&self, f: &GField) -> GradedScalar {
        self.grid.integrate(f, self.config.clone())
    }

    pub fn deriv(&self, f: &GField, axis: usize) -> Result<GField> {
        self.grid.deriv(f, axis)
    }

    pub fn vector(&self, mk: impl Fn(usize) -> Comp) -> Vec<GField> {
        (0..self.d()).map(|a| self.get(mk(a))).collect()
    }

    /// Symmetric `d×d` matrix assembled from the upper-triangle slots.
    pub fn sym(&self, mk: impl Fn(usize, usize) -> Comp) -> Mat {
        let d = self.d();
        let mut m = tensor::zeros(d, self.len());
        for (a, b) in tensor::sym_pairs(d) {
            let f = self.get(mk(a, b));
            m[b][a] = f.clone();
            m[a][b] = f;
        }
        m
    }

    pub fn set_sym(&mut self, mk: impl Fn(usize, usize) -> Comp, m: &Mat) {
        for (a, b) in tensor::sym_pairs(self.d()) {
            self.set(mk(a, b), m[a][b].clone());
        }
    }

    /// Append an odd generator with ghost tag `tag` and return its index.
    pub fn alloc_generator(&mut self, tag: i32) -> Result<usize> {
        let mut cfg = (*self.config).clone();
        let k = cfg.push(tag)?;
        self.config = Arc::new(cfg);
        Ok(k)
    }

    /// Largest coefficient over all fields.
    pub fn max_abs(&self) -> f64 {
        self.fields.values().fold(0.0, |a, f| a.max(f.max_abs()))
    }
}

/// A field-space tangent vector: one variation per slot (missing = 0).
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    len: usize,
    comps: BTreeMap<Comp, GField>,
}

impl Tangent {
    pub fn zero(len: usize) -> Self {
        Tangent { len, comps: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn get(&self, c: Comp) -> GField {
        self.comps.get(&c).cloned().unwrap_or_else(|| GField::zero(self.len))
    }

    pub fn set(&mut self, c: Comp, f: GField) {
        assert_eq!(f.len(), self.len);
        if f.is_zero() {
            self.comps.remove(&c);
        } else {
            self.comps.insert(c, f);
        }
    }

    pub fn add_to(&mut self, c: Comp, f: &GField) {
        let v = self.get(c) + f;
        self.set(c, v);
    }

    pub fn with(mut self, c: Comp, f: GField) -> Self {
        self.set(c, f);
        self
    }

    pub fn comps(&self) -> impl Iterator<Item = (&Comp, &GField)> {
        self.comps.iter()
    }

    pub fn scale(&self, k: f64) -> Tangent {
        let mut out = Tangent::zero(self.len);
        for (c, v) in &self.comps {
            out.set(*c, v.scale(k));
        }
        out
    }

    pub fn add(&self, other: &Tangent) -> Tangent {
        let mut out = self.clone();
        for (c, v) in &other.comps {
            out.add_to(*c, v);
        }
        out
    }

    pub fn sub(&self, other: &Tangent) -> Tangent {
        self.add(&other.scale(-1.0))
    }

    pub fn left_mul_scalar(&self, s: &GradedScalar) -> Tangent {
        let mut out = Tangent::zero(self.len);
        for (c, v) in &self.comps {
            out.set(*c, v.left_mul_scalar(s));
        }
        out
    }

    /// Keep only the listed slots.
    pub fn restrict(&self, keep: &[Comp]) -> Tangent {
        let mut out = Tangent::zero(self.len);
        for (c, v) in &self.comps {
            if keep.contains(c) {
                out.set(*c, v.clone());
            }
        }
        out
    }

    /// Vector-field degree: `grade(X^c) − grade(c)`, common to all slots.
    pub fn degree(&self) -> Result<Option<i32>> {
        let mut deg: Option<i32> = None;
        for (c, v) in &self.comps {
            match v.ghost_grade() {
                Grade::PureZero => {}
                Grade::Pure(g) => {
                    let k = g - c.grade();
                    match deg {
                        None => deg = Some(k),
                        Some(k0) if k0 == k => {}
                        Some(k0) => {
                            return Err(Error::GradeMismatch(format!(
                                "tangent mixes degrees {k0} and {k} (slot {c})"
                            )))
                        }
                    }
                }
                Grade::Mixed => return Err(Error::GradeMismatch(format!("slot {c} of a tangent has mixed grade"))),
            }
        }
        Ok(deg)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.values().fold(0.0, |a, f| a.max(f.max_abs()))
    }

    pub fn distance(&self, other: &Tangent) -> f64 {
        self.sub(other).max_abs()
    }
}

type FieldFn<'a> = Box<dyn Fn(&State) -> Result<Tangent> + Send + Sync + 'a>;

/// A state-dependent vector field of fixed degree.
pub struct VectorField<'a> {
    pub degree: i32,
    pub eval: FieldFn<'a>,
}

impl<'a> VectorField<'a> {
    pub fn new(degree: i32, f: impl Fn(&State) -> Result<Tangent> + Send + Sync + 'a) -> Self {
        VectorField { degree, eval: Box::new(f) }
    }

    /// Field-independent vector field.
    pub fn constant(x: Tangent) -> Result<Self> {
        let degree = x.degree()?.unwrap_or(0);
        Ok(VectorField::new(degree, move |_| Ok(x.clone())))
    }

    pub fn at(&self, s: &State) -> Result<Tangent> {
        (self.eval)(s)
    }
}

/// Auxiliary nilpotent parameter `σ` of ghost number `−k` with `σ² = 0`:
/// one odd generator for odd `k`, a product of two for even `k`.
struct Probe {
    state: State,
    sigma: GradedScalar,
    gens: Vec<usize>,
}

fn probe(s: &State, k: i32) -> Result<Probe> {
    let mut st = s.clone();
    let gens = if k.rem_euclid(2) == 1 {
        vec![st.alloc_generator(-k)?]
    } else {
        let p = st.alloc_generator(1)?;
        let q = st.alloc_generator(-k - 1)?;
        vec![p, q]
    };
    let sigma = GradedScalar::product_of(st.config.clone(), &gens, 1.0)?;
    Ok(Probe { state: st, sigma, gens })
}

fn extract(v: &GradedScalar, gens: &[usize]) -> GradedScalar {
    let mut out = v.clone();
    for g in gens {
        out = out.left_derive(*g);
    }
    out
}

fn extract_field(v: &GField, gens: &[usize], cfg: &GrassmannConfig) -> GField {
    let mut out = v.clone();
    for g in gens {
        out = out.left_derive(*g, cfg.tag(*g));
    }
    out
}

/// `D_X F` at `Φ` for a direction of any degree, exactly: `F(Φ + σX)` is
/// expanded to first order in a fresh nilpotent `σ` and the `σ`
/// coefficient is read off with left derivatives.
pub fn directional_derivative(
    f: impl Fn(&State) -> Result<GradedScalar>,
    s: &State,
    x: &Tangent,
) -> Result<GradedScalar> {
    let Some(k) = x.degree()? else {
        return Ok(GradedScalar::zero(s.config.clone()));
    };
    let p = probe(s, k)?;
    let v = f(&p.state.shifted(&p.sigma, x))?;
    extract(&v, &p.gens).in_config(s.config.clone())
}

/// Central-difference oracle for degree-0 directions.
pub fn directional_derivative_fd(
    f: impl Fn(&State) -> Result<GradedScalar>,
    s: &State,
    x: &Tangent,
) -> Result<GradedScalar> {
    match x.degree()? {
        None => return Ok(GradedScalar::zero(s.config.clone())),
        Some(0) => {}
        Some(k) => return Err(Error::GradeMismatch(format!("finite differences need an even direction, got degree {k}"))),
    }
    let h = 1e-6 * (1.0 + s.max_abs());
    let plus = f(&s.axpy(h, x))?;
    let minus = f(&s.axpy(-h, x))?;
    Ok(plus.sub(&minus)?.scale(0.5 / h))
}

/// `D_X Y` for a state-dependent tangent `Y`, component by component.
pub fn directional_derivative_vf(y: &VectorField, s: &State, x: &Tangent) -> Result<Tangent> {
    let Some(k) = x.degree()? else {
        return Ok(Tangent::zero(s.len()));
    };
    let p = probe(s, k)?;
    let v = y.at(&p.state.shifted(&p.sigma, x))?;
    let mut out = Tangent::zero(s.len());
    for (c, f) in v.comps() {
        out.set(*c, extract_field(f, &p.gens, &p.state.config));
    }
    Ok(out)
}

/// Graded commutator `[X, Y] = D_X Y − (−1)^{|X||Y|} D_Y X` at `Φ`.
pub fn bracket(x: &VectorField, y: &VectorField, s: &State) -> Result<Tangent> {
    let xv = x.at(s)?;
    let yv = y.at(s)?;
    let a = directional_derivative_vf(y, s, &xv)?;
    let b = directional_derivative_vf(x, s, &yv)?;
    let sign = if (x.degree * y.degree).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    Ok(a.sub(&b.scale(sign)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn base() -> State {
        let g = Grid::periodic(2, 8).unwrap();
        let cfg = Arc::new(GrassmannConfig::new(vec![1, 1, -1, -1]).unwrap());
        let mut s = State::new(g.clone(), cfg, 1.0, 0.0);
        s.set(Comp::Eta, GField::constant(g.len(), 2.0));
        s
    }

    #[test]
    fn derivative_of_quadratic() {
        let s = base();
        let f = |st: &State| Ok(st.integrate(&(st.get(Comp::Eta) * st.get(Comp::Eta))));
        let x = Tangent::zero(s.len()).with(Comp::Eta, GField::constant(s.len(), 1.0));
        let v = directional_derivative(f, &s, &x).unwrap();
        assert!((v.body() - 4.0).abs() < 1e-12);
        let w = directional_derivative_fd(f, &s, &x).unwrap();
        assert!((w.body() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn odd_direction_is_exact() {
        // F = ∫ ξ^n χ_n with χ_n a ghost −2 body; δξ^n = θ_new
        let mut s = base();
        let len = s.len();
        let prof = s.grid.sample(|x, _| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
        s.set(Comp::ChiN, GField::from_term(crate::graded::Monomial::new(0, -2), prof));
        let mut s2 = s.clone();
        let k = s2.alloc_generator(1).unwrap();
        let theta = GradedScalar::generator(s2.config.clone(), k, 1.0).unwrap();
        let x = Tangent::zero(len).with(Comp::XiN, GField::from_scalar(&theta, &vec![1.0; len]));
        let f = |st: &State| Ok(st.integrate(&(st.get(Comp::XiN) * st.get(Comp::ChiN))));
        let v = directional_derivative(f, &s2, &x).unwrap();
        let expect = GradedScalar::term(s2.config.clone(), crate::graded::Monomial::new(1 << k, -1), 1.0);
        assert!(v.distance(&expect) < 1e-14);
    }

    #[test]
    fn bracket_of_linear_field() {
        // X(Φ) = γ11 ∂/∂β1, Y = c ∂/∂γ11  ⇒  [X,Y] = −c ∂/∂β1
        let mut s = base();
        s.set(Comp::gamma(0, 0), GField::constant(s.len(), 1.3));
        let len = s.len();
        let x = VectorField::new(0, move |st: &State| {
            Ok(Tangent::zero(len).with(Comp::beta(0), st.get(Comp::gamma(0, 0))))
        });
        let y = VectorField::constant(Tangent::zero(len).with(Comp::gamma(0, 0), GField::constant(len, 0.7))).unwrap();
        let b = bracket(&x, &y, &s).unwrap();
        assert!(b.get(Comp::beta(0)).distance(&GField::constant(len, -0.7)) < 1e-14);
        assert!(bracket(&y, &y, &s).unwrap().max_abs() < 1e-14);
    }
}
