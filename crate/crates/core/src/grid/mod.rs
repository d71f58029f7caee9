//! Discretized geometry: the periodic boundary torus `T^d` and the thin bulk
//! patch `[0, L] × T^d` whose layer 0 is the boundary.

pub mod field;
pub mod schemes;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graded::{GradedScalar, GrassmannConfig};
pub use field::{sum_fields, GField};
pub use schemes::{DerivativeScheme, SchemeRegistry};

/// Point layout shared by all fields of a state.
///
/// Tangential axes `0..d` are periodic with spacing `1/n`; when `layers > 1`
/// the grid also has a normal axis (index `d`) with spacing `h_n`, layer 0
/// being the boundary.
#[derive(Clone)]
pub struct Grid {
    d: usize,
    n: usize,
    layers: usize,
    h_n: f64,
    periodic: bool,
    normal_periodic: bool,
    tangential: Arc<dyn DerivativeScheme>,
    normal: Arc<dyn DerivativeScheme>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("layers", &self.layers)
            .field("h_n", &self.h_n)
            .field("periodic", &self.periodic)
            .field("normal_periodic", &self.normal_periodic)
            .field("tangential", &self.tangential.name())
            .field("normal", &self.normal.name())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, o: &Self) -> bool {
        self.d == o.d
            && self.n == o.n
            && self.layers == o.layers
            && self.h_n == o.h_n
            && self.periodic == o.periodic
            && self.normal_periodic == o.normal_periodic
            && self.tangential.name() == o.tangential.name()
            && self.normal.name() == o.normal.name()
    }
}

impl Grid {
    /// Periodic boundary grid `T^d` with `n` points per axis.
    pub fn periodic(d: usize, n: usize) -> Result<Arc<Grid>> {
        Self::build(d, n, 1, 0.0, &SchemeRegistry::default(), "spectral", "onesided")
    }

    /// Bulk patch with `layers` normal layers spaced `h_n` (layer 0 = ∂M).
    pub fn bulk(d: usize, n: usize, layers: usize, h_n: f64) -> Result<Arc<Grid>> {
        Self::build(d, n, layers, h_n, &SchemeRegistry::default(), "spectral", "onesided")
    }

    /// Non-periodic patch `[0, 1]^d` (`n` points per axis, end points
    /// included) with one-sided stencils on every axis.
    pub fn patch(d: usize, n: usize) -> Result<Arc<Grid>> {
        let mut g = Self::build(d, n, 1, 0.0, &SchemeRegistry::default(), "spectral", "onesided")?;
        let r = SchemeRegistry::default();
        let g2 = Arc::make_mut(&mut g);
        g2.periodic = false;
        g2.tangential = r.get("onesided")?;
        Ok(g)
    }

    /// Closed torus `T^{d+1}`: the normal axis is periodic as well (no
    /// boundary), used where exact summation by parts is wanted.
    pub fn closed(d: usize, n: usize) -> Result<Arc<Grid>> {
        let mut g = Self::build(d, n, n, 1.0 / n as f64, &SchemeRegistry::default(), "spectral", "onesided")?;
        let g2 = Arc::make_mut(&mut g);
        g2.normal_periodic = true;
        g2.normal = g2.tangential.clone();
        Ok(g)
    }

    pub fn build(
        d: usize,
        n: usize,
        layers: usize,
        h_n: f64,
        registry: &SchemeRegistry,
        tangential: &str,
        normal: &str,
    ) -> Result<Arc<Grid>> {
        if d == 0 {
            return Err(Error::DimensionUnsupported(d));
        }
        if n < 8 {
            return Err(Error::Schema(format!("need at least 8 points per periodic axis, got {n}")));
        }
        if layers > 1 && layers < 7 {
            return Err(Error::Schema(format!("bulk patch needs at least 7 normal layers, got {layers}")));
        }
        if layers > 1 && h_n <= 0.0 {
            return Err(Error::Schema("normal spacing must be positive".into()));
        }
        let tangential = registry.get(tangential)?;
        let normal = registry.get(normal)?;
        if !tangential.supports(true) {
            return Err(Error::SchemeUnsupported { scheme: tangential.name().into(), axis: 0 });
        }
        if layers > 1 && !normal.supports(false) {
            return Err(Error::SchemeUnsupported { scheme: normal.name().into(), axis: d });
        }
        Ok(Arc::new(Grid { d, n, layers, h_n, periodic: true, normal_periodic: false, tangential, normal }))
    }

    /// Same geometry with a different tangential scheme.
    pub fn with_tangential(&self, scheme: Arc<dyn DerivativeScheme>) -> Result<Arc<Grid>> {
        if !scheme.supports(self.periodic) {
            return Err(Error::SchemeUnsupported { scheme: scheme.name().into(), axis: 0 });
        }
        Ok(Arc::new(Grid { tangential: scheme, ..self.clone() }))
    }

    pub fn with_normal(&self, scheme: Arc<dyn DerivativeScheme>) -> Result<Arc<Grid>> {
        if !scheme.supports(self.normal_periodic) {
            return Err(Error::SchemeUnsupported { scheme: scheme.name().into(), axis: self.d });
        }
        Ok(Arc::new(Grid { normal: scheme, ..self.clone() }))
    }

    /// Names of the tangential and normal derivative schemes.
    pub fn scheme_names(&self) -> (&'static str, &'static str) {
        (self.tangential.name(), self.normal.name())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Tangential spacing.
    pub fn h(&self) -> f64 {
        if self.periodic {
            1.0 / self.n as f64
        } else {
            1.0 / (self.n - 1) as f64
        }
    }

    /// Whether the tangential axes are periodic.
    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn h_n(&self) -> f64 {
        self.h_n
    }

    pub fn is_bulk(&self) -> bool {
        self.layers > 1
    }

    /// Bulk grid without boundary (periodic normal axis).
    pub fn is_closed(&self) -> bool {
        self.normal_periodic
    }

    /// Points per layer (`n^d`).
    pub fn layer_len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        self.layer_len() * self.layers
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The boundary torus of this grid.
    pub fn boundary(&self) -> Arc<Grid> {
        Arc::new(Grid { layers: 1, h_n: 0.0, normal_periodic: false, ..self.clone() })
    }

    /// Coordinates `(x^1..x^d, x^n)` of point `i`.
    pub fn coords(&self, i: usize) -> (Vec<f64>, f64) {
        let ll = self.layer_len();
        let layer = i / ll;
        let mut r = i % ll;
        let mut x = vec![0.0; self.d];
        for k in (0..self.d).rev() {
            x[k] = (r % self.n) as f64 * self.h();
            r /= self.n;
        }
        (x, layer as f64 * self.h_n)
    }

    /// Sample a function `f(x_tangential, x_normal)` at every point.
    pub fn sample(&self, f: impl Fn(&[f64], f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (x, xn) = self.coords(i);
                f(&x, xn)
            })
            .collect()
    }

    fn stride(&self, axis: usize) -> usize {
        if axis == self.d {
            self.layer_len()
        } else {
            self.n.pow((self.d - 1 - axis) as u32)
        }
    }

    /// Derivative of a real array along `axis` with the grid's schemes.
    pub fn deriv_real(&self, data: &[f64], axis: usize) -> Result<Vec<f64>> {
        if axis > self.d || (axis == self.d && !self.is_bulk()) {
            return Err(Error::Schema(format!("axis {axis} does not exist on this grid")));
        }
        let (op, len) = if axis == self.d {
            (self.normal.operator(self.layers, self.h_n, self.normal_periodic, axis)?, self.layers)
        } else {
            (self.tangential.operator(self.n, self.h(), self.periodic, axis)?, self.n)
        };
        let stride = self.stride(axis);
        let mut out = vec![0.0; data.len()];
        let block = stride * len;
        for base in (0..data.len()).step_by(block) {
            for off in 0..stride {
                op.apply_strided(data, base + off, stride, &mut out);
            }
        }
        Ok(out)
    }

    /// Derivative with an explicitly chosen scheme.
    pub fn deriv_real_with(&self, data: &[f64], axis: usize, scheme: &dyn DerivativeScheme) -> Result<Vec<f64>> {
        let tangential = axis < self.d;
        if !tangential && !self.is_bulk() {
            return Err(Error::Schema(format!("axis {axis} does not exist on this grid")));
        }
        let periodic = if tangential { self.periodic } else { self.normal_periodic };
        let (len, h) = if tangential { (self.n, self.h()) } else { (self.layers, self.h_n) };
        let op = scheme.operator(len, h, periodic, axis)?;
        let stride = self.stride(axis);
        let mut out = vec![0.0; data.len()];
        for base in (0..data.len()).step_by(stride * len) {
            for off in 0..stride {
                op.apply_strided(data, base + off, stride, &mut out);
            }
        }
        Ok(out)
    }

    /// ∂_axis of a graded field (term by term).
    pub fn deriv(&self, f: &GField, axis: usize) -> Result<GField> {
        let mut out = GField::zero(f.len());
        for (m, v) in f.terms() {
            out.add_term(*m, self.deriv_real(v, axis)?);
        }
        Ok(out)
    }

    pub fn deriv_with(&self, f: &GField, axis: usize, scheme: &dyn DerivativeScheme) -> Result<GField> {
        let mut out = GField::zero(f.len());
        for (m, v) in f.terms() {
            out.add_term(*m, self.deriv_real_with(v, axis, scheme)?);
        }
        Ok(out)
    }

    /// Quadrature weights: `h^d` on the torus; composite Simpson (or
    /// trapezoid for an even layer count) along the normal axis.
    pub fn weights(&self) -> Vec<f64> {
        let ht = self.h().powi(self.d as i32);
        if !self.periodic {
            // trapezoid on the closed patch
            return (0..self.len())
                .map(|i| {
                    let (x, _) = self.coords(i);
                    x.iter().fold(ht, |w, xi| if *xi == 0.0 || (*xi - 1.0).abs() < 1e-12 { w * 0.5 } else { w })
                })
                .collect();
        }
        if !self.is_bulk() {
            return vec![ht; self.len()];
        }
        let l = self.layers;
        let wn: Vec<f64> = if self.normal_periodic {
            vec![self.h_n; l]
        } else if l % 2 == 1 {
            (0..l)
                .map(|j| {
                    let c = if j == 0 || j == l - 1 {
                        1.0
                    } else if j % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    c * self.h_n / 3.0
                })
                .collect()
        } else {
            (0..l).map(|j| if j == 0 || j == l - 1 { 0.5 } else { 1.0 } * self.h_n).collect()
        };
        let ll = self.layer_len();
        (0..self.len()).map(|i| ht * wn[i / ll]).collect()
    }

    /// ∫ over the grid (torus or patch) of a graded density.
    pub fn integrate(&self, f: &GField, config: Arc<GrassmannConfig>) -> GradedScalar {
        f.weighted_sum(&self.weights(), config)
    }

    /// Layer `k` of a bulk field.
    pub fn layer(&self, f: &GField, k: usize) -> GField {
        f.slice(k * self.layer_len(), self.layer_len())
    }
}

/// ∫_{∂M} of a scalar density on a periodic grid.
pub fn boundary_integral(grid: &Grid, density: &GField, config: Arc<GrassmannConfig>) -> Result<GradedScalar> {
    if grid.is_bulk() {
        return Err(Error::Schema("boundary_integral expects a boundary grid".into()));
    }
    Ok(grid.integrate(density, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_density_integrates_to_volume() {
        let g = Grid::periodic(2, 16).unwrap();
        let c = Arc::new(GrassmannConfig::default());
        let v = boundary_integral(&g, &GField::constant(g.len(), 1.0), c.clone()).unwrap();
        assert!((v.body() - 1.0).abs() < 1e-14);
        let s = GField::from_real(g.sample(|x, _| (2.0 * PI * x[0]).sin()));
        assert!(boundary_integral(&g, &s, c).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn graded_density_integral() {
        let g = Grid::periodic(2, 16).unwrap();
        let c = Arc::new(GrassmannConfig::default());
        let t = GradedScalar::product_of(c.clone(), &[1, 2], 1.0).unwrap();
        let f = GField::from_scalar(&t, &g.sample(|x, _| 2.0 + (2.0 * PI * x[1]).cos()));
        let v = boundary_integral(&g, &f, c).unwrap();
        assert!(v.distance(&t.scale(2.0)) < 1e-12);
    }

    #[test]
    fn odd_field_spectral_derivative() {
        let g = Grid::periodic(1, 32).unwrap();
        let c = Arc::new(GrassmannConfig::default());
        let t = GradedScalar::generator(c, 1, 1.0).unwrap();
        let f = GField::from_scalar(&t, &g.sample(|x, _| (2.0 * PI * x[0]).sin()));
        let df = g.deriv(&f, 0).unwrap();
        let exact = GField::from_scalar(&t, &g.sample(|x, _| 2.0 * PI * (2.0 * PI * x[0]).cos()));
        assert!(df.distance(&exact) < 1e-10);
        let k = GField::constant(g.len(), 3.0);
        assert!(g.deriv(&k, 0).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn bulk_normal_axis_and_strides() {
        let g = Grid::bulk(2, 8, 9, 0.05).unwrap();
        let f = GField::from_real(g.sample(|x, xn| xn * xn + (2.0 * PI * x[1]).sin()));
        let dn = g.deriv(&f, 2).unwrap();
        let exact = GField::from_real(g.sample(|_, xn| 2.0 * xn));
        assert!(dn.distance(&exact) < 1e-11);
        let d1 = g.deriv(&f, 1).unwrap();
        let exact = GField::from_real(g.sample(|x, _| 2.0 * PI * (2.0 * PI * x[1]).cos()));
        assert!(d1.distance(&exact) < 1e-10);
        assert!(g.deriv(&f, 0).unwrap().max_abs() < 1e-12);
        // Simpson integrates x_n^2 over [0, 0.4] exactly
        let c = Arc::new(GrassmannConfig::default());
        let q = GField::from_real(g.sample(|_, xn| xn * xn));
        assert!((g.integrate(&q, c).body() - 0.4f64.powi(3) / 3.0).abs() < 1e-14);
    }
}
