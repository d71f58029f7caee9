//! Line derivative operators, selected by name at runtime.
//!
//! Every scheme turns a 1-d line of `len` samples with spacing `h` into a
//! dense `len × len` matrix. Matrices are cached per `(len, h, periodic)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

/// Dense derivative matrix for one line of samples, row-major.
#[derive(Debug, Clone)]
pub struct LineOperator {
    pub len: usize,
    pub weights: Vec<f64>,
}

impl LineOperator {
    /// `out[i] = Σ_j W[i][j] · line[j]` with strided access.
    ///
    /// Rows sum to zero, so the line is taken relative to its first sample;
    /// constants then differentiate to exactly zero.
    #[inline]
    pub fn apply_strided(&self, data: &[f64], offset: usize, stride: usize, out: &mut [f64]) {
        let n = self.len;
        let base = data[offset];
        for i in 0..n {
            let row = &self.weights[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (j, w) in row.iter().enumerate() {
                if *w != 0.0 {
                    acc += w * (data[offset + j * stride] - base);
                }
            }
            out[offset + i * stride] = acc;
        }
    }
}

type CacheKey = (usize, u64, bool);

/// A first-derivative discretization.
pub trait DerivativeScheme: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Whether the scheme can act on a periodic (`true`) or bounded axis.
    fn supports(&self, periodic: bool) -> bool;

    fn build(&self, len: usize, h: f64, periodic: bool) -> LineOperator;

    fn cache(&self) -> &Mutex<HashMap<CacheKey, Arc<LineOperator>>>;

    fn operator(&self, len: usize, h: f64, periodic: bool, axis: usize) -> Result<Arc<LineOperator>> {
        if !self.supports(periodic) {
            return Err(Error::SchemeUnsupported { scheme: self.name().into(), axis });
        }
        let key = (len, h.to_bits(), periodic);
        let mut cache = self.cache().lock().expect("operator cache poisoned");
        Ok(cache.entry(key).or_insert_with(|| Arc::new(self.build(len, h, periodic))).clone())
    }
}

/// Fourier (trigonometric interpolant) differentiation on a periodic axis.
#[derive(Debug, Default)]
pub struct Spectral {
    cache: Mutex<HashMap<CacheKey, Arc<LineOperator>>>,
}

impl DerivativeScheme for Spectral {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn supports(&self, periodic: bool) -> bool {
        periodic
    }

    fn build(&self, n: usize, h: f64, _periodic: bool) -> LineOperator {
        let period = h * n as f64;
        let scale = 2.0 * std::f64::consts::PI / period;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i as f64 - j as f64;
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                let x = std::f64::consts::PI * k / n as f64;
                // differentiation matrix of the periodic sinc interpolant
                w[i * n + j] = if n.is_multiple_of(2) {
                    0.5 * sign / x.tan()
                } else {
                    0.5 * sign / x.sin()
                } * scale;
            }
        }
        LineOperator { len: n, weights: w }
    }

    fn cache(&self) -> &Mutex<HashMap<CacheKey, Arc<LineOperator>>> {
        &self.cache
    }
}

/// Fourth-order central differences on a periodic axis.
#[derive(Debug, Default)]
pub struct CentralFd4 {
    cache: Mutex<HashMap<CacheKey, Arc<LineOperator>>>,
}

impl DerivativeScheme for CentralFd4 {
    fn name(&self) -> &'static str {
        "fd4"
    }

    fn supports(&self, periodic: bool) -> bool {
        periodic
    }

    fn build(&self, n: usize, h: f64, _periodic: bool) -> LineOperator {
        let c = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for (s, cs) in c.iter().enumerate() {
                let j = (i as isize + s as isize - 2).rem_euclid(n as isize) as usize;
                w[i * n + j] += cs / h;
            }
        }
        LineOperator { len: n, weights: w }
    }

    fn cache(&self) -> &Mutex<HashMap<CacheKey, Arc<LineOperator>>> {
        &self.cache
    }
}

/// Finite differences of a given order on a bounded axis: centred stencils
/// in the interior, one-sided stencils of the same width near the ends.
#[derive(Debug)]
pub struct OneSided {
    order: usize,
    cache: Mutex<HashMap<CacheKey, Arc<LineOperator>>>,
}

impl OneSided {
    pub fn new(order: usize) -> Self {
        assert!(order >= 2 && order.is_multiple_of(2), "stencil order must be even and >= 2");
        OneSided { order, cache: Mutex::default() }
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

impl Default for OneSided {
    fn default() -> Self {
        Self::new(4)
    }
}

impl DerivativeScheme for OneSided {
    fn name(&self) -> &'static str {
        "onesided"
    }

    fn supports(&self, periodic: bool) -> bool {
        !periodic
    }

    fn build(&self, n: usize, h: f64, _periodic: bool) -> LineOperator {
        let width = (self.order + 1).min(n);
        let half = width / 2;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            let start = i.saturating_sub(half).min(n - width);
            let nodes: Vec<f64> = (start..start + width).map(|j| (j as f64 - i as f64) * h).collect();
            let wt = fornberg_weights(0.0, &nodes, 1);
            for (k, wk) in wt[1].iter().enumerate() {
                w[i * n + start + k] = *wk;
            }
        }
        LineOperator { len: n, weights: w }
    }

    fn cache(&self) -> &Mutex<HashMap<CacheKey, Arc<LineOperator>>> {
        &self.cache
    }
}

/// Finite-difference weights for derivatives 0..=m at `z` on arbitrary nodes
/// (Fornberg's recursion).
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Name → scheme lookup.
#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    entries: Vec<Arc<dyn DerivativeScheme>>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut r = SchemeRegistry { entries: Vec::new() };
        r.register(Arc::new(Spectral::default()));
        r.register(Arc::new(CentralFd4::default()));
        r.register(Arc::new(OneSided::default()));
        r
    }
}

impl SchemeRegistry {
    pub fn register(&mut self, scheme: Arc<dyn DerivativeScheme>) {
        self.entries.retain(|s| s.name() != scheme.name());
        self.entries.push(scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn DerivativeScheme>> {
        self.entries
            .iter()
            .find(|s| s.name() == name)
            .cloned()
            .ok_or_else(|| Error::Unknown { kind: "derivative scheme", name: name.into() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn fornberg_reproduces_central_stencil() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w[1].iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_sine() {
        let n = 32;
        let h = 1.0 / n as f64;
        let op = Spectral::default().operator(n, h, true, 0).unwrap();
        let f: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 * h).sin()).collect();
        let mut out = vec![0.0; n];
        op.apply_strided(&f, 0, 1, &mut out);
        for i in 0..n {
            let exact = 2.0 * PI * (2.0 * PI * i as f64 * h).cos();
            assert!((out[i] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn one_sided_exact_on_quartics() {
        let n = 9;
        let h = 0.1;
        let op = OneSided::new(4).operator(n, h, false, 2).unwrap();
        let f: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(4) - 2.0 * (i as f64 * h)).collect();
        let mut out = vec![0.0; n];
        op.apply_strided(&f, 0, 1, &mut out);
        for i in 0..n {
            let x = i as f64 * h;
            assert!((out[i] - (4.0 * x.powi(3) - 2.0)).abs() < 1e-11, "{i}");
        }
    }

    #[test]
    fn spectral_rejects_bounded_axis() {
        let err = Spectral::default().operator(9, 0.1, false, 2).unwrap_err();
        assert!(matches!(err, Error::SchemeUnsupported { axis: 2, .. }));
    }

    #[test]
    fn registry_lookup() {
        let r = SchemeRegistry::default();
        assert_eq!(r.get("fd4").unwrap().name(), "fd4");
        assert!(r.get("chebyshev").is_err());
    }
}
