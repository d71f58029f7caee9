//! Small dense matrices of graded fields (metrics, their inverses, curvature).
//!
//! Entries are even, ghost-0 [`GField`]s, so the product is commutative and
//! the usual cofactor formulas apply verbatim.

use crate::error::{Error, Result};
use crate::grid::{sum_fields, GField, Grid};

pub type Mat = Vec<Vec<GField>>;

pub fn zeros(n: usize, len: usize) -> Mat {
    vec![vec![GField::zero(len); n]; n]
}

pub fn identity(n: usize, len: usize) -> Mat {
    let mut m = zeros(n, len);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = GField::constant(len, 1.0);
    }
    m
}

/// Upper-triangle index pairs `(a, b)`, `a <= b`.
pub fn sym_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for a in 0..d {
        for b in a..d {
            v.push((a, b));
        }
    }
    v
}

fn minor(m: &Mat, row: usize, col: usize) -> Mat {
    m.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, x)| x.clone()).collect())
        .collect()
}

pub fn det(m: &Mat) -> GField {
    let n = m.len();
    match n {
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        _ => {
            let len = m[0][0].len();
            let mut acc = GField::zero(len);
            for j in 0..n {
                if m[0][j].is_zero() {
                    continue;
                }
                let c = &m[0][j] * &det(&minor(m, 0, j));
                if j % 2 == 0 {
                    acc += &c;
                } else {
                    acc -= &c;
                }
            }
            acc
        }
    }
}

/// Inverse by the adjugate formula.
pub fn inverse(m: &Mat) -> Result<Mat> {
    let n = m.len();
    let len = m[0][0].len();
    let dt = det(m);
    if dt.body().iter().any(|x| x.abs() < 1e-300) {
        return Err(Error::SingularMetric("determinant vanishes".into()));
    }
    let inv_det = dt.recip()?;
    if n == 1 {
        return Ok(vec![vec![inv_det]]);
    }
    let mut out = zeros(n, len);
    for i in 0..n {
        for j in 0..n {
            let c = det(&minor(m, j, i)) * &inv_det;
            out[i][j] = if (i + j) % 2 == 0 { c } else { -c };
        }
    }
    Ok(out)
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let len = a[0][0].len();
    (0..n)
        .map(|i| (0..n).map(|j| sum_fields(len, (0..n).map(|k| &a[i][k] * &b[k][j]))).collect())
        .collect()
}

pub fn trace_with(inv: &Mat, t: &Mat) -> GField {
    let n = inv.len();
    let len = inv[0][0].len();
    sum_fields(len, (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| &inv[a][b] * &t[a][b]))
}

/// `A^{ab} = g^{ac} g^{bd} A_{cd}`.
pub fn raise_both(inv: &Mat, t: &Mat) -> Mat {
    matmul(&matmul(inv, t), inv)
}

/// `Σ_ab A_ab B^ab` with `B` already raised.
pub fn contract(a: &Mat, b: &Mat) -> GField {
    let n = a.len();
    let len = a[0][0].len();
    sum_fields(len, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| &a[i][j] * &b[i][j]))
}

pub fn raise(inv: &Mat, v: &[GField]) -> Vec<GField> {
    let len = v[0].len();
    (0..v.len()).map(|a| sum_fields(len, (0..v.len()).map(|b| &inv[a][b] * &v[b]))).collect()
}

pub fn dot(a: &[GField], b: &[GField]) -> GField {
    let len = a[0].len();
    sum_fields(len, a.iter().zip(b).map(|(x, y)| x * y))
}

/// `∂_c g_ab` for every tangential axis (or every axis including the normal
/// one on a bulk grid): `out[c][a][b]`.
pub fn metric_derivs(grid: &Grid, g: &Mat, axes: usize) -> Result<Vec<Mat>> {
    let n = g.len();
    let mut out = Vec::with_capacity(axes);
    for c in 0..axes {
        let mut m = zeros(n, g[0][0].len());
        for a in 0..n {
            for b in a..n {
                let v = grid.deriv(&g[a][b], c)?;
                m[b][a] = v.clone();
                m[a][b] = v;
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Christoffel symbols `Γ^c_ab`, indexed `[c][a][b]`, from the inverse
/// metric and the metric derivatives `dg[c][a][b] = ∂_c g_ab`.
pub fn christoffel(inv: &Mat, dg: &[Mat]) -> Vec<Mat> {
    let n = inv.len();
    let len = inv[0][0].len();
    // Γ_dab = ½(∂_a g_db + ∂_b g_da − ∂_d g_ab)
    let mut lower = vec![zeros(n, len); n];
    for d in 0..n {
        for a in 0..n {
            for b in a..n {
                let v = (&dg[a][d][b] + &dg[b][d][a] - &dg[d][a][b]).scale(0.5);
                lower[d][b][a] = v.clone();
                lower[d][a][b] = v;
            }
        }
    }
    let mut gam = vec![zeros(n, len); n];
    for c in 0..n {
        for a in 0..n {
            for b in a..n {
                let v = sum_fields(len, (0..n).map(|d| &inv[c][d] * &lower[d][a][b]));
                gam[c][b][a] = v.clone();
                gam[c][a][b] = v;
            }
        }
    }
    gam
}

/// Symmetrized covariant derivative `∇_(a v_b)` of a covector.
pub fn sym_cov_deriv(grid: &Grid, gam: &[Mat], v: &[GField]) -> Result<Mat> {
    let n = v.len();
    let len = v[0].len();
    let dv: Vec<Vec<GField>> = (0..n).map(|a| (0..n).map(|b| grid.deriv(&v[b], a)).collect()).collect::<Result<_>>()?;
    let mut out = zeros(n, len);
    for a in 0..n {
        for b in a..n {
            let conn = sum_fields(len, (0..n).map(|c| &gam[c][a][b] * &v[c]));
            let x = (&dv[a][b] + &dv[b][a]).scale(0.5) - conn;
            out[b][a] = x.clone();
            out[a][b] = x;
        }
    }
    Ok(out)
}

/// Ricci tensor from Christoffels:
/// `R_ab = ∂_c Γ^c_ab − ∂_b Γ^c_ac + Γ^c_cd Γ^d_ab − Γ^c_bd Γ^d_ac`.
pub fn ricci(grid: &Grid, gam: &[Mat]) -> Result<Mat> {
    let n = gam.len();
    let len = gam[0][0][0].len();
    let trace: Vec<GField> = (0..n).map(|a| sum_fields(len, (0..n).map(|c| gam[c][a][c].clone()))).collect();
    let mut r = zeros(n, len);
    for a in 0..n {
        for b in a..n {
            let mut acc = GField::zero(len);
            for c in 0..n {
                acc += &grid.deriv(&gam[c][a][b], c)?;
            }
            acc -= &grid.deriv(&trace[a], b)?;
            for c in 0..n {
                for d in 0..n {
                    acc += &(&gam[c][c][d] * &gam[d][a][b]);
                    acc -= &(&gam[c][b][d] * &gam[d][a][c]);
                }
            }
            r[b][a] = acc.clone();
            r[a][b] = acc;
        }
    }
    Ok(r)
}

/// Ricci scalar of a metric on `grid`, through Christoffels.
pub fn ricci_scalar(grid: &Grid, g: &Mat) -> Result<GField> {
    let inv = inverse(g)?;
    let axes = g.len();
    let dg = metric_derivs(grid, g, axes)?;
    let gam = christoffel(&inv, &dg);
    Ok(trace_with(&inv, &ricci(grid, &gam)?))
}

/// Independent route: the fully covariant Riemann tensor from second metric
/// derivatives, `R_abcd = ½(∂_b∂_c g_ad + ∂_a∂_d g_bc − ∂_a∂_c g_bd − ∂_b∂_d g_ac)
/// + g_ef(Γ^e_bc Γ^f_ad − Γ^e_bd Γ^f_ac)`, then `R = g^ac g^bd R_abcd`.
pub fn ricci_scalar_riemann(grid: &Grid, g: &Mat) -> Result<GField> {
    let n = g.len();
    let len = g[0][0].len();
    let inv = inverse(g)?;
    let dg = metric_derivs(grid, g, n)?;
    let gam = christoffel(&inv, &dg);
    // ddg[p][q][a][b] = ∂_p ∂_q g_ab
    let mut ddg = vec![vec![zeros(n, len); n]; n];
    for p in 0..n {
        for q in 0..n {
            for a in 0..n {
                for b in a..n {
                    let v = grid.deriv(&dg[q][a][b], p)?;
                    ddg[p][q][b][a] = v.clone();
                    ddg[p][q][a][b] = v;
                }
            }
        }
    }
    let mut total = GField::zero(len);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let w = &inv[a][c] * &inv[b][d];
                    if w.is_zero() {
                        continue;
                    }
                    let mut r = (&ddg[b][c][a][d] + &ddg[a][d][b][c] - &ddg[a][c][b][d] - &ddg[b][d][a][c]).scale(0.5);
                    for e in 0..n {
                        for f in 0..n {
                            let q = &gam[e][b][c] * &gam[f][a][d] - &gam[e][b][d] * &gam[f][a][c];
                            r += &(&g[e][f] * &q);
                        }
                    }
                    total += &(&w * &r);
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn real(g: &Grid, f: impl Fn(&[f64]) -> f64) -> GField {
        GField::from_real(g.sample(|x, _| f(x)))
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let g = Grid::periodic(3, 8).unwrap();
        let mut m = zeros(3, g.len());
        for (a, b) in sym_pairs(3) {
            let f = real(&g, |x| {
                let base = if a == b { 2.0 } else { 0.0 };
                base + 0.2 * (2.0 * PI * (x[a] + 2.0 * x[b])).sin()
            });
            m[a][b] = f.clone();
            m[b][a] = f;
        }
        let p = matmul(&m, &inverse(&m).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!(p[i][j].distance(&GField::constant(g.len(), e)) < 1e-12);
            }
        }
    }

    #[test]
    fn conformal_2d_scalar_curvature() {
        // γ = e^{2φ}δ has R = −2 e^{−2φ} Δφ
        let g = Grid::periodic(2, 32).unwrap();
        let phi = |x: &[f64]| 0.1 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
        let lap = |x: &[f64]| -8.0 * PI * PI * phi(x);
        let e2 = real(&g, |x| (2.0 * phi(x)).exp());
        let mut m = zeros(2, g.len());
        m[0][0] = e2.clone();
        m[1][1] = e2;
        let exact = real(&g, |x| -2.0 * (-2.0 * phi(x)).exp() * lap(x));
        assert!(ricci_scalar(&g, &m).unwrap().distance(&exact) < 1e-7);
        assert!(ricci_scalar_riemann(&g, &m).unwrap().distance(&exact) < 1e-7);
    }
}
