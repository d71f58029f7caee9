//! Degree-0 geometry of the ADM multiplet `(η, β_a, γ_ab, J_ab)`.
//!
//! All routines work on boundary states and, layer by layer, on bulk-patch
//! states (tangential derivatives only; the normal jet is the `J` slot).

use crate::error::{Error, Result};
use crate::grid::{sum_fields, GField};
use crate::state::{Comp, State};
use crate::tensor::{self, Mat};

/// Boundary geometry derived from one state.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub d: usize,
    pub eps: f64,
    pub gamma: Mat,
    pub inv: Mat,
    pub sqrt_g: GField,
    pub eta: GField,
    pub eta_inv: GField,
    pub beta: Vec<GField>,
    /// `β^a = γ^{ab} β_b`
    pub beta_up: Vec<GField>,
    /// `Γ^c_ab`, indexed `[c][a][b]`
    pub gam: Vec<Mat>,
    /// `∇_(a β_b)`
    pub nabla_beta: Mat,
    pub j: Mat,
    pub t: Mat,
    pub k: Mat,
    /// `K^{ab}`
    pub k_up: Mat,
    pub k_trace: GField,
}

pub fn check_dimension(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::DimensionUnsupported(d));
    }
    Ok(())
}

impl Geometry {
    pub fn new(s: &State) -> Result<Geometry> {
        let d = s.d();
        let gamma = s.sym(Comp::gamma);
        let inv = tensor::inverse(&gamma)?;
        let det = tensor::det(&gamma);
        if det.body().iter().any(|x| *x <= 0.0) {
            return Err(Error::SingularMetric("γ is not positive definite".into()));
        }
        let sqrt_g = det.sqrt()?;
        let eta = s.get(Comp::Eta);
        if eta.body().iter().any(|x| *x <= 0.0) {
            return Err(Error::SingularMetric("η must be positive".into()));
        }
        let eta_inv = eta.recip()?;
        let beta = s.vector(Comp::beta);
        let beta_up = tensor::raise(&inv, &beta);
        let dg = tensor::metric_derivs(&s.grid, &gamma, d)?;
        let gam = tensor::christoffel(&inv, &dg);
        let nabla_beta = tensor::sym_cov_deriv(&s.grid, &gam, &beta)?;
        let j = s.sym(Comp::j);
        let len = s.len();
        let mut t = tensor::zeros(d, len);
        let mut k = tensor::zeros(d, len);
        for a in 0..d {
            for b in 0..d {
                t[a][b] = nabla_beta[a][b].scale(2.0) - &j[a][b];
                k[a][b] = (&eta_inv * &t[a][b]).scale(0.5);
            }
        }
        let k_up = tensor::raise_both(&inv, &k);
        let k_trace = tensor::trace_with(&inv, &k);
        Ok(Geometry {
            d,
            eps: s.eps,
            gamma,
            inv,
            sqrt_g,
            eta,
            eta_inv,
            beta,
            beta_up,
            gam,
            nabla_beta,
            j,
            t,
            k,
            k_up,
            k_trace,
        })
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// `K_ab K^ab − K²`
    pub fn kinetic(&self) -> GField {
        tensor::contract(&self.k, &self.k_up) - &self.k_trace * &self.k_trace
    }

    /// `β_a β^a`
    pub fn beta_sq(&self) -> GField {
        tensor::dot(&self.beta, &self.beta_up)
    }

    /// `∇_c K_ab`, indexed `[c][a][b]`.
    pub fn nabla_k(&self, s: &State) -> Result<Vec<Mat>> {
        let d = self.d;
        let len = self.len();
        let mut out = vec![tensor::zeros(d, len); d];
        for c in 0..d {
            for a in 0..d {
                for b in a..d {
                    let mut v = s.deriv(&self.k[a][b], c)?;
                    for e in 0..d {
                        v -= &(&self.gam[e][c][a] * &self.k[e][b]);
                        v -= &(&self.gam[e][c][b] * &self.k[a][e]);
                    }
                    out[c][b][a] = v.clone();
                    out[c][a][b] = v;
                }
            }
        }
        Ok(out)
    }
}

/// `(K_ab, T_ab, K)`.
pub fn extrinsic_curvature(s: &State) -> Result<(Mat, Mat, GField)> {
    let g = Geometry::new(s)?;
    Ok((g.k, g.t, g.k_trace))
}

/// Scalar curvature `R[γ]` of the boundary metric.
pub fn boundary_ricci_scalar(s: &State) -> Result<GField> {
    tensor::ricci_scalar(&s.grid, &s.sym(Comp::gamma))
}

/// The curvature term entering the ADM Lagrangian, `R[εγ] = ε R[γ]`.
pub fn signed_ricci_scalar(s: &State) -> Result<GField> {
    Ok(boundary_ricci_scalar(s)?.scale(s.eps))
}

/// `L_ADM = η√γ (ε(K_ab K^ab − K²) + R∂ − 2Λ)`.
pub fn adm_lagrangian_density(s: &State) -> Result<GField> {
    let g = Geometry::new(s)?;
    lagrangian_from(s, &g)
}

pub fn lagrangian_from(s: &State, g: &Geometry) -> Result<GField> {
    let r = signed_ricci_scalar(s)?;
    let inner = g.kinetic().scale(s.eps) + r - GField::constant(s.len(), 2.0 * s.lambda);
    Ok(&(&g.eta * &g.sqrt_g) * &inner)
}

/// `G_η = ε√γ(ε(R∂ − 2Λ) + K² − K_ab K^ab)`.
pub fn g_eta(s: &State, g: &Geometry) -> Result<GField> {
    let r = signed_ricci_scalar(s)? - GField::constant(s.len(), 2.0 * s.lambda);
    let inner = r.scale(s.eps) - g.kinetic();
    Ok((&g.sqrt_g * &inner).scale(s.eps))
}

/// Momentum constraint as the Euler–Lagrange derivative `∂S_ADM/∂β_b`:
/// `−2ε γ^{ba}[∂_c(√γ γ^{cd} K_da) + ½√γ ∂_a γ^{cd} K_cd − √γ ∂_a K]`.
pub fn g_beta(s: &State, g: &Geometry) -> Result<Vec<GField>> {
    let d = g.d;
    let len = g.len();
    let dinv: Vec<Mat> = tensor::metric_derivs(&s.grid, &g.inv, d)?;
    let mut lower = Vec::with_capacity(d);
    for a in 0..d {
        let mut acc = GField::zero(len);
        for c in 0..d {
            let flux = sum_fields(len, (0..d).map(|e| &g.inv[c][e] * &g.k[e][a]));
            acc += &s.deriv(&(&g.sqrt_g * &flux), c)?;
        }
        let tr = tensor::contract(&dinv[a], &g.k);
        acc += &(&g.sqrt_g * &tr).scale(0.5);
        acc -= &(&g.sqrt_g * &s.deriv(&g.k_trace, a)?);
        lower.push(acc);
    }
    Ok(tensor::raise(&g.inv, &lower).into_iter().map(|f| f.scale(-2.0 * s.eps)).collect())
}

/// Covariant momentum constraint `𝓗_c^b = √γ γ^{ba}(γ^{cd}∇_c K_da − ∇_a K)`.
pub fn momentum_constraint_covariant(s: &State, g: &Geometry) -> Result<Vec<GField>> {
    let d = g.d;
    let len = g.len();
    let nk = g.nabla_k(s)?;
    let mut lower = Vec::with_capacity(d);
    for a in 0..d {
        let mut acc = GField::zero(len);
        for c in 0..d {
            for e in 0..d {
                acc += &(&g.inv[c][e] * &nk[c][e][a]);
            }
        }
        // ∇_a K = ∂_a K for a scalar
        acc -= &s.deriv(&g.k_trace, a)?;
        lower.push(&g.sqrt_g * &acc);
    }
    Ok(tensor::raise(&g.inv, &lower))
}

/// Classical constraints `(G_η, G_β^a)`.
pub fn classical_constraints(s: &State) -> Result<(GField, Vec<GField>)> {
    let g = Geometry::new(s)?;
    Ok((g_eta(s, &g)?, g_beta(s, &g)?))
}

/// Spacetime metric of a bulk-patch state, axes ordered `(x^1..x^d, x^n)`:
/// `g_nn = −ε(η² − β_aβ^a)`, `g_na = εβ_a`, `g_ab = εγ_ab`.
pub fn assemble_spacetime_metric(s: &State) -> Result<(Mat, Mat)> {
    let d = s.d();
    let len = s.len();
    let g = Geometry::new(s)?;
    let lapse2 = &g.eta * &g.eta - g.beta_sq();
    if lapse2.body().iter().any(|x| *x <= 0.0) {
        return Err(Error::SingularMetric("η² − β_aβ^a must stay positive".into()));
    }
    let e = s.eps;
    let mut m = tensor::zeros(d + 1, len);
    for a in 0..d {
        for b in 0..d {
            m[a][b] = g.gamma[a][b].scale(e);
        }
        m[a][d] = g.beta[a].scale(e);
        m[d][a] = g.beta[a].scale(e);
    }
    m[d][d] = lapse2.scale(-e);
    // g^{μν} = ε η^{-2} [[η²γ^{ab} − β^aβ^b, β^a], [β^b, −1]]
    let ie2 = &g.eta_inv * &g.eta_inv;
    let mut inv = tensor::zeros(d + 1, len);
    for a in 0..d {
        for b in 0..d {
            let x = &(&g.eta * &g.eta) * &g.inv[a][b] - &g.beta_up[a] * &g.beta_up[b];
            inv[a][b] = (&ie2 * &x).scale(e);
        }
        inv[a][d] = (&ie2 * &g.beta_up[a]).scale(e);
        inv[d][a] = inv[a][d].clone();
    }
    inv[d][d] = ie2.scale(-e);
    Ok((m, inv))
}

/// `√|det g|` computed from the assembled matrix. The determinant must not
/// change sign across the grid.
pub fn sqrt_minus_det(m: &Mat) -> Result<GField> {
    let det = tensor::det(m);
    let body = det.body();
    let sign = if body.first().copied().unwrap_or(-1.0) < 0.0 { -1.0 } else { 1.0 };
    if body.iter().any(|x| sign * *x <= 0.0) {
        return Err(Error::SingularMetric("det g vanishes or changes sign".into()));
    }
    det.scale(sign).sqrt()
}

/// `(R[g] − 2Λ)√(−g)` of the bulk metric, through Christoffels.
pub fn bulk_eh_density(s: &State) -> Result<GField> {
    let (m, _) = assemble_spacetime_metric(s)?;
    let r = tensor::ricci_scalar(&s.grid, &m)?;
    let vol = sqrt_minus_det(&m)?;
    Ok(&(r - GField::constant(s.len(), 2.0 * s.lambda)) * &vol)
}

/// Same density through the independent Riemann-tensor route.
pub fn bulk_eh_density_riemann(s: &State) -> Result<GField> {
    let (m, _) = assemble_spacetime_metric(s)?;
    let r = tensor::ricci_scalar_riemann(&s.grid, &m)?;
    let vol = sqrt_minus_det(&m)?;
    Ok(&(r - GField::constant(s.len(), 2.0 * s.lambda)) * &vol)
}

/// Fill the `J` slots of a bulk-patch state with `∂_n γ_ab`.
pub fn with_normal_jets(s: &State) -> Result<State> {
    if !s.grid.is_bulk() {
        return Err(Error::MissingJets("normal derivatives need a bulk patch".into()));
    }
    let mut out = s.clone();
    let d = s.d();
    for (a, b) in tensor::sym_pairs(d) {
        out.set(Comp::j(a, b), s.deriv(&s.get(Comp::gamma(a, b)), d)?);
    }
    Ok(out)
}

/// Pointwise residual of
/// `√(−g)(R − 2Λ) = L_ADM − 2ε∂_n(√γK) + 2ε∂_a(√γKβ^a − √γγ^{ab}∂_bη)`.
pub fn ghy_decomposition_residual(s: &State) -> Result<GField> {
    let s = with_normal_jets(s)?;
    let d = s.d();
    let len = s.len();
    let g = Geometry::new(&s)?;
    let eh = bulk_eh_density(&s)?;
    let l = lagrangian_from(&s, &g)?;
    let sk = &g.sqrt_g * &g.k_trace;
    let mut div = GField::zero(len);
    for a in 0..d {
        let grad_eta = sum_fields(len, (0..d).map(|b| &g.inv[a][b] * &s.deriv(&g.eta, b).unwrap_or_else(|_| GField::zero(len))));
        let flux = &sk * &g.beta_up[a] - &g.sqrt_g * &grad_eta;
        div += &s.deriv(&flux, a)?;
    }
    let rhs = l - s.deriv(&sk, d)?.scale(2.0 * s.eps) + div.scale(2.0 * s.eps);
    Ok(eh - rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graded::GrassmannConfig;
    use crate::grid::Grid;
    use std::sync::Arc;

    fn flat(d: usize, n: usize) -> State {
        let g = Grid::periodic(d, n).unwrap();
        let mut s = State::new(g.clone(), Arc::new(GrassmannConfig::default()), 1.0, 0.0);
        s.set(Comp::Eta, GField::constant(g.len(), 1.0));
        for a in 0..d {
            s.set(Comp::gamma(a, a), GField::constant(g.len(), 1.0));
        }
        s
    }

    #[test]
    fn trivial_extrinsic_curvature() {
        let mut s = flat(3, 8);
        let len = s.len();
        for a in 0..3 {
            s.set(Comp::j(a, a), GField::constant(len, 0.4));
        }
        let (k, _, tr) = extrinsic_curvature(&s).unwrap();
        assert!(k[1][1].distance(&GField::constant(len, -0.2)) < 1e-14);
        assert!(tr.distance(&GField::constant(len, -0.6)) < 1e-14);
        s.set(Comp::Eta, GField::constant(len, 2.0));
        for a in 0..3 {
            s.set(Comp::j(a, a), GField::constant(len, 1.0));
        }
        let (k, _, _) = extrinsic_curvature(&s).unwrap();
        assert!(k[2][2].distance(&GField::constant(len, -0.25)) < 1e-14);
    }

    #[test]
    fn flat_lagrangian_and_constraints() {
        let mut s = flat(3, 8);
        let len = s.len();
        assert!(adm_lagrangian_density(&s).unwrap().max_abs() < 1e-12);
        s.lambda = 0.3;
        assert!(adm_lagrangian_density(&s).unwrap().distance(&GField::constant(len, -0.6)) < 1e-12);
        s.lambda = 0.0;
        let c = 0.5;
        for a in 0..3 {
            s.set(Comp::j(a, a), GField::constant(len, c));
        }
        let (ge, gb) = classical_constraints(&s).unwrap();
        assert!(ge.distance(&GField::constant(len, 1.5 * c * c)) < 1e-12);
        assert!(gb.iter().all(|f| f.max_abs() < 1e-12));
    }

    #[test]
    fn flat_metric_assembly() {
        let g = Grid::bulk(2, 8, 9, 0.05).unwrap();
        let mut s = State::new(g.clone(), Arc::new(GrassmannConfig::default()), 1.0, 0.0);
        s.set(Comp::Eta, GField::constant(g.len(), 1.0));
        for a in 0..2 {
            s.set(Comp::gamma(a, a), GField::constant(g.len(), 1.0));
        }
        let (m, inv) = assemble_spacetime_metric(&s).unwrap();
        assert!(m[2][2].distance(&GField::constant(g.len(), -1.0)) < 1e-15);
        let p = tensor::matmul(&m, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!(p[i][j].distance(&GField::constant(g.len(), e)) < 1e-15);
            }
        }
        assert!(ghy_decomposition_residual(&s).unwrap().max_abs() < 1e-9);
    }
}
