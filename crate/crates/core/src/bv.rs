//! Ghost and antifield sectors on a bulk patch: the BV action, the
//! cohomological vector field `Q` and the checks that `Q² = 0`.
//!
//! Spacetime indices run over `(x^1..x^d, x^n)`, the normal one last.

use std::collections::BTreeMap;

use crate::adm::{self, Geometry};
use crate::error::{Error, Result};
use crate::graded::GradedScalar;
use crate::grid::{sum_fields, GField};
use crate::state::{directional_derivative_vf, Comp, State, Tangent, VectorField};
use crate::tensor::{self, Mat};

pub fn xi_comp(d: usize, mu: usize) -> Comp {
    if mu == d {
        Comp::XiN
    } else {
        Comp::xi(mu)
    }
}

pub fn chi_comp(d: usize, mu: usize) -> Comp {
    if mu == d {
        Comp::ChiN
    } else {
        Comp::chi(mu)
    }
}

pub fn gd_comp(d: usize, mu: usize, nu: usize) -> Comp {
    match (mu == d, nu == d) {
        (true, true) => Comp::GdNN,
        (true, false) => Comp::gdn(nu),
        (false, true) => Comp::gdn(mu),
        _ => Comp::gd(mu, nu),
    }
}

fn require_bulk(s: &State) -> Result<()> {
    if !s.grid.is_bulk() {
        return Err(Error::MissingJets("the BV bulk sector needs a bulk patch".into()));
    }
    Ok(())
}

/// All `d + 1` partial derivatives.
fn grad(s: &State, f: &GField) -> Result<Vec<GField>> {
    (0..=s.d()).map(|mu| s.deriv(f, mu)).collect()
}

/// Spacetime view of a bulk BV state.
pub struct Spacetime {
    pub d: usize,
    pub g: Mat,
    pub ginv: Mat,
    pub xi: Vec<GField>,
    /// `dxi[μ][ρ] = ∂_μ ξ^ρ`
    pub dxi: Vec<Vec<GField>>,
    pub gd: Mat,
    pub chi: Vec<GField>,
}

impl Spacetime {
    pub fn new(s: &State) -> Result<Spacetime> {
        require_bulk(s)?;
        let d = s.d();
        let (g, ginv) = adm::assemble_spacetime_metric(s)?;
        let xi: Vec<GField> = (0..=d).map(|mu| s.get(xi_comp(d, mu))).collect();
        let dxi_t: Vec<Vec<GField>> = xi.iter().map(|x| grad(s, x)).collect::<Result<_>>()?;
        let dxi = (0..=d).map(|mu| (0..=d).map(|rho| dxi_t[rho][mu].clone()).collect()).collect();
        let gd = (0..=d).map(|mu| (0..=d).map(|nu| s.get(gd_comp(d, mu, nu))).collect()).collect();
        let chi = (0..=d).map(|mu| s.get(chi_comp(d, mu))).collect();
        Ok(Spacetime { d, g, ginv, xi, dxi, gd, chi })
    }

    fn len(&self) -> usize {
        self.xi[0].len()
    }
}

/// `(L_ξ g)_μν = ξ^ρ∂_ρ g_μν + ∂_μξ^ρ g_ρν + ∂_νξ^ρ g_μρ`.
pub fn lie_derivative_metric(s: &State, st: &Spacetime) -> Result<Mat> {
    let n = st.d + 1;
    let len = st.len();
    let dg = tensor::metric_derivs(&s.grid, &st.g, n)?;
    let mut out = tensor::zeros(n, len);
    for mu in 0..n {
        for nu in mu..n {
            let mut acc = sum_fields(len, (0..n).map(|r| &st.xi[r] * &dg[r][mu][nu]));
            for r in 0..n {
                acc += &(&st.dxi[mu][r] * &st.g[r][nu]);
                acc += &(&st.dxi[nu][r] * &st.g[mu][r]);
            }
            out[nu][mu] = acc.clone();
            out[mu][nu] = acc;
        }
    }
    Ok(out)
}

/// `ξ^σ ∂_σ ξ^ρ`, i.e. `½[ξ, ξ]`.
pub fn half_ghost_bracket(st: &Spacetime) -> Vec<GField> {
    let n = st.d + 1;
    let len = st.len();
    (0..n).map(|r| sum_fields(len, (0..n).map(|sg| &st.xi[sg] * &st.dxi[sg][r]))).collect()
}

/// `Q` on `(η, β, γ, ξ)` in component form:
/// `Qγ_ab = ξ^ρ∂_ργ_ab + 2∂_(aξ^n β_b) + 2∂_(aξ^c γ_b)c`,
/// `Qβ_a = ξ^ρ∂_ρβ_a + ∂_nξ^nβ_a + ∂_nξ^bγ_ab + ∂_aξ^n(−η² + β²) + ∂_aξ^bβ_b`,
/// `Qη = ξ^ρ∂_ρη + ∂_nξ^n η − ηβ^a∂_aξ^n`, `Qξ = ξ^σ∂_σξ`.
pub fn q_metric_ghost(s: &State) -> Result<Tangent> {
    let st = Spacetime::new(s)?;
    let d = st.d;
    let len = s.len();
    let geo = Geometry::new(s)?;
    let transport = |f: &GField| -> Result<GField> {
        let df = grad(s, f)?;
        Ok(sum_fields(len, (0..=d).map(|r| &st.xi[r] * &df[r])))
    };
    let mut out = Tangent::zero(len);
    let lapse = geo.beta_sq() - &geo.eta * &geo.eta;
    for (a, b) in tensor::sym_pairs(d) {
        let mut q = transport(&geo.gamma[a][b])?;
        q += &(&st.dxi[a][d] * &geo.beta[b] + &st.dxi[b][d] * &geo.beta[a]);
        for c in 0..d {
            q += &(&st.dxi[a][c] * &geo.gamma[b][c] + &st.dxi[b][c] * &geo.gamma[a][c]);
        }
        out.set(Comp::gamma(a, b), q);
    }
    for a in 0..d {
        let mut q = transport(&geo.beta[a])?;
        q += &(&st.dxi[d][d] * &geo.beta[a]);
        q += &(&st.dxi[a][d] * &lapse);
        for b in 0..d {
            q += &(&st.dxi[d][b] * &geo.gamma[a][b]);
            q += &(&st.dxi[a][b] * &geo.beta[b]);
        }
        out.set(Comp::beta(a), q);
    }
    let mut qe = transport(&geo.eta)?;
    qe += &(&st.dxi[d][d] * &geo.eta);
    for a in 0..d {
        qe -= &(&st.dxi[a][d] * &(&geo.eta * &geo.beta_up[a]));
    }
    out.set(Comp::Eta, qe);
    for (r, q) in half_ghost_bracket(&st).into_iter().enumerate() {
        out.set(xi_comp(d, r), q);
    }
    Ok(out)
}

/// Same components through `Q g = L_ξ g` and the chain rule
/// `g_ab = εγ_ab`, `g_na = εβ_a`, `g_nn = −ε(η² − β_aβ^a)`.
pub fn q_metric_ghost_covariant(s: &State) -> Result<Tangent> {
    let st = Spacetime::new(s)?;
    let d = st.d;
    let len = s.len();
    let e = s.eps;
    let geo = Geometry::new(s)?;
    let lg = lie_derivative_metric(s, &st)?;
    let mut out = Tangent::zero(len);
    let qgam: Mat = (0..d).map(|a| (0..d).map(|b| lg[a][b].scale(e)).collect()).collect();
    let qbeta: Vec<GField> = (0..d).map(|a| lg[a][d].scale(e)).collect();
    for (a, b) in tensor::sym_pairs(d) {
        out.set(Comp::gamma(a, b), qgam[a][b].clone());
    }
    for a in 0..d {
        out.set(Comp::beta(a), qbeta[a].clone());
    }
    // Q(β_aβ^a) = 2β^a Qβ_a − β^aβ^b Qγ_ab
    let mut qbb = sum_fields(len, (0..d).map(|a| (&geo.beta_up[a] * &qbeta[a]).scale(2.0)));
    for a in 0..d {
        for b in 0..d {
            qbb -= &(&(&geo.beta_up[a] * &geo.beta_up[b]) * &qgam[a][b]);
        }
    }
    let qe = (&(lg[d][d].scale(-e) + qbb) * &geo.eta_inv).scale(0.5);
    out.set(Comp::Eta, qe);
    for (r, q) in half_ghost_bracket(&st).into_iter().enumerate() {
        out.set(xi_comp(d, r), q);
    }
    Ok(out)
}

/// Euler–Lagrange derivative of the bulk action with respect to `g_μν`,
/// `E^μν = −√(−g)(R^μν − ½R g^μν + Λ g^μν)`, paired as `Σ_μν δg_μν E^μν`.
pub fn euler_lagrange_metric(s: &State) -> Result<Mat> {
    require_bulk(s)?;
    let n = s.d() + 1;
    let len = s.len();
    let (g, ginv) = adm::assemble_spacetime_metric(s)?;
    let dg = tensor::metric_derivs(&s.grid, &g, n)?;
    let gam = tensor::christoffel(&ginv, &dg);
    let ric = tensor::ricci(&s.grid, &gam)?;
    let r = tensor::trace_with(&ginv, &ric);
    let rup = tensor::raise_both(&ginv, &ric);
    let vol = adm::sqrt_minus_det(&g)?;
    let c = r.scale(-0.5) + GField::constant(len, s.lambda);
    let mut out = tensor::zeros(n, len);
    for mu in 0..n {
        for nu in 0..n {
            out[mu][nu] = -(&vol * &(&rup[mu][nu] + &(&c * &ginv[mu][nu])));
        }
    }
    Ok(out)
}

/// Antifield part of the metric Euler–Lagrange derivative,
/// `∂_σ(ξ^σ g†^μν) − ∂_σξ^μ g†^νσ − ∂_σξ^ν g†^μσ`.
pub fn euler_lagrange_metric_bv(s: &State, st: &Spacetime) -> Result<Mat> {
    let n = st.d + 1;
    let len = st.len();
    let mut out = tensor::zeros(n, len);
    for mu in 0..n {
        for nu in mu..n {
            let mut acc = GField::zero(len);
            for sg in 0..n {
                acc += &s.deriv(&(&st.xi[sg] * &st.gd[mu][nu]), sg)?;
                acc -= &(&st.dxi[sg][mu] * &st.gd[nu][sg]);
                acc -= &(&st.dxi[sg][nu] * &st.gd[mu][sg]);
            }
            out[nu][mu] = acc.clone();
            out[mu][nu] = acc;
        }
    }
    Ok(out)
}

/// Left derivative `∂S/∂ξ^ρ`:
/// `−∂_ρg_μν g†^μν + 2∂_μ(g_ρν g†^μν) + ∂_ρξ^σ χ_σ + ∂_σ(ξ^σ χ_ρ)`.
pub fn ghost_euler_lagrange(s: &State, st: &Spacetime) -> Result<Vec<GField>> {
    let n = st.d + 1;
    let len = st.len();
    let dg = tensor::metric_derivs(&s.grid, &st.g, n)?;
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let mut acc = GField::zero(len);
        for mu in 0..n {
            let mut flux = GField::zero(len);
            for nu in 0..n {
                acc -= &(&dg[r][mu][nu] * &st.gd[mu][nu]);
                flux += &(&st.g[r][nu] * &st.gd[mu][nu]);
            }
            acc += &s.deriv(&flux, mu)?.scale(2.0);
            acc += &(&st.dxi[r][mu] * &st.chi[mu]);
            acc += &s.deriv(&(&st.xi[mu] * &st.chi[r]), mu)?;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Sign relating `Q^χ` to the left derivative `∂S/∂ξ` for the odd
/// symplectic form `Ω = ∫ δg_μν δg†^μν − δξ^ρ δχ_ρ` (left conventions).
pub const CHI_SIGN: f64 = -1.0;

/// Full `Q` on a bulk state. Antifields follow the Euler–Lagrange route:
/// `Q g† = E_ADM + E_BV` and `Q χ = −∂S/∂ξ`.
pub fn apply_q_bulk(s: &State) -> Result<Tangent> {
    let s = adm::with_normal_jets(s)?;
    let st = Spacetime::new(&s)?;
    let d = st.d;
    let mut out = q_metric_ghost(&s)?;
    let el = euler_lagrange_metric(&s)?;
    let elb = euler_lagrange_metric_bv(&s, &st)?;
    for mu in 0..=d {
        for nu in mu..=d {
            out.set(gd_comp(d, mu, nu), &el[mu][nu] + &elb[mu][nu]);
        }
    }
    for (r, q) in ghost_euler_lagrange(&s, &st)?.into_iter().enumerate() {
        out.set(chi_comp(d, r), q.scale(CHI_SIGN));
    }
    Ok(out)
}

/// Antifield components of `Q` through the constraint functionals:
/// `(Qg†)^nn = −½εη⁻¹G_η + ...`, `(Qg†)^na = ½εG_β^a + ½εη⁻¹β^aG_η + ...`,
/// `(Qg†)^ab = εG_γ^ab − ½εη⁻¹β^aβ^bG_η + ...`, with
/// `G_γ^ab = ε(E^ab − β^aβ^b E^nn)` the `γ`-derivative of the bulk action.
pub fn q_antifield_constraints(s: &State) -> Result<Tangent> {
    let s = adm::with_normal_jets(s)?;
    let st = Spacetime::new(&s)?;
    let d = st.d;
    let e = s.eps;
    let geo = Geometry::new(&s)?;
    let g_eta = adm::g_eta(&s, &geo)?;
    let g_beta = adm::g_beta(&s, &geo)?;
    let el = euler_lagrange_metric(&s)?;
    let elb = euler_lagrange_metric_bv(&s, &st)?;
    let half_ie = geo.eta_inv.scale(0.5 * e);
    let mut out = Tangent::zero(s.len());
    out.set(Comp::GdNN, -(&half_ie * &g_eta) + &elb[d][d]);
    for a in 0..d {
        let v = g_beta[a].scale(0.5 * e) + &(&(&half_ie * &geo.beta_up[a]) * &g_eta) + &elb[a][d];
        out.set(Comp::gdn(a), v);
    }
    for (a, b) in tensor::sym_pairs(d) {
        let bb = &geo.beta_up[a] * &geo.beta_up[b];
        let g_gamma = (&el[a][b] - &(&bb * &el[d][d])).scale(e);
        let v = g_gamma.scale(e) - &(&(&half_ie * &bb) * &g_eta) + &elb[a][b];
        out.set(Comp::gd(a, b), v);
    }
    Ok(out)
}

/// `Q̃J_ab = ∂_n(Qγ_ab)` on every layer.
pub fn q_jet(s: &State) -> Result<Tangent> {
    let q = q_metric_ghost(s)?;
    let d = s.d();
    let mut out = Tangent::zero(s.len());
    for (a, b) in tensor::sym_pairs(d) {
        out.set(Comp::j(a, b), s.deriv(&q.get(Comp::gamma(a, b)), d)?);
    }
    Ok(out)
}

/// BV action density `L_ADM − (L_ξ g)_μν g†^μν + ξ^σ∂_σξ^ρ χ_ρ`.
pub fn bv_density(s: &State) -> Result<GField> {
    let s = adm::with_normal_jets(s)?;
    let st = Spacetime::new(&s)?;
    let n = st.d + 1;
    let len = s.len();
    let mut l = adm::adm_lagrangian_density(&s)?;
    let lg = lie_derivative_metric(&s, &st)?;
    for mu in 0..n {
        for nu in 0..n {
            l -= &(&lg[mu][nu] * &st.gd[mu][nu]);
        }
    }
    let hb = half_ghost_bracket(&st);
    l += &sum_fields(len, (0..n).map(|r| &hb[r] * &st.chi[r]));
    Ok(l)
}

pub fn bv_action(s: &State) -> Result<GradedScalar> {
    Ok(s.integrate(&bv_density(s)?))
}

/// The antifield-dependent part of the action alone.
pub fn bv_extension(s: &State) -> Result<GradedScalar> {
    let s = adm::with_normal_jets(s)?;
    Ok(s.integrate(&(bv_density(&s)? - adm::adm_lagrangian_density(&s)?)))
}

/// Component displays of the functional derivatives of the antifield part
/// of the action.
pub struct BvDerivatives {
    pub eta: GField,
    pub beta: Vec<GField>,
    /// `∂/∂γ_ab`, symmetric.
    pub gamma: Mat,
    pub gd_nn: GField,
    pub gd_n: Vec<GField>,
    /// `∂/∂g†^ab`, symmetric.
    pub gd: Mat,
    pub xi_n: GField,
    pub xi: Vec<GField>,
    pub chi: Vec<GField>,
}

pub fn bv_derivatives(s: &State) -> Result<BvDerivatives> {
    let s = adm::with_normal_jets(s)?;
    let st = Spacetime::new(&s)?;
    let d = st.d;
    let n = d + 1;
    let len = s.len();
    let e = s.eps;
    let geo = Geometry::new(&s)?;
    let elb = euler_lagrange_metric_bv(&s, &st)?;
    let lg = lie_derivative_metric(&s, &st)?;
    // ∂S/∂η = −2εη E^nn, ∂S/∂β_a = 2ε(E^na + β^a E^nn), ∂S/∂γ_ab = ε(E^ab − β^aβ^b E^nn)
    let eta = (&geo.eta * &elb[d][d]).scale(-2.0 * e);
    let beta = (0..d).map(|a| (&elb[a][d] + &(&geo.beta_up[a] * &elb[d][d])).scale(2.0 * e)).collect();
    let mut gamma = tensor::zeros(d, len);
    for a in 0..d {
        for b in 0..d {
            gamma[a][b] = (&elb[a][b] - &(&(&geo.beta_up[a] * &geo.beta_up[b]) * &elb[d][d])).scale(e);
        }
    }
    let gd_nn = lg[d][d].clone();
    let gd_n = (0..d).map(|a| lg[a][d].scale(2.0)).collect();
    let gd = (0..d).map(|a| (0..d).map(|b| lg[a][b].clone()).collect()).collect();
    let dx = ghost_euler_lagrange(&s, &st)?;
    let hb = half_ghost_bracket(&st);
    let _ = n;
    Ok(BvDerivatives {
        eta,
        beta,
        gamma,
        gd_nn,
        gd_n,
        gd,
        xi_n: dx[d].clone(),
        xi: dx[..d].to_vec(),
        chi: hb,
    })
}

/// `∂S/∂ξ^n` written out in lapse–shift variables:
/// `ε[∂_n(−η²+β²)g†^nn + 2(−η²+β²)∂_n g†^nn + 2β_a∂_n g†^na + 2∂_a(−η²+β²)g†^an
/// + 2(−η²+β²)∂_a g†^an + 2∂_aβ_b g†^ab + 2β_b∂_a g†^ab − J_ab g†^ab]
/// + ∂_nξ^σχ_σ + ∂_σξ^σχ_n + ξ^σ∂_σχ_n`.
pub fn ghost_derivative_normal_display(s: &State) -> Result<GField> {
    let s = adm::with_normal_jets(s)?;
    let st = Spacetime::new(&s)?;
    let d = st.d;
    let len = s.len();
    let geo = Geometry::new(&s)?;
    let lapse = geo.beta_sq() - &geo.eta * &geo.eta;
    let dl = grad(&s, &lapse)?;
    let gnn = &st.gd[d][d];
    let mut m = &dl[d] * gnn + (&lapse * &s.deriv(gnn, d)?).scale(2.0);
    for a in 0..d {
        let gna = &st.gd[a][d];
        m += &(&geo.beta[a] * &s.deriv(gna, d)?).scale(2.0);
        m += &(&dl[a] * gna).scale(2.0);
        m += &(&lapse * &s.deriv(gna, a)?).scale(2.0);
        for b in 0..d {
            let gab = &st.gd[a][b];
            m += &(&s.deriv(&geo.beta[b], a)? * gab).scale(2.0);
            m += &(&geo.beta[b] * &s.deriv(gab, a)?).scale(2.0);
            m -= &(&geo.j[a][b] * gab);
        }
    }
    let mut out = m.scale(s.eps);
    for sg in 0..=d {
        out += &(&st.dxi[d][sg] * &st.chi[sg]);
        out += &(&st.dxi[sg][sg] * &st.chi[d]);
        out += &(&st.xi[sg] * &s.deriv(&st.chi[d], sg)?);
    }
    let _ = len;
    Ok(out)
}

/// `∂S/∂ξ^a` written out in lapse–shift variables:
/// `ε[−∂_a(−η²+β²)g†^nn − 2∂_aβ_b g†^nb − ∂_aγ_bc g†^bc + 2∂_n(β_a g†^nn)
/// + 2∂_b(β_a g†^bn) + 2∂_n(γ_ab g†^nb) + 2∂_c(γ_ab g†^cb)]
/// + ∂_aξ^σχ_σ + ∂_σξ^σχ_a + ξ^σ∂_σχ_a`.
pub fn ghost_derivative_tangential_display(s: &State) -> Result<Vec<GField>> {
    let s = adm::with_normal_jets(s)?;
    let st = Spacetime::new(&s)?;
    let d = st.d;
    let geo = Geometry::new(&s)?;
    let lapse = geo.beta_sq() - &geo.eta * &geo.eta;
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let mut m = -(&s.deriv(&lapse, a)? * &st.gd[d][d]);
        m += &s.deriv(&(&geo.beta[a] * &st.gd[d][d]), d)?.scale(2.0);
        for b in 0..d {
            m -= &(&s.deriv(&geo.beta[b], a)? * &st.gd[d][b]).scale(2.0);
            m += &s.deriv(&(&geo.beta[a] * &st.gd[b][d]), b)?.scale(2.0);
            m += &s.deriv(&(&geo.gamma[a][b] * &st.gd[d][b]), d)?.scale(2.0);
            for c in 0..d {
                m -= &(&s.deriv(&geo.gamma[b][c], a)? * &st.gd[b][c]);
                m += &s.deriv(&(&geo.gamma[a][b] * &st.gd[c][b]), c)?.scale(2.0);
            }
        }
        let mut v = m.scale(s.eps);
        for sg in 0..=d {
            v += &(&st.dxi[a][sg] * &st.chi[sg]);
            v += &(&st.dxi[sg][sg] * &st.chi[a]);
            v += &(&st.xi[sg] * &s.deriv(&st.chi[a], sg)?);
        }
        out.push(v);
    }
    Ok(out)
}

/// `‖Q²φ‖_∞` on the metric and ghost slots, keyed by slot name.
pub fn q_square_residual(s: &State) -> Result<BTreeMap<String, f64>> {
    let s = adm::with_normal_jets(s)?;
    let d = s.d();
    let mut keep: Vec<Comp> = vec![Comp::Eta];
    keep.extend((0..d).map(Comp::beta));
    keep.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::gamma(a, b)));
    keep.push(Comp::XiN);
    keep.extend((0..d).map(Comp::xi));
    let keep2 = keep.clone();
    let q = VectorField::new(1, move |x: &State| Ok(q_metric_ghost(x)?.restrict(&keep2)));
    let qv = q.at(&s)?;
    let q2 = directional_derivative_vf(&q, &s, &qv)?;
    let mut out = BTreeMap::new();
    for c in keep {
        out.insert(c.name(), q2.get(c).max_abs());
    }
    Ok(out)
}

/// Variation of the spacetime metric along the `(η, β, γ)` slots of `x`.
pub fn metric_variation(geo: &Geometry, eps: f64, x: &Tangent) -> Mat {
    let d = geo.d;
    let len = geo.len();
    let mut m = tensor::zeros(d + 1, len);
    let xb: Vec<GField> = (0..d).map(|a| x.get(Comp::beta(a))).collect();
    let xg: Mat = (0..d).map(|a| (0..d).map(|b| x.get(Comp::gamma(a, b))).collect()).collect();
    let mut nn = (&geo.eta * &x.get(Comp::Eta)).scale(2.0);
    for a in 0..d {
        nn -= &(&geo.beta_up[a] * &xb[a]).scale(2.0);
        for b in 0..d {
            nn += &(&(&geo.beta_up[a] * &geo.beta_up[b]) * &xg[a][b]);
            m[a][b] = xg[a][b].scale(eps);
        }
        m[a][d] = xb[a].scale(eps);
        m[d][a] = m[a][d].clone();
    }
    m[d][d] = nn.scale(-eps);
    m
}

/// Density of the odd symplectic form `Ω = ∫ δg_μν δg†^μν − δξ^ρ δχ_ρ`
/// on two tangents of degrees `kx`, `ky`.
pub fn omega_bulk_density(s: &State, x: &Tangent, kx: i32, y: &Tangent, ky: i32) -> Result<GField> {
    let d = s.d();
    let geo = Geometry::new(s)?;
    let xg = metric_variation(&geo, s.eps, x);
    let yg = metric_variation(&geo, s.eps, y);
    let sgn = if (kx * ky).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let mut out = GField::zero(s.len());
    for mu in 0..=d {
        for nu in 0..=d {
            let c = gd_comp(d, mu, nu);
            out += &(&yg[mu][nu] * &x.get(c)).scale(sgn);
            out -= &(&xg[mu][nu] * &y.get(c));
        }
        let (xc, cc) = (xi_comp(d, mu), chi_comp(d, mu));
        out -= &(&y.get(xc) * &x.get(cc)).scale(sgn);
        out += &(&x.get(xc) * &y.get(cc));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{random_direction, PresetRegistry, PresetSpec, Sampler};
    use crate::state::directional_derivative;

    fn closed(n: usize, amp: f64, seed: u64) -> State {
        let spec = PresetSpec { d: 2, n, ghosts: true, closed: true, amplitude: amp, seed, ..Default::default() };
        PresetRegistry::default().build("random_smooth", &spec).unwrap()
    }

    fn all_comps(d: usize) -> Vec<Comp> {
        let mut v = vec![Comp::Eta];
        v.extend((0..d).map(Comp::beta));
        v.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::gamma(a, b)));
        for mu in 0..=d {
            v.push(xi_comp(d, mu));
            v.push(chi_comp(d, mu));
            for nu in mu..=d {
                v.push(gd_comp(d, mu, nu));
            }
        }
        v
    }

    #[test]
    fn component_q_matches_lie_derivative() {
        let s = closed(24, 0.03, 1);
        let a = q_metric_ghost(&s).unwrap();
        let b = q_metric_ghost_covariant(&s).unwrap();
        assert!(a.distance(&b) < 1e-8, "{}", a.distance(&b));
    }

    #[test]
    fn q_squares_to_zero_on_metric_and_ghosts() {
        let s = closed(24, 0.03, 2);
        for (k, v) in q_square_residual(&s).unwrap() {
            assert!(v < 1e-8, "{k}: {v}");
        }
    }

    #[test]
    fn antifield_q_through_constraints() {
        let s = closed(24, 0.03, 3);
        let q = apply_q_bulk(&s).unwrap();
        let p = q_antifield_constraints(&s).unwrap();
        for (c, v) in p.comps() {
            assert!(q.get(*c).distance(v) < 1e-8, "{c}");
        }
    }

    #[test]
    fn displays_are_functional_derivatives() {
        let s0 = closed(16, 0.05, 4);
        let d = 2;
        let bd = bv_derivatives(&s0).unwrap();
        let dn = ghost_derivative_normal_display(&s0).unwrap();
        let dt = ghost_derivative_tangential_display(&s0).unwrap();
        // the expanded form differentiates products term by term
        assert!(dn.distance(&bd.xi_n) < 1e-4, "{:e}", dn.distance(&bd.xi_n));
        assert!(dt[0].distance(&bd.xi[0]) < 1e-8);
        let mut sampler = Sampler::new(9);
        let cases: Vec<(Comp, GField)> = vec![
            (Comp::Eta, bd.eta.clone()),
            (Comp::beta(1), bd.beta[1].clone()),
            (Comp::gamma(0, 0), bd.gamma[0][0].clone()),
            (Comp::gamma(0, 1), bd.gamma[0][1].scale(2.0)),
            (Comp::GdNN, bd.gd_nn.clone()),
            (Comp::gdn(0), bd.gd_n[0].clone()),
            (Comp::gd(0, 1), bd.gd[0][1].scale(2.0)),
            (Comp::XiN, bd.xi_n.clone()),
            (Comp::xi(1), bd.xi[1].clone()),
            (Comp::chi(0), bd.chi[0].clone()),
            (Comp::ChiN, bd.chi[d].clone()),
        ];
        for (c, disp) in cases {
            let mut s = s0.clone();
            let y = random_direction(&mut s, &mut sampler, &[c], 1.0).unwrap();
            let lhs = directional_derivative(bv_extension, &s, &y).unwrap();
            let rhs = s.integrate(&(&y.get(c) * &disp));
            let r = lhs.distance(&rhs);
            assert!(r < 1e-9 * (1.0 + lhs.max_abs()), "{c}: {r:e}");
        }
    }

    #[test]
    fn q_is_hamiltonian_in_the_interior() {
        let s0 = closed(24, 0.03, 5);
        let q = apply_q_bulk(&s0).unwrap();
        let mut s = s0.clone();
        let y = random_direction(&mut s, &mut Sampler::new(11), &all_comps(2), 1.0).unwrap();
        let lhs = s.integrate(&omega_bulk_density(&s, &q, 1, &y, 0).unwrap());
        let rhs = directional_derivative(bv_action, &s, &y).unwrap();
        let r = lhs.distance(&rhs);
        assert!(r < 1e-7 * (1.0 + rhs.max_abs()), "{r:e} vs {:e}", rhs.max_abs());
    }

    #[test]
    fn boundary_states_are_rejected() {
        let spec = PresetSpec { ghosts: true, ..Default::default() };
        let s = PresetRegistry::default().build("random_smooth", &spec).unwrap();
        assert!(matches!(apply_q_bulk(&s), Err(Error::MissingJets(_))));
    }
}
