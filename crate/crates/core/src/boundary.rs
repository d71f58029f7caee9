//! Boundary structure: pre-boundary forms, kernel generators, the reduction
//! to Darboux coordinates, the boundary action and its vector field.
//!
//! Pre-boundary states live on a boundary grid and carry `J_ab`; Darboux
//! states reuse [`State`] with the slots `γ_ab, Π_ab, ξ^n, ξ^a, φ_n, φ_a`.

use crate::adm::{self, check_dimension, Geometry};
use crate::bv;
use crate::error::{Error, Result};
use crate::graded::{GradedScalar, Monomial};
use crate::grid::{sum_fields, GField};
use crate::state::{bracket, directional_derivative, directional_derivative_vf, Comp, State, Tangent, VectorField};
use crate::tensor::{self, Mat};

fn degree_of(x: &Tangent) -> Result<i32> {
    Ok(x.degree()?.unwrap_or(0))
}

/// `(−1)^{|a|(k+1)}` for an odd prefactor `a` in front of `δφ`.
fn odd_prefactor_sign(k: i32) -> f64 {
    if (k + 1).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn sym_of(x: &Tangent, d: usize, mk: impl Fn(usize, usize) -> Comp) -> Mat {
    (0..d).map(|a| (0..d).map(|b| x.get(mk(a, b))).collect()).collect()
}

fn vec_of(x: &Tangent, d: usize, mk: impl Fn(usize) -> Comp) -> Vec<GField> {
    (0..d).map(|a| x.get(mk(a))).collect()
}

/// `δγ^ab = −γ^ac γ^bd δγ_cd`.
fn var_inverse(inv: &Mat, dg: &Mat) -> Mat {
    tensor::raise_both(inv, dg).into_iter().map(|r| r.into_iter().map(|v| -v).collect()).collect()
}

/// `δ√γ = ½√γ γ^ab δγ_ab`.
fn var_sqrt(geo: &Geometry, dg: &Mat) -> GField {
    (&geo.sqrt_g * &tensor::trace_with(&geo.inv, dg)).scale(0.5)
}

/// `−η² + β_aβ^a`.
fn lapse_term(geo: &Geometry) -> GField {
    geo.beta_sq() - &geo.eta * &geo.eta
}

/// `δ(−η² + β_aβ^a)` along `x`.
fn var_lapse_term(geo: &Geometry, x: &Tangent) -> GField {
    let d = geo.d;
    let mut v = (&geo.eta * &x.get(Comp::Eta)).scale(-2.0);
    for a in 0..d {
        v += &(&geo.beta_up[a] * &x.get(Comp::beta(a))).scale(2.0);
        for b in 0..d {
            v -= &(&(&geo.beta_up[a] * &geo.beta_up[b]) * &x.get(Comp::gamma(a, b)));
        }
    }
    v
}

/// Density of `2ε{δ(√γγ^ab)K_ab − (√γ/2)δγ^ab K_ab}` along `x`.
fn alpha_classical_density(s: &State, geo: &Geometry, x: &Tangent) -> GField {
    let d = geo.d;
    let dg = sym_of(x, d, Comp::gamma);
    let dinv = var_inverse(&geo.inv, &dg);
    let dsq = var_sqrt(geo, &dg);
    let mut v = GField::zero(s.len());
    for a in 0..d {
        for b in 0..d {
            let dens = &(&dsq * &geo.inv[a][b]) + &(&geo.sqrt_g * &dinv[a][b]).scale(0.5);
            v += &(&dens * &geo.k[a][b]);
        }
    }
    v.scale(2.0 * s.eps)
}

/// `α̃ = 2ε∫{δ(√γγ^ab)K_ab − (√γ/2)δγ^ab K_ab}` on a degree-0 pre-boundary
/// state.
pub fn alpha_tilde_classical(s: &State, x: &Tangent) -> Result<GradedScalar> {
    let geo = Geometry::new(s)?;
    Ok(s.integrate(&alpha_classical_density(s, &geo, x)))
}

/// Sign and weight choices in the BV pre-boundary one-form. The printed
/// form is [`AlphaConvention::PRINTED`]; [`AlphaConvention::DERIVED`] is the
/// boundary term of the variation of the BV action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaConvention {
    /// Multiply the metric block by `η`.
    pub eta_weight: bool,
    /// Sign of the `2ε∫(... δξ ... g†)` block.
    pub ghost_block: f64,
    /// Sign of the `−ε∫ξ^n δg g†` block.
    pub antifield_block: f64,
    /// Sign of the `−∫ξ^n δξ^ρ χ_ρ` block.
    pub chi_block: f64,
}

impl AlphaConvention {
    pub const PRINTED: AlphaConvention =
        AlphaConvention { eta_weight: true, ghost_block: 1.0, antifield_block: 1.0, chi_block: 1.0 };
    pub const DERIVED: AlphaConvention =
        AlphaConvention { eta_weight: false, ghost_block: -1.0, antifield_block: -1.0, chi_block: 1.0 };
    /// The form annihilated by the kernel generators as printed.
    pub fn printed_kernel(eps: f64) -> AlphaConvention {
        AlphaConvention { eta_weight: false, ghost_block: eps, antifield_block: eps, chi_block: eps }
    }
}

pub fn alpha_tilde_bv_with(s: &State, x: &Tangent, conv: AlphaConvention) -> Result<GradedScalar> {
    let d = s.d();
    let e = s.eps;
    let k = degree_of(x)?;
    let geo = Geometry::new(s)?;
    let mut block1 = alpha_classical_density(s, &geo, x);
    if conv.eta_weight {
        block1 = &geo.eta * &block1;
    }
    let lapse = lapse_term(&geo);
    let gnn = s.get(Comp::GdNN);
    let gn = s.vector(Comp::gdn);
    let gd = s.sym(Comp::gd);
    let xn = s.get(Comp::XiN);
    let xxn = x.get(Comp::XiN);
    let xxa = vec_of(x, d, Comp::xi);
    // 2ε[(−η²+β²)δξ^n g†^nn + β_aδξ^n g†^an + β_aδξ^a g†^nn + γ_ab δξ^a g†^bn]
    let mut b2 = &(&lapse * &xxn) * &gnn;
    for a in 0..d {
        b2 += &(&(&geo.beta[a] * &xxn) * &gn[a]);
        b2 += &(&(&geo.beta[a] * &xxa[a]) * &gnn);
        for b in 0..d {
            b2 += &(&(&geo.gamma[a][b] * &xxa[a]) * &gn[b]);
        }
    }
    // −ε ξ^n[δ(−η²+β²)g†^nn + 2δβ_a g†^an + δγ_ab g†^ab]
    let mut inner = &var_lapse_term(&geo, x) * &gnn;
    for a in 0..d {
        inner += &(&x.get(Comp::beta(a)) * &gn[a]).scale(2.0);
        for b in 0..d {
            inner += &(&x.get(Comp::gamma(a, b)) * &gd[a][b]);
        }
    }
    let sgn = odd_prefactor_sign(k);
    let b3 = (&xn * &inner).scale(-e * sgn);
    // −ξ^n δξ^ρ χ_ρ
    let mut xc = &xxn * &s.get(Comp::ChiN);
    for a in 0..d {
        xc += &(&xxa[a] * &s.get(Comp::chi(a)));
    }
    let b4 = (&xn * &xc).scale(-sgn);
    let dens = block1
        + b2.scale(2.0 * e * conv.ghost_block)
        + b3.scale(conv.antifield_block)
        + b4.scale(conv.chi_block);
    Ok(s.integrate(&dens))
}

/// The BV pre-boundary one-form in the convention fixed by the checks.
pub fn alpha_tilde_bv(s: &State, x: &Tangent) -> Result<GradedScalar> {
    alpha_tilde_bv_with(s, x, AlphaConvention::DERIVED)
}

/// `ω̃(X, Y) = D_X[α̃(Y)] − (−1)^{|X||Y|} D_Y[α̃(X)] − α̃([X, Y])` for
/// field-dependent arguments.
pub fn omega_tilde_vf(
    alpha: &(dyn Fn(&State, &Tangent) -> Result<GradedScalar> + Sync),
    s: &State,
    x: &VectorField,
    y: &VectorField,
) -> Result<GradedScalar> {
    let xv = x.at(s)?;
    let yv = y.at(s)?;
    let a = directional_derivative(|st| alpha(st, &y.at(st)?), s, &xv)?;
    let b = directional_derivative(|st| alpha(st, &x.at(st)?), s, &yv)?;
    let sign = if (x.degree * y.degree).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let br = bracket(x, y, s)?;
    let c = alpha(s, &br)?;
    a.sub(&b.scale(sign))?.sub(&c)
}

/// `ω̃` on constant arguments (no bracket term).
pub fn omega_tilde(
    alpha: &(dyn Fn(&State, &Tangent) -> Result<GradedScalar> + Sync),
    s: &State,
    x: &Tangent,
    y: &Tangent,
) -> Result<GradedScalar> {
    let kx = degree_of(x)?;
    let ky = degree_of(y)?;
    let a = directional_derivative(|st| alpha(st, y), s, x)?;
    let b = directional_derivative(|st| alpha(st, x), s, y)?;
    let sign = if (kx * ky).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    a.sub(&b.scale(sign))
}

// ---------------------------------------------------------------------------
// kernel generators

/// Free parameter fields of a kernel generator.
#[derive(Clone, Debug)]
pub enum KernelParams {
    /// `X_{η⁻¹}` (classical `𝔼⁻¹`).
    EtaInverse(GField),
    /// `X_β`, one field per tangential index.
    Shift(Vec<GField>),
    /// `X_η` (BV `𝔼`).
    Eta(GField),
    /// `(X_χ)_n`.
    ChiNormal(GField),
    /// `(X_χ)_a`.
    ChiTangential(Vec<GField>),
    /// `(X_{g†})^ab`, symmetric, odd.
    Antifield(Mat),
}

impl KernelParams {
    pub fn family(&self) -> &'static str {
        match self {
            KernelParams::EtaInverse(_) => "E_inv",
            KernelParams::Shift(_) => "B",
            KernelParams::Eta(_) => "E",
            KernelParams::ChiNormal(_) => "X_n",
            KernelParams::ChiTangential(_) => "X_a",
            KernelParams::Antifield(_) => "G_dag",
        }
    }
}

fn d_minus_one(d: usize) -> f64 {
    (d - 1) as f64
}

/// Classical kernel generators `𝔼⁻¹` and `𝔹` at one state.
pub fn kernel_generator_classical(s: &State, p: &KernelParams) -> Result<Tangent> {
    let d = s.d();
    check_dimension(d)?;
    let geo = Geometry::new(s)?;
    let mut out = Tangent::zero(s.len());
    match p {
        KernelParams::EtaInverse(x) => {
            // η-component of X_{η⁻¹}∂_{η⁻¹} is −η² X_{η⁻¹}
            out.set(Comp::Eta, -(&(&geo.eta * &geo.eta) * x));
            let ex = &geo.eta * x;
            for (l, m) in tensor::sym_pairs(d) {
                let v = &ex * &(geo.nabla_beta[l][m].scale(2.0) - &geo.j[l][m]);
                out.set(Comp::j(l, m), v);
            }
        }
        KernelParams::Shift(xb) => {
            let nx = tensor::sym_cov_deriv(&s.grid, &geo.gam, xb)?;
            for a in 0..d {
                out.set(Comp::beta(a), xb[a].clone());
            }
            for (l, m) in tensor::sym_pairs(d) {
                out.set(Comp::j(l, m), nx[l][m].scale(2.0));
            }
        }
        other => {
            return Err(Error::Schema(format!("{} is not a classical kernel family", other.family())));
        }
    }
    Ok(out)
}

/// `P^{ab}_{lm} = γ_al γ_bm − γ_lm γ_ab/(d−1)` contracted with a symmetric
/// upper-index tensor `t^ab`: `γ_al γ_bm t^ab − γ_lm (γ_ab t^ab)/(d−1)`.
fn trace_adjusted_lower(geo: &Geometry, t: &Mat) -> Mat {
    let d = geo.d;
    let low = tensor::matmul(&tensor::matmul(&geo.gamma, t), &geo.gamma);
    let tr = tensor::trace_with(&geo.gamma, t).scale(1.0 / d_minus_one(d));
    (0..d).map(|l| (0..d).map(|m| &low[l][m] - &(&geo.gamma[l][m] * &tr)).collect()).collect()
}

/// `v_(l γ_m)a w^a − γ_lm v_a w^a/(d−1)` for a covector `v` and vector `w`.
fn trace_adjusted_mixed(geo: &Geometry, v: &[GField], w: &[GField]) -> Mat {
    let d = geo.d;
    let len = geo.len();
    let gw: Vec<GField> = (0..d).map(|m| sum_fields(len, (0..d).map(|a| &geo.gamma[m][a] * &w[a]))).collect();
    let vw = tensor::dot(v, w).scale(1.0 / d_minus_one(d));
    (0..d)
        .map(|l| {
            (0..d)
                .map(|m| (&v[l] * &gw[m] + &v[m] * &gw[l]).scale(0.5) - &(&geo.gamma[l][m] * &vw))
                .collect()
        })
        .collect()
}

fn is_antifield(c: &Comp) -> bool {
    matches!(c, Comp::GdNN | Comp::GdN(_) | Comp::Gd(..))
}

fn is_antighost(c: &Comp) -> bool {
    matches!(c, Comp::ChiN | Comp::Chi(_))
}

/// The component formulas for the kernel generators and the reduction map
/// are written for the antifields `−εg†` and antighosts `εχ` of the fields
/// used by the action. The map is an involution.
pub fn display_frame(s: &State) -> State {
    let mut out = s.clone();
    for (c, f) in s.comps() {
        if is_antifield(c) {
            out.set(*c, f.scale(-s.eps));
        } else if is_antighost(c) {
            out.set(*c, f.scale(s.eps));
        }
    }
    out
}

/// [`display_frame`] on a tangent vector.
pub fn display_frame_tangent(x: &Tangent, eps: f64) -> Tangent {
    let mut out = x.clone();
    for (c, f) in x.comps() {
        if is_antifield(c) {
            out.set(*c, f.scale(-eps));
        } else if is_antighost(c) {
            out.set(*c, f.scale(eps));
        }
    }
    out
}

/// BV kernel generators (`𝕏_(n)`, `𝕏_(a)`, `𝔹_(a)`, `𝔾†^(ab)`, `𝔼`) at one
/// pre-boundary state. Parameters are given in the action's frame.
pub fn kernel_generator_bv(s: &State, p: &KernelParams) -> Result<Tangent> {
    check_dimension(s.d())?;
    let p = match p {
        KernelParams::ChiNormal(x) => KernelParams::ChiNormal(x.scale(s.eps)),
        KernelParams::ChiTangential(x) => KernelParams::ChiTangential(x.iter().map(|f| f.scale(s.eps)).collect()),
        KernelParams::Antifield(m) => {
            KernelParams::Antifield(m.iter().map(|r| r.iter().map(|f| f.scale(-s.eps)).collect()).collect())
        }
        other => other.clone(),
    };
    let t = kernel_generator_display(&display_frame(s), &p)?;
    Ok(display_frame_tangent(&t, s.eps))
}

fn kernel_generator_display(s: &State, p: &KernelParams) -> Result<Tangent> {
    let d = s.d();
    let e = s.eps;
    let len = s.len();
    let geo = Geometry::new(s)?;
    let ie = &geo.eta_inv;
    let ie2 = ie * ie;
    let ie3 = &ie2 * ie;
    let inv_sqrt = geo.sqrt_g.recip()?;
    let xn = s.get(Comp::XiN);
    let gnn = s.get(Comp::GdNN);
    let gn = s.vector(Comp::gdn);
    let gd = s.sym(Comp::gd);
    let chi_n = s.get(Comp::ChiN);
    let chi = s.vector(Comp::chi);
    let chi_up = tensor::raise(&geo.inv, &chi);
    let mut out = Tangent::zero(len);
    match p {
        KernelParams::ChiNormal(x) => {
            let xx = x * &xn;
            out.set(Comp::ChiN, x.clone());
            out.set(Comp::GdNN, (&ie2 * &xx).scale(-0.5 * e));
            for b in 0..d {
                out.set(Comp::gdn(b), (&(&geo.beta_up[b] * &ie2) * &xx).scale(0.5 * e));
            }
        }
        KernelParams::ChiTangential(x) => {
            let bx = tensor::dot(&geo.beta_up, x);
            let x_up = tensor::raise(&geo.inv, x);
            for a in 0..d {
                out.set(Comp::chi(a), x[a].clone());
            }
            out.set(Comp::GdNN, (&(&ie2 * &bx) * &xn).scale(0.5 * e));
            for b in 0..d {
                let c = &(&(&ie2 * &geo.beta_up[b]) * &bx) - &x_up[b];
                out.set(Comp::gdn(b), (&c * &xn).scale(-0.5 * e));
            }
        }
        KernelParams::Shift(xb) => {
            let xb_up = tensor::raise(&geo.inv, xb);
            for a in 0..d {
                out.set(Comp::beta(a), xb[a].clone());
                out.set(Comp::xi(a), -(&xb_up[a] * &xn));
            }
            let xc = tensor::dot(&xb_up, &chi);
            out.set(Comp::GdNN, (&(&ie2 * &xc) * &xn).scale(0.5 * e));
            let nx = tensor::sym_cov_deriv(&s.grid, &geo.gam, xb)?;
            let gnx: Vec<GField> = gn.iter().map(|g| g * &xn).collect();
            let mixed = trace_adjusted_mixed(&geo, xb, &gnx);
            let w = (&geo.eta * &inv_sqrt).scale(4.0 * e);
            for (l, m) in tensor::sym_pairs(d) {
                out.set(Comp::j(l, m), nx[l][m].scale(2.0) + &(&w * &mixed[l][m]));
            }
            for b in 0..d {
                let v = -(&(&(&ie2 * &geo.beta_up[b]) * &xc) * &xn).scale(0.5 * e) - &(&xb_up[b] * &gnn);
                out.set(Comp::gdn(b), v);
            }
        }
        KernelParams::Antifield(xg) => {
            for (a, b) in tensor::sym_pairs(d) {
                out.set(Comp::gd(a, b), xg[a][b].clone());
            }
            let xgx: Mat = xg.iter().map(|r| r.iter().map(|v| v * &xn).collect()).collect();
            let adj = trace_adjusted_lower(&geo, &xgx);
            let w = (&geo.eta * &inv_sqrt).scale(2.0 * e);
            for (l, m) in tensor::sym_pairs(d) {
                out.set(Comp::j(l, m), &w * &adj[l][m]);
            }
        }
        KernelParams::Eta(x) => {
            let ix = ie * x;
            let ixn = &ix * &xn;
            out.set(Comp::Eta, x.clone());
            out.set(Comp::XiN, -ixn.clone());
            for a in 0..d {
                out.set(Comp::xi(a), &geo.beta_up[a] * &ixn);
            }
            let bc = tensor::dot(&geo.beta_up, &chi);
            let x3n = &(&ie3 * x) * &xn;
            out.set(Comp::GdNN, -(&ix * &gnn) - &(&(&bc - &chi_n) * &x3n).scale(e));
            for b in 0..d {
                let c = (&geo.beta_up[b] * &chi_n).scale(e) * &ie3 - &(&(&geo.beta_up[b] * &bc) * &ie3).scale(e)
                    + &(ie * &chi_up[b]).scale(0.5 * e);
                let v = -(&(&c * x) * &xn) + &(&(&geo.beta_up[b] * &ix) * &gnn);
                out.set(Comp::gdn(b), v);
            }
            let gnx: Vec<GField> = gn.iter().map(|g| g * &xn).collect();
            let mixed = trace_adjusted_mixed(&geo, &geo.beta, &gnx);
            let gdx: Mat = gd.iter().map(|r| r.iter().map(|v| v * &xn).collect()).collect();
            let adj = trace_adjusted_lower(&geo, &gdx);
            let w = &inv_sqrt * x;
            for (l, m) in tensor::sym_pairs(d) {
                let mut v = -(&w * &mixed[l][m]).scale(4.0 * e);
                v -= &(&w * &adj[l][m]).scale(2.0 * e);
                v += &(&ix * &(&geo.j[l][m] - &geo.nabla_beta[l][m].scale(2.0)));
                out.set(Comp::j(l, m), v);
            }
        }
        KernelParams::EtaInverse(_) => {
            return Err(Error::Schema("E_inv is a classical kernel family".into()));
        }
    }
    Ok(out)
}

/// A kernel generator as a field-dependent vector field (parameters held
/// fixed as the state moves).
pub fn kernel_vector_field(p: KernelParams, bv: bool) -> VectorField<'static> {
    VectorField::new(0, move |s: &State| if bv { kernel_generator_bv(s, &p) } else { kernel_generator_classical(s, &p) })
}

// ---------------------------------------------------------------------------
// reduction

/// `γ̃ = γ`, `J̃_lm = η⁻¹(J_lm − 2∇_(lβ_m))`.
pub fn reduce_classical(s: &State) -> Result<(Mat, Mat)> {
    check_dimension(s.d())?;
    let geo = Geometry::new(s)?;
    let d = geo.d;
    let jt = (0..d)
        .map(|l| (0..d).map(|m| &geo.eta_inv * &(&geo.j[l][m] - &geo.nabla_beta[l][m].scale(2.0))).collect())
        .collect();
    Ok((geo.gamma, jt))
}

/// `Π_lm = (√γ/2)(J̃_lm − γ_lm γ^ij J̃_ij)`.
pub fn momentum_from_jet(geo: &Geometry, jt: &Mat) -> Mat {
    let d = geo.d;
    let tr = tensor::trace_with(&geo.inv, jt);
    let h = geo.sqrt_g.scale(0.5);
    (0..d).map(|l| (0..d).map(|m| &h * &(&jt[l][m] - &(&geo.gamma[l][m] * &tr))).collect()).collect()
}

/// Sign of the `χ_a ξ^n` term in `φ_a = 2γ_ab{g†^bn + γ^ba β_a g†^nn ± (ε/2)γ^ba χ_a ξ^n}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiSign {
    /// `−`, as in the statement of the projection.
    Statement,
    /// `+`, as in the proof's reduction map.
    Proof,
}

impl PhiSign {
    fn value(self) -> f64 {
        match self {
            PhiSign::Statement => -1.0,
            PhiSign::Proof => 1.0,
        }
    }
}

/// Frozen choice, fixed by the pullback identity `π*α∂ = α̃`.
pub const PHI_SIGN: PhiSign = PhiSign::Statement;

/// `J̃_lm` with the ghost–antifield corrections, in the display frame.
fn reduced_jet_display(s: &State, geo: &Geometry) -> Result<Mat> {
    let d = geo.d;
    let e = s.eps;
    let (_, mut jt) = reduce_classical(s)?;
    let xn = s.get(Comp::XiN);
    let inv_sqrt = geo.sqrt_g.recip()?;
    let gdx: Mat = s.sym(Comp::gd).iter().map(|r| r.iter().map(|v| v * &xn).collect()).collect();
    let gnx: Vec<GField> = s.vector(Comp::gdn).iter().map(|g| g * &xn).collect();
    let gnnx = &s.get(Comp::GdNN) * &xn;
    let adj = trace_adjusted_lower(geo, &gdx);
    let mixed = trace_adjusted_mixed(geo, &geo.beta, &gnx);
    let bb = geo.beta_sq().scale(1.0 / d_minus_one(d));
    for l in 0..d {
        for m in 0..d {
            let mut c = adj[l][m].scale(2.0) + mixed[l][m].scale(4.0);
            let q = &geo.beta[l] * &geo.beta[m] - &(&geo.gamma[l][m] * &bb);
            c += &(&q * &gnnx).scale(2.0);
            jt[l][m] -= &(&inv_sqrt * &c).scale(e);
        }
    }
    Ok(jt)
}

/// `π_M`: pre-boundary state → Darboux state.
pub fn reduce_bv_with(s: &State, phi_sign: PhiSign) -> Result<State> {
    check_dimension(s.d())?;
    reduce_display(&display_frame(s), phi_sign)
}

fn reduce_display(s: &State, phi_sign: PhiSign) -> Result<State> {
    let d = s.d();
    let e = s.eps;
    let geo = Geometry::new(s)?;
    let jt = reduced_jet_display(s, &geo)?;
    let pi = momentum_from_jet(&geo, &jt);
    let xn = s.get(Comp::XiN);
    let gnn = s.get(Comp::GdNN);
    let gn = s.vector(Comp::gdn);
    let chi = s.vector(Comp::chi);
    let chi_up = tensor::raise(&geo.inv, &chi);
    let bc = tensor::dot(&geo.beta_up, &chi);
    let mut out = State::new(s.grid.clone(), s.config.clone(), s.eps, s.lambda);
    out.set_sym(Comp::gamma, &geo.gamma);
    out.set_sym(Comp::pi, &pi);
    // g̃†^nn = ηg†^nn + (ε/2)η⁻¹(χ_n − β^aχ_a)ξ^n
    let gt_nn = &geo.eta * &gnn + (&(&geo.eta_inv * &(s.get(Comp::ChiN) - &bc)) * &xn).scale(0.5 * e);
    out.set(Comp::PhiN, gt_nn.scale(-2.0));
    let ps = phi_sign.value();
    let gt_n: Vec<GField> = (0..d)
        .map(|b| &gn[b] + &(&geo.beta_up[b] * &gnn) + &(&chi_up[b] * &xn).scale(0.5 * e * ps))
        .collect();
    for a in 0..d {
        let v = sum_fields(s.len(), (0..d).map(|b| &geo.gamma[a][b] * &gt_n[b])).scale(2.0);
        out.set(Comp::phi(a), v);
        out.set(Comp::xi(a), s.get(Comp::xi(a)) + &geo.beta_up[a] * &xn);
    }
    out.set(Comp::XiN, &geo.eta * &xn);
    Ok(out)
}

pub fn reduce_bv(s: &State) -> Result<State> {
    reduce_bv_with(s, PHI_SIGN)
}

/// The slots of a state as a tangent vector on the same grid.
pub fn state_as_tangent(s: &State) -> Tangent {
    let mut out = Tangent::zero(s.len());
    for (c, f) in s.comps() {
        out.set(*c, f.clone());
    }
    out
}

/// `Dπ·Y`: pushforward of a pre-boundary direction along [`reduce_bv`].
pub fn reduction_pushforward(s: &State, y: &Tangent) -> Result<Tangent> {
    let map = VectorField::new(0, |st: &State| Ok(state_as_tangent(&reduce_bv(st)?)));
    let t = directional_derivative_vf(&map, s, y)?;
    Ok(t.restrict(&Comp::darboux(s.d())))
}

/// Integrates `dΦ/dt = X(Φ)` with `steps` classical Runge–Kutta steps.
pub fn integrate_flow(s: &State, x: &VectorField, time: f64, steps: usize) -> Result<State> {
    let h = time / steps as f64;
    let mut cur = s.clone();
    for _ in 0..steps {
        let k1 = x.at(&cur)?;
        let k2 = x.at(&cur.axpy(0.5 * h, &k1))?;
        let k3 = x.at(&cur.axpy(0.5 * h, &k2))?;
        let k4 = x.at(&cur.axpy(h, &k3))?;
        let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4);
        cur = cur.axpy(h / 6.0, &incr);
    }
    Ok(cur)
}

// ---------------------------------------------------------------------------
// Darboux side

/// `α∂ = ∫(−εδγ^ab Π_ab + δξ^ρ φ_ρ)`.
pub fn alpha_boundary(ds: &State, x: &Tangent) -> Result<GradedScalar> {
    let d = ds.d();
    let gamma = ds.sym(Comp::gamma);
    let inv = tensor::inverse(&gamma)?;
    let dinv = var_inverse(&inv, &sym_of(x, d, Comp::gamma));
    let pi = ds.sym(Comp::pi);
    let mut dens = tensor::contract(&dinv, &pi).scale(-ds.eps);
    dens += &(&x.get(Comp::XiN) * &ds.get(Comp::PhiN));
    for a in 0..d {
        dens += &(&x.get(Comp::xi(a)) * &ds.get(Comp::phi(a)));
    }
    Ok(ds.integrate(&dens))
}

/// `ω∂ = ε∫δγ^ab δΠ_ab + ∫δξ^ρ δφ_ρ` on two constant tangents, from `α∂`
/// by the Cartan formula.
pub fn omega_boundary(ds: &State, x: &Tangent, y: &Tangent) -> Result<GradedScalar> {
    let d = ds.d();
    let kx = degree_of(x)?;
    let ky = degree_of(y)?;
    let inv = tensor::inverse(&ds.sym(Comp::gamma))?;
    let xg = var_inverse(&inv, &sym_of(x, d, Comp::gamma));
    let yg = var_inverse(&inv, &sym_of(y, d, Comp::gamma));
    let xp = sym_of(x, d, Comp::pi);
    let yp = sym_of(y, d, Comp::pi);
    let sgn = if (kx * ky).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    // α∂(Y) = −εY^γ Π + Y^ξ φ; ω(X,Y) = X(α(Y)) − (−1)^{|X||Y|} Y(α(X))
    let mut dens = (tensor::contract(&xg, &yp).scale(sgn) - tensor::contract(&yg, &xp)).scale(ds.eps);
    let ghost_pairs: Vec<(Comp, Comp)> =
        std::iter::once((Comp::XiN, Comp::PhiN)).chain((0..d).map(|a| (Comp::xi(a), Comp::phi(a)))).collect();
    for (cx, cp) in ghost_pairs {
        // X(Y^ξ φ) = (−1)^{|X|(|Y|+1)} Y^ξ X^φ
        let s1 = if (kx * (ky + 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let s2 = if (ky * (kx + 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        dens += &(&y.get(cx) * &x.get(cp)).scale(s1);
        dens -= &(&x.get(cx) * &y.get(cp)).scale(sgn * s2);
    }
    Ok(ds.integrate(&dens))
}

fn darboux_parts(ds: &State) -> Result<(Geometry, Mat, Mat, GField)> {
    let d = ds.d();
    check_dimension(d)?;
    let mut tmp = ds.clone();
    tmp.set(Comp::Eta, GField::constant(ds.len(), 1.0));
    let geo = Geometry::new(&tmp)?;
    let pi = ds.sym(Comp::pi);
    let pi_up = tensor::raise_both(&geo.inv, &pi);
    let tr = tensor::trace_with(&geo.inv, &pi);
    Ok((geo, pi, pi_up, tr))
}

/// `(𝓗, 𝓗_a)`:
/// `𝓗 = ε/√γ(Π^abΠ_ab − Π²/(d−1)) − √γ(R∂ − 2Λ)`,
/// `𝓗_a = −2∂_c(γ^cd Π_da) − (∂_aγ^cd)Π_cd`.
pub fn boundary_constraints(ds: &State) -> Result<(GField, Vec<GField>)> {
    let d = ds.d();
    let len = ds.len();
    let (geo, pi, pi_up, tr) = darboux_parts(ds)?;
    let kin = tensor::contract(&pi, &pi_up) - (&tr * &tr).scale(1.0 / d_minus_one(d));
    let r = adm::signed_ricci_scalar(ds)?;
    let h = (&geo.sqrt_g.recip()? * &kin).scale(ds.eps)
        - &geo.sqrt_g * &(r - GField::constant(len, 2.0 * ds.lambda));
    let dinv: Vec<Mat> = (0..d)
        .map(|a| {
            (0..d)
                .map(|c| (0..d).map(|e| ds.deriv(&geo.inv[c][e], a)).collect::<Result<Vec<_>>>())
                .collect::<Result<Mat>>()
        })
        .collect::<Result<_>>()?;
    let mut ha = Vec::with_capacity(d);
    for a in 0..d {
        let mut v = GField::zero(len);
        for c in 0..d {
            let flux = sum_fields(len, (0..d).map(|e| &geo.inv[c][e] * &pi[e][a]));
            v -= &ds.deriv(&flux, c)?.scale(2.0);
        }
        v -= &tensor::contract(&dinv[a], &pi);
        ha.push(v);
    }
    Ok((h, ha))
}

/// Density of the boundary action.
pub fn boundary_action_density(ds: &State) -> Result<GField> {
    boundary_action_density_with(ds, GHOST_COEFF)
}

pub const GHOST_COEFF: f64 = 1.0;

/// Boundary action density with coefficient `c` on the `φξξ` terms.
pub fn boundary_action_density_with(ds: &State, c: f64) -> Result<GField> {
    let d = ds.d();
    let len = ds.len();
    let e = ds.eps;
    let (geo, _, _, _) = darboux_parts(ds)?;
    let (h, ha) = boundary_constraints(ds)?;
    let xn = ds.get(Comp::XiN);
    let xa = ds.vector(Comp::xi);
    let phn = ds.get(Comp::PhiN);
    let ph = ds.vector(Comp::phi);
    let mut cn = h;
    let mut t = GField::zero(len);
    for a in 0..d {
        cn += &ds.deriv(&(&xa[a] * &phn), a)?.scale(c);
        let dxn = ds.deriv(&xn, a)?;
        for b in 0..d {
            t += &(&(&geo.inv[a][b] * &ph[b]) * &dxn);
        }
    }
    cn -= &t.scale(c);
    let mut dens = &cn * &xn;
    for a in 0..d {
        let mut ca = ha[a].scale(e);
        for k in 0..d {
            ca += &ds.deriv(&(&xa[k] * &ph[a]), k)?.scale(c);
        }
        dens += &(&ca * &xa[a]);
    }
    Ok(dens)
}

/// `S∂` in Darboux coordinates.
pub fn boundary_action(ds: &State) -> Result<GradedScalar> {
    Ok(ds.integrate(&boundary_action_density(ds)?))
}

/// Displayed form of the boundary vector field:
/// `Q^ξn = ξ^c∂_cξ^n`, `Q^ξa = ξ^c∂_cξ^a + ξ^n γ^ab ∂_bξ^n`,
/// `Q^γ_ab = L_ξγ_ab + (2ξ^n/√γ)(Π_ab − γ_ab Π/(d−1))`, up to the overall
/// sign `sign`. Only the `γ` and `ξ` components are filled.
pub fn displayed_boundary_q(ds: &State, sign: f64) -> Result<Tangent> {
    let d = ds.d();
    let len = ds.len();
    let (geo, pi, _, tr) = darboux_parts(ds)?;
    let xn = ds.get(Comp::XiN);
    let xa = ds.vector(Comp::xi);
    let mut out = Tangent::zero(len);
    let transport = |f: &GField| -> Result<GField> {
        let mut v = GField::zero(len);
        for c in 0..d {
            v += &(&xa[c] * &ds.deriv(f, c)?);
        }
        Ok(v)
    };
    out.set(Comp::XiN, transport(&xn)?.scale(sign));
    let dxn: Vec<GField> = (0..d).map(|b| ds.deriv(&xn, b)).collect::<Result<_>>()?;
    for a in 0..d {
        let mut v = transport(&xa[a])?;
        for b in 0..d {
            v += &(&xn * &(&geo.inv[a][b] * &dxn[b]));
        }
        out.set(Comp::xi(a), v.scale(sign));
    }
    let w = geo.sqrt_g.recip()?.scale(2.0);
    let trd = tr.scale(1.0 / d_minus_one(d));
    let dxa: Vec<Vec<GField>> =
        (0..d).map(|a| (0..d).map(|c| ds.deriv(&xa[c], a)).collect::<Result<_>>()).collect::<Result<_>>()?;
    for (a, b) in tensor::sym_pairs(d) {
        let mut v = &xn * &(&w * &(&pi[a][b] - &(&geo.gamma[a][b] * &trd)));
        v += &transport(&geo.gamma[a][b])?;
        for c in 0..d {
            v += &(&dxa[a][c] * &geo.gamma[b][c]);
            v += &(&dxa[b][c] * &geo.gamma[a][c]);
        }
        out.set(Comp::gamma(a, b), v.scale(sign));
    }
    Ok(out)
}

/// `Q∂`: the Hamiltonian vector field of `S∂` for `ω∂`.
pub fn boundary_q(ds: &State) -> Result<Tangent> {
    hamiltonian_q(boundary_action, ds)
}

/// Solves `ι_Qω∂ = δF` for a degree-1 `F` against the Darboux pairing.
/// For degree-0 `Y`, `ω∂(Q,Y) = ∫[ε(Q^{γ^ab}Y^Π_ab − Y^{γ^ab}Q^Π_ab) − Y^φ Q^ξ − Y^ξ Q^φ]`.
pub fn hamiltonian_q(f: impl Fn(&State) -> Result<GradedScalar> + Copy, ds: &State) -> Result<Tangent> {
    let d = ds.d();
    let e = ds.eps;
    let g = darboux_gradients(f, ds)?;
    let gamma = ds.sym(Comp::gamma);
    let mut out = Tangent::zero(ds.len());
    // Y^{γ^ab} = −γ^ac Y_cd γ^db, so −ε Y^{γ^ab}Q^Π_ab = ε Y_cd (γ^ca Q^Π_ab γ^bd)
    let lowered = tensor::matmul(&tensor::matmul(&gamma, &g.gamma), &gamma);
    let qg_up = g.pi.iter().map(|r| r.iter().map(|x| x.scale(1.0 / e)).collect()).collect::<Mat>();
    let qg = tensor::matmul(&tensor::matmul(&gamma, &qg_up), &gamma);
    for (a, b) in tensor::sym_pairs(d) {
        out.set(Comp::pi(a, b), lowered[a][b].scale(1.0 / e));
        out.set(Comp::gamma(a, b), -&qg[a][b]);
    }
    out.set(Comp::PhiN, -&g.xi_n);
    out.set(Comp::XiN, -&g.phi_n);
    for a in 0..d {
        out.set(Comp::phi(a), -&g.xi[a]);
        out.set(Comp::xi(a), -&g.phi[a]);
    }
    Ok(out)
}

/// Left functional derivatives with respect to the Darboux fields
/// (symmetric tensors paired as `Σ_ab`).
pub struct DarbouxGradients {
    pub gamma: Mat,
    pub pi: Mat,
    pub xi_n: GField,
    pub xi: Vec<GField>,
    pub phi_n: GField,
    pub phi: Vec<GField>,
}

/// Functional derivatives of `f`, from exact directional derivatives
/// against point-localised directions.
pub fn darboux_gradients(f: impl Fn(&State) -> Result<GradedScalar> + Copy, ds: &State) -> Result<DarbouxGradients> {
    let d = ds.d();
    let len = ds.len();
    let w = ds.grid.weights();
    let sym = |mk: fn(usize, usize) -> Comp| -> Result<Mat> {
        let mut m = tensor::zeros(d, len);
        for (a, b) in tensor::sym_pairs(d) {
            let g = gradient_density(f, ds, mk(a, b), &w)?;
            let g = if a == b { g } else { g.scale(0.5) };
            m[a][b] = g.clone();
            m[b][a] = g;
        }
        Ok(m)
    };
    Ok(DarbouxGradients {
        gamma: sym(Comp::gamma)?,
        pi: sym(Comp::pi)?,
        xi_n: gradient_density(f, ds, Comp::XiN, &w)?,
        xi: (0..d).map(|a| gradient_density(f, ds, Comp::xi(a), &w)).collect::<Result<_>>()?,
        phi_n: gradient_density(f, ds, Comp::PhiN, &w)?,
        phi: (0..d).map(|a| gradient_density(f, ds, Comp::phi(a), &w)).collect::<Result<_>>()?,
    })
}

fn gradient_density(f: impl Fn(&State) -> Result<GradedScalar>, ds: &State, c: Comp, w: &[f64]) -> Result<GField> {
    let len = ds.len();
    let mut st = ds.clone();
    let grade = c.grade();
    let gen = if grade % 2 != 0 { Some(st.alloc_generator(grade)?) } else { None };
    let mut acc: Vec<(Monomial, Vec<f64>)> = Vec::new();
    let mut out = GField::zero(len);
    for i in 0..len {
        let mut profile = vec![0.0; len];
        profile[i] = 1.0 / w[i];
        let y = match gen {
            Some(k) => GField::from_term(Monomial::new(1 << k, grade), profile),
            None => GField::from_real(profile),
        };
        let y = Tangent::zero(len).with(c, y);
        let v = directional_derivative(&f, &st, &y)?;
        let v = match gen {
            Some(k) => v.left_derive(k),
            None => v,
        };
        for (m, x) in v.terms() {
            match acc.iter_mut().find(|(mm, _)| mm == m) {
                Some((_, vals)) => vals[i] = *x,
                None => {
                    let mut vals = vec![0.0; len];
                    vals[i] = *x;
                    acc.push((*m, vals));
                }
            }
        }
    }
    for (m, vals) in acc {
        out.add_term(m, vals);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Euler contraction

/// `Ẽ = ξ∂_ξ − g†∂_{g†} − 2χ∂_χ` at a pre-boundary state.
pub fn euler_field(s: &State) -> Tangent {
    let d = s.d();
    let mut out = Tangent::zero(s.len());
    out.set(Comp::XiN, s.get(Comp::XiN));
    out.set(Comp::GdNN, -s.get(Comp::GdNN));
    out.set(Comp::ChiN, s.get(Comp::ChiN).scale(-2.0));
    for a in 0..d {
        out.set(Comp::xi(a), s.get(Comp::xi(a)));
        out.set(Comp::gdn(a), -s.get(Comp::gdn(a)));
        out.set(Comp::chi(a), s.get(Comp::chi(a)).scale(-2.0));
    }
    for (a, b) in tensor::sym_pairs(d) {
        out.set(Comp::gd(a, b), -s.get(Comp::gd(a, b)));
    }
    out
}

/// Restriction of a bulk-patch state to the boundary layer `x^n = 0`,
/// with `J = ∂_nγ` filled in.
pub fn pre_boundary(bulk: &State) -> Result<State> {
    let s = adm::with_normal_jets(bulk)?;
    let bg = s.grid.boundary();
    let mut out = State::new(bg, s.config.clone(), s.eps, s.lambda);
    for (c, f) in s.comps() {
        out.set(*c, s.grid.layer(f, 0));
    }
    Ok(out)
}

fn restrict_tangent(bulk: &State, x: &Tangent) -> Tangent {
    let mut out = Tangent::zero(bulk.grid.layer_len());
    for (c, f) in x.comps() {
        out.set(*c, bulk.grid.layer(f, 0));
    }
    out
}

/// `Q̃` at the boundary layer of a bulk state: the bulk `Q` restricted, plus
/// `(Q̃J)_ab = ∂_n(Qγ_ab)|_∂M`.
pub fn q_tilde(bulk: &State) -> Result<Tangent> {
    let q = bv::apply_q_bulk(bulk)?;
    let qj = bv::q_jet(bulk)?;
    let mut all = q;
    for (c, f) in qj.comps() {
        all.set(*c, f.clone());
    }
    Ok(restrict_tangent(bulk, &all))
}

/// `S̃ = ι_{Q̃}ι_{Ẽ}ω̃ = ω̃(Ẽ, Q̃)` at the boundary of a bulk state. Both
/// arguments are evaluated at the state; `ω̃` is tensorial, so this equals
/// the bracket-corrected value for the field-dependent pair.
pub fn euler_contraction_action(bulk: &State) -> Result<GradedScalar> {
    check_dimension(bulk.d())?;
    let pre = pre_boundary(bulk)?;
    let q = q_tilde(bulk)?;
    let e = euler_field(&pre);
    omega_tilde(&alpha_tilde_bv, &pre, &e, &q)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::graded::GrassmannConfig;
    use crate::presets::{constant_direction, PresetRegistry, PresetSpec, Sampler};
    use std::sync::Arc;

    fn random(d: usize, n: usize, ghosts: bool, seed: u64) -> State {
        let spec = PresetSpec { d, n, seed, ghosts, amplitude: 0.1, ..Default::default() };
        PresetRegistry::default().build("random_smooth", &spec).unwrap()
    }

    fn flat(d: usize, n: usize) -> State {
        let spec = PresetSpec { d, n, ..Default::default() };
        PresetRegistry::default().build("flat", &spec).unwrap()
    }

    #[test]
    fn d1_rejected() {
        let g = crate::grid::Grid::periodic(1, 8).unwrap();
        let mut s = State::new(g.clone(), Arc::new(GrassmannConfig::default()), 1.0, 0.0);
        s.set(Comp::Eta, GField::constant(g.len(), 1.0));
        s.set(Comp::gamma(0, 0), GField::constant(g.len(), 1.0));
        assert!(matches!(reduce_bv(&s), Err(Error::DimensionUnsupported(1))));
        let p = KernelParams::EtaInverse(GField::constant(g.len(), 1.0));
        assert!(matches!(kernel_generator_classical(&s, &p), Err(Error::DimensionUnsupported(1))));
    }

    #[test]
    fn bv_one_form_without_ghosts_is_classical() {
        let mut s = random(2, 8, false, 3);
        let mut sm = Sampler::new(1);
        let x = constant_direction(&mut s, &mut sm, &Comp::classical(2), 1.0).unwrap();
        let a = alpha_tilde_bv(&s, &x).unwrap();
        let b = alpha_tilde_classical(&s, &x).unwrap();
        assert!(a.distance(&b) < 1e-14);
    }

    #[test]
    fn flat_one_form_vanishes() {
        let mut s = flat(3, 8);
        let mut sm = Sampler::new(2);
        let x = constant_direction(&mut s, &mut sm, &Comp::classical(3), 1.0).unwrap();
        assert_eq!(alpha_tilde_classical(&s, &x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn flat_kernel_generators_are_pure() {
        let s = flat(2, 8);
        let len = s.len();
        let f = GField::constant(len, 0.7);
        let x = kernel_generator_classical(&s, &KernelParams::EtaInverse(f.clone())).unwrap();
        for (c, v) in x.comps() {
            if *c != Comp::Eta {
                assert!(v.max_abs() < 1e-14, "{c:?}");
            }
        }
        assert!(x.get(Comp::Eta).max_abs() > 0.1);
        let x = kernel_generator_classical(&s, &KernelParams::Shift(vec![f.clone(), f])).unwrap();
        for (c, v) in x.comps() {
            if !matches!(c, Comp::Beta(_)) {
                assert!(v.max_abs() < 1e-14, "{c:?}");
            }
        }
    }

    #[test]
    fn reduction_is_linear_in_antighosts() {
        let s = random(2, 8, true, 5);
        let ds = reduce_bv(&s).unwrap();
        for c in std::iter::once(Comp::PhiN).chain((0..2).map(Comp::phi)) {
            assert!(ds.get(c).is_consistent());
            assert!(ds.get(c).ghost_grade().admits(-1));
        }
    }

    #[test]
    fn phi_sign_is_detected_by_the_pullback() {
        let mut s = random(2, 8, true, 7);
        let mut sm = Sampler::new(7);
        let y = constant_direction(&mut s, &mut sm, &Comp::pre_boundary(2), 0.5).unwrap();
        let check = |sign| {
            let ds = reduce_bv_with(&s, sign).unwrap();
            let map = VectorField::new(0, move |st: &State| Ok(state_as_tangent(&reduce_bv_with(st, sign)?)));
            let py = directional_derivative_vf(&map, &s, &y).unwrap().restrict(&Comp::darboux(2));
            alpha_tilde_bv(&s, &y).unwrap().distance(&alpha_boundary(&ds, &py).unwrap())
        };
        assert!(check(PhiSign::Statement) < 1e-12);
        assert!(check(PhiSign::Proof) > 1e-3);
    }

    #[test]
    fn hamiltonian_q_is_minus_the_display() {
        let mut spec = PresetSpec { d: 2, n: 12, seed: 11, ghosts: true, amplitude: 0.05, ..Default::default() };
        spec.params.insert("max_mode".into(), 1.0);
        let ds = reduce_bv(&PresetRegistry::default().build("random_smooth", &spec).unwrap()).unwrap();
        let q = boundary_q(&ds).unwrap();
        let shown = displayed_boundary_q(&ds, -1.0).unwrap();
        let keep: Vec<Comp> = shown.comps().map(|(c, _)| *c).collect();
        let diff = q.restrict(&keep).distance(&shown);
        assert!(diff < 1e-3 * shown.max_abs(), "{diff}");
    }
}
