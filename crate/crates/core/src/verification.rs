//! Identity checks and the suites that run them.
//!
//! Every check is a plain function returning a residual; suites bundle
//! checks with tolerances and turn errors (and panics) into failed records.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adm::{self, check_dimension, Geometry};
use crate::boundary::{self, KernelParams, PhiSign};
use crate::bv;
use crate::error::{Error, Result};
use crate::graded::{GradedScalar, Monomial};
use crate::grid::GField;
use crate::presets::{constant_direction, random_direction, PresetRegistry, PresetSpec, Sampler};
use crate::state::{directional_derivative, directional_derivative_vf, Comp, State, Tangent, VectorField};
use crate::tensor::{self, Mat};

// ---------------------------------------------------------------------------
// states and directions

/// Random pre-boundary state with all ghost sectors populated.
pub fn random_pre_boundary(d: usize, n: usize, eps: f64, lambda: f64, seed: u64) -> Result<State> {
    random_boundary_data(d, n, eps, lambda, seed, true)
}

/// Random boundary data; without ghosts only the classical slots are set.
pub fn random_boundary_data(d: usize, n: usize, eps: f64, lambda: f64, seed: u64, ghosts: bool) -> Result<State> {
    let spec = PresetSpec { d, n, eps, lambda, seed, ghosts, generators: 8, amplitude: 0.1, ..Default::default() };
    PresetRegistry::default().build("random_smooth", &spec)
}

/// Highest `|k|₁` of random data: products stay resolved on affordable
/// grids only with fewer modes in three dimensions.
pub fn max_mode(d: usize) -> f64 {
    if d >= 3 {
        1.0
    } else {
        2.0
    }
}

/// Random bulk patch `[0, (layers−1)h_n] × T^d`.
pub fn random_bulk(d: usize, n: usize, layers: usize, h_n: f64, eps: f64, seed: u64, ghosts: bool) -> Result<State> {
    let mut spec =
        PresetSpec { d, n, layers, h_n, eps, seed, ghosts, generators: 8, amplitude: 0.1, ..Default::default() };
    spec.params.insert("smooth_normal".into(), 1.0);
    spec.params.insert("max_mode".into(), max_mode(d));
    PresetRegistry::default().build("random_smooth", &spec)
}

/// `count` constant and `count` smooth directions on `comps`.
pub fn direction_battery(s: &mut State, comps: &[Comp], count: usize, seed: u64) -> Result<Vec<Tangent>> {
    let mut sampler = Sampler::new(seed);
    let mut out = Vec::with_capacity(2 * count);
    for _ in 0..count {
        out.push(constant_direction(s, &mut sampler, comps, 0.5)?);
        out.push(random_direction(s, &mut sampler, comps, 0.5)?);
    }
    Ok(out)
}

fn real(s: &State, sampler: &mut Sampler, amp: f64) -> GField {
    GField::from_real(sampler.periodic(&s.grid).iter().map(|v| amp * v).collect())
}

/// Random parameters for one kernel family. Antifield parameters are odd
/// and use a fresh generator of tag `−1`.
pub fn random_kernel_params(s: &mut State, family: &str, seed: u64) -> Result<KernelParams> {
    let d = s.d();
    let mut sm = Sampler::new(seed);
    let chi = |s: &State, sm: &mut Sampler| GField::from_term(Monomial::new(0, -2), sm.periodic(&s.grid));
    Ok(match family {
        "E_inv" => KernelParams::EtaInverse(real(s, &mut sm, 0.3)),
        "B" => KernelParams::Shift((0..d).map(|_| real(s, &mut sm, 0.3)).collect()),
        "E" => KernelParams::Eta(real(s, &mut sm, 0.3)),
        "X_n" => KernelParams::ChiNormal(chi(s, &mut sm)),
        "X_a" => KernelParams::ChiTangential((0..d).map(|_| chi(s, &mut sm)).collect()),
        "G_dag" => {
            let k = s.alloc_generator(-1)?;
            let mut m: Mat = tensor::zeros(d, s.len());
            for (a, b) in tensor::sym_pairs(d) {
                let f = GField::from_term(Monomial::new(1 << k, -1), sm.periodic(&s.grid));
                m[a][b] = f.clone();
                m[b][a] = f;
            }
            KernelParams::Antifield(m)
        }
        other => return Err(Error::Unknown { kind: "kernel family", name: other.into() }),
    })
}

pub const CLASSICAL_FAMILIES: [&str; 2] = ["E_inv", "B"];
pub const BV_FAMILIES: [&str; 5] = ["X_n", "X_a", "B", "G_dag", "E"];

type OneForm = dyn Fn(&State, &Tangent) -> Result<GradedScalar> + Sync;

fn alpha_for(bv: bool) -> &'static OneForm {
    if bv {
        &boundary::alpha_tilde_bv
    } else {
        &boundary::alpha_tilde_classical
    }
}

// ---------------------------------------------------------------------------
// individual checks

/// Sup-norm of the ADM rewriting residual on a bulk patch of thickness
/// `thick` at `layers` and `2·layers − 1` normal layers; returns
/// `(coarse, fine)`.
pub fn ghy_refinement(d: usize, n: usize, layers: usize, thick: f64, eps: f64, seed: u64) -> Result<(f64, f64)> {
    let mut out = [0.0; 2];
    for (i, l) in [layers, 2 * layers - 1].into_iter().enumerate() {
        let s = random_bulk(d, n, l, thick / (l - 1) as f64, eps, seed, false)?;
        out[i] = adm::ghy_decomposition_residual(&s)?.max_abs();
    }
    Ok((out[0], out[1]))
}

/// `max_Y |ι_X ω̃(Y)|` for one kernel generator.
pub fn kernel_contraction(s: &State, p: &KernelParams, bv: bool, dirs: &[Tangent]) -> Result<f64> {
    let x = boundary::kernel_vector_field(p.clone(), bv);
    let mut worst: f64 = 0.0;
    for y in dirs {
        let yv = VectorField::constant(y.clone())?;
        let w = boundary::omega_tilde_vf(alpha_for(bv), s, &x, &yv)?;
        worst = worst.max(w.max_abs());
    }
    Ok(worst)
}

/// `|α̃(X)|` for one kernel generator.
pub fn kernel_horizontality(s: &State, p: &KernelParams, bv: bool) -> Result<f64> {
    let x = if bv { boundary::kernel_generator_bv(s, p)? } else { boundary::kernel_generator_classical(s, p)? };
    Ok(alpha_for(bv)(s, &x)?.max_abs())
}

/// Change of the reduced fields along the flow of a kernel generator.
pub fn flow_invariance(s: &State, p: &KernelParams, bv: bool, time: f64, steps: usize) -> Result<f64> {
    let x = boundary::kernel_vector_field(p.clone(), bv);
    let end = boundary::integrate_flow(s, &x, time, steps)?;
    if bv {
        let a = boundary::reduce_bv(s)?;
        let b = boundary::reduce_bv(&end)?;
        let d = s.d();
        Ok(Comp::darboux(d).into_iter().map(|c| a.get(c).distance(&b.get(c))).fold(0.0, f64::max))
    } else {
        let (g0, j0) = boundary::reduce_classical(s)?;
        let (g1, j1) = boundary::reduce_classical(&end)?;
        let mut worst: f64 = 0.0;
        for (r0, r1) in g0.iter().zip(&g1).chain(j0.iter().zip(&j1)) {
            for (a, b) in r0.iter().zip(r1) {
                worst = worst.max(a.distance(b));
            }
        }
        Ok(worst)
    }
}

/// `ω∂` from the Cartan formula on `α∂` against the constant pairing.
pub fn darboux_pairing(ds: &State, x: &Tangent, y: &Tangent) -> Result<f64> {
    let cartan = boundary::omega_tilde(&boundary::alpha_boundary, ds, x, y)?;
    let pairing = boundary::omega_boundary(ds, x, y)?;
    Ok(cartan.distance(&pairing))
}

fn pushforward(s: &State, y: &Tangent, sign: PhiSign) -> Result<Tangent> {
    let map = VectorField::new(0, move |st: &State| Ok(boundary::state_as_tangent(&boundary::reduce_bv_with(st, sign)?)));
    Ok(directional_derivative_vf(&map, s, y)?.restrict(&Comp::darboux(s.d())))
}

/// `|α̃(Y) − α∂(Dπ·Y)|` for the reduction with the given `φ_a` sign.
pub fn pullback_alpha(s: &State, y: &Tangent, sign: PhiSign) -> Result<f64> {
    let ds = boundary::reduce_bv_with(s, sign)?;
    let py = pushforward(s, y, sign)?;
    let lhs = boundary::alpha_tilde_bv(s, y)?;
    let rhs = boundary::alpha_boundary(&ds, &py)?;
    Ok(lhs.distance(&rhs))
}

/// `|ω̃(X, Y) − ω∂(Dπ·X, Dπ·Y)|` on constant directions.
pub fn pullback_omega(s: &State, x: &Tangent, y: &Tangent) -> Result<f64> {
    let ds = boundary::reduce_bv(s)?;
    let px = pushforward(s, x, boundary::PHI_SIGN)?;
    let py = pushforward(s, y, boundary::PHI_SIGN)?;
    let lhs = boundary::omega_tilde(&boundary::alpha_tilde_bv, s, x, y)?;
    let rhs = boundary::omega_boundary(&ds, &px, &py)?;
    Ok(lhs.distance(&rhs))
}

/// Outcome of the Euler-contraction comparison on one bulk state.
#[derive(Clone, Debug)]
pub struct EulerComparison {
    /// `|S̃ − S∂∘π| / |S∂∘π|` over all monomials.
    pub relative: f64,
    /// Same, restricted to monomials linear in the ghosts.
    pub relative_linear: f64,
    /// Ghost grade of `S∂` is `+1`.
    pub grade_one: bool,
}

pub fn euler_contraction(bulk: &State) -> Result<EulerComparison> {
    let st = boundary::euler_contraction_action(bulk)?;
    let pre = boundary::pre_boundary(bulk)?;
    let sb = boundary::boundary_action(&boundary::reduce_bv(&pre)?)?;
    let ghosts: u64 = (0..bulk.config.num_generators())
        .filter(|k| bulk.config.tag(*k) == 1)
        .fold(0, |m, k| m | (1u64 << k));
    let linear = |x: &GradedScalar| -> GradedScalar {
        let mut out = GradedScalar::zero(x.config().clone());
        for (m, c) in x.terms() {
            if (m.mask & ghosts).count_ones() == 1 && (m.mask & !ghosts) == 0 {
                out.add_term(*m, *c);
            }
        }
        out
    };
    let scale = sb.max_abs().max(f64::MIN_POSITIVE);
    let lin_scale = linear(&sb).max_abs().max(f64::MIN_POSITIVE);
    Ok(EulerComparison {
        relative: st.distance(&sb) / scale,
        relative_linear: linear(&st).distance(&linear(&sb)) / lin_scale,
        grade_one: sb.ghost_grade() == crate::graded::Grade::Pure(1),
    })
}

/// `max_Y |ω∂(Q∂, Y) − D_Y S∂|`.
pub fn boundary_hamiltonian(ds: &State, dirs: &[Tangent]) -> Result<f64> {
    let q = boundary::boundary_q(ds)?;
    let mut worst: f64 = 0.0;
    for y in dirs {
        let lhs = boundary::omega_boundary(ds, &q, y)?;
        let rhs = directional_derivative(boundary::boundary_action, ds, y)?;
        worst = worst.max(lhs.distance(&rhs));
    }
    Ok(worst)
}

/// `‖(Q∂)²‖_∞` over the Darboux slots.
pub fn boundary_q_square(ds: &State) -> Result<f64> {
    let q = boundary::boundary_q(ds)?;
    let qv = VectorField::new(1, boundary::boundary_q);
    Ok(directional_derivative_vf(&qv, ds, &q)?.max_abs())
}

/// Boundary state for the `(Q∂)²` check: band-limited data (`|k|₁ ≤ 1`) so
/// that products of fields stay resolved on a small grid.
pub fn band_limited_darboux(d: usize, n: usize, amplitude: f64, eps: f64, seed: u64) -> Result<State> {
    let mut spec = PresetSpec { d, n, eps, seed, ghosts: true, generators: 8, amplitude, ..Default::default() };
    spec.params.insert("max_mode".into(), 1.0);
    boundary::reduce_bv(&PresetRegistry::default().build("random_smooth", &spec)?)
}

/// Bulk `‖Q²‖_∞` on the metric and ghost slots of a closed torus.
pub fn bulk_q_square(d: usize, n: usize, eps: f64, seed: u64) -> Result<f64> {
    let mut spec = PresetSpec { d, n, eps, seed, ghosts: true, closed: true, amplitude: 0.03, ..Default::default() };
    spec.params.insert("max_mode".into(), max_mode(d));
    let s = PresetRegistry::default().build("random_smooth", &spec)?;
    Ok(bv::q_square_residual(&s)?.values().copied().fold(0.0, f64::max))
}

/// Ghost-free part of a graded scalar.
fn body(x: &GradedScalar) -> f64 {
    x.coeff(Monomial::new(0, 0))
}

/// Weak-form comparison of the ghost-free parts of `∂S∂/∂ξ^n`, `∂S∂/∂ξ^a`
/// with `𝓗`, `ε𝓗_a` and with the Euler–Lagrange constraints of the ADM
/// Lagrangian, `−G_η` and `−γ_ab G_β^b`, on a pre-boundary state with
/// `η = 1`, `β = 0`.
pub fn constraint_extraction(pre: &State, tests: usize, seed: u64) -> Result<f64> {
    let d = pre.d();
    let mut s = pre.clone();
    s.set(Comp::Eta, GField::constant(s.len(), 1.0));
    for a in 0..d {
        s.set(Comp::beta(a), GField::zero(s.len()));
    }
    let (g_eta, g_beta) = adm::classical_constraints(&s)?;
    let gamma = s.sym(Comp::gamma);
    let mut expected = vec![-g_eta];
    for a in 0..d {
        expected.push(-tensor::dot(&gamma[a], &g_beta));
    }
    let mut ds = boundary::reduce_bv(&s)?;
    let (h, ha) = boundary::boundary_constraints(&ds)?;
    let constraints: Vec<GField> = std::iter::once(h).chain(ha.into_iter().map(|f| f.scale(s.eps))).collect();
    let mut sm = Sampler::new(seed);
    let slots: Vec<Comp> = std::iter::once(Comp::XiN).chain((0..d).map(Comp::xi)).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..tests {
        for ((slot, exp), con) in slots.iter().zip(&expected).zip(&constraints) {
            let y = random_direction(&mut ds, &mut sm, &[*slot], 1.0)?;
            let k = y.get(*slot).terms().next().map(|(m, _)| m.mask.trailing_zeros() as usize).unwrap_or(0);
            let lhs = body(&directional_derivative(boundary::boundary_action, &ds, &y)?.left_derive(k));
            let f = GField::from_real(y.get(*slot).term(&Monomial::new(1 << k, 1)).cloned().unwrap_or_default());
            let rhs = body(&ds.integrate(&(&f * exp)));
            worst = worst.max((lhs - rhs).abs());
            let rhs = body(&ds.integrate(&(&f * con)));
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// `max |𝓗|, |𝓗_a|` on the flat state with `Λ = 0`.
pub fn flat_constraints(d: usize, n: usize, eps: f64) -> Result<f64> {
    let spec = PresetSpec { d, n, eps, ..Default::default() };
    let s = PresetRegistry::default().build("flat", &spec)?;
    let (h, ha) = boundary::boundary_constraints(&boundary::reduce_bv(&s)?)?;
    Ok(ha.iter().map(|f| f.max_abs()).fold(h.max_abs(), f64::max))
}

/// `max |𝓗| / (√γ M/r³)` on the time-symmetric Schwarzschild slice
/// (d = 3 patch of `n³` points).
pub fn schwarzschild_constraint(n: usize) -> Result<f64> {
    let mut spec = PresetSpec { d: 3, n, ..Default::default() };
    let (mass, offset, size) = (1.0, 2.0, 1.0);
    spec.params.insert("mass".into(), mass);
    spec.params.insert("offset".into(), offset);
    spec.params.insert("size".into(), size);
    let s = PresetRegistry::default().build("schwarzschild_isotropic", &spec)?;
    let ds = boundary::reduce_bv(&s)?;
    let (h, _) = boundary::boundary_constraints(&ds)?;
    let geo = Geometry::new(&s)?;
    let scale: Vec<f64> = s
        .grid
        .sample(|x, _| mass / x.iter().map(|xi| (offset + size * xi).powi(2)).sum::<f64>().powf(1.5));
    let hb = h.body();
    let sq = geo.sqrt_g.body();
    Ok(hb.iter().zip(&sq).zip(&scale).map(|((h, g), l)| (h / (g * l)).abs()).fold(0.0, f64::max))
}

/// Least-squares factor `c` with `G_β ≈ c·𝓗_c` and the relative residual
/// `‖G_β − c𝓗_c‖ / ‖G_β‖`.
pub fn momentum_factor(pre: &State) -> Result<(f64, f64)> {
    let geo = Geometry::new(pre)?;
    let gb = adm::g_beta(pre, &geo)?;
    let hc = adm::momentum_constraint_covariant(pre, &geo)?;
    let (mut num, mut den, mut norm) = (0.0, 0.0, 0.0f64);
    for (a, b) in gb.iter().zip(&hc) {
        for (x, y) in a.body().iter().zip(b.body()) {
            num += x * y;
            den += y * y;
            norm = norm.max(x.abs());
        }
    }
    let c = num / den;
    let res = gb.iter().zip(&hc).map(|(a, b)| a.distance(&b.scale(c))).fold(0.0, f64::max);
    Ok((c, res / norm))
}

/// Direction classes for the bulk–boundary formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionClass {
    /// Supported away from `x^n = 0` and the far face.
    Interior,
    /// Antifields and antighosts only, touching the boundary.
    Antifield,
    /// Metric slots only on a state without ghosts, touching the boundary.
    Classical,
}

impl DirectionClass {
    pub const ALL: [DirectionClass; 3] = [DirectionClass::Interior, DirectionClass::Antifield, DirectionClass::Classical];

    pub fn name(&self) -> &'static str {
        match self {
            DirectionClass::Interior => "interior",
            DirectionClass::Antifield => "antifield",
            DirectionClass::Classical => "classical",
        }
    }
}

fn bulk_comps(d: usize) -> Vec<Comp> {
    let mut v = vec![Comp::Eta];
    v.extend((0..d).map(Comp::beta));
    v.extend(tensor::sym_pairs(d).into_iter().map(|(a, b)| Comp::gamma(a, b)));
    for mu in 0..=d {
        v.push(bv::xi_comp(d, mu));
        v.push(bv::chi_comp(d, mu));
        for nu in mu..=d {
            v.push(bv::gd_comp(d, mu, nu));
        }
    }
    v
}

/// `sup_Y |Ω(Q, Y) − D_Y S − α̃(Y|∂M)|` on a bulk patch, for directions of
/// one class. Directions carry a normal envelope vanishing to third order
/// at the far face (and to second order at `x^n = 0` for the interior class).
pub fn check_fundamental_formula(bulk: &State, class: DirectionClass, count: usize, seed: u64) -> Result<f64> {
    let d = bulk.d();
    check_dimension(d)?;
    if !bulk.grid.is_bulk() {
        return Err(Error::MissingJets("the fundamental formula needs a bulk patch".into()));
    }
    let mut s = bulk.clone();
    let comps: Vec<Comp> = match class {
        DirectionClass::Interior => bulk_comps(d),
        DirectionClass::Antifield => bulk_comps(d).into_iter().filter(|c| c.grade() < 0).collect(),
        DirectionClass::Classical => bulk_comps(d).into_iter().filter(|c| c.grade() == 0).collect(),
    };
    let thick = s.grid.h_n() * (s.grid.layers() - 1) as f64;
    let env: Vec<f64> = (0..s.len())
        .map(|i| {
            let t = s.grid.coords(i).1 / thick;
            match class {
                DirectionClass::Interior => 16.0 * t * t * (1.0 - t).powi(3),
                _ => (1.0 - t).powi(3),
            }
        })
        .collect();
    let q = bv::apply_q_bulk(&s)?;
    let pre = boundary::pre_boundary(&s)?;
    let mut sm = Sampler::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let y0 = random_direction(&mut s, &mut sm, &comps, 0.3)?;
        let mut y = Tangent::zero(s.len());
        for (c, f) in y0.comps() {
            y.set(*c, f.scale_pointwise(&env));
        }
        let lhs = s.integrate(&bv::omega_bulk_density(&s, &q, 1, &y, 0)?);
        let dsy = directional_derivative(bv::bv_action, &s, &y)?;
        let mut yb = Tangent::zero(pre.len());
        for (c, f) in y.comps() {
            yb.set(*c, s.grid.layer(f, 0));
        }
        let pre = pre.with_config(s.config.clone());
        let a = boundary::alpha_tilde_bv(&pre, &yb)?;
        worst = worst.max(lhs.sub(&dsy)?.sub(&a)?.max_abs());
    }
    Ok(worst)
}

/// Second antighost derivative of `S∂` along two independent directions.
pub fn antighost_second_derivative(ds: &State, seed: u64) -> Result<f64> {
    let d = ds.d();
    let mut s = ds.clone();
    let phis: Vec<Comp> = std::iter::once(Comp::PhiN).chain((0..d).map(Comp::phi)).collect();
    let mut sm = Sampler::new(seed);
    let y1 = random_direction(&mut s, &mut sm, &phis, 1.0)?;
    let y2 = random_direction(&mut s, &mut sm, &phis, 1.0)?;
    let inner = |st: &State| directional_derivative(boundary::boundary_action, st, &y2);
    Ok(directional_derivative(inner, &s, &y1)?.max_abs())
}

// ---------------------------------------------------------------------------
// reports and suites

/// One check outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: usize,
    pub tag: String,
    pub anchor: String,
    pub digest: String,
    pub residual: f64,
    pub tol: f64,
    #[serde(default)]
    pub mutation: bool,
    pub pass: bool,
    pub seconds: f64,
    pub note: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{:.3e}\t{}{:.1e}\t{}",
            self.tag,
            self.anchor,
            self.residual,
            if self.mutation { ">" } else { "≤" },
            self.tol,
            if self.pass { "pass" } else { "FAIL" }
        )?;
        if !self.note.is_empty() {
            write!(f, "\t{}", self.note)?;
        }
        Ok(())
    }
}

/// Report text, one record per line.
pub fn render_report(records: &[CheckReport]) -> String {
    records.iter().map(|r| format!("{r}\n")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: String,
    pub d: usize,
    pub n: usize,
    pub layers: usize,
    pub eps: f64,
    pub lambda: f64,
    pub generators: usize,
    pub seeds: Vec<u64>,
    /// Multiplies every default tolerance; values above 1 need `force`.
    pub tol_scale: f64,
    pub force: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            suite: "classical".into(),
            d: 2,
            n: 32,
            layers: 9,
            eps: 1.0,
            lambda: 0.0,
            generators: 8,
            seeds: vec![0],
            tol_scale: 1.0,
            force: false,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        check_dimension(self.d)?;
        if self.d > 3 {
            return Err(Error::DimensionUnsupported(self.d));
        }
        if self.seeds.is_empty() {
            return Err(Error::Schema("seed list is empty".into()));
        }
        if self.eps != 1.0 && self.eps != -1.0 {
            return Err(Error::Schema(format!("ε must be ±1, got {}", self.eps)));
        }
        if self.tol_scale.is_nan() || self.tol_scale <= 0.0 {
            return Err(Error::Schema("tolerance scale must be positive".into()));
        }
        if self.tol_scale > 1.0 && !self.force {
            return Err(Error::Schema("loosening tolerances needs --force".into()));
        }
        if self.layers < 5 {
            return Err(Error::Schema("bulk patches need at least 5 normal layers".into()));
        }
        Ok(())
    }

    fn digest(&self, tag: &str) -> String {
        // FNV-1a over the inputs that determine the check
        let text = format!(
            "{tag}|{}|{}|{}|{}|{}|{}|{:?}",
            self.d, self.n, self.layers, self.eps, self.lambda, self.generators, self.seeds
        );
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// A measured residual plus optional detail.
pub struct Measured {
    pub residual: f64,
    pub note: String,
}

impl From<f64> for Measured {
    fn from(residual: f64) -> Self {
        Measured { residual, note: String::new() }
    }
}

type CheckFn = Box<dyn Fn(&SuiteConfig) -> Result<Measured> + Send + Sync>;

/// A named check with its default tolerance.
pub struct Check {
    pub tag: &'static str,
    pub anchor: &'static str,
    pub tol: f64,
    /// Mutation checks pass when the residual exceeds the tolerance.
    pub mutation: bool,
    pub run: CheckFn,
}

impl Check {
    pub fn new(
        tag: &'static str,
        anchor: &'static str,
        tol: f64,
        run: impl Fn(&SuiteConfig) -> Result<Measured> + Send + Sync + 'static,
    ) -> Self {
        Check { tag, anchor, tol, mutation: false, run: Box::new(run) }
    }

    pub fn mutation(mut self) -> Self {
        self.mutation = true;
        self
    }
}

pub trait Suite: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn checks(&self) -> Vec<Check>;
}

fn max_over<T>(items: impl IntoIterator<Item = T>, mut f: impl FnMut(T) -> Result<f64>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for it in items {
        let r = f(it)?;
        if r.is_nan() {
            return Ok(f64::NAN);
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

fn kernel_check(cfg: &SuiteConfig, families: &[&str], bv: bool, horizontal: bool) -> Result<f64> {
    max_over(cfg.seeds.iter(), |seed| {
        let mut s = random_boundary_data(cfg.d, cfg.n, cfg.eps, cfg.lambda, *seed, bv)?;
        let comps = if bv { Comp::pre_boundary(cfg.d) } else { Comp::classical(cfg.d) };
        max_over(families.iter().enumerate(), |(i, fam)| {
            let p = random_kernel_params(&mut s, fam, seed.wrapping_mul(31).wrapping_add(i as u64))?;
            if horizontal {
                kernel_horizontality(&s, &p, bv)
            } else {
                let mut st = s.clone();
                let dirs = direction_battery(&mut st, &comps, 5, seed.wrapping_add(100))?;
                kernel_contraction(&st, &p, bv, &dirs)
            }
        })
    })
}

pub struct ClassicalSuite;

impl Suite for ClassicalSuite {
    fn name(&self) -> &'static str {
        "classical"
    }
    fn describe(&self) -> &'static str {
        "ADM geometry, constraints and the classical boundary reduction"
    }
    fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("classical.flat_constraints", "flat data, Λ = 0: 𝓗 = 𝓗_a = 0", 0.0, |c| {
                flat_constraints(c.d, c.n, c.eps).map(Into::into)
            }),
            Check::new("classical.kernel", "ι_X ω̃ = 0 for 𝔼⁻¹, 𝔹", 1e-7, |c| {
                kernel_check(c, &CLASSICAL_FAMILIES, false, false).map(Into::into)
            }),
            Check::new("classical.horizontal", "α̃(X) = 0 for 𝔼⁻¹, 𝔹", 1e-7, |c| {
                kernel_check(c, &CLASSICAL_FAMILIES, false, true).map(Into::into)
            }),
            Check::new("classical.flow_invariance", "(γ̃, J̃) constant along kernel flows", 1e-6, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let s = random_boundary_data(c.d, c.n, c.eps, c.lambda, *seed, false)?;
                    max_over(CLASSICAL_FAMILIES.iter(), |fam| {
                        let mut s = s.clone();
                        let p = random_kernel_params(&mut s, fam, *seed)?;
                        flow_invariance(&s, &p, false, 1.0, 64)
                    })
                })
                .map(Into::into)
            }),
            Check::new("classical.constraint_extraction", "ghost-free ∂S∂/∂ξ = (𝓗, ε𝓗_a) = (−G_η, −γG_β)", 1e-9, |c| {
                max_over(c.seeds.iter(), |seed| {
                    constraint_extraction(&random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?, 3, *seed)
                })
                .map(Into::into)
            }),
            Check::new("classical.momentum_factor", "G_β = c·𝓗_c with c = −2ε", 1e-7, |c| {
                let mut worst = Measured::from(0.0);
                for seed in &c.seeds {
                    let s = random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?;
                    let (f, res) = momentum_factor(&s)?;
                    let r = res.max((f + 2.0 * c.eps).abs());
                    if r >= worst.residual {
                        worst = Measured { residual: r, note: format!("factor {f:.9}") };
                    }
                }
                Ok(worst)
            }),
            Check::new("classical.schwarzschild", "|𝓗|/(√γ M r⁻³) on the isotropic slice", 1e-4, |_| {
                let coarse = schwarzschild_constraint(32)?;
                let fine = schwarzschild_constraint(48)?;
                let residual = if fine < coarse { fine } else { f64::INFINITY };
                Ok(Measured { residual, note: format!("32³: {coarse:.2e}, 48³: {fine:.2e}") })
            }),
        ]
    }
}

pub struct BvSuite;

impl Suite for BvSuite {
    fn name(&self) -> &'static str {
        "bv"
    }
    fn describe(&self) -> &'static str {
        "bulk BV complex on a closed torus"
    }
    fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("bv.q_square", "Q² = 0 on metric and ghosts", 1e-8, |c| {
                max_over(c.seeds.iter(), |seed| bulk_q_square(c.d, if c.d == 2 { 24 } else { 16 }, c.eps, *seed))
                    .map(Into::into)
            }),
            Check::new("bv.hamiltonian", "ι_Q Ω = δS away from boundaries", 1e-7, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let n = if c.d == 2 { 24 } else { 12 };
                    let spec = PresetSpec {
                        d: c.d,
                        n,
                        eps: c.eps,
                        lambda: c.lambda,
                        seed: *seed,
                        ghosts: true,
                        closed: true,
                        amplitude: 0.03,
                        ..Default::default()
                    };
                    let mut s = PresetRegistry::default().build("random_smooth", &spec)?;
                    let q = bv::apply_q_bulk(&s)?;
                    let dirs = direction_battery(&mut s, &bulk_comps(c.d), 2, *seed)?;
                    max_over(dirs.iter(), |y| {
                        let lhs = s.integrate(&bv::omega_bulk_density(&s, &q, 1, y, 0)?);
                        let rhs = directional_derivative(bv::bv_action, &s, y)?;
                        Ok(lhs.distance(&rhs) / (1.0 + rhs.max_abs()))
                    })
                })
                .map(Into::into)
            }),
        ]
    }
}

pub struct BoundarySuite;

impl Suite for BoundarySuite {
    fn name(&self) -> &'static str {
        "boundary"
    }
    fn describe(&self) -> &'static str {
        "BV pre-boundary structure, reduction, boundary action and vector field"
    }
    fn checks(&self) -> Vec<Check> {
        vec![
            Check::new("boundary.kernel", "ι_X ω̃ = 0 for 𝕏_n, 𝕏_a, 𝔹, 𝔾†, 𝔼", 1e-7, |c| {
                kernel_check(c, &BV_FAMILIES, true, false).map(Into::into)
            }),
            Check::new("boundary.horizontal", "α̃(X) = 0 for 𝕏_n, 𝕏_a, 𝔹, 𝔾†, 𝔼", 1e-7, |c| {
                kernel_check(c, &BV_FAMILIES, true, true).map(Into::into)
            }),
            Check::new("boundary.flow_invariance", "π constant along kernel flows", 1e-6, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let s0 = random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?;
                    max_over(BV_FAMILIES.iter(), |fam| {
                        let mut s = s0.clone();
                        let p = random_kernel_params(&mut s, fam, *seed)?;
                        flow_invariance(&s, &p, true, 1.0, 64)
                    })
                })
                .map(Into::into)
            }),
            Check::new("boundary.darboux_pairing", "δα∂ = ε δγ^ab δΠ_ab + δξ^ρ δφ_ρ", 1e-12, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let mut ds = boundary::reduce_bv(&random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?)?;
                    let mut sm = Sampler::new(*seed);
                    let comps = Comp::darboux(c.d);
                    let x = constant_direction(&mut ds, &mut sm, &comps, 1.0)?;
                    let y = constant_direction(&mut ds, &mut sm, &comps, 1.0)?;
                    darboux_pairing(&ds, &x, &y)
                })
                .map(Into::into)
            }),
            Check::new("boundary.pullback_alpha", "π*α∂ = α̃", 1e-7, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let mut s = random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?;
                    let dirs = direction_battery(&mut s, &Comp::pre_boundary(c.d), 2, *seed)?;
                    max_over(dirs.iter(), |y| pullback_alpha(&s, y, boundary::PHI_SIGN))
                })
                .map(Into::into)
            }),
            Check::new("boundary.pullback_omega", "π*ω∂ = ω̃", 1e-7, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let mut s = random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?;
                    let mut sm = Sampler::new(seed.wrapping_add(7));
                    let comps = Comp::pre_boundary(c.d);
                    max_over(0..4, |_| {
                        let x = constant_direction(&mut s, &mut sm, &comps, 0.5)?;
                        let y = constant_direction(&mut s, &mut sm, &comps, 0.5)?;
                        pullback_omega(&s, &x, &y)
                    })
                })
                .map(Into::into)
            }),
            Check::new("boundary.phi_sign_mutation", "flipped φ_a sign breaks π*α∂ = α̃", 1e-3, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let mut s = random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?;
                    let dirs = direction_battery(&mut s, &Comp::pre_boundary(c.d), 1, *seed)?;
                    max_over(dirs.iter(), |y| pullback_alpha(&s, y, PhiSign::Proof))
                })
                .map(Into::into)
            })
            .mutation(),
            Check::new("boundary.euler_contraction", "ι_Q̃ ι_Ẽ ω̃ = π*S∂ (relative)", 1e-6, |c| {
                let mut worst = Measured::from(0.0);
                let mut linear: f64 = 0.0;
                for seed in &c.seeds {
                    let b = random_bulk(c.d, if c.d == 2 { 16 } else { 8 }, 33, 0.5 / 32.0, c.eps, *seed, true)?;
                    let e = euler_contraction(&b)?;
                    let r = if e.grade_one { e.relative } else { f64::INFINITY };
                    linear = linear.max(e.relative_linear);
                    worst.residual = worst.residual.max(r);
                }
                worst.note = format!("ghost-linear part {linear:.2e}");
                Ok(worst)
            }),
            Check::new("boundary.hamiltonian", "ι_Q∂ ω∂ = δS∂", 1e-6, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let mut ds = band_limited_darboux(c.d, if c.d == 2 { 12 } else { 8 }, 0.05, c.eps, *seed)?;
                    let dirs = direction_battery(&mut ds, &Comp::darboux(c.d), 2, *seed)?;
                    boundary_hamiltonian(&ds, &dirs)
                })
                .map(Into::into)
            }),
            Check::new("boundary.q_square", "(Q∂)² = 0", 1e-7, |c| {
                let seed = c.seeds[0];
                boundary_q_square(&band_limited_darboux(c.d, if c.d == 2 { 18 } else { 8 }, 0.05, c.eps, seed)?).map(Into::into)
            }),
            Check::new("boundary.antighost_linearity", "∂²S∂/∂φ∂φ = 0", 0.0, |c| {
                max_over(c.seeds.iter(), |seed| {
                    let ds = boundary::reduce_bv(&random_pre_boundary(c.d, c.n, c.eps, c.lambda, *seed)?)?;
                    antighost_second_derivative(&ds, *seed)
                })
                .map(Into::into)
            }),
        ]
    }
}

pub struct BulkSuite;

impl Suite for BulkSuite {
    fn name(&self) -> &'static str {
        "bulk"
    }
    fn describe(&self) -> &'static str {
        "ADM rewriting with the boundary term, and the bulk–boundary formula"
    }
    fn checks(&self) -> Vec<Check> {
        let mut v = vec![Check::new("bulk.ghy", "√|g|(R − 2Λ) = L_ADM − 2ε∂_n(√γK) + ∂_a(...)", 1e-5, |c| {
            let mut worst = Measured::from(0.0);
            for seed in &c.seeds {
                let (coarse, fine) = ghy_refinement(c.d, if c.d == 2 { c.n } else { 20 }, c.layers, 0.1, c.eps, *seed)?;
                let order = (coarse / fine).log2();
                let r = if order >= 3.5 { coarse } else { f64::INFINITY };
                if r >= worst.residual {
                    worst = Measured { residual: r, note: format!("order {order:.2}") };
                }
            }
            Ok(worst)
        })];
        for class in DirectionClass::ALL {
            let tag = match class {
                DirectionClass::Interior => "bulk.fundamental_interior",
                DirectionClass::Antifield => "bulk.fundamental_antifield",
                DirectionClass::Classical => "bulk.fundamental_classical",
            };
            v.push(Check::new(tag, "Ω(Q,Y) − D_Y S = α̃(Y|∂M)", 1e-5, move |c| {
                max_over(c.seeds.iter(), |seed| {
                    let b = random_bulk(c.d, if c.d == 2 { 12 } else { 8 }, 65, 0.5 / 64.0, c.eps, *seed, class != DirectionClass::Classical)?;
                    check_fundamental_formula(&b, class, 2, *seed)
                })
                .map(Into::into)
            }));
        }
        v
    }
}

/// Name → suite lookup.
pub struct SuiteRegistry {
    entries: Vec<Box<dyn Suite>>,
}

impl Default for SuiteRegistry {
    fn default() -> Self {
        SuiteRegistry {
            entries: vec![Box::new(ClassicalSuite), Box::new(BvSuite), Box::new(BoundarySuite), Box::new(BulkSuite)],
        }
    }
}

impl SuiteRegistry {
    pub fn register(&mut self, s: Box<dyn Suite>) {
        self.entries.retain(|e| e.name() != s.name());
        self.entries.push(s);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Suite> {
        self.entries
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "suite", name: name.into() })
    }

    pub fn list(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|s| (s.name(), s.describe())).collect()
    }
}

fn failed(id: usize, tag: &str, anchor: &str, digest: String, tol: f64, seconds: f64, note: String) -> CheckReport {
    CheckReport {
        id,
        tag: tag.into(),
        anchor: anchor.into(),
        digest,
        residual: f64::NAN,
        tol,
        mutation: false,
        pass: false,
        seconds,
        note,
    }
}

/// Runs the configured suite. Configuration problems and check errors come
/// back as failed records; the suite itself never aborts.
pub fn run_suite(cfg: &SuiteConfig) -> Vec<CheckReport> {
    run_suite_in(&SuiteRegistry::default(), cfg)
}

pub fn run_suite_in(registry: &SuiteRegistry, cfg: &SuiteConfig) -> Vec<CheckReport> {
    let suite = match cfg.validate().and_then(|_| registry.get(&cfg.suite)) {
        Ok(s) => s,
        Err(e) => return vec![failed(0, "plumbing", "configuration", cfg.digest("plumbing"), 0.0, 0.0, e.to_string())],
    };
    suite.checks().iter().enumerate().map(|(id, check)| run_one(id, check, cfg)).collect()
}

/// Runs a single check of a suite under `cfg`.
pub fn run_check(registry: &SuiteRegistry, suite: &str, tag: &str, cfg: &SuiteConfig) -> CheckReport {
    let found = cfg.validate().and_then(|_| registry.get(suite)).and_then(|s| {
        s.checks()
            .into_iter()
            .enumerate()
            .find(|(_, c)| c.tag == tag)
            .ok_or_else(|| Error::Unknown { kind: "check", name: tag.into() })
    });
    match found {
        Ok((id, check)) => run_one(id, &check, cfg),
        Err(e) => failed(0, tag, "configuration", cfg.digest(tag), 0.0, 0.0, e.to_string()),
    }
}

fn run_one(id: usize, check: &Check, cfg: &SuiteConfig) -> CheckReport {
    let tol = check.tol * cfg.tol_scale;
    let digest = cfg.digest(check.tag);
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(|| (check.run)(cfg)));
    let seconds = start.elapsed().as_secs_f64();
    match res {
        Ok(Ok(m)) => CheckReport {
            id,
            tag: check.tag.into(),
            anchor: check.anchor.into(),
            digest,
            residual: m.residual,
            tol,
            mutation: check.mutation,
            pass: if check.mutation { m.residual > tol } else { m.residual <= tol },
            seconds,
            note: m.note,
        },
        Ok(Err(e)) => failed(id, check.tag, check.anchor, digest, tol, seconds, e.to_string()),
        Err(_) => failed(id, check.tag, check.anchor, digest, tol, seconds, "check panicked".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy;

    impl Suite for Toy {
        fn name(&self) -> &'static str {
            "toy"
        }
        fn describe(&self) -> &'static str {
            "plumbing"
        }
        fn checks(&self) -> Vec<Check> {
            vec![
                Check::new("toy.small", "small residual", 1e-3, |_| Ok(1e-6.into())),
                Check::new("toy.panics", "panicking check", 1e-3, |_| panic!("boom")),
                Check::new("toy.errors", "failing check", 1e-3, |_| Err(Error::Schema("bad input".into()))),
                Check::new("toy.mutant", "mutation survives", 1e-3, |_| Ok(1e-6.into())).mutation(),
                Check::new("toy.killed", "mutation killed", 1e-3, |_| Ok(0.5.into())).mutation(),
            ]
        }
    }

    fn toy_registry() -> SuiteRegistry {
        let mut r = SuiteRegistry::default();
        r.register(Box::new(Toy));
        r
    }

    #[test]
    fn suite_never_aborts() {
        let cfg = SuiteConfig { suite: "toy".into(), ..Default::default() };
        let recs = run_suite_in(&toy_registry(), &cfg);
        let pass: Vec<bool> = recs.iter().map(|r| r.pass).collect();
        assert_eq!(pass, [true, false, false, false, true]);
        assert_eq!(recs[1].note, "check panicked");
        assert!(recs[2].note.contains("bad input"));
        assert!(recs[2].residual.is_nan());
    }

    #[test]
    fn d1_is_a_single_failed_record() {
        let recs = run_suite(&SuiteConfig { d: 1, ..Default::default() });
        assert_eq!(recs.len(), 1);
        assert!(!recs[0].pass);
        assert!(recs[0].note.contains('1'));
    }

    #[test]
    fn loosening_needs_force() {
        let mut cfg = SuiteConfig { suite: "toy".into(), tol_scale: 10.0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Schema(_))));
        cfg.force = true;
        cfg.validate().unwrap();
        let rec = run_check(&toy_registry(), "toy", "toy.small", &cfg);
        assert_eq!(rec.tol, 1e-2);
        cfg.tol_scale = 0.5;
        cfg.force = false;
        cfg.validate().unwrap();
        assert!(matches!(SuiteConfig { seeds: vec![], ..Default::default() }.validate(), Err(Error::Schema(_))));
        assert!(matches!(SuiteConfig { eps: 0.5, ..Default::default() }.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn unknown_names_fail_cleanly() {
        let recs = run_suite(&SuiteConfig { suite: "nope".into(), ..Default::default() });
        assert_eq!(recs.len(), 1);
        assert!(!recs[0].pass);
        let rec = run_check(&SuiteRegistry::default(), "classical", "classical.nope", &SuiteConfig::default());
        assert!(!rec.pass);
    }

    #[test]
    fn digest_tracks_inputs() {
        let a = SuiteConfig::default();
        let b = SuiteConfig { seeds: vec![1], ..Default::default() };
        assert_eq!(a.digest("x"), SuiteConfig::default().digest("x"));
        assert_ne!(a.digest("x"), b.digest("x"));
        assert_ne!(a.digest("x"), a.digest("y"));
        assert_eq!(a.digest("x").len(), 16);
    }

    #[test]
    fn report_lines() {
        let cfg = SuiteConfig { suite: "toy".into(), ..Default::default() };
        let text = render_report(&run_suite_in(&toy_registry(), &cfg));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("toy.small\t"));
        assert!(lines[0].contains("pass"));
        assert!(lines[3].contains(">1.0e-3\tFAIL"));
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let cfg = SuiteConfig { suite: "bv".into(), ..Default::default() };
        let strip = |recs: Vec<CheckReport>| -> Vec<(String, u64, String)> {
            recs.into_iter().map(|r| (r.tag, r.residual.to_bits(), r.digest)).collect()
        };
        assert_eq!(strip(run_suite(&cfg)), strip(run_suite(&cfg)));
    }

    #[test]
    fn registry_lists_builtin_suites() {
        let names: Vec<&str> = SuiteRegistry::default().list().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["classical", "bv", "boundary", "bulk"]);
    }

    #[test]
    fn kernel_check_is_not_vacuous() {
        // a generic direction is not in the kernel
        let mut s = random_boundary_data(2, 8, 1.0, 0.0, 0, false).unwrap();
        let p = random_kernel_params(&mut s, "E_inv", 1).unwrap();
        let dirs = direction_battery(&mut s, &Comp::classical(2), 1, 2).unwrap();
        assert!(kernel_contraction(&s, &p, false, &dirs).unwrap() < 1e-10);
        let x = dirs[1].clone();
        let xv = VectorField::constant(x).unwrap();
        let mut worst: f64 = 0.0;
        for y in &dirs {
            let yv = VectorField::constant(y.clone()).unwrap();
            let w = boundary::omega_tilde_vf(&boundary::alpha_tilde_classical, &s, &xv, &yv).unwrap();
            worst = worst.max(w.max_abs());
        }
        assert!(worst > 1e-3, "{worst}");
    }
}
