//! Deterministic state generators, looked up by name.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adm::check_dimension;
use crate::error::{Error, Result};
use crate::graded::{GradedScalar, GrassmannConfig, Monomial};
use crate::grid::{GField, Grid};
use crate::state::{Comp, State, Tangent};
use crate::tensor;

/// Everything a preset needs to build a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetSpec {
    pub d: usize,
    pub n: usize,
    /// Normal layers of a bulk patch; `1` for a boundary-only state.
    pub layers: usize,
    pub h_n: f64,
    pub eps: f64,
    pub lambda: f64,
    pub generators: usize,
    pub seed: u64,
    pub amplitude: f64,
    /// Populate ghosts, antifields and antighosts.
    pub ghosts: bool,
    /// Bulk without boundary: the normal axis is periodic too.
    pub closed: bool,
    /// Preset-specific parameters (`mass`, `offset`, ...).
    pub params: BTreeMap<String, f64>,
}

impl Default for PresetSpec {
    fn default() -> Self {
        PresetSpec {
            d: 2,
            n: 16,
            layers: 1,
            h_n: 0.05,
            eps: 1.0,
            lambda: 0.0,
            generators: 8,
            seed: 0,
            amplitude: 0.1,
            ghosts: false,
            closed: false,
            params: BTreeMap::new(),
        }
    }
}

impl PresetSpec {
    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn grid(&self) -> Result<Arc<Grid>> {
        if self.closed {
            Grid::closed(self.d, self.n)
        } else if self.layers > 1 {
            Grid::bulk(self.d, self.n, self.layers, self.h_n)
        } else {
            Grid::periodic(self.d, self.n)
        }
    }

    /// Generator ghost tags: the first half `+1` (ghost slots), the second
    /// half `−1` (antifield slots).
    pub fn config(&self) -> Result<Arc<GrassmannConfig>> {
        let n = self.generators.max(2);
        let tags = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
        Ok(Arc::new(GrassmannConfig::new(tags)?))
    }

    fn empty_state(&self) -> Result<State> {
        if self.eps != 1.0 && self.eps != -1.0 {
            return Err(Error::Schema(format!("ε must be ±1, got {}", self.eps)));
        }
        Ok(State::new(self.grid()?, self.config()?, self.eps, self.lambda))
    }
}

pub trait Preset: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn build(&self, spec: &PresetSpec) -> Result<State>;
}

fn set_flat(s: &mut State) {
    let len = s.len();
    s.set(Comp::Eta, GField::constant(len, 1.0));
    for a in 0..s.d() {
        s.set(Comp::gamma(a, a), GField::constant(len, 1.0));
    }
}

pub struct Flat;

impl Preset for Flat {
    fn name(&self) -> &'static str {
        "flat"
    }
    fn describe(&self) -> &'static str {
        "η = 1, β = 0, γ = δ, J = 0; ghost sectors zero"
    }
    fn build(&self, spec: &PresetSpec) -> Result<State> {
        let mut s = spec.empty_state()?;
        set_flat(&mut s);
        Ok(s)
    }
}

/// `γ = e^{2φ}δ` with `φ = a·sin(2πx)cos(2πy)` (d = 2).
pub struct Conformal2d;

impl Preset for Conformal2d {
    fn name(&self) -> &'static str {
        "conformal2d"
    }
    fn describe(&self) -> &'static str {
        "d = 2, γ = exp(2φ)δ, φ = amplitude·sin(2πx)cos(2πy)"
    }
    fn build(&self, spec: &PresetSpec) -> Result<State> {
        if spec.d != 2 {
            return Err(Error::Schema("conformal2d needs d = 2".into()));
        }
        let mut s = spec.empty_state()?;
        set_flat(&mut s);
        let a = spec.amplitude;
        let e2 = s.grid.sample(|x, _| (2.0 * a * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()).exp());
        s.set(Comp::gamma(0, 0), GField::from_real(e2.clone()));
        s.set(Comp::gamma(1, 1), GField::from_real(e2));
        Ok(s)
    }
}

/// Conformal factor of the time-symmetric Schwarzschild slice in isotropic
/// coordinates on a closed patch, `ψ = 1 + M/(2r)`.
pub fn schwarzschild_psi(x: &[f64], mass: f64, offset: f64, size: f64) -> f64 {
    let r = x.iter().map(|xi| (offset + size * xi).powi(2)).sum::<f64>().sqrt();
    1.0 + mass / (2.0 * r)
}

/// `γ = ψ⁴ δ` on the non-periodic patch `offset + size·[0,1]^d`.
pub struct SchwarzschildIsotropic;

impl Preset for SchwarzschildIsotropic {
    fn name(&self) -> &'static str {
        "schwarzschild_isotropic"
    }
    fn describe(&self) -> &'static str {
        "γ = ψ⁴δ, ψ = 1 + M/(2r), on a closed patch away from r = 0 (params: mass, offset, size)"
    }
    fn build(&self, spec: &PresetSpec) -> Result<State> {
        let mass = spec.param("mass", 1.0);
        let offset = spec.param("offset", 2.0);
        let size = spec.param("size", 1.0);
        if offset <= 0.0 || mass <= 0.0 {
            return Err(Error::SingularMetric("patch must avoid r = 0 and M must be positive".into()));
        }
        let grid = Grid::patch(spec.d, spec.n)?;
        let mut s = State::new(grid, spec.config()?, spec.eps, spec.lambda);
        set_flat(&mut s);
        let psi4: Vec<f64> = s.grid.sample(|x, _| schwarzschild_psi(x, mass, offset, size).powi(4));
        for a in 0..spec.d {
            s.set(Comp::gamma(a, a), GField::from_real(psi4.clone()));
        }
        Ok(s)
    }
}

/// Bulk patch with `g = diag(a(t)²δ, −1)`, `a(t) = 1 + A sin(2πt)`.
pub struct Flrw;

impl Preset for Flrw {
    fn name(&self) -> &'static str {
        "flrw"
    }
    fn describe(&self) -> &'static str {
        "bulk patch, η = 1, β = 0, γ = a(x^n)²δ with a = 1 + amplitude·sin(2πx^n)"
    }
    fn build(&self, spec: &PresetSpec) -> Result<State> {
        if spec.layers < 2 {
            return Err(Error::Schema("flrw needs a bulk patch (layers > 1)".into()));
        }
        let mut s = spec.empty_state()?;
        set_flat(&mut s);
        let amp = spec.amplitude;
        let a2 = s.grid.sample(|_, t| (1.0 + amp * (2.0 * PI * t).sin()).powi(2));
        for a in 0..spec.d {
            s.set(Comp::gamma(a, a), GField::from_real(a2.clone()));
        }
        Ok(s)
    }
}

/// How random bulk profiles depend on the normal coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalProfile {
    /// Quadratic in `x^n`.
    Polynomial,
    /// `exp` and `sin` of `x^n`.
    Smooth,
}

/// Random smooth profile generator (low Fourier modes).
pub struct Sampler {
    rng: ChaCha8Rng,
    pub normal: NormalProfile,
    /// Largest `|k|₁` of the Fourier modes used.
    pub max_mode: f64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed), normal: NormalProfile::Polynomial, max_mode: 2.0 }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    fn modes(&mut self, d: usize) -> Vec<(Vec<f64>, f64, f64)> {
        let mut out = Vec::new();
        let range: Vec<i32> = vec![-1, 0, 1, 2];
        let mut idx = vec![0usize; d];
        loop {
            let k: Vec<f64> = idx.iter().map(|i| range[*i] as f64).collect();
            let l1: f64 = k.iter().map(|x| x.abs()).sum();
            if l1 > 0.0 && l1 <= self.max_mode {
                let w = 1.0 / (1.0 + l1 * l1);
                let a = self.rng.gen_range(-1.0..1.0) * w;
                let b = self.rng.gen_range(-1.0..1.0) * w;
                out.push((k, a, b));
            }
            let mut j = 0;
            loop {
                if j == d {
                    return out;
                }
                idx[j] += 1;
                if idx[j] < range.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    /// Periodic profile of unit-order size with random mean in `[-1, 1]`.
    pub fn periodic(&mut self, grid: &Grid) -> Vec<f64> {
        let d = grid.d();
        let mean = self.rng.gen_range(-1.0..1.0);
        if grid.is_closed() {
            let m = self.modes(d + 1);
            return grid.sample(|x, t| {
                let mut y = x.to_vec();
                y.push(t);
                mean + m
                    .iter()
                    .map(|(k, a, b)| {
                        let ph = 2.0 * PI * k.iter().zip(&y).map(|(ki, yi)| ki * yi).sum::<f64>();
                        a * ph.cos() + b * ph.sin()
                    })
                    .sum::<f64>()
            });
        }
        let layers: Vec<Vec<(Vec<f64>, f64, f64)>> = (0..3).map(|_| self.modes(d)).collect();
        let c1 = self.rng.gen_range(-1.0..1.0);
        let c2 = self.rng.gen_range(-1.0..1.0);
        let normal = self.normal;
        let eval = |m: &[(Vec<f64>, f64, f64)], x: &[f64]| -> f64 {
            m.iter()
                .map(|(k, a, b)| {
                    let ph = 2.0 * PI * k.iter().zip(x).map(|(ki, xi)| ki * xi).sum::<f64>();
                    a * ph.cos() + b * ph.sin()
                })
                .sum()
        };
        grid.sample(|x, t| {
            let f0 = mean + eval(&layers[0], x);
            if grid.layers() == 1 {
                return f0;
            }
            match normal {
                NormalProfile::Polynomial => f0 + t * (c1 + eval(&layers[1], x)) + t * t * (c2 + eval(&layers[2], x)),
                NormalProfile::Smooth => {
                    f0 + ((1.3 * t).exp() - 1.0) * (c1 + eval(&layers[1], x))
                        + (2.1 * t + 0.3).sin() * (c2 + eval(&layers[2], x))
                }
            }
        })
    }
}

/// Fill every slot of `s` with random smooth data around flat space.
pub fn randomize(s: &mut State, sampler: &mut Sampler, amplitude: f64, ghosts: bool) -> Result<()> {
    let d = s.d();
    let len = s.len();
    let grid = s.grid.clone();
    let eta = sampler.periodic(&grid);
    s.set(Comp::Eta, GField::from_real(eta.iter().map(|v| 1.0 + amplitude * v).collect()));
    for a in 0..d {
        let b = sampler.periodic(&grid);
        s.set(Comp::beta(a), GField::from_real(b.iter().map(|v| amplitude * v).collect()));
    }
    for (a, b) in tensor::sym_pairs(d) {
        let p = sampler.periodic(&grid);
        let base = if a == b { 1.0 } else { 0.0 };
        s.set(Comp::gamma(a, b), GField::from_real(p.iter().map(|v| base + amplitude * v).collect()));
        if !grid.is_bulk() {
            let j = sampler.periodic(&grid);
            s.set(Comp::j(a, b), GField::from_real(j.iter().map(|v| 2.0 * amplitude * v).collect()));
        }
    }
    if !ghosts {
        return Ok(());
    }
    let cfg = s.config.clone();
    let plus: Vec<usize> = (0..cfg.num_generators()).filter(|k| cfg.tag(*k) == 1).collect();
    let minus: Vec<usize> = (0..cfg.num_generators()).filter(|k| cfg.tag(*k) == -1).collect();
    if plus.len() < 2 || minus.len() < 2 {
        return Err(Error::Schema("random ghost sectors need at least two generators of each tag".into()));
    }
    let odd = |pool: &[usize], sampler: &mut Sampler| -> Result<GField> {
        let mut f = GField::zero(len);
        // two distinct generators per slot
        let i = (sampler.uniform(0.0, pool.len() as f64) as usize).min(pool.len() - 1);
        let j = (i + 1 + (sampler.uniform(0.0, (pool.len() - 1) as f64) as usize).min(pool.len() - 2)) % pool.len();
        for k in [pool[i], pool[j]] {
            let th = GradedScalar::generator(cfg.clone(), k, 1.0)?;
            f += &GField::from_scalar(&th, &sampler.periodic(&grid));
        }
        Ok(f)
    };
    s.set(Comp::XiN, odd(&plus, sampler)?);
    for a in 0..d {
        s.set(Comp::xi(a), odd(&plus, sampler)?);
    }
    s.set(Comp::GdNN, odd(&minus, sampler)?);
    for a in 0..d {
        s.set(Comp::gdn(a), odd(&minus, sampler)?);
    }
    for (a, b) in tensor::sym_pairs(d) {
        s.set(Comp::gd(a, b), odd(&minus, sampler)?);
    }
    let chi = Monomial::new(0, -2);
    s.set(Comp::ChiN, GField::from_term(chi, sampler.periodic(&grid)));
    for a in 0..d {
        s.set(Comp::chi(a), GField::from_term(chi, sampler.periodic(&grid)));
    }
    Ok(())
}

/// Random degree-0 direction on `comps`. Odd slots are carried by two fresh
/// generators (tags `±1`) appended to the state's configuration.
pub fn random_direction(s: &mut State, sampler: &mut Sampler, comps: &[Comp], amplitude: f64) -> Result<Tangent> {
    let grid = s.grid.clone();
    direction_with(s, comps, |_| sampler.periodic(&grid).iter().map(|v| amplitude * v).collect())
}

/// Spatially constant degree-0 direction with random values in
/// `[−amplitude, amplitude]`.
pub fn constant_direction(s: &mut State, sampler: &mut Sampler, comps: &[Comp], amplitude: f64) -> Result<Tangent> {
    let len = s.len();
    direction_with(s, comps, |_| vec![sampler.uniform(-amplitude, amplitude); len])
}

fn direction_with(s: &mut State, comps: &[Comp], mut profile: impl FnMut(&Comp) -> Vec<f64>) -> Result<Tangent> {
    let mut plus = None;
    let mut minus = None;
    let mut out = Tangent::zero(s.len());
    for c in comps {
        let p = profile(c);
        let f = match c.grade() {
            0 => GField::from_real(p),
            -2 => GField::from_term(Monomial::new(0, -2), p),
            g => {
                let slot = if g == 1 { &mut plus } else { &mut minus };
                let k = match slot {
                    Some(k) => *k,
                    None => *slot.insert(s.alloc_generator(g)?),
                };
                GField::from_term(Monomial::new(1 << k, g), p)
            }
        };
        out.set(*c, f);
    }
    Ok(out)
}

pub struct RandomSmooth;

impl Preset for RandomSmooth {
    fn name(&self) -> &'static str {
        "random_smooth"
    }
    fn describe(&self) -> &'static str {
        "random low-mode perturbation of flat data (seed, amplitude, params: max_mode, smooth_normal; ghosts optional)"
    }
    fn build(&self, spec: &PresetSpec) -> Result<State> {
        let mut s = spec.empty_state()?;
        let mut sampler = Sampler::new(spec.seed);
        if spec.param("smooth_normal", 0.0) != 0.0 {
            sampler.normal = NormalProfile::Smooth;
        }
        sampler.max_mode = spec.param("max_mode", 2.0);
        randomize(&mut s, &mut sampler, spec.amplitude, spec.ghosts)?;
        Ok(s)
    }
}

/// Name → preset lookup.
pub struct PresetRegistry {
    entries: Vec<Box<dyn Preset>>,
}

impl Default for PresetRegistry {
    fn default() -> Self {
        PresetRegistry {
            entries: vec![
                Box::new(Flat),
                Box::new(Conformal2d),
                Box::new(SchwarzschildIsotropic),
                Box::new(Flrw),
                Box::new(RandomSmooth),
            ],
        }
    }
}

impl PresetRegistry {
    pub fn register(&mut self, p: Box<dyn Preset>) {
        self.entries.retain(|e| e.name() != p.name());
        self.entries.push(p);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Preset> {
        self.entries
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "preset", name: name.into() })
    }

    pub fn list(&self) -> Vec<(&'static str, &'static str)> {
        self.entries.iter().map(|p| (p.name(), p.describe())).collect()
    }

    pub fn build(&self, name: &str, spec: &PresetSpec) -> Result<State> {
        check_dimension(spec.d)?;
        let s = self.get(name)?.build(spec)?;
        s.check_grades()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_states_are_deterministic() {
        let spec = PresetSpec { seed: 42, amplitude: 0.05, ghosts: true, ..Default::default() };
        let r = PresetRegistry::default();
        let a = r.build("random_smooth", &spec).unwrap();
        let b = r.build("random_smooth", &spec).unwrap();
        for c in Comp::pre_boundary(2) {
            assert_eq!(a.get(c), b.get(c));
        }
        assert!(!a.get(Comp::XiN).is_zero());
    }

    #[test]
    fn d1_rejected() {
        let spec = PresetSpec { d: 1, ..Default::default() };
        assert!(matches!(PresetRegistry::default().build("flat", &spec), Err(Error::DimensionUnsupported(1))));
    }
}
