//! Scenario files (JSON) and binary field archives.
//!
//! Archive layout, all little-endian:
//!
//! ```text
//! magic "BVFA" | version u32
//! d u32 | n u32 | layers u32 | h_n f64 | kind u8 | tangential str | normal str
//! eps f64 | lambda f64
//! generators u32 | tag i32 × generators
//! fields u32, then per field:
//!   name str | grade i32 | terms u32, then per term:
//!     indices u8 + u8 × indices | ghost i32 | values f64 × len
//! ```
//!
//! `str` is a `u16` byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adm::check_dimension;
use crate::error::{Error, Result};
use crate::graded::{GrassmannConfig, Monomial};
use crate::grid::{GField, Grid, SchemeRegistry};
use crate::presets::{PresetRegistry, PresetSpec};
use crate::state::{Comp, State};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"BVFA";
pub const ARCHIVE_VERSION: u32 = 1;

fn default_n() -> usize {
    32
}
fn default_layers() -> usize {
    1
}
fn default_h_n() -> f64 {
    0.05
}
fn default_eps() -> f64 {
    1.0
}
fn default_generators() -> usize {
    8
}

/// A run description: grid, signature and either a preset or an archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub d: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_h_n")]
    pub h_n: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Relative paths resolve against the scenario file.
    #[serde(default)]
    pub archive: Option<PathBuf>,
    #[serde(default = "default_generators")]
    pub generators: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub ghosts: bool,
    #[serde(default)]
    pub closed: bool,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        check_dimension(self.d)?;
        if self.d > 3 {
            return Err(Error::DimensionUnsupported(self.d));
        }
        match (&self.preset, &self.archive) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(Error::Schema("exactly one of `preset` and `archive` is required".into())),
        }
        if self.eps != 1.0 && self.eps != -1.0 {
            return Err(Error::Schema(format!("eps must be ±1, got {}", self.eps)));
        }
        Ok(())
    }

    pub fn preset_spec(&self) -> PresetSpec {
        let base = PresetSpec::default();
        PresetSpec {
            d: self.d,
            n: self.n,
            layers: self.layers,
            h_n: self.h_n,
            eps: self.eps,
            lambda: self.lambda,
            generators: self.generators,
            seed: self.seed,
            amplitude: self.amplitude.unwrap_or(base.amplitude),
            ghosts: self.ghosts,
            closed: self.closed,
            params: self.params.clone(),
        }
    }

    /// Builds the state; `base` is the directory relative archive paths
    /// resolve against.
    pub fn instantiate(&self, base: &Path) -> Result<State> {
        self.validate()?;
        if let Some(name) = &self.preset {
            return PresetRegistry::default().build(name, &self.preset_spec());
        }
        let path = self.archive.as_ref().expect("validated");
        let path = if path.is_relative() { base.join(path) } else { path.clone() };
        let s = read_archive(&path)?;
        if s.d() != self.d {
            return Err(Error::Schema(format!("archive has d = {}, scenario says {}", s.d(), self.d)));
        }
        Ok(s)
    }
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, State)> {
    let text = fs::read_to_string(path)?;
    let sc = Scenario::from_json(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let s = sc.instantiate(base)?;
    Ok((sc, s))
}

// ---------------------------------------------------------------------------
// archives

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum GridKind {
    Boundary = 0,
    Bulk = 1,
    Patch = 2,
    Closed = 3,
}

fn grid_kind(g: &Grid) -> GridKind {
    if g.is_closed() {
        GridKind::Closed
    } else if g.is_bulk() {
        GridKind::Bulk
    } else if g.is_periodic() {
        GridKind::Boundary
    } else {
        GridKind::Patch
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.buf.len() {
            return Err(Error::Schema(format!("archive truncated at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let k = self.u16()? as usize;
        String::from_utf8(self.take(k)?.to_vec()).map_err(|e| Error::Schema(e.to_string()))
    }
}

pub fn encode_archive(s: &State) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(ARCHIVE_MAGIC);
    w.u32(ARCHIVE_VERSION);
    let g = &s.grid;
    w.u32(g.d() as u32);
    w.u32(g.n() as u32);
    w.u32(g.layers() as u32);
    w.f64(g.h_n());
    w.u8(grid_kind(g) as u8);
    let (tan, nor) = g.scheme_names();
    w.str(tan);
    w.str(nor);
    w.f64(s.eps);
    w.f64(s.lambda);
    w.u32(s.config.num_generators() as u32);
    for t in s.config.tags() {
        w.i32(*t);
    }
    let fields: Vec<(&Comp, &GField)> = s.comps().filter(|(_, f)| !f.is_zero()).collect();
    w.u32(fields.len() as u32);
    for (c, f) in fields {
        w.str(&c.name());
        w.i32(c.grade());
        w.u32(f.num_terms() as u32);
        for (m, vals) in f.terms() {
            let idx = m.indices();
            w.u8(idx.len() as u8);
            for k in idx {
                w.u8(k as u8);
            }
            w.i32(m.ghost);
            for v in vals {
                w.f64(*v);
            }
        }
    }
    w.0
}

fn comp_by_name(name: &str, d: usize) -> Result<Comp> {
    Comp::pre_boundary(d)
        .into_iter()
        .chain(Comp::darboux(d))
        .find(|c| c.name() == name)
        .ok_or_else(|| Error::Schema(format!("unknown field `{name}` for d = {d}")))
}

pub fn decode_archive(buf: &[u8]) -> Result<State> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != ARCHIVE_MAGIC {
        return Err(Error::Schema("not a field archive".into()));
    }
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Schema(format!("archive version {version}, expected {ARCHIVE_VERSION}")));
    }
    let d = r.u32()? as usize;
    check_dimension(d)?;
    let n = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let h_n = r.f64()?;
    let kind = r.u8()?;
    let tan = r.str()?;
    let nor = r.str()?;
    let base = match kind {
        0 => Grid::periodic(d, n)?,
        1 => Grid::bulk(d, n, layers, h_n)?,
        2 => Grid::patch(d, n)?,
        3 => Grid::closed(d, n)?,
        k => return Err(Error::Schema(format!("unknown grid kind {k}"))),
    };
    let reg = SchemeRegistry::default();
    let mut grid = base;
    if grid.scheme_names().0 != tan {
        grid = grid.with_tangential(reg.get(&tan)?)?;
    }
    if grid.scheme_names().1 != nor {
        grid = grid.with_normal(reg.get(&nor)?)?;
    }
    if grid.layers() != layers || grid.h_n() != h_n {
        return Err(Error::Schema("grid header inconsistent".into()));
    }
    let eps = r.f64()?;
    let lambda = r.f64()?;
    let ngen = r.u32()? as usize;
    let tags = (0..ngen).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
    let config = Arc::new(GrassmannConfig::new(tags)?);
    let len = grid.len();
    let mut s = State::new(grid, config.clone(), eps, lambda);
    let nfields = r.u32()?;
    for _ in 0..nfields {
        let name = r.str()?;
        let c = comp_by_name(&name, d)?;
        let grade = r.i32()?;
        if grade != c.grade() {
            return Err(Error::Schema(format!("field `{name}` stored with grade {grade}, expected {}", c.grade())));
        }
        let nterms = r.u32()?;
        let mut f = GField::zero(len);
        for _ in 0..nterms {
            let k = r.u8()? as usize;
            let mut mask = 0u64;
            for _ in 0..k {
                let i = r.u8()? as usize;
                if i >= ngen {
                    return Err(Error::GeneratorOutOfRange(i));
                }
                mask |= 1 << i;
            }
            let m = Monomial::new(mask, r.i32()?);
            if !m.is_consistent() {
                return Err(Error::Schema(format!("field `{name}`: ghost tag {} has the wrong parity", m.ghost)));
            }
            let vals = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            f.add_term(m, vals);
        }
        if !f.ghost_grade().admits(grade) {
            return Err(Error::Schema(format!("field `{name}` payload has ghost grade {}", f.ghost_grade())));
        }
        s.set(c, f);
    }
    if r.pos != buf.len() {
        return Err(Error::Schema("trailing bytes after archive".into()));
    }
    Ok(s)
}

pub fn write_archive(path: &Path, s: &State) -> Result<()> {
    fs::write(path, encode_archive(s))?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<State> {
    decode_archive(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(ghosts: bool, layers: usize) -> State {
        let spec = PresetSpec { d: 2, n: 8, layers, seed: 4, ghosts, amplitude: 0.1, ..Default::default() };
        PresetRegistry::default().build("random_smooth", &spec).unwrap()
    }

    #[test]
    fn archive_round_trip_is_byte_identical() {
        for s in [random(true, 1), random(true, 9), random(false, 1)] {
            let bytes = encode_archive(&s);
            let back = decode_archive(&bytes).unwrap();
            assert_eq!(encode_archive(&back), bytes);
            assert_eq!(*back.grid, *s.grid);
            for (c, f) in s.comps() {
                assert_eq!(&back.get(*c), f);
            }
        }
    }

    #[test]
    fn archive_rejects_damage() {
        let bytes = encode_archive(&random(true, 1));
        assert!(decode_archive(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_archive(&bad), Err(Error::Schema(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_archive(&extra).is_err());
    }

    #[test]
    fn scenario_needs_exactly_one_source() {
        assert!(Scenario::from_json(r#"{"d": 2, "preset": "flat"}"#).is_ok());
        assert!(matches!(Scenario::from_json(r#"{"d": 2}"#), Err(Error::Schema(_))));
        assert!(matches!(
            Scenario::from_json(r#"{"d": 2, "preset": "flat", "archive": "x.arch"}"#),
            Err(Error::Schema(_))
        ));
        assert!(matches!(Scenario::from_json(r#"{"d": 1, "preset": "flat"}"#), Err(Error::DimensionUnsupported(1))));
        assert!(matches!(Scenario::from_json(r#"{"d": 2, "preset": "flat", "bogus": 1}"#), Err(Error::Schema(_))));
    }

    #[test]
    fn scenarios_are_deterministic() {
        let sc = Scenario::from_json(r#"{"d": 2, "n": 8, "preset": "random_smooth", "seed": 42, "amplitude": 0.05}"#)
            .unwrap();
        let a = sc.instantiate(Path::new(".")).unwrap();
        let b = sc.instantiate(Path::new(".")).unwrap();
        assert_eq!(encode_archive(&a), encode_archive(&b));
    }

    #[test]
    fn flat_3d_has_no_ghosts() {
        let sc = Scenario::from_json(r#"{"d": 3, "n": 16, "preset": "flat"}"#).unwrap();
        let s = sc.instantiate(Path::new(".")).unwrap();
        assert!(s.comps().all(|(c, f)| c.grade() == 0 || f.is_zero()));
    }
}
