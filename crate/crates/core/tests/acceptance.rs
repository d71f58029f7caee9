//! Acceptance gate: one line per criterion.
//!
//! Runs at d = 2 on a 32² boundary grid with 9 normal layers, for both
//! signatures. Tolerances are the suite defaults and are pinned below; the
//! run fails if a pinned tolerance drifts or a criterion outside `KNOWN_RED`
//! fails.

use std::process::ExitCode;

use gr_bvbfv::adm::check_dimension;
use gr_bvbfv::presets::{PresetRegistry, PresetSpec};
use gr_bvbfv::verification::{run_check, run_suite, CheckReport, SuiteConfig, SuiteRegistry};
use gr_bvbfv::Error;

/// Criteria measured red; see the README.
const KNOWN_RED: &[usize] = &[7];

struct Criterion {
    id: usize,
    title: &'static str,
    checks: &'static [(&'static str, &'static str, f64)],
    seeds: usize,
    both_signs: bool,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "ADM rewriting", checks: &[("bulk", "bulk.ghy", 1e-5)], seeds: 5, both_signs: true },
    Criterion {
        id: 2,
        title: "classical kernel",
        checks: &[("classical", "classical.kernel", 1e-7)],
        seeds: 5,
        both_signs: true,
    },
    Criterion { id: 3, title: "BV kernel", checks: &[("boundary", "boundary.kernel", 1e-7)], seeds: 5, both_signs: true },
    Criterion {
        id: 4,
        title: "horizontality",
        checks: &[("classical", "classical.horizontal", 1e-7), ("boundary", "boundary.horizontal", 1e-7)],
        seeds: 5,
        both_signs: true,
    },
    Criterion {
        id: 5,
        title: "reduction invariance",
        checks: &[
            ("classical", "classical.flow_invariance", 1e-6),
            ("boundary", "boundary.flow_invariance", 1e-6),
            ("boundary", "boundary.darboux_pairing", 1e-12),
        ],
        seeds: 5,
        both_signs: true,
    },
    Criterion {
        id: 6,
        title: "pullback identities",
        checks: &[
            ("boundary", "boundary.pullback_alpha", 1e-7),
            ("boundary", "boundary.pullback_omega", 1e-7),
            ("boundary", "boundary.phi_sign_mutation", 1e-3),
        ],
        seeds: 5,
        both_signs: true,
    },
    Criterion {
        id: 7,
        title: "Euler contraction",
        checks: &[("boundary", "boundary.euler_contraction", 1e-6)],
        seeds: 20,
        both_signs: false,
    },
    Criterion {
        id: 8,
        title: "boundary cohomology",
        checks: &[
            ("boundary", "boundary.hamiltonian", 1e-6),
            ("boundary", "boundary.q_square", 1e-7),
            ("bv", "bv.q_square", 1e-8),
        ],
        seeds: 1,
        both_signs: false,
    },
    Criterion {
        id: 9,
        title: "constraints",
        checks: &[
            ("classical", "classical.constraint_extraction", 1e-9),
            ("classical", "classical.flat_constraints", 0.0),
            ("classical", "classical.schwarzschild", 1e-4),
            ("classical", "classical.momentum_factor", 1e-7),
        ],
        seeds: 5,
        both_signs: true,
    },
    Criterion {
        id: 10,
        title: "fundamental formula",
        checks: &[
            ("bulk", "bulk.fundamental_interior", 1e-5),
            ("bulk", "bulk.fundamental_antifield", 1e-5),
            ("bulk", "bulk.fundamental_classical", 1e-5),
        ],
        seeds: 2,
        both_signs: true,
    },
    Criterion {
        id: 11,
        title: "antighost linearity",
        checks: &[("boundary", "boundary.antighost_linearity", 0.0)],
        seeds: 5,
        both_signs: true,
    },
];

/// d = 1 must be refused by the geometry, the presets and the suites.
fn dimension_guard() -> Result<(), String> {
    if !matches!(check_dimension(1), Err(Error::DimensionUnsupported(1))) {
        return Err("check_dimension(1) accepted".into());
    }
    let spec = PresetSpec { d: 1, n: 32, ..Default::default() };
    if !matches!(PresetRegistry::default().build("random_smooth", &spec), Err(Error::DimensionUnsupported(1))) {
        return Err("d = 1 preset accepted".into());
    }
    let recs = run_suite(&SuiteConfig { d: 1, ..Default::default() });
    if recs.len() != 1 || recs[0].pass {
        return Err("d = 1 suite did not fail".into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let registry = SuiteRegistry::default();
    let mut unexpected = Vec::new();
    for crit in CRITERIA {
        let mut records: Vec<CheckReport> = Vec::new();
        let signs: &[f64] = if crit.both_signs { &[1.0, -1.0] } else { &[1.0] };
        let mut drift = None;
        for &eps in signs {
            let cfg = SuiteConfig { eps, seeds: (0..crit.seeds as u64).collect(), ..Default::default() };
            for (suite, tag, tol) in crit.checks {
                let rec = run_check(&registry, suite, tag, &cfg);
                if rec.residual.is_finite() && rec.tol != *tol {
                    drift = Some(format!("{tag}: tolerance {} not pinned {tol}", rec.tol));
                }
                records.push(rec);
            }
        }
        let mut pass = records.iter().all(|r| r.pass) && drift.is_none();
        let mut extra = String::new();
        if crit.id == 2 {
            if let Err(e) = dimension_guard() {
                pass = false;
                extra = format!("; d=1 guard: {e}");
            } else {
                extra = "; d=1 guard ok".into();
            }
        }
        let worst: Vec<String> = crit
            .checks
            .iter()
            .map(|(_, tag, _)| {
                let rs: Vec<&CheckReport> = records.iter().filter(|r| r.tag == *tag).collect();
                let ok = rs.iter().all(|r| r.pass);
                let res = rs.iter().map(|r| r.residual).fold(0.0f64, |a, b| if b.is_nan() { b } else { a.max(b) });
                let note = rs.iter().find(|r| !r.note.is_empty()).map(|r| format!(" [{}]", r.note)).unwrap_or_default();
                format!("{tag} {res:.2e}{}{note}", if ok { "" } else { " FAIL" })
            })
            .collect();
        let secs: f64 = records.iter().map(|r| r.seconds).sum();
        println!(
            "criterion {:>2} {:<22} {}  {}{}{}  ({secs:.1}s)",
            crit.id,
            crit.title,
            if pass { "PASS" } else { "FAIL" },
            worst.join("; "),
            extra,
            drift.map(|d| format!("; {d}")).unwrap_or_default(),
        );
        if !pass && !KNOWN_RED.contains(&crit.id) {
            unexpected.push(crit.id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
