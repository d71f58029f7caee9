use std::sync::Arc;

use proptest::prelude::*;

use gr_bvbfv::boundary;
use gr_bvbfv::bv;
use gr_bvbfv::graded::{Grade, GradedScalar, GrassmannConfig, Monomial};
use gr_bvbfv::grid::{GField, Grid};
use gr_bvbfv::presets::{constant_direction, PresetRegistry, PresetSpec, Sampler};
use gr_bvbfv::state::Comp;

const GENS: usize = 6;

fn cfg() -> Arc<GrassmannConfig> {
    Arc::new(GrassmannConfig::uniform(GENS, 1).unwrap())
}

// small integer coefficients keep every product exact in f64
fn scalar() -> impl Strategy<Value = GradedScalar> {
    prop::collection::vec((0u64..(1 << GENS), -4i32..=4), 0..6).prop_map(|terms| {
        let mut s = GradedScalar::zero(cfg());
        for (mask, c) in terms {
            s.add_term(Monomial::new(mask, mask.count_ones() as i32), c as f64);
        }
        s
    })
}

fn homogeneous(parity: u32) -> impl Strategy<Value = GradedScalar> {
    scalar().prop_map(move |s| {
        let mut out = GradedScalar::zero(cfg());
        for (m, c) in s.terms() {
            if m.parity() == parity {
                out.add_term(*m, *c);
            }
        }
        out
    })
}

proptest! {
    #[test]
    fn product_is_associative(a in scalar(), b in scalar(), c in scalar()) {
        let l = a.mul(&b).unwrap().mul(&c).unwrap();
        let r = a.mul(&b.mul(&c).unwrap()).unwrap();
        prop_assert_eq!(l, r);
    }

    #[test]
    fn product_is_graded_commutative(
        (pa, pb, a, b) in (0u32..2, 0u32..2).prop_flat_map(|(pa, pb)| (Just(pa), Just(pb), homogeneous(pa), homogeneous(pb)))
    ) {
        let sign = if pa * pb == 1 { -1.0 } else { 1.0 };
        prop_assert_eq!(a.mul(&b).unwrap(), b.mul(&a).unwrap().scale(sign));
    }

    #[test]
    fn left_derivative_is_graded_leibniz(
        (pa, a) in (0u32..2).prop_flat_map(|p| (Just(p), homogeneous(p))),
        b in scalar(),
        k in 0usize..GENS,
    ) {
        let lhs = a.mul(&b).unwrap().left_derive(k);
        let sign = if pa == 1 { -1.0 } else { 1.0 };
        let rhs = a.left_derive(k).mul(&b).unwrap().add(&a.mul(&b.left_derive(k)).unwrap().scale(sign)).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn left_derivative_is_nilpotent(a in scalar(), k in 0usize..GENS) {
        prop_assert!(a.left_derive(k).left_derive(k).is_zero());
    }

    #[test]
    fn ghost_grade_adds_under_products(ma in 0u64..(1 << GENS), mb in 0u64..(1 << GENS)) {
        let a = GradedScalar::term(cfg(), Monomial::new(ma, ma.count_ones() as i32), 1.0);
        let b = GradedScalar::term(cfg(), Monomial::new(mb, mb.count_ones() as i32), 1.0);
        let p = a.mul(&b).unwrap();
        if ma & mb != 0 {
            prop_assert!(p.is_zero());
        } else {
            prop_assert_eq!(p.ghost_grade(), Grade::Pure((ma | mb).count_ones() as i32));
        }
    }

    #[test]
    fn spectral_derivative_of_constants_is_zero(c in -10.0f64..10.0, n in 8usize..20) {
        let g = Grid::periodic(2, n).unwrap();
        let f = GField::constant(g.len(), c);
        for axis in 0..2 {
            prop_assert_eq!(g.deriv(&f, axis).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn spectral_derivative_is_exact_below_nyquist(k in 1i32..6, phase in 0.0f64..6.3) {
        let g = Grid::periodic(2, 16).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let f = g.sample(|x, _| (tau * k as f64 * x[0] + phase).sin());
        let df = g.deriv_real(&f, 0).unwrap();
        let exact = g.sample(|x, _| tau * k as f64 * (tau * k as f64 * x[0] + phase).cos());
        let err = df.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10 * (k * k) as f64, "err {}", err);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn omega_tilde_is_antisymmetric(seed in 0u64..1000) {
        let spec = PresetSpec { d: 2, n: 8, seed, ghosts: false, amplitude: 0.1, ..Default::default() };
        let mut s = PresetRegistry::default().build("random_smooth", &spec).unwrap();
        let mut sm = Sampler::new(seed);
        let comps = Comp::classical(2);
        let x = constant_direction(&mut s, &mut sm, &comps, 1.0).unwrap();
        let y = constant_direction(&mut s, &mut sm, &comps, 1.0).unwrap();
        let xy = boundary::omega_tilde(&boundary::alpha_tilde_classical, &s, &x, &y).unwrap();
        let yx = boundary::omega_tilde(&boundary::alpha_tilde_classical, &s, &y, &x).unwrap();
        prop_assert!(xy.add(&yx).unwrap().max_abs() <= 1e-14 * (1.0 + xy.max_abs()));
    }

    #[test]
    fn q_raises_ghost_number_by_one(seed in 0u64..1000) {
        let spec = PresetSpec { d: 2, n: 8, seed, ghosts: true, closed: true, amplitude: 0.1, ..Default::default() };
        let s = PresetRegistry::default().build("random_smooth", &spec).unwrap();
        let q = bv::apply_q_bulk(&s).unwrap();
        for (c, f) in q.comps() {
            prop_assert!(f.ghost_grade().admits(c.grade() + 1), "{:?}: {}", c, f.ghost_grade());
        }
    }

    #[test]
    fn boundary_action_has_ghost_number_one(seed in 0u64..1000, eps in prop::sample::select(vec![1.0, -1.0])) {
        let spec = PresetSpec { d: 2, n: 8, seed, eps, ghosts: true, amplitude: 0.1, ..Default::default() };
        let s = PresetRegistry::default().build("random_smooth", &spec).unwrap();
        let sb = boundary::boundary_action(&boundary::reduce_bv(&s).unwrap()).unwrap();
        prop_assert_eq!(sb.ghost_grade(), Grade::Pure(1));
    }
}
