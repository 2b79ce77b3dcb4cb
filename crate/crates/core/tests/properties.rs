use maxdual_core::czsparse::{adjoint_sparse_operator, cz_decompose, sparse_from_maximal, sparse_operator, CzVariant};
use maxdual_core::duallab::{compute_tq_bq, CubeProfile, LemmaConstants, SpaceSpec};
use maxdual_core::lattice::{build_shifted_grids, cover_cube, Cube, Lattice, LatticeFunction, Rect, ShiftedGrid};
use maxdual_core::maximal::{maximal, MaximalKind};
use maxdual_core::rng::{random_support_function, stream};
use maxdual_core::suite::random_exponent;
use maxdual_core::varlp::{luxemburg_norm, modular_norm_bounds, ExponentField, WeightField};
use maxdual_core::weights::{ap_constant, reverse_holder_probe, rubio_de_francia, CubeFamily, CubeFamilySpec};
use proptest::prelude::*;

fn func(n: usize, m: u32, seed: u64) -> LatticeFunction {
    random_support_function(Lattice::new(n, m).unwrap(), &mut stream(seed, "prop"))
}

fn kinds(n: usize) -> Vec<MaximalKind> {
    let mut k = vec![MaximalKind::Full, MaximalKind::LocalDyadic(Cube::new(n, [0.0, 0.0], 1.0))];
    k.extend(build_shifted_grids(n).unwrap().into_iter().map(MaximalKind::Grid));
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_homogeneous(seed in any::<u64>(), lambda in -50.0..50.0f64, n in 1usize..=2) {
        let lat = Lattice::new(n, 4).unwrap();
        let p = random_exponent(lat, &mut stream(seed, "p")).unwrap();
        let f = func(n, 4, seed);
        let a = luxemburg_norm(&f.scale(lambda).unwrap(), &p).unwrap();
        let b = lambda.abs() * luxemburg_norm(&f, &p).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * b.max(1e-300));
    }

    #[test]
    fn modular_chain_holds(seed in any::<u64>(), scale_exp in -3.0..3.0f64) {
        let lat = Lattice::new(1, 6).unwrap();
        let p = random_exponent(lat, &mut stream(seed, "p")).unwrap();
        let f = func(1, 6, seed).scale(10f64.powf(scale_exp)).unwrap();
        if f.is_zero() { return Ok(()); }
        let b = modular_norm_bounds(&f, &p, None).unwrap();
        prop_assert!(b.holds(1e-9), "{b:?}");
    }

    #[test]
    fn maximal_dominates_and_is_sublinear(seed in any::<u64>(), lambda in -5.0..5.0f64, n in 1usize..=2) {
        let m = if n == 1 { 6 } else { 3 };
        let f = func(n, m, seed);
        let g = func(n, m, seed ^ 0x9e37);
        let fg = f.zip_map(&g, |a, b| a + b).unwrap();
        for kind in kinds(n) {
            let mf = maximal(&f, &kind).unwrap();
            let mg = maximal(&g, &kind).unwrap();
            let mfg = maximal(&fg, &kind).unwrap();
            let ml = maximal(&f.scale(lambda).unwrap(), &kind).unwrap();
            for i in 0..f.values().len() {
                let (a, b, s) = (mf.values()[i], mg.values()[i], mfg.values()[i]);
                prop_assert!(s <= (a + b) * (1.0 + 1e-12) + 1e-300);
                prop_assert!((ml.values()[i] - lambda.abs() * a).abs() <= 1e-12 * a.max(1.0));
                if matches!(kind, MaximalKind::Full) {
                    prop_assert!(a >= f.values()[i].abs());
                }
            }
        }
    }

    #[test]
    fn covering_cube_contains_and_is_small(x in -1.0..1.99f64, y in -1.0..1.99f64, e in 0.0..12.0f64, n in 1usize..=2) {
        let side = (-e).exp2().min(2.0 - x.max(y));
        let q = Cube::new(n, [x, y], side);
        let (_, c) = cover_cube(&q);
        let (qr, cr) = (q.rect(), c.rect());
        for a in 0..n {
            prop_assert!(cr.lo[a] <= qr.lo[a] + 1e-12 && qr.hi[a] <= cr.hi[a] + 1e-12);
        }
        prop_assert!(c.volume() <= 6f64.powi(n as i32) * q.volume() * (1.0 + 1e-12));
    }

    #[test]
    fn stopping_time_decay(seed in any::<u64>(), g in 0usize..3, wide in any::<bool>()) {
        let f = func(1, 7, seed);
        let grid = build_shifted_grids(1).unwrap()[g];
        let gamma = if wide { 4.0 } else { 2.0 };
        let cz = cz_decompose(&f, grid, gamma, CzVariant::Global).unwrap();
        prop_assert_eq!(cz.check_decay(6).violations(), 0);
        prop_assert_eq!(cz.check_selection().violations(), 0);
    }

    #[test]
    fn sparse_family_is_sparse_and_adjoint(seed in any::<u64>(), eta in 0.1..0.9f64, n in 1usize..=2) {
        let m = if n == 1 { 6 } else { 3 };
        let grid = ShiftedGrid::standard(n);
        let (fam, rep) = sparse_from_maximal(&func(n, m, seed), grid, eta).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.failures());
        let f = func(n, m, seed.wrapping_add(1));
        let g = func(n, m, seed.wrapping_add(2));
        let lhs = sparse_operator(&fam, &f).unwrap().zip_map(&g, |a, b| a * b).unwrap().integral();
        let rhs = f.zip_map(&adjoint_sparse_operator(&fam, &g).unwrap(), |a, b| a * b).unwrap().integral();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn rubio_de_francia_majorizes(seed in any::<u64>(), a in 1.5..4.0f64) {
        let g = func(1, 6, seed).abs();
        let r = rubio_de_francia(&g, &MaximalKind::Grid(ShiftedGrid::standard(1)), a, 8).unwrap();
        prop_assert!(r.rg.values().iter().zip(g.values()).all(|(x, y)| x >= y));
    }

    #[test]
    fn weight_constants_are_at_least_one(alpha in -0.9..2.0f64, p in 1.2..4.0f64) {
        let lat = Lattice::new(1, 6).unwrap();
        let v = LatticeFunction::from_fn(lat, |x| (x[0] - 0.5).abs().powf(alpha)).unwrap();
        let fam = CubeFamily::build(CubeFamilySpec::AllLatticeAligned { m: 5 }, 1).unwrap();
        prop_assert!(ap_constant(&v, p, &fam).unwrap().value >= 1.0 - 1e-12);
        let rh = reverse_holder_probe(&v, &fam, &[1.0, 1.5, 2.0, 3.0]).unwrap();
        prop_assert!(rh.passed(), "{:?}", rh.failures());
        prop_assert!((rh.metrics["c(1)"] - 1.0).abs() <= 1e-12);
    }

    /// Wherever the premise `G(t_max) <= 1` holds, a positive `t_Q` is a
    /// crossing strictly inside the modular unit ball.
    #[test]
    fn truncation_certificates(a in 0.1..2.0f64, k in 1.01..3.0f64, lo in 0.0..0.5f64, side in 0.1..0.5f64) {
        let lat = Lattice::new(1, 7).unwrap();
        let sp = SpaceSpec::new(
            ExponentField::from_fn(lat, |x| 2.0 + a * x[0].clamp(0.0, 1.0)).unwrap(),
            WeightField::from_fn(lat, |x| 1.0 + x[0].abs()).unwrap(),
        ).unwrap();
        let c = LemmaConstants::from_parts(1.25, 2.0, 1.5, 2.0, sp.p.p_minus(), sp.p.p_plus()).unwrap().with_k(k);
        let prof = CubeProfile::new(&sp, Rect::interval(lo, lo + side)).unwrap();
        let tb = compute_tq_bq(&prof, &c).unwrap();
        if tb.t_q > 0.0 && prof.rh_mass(tb.t_max, c.r) <= c.k {
            prop_assert!(tb.modular_at_tq < 1.0);
            prop_assert!(tb.qleft_residual <= 1e-6);
        }
        prop_assert!(tb.t_q <= tb.t_max * (1.0 + 1e-12));
    }
}
