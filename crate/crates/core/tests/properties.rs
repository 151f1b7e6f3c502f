//! Property checks of the solvers on randomized inputs.

mod support;

use proptest::prelude::*;
use zener_core::assembly::{EllipticProjector, FeSpace, NoLoads, Scheme};
use zener_core::cg::{scaled_residual, CgSolver, Startup, TimeGrid};
use zener_core::dg::PenaltyMode;
use zener_core::materials::{Lame, Material, MaterialTable};
use zener_core::verification::{rates, run_level, DtPolicy, EnergyTrace, ManufacturedCase, StudyConfig, ENERGY_TOLERANCE};

use support::*;

fn materials(rho: f64, omega: f64, stiff: f64) -> MaterialTable<f64> {
    let mut m = std::collections::BTreeMap::new();
    m.insert(1, Material::elastic(rho, Lame::new(stiff, stiff)));
    m.insert(2, Material { rho, omega, c: Lame::new(1.0, 0.5), d: Lame::new(2.0 * stiff, stiff) });
    MaterialTable::new(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Trapezoidal stepping stays bounded for steps far above any CFL limit.
    #[test]
    fn cg_is_unconditionally_stable(ratio in prop::sample::select(vec![1.0, 10.0]), rho in 0.5f64..2.0, omega in 0.1f64..2.0, stiff in 1.0f64..4.0) {
        let table = materials(rho, omega, stiff);
        let space = FeSpace::new(square(4), table.clone(), 1).unwrap();
        let h = space.mesh().meshsize();
        let dt = ratio * h;
        let steps = 40;
        let case = ManufacturedCase::reference(table);
        let (p0, p1, p2) = (case.pair(0.3, 0), case.pair(0.3, 1), case.pair(0.3, 2));
        let start = Startup { p0: &p0, p1: &p1, p_ddot0: &p2 };
        let solver = CgSolver::new(&space, TimeGrid::new(dt * steps as f64, steps).unwrap()).unwrap();
        let mut trace = EnergyTrace::default();
        let mut sym: f64 = 0.0;
        let skew = &solver.forms().skew;
        solver.run(&start, &NoLoads, |s| {
            trace.push(solver.energy(s));
            sym = sym.max(scaled_residual(skew, &s.p_curr));
        }).unwrap();
        prop_assert!(trace.values.iter().all(|e| e.is_finite()));
        prop_assert!(trace.increases(ENERGY_TOLERANCE).is_empty(), "max increase {}", trace.max_relative_increase());
        prop_assert!(sym <= 1e-9);
    }

    /// The projector returns conforming, weakly symmetric pairs and is idempotent.
    #[test]
    fn projector_properties(seed in any::<u64>(), k in 1usize..=2) {
        let space = FeSpace::new(square(2), MaterialTable::reference_composite(), k).unwrap();
        let proj = EllipticProjector::new(&space).unwrap();
        let field = SmoothPair::symmetric(&mut rng(seed), space.materials());
        let p = proj.project(&field).pair;
        let forms = zener_core::assembly::AssembledForms::new(&space);
        prop_assert!(scaled_residual(&forms.skew, &p) <= 1e-11);
        prop_assert!(scaled_residual(&forms.trace, &p) <= 1e-11);
        let again = proj.project(&DiscretePair { space: &space, coeffs: &p }).pair;
        prop_assert!((&again - &p).amax() <= 1e-10 * p.amax());
    }

    /// Rates are exact on geometric error sequences and depend only on the data.
    #[test]
    fn rate_extraction(e0 in 1e-6f64..1e3, order in 0.5f64..4.0, n in 2usize..6) {
        let errors: Vec<f64> = (0..n).map(|l| e0 * 2f64.powf(-order * l as f64)).collect();
        let r = rates(&errors);
        prop_assert_eq!(&r, &rates(&errors));
        prop_assert!(r[0].is_none());
        for v in &r[1..] {
            prop_assert!((v.unwrap() - order).abs() < 1e-9);
        }
    }
}

/// Doubling the penalty beyond the automatic value barely moves the error.
#[test]
fn penalty_sensitivity() {
    let case = ManufacturedCase::reference(MaterialTable::reference_composite());
    let mut cfg = StudyConfig::new(Scheme::Dg, 1, 1, square(8));
    cfg.dt = DtPolicy::CflFraction { fraction: 0.5 };
    let auto = run_level(&cfg, &case, square(8), 0).unwrap();
    cfg.penalty_mode = PenaltyMode::Fixed;
    cfg.penalty = Some(2.0 * auto.penalty.unwrap());
    let doubled = run_level(&cfg, &case, square(8), 0).unwrap();
    let change = (doubled.stress.total - auto.stress.total).abs() / auto.stress.total;
    assert!(change < 0.2, "auto {:e}, doubled {:e}", auto.stress.total, doubled.stress.total);
}
