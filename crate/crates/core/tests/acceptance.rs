//! Acceptance criteria. Each test prints one PASS/FAIL line to stderr.

mod support;

use std::sync::OnceLock;

use zener_core::assembly::{EllipticProjector, FeSpace, NoLoads, PairField, Scheme};
use zener_core::cg::{scaled_residual, CgSolver, CgState, Startup, TimeGrid};
use zener_core::dg::{choose_penalty, DgOperators, DgSolver, PenaltyMode};
use zener_core::fem_basis::{eval_tensor, eval_tensor_div, l2_project_vector, make_quadrature, BdmInterpolator, ScalarBasis};
use zener_core::materials::MaterialTable;
use zener_core::mesh::{refine_uniform, Mesh};
use zener_core::scalar::{Point, Tensor};
use zener_core::verification::{
    convergence_study, inf_sup_constant, mesh_hierarchy, run_level, temporal_richardson, DtPolicy,
    EnergyTrace, ErrorReport, ManufacturedCase, StartupPairs, StudyConfig, ENERGY_TOLERANCE,
};

use support::*;

const RATE_SLACK: f64 = 0.15;

fn case() -> &'static ManufacturedCase<f64> {
    static CASE: OnceLock<ManufacturedCase<f64>> = OnceLock::new();
    CASE.get_or_init(|| ManufacturedCase::reference(MaterialTable::reference_composite()))
}

fn study_config(scheme: Scheme, k: usize) -> StudyConfig<f64> {
    StudyConfig::new(scheme, k, 4, square(4))
}

/// Composite studies on h = 1/4, …, 1/32, computed once and shared.
fn study(scheme: Scheme, k: usize) -> &'static ErrorReport {
    static CELLS: [OnceLock<ErrorReport>; 4] = [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];
    let slot = match scheme {
        Scheme::Cg => 0,
        Scheme::Dg => 2,
    } + (k - 1);
    CELLS[slot].get_or_init(|| convergence_study(&study_config(scheme, k), case()).expect("study runs"))
}

fn rate_line(report: &ErrorReport, f: impl Fn(&zener_core::verification::ReportRow) -> f64) -> (f64, String) {
    let rates: Vec<String> = report.rates_of(&f).iter().flatten().map(|r| format!("{r:.3}")).collect();
    let last = report.final_rate(f).unwrap_or(f64::NAN);
    (last, rates.join(", "))
}

#[test]
fn c01_cg_spatial_convergence() {
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1, 2] {
        let rep = study(Scheme::Cg, k);
        let (rate, all) = rate_line(rep, |r| r.stress.total);
        let ok_rate = rate >= k as f64 - RATE_SLACK;
        let finest = rep.rows.last().unwrap();
        let mut cfg = study_config(Scheme::Cg, k);
        cfg.dt = DtPolicy::Fixed { dt: finest.dt / 2.0 };
        let base = mesh_hierarchy(&cfg.base, cfg.levels).pop().unwrap();
        let halved = run_level(&cfg, case(), base, finest.level).unwrap();
        let change = (halved.stress.total - finest.stress.total).abs() / finest.stress.total;
        let ok_dt = change < 0.05;
        pass &= ok_rate && ok_dt;
        detail.push(format!("k={k}: rates [{all}] (need >= {:.2}), dt-halving change {:.1e} (need < 5e-2)", k as f64 - RATE_SLACK, change));
    }
    verdict(1, "CG spatial convergence in the S norm", pass, &detail.join("; "));
    assert!(pass, "{detail:?}");
}

#[test]
fn c02_dg_spatial_convergence() {
    let mut pass = true;
    let mut detail = Vec::new();
    for k in [1, 2] {
        let rep = study(Scheme::Dg, k);
        let (rate, all) = rate_line(rep, |r| r.stress.total);
        let (jrate, jall) = rate_line(rep, |r| r.jump.total);
        let need = k as f64 - RATE_SLACK;
        let ok = rate >= need && jrate >= need;
        pass &= ok;
        detail.push(format!("k={k}: S(h) rates [{all}], jump rates [{jall}] (need >= {need:.2})"));
    }
    verdict(2, "DG spatial convergence in the S(h) norm", pass, &detail.join("; "));
    assert!(pass, "{detail:?}");
}

#[test]
fn c03_temporal_order() {
    let space = FeSpace::new(square(16), case().materials().clone(), 1).unwrap();
    let rep = temporal_richardson(&space, case(), 1.0, 40, 3).unwrap();
    let pass = (1.7..=2.3).contains(&rep.slope);
    let detail = format!("steps {:?}, differences {:.3e} {:.3e}, slope {:.3} (need [1.7, 2.3])", rep.steps, rep.differences[0], rep.differences[1], rep.slope);
    verdict(3, "second order in time (Richardson)", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c04_commuting_diagram() {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in [1, 2] {
        let mesh = square(3);
        let space = FeSpace::new(mesh, MaterialTable::reference_composite(), k).unwrap();
        let proj = EllipticProjector::new(&space).unwrap();
        let dm = space.dofmap();
        let rule = space.volume_rule();
        for _ in 0..25 {
            let field = SmoothPair::symmetric(&mut r, space.materials());
            let out = proj.project(&field);
            count += 1;
            let mut err: f64 = 0.0;
            let mut scale: f64 = 0.0;
            for e in 0..dm.num_elements() {
                let geom = space.mesh().geometry(e);
                let sub = space.mesh().subdomain(e);
                let rho = space.material(e).rho;
                let u = l2_project_vector(space.basis(), k - 1, &geom, rule, |x| field.div_stress(x, sub) / rho);
                let nl = dm.n_lower;
                for q in 0..rule.len() {
                    let xi = rule.xi(q);
                    let phi = space.basis().eval(&xi);
                    let want = Point::new(
                        (0..nl).map(|l| u[l] * phi[l]).sum::<f64>(),
                        (0..nl).map(|l| u[nl + l] * phi[l]).sum::<f64>(),
                    );
                    let got = space.eval_div_stress(&out.pair, e, &xi) / rho;
                    err = err.max((got - want).norm());
                    scale = scale.max(want.norm());
                }
            }
            worst = worst.max(err / scale.max(f64::MIN_POSITIVE));
        }
    }
    let pass = worst <= 1e-9;
    let detail = format!("{count} random smooth pairs, k = 1, 2: max relative defect {worst:.2e} (need <= 1e-9)");
    verdict(4, "commuting diagram of the elliptic projector", pass, &detail);
    assert!(pass, "{detail}");
}

/// `(‖f − Π_h f‖₀, ‖div(f − Π_h f)‖₀)` on `mesh`.
fn bdm_errors(mesh: &Mesh<f64>, k: usize, f: &dyn Fn(&Point<f64>) -> Tensor<f64>, div: &dyn Fn(&Point<f64>) -> Point<f64>) -> (f64, f64) {
    let bdm = BdmInterpolator::<f64>::new(k);
    let basis = ScalarBasis::<f64>::new(k);
    let rule = make_quadrature::<f64>((2 * k + 4).min(zener_core::fem_basis::MAX_DEGREE)).unwrap();
    let (mut e0, mut ed) = (0.0, 0.0);
    for e in 0..mesh.num_elements() {
        let g = mesh.geometry(e);
        let c = bdm.interpolate(e, &g, f).unwrap();
        for q in 0..rule.len() {
            let xi = rule.xi(q);
            let x = g.map(&xi);
            let w = rule.weights[q] * g.det.abs();
            e0 += w * (f(&x) - eval_tensor(&basis, &c, &xi)).norm_squared();
            ed += w * (div(&x) - eval_tensor_div(&basis, &c, &g, &xi)).norm_squared();
        }
    }
    (e0.sqrt(), ed.sqrt())
}

fn ls_slope(h: &[f64], e: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn c05_bdm_reproduction_and_rates() {
    let mut r = rng(5);
    let mut pass = true;
    let mut detail = Vec::new();
    let mesh = square(2);
    for k in 1..=3 {
        // Random [P_k]^{2x2} tensor as monomial coefficients.
        let coef: Vec<f64> = (0..4 * (k + 1) * (k + 1)).map(|_| rand::Rng::random_range(&mut r, -1.0..1.0)).collect();
        let poly = |x: &Point<f64>| {
            Tensor::from_fn(|a, b| {
                let mut s = 0.0;
                for i in 0..=k {
                    for j in 0..=k - i {
                        s += coef[(2 * a + b) * (k + 1) * (k + 1) + i * (k + 1) + j] * x.x.powi(i as i32) * x.y.powi(j as i32);
                    }
                }
                s
            })
        };
        let pdiv = |x: &Point<f64>| {
            Point::from_fn(|a, _| {
                let mut s = 0.0;
                for i in 0..=k {
                    for j in 0..=k - i {
                        let dx = if i > 0 { i as f64 * x.x.powi(i as i32 - 1) * x.y.powi(j as i32) } else { 0.0 };
                        let dy = if j > 0 { j as f64 * x.x.powi(i as i32) * x.y.powi(j as i32 - 1) } else { 0.0 };
                        s += coef[(2 * a) * (k + 1) * (k + 1) + i * (k + 1) + j] * dx;
                        s += coef[(2 * a + 1) * (k + 1) * (k + 1) + i * (k + 1) + j] * dy;
                    }
                }
                s
            })
        };
        let (e0, ed) = bdm_errors(&mesh, k, &poly, &pdiv);
        let ok = e0 <= 1e-10 && ed <= 1e-10;
        pass &= ok;
        detail.push(format!("k={k}: reproduction {e0:.1e}/{ed:.1e}"));

        let f = |x: &Point<f64>| Tensor::new((x.x + 2.0 * x.y).sin(), x.x * x.y.cos(), (x.x * x.y).exp(), (x.y - x.x).cos());
        let div = |x: &Point<f64>| {
            Point::new(
                (x.x + 2.0 * x.y).cos() - x.x * x.y.sin(),
                x.y * (x.x * x.y).exp() - (x.y - x.x).sin(),
            )
        };
        let mut hs = Vec::new();
        let (mut l2, mut dv) = (Vec::new(), Vec::new());
        let mut m = square(2);
        for _ in 0..4 {
            let (a, b) = bdm_errors(&m, k, &f, &div);
            hs.push(m.meshsize());
            l2.push(a);
            dv.push(b);
            m = refine_uniform(&m);
        }
        let (s0, sd) = (ls_slope(&hs, &l2), ls_slope(&hs, &dv));
        let (m0, md) = ((k + 1) as f64, k as f64);
        let ok = (m0 - 0.15..=m0 + 0.3).contains(&s0) && (md - 0.15..=md + 0.3).contains(&sd);
        pass &= ok;
        detail.push(format!("L2 order {s0:.3} (m={m0}), div order {sd:.3} (m={md})"));
    }
    verdict(5, "BDM reproduction and interpolation orders", pass, &detail.join("; "));
    assert!(pass, "{detail:?}");
}

#[test]
fn c06_inf_sup_robustness() {
    let mut pass = true;
    let mut detail = Vec::new();
    // One-subdomain square, once purely elastic and once purely viscoelastic.
    for (label, what) in [(1, "elastic"), (2, "viscoelastic")] {
        let mut meshes = vec![two_triangles([label, label])];
        for _ in 0..2 {
            let next = refine_uniform(meshes.last().unwrap());
            meshes.push(next);
        }
        let betas: Vec<f64> = meshes
            .into_iter()
            .map(|m| inf_sup_constant(&FeSpace::new(m, MaterialTable::reference_composite(), 1).unwrap()).unwrap())
            .collect();
        let (lo, hi) = betas.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let variation = (hi - lo) / hi;
        pass &= variation < 0.25 && lo > 0.05;
        detail.push(format!("{what}: beta on 2/8/32 elements {betas:.4?}, variation {:.1}%, min {lo:.4}", 100.0 * variation));
    }
    let detail = format!("{} (need < 25% and > 0.05)", detail.join("; "));
    verdict(6, "discrete inf-sup robustness", pass, &detail);
    assert!(pass, "{detail}");
}

fn two_triangles(labels: [usize; 2]) -> Mesh<f64> {
    let v = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
    Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]], labels.to_vec(), Default::default()).unwrap()
}

fn free_energy(materials: MaterialTable<f64>) -> EnergyTrace {
    let space = FeSpace::new(square(4), materials.clone(), 1).unwrap();
    let data_case = ManufacturedCase::reference(materials);
    let (p0, p1, p2) = (data_case.pair(0.4, 0), data_case.pair(0.4, 1), data_case.pair(0.4, 2));
    let start = Startup { p0: &p0, p1: &p1, p_ddot0: &p2 };
    let solver = CgSolver::new(&space, TimeGrid::new(2.0, 100).unwrap()).unwrap();
    let mut tr = EnergyTrace::default();
    solver.run(&start, &NoLoads, |s| tr.push(solver.energy(s))).unwrap();
    tr
}

#[test]
fn c07_energy_dissipation_and_conservation() {
    let visco = free_energy(MaterialTable::reference_composite());
    let elastic = free_energy(MaterialTable::reference_elastic());
    let inc = visco.max_relative_increase();
    let drift = elastic.max_relative_drift();
    let decay = visco.values.last().unwrap() / visco.values[0];
    let pass = visco.increases(ENERGY_TOLERANCE).is_empty() && drift <= 1e-9 && decay < 1.0;
    let detail = format!(
        "viscoelastic: max relative increase {inc:.2e} over {} steps, E_end/E_0 = {decay:.4}; elastic: drift {drift:.2e} over {} steps (need <= 1e-9)",
        visco.values.len() - 1,
        elastic.values.len() - 1
    );
    verdict(7, "energy dissipation and conservation", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c08_hybrid_matches_monolithic() {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    let mut detail = Vec::new();
    for mesh in [two_triangles([1, 2]), refine_uniform(&two_triangles([1, 2]))] {
        let ne = mesh.num_elements();
        let space = FeSpace::new(mesh, MaterialTable::reference_composite(), 1).unwrap();
        let solver = CgSolver::new(&space, TimeGrid::new(0.5, 10).unwrap()).unwrap();
        let data = case().initial_data();
        let starts = StartupPairs::new(&data);
        let start = starts.startup();
        let l = dense(solver.step_matrix());
        let br = dense(&solver.forms().skew);
        let z = null_space(&dense(&solver.forms().trace));
        let dt = solver.grid().dt();
        let mut hybrid = solver.initialize(&start, case()).unwrap();
        let mut mono: CgState<f64> = hybrid.clone();
        let mut err: f64 = 0.0;
        while hybrid.k < solver.grid().steps {
            let loads = zener_core::assembly::assemble_rhs(&space, case(), solver.grid().time(hybrid.k), Scheme::Cg);
            hybrid = solver.step(&hybrid, &loads).unwrap();
            let rhs = solver.step_rhs(&mono, &loads);
            let (p, mu) = constrained_solve(&l, &z, &br, &rhs);
            mono = CgState {
                r_prev: mono.r_curr.clone(),
                r_curr: &mono.r_prev + mu * (2.0 * dt),
                p_prev: mono.p_curr.clone(),
                p_curr: p,
                psi_prev: mono.psi_curr.clone(),
                psi_curr: mono.psi_curr.clone(),
                k: mono.k + 1,
            };
            let ep = (&hybrid.p_curr - &mono.p_curr).norm() / mono.p_curr.norm();
            let er = (&hybrid.r_curr - &mono.r_curr).norm() / mono.r_curr.norm().max(f64::MIN_POSITIVE);
            err = err.max(ep).max(er);
        }
        pass &= err <= 1e-8;
        worst = worst.max(err);
        detail.push(format!("{ne} elements: max relative difference {err:.2e}"));
    }
    let detail = format!("{} over 10 steps (need <= 1e-8)", detail.join(", "));
    verdict(8, "hybridized solve equals monolithic constrained solve", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c09_dg_consistency() {
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    for k in [1, 2] {
        let space = FeSpace::new(square(2), MaterialTable::reference_composite(), k).unwrap();
        let pen = choose_penalty(&space, PenaltyMode::Auto, None).unwrap();
        let ops = DgOperators::new(&space, pen).unwrap();
        let proj = EllipticProjector::new(&space).unwrap();
        let z = null_space(&dense(&ops.forms().trace));
        let kdg = ops.spatial();
        let kdiv = &ops.forms().div_div;
        for _ in 0..5 {
            let field = SmoothPair::symmetric(&mut r, space.materials());
            let p = proj.project(&field).pair;
            let a = zener_core::assembly::sparse::spmv(kdg, &p);
            let b = zener_core::assembly::sparse::spmv(kdiv, &p);
            let scale = (z.transpose() * &b).norm().max(f64::MIN_POSITIVE);
            let defect = (z.transpose() * (&a - &b)).norm() / scale;
            let (jc, jp, _) = ops.forms().dg.as_ref().unwrap();
            let jumps = zener_core::assembly::sparse::spmv(jp, &p).norm() + zener_core::assembly::sparse::spmv_transpose(jc, &p).norm();
            worst = worst.max(defect).max(jumps / b.norm());
        }
    }
    let pass = worst <= 1e-11;
    let detail = format!("conforming weakly symmetric fields, k = 1, 2: max relative defect {worst:.2e} (need <= 1e-11)");
    verdict(9, "DG operator consistent with the CG operator", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c10_weak_symmetry_every_step() {
    let space = FeSpace::new(square(4), MaterialTable::reference_composite(), 2).unwrap();
    let data = case().initial_data();
    let starts = StartupPairs::new(&data);
    let start = starts.startup();
    let mut cg_worst: f64 = 0.0;
    let cg = CgSolver::new(&space, TimeGrid::new(0.5, 50).unwrap()).unwrap();
    let skew = &cg.forms().skew;
    cg.run(&start, case(), |s| cg_worst = cg_worst.max(scaled_residual(skew, &s.p_curr))).unwrap();
    let pen = choose_penalty(&space, PenaltyMode::Auto, None).unwrap();
    let ops = DgOperators::new(&space, pen).unwrap();
    let cfl = ops.estimate_cfl().unwrap();
    let steps = (0.5 / (0.5 * cfl.dt_max)).ceil() as usize;
    let dg = DgSolver::with_cfl(ops, TimeGrid::new(0.5, steps).unwrap(), cfl).unwrap();
    let mut dg_worst: f64 = 0.0;
    dg.run(&start, case(), |s| dg_worst = dg_worst.max(scaled_residual(skew, &s.p_curr))).unwrap();
    let pass = cg_worst <= 1e-9 && dg_worst <= 1e-9;
    let detail = format!("max scaled (s, j+p) over all steps: CG {cg_worst:.2e} (50 steps), DG {dg_worst:.2e} ({steps} steps) (need <= 1e-9)");
    verdict(10, "weak symmetry at every step", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn c11_composite_per_subdomain_rates() {
    let mut pass = true;
    let mut detail = Vec::new();
    for scheme in [Scheme::Cg, Scheme::Dg] {
        for k in [1, 2] {
            let rep = study(scheme, k);
            let (re, _) = rate_line(rep, |r| r.stress.elastic);
            let (rv, _) = rate_line(rep, |r| r.stress.viscoelastic);
            let need = k as f64 - RATE_SLACK;
            pass &= re >= need && rv >= need;
            detail.push(format!("{scheme} k={k}: elastic {re:.3}, viscoelastic {rv:.3}"));
        }
    }
    let detail = format!("{} (need >= k - 0.15)", detail.join("; "));
    verdict(11, "convergence restricted to each material part", pass, &detail);
    assert!(pass, "{detail}");
}
