use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{FeSpace, Scheme, StressPair};
use crate::cg::{CgSolver, TimeGrid};
use crate::dg::{choose_penalty, DgOperators, DgSolver, PenaltyMode};
use crate::error::{Error, Result};
use crate::mesh::{refine_uniform, Mesh};
use crate::scalar::{lit, to_f64, Scalar};

use super::case::{CachedLoads, ManufacturedCase, StartupPairs};
use super::norms::{conforming_norm, ErrorEvaluator, ErrorMaxima, ErrorMonitor, Norms};

/// How the time step is chosen on each level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DtPolicy {
    /// `Δt = factor · h^{(k+1)/2}`, so the `O(Δt²)` error stays below `O(h^k)`.
    MeshPower { factor: f64 },
    /// `Δt = fraction · Δt_max` (DG only).
    CflFraction { fraction: f64 },
    Fixed { dt: f64 },
}

impl DtPolicy {
    pub fn default_for(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Cg => DtPolicy::MeshPower { factor: 0.25 },
            Scheme::Dg => DtPolicy::CflFraction { fraction: 0.5 },
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig<T: Scalar> {
    pub scheme: Scheme,
    pub order: usize,
    pub levels: usize,
    pub final_time: f64,
    pub dt: DtPolicy,
    pub penalty_mode: PenaltyMode,
    pub penalty: Option<f64>,
    /// Coarsest mesh; level `l` is refined `l` times.
    pub base: Mesh<T>,
    /// Run the levels concurrently.
    pub parallel: bool,
}

impl<T: Scalar> StudyConfig<T> {
    pub fn new(scheme: Scheme, order: usize, levels: usize, base: Mesh<T>) -> Self {
        Self {
            scheme,
            order,
            levels,
            final_time: 1.0,
            dt: DtPolicy::default_for(scheme),
            penalty_mode: PenaltyMode::Auto,
            penalty: None,
            base,
            parallel: false,
        }
    }
}

/// Errors of one refinement level, as maxima over the time grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportRow {
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    /// In the 𝔖 norm for CG and the 𝔖(h) norm for DG.
    pub stress: Norms,
    pub velocity: Norms,
    pub rotation: Norms,
    /// Jump seminorm of the discrete iterates.
    pub jump: Norms,
    pub penalty: Option<f64>,
    pub dt_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub scheme: Scheme,
    pub order: usize,
    pub rows: Vec<ReportRow>,
}

/// `log₂(e_{l−1}/e_l)` for consecutive entries.
pub fn rates(errors: &[f64]) -> Vec<Option<f64>> {
    std::iter::once(None)
        .chain(errors.windows(2).map(|w| Some((w[0] / w[1]).log2())))
        .take(errors.len())
        .collect()
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(String::new, |r| format!("{r:.4}"))
}

impl ErrorReport {
    pub fn column(&self, f: impl Fn(&ReportRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn rates_of(&self, f: impl Fn(&ReportRow) -> f64) -> Vec<Option<f64>> {
        rates(&self.column(f))
    }

    /// Rate between the two finest levels.
    pub fn final_rate(&self, f: impl Fn(&ReportRow) -> f64) -> Option<f64> {
        self.rates_of(f).last().copied().flatten()
    }

    pub fn stress_rate(&self) -> Option<f64> {
        self.final_rate(|r| r.stress.total)
    }

    /// `level,h,dt,err_S,err_vel,err_rot,rate_S,rate_vel,rate_rot`.
    pub fn to_csv(&self) -> String {
        let rs = self.rates_of(|r| r.stress.total);
        let rv = self.rates_of(|r| r.velocity.total);
        let rr = self.rates_of(|r| r.rotation.total);
        let mut out = String::from("level,h,dt,err_S,err_vel,err_rot,rate_S,rate_vel,rate_rot\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{},{},{}",
                r.level,
                r.h,
                r.dt,
                r.stress.total,
                r.velocity.total,
                r.rotation.total,
                fmt_rate(rs[i]),
                fmt_rate(rv[i]),
                fmt_rate(rr[i])
            );
        }
        out
    }

    /// Per-subdomain errors and the discrete jump seminorm.
    pub fn detail_csv(&self) -> String {
        let cols: [(&str, fn(&ReportRow) -> f64); 7] = [
            ("err_S_elastic", |r| r.stress.elastic),
            ("err_S_viscoelastic", |r| r.stress.viscoelastic),
            ("err_vel_elastic", |r| r.velocity.elastic),
            ("err_vel_viscoelastic", |r| r.velocity.viscoelastic),
            ("err_rot_elastic", |r| r.rotation.elastic),
            ("err_rot_viscoelastic", |r| r.rotation.viscoelastic),
            ("jump", |r| r.jump.total),
        ];
        let rate_cols: Vec<Vec<Option<f64>>> = cols.iter().map(|(_, f)| self.rates_of(f)).collect();
        let mut out = String::from("level,steps");
        for (name, _) in &cols {
            let _ = write!(out, ",{name},rate_{name}");
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(out, "{},{}", r.level, r.steps);
            for (c, (_, f)) in cols.iter().enumerate() {
                let _ = write!(out, ",{:.8e},{}", f(r), fmt_rate(rate_cols[c][i]));
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable rate table.
    pub fn table(&self) -> String {
        let rs = self.rates_of(|r| r.stress.total);
        let rv = self.rates_of(|r| r.velocity.total);
        let rr = self.rates_of(|r| r.rotation.total);
        let mut out = format!(
            "{} k={}\n{:>5} {:>10} {:>10} {:>12} {:>6} {:>12} {:>6} {:>12} {:>6}\n",
            self.scheme, self.order, "level", "h", "dt", "err_S", "rate", "err_vel", "rate", "err_rot", "rate"
        );
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:>5} {:>10.4e} {:>10.4e} {:>12.4e} {:>6} {:>12.4e} {:>6} {:>12.4e} {:>6}",
                r.level,
                r.h,
                r.dt,
                r.stress.total,
                rs[i].map_or("-".into(), |v| format!("{v:.2}")),
                r.velocity.total,
                rv[i].map_or("-".into(), |v| format!("{v:.2}")),
                r.rotation.total,
                rr[i].map_or("-".into(), |v| format!("{v:.2}")),
            );
        }
        out
    }
}

fn steps_for(final_time: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    Ok(((final_time / dt).ceil() as usize).max(2))
}

/// Runs one level on `mesh` and measures the errors.
pub fn run_level<T: Scalar>(
    cfg: &StudyConfig<T>,
    case: &ManufacturedCase<T>,
    mesh: Mesh<T>,
    level: usize,
) -> Result<ReportRow> {
    let space = FeSpace::new(mesh, case.materials().clone(), cfg.order)?;
    let h = to_f64(space.mesh().meshsize());
    let eval = ErrorEvaluator::new(&space, case)?;
    let data = case.initial_data();
    let starts = StartupPairs::new(&data);
    let startup = starts.startup();
    let t_end = lit::<T>(cfg.final_time);
    match cfg.scheme {
        Scheme::Cg => {
            let dt = match cfg.dt {
                DtPolicy::MeshPower { factor } => factor * h.powf((cfg.order as f64 + 1.0) / 2.0),
                DtPolicy::Fixed { dt } => dt,
                DtPolicy::CflFraction { .. } => {
                    return Err(Error::Config("the CG scheme has no CFL limit; use mesh_power or fixed".into()))
                }
            };
            let grid = TimeGrid::new(t_end, steps_for(cfg.final_time, dt)?)?;
            let solver = CgSolver::new(&space, grid)?;
            let mut monitor = ErrorMonitor::new(&eval, grid.dt(), false);
            let loads = CachedLoads::new(case, &space, Scheme::Cg);
            let mut s = solver.initialize(&startup, case)?;
            monitor.observe(s.k, &s.p_prev, &s.p_curr, &s.r_prev, &s.r_curr);
            while s.k < grid.steps {
                s = solver.step(&s, &loads.at(grid.time(s.k)))?;
                monitor.observe(s.k, &s.p_prev, &s.p_curr, &s.r_prev, &s.r_curr);
            }
            Ok(row(level, h, grid, monitor.maxima, None, None))
        }
        Scheme::Dg => {
            let penalty = choose_penalty(&space, cfg.penalty_mode, cfg.penalty.map(lit::<T>))?;
            let a = to_f64(penalty.a);
            let ops = DgOperators::new(&space, penalty)?;
            let cfl = ops.estimate_cfl()?;
            let dt_max = to_f64(cfl.dt_max);
            let dt = match cfg.dt {
                DtPolicy::MeshPower { factor } => factor * h.powf((cfg.order as f64 + 1.0) / 2.0),
                DtPolicy::CflFraction { fraction } => fraction * dt_max,
                DtPolicy::Fixed { dt } => dt,
            };
            let grid = TimeGrid::new(t_end, steps_for(cfg.final_time, dt)?)?;
            let solver = DgSolver::with_cfl(ops, grid, cfl)?;
            let mut monitor = ErrorMonitor::new(&eval, grid.dt(), true);
            let loads = CachedLoads::new(case, &space, Scheme::Dg);
            let mut s = solver.initialize(&startup, case)?;
            monitor.observe(s.k, &s.p_prev, &s.p_curr, &s.r_prev, &s.r_curr);
            while s.k < grid.steps {
                s = solver.step(&s, &loads.at(grid.time(s.k)))?;
                monitor.observe(s.k, &s.p_prev, &s.p_curr, &s.r_prev, &s.r_curr);
            }
            Ok(row(level, h, grid, monitor.maxima, Some(a), Some(dt_max)))
        }
    }
}

fn row<T: Scalar>(level: usize, h: f64, grid: TimeGrid<T>, m: ErrorMaxima, penalty: Option<f64>, dt_max: Option<f64>) -> ReportRow {
    ReportRow {
        level,
        h,
        dt: to_f64(grid.dt()),
        steps: grid.steps,
        stress: m.stress,
        velocity: m.velocity,
        rotation: m.rotation,
        jump: m.jump,
        penalty,
        dt_max,
    }
}

/// Uniformly refined meshes `base, refine(base), …`.
pub fn mesh_hierarchy<T: Scalar>(base: &Mesh<T>, levels: usize) -> Vec<Mesh<T>> {
    let mut meshes = vec![base.clone()];
    while meshes.len() < levels {
        let next = refine_uniform(meshes.last().expect("nonempty"));
        meshes.push(next);
    }
    meshes
}

/// Runs the case on `levels` uniformly refined meshes. The case must pass its
/// residual check first.
pub fn convergence_study<T: Scalar>(cfg: &StudyConfig<T>, case: &ManufacturedCase<T>) -> Result<ErrorReport> {
    if cfg.levels < 3 {
        return Err(Error::Config(format!("a convergence study needs at least 3 levels, got {}", cfg.levels)));
    }
    case.check(200)?;
    let meshes = mesh_hierarchy(&cfg.base, cfg.levels);
    let run = |(level, mesh): (usize, Mesh<T>)| run_level(cfg, case, mesh, level);
    let rows: Result<Vec<ReportRow>> = if cfg.parallel {
        meshes.into_par_iter().enumerate().map(run).collect()
    } else {
        meshes.into_iter().enumerate().map(run).collect()
    };
    Ok(ErrorReport { scheme: cfg.scheme, order: cfg.order, rows: rows? })
}

/// Differences between CG runs with successively halved steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalReport {
    pub steps: Vec<usize>,
    /// `max_k ‖p_{Δt}(t_k) − p_{Δt/2}(t_k)‖_𝔖` over the coarse times.
    pub differences: Vec<f64>,
    /// `log₂` ratio of the last two differences.
    pub slope: f64,
}

/// Temporal order on a fixed mesh by Richardson differences: runs the CG
/// scheme with `steps, 2·steps, …` (`runs ≥ 3`) and compares each run with the
/// next at the coarse time levels, so the spatial error cancels.
pub fn temporal_richardson<T: Scalar>(
    space: &FeSpace<T>,
    case: &ManufacturedCase<T>,
    final_time: f64,
    coarse_steps: usize,
    runs: usize,
) -> Result<TemporalReport> {
    if runs < 3 {
        return Err(Error::Config("temporal study needs at least 3 runs".into()));
    }
    case.check(200)?;
    let eval = ErrorEvaluator::new(space, case)?;
    let data = case.initial_data();
    let starts = StartupPairs::new(&data);
    let startup = starts.startup();
    let loads = CachedLoads::new(case, space, Scheme::Cg);
    let steps: Vec<usize> = (0..runs).map(|j| coarse_steps << j).collect();
    let trajectories: Result<Vec<Vec<StressPair<T>>>> = steps
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let stride = 1usize << j;
            let grid = TimeGrid::new(lit::<T>(final_time), l)?;
            let solver = CgSolver::new(space, grid)?;
            let mut kept = Vec::with_capacity(coarse_steps + 1);
            let mut s = solver.initialize(&startup, case)?;
            kept.push(s.p_prev.clone());
            loop {
                if s.k % stride == 0 {
                    kept.push(s.p_curr.clone());
                }
                if s.k >= grid.steps {
                    break;
                }
                s = solver.step(&s, &loads.at(grid.time(s.k)))?;
            }
            Ok(kept)
        })
        .collect();
    let trajectories = trajectories?;
    let differences: Vec<f64> = trajectories
        .windows(2)
        .map(|w| {
            w[0].iter().zip(&w[1]).map(|(a, b)| conforming_norm(&eval, &(a - b))).fold(0.0, f64::max)
        })
        .collect();
    let n = differences.len();
    let slope = (differences[n - 2] / differences[n - 1]).log2();
    Ok(TemporalReport { steps, differences, slope })
}
