//! Hybridized H(div)-conforming scheme with trapezoidal (average
//! acceleration) time stepping and static condensation onto facet traces.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use crate::assembly::sparse::spmv;
use crate::assembly::{
    assemble_rhs, AssembledForms, CondensedSystem, EllipticProjector, FeSpace, Loads, LocalProblem, PairField,
    Scheme, StressPair,
};
use crate::error::{Error, Result};
use crate::fem_basis::l2_project_vector;
use crate::scalar::{lit, max_abs, Scalar};

/// Uniform time grid `t_k = k Δt`, `Δt = T / L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T: Scalar> {
    pub final_time: T,
    pub steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(final_time: T, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("need at least 2 time steps, got {steps}")));
        }
        if !(final_time > T::zero()) {
            return Err(Error::Config("final time must be positive".into()));
        }
        Ok(Self { final_time, steps })
    }

    pub fn dt(&self) -> T {
        self.final_time / lit::<T>(self.steps as f64)
    }

    pub fn time(&self, k: usize) -> T {
        self.dt() * lit::<T>(k as f64)
    }
}

/// Exact pairs used to start both schemes: `p₀`, `p₁ = ṗ(0)` and `p̈(0)`.
pub struct Startup<'s, T: Scalar> {
    pub p0: &'s dyn PairField<T>,
    pub p1: &'s dyn PairField<T>,
    pub p_ddot0: &'s dyn PairField<T>,
}

/// Discrete start values `p⁰ = Ξ_h p₀`, `p¹ = Ξ_h p₀ + Δt Ξ_h p₁ + Δt²/2 Ξ_h p̈(0)`,
/// together with `Ξ_h p₁`.
pub struct StartValues<T: Scalar> {
    pub p0: StressPair<T>,
    pub p1: StressPair<T>,
    pub rate: StressPair<T>,
}

impl<T: Scalar> StartValues<T> {
    pub fn new(projector: &EllipticProjector<'_, T>, data: &Startup<'_, T>, dt: T) -> Self {
        let p0 = projector.project(data.p0).pair;
        let rate = projector.project(data.p1).pair;
        let acc = projector.project(data.p_ddot0).pair;
        let p1 = &p0 + &rate * dt + acc * (dt * dt * lit::<T>(0.5));
        Self { p0, p1, rate }
    }
}

/// Iterates at levels `k - 1` and `k`.
#[derive(Clone, Debug)]
pub struct CgState<T: Scalar> {
    pub p_prev: StressPair<T>,
    pub p_curr: StressPair<T>,
    pub r_prev: DVector<T>,
    pub r_curr: DVector<T>,
    pub psi_prev: DVector<T>,
    pub psi_curr: DVector<T>,
    pub k: usize,
}

/// Time-independent pieces of the scheme: forms, the condensed step operator
/// (factored once) and the elliptic projector.
pub struct CgSolver<'a, T: Scalar> {
    space: &'a FeSpace<T>,
    forms: AssembledForms<T>,
    grid: TimeGrid<T>,
    lhs: CsrMatrix<T>,
    system: CondensedSystem<T>,
    projector: EllipticProjector<'a, T>,
}

/// Local hybrid blocks `[[L_K, B_rᵀ], [B_r, 0]]` with trace coupling `[−B_ψᵀ; 0]`.
pub(crate) fn saddle_problems<T: Scalar>(
    space: &FeSpace<T>,
    block: impl Fn(&crate::assembly::ElementOps<'_, T>) -> DMatrix<T> + Sync,
    with_trace: bool,
) -> Vec<LocalProblem<T>> {
    (0..space.dofmap().num_elements())
        .into_par_iter()
        .map(|e| {
            let ops = space.element(e);
            let ns = ops.n_local();
            let br = ops.skew();
            let nr = br.nrows();
            let mut m = DMatrix::zeros(ns + nr, ns + nr);
            m.view_mut((0, 0), (ns, ns)).copy_from(&block(&ops));
            m.view_mut((ns, 0), (nr, ns)).copy_from(&br);
            m.view_mut((0, ns), (ns, nr)).copy_from(&br.transpose());
            let (bpsi, trace_dofs) = if with_trace { ops.trace_block() } else { (DMatrix::zeros(0, ns), Vec::new()) };
            let mut coupling = DMatrix::zeros(ns + nr, trace_dofs.len());
            coupling.view_mut((0, 0), (ns, trace_dofs.len())).copy_from(&(-bpsi.transpose()));
            LocalProblem { matrix: m, coupling, trace_dofs }
        })
        .collect()
}

/// Splits local solutions `(p_K, s_K)` into global stress and rotation vectors.
pub(crate) fn gather<T: Scalar>(space: &FeSpace<T>, x: &[DVector<T>]) -> (StressPair<T>, DVector<T>) {
    let dm = space.dofmap();
    let mut p = DVector::zeros(dm.n_stress());
    let mut r = DVector::zeros(dm.n_rotation());
    for (e, xe) in x.iter().enumerate() {
        let sr = dm.stress_range(e);
        let ns = sr.len();
        p.rows_mut(sr.start, ns).copy_from(&xe.rows(0, ns));
        r.rows_mut(dm.rotation_range(e).start, dm.n_lower).copy_from(&xe.rows(ns, dm.n_lower));
    }
    (p, r)
}

/// Cuts a global stress right-hand side into local saddle right-hand sides.
pub(crate) fn scatter<T: Scalar>(space: &FeSpace<T>, b: &DVector<T>) -> Vec<DVector<T>> {
    let dm = space.dofmap();
    (0..dm.num_elements())
        .map(|e| {
            let sr = dm.stress_range(e);
            let mut out = DVector::zeros(sr.len() + dm.n_lower);
            out.rows_mut(0, sr.len()).copy_from(&b.rows(sr.start, sr.len()));
            out
        })
        .collect()
}

/// `ü_h = ρ⁻¹(div_h j_ω⁺ p + U_h F)` as `[P_{k−1}]²` coefficients per element
/// (element-major, then component-major).
pub fn acceleration<T: Scalar>(space: &FeSpace<T>, p: &StressPair<T>, loads: &dyn Loads<T>, t: T) -> DVector<T> {
    let dm = space.dofmap();
    let m = 2 * dm.n_lower;
    let mut out = DVector::zeros(m * dm.num_elements());
    for e in 0..dm.num_elements() {
        let geom = space.mesh().geometry(e);
        let sub = space.mesh().subdomain(e);
        let rho = space.material(e).rho;
        let local = l2_project_vector(space.basis(), dm.k - 1, &geom, space.volume_rule(), |x| {
            let xi = geom.to_reference(x);
            (space.eval_div_stress(p, e, &xi) + loads.body_force(x, sub, t)) / rho
        });
        out.rows_mut(m * e, m).copy_from(&local);
    }
    out
}

/// Relative residual accepted after a direct solve: `1e-10`, loosened for
/// low-precision scalars.
pub fn guard_tolerance<T: Scalar>() -> T {
    lit::<T>(1e-10).max(T::default_epsilon() * lit::<T>(1e3))
}

/// `‖B p‖_∞` relative to `‖B‖_∞ ‖p‖_∞`.
pub fn scaled_residual<T: Scalar>(b: &CsrMatrix<T>, p: &DVector<T>) -> T {
    let scale = max_abs(b.values().iter().copied()) * p.amax();
    if scale == T::zero() {
        return T::zero();
    }
    spmv(b, p).amax() / scale
}

impl<'a, T: Scalar> CgSolver<'a, T> {
    /// Assembles the forms and condenses the step operator
    /// `M_A/Δt² + G/(2Δt) + K_div/4` onto the trace.
    pub fn new(space: &'a FeSpace<T>, grid: TimeGrid<T>) -> Result<Self> {
        let forms = AssembledForms::new(space);
        let dt = grid.dt();
        let (c_m, c_g, c_k) = (T::one() / (dt * dt), lit::<T>(0.5) / dt, lit::<T>(0.25));
        let problems =
            saddle_problems(space, |ops| ops.mass_a() * c_m + ops.damping() * c_g + ops.div_div() * c_k, true);
        let system = CondensedSystem::new(problems, space.dofmap().n_trace())?;
        let lhs = &(&(&forms.mass_a * c_m) + &(&forms.damping * c_g)) + &(&forms.div_div * c_k);
        let projector = EllipticProjector::new(space)?;
        Ok(Self { space, forms, grid, lhs, system, projector })
    }

    pub fn space(&self) -> &FeSpace<T> {
        self.space
    }

    pub fn forms(&self) -> &AssembledForms<T> {
        &self.forms
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn condensed(&self) -> &CondensedSystem<T> {
        &self.system
    }

    pub fn projector(&self) -> &EllipticProjector<'a, T> {
        &self.projector
    }

    /// Step operator acting on `p^{k+1}`.
    pub fn step_matrix(&self) -> &CsrMatrix<T> {
        &self.lhs
    }

    /// Start-up per the Taylor formula with `r⁰ = 0`, `ψ⁰ = 0`. The rotation and
    /// trace at level 1 come from the rates `ṙ_h(0)`, `ψ̇_h(0)` of the
    /// semi-discrete hybrid problem at `t = 0`: `r¹ = Δt ṙ_h(0)`, `ψ¹ = Δt ψ̇_h(0)`.
    pub fn initialize(&self, data: &Startup<'_, T>, loads: &dyn Loads<T>) -> Result<CgState<T>> {
        let dt = self.grid.dt();
        let start = StartValues::new(&self.projector, data, dt);
        let (r_rate, psi_rate) = self.initial_rates(&start, loads)?;
        Ok(CgState {
            r_prev: DVector::zeros(r_rate.len()),
            r_curr: r_rate * dt,
            psi_prev: DVector::zeros(psi_rate.len()),
            psi_curr: psi_rate * dt,
            p_prev: start.p0,
            p_curr: start.p1,
            k: 1,
        })
    }

    fn initial_rates(&self, start: &StartValues<T>, loads: &dyn Loads<T>) -> Result<(DVector<T>, DVector<T>)> {
        let space = self.space;
        let problems = saddle_problems(space, |ops| ops.mass_a(), true);
        let system = CondensedSystem::new(problems, space.dofmap().n_trace())?;
        let b = assemble_rhs(space, loads, T::zero(), Scheme::Cg)
            - spmv(&self.forms.div_div, &start.p0)
            - spmv(&self.forms.damping, &start.rate);
        let (x, psi) = system.solve(&scatter(space, &b));
        let (_, r) = gather(space, &x);
        Ok((r, psi))
    }

    /// Right-hand side of the step equation for `p^{k+1}` given the loads at `t_k`.
    pub fn step_rhs(&self, state: &CgState<T>, loads_k: &DVector<T>) -> DVector<T> {
        let dt = self.grid.dt();
        let f = &self.forms;
        let two = lit::<T>(2.0);
        let m_part = &state.p_curr * two - &state.p_prev;
        let k_part = &state.p_curr * two + &state.p_prev;
        loads_k + spmv(&f.mass_a, &m_part) / (dt * dt) + spmv(&f.damping, &state.p_prev) * (lit::<T>(0.5) / dt)
            - spmv(&f.div_div, &k_part) * lit::<T>(0.25)
    }

    /// One trapezoidal step given the assembled loads at `t_k`.
    pub fn step(&self, state: &CgState<T>, loads_k: &DVector<T>) -> Result<CgState<T>> {
        let space = self.space;
        let b = self.step_rhs(state, loads_k);
        let (x, mu_psi) = self.system.solve(&scatter(space, &b));
        let (p, mu_r) = gather(space, &x);
        self.check_residual(&p, &mu_r, &mu_psi, &b)?;
        let two_dt = lit::<T>(2.0) * self.grid.dt();
        Ok(CgState {
            r_prev: state.r_curr.clone(),
            r_curr: &state.r_prev + mu_r * two_dt,
            psi_prev: state.psi_curr.clone(),
            psi_curr: &state.psi_prev + mu_psi * two_dt,
            p_prev: state.p_curr.clone(),
            p_curr: p,
            k: state.k + 1,
        })
    }

    fn check_residual(&self, p: &DVector<T>, mu_r: &DVector<T>, mu_psi: &DVector<T>, b: &DVector<T>) -> Result<()> {
        let f = &self.forms;
        let res = spmv(&self.lhs, p) + crate::assembly::sparse::spmv_transpose(&f.skew, mu_r)
            - crate::assembly::sparse::spmv_transpose(&f.trace, mu_psi)
            - b;
        let scale = b.amax().max(spmv(&self.lhs, p).amax());
        let rel = guard_tolerance::<T>();
        let constraint = scaled_residual(&f.trace, p).max(scaled_residual(&f.skew, p));
        if res.amax() > rel * scale || constraint > rel {
            return Err(Error::Factorization(format!(
                "step residual {:e} (scale {:e}), constraint {:e}",
                crate::scalar::to_f64(res.amax()),
                crate::scalar::to_f64(scale),
                crate::scalar::to_f64(constraint)
            )));
        }
        Ok(())
    }

    /// Advances with loads sampled at `t_k`.
    pub fn advance(&self, state: &CgState<T>, loads: &dyn Loads<T>) -> Result<CgState<T>> {
        let b = assemble_rhs(self.space, loads, self.grid.time(state.k), Scheme::Cg);
        self.step(state, &b)
    }

    /// Runs to the final time, calling `observe` on the start state and after every step.
    pub fn run(
        &self,
        data: &Startup<'_, T>,
        loads: &dyn Loads<T>,
        mut observe: impl FnMut(&CgState<T>),
    ) -> Result<CgState<T>> {
        let mut state = self.initialize(data, loads)?;
        observe(&state);
        while state.k < self.grid.steps {
            state = self.advance(&state, loads)?;
            observe(&state);
        }
        Ok(state)
    }

    /// `E^{k−1/2}` for the pair `(p^{k−1}, p^k)` held in `state`.
    pub fn energy(&self, state: &CgState<T>) -> T {
        discrete_energy(&self.forms, &state.p_prev, &state.p_curr, self.grid.dt())
    }

    /// `max(‖B_r p‖, ‖B_ψ p‖)`, scaled.
    pub fn constraint_residual(&self, p: &StressPair<T>) -> T {
        scaled_residual(&self.forms.skew, p).max(scaled_residual(&self.forms.trace, p))
    }

    pub fn acceleration(&self, p: &StressPair<T>, loads: &dyn Loads<T>, t: T) -> DVector<T> {
        acceleration(self.space, p, loads, t)
    }
}

/// `½ A(j_ω ∂p, j_ω ∂p) + ½ (div j_ω⁺ p̄, div j_ω⁺ p̄)_ρ` with
/// `∂p = (p_next − p)/Δt` and `p̄ = (p_next + p)/2`.
pub fn discrete_energy<T: Scalar>(forms: &AssembledForms<T>, p: &StressPair<T>, p_next: &StressPair<T>, dt: T) -> T {
    let half = lit::<T>(0.5);
    let v = (p_next - p) / dt;
    let m = (p_next + p) * half;
    half * v.dot(&spmv(&forms.mass_a, &v)) + half * m.dot(&spmv(&forms.div_div, &m))
}
