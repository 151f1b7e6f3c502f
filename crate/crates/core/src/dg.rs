//! Symmetric interior penalty DG scheme with explicit centered time stepping.
//!
//! Only the element-local blocks `M_A`, `G` and `B_r` act on the new level, so a
//! step is a set of independent small saddle solves.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::sparse::{spmv, Triplets};
use crate::assembly::{assemble_rhs, AssembledForms, EllipticProjector, FeSpace, Loads, Scheme, StressPair};
use crate::cg::{discrete_energy, gather, guard_tolerance, saddle_problems, scaled_residual, scatter, StartValues, Startup, TimeGrid};
use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    Fixed,
    Auto,
}

/// Chosen penalty `a` and, in auto mode, the estimates it was derived from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyConfig<T: Scalar> {
    pub a: T,
    pub mode: PenaltyMode,
    pub trace_constant: Option<T>,
    pub threshold: Option<T>,
}

pub const PENALTY_SAFETY: f64 = 1.5;
pub const CFL_SAFETY: f64 = 0.9;
const LANCZOS_MAX_ITER: usize = 600;
const LANCZOS_TOL: f64 = 1e-10;

/// Largest eigenvalue of `apply`, self-adjoint in the inner product
/// `(x, y) ↦ x · mass(y)`, by Lanczos iteration started from `x`. Only the
/// three-term recurrence is kept; loss of orthogonality duplicates Ritz
/// values but does not spoil the extreme one.
fn largest_eigenvalue<T: Scalar>(
    x: DVector<T>,
    apply: impl Fn(&DVector<T>) -> DVector<T>,
    mass: impl Fn(&DVector<T>) -> DVector<T>,
    what: &'static str,
) -> Result<T> {
    let norm = |v: &DVector<T>| v.dot(&mass(v)).max(T::zero()).sqrt();
    let n0 = norm(&x);
    if n0 == T::zero() {
        return Ok(T::zero());
    }
    let mut v = x / n0;
    let mut v_old = DVector::zeros(v.len());
    let (mut alpha, mut beta): (Vec<T>, Vec<T>) = (Vec::new(), Vec::new());
    let mut last = T::zero();
    let tol = lit::<T>(LANCZOS_TOL).max(T::default_epsilon() * lit::<T>(1e3));
    for it in 1..=LANCZOS_MAX_ITER {
        let mut w = apply(&v);
        let a = w.dot(&mass(&v));
        w -= &v * a;
        if let Some(&b) = beta.last() {
            w -= &v_old * b;
        }
        alpha.push(a);
        let b = norm(&w);
        let breakdown = b <= tol * a.abs().max(T::one()) * lit::<T>(1e-3);
        if it % 10 == 0 || breakdown || it == LANCZOS_MAX_ITER {
            let m = alpha.len();
            let t = DMatrix::from_fn(m, m, |i, j| match i.abs_diff(j) {
                0 => alpha[i],
                1 => beta[i.min(j)],
                _ => T::zero(),
            });
            let theta = t.symmetric_eigenvalues().iter().fold(T::min_value().unwrap_or(-T::one()), |m, &v| m.max(v));
            if breakdown || (it > 10 && (theta - last).abs() <= tol * theta.abs()) {
                return Ok(theta);
            }
            last = theta;
        }
        beta.push(b);
        v_old = std::mem::replace(&mut v, w / b);
    }
    Err(Error::NoConvergence(what))
}

fn start_vector<T: Scalar>(n: usize) -> DVector<T> {
    DVector::from_fn(n, |i, _| lit::<T>(((i as f64 + 1.0) * 0.754_877_666).sin() + 0.1))
}

/// `C_tr`: the largest ratio `‖h^{1/2} {v}‖_{F⁰} / ‖v‖_Ω` over scalar
/// piecewise `P_k`.
pub fn trace_constant<T: Scalar>(space: &FeSpace<T>) -> Result<T> {
    let dm = space.dofmap();
    let n = dm.n;
    let ne = dm.num_elements();
    let half = lit::<T>(0.5);
    let mut a = Triplets::new(n * ne, n * ne);
    for f in &space.facets().interior {
        let ops = [space.element(f.elements[0]), space.element(f.elements[1])];
        let mut block = DMatrix::zeros(2 * n, 2 * n);
        for (_, w, xi0) in ops[0].facet_points(f.vertices) {
            let x = ops[0].geom.map(&xi0);
            let mut v = DVector::zeros(2 * n);
            for s in 0..2 {
                let phi = space.basis().eval(&ops[s].geom.to_reference(&x));
                for i in 0..n {
                    v[s * n + i] = phi[i] * half;
                }
            }
            block += &v * v.transpose() * (w * f.length);
        }
        let idx: Vec<usize> = f.elements.iter().flat_map(|&e| (e * n)..(e * n + n)).collect();
        a.add_block(&idx, &idx, &block);
    }
    let a = a.to_csr();
    let mass: Vec<T> = (0..ne).flat_map(|e| std::iter::repeat_n(space.mesh().geometry(e).det, n)).collect();
    let lambda = largest_eigenvalue(
        start_vector(n * ne),
        |x| {
            let y = spmv(&a, x);
            DVector::from_fn(y.len(), |i, _| y[i] / mass[i])
        },
        |x| x.component_mul(&DVector::from_column_slice(&mass)),
        "trace constant",
    )?;
    Ok(lambda.max(T::zero()).sqrt())
}

/// Fixed mode returns `requested` unchanged; auto mode returns
/// `max(requested, 1.5 ‖ρ⁻¹‖_∞ (4 C_tr² + 9/4))`.
pub fn choose_penalty<T: Scalar>(space: &FeSpace<T>, mode: PenaltyMode, requested: Option<T>) -> Result<PenaltyConfig<T>> {
    match mode {
        PenaltyMode::Fixed => {
            let a = requested.ok_or_else(|| Error::Config("fixed penalty mode needs a value".into()))?;
            if !(a > T::zero()) {
                return Err(Error::Config("penalty must be positive".into()));
            }
            Ok(PenaltyConfig { a, mode, trace_constant: None, threshold: None })
        }
        PenaltyMode::Auto => {
            let c = trace_constant(space)?;
            let a0 = space.materials().max_inv_rho() * (lit::<T>(4.0) * c * c + lit::<T>(2.25));
            let estimate = a0 * lit::<T>(PENALTY_SAFETY);
            let a = requested.map_or(estimate, |r| r.max(estimate));
            Ok(PenaltyConfig { a, mode, trace_constant: Some(c), threshold: Some(a0) })
        }
    }
}

/// Element-local factorizations of `[[L_K, B_rᵀ], [B_r, 0]]`.
pub struct LocalBlocks<T: Scalar> {
    lu: Vec<LU<T, Dyn, Dyn>>,
}

impl<T: Scalar> LocalBlocks<T> {
    /// `L_K = c_m M_A,K + c_g G_K`.
    pub fn new(space: &FeSpace<T>, c_m: T, c_g: T) -> Result<Self> {
        let problems = saddle_problems(space, |ops| ops.mass_a() * c_m + ops.damping() * c_g, false);
        let lu = problems
            .into_par_iter()
            .enumerate()
            .map(|(e, p)| {
                let lu = p.matrix.lu();
                if lu.is_invertible() {
                    Ok(lu)
                } else {
                    Err(Error::SingularLocal(e))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { lu })
    }

    /// Solves every element block for the global stress right-hand side `b`;
    /// returns the stress and rotation multiplier parts.
    pub fn solve(&self, space: &FeSpace<T>, b: &DVector<T>) -> (StressPair<T>, DVector<T>) {
        let x: Vec<DVector<T>> = self
            .lu
            .par_iter()
            .zip(scatter(space, b).into_par_iter())
            .map(|(lu, be)| lu.solve(&be).expect("factorization checked at construction"))
            .collect();
        gather(space, &x)
    }
}

/// Largest eigenvalue of the mass-preconditioned spatial operator and the
/// resulting step bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CflEstimate<T: Scalar> {
    pub lambda_max: T,
    pub dt_max: T,
}

/// Assembled DG operators for a given penalty.
pub struct DgOperators<'a, T: Scalar> {
    space: &'a FeSpace<T>,
    forms: AssembledForms<T>,
    spatial: CsrMatrix<T>,
    penalty: PenaltyConfig<T>,
    mass_blocks: LocalBlocks<T>,
}

impl<'a, T: Scalar> DgOperators<'a, T> {
    pub fn new(space: &'a FeSpace<T>, penalty: PenaltyConfig<T>) -> Result<Self> {
        let forms = AssembledForms::with_dg(space, penalty.a);
        let spatial = forms.dg_operator();
        let mass_blocks = LocalBlocks::new(space, T::one(), T::zero())?;
        Ok(Self { space, forms, spatial, penalty, mass_blocks })
    }

    pub fn space(&self) -> &'a FeSpace<T> {
        self.space
    }

    pub fn forms(&self) -> &AssembledForms<T> {
        &self.forms
    }

    /// `K_div − J_c − J_cᵀ + J_pen`.
    pub fn spatial(&self) -> &CsrMatrix<T> {
        &self.spatial
    }

    pub fn penalty(&self) -> &PenaltyConfig<T> {
        &self.penalty
    }

    /// Lanczos iteration on `M_A⁻¹ K` restricted to weakly symmetric pairs;
    /// `Δt_max = 0.9 · 2/√λ_max`.
    pub fn estimate_cfl(&self) -> Result<CflEstimate<T>> {
        let space = self.space;
        let m = &self.forms.mass_a;
        let project = |y: &DVector<T>| self.mass_blocks.solve(space, y).0;
        let x0 = project(&spmv(m, &start_vector(space.dofmap().n_stress())));
        let lambda = largest_eigenvalue(x0, |x| project(&spmv(&self.spatial, x)), |x| spmv(m, x), "CFL estimate")?;
        let dt_max = lit::<T>(2.0 * CFL_SAFETY) / lambda.sqrt();
        Ok(CflEstimate { lambda_max: lambda, dt_max })
    }

    /// `‖h_F^{−1/2} [[j_ω⁺p]]‖_{F⁰}`.
    pub fn jump_seminorm(&self, p: &StressPair<T>) -> T {
        let (_, jp, a) = self.forms.dg.as_ref().expect("DG forms");
        (p.dot(&spmv(jp, p)) / *a).max(T::zero()).sqrt()
    }
}

/// Iterates at levels `k − 1` and `k`.
#[derive(Clone, Debug)]
pub struct DgState<T: Scalar> {
    pub p_prev: StressPair<T>,
    pub p_curr: StressPair<T>,
    pub r_prev: DVector<T>,
    pub r_curr: DVector<T>,
    pub k: usize,
}

pub struct DgSolver<'a, T: Scalar> {
    ops: DgOperators<'a, T>,
    grid: TimeGrid<T>,
    blocks: LocalBlocks<T>,
    projector: EllipticProjector<'a, T>,
    cfl: CflEstimate<T>,
}

impl<'a, T: Scalar> DgSolver<'a, T> {
    pub fn new(ops: DgOperators<'a, T>, grid: TimeGrid<T>) -> Result<Self> {
        let cfl = ops.estimate_cfl()?;
        Self::with_cfl(ops, grid, cfl)
    }

    /// Reuses an estimate from [`DgOperators::estimate_cfl`].
    pub fn with_cfl(ops: DgOperators<'a, T>, grid: TimeGrid<T>, cfl: CflEstimate<T>) -> Result<Self> {
        let dt = grid.dt();
        let blocks = LocalBlocks::new(ops.space, T::one() / (dt * dt), lit::<T>(0.5) / dt)?;
        let projector = EllipticProjector::new(ops.space)?;
        Ok(Self { ops, grid, blocks, projector, cfl })
    }

    pub fn operators(&self) -> &DgOperators<'a, T> {
        &self.ops
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn cfl(&self) -> &CflEstimate<T> {
        &self.cfl
    }

    pub fn projector(&self) -> &EllipticProjector<'a, T> {
        &self.projector
    }

    /// Message when `Δt` exceeds the estimated stability bound.
    pub fn cfl_warning(&self) -> Option<String> {
        let dt = self.grid.dt();
        (dt > self.cfl.dt_max).then(|| {
            format!(
                "warning: dt = {:e} exceeds the estimated DG stability limit dt_max = {:e}; the explicit scheme may blow up",
                to_f64(dt),
                to_f64(self.cfl.dt_max)
            )
        })
    }

    /// Same start-up as the CG scheme; `r¹ = Δt ṙ_h(0)` from the local
    /// problem `M_A p̈ + B_rᵀ ṙ = b(0) − K p⁰ − G Ξ_h p₁`, `B_r p̈ = 0`.
    pub fn initialize(&self, data: &Startup<'_, T>, loads: &dyn Loads<T>) -> Result<DgState<T>> {
        let dt = self.grid.dt();
        let space = self.ops.space;
        let start = StartValues::new(&self.projector, data, dt);
        let b = assemble_rhs(space, loads, T::zero(), Scheme::Dg)
            - spmv(&self.ops.spatial, &start.p0)
            - spmv(&self.ops.forms.damping, &start.rate);
        let (_, r_rate) = self.ops.mass_blocks.solve(space, &b);
        Ok(DgState {
            r_prev: DVector::zeros(r_rate.len()),
            r_curr: r_rate * dt,
            p_prev: start.p0,
            p_curr: start.p1,
            k: 1,
        })
    }

    /// Right-hand side for `p^{k+1}` with the loads at `t_k`.
    pub fn step_rhs(&self, state: &DgState<T>, loads_k: &DVector<T>) -> DVector<T> {
        let dt = self.grid.dt();
        let f = &self.ops.forms;
        let m_part = &state.p_curr * lit::<T>(2.0) - &state.p_prev;
        loads_k + spmv(&f.mass_a, &m_part) / (dt * dt) + spmv(&f.damping, &state.p_prev) * (lit::<T>(0.5) / dt)
            - spmv(&self.ops.spatial, &state.p_curr)
    }

    pub fn step(&self, state: &DgState<T>, loads_k: &DVector<T>) -> Result<DgState<T>> {
        let b = self.step_rhs(state, loads_k);
        let (p, mu_r) = self.blocks.solve(self.ops.space, &b);
        let sym = scaled_residual(&self.ops.forms.skew, &p);
        if sym > guard_tolerance::<T>() {
            return Err(Error::Factorization(format!("weak symmetry residual {:e}", to_f64(sym))));
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence("DG iterate is not finite"));
        }
        let two_dt = lit::<T>(2.0) * self.grid.dt();
        Ok(DgState {
            r_prev: state.r_curr.clone(),
            r_curr: &state.r_prev + mu_r * two_dt,
            p_prev: state.p_curr.clone(),
            p_curr: p,
            k: state.k + 1,
        })
    }

    pub fn advance(&self, state: &DgState<T>, loads: &dyn Loads<T>) -> Result<DgState<T>> {
        let b = assemble_rhs(self.ops.space, loads, self.grid.time(state.k), Scheme::Dg);
        self.step(state, &b)
    }

    pub fn run(
        &self,
        data: &Startup<'_, T>,
        loads: &dyn Loads<T>,
        mut observe: impl FnMut(&DgState<T>),
    ) -> Result<DgState<T>> {
        let mut state = self.initialize(data, loads)?;
        observe(&state);
        while state.k < self.grid.steps {
            state = self.advance(&state, loads)?;
            observe(&state);
        }
        Ok(state)
    }

    /// Discrete energy of `(p^{k−1}, p^k)` and the jump seminorm of `p^k`.
    pub fn energy_and_jumps(&self, state: &DgState<T>) -> (T, T) {
        let e = discrete_energy(&self.ops.forms, &state.p_prev, &state.p_curr, self.grid.dt());
        (e, self.ops.jump_seminorm(&state.p_curr))
    }
}
