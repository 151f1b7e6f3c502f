use std::sync::Arc;

use nalgebra::DVector;

use crate::assembly::{assemble_rhs, FeSpace, Loads, PairField, Scheme};
use crate::cg::Startup;
use crate::error::{Error, Result};
use crate::materials::{Material, MaterialTable};
use crate::scalar::{lit, to_f64, Point, Scalar, Tensor};

use super::jet::{div_lame, gradient, jets_at, strain, value, Jet2, SmoothVectorField};

/// A stress field given together with its divergence.
pub trait StressField<T: Scalar>: Sync {
    fn stress(&self, x: &Point<T>, subdomain: usize) -> Tensor<T>;
    fn div(&self, x: &Point<T>, subdomain: usize) -> Point<T>;
}

pub struct ZeroVector;

impl<T: Scalar> SmoothVectorField<T> for ZeroVector {
    fn eval(&self, _: [Jet2<T>; 2]) -> [Jet2<T>; 2] {
        [Jet2::constant(T::zero()); 2]
    }
}

impl<T: Scalar> StressField<T> for ZeroVector {
    fn stress(&self, _: &Point<T>, _: usize) -> Tensor<T> {
        Tensor::zeros()
    }
    fn div(&self, _: &Point<T>, _: usize) -> Point<T> {
        Point::zeros()
    }
}

/// Initial displacement, velocity, stress and acceleration. The acceleration
/// must equal `ρ⁻¹(F(0) + div σ₀)`; it is passed explicitly because building
/// `p̈(0)` needs its second derivatives.
pub struct InitialData<'d, T: Scalar> {
    pub u0: &'d dyn SmoothVectorField<T>,
    pub u1: &'d dyn SmoothVectorField<T>,
    pub sigma0: &'d dyn StressField<T>,
    pub a0: &'d dyn SmoothVectorField<T>,
    pub materials: &'d MaterialTable<T>,
}

#[derive(Clone, Copy, Debug)]
struct Level<T: Scalar> {
    gamma: Tensor<T>,
    div_gamma: Point<T>,
    zeta: Tensor<T>,
    div_zeta: Point<T>,
}

impl<'d, T: Scalar> InitialData<'d, T> {
    /// `p₀`, `p₁` and `p̈(0)` built by the compatibility cascade
    /// `ζ₀ = ω̃⁻¹(σ₀ − γ₀)`, `ζ₁ = ω̃⁻¹(Dε(u₁) − γ₁ − ζ₀)`,
    /// `ζ̈(0) = ω̃⁻¹(Dε(ü(0)) − γ̈(0) − ζ₁)` with `γ = Cε(·)` at each level.
    pub fn pairs(&self) -> [CompatiblePair<'_, 'd, T>; 3] {
        [0, 1, 2].map(|level| CompatiblePair { data: self, level })
    }

    fn cascade(&self, x: &Point<T>, sub: usize, upto: usize) -> Level<T> {
        let m = self.materials.get(sub).expect("subdomain validated by the mesh");
        let inv = m.tilde_omega_inv();
        let u0 = jets_at(self.u0, x);
        let gamma = m.c.apply(&strain(&u0));
        let div_gamma = div_lame(&m.c, &u0);
        let mut lv = Level {
            gamma,
            div_gamma,
            zeta: (self.sigma0.stress(x, sub) - gamma) * inv,
            div_zeta: (self.sigma0.div(x, sub) - div_gamma) * inv,
        };
        for field in [self.u1, self.a0].into_iter().take(upto) {
            let u = jets_at(field, x);
            let gamma = m.c.apply(&strain(&u));
            let div_gamma = div_lame(&m.c, &u);
            lv = Level {
                gamma,
                div_gamma,
                zeta: (m.d.apply(&strain(&u)) - gamma - lv.zeta) * inv,
                div_zeta: (div_lame(&m.d, &u) - div_gamma - lv.div_zeta) * inv,
            };
        }
        lv
    }
}

/// One level of the compatible initial pairs, as a field.
pub struct CompatiblePair<'a, 'd, T: Scalar> {
    data: &'a InitialData<'d, T>,
    level: usize,
}

impl<T: Scalar> PairField<T> for CompatiblePair<'_, '_, T> {
    fn gamma(&self, x: &Point<T>, sub: usize) -> Tensor<T> {
        self.data.cascade(x, sub, self.level).gamma
    }

    fn zeta(&self, x: &Point<T>, sub: usize) -> Tensor<T> {
        self.data.cascade(x, sub, self.level).zeta
    }

    fn div_stress(&self, x: &Point<T>, sub: usize) -> Point<T> {
        let lv = self.data.cascade(x, sub, self.level);
        let w = self.data.materials.get(sub).map(|m| m.omega).unwrap_or(T::zero());
        lv.div_gamma + lv.div_zeta * w
    }
}

/// Reference displacement profile `w = (x − ½)² (sin πx sin πy, cos πx cos πy + xy)`.
/// Its strain vanishes on the line `x = ½`, so the stresses of the separable
/// family are continuous across an interface there whatever the materials.
pub struct ReferenceProfile;

impl<T: Scalar> SmoothVectorField<T> for ReferenceProfile {
    fn eval(&self, x: [Jet2<T>; 2]) -> [Jet2<T>; 2] {
        let pi = T::pi();
        let [a, b] = x;
        let s = (a + lit::<T>(-0.5)).powi(2);
        let (pa, pb) = (a * pi, b * pi);
        [s * pa.sin() * pb.sin(), s * (pa.cos() * pb.cos() + a * b)]
    }
}

/// Manufactured solution `u = sin t · w` of the full system:
/// `γ = sin t · Cε(w)`, `ζ = f(t)(D − C)ε(w)` on viscoelastic parts with
/// `f = (cos t + ω sin t)/(1 + ω²)` solving `ωζ̇ + ζ = (D − C)ε(u̇)`,
/// `F = ρü − div σ` and `g = u` on the boundary.
#[derive(Clone)]
pub struct ManufacturedCase<T: Scalar> {
    w: Arc<dyn SmoothVectorField<T> + Send>,
    materials: MaterialTable<T>,
}

/// Largest pointwise residuals found by [`ManufacturedCase::check`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CaseResiduals {
    /// `ωζ̇ + ζ − (D − C)ε(u̇)` on viscoelastic parts.
    pub constitutive: f64,
    /// `γ − Cε(u)`.
    pub hooke: f64,
    /// `ζ` on elastic parts.
    pub elastic_zeta: f64,
    /// `ü(0) − ρ⁻¹(F(0) + div σ₀)`.
    pub acceleration: f64,
    /// Compatible start pairs against the exact `p(0)`, `ṗ(0)`, `p̈(0)`.
    pub startup: f64,
}

pub const CASE_TOLERANCE: f64 = 1e-10;

impl<T: Scalar> ManufacturedCase<T> {
    pub fn new(w: Arc<dyn SmoothVectorField<T> + Send>, materials: MaterialTable<T>) -> Self {
        Self { w, materials }
    }

    pub fn reference(materials: MaterialTable<T>) -> Self {
        Self::new(Arc::new(ReferenceProfile), materials)
    }

    pub fn materials(&self) -> &MaterialTable<T> {
        &self.materials
    }

    pub fn profile(&self) -> &dyn SmoothVectorField<T> {
        &*self.w
    }

    fn material(&self, sub: usize) -> &Material<T> {
        self.materials.get(sub).expect("subdomain validated by the mesh")
    }

    /// `d^order/dt^order sin t`.
    fn elastic_factor(t: T, order: usize) -> T {
        match order % 4 {
            0 => t.sin(),
            1 => t.cos(),
            2 => -t.sin(),
            _ => -t.cos(),
        }
    }

    /// `d^order/dt^order f(t)`.
    fn memory_factor(omega: T, t: T, order: usize) -> T {
        let c = T::one() + omega * omega;
        match order % 4 {
            0 => (t.cos() + omega * t.sin()) / c,
            1 => (-t.sin() + omega * t.cos()) / c,
            2 => (-t.cos() - omega * t.sin()) / c,
            _ => (t.sin() - omega * t.cos()) / c,
        }
    }

    pub fn displacement(&self, x: &Point<T>, t: T) -> Point<T> {
        value(&jets_at(&*self.w, x)) * t.sin()
    }

    pub fn velocity(&self, x: &Point<T>, t: T) -> Point<T> {
        value(&jets_at(&*self.w, x)) * t.cos()
    }

    /// `d^order γ / dt^order`.
    pub fn gamma(&self, x: &Point<T>, sub: usize, t: T, order: usize) -> Tensor<T> {
        self.material(sub).c.apply(&strain(&jets_at(&*self.w, x))) * Self::elastic_factor(t, order)
    }

    /// `d^order ζ / dt^order` (zero on elastic parts).
    pub fn zeta(&self, x: &Point<T>, sub: usize, t: T, order: usize) -> Tensor<T> {
        let m = self.material(sub);
        if !m.is_viscoelastic() {
            return Tensor::zeros();
        }
        m.relaxed().apply(&strain(&jets_at(&*self.w, x))) * Self::memory_factor(m.omega, t, order)
    }

    pub fn stress(&self, x: &Point<T>, sub: usize, t: T) -> Tensor<T> {
        self.gamma(x, sub, t, 0) + self.zeta(x, sub, t, 0) * self.material(sub).omega
    }

    /// `d^order/dt^order div σ`.
    pub fn div_stress(&self, x: &Point<T>, sub: usize, t: T, order: usize) -> Point<T> {
        let m = self.material(sub);
        let j = jets_at(&*self.w, x);
        let mut d = div_lame(&m.c, &j) * Self::elastic_factor(t, order);
        if m.is_viscoelastic() {
            d += div_lame(&m.relaxed(), &j) * (m.omega * Self::memory_factor(m.omega, t, order));
        }
        d
    }

    /// `r = skew ∇u̇ − skew ∇u₁ = (cos t − 1) skew ∇w`.
    pub fn rotation(&self, x: &Point<T>, t: T) -> Tensor<T> {
        let g = gradient(&jets_at(&*self.w, x));
        (g - g.transpose()) * (lit::<T>(0.5) * (t.cos() - T::one()))
    }

    /// `F = ρü − div σ`.
    pub fn body_force(&self, x: &Point<T>, sub: usize, t: T) -> Point<T> {
        let rho = self.material(sub).rho;
        -value(&jets_at(&*self.w, x)) * (rho * t.sin()) - self.div_stress(x, sub, t, 0)
    }

    /// Exact `d^order p / dt^order` at time `t`.
    pub fn pair(&self, t: T, order: usize) -> ExactPair<'_, T> {
        ExactPair { case: self, t, order }
    }

    /// `u₀ = 0`, `u₁ = w`, `σ₀ = σ(0)`, `ü(0) = 0`.
    pub fn initial_data(&self) -> InitialData<'_, T> {
        InitialData {
            u0: &ZeroVector,
            u1: &*self.w,
            sigma0: self,
            a0: &ZeroVector,
            materials: &self.materials,
        }
    }

    /// Samples the defining identities at deterministic points and times and
    /// fails if any residual exceeds `1e-10` relative to the field scale.
    pub fn check(&self, samples: usize) -> Result<CaseResiduals> {
        let mut res = CaseResiduals::default();
        let mut scale = 1.0f64;
        let data = self.initial_data();
        let start = data.pairs();
        let subs: Vec<usize> = self.materials.iter().map(|(j, _)| j).collect();
        let nrm = |t: &Tensor<T>| to_f64(t.norm());
        for i in 0..samples {
            let x = Point::new(lit::<T>(halton(i + 1, 2)), lit::<T>(halton(i + 1, 3)));
            let t = lit::<T>(2.0 * halton(i + 1, 5));
            let sub = subs[i % subs.len()];
            let m = self.material(sub);
            let j = jets_at(&*self.w, &x);
            let u_strain = strain(&j) * t.sin();
            let v_strain = strain(&j) * t.cos();
            let zeta = self.zeta(&x, sub, t, 0);
            let zeta_dot = self.zeta(&x, sub, t, 1);
            let gamma = self.gamma(&x, sub, t, 0);
            scale = scale.max(nrm(&gamma)).max(nrm(&zeta)).max(nrm(&m.d.apply(&v_strain)));
            if m.is_viscoelastic() {
                let r = zeta_dot * m.omega + zeta - m.relaxed().apply(&v_strain);
                res.constitutive = res.constitutive.max(nrm(&r));
            } else {
                res.elastic_zeta = res.elastic_zeta.max(nrm(&zeta));
            }
            res.hooke = res.hooke.max(nrm(&(gamma - m.c.apply(&u_strain))));
            let f0 = self.body_force(&x, sub, T::zero());
            let a0 = (f0 + self.div_stress(&x, sub, T::zero(), 0)) / m.rho;
            res.acceleration = res.acceleration.max(to_f64(a0.norm()));
            for (order, p) in start.iter().enumerate() {
                let exact = self.pair(T::zero(), order);
                let dg = p.gamma(&x, sub) - exact.gamma(&x, sub);
                let dz = p.zeta(&x, sub) - exact.zeta(&x, sub);
                let dd = p.div_stress(&x, sub) - exact.div_stress(&x, sub);
                res.startup = res.startup.max(nrm(&dg)).max(nrm(&dz)).max(to_f64(dd.norm()));
            }
        }
        let tol = CASE_TOLERANCE * scale;
        let worst = [res.constitutive, res.hooke, res.elastic_zeta, res.acceleration, res.startup];
        if worst.iter().any(|&r| !(r <= tol)) {
            return Err(Error::CaseCheck(format!("{res:?} exceeds {tol:e}")));
        }
        Ok(res)
    }
}

/// Van der Corput radical inverse, used for deterministic sampling.
fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

impl<T: Scalar> StressField<T> for ManufacturedCase<T> {
    fn stress(&self, x: &Point<T>, sub: usize) -> Tensor<T> {
        ManufacturedCase::stress(self, x, sub, T::zero())
    }

    fn div(&self, x: &Point<T>, sub: usize) -> Point<T> {
        self.div_stress(x, sub, T::zero(), 0)
    }
}

impl<T: Scalar> Loads<T> for ManufacturedCase<T> {
    fn body_force(&self, x: &Point<T>, sub: usize, t: T) -> Point<T> {
        ManufacturedCase::body_force(self, x, sub, t)
    }

    /// `g̈ = −sin t · w`.
    fn boundary_acceleration(&self, x: &Point<T>, _: i32, t: T) -> Point<T> {
        -value(&jets_at(&*self.w, x)) * t.sin()
    }
}

/// Spatial part of the loads multiplying `sin t`.
struct SineLoads<'c, T: Scalar>(&'c ManufacturedCase<T>);

impl<T: Scalar> Loads<T> for SineLoads<'_, T> {
    fn body_force(&self, x: &Point<T>, sub: usize, _: T) -> Point<T> {
        let m = self.0.material(sub);
        let j = jets_at(&*self.0.w, x);
        -value(&j) * m.rho - div_lame(&m.c, &j)
    }

    fn boundary_acceleration(&self, x: &Point<T>, _: i32, _: T) -> Point<T> {
        -value(&jets_at(&*self.0.w, x))
    }
}

/// Spatial part of the loads multiplying the memory factor of subdomain `sub`.
struct MemoryLoads<'c, T: Scalar> {
    case: &'c ManufacturedCase<T>,
    sub: usize,
}

impl<T: Scalar> Loads<T> for MemoryLoads<'_, T> {
    fn body_force(&self, x: &Point<T>, sub: usize, _: T) -> Point<T> {
        let m = self.case.material(sub);
        if sub != self.sub || !m.is_viscoelastic() {
            return Point::zeros();
        }
        -div_lame(&m.relaxed(), &jets_at(&*self.case.w, x)) * m.omega
    }

    fn boundary_acceleration(&self, _: &Point<T>, _: i32, _: T) -> Point<T> {
        Point::zeros()
    }
}

/// Load vectors of a manufactured case on one space. The loads are
/// separable in time, so a few vectors assembled once give the right-hand
/// side at any `t`.
pub struct CachedLoads<T: Scalar> {
    sine: DVector<T>,
    memory: Vec<(T, DVector<T>)>,
}

impl<T: Scalar> CachedLoads<T> {
    pub fn new(case: &ManufacturedCase<T>, space: &FeSpace<T>, scheme: Scheme) -> Self {
        let sine = assemble_rhs(space, &SineLoads(case), T::zero(), scheme);
        let memory = case
            .materials
            .iter()
            .filter(|(_, m)| m.is_viscoelastic())
            .map(|(sub, m)| (m.omega, assemble_rhs(space, &MemoryLoads { case, sub }, T::zero(), scheme)))
            .collect();
        Self { sine, memory }
    }

    /// The assembled right-hand side at time `t`.
    pub fn at(&self, t: T) -> DVector<T> {
        let mut b = &self.sine * t.sin();
        for (omega, v) in &self.memory {
            b.axpy(ManufacturedCase::<T>::memory_factor(*omega, t, 0), v, T::one());
        }
        b
    }
}

/// Exact time derivative of the pair, as a field.
pub struct ExactPair<'c, T: Scalar> {
    case: &'c ManufacturedCase<T>,
    t: T,
    order: usize,
}

impl<T: Scalar> PairField<T> for ExactPair<'_, T> {
    fn gamma(&self, x: &Point<T>, sub: usize) -> Tensor<T> {
        self.case.gamma(x, sub, self.t, self.order)
    }

    fn zeta(&self, x: &Point<T>, sub: usize) -> Tensor<T> {
        self.case.zeta(x, sub, self.t, self.order)
    }

    fn div_stress(&self, x: &Point<T>, sub: usize) -> Point<T> {
        self.case.div_stress(x, sub, self.t, self.order)
    }
}

/// Holds the three compatible start pairs of a case and lends them out as a
/// [`Startup`].
pub struct StartupPairs<'a, 'd, T: Scalar> {
    pairs: [CompatiblePair<'a, 'd, T>; 3],
}

impl<'a, 'd, T: Scalar> StartupPairs<'a, 'd, T> {
    pub fn new(data: &'a InitialData<'d, T>) -> Self {
        Self { pairs: data.pairs() }
    }

    pub fn startup(&self) -> Startup<'_, T> {
        Startup { p0: &self.pairs[0], p1: &self.pairs[1], p_ddot0: &self.pairs[2] }
    }
}
