//! Per-subdomain material data and the isotropic constitutive operators
//! C, D, A = C⁻¹ and V = (D − C)⁻¹ in plane strain.

use std::collections::BTreeMap;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, tensor_unit, Scalar, Tensor};

/// Isotropic fourth-order tensor `e ↦ λ tr(e) I + 2μ e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lame<T> {
    pub lambda: T,
    pub mu: T,
}

impl<T: Scalar> Lame<T> {
    pub fn new(lambda: T, mu: T) -> Self {
        Self { lambda, mu }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.mu > T::zero() && self.lambda + self.mu > T::zero()
    }

    pub fn apply(&self, e: &Tensor<T>) -> Tensor<T> {
        Tensor::identity() * (self.lambda * e.trace()) + e * (self.mu + self.mu)
    }

    /// Closed-form inverse `s/(2μ) − λ tr(s) I / (2μ(2λ + 2μ))`. It is valid on
    /// all 2x2 tensors, not only symmetric ones.
    pub fn apply_inverse(&self, s: &Tensor<T>) -> Tensor<T> {
        let two_mu = self.mu + self.mu;
        s / two_mu - Tensor::identity() * (self.lambda * s.trace() / (two_mu * (two_mu + self.lambda + self.lambda)))
    }

    /// `self - other` (as Lamé pairs).
    pub fn minus(&self, other: &Self) -> Self {
        Self::new(self.lambda - other.lambda, self.mu - other.mu)
    }

    /// Extreme eigenvalues `(min, max)`: `2λ + 2μ` on the trace part, `2μ` otherwise.
    pub fn eigen_bounds(&self) -> (T, T) {
        let a = self.lambda * lit(2.0) + self.mu * lit(2.0);
        let b = self.mu * lit(2.0);
        (a.min(b), a.max(b))
    }

    /// Matrix of the inverse in the component basis `E_c`, `c = 2 * row + col`.
    pub fn inverse_matrix(&self) -> Matrix4<T> {
        Matrix4::from_fn(|d, c| self.apply_inverse(&tensor_unit(c))[(d / 2, d % 2)])
    }
}

/// Material of one subdomain. `omega = 0` marks an elastic subdomain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    pub rho: T,
    pub omega: T,
    #[serde(rename = "C")]
    pub c: Lame<T>,
    #[serde(rename = "D")]
    pub d: Lame<T>,
}

impl<T: Scalar> Material<T> {
    pub fn elastic(rho: T, c: Lame<T>) -> Self {
        Self { rho, omega: T::zero(), c, d: c }
    }

    pub fn is_viscoelastic(&self) -> bool {
        self.omega != T::zero()
    }

    /// `1/ω` on viscoelastic subdomains and 0 on elastic ones.
    pub fn tilde_omega_inv(&self) -> T {
        if self.is_viscoelastic() {
            T::one() / self.omega
        } else {
            T::zero()
        }
    }

    /// The Lamé pair of `D − C`.
    pub fn relaxed(&self) -> Lame<T> {
        self.d.minus(&self.c)
    }
}

/// Materials keyed by subdomain id.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialTable<T: Scalar> {
    entries: BTreeMap<usize, Material<T>>,
}

impl<T: Scalar> MaterialTable<T> {
    /// Builds and validates a table.
    pub fn new(entries: BTreeMap<usize, Material<T>>) -> Result<Self> {
        let table = Self { entries };
        table.validate()?;
        Ok(table)
    }

    /// Subdomain 1 elastic (`ρ = 1`, `C = (1, 1)`), subdomain 2 viscoelastic
    /// (`ρ = 1`, `ω = 1/2`, `C = (1, 1/2)`, `D = (2, 1)`).
    pub fn reference_composite() -> Self {
        let one = T::one();
        let half = lit::<T>(0.5);
        let two = lit::<T>(2.0);
        let mut m = BTreeMap::new();
        m.insert(1, Material::elastic(one, Lame::new(one, one)));
        m.insert(2, Material { rho: one, omega: half, c: Lame::new(one, half), d: Lame::new(two, one) });
        Self { entries: m }
    }

    /// Both reference subdomains elastic with `C = (1, 1)`.
    pub fn reference_elastic() -> Self {
        let one = T::one();
        let mut m = BTreeMap::new();
        for j in [1, 2] {
            m.insert(j, Material::elastic(one, Lame::new(one, one)));
        }
        Self { entries: m }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.entries.is_empty() {
            problems.push("no subdomains defined".to_string());
        }
        for (&j, m) in &self.entries {
            if j == 0 {
                problems.push("subdomain ids start at 1".into());
            }
            if !(m.rho > T::zero()) {
                problems.push(format!("subdomain {j}: rho must be positive"));
            }
            if !(m.omega >= T::zero()) {
                problems.push(format!("subdomain {j}: omega must be nonnegative"));
            }
            if !m.c.is_positive_definite() {
                problems.push(format!("subdomain {j}: C is not positive definite"));
            }
            if m.is_viscoelastic() && !m.relaxed().is_positive_definite() {
                problems.push(format!("subdomain {j}: D - C is not positive definite"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMaterials(problems))
        }
    }

    pub fn get(&self, j: usize) -> Result<&Material<T>> {
        self.entries.get(&j).ok_or(Error::UnknownSubdomain(j))
    }

    pub fn contains(&self, j: usize) -> bool {
        self.entries.contains_key(&j)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Material<T>)> {
        self.entries.iter().map(|(&j, m)| (j, m))
    }

    pub fn is_viscoelastic(&self, j: usize) -> Result<bool> {
        Ok(self.get(j)?.is_viscoelastic())
    }

    pub fn tilde_omega_inv(&self, j: usize) -> Result<T> {
        Ok(self.get(j)?.tilde_omega_inv())
    }

    pub fn apply_c(&self, j: usize, e: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.get(j)?.c.apply(e))
    }

    pub fn apply_d(&self, j: usize, e: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.get(j)?.d.apply(e))
    }

    pub fn apply_a(&self, j: usize, s: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.get(j)?.c.apply_inverse(s))
    }

    pub fn apply_v(&self, j: usize, s: &Tensor<T>) -> Result<Tensor<T>> {
        let m = self.get(j)?;
        if !m.is_viscoelastic() {
            return Err(Error::ElasticSubdomain(j));
        }
        Ok(m.relaxed().apply_inverse(s))
    }

    /// `‖ρ⁻¹‖_∞` over all subdomains.
    pub fn max_inv_rho(&self) -> T {
        self.entries.values().fold(T::zero(), |a, m| a.max(T::one() / m.rho))
    }

    /// Coercivity and continuity constants `(α, M)` of `A(·,·)`: the extreme
    /// eigenvalues of `A_j` and, on viscoelastic subdomains, `V_j`.
    pub fn coercivity_bounds(&self) -> (T, T) {
        let mut lo = T::max_value().unwrap_or_else(|| lit(f64::MAX));
        let mut hi = T::zero();
        for m in self.entries.values() {
            let mut ops = vec![m.c];
            if m.is_viscoelastic() {
                ops.push(m.relaxed());
            }
            for op in ops {
                let (a, b) = op.eigen_bounds();
                lo = lo.min(T::one() / b);
                hi = hi.max(T::one() / a);
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn composite() -> MaterialTable<f64> {
        let t = MaterialTable::reference_composite();
        t.validate().unwrap();
        t
    }

    #[test]
    fn lame_examples() {
        let c = Lame::new(1.0, 1.0);
        assert!((c.apply(&Tensor::identity()) - Tensor::identity() * 4.0).amax() < 1e-15);
        let e = Tensor::new(0.0, 1.0, 1.0, 0.0);
        assert!((c.apply(&e) - e * 2.0).amax() < 1e-15);
        assert_eq!(c.apply_inverse(&Tensor::zeros()), Tensor::zeros());
    }

    #[test]
    fn validation_reports_problems() {
        let t = composite();
        assert!(t.is_viscoelastic(2).unwrap() && !t.is_viscoelastic(1).unwrap());
        assert_eq!(t.tilde_omega_inv(2).unwrap(), 2.0);
        assert_eq!(t.tilde_omega_inv(1).unwrap(), 0.0);
        assert!(matches!(t.apply_v(1, &Tensor::identity()), Err(Error::ElasticSubdomain(1))));

        let mut m = BTreeMap::new();
        m.insert(1, Material { rho: -1.0, omega: 0.3, c: Lame::new(1.0, 1.0), d: Lame::new(1.0, 1.0) });
        match MaterialTable::new(m) {
            Err(Error::InvalidMaterials(p)) => assert_eq!(p.len(), 2),
            other => panic!("{other:?}"),
        }
        let mut m = BTreeMap::new();
        m.insert(1, Material::elastic(2.0, Lame::new(1.0, 1.0)));
        m.insert(3, Material::elastic(1.0, Lame::new(0.0, 0.5)));
        assert!(MaterialTable::new(m).is_ok());
    }

    fn sym() -> impl Strategy<Value = Tensor<f64>> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(a, b, c)| Tensor::new(a, b, b, c))
    }

    proptest! {
        #[test]
        fn inverse_pairs(e in sym()) {
            let t = composite();
            for j in [1, 2] {
                let back = t.apply_a(j, &t.apply_c(j, &e).unwrap()).unwrap();
                prop_assert!((back - e).amax() <= 1e-12 * e.amax().max(1.0));
            }
            let dc = t.apply_d(2, &e).unwrap() - t.apply_c(2, &e).unwrap();
            let back = t.apply_v(2, &dc).unwrap();
            prop_assert!((back - e).amax() <= 1e-12 * e.amax().max(1.0));
        }

        #[test]
        fn coercivity_bounds_hold(e in sym()) {
            let t = composite();
            let (alpha, big_m) = t.coercivity_bounds();
            prop_assert!(alpha > 0.0);
            let n2 = crate::scalar::ddot(&e, &e);
            for j in [1, 2] {
                let a = crate::scalar::ddot(&t.apply_a(j, &e).unwrap(), &e);
                prop_assert!(a >= alpha * n2 - 1e-12 && a <= big_m * n2 + 1e-12);
            }
            let v = crate::scalar::ddot(&t.apply_v(2, &e).unwrap(), &e);
            prop_assert!(v >= alpha * n2 - 1e-12 && v <= big_m * n2 + 1e-12);
        }
    }
}
