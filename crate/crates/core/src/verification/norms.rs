use rayon::prelude::*;

use crate::assembly::{FeSpace, StressPair};
use crate::fem_basis::make_quadrature_unchecked;
use crate::mesh::FacetTopology;
use crate::scalar::{to_f64, Point, Scalar, Tensor};
use crate::Result;
use nalgebra::DVector;

use super::case::ManufacturedCase;
use super::jet::{gradient, jets_at, strain, div_lame, value};

/// Squared contributions split by the kind of element they come from.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Split {
    pub elastic: f64,
    pub viscoelastic: f64,
}

impl Split {
    fn add(&mut self, visco: bool, v: f64) {
        if visco {
            self.viscoelastic += v;
        } else {
            self.elastic += v;
        }
    }

    fn plus(self, o: Split) -> Split {
        Split { elastic: self.elastic + o.elastic, viscoelastic: self.viscoelastic + o.viscoelastic }
    }

    pub fn total(&self) -> f64 {
        self.elastic + self.viscoelastic
    }

    /// Square roots of the total and of both parts.
    pub fn norms(&self) -> Norms {
        Norms { total: self.total().sqrt(), elastic: self.elastic.sqrt(), viscoelastic: self.viscoelastic.sqrt() }
    }
}

/// Norm of a quantity over the whole domain and restricted to the elastic and
/// viscoelastic parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Norms {
    pub total: f64,
    pub elastic: f64,
    pub viscoelastic: f64,
}

impl Norms {
    pub fn max(self, o: Norms) -> Norms {
        Norms {
            total: self.total.max(o.total),
            elastic: self.elastic.max(o.elastic),
            viscoelastic: self.viscoelastic.max(o.viscoelastic),
        }
    }
}

/// Squared pieces of the 𝔖(h) norm: `‖γ‖² + ‖ωζ‖²`, `‖div_h j_ω⁺·‖²` and
/// `‖h^{-1/2}[[j_ω⁺·]]‖²`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairParts {
    pub l2: Split,
    pub div: Split,
    pub jump: Split,
}

impl PairParts {
    /// The 𝔖 norm (jumps ignored).
    pub fn conforming(&self) -> Norms {
        self.l2.plus(self.div).norms()
    }

    /// The 𝔖(h) norm.
    pub fn broken(&self) -> Norms {
        self.l2.plus(self.div).plus(self.jump).norms()
    }
}

struct QPoint<T: Scalar> {
    weight: T,
    phi: Vec<T>,
    grads: Vec<Point<T>>,
    /// `Cε(w)`, `(D − C)ε(w)`, their divergences, `w` and `skew ∇w`.
    c_strain: Tensor<T>,
    v_strain: Tensor<T>,
    div_c: Point<T>,
    div_v: Point<T>,
    w: Point<T>,
    skew: Tensor<T>,
}

struct FacetCache<T: Scalar> {
    elements: [usize; 2],
    normals: [Point<T>; 2],
    /// Per point: `weight / h_F` and the basis values from both sides.
    points: Vec<(T, [Vec<T>; 2])>,
}

struct ElementCache<T: Scalar> {
    visco: bool,
    omega: T,
    points: Vec<QPoint<T>>,
}

/// Error norms against a manufactured case, by quadrature of degree `2k + 4`.
/// The spatial parts of the exact fields are tabulated once; only the scalar
/// time factors change between steps.
pub struct ErrorEvaluator<'a, T: Scalar> {
    space: &'a FeSpace<T>,
    case: &'a ManufacturedCase<T>,
    cache: Vec<ElementCache<T>>,
    facets: Vec<FacetCache<T>>,
}

impl<'a, T: Scalar> ErrorEvaluator<'a, T> {
    pub fn new(space: &'a FeSpace<T>, case: &'a ManufacturedCase<T>) -> Result<Self> {
        let rule = make_quadrature_unchecked::<T>(2 * space.order() + 4)?;
        let w = case.profile();
        let cache = (0..space.mesh().num_elements())
            .into_par_iter()
            .map(|e| {
                let ops = space.element(e);
                let m = ops.material;
                let relaxed = m.relaxed();
                let points = (0..rule.len())
                    .map(|q| {
                        let xi = rule.xi(q);
                        let x = ops.geom.map(&xi);
                        let j = jets_at(w, &x);
                        let eps = strain(&j);
                        let g = gradient(&j);
                        let (v_strain, div_v) = if ops.viscoelastic {
                            (relaxed.apply(&eps), div_lame(&relaxed, &j))
                        } else {
                            (Tensor::zeros(), Point::zeros())
                        };
                        QPoint {
                            weight: rule.weights[q] * ops.geom.det.abs(),
                            phi: space.basis().eval(&xi),
                            grads: space.basis().eval_grad(&xi).iter().map(|g| ops.geom.grad_to_physical(g)).collect(),
                            c_strain: m.c.apply(&eps),
                            v_strain,
                            div_c: div_lame(&m.c, &j),
                            div_v,
                            w: value(&j),
                            skew: (g - g.transpose()) * crate::scalar::lit::<T>(0.5),
                        }
                    })
                    .collect();
                ElementCache { visco: ops.viscoelastic, omega: ops.omega(), points }
            })
            .collect();
        let facets = space
            .facets()
            .interior
            .par_iter()
            .map(|f| {
                let geo = f.elements.map(|e| space.mesh().geometry(e));
                let rule = space.line_rule();
                let points = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&s, &w)| {
                        let x = FacetTopology::point(space.mesh(), f.vertices, s);
                        let phi = [0, 1].map(|side| space.basis().eval(&geo[side].to_reference(&x)));
                        (w, phi)
                    })
                    .collect();
                FacetCache {
                    elements: f.elements,
                    normals: [0, 1].map(|side| geo[side].outward_normal(f.local_edges[side])),
                    points,
                }
            })
            .collect();
        Ok(Self { space, case, cache, facets })
    }

    pub fn space(&self) -> &'a FeSpace<T> {
        self.space
    }

    pub fn case(&self) -> &'a ManufacturedCase<T> {
        self.case
    }

    /// Time factors `(a, b)` with `γ = a Cε(w)` and `ζ = b (D − C)ε(w)`.
    fn factors(&self, omega: T, exact: Option<(T, usize)>) -> (T, T) {
        match exact {
            None => (T::zero(), T::zero()),
            Some((t, order)) => {
                let one = T::one();
                let c = one + omega * omega;
                let (s, co) = (t.sin(), t.cos());
                let (a, b) = match order % 4 {
                    0 => (s, (co + omega * s) / c),
                    1 => (co, (-s + omega * co) / c),
                    2 => (-s, (-co - omega * s) / c),
                    _ => (-co, (s - omega * co) / c),
                };
                (a, b)
            }
        }
    }

    /// Volume parts of `‖p_exact − p‖²`, where the exact pair is the
    /// `order`-th time derivative at `t` (or zero for `None`). Jumps are
    /// zero here; see [`ErrorEvaluator::jump`].
    pub fn pair_parts(&self, p: &StressPair<T>, exact: Option<(T, usize)>) -> PairParts {
        let dm = self.space.dofmap();
        let n = dm.n;
        let parts: Vec<(bool, f64, f64)> = self
            .cache
            .par_iter()
            .enumerate()
            .map(|(e, el)| {
                let (a, b) = self.factors(el.omega, exact);
                let r = dm.stress_range(e);
                let cg = &p.as_slice()[r.start..r.start + 4 * n];
                let cz = el.visco.then(|| &p.as_slice()[r.start + 4 * n..r.end]);
                let (mut l2, mut div) = (T::zero(), T::zero());
                for q in &el.points {
                    let mut gh = Tensor::zeros();
                    let mut zh = Tensor::zeros();
                    let mut dh = Point::zeros();
                    for c in 0..4 {
                        let (ra, rb) = (c / 2, c % 2);
                        let mut gv = T::zero();
                        let mut zv = T::zero();
                        let mut dv = T::zero();
                        for i in 0..n {
                            let s = cg[c * n + i] + cz.map_or(T::zero(), |z| el.omega * z[c * n + i]);
                            gv += cg[c * n + i] * q.phi[i];
                            if let Some(z) = cz {
                                zv += z[c * n + i] * q.phi[i];
                            }
                            dv += s * q.grads[i][rb];
                        }
                        gh[(ra, rb)] = gv;
                        zh[(ra, rb)] = zv;
                        dh[ra] += dv;
                    }
                    let eg = q.c_strain * a - gh;
                    let ez = (q.v_strain * b - zh) * el.omega;
                    let ed = q.div_c * a + q.div_v * (el.omega * b) - dh;
                    l2 += (eg.norm_squared() + ez.norm_squared()) * q.weight;
                    div += ed.norm_squared() * q.weight;
                }
                (el.visco, to_f64(l2), to_f64(div))
            })
            .collect();
        let mut out = PairParts::default();
        for (visco, l2, div) in parts {
            out.l2.add(visco, l2);
            out.div.add(visco, div);
        }
        out
    }

    /// `‖h_F^{-1/2}[[j_ω⁺p]]‖²` over interior facets. Facets on the interface
    /// between the two kinds of material count half to each side.
    pub fn jump(&self, p: &StressPair<T>) -> Split {
        let dm = self.space.dofmap();
        let n = dm.n;
        let parts: Vec<[(bool, f64); 2]> = self
            .facets
            .par_iter()
            .map(|f| {
                let mut sum = T::zero();
                for (w, phi) in &f.points {
                    let mut j = Point::<T>::zeros();
                    for side in 0..2 {
                        let e = f.elements[side];
                        let el = &self.cache[e];
                        let r = dm.stress_range(e);
                        let c = &p.as_slice()[r.start..r.end];
                        let nrm = f.normals[side];
                        for a in 0..2 {
                            for b in 0..2 {
                                let comp = 2 * a + b;
                                let mut v = T::zero();
                                for i in 0..n {
                                    let z = if el.visco { el.omega * c[4 * n + comp * n + i] } else { T::zero() };
                                    v += (c[comp * n + i] + z) * phi[side][i];
                                }
                                j[a] += v * nrm[b];
                            }
                        }
                    }
                    sum += j.norm_squared() * *w;
                }
                let v = to_f64(sum);
                let visco = f.elements.map(|e| self.cache[e].visco);
                [(visco[0], 0.5 * v), (visco[1], 0.5 * v)]
            })
            .collect();
        let mut out = Split::default();
        for pair in parts {
            for (visco, v) in pair {
                out.add(visco, v);
            }
        }
        out
    }

    /// All three parts of `‖p(t) − p‖²_{𝔖(h)}`; the exact pair has no jumps.
    pub fn stress_error(&self, p: &StressPair<T>, t: T) -> PairParts {
        let mut parts = self.pair_parts(p, Some((t, 0)));
        parts.jump = self.jump(p);
        parts
    }

    /// `‖j_ω(ṗ(t) − v)‖²` for a discrete velocity pair `v`.
    pub fn velocity_error(&self, v: &StressPair<T>, t: T) -> Split {
        self.pair_parts(v, Some((t, 1))).l2
    }

    /// `‖r(t) − r_h‖²`.
    pub fn rotation_error(&self, r: &DVector<T>, t: T) -> Split {
        let scale = t.cos() - T::one();
        let nl = self.space.dofmap().n_lower;
        let parts: Vec<(bool, f64)> = self
            .cache
            .par_iter()
            .enumerate()
            .map(|(e, el)| {
                let o = self.space.dofmap().rotation_range(e).start;
                let mut sum = T::zero();
                for q in &el.points {
                    let rh = (0..nl).fold(T::zero(), |s, l| s + r[o + l] * q.phi[l]);
                    let ex = q.skew[(0, 1)] * scale;
                    let d = ex - rh;
                    sum += (d * d + d * d) * q.weight;
                }
                (el.visco, to_f64(sum))
            })
            .collect();
        let mut out = Split::default();
        for (visco, v) in parts {
            out.add(visco, v);
        }
        out
    }

    /// `‖u(t) − u_h‖²` for per-element displacement coefficients laid out like
    /// the rotation `(2 n_lower per element)`.
    pub fn displacement_error(&self, u: &DVector<T>, t: T) -> Split {
        let nl = self.space.dofmap().n_lower;
        let s = t.sin();
        let parts: Vec<(bool, f64)> = self
            .cache
            .par_iter()
            .enumerate()
            .map(|(e, el)| {
                let mut sum = T::zero();
                for q in &el.points {
                    let mut d = q.w * s;
                    for c in 0..2 {
                        d[c] -= (0..nl).fold(T::zero(), |a, l| a + u[2 * nl * e + c * nl + l] * q.phi[l]);
                    }
                    sum += d.norm_squared() * q.weight;
                }
                (el.visco, to_f64(sum))
            })
            .collect();
        let mut out = Split::default();
        for (visco, v) in parts {
            out.add(visco, v);
        }
        out
    }
}

/// `‖p‖_{𝔖(h)}` of a discrete pair.
pub fn broken_norm<T: Scalar>(eval: &ErrorEvaluator<'_, T>, p: &StressPair<T>) -> f64 {
    let mut parts = eval.pair_parts(p, None);
    parts.jump = eval.jump(p);
    parts.broken().total
}

/// `‖p‖_𝔖` of a discrete pair (jumps ignored).
pub fn conforming_norm<T: Scalar>(eval: &ErrorEvaluator<'_, T>, p: &StressPair<T>) -> f64 {
    eval.pair_parts(p, None).conforming().total
}

/// Running maxima in time of the errors along a trajectory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorMaxima {
    /// `max_k ‖p(t_k) − p_h^k‖` in 𝔖 (CG) or 𝔖(h) (DG).
    pub stress: Norms,
    /// `max_k ‖j_ω(ṗ(t_k) − ∂⁰p_h^k)‖`.
    pub velocity: Norms,
    /// `max_k ‖r(t_k) − r_h^k‖`.
    pub rotation: Norms,
    /// `max_k ‖h^{-1/2}[[j_ω⁺p_h^k]]‖`.
    pub jump: Norms,
}

/// Streams errors along a run instead of storing the trajectory. Feed it the
/// consecutive states `(p^{k−1}, p^k, r^{k−1}, r^k)`.
pub struct ErrorMonitor<'e, 'a, T: Scalar> {
    eval: &'e ErrorEvaluator<'a, T>,
    dt: T,
    broken: bool,
    older: Option<StressPair<T>>,
    pub maxima: ErrorMaxima,
}

impl<'e, 'a, T: Scalar> ErrorMonitor<'e, 'a, T> {
    /// `broken` selects the 𝔖(h) norm.
    pub fn new(eval: &'e ErrorEvaluator<'a, T>, dt: T, broken: bool) -> Self {
        Self { eval, dt, broken, older: None, maxima: ErrorMaxima::default() }
    }

    fn record(&mut self, p: &StressPair<T>, r: &DVector<T>, t: T) {
        let parts = self.eval.stress_error(p, t);
        let stress = if self.broken { parts.broken() } else { parts.conforming() };
        self.maxima.stress = self.maxima.stress.max(stress);
        self.maxima.jump = self.maxima.jump.max(parts.jump.norms());
        self.maxima.rotation = self.maxima.rotation.max(self.eval.rotation_error(r, t).norms());
    }

    pub fn observe(&mut self, k: usize, p_prev: &StressPair<T>, p_curr: &StressPair<T>, r_prev: &DVector<T>, r_curr: &DVector<T>) {
        let dt = self.dt;
        let time = |j: usize| dt * crate::scalar::lit::<T>(j as f64);
        match self.older.take() {
            None => self.record(p_prev, r_prev, time(k - 1)),
            Some(older) => {
                let rate = (p_curr - &older) / (dt + dt);
                let v = self.eval.velocity_error(&rate, time(k - 1)).norms();
                self.maxima.velocity = self.maxima.velocity.max(v);
            }
        }
        self.record(p_curr, r_curr, time(k));
        self.older = Some(p_prev.clone());
    }
}
