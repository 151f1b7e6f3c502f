use nalgebra::{DMatrix, DVector, Dyn, LU};
use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use super::sparse::{SpdFactor, Triplets};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One element's block of a hybridized system:
/// `L_K x_K + C_K μ = b_K` for every element and `Σ_K C_Kᵀ x_K = 0`,
/// where `μ` lives on the facet trace unknowns.
#[derive(Clone, Debug)]
pub struct LocalProblem<T: Scalar> {
    /// Symmetric invertible local matrix `L_K`.
    pub matrix: DMatrix<T>,
    /// `C_K`, one column per entry of `trace_dofs`.
    pub coupling: DMatrix<T>,
    pub trace_dofs: Vec<usize>,
}

struct LocalFactor<T: Scalar> {
    lu: LU<T, Dyn, Dyn>,
    coupling: DMatrix<T>,
    /// `L_K⁻¹ C_K`.
    x_coupling: DMatrix<T>,
    trace_dofs: Vec<usize>,
}

/// Static condensation onto the trace: element-local factorizations plus the
/// SPD Schur complement `S = Σ C_Kᵀ L_K⁻¹ C_K`, factored once.
pub struct CondensedSystem<T: Scalar> {
    locals: Vec<LocalFactor<T>>,
    schur: CsrMatrix<T>,
    factor: SpdFactor<T>,
}

impl<T: Scalar> CondensedSystem<T> {
    pub fn new(problems: Vec<LocalProblem<T>>, n_trace: usize) -> Result<Self> {
        let locals: Vec<LocalFactor<T>> = problems
            .into_par_iter()
            .enumerate()
            .map(|(e, p)| {
                let lu = p.matrix.lu();
                if !lu.is_invertible() {
                    return Err(Error::SingularLocal(e));
                }
                let x_coupling = lu.solve(&p.coupling).ok_or(Error::SingularLocal(e))?;
                Ok(LocalFactor { lu, coupling: p.coupling, x_coupling, trace_dofs: p.trace_dofs })
            })
            .collect::<Result<_>>()?;
        let blocks: Vec<DMatrix<T>> =
            locals.par_iter().map(|l| l.coupling.transpose() * &l.x_coupling).collect();
        let mut trip = Triplets::new(n_trace, n_trace);
        for (l, s) in locals.iter().zip(&blocks) {
            trip.add_block(&l.trace_dofs, &l.trace_dofs, s);
        }
        let schur = trip.to_csr();
        let factor = SpdFactor::new(&schur)?;
        Ok(Self { locals, schur, factor })
    }

    pub fn schur(&self) -> &CsrMatrix<T> {
        &self.schur
    }

    pub fn n_trace(&self) -> usize {
        self.schur.nrows()
    }

    pub fn num_local(&self) -> usize {
        self.locals.len()
    }

    /// Solves for all local unknowns and the trace multiplier.
    pub fn solve(&self, rhs: &[DVector<T>]) -> (Vec<DVector<T>>, DVector<T>) {
        assert_eq!(rhs.len(), self.locals.len());
        let partial: Vec<(DVector<T>, DVector<T>)> = self
            .locals
            .par_iter()
            .zip(rhs.par_iter())
            .map(|(l, b)| {
                let y = l.lu.solve(b).expect("factorization checked at construction");
                let g = l.coupling.transpose() * &y;
                (y, g)
            })
            .collect();
        let mut g = DVector::zeros(self.n_trace());
        for (l, (_, gk)) in self.locals.iter().zip(&partial) {
            for (a, &i) in l.trace_dofs.iter().enumerate() {
                g[i] += gk[a];
            }
        }
        let mu = self.factor.solve(&g);
        let x = self
            .locals
            .par_iter()
            .zip(partial.into_par_iter())
            .map(|(l, (y, _))| {
                if l.trace_dofs.is_empty() {
                    return y;
                }
                let mk = DVector::from_iterator(l.trace_dofs.len(), l.trace_dofs.iter().map(|&i| mu[i]));
                y - &l.x_coupling * mk
            })
            .collect();
        (x, mu)
    }
}
