//! Bearing Laplacian, its leader/follower partition, the localizability test
//! and the target-formation solve `p*_f = -L_ff^{-1} L_fl p_l`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{FormationError, Result};
use crate::formation::{projector_of_unit, BearingSpec, FormationGraph};

/// `L_ff` counts as positive definite when `lambda_min > PD_TOL * lambda_max`.
pub const PD_TOL: f64 = 1e-9;

/// Relative residual accepted from the follower solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

/// Matrix-weighted graph Laplacian with edge weights `P_{g*_ij}`, split into
/// leader and follower blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingLaplacian {
    d: usize,
    n_leaders: usize,
    n_followers: usize,
    full: DMatrix<f64>,
    ll: DMatrix<f64>,
    lf: DMatrix<f64>,
    fl: DMatrix<f64>,
    ff: DMatrix<f64>,
}

impl BearingLaplacian {
    /// Partitions an assembled `dn x dn` Laplacian after the first `n_leaders` agents.
    pub fn from_matrix(full: DMatrix<f64>, d: usize, n_leaders: usize) -> Result<Self> {
        if full.nrows() != full.ncols()
            || !full.nrows().is_multiple_of(d)
            || n_leaders * d > full.nrows()
        {
            return Err(FormationError::DimensionMismatch {
                what: "laplacian",
                expected: n_leaders * d,
                found: full.nrows(),
            });
        }
        let nl = n_leaders * d;
        let nf = full.nrows() - nl;
        Ok(Self {
            d,
            n_leaders,
            n_followers: nf / d,
            ll: full.view((0, 0), (nl, nl)).into_owned(),
            lf: full.view((0, nl), (nl, nf)).into_owned(),
            fl: full.view((nl, 0), (nf, nl)).into_owned(),
            ff: full.view((nl, nl), (nf, nf)).into_owned(),
            full,
        })
    }

    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn ll(&self) -> &DMatrix<f64> {
        &self.ll
    }

    pub fn lf(&self) -> &DMatrix<f64> {
        &self.lf
    }

    pub fn fl(&self) -> &DMatrix<f64> {
        &self.fl
    }

    pub fn ff(&self) -> &DMatrix<f64> {
        &self.ff
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_leaders(&self) -> usize {
        self.n_leaders
    }

    pub fn n_followers(&self) -> usize {
        self.n_followers
    }

    pub fn agent_count(&self) -> usize {
        self.n_leaders + self.n_followers
    }
}

pub fn bearing_laplacian(graph: &FormationGraph, spec: &BearingSpec) -> Result<BearingLaplacian> {
    if spec.len() != graph.edge_count() {
        return Err(FormationError::DimensionMismatch {
            what: "bearing spec vs edge count",
            expected: graph.edge_count(),
            found: spec.len(),
        });
    }
    if spec.dim() != graph.dim() {
        return Err(FormationError::DimensionMismatch {
            what: "bearing spec dimension",
            expected: graph.dim(),
            found: spec.dim(),
        });
    }
    let d = graph.dim();
    let dn = d * graph.agent_count();
    let mut full = DMatrix::zeros(dn, dn);
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let p = projector_of_unit(spec.bearing(k));
        for (r, c, sign) in [(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)] {
            let mut block = full.view_mut((r * d, c * d), (d, d));
            block += &p * sign;
        }
    }
    BearingLaplacian::from_matrix(full, d, graph.n_leaders())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Localizability {
    pub is_localizable: bool,
    /// Smallest eigenvalue of `L_ff`; `+inf` when there are no followers.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

pub fn check_localizable(laplacian: &BearingLaplacian) -> Localizability {
    if laplacian.n_followers() == 0 {
        return Localizability {
            is_localizable: true,
            min_eigenvalue: f64::INFINITY,
            max_eigenvalue: f64::INFINITY,
        };
    }
    let eig = laplacian.ff().symmetric_eigenvalues();
    let min = eig.min();
    let max = eig.max();
    Localizability {
        is_localizable: max > 0.0 && min > PD_TOL * max,
        min_eigenvalue: min,
        max_eigenvalue: max,
    }
}

/// Cholesky factorization of `L_ff` reused for every follower solve.
#[derive(Debug, Clone)]
pub struct FollowerSolver {
    chol: Cholesky<f64, Dyn>,
    ff: DMatrix<f64>,
    fl: DMatrix<f64>,
}

impl FollowerSolver {
    pub fn new(laplacian: &BearingLaplacian) -> Result<Self> {
        let loc = check_localizable(laplacian);
        if !loc.is_localizable {
            return Err(FormationError::NotLocalizable {
                min_eigenvalue: loc.min_eigenvalue,
            });
        }
        let chol = Cholesky::new(laplacian.ff().clone()).ok_or(FormationError::NotLocalizable {
            min_eigenvalue: loc.min_eigenvalue,
        })?;
        Ok(Self {
            chol,
            ff: laplacian.ff().clone(),
            fl: laplacian.fl().clone(),
        })
    }

    /// Follower stack `x` solving `L_ff x = -L_fl leader`.
    ///
    /// Applied to leader positions this is the target follower positions; applied
    /// to leader velocities it is the induced follower velocity.
    pub fn respond(&self, leader: &DVector<f64>) -> Result<DVector<f64>> {
        if leader.len() != self.fl.ncols() {
            return Err(FormationError::DimensionMismatch {
                what: "leader stack",
                expected: self.fl.ncols(),
                found: leader.len(),
            });
        }
        let rhs = -(&self.fl * leader);
        let x = self.chol.solve(&rhs);
        let residual = (&self.ff * &x - &rhs).norm();
        let tolerance = SOLVE_RESIDUAL_TOL * (1.0 + leader.norm());
        if residual.is_nan() || residual >= tolerance {
            return Err(FormationError::SolveResidual {
                residual,
                tolerance,
            });
        }
        Ok(x)
    }

    pub fn solve_ff(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}

/// Followers' positions in the target formation pinned by the given leader positions.
pub fn target_follower_positions(
    laplacian: &BearingLaplacian,
    leader_positions: &DVector<f64>,
) -> Result<DVector<f64>> {
    FollowerSolver::new(laplacian)?.respond(leader_positions)
}
