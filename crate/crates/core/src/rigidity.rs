//! Bearing rigidity matrix and infinitesimal bearing rigidity classification.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::Result;
use crate::formation::{bearing, projector_of_unit, with_edge, Configuration, FormationGraph};
use crate::maneuver::centroid;

/// Singular values at or below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RigidityReport {
    pub rank: usize,
    /// `d*n - d - 1`: the rank of an infinitesimally bearing rigid formation.
    pub required_rank: usize,
    pub is_infinitesimally_bearing_rigid: bool,
    pub null_space_dim: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Jacobian of the bearing function with respect to the stacked positions.
///
/// The row block of oriented edge `k = (i, j)` is `P_{g_k} / |e_k|`, entered
/// with sign `-1` in column block `i` and `+1` in column block `j`.
pub fn bearing_rigidity_matrix(
    graph: &FormationGraph,
    config: &Configuration,
) -> Result<DMatrix<f64>> {
    config.check_against(graph)?;
    let d = graph.dim();
    let mut rb = DMatrix::zeros(d * graph.edge_count(), d * graph.agent_count());
    for (k, &(i, j)) in graph.edges().iter().enumerate() {
        let (p_i, p_j) = (config.position(i), config.position(j));
        let g = bearing(p_i, p_j).map_err(|e| with_edge(e, k))?;
        let len: f64 = p_i
            .iter()
            .zip(p_j)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        let block = projector_of_unit(&g) / len;
        rb.view_mut((k * d, j * d), (d, d)).copy_from(&block);
        rb.view_mut((k * d, i * d), (d, d)).copy_from(&(-block));
    }
    Ok(rb)
}

pub fn rigidity_report(graph: &FormationGraph, config: &Configuration) -> Result<RigidityReport> {
    let rb = bearing_rigidity_matrix(graph, config)?;
    let d = graph.dim();
    let dn = d * graph.agent_count();
    let required_rank = dn.saturating_sub(d + 1);

    let mut singular_values: Vec<f64> = if rb.nrows() == 0 {
        Vec::new()
    } else {
        rb.svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values
        .iter()
        .filter(|&&s| sigma_max > 0.0 && s > RANK_TOL * sigma_max)
        .count();

    Ok(RigidityReport {
        rank,
        required_rank,
        is_infinitesimally_bearing_rigid: rank == required_rank,
        null_space_dim: dn - rank,
        singular_values,
    })
}

/// Normalized translation directions (columns of `1_n ⊗ I_d`) followed by the
/// normalized scaling direction `p - 1_n ⊗ c(p)`.
///
/// The scaling vector is omitted when every agent sits at the centroid.
pub fn trivial_motion_basis(config: &Configuration) -> Vec<DVector<f64>> {
    let d = config.dim();
    let n = config.agent_count();
    let mut basis = Vec::with_capacity(d + 1);
    for axis in 0..d {
        let mut v = DVector::zeros(d * n);
        for i in 0..n {
            v[i * d + axis] = 1.0;
        }
        basis.push(v / (n as f64).sqrt());
    }
    let c = centroid(config);
    let mut s = config.stacked().clone();
    for (k, x) in s.iter_mut().enumerate() {
        *x -= c[k % d];
    }
    let norm = s.norm();
    if norm > 0.0 {
        basis.push(s / norm);
    }
    basis
}
