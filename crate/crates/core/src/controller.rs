//! Distributed proportional-integral follower control and the closed-loop
//! error dynamics.
//!
//! Each follower integrates the projected relative-position sum
//! `s_i = Σ_j P_{g*_ij} (p_i - p_j)` into its own state `xi_i` and moves with
//! `v_i = -k_p s_i - k_i xi_i`. Stacked over all followers this is
//!
//! ```text
//! p_f' = -k_p (L_ff p_f + L_fl p_l) - k_i xi
//! xi'  =       L_ff p_f + L_fl p_l
//! ```
//!
//! and the tracking error `delta = p_f - p*_f` evolves under the block matrix
//! `A = [[-k_p L_ff, -k_i I], [L_ff, 0]]`.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::formation::{projector_of_unit, BearingSpec, Configuration, FormationGraph};
use crate::laplacian::BearingLaplacian;

/// The closed loop is Hurwitz when its largest real part is below `-HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-10;

const SCHUR_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp: f64,
    pub ki: f64,
}

impl Gains {
    /// `kp` must be positive; `ki = 0` gives the proportional-only law.
    pub fn new(kp: f64, ki: f64) -> Result<Self> {
        if !(kp > 0.0 && kp.is_finite()) {
            return Err(FormationError::InvalidGains(format!(
                "kp must be positive, got {kp}"
            )));
        }
        if !(ki >= 0.0 && ki.is_finite()) {
            return Err(FormationError::InvalidGains(format!(
                "ki must be non-negative, got {ki}"
            )));
        }
        Ok(Self { kp, ki })
    }
}

impl Default for Gains {
    fn default() -> Self {
        Self { kp: 1.0, ki: 0.5 }
    }
}

/// Stacked follower integral states `xi`, one `d`-block per follower.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    xi: DVector<f64>,
}

impl ControllerState {
    pub fn zeros(d: usize, n_followers: usize) -> Self {
        Self {
            xi: DVector::zeros(d * n_followers),
        }
    }

    pub fn from_stacked(xi: DVector<f64>) -> Self {
        Self { xi }
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn into_stacked(self) -> DVector<f64> {
        self.xi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerCommand {
    pub velocity: DVector<f64>,
    pub xi_rate: DVector<f64>,
}

/// Control output of one follower from the relative positions `p_i - p_j` of
/// its neighbors. No absolute position or leader velocity is used.
pub fn follower_velocity(
    graph: &FormationGraph,
    spec: &BearingSpec,
    agent: usize,
    rel_positions: &[(usize, DVector<f64>)],
    xi_i: &DVector<f64>,
    gains: &Gains,
) -> Result<FollowerCommand> {
    let d = graph.dim();
    if agent >= graph.agent_count() || graph.is_leader(agent) {
        return Err(FormationError::UnknownNeighbor {
            agent,
            detail: "agent is not a follower".into(),
        });
    }
    if xi_i.len() != d {
        return Err(FormationError::DimensionMismatch {
            what: "follower integral state",
            expected: d,
            found: xi_i.len(),
        });
    }
    let expected = graph.neighbors(agent);
    if rel_positions.len() != expected.len() {
        return Err(FormationError::UnknownNeighbor {
            agent,
            detail: format!(
                "got {} entries for {} neighbors",
                rel_positions.len(),
                expected.len()
            ),
        });
    }
    let mut seen = vec![false; expected.len()];
    let mut s = DVector::zeros(d);
    for (j, rel) in rel_positions {
        let slot = expected
            .iter()
            .position(|nb| nb.agent == *j)
            .ok_or_else(|| FormationError::UnknownNeighbor {
                agent,
                detail: format!("{j} is not a neighbor"),
            })?;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(FormationError::UnknownNeighbor {
                agent,
                detail: format!("neighbor {j} listed twice"),
            });
        }
        if rel.len() != d {
            return Err(FormationError::DimensionMismatch {
                what: "relative position",
                expected: d,
                found: rel.len(),
            });
        }
        s += projector_of_unit(spec.bearing(expected[slot].edge)) * rel;
    }
    Ok(FollowerCommand {
        velocity: -gains.kp * &s - gains.ki * xi_i,
        xi_rate: s,
    })
}

/// Time derivative of the stacked state `(p, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateRate {
    pub p_dot: DVector<f64>,
    pub xi_dot: DVector<f64>,
}

/// Right-hand side of the closed loop: leaders move with `v_leader`, followers
/// run the PI law.
pub fn stacked_dynamics(
    laplacian: &BearingLaplacian,
    config: &Configuration,
    state: &ControllerState,
    gains: &Gains,
    v_leader: &DVector<f64>,
) -> Result<StateRate> {
    let d = laplacian.dim();
    let nl = d * laplacian.n_leaders();
    let nf = d * laplacian.n_followers();
    let p = config.stacked();
    for (what, expected, found) in [
        ("configuration", nl + nf, p.len()),
        ("integral state", nf, state.stacked().len()),
        ("leader velocity", nl, v_leader.len()),
    ] {
        if expected != found {
            return Err(FormationError::DimensionMismatch {
                what,
                expected,
                found,
            });
        }
    }
    let p_l = p.rows(0, nl);
    let p_f = p.rows(nl, nf);
    let s = laplacian.ff() * p_f + laplacian.fl() * p_l;

    let mut p_dot = DVector::zeros(nl + nf);
    p_dot.rows_mut(0, nl).copy_from(v_leader);
    p_dot
        .rows_mut(nl, nf)
        .copy_from(&(-gains.kp * &s - gains.ki * state.stacked()));
    Ok(StateRate { p_dot, xi_dot: s })
}

/// `A = [[-k_p L_ff, -k_i I], [L_ff, 0]]` with `I` the `d*n_f` identity.
pub fn closed_loop_matrix(l_ff: &DMatrix<f64>, gains: &Gains) -> DMatrix<f64> {
    let m = l_ff.nrows();
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    a.view_mut((0, 0), (m, m)).copy_from(&(-gains.kp * l_ff));
    a.view_mut((0, m), (m, m))
        .copy_from(&(-gains.ki * DMatrix::<f64>::identity(m, m)));
    a.view_mut((m, 0), (m, m)).copy_from(l_ff);
    a
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HurwitzReport {
    pub is_hurwitz: bool,
    pub max_real_part: f64,
    /// Sorted by descending real part, then imaginary part.
    #[serde(serialize_with = "serialize_spectrum")]
    pub spectrum: Vec<Complex64>,
}

fn serialize_spectrum<S: serde::Serializer>(
    spectrum: &[Complex64],
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = ser.serialize_seq(Some(spectrum.len()))?;
    for z in spectrum {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Dense eigenvalue solve of a general real matrix and the Hurwitz verdict.
pub fn verify_hurwitz(a: &DMatrix<f64>) -> Result<HurwitzReport> {
    if a.nrows() != a.ncols() {
        return Err(FormationError::DimensionMismatch {
            what: "square matrix",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(HurwitzReport {
            is_hurwitz: true,
            max_real_part: f64::NEG_INFINITY,
            spectrum: Vec::new(),
        });
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(FormationError::EigenSolveFailure { size: a.nrows() })?;
    let mut spectrum: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    if spectrum
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(FormationError::EigenSolveFailure { size: a.nrows() });
    }
    spectrum.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let max_real_part = spectrum[0].re;
    Ok(HurwitzReport {
        is_hurwitz: max_real_part < -HURWITZ_TOL,
        max_real_part,
        spectrum,
    })
}

/// Smallest `|λ² + k_p σ λ + k_i σ|` over the given eigenvalues `σ` of `L_ff`.
///
/// Every eigenvalue of the closed-loop matrix is a root of this quadratic for
/// some `σ`, since `det(λI - A) = det(λ² I + (k_p λ + k_i) L_ff)`.
pub fn quadratic_residual(lambda: Complex64, sigmas: &[f64], gains: &Gains) -> f64 {
    sigmas
        .iter()
        .map(|&s| (lambda * lambda + gains.kp * s * lambda + gains.ki * s).norm())
        .fold(f64::INFINITY, f64::min)
}
