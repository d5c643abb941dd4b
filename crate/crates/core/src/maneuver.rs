//! Centroid and scale of a formation, and leader velocity planners for
//! translation, scaling and combined maneuvers.
//!
//! Leader `i` receives `v_c + α_i u_i`, where `u_i` is its unit direction away
//! from the target centroid. The ratio `α_i / |p*_i - c|` must be shared by all
//! leaders; the planners build commands from a single rate `k₀` so that
//! `α_i = k₀ |p*_i - c|` holds by construction.

use nalgebra::DVector;

use crate::error::{FormationError, Result};
use crate::formation::{Configuration, COLLOCATION_EPS};
use crate::laplacian::BearingLaplacian;

/// Relative tolerance on the shared ratio `α_i / |p*_i - c|`.
pub const RATIO_TOL: f64 = 1e-9;

/// Relative tolerance on `|L v*|` in [`validate_command`].
pub const COMMAND_RESIDUAL_TOL: f64 = 1e-8;

/// Mean of all agent positions.
pub fn centroid(config: &Configuration) -> DVector<f64> {
    let d = config.dim();
    let n = config.agent_count();
    let mut c = DVector::zeros(d);
    for i in 0..n {
        for (k, x) in config.position(i).iter().enumerate() {
            c[k] += x;
        }
    }
    c / n.max(1) as f64
}

/// Root-mean-square distance of the agents to their centroid.
pub fn scale(config: &Configuration) -> f64 {
    let c = centroid(config);
    let n = config.agent_count();
    let sum: f64 = (0..n)
        .map(|i| {
            config
                .position(i)
                .iter()
                .zip(c.iter())
                .map(|(x, m)| (x - m) * (x - m))
                .sum::<f64>()
        })
        .sum();
    (sum / n.max(1) as f64).sqrt()
}

/// Every leader moves with the common velocity `v_c`.
pub fn translation_command(v_c: &[f64], n_leaders: usize) -> DVector<f64> {
    let d = v_c.len();
    DVector::from_fn(d * n_leaders, |k, _| v_c[k % d])
}

/// Leader velocities `v_c + α_i u_i` anchored to a target configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverCommand {
    v_c: DVector<f64>,
    scale_alphas: Vec<f64>,
    reference_config: Configuration,
    n_leaders: usize,
    radial: Vec<DVector<f64>>,
    distances: Vec<f64>,
}

impl ManeuverCommand {
    /// Command from raw per-leader radial speeds, checked for a consistent ratio and sign.
    pub fn from_alphas(
        v_c: &[f64],
        alphas: Vec<f64>,
        reference_config: &Configuration,
        n_leaders: usize,
    ) -> Result<Self> {
        let d = reference_config.dim();
        let n = reference_config.agent_count();
        if v_c.len() != d {
            return Err(FormationError::DimensionMismatch {
                what: "common velocity",
                expected: d,
                found: v_c.len(),
            });
        }
        if alphas.len() != n_leaders || n_leaders > n {
            return Err(FormationError::DimensionMismatch {
                what: "scale alphas",
                expected: n_leaders,
                found: alphas.len(),
            });
        }
        if alphas.iter().any(|a| !a.is_finite()) || v_c.iter().any(|v| !v.is_finite()) {
            return Err(FormationError::InvalidCommand(
                "non-finite command value".into(),
            ));
        }

        let c = centroid(reference_config);
        let mut distances = Vec::with_capacity(n);
        let mut radial = Vec::with_capacity(n);
        for i in 0..n {
            let offset = DVector::from_column_slice(reference_config.position(i)) - &c;
            let r = offset.norm();
            distances.push(r);
            radial.push(if r > COLLOCATION_EPS {
                offset / r
            } else {
                DVector::zeros(d)
            });
        }

        let scaling = alphas.iter().any(|&a| a != 0.0);
        if scaling {
            if let Some(i) = (0..n_leaders).find(|&i| distances[i] <= COLLOCATION_EPS) {
                return Err(FormationError::DegenerateVector {
                    norm: distances[i],
                    edge: None,
                });
            }
            let positive = alphas[0] > 0.0;
            if alphas.iter().any(|&a| a == 0.0 || (a > 0.0) != positive) {
                return Err(FormationError::InvalidCommand(
                    "scale alphas must share one sign".into(),
                ));
            }
            let ratios: Vec<f64> = (0..n_leaders).map(|i| alphas[i] / distances[i]).collect();
            let biggest = ratios.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
            if ratios
                .iter()
                .any(|r| (r - ratios[0]).abs() > RATIO_TOL * biggest)
            {
                return Err(FormationError::InvalidCommand(format!(
                    "alpha / distance ratios differ across leaders: {ratios:?}"
                )));
            }
        }

        Ok(Self {
            v_c: DVector::from_column_slice(v_c),
            scale_alphas: alphas,
            reference_config: reference_config.clone(),
            n_leaders,
            radial,
            distances,
        })
    }

    pub fn v_c(&self) -> &DVector<f64> {
        &self.v_c
    }

    pub fn scale_alphas(&self) -> &[f64] {
        &self.scale_alphas
    }

    pub fn reference_config(&self) -> &Configuration {
        &self.reference_config
    }

    pub fn n_leaders(&self) -> usize {
        self.n_leaders
    }

    /// Shared ratio `k = α_i / |p*_i - c|`, zero for a pure translation.
    pub fn rate(&self) -> f64 {
        match self.scale_alphas.first() {
            Some(&a) if a != 0.0 => a / self.distances[0],
            _ => 0.0,
        }
    }

    /// Radial speeds of every agent, followers included, via `α_i = k |p*_i - c|`.
    pub fn induced_alphas(&self) -> Vec<f64> {
        let k = self.rate();
        self.distances.iter().map(|r| k * r).collect()
    }

    /// Stacked leader velocity command.
    pub fn leader_velocities(&self) -> DVector<f64> {
        let d = self.v_c.len();
        let mut v = translation_command(self.v_c.as_slice(), self.n_leaders);
        for (i, &a) in self.scale_alphas.iter().enumerate() {
            if a != 0.0 {
                let mut block = v.rows_mut(i * d, d);
                block += &self.radial[i] * a;
            }
        }
        v
    }

    /// Predicted rate of change of the target centroid.
    pub fn centroid_rate(&self) -> &DVector<f64> {
        &self.v_c
    }

    /// Predicted rate of change of the target scale, `sgn(α) sqrt(mean α_i²)`
    /// over all agents.
    pub fn scale_rate(&self) -> f64 {
        let alphas = self.induced_alphas();
        let mean_sq = alphas.iter().map(|a| a * a).sum::<f64>() / alphas.len() as f64;
        let k = self.rate();
        if k == 0.0 {
            0.0
        } else {
            k.signum() * mean_sq.sqrt()
        }
    }
}

/// Pure scaling about the target centroid at rate `k0`: `α_i = k0 |p*_i - c|`.
pub fn scaling_command(
    reference_config: &Configuration,
    n_leaders: usize,
    k0: f64,
) -> Result<ManeuverCommand> {
    combined_command(
        &vec![0.0; reference_config.dim()],
        reference_config,
        n_leaders,
        k0,
    )
}

/// Superposition of a translation with velocity `v_c` and scaling at rate `k0`.
pub fn combined_command(
    v_c: &[f64],
    reference_config: &Configuration,
    n_leaders: usize,
    k0: f64,
) -> Result<ManeuverCommand> {
    let c = centroid(reference_config);
    let mut alphas = Vec::with_capacity(n_leaders);
    for i in 0..n_leaders.min(reference_config.agent_count()) {
        let r = reference_config
            .position(i)
            .iter()
            .zip(c.iter())
            .map(|(x, m)| (x - m) * (x - m))
            .sum::<f64>()
            .sqrt();
        if k0 != 0.0 && r <= COLLOCATION_EPS {
            return Err(FormationError::DegenerateVector {
                norm: r,
                edge: None,
            });
        }
        alphas.push(k0 * r);
    }
    ManeuverCommand::from_alphas(v_c, alphas, reference_config, n_leaders)
}

/// `|L v*|` for a full stacked velocity (leaders then followers).
pub fn command_residual(laplacian: &BearingLaplacian, v_star: &DVector<f64>) -> Result<f64> {
    let dn = laplacian.full().nrows();
    if v_star.len() != dn {
        return Err(FormationError::DimensionMismatch {
            what: "full velocity",
            expected: dn,
            found: v_star.len(),
        });
    }
    Ok((laplacian.full() * v_star).norm())
}

/// True when the commanded motion lies in the null space of `L`, i.e. it is a
/// combination of translation and scaling of the target.
pub fn validate_command(laplacian: &BearingLaplacian, v_star: &DVector<f64>) -> Result<bool> {
    let residual = command_residual(laplacian, v_star)?;
    Ok(residual < COMMAND_RESIDUAL_TOL * (1.0 + v_star.norm()))
}
