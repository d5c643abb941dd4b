use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::controller::{verify_hurwitz, HurwitzReport, HURWITZ_TOL};
use crate::error::Result;
use crate::rigidity::RigidityReport;
use crate::sim::{exponential_fit, ExponentialFit, SimContext, Trajectory};

/// Errors below this are treated as converged and left out of the decay fit.
const FIT_FLOOR: f64 = 1e-9;

/// Settling time multiple of the slowest mode used for the predicted horizon.
const HORIZON_TIME_CONSTANTS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Eigenvalue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Eigenvalue>,
    pub max_real_part: Option<f64>,
    pub is_hurwitz: bool,
    /// Time for the slowest mode to decay by `e^-12`.
    pub predicted_horizon: Option<f64>,
    /// With `ki = 0` the integral states decouple as zero eigenvalues; they
    /// are dropped and the spectrum is that of `-kp L_ff`.
    pub integral_decoupled: bool,
}

impl SpectrumReport {
    pub fn from_context(ctx: &SimContext) -> Result<Self> {
        let gains = ctx.gains();
        let (report, decoupled) = if gains.ki == 0.0 {
            let reduced = ctx.laplacian().ff() * -gains.kp;
            (verify_hurwitz(&reduced)?, true)
        } else {
            (ctx.spectrum()?, false)
        };
        Ok(Self::from_report(&report, decoupled))
    }

    fn from_report(report: &HurwitzReport, decoupled: bool) -> Self {
        let max = finite(report.max_real_part);
        let horizon = max
            .filter(|&m| m < -HURWITZ_TOL)
            .map(|m| HORIZON_TIME_CONSTANTS / m.abs());
        Self {
            eigenvalues: report
                .spectrum
                .iter()
                .copied()
                .map(Eigenvalue::from)
                .collect(),
            max_real_part: max,
            is_hurwitz: report.is_hurwitz,
            predicted_horizon: horizon,
            integral_decoupled: decoupled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizabilitySummary {
    pub is_localizable: bool,
    /// `None` when there are no followers.
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub end_bearing_error: f64,
    pub end_tracking_error: Option<f64>,
    pub end_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub dimension: usize,
    pub agents: usize,
    pub leaders: usize,
    pub dt: f64,
    pub steps: usize,
    pub final_time: f64,
    pub final_bearing_error: f64,
    pub final_tracking_error: Option<f64>,
    pub decay_fit: Option<FitSummary>,
    pub spectrum: SpectrumReport,
    pub rigidity: RigiditySummary,
    pub localizability: LocalizabilitySummary,
    pub segments: Vec<SegmentSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub rate: f64,
    pub r_squared: f64,
    pub is_good_decay: bool,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigiditySummary {
    pub rank: usize,
    pub required_rank: usize,
    pub is_infinitesimally_bearing_rigid: bool,
    pub null_space_dim: usize,
}

impl From<&RigidityReport> for RigiditySummary {
    fn from(r: &RigidityReport) -> Self {
        Self {
            rank: r.rank,
            required_rank: r.required_rank,
            is_infinitesimally_bearing_rigid: r.is_infinitesimally_bearing_rigid,
            null_space_dim: r.null_space_dim,
        }
    }
}

impl Summary {
    pub fn build(name: &str, ctx: &SimContext, traj: &Trajectory) -> Result<Self> {
        let g = ctx.graph();
        let loc = ctx.localizability();
        let last = traj.len().saturating_sub(1);
        let segments = ctx
            .segments()
            .iter()
            .enumerate()
            .map(|(index, seg)| {
                let end = traj.window(0.0, seg.t_end).end.saturating_sub(1);
                SegmentSummary {
                    index,
                    t_start: seg.t_start,
                    t_end: seg.t_end,
                    end_bearing_error: traj.bearing_error[end],
                    end_tracking_error: finite(traj.tracking_error[end]),
                    end_scale: traj.scale[end],
                }
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            dimension: g.dim(),
            agents: g.agent_count(),
            leaders: g.n_leaders(),
            dt: ctx.scenario().dt,
            steps: last,
            final_time: traj.times[last],
            final_bearing_error: traj.bearing_error[last],
            final_tracking_error: finite(traj.tracking_error[last]),
            decay_fit: decay_fit(ctx, traj).map(|(fit, samples)| FitSummary {
                rate: fit.rate,
                r_squared: fit.r_squared,
                is_good_decay: fit.is_good_decay,
                samples,
            }),
            spectrum: SpectrumReport::from_context(ctx)?,
            rigidity: ctx.rigidity().into(),
            localizability: LocalizabilitySummary {
                is_localizable: loc.is_localizable,
                lambda_min: finite(loc.min_eigenvalue),
                lambda_max: finite(loc.max_eigenvalue),
            },
            segments,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Exponential fit of the tracking error over the first segment, keeping
/// samples above the convergence floor. Returns the fit and its sample count.
pub fn decay_fit(ctx: &SimContext, traj: &Trajectory) -> Option<(ExponentialFit, usize)> {
    let first = ctx.segments().first()?;
    let range = traj.window(0.0, first.t_end);
    let (times, errors): (Vec<f64>, Vec<f64>) = range
        .map(|k| (traj.times[k], traj.tracking_error[k]))
        .take_while(|&(_, e)| e.is_finite() && e > FIT_FLOOR)
        .unzip();
    let fit = exponential_fit(&times, &errors).ok()?;
    Some((fit, times.len()))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn axis_names(d: usize) -> Vec<String> {
    if d <= 3 {
        ["x", "y", "z"][..d].iter().map(|s| s.to_string()).collect()
    } else {
        (0..d).map(|k| k.to_string()).collect()
    }
}

fn kept_rows(len: usize, decimate: usize) -> impl Iterator<Item = usize> {
    let step = decimate.max(1);
    (0..len).filter(move |&k| k % step == 0 || k + 1 == len)
}

fn push_row(out: &mut String, t: f64, values: impl IntoIterator<Item = f64>) {
    write!(out, "{t}").unwrap();
    for v in values {
        write!(out, ",{v}").unwrap();
    }
    out.push('\n');
}

/// Trajectory CSV. Values use the shortest representation that parses back to
/// the same `f64`. With `decimate = n` every n-th row is kept, plus the last.
pub fn write_trajectory_csv(
    ids: &[String],
    d: usize,
    traj: &Trajectory,
    decimate: usize,
) -> String {
    let axes = axis_names(d);
    let mut header = vec!["t".to_string()];
    for id in ids {
        header.extend(axes.iter().map(|a| format!("{id}_{a}")));
    }
    header.push("bearing_error".into());
    header.push("tracking_error".into());
    header.extend(axes.iter().map(|a| format!("centroid_{a}")));
    header.push("scale".into());

    let mut out = header.join(",");
    out.push('\n');
    for k in kept_rows(traj.len(), decimate) {
        let values = traj.positions[k]
            .iter()
            .copied()
            .chain([traj.bearing_error[k], traj.tracking_error[k]])
            .chain(traj.centroid[k].iter().copied())
            .chain([traj.scale[k]]);
        push_row(&mut out, traj.times[k], values);
    }
    out
}

/// Integral-state dump, one column per follower component.
pub fn write_xi_csv(
    ids: &[String],
    d: usize,
    n_leaders: usize,
    traj: &Trajectory,
    decimate: usize,
) -> String {
    let axes = axis_names(d);
    let mut header = vec!["t".to_string()];
    for id in &ids[n_leaders..] {
        header.extend(axes.iter().map(|a| format!("xi_{id}_{a}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for k in kept_rows(traj.len(), decimate) {
        let xi: &DVector<f64> = &traj.xi[k];
        push_row(&mut out, traj.times[k], xi.iter().copied());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleOptions {
    pub decimate: usize,
    pub write_xi: bool,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            decimate: 1,
            write_xi: false,
        }
    }
}

/// Writes `trajectory.csv`, `summary.json` and optionally `xi.csv` into `dir`.
pub fn write_bundle(
    dir: &Path,
    ids: &[String],
    summary: &Summary,
    traj: &Trajectory,
    opts: BundleOptions,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let d = summary.dimension;
    fs::write(
        dir.join("trajectory.csv"),
        write_trajectory_csv(ids, d, traj, opts.decimate),
    )?;
    fs::write(dir.join("summary.json"), summary.to_json())?;
    if opts.write_xi {
        let csv = write_xi_csv(ids, d, summary.leaders, traj, opts.decimate);
        fs::write(dir.join("xi.csv"), csv)?;
    }
    Ok(())
}
