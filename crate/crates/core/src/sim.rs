//! Deterministic closed-loop simulation with piecewise-constant leader schedules.
//!
//! A [`Scenario`] is assembled once into a [`SimContext`]: desired bearings are
//! taken from the reference configuration, the target formation is checked for
//! rigidity and localizability, and every schedule segment is resolved into a
//! constant stacked leader velocity. The runner then integrates the stacked
//! dynamics with classical fixed-step RK4, never stepping across a segment
//! boundary.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{
    closed_loop_matrix, stacked_dynamics, verify_hurwitz, ControllerState, Gains, HurwitzReport,
};
use crate::error::{FormationError, Result};
use crate::formation::{bearing, with_edge, BearingSpec, Configuration, FormationGraph};
use crate::laplacian::{
    bearing_laplacian, check_localizable, BearingLaplacian, FollowerSolver, Localizability,
};
use crate::maneuver::{centroid, combined_command, scale, ManeuverCommand};
use crate::rigidity::{rigidity_report, RigidityReport};

pub const DEFAULT_DT: f64 = 1e-3;

/// Shrinking segments are cut short before the target scale drops below this.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Default follower perturbation, as a fraction of the target formation's scale.
pub const DEFAULT_PERTURBATION: f64 = 0.1;

/// Slack used when matching segment boundaries.
const TIME_EPS: f64 = 1e-9;

/// What the leaders do during one schedule segment.
#[derive(Debug, Clone, PartialEq)]
pub enum LeaderCommand {
    /// Common velocity `velocity` plus scaling about the target centroid at rate
    /// `scale_rate` (1/s), anchored to the target formation at the segment start.
    Maneuver { velocity: Vec<f64>, scale_rate: f64 },
    /// Raw stacked leader velocities, used as given.
    Velocities(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub command: LeaderCommand,
}

impl Segment {
    pub fn maneuver(t_start: f64, t_end: f64, velocity: &[f64], scale_rate: f64) -> Self {
        Self {
            t_start,
            t_end,
            command: LeaderCommand::Maneuver {
                velocity: velocity.to_vec(),
                scale_rate,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: FormationGraph,
    /// Configuration whose bearings define the desired shape.
    pub reference_config: Configuration,
    /// Per-agent initial position. Missing leaders start at their reference
    /// position; missing followers start at their target position plus seeded
    /// uniform noise of `perturbation * scale` per component.
    pub initial_positions: Vec<Option<Vec<f64>>>,
    pub perturbation: f64,
    pub gains: Gains,
    pub schedule: Vec<Segment>,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Run even if the target formation fails the rigidity or localizability check.
    pub force: bool,
}

impl Scenario {
    /// Scenario starting from the reference configuration with default settings.
    pub fn new(
        graph: FormationGraph,
        reference_config: Configuration,
        schedule: Vec<Segment>,
        duration: f64,
    ) -> Self {
        let n = graph.agent_count();
        Self {
            graph,
            reference_config,
            initial_positions: vec![None; n],
            perturbation: DEFAULT_PERTURBATION,
            gains: Gains::default(),
            schedule,
            dt: DEFAULT_DT,
            duration,
            seed: 0,
            force: false,
        }
    }
}

/// Segment with its leader velocity fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub leader_velocity: DVector<f64>,
    /// Index of the schedule entry this came from.
    pub source: usize,
    pub command: Option<ManeuverCommand>,
    /// Target formation at `t_start`.
    pub target_start: Option<Configuration>,
}

/// Stacked simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub p: DVector<f64>,
    pub xi: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SimContext {
    scenario: Scenario,
    spec: BearingSpec,
    laplacian: BearingLaplacian,
    rigidity: RigidityReport,
    localizability: Localizability,
    solver: Option<FollowerSolver>,
    initial_config: Configuration,
    segments: Vec<ResolvedSegment>,
}

/// Builds the simulation context, rejecting targets that are not rigid or not
/// localizable unless `scenario.force` is set.
pub fn assemble(scenario: &Scenario) -> Result<SimContext> {
    let graph = &scenario.graph;
    let d = graph.dim();
    let n = graph.agent_count();
    let n_l = graph.n_leaders();
    scenario.reference_config.check_against(graph)?;
    if !(scenario.dt > 0.0 && scenario.dt.is_finite()) {
        return Err(FormationError::InvalidScenario(format!(
            "dt must be positive, got {}",
            scenario.dt
        )));
    }
    if !(scenario.duration > 0.0 && scenario.duration.is_finite()) {
        return Err(FormationError::InvalidScenario(format!(
            "duration must be positive, got {}",
            scenario.duration
        )));
    }
    if scenario.initial_positions.len() != n {
        return Err(FormationError::DimensionMismatch {
            what: "initial positions",
            expected: n,
            found: scenario.initial_positions.len(),
        });
    }
    validate_schedule(&scenario.schedule, scenario.duration)?;
    let gains = Gains::new(scenario.gains.kp, scenario.gains.ki)?;

    let spec = BearingSpec::from_configuration(graph, &scenario.reference_config)?;
    let laplacian = bearing_laplacian(graph, &spec)?;
    let rigidity = rigidity_report(graph, &scenario.reference_config)?;
    let localizability = check_localizable(&laplacian);
    debug!(
        "rank {}/{} lambda_min(L_ff) = {:e}",
        rigidity.rank, rigidity.required_rank, localizability.min_eigenvalue
    );
    if !rigidity.is_infinitesimally_bearing_rigid {
        let err = FormationError::NotRigid {
            rank: rigidity.rank,
            required: rigidity.required_rank,
        };
        if !scenario.force {
            return Err(err);
        }
        warn!("{err}; continuing because force is set");
    }
    let solver = match FollowerSolver::new(&laplacian) {
        Ok(s) => Some(s),
        Err(err) if scenario.force => {
            warn!("{err}; continuing because force is set");
            None
        }
        Err(err) => return Err(err),
    };

    // Leaders
    let mut initial = DVector::zeros(d * n);
    for i in 0..n_l {
        let pos = match &scenario.initial_positions[i] {
            Some(pos) => position_of(pos, d)?,
            None => scenario.reference_config.position(i).to_vec(),
        };
        initial.rows_mut(i * d, d).copy_from_slice(&pos);
    }
    // Followers
    let leaders0 = initial.rows(0, d * n_l).into_owned();
    let needs_target = scenario.initial_positions[n_l..]
        .iter()
        .any(Option::is_none);
    // Without a solver (forced run) the reference positions stand in for the target.
    let target0 = match (needs_target, solver.as_ref()) {
        (false, _) => None,
        (true, Some(s)) => Some(s.respond(&leaders0)?),
        (true, None) => Some(scenario.reference_config.follower_stack(n_l)),
    };
    let noise = match &target0 {
        Some(t) => {
            let full = Configuration::from_parts(d, &leaders0, t)?;
            scenario.perturbation * scale(&full)
        }
        None => 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    for i in n_l..n {
        let pos = match &scenario.initial_positions[i] {
            Some(pos) => position_of(pos, d)?,
            None => {
                let t = target0
                    .as_ref()
                    .expect("target computed when a follower is missing");
                let k = (i - n_l) * d;
                (0..d)
                    .map(|a| t[k + a] + noise * rng.random_range(-1.0..=1.0))
                    .collect()
            }
        };
        initial.rows_mut(i * d, d).copy_from_slice(&pos);
    }
    let initial_config = Configuration::new(d, initial)?;

    let segments = resolve_schedule(scenario, solver.as_ref(), &leaders0)?;

    Ok(SimContext {
        scenario: Scenario {
            gains,
            ..scenario.clone()
        },
        spec,
        laplacian,
        rigidity,
        localizability,
        solver,
        initial_config,
        segments,
    })
}

fn position_of(pos: &[f64], d: usize) -> Result<Vec<f64>> {
    if pos.len() != d {
        return Err(FormationError::DimensionMismatch {
            what: "initial position",
            expected: d,
            found: pos.len(),
        });
    }
    Ok(pos.to_vec())
}

fn validate_schedule(schedule: &[Segment], duration: f64) -> Result<()> {
    let mut covered = 0.0;
    for (k, seg) in schedule.iter().enumerate() {
        if seg.t_end.is_nan() || seg.t_start.is_nan() || seg.t_end <= seg.t_start {
            return Err(FormationError::InvalidSchedule(format!(
                "segment {k} has t_end {} <= t_start {}",
                seg.t_end, seg.t_start
            )));
        }
        if seg.t_start > covered + TIME_EPS {
            return Err(FormationError::ScheduleGap {
                from: covered,
                to: seg.t_start,
            });
        }
        if seg.t_start < covered - TIME_EPS {
            return Err(FormationError::InvalidSchedule(format!(
                "segment {k} starts at {} before the previous segment ends at {covered}",
                seg.t_start
            )));
        }
        covered = seg.t_end;
    }
    if covered < duration - TIME_EPS {
        return Err(FormationError::ScheduleGap {
            from: covered,
            to: duration,
        });
    }
    Ok(())
}

/// `(t_start, t_end, leader velocity, command, target at t_start)`
type Piece = (
    f64,
    f64,
    DVector<f64>,
    Option<ManeuverCommand>,
    Option<Configuration>,
);

/// Fixes every segment's leader velocity by propagating the leaders along the
/// schedule. Shrinking segments are split where the target scale would reach
/// [`SCALE_FLOOR`]; the remainder keeps only the translation.
fn resolve_schedule(
    scenario: &Scenario,
    solver: Option<&FollowerSolver>,
    leaders0: &DVector<f64>,
) -> Result<Vec<ResolvedSegment>> {
    let graph = &scenario.graph;
    let d = graph.dim();
    let n_l = graph.n_leaders();
    let mut leaders = leaders0.clone();
    let mut out = Vec::new();

    for (k, seg) in scenario.schedule.iter().enumerate() {
        if seg.t_start >= scenario.duration - TIME_EPS {
            break;
        }
        let t_end = seg.t_end.min(scenario.duration);
        let mut pieces: Vec<Piece> = Vec::new();
        match &seg.command {
            LeaderCommand::Velocities(v) => {
                if v.len() != d * n_l {
                    return Err(FormationError::DimensionMismatch {
                        what: "segment leader velocities",
                        expected: d * n_l,
                        found: v.len(),
                    });
                }
                pieces.push((seg.t_start, t_end, v.clone(), None, None));
            }
            LeaderCommand::Maneuver {
                velocity,
                scale_rate,
            } => {
                if velocity.len() != d {
                    return Err(FormationError::DimensionMismatch {
                        what: "segment velocity",
                        expected: d,
                        found: velocity.len(),
                    });
                }
                let target = match solver {
                    Some(s) => Some(Configuration::from_parts(
                        d,
                        &leaders,
                        &s.respond(&leaders)?,
                    )?),
                    None if *scale_rate == 0.0 => None,
                    None => {
                        return Err(FormationError::InvalidCommand(
                            "scaling needs a localizable target formation".into(),
                        ))
                    }
                };
                let cmd = match &target {
                    Some(t) => Some(combined_command(velocity, t, n_l, *scale_rate)?),
                    None => None,
                };
                let v = match &cmd {
                    Some(c) => c.leader_velocities(),
                    None => crate::maneuver::translation_command(velocity, n_l),
                };
                let mut split = t_end;
                if *scale_rate < 0.0 {
                    let s0 = scale(target.as_ref().expect("scaling implies a target"));
                    let ramp_end = seg.t_start + (SCALE_FLOOR / s0 - 1.0) / scale_rate;
                    if ramp_end < t_end {
                        warn!(
                            "segment {k}: target scale reaches {SCALE_FLOOR} at t = {ramp_end}; \
                             holding scale for the rest of the segment"
                        );
                        split = ramp_end.max(seg.t_start);
                    }
                }
                if split > seg.t_start {
                    pieces.push((seg.t_start, split, v, cmd, target));
                }
                if split < t_end {
                    let hold = crate::maneuver::translation_command(velocity, n_l);
                    pieces.push((split, t_end, hold, None, None));
                }
            }
        }
        for (t0, t1, v, command, target_start) in pieces {
            leaders += &v * (t1 - t0);
            out.push(ResolvedSegment {
                t_start: t0,
                t_end: t1,
                leader_velocity: v,
                source: k,
                command,
                target_start,
            });
        }
    }
    Ok(out)
}

impl SimContext {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.scenario.graph
    }

    pub fn spec(&self) -> &BearingSpec {
        &self.spec
    }

    pub fn laplacian(&self) -> &BearingLaplacian {
        &self.laplacian
    }

    pub fn rigidity(&self) -> &RigidityReport {
        &self.rigidity
    }

    pub fn localizability(&self) -> &Localizability {
        &self.localizability
    }

    pub fn solver(&self) -> Option<&FollowerSolver> {
        self.solver.as_ref()
    }

    pub fn gains(&self) -> &Gains {
        &self.scenario.gains
    }

    pub fn segments(&self) -> &[ResolvedSegment] {
        &self.segments
    }

    pub fn initial_config(&self) -> &Configuration {
        &self.initial_config
    }

    pub fn initial_state(&self) -> SimState {
        let g = self.graph();
        SimState {
            p: self.initial_config.stacked().clone(),
            xi: ControllerState::zeros(g.dim(), g.n_followers()).into_stacked(),
        }
    }

    /// Closed-loop error matrix for the scenario's gains.
    pub fn closed_loop(&self) -> DMatrix<f64> {
        closed_loop_matrix(self.laplacian.ff(), self.gains())
    }

    pub fn spectrum(&self) -> Result<HurwitzReport> {
        verify_hurwitz(&self.closed_loop())
    }

    /// Segment active at `t`; segments are left-closed, right-open, and the
    /// last one also owns its end point.
    pub fn segment_at(&self, t: f64) -> &ResolvedSegment {
        self.segments
            .iter()
            .rev()
            .find(|s| s.t_start <= t)
            .unwrap_or(&self.segments[0])
    }

    /// State derivative with a given leader velocity.
    pub fn derivative_with(&self, state: &SimState, v_leader: &DVector<f64>) -> Result<SimState> {
        let d = self.graph().dim();
        let config = Configuration::new(d, state.p.clone())?;
        let xi = ControllerState::from_stacked(state.xi.clone());
        let rate = stacked_dynamics(&self.laplacian, &config, &xi, self.gains(), v_leader)?;
        Ok(SimState {
            p: rate.p_dot,
            xi: rate.xi_dot,
        })
    }

    pub fn derivative(&self, state: &SimState, t: f64) -> Result<SimState> {
        self.derivative_with(state, &self.segment_at(t).leader_velocity)
    }

    /// One classical RK4 step with the leader velocity active at `t`.
    pub fn step(&self, state: &SimState, t: f64, dt: f64) -> Result<SimState> {
        self.rk4(state, &self.segment_at(t).leader_velocity, dt)
    }

    fn rk4(&self, s: &SimState, v: &DVector<f64>, h: f64) -> Result<SimState> {
        let k1 = self.derivative_with(s, v)?;
        let k2 = self.derivative_with(&axpy(s, &k1, h / 2.0), v)?;
        let k3 = self.derivative_with(&axpy(s, &k2, h / 2.0), v)?;
        let k4 = self.derivative_with(&axpy(s, &k3, h), v)?;
        let w = h / 6.0;
        Ok(SimState {
            p: &s.p + (&k1.p + &k2.p * 2.0 + &k3.p * 2.0 + &k4.p) * w,
            xi: &s.xi + (&k1.xi + &k2.xi * 2.0 + &k3.xi * 2.0 + &k4.xi) * w,
        })
    }

    /// Target follower positions for the given leader stack, if localizable.
    pub fn target_followers(&self, leaders: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        self.solver.as_ref().map(|s| s.respond(leaders)).transpose()
    }

    /// Steady integral state `L_ff^{-1} L_fl v_l / k_i` for a constant leader velocity.
    pub fn steady_integral(&self, v_leader: &DVector<f64>) -> Option<DVector<f64>> {
        let solver = self.solver.as_ref()?;
        Some(solver.solve_ff(&(self.laplacian.fl() * v_leader)) / self.gains().ki)
    }

    fn metrics(&self, state: &SimState) -> Result<Sample> {
        let g = self.graph();
        let d = g.dim();
        let n_l = g.n_leaders();
        let config = Configuration::new(d, state.p.clone())?;
        let mut bearing_error = 0.0;
        for (k, &(i, j)) in g.edges().iter().enumerate() {
            let gij =
                bearing(config.position(i), config.position(j)).map_err(|e| with_edge(e, k))?;
            bearing_error += (gij - self.spec.bearing(k)).norm();
        }
        let tracking_error = match self.target_followers(&config.leader_stack(n_l))? {
            Some(target) => (config.follower_stack(n_l) - target).norm(),
            None => f64::NAN,
        };
        Ok(Sample {
            bearing_error,
            tracking_error,
            centroid: centroid(&config),
            scale: scale(&config),
        })
    }

    /// Integrates over `[0, duration]`, recording the state and metrics at every step.
    pub fn run(&self) -> Result<Trajectory> {
        self.run_from(self.initial_state())
    }

    pub fn run_from(&self, initial: SimState) -> Result<Trajectory> {
        let dt = self.scenario.dt;
        let mut traj = Trajectory::default();
        let mut state = initial;
        traj.push(0.0, &state, self.metrics(&state)?, 0);

        for (idx, seg) in self.segments.iter().enumerate() {
            let span = seg.t_end - seg.t_start;
            let ratio = span / dt;
            let whole = ratio.round();
            let (full_steps, remainder) = if (ratio - whole).abs() <= TIME_EPS * ratio.max(1.0) {
                (whole as usize, false)
            } else {
                (ratio.floor() as usize, true)
            };
            let total = full_steps + usize::from(remainder);
            for s in 0..total {
                let t0 = seg.t_start + s as f64 * dt;
                let t1 = if s + 1 == total {
                    seg.t_end
                } else {
                    seg.t_start + (s + 1) as f64 * dt
                };
                state = self.rk4(&state, &seg.leader_velocity, t1 - t0)?;
                traj.push(t1, &state, self.metrics(&state)?, idx);
            }
        }
        Ok(traj)
    }
}

fn axpy(s: &SimState, k: &SimState, h: f64) -> SimState {
    SimState {
        p: &s.p + &k.p * h,
        xi: &s.xi + &k.xi * h,
    }
}

struct Sample {
    bearing_error: f64,
    tracking_error: f64,
    centroid: DVector<f64>,
    scale: f64,
}

/// Time series produced by [`SimContext::run`]; every field has one entry per
/// recorded time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    /// `Σ_(i,j) |g_ij(t) - g*_ij|`
    pub bearing_error: Vec<f64>,
    /// `|p_f - p*_f|`; NaN when the target is not localizable.
    pub tracking_error: Vec<f64>,
    pub centroid: Vec<DVector<f64>>,
    pub scale: Vec<f64>,
    /// Index into [`SimContext::segments`] of the segment that produced each sample.
    pub segment: Vec<usize>,
}

impl Trajectory {
    fn push(&mut self, t: f64, state: &SimState, sample: Sample, segment: usize) {
        self.times.push(t);
        self.positions.push(state.p.clone());
        self.xi.push(state.xi.clone());
        self.bearing_error.push(sample.bearing_error);
        self.tracking_error.push(sample.tracking_error);
        self.centroid.push(sample.centroid);
        self.scale.push(sample.scale);
        self.segment.push(segment);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<SimState> {
        Some(SimState {
            p: self.positions.last()?.clone(),
            xi: self.xi.last()?.clone(),
        })
    }

    /// Sample indices whose time lies in `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let start = self.times.partition_point(|&t| t < t0);
        let end = self.times.partition_point(|&t| t <= t1);
        start..end
    }
}

/// Least-squares fit of `ln(error) = intercept + rate * t`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExponentialFit {
    /// Slope of `ln(error)`; negative for a decaying series.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `rate < 0` and `r_squared >= GOOD_FIT_R2`.
    pub is_good_decay: bool,
}

pub const GOOD_FIT_R2: f64 = 0.99;
pub const MIN_FIT_SAMPLES: usize = 3;

pub fn exponential_fit(times: &[f64], series: &[f64]) -> Result<ExponentialFit> {
    let len = times.len().min(series.len());
    if len < MIN_FIT_SAMPLES {
        return Err(FormationError::WindowTooShort {
            len,
            min: MIN_FIT_SAMPLES,
        });
    }
    if let Some((index, &value)) = series[..len]
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(FormationError::NonPositiveSample { index, value });
    }
    let n = len as f64;
    let ys: Vec<f64> = series[..len].iter().map(|v| v.ln()).collect();
    let mean_t = times[..len].iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in times[..len].iter().zip(&ys) {
        let (dt, dy) = (t - mean_t, y - mean_y);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(FormationError::WindowTooShort {
            len: 1,
            min: MIN_FIT_SAMPLES,
        });
    }
    let rate = sty / stt;
    let intercept = mean_y - rate * mean_t;
    let r_squared = if syy == 0.0 {
        0.0
    } else {
        sty * sty / (stt * syy)
    };
    Ok(ExponentialFit {
        rate,
        intercept,
        r_squared,
        is_good_decay: rate < 0.0 && r_squared >= GOOD_FIT_R2,
    })
}
