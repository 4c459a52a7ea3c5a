//! Closed-loop formation simulation for single- and double-integrator agents.
//!
//! The same controller can run in the actual domain (positions z) or the
//! transformed domain (ξ = Φz). Both integrate with fixed-step classical RK4
//! so their trajectories can be compared sample by sample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{FormationError, Result};
use crate::linalg::{c, diag, CMatrix, CVector, C64};
use crate::potential::{min_pairwise_distance, potential_matrix, PotentialParams};
use crate::shape::TransformPair;

/// Any state component above this magnitude aborts the run.
pub const BLOWUP_THRESHOLD: f64 = 1e12;
/// Pass threshold for [`equivalence_report`].
pub const EQUIVALENCE_TOL: f64 = 1e-6;
/// Slack when counting steps, so `t_end/dt` landing a hair under an integer
/// still produces the expected sample count.
const STEP_COUNT_SLACK: f64 = 1e-9;

/// `c(t) = origin + velocity·t + amplitude·sin(ωt)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidPath {
    pub origin: C64,
    pub velocity: C64,
    pub amplitude: C64,
    pub omega: f64,
}

impl CentroidPath {
    pub fn fixed(at: C64) -> Self {
        Self {
            origin: at,
            velocity: c(0.0, 0.0),
            amplitude: c(0.0, 0.0),
            omega: 0.0,
        }
    }

    /// `t + ι·sin t`
    pub fn line_with_sine() -> Self {
        Self {
            origin: c(0.0, 0.0),
            velocity: c(1.0, 0.0),
            amplitude: c(0.0, 1.0),
            omega: 1.0,
        }
    }

    /// Value and first two time derivatives.
    pub fn eval(&self, t: f64) -> [C64; 3] {
        let (s, co) = (self.omega * t).sin_cos();
        let w = self.omega;
        [
            self.origin + self.velocity * t + self.amplitude * s,
            self.velocity + self.amplitude * (w * co),
            self.amplitude * (-w * w * s),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Constant(f64),
    /// `a(t) = amplitude·sin(ωt)`
    Oscillating { amplitude: f64, omega: f64 },
}

impl Scale {
    pub fn eval(&self, t: f64) -> [f64; 3] {
        match *self {
            Scale::Constant(a) => [a, 0.0, 0.0],
            Scale::Oscillating { amplitude, omega } => {
                let (s, co) = (omega * t).sin_cos();
                [
                    amplitude * s,
                    amplitude * omega * co,
                    -amplitude * omega * omega * s,
                ]
            }
        }
    }
}

/// Desired agent positions `z_d(t) = a(t)·basis + c(t)·1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredTrajectory {
    pub basis: CVector,
    pub centroid: CentroidPath,
    pub scale: Scale,
}

impl DesiredTrajectory {
    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// `z_d`, `ż_d`, `z̈_d` at time t.
    pub fn positions(&self, t: f64) -> [CVector; 3] {
        let a = self.scale.eval(t);
        let cp = self.centroid.eval(t);
        let make = |k: usize| self.basis.map(|b| b * a[k] + cp[k]);
        [make(0), make(1), make(2)]
    }

    /// `ξ_d`, `ξ̇_d`, `ξ̈_d` at time t.
    pub fn transformed(&self, t: f64, transform: &TransformPair) -> [CVector; 3] {
        self.positions(t).map(|v| transform.forward() * v)
    }
}

/// Regular hexagon of side `a` centred at the origin, counterclockwise
/// from `−a`.
pub fn hexagon_basis(a: f64) -> CVector {
    let h = 3f64.sqrt() / 2.0;
    CVector::from_vec(vec![
        c(-a, 0.0),
        c(-0.5 * a, h * a),
        c(0.5 * a, h * a),
        c(a, 0.0),
        c(0.5 * a, -h * a),
        c(-0.5 * a, -h * a),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Actual,
    Transformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gains {
    Single(Vec<C64>),
    Double {
        d1: Vec<C64>,
        d2: Vec<C64>,
        gamma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub domain: Domain,
    pub gains: Gains,
    pub potential: Option<PotentialParams>,
}

impl ControllerConfig {
    pub fn single(d: Vec<C64>, domain: Domain) -> Self {
        Self {
            domain,
            gains: Gains::Single(d),
            potential: None,
        }
    }

    /// `D₂ = γ·D₁`
    pub fn double(d1: Vec<C64>, gamma: f64, domain: Domain) -> Self {
        let d2 = d1.iter().map(|d| d * gamma).collect();
        Self {
            domain,
            gains: Gains::Double { d1, d2, gamma },
            potential: None,
        }
    }

    pub fn with_potential(mut self, params: PotentialParams) -> Self {
        self.potential = Some(params);
        self
    }

    pub fn in_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn mode(&self) -> Mode {
        match self.gains {
            Gains::Single(_) => Mode::Single,
            Gains::Double { .. } => Mode::Double,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |d: &[C64]| -> Result<()> {
            if d.len() != n {
                return Err(FormationError::DimensionMismatch {
                    expected: n,
                    actual: d.len(),
                });
            }
            if d.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(FormationError::InvalidConfig("gain entries must be finite".into()));
            }
            Ok(())
        };
        match &self.gains {
            Gains::Single(d) => check(d),
            Gains::Double { d1, d2, gamma } => {
                check(d1)?;
                check(d2)?;
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(FormationError::InvalidConfig(format!(
                        "gamma must be positive, got {gamma}"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub z: CVector,
    pub zdot: Option<CVector>,
    pub xi: CVector,
    pub xidot: Option<CVector>,
}

impl SimState {
    pub fn new(t: f64, z: CVector, zdot: Option<CVector>, transform: &TransformPair) -> Self {
        let xi = transform.forward() * &z;
        let xidot = zdot.as_ref().map(|v| transform.forward() * v);
        Self { t, z, zdot, xi, xidot }
    }

    fn from_domain(
        t: f64,
        x: CVector,
        v: Option<CVector>,
        domain: Domain,
        transform: &TransformPair,
    ) -> Self {
        match domain {
            Domain::Actual => Self::new(t, x, v, transform),
            Domain::Transformed => {
                let z = transform.inverse() * &x;
                let zdot = v.as_ref().map(|v| transform.inverse() * v);
                Self {
                    t,
                    z,
                    zdot,
                    xi: x,
                    xidot: v,
                }
            }
        }
    }

    fn domain_parts(&self, domain: Domain) -> (&CVector, Option<&CVector>) {
        match domain {
            Domain::Actual => (&self.z, self.zdot.as_ref()),
            Domain::Transformed => (&self.xi, self.xidot.as_ref()),
        }
    }
}

/// Controller output split into formation and avoidance parts, expressed in
/// the controller's own domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub formation: CVector,
    pub avoidance: CVector,
}

impl ControlOutput {
    pub fn total(&self) -> CVector {
        &self.formation + &self.avoidance
    }
}

/// Precomputed gain matrices for one domain.
#[derive(Debug, Clone)]
struct Plant {
    domain: Domain,
    /// `DΦ⁻¹` (transformed) or `Φ⁻¹D` (actual); `D₁` for double mode.
    k1: CMatrix,
    /// `D₂Φ⁻¹` or `Φ⁻¹D₂` in double mode.
    k2: Option<CMatrix>,
    potential: Option<PotentialParams>,
}

impl Plant {
    fn new(cfg: &ControllerConfig, transform: &TransformPair) -> Result<Self> {
        cfg.validate(transform.n())?;
        let gain = |d: &[C64]| match cfg.domain {
            Domain::Transformed => diag(d) * transform.inverse(),
            Domain::Actual => transform.inverse() * diag(d),
        };
        let (k1, k2) = match &cfg.gains {
            Gains::Single(d) => (gain(d), None),
            Gains::Double { d1, d2, .. } => (gain(d1), Some(gain(d2))),
        };
        Ok(Self {
            domain: cfg.domain,
            k1,
            k2,
            potential: cfg.potential,
        })
    }

    fn avoidance(&self, z: &CVector, transform: &TransformPair) -> Result<CVector> {
        let Some(params) = &self.potential else {
            return Ok(CVector::zeros(z.len()));
        };
        let pz = potential_matrix(z, params)?;
        let grad = pz.gradient(z);
        Ok(match self.domain {
            Domain::Actual => -grad,
            // ΦP_zΦ⁻¹ξ with ξ = Φz, associated so that no dense product is formed
            Domain::Transformed => -(transform.forward() * grad),
        })
    }

    fn control(
        &self,
        t: f64,
        x: &CVector,
        v: Option<&CVector>,
        desired: &DesiredTrajectory,
        transform: &TransformPair,
    ) -> Result<ControlOutput> {
        let [xd, xd_dot, xd_ddot] = match self.domain {
            Domain::Actual => desired.positions(t),
            Domain::Transformed => desired.transformed(t, transform),
        };
        let z = match self.domain {
            Domain::Actual => x.clone(),
            Domain::Transformed => transform.inverse() * x,
        };
        let avoidance = self.avoidance(&z, transform)?;
        let err = x - &xd;
        let formation = match (&self.k2, v) {
            (None, _) => -(&self.k1 * err) + xd_dot,
            (Some(k2), Some(v)) => {
                let verr = v - &xd_dot;
                -(&self.k1 * err) - k2 * verr + xd_ddot
            }
            (Some(_), None) => {
                return Err(FormationError::InvalidConfig(
                    "double-integrator control needs a velocity state".into(),
                ))
            }
        };
        Ok(ControlOutput {
            formation,
            avoidance,
        })
    }
}

/// `u = −DΦ⁻¹ξ_e + ξ̇_d − ΦP_zΦ⁻¹ξ` in the transformed domain, or
/// `u = −Φ⁻¹D z_e + ż_d − P_z z` in the actual domain.
pub fn controller_single(
    state: &SimState,
    desired: &DesiredTrajectory,
    cfg: &ControllerConfig,
    transform: &TransformPair,
) -> Result<ControlOutput> {
    if cfg.mode() != Mode::Single {
        return Err(FormationError::InvalidConfig(
            "controller_single needs single-integrator gains".into(),
        ));
    }
    let plant = Plant::new(cfg, transform)?;
    let (x, _) = state.domain_parts(cfg.domain);
    plant.control(state.t, x, None, desired, transform)
}

/// `v = −D₁Φ⁻¹ξ_e − D₂Φ⁻¹ξ̇_e + ξ̈_d − ΦP_zΦ⁻¹ξ`, or its actual-domain
/// counterpart with `Φ⁻¹D₁`, `Φ⁻¹D₂`.
pub fn controller_double(
    state: &SimState,
    desired: &DesiredTrajectory,
    cfg: &ControllerConfig,
    transform: &TransformPair,
) -> Result<ControlOutput> {
    if cfg.mode() != Mode::Double {
        return Err(FormationError::InvalidConfig(
            "controller_double needs double-integrator gains".into(),
        ));
    }
    let plant = Plant::new(cfg, transform)?;
    let (x, v) = state.domain_parts(cfg.domain);
    plant.control(state.t, x, v, desired, transform)
}

/// One classical RK4 step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(t: f64, y: &CVector, dt: f64, mut f: F) -> Result<CVector>
where
    F: FnMut(f64, &CVector) -> Result<CVector>,
{
    let h = dt / 2.0;
    let k1 = f(t, y)?;
    let k2 = f(t + h, &(y + &k1 * c(h, 0.0)))?;
    let k3 = f(t + h, &(y + &k2 * c(h, 0.0)))?;
    let k4 = f(t + dt, &(y + &k3 * c(dt, 0.0)))?;
    let sum = k1 + (k2 + k3) * c(2.0, 0.0) + k4;
    Ok(y + sum * c(dt / 6.0, 0.0))
}

fn stack(x: &CVector, v: Option<&CVector>) -> CVector {
    match v {
        None => x.clone(),
        Some(v) => CVector::from_iterator(x.len() * 2, x.iter().chain(v.iter()).copied()),
    }
}

fn split(y: &CVector, n: usize, double: bool) -> (CVector, Option<CVector>) {
    if double {
        (y.rows(0, n).into_owned(), Some(y.rows(n, n).into_owned()))
    } else {
        (y.clone(), None)
    }
}

fn check_blowup(y: &CVector) -> Result<()> {
    for (k, v) in y.iter().enumerate() {
        let m = v.norm();
        if !m.is_finite() || m > BLOWUP_THRESHOLD {
            return Err(FormationError::NumericalBlowup {
                component: k,
                magnitude: m,
            });
        }
    }
    Ok(())
}

/// Advances the state by one RK4 step of the configured domain's closed loop.
pub fn step(
    state: &SimState,
    desired: &DesiredTrajectory,
    cfg: &ControllerConfig,
    transform: &TransformPair,
    dt: f64,
) -> Result<SimState> {
    let plant = Plant::new(cfg, transform)?;
    step_with(&plant, state, state.t + dt, desired, transform, dt)
}

fn step_with(
    plant: &Plant,
    state: &SimState,
    t_next: f64,
    desired: &DesiredTrajectory,
    transform: &TransformPair,
    dt: f64,
) -> Result<SimState> {
    if !(dt > 0.0) {
        return Err(FormationError::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let n = transform.n();
    let double = plant.k2.is_some();
    let (x, v) = state.domain_parts(plant.domain);
    if double && v.is_none() {
        return Err(FormationError::InvalidConfig(
            "double-integrator state needs velocities".into(),
        ));
    }
    let y0 = stack(x, v);
    let y1 = rk4_step(state.t, &y0, dt, |t, y| {
        let (x, v) = split(y, n, double);
        let u = plant.control(t, &x, v.as_ref(), desired, transform)?.total();
        Ok(match v {
            None => u,
            Some(v) => stack(&v, Some(&u)),
        })
    })?;
    check_blowup(&y1)?;
    let (x, v) = split(&y1, n, double);
    Ok(SimState::from_domain(t_next, x, v, plant.domain, transform))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub z: CVector,
    pub xi: CVector,
    pub xi_e: CVector,
    pub xi_e_norm: f64,
    /// ξ̇_e, double mode only.
    pub xidot_e: Option<CVector>,
    pub min_dist: f64,
    pub u_formation: CVector,
    pub u_avoidance: CVector,
}

impl Sample {
    /// `‖(ξ_e, ξ̇_e)‖`, which is `‖ξ_e‖` in single mode.
    pub fn state_error_norm(&self) -> f64 {
        let v = self.xidot_e.as_ref().map_or(0.0, |v| v.norm_squared());
        (self.xi_e.norm_squared() + v).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Two agents sampled closer than the avoidance radius, where the
    /// potential gradient is zero.
    AvoidanceBreach { i: usize, j: usize, distance: f64 },
    SingularBand { i: usize, j: usize, distance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
}

impl TrajectoryLog {
    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn terminal_error(&self) -> Option<f64> {
        self.last().map(|s| s.xi_e_norm)
    }

    pub fn min_distance(&self) -> f64 {
        self.samples.iter().map(|s| s.min_dist).fold(f64::INFINITY, f64::min)
    }

    pub fn breach_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::AvoidanceBreach { .. }))
            .count()
    }
}

/// Everything needed to integrate one closed loop.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub transform: TransformPair,
    pub controller: ControllerConfig,
    pub desired: DesiredTrajectory,
    pub z0: CVector,
    /// Initial velocities in double mode; defaults to `ż_d(0)`.
    pub zdot0: Option<CVector>,
    pub dt: f64,
    pub t_end: f64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.transform.n();
        for len in [self.desired.n(), self.z0.len()] {
            if len != n {
                return Err(FormationError::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if let Some(v) = &self.zdot0 {
            if v.len() != n {
                return Err(FormationError::DimensionMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FormationError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(FormationError::InvalidConfig(format!(
                "t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        self.controller.validate(n)
    }

    /// Number of RK4 steps; the log holds one more sample than this.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt + STEP_COUNT_SLACK).floor() as usize
    }

    pub fn in_domain(&self, domain: Domain) -> Self {
        let mut s = self.clone();
        s.controller.domain = domain;
        s
    }

    fn initial_state(&self) -> SimState {
        let zdot = match self.controller.mode() {
            Mode::Single => None,
            Mode::Double => Some(
                self.zdot0
                    .clone()
                    .unwrap_or_else(|| self.desired.positions(0.0)[1].clone()),
            ),
        };
        SimState::new(0.0, self.z0.clone(), zdot, &self.transform)
    }
}

/// A run that stopped early; `partial` holds every sample taken before the
/// failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct SimFailure {
    pub partial: TrajectoryLog,
    #[source]
    pub error: FormationError,
}

fn record(
    plant: &Plant,
    state: &SimState,
    spec: &SimSpec,
    log: &mut TrajectoryLog,
) -> Result<()> {
    let [xi_d, xi_d_dot, _] = spec.desired.transformed(state.t, &spec.transform);
    let xi_e = &state.xi - xi_d;
    let xidot_e = state.xidot.as_ref().map(|v| v - xi_d_dot);
    let (min_dist, _, _) = min_pairwise_distance(&state.z);
    if let Some(params) = &plant.potential {
        for i in 0..state.z.len() {
            for j in i + 1..state.z.len() {
                let distance = (state.z[i] - state.z[j]).norm();
                if (distance - params.avoidance_radius()).abs()
                    < crate::potential::SINGULAR_BAND_TOL
                {
                    log.events.push(Event {
                        t: state.t,
                        kind: EventKind::SingularBand { i, j, distance },
                    });
                } else if distance < params.avoidance_radius() {
                    log::warn!("avoidance breach between agents {i} and {j} at t = {}", state.t);
                    log.events.push(Event {
                        t: state.t,
                        kind: EventKind::AvoidanceBreach { i, j, distance },
                    });
                }
            }
        }
    }
    let (x, v) = state.domain_parts(plant.domain);
    let u = plant.control(state.t, x, v, &spec.desired, &spec.transform)?;
    log.samples.push(Sample {
        t: state.t,
        z: state.z.clone(),
        xi: state.xi.clone(),
        xi_e_norm: xi_e.norm(),
        xi_e,
        xidot_e,
        min_dist,
        u_formation: u.formation,
        u_avoidance: u.avoidance,
    });
    Ok(())
}

/// Integrates from `t = 0` to `t_end`, sampling every step at `t = k·dt`.
pub fn run(spec: &SimSpec) -> std::result::Result<TrajectoryLog, Box<SimFailure>> {
    let mut log = TrajectoryLog::default();
    let fail = |log: TrajectoryLog, error: FormationError| {
        Box::new(SimFailure {
            partial: log,
            error,
        })
    };
    if let Err(e) = spec.validate() {
        return Err(fail(log, e));
    }
    let plant = match Plant::new(&spec.controller, &spec.transform) {
        Ok(p) => p,
        Err(e) => return Err(fail(log, e)),
    };
    let steps = spec.step_count();
    log.samples.reserve(steps + 1);
    let mut state = spec.initial_state();
    if let Err(e) = record(&plant, &state, spec, &mut log) {
        return Err(fail(log, e.at(0.0)));
    }
    for k in 1..=steps {
        let t_next = k as f64 * spec.dt;
        let dt = t_next - state.t;
        state = match step_with(&plant, &state, t_next, &spec.desired, &spec.transform, dt) {
            Ok(s) => s,
            Err(e) => return Err(fail(log, e.at(t_next))),
        };
        if let Err(e) = record(&plant, &state, spec, &mut log) {
            return Err(fail(log, e.at(t_next)));
        }
    }
    log::debug!(
        "run finished: {} samples, terminal error {:?}",
        log.samples.len(),
        log.terminal_error()
    );
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Runs the scenario in both domains with `ξ₀ = Φz₀` and compares
/// `max_t ‖Φz(t) − ξ(t)‖∞`.
pub fn equivalence_report(spec: &SimSpec) -> Result<EquivalenceReport> {
    equivalence_between(&spec.in_domain(Domain::Actual), &spec.in_domain(Domain::Transformed))
}

/// Like [`equivalence_report`] but with separately supplied actual-domain and
/// transformed-domain specs, which must share transform, dt and t_end.
pub fn equivalence_between(actual: &SimSpec, transformed: &SimSpec) -> Result<EquivalenceReport> {
    let (za, xb) = std::thread::scope(|s| {
        let a = s.spawn(|| run(actual));
        let b = run(transformed);
        (a.join().expect("simulation thread panicked"), b)
    });
    let za = za.map_err(|f| f.error)?;
    let xb = xb.map_err(|f| f.error)?;
    if za.samples.len() != xb.samples.len() {
        return Err(FormationError::DimensionMismatch {
            expected: za.samples.len(),
            actual: xb.samples.len(),
        });
    }
    let phi = actual.transform.forward();
    let max_deviation = za
        .samples
        .iter()
        .zip(&xb.samples)
        .map(|(a, b)| crate::linalg::max_abs_vec(&(phi * &a.z - &b.xi)))
        .fold(0.0, f64::max);
    Ok(EquivalenceReport {
        max_deviation,
        pass: max_deviation <= EQUIVALENCE_TOL,
    })
}
