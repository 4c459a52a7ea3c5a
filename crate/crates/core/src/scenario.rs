//! Scenario configuration, bundled presets, reports and trajectory output.
//!
//! Configs are JSON. Complex scalars are written as `{"re": …, "im": …}`.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FormationError, Result};
use crate::linalg::{
    c, diag, eigenvalues, identity_residual, min_real, spectrum_distance, CMatrix, CVector, C64,
};
use crate::potential::{potential_matrix, transformed_potential, PotentialParams};
use crate::shape::{
    apply_weight, build_jacobi_scaled, leading_minors, hexagon_phi6, AgentConfig, JacobiScaling,
    TransformPair, WeightMatrix,
};
use crate::sim::{
    equivalence_report, hexagon_basis, run, CentroidPath, ControllerConfig, DesiredTrajectory,
    Domain, Mode, Scale, SimFailure, SimSpec, TrajectoryLog, EQUIVALENCE_TOL,
};
use crate::stabilizer::{
    double_integrator_block, stabilize_double, stabilize_double_pivoted, stabilize_single,
    stabilize_single_pivoted, SearchPolicy,
};

pub const PRESETS: [&str; 4] = ["hexagon6", "hexagon6_reference", "jacobi3", "double6"];

/// Reference gains for the fixed six-agent transform.
pub const REFERENCE_HEXAGON_D: [(f64, f64); 6] = [
    (-1.4140, -1.4140),
    (-2.4498, 2.4498),
    (-4.6189, -2.3095),
    (-3.7244, 1.8622),
    (0.0, -1.6117),
    (0.0340, 0.0),
];

const TOL_ROW_SUM: f64 = 1e-12;
const TOL_SYMMETRY: f64 = 1e-12;
const TOL_FORCE_BALANCE: f64 = 1e-10;
const TOL_SIMILARITY: f64 = 1e-8;
const TOL_INVERSE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<Cx> for C64 {
    fn from(v: Cx) -> Self {
        c(v.re, v.im)
    }
}

impl From<C64> for Cx {
    fn from(v: C64) -> Self {
        Cx { re: v.re, im: v.im }
    }
}

fn to_c64(v: &[Cx]) -> Vec<C64> {
    v.iter().map(|&x| x.into()).collect()
}

fn to_cx(v: &[C64]) -> Vec<Cx> {
    v.iter().map(|&x| x.into()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformSpec {
    Jacobi {
        #[serde(default)]
        scaling: JacobiScaling,
    },
    HexagonPhi6,
    Explicit {
        rows: Vec<Vec<Cx>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec {
    /// Fixed gains; `d2` defaults to `γ·d`.
    Explicit {
        d: Vec<Cx>,
        #[serde(default)]
        d2: Option<Vec<Cx>>,
    },
    Synthesize {
        /// Permute Φ⁻¹ first when a leading minor vanishes.
        #[serde(default)]
        pivot: bool,
        #[serde(default)]
        policy: SearchPolicy,
    },
}

fn default_gamma() -> f64 {
    1.0
}

fn default_domain() -> Domain {
    Domain::Transformed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub mode: Mode,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    pub gains: GainSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSpec {
    Hexagon { side: f64 },
    Points { points: Vec<Cx> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CentroidSpec {
    pub origin: Cx,
    pub velocity: Cx,
    pub amplitude: Cx,
    pub omega: f64,
}

impl From<CentroidSpec> for CentroidPath {
    fn from(s: CentroidSpec) -> Self {
        CentroidPath {
            origin: s.origin.into(),
            velocity: s.velocity.into(),
            amplitude: s.amplitude.into(),
            omega: s.omega,
        }
    }
}

impl From<CentroidPath> for CentroidSpec {
    fn from(p: CentroidPath) -> Self {
        CentroidSpec {
            origin: p.origin.into(),
            velocity: p.velocity.into(),
            amplitude: p.amplitude.into(),
            omega: p.omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesiredSpec {
    pub basis: BasisSpec,
    pub centroid: CentroidSpec,
    pub scale: Scale,
}

/// Explicit positions, or the desired formation at t = 0 shifted by a
/// seeded uniform offset of at most `perturbation` per real component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub positions: Option<Vec<Cx>>,
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub velocities: Option<Vec<Cx>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSpec {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Agent masses; defaults to unit masses matching the basis length.
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    pub transform: TransformSpec,
    #[serde(default)]
    pub weights: Option<Vec<Cx>>,
    pub controller: ControllerSpec,
    pub desired: DesiredSpec,
    #[serde(default)]
    pub potential: Option<PotentialParams>,
    #[serde(default)]
    pub initial: InitialSpec,
    pub integration: IntegrationSpec,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FormationError::InvalidConfig(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario config serializes")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "hexagon6" => Some(hexagon6()),
            "hexagon6_reference" => Some(hexagon6_reference()),
            "jacobi3" => Some(jacobi3()),
            "double6" => Some(double6()),
            _ => None,
        }
    }
}

fn synth(pivot: bool, seed_eigenvalue: f64) -> GainSpec {
    GainSpec::Synthesize {
        pivot,
        policy: SearchPolicy {
            seed_eigenvalue,
            ..SearchPolicy::default()
        },
    }
}

fn moving_hexagon(name: &str, controller: ControllerSpec, t_end: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        masses: None,
        transform: TransformSpec::HexagonPhi6,
        weights: None,
        controller,
        desired: DesiredSpec {
            basis: BasisSpec::Hexagon { side: 2.0 },
            centroid: CentroidPath::line_with_sine().into(),
            scale: Scale::Constant(1.0),
        },
        potential: Some(PotentialParams::new(1.8, 0.6).expect("valid radii")),
        initial: InitialSpec {
            perturbation: 0.3,
            ..InitialSpec::default()
        },
        integration: IntegrationSpec { dt: 1e-3, t_end },
        seed: 7,
    }
}

/// Six agents on a hexagon of side 2 whose centroid follows `t + ι·sin t`,
/// with synthesized gains.
pub fn hexagon6() -> ScenarioConfig {
    moving_hexagon(
        "hexagon6",
        ControllerSpec {
            mode: Mode::Single,
            domain: Domain::Transformed,
            gains: synth(true, 10.0),
            gamma: 1.0,
        },
        20.0,
    )
}

/// hexagon6 driven by the reference gain vector instead of synthesized gains.
pub fn hexagon6_reference() -> ScenarioConfig {
    moving_hexagon(
        "hexagon6_reference",
        ControllerSpec {
            mode: Mode::Single,
            domain: Domain::Transformed,
            gains: GainSpec::Explicit {
                d: REFERENCE_HEXAGON_D
                    .iter()
                    .map(|&(re, im)| Cx { re, im })
                    .collect(),
                d2: None,
            },
            gamma: 1.0,
        },
        20.0,
    )
}

/// Double-integrator hexagon with D₂ = D₁.
pub fn double6() -> ScenarioConfig {
    moving_hexagon(
        "double6",
        ControllerSpec {
            mode: Mode::Double,
            domain: Domain::Transformed,
            gains: synth(true, 30.0),
            gamma: 1.0,
        },
        50.0,
    )
}

/// Three unit-mass agents; agents 1 and 2 start 1.2r apart inside the
/// detection radius and must swap sides to reach their targets.
pub fn jacobi3() -> ScenarioConfig {
    let h = 1.5 * 3f64.sqrt();
    let pts = |v: &[(f64, f64)]| v.iter().map(|&(re, im)| Cx { re, im }).collect();
    ScenarioConfig {
        name: "jacobi3".into(),
        masses: Some(vec![1.0; 3]),
        transform: TransformSpec::Jacobi {
            scaling: JacobiScaling::RootReducedMass,
        },
        weights: None,
        controller: ControllerSpec {
            mode: Mode::Single,
            domain: Domain::Transformed,
            gains: synth(false, 1.0),
            gamma: 1.0,
        },
        desired: DesiredSpec {
            basis: BasisSpec::Points {
                points: pts(&[(1.5, 0.0), (-1.5, 0.0), (0.0, h)]),
            },
            centroid: CentroidPath::fixed(c(0.0, 0.0)).into(),
            scale: Scale::Constant(1.0),
        },
        potential: Some(PotentialParams::new(2.0, 1.0).expect("valid radii")),
        initial: InitialSpec {
            positions: Some(pts(&[(-0.6, 0.0), (0.6, 0.0), (0.0, -3.0)])),
            ..InitialSpec::default()
        },
        integration: IntegrationSpec { dt: 1e-3, t_end: 20.0 },
        seed: 0,
    }
}

/// Spectral summary of the gains a scenario runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub mode: Mode,
    pub d: Vec<Cx>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d2: Option<Vec<Cx>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Spectrum of DΦ⁻¹ (D₁Φ⁻¹ in double mode).
    pub eigenvalues: Vec<Cx>,
    /// Spectrum of the block system matrix, double mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_eigenvalues: Option<Vec<Cx>>,
    /// `min Re λ(DΦ⁻¹)` in single mode, `−max Re λ(A)` in double mode.
    pub margin: f64,
    /// Leading principal minors of Φ⁻¹.
    pub minors: Vec<Cx>,
    pub synthesized: bool,
    /// Symmetric permutation used by the synthesis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    pub pass: bool,
}

impl EigenReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A config with every preset, transform and gain resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub agents: AgentConfig,
    pub spec: SimSpec,
    pub report: EigenReport,
    pub seed: u64,
}

fn invalid(msg: impl Into<String>) -> FormationError {
    FormationError::InvalidConfig(msg.into())
}

fn build_transform(cfg: &ScenarioConfig, agents: &AgentConfig) -> Result<TransformPair> {
    let base = match &cfg.transform {
        TransformSpec::Jacobi { scaling } => build_jacobi_scaled(agents, *scaling)?,
        TransformSpec::HexagonPhi6 => {
            if agents.n() != 6 {
                return Err(FormationError::DimensionMismatch {
                    expected: 6,
                    actual: agents.n(),
                });
            }
            hexagon_phi6()
        }
        TransformSpec::Explicit { rows } => {
            let n = agents.n();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(invalid(format!("explicit transform must be {n}x{n}")));
            }
            TransformPair::new(CMatrix::from_fn(n, n, |i, j| rows[i][j].into()))?
        }
    };
    match &cfg.weights {
        None => Ok(base),
        Some(w) => apply_weight(&base, &WeightMatrix::new(to_c64(w))?),
    }
}

fn build_desired(cfg: &DesiredSpec) -> Result<DesiredTrajectory> {
    let basis = match &cfg.basis {
        BasisSpec::Hexagon { side } => {
            if *side == 0.0 || !side.is_finite() {
                return Err(invalid("hexagon side must be nonzero"));
            }
            hexagon_basis(*side)
        }
        BasisSpec::Points { points } => CVector::from_vec(to_c64(points)),
    };
    Ok(DesiredTrajectory {
        basis,
        centroid: cfg.centroid.into(),
        scale: cfg.scale,
    })
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(FormationError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Verifies explicit gains or runs the stabilizer, producing the controller
/// and its eigen-report.
fn resolve_gains(
    cfg: &ControllerSpec,
    transform: &TransformPair,
    potential: Option<PotentialParams>,
) -> Result<(ControllerConfig, EigenReport)> {
    let phi_inv = transform.inverse();
    let n = transform.n();
    let minors = to_cx(&leading_minors(phi_inv));
    let gamma = cfg.gamma;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    let (controller, report) = match (&cfg.gains, cfg.mode) {
        (GainSpec::Explicit { d, .. }, Mode::Single) => {
            check_len(n, d.len())?;
            let d = to_c64(d);
            let eigs = eigenvalues(&(diag(&d) * phi_inv))?;
            let margin = min_real(&eigs);
            let report = EigenReport {
                mode: Mode::Single,
                d: to_cx(&d),
                d2: None,
                gamma: None,
                eigenvalues: to_cx(&eigs),
                block_eigenvalues: None,
                margin,
                minors,
                synthesized: false,
                permutation: None,
                pass: margin > 0.0,
            };
            (ControllerConfig::single(d, cfg.domain), report)
        }
        (GainSpec::Explicit { d, d2 }, Mode::Double) => {
            check_len(n, d.len())?;
            let d1 = to_c64(d);
            let d2 = match d2 {
                Some(v) => {
                    check_len(n, v.len())?;
                    to_c64(v)
                }
                None => d1.iter().map(|x| x * gamma).collect(),
            };
            let sigma = eigenvalues(&(diag(&d1) * phi_inv))?;
            let block = eigenvalues(&double_integrator_block(&d1, &d2, phi_inv))?;
            let margin = -crate::linalg::max_real(&block);
            let report = EigenReport {
                mode: Mode::Double,
                d: to_cx(&d1),
                d2: Some(to_cx(&d2)),
                gamma: Some(gamma),
                eigenvalues: to_cx(&sigma),
                block_eigenvalues: Some(to_cx(&block)),
                margin,
                minors,
                synthesized: false,
                permutation: None,
                pass: margin > 0.0,
            };
            let ctl = ControllerConfig {
                domain: cfg.domain,
                gains: crate::sim::Gains::Double { d1, d2, gamma },
                potential: None,
            };
            (ctl, report)
        }
        (GainSpec::Synthesize { pivot, policy }, Mode::Single) => {
            policy.validate()?;
            let r = if *pivot {
                stabilize_single_pivoted(phi_inv, policy)?
            } else {
                stabilize_single(phi_inv, policy)?
            };
            let report = EigenReport {
                mode: Mode::Single,
                d: to_cx(&r.d),
                d2: None,
                gamma: None,
                eigenvalues: to_cx(&r.achieved_eigs),
                block_eigenvalues: None,
                margin: r.margin,
                minors,
                synthesized: true,
                permutation: Some(r.permutation),
                pass: r.margin > 0.0,
            };
            (ControllerConfig::single(r.d, cfg.domain), report)
        }
        (GainSpec::Synthesize { pivot, policy }, Mode::Double) => {
            policy.validate()?;
            let r = if *pivot {
                stabilize_double_pivoted(phi_inv, policy, gamma)?
            } else {
                stabilize_double(phi_inv, policy, gamma)?
            };
            let report = EigenReport {
                mode: Mode::Double,
                d: to_cx(&r.d1),
                d2: Some(to_cx(&r.d2)),
                gamma: Some(r.gamma),
                eigenvalues: to_cx(&r.sigma),
                block_eigenvalues: Some(to_cx(&r.block_eigs)),
                margin: r.margin,
                minors,
                synthesized: true,
                permutation: Some(r.permutation),
                pass: r.margin > 0.0,
            };
            let ctl = ControllerConfig {
                domain: cfg.domain,
                gains: crate::sim::Gains::Double {
                    d1: r.d1,
                    d2: r.d2,
                    gamma: r.gamma,
                },
                potential: None,
            };
            (ctl, report)
        }
    };
    let controller = ControllerConfig {
        potential,
        ..controller
    };
    Ok((controller, report))
}

fn initial_positions(
    cfg: &InitialSpec,
    desired: &DesiredTrajectory,
    seed: u64,
) -> Result<CVector> {
    let n = desired.n();
    let base = match &cfg.positions {
        Some(p) => {
            check_len(n, p.len())?;
            CVector::from_vec(to_c64(p))
        }
        None => desired.positions(0.0)[0].clone(),
    };
    let eps = cfg.perturbation;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(invalid("perturbation must be a nonnegative real"));
    }
    if eps == 0.0 {
        return Ok(base);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(base.map(|z| z + c(rng.random_range(-eps..=eps), rng.random_range(-eps..=eps))))
}

impl Scenario {
    /// Resolves presets, builds the transform and fixes the gains
    /// (synthesizing them when requested).
    pub fn resolve(cfg: &ScenarioConfig) -> Result<Self> {
        let desired = build_desired(&cfg.desired)?;
        let n = desired.n();
        let agents = match &cfg.masses {
            Some(m) => AgentConfig::new(m.clone())?,
            None => AgentConfig::unit(n)?,
        };
        check_len(n, agents.n())?;
        let transform = build_transform(cfg, &agents)?;
        if let Some(p) = &cfg.potential {
            PotentialParams::new(p.detection_radius(), p.avoidance_radius())?;
        }
        let (controller, report) = resolve_gains(&cfg.controller, &transform, cfg.potential)?;
        let z0 = initial_positions(&cfg.initial, &desired, cfg.seed)?;
        let zdot0 = match &cfg.initial.velocities {
            Some(v) => {
                check_len(n, v.len())?;
                Some(CVector::from_vec(to_c64(v)))
            }
            None => None,
        };
        let spec = SimSpec {
            transform,
            controller,
            desired,
            z0,
            zdot0,
            dt: cfg.integration.dt,
            t_end: cfg.integration.t_end,
        };
        spec.validate()?;
        Ok(Scenario {
            name: cfg.name.clone(),
            agents,
            spec,
            report,
            seed: cfg.seed,
        })
    }

    pub fn simulate(&self) -> std::result::Result<TrajectoryLog, Box<SimFailure>> {
        run(&self.spec)
    }

    pub fn check(&self) -> CheckReport {
        check_scenario(self)
    }

    /// `|centroid(z) − c(t)|` at the last sample, weighting by mass.
    pub fn centroid_error(&self, log: &TrajectoryLog) -> Option<f64> {
        let s = log.last()?;
        let m = self.agents.masses();
        let total = self.agents.total_mass();
        let zd = self.spec.desired.positions(s.t)[0].clone();
        let centroid = |v: &CVector| -> C64 { v.iter().zip(m).map(|(z, &w)| z * w).sum::<C64>() / total };
        Some((centroid(&s.z) - centroid(&zd)).norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub scenario: String,
    pub properties: Vec<PropertyResult>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    pub fn first_failure(&self) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| !p.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("check report serializes")
    }
}

fn at_most(name: &str, value: f64, tolerance: f64) -> PropertyResult {
    PropertyResult {
        name: name.into(),
        value,
        tolerance,
        pass: value <= tolerance,
        detail: None,
    }
}

fn failed(name: &str, tolerance: f64, err: &FormationError) -> PropertyResult {
    PropertyResult {
        name: name.into(),
        value: f64::NAN,
        tolerance,
        pass: false,
        detail: Some(err.to_string()),
    }
}

fn check_scenario(s: &Scenario) -> CheckReport {
    let t = &s.spec.transform;
    let mut props = vec![at_most(
        "transform_inverse",
        identity_residual(&(t.forward() * t.inverse())),
        TOL_INVERSE,
    )];
    props.push(PropertyResult {
        name: "stabilizing_margin".into(),
        value: s.report.margin,
        tolerance: 0.0,
        pass: s.report.margin > 0.0,
        detail: None,
    });
    if let Some(params) = &s.spec.controller.potential {
        let z = &s.spec.z0;
        match potential_matrix(z, params) {
            Ok(pz) => {
                props.push(at_most("potential_row_sums", pz.row_sum_residual(), TOL_ROW_SUM));
                props.push(at_most("potential_symmetry", pz.symmetry_residual(), TOL_SYMMETRY));
                let balance = pz.gradient(z).iter().sum::<C64>().norm();
                props.push(at_most("potential_force_balance", balance, TOL_FORCE_BALANCE));
                let sim = transformed_potential(&pz, t)
                    .and_then(|m| Ok((eigenvalues(&m)?, eigenvalues(pz.entries())?)))
                    .map(|(a, b)| spectrum_distance(&a, &b));
                props.push(match sim {
                    Ok(v) => at_most("potential_similarity", v, TOL_SIMILARITY),
                    Err(e) => failed("potential_similarity", TOL_SIMILARITY, &e),
                });
            }
            Err(e) => props.push(failed("potential_matrix", 0.0, &e)),
        }
    }
    props.push(match equivalence_report(&s.spec) {
        Ok(r) => at_most("domain_equivalence", r.max_deviation, EQUIVALENCE_TOL),
        Err(e) => failed("domain_equivalence", EQUIVALENCE_TOL, &e),
    });
    CheckReport {
        scenario: s.name.clone(),
        properties: props,
    }
}

/// Process exit code for an error raised while resolving or running a
/// scenario.
pub fn exit_code(err: &FormationError) -> i32 {
    match err.root() {
        FormationError::NonstabilizableMinor { .. } | FormationError::SingularTransform { .. } => 3,
        FormationError::SearchExhausted { .. } => 4,
        FormationError::NumericalBlowup { .. } => 5,
        _ => 2,
    }
}

/// Header of the trajectory CSV for n agents.
pub fn csv_header(n: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=n {
        write!(h, ",re_z{i},im_z{i}").unwrap();
    }
    for i in 1..=n {
        write!(h, ",re_xi{i},im_xi{i}").unwrap();
    }
    h.push_str(",xi_e_norm,min_dist");
    h
}

/// Writes one row per sample. Floats use the shortest representation that
/// round-trips, so identical runs give identical bytes.
pub fn write_csv<W: Write>(log: &TrajectoryLog, n: usize, out: &mut W) -> io::Result<()> {
    writeln!(out, "{}", csv_header(n))?;
    let mut line = String::new();
    for s in &log.samples {
        line.clear();
        write!(line, "{}", s.t).unwrap();
        for z in s.z.iter().chain(s.xi.iter()) {
            write!(line, ",{},{}", z.re, z.im).unwrap();
        }
        write!(line, ",{},{}", s.xi_e_norm, s.min_dist).unwrap();
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Every `stride`-th sample (plus the last) with error, distance and
/// centroid columns.
pub fn write_plot_data<W: Write>(
    log: &TrajectoryLog,
    masses: &[f64],
    max_points: usize,
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "t,xi_e_norm,state_error_norm,min_dist,re_centroid,im_centroid")?;
    let len = log.samples.len();
    if len == 0 {
        return Ok(());
    }
    let stride = len.div_ceil(max_points.max(1)).max(1);
    let total: f64 = masses.iter().sum();
    for (k, s) in log.samples.iter().enumerate() {
        if k % stride != 0 && k != len - 1 {
            continue;
        }
        let cen = s.z.iter().zip(masses).map(|(z, &m)| z * m).sum::<C64>() / total;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.t,
            s.xi_e_norm,
            s.state_error_norm(),
            s.min_dist,
            cen.re,
            cen.im
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub samples: usize,
    pub t_final: f64,
    pub terminal_error: f64,
    pub terminal_state_error: f64,
    pub centroid_error: f64,
    pub min_distance: f64,
    pub terminal_avoidance_norm: f64,
    pub event_count: usize,
    pub events: Vec<crate::sim::Event>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, log: &TrajectoryLog, error: Option<&FormationError>) -> Self {
        let last = log.last();
        Self {
            scenario: scenario.name.clone(),
            samples: log.samples.len(),
            t_final: last.map_or(0.0, |s| s.t),
            terminal_error: last.map_or(f64::NAN, |s| s.xi_e_norm),
            terminal_state_error: last.map_or(f64::NAN, |s| s.state_error_norm()),
            centroid_error: scenario.centroid_error(log).unwrap_or(f64::NAN),
            min_distance: log.min_distance(),
            terminal_avoidance_norm: last.map_or(f64::NAN, |s| s.u_avoidance.norm()),
            event_count: log.events.len(),
            events: log.events.clone(),
            error: error.map(|e| e.to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// One-line human summary.
    pub fn line(&self) -> String {
        format!(
            "{}: terminal |xi_e| = {:.3e}, min distance = {:.4}, events = {}",
            self.scenario, self.terminal_error, self.min_distance, self.event_count
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_json() {
        for name in PRESETS {
            let cfg = ScenarioConfig::preset(name).unwrap();
            let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(cfg, back, "{name}");
        }
        assert!(ScenarioConfig::preset("nope").is_none());
    }

    #[test]
    fn complex_fields_use_re_im_records() {
        let json = hexagon6_reference().to_json();
        assert!(json.contains("\"re\": -1.414"));
        assert!(json.contains("\"im\": -1.414"));
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let mut v: serde_json::Value = serde_json::from_str(&jacobi3().to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        let err = ScenarioConfig::from_json(&v.to_string()).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn identity_transform_reports_seed_gains() {
        let mut cfg = jacobi3();
        cfg.transform = TransformSpec::Explicit {
            rows: (0..3)
                .map(|i| {
                    (0..3)
                        .map(|j| Cx {
                            re: if i == j { 1.0 } else { 0.0 },
                            im: 0.0,
                        })
                        .collect()
                })
                .collect(),
        };
        let s = Scenario::resolve(&cfg).unwrap();
        assert!(s.report.pass);
        assert_eq!(s.report.margin, 1.0);
        assert!(s.report.d.iter().all(|d| d.re == 1.0 && d.im == 0.0));
    }

    #[test]
    fn singular_explicit_transform_maps_to_exit_three() {
        let mut cfg = jacobi3();
        cfg.transform = TransformSpec::Explicit {
            rows: vec![vec![Cx { re: 1.0, im: 0.0 }; 3]; 3],
        };
        let err = Scenario::resolve(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), 3);
    }

    #[test]
    fn reference_gains_fail_verification() {
        let s = Scenario::resolve(&hexagon6_reference()).unwrap();
        assert!(!s.report.pass);
        assert!(s.report.margin < 0.0);
    }

    #[test]
    fn perturbation_is_seeded() {
        let a = Scenario::resolve(&hexagon6()).unwrap();
        let b = Scenario::resolve(&hexagon6()).unwrap();
        assert_eq!(a.spec.z0, b.spec.z0);
        let mut other = hexagon6();
        other.seed = 8;
        let c = Scenario::resolve(&other).unwrap();
        assert_ne!(a.spec.z0, c.spec.z0);
        let zd = a.spec.desired.positions(0.0)[0].clone();
        assert!(a.spec.z0.iter().zip(zd.iter()).all(|(z, d)| {
            (z.re - d.re).abs() <= 0.3 && (z.im - d.im).abs() <= 0.3
        }));
    }

    #[test]
    fn csv_layout() {
        let mut cfg = jacobi3();
        cfg.integration = IntegrationSpec {
            dt: 0.001,
            t_end: 0.001,
        };
        let s = Scenario::resolve(&cfg).unwrap();
        let log = s.simulate().unwrap();
        let mut buf = Vec::new();
        write_csv(&log, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 1 + 4 * 3 + 2);
        assert!(lines[0].starts_with("t,re_z1,im_z1"));
        assert!(lines[0].ends_with("xi_e_norm,min_dist"));
        assert!(lines[1].starts_with("0,"));
        assert!(lines[2].starts_with("0.001,"));
    }
}
