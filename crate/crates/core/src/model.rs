//! Chain description, gain schedules, scenarios and their JSON schema.
//!
//! A configuration document bundles three sections: `model`, `gains` and
//! `scenario`. The model may be given inline or as a path to another document
//! whose `model` section is reused. All quantities are SI. See
//! `docs/SCHEMA.md` for the field-by-field description.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{Cholesky, Matrix3, Matrix6, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inertia::{to_pseudo, AdaptationConfig, SpatialInertia};
use crate::liegroup::{Pose, Rotation, Twist};

/// One rigid body together with the joint that connects it to its parent.
#[derive(Clone, Debug, PartialEq)]
pub struct BodyModule {
    pub name: String,
    /// Joint screw expressed in this body's frame.
    pub screw_axis: Twist,
    /// Pose of this body's frame in the parent frame at zero joint angle.
    pub home: Pose,
    pub inertia: SpatialInertia,
    /// Reflected actuator inertia, kg m^2.
    pub rotor_inertia: f64,
}

/// Serial chain of bodies, body `i` parenting body `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainModel {
    pub name: String,
    pub bodies: Vec<BodyModule>,
    /// Gravity in the base frame, m/s^2.
    pub gravity: Vector3<f64>,
    /// End-effector frame relative to the last body.
    pub tool: Pose,
}

impl ChainModel {
    pub fn dof(&self) -> usize {
        self.bodies.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.inertia.mass()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bodies.is_empty() {
            return Err(Error::validation("model.bodies", "chain needs at least one body"));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::validation("model.gravity", "must be finite"));
        }
        for (i, b) in self.bodies.iter().enumerate() {
            let field = |f: &str| format!("model.bodies[{i}].{f}");
            check_unit_screw(&b.screw_axis).map_err(|m| Error::validation(field("screw_axis"), m))?;
            if !(b.rotor_inertia > 0.0) || !b.rotor_inertia.is_finite() {
                return Err(Error::validation(field("rotor_inertia"), "must be positive"));
            }
            to_pseudo(&b.inertia).map_err(|e| Error::validation(field("inertia"), e.to_string()))?;
        }
        Ok(())
    }
}

fn check_unit_screw(x: &Twist) -> std::result::Result<(), String> {
    let w = x.angular().norm();
    let v = x.linear().norm();
    if w > 0.0 {
        if (w - 1.0).abs() > 1e-9 {
            return Err(format!("revolute screw must have a unit angular part, norm is {w}"));
        }
    } else if (v - 1.0).abs() > 1e-9 {
        return Err(format!("prismatic screw must have a unit linear part, norm is {v}"));
    }
    Ok(())
}

/// Gains for the geometric PD baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineGains {
    /// End-effector stiffness on the log error, ordered (rotation, translation).
    pub stiffness: Matrix6<f64>,
    /// End-effector damping on the velocity error.
    pub damping: Matrix6<f64>,
}

impl Default for BaselineGains {
    fn default() -> Self {
        let mut k = Matrix6::zeros();
        for i in 0..3 {
            k[(i, i)] = 25_000.0;
            k[(i + 3, i + 3)] = 2_500.0;
        }
        BaselineGains {
            stiffness: k,
            damping: Matrix6::identity() * 8_000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GainSet {
    /// Required-velocity gain per body.
    pub gamma: Vec<Matrix6<f64>>,
    /// Configuration-energy weight per body.
    pub k_z: Vec<Matrix6<f64>>,
    pub k_v: Matrix6<f64>,
    /// Joint velocity gain per joint.
    pub k_a: Vec<f64>,
    pub adaptation: AdaptationConfig,
    pub baseline: BaselineGains,
}

impl GainSet {
    /// Reference gains. For four bodies these are
    /// `Gamma = (5, 3, 3, 1.5) I6`, `K_v = 2000 I6`,
    /// `k_a = (10000, 20000, 10000, 350)` and `gamma = 8e4`; other chain
    /// lengths reuse the same first/second/middle/last pattern.
    pub fn defaults(n: usize) -> GainSet {
        let gamma_scale = |i: usize| match i {
            0 => 5.0,
            _ if i + 1 == n => 1.5,
            _ => 3.0,
        };
        let k_a = (0..n)
            .map(|i| match i {
                0 => 10_000.0,
                _ if i + 1 == n => 350.0,
                1 => 20_000.0,
                _ => 10_000.0,
            })
            .collect();
        let gamma: Vec<Matrix6<f64>> = (0..n).map(|i| Matrix6::identity() * gamma_scale(i)).collect();
        let k_v = Matrix6::identity() * 2000.0;
        let k_z = gamma.iter().map(|g| default_k_z(g, &k_v)).collect();
        GainSet {
            gamma,
            k_z,
            k_v,
            k_a,
            adaptation: AdaptationConfig::default(),
            baseline: BaselineGains::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.gamma.len() != n {
            return Err(Error::validation("gains.gamma", format!("expected {n} entries, got {}", self.gamma.len())));
        }
        if self.k_z.len() != n {
            return Err(Error::validation("gains.k_z", format!("expected {n} entries, got {}", self.k_z.len())));
        }
        if self.k_a.len() != n {
            return Err(Error::validation("gains.k_a", format!("expected {n} entries, got {}", self.k_a.len())));
        }
        for (i, g) in self.gamma.iter().enumerate() {
            check_spd(g, &format!("gains.gamma[{i}]"))?;
        }
        for (i, g) in self.k_z.iter().enumerate() {
            check_spd(g, &format!("gains.k_z[{i}]"))?;
        }
        check_spd(&self.k_v, "gains.k_v")?;
        for (i, k) in self.k_a.iter().enumerate() {
            if !(*k > 0.0) || !k.is_finite() {
                return Err(Error::validation(format!("gains.k_a[{i}]"), "must be positive"));
            }
        }
        self.adaptation.validate()?;
        check_spd(&self.baseline.stiffness, "gains.baseline.stiffness")?;
        check_spd(&self.baseline.damping, "gains.baseline.damping")?;
        Ok(())
    }
}

/// `0.5 * Gamma * diag(K_v)`, symmetrized.
pub fn default_k_z(gamma: &Matrix6<f64>, k_v: &Matrix6<f64>) -> Matrix6<f64> {
    let kz = gamma * Matrix6::from_diagonal(&k_v.diagonal()) * 0.5;
    (kz + kz.transpose()) * 0.5
}

fn check_spd(m: &Matrix6<f64>, field: &str) -> Result<()> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::validation(field, "entries must be finite"));
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::validation(field, "matrix must be symmetric"));
    }
    if Cholesky::new(*m).is_none() {
        return Err(Error::validation(field, "matrix must be positive definite"));
    }
    Ok(())
}

/// Desired motion of one joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JointTrajectory {
    SetPoint {
        value: f64,
    },
    /// `sum_k coeffs[k] t^k`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `offset + amplitude sin(2 pi f t + phase)`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl JointTrajectory {
    /// Position, velocity and acceleration at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self {
            JointTrajectory::SetPoint { value } => (*value, 0.0, 0.0),
            JointTrajectory::Polynomial { coeffs } => {
                let mut p = 0.0;
                let mut v = 0.0;
                let mut a = 0.0;
                for c in coeffs.iter().rev() {
                    p = p * t + c;
                }
                for (k, c) in coeffs.iter().enumerate().skip(1).rev() {
                    v = v * t + c * k as f64;
                }
                for (k, c) in coeffs.iter().enumerate().skip(2).rev() {
                    a = a * t + c * (k * (k - 1)) as f64;
                }
                (p, v, a)
            }
            JointTrajectory::Sinusoid {
                offset,
                amplitude,
                frequency_hz,
                phase,
            } => {
                let w = 2.0 * PI * frequency_hz;
                let arg = w * t + phase;
                (
                    offset + amplitude * arg.sin(),
                    amplitude * w * arg.cos(),
                    -amplitude * w * w * arg.sin(),
                )
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Mgc,
    Amgc,
    BaselinePd,
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Mgc => "mgc",
            ControllerKind::Amgc => "amgc",
            ControllerKind::BaselinePd => "baseline_pd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mgc" => Some(ControllerKind::Mgc),
            "amgc" => Some(ControllerKind::Amgc),
            "baseline_pd" | "baseline" | "pd" => Some(ControllerKind::BaselinePd),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// Relative half-width of the parameter scaling, in `[0, 0.5]`.
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub controller: ControllerKind,
    pub desired: Vec<JointTrajectory>,
    pub initial_theta: Vec<f64>,
    pub initial_theta_dot: Vec<f64>,
    pub duration: f64,
    /// Control updates per second; torque is held between updates.
    pub control_rate: f64,
    /// RK4 substeps per control period.
    pub substeps: usize,
    /// Inertia error of the controller's model relative to the plant.
    pub perturbation: Perturbation,
    /// Low-pass cutoff of the required joint acceleration estimate.
    pub derivative_cutoff_hz: f64,
    pub bernoulli_order: usize,
}

impl Scenario {
    pub fn control_period(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn steps(&self) -> usize {
        (self.duration * self.control_rate).round() as usize
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::validation("scenario.duration", "must be positive"));
        }
        if !(self.control_rate > 0.0) || !self.control_rate.is_finite() {
            return Err(Error::validation("scenario.control_rate", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(Error::validation("scenario.substeps", "must be at least 1"));
        }
        let f = self.perturbation.fraction;
        if !(0.0..=0.5).contains(&f) {
            return Err(Error::validation("scenario.perturbation.fraction", "must lie in [0, 0.5]"));
        }
        if self.desired.len() != n {
            return Err(Error::validation("scenario.desired", format!("expected {n} joint trajectories")));
        }
        if self.initial_theta.len() != n {
            return Err(Error::validation("scenario.initial.theta", format!("expected {n} values")));
        }
        if self.initial_theta_dot.len() != n {
            return Err(Error::validation("scenario.initial.theta_dot", format!("expected {n} values")));
        }
        if !(self.derivative_cutoff_hz > 0.0) {
            return Err(Error::validation("scenario.derivative_cutoff_hz", "must be positive"));
        }
        if self.bernoulli_order < 2 {
            return Err(Error::validation("scenario.bernoulli_order", "must be at least 2"));
        }
        Ok(())
    }
}

/// A fully validated configuration document.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub name: String,
    pub model: ChainModel,
    pub gains: GainSet,
    pub scenario: Scenario,
}

/// Scales each body's mass, first moment and rotational inertia by
/// independent factors drawn from `[1 - fraction, 1 + fraction]`.
///
/// A draw that breaks physical consistency is redrawn, up to 100 times.
pub fn perturb_inertias(model: &ChainModel, fraction: f64, seed: u64) -> Result<ChainModel> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "perturbation fraction must lie in [0, 0.5], got {fraction}"
        )));
    }
    if fraction == 0.0 {
        return Ok(model.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = model.clone();
    for (i, body) in out.bodies.iter_mut().enumerate() {
        let base = body.inertia;
        let mut accepted = None;
        for _ in 0..100 {
            let mut factor = || rng.random_range(1.0 - fraction..=1.0 + fraction);
            let (fm, fh, fi) = (factor(), factor(), factor());
            let candidate = SpatialInertia::new(
                base.mass() * fm,
                base.first_moment() * fh,
                base.rotational() * fi,
            );
            if let Ok(si) = candidate {
                if to_pseudo(&si).is_ok() {
                    accepted = Some(si);
                    break;
                }
            }
        }
        body.inertia = accepted.ok_or_else(|| {
            Error::PhysicalInconsistency(format!(
                "could not draw a consistent perturbation for body {i} in 100 tries"
            ))
        })?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Serialized form

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum GainMatrixDoc {
    Scalar(f64),
    Diagonal([f64; 6]),
    Full([[f64; 6]; 6]),
}

impl GainMatrixDoc {
    fn to_matrix(&self) -> Matrix6<f64> {
        match self {
            GainMatrixDoc::Scalar(s) => Matrix6::identity() * *s,
            GainMatrixDoc::Diagonal(d) => Matrix6::from_diagonal(&nalgebra::Vector6::from_column_slice(d)),
            GainMatrixDoc::Full(rows) => Matrix6::from_fn(|i, j| rows[i][j]),
        }
    }

    fn from_matrix(m: &Matrix6<f64>) -> Self {
        GainMatrixDoc::Full(std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InertiaDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    mass: Option<f64>,
    /// Centre of mass in the body frame; used with `inertia_at_com`.
    #[serde(skip_serializing_if = "Option::is_none")]
    com: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inertia_at_com: Option<[[f64; 3]; 3]>,
    /// First moment `m c`; used with `rotational_inertia`.
    #[serde(skip_serializing_if = "Option::is_none")]
    first_moment: Option<[f64; 3]>,
    /// Rotational inertia about the body-frame origin.
    #[serde(skip_serializing_if = "Option::is_none")]
    rotational_inertia: Option<[[f64; 3]; 3]>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    #[serde(default)]
    translation: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation: Option<[[f64; 3]; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    screw_axis: Option<[f64; 6]>,
    #[serde(default)]
    home: PoseDoc,
    inertia: Option<InertiaDoc>,
    rotor_inertia: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    gravity: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tool: Option<PoseDoc>,
    bodies: Vec<BodyDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ModelRef {
    Path(String),
    Inline(ModelDoc),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdaptationDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    stiffness: Option<GainMatrixDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    damping: Option<GainMatrixDoc>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<GainMatrixDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_z: Option<Vec<GainMatrixDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_v: Option<GainMatrixDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adaptation: Option<AdaptationDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<BaselineDoc>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_dot: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    controller: Option<ControllerKind>,
    desired: Option<Vec<JointTrajectory>>,
    #[serde(default)]
    initial: InitialDoc,
    duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    control_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    substeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbation: Option<Perturbation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    derivative_cutoff_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bernoulli_order: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    model: ModelRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gains: Option<GainsDoc>,
    scenario: Option<ScenarioDoc>,
}

pub const DEFAULT_CONTROL_RATE: f64 = 1000.0;
pub const DEFAULT_CUTOFF_HZ: f64 = 100.0;

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Source of referenced model documents.
pub trait DocumentSource {
    fn read(&self, name: &str) -> Result<String>;
}

/// Resolves references relative to a directory.
pub struct DirectorySource(pub PathBuf);

impl DocumentSource for DirectorySource {
    fn read(&self, name: &str) -> Result<String> {
        Ok(std::fs::read_to_string(self.0.join(name))?)
    }
}

/// Configuration files shipped with the crate.
pub mod bundled {
    use super::*;

    pub const FILES: &[(&str, &str)] = &[
        ("4r_generic.json", include_str!("../configs/4r_generic.json")),
        ("4r_generic_mgc.json", include_str!("../configs/4r_generic_mgc.json")),
        ("4r_generic_mgc_perturbed.json", include_str!("../configs/4r_generic_mgc_perturbed.json")),
        ("4r_generic_amgc.json", include_str!("../configs/4r_generic_amgc.json")),
        ("4r_generic_baseline.json", include_str!("../configs/4r_generic_baseline.json")),
        ("planar_2link.json", include_str!("../configs/planar_2link.json")),
    ];

    pub struct BundledSource;

    impl DocumentSource for BundledSource {
        fn read(&self, name: &str) -> Result<String> {
            FILES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| Error::validation("model", format!("no bundled document named `{name}`")))
        }
    }

    /// Loads one of the bundled documents by file name, with or without `.json`.
    pub fn load(name: &str) -> Result<Config> {
        let file = if name.ends_with(".json") {
            name.to_string()
        } else {
            format!("{name}.json")
        };
        let text = BundledSource.read(&file)?;
        parse_config(&text, &BundledSource)
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        FILES.iter().map(|(n, _)| n.trim_end_matches(".json"))
    }
}

/// Reads and validates a configuration file.
pub fn load_model(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &DirectorySource(dir))
}

pub fn parse_config(text: &str, source: &dyn DocumentSource) -> Result<Config> {
    let doc: ConfigDoc = serde_json::from_str(text).map_err(parse_error)?;
    config_from_doc(doc, source)
}

fn resolve_model(model: ModelRef, source: &dyn DocumentSource, depth: usize) -> Result<ModelDoc> {
    match model {
        ModelRef::Inline(m) => Ok(m),
        ModelRef::Path(p) => {
            if depth > 8 {
                return Err(Error::validation("model", "model reference chain is too deep"));
            }
            let text = source.read(&p)?;
            let doc: ConfigDoc = serde_json::from_str(&text).map_err(parse_error)?;
            resolve_model(doc.model, source, depth + 1)
        }
    }
}

fn required<T>(v: Option<T>, field: impl Into<String>) -> Result<T> {
    v.ok_or_else(|| Error::validation(field, "missing required field"))
}

fn mat3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn pose_from_doc(p: &PoseDoc, field: &str) -> Result<Pose> {
    let rotation = match &p.rotation {
        None => Rotation::identity(),
        Some(r) => Rotation::from_matrix(mat3(r)).map_err(|e| Error::validation(format!("{field}.rotation"), e.to_string()))?,
    };
    Ok(Pose::new(rotation, Vector3::from_column_slice(&p.translation)))
}

fn inertia_from_doc(d: &InertiaDoc, field: &str) -> Result<SpatialInertia> {
    let mass = required(d.mass, format!("{field}.mass"))?;
    let result = match (&d.com, &d.inertia_at_com, &d.first_moment, &d.rotational_inertia) {
        (Some(c), Some(i), None, None) => SpatialInertia::from_com(mass, Vector3::from_column_slice(c), mat3(i)),
        (None, None, Some(h), Some(i)) => SpatialInertia::new(mass, Vector3::from_column_slice(h), mat3(i)),
        _ => {
            return Err(Error::validation(
                field,
                "give either `com` + `inertia_at_com` or `first_moment` + `rotational_inertia`",
            ))
        }
    };
    result.map_err(|e| Error::validation(field, e.to_string()))
}

fn model_from_doc(doc: &ModelDoc) -> Result<ChainModel> {
    let gravity = Vector3::from_column_slice(&required(doc.gravity, "model.gravity")?);
    let mut bodies = Vec::with_capacity(doc.bodies.len());
    for (i, b) in doc.bodies.iter().enumerate() {
        let field = |f: &str| format!("model.bodies[{i}].{f}");
        let raw = required(b.screw_axis, field("screw_axis"))?;
        let screw = Twist::from_slice(&raw);
        let scale = if screw.angular().norm() > 0.0 {
            screw.angular().norm()
        } else {
            screw.linear().norm()
        };
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::validation(field("screw_axis"), "screw axis must be nonzero"));
        }
        let inertia_doc = required(b.inertia.as_ref(), field("inertia"))?;
        bodies.push(BodyModule {
            name: b.name.clone().unwrap_or_else(|| format!("body{}", i + 1)),
            screw_axis: screw * (1.0 / scale),
            home: pose_from_doc(&b.home, &field("home"))?,
            inertia: inertia_from_doc(inertia_doc, &field("inertia"))?,
            rotor_inertia: required(b.rotor_inertia, field("rotor_inertia"))?,
        });
    }
    let tool = match &doc.tool {
        Some(t) => pose_from_doc(t, "model.tool")?,
        None => Pose::identity(),
    };
    let model = ChainModel {
        name: doc.name.clone().unwrap_or_else(|| "chain".into()),
        bodies,
        gravity,
        tool,
    };
    model.validate()?;
    Ok(model)
}

fn gains_from_doc(doc: Option<&GainsDoc>, n: usize) -> Result<GainSet> {
    let mut gains = GainSet::defaults(n);
    let Some(doc) = doc else {
        return Ok(gains);
    };
    let list = |v: &Vec<GainMatrixDoc>, field: &str| -> Result<Vec<Matrix6<f64>>> {
        if v.len() != n {
            return Err(Error::validation(field, format!("expected {n} entries, got {}", v.len())));
        }
        Ok(v.iter().map(GainMatrixDoc::to_matrix).collect())
    };
    if let Some(g) = &doc.gamma {
        gains.gamma = list(g, "gains.gamma")?;
    }
    if let Some(k) = &doc.k_v {
        gains.k_v = k.to_matrix();
    }
    gains.k_z = match &doc.k_z {
        Some(k) => list(k, "gains.k_z")?,
        None => gains.gamma.iter().map(|g| default_k_z(g, &gains.k_v)).collect(),
    };
    if let Some(k) = &doc.k_a {
        if k.len() != n {
            return Err(Error::validation("gains.k_a", format!("expected {n} entries, got {}", k.len())));
        }
        gains.k_a = k.clone();
    }
    if let Some(a) = &doc.adaptation {
        if let Some(g) = a.gamma {
            gains.adaptation.gamma = g;
        }
        if let Some(s) = a.sigma {
            gains.adaptation.sigma = s;
        }
    }
    if let Some(b) = &doc.baseline {
        if let Some(k) = &b.stiffness {
            gains.baseline.stiffness = k.to_matrix();
        }
        if let Some(d) = &b.damping {
            gains.baseline.damping = d.to_matrix();
        }
    }
    Ok(gains)
}

fn scenario_from_doc(doc: &ScenarioDoc, n: usize) -> Result<Scenario> {
    let desired = required(doc.desired.clone(), "scenario.desired")?;
    let initial_theta = match &doc.initial.theta {
        Some(t) => t.clone(),
        None => desired.iter().map(|d| d.eval(0.0).0).collect(),
    };
    let scenario = Scenario {
        controller: required(doc.controller, "scenario.controller")?,
        desired,
        initial_theta,
        initial_theta_dot: doc.initial.theta_dot.clone().unwrap_or_else(|| vec![0.0; n]),
        duration: required(doc.duration, "scenario.duration")?,
        control_rate: doc.control_rate.unwrap_or(DEFAULT_CONTROL_RATE),
        substeps: doc.substeps.unwrap_or(1),
        perturbation: doc.perturbation.unwrap_or_default(),
        derivative_cutoff_hz: doc.derivative_cutoff_hz.unwrap_or(DEFAULT_CUTOFF_HZ),
        bernoulli_order: doc.bernoulli_order.unwrap_or(crate::liegroup::DEFAULT_BERNOULLI_ORDER),
    };
    scenario.validate(n)?;
    Ok(scenario)
}

fn config_from_doc(doc: ConfigDoc, source: &dyn DocumentSource) -> Result<Config> {
    let model_doc = resolve_model(doc.model, source, 0)?;
    let model = model_from_doc(&model_doc)?;
    let n = model.dof();
    let gains = gains_from_doc(doc.gains.as_ref(), n)?;
    gains.validate(n)?;
    let scenario = scenario_from_doc(&required(doc.scenario, "scenario")?, n)?;
    Ok(Config {
        name: doc.name.unwrap_or_else(|| model.name.clone()),
        model,
        gains,
        scenario,
    })
}

fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn rows3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn pose_doc(p: &Pose) -> PoseDoc {
    PoseDoc {
        translation: arr3(&p.translation),
        rotation: Some(rows3(p.rotation.matrix())),
    }
}

impl Config {
    /// Canonical JSON form: inline model, explicit gains, every default spelled out.
    pub fn to_json(&self) -> String {
        let model = ModelDoc {
            name: Some(self.model.name.clone()),
            description: None,
            gravity: Some(arr3(&self.model.gravity)),
            tool: Some(pose_doc(&self.model.tool)),
            bodies: self
                .model
                .bodies
                .iter()
                .map(|b| BodyDoc {
                    name: Some(b.name.clone()),
                    screw_axis: Some(std::array::from_fn(|k| b.screw_axis.0[k])),
                    home: pose_doc(&b.home),
                    inertia: Some(InertiaDoc {
                        mass: Some(b.inertia.mass()),
                        first_moment: Some(arr3(&b.inertia.first_moment())),
                        rotational_inertia: Some(rows3(&b.inertia.rotational())),
                        ..Default::default()
                    }),
                    rotor_inertia: Some(b.rotor_inertia),
                })
                .collect(),
        };
        let g = &self.gains;
        let gains = GainsDoc {
            gamma: Some(g.gamma.iter().map(GainMatrixDoc::from_matrix).collect()),
            k_z: Some(g.k_z.iter().map(GainMatrixDoc::from_matrix).collect()),
            k_v: Some(GainMatrixDoc::from_matrix(&g.k_v)),
            k_a: Some(g.k_a.clone()),
            adaptation: Some(AdaptationDoc {
                gamma: Some(g.adaptation.gamma),
                sigma: Some(g.adaptation.sigma),
            }),
            baseline: Some(BaselineDoc {
                stiffness: Some(GainMatrixDoc::from_matrix(&g.baseline.stiffness)),
                damping: Some(GainMatrixDoc::from_matrix(&g.baseline.damping)),
            }),
        };
        let s = &self.scenario;
        let scenario = ScenarioDoc {
            controller: Some(s.controller),
            desired: Some(s.desired.clone()),
            initial: InitialDoc {
                theta: Some(s.initial_theta.clone()),
                theta_dot: Some(s.initial_theta_dot.clone()),
            },
            duration: Some(s.duration),
            control_rate: Some(s.control_rate),
            substeps: Some(s.substeps),
            perturbation: Some(s.perturbation),
            derivative_cutoff_hz: Some(s.derivative_cutoff_hz),
            bernoulli_order: Some(s.bernoulli_order),
        };
        let doc = ConfigDoc {
            name: Some(self.name.clone()),
            model: ModelRef::Inline(model),
            gains: Some(gains),
            scenario: Some(scenario),
        };
        serde_json::to_string_pretty(&doc).expect("config document serializes")
    }

    /// Applies a `key=value` override. Unknown keys and values that fail
    /// validation are rejected and leave the configuration unchanged.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<()> {
        let mut next = self.clone();
        next.set_unchecked(key, value)?;
        let n = next.model.dof();
        next.gains.validate(n)?;
        next.scenario.validate(n)?;
        *self = next;
        Ok(())
    }

    fn set_unchecked(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::validation(key, format!("`{value}` is not a number")))
        };
        match key {
            "controller" => {
                self.scenario.controller = ControllerKind::parse(value)
                    .ok_or_else(|| Error::validation(key, format!("unknown controller `{value}`")))?
            }
            "perturbation" | "perturbation.fraction" => self.scenario.perturbation.fraction = num()?,
            "seed" | "perturbation.seed" => {
                self.scenario.perturbation.seed = value
                    .parse()
                    .map_err(|_| Error::validation(key, format!("`{value}` is not an unsigned integer")))?
            }
            "duration" => self.scenario.duration = num()?,
            "control_rate" => self.scenario.control_rate = num()?,
            "substeps" => {
                self.scenario.substeps = value
                    .parse()
                    .map_err(|_| Error::validation(key, format!("`{value}` is not an unsigned integer")))?
            }
            "derivative_cutoff_hz" => self.scenario.derivative_cutoff_hz = num()?,
            "bernoulli_order" => {
                self.scenario.bernoulli_order = value
                    .parse()
                    .map_err(|_| Error::validation(key, format!("`{value}` is not an unsigned integer")))?
            }
            "gamma" | "adaptation.gamma" => self.gains.adaptation.gamma = num()?,
            "sigma" | "adaptation.sigma" => self.gains.adaptation.sigma = num()?,
            "k_v" => {
                self.gains.k_v = Matrix6::identity() * num()?;
                self.gains.k_z = self.gains.gamma.iter().map(|g| default_k_z(g, &self.gains.k_v)).collect();
            }
            "name" => self.name = value.to_string(),
            _ => return Err(Error::validation(key, "unknown override key")),
        }
        Ok(())
    }
}

/// Summary of the keys accepted by [`Config::apply_override`].
pub const OVERRIDE_KEYS: &[&str] = &[
    "controller",
    "perturbation",
    "seed",
    "duration",
    "control_rate",
    "substeps",
    "derivative_cutoff_hz",
    "bernoulli_order",
    "gamma",
    "sigma",
    "k_v",
    "name",
];

/// Serial chain of identical links rotating about parallel `z` axes, spaced
/// along `x`. Used for scaling studies and as a planar test arm.
pub fn planar_chain(links: &[(f64, f64)], rotor_inertia: f64) -> Result<ChainModel> {
    let mut bodies = Vec::with_capacity(links.len());
    let mut offset = 0.0;
    for (i, &(length, mass)) in links.iter().enumerate() {
        let com = Vector3::new(0.5 * length, 0.0, 0.0);
        let thin = mass * length * length / 12.0;
        let inertia_at_com = Matrix3::from_diagonal(&Vector3::new(0.01 * thin + 1e-3, thin, thin));
        bodies.push(BodyModule {
            name: format!("link{}", i + 1),
            screw_axis: Twist::from_slice(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
            home: Pose::from_translation(Vector3::new(offset, 0.0, 0.0)),
            inertia: SpatialInertia::from_com(mass, com, inertia_at_com)?,
            rotor_inertia,
        });
        offset = length;
    }
    let tool = Pose::from_translation(Vector3::new(offset, 0.0, 0.0));
    let model = ChainModel {
        name: format!("planar_{}link", links.len()),
        bodies,
        gravity: Vector3::new(0.0, -9.81, 0.0),
        tool,
    };
    model.validate()?;
    Ok(model)
}
