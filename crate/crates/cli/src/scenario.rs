//! Scenario files: the JSON description of a plant, a controller, and a run.
//!
//! Parsing is total — unknown fields, ragged matrices, and inconsistent
//! dimensions are rejected with messages naming the offending part. Slack
//! weights may be given explicitly; when omitted they are derived from the
//! convergence certificates.

use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ihmpc::certificates::{
    certify_setpoint, certify_zone, terminal_weight, CertificateOptions, PhiOptions,
    SetpointCertificates, ZoneCertificates,
};
use ihmpc::model::{Mode, OpomModel, PlantState};
use ihmpc::rect::Rectangle;
use ihmpc::setpoint::SetpointSpec;
use ihmpc::sim::ControllerSpec;
use ihmpc::zone::ZoneSpec;

/// Default shift for the derived input slack weight.
pub const DEFAULT_SU_SHIFT: f64 = 2.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub horizon: usize,
    /// Bounds on the input level `u`.
    pub input_box: BoundsSpec,
    /// Bounds on each input move `Δu`.
    pub move_box: BoundsSpec,
    pub controller: ControllerSection,
    /// Starting plant state; omitted fields default to zero.
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// Default closed-loop length; the command line may override it.
    #[serde(default)]
    pub steps: Option<usize>,
}

/// Plant model, either as modes (poles and residues per channel) or as the
/// raw realified matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Modes(ModesModel),
    Raw(RawModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesModel {
    pub d0: Vec<Vec<f64>>,
    pub modes: Vec<ModeSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    /// `[re, im]`; complex poles are entered once with `im > 0`.
    pub pole: [f64; 2],
    /// `[re, im]` residue of the channel transfer function at the pole.
    pub residue: [f64; 2],
    pub output: usize,
    pub input: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub f: Vec<Vec<f64>>,
    pub d0: Vec<Vec<f64>>,
    pub dd: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerSection {
    Setpoint(SetpointSection),
    Zone(ZoneSection),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointSection {
    pub target: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Explicit slack weight `S`; derived from the certificates when absent.
    #[serde(default)]
    pub slack_weight: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub certificate: CertificateSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSection {
    /// Acceptable output band.
    pub zone: BoundsSpec,
    /// Desired resting input level.
    pub u_des: Vec<f64>,
    pub qy: Vec<Vec<f64>>,
    pub qu: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Explicit output slack weight `Sy`; derived when absent.
    #[serde(default)]
    pub output_slack_weight: Option<Vec<Vec<f64>>>,
    /// Explicit input slack weight `Su`; derived when absent.
    #[serde(default)]
    pub input_slack_weight: Option<Vec<Vec<f64>>>,
    /// Shift used when deriving `Su`; must exceed one.
    #[serde(default)]
    pub su_shift: Option<f64>,
    #[serde(default)]
    pub certificate: CertificateSection,
}

/// Overrides for the certificate derivation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub phi_samples: Option<usize>,
    #[serde(default)]
    pub phi_safety: Option<f64>,
    #[serde(default)]
    pub phi_seed: Option<u64>,
    #[serde(default)]
    pub rank_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub xs: Option<Vec<f64>>,
    #[serde(default)]
    pub xd: Option<Vec<f64>>,
    #[serde(default)]
    pub u: Option<Vec<f64>>,
}

/// Certificate bundle for whichever controller the scenario declares.
#[derive(Debug, Clone)]
pub enum ResolvedCertificates {
    Setpoint(SetpointCertificates),
    Zone(ZoneCertificates),
}

/// A scenario turned into runnable objects.
pub struct BuiltScenario {
    pub name: Option<String>,
    pub controller: ControllerSpec,
    pub initial: PlantState,
    pub steps: Option<usize>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> anyhow::Result<DMatrix<f64>> {
    if rows.is_empty() {
        bail!("{what}: matrix needs at least one row");
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        bail!("{what}: matrix rows must not be empty");
    }
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{what}: rows have inconsistent lengths");
    }
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                bail!("{what}: entry ({i}, {j}) is not finite");
            }
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn vector(vals: &[f64], what: &str) -> anyhow::Result<DVector<f64>> {
    if vals.iter().any(|v| !v.is_finite()) {
        bail!("{what}: entries must be finite");
    }
    Ok(DVector::from_column_slice(vals))
}

fn rectangle(b: &BoundsSpec, what: &str) -> anyhow::Result<Rectangle> {
    let lo = vector(&b.lo, what)?;
    let hi = vector(&b.hi, what)?;
    Rectangle::new(lo, hi).with_context(|| format!("{what}: invalid bounds"))
}

impl CertificateSection {
    pub fn to_options(&self) -> CertificateOptions {
        let defaults = PhiOptions::default();
        CertificateOptions {
            margin: self.margin,
            beta: self.beta,
            phi: self.phi,
            phi_opts: PhiOptions {
                samples: self.phi_samples.unwrap_or(defaults.samples),
                safety: self.phi_safety.unwrap_or(defaults.safety),
                seed: self.phi_seed.unwrap_or(defaults.seed),
            },
            rank_tol: self.rank_tol,
        }
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading scenario {}", path.display()))?;
        let parsed: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing scenario {}", path.display()))?;
        Ok(parsed)
    }

    pub fn model(&self) -> anyhow::Result<OpomModel> {
        match &self.model {
            ModelSpec::Modes(m) => {
                let d0 = matrix(&m.d0, "model.d0")?;
                let (ny, nu) = d0.shape();
                let modes: Vec<Mode> = m
                    .modes
                    .iter()
                    .map(|s| Mode {
                        pole_re: s.pole[0],
                        pole_im: s.pole[1],
                        residue_re: s.residue[0],
                        residue_im: s.residue[1],
                        output_index: s.output,
                        input_index: s.input,
                    })
                    .collect();
                OpomModel::from_modes(ny, nu, d0, &modes).context("model")
            }
            ModelSpec::Raw(m) => {
                let f = matrix(&m.f, "model.f")?;
                let d0 = matrix(&m.d0, "model.d0")?;
                let dd = matrix(&m.dd, "model.dd")?;
                let psi = matrix(&m.psi, "model.psi")?;
                OpomModel::new(f, d0, dd, psi).context("model")
            }
        }
    }

    /// Derives the certificate bundle for this scenario, honoring the
    /// override knobs but ignoring explicit slack-weight matrices.
    pub fn certificates(&self) -> anyhow::Result<ResolvedCertificates> {
        let model = self.model()?;
        let u_box = rectangle(&self.input_box, "input_box")?;
        match &self.controller {
            ControllerSection::Setpoint(s) => {
                let q = matrix(&s.q, "controller.q")?;
                let r = matrix(&s.r, "controller.r")?;
                let target = vector(&s.target, "controller.target")?;
                let bundle = certify_setpoint(
                    &model,
                    &q,
                    &r,
                    self.horizon,
                    &u_box,
                    &target,
                    &s.certificate.to_options(),
                )
                .context("certifying the setpoint controller")?;
                Ok(ResolvedCertificates::Setpoint(bundle))
            }
            ControllerSection::Zone(z) => {
                let qy = matrix(&z.qy, "controller.qy")?;
                let qu = matrix(&z.qu, "controller.qu")?;
                let r = matrix(&z.r, "controller.r")?;
                let u_des = vector(&z.u_des, "controller.u_des")?;
                let bundle = certify_zone(
                    &model,
                    &qy,
                    &qu,
                    &r,
                    self.horizon,
                    &u_box,
                    &u_des,
                    z.su_shift.unwrap_or(DEFAULT_SU_SHIFT),
                    &z.certificate.to_options(),
                )
                .context("certifying the zone controller")?;
                Ok(ResolvedCertificates::Zone(bundle))
            }
        }
    }

    /// Builds the runnable controller and starting state. Slack weights come
    /// from the file when given, otherwise from the certificates.
    pub fn build(&self) -> anyhow::Result<BuiltScenario> {
        let model = self.model()?;
        let u_box = rectangle(&self.input_box, "input_box")?;
        let du_box = rectangle(&self.move_box, "move_box")?;
        let controller = match &self.controller {
            ControllerSection::Setpoint(s) => {
                let q = matrix(&s.q, "controller.q")?;
                let r = matrix(&s.r, "controller.r")?;
                let target = vector(&s.target, "controller.target")?;
                let (slack, q_bar) = match &s.slack_weight {
                    Some(rows) => {
                        let slack = matrix(rows, "controller.slack_weight")?;
                        let q_bar = terminal_weight(model.f(), model.psi(), &q)
                            .context("terminal weight")?;
                        (slack, q_bar)
                    }
                    None => {
                        let ResolvedCertificates::Setpoint(bundle) = self.certificates()? else {
                            unreachable!("setpoint section certifies as setpoint");
                        };
                        (bundle.slack_weight, bundle.q_bar)
                    }
                };
                let spec = SetpointSpec::new(
                    model, self.horizon, q, r, slack, q_bar, target, u_box, du_box,
                )
                .context("building the setpoint controller")?;
                ControllerSpec::Setpoint(spec)
            }
            ControllerSection::Zone(z) => {
                let qy = matrix(&z.qy, "controller.qy")?;
                let qu = matrix(&z.qu, "controller.qu")?;
                let r = matrix(&z.r, "controller.r")?;
                let u_des = vector(&z.u_des, "controller.u_des")?;
                let y_zone = rectangle(&z.zone, "controller.zone")?;
                let explicit_sy = z
                    .output_slack_weight
                    .as_ref()
                    .map(|rows| matrix(rows, "controller.output_slack_weight"))
                    .transpose()?;
                let explicit_su = z
                    .input_slack_weight
                    .as_ref()
                    .map(|rows| matrix(rows, "controller.input_slack_weight"))
                    .transpose()?;
                let (sy, su, q_bar) = match (explicit_sy, explicit_su) {
                    (Some(sy), Some(su)) => {
                        let q_bar = terminal_weight(model.f(), model.psi(), &qy)
                            .context("terminal weight")?;
                        (sy, su, q_bar)
                    }
                    (sy, su) => {
                        let ResolvedCertificates::Zone(bundle) = self.certificates()? else {
                            unreachable!("zone section certifies as zone");
                        };
                        (
                            sy.unwrap_or(bundle.output_slack_weight),
                            su.unwrap_or(bundle.input_slack_weight),
                            bundle.q_bar,
                        )
                    }
                };
                let spec = ZoneSpec::new(
                    model, self.horizon, qy, qu, r, sy, su, q_bar, u_des, y_zone, u_box, du_box,
                )
                .context("building the zone controller")?;
                ControllerSpec::Zone(spec)
            }
        };

        let model = controller.model();
        let initial = match &self.initial {
            None => model.origin(),
            Some(init) => {
                let part = |vals: &Option<Vec<f64>>, len: usize, what: &str| {
                    match vals {
                        None => Ok(DVector::zeros(len)),
                        Some(v) if v.len() == len => vector(v, what),
                        Some(v) => bail!("{what}: expected {len} entries, got {}", v.len()),
                    }
                };
                PlantState {
                    xs: part(&init.xs, model.ny(), "initial.xs")?,
                    xd: part(&init.xd, model.nd(), "initial.xd")?,
                    u: part(&init.u, model.nu(), "initial.u")?,
                }
            }
        };

        Ok(BuiltScenario {
            name: self.name.clone(),
            controller,
            initial,
            steps: self.steps,
        })
    }
}

/// Serializable summary of a certificate bundle, including the sufficiency
/// verdicts the `certify` command reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: String,
    pub gain_rank: usize,
    pub phi: f64,
    pub c3: f64,
    pub beta: f64,
    /// Whether `β` exceeds the floor the convergence argument needs.
    pub beta_sufficient: bool,
    pub terminal_weight: Vec<Vec<f64>>,
    pub slack_metric: Vec<Vec<f64>>,
    /// `S` (setpoint) or `Sy` (zone).
    pub output_slack_weight: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_input: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_slack_weight: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_slack_sufficient: Option<bool>,
}

impl CertificateReport {
    pub fn from_resolved(resolved: &ResolvedCertificates) -> Self {
        use ihmpc::certificates::{input_slack_weight_sufficient, slack_scale_sufficient};
        match resolved {
            ResolvedCertificates::Setpoint(b) => Self {
                kind: "setpoint".into(),
                gain_rank: b.decomposition.rank,
                phi: b.phi,
                c3: b.c3,
                beta: b.beta,
                beta_sufficient: slack_scale_sufficient(b.beta, b.c3),
                terminal_weight: matrix_to_rows(&b.q_bar),
                slack_metric: matrix_to_rows(&b.slack_metric),
                output_slack_weight: matrix_to_rows(&b.slack_weight),
                steady_input: Some(b.steady_input.input.as_slice().to_vec()),
                steady_residual: Some(b.steady_input.residual),
                curvature: None,
                input_slack_weight: None,
                input_slack_sufficient: None,
            },
            ResolvedCertificates::Zone(b) => Self {
                kind: "zone".into(),
                gain_rank: b.decomposition.rank,
                phi: b.phi,
                c3: b.c3,
                beta: b.beta,
                beta_sufficient: slack_scale_sufficient(b.beta, b.c3),
                terminal_weight: matrix_to_rows(&b.q_bar),
                slack_metric: matrix_to_rows(&b.slack_metric),
                output_slack_weight: matrix_to_rows(&b.output_slack_weight),
                steady_input: None,
                steady_residual: None,
                curvature: Some(matrix_to_rows(&b.curvature)),
                input_slack_weight: Some(matrix_to_rows(&b.input_slack_weight)),
                input_slack_sufficient: Some(input_slack_weight_sufficient(
                    &b.input_slack_weight,
                    &b.curvature,
                )),
            },
        }
    }

    /// Whether every sufficiency condition holds.
    pub fn sufficient(&self) -> bool {
        self.beta_sufficient && self.input_slack_sufficient.unwrap_or(true)
    }
}
