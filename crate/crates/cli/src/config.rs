//! Run configuration: TOML text, frequencies in Hz, converted to rad/s here.

use std::path::{Path, PathBuf};

use krotov_core::functionals::FunctionalKind;
use krotov_core::krotov::KrotovSettings;
use krotov_core::models::{optomech_model, qubit_decay_model, OptomechParams, OPTOMECH_TRACKS, TWO_PI};
use krotov_core::propagation::{ControlSet, SystemModel};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Propagate,
    Optimize,
    SteadyState,
    ScanTimeCooperativity,
    NoiseScan,
    Switchback,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Propagate => "propagate",
            Mode::Optimize => "optimize",
            Mode::SteadyState => "steady-state",
            Mode::ScanTimeCooperativity => "scan-time-cooperativity",
            Mode::NoiseScan => "noise-scan",
            Mode::Switchback => "switchback",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub model: RawModel,
    pub grid: Option<RawGrid>,
    #[serde(default)]
    pub functional: RawFunctional,
    #[serde(default)]
    pub krotov: RawKrotov,
    pub target: Option<RawTarget>,
    #[serde(default)]
    pub steady_state: RawSteadyState,
    #[serde(default)]
    pub thermalization: RawThermalization,
    pub scan: Option<RawScan>,
    #[serde(default)]
    pub noise: RawNoise,
    pub switchback: Option<RawSwitchback>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub kind: String,
    /// Qubit guess decay rate in 1/s.
    pub u_per_s: Option<f64>,
    pub kappa_hz: Option<f64>,
    pub gamma_m_hz: Option<f64>,
    pub n_th: Option<f64>,
    pub n_cav: Option<usize>,
    pub n_res: Option<usize>,
    pub cooperativity: Option<f64>,
    pub ratio: Option<f64>,
    pub g_minus_hz: Option<f64>,
    pub g_plus_hz: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub t_final_s: Option<f64>,
    /// `T` as a fraction of the constant-drive thermalization time.
    pub thermalization_fraction: Option<f64>,
    pub n_steps: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFunctional {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "half")]
    pub alpha1: f64,
    #[serde(default = "half")]
    pub alpha2: f64,
}

impl Default for RawFunctional {
    fn default() -> Self {
        Self { kind: default_kind(), alpha1: 0.5, alpha2: 0.5 }
    }
}

fn default_kind() -> String {
    "hs".into()
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKrotov {
    pub lambda: Option<Vec<f64>>,
    pub ramp_fraction: Option<f64>,
    pub max_iters: Option<usize>,
    pub j_tol: Option<f64>,
    pub d_trace_stop: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTarget {
    pub source: String,
    pub diagonal: Option<Vec<f64>>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSteadyState {
    #[serde(default = "default_ss_tol")]
    pub tol: f64,
    #[serde(default = "default_ss_horizon")]
    pub horizon_s: f64,
}

impl Default for RawSteadyState {
    fn default() -> Self {
        Self { tol: default_ss_tol(), horizon_s: default_ss_horizon() }
    }
}

fn default_ss_tol() -> f64 {
    1e-9
}

fn default_ss_horizon() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawThermalization {
    #[serde(default = "default_th_threshold")]
    pub threshold: f64,
    #[serde(default = "default_th_dt")]
    pub dt_s: f64,
    #[serde(default = "default_th_horizon")]
    pub horizon_s: f64,
}

impl Default for RawThermalization {
    fn default() -> Self {
        Self { threshold: default_th_threshold(), dt_s: default_th_dt(), horizon_s: default_th_horizon() }
    }
}

fn default_th_threshold() -> f64 {
    1e-4
}

fn default_th_dt() -> f64 {
    1e-6
}

fn default_th_horizon() -> f64 {
    3e-3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScan {
    pub t_final_s: Option<Vec<f64>>,
    pub thermalization_fractions: Option<Vec<f64>>,
    #[serde(default = "default_th_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub constant_cooperativities: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    pub controls: Option<PathBuf>,
}

impl Default for RawNoise {
    fn default() -> Self {
        Self { epsilons: default_epsilons(), controls: None }
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![0.0, 0.002, 0.005, 0.010]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSwitchback {
    pub extension_s: f64,
    pub extension_steps: usize,
    pub controls: Option<PathBuf>,
}

/// The physical system a run acts on.
#[derive(Clone, Debug)]
pub enum ModelChoice {
    Qubit { u: f64 },
    Optomech(OptomechParams),
}

impl ModelChoice {
    pub fn build(&self) -> CliResult<SystemModel> {
        match self {
            ModelChoice::Qubit { .. } => Ok(qubit_decay_model()),
            ModelChoice::Optomech(p) => optomech_model(p).map_err(|e| CliError::Config(format!("model: {e}"))),
        }
    }

    pub fn track_names(&self) -> Vec<&'static str> {
        match self {
            ModelChoice::Qubit { .. } => vec!["u"],
            ModelChoice::Optomech(_) => OPTOMECH_TRACKS.to_vec(),
        }
    }

    pub fn guess_values(&self) -> Vec<f64> {
        match self {
            ModelChoice::Qubit { u } => vec![*u],
            ModelChoice::Optomech(p) => p.constant_controls().to_vec(),
        }
    }

    pub fn guess(&self, n_steps: usize) -> CliResult<ControlSet> {
        ControlSet::constant(&self.track_names(), &self.guess_values(), n_steps).map_err(CliError::Numerical)
    }

    pub fn optomech(&self) -> Option<&OptomechParams> {
        match self {
            ModelChoice::Optomech(p) => Some(p),
            ModelChoice::Qubit { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum GridChoice {
    Fixed { t_final: f64, n_steps: usize },
    Thermalization { fraction: f64, n_steps: usize },
}

impl GridChoice {
    pub fn n_steps(&self) -> usize {
        match *self {
            GridChoice::Fixed { n_steps, .. } | GridChoice::Thermalization { n_steps, .. } => n_steps,
        }
    }
}

#[derive(Clone, Debug)]
pub enum TargetChoice {
    Diagonal(Vec<f64>),
    File(PathBuf),
    SteadyState,
}

#[derive(Clone, Debug)]
pub struct Thermalization {
    pub threshold: f64,
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug)]
pub enum ScanTimes {
    Seconds(Vec<f64>),
    Fractions(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct ScanConfig {
    pub times: ScanTimes,
    pub threshold: f64,
    pub constant_cooperativities: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SwitchbackConfig {
    pub extension: f64,
    pub extension_steps: usize,
    pub controls: Option<PathBuf>,
}

/// Validated run description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub out: PathBuf,
    pub model: ModelChoice,
    pub grid: Option<GridChoice>,
    pub kind: FunctionalKind,
    pub alpha1: f64,
    pub alpha2: f64,
    pub krotov: KrotovSettings,
    pub target: TargetChoice,
    pub ss_tol: f64,
    pub ss_horizon: f64,
    pub thermalization: Thermalization,
    pub scan: Option<ScanConfig>,
    pub epsilons: Vec<f64>,
    pub noise_controls: Option<PathBuf>,
    pub switchback: Option<SwitchbackConfig>,
}

fn cfg_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn positive(path: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        cfg_err(format!("{path}: must be positive, got {v}"))
    }
}

/// Default inverse step size for the desk-scale optomechanical set, per kind.
/// Each gives a first-iteration field change of about 5-8% of `G_-`.
fn desk_lambda(kind: FunctionalKind) -> f64 {
    match kind {
        FunctionalKind::Re => 4e-6,
        FunctionalKind::Sm => 6e-6,
        FunctionalKind::Hs => 3e-7,
        FunctionalKind::Split => 4e-7,
        FunctionalKind::SplitAdaptive => 5e-7,
    }
}

/// Per-track default: 0.5 for the qubit; for the optomechanical system the
/// desk-scale value rescaled inversely with the guess `G_-`.
pub fn default_lambda(model: &ModelChoice, kind: FunctionalKind) -> Vec<f64> {
    match model {
        ModelChoice::Qubit { .. } => vec![0.5],
        ModelChoice::Optomech(p) => {
            let desk = OptomechParams::desk_scale().g_minus;
            let l = desk_lambda(kind) * desk / p.g_minus.max(f64::MIN_POSITIVE);
            vec![l; 2]
        }
    }
}

fn resolve_model(raw: &RawModel, paper_scale: bool) -> CliResult<ModelChoice> {
    match raw.kind.as_str() {
        "qubit" => {
            if paper_scale {
                return cfg_err("--paper-scale: only applies to model.kind = \"optomech\"");
            }
            let optomech_fields = [
                ("kappa_hz", raw.kappa_hz.is_some()),
                ("gamma_m_hz", raw.gamma_m_hz.is_some()),
                ("n_th", raw.n_th.is_some()),
                ("n_cav", raw.n_cav.is_some()),
                ("n_res", raw.n_res.is_some()),
                ("cooperativity", raw.cooperativity.is_some()),
                ("ratio", raw.ratio.is_some()),
                ("g_minus_hz", raw.g_minus_hz.is_some()),
                ("g_plus_hz", raw.g_plus_hz.is_some()),
            ];
            if let Some((name, _)) = optomech_fields.iter().find(|(_, set)| *set) {
                return cfg_err(format!("model.{name}: not a qubit parameter"));
            }
            let u = raw.u_per_s.unwrap_or(0.01);
            if !(u >= 0.0 && u.is_finite()) {
                return cfg_err(format!("model.u_per_s: must be nonnegative, got {u}"));
            }
            Ok(ModelChoice::Qubit { u })
        }
        "optomech" => {
            if raw.u_per_s.is_some() {
                return cfg_err("model.u_per_s: not an optomechanical parameter");
            }
            let p = if paper_scale {
                OptomechParams::paper_scale()
            } else {
                let d = OptomechParams::desk_scale();
                let kappa = raw.kappa_hz.map(|v| positive("model.kappa_hz", v)).transpose()?.map_or(d.kappa, |v| v * TWO_PI);
                let gamma_m =
                    raw.gamma_m_hz.map(|v| positive("model.gamma_m_hz", v)).transpose()?.map_or(d.gamma_m, |v| v * TWO_PI);
                let n_th = raw.n_th.unwrap_or(d.n_th);
                let n_cav = raw.n_cav.unwrap_or(d.n_cav);
                let n_res = raw.n_res.unwrap_or(d.n_res);
                let explicit = raw.g_minus_hz.is_some() || raw.g_plus_hz.is_some();
                let via_c = raw.cooperativity.is_some() || raw.ratio.is_some();
                if explicit && via_c {
                    return cfg_err("model: give either cooperativity/ratio or g_minus_hz/g_plus_hz, not both");
                }
                if explicit {
                    let g_minus = raw.g_minus_hz.unwrap_or(0.0) * TWO_PI;
                    let g_plus = raw.g_plus_hz.unwrap_or(0.0) * TWO_PI;
                    OptomechParams { kappa, gamma_m, n_th, n_cav, n_res, g_minus, g_plus }
                } else {
                    let c = raw.cooperativity.unwrap_or(10.0);
                    let ratio = raw.ratio.unwrap_or(0.5);
                    OptomechParams::from_cooperativity(kappa, gamma_m, n_th, n_cav, n_res, c, ratio)
                        .map_err(|e| CliError::Config(format!("model: {e}")))?
                }
            };
            p.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
            Ok(ModelChoice::Optomech(p))
        }
        other => cfg_err(format!("model.kind: expected \"qubit\" or \"optomech\", got \"{other}\"")),
    }
}

fn resolve_grid(raw: &RawGrid, model: &ModelChoice) -> CliResult<GridChoice> {
    if raw.n_steps == 0 {
        return cfg_err("grid.n_steps: must be at least 1");
    }
    match (raw.t_final_s, raw.thermalization_fraction) {
        (Some(t), None) => Ok(GridChoice::Fixed { t_final: positive("grid.t_final_s", t)?, n_steps: raw.n_steps }),
        (None, Some(f)) => {
            if model.optomech().is_none() {
                return cfg_err("grid.thermalization_fraction: only available for the optomechanical model");
            }
            Ok(GridChoice::Thermalization { fraction: positive("grid.thermalization_fraction", f)?, n_steps: raw.n_steps })
        }
        _ => cfg_err("grid: give exactly one of t_final_s or thermalization_fraction"),
    }
}

fn resolve_target(raw: Option<&RawTarget>, model: &ModelChoice, base: &Path) -> CliResult<TargetChoice> {
    let Some(raw) = raw else {
        return Ok(match model {
            ModelChoice::Qubit { .. } => TargetChoice::Diagonal(vec![0.6, 0.4]),
            ModelChoice::Optomech(_) => TargetChoice::SteadyState,
        });
    };
    match raw.source.as_str() {
        "diagonal" => match &raw.diagonal {
            Some(d) => Ok(TargetChoice::Diagonal(d.clone())),
            None => cfg_err("target.diagonal: required when target.source = \"diagonal\""),
        },
        "file" => match &raw.file {
            Some(f) => Ok(TargetChoice::File(base.join(f))),
            None => cfg_err("target.file: required when target.source = \"file\""),
        },
        "steady-state" => Ok(TargetChoice::SteadyState),
        other => cfg_err(format!("target.source: expected \"diagonal\", \"file\" or \"steady-state\", got \"{other}\"")),
    }
}

impl RunConfig {
    pub fn load(path: &Path, mode: Mode, out: Option<PathBuf>, paper_scale: bool) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read config: {e}", path.display())))?;
        let raw: RawConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_raw(raw, mode, out, paper_scale, base)
    }

    pub fn from_raw(raw: RawConfig, mode: Mode, out: Option<PathBuf>, paper_scale: bool, base: &Path) -> CliResult<Self> {
        if let Some(m) = &raw.mode {
            if m != mode.as_str() {
                return cfg_err(format!("mode: config says \"{m}\" but \"{}\" was requested", mode.as_str()));
            }
        }
        let out = out.or_else(|| raw.out.as_ref().map(|o| base.join(o))).unwrap_or_else(|| PathBuf::from("."));
        let model = resolve_model(&raw.model, paper_scale)?;
        let grid = raw.grid.as_ref().map(|g| resolve_grid(g, &model)).transpose()?;
        let needs_grid = !matches!(mode, Mode::SteadyState);
        if needs_grid && grid.is_none() {
            return cfg_err(format!("grid: required for mode {}", mode.as_str()));
        }

        let kind: FunctionalKind =
            raw.functional.kind.parse().map_err(|e| CliError::Config(format!("functional.kind: {e}")))?;
        let (alpha1, alpha2) = (raw.functional.alpha1, raw.functional.alpha2);
        if !(alpha1 >= 0.0 && alpha2 >= 0.0 && alpha1 + alpha2 > 0.0) {
            return cfg_err("functional.alpha1/alpha2: must be nonnegative with a positive sum");
        }

        let k = &raw.krotov;
        let n_tracks = model.track_names().len();
        let lambda = k.lambda.clone().unwrap_or_else(|| default_lambda(&model, kind));
        let lambda = match lambda.len() {
            1 if n_tracks > 1 => vec![lambda[0]; n_tracks],
            _ => lambda,
        };
        let mut krotov = KrotovSettings::new(lambda);
        if let Some(r) = k.ramp_fraction {
            krotov.ramp_fraction = r;
        }
        if let Some(m) = k.max_iters {
            krotov.max_iters = m;
        }
        if let Some(j) = k.j_tol {
            krotov.j_tol = j;
        }
        krotov.d_trace_stop = k.d_trace_stop;
        krotov.adaptive_weights = kind == FunctionalKind::SplitAdaptive;
        krotov.validate(n_tracks).map_err(|e| CliError::Config(format!("krotov: {e}")))?;

        let target = resolve_target(raw.target.as_ref(), &model, base)?;
        let ss_tol = positive("steady_state.tol", raw.steady_state.tol)?;
        let ss_horizon = positive("steady_state.horizon_s", raw.steady_state.horizon_s)?;
        let th = &raw.thermalization;
        let thermalization = Thermalization {
            threshold: positive("thermalization.threshold", th.threshold)?,
            dt: positive("thermalization.dt_s", th.dt_s)?,
            horizon: positive("thermalization.horizon_s", th.horizon_s)?,
        };

        let scan = match raw.scan {
            Some(s) => {
                let times = match (s.t_final_s, s.thermalization_fractions) {
                    (Some(t), None) if !t.is_empty() => {
                        for v in &t {
                            positive("scan.t_final_s", *v)?;
                        }
                        ScanTimes::Seconds(t)
                    }
                    (None, Some(f)) if !f.is_empty() => {
                        for v in &f {
                            positive("scan.thermalization_fractions", *v)?;
                        }
                        ScanTimes::Fractions(f)
                    }
                    _ => return cfg_err("scan: give a nonempty t_final_s or thermalization_fractions list, not both"),
                };
                for c in &s.constant_cooperativities {
                    positive("scan.constant_cooperativities", *c)?;
                }
                Some(ScanConfig {
                    times,
                    threshold: positive("scan.threshold", s.threshold)?,
                    constant_cooperativities: s.constant_cooperativities,
                })
            }
            None => None,
        };
        if mode == Mode::ScanTimeCooperativity {
            if scan.is_none() {
                return cfg_err("scan: required for mode scan-time-cooperativity");
            }
            if model.optomech().is_none() {
                return cfg_err("model.kind: scan-time-cooperativity needs the optomechanical model");
            }
        }

        for e in &raw.noise.epsilons {
            if !(e.is_finite() && *e > -1.0) {
                return cfg_err(format!("noise.epsilons: {e} is not a valid relative perturbation"));
            }
        }
        let switchback = match raw.switchback {
            Some(s) => {
                if s.extension_steps == 0 {
                    return cfg_err("switchback.extension_steps: must be at least 1");
                }
                Some(SwitchbackConfig {
                    extension: positive("switchback.extension_s", s.extension_s)?,
                    extension_steps: s.extension_steps,
                    controls: s.controls.map(|c| base.join(c)),
                })
            }
            None => None,
        };
        if mode == Mode::Switchback && switchback.is_none() {
            return cfg_err("switchback: required for mode switchback");
        }

        Ok(Self {
            mode,
            out,
            model,
            grid,
            kind,
            alpha1,
            alpha2,
            krotov,
            target,
            ss_tol,
            ss_horizon,
            thermalization,
            scan,
            epsilons: raw.noise.epsilons,
            noise_controls: raw.noise.controls.map(|c| base.join(c)),
            switchback,
        })
    }
}
