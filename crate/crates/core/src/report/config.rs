//! Experiment configuration files, presets and command-line overrides.
//!
//! A configuration is a TOML document with the sections `experiment`,
//! `problem`, `network`, `idrm`, `adam`, `pinn`, `marching` and `test`.
//! Keys mirror the struct fields one to one. A file may name a preset in
//! `experiment.base`; its keys are then laid over that preset.

use serde::{Deserialize, Serialize};

use super::TestSet;
use crate::idrm::{IdrmConfig, Quadrature};
use crate::loss::pinn_compatibility;
use crate::problems::{catalog, navier_stokes, plaplace_small, ProblemSpec};
use crate::trainer::AdamConfig;
use crate::{Error, NetArch, Result};

/// Which solver an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Idrm,
    Pinn,
    TimeMarching,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Idrm => "idrm",
            Method::Pinn => "pinn",
            Method::TimeMarching => "time-marching",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Preset whose keys this file overrides.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    pub method: Method,
    pub seed: u64,
    /// Seeds of a comparison or sweep.
    pub seeds: Vec<u64>,
    /// Methods of a comparison.
    pub methods: Vec<Method>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            base: None,
            method: Method::Idrm,
            seed: 1,
            seeds: vec![1, 2, 3],
            methods: vec![Method::Idrm],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub name: String,
    /// Difference-quotient step of the `p < 2` pairing; zero selects the
    /// exact pairing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viscosity: Option<f64>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            name: "conv-diffusion-10d".into(),
            delta: None,
            viscosity: None,
        }
    }
}

impl ProblemSection {
    pub fn build(&self) -> Result<ProblemSpec> {
        let mut errs = Vec::new();
        if self.delta.is_some() && self.name != "plaplace-1.5" {
            errs.push(format!("problem.delta applies only to plaplace-1.5, not {}", self.name));
        }
        if self.viscosity.is_some() && self.name != "navier-stokes-3d" {
            errs.push(format!("problem.viscosity applies only to navier-stokes-3d, not {}", self.name));
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0) || !d.is_finite() {
                errs.push(format!("problem.delta must be nonnegative, got {d}"));
            }
        }
        if let Some(v) = self.viscosity {
            if !(v > 0.0) || !v.is_finite() {
                errs.push(format!("problem.viscosity must be positive, got {v}"));
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        match (self.name.as_str(), self.delta, self.viscosity) {
            ("plaplace-1.5", Some(d), _) => Ok(plaplace_small(10, (d > 0.0).then_some(d))),
            ("navier-stokes-3d", _, Some(v)) => Ok(navier_stokes(v)),
            (name, _, _) => catalog(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden layer widths; input and output sizes follow from the problem.
    pub widths: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_bound: Option<f64>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            widths: vec![20, 20, 20],
            param_bound: None,
        }
    }
}

impl NetworkSection {
    pub fn arch(&self, spec: &ProblemSpec) -> Result<NetArch> {
        let arch = NetArch::new(spec.dim(), self.widths.clone(), spec.ansatz.net_outputs(spec.n_components))?;
        match self.param_bound {
            Some(b) => arch.with_param_bound(b),
            None => Ok(arch),
        }
    }
}

/// Residual-loss baseline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnSection {
    /// Hidden widths; the `network` widths when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub steps: usize,
    pub sigma: f64,
    /// Gradient regularization `(ε² + |∇u|²)` of a `p < 2` flux.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl Default for PinnSection {
    fn default() -> Self {
        Self {
            widths: None,
            learning_rate: 5e-3,
            steps: 4000,
            sigma: 100.0,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarchingSection {
    pub steps: usize,
    pub t_final: f64,
}

impl Default for MarchingSection {
    fn default() -> Self {
        Self { steps: 5, t_final: 0.5 }
    }
}

/// Evaluation set of the relative error; chosen from the dimension when
/// absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSection {
    MonteCarlo { points: usize },
    Grid { h: f64 },
}

impl From<TestSection> for TestSet {
    fn from(t: TestSection) -> Self {
        match t {
            TestSection::MonteCarlo { points } => TestSet::MonteCarlo { points },
            TestSection::Grid { h } => TestSet::Grid { h },
        }
    }
}

/// A complete, resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub problem: ProblemSection,
    pub network: NetworkSection,
    pub idrm: IdrmConfig,
    pub adam: AdamConfig,
    pub pinn: PinnSection,
    pub marching: MarchingSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<TestSection>,
}

pub const PRESET_NAMES: [&str; 6] = [
    "conv-diffusion-10d",
    "plaplace-2.5",
    "plaplace-1.5",
    "quasilinear-heat-10d",
    "navier-stokes-3d",
    "conv-diffusion-10d-full",
];

pub fn preset_names() -> Vec<String> {
    PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Ready-made configurations of the benchmark experiments.
///
/// The collocation counts are reduced for a single CPU core: 2,000 interior
/// points for the scalar problems and a grid of step 0.05 for the flow.
/// `conv-diffusion-10d-full` keeps 10,000 interior points.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    c.problem.name = name.to_string();
    let mc = |interior| Quadrature::MonteCarlo { interior, boundary: 800 };
    match name {
        "conv-diffusion-10d" | "conv-diffusion-10d-full" => {
            c.problem.name = "conv-diffusion-10d".into();
            c.experiment.methods = vec![Method::Idrm, Method::Pinn];
            c.network.widths = vec![20, 20, 20];
            c.adam.learning_rate = 3e-3;
            c.idrm.sigma0 = 100.0;
            c.idrm.mu = 0.0;
            c.idrm.quadrature = mc(if name.ends_with("full") { 10_000 } else { 2_000 });
            c.pinn = PinnSection {
                widths: None,
                learning_rate: 5e-3,
                steps: 5000,
                sigma: 100.0,
                eps: None,
            };
        }
        "plaplace-2.5" => {
            c.network.widths = vec![50; 6];
            c.adam.learning_rate = 1e-3;
            c.idrm.sigma0 = 100.0;
            c.idrm.mu = 0.0;
            c.idrm.quadrature = mc(2_000);
        }
        "plaplace-1.5" => {
            c.experiment.methods = vec![Method::Idrm, Method::Pinn];
            c.network.widths = vec![16, 32, 32, 16];
            c.adam.learning_rate = 5e-3;
            c.idrm.sigma0 = 40.0;
            c.idrm.mu = 2.0;
            c.idrm.outer_loops = 10;
            c.idrm.carry_adam_state = true;
            c.idrm.lr_decay = 0.8;
            c.idrm.quadrature = mc(2_000);
            c.problem.delta = Some(0.01);
            c.pinn = PinnSection {
                widths: Some(vec![16, 32, 16]),
                learning_rate: 5e-3,
                steps: 2700,
                sigma: 40.0,
                eps: Some(0.01),
            };
        }
        "quasilinear-heat-10d" => {
            c.experiment.method = Method::TimeMarching;
            c.experiment.methods = vec![Method::TimeMarching];
            c.network.widths = vec![20, 40, 40, 20];
            c.adam.learning_rate = 1e-3;
            c.idrm.sigma0 = 100.0;
            c.idrm.mu = 0.01;
            c.idrm.outer_loops = 4;
            c.adam.max_steps = 250;
            c.idrm.quadrature = mc(2_000);
            c.marching = MarchingSection { steps: 5, t_final: 0.5 };
        }
        "navier-stokes-3d" => {
            c.network.widths = vec![10, 10];
            c.adam.learning_rate = 1e-3;
            c.idrm.sigma0 = 10.0;
            c.idrm.sigma_growth = 1.5;
            c.idrm.mu = 0.0;
            c.idrm.quadrature = Quadrature::Grid { h: 0.05, t_nodes: 3 };
            c.problem.viscosity = Some(0.1);
            c.test = Some(TestSection::Grid { h: 0.05 });
        }
        _ => {
            return Err(Error::UnknownName {
                kind: "preset",
                name: name.to_string(),
                valid: preset_names(),
            })
        }
    }
    Ok(c)
}

fn to_table(cfg: &ExperimentConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(|e| Error::Format(format!("cannot serialize configuration: {e}")))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `key.path=value`; the value is read as TOML and falls back to a
/// bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> std::result::Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` is malformed"));
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| format!("override key `{key}`: `{p}` is not a section"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Resolves a preset name or a configuration file path, then applies
    /// `key=value` overrides.
    pub fn resolve(source: &str, overrides: &[String]) -> Result<Self> {
        let path = std::path::Path::new(source);
        let table = if path.is_file() {
            let text = std::fs::read_to_string(path)?;
            let file: toml::Table =
                toml::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
            let mut base = match file.get("experiment").and_then(|e| e.get("base")) {
                Some(toml::Value::String(b)) => to_table(&preset(b)?)?,
                Some(other) => {
                    return Err(Error::Config(vec![format!(
                        "experiment.base must be a preset name, got {other}"
                    )]))
                }
                None => to_table(&ExperimentConfig::default())?,
            };
            merge(&mut base, file);
            base
        } else if source.ends_with(".toml") {
            return Err(Error::Config(vec![format!("configuration file {source} not found")]));
        } else {
            to_table(&preset(source)?)?
        };
        Self::from_table(table, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let mut base = to_table(&ExperimentConfig::default())?;
        merge(&mut base, table);
        Self::from_table(base, overrides)
    }

    fn from_table(mut table: toml::Table, overrides: &[String]) -> Result<Self> {
        let errs: Vec<String> = overrides
            .iter()
            .filter_map(|o| apply_override(&mut table, o).err())
            .collect();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize configuration: {e}")))
    }

    pub fn test_set(&self, spec: &ProblemSpec) -> TestSet {
        self.test.map(TestSet::from).unwrap_or_else(|| TestSet::default_for(spec))
    }

    pub fn pinn_arch(&self, spec: &ProblemSpec) -> Result<NetArch> {
        NetworkSection {
            widths: self.pinn.widths.clone().unwrap_or_else(|| self.network.widths.clone()),
            param_bound: self.network.param_bound,
        }
        .arch(spec)
    }

    /// Every problem with the configuration, collected before any compute.
    pub fn errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let spec = match self.problem.build() {
            Ok(s) => Some(s),
            Err(Error::Config(e)) => {
                errs.extend(e);
                None
            }
            Err(e) => {
                errs.push(e.to_string());
                None
            }
        };
        if self.network.widths.is_empty() || self.network.widths.contains(&0) {
            errs.push(format!(
                "network.widths must be nonempty with positive entries, got {:?}",
                self.network.widths
            ));
        }
        if let Some(b) = self.network.param_bound {
            if !(b > 0.0) {
                errs.push(format!("network.param_bound must be positive, got {b}"));
            }
        }
        errs.extend(self.adam.errors().into_iter().map(|e| format!("adam: {e}")));
        let methods: Vec<Method> = std::iter::once(self.experiment.method)
            .chain(self.experiment.methods.iter().copied())
            .collect();
        if self.experiment.methods.is_empty() {
            errs.push("experiment.methods must name at least one method".into());
        }
        if self.experiment.seeds.is_empty() {
            errs.push("experiment.seeds must list at least one seed".into());
        }
        if methods.contains(&Method::Pinn) {
            if !(self.pinn.learning_rate > 0.0) {
                errs.push(format!("pinn.learning_rate must be positive, got {}", self.pinn.learning_rate));
            }
            if self.pinn.steps == 0 {
                errs.push("pinn.steps must be >= 1".into());
            }
            if !(self.pinn.sigma >= 0.0) {
                errs.push(format!("pinn.sigma must be nonnegative, got {}", self.pinn.sigma));
            }
            if let Some(w) = &self.pinn.widths {
                if w.is_empty() || w.contains(&0) {
                    errs.push(format!("pinn.widths must be nonempty with positive entries, got {w:?}"));
                }
            }
            if let Some(e) = self.pinn.eps {
                if !(e >= 0.0) {
                    errs.push(format!("pinn.eps must be nonnegative, got {e}"));
                }
            }
        }
        if methods.contains(&Method::TimeMarching) {
            if self.problem.name != "quasilinear-heat-10d" {
                errs.push(format!(
                    "time-marching applies only to quasilinear-heat-10d, not {}",
                    self.problem.name
                ));
            }
            if self.marching.steps == 0 {
                errs.push("marching.steps must be >= 1".into());
            }
            if !(self.marching.t_final > 0.0) || !self.marching.t_final.is_finite() {
                errs.push(format!("marching.t_final must be positive, got {}", self.marching.t_final));
            }
        }
        if let Some(spec) = &spec {
            errs.extend(self.idrm.errors(spec).into_iter().map(|e| format!("idrm: {e}")));
            match self.test {
                Some(TestSection::MonteCarlo { points }) if points == 0 => {
                    errs.push("test.points must be >= 1".into());
                }
                Some(TestSection::Grid { h }) => {
                    if let Err(e) = crate::quadrature::grid_quad(&spec.domain, h) {
                        errs.push(format!("test: {e}"));
                    }
                }
                _ => {}
            }
            if spec.exact.is_none() {
                errs.push(format!("{} has no exact solution to measure errors against", spec.name));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Why `method` cannot run on this problem, if it cannot.
    pub fn incompatibility(&self, method: Method) -> Option<String> {
        let spec = match self.problem.build() {
            Ok(s) => s,
            Err(e) => return Some(e.to_string()),
        };
        match method {
            Method::Idrm => None,
            Method::Pinn => pinn_compatibility(&spec, self.pinn.eps).err(),
            Method::TimeMarching => (self.problem.name != "quasilinear-heat-10d")
                .then(|| format!("time-marching applies only to quasilinear-heat-10d, not {}", spec.name)),
        }
    }
}
