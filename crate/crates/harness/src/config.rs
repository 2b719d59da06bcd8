//! Experiment configuration: a TOML document with one table per section.
//!
//! Every section has defaults, unknown keys are rejected, and
//! [`ExperimentConfig::validate`] builds the numerical objects once so that
//! invalid input is reported before any computation starts.

use std::path::{Path, PathBuf};

use escapelab::dynamics::{CompactCore, TrapEvaluation};
use escapelab::geometry::{BallPoint, BoundaryPoint, GeometryKind, ModelGeometry};
use escapelab::measures::BoundaryTest;
use escapelab::quadrature::{QuadScheme, QuadratureSpec};
use escapelab::schottky::{SchottkyGroup, DEFAULT_BUDGET};
use escapelab::semiclassics::QuantizationConvention;
use escapelab::symbols::{AngularProfile, ProductSymbol, RadialProfile};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::group_file::GroupDescription;
use crate::HarnessError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub group: GroupSection,
    pub dynamics: DynamicsSection,
    pub measures: MeasuresSection,
    pub semiclassics: SemiclassicsSection,
    pub symbol: SymbolSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryName {
    #[default]
    Hyperbolic,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub kind: GeometryName,
    pub n: usize,
    /// Defaults to 1 in the ball and 1/2 in the plane.
    pub epsilon0: Option<f64>,
    /// Radius of the Euclidean core `|m| <= r0`.
    pub r0: f64,
    /// Margin of the hyperbolic core around the convex hull.
    pub core_margin: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { kind: GeometryName::Hyperbolic, n: 1, epsilon0: None, r0: 10.0, core_margin: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupPreset {
    Trivial,
    Cyclic,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupSection {
    pub preset: Option<GroupPreset>,
    /// Translation length of the cyclic preset.
    pub length: f64,
    /// Disk half-angle of the symmetric preset.
    pub half_angle: f64,
    /// Group description file, relative to the config file.
    pub file: Option<PathBuf>,
    pub inline: Option<GroupDescription>,
    /// Orbit enumeration budget.
    pub budget: usize,
    /// Depth of the limit-set sample written by `validate-group`.
    pub limit_depth: usize,
    /// Filled in when `file` is read, so the hash tracks the file contents.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file_sha256: Option<String>,
    /// `file` resolved against the config's directory.
    #[serde(skip)]
    pub resolved_file: Option<PathBuf>,
}

impl Default for GroupSection {
    fn default() -> Self {
        GroupSection {
            preset: None,
            length: 2.0,
            half_angle: 0.5,
            file: None,
            inline: None,
            budget: DEFAULT_BUDGET,
            limit_depth: 6,
            file_sha256: None,
            resolved_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    pub t_start: f64,
    pub t_stop: f64,
    pub t_step: f64,
    pub samples: usize,
    pub seed: u64,
    pub fit_window: [f64; 2],
    pub evaluation: TrapEvaluation,
    pub lambda0: f64,
    pub h_values: Vec<f64>,
    /// Time grid and sample count of `lambda-max`.
    pub lambda_times: Vec<f64>,
    pub lambda_samples: usize,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        DynamicsSection {
            t_start: 0.0,
            t_stop: 8.0,
            t_step: 0.5,
            samples: 200_000,
            seed: 42,
            fit_window: [3.0, 8.0],
            evaluation: TrapEvaluation::Stepwise,
            lambda0: 1.1,
            h_values: vec![0.1, 0.03, 0.01, 0.003, 0.001],
            lambda_times: vec![2.0, 4.0, 6.0, 8.0],
            lambda_samples: 20_000,
        }
    }
}

impl DynamicsSection {
    /// `t_start + k t_step` up to `t_stop`.
    pub fn times(&self) -> Vec<f64> {
        let n = ((self.t_stop - self.t_start) / self.t_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.t_start + k as f64 * self.t_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasuresSection {
    pub scheme: QuadScheme,
    pub points: usize,
    pub tolerance: f64,
    pub max_word_len: usize,
    pub t_max: f64,
    /// Number of boundary points compared by `measures-compare`.
    pub pairs: usize,
    pub mc_samples: usize,
    /// Samples not escaped by this time count as dropped.
    pub horizon: f64,
    pub boundary_test: BoundaryTest,
}

impl Default for MeasuresSection {
    fn default() -> Self {
        MeasuresSection {
            scheme: QuadScheme::Adaptive,
            points: 12,
            tolerance: 1e-9,
            max_word_len: 10,
            t_max: 40.0,
            pairs: 4,
            mc_samples: 100_000,
            horizon: escapelab::measures::T_ESCAPE,
            boundary_test: BoundaryTest::Constant { value: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemiclassicsSection {
    pub h_list: Vec<f64>,
    pub quantization: QuantizationConvention,
    pub xi_angle: f64,
    /// Points per wavelength for matrix elements.
    pub points: usize,
    pub tolerance: f64,
    /// Energy level `s` of the trace term.
    pub energy: f64,
    /// Radial Gauss nodes of the trace term.
    pub trace_points: usize,
}

impl Default for SemiclassicsSection {
    fn default() -> Self {
        SemiclassicsSection {
            h_list: vec![0.2, 0.1, 0.07, 0.05],
            quantization: QuantizationConvention::Left,
            xi_angle: 0.0,
            points: 6,
            tolerance: 1e-6,
            energy: 1.0,
            trace_points: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolSection {
    pub center: [f64; 2],
    pub radius: f64,
    pub power: u32,
    pub gaussian_sigma: Option<f64>,
    pub angular: AngularProfile,
    pub radial: RadialProfile,
    pub amplitude: f64,
}

impl Default for SymbolSection {
    fn default() -> Self {
        SymbolSection {
            center: [0.0, 0.0],
            radius: 0.5,
            power: 4,
            gaussian_sigma: None,
            angular: AngularProfile::Isotropic,
            radial: RadialProfile::Constant,
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl OutputFormat {
    pub fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: PathBuf::from("runs"), formats: OutputFormat::Both }
    }
}

/// Numerical objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Setting {
    pub geometry: ModelGeometry,
    pub group: SchottkyGroup,
    pub symbol: ProductSymbol,
    pub measures_quad: QuadratureSpec,
    pub semiclassics_quad: QuadratureSpec,
    pub trace_quad: QuadratureSpec,
    pub times: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))
    }

    /// Reads a config file; a group file it names is resolved against the
    /// config's directory and its digest recorded.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(file) = &cfg.group.file {
            let base = path.parent().unwrap_or(Path::new("."));
            let resolved = if file.is_absolute() { file.clone() } else { base.join(file) };
            let bytes = std::fs::read(&resolved)
                .map_err(|e| HarnessError::Config(format!("cannot read group file {}: {e}", resolved.display())))?;
            cfg.group.resolved_file = Some(resolved);
            cfg.group.file_sha256 = Some(hex::encode(Sha256::digest(&bytes)));
        }
        Ok(cfg)
    }

    /// Canonical form: compact JSON with keys sorted at every level.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes to JSON")
    }

    pub fn hash(&self) -> String {
        hash_canonical(&self.canonical_json())
    }

    pub fn model_geometry(&self) -> Result<ModelGeometry, HarnessError> {
        let g = &self.geometry;
        let (kind, eps) = match g.kind {
            GeometryName::Hyperbolic => (GeometryKind::HyperbolicBall, g.epsilon0.unwrap_or(1.0)),
            GeometryName::Euclidean => (GeometryKind::EuclideanPlane, g.epsilon0.unwrap_or(0.5)),
        };
        Ok(ModelGeometry::new(kind, g.n, eps)?)
    }

    pub fn schottky_group(&self) -> Result<SchottkyGroup, HarnessError> {
        let g = &self.group;
        let sources = [g.preset.is_some(), g.file.is_some(), g.inline.is_some()];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(HarnessError::Config("give at most one of group.preset, group.file, group.inline".into()));
        }
        if let Some(file) = g.resolved_file.as_ref().or(g.file.as_ref()) {
            let text = std::fs::read_to_string(file)
                .map_err(|e| HarnessError::Config(format!("cannot read group file {}: {e}", file.display())))?;
            return GroupDescription::parse(&text)?.build();
        }
        if let Some(desc) = &g.inline {
            return desc.build();
        }
        Ok(match g.preset.unwrap_or(GroupPreset::Trivial) {
            GroupPreset::Trivial => SchottkyGroup::trivial(),
            GroupPreset::Cyclic => SchottkyGroup::cyclic(g.length)?,
            GroupPreset::Symmetric => SchottkyGroup::symmetric(g.half_angle)?,
        })
    }

    pub fn product_symbol(&self, geometry: ModelGeometry) -> Result<ProductSymbol, HarnessError> {
        let s = &self.symbol;
        let mut a = ProductSymbol::new(geometry, BallPoint::new(s.center[0], s.center[1]), s.radius, s.power)?
            .with_angular(s.angular)?
            .with_radial(s.radial)?
            .scaled(s.amplitude);
        if let Some(sigma) = s.gaussian_sigma {
            a = a.with_gaussian(sigma)?;
        }
        Ok(a)
    }

    pub fn compact_core(&self, setting: &Setting) -> Result<CompactCore, HarnessError> {
        Ok(if setting.geometry.is_hyperbolic() {
            CompactCore::hyperbolic(&setting.group, self.geometry.core_margin)?
        } else {
            CompactCore::euclidean(self.geometry.r0)?
        })
    }

    pub fn xi(&self) -> BoundaryPoint {
        BoundaryPoint::from_angle(self.semiclassics.xi_angle)
    }

    /// Checks every section and builds the shared numerical objects.
    pub fn validate(&self) -> Result<Setting, HarnessError> {
        let geometry = self.model_geometry()?;
        let group = self.schottky_group()?;
        if !geometry.is_hyperbolic() && group.rank() > 0 {
            return Err(HarnessError::Config("the Euclidean plane only supports the trivial group".into()));
        }
        let symbol = self.product_symbol(geometry)?;

        let d = &self.dynamics;
        if !(d.t_step > 0.0 && d.t_start >= 0.0 && d.t_stop >= d.t_start && d.t_stop.is_finite()) {
            return Err(HarnessError::Config(format!(
                "time grid needs 0 <= t_start <= t_stop and t_step > 0, got {}..{} step {}",
                d.t_start, d.t_stop, d.t_step
            )));
        }
        let times = d.times();
        if times.len() > 100_000 {
            return Err(HarnessError::Config(format!("time grid has {} points; at most 100000", times.len())));
        }
        if !(d.fit_window[0] < d.fit_window[1]) {
            return Err(HarnessError::Config(format!("fit_window {:?} must be increasing", d.fit_window)));
        }
        if !(d.lambda0 > 0.0) {
            return Err(HarnessError::Config(format!("lambda0 = {} must be positive", d.lambda0)));
        }
        if let Some(h) = d.h_values.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(HarnessError::Config(format!("h value {h} outside (0, 1)")));
        }
        if d.samples < 1000 || d.lambda_samples < 1000 {
            return Err(HarnessError::Config("dynamics sample counts must be at least 1000".into()));
        }
        if !(self.geometry.r0 > 0.0 && self.geometry.core_margin >= 0.0) {
            return Err(HarnessError::Config("r0 must be positive and core_margin non-negative".into()));
        }

        let m = &self.measures;
        let measures_quad = QuadratureSpec::new(m.scheme, m.points, m.tolerance)?;
        if m.mc_samples < 1000 {
            return Err(HarnessError::Config(format!("mc_samples = {} is below 1000", m.mc_samples)));
        }
        if !(m.t_max >= 0.0 && m.horizon > 0.0) || m.pairs == 0 {
            return Err(HarnessError::Config("need t_max >= 0, horizon > 0 and pairs >= 1".into()));
        }

        let s = &self.semiclassics;
        let semiclassics_quad = QuadratureSpec::tensor(s.points, s.tolerance)?;
        let trace_quad = QuadratureSpec::tensor(s.trace_points, s.tolerance)?;
        if let Some(h) = s.h_list.iter().find(|h| !(**h > 0.0 && **h <= 0.5)) {
            return Err(HarnessError::Config(format!("semiclassical h {h} outside (0, 0.5]")));
        }
        if !(s.energy > 0.0) {
            return Err(HarnessError::Config(format!("energy {} must be positive", s.energy)));
        }
        Ok(Setting { geometry, group, symbol, measures_quad, semiclassics_quad, trace_quad, times })
    }
}

/// SHA-256 of the compact JSON text; `serde_json` maps keep keys sorted.
pub fn hash_canonical(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("JSON value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}
