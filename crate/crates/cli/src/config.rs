//! Run configuration: one JSON object, unknown keys rejected, every embedded
//! invariant rechecked after parsing.

use std::path::Path;

use fracpass::analysis::InequalityConfig;
use fracpass::energies::HSpec;
use fracpass::profiles::CutoffSpec;
use fracpass::solvers::SolveOptions;
use fracpass::{FracParams, GridSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: ProblemParams,
    pub h: HSpec,
    #[serde(default)]
    pub bubble: BubbleSeed,
    /// Cutoff of the mountain-pass direction; the `(h1)` ball of `h` when absent.
    #[serde(default)]
    pub cutoff: Option<CutoffSpec>,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default)]
    pub sobolev: SobolevConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub appendix: AppendixConfig,
    #[serde(default)]
    pub concentration: ConcentrationConfig,
    #[serde(default)]
    pub mp: PathScanConfig,
    #[serde(default)]
    pub bubble_scan: BubbleScanConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    pub s: f64,
    pub q: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleSeed {
    pub mu: f64,
    /// Bubble centre; the centre of the `(h1)` ball when absent.
    pub xi: Option<Vec<f64>>,
    /// Bubble constant; calibrated on the grid when absent.
    pub c_ns: Option<f64>,
}

impl Default for BubbleSeed {
    fn default() -> Self {
        BubbleSeed {
            mu: 0.1,
            xi: None,
            c_ns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SobolevConfig {
    /// Use this value instead of estimating the Sobolev constant.
    pub s_hat: Option<f64>,
    /// Grid for the estimate. In one dimension a wide fine grid is used when
    /// absent; otherwise the run grid.
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub inequalities: InequalityConfig,
    /// Random `(a, eps)` pairs for the `C*` inequality.
    pub c_star_samples: usize,
    pub cutoff_radii: Vec<f64>,
    pub cutoff_centers: Vec<Vec<f64>>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            inequalities: InequalityConfig::default(),
            c_star_samples: 10_000,
            cutoff_radii: vec![0.5, 1.0, 2.0],
            cutoff_centers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppendixConfig {
    /// Defaults to `params.s` and `grid.dim`.
    pub s: Option<f64>,
    pub dim: Option<usize>,
    pub r_list: Vec<f64>,
    pub resolution: usize,
    pub tolerance: f64,
}

impl Default for AppendixConfig {
    fn default() -> Self {
        AppendixConfig {
            s: None,
            dim: None,
            r_list: vec![4.0, 8.0, 16.0, 32.0],
            resolution: 64,
            tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub n_max: usize,
    pub delta: f64,
    pub escape_delta: f64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        ConcentrationConfig {
            n_max: 4,
            delta: 0.1,
            escape_delta: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathScanConfig {
    pub t_max: f64,
    pub t_steps: usize,
}

impl Default for PathScanConfig {
    fn default() -> Self {
        PathScanConfig {
            t_max: 4.0,
            t_steps: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleScanConfig {
    /// Scales for the path-threshold scan (`bubble` and `threshold`).
    pub mus: Vec<f64>,
    /// Multiples of the calibration scale for the scaling check.
    pub scaling_factors: Vec<f64>,
    /// Scales for the energy and mass expansion fit.
    pub expansion_mus: Vec<f64>,
}

impl Default for BubbleScanConfig {
    fn default() -> Self {
        BubbleScanConfig {
            mus: vec![0.05, 0.1, 0.2],
            scaling_factors: vec![0.5, 1.0, 2.0],
            expansion_mus: vec![0.125, 0.25, 0.5],
        }
    }
}

fn at(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(at(path, format!("{v} must be positive")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid.validate().map_err(|e| at("grid", e))?;
        let dim = self.grid.dim;
        let ProblemParams { s, q, eps } = self.params;
        if !(s > 0.0 && s < 1.0) {
            return Err(at("params.s", format!("s = {s} outside (0, 1)")));
        }
        FracParams::new(s, self.grid).map_err(|e| at("params.s", e))?;
        if !(q > 0.0 && q < 1.0) {
            return Err(at("params.q", format!("q = {q} outside (0, 1)")));
        }
        positive("params.eps", eps)?;
        self.h.validate(dim).map_err(|e| at("h", e))?;

        positive("bubble.mu", self.bubble.mu)?;
        if let Some(xi) = &self.bubble.xi {
            if xi.len() != dim {
                return Err(at("bubble.xi", format!("{} coordinates, expected {dim}", xi.len())));
            }
        }
        if let Some(c) = self.bubble.c_ns {
            positive("bubble.c_ns", c)?;
        }
        if let Some(c) = &self.cutoff {
            c.validate(dim).map_err(|e| at("cutoff", e))?;
        }
        self.solve.validate().map_err(|e| at("solve", e))?;

        if let Some(v) = self.sobolev.s_hat {
            positive("sobolev.s_hat", v)?;
        }
        if let Some(g) = &self.sobolev.grid {
            g.validate().map_err(|e| at("sobolev.grid", e))?;
            if g.dim != dim {
                return Err(at("sobolev.grid.dim", format!("{} differs from grid.dim = {dim}", g.dim)));
            }
        }

        self.verify
            .inequalities
            .validate()
            .map_err(|e| at("verify.inequalities", e))?;
        if self.verify.c_star_samples == 0 {
            return Err(at("verify.c_star_samples", "must be >= 1"));
        }
        if self.verify.cutoff_radii.is_empty() {
            return Err(at("verify.cutoff_radii", "needs at least one radius"));
        }
        for r in &self.verify.cutoff_radii {
            positive("verify.cutoff_radii", *r)?;
        }
        if let Some(c) = self.verify.cutoff_centers.iter().find(|c| c.len() != dim) {
            return Err(at(
                "verify.cutoff_centers",
                format!("{} coordinates, expected {dim}", c.len()),
            ));
        }

        let a = &self.appendix;
        let (a_s, a_dim) = (a.s.unwrap_or(s), a.dim.unwrap_or(dim));
        if !(a_dim >= 1 && a_s > 0.0 && a_s < 1.0 && a_dim as f64 > 2.0 * a_s) {
            return Err(at("appendix", format!("needs N > 2s, got N = {a_dim}, s = {a_s}")));
        }
        if a.r_list.len() < 3 {
            return Err(at(
                "appendix.r_list",
                format!("needs at least 3 radii, got {}", a.r_list.len()),
            ));
        }
        if let Some(r) = a.r_list.iter().find(|&&r| !(r > 1.0 && r.is_finite())) {
            return Err(at("appendix.r_list", format!("radius {r} must exceed 1")));
        }
        let ratio = a.r_list[1] / a.r_list[0];
        if !(ratio > 1.0
            && a.r_list
                .windows(2)
                .all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9))
        {
            return Err(at("appendix.r_list", "must be an increasing geometric sequence"));
        }
        if !(2..=64).contains(&a.resolution) {
            return Err(at("appendix.resolution", format!("{} outside 2..=64", a.resolution)));
        }
        positive("appendix.tolerance", a.tolerance)?;

        if self.concentration.n_max == 0 {
            return Err(at("concentration.n_max", "must be >= 1"));
        }
        positive("concentration.delta", self.concentration.delta)?;
        positive("concentration.escape_delta", self.concentration.escape_delta)?;

        positive("mp.t_max", self.mp.t_max)?;
        if self.mp.t_steps < 4 {
            return Err(at("mp.t_steps", format!("{} is below 4", self.mp.t_steps)));
        }

        let scan = &self.bubble_scan;
        for (name, list) in [
            ("bubble_scan.mus", &scan.mus),
            ("bubble_scan.scaling_factors", &scan.scaling_factors),
            ("bubble_scan.expansion_mus", &scan.expansion_mus),
        ] {
            if list.is_empty() {
                return Err(at(name, "must not be empty"));
            }
            for v in list {
                positive(name, *v)?;
            }
        }
        if scan.expansion_mus.len() < 2 {
            return Err(at("bubble_scan.expansion_mus", "a slope needs at least 2 scales"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
        if !value.is_object() {
            return Err(CliError::Config("config must be a JSON object".into()));
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Read and validate a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_json_str(&text)
}
