use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use twistprop::linalg::RMat;
use twistprop::twisted::{Grid, MuGrid};

use crate::CliError;

/// One experiment, read from a TOML file. Sections other than `grid`,
/// `mu_grid` and `times` fall back to their defaults when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Algebra file, relative to the config file.
    pub algebra: String,
    #[serde(default)]
    pub seed: u64,
    /// Rows of the symmetric matrix `A`; the identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    pub grid: GridConfig,
    pub mu_grid: MuGridConfig,
    pub times: Times,
    #[serde(default)]
    pub envelope: Envelope,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub frame: FrameOpts,
    #[serde(default)]
    pub kernel: KernelOpts,
    #[serde(default)]
    pub propagate: PropagateOpts,
    #[serde(default)]
    pub heat: HeatOpts,
    #[serde(default)]
    pub hardy: HardyOpts,
    #[serde(default)]
    pub uniqueness: UniquenessOpts,
}

/// Half-widths and point counts shared by every axis of `x` and of `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_half_width: f64,
    pub x_points: usize,
    pub u_half_width: f64,
    pub u_points: usize,
}

impl GridConfig {
    fn check(&self) -> Result<(), CliError> {
        if !(self.x_half_width > 0.0 && self.u_half_width > 0.0) {
            return Err(CliError::Config("grid half-widths must be positive".into()));
        }
        if [self.x_points, self.u_points].iter().any(|&n| n == 0 || n % 2 == 1) {
            return Err(CliError::Config("grid point counts must be even and positive".into()));
        }
        Ok(())
    }

    pub fn x(&self, m: usize) -> Result<Grid, CliError> {
        Ok(Grid::uniform(m, self.x_half_width, self.x_points)?)
    }

    pub fn u(&self, l: usize) -> Result<Grid, CliError> {
        Ok(Grid::uniform(l, self.u_half_width, self.u_points)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuGridConfig {
    pub half_width: f64,
    pub points: usize,
    #[serde(default = "default_exclusion")]
    pub exclusion: f64,
}

/// Physical times: `t` for `e^{itL_A}`, `T` for the uniqueness experiment,
/// `s` for the heat kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Times {
    pub t: f64,
    #[serde(rename = "T")]
    pub t_big: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Envelope {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub ceiling: f64,
}

impl Default for Envelope {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0, delta: 0.1, ceiling: 1e6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub eps: f64,
    pub eps_prime: f64,
    pub eps0: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { eps: 0.5, eps_prime: 0.1, eps0: 0.25 }
    }
}

/// Central forms to dump; the Moore-Wolf witness when empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameOpts {
    pub mu: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelOpts {
    pub mu: Vec<Vec<f64>>,
    /// Overrides `times.t`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kernel,
    Oracle,
}

/// Initial datum `exp(-|x - center|^2 / (2 width^2) - |u|^2 / (2 u_width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagateOpts {
    /// Output times; `times.t` when empty.
    pub times: Vec<f64>,
    pub method: Method,
    pub width: f64,
    pub u_width: f64,
    pub center: Vec<f64>,
    pub dump_fields: bool,
    /// Overrides `[grid]`; every slice is propagated, so a smaller box pays off.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Overrides `[mu_grid]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_grid: Option<MuGridConfig>,
}

impl Default for PropagateOpts {
    fn default() -> Self {
        Self { times: Vec::new(), method: Method::Kernel, width: 1.0, u_width: 1.0, center: Vec::new(), dump_fields: false, grid: None, mu_grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatOpts {
    /// Heat times; `times.s` when empty.
    pub s: Vec<f64>,
    pub box_doubling: bool,
    pub eps: f64,
    pub k_up: f64,
    pub k_lo: f64,
}

impl Default for HeatOpts {
    fn default() -> Self {
        Self { s: Vec::new(), box_doubling: true, eps: 0.25, k_up: 1.0, k_lo: 2.0 * PI }
    }
}

/// Gaussian test data `exp(-|x|^2 / 4 width)` for both certifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardyOpts {
    pub alpha: f64,
    pub beta: f64,
    pub width: f64,
    pub half_width: f64,
    pub points: usize,
    pub matrix_points: usize,
}

impl Default for HardyOpts {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, width: 1.0, half_width: 20.0, points: 256, matrix_points: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Heat kernel `h_s` as closed-form slices, optionally evolved first.
    Heat,
    /// A sampled Gaussian over the group.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessOpts {
    pub data: DataKind,
    /// Heat data is replaced by `e^{i evolve L} h_s`.
    pub evolve: f64,
    /// Rate of the Gaussian datum; `envelope.a` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Grids for the non-MW lift: `xi` and `s` axes, and the lifted mu-grid.
    pub lift_half_width: f64,
    pub lift_points: usize,
    pub lift_mu_half_width: f64,
    pub lift_mu_points: usize,
}

impl Default for UniquenessOpts {
    fn default() -> Self {
        Self {
            data: DataKind::Heat,
            evolve: 0.0,
            width: None,
            lift_half_width: 3.0,
            lift_points: 4,
            lift_mu_half_width: 2.0,
            lift_mu_points: 4,
        }
    }
}

impl MuGridConfig {
    fn check(&self) -> Result<(), CliError> {
        if !(self.half_width > 0.0) || self.points < 2 {
            return Err(CliError::Config("mu_grid needs a positive half-width and at least two points".into()));
        }
        Ok(())
    }

    pub fn grid(&self, l: usize) -> Result<MuGrid, CliError> {
        Ok(MuGrid::symmetric(l, self.half_width, self.points, self.exclusion)?)
    }
}

fn default_exclusion() -> f64 {
    1e-6
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates; errors cite the offending line.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
            CliError::Config(format!("line {line}: {}", e.message()))
        })?;
        cfg.check_ranges()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    /// SHA-256 of the canonical serialisation, as hex.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    fn check_ranges(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(format!("{what} must be positive")));
        self.grid.check()?;
        self.mu_grid.check()?;
        if let Some(g) = &self.propagate.grid {
            g.check()?;
        }
        if let Some(g) = &self.propagate.mu_grid {
            g.check()?;
        }
        if !(self.times.s > 0.0) {
            return bad("times.s");
        }
        let e = &self.envelope;
        if !(e.a > 0.0 && e.b > 0.0 && e.delta >= 0.0 && e.ceiling > 0.0) {
            return Err(CliError::Config("envelope rates and ceiling must be positive, delta nonnegative".into()));
        }
        let h = &self.hardy;
        if !(h.alpha > 0.0 && h.beta > 0.0 && h.width > 0.0 && h.half_width > 0.0) {
            return bad("hardy alpha, beta, width and half_width");
        }
        if !(self.propagate.width > 0.0 && self.propagate.u_width > 0.0) {
            return bad("propagate widths");
        }
        if self.heat.s.iter().any(|&s| !(s > 0.0)) {
            return bad("heat times");
        }
        if let Some(rows) = &self.a {
            if rows.is_empty() || rows.iter().any(|r| r.len() != rows.len()) {
                return Err(CliError::Config("A must be a square list of rows".into()));
            }
        }
        Ok(())
    }

    /// Reads a config and checks that the algebra file exists.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let alg = path.parent().unwrap_or(Path::new(".")).join(&cfg.algebra);
        if !alg.is_file() {
            return Err(CliError::Config(format!("algebra file {} does not exist", alg.display())));
        }
        Ok((cfg, alg))
    }

    pub fn a_matrix(&self, m: usize) -> Result<RMat, CliError> {
        match &self.a {
            None => Ok(RMat::identity(m, m)),
            Some(rows) if rows.len() == m => Ok(RMat::from_fn(m, m, |i, j| rows[i][j])),
            Some(rows) => Err(CliError::Config(format!("A is {0}x{0} but the algebra has m = {m}", rows.len()))),
        }
    }

    pub fn x_grid(&self, m: usize) -> Result<Grid, CliError> {
        self.grid.x(m)
    }

    pub fn u_grid(&self, l: usize) -> Result<Grid, CliError> {
        self.grid.u(l)
    }

    pub fn mu(&self, l: usize) -> Result<MuGrid, CliError> {
        self.mu_grid.grid(l)
    }
}
