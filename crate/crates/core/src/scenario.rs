//! Scenario configuration: the true intensity as a sum of Gaussian
//! observer peaks, the grids, the start point and the learning constants.
//!
//! Configs are TOML with three parts: `[scenario]`, `[algorithm]` and one
//! `[[peak]]` block per observer. Every key has a default, so a file only
//! needs the values it changes.
//!
//! ```toml
//! [scenario]
//! name = "two observers"
//! x0 = [0.5, 0.45]
//! episodes = 15000
//!
//! [algorithm]
//! prior_mean = -0.693
//!
//! [[peak]]
//! center = [0.05, 0.5]
//! amplitude = 30.0
//! width = 0.25
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eikonal::Speed;
use crate::error::{Error, Result};
use crate::gp::GpHyper;
use crate::grid::{Domain, ObsGrid, PdeGrid, Point, ScalarField};

const BUNDLED: [(&str, &str); 3] = [
    ("fig1", include_str!("../scenarios/fig1.toml")),
    ("fig2", include_str!("../scenarios/fig2.toml")),
    ("fig3", include_str!("../scenarios/fig3.toml")),
];

/// One observer's contribution `A exp(-|x - c|² / w²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverPeak {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub width: f64,
}

impl ObserverPeak {
    pub fn value(&self, p: Point) -> f64 {
        let d = p - Point::new(self.center[0], self.center[1]);
        self.amplitude * (-d.norm_sq() / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Observation cells per side.
    pub obs_grid: usize,
    /// PDE nodes per side.
    pub pde_grid: usize,
    pub x0: [f64; 2],
    /// Constant background intensity `k0`.
    pub background: f64,
    /// Uniform evader speed.
    pub speed: f64,
    pub episodes: u64,
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            name: "unnamed".into(),
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
            obs_grid: 20,
            pde_grid: 101,
            x0: [0.5, 0.5],
            background: 0.01,
            speed: 1.0,
            episodes: 15_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSection {
    pub gamma: f64,
    pub k_min: f64,
    pub epsilon: f64,
    pub n_min: u64,
    /// Minimum accumulated time per cell; defaults to the time needed to
    /// cross a cell diagonal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    /// Constant prior mean of `log K`.
    pub prior_mean: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Use `sqrt(ρ)` instead of `ρ` in the GP confidence bonus.
    pub bonus_uses_sqrt: bool,
    /// Hyperparameters are re-tuned at episodes `t > tune_every` with
    /// `t ≡ 1 (mod tune_every)`; 0 disables tuning.
    pub tune_every: u64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection {
            gamma: 0.01,
            k_min: 1e-3,
            epsilon: 1e-3,
            n_min: 20,
            t_min: None,
            prior_mean: 0.5f64.ln(),
            alpha: 1.0,
            beta: 0.2,
            bonus_uses_sqrt: false,
            tune_every: 1000,
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub algorithm: AlgorithmSection,
    #[serde(rename = "peak")]
    pub peaks: Vec<ObserverPeak>,
}

impl Config {
    /// Parses TOML text. Syntax errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(0);
            Error::Config { line, message: e.message().to_string() }
        })
    }

    /// Reads a config file, or one of the bundled scenarios (`fig1`,
    /// `fig2`, `fig3`) when no file exists at `path`.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = if path.exists() {
            std::fs::read_to_string(path)?
        } else {
            let name = path.to_string_lossy();
            match bundled(name.trim_end_matches(".toml")) {
                Some(t) => t.to_string(),
                None => return Err(Error::Config { line: 0, message: format!("no config file at {name}") }),
            }
        };
        let cfg = Config::parse(&text)?;
        Ok((cfg, text))
    }

    pub fn bundled(name: &str) -> Option<Self> {
        bundled(name).map(|t| Config::parse(t).expect("bundled scenarios parse"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Semantic checks. `source` is the text the config came from, used
    /// only to point diagnostics at a line.
    pub fn validate(&self, source: Option<&str>) -> Result<()> {
        let fail = |key: &str, message: String| Error::Config {
            line: source.map(|s| line_of_key(s, key)).unwrap_or(0),
            message,
        };
        let s = &self.scenario;
        let a = &self.algorithm;
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(fail(key, format!("{key} must be positive, got {v}")))
            }
        };
        if !(s.upper[0] > s.lower[0] && s.upper[1] > s.lower[1]) {
            return Err(fail("upper", "upper corner must exceed lower corner".into()));
        }
        if (s.upper[0] - s.lower[0] - (s.upper[1] - s.lower[1])).abs() > 1e-12 {
            return Err(fail("upper", "domain must be square".into()));
        }
        if s.obs_grid == 0 {
            return Err(fail("obs_grid", "obs_grid must be at least 1".into()));
        }
        if s.pde_grid < 3 {
            return Err(fail("pde_grid", "pde_grid must be at least 3".into()));
        }
        let x0 = Point::new(s.x0[0], s.x0[1]);
        let inside = x0.x > s.lower[0] && x0.x < s.upper[0] && x0.y > s.lower[1] && x0.y < s.upper[1];
        if !inside {
            return Err(fail("x0", format!("x0 = ({}, {}) must lie strictly inside the domain", x0.x, x0.y)));
        }
        if !(s.background.is_finite() && s.background >= 0.0) {
            return Err(fail("background", "background must be nonnegative".into()));
        }
        if s.background == 0.0 && self.peaks.is_empty() {
            return Err(fail("background", "intensity is identically zero: add a peak or a background".into()));
        }
        positive("speed", s.speed)?;
        if s.episodes == 0 {
            return Err(fail("episodes", "episodes must be at least 1".into()));
        }
        if !(a.gamma > 0.0 && a.gamma < 1.0) {
            return Err(fail("gamma", format!("gamma must lie in (0, 1), got {}", a.gamma)));
        }
        positive("k_min", a.k_min)?;
        positive("epsilon", a.epsilon)?;
        if let Some(t) = a.t_min {
            positive("t_min", t)?;
        }
        positive("alpha", a.alpha)?;
        positive("beta", a.beta)?;
        if !a.prior_mean.is_finite() {
            return Err(fail("prior_mean", "prior_mean must be finite".into()));
        }
        for (k, p) in self.peaks.iter().enumerate() {
            if !(p.amplitude.is_finite() && p.amplitude > 0.0 && p.width.is_finite() && p.width > 0.0) {
                let line = source.map(|src| line_of_peak(src, k)).unwrap_or(0);
                return Err(Error::Config {
                    line,
                    message: format!("peak {} needs positive amplitude and width", k + 1),
                });
            }
            if !(p.center[0].is_finite() && p.center[1].is_finite()) {
                let line = source.map(|src| line_of_peak(src, k)).unwrap_or(0);
                return Err(Error::Config { line, message: format!("peak {} has a non-finite center", k + 1) });
            }
        }
        Ok(())
    }
}

/// Text of a bundled scenario.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |k| k + 1)
}

fn line_of_peak(text: &str, index: usize) -> usize {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == "[[peak]]")
        .nth(index)
        .map_or(0, |(k, _)| k + 1)
}

/// `K(x) = k0 + Σ A_p exp(-|x - c_p|² / w_p²)` at every grid node.
pub fn build_intensity(peaks: &[ObserverPeak], k0: f64, grid: &PdeGrid) -> Result<ScalarField> {
    if !(k0.is_finite() && k0 >= 0.0) {
        return Err(Error::contract("background intensity must be nonnegative"));
    }
    if peaks.iter().any(|p| !(p.amplitude > 0.0 && p.width > 0.0)) {
        return Err(Error::contract("peaks need positive amplitude and width"));
    }
    if peaks.is_empty() && k0 == 0.0 {
        return Err(Error::contract("intensity is identically zero"));
    }
    Ok(ScalarField::from_fn(*grid, |p| {
        k0 + peaks.iter().map(|pk| pk.value(p)).sum::<f64>()
    }))
}

/// A validated config with its grids and true intensity built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: Config,
    pub obs_grid: ObsGrid,
    pub pde_grid: PdeGrid,
    pub x0: Point,
    pub speed: Speed,
    pub true_k: ScalarField,
}

impl Scenario {
    pub fn from_config(config: Config) -> Result<Self> {
        config.validate(None)?;
        Self::build(config)
    }

    fn build(config: Config) -> Result<Self> {
        let s = &config.scenario;
        let domain = Domain::new(Point::new(s.lower[0], s.lower[1]), Point::new(s.upper[0], s.upper[1]))?;
        let obs_grid = ObsGrid::new(domain, s.obs_grid)?;
        let pde_grid = PdeGrid::new(domain, s.pde_grid)?;
        let true_k = build_intensity(&config.peaks, s.background, &pde_grid)?;
        Ok(Scenario {
            obs_grid,
            pde_grid,
            x0: Point::new(s.x0[0], s.x0[1]),
            speed: Speed::Uniform(s.speed),
            true_k,
            config,
        })
    }

    pub fn bundled(name: &str) -> Option<Self> {
        Config::bundled(name).map(|c| Scenario::from_config(c).expect("bundled scenarios validate"))
    }

    pub fn episodes(&self) -> u64 {
        self.config.scenario.episodes
    }

    /// Same scenario with a different episode count; zero is allowed here
    /// and yields empty runs.
    pub fn with_episodes(mut self, episodes: u64) -> Self {
        self.config.scenario.episodes = episodes;
        self
    }

    pub fn with_true_intensity(mut self, k: ScalarField) -> Result<Self> {
        if k.grid() != &self.pde_grid || !k.values().iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::contract("true intensity must be a nonnegative field on the PDE grid"));
        }
        self.true_k = k;
        Ok(self)
    }

    pub fn algorithm(&self) -> &AlgorithmSection {
        &self.config.algorithm
    }

    pub fn t_min(&self) -> f64 {
        self.config.algorithm.t_min.unwrap_or_else(|| {
            2f64.sqrt() * self.obs_grid.cell_width() / self.config.scenario.speed
        })
    }

    pub fn initial_hyper(&self) -> GpHyper {
        let a = &self.config.algorithm;
        GpHyper { alpha: a.alpha, beta: a.beta, mean: a.prior_mean }
    }

    /// Path-tracer step: half the PDE spacing.
    pub fn h_path(&self) -> f64 {
        self.pde_grid.spacing() / 2.0
    }
}
