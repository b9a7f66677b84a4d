//! Run configuration: a TOML document with an optional section per concern.
//!
//! ```toml
//! command = "study"          # solve | verify | study | game
//! seed = 7                   # mandatory for sampling commands
//! output_dir = "out"
//!
//! [grid]                     # n, or nx and ny; alpha defaults to 0.5
//! n = 64
//! alpha = 0.5
//!
//! [solver]                   # all optional
//! scheme = "upwind"          # upwind | centered
//! tol = 1e-10
//! theta = 1.0
//! kind = "auto"              # auto | direct | iterative
//!
//! [source]                   # solve / verify: the right-hand side
//! kind = "forcing_sin_sin"
//!
//! [study]
//! kind = "convergence"       # convergence | energy | coercivity | inclusion | embedding | muckenhoupt
//! levels = [16, 32, 64, 128]
//!
//! [game]                     # see configs/benchmark_game.toml
//! ```

use std::path::PathBuf;

use degell::analysis::Thresholds;
use degell::fields::{FieldKind, FieldSpec, Manufactured};
use degell::{GameConfig, Grid, Scheme, SolverKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration problem, located as precisely as the input allows.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Verify,
    Study,
    Game,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Convergence,
    Energy,
    Coercivity,
    Inclusion,
    Embedding,
    Muckenhoupt,
}

impl StudyKind {
    pub fn is_sampling(&self) -> bool {
        matches!(
            self,
            StudyKind::Coercivity | StudyKind::Embedding | StudyKind::Muckenhoupt
        )
    }

    pub fn default_levels(&self) -> Vec<usize> {
        match self {
            StudyKind::Convergence | StudyKind::Energy => vec![16, 32, 64, 128],
            StudyKind::Inclusion => vec![16, 32, 64, 128, 256],
            StudyKind::Embedding => vec![64, 128],
            StudyKind::Coercivity => vec![64],
            StudyKind::Muckenhoupt => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default = "half")]
    pub alpha: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: None,
            nx: None,
            ny: None,
            alpha: half(),
        }
    }
}

impl GridSection {
    pub fn dims(&self) -> Option<(usize, usize)> {
        match (self.nx, self.ny, self.n) {
            (Some(nx), Some(ny), _) => Some((nx, ny)),
            (None, None, Some(n)) => Some((n, n)),
            (Some(nx), None, Some(n)) => Some((nx, n)),
            (None, Some(ny), Some(n)) => Some((n, ny)),
            _ => None,
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: Scheme,
    pub tol: f64,
    pub theta: f64,
    pub kind: SolverKind,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Upwind,
            tol: 1e-10,
            theta: 1.0,
            kind: SolverKind::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub kind: StudyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[serde(default)]
    pub manufactured: Manufactured,
    /// Sample count: test functions (coercivity, embedding) or balls (muckenhoupt).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `L^q` exponents of the embedding study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponents: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_radius: Option<f64>,
    /// Sources of the energy study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<FieldSpec>>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// Fully resolved configuration; echoed verbatim into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameConfig>,
    /// Keys that were absent and took their documented default.
    #[serde(default)]
    pub defaults_applied: Vec<String>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Keys with documented defaults, reported when absent.
const DEFAULTED: &[(&str, &str)] = &[
    ("", "output_dir"),
    ("grid", "alpha"),
    ("solver", "scheme"),
    ("solver", "tol"),
    ("solver", "theta"),
    ("solver", "kind"),
];

/// 1-based line of `key` inside `[section]` (top level when `section` is empty).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            continue;
        }
        let name = line
            .split('=')
            .next()
            .unwrap_or("")
            .trim()
            .trim_matches('"');
        if current == section && name == key && line.contains('=') {
            return Some(k + 1);
        }
    }
    None
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parse, default and validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        field: "<syntax>".into(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e: toml::de::Error| ConfigError {
        field: "<schema>".into(),
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    if !cfg.defaults_applied.is_empty() {
        return Err(ConfigError {
            field: "defaults_applied".into(),
            line: locate(text, "", "defaults_applied"),
            message: "is filled in by the tool, not read from input".into(),
        });
    }
    for (section, key) in DEFAULTED {
        let present = if section.is_empty() {
            table.contains_key(*key)
        } else {
            table
                .get(*section)
                .and_then(|s| s.as_table())
                .is_some_and(|s| s.contains_key(*key))
        };
        if !present {
            cfg.defaults_applied.push(if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            });
        }
    }
    validate(&cfg, text)?;
    Ok(cfg)
}

fn fail(text: &str, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        },
        line: locate(text, section, key),
        message: message.into(),
    }
}

/// Range checks mirroring the library's preconditions, reported against the
/// offending key.
pub fn validate(cfg: &RunConfig, text: &str) -> Result<(), ConfigError> {
    let alpha = cfg.grid.alpha;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(fail(
            text,
            "grid",
            "alpha",
            format!("must lie in (0, 1], got {alpha}"),
        ));
    }
    for key in ["n", "nx", "ny"] {
        let v = match key {
            "n" => cfg.grid.n,
            "nx" => cfg.grid.nx,
            _ => cfg.grid.ny,
        };
        if let Some(v) = v {
            if v < 2 {
                return Err(fail(
                    text,
                    "grid",
                    key,
                    format!("need at least 2 interior nodes, got {v}"),
                ));
            }
        }
    }
    if !(cfg.solver.tol > 0.0 && cfg.solver.tol < 1.0) {
        return Err(fail(
            text,
            "solver",
            "tol",
            format!("must lie in (0, 1), got {}", cfg.solver.tol),
        ));
    }
    if !(cfg.solver.theta >= 0.0 && cfg.solver.theta.is_finite()) {
        return Err(fail(
            text,
            "solver",
            "theta",
            format!("must be finite and >= 0, got {}", cfg.solver.theta),
        ));
    }
    match cfg.command {
        Command::Solve | Command::Verify => {
            if cfg.grid.dims().is_none() {
                return Err(fail(
                    text,
                    "grid",
                    "n",
                    "grid size missing: give n, or nx and ny",
                ));
            }
            if cfg.source.is_none() {
                return Err(fail(text, "", "source", "a [source] section is required"));
            }
            if cfg.command == Command::Verify && cfg.solver.theta == 0.0 {
                log::info!(
                    "theta = 0: the weighted residual reduces to the unweighted derivative form"
                );
            }
        }
        Command::Study => {
            let Some(study) = &cfg.study else {
                return Err(fail(text, "", "study", "a [study] section is required"));
            };
            if study.kind.is_sampling() && cfg.seed.is_none() {
                return Err(fail(
                    text,
                    "",
                    "seed",
                    "sampling studies need an explicit seed",
                ));
            }
            if let Some(levels) = &study.levels {
                if levels.iter().any(|&l| l < 2) || levels.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(fail(
                        text,
                        "study",
                        "levels",
                        "levels must be >= 2 and strictly increasing",
                    ));
                }
            }
            if let Some(q) = &study.exponents {
                if let Some(bad) = q.iter().find(|q| !(2.0..=4.0).contains(*q)) {
                    return Err(fail(
                        text,
                        "study",
                        "exponents",
                        format!("exponents must lie in [2, 4], got {bad}"),
                    ));
                }
            }
            if study.samples == Some(0) {
                return Err(fail(text, "study", "samples", "must be positive"));
            }
            if let Some(family) = &study.family {
                if family.iter().any(|f| f.kind == FieldKind::Zero) {
                    return Err(fail(
                        text,
                        "study",
                        "family",
                        "zero sources have no energy ratio",
                    ));
                }
            }
        }
        Command::Game => {
            let Some(game) = &cfg.game else {
                return Err(fail(text, "", "game", "a [game] section is required"));
            };
            if cfg.seed.is_none() {
                return Err(fail(
                    text,
                    "",
                    "seed",
                    "the game certification samples deviations and needs an explicit seed",
                ));
            }
            if let Err(e) = Grid::new(game.nx, game.ny, game.alpha) {
                return Err(fail(text, "game", "alpha", e.to_string()));
            }
            for (key, m) in [("m1", game.m1), ("m2", game.m2)] {
                if !(m >= 0.0 && m.is_finite()) {
                    return Err(fail(
                        text,
                        "game",
                        key,
                        format!("ball radius must be >= 0, got {m}"),
                    ));
                }
            }
            game.validate()
                .map_err(|e| fail(text, "game", "", e.to_string()))?;
        }
    }
    Ok(())
}

impl RunConfig {
    /// The game configuration with the run seed applied.
    pub fn game_config(&self) -> Option<GameConfig> {
        self.game.clone().map(|mut g| {
            if let Some(seed) = self.seed {
                g.seed = seed;
            }
            g
        })
    }

    /// Cap grid sizes: study levels above `n` are dropped, single-grid
    /// commands run on `n x n`.
    pub fn apply_level_override(&mut self, n: usize) {
        match self.command {
            Command::Study => {
                if let Some(study) = &mut self.study {
                    let mut levels = study
                        .levels
                        .clone()
                        .unwrap_or_else(|| study.kind.default_levels());
                    levels.retain(|&l| l <= n);
                    study.levels = Some(levels);
                }
            }
            Command::Solve | Command::Verify => {
                self.grid.n = Some(n);
                self.grid.nx = None;
                self.grid.ny = None;
            }
            Command::Game => {
                if let Some(g) = &mut self.game {
                    g.nx = n;
                    g.ny = n;
                }
            }
        }
    }
}
