//! Flat key-value scenario files.
//!
//! The format is line-oriented and diff-friendly: `[section]` headers,
//! `key = value` entries with whitespace-separated numbers, `#` comments.
//! Emission is canonical (fixed section and key order, shortest round-trip
//! float formatting), so emit -> parse -> emit is byte-identical. Only
//! constant coefficients are representable; time-varying maps and custom
//! jump-size samplers exist in code only.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use apg_core::linalg::Mat;
use apg_core::*;
use std::result::Result;
use thiserror::Error;

use crate::presets::Scenario;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing key `{key}` in section [{section}]")]
    Missing { section: String, key: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                line,
                message: "unterminated section header".into(),
            })?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Parse {
            line,
            message: format!("expected `key = value`, got `{trimmed}`"),
        })?;
        if current.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "entry before any [section] header".into(),
            });
        }
        let prev = sections
            .get_mut(&current)
            .expect("section exists")
            .insert(
                key.trim().to_string(),
                (line, value.trim().to_string()),
            );
        if prev.is_some() {
            return Err(ConfigError::Parse {
                line,
                message: format!("duplicate key `{}`", key.trim()),
            });
        }
    }
    Ok(sections)
}

struct SectionView<'a> {
    name: &'a str,
    entries: &'a BTreeMap<String, (usize, String)>,
}

impl<'a> SectionView<'a> {
    fn get(&self, key: &str) -> Result<&'a str, ConfigError> {
        self.entries
            .get(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| ConfigError::Missing {
                section: self.name.to_string(),
                key: key.to_string(),
            })
    }

    fn opt(&self, key: &str) -> Option<&'a str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| {
            ConfigError::Invalid(format!(
                "[{}] {key}: cannot parse `{raw}`",
                self.name
            ))
        })
    }

    fn floats(&self, key: &str, expect: usize) -> Result<Vec<f64>, ConfigError> {
        let raw = self.get(key)?;
        let vals: Result<Vec<f64>, _> = raw.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|_| {
            ConfigError::Invalid(format!("[{}] {key}: cannot parse `{raw}`", self.name))
        })?;
        if vals.len() != expect {
            return Err(ConfigError::Invalid(format!(
                "[{}] {key}: expected {expect} numbers, got {}",
                self.name,
                vals.len()
            )));
        }
        Ok(vals)
    }
}

fn section<'a>(sections: &'a Sections, name: &'a str) -> Result<SectionView<'a>, ConfigError> {
    sections
        .get(name)
        .map(|entries| SectionView { name, entries })
        .ok_or_else(|| ConfigError::Invalid(format!("missing section [{name}]")))
}

/// Parse a scenario from config text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let sections = parse_sections(text)?;
    let game_sec = section(&sections, "game")?;
    let n: usize = game_sec.scalar("players")?;
    let d: usize = game_sec.scalar("state_dim")?;
    let k: usize = game_sec.scalar("action_dim")?;
    let brownian: usize = game_sec.scalar("brownian_dim")?;
    let horizon: f64 = game_sec.scalar("horizon")?;
    let steps: usize = game_sec.scalar("steps")?;
    let control_cap: f64 = game_sec.scalar("control_cap")?;
    if n == 0 || d == 0 || k == 0 {
        return Err(ConfigError::Invalid(
            "players, state_dim and action_dim must be positive".into(),
        ));
    }

    let x0 = game_sec.floats("x0", n * d)?;
    let initial = match game_sec.opt("x0_std") {
        Some(_) => InitialStates::GaussianIid {
            mean: x0,
            std_dev: game_sec.floats("x0_std", n * d)?,
        },
        None => InitialStates::Fixed(x0),
    };

    let mut drift = Vec::with_capacity(n);
    let mut diffusion = Vec::with_capacity(n);
    for i in 0..n {
        let b = game_sec.floats(&format!("drift_{}", i + 1), d * k)?;
        drift.push(TimeMatrix::constant(Mat {
            rows: d,
            cols: k,
            data: b,
        }));
        let s = game_sec.floats(&format!("diffusion_{}", i + 1), d * brownian)?;
        diffusion.push(TimeMatrix::constant(Mat {
            rows: d,
            cols: brownian,
            data: s,
        }));
    }

    let mut jumps = Vec::new();
    let mut j = 1usize;
    while let Some(entries) = sections.get(&format!("jump.{j}")) {
        let sec = SectionView {
            name: "jump",
            entries,
        };
        let intensity: f64 = sec.scalar("intensity")?;
        let mut loadings = Vec::with_capacity(n);
        for i in 0..n {
            loadings.push(TimeVec::Constant(
                sec.floats(&format!("loading_{}", i + 1), d)?,
            ));
        }
        jumps.push(JumpSource {
            intensity,
            loadings,
            size: JumpSizeModel::Unit,
        });
        j += 1;
    }

    let cost_sec = section(&sections, "cost")?;
    let kind = cost_sec.get("kind")?;
    if kind != "crowd" {
        return Err(ConfigError::Invalid(format!(
            "unsupported cost kind `{kind}` (config files support `crowd`)"
        )));
    }
    let kernel = parse_kernel(cost_sec.get("kernel")?)?;
    let cost = CrowdCost {
        control_weights: cost_sec.floats("control_weight", n)?,
        kernel,
        interaction: cost_sec.floats("interaction", n * n)?,
        terminal_weights: cost_sec.floats("terminal_weight", n)?,
        targets: {
            let mut t = Vec::with_capacity(n * d);
            for i in 0..n {
                t.extend(cost_sec.floats(&format!("target_{}", i + 1), d)?);
            }
            t
        },
    };

    let train_sec = section(&sections, "train")?;
    let train = TrainConfig {
        iterations: train_sec.scalar("iterations")?,
        batch: train_sec.scalar("batch")?,
        grid: TimeGrid::new(horizon, steps)?,
        learning_rate: train_sec.scalar("learning_rate")?,
        plateau: PlateauConfig {
            patience: train_sec.scalar("patience")?,
            factor: train_sec.scalar("factor")?,
            threshold: train_sec.scalar("threshold")?,
            min_rate: train_sec.scalar("min_rate")?,
        },
        seed: train_sec.scalar("seed")?,
        quadrature_nodes: train_sec.scalar("quadrature_nodes")?,
        resample: match train_sec.get("resample")? {
            "fresh" => Resample::Fresh,
            "fixed" => Resample::Fixed,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "resample must be `fresh` or `fixed`, got `{other}`"
                )))
            }
        },
        grad_clip: match train_sec.get("grad_clip")? {
            "none" => None,
            raw => Some(raw.parse().map_err(|_| {
                ConfigError::Invalid(format!("grad_clip: cannot parse `{raw}`"))
            })?),
        },
    };

    let game = GameSpec {
        players: n,
        state_dim: d,
        action_dim: k,
        brownian_dim: brownian,
        drift,
        diffusion,
        jumps,
        initial,
        cost: CostModel::Crowd(cost),
        control_cap,
    };
    let scenario = Scenario { game, train };
    scenario.game.validate(&scenario.train.grid)?;
    scenario.train.validate()?;
    Ok(scenario)
}

fn parse_kernel(raw: &str) -> Result<Kernel, ConfigError> {
    let parts: Vec<&str> = raw.split_whitespace().collect();
    match parts.as_slice() {
        ["quadratic"] => Ok(Kernel::Quadratic),
        ["gaussian", a, r] => Ok(Kernel::Gaussian {
            amplitude: a
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("kernel amplitude `{a}`")))?,
            rate: r
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("kernel rate `{r}`")))?,
        }),
        ["smoothed_indicator", r, w] => Ok(Kernel::SmoothedIndicator {
            radius: r
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("kernel radius `{r}`")))?,
            delta: w
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("kernel width `{w}`")))?,
        }),
        _ => Err(ConfigError::Invalid(format!(
            "kernel must be `quadratic`, `gaussian A RHO` or `smoothed_indicator R DELTA`, got `{raw}`"
        ))),
    }
}

fn fmt_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn kernel_text(kernel: &Kernel) -> String {
    match kernel {
        Kernel::Quadratic => "quadratic".to_string(),
        Kernel::Gaussian { amplitude, rate } => format!("gaussian {amplitude} {rate}"),
        Kernel::SmoothedIndicator { radius, delta } => {
            format!("smoothed_indicator {radius} {delta}")
        }
    }
}

/// Canonical text for a scenario. Fails for games outside the config
/// format's reach (callback costs, time-varying coefficients, non-unit jump
/// sizes).
pub fn emit_scenario(scenario: &Scenario) -> Result<String, ConfigError> {
    let game = &scenario.game;
    let crowd = game.cost.as_crowd().ok_or_else(|| {
        ConfigError::Invalid("callback costs cannot be written to config files".into())
    })?;
    let n = game.players;
    let d = game.state_dim;
    let mut out = String::new();
    writeln!(out, "[game]").unwrap();
    writeln!(out, "players = {n}").unwrap();
    writeln!(out, "state_dim = {d}").unwrap();
    writeln!(out, "action_dim = {}", game.action_dim).unwrap();
    writeln!(out, "brownian_dim = {}", game.brownian_dim).unwrap();
    writeln!(out, "horizon = {}", scenario.train.grid.horizon()).unwrap();
    writeln!(out, "steps = {}", scenario.train.grid.steps()).unwrap();
    writeln!(out, "control_cap = {}", game.control_cap).unwrap();
    match &game.initial {
        InitialStates::Fixed(x0) => {
            writeln!(out, "x0 = {}", fmt_floats(x0)).unwrap();
        }
        InitialStates::GaussianIid { mean, std_dev } => {
            writeln!(out, "x0 = {}", fmt_floats(mean)).unwrap();
            writeln!(out, "x0_std = {}", fmt_floats(std_dev)).unwrap();
        }
    }
    for (i, b) in game.drift.iter().enumerate() {
        let m = constant_matrix(b, "drift")?;
        writeln!(out, "drift_{} = {}", i + 1, fmt_floats(&m.data)).unwrap();
    }
    for (i, s) in game.diffusion.iter().enumerate() {
        let m = constant_matrix(s, "diffusion")?;
        writeln!(out, "diffusion_{} = {}", i + 1, fmt_floats(&m.data)).unwrap();
    }
    for (j, src) in game.jumps.iter().enumerate() {
        if !matches!(src.size, JumpSizeModel::Unit) {
            return Err(ConfigError::Invalid(
                "jump-size samplers cannot be written to config files".into(),
            ));
        }
        writeln!(out).unwrap();
        writeln!(out, "[jump.{}]", j + 1).unwrap();
        writeln!(out, "intensity = {}", src.intensity).unwrap();
        for (i, l) in src.loadings.iter().enumerate() {
            match l {
                TimeVec::Constant(v) => {
                    writeln!(out, "loading_{} = {}", i + 1, fmt_floats(v)).unwrap()
                }
                TimeVec::Varying { .. } => {
                    return Err(ConfigError::Invalid(
                        "time-varying jump loadings cannot be written to config files".into(),
                    ))
                }
            }
        }
    }
    writeln!(out).unwrap();
    writeln!(out, "[cost]").unwrap();
    writeln!(out, "kind = crowd").unwrap();
    writeln!(out, "kernel = {}", kernel_text(&crowd.kernel)).unwrap();
    writeln!(out, "control_weight = {}", fmt_floats(&crowd.control_weights)).unwrap();
    writeln!(
        out,
        "terminal_weight = {}",
        fmt_floats(&crowd.terminal_weights)
    )
    .unwrap();
    writeln!(out, "interaction = {}", fmt_floats(&crowd.interaction)).unwrap();
    for i in 0..n {
        writeln!(
            out,
            "target_{} = {}",
            i + 1,
            fmt_floats(&crowd.targets[i * d..(i + 1) * d])
        )
        .unwrap();
    }
    let t = &scenario.train;
    writeln!(out).unwrap();
    writeln!(out, "[train]").unwrap();
    writeln!(out, "iterations = {}", t.iterations).unwrap();
    writeln!(out, "batch = {}", t.batch).unwrap();
    writeln!(out, "learning_rate = {}", t.learning_rate).unwrap();
    writeln!(out, "patience = {}", t.plateau.patience).unwrap();
    writeln!(out, "factor = {}", t.plateau.factor).unwrap();
    writeln!(out, "threshold = {}", t.plateau.threshold).unwrap();
    writeln!(out, "min_rate = {}", t.plateau.min_rate).unwrap();
    writeln!(out, "seed = {}", t.seed).unwrap();
    writeln!(out, "quadrature_nodes = {}", t.quadrature_nodes).unwrap();
    writeln!(
        out,
        "resample = {}",
        match t.resample {
            Resample::Fresh => "fresh",
            Resample::Fixed => "fixed",
        }
    )
    .unwrap();
    match t.grad_clip {
        None => writeln!(out, "grad_clip = none").unwrap(),
        Some(c) => writeln!(out, "grad_clip = {c}").unwrap(),
    }
    Ok(out)
}

fn constant_matrix<'a>(m: &'a TimeMatrix, what: &str) -> Result<&'a Mat, ConfigError> {
    match m {
        TimeMatrix::Constant(m) => Ok(m),
        TimeMatrix::Varying { .. } => Err(ConfigError::Invalid(format!(
            "time-varying {what} cannot be written to config files"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn presets_round_trip_byte_identically() {
        for name in presets::PRESET_NAMES {
            let scenario = presets::preset(name).unwrap();
            let text = emit_scenario(&scenario).unwrap();
            let parsed = parse_scenario(&text).unwrap();
            let again = emit_scenario(&parsed).unwrap();
            assert_eq!(text, again, "round trip drift for preset {name}");
        }
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(matches!(
            parse_scenario("players = 3"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(parse_scenario("[game]\nplayers 3\n").is_err());
        let dup = "[game]\nplayers = 2\nplayers = 3\n";
        assert!(matches!(
            parse_scenario(dup),
            Err(ConfigError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn missing_keys_are_reported() {
        let text = "[game]\nplayers = 1\n";
        match parse_scenario(text) {
            Err(ConfigError::Missing { section, key }) => {
                assert_eq!(section, "game");
                assert_eq!(key, "state_dim");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaussian_initial_states_round_trip() {
        let mut scenario = presets::lqr_oracle();
        scenario.game.initial = InitialStates::GaussianIid {
            mean: vec![0.1, -0.2],
            std_dev: vec![0.05, 0.25],
        };
        let text = emit_scenario(&scenario).unwrap();
        let parsed = parse_scenario(&text).unwrap();
        match &parsed.game.initial {
            InitialStates::GaussianIid { mean, std_dev } => {
                assert_eq!(mean, &vec![0.1, -0.2]);
                assert_eq!(std_dev, &vec![0.05, 0.25]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(text, emit_scenario(&parsed).unwrap());
    }
}
