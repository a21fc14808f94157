//! Line-oriented experiment configuration: `[section]` headers followed by
//! `key = value` lines; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::poly::UnivariatePoly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("missing required field {0}")]
    Missing(String),
    #[error("invalid value for {field}: {msg}")]
    Invalid { field: String, msg: String },
}

impl ConfigError {
    fn invalid(field: &str, msg: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Calculus,
    Cd,
    Contraction,
    Curvature,
    Evi,
    Gradient,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Calculus,
        Suite::Cd,
        Suite::Contraction,
        Suite::Curvature,
        Suite::Evi,
        Suite::Gradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Calculus => "calculus",
            Suite::Cd => "cd",
            Suite::Contraction => "contraction",
            Suite::Curvature => "curvature",
            Suite::Evi => "evi",
            Suite::Gradient => "gradient",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceConfig {
    Chain {
        rates_file: PathBuf,
    },
    Grid {
        a: f64,
        b: f64,
        n: usize,
        potential: UnivariatePoly,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureSetting {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialMeasure {
    /// `m` restricted to `x < 0`, normalized.
    LeftHalf,
    /// Normalized `m`.
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub output: PathBuf,
    pub space: SpaceConfig,
    pub curvature: CurvatureSetting,
    pub t_list: Vec<f64>,
    pub alpha_list: Vec<f64>,
    pub p_list: Vec<f64>,
    pub transport_x: f64,
    pub transport_y: f64,
    pub evi_delta: f64,
    pub evi_mu0: InitialMeasure,
    pub evi_t_list: Vec<f64>,
    pub cd_t_list: Vec<f64>,
    pub cd_shift: f64,
    pub gradient_f: UnivariatePoly,
    pub calculus_count: usize,
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

const KNOWN: &[(&str, &[&str])] = &[
    ("run", &["suites", "seed", "output"]),
    ("space", &["kind", "a", "b", "n", "potential", "rates_file"]),
    ("curvature", &["k"]),
    ("times", &["t_list", "alpha_list", "p_list"]),
    ("transport", &["x", "y"]),
    ("evi", &["delta", "mu0", "t_list"]),
    ("cd", &["t_list", "shift"]),
    ("gradient", &["f"]),
    ("calculus", &["count"]),
];

fn parse_sections(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or(ConfigError::Syntax {
                line: line_no,
                msg: "unterminated section header".into(),
            })?;
            let name = name.trim().to_string();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("unknown section [{name}]"),
                });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            });
        };
        let Some(section) = current.as_ref() else {
            return Err(ConfigError::Syntax {
                line: line_no,
                msg: "key outside of any section".into(),
            });
        };
        let key = key.trim().to_string();
        let allowed = KNOWN
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(format!("{section}.{key}")));
        }
        let previous = sections
            .get_mut(section)
            .expect("section registered")
            .insert(key.clone(), (line_no, value.trim().to_string()));
        if previous.is_some() {
            return Err(ConfigError::Syntax {
                line: line_no,
                msg: format!("duplicate key {section}.{key}"),
            });
        }
    }
    Ok(sections)
}

struct Fields<'a> {
    sections: &'a Sections,
}

impl Fields<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)?
            .get(key)
            .map(|(_, v)| v.as_str())
    }

    fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default),
            Some(v) => parse_real(v).ok_or_else(|| {
                ConfigError::invalid(
                    &format!("{section}.{key}"),
                    format!("`{v}` is not a number"),
                )
            }),
        }
    }

    fn list_or(&self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    parse_real(s.trim()).ok_or_else(|| {
                        ConfigError::invalid(
                            &format!("{section}.{key}"),
                            format!("`{}` is not a number", s.trim()),
                        )
                    })
                })
                .collect(),
        }
    }
}

fn parse_real(s: &str) -> Option<f64> {
    match s {
        "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

fn check_times(field: &str, ts: &[f64]) -> Result<(), ConfigError> {
    if ts.is_empty() {
        return Err(ConfigError::invalid(field, "list is empty"));
    }
    if ts.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(ConfigError::invalid(
            field,
            "times must be positive and finite",
        ));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::invalid(
            field,
            "times must be strictly ascending",
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses and validates; relative `rates_file` paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let f = Fields {
            sections: &sections,
        };

        let suites = match f.raw("run", "suites") {
            None | Some("all") => Suite::ALL.to_vec(),
            Some(v) => {
                let mut out = Vec::new();
                for name in v.split(',').map(str::trim) {
                    if name == "all" {
                        out.extend(Suite::ALL);
                        continue;
                    }
                    out.push(Suite::parse(name).ok_or_else(|| {
                        ConfigError::invalid("run.suites", format!("unknown suite `{name}`"))
                    })?);
                }
                out.sort();
                out.dedup();
                out
            }
        };
        let seed = match f.raw("run", "seed") {
            None => 42,
            Some(v) => v.parse().map_err(|_| {
                ConfigError::invalid("run.seed", format!("`{v}` is not an unsigned integer"))
            })?,
        };
        let output = PathBuf::from(f.raw("run", "output").unwrap_or("g2lab-out"));

        let space = match f.raw("space", "kind") {
            None => return Err(ConfigError::Missing("space.kind".into())),
            Some("grid") => {
                let a = f.f64_or("space", "a", -5.0)?;
                let b = f.f64_or("space", "b", 5.0)?;
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(ConfigError::invalid(
                        "space.b",
                        format!("need finite a < b, got a = {a}, b = {b}"),
                    ));
                }
                let n = match f.raw("space", "n") {
                    None => 201,
                    Some(v) => v.parse::<usize>().map_err(|_| {
                        ConfigError::invalid("space.n", format!("`{v}` is not a positive integer"))
                    })?,
                };
                if !(3..=2000).contains(&n) {
                    return Err(ConfigError::invalid(
                        "space.n",
                        format!("{n} is outside [3, 2000]"),
                    ));
                }
                let potential = f
                    .raw("space", "potential")
                    .unwrap_or("0.5*x^2")
                    .parse::<UnivariatePoly>()
                    .map_err(|e| ConfigError::invalid("space.potential", e.to_string()))?;
                SpaceConfig::Grid { a, b, n, potential }
            }
            Some("chain") => {
                let file = f
                    .raw("space", "rates_file")
                    .ok_or(ConfigError::Missing("space.rates_file".into()))?;
                let path = base.join(file);
                if !path.is_file() {
                    return Err(ConfigError::invalid(
                        "space.rates_file",
                        format!("{} does not exist", path.display()),
                    ));
                }
                SpaceConfig::Chain { rates_file: path }
            }
            Some(other) => {
                return Err(ConfigError::invalid(
                    "space.kind",
                    format!("`{other}` is not chain or grid"),
                ))
            }
        };

        let curvature = match f.raw("curvature", "k") {
            None | Some("auto") => CurvatureSetting::Auto,
            Some(v) => CurvatureSetting::Value(
                parse_real(v).filter(|k| k.is_finite()).ok_or_else(|| {
                    ConfigError::invalid(
                        "curvature.k",
                        format!("`{v}` is neither auto nor a number"),
                    )
                })?,
            ),
        };

        let t_list = f.list_or("times", "t_list", &[0.1, 0.25, 0.5, 1.0])?;
        check_times("times.t_list", &t_list)?;
        let alpha_list = f.list_or("times", "alpha_list", &[0.5, 0.75, 1.0])?;
        if let Some(a) = alpha_list.iter().find(|a| !(0.5..=1.0).contains(*a)) {
            return Err(ConfigError::invalid(
                "times.alpha_list",
                format!("{a} is outside [0.5, 1]"),
            ));
        }
        let p_list = f.list_or("times", "p_list", &[1.0, 2.0, f64::INFINITY])?;
        if let Some(p) = p_list.iter().find(|p| !(**p >= 1.0)) {
            return Err(ConfigError::invalid(
                "times.p_list",
                format!("{p} is below 1"),
            ));
        }

        let transport_x = f.f64_or("transport", "x", -1.0)?;
        let transport_y = f.f64_or("transport", "y", 1.0)?;

        let evi_delta = f.f64_or("evi", "delta", 0.01)?;
        if !(evi_delta > 0.0) || !evi_delta.is_finite() {
            return Err(ConfigError::invalid(
                "evi.delta",
                format!("{evi_delta} must be positive"),
            ));
        }
        let evi_mu0 = match f.raw("evi", "mu0") {
            None | Some("left_half") => InitialMeasure::LeftHalf,
            Some("stationary") => InitialMeasure::Stationary,
            Some(v) => {
                return Err(ConfigError::invalid(
                    "evi.mu0",
                    format!("`{v}` is not left_half or stationary"),
                ))
            }
        };
        let evi_t_list = f.list_or("evi", "t_list", &t_list)?;
        check_times("evi.t_list", &evi_t_list)?;
        if evi_delta > evi_t_list[0] / 2.0 {
            return Err(ConfigError::invalid(
                "evi.delta",
                format!("{evi_delta} exceeds half the smallest time"),
            ));
        }

        let cd_t_list = f.list_or("cd", "t_list", &[0.25, 0.5, 0.75])?;
        if cd_t_list.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(ConfigError::invalid(
                "cd.t_list",
                "interpolation times must lie in [0, 1]",
            ));
        }
        let cd_shift = f.f64_or("cd", "shift", 1.0)?;

        let gradient_f = f
            .raw("gradient", "f")
            .unwrap_or("x")
            .parse::<UnivariatePoly>()
            .map_err(|e| ConfigError::invalid("gradient.f", e.to_string()))?;

        let calculus_count = match f.raw("calculus", "count") {
            None => 100,
            Some(v) => v.parse().map_err(|_| {
                ConfigError::invalid("calculus.count", format!("`{v}` is not a count"))
            })?,
        };

        Ok(Self {
            suites,
            seed,
            output,
            space,
            curvature,
            t_list,
            alpha_list,
            p_list,
            transport_x,
            transport_y,
            evi_delta,
            evi_mu0,
            evi_t_list,
            cd_t_list,
            cd_shift,
            gradient_f,
            calculus_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = "
[run]
suites = calculus, gradient
seed = 7

[space]
kind = grid   # OU
n = 51
potential = 0.5*x^2

[times]
p_list = 1, 2, inf
";

    #[test]
    fn parses_grid_config_with_defaults() {
        let c = ExperimentConfig::parse(GRID, Path::new(".")).unwrap();
        assert_eq!(c.suites, vec![Suite::Calculus, Suite::Gradient]);
        assert_eq!(c.seed, 7);
        assert!(matches!(c.space, SpaceConfig::Grid { n: 51, .. }));
        assert_eq!(c.p_list, vec![1.0, 2.0, f64::INFINITY]);
        assert_eq!(c.curvature, CurvatureSetting::Auto);
        assert_eq!(c.alpha_list, vec![0.5, 0.75, 1.0]);
    }

    #[test]
    fn invalid_alpha_names_field() {
        let text = format!("{GRID}\nalpha_list = 0.5, 1.5\n");
        let err = ExperimentConfig::parse(&text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("times.alpha_list"), "{err}");
    }

    #[test]
    fn syntax_and_key_errors() {
        assert!(matches!(
            ExperimentConfig::parse("[space]\nkind grid\n", Path::new(".")),
            Err(ConfigError::Syntax { line: 2, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("[space]\nkind = grid\ncolour = red\n", Path::new(".")),
            Err(ConfigError::UnknownKey(k)) if k == "space.colour"
        ));
        assert!(matches!(
            ExperimentConfig::parse("[run]\nseed = 1\n", Path::new(".")),
            Err(ConfigError::Missing(_))
        ));
        let err = ExperimentConfig::parse(
            "[space]\nkind = chain\nrates_file = nope.txt\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(err.to_string().contains("space.rates_file"));
    }

    #[test]
    fn times_must_ascend() {
        let text = "[space]\nkind = grid\n[times]\nt_list = 0.5, 0.1\n";
        let err = ExperimentConfig::parse(text, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("times.t_list"));
    }
}
