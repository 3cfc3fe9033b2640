//! File formats: `mdp.json`, `grid.json`, and the numeric conventions shared
//! by every derived output.

use std::fs;
use std::path::{Path, PathBuf};

use riskmdp_core::mdp::MdpError;
use riskmdp_core::{validate_mdp, GridConfig, Mdp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Significant digits of every number in a derived output file.
pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        Self::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// On-disk MDP. `transition[s][a]` lists `[successor, probability]` pairs;
/// `cost[s][a]` and `constraint_costs[i][s][a]` are per state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub states: usize,
    pub actions: usize,
    pub transition: Vec<Vec<Vec<(usize, f64)>>>,
    pub cost: Vec<Vec<f64>>,
    #[serde(default)]
    pub constraint_costs: Vec<Vec<Vec<f64>>>,
    pub kappa0: Vec<f64>,
    pub gamma: f64,
}

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let (n, m) = (mdp.n_states(), mdp.n_actions());
        let table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
            (0..n).map(|s| (0..m).map(|a| f(s, a)).collect()).collect()
        };
        Self {
            states: n,
            actions: m,
            transition: (0..n)
                .map(|s| (0..m).map(|a| mdp.transition_row(s, a).to_vec()).collect())
                .collect(),
            cost: table(&|s, a| mdp.cost(s, a)),
            constraint_costs: (0..mdp.n_constraints())
                .map(|i| table(&|s, a| mdp.constraint_cost(i, s, a)))
                .collect(),
            kappa0: mdp.initial_distribution().to_vec(),
            gamma: mdp.discount(),
        }
    }

    pub fn to_mdp(&self) -> Result<Mdp, MdpError> {
        let check = |table: &'static str, lens: Vec<usize>| {
            if lens.len() != self.states {
                return Err(MdpError::Shape {
                    table,
                    expected: self.states,
                    found: lens.len(),
                });
            }
            match lens.into_iter().find(|&l| l != self.actions) {
                Some(found) => Err(MdpError::Shape {
                    table,
                    expected: self.actions,
                    found,
                }),
                None => Ok(()),
            }
        };
        check("transition", self.transition.iter().map(Vec::len).collect())?;
        check("cost", self.cost.iter().map(Vec::len).collect())?;
        for d in &self.constraint_costs {
            check("constraint_costs", d.iter().map(Vec::len).collect())?;
        }
        Mdp::new(
            self.states,
            self.actions,
            self.transition.iter().flatten().cloned().collect(),
            self.cost.iter().flatten().copied().collect(),
            self.constraint_costs
                .iter()
                .map(|d| d.iter().flatten().copied().collect())
                .collect(),
            self.kappa0.clone(),
            self.gamma,
        )
    }
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_value<T: Serialize>(path: &Path, value: &T) -> Result<Value, IoError> {
    serde_json::to_value(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty(path: &Path, value: &Value) -> Result<String, IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    Ok(text)
}

/// Writes `value` as JSON at full precision. Used for model files, which
/// must round-trip exactly.
pub fn write_json_exact<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let v = to_value(path, value)?;
    write_text(path, &pretty(path, &v)?)
}

/// Writes `value` as JSON with every float rounded to
/// [`SIGNIFICANT_DIGITS`] significant digits.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut v = to_value(path, value)?;
    round_value(&mut v);
    write_text(path, &pretty(path, &v)?)
}

/// `x` rounded to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Decimal text of `x` with at most [`SIGNIFICANT_DIGITS`] significant
/// digits, for CSV cells.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let r = round_sig(x);
    // Shortest round-trip text of the rounded value.
    let s = format!("{r}");
    if s.len() > 24 {
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
    } else {
        s
    }
}

pub fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn read_mdp(path: &Path) -> Result<Mdp, IoError> {
    let file: MdpFile = read_json(path)?;
    let mdp = file
        .to_mdp()
        .map_err(|e| IoError::invalid(path, e.to_string()))?;
    let report = validate_mdp(&mdp);
    if let Some(issue) = report.issues.first() {
        return Err(IoError::invalid(path, issue.to_string()));
    }
    Ok(mdp)
}

pub fn write_mdp(path: &Path, mdp: &Mdp) -> Result<(), IoError> {
    write_json_exact(path, &MdpFile::from_mdp(mdp))
}

pub fn read_grid(path: &Path) -> Result<GridConfig, IoError> {
    let grid: GridConfig = read_json(path)?;
    grid.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    Ok(grid)
}

pub fn write_grid(path: &Path, grid: &GridConfig) -> Result<(), IoError> {
    write_json_exact(path, grid)
}
