//! Run settings merged from an optional JSON config file and command-line
//! flags. Flags win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use qmatrix::estimator::ProfileDistribution;
use qmatrix::qmatrix::{AttributeProfile, ItemCombo};
use qmatrix::ComboOrder;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Noiseless,
    KnownCg,
    KnownG,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Noiseless => "noiseless",
            Mode::KnownCg => "known-cg",
            Mode::KnownG => "known-g",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Plain,
    Slip,
    SlipGuess,
    Augmented,
}

/// A per-item parameter: one number for every item, a list, or the
/// command-line text form `0.8` / `0.8,0.7,0.9`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Numbers {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

impl Numbers {
    pub fn resolve(&self, name: &str, m: usize) -> Result<Vec<f64>, CliError> {
        let values = match self {
            Numbers::One(v) => vec![*v],
            Numbers::Many(v) => v.clone(),
            Numbers::Text(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Validation(format!("--{name}: cannot parse {t:?} as a number")))
                })
                .collect::<Result<_, _>>()?,
        };
        let values = match values.len() {
            1 => vec![values[0]; m],
            n if n == m => values,
            n => return Err(CliError::Validation(format!("--{name} has {n} values, expected 1 or {m}"))),
        };
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CliError::Validation(format!("--{name} value {bad} is outside [0, 1]")));
        }
        Ok(values)
    }
}

/// Profile distribution: `uniform`, a JSON file, inline JSON, or (in a
/// config file) an object keyed by profile label.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PStar {
    Map(BTreeMap<String, f64>),
    Text(String),
}

impl PStar {
    pub fn resolve(&self, k: usize) -> Result<ProfileDistribution, CliError> {
        match self {
            PStar::Map(map) => distribution_from_map(map, k),
            PStar::Text(t) if t == "uniform" => Ok(ProfileDistribution::uniform(k)),
            PStar::Text(t) => {
                let text = if t.trim_start().starts_with('{') {
                    t.clone()
                } else {
                    crate::read_file(Path::new(t))?
                };
                let map: BTreeMap<String, f64> = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("--pstar: expected a JSON object of probabilities: {e}")))?;
                distribution_from_map(&map, k)
            }
        }
    }
}

fn distribution_from_map(map: &BTreeMap<String, f64>, k: usize) -> Result<ProfileDistribution, CliError> {
    let mut probs = vec![0.0; 1 << k];
    for (label, &p) in map {
        let (profile, width) = AttributeProfile::parse_label(label)
            .map_err(|e| CliError::Validation(format!("--pstar: bad profile label {label:?}: {e}")))?;
        if width != k {
            return Err(CliError::Validation(format!("--pstar: profile {label:?} has {width} attributes, expected {k}")));
        }
        probs[usize::from(profile.bits())] = p;
    }
    ProfileDistribution::new(k, probs).map_err(|e| CliError::Validation(format!("--pstar: {e}")))
}

/// Item groups, 1-based: `1,2,3,4;3,4,5,6` or a list of lists.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Groups {
    Lists(Vec<Vec<usize>>),
    Text(String),
}

impl Groups {
    /// 0-based groups.
    pub fn resolve(&self) -> Result<Vec<Vec<usize>>, CliError> {
        let lists = match self {
            Groups::Lists(l) => l.clone(),
            Groups::Text(s) => s
                .split(';')
                .map(|g| {
                    g.split(',')
                        .map(|t| {
                            t.trim()
                                .parse::<usize>()
                                .map_err(|_| CliError::Validation(format!("--groups: bad item {t:?}")))
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?,
        };
        lists
            .into_iter()
            .map(|g| {
                g.into_iter()
                    .map(|i| i.checked_sub(1).ok_or_else(|| CliError::Validation("--groups: items are 1-based".into())))
                    .collect()
            })
            .collect()
    }
}

/// `saturated`, `singles`, or combos like `1;2;1,2`.
pub fn parse_combos(text: &str, m: usize) -> Result<ComboOrder, CliError> {
    match text {
        "saturated" => Ok(ComboOrder::saturated(m)?),
        "singles" => Ok(ComboOrder::singles(m)?),
        list => {
            let combos = list
                .split(';')
                .map(|c| ItemCombo::parse_label(c.trim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Validation(format!("--combos: {e}")))?;
            Ok(ComboOrder::new(m, combos)?)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    pub q: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub c: Option<Numbers>,
    pub g: Option<Numbers>,
    pub pstar: Option<PStar>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub groups: Option<Groups>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub budget: Option<u64>,
    pub tie_tol: Option<f64>,
    pub k: Option<usize>,
    pub variant: Option<VariantArg>,
    pub combos: Option<String>,
    pub timing: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = crate::read_file(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay_fields!(
            base, top, q, responses, mode, c, g, pstar, n, seed, groups, workers, out, profiles, budget, tie_tol, k,
            variant, combos, timing
        )
    }

    pub fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
        value.as_ref().ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
    }
}
