//! Synthetic DINA cohorts and their reduction to alpha-vectors.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(seed)`. Profiles are drawn on stream 0 by inverting the
//! cumulative distribution over profiles in bit order, one `f64` uniform per
//! subject. Subject `r` (0-based) draws its responses on stream `r + 1`, one
//! uniform per item in item order, and answers item `i` positively iff the
//! uniform is below `c_i` (capable) or `g_i` (not capable).

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{AlphaVector, ProfileDistribution};
use crate::qmatrix::{AttributeProfile, QMatrix, MAX_ITEMS};
use crate::tmatrix::{ComboOrder, DinaParams};

/// Largest item count for which alpha is computed through a response histogram.
const HISTOGRAM_MAX_ITEMS: usize = 20;

/// Binary responses, one `m`-bit row per subject (bit `i` = item `i + 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseData {
    m: usize,
    rows: Vec<u32>,
}

impl ResponseData {
    pub fn new(m: usize, rows: Vec<u32>) -> Result<Self> {
        if m == 0 || m > MAX_ITEMS {
            return Err(Error::TooLarge { what: "items", m, cap: MAX_ITEMS });
        }
        if rows.is_empty() {
            return Err(Error::InvalidParams("response data needs at least one subject".into()));
        }
        let mask = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
        if rows.iter().any(|r| r & !mask != 0) {
            return Err(Error::DimensionMismatch(format!("response row wider than {m} items")));
        }
        Ok(ResponseData { m, rows })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Responses restricted to `items` (0-based), renumbered in the given order.
    pub fn select_items(&self, items: &[usize]) -> Result<ResponseData> {
        if let Some(&bad) = items.iter().find(|&&i| i >= self.m) {
            return Err(Error::ItemOutOfRange { item: bad + 1, m: self.m });
        }
        let rows = self
            .rows
            .iter()
            .map(|&r| {
                items.iter().enumerate().fold(0u32, |acc, (new, &old)| acc | (((r >> old) & 1) << new))
            })
            .collect();
        ResponseData::new(items.len(), rows)
    }

    /// Fraction of subjects answering each item positively.
    pub fn item_marginals(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.m).map(|i| self.rows.iter().filter(|&&r| r >> i & 1 == 1).count() as f64 / n).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * (self.m + 1) + 8);
        writeln!(out, "m={}", self.m).unwrap();
        for &r in &self.rows {
            out.extend((0..self.m).map(|i| if r >> i & 1 == 1 { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }
}

impl FromStr for ResponseData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, msg: "empty response file".into() })?;
        let m: usize = header
            .trim()
            .strip_prefix("m=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("expected header `m=<items>`, got {header:?}") })?;
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line.trim_end_matches('\r');
            let lineno = idx + 2;
            if line.len() != m {
                return Err(Error::Parse { line: lineno, msg: format!("expected {m} responses, got {}", line.len()) });
            }
            let mut bits = 0u32;
            for (i, ch) in line.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => bits |= 1 << i,
                    other => return Err(Error::Parse { line: lineno, msg: format!("invalid response {other:?}") }),
                }
            }
            rows.push(bits);
        }
        ResponseData::new(m, rows)
    }
}

/// One line of `k` characters per subject, as in [`AttributeProfile::label`].
pub fn profiles_to_text(profiles: &[AttributeProfile], k: usize) -> String {
    let mut out = String::with_capacity(profiles.len() * (k + 1));
    for p in profiles {
        out.push_str(&p.label(k));
        out.push('\n');
    }
    out
}

pub fn parse_profiles(text: &str) -> Result<(Vec<AttributeProfile>, usize)> {
    let mut k = None;
    let mut profiles = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let (p, width) = AttributeProfile::parse_label(line.trim_end_matches('\r'))
            .map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
        if *k.get_or_insert(width) != width {
            return Err(Error::Parse { line: idx + 1, msg: "profile width changes".into() });
        }
        profiles.push(p);
    }
    let k = k.ok_or(Error::Parse { line: 1, msg: "empty profile file".into() })?;
    Ok((profiles, k))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub q: QMatrix,
    pub p_star: ProfileDistribution,
    pub params: DinaParams<f64>,
    pub n: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Checks dimensions and ranges. Returns warnings for conditions that are
    /// allowed but weaken identifiability, such as profiles with zero mass.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.p_star.k() != self.q.k() {
            return Err(Error::DimensionMismatch(format!(
                "p* is over {} attributes, Q has {}",
                self.p_star.k(),
                self.q.k()
            )));
        }
        if self.params.m() != self.q.m() {
            return Err(Error::DimensionMismatch(format!(
                "parameters given for {} items, Q has {}",
                self.params.m(),
                self.q.m()
            )));
        }
        self.params.check_unit_interval()?;
        if self.n == 0 {
            return Err(Error::InvalidParams("number of subjects must be positive".into()));
        }
        let mut warnings = Vec::new();
        if !self.p_star.is_positive() {
            let missing: Vec<String> = self
                .p_star
                .labelled()
                .into_iter()
                .filter(|(_, p)| *p <= 0.0)
                .map(|(label, _)| label)
                .collect();
            warnings.push(format!("p* has zero mass on profiles {}", missing.join(", ")));
        }
        Ok(warnings)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub profiles: Vec<AttributeProfile>,
    pub responses: ResponseData,
    pub warnings: Vec<String>,
}

/// `n` i.i.d. profiles from `p_star`.
pub fn sample_profiles(p_star: &ProfileDistribution, n: usize, seed: u64) -> Vec<AttributeProfile> {
    let mut cdf = Vec::with_capacity(p_star.probs().len());
    let mut acc = 0.0;
    for &p in p_star.probs() {
        acc += p;
        cdf.push(acc);
    }
    // The last profile with positive mass absorbs rounding in the cumulative sum.
    let last = p_star.probs().iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let idx = cdf.partition_point(|&c| c <= u).min(last);
            AttributeProfile::from_bits(idx as u16)
        })
        .collect()
}

/// DINA responses for the given profiles.
pub fn dina_responses(
    profiles: &[AttributeProfile],
    q: &QMatrix,
    params: &DinaParams<f64>,
    seed: u64,
) -> Result<ResponseData> {
    if params.m() != q.m() {
        return Err(Error::DimensionMismatch(format!("parameters for {} items, Q has {}", params.m(), q.m())));
    }
    let rows = profiles
        .par_iter()
        .enumerate()
        .map(|(r, &profile)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let capable = q.capable_items(profile);
            (0..q.m()).fold(0u32, |acc, i| {
                let p = if capable >> i & 1 == 1 { params.c[i] } else { params.g[i] };
                let u: f64 = rng.gen();
                if u < p {
                    acc | 1 << i
                } else {
                    acc
                }
            })
        })
        .collect();
    ResponseData::new(q.m(), rows)
}

pub fn simulate(config: &SimConfig) -> Result<Simulation> {
    let warnings = config.validate()?;
    let profiles = sample_profiles(&config.p_star, config.n, config.seed);
    let responses = dina_responses(&profiles, &config.q, &config.params, config.seed)?;
    Ok(Simulation { profiles, responses, warnings })
}

/// Fraction of subjects answering every item of each combo positively.
pub fn compute_alpha(responses: &ResponseData, order: &ComboOrder) -> Result<AlphaVector> {
    if order.m() != responses.m() {
        return Err(Error::DimensionMismatch(format!(
            "combo order over {} items, responses over {}",
            order.m(),
            responses.m()
        )));
    }
    let n = responses.n_subjects();
    let counts: Vec<usize> = if responses.m() <= HISTOGRAM_MAX_ITEMS {
        let size = 1usize << responses.m();
        let mut sup = vec![0usize; size];
        for &r in responses.rows() {
            sup[r as usize] += 1;
        }
        // superset sums: sup[S] = #{rows containing S}
        for bit in 0..responses.m() {
            for s in 0..size {
                if s >> bit & 1 == 0 {
                    sup[s] += sup[s | 1 << bit];
                }
            }
        }
        order.combos().iter().map(|c| sup[c.bits() as usize]).collect()
    } else {
        order
            .combos()
            .par_iter()
            .map(|c| responses.rows().iter().filter(|&&r| r & c.bits() == c.bits()).count())
            .collect()
    };
    let rates = counts.into_iter().map(|c| c as f64 / n as f64).collect();
    AlphaVector::new(order.clone(), rates, n)
}
