//! Soft support reward for vector-feature datasets: a continuous
//! relaxation of the expert-membership indicator, decaying with the
//! distance to the nearest expert feature point.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Feature points with a per-point expert flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    dim: usize,
    points: Vec<Vec<f64>>,
    expert_mask: Vec<bool>,
}

impl FeatureDataset {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, expert_mask: Vec<bool>) -> Result<Self> {
        if points.len() != expert_mask.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} points vs {} flags",
                points.len(),
                expert_mask.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "point {i} has dimension {} (expected {dim})",
                    p.len()
                )));
            }
        }
        Ok(Self {
            dim,
            points,
            expert_mask,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn expert_mask(&self) -> &[bool] {
        &self.expert_mask
    }

    pub fn expert_points(&self) -> Vec<&Vec<f64>> {
        self.points
            .iter()
            .zip(&self.expert_mask)
            .filter(|(_, &e)| e)
            .map(|(p, _)| p)
            .collect()
    }

    /// Text form: `# features dim=<d>` header, then one line per point —
    /// whitespace-separated coordinates and a trailing `expert` /
    /// `support` flag. Round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# features dim={}", self.dim).unwrap();
        for (p, &e) in self.points.iter().zip(&self.expert_mask) {
            for x in p {
                write!(out, "{x} ").unwrap();
            }
            writeln!(out, "{}", if e { "expert" } else { "support" }).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty feature file".into()))?;
        let dim: usize = header
            .strip_prefix("# features dim=")
            .ok_or_else(|| Error::Parse(format!("bad feature header: {header}")))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad dimension: {e}")))?;
        let mut points = Vec::new();
        let mut mask = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut fields: Vec<&str> = line.split_whitespace().collect();
            let flag = fields
                .pop()
                .ok_or_else(|| Error::Parse(format!("line {i}: missing flag")))?;
            let expert = match flag {
                "expert" => true,
                "support" => false,
                other => return Err(Error::Parse(format!("line {i}: bad flag {other}"))),
            };
            let coords: Vec<f64> = fields
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {i}: {e}")))?;
            points.push(coords);
            mask.push(expert);
        }
        Self::new(dim, points, mask)
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn nearest_expert_distance(x: &[f64], experts: &[&Vec<f64>]) -> f64 {
    experts
        .iter()
        .map(|e| euclidean(x, e))
        .fold(f64::INFINITY, f64::min)
}

/// Largest nearest-expert distance over the whole dataset.
pub fn compute_dmax(d_u: &FeatureDataset) -> Result<f64> {
    let experts = d_u.expert_points();
    if experts.is_empty() {
        return Err(Error::NoExpertPoints);
    }
    Ok(d_u
        .points()
        .iter()
        .map(|p| nearest_expert_distance(p, &experts))
        .fold(0.0, f64::max))
}

/// `max_e 1 - sqrt(||x - e|| / d_max)`, clamped to [0, 1]; the nearest
/// expert point attains the max. With `d_max = 0` (every point is on an
/// expert point) the reward degenerates to the exact-match indicator.
pub fn soft_support_reward(x: &[f64], experts: &[&Vec<f64>], d_max: f64) -> Result<f64> {
    if experts.is_empty() {
        return Err(Error::NoExpertPoints);
    }
    let dist = nearest_expert_distance(x, experts);
    if d_max == 0.0 {
        return Ok(if dist == 0.0 { 1.0 } else { 0.0 });
    }
    Ok((1.0 - (dist / d_max).sqrt()).clamp(0.0, 1.0))
}

/// Reward per point of `d_u`, aligned by index.
pub fn label_dataset(d_u: &FeatureDataset) -> Result<Vec<f64>> {
    let d_max = compute_dmax(d_u)?;
    let experts = d_u.expert_points();
    d_u.points()
        .iter()
        .map(|p| soft_support_reward(p, &experts, d_max))
        .collect()
}
