//! Global and local Moran's I with permutation inference and LISA labels.
//!
//! Formulas:
//!
//! * `I = (n / S0) · Σ_ij w_ij z_i z_j / Σ_i z_i²`
//! * `I_i = (z_i / m2) · Σ_j w_ij z_j`, with `m2 = Σ_i z_i² / n`
//!
//! so that `Σ_i I_i = S0 · I`, and `mean(I_i) = I` under row-standardized
//! weights.
//!
//! Pseudo p-values are `(1 + #extreme) / (1 + permutations)`. Every
//! replicate draws from its own seeded stream, so results do not depend on
//! thread count or scheduling.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};
use crate::weights::SpatialWeights;

pub const DEFAULT_PERMUTATIONS: usize = 999;
pub const MIN_PERMUTATIONS: usize = 99;
pub const DEFAULT_ALPHA: f64 = 0.05;

// Replicates within this relative distance of the observed deviation count
// as ties (and therefore as extreme).
const TIE_RTOL: f64 = 1e-10;

/// Deviations from the mean, `z_i = x_i - mean(x)`, and `m2 = Σ z² / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviations {
    pub mean: f64,
    pub z: Vec<f64>,
    pub m2: f64,
}

impl Deviations {
    pub fn sum_sq(&self) -> f64 {
        self.m2 * self.z.len() as f64
    }
}

pub fn standardize_values(x: &[f64]) -> Result<Deviations> {
    if x.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 values, got {}", x.len())));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("value at zone {i} is not finite")));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::Degenerate(format!(
            "zero variance: all {} values equal {}",
            x.len(),
            x[0]
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let m2 = z.iter().map(|v| v * v).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(Error::Degenerate("zero variance after centering".into()));
    }
    Ok(Deviations { mean, z, m2 })
}

fn check_dims(x: &[f64], w: &SpatialWeights) -> Result<()> {
    if x.len() != w.n() {
        return Err(Error::Data(format!(
            "{} values for {} zones in the weights",
            x.len(),
            w.n()
        )));
    }
    Ok(())
}

fn moran_from_z(z: &[f64], w: &SpatialWeights, s0: f64, sum_sq: f64) -> f64 {
    let cross: f64 = z.iter().enumerate().map(|(i, zi)| zi * w.lag(i, z)).sum();
    z.len() as f64 / s0 * cross / sum_sq
}

fn nonempty_s0(w: &SpatialWeights) -> Result<f64> {
    let s0 = w.s0();
    if s0 <= 0.0 {
        return Err(Error::Degenerate("weights have no links (S0 = 0)".into()));
    }
    Ok(s0)
}

pub fn global_moran(x: &[f64], w: &SpatialWeights) -> Result<f64> {
    check_dims(x, w)?;
    let d = standardize_values(x)?;
    let s0 = nonempty_s0(w)?;
    Ok(moran_from_z(&d.z, w, s0, d.sum_sq()))
}

/// Which permutation replicates count as at least as extreme as observed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// `|s* - e| >= |s - e|`, with `e` the statistic's mean under the
    /// permutation null.
    #[default]
    TwoSided,
    /// One-sided toward the side of `e` the observed statistic falls on.
    Folded,
}

impl Tail {
    fn is_extreme(self, observed: f64, replicate: f64, center: f64) -> bool {
        let d_obs = observed - center;
        let d_rep = replicate - center;
        let tol = TIE_RTOL * d_obs.abs().max(center.abs()).max(f64::MIN_POSITIVE);
        match self {
            Tail::TwoSided => d_rep.abs() >= d_obs.abs() - tol,
            Tail::Folded if d_obs >= 0.0 => d_rep >= d_obs - tol,
            Tail::Folded => d_rep <= d_obs + tol,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tail::TwoSided => "two-sided",
            Tail::Folded => "folded",
        }
    }
}

impl FromStr for Tail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" => Ok(Tail::TwoSided),
            "folded" => Ok(Tail::Folded),
            _ => Err(Error::Config(format!(
                "unknown tail `{s}` (expected two-sided or folded)"
            ))),
        }
    }
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub permutations: usize,
    pub seed: u64,
    pub tail: Tail,
}

impl PermutationConfig {
    pub fn new(permutations: usize, seed: u64) -> Self {
        PermutationConfig {
            permutations,
            seed,
            tail: Tail::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.permutations < MIN_PERMUTATIONS {
            return Err(Error::Config(format!(
                "permutations must be at least {MIN_PERMUTATIONS}, got {}",
                self.permutations
            )));
        }
        Ok(())
    }

    fn pseudo_p(&self, extreme: usize) -> f64 {
        (extreme + 1) as f64 / (self.permutations + 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranGlobalResult {
    #[serde(rename = "I")]
    pub i: f64,
    pub expected_i: f64,
    pub pseudo_p: f64,
    pub permutations: usize,
    pub seed: u64,
    pub tail: Tail,
}

/// Global Moran's I with a random-permutation reference distribution.
pub fn permutation_test_global(x: &[f64], w: &SpatialWeights, cfg: PermutationConfig) -> Result<MoranGlobalResult> {
    cfg.validate()?;
    check_dims(x, w)?;
    let d = standardize_values(x)?;
    let s0 = nonempty_s0(w)?;
    let sum_sq = d.sum_sq();
    let observed = moran_from_z(&d.z, w, s0, sum_sq);
    let expected = -1.0 / (x.len() as f64 - 1.0);

    let extreme = (0..cfg.permutations)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, Domain::GlobalPermutation, r as u64);
            let mut z = d.z.clone();
            z.shuffle(&mut rng);
            let rep = moran_from_z(&z, w, s0, sum_sq);
            usize::from(cfg.tail.is_extreme(observed, rep, expected))
        })
        .sum();

    Ok(MoranGlobalResult {
        i: observed,
        expected_i: expected,
        pseudo_p: cfg.pseudo_p(extreme),
        permutations: cfg.permutations,
        seed: cfg.seed,
        tail: cfg.tail,
    })
}

/// Local Moran's I with the intermediate terms kept for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoran {
    pub z: Vec<f64>,
    pub m2: f64,
    pub lag: Vec<f64>,
    pub local_i: Vec<f64>,
}

pub fn local_moran(x: &[f64], w: &SpatialWeights) -> Result<LocalMoran> {
    check_dims(x, w)?;
    let d = standardize_values(x)?;
    let lag: Vec<f64> = (0..x.len()).map(|i| w.lag(i, &d.z)).collect();
    let local_i = d.z.iter().zip(&lag).map(|(zi, li)| zi / d.m2 * li).collect();
    Ok(LocalMoran {
        z: d.z,
        m2: d.m2,
        lag,
        local_i,
    })
}

/// Conditional permutation pseudo p-values, one per zone.
///
/// For zone `i`, `z_i` stays put and each replicate fills `i`'s neighbor
/// slots with a random draw (without replacement) from the other `n - 1`
/// deviations. Since `I_i` is `z_i / m2` times the lag, replicates are
/// compared on the lag; the null mean of the lag is `-w_i. z_i / (n - 1)`.
/// Zones with `z_i = 0` or no neighbors get `p = 1`.
pub fn conditional_permutation_local(x: &[f64], w: &SpatialWeights, cfg: PermutationConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let local = local_moran(x, w)?;
    Ok(conditional_p_values(&local, w, cfg))
}

fn conditional_p_values(local: &LocalMoran, w: &SpatialWeights, cfg: PermutationConfig) -> Vec<f64> {
    let n = local.z.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let row = w.row(i);
            let zi = local.z[i];
            if row.is_empty() || zi == 0.0 {
                return 1.0;
            }
            let center = -w.row_sum(i) * zi / (n as f64 - 1.0);
            // orient so "larger lag" means "larger I_i"
            let sign = zi.signum();
            let observed = sign * local.lag[i];
            let center = sign * center;
            let mut rng = substream(cfg.seed, Domain::LocalPermutation, i as u64);
            let mut extreme = 0usize;
            for _ in 0..cfg.permutations {
                let picks = index::sample(&mut rng, n - 1, row.len());
                let lag: f64 = row
                    .iter()
                    .zip(picks.iter())
                    .map(|(&(_, wij), k)| {
                        let j = if k >= i { k + 1 } else { k };
                        wij * local.z[j]
                    })
                    .sum();
                if cfg.tail.is_extreme(observed, sign * lag, center) {
                    extreme += 1;
                }
            }
            cfg.pseudo_p(extreme)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    HH,
    HL,
    LH,
    LL,
}

impl Quadrant {
    /// `None` when either the deviation or its lag is exactly zero.
    pub fn from_signs(z: f64, lag: f64) -> Option<Quadrant> {
        if z == 0.0 || lag == 0.0 || z.is_nan() || lag.is_nan() {
            return None;
        }
        Some(match (z > 0.0, lag > 0.0) {
            (true, true) => Quadrant::HH,
            (true, false) => Quadrant::HL,
            (false, true) => Quadrant::LH,
            (false, false) => Quadrant::LL,
        })
    }

    pub fn mirrored(self) -> Quadrant {
        match self {
            Quadrant::HH => Quadrant::LL,
            Quadrant::LL => Quadrant::HH,
            Quadrant::HL => Quadrant::LH,
            Quadrant::LH => Quadrant::HL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClusterLabel {
    HH,
    HL,
    LH,
    LL,
    NotSignificant,
}

impl From<Quadrant> for ClusterLabel {
    fn from(q: Quadrant) -> Self {
        match q {
            Quadrant::HH => ClusterLabel::HH,
            Quadrant::HL => ClusterLabel::HL,
            Quadrant::LH => ClusterLabel::LH,
            Quadrant::LL => ClusterLabel::LL,
        }
    }
}

impl ClusterLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterLabel::HH => "HH",
            ClusterLabel::HL => "HL",
            ClusterLabel::LH => "LH",
            ClusterLabel::LL => "LL",
            ClusterLabel::NotSignificant => "NotSignificant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LisaZone {
    pub z: f64,
    pub lag: f64,
    pub local_i: f64,
    pub pseudo_p: f64,
    pub quadrant: Option<Quadrant>,
    pub label: ClusterLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LisaResult {
    pub alpha: f64,
    /// p-value cutoff actually applied (differs from `alpha` under FDR).
    pub threshold: f64,
    pub fdr: bool,
    pub zones: Vec<LisaZone>,
}

impl LisaResult {
    pub fn labels(&self) -> Vec<ClusterLabel> {
        self.zones.iter().map(|z| z.label).collect()
    }
}

/// Benjamini–Hochberg cutoff: the largest sorted `p_(k)` with
/// `p_(k) <= k α / m`, or 0 when none qualifies.
pub fn fdr_threshold(p: &[f64], alpha: f64) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .rev()
        .find(|(k, pk)| **pk <= (*k as f64 + 1.0) * alpha / m)
        .map_or(0.0, |(_, pk)| *pk)
}

/// Quadrant per zone, labelled when `pseudo_p` passes the cutoff.
pub fn classify_lisa(local: &LocalMoran, pseudo_p: &[f64], alpha: f64, fdr: bool) -> Result<LisaResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if pseudo_p.len() != local.z.len() {
        return Err(Error::Data(format!(
            "{} p-values for {} zones",
            pseudo_p.len(),
            local.z.len()
        )));
    }
    let threshold = if fdr { fdr_threshold(pseudo_p, alpha) } else { alpha };
    let zones = (0..local.z.len())
        .map(|i| {
            let quadrant = Quadrant::from_signs(local.z[i], local.lag[i]);
            let label = match quadrant {
                Some(q) if pseudo_p[i] <= threshold => q.into(),
                _ => ClusterLabel::NotSignificant,
            };
            LisaZone {
                z: local.z[i],
                lag: local.lag[i],
                local_i: local.local_i[i],
                pseudo_p: pseudo_p[i],
                quadrant,
                label,
            }
        })
        .collect();
    Ok(LisaResult {
        alpha,
        threshold,
        fdr,
        zones,
    })
}

/// Local Moran, conditional permutation and classification in one call.
pub fn lisa(x: &[f64], w: &SpatialWeights, cfg: PermutationConfig, alpha: f64, fdr: bool) -> Result<LisaResult> {
    cfg.validate()?;
    let local = local_moran(x, w)?;
    let p = conditional_p_values(&local, w, cfg);
    classify_lisa(&local, &p, alpha, fdr)
}
