//! Empirical Bayes Index of severity rates.
//!
//! Per zone, with add-one/add-two smoothing:
//!
//! ```text
//! rate_i   = (severe_i + 1) / (total_i + 2)
//! std_i    = sqrt(rate_i (1 - rate_i) / (total_i + 2))
//! global   = (Σ severe + 1) / (Σ total + 2)
//! ebi_i    = (rate_i - global) / std_i
//! ebi_std  = (ebi_i - mean(ebi)) / sd(ebi)
//! ```
//!
//! The global rate smooths the pooled sums once rather than each term, and
//! `sd` is the population (divide-by-n) standard deviation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stamped into reports so the pooled-sum reading of the global rate is
/// visible next to the numbers it produced.
pub const GLOBAL_RATE_FORMULA: &str = "(sum(severe) + 1) / (sum(total) + 2)";
pub const STDEV_KIND: &str = "population";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityInput {
    pub severe: u64,
    pub total: u64,
}

impl SeverityInput {
    pub fn new(severe: u64, total: u64) -> Result<Self> {
        if severe > total {
            return Err(Error::Domain(format!("severe count {severe} exceeds total {total}")));
        }
        Ok(SeverityInput { severe, total })
    }
}

pub fn smoothed_rate(severe: u64, total: u64) -> Result<f64> {
    if severe > total {
        return Err(Error::Domain(format!("severe count {severe} exceeds total {total}")));
    }
    Ok((severe as f64 + 1.0) / (total as f64 + 2.0))
}

pub fn rate_std(rate: f64, total: u64) -> Result<f64> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Domain(format!("rate {rate} outside (0, 1)")));
    }
    Ok((rate * (1.0 - rate) / (total as f64 + 2.0)).sqrt())
}

pub fn global_rate(inputs: &[SeverityInput]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::Domain("no zones".into()));
    }
    let severe: u64 = inputs.iter().map(|z| z.severe).sum();
    let total: u64 = inputs.iter().map(|z| z.total).sum();
    smoothed_rate(severe, total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EbiZone {
    pub rate: f64,
    pub std: f64,
    pub ebi: f64,
    pub ebi_standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EbiVector {
    pub global_rate: f64,
    pub ebi_mean: f64,
    pub ebi_stdev: f64,
    pub zones: Vec<EbiZone>,
}

impl EbiVector {
    pub fn standardized(&self) -> Vec<f64> {
        self.zones.iter().map(|z| z.ebi_standardized).collect()
    }
}

pub fn ebi_transform(inputs: &[SeverityInput]) -> Result<EbiVector> {
    if inputs.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 zones, got {}",
            inputs.len()
        )));
    }
    let global = global_rate(inputs)?;
    let mut zones = inputs
        .iter()
        .map(|z| {
            let rate = smoothed_rate(z.severe, z.total)?;
            let std = rate_std(rate, z.total)?;
            Ok(EbiZone {
                rate,
                std,
                ebi: (rate - global) / std,
                ebi_standardized: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = zones.len() as f64;
    let mean = zones.iter().map(|z| z.ebi).sum::<f64>() / n;
    let var = zones.iter().map(|z| (z.ebi - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if zones.iter().all(|z| z.ebi == zones[0].ebi) || sd == 0.0 {
        return Err(Error::Degenerate(format!(
            "EBI is constant ({}) across all {} zones; standardization undefined",
            zones[0].ebi,
            zones.len()
        )));
    }
    for z in &mut zones {
        z.ebi_standardized = (z.ebi - mean) / sd;
    }
    Ok(EbiVector {
        global_rate: global,
        ebi_mean: mean,
        ebi_stdev: sd,
        zones,
    })
}

/// Reads `zone_id,severe,total` rows.
pub fn read_severity_csv<R: Read>(source: R) -> Result<Vec<(String, SeverityInput)>> {
    #[derive(Deserialize)]
    struct Row {
        zone_id: String,
        severe: u64,
        total: u64,
    }
    let mut rdr = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push((r.zone_id, SeverityInput::new(r.severe, r.total)?));
    }
    Ok(out)
}

/// Writes `zone_id,rate,std,ebi,ebi_standardized` rows.
pub fn write_ebi_csv<W: Write>(ids: &[String], ebi: &EbiVector, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["zone_id", "rate", "std", "ebi", "ebi_standardized"])?;
    for (id, z) in ids.iter().zip(&ebi.zones) {
        w.write_record([
            id.clone(),
            z.rate.to_string(),
            z.std.to_string(),
            z.ebi.to_string(),
            z.ebi_standardized.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ebi csv>", e))?;
    Ok(())
}
