//! Sparse spatial weights: directed k-nearest-neighbor graphs over zone
//! centroids, row standardization and a CSV + JSON sidecar exchange format.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PlanarPoint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightsMeta {
    pub method: String,
    pub k: usize,
    pub standardized: bool,
    pub symmetric: bool,
    /// Which point represents each zone when measuring distance.
    pub representative_point: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    n: usize,
    neighbors: Vec<Vec<(usize, f64)>>,
    meta: WeightsMeta,
}

impl SpatialWeights {
    /// Builds weights from explicit neighbor lists, checking indices, weight
    /// signs and the absence of self-links.
    pub fn from_neighbors(neighbors: Vec<Vec<(usize, f64)>>, meta: WeightsMeta) -> Result<Self> {
        let n = neighbors.len();
        for (i, row) in neighbors.iter().enumerate() {
            for &(j, w) in row {
                if j >= n {
                    return Err(Error::Data(format!(
                        "neighbor index {j} of zone {i} out of range (n = {n})"
                    )));
                }
                if j == i {
                    return Err(Error::Data(format!("zone {i} lists itself as a neighbor")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Data(format!("weight {w} for ({i}, {j}) must be positive")));
                }
            }
        }
        Ok(SpatialWeights { n, neighbors, meta })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn meta(&self) -> &WeightsMeta {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.neighbors.iter().map(Vec::as_slice)
    }

    /// Sum of all weights.
    pub fn s0(&self) -> f64 {
        self.neighbors.iter().flatten().map(|&(_, w)| w).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, w)| w).sum()
    }

    /// Σ_j w_ij v_j
    pub fn lag(&self, i: usize, values: &[f64]) -> f64 {
        self.neighbors[i].iter().map(|&(j, w)| w * values[j]).sum()
    }

    /// Union of the graph with its transpose. Weights of a symmetrized pair
    /// are the larger of the two directions (binary input stays binary).
    pub fn symmetrize(&self) -> SpatialWeights {
        let mut rows: Vec<HashMap<usize, f64>> = vec![HashMap::new(); self.n];
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, w) in row {
                for (a, b) in [(i, j), (j, i)] {
                    let e = rows[a].entry(b).or_insert(0.0);
                    *e = e.max(w);
                }
            }
        }
        let neighbors = rows
            .into_iter()
            .map(|r| {
                let mut v: Vec<(usize, f64)> = r.into_iter().collect();
                v.sort_by_key(|&(j, _)| j);
                v
            })
            .collect();
        SpatialWeights {
            n: self.n,
            neighbors,
            meta: WeightsMeta {
                symmetric: true,
                standardized: false,
                ..self.meta.clone()
            },
        }
    }
}

/// Directed KNN graph with binary weights. Distance ties are broken by the
/// smaller zone index.
pub fn knn_weights(centroids: &[PlanarPoint], k: usize) -> Result<SpatialWeights> {
    let n = centroids.len();
    if n <= k || k == 0 {
        return Err(Error::Sizing { n, k });
    }
    if let Some((index, p)) = centroids
        .iter()
        .enumerate()
        .find(|(_, p)| !(p.x.is_finite() && p.y.is_finite()))
    {
        return Err(Error::Coordinate { index, x: p.x, y: p.y });
    }
    let neighbors = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (centroids[i].dist2(&centroids[j]), j))
                .collect();
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k - 1, by_dist);
            cand.truncate(k);
            cand.sort_by(by_dist);
            cand.into_iter().map(|(_, j)| (j, 1.0)).collect()
        })
        .collect();
    Ok(SpatialWeights {
        n,
        neighbors,
        meta: WeightsMeta {
            method: "knn".into(),
            k,
            standardized: false,
            symmetric: false,
            representative_point: "centroid".into(),
        },
    })
}

/// Divides each weight by its row sum. Empty rows stay empty.
pub fn row_standardize(w: &SpatialWeights) -> SpatialWeights {
    let neighbors = w
        .neighbors
        .iter()
        .map(|row| {
            let s: f64 = row.iter().map(|&(_, x)| x).sum();
            row.iter().map(|&(j, x)| (j, x / s)).collect()
        })
        .collect();
    SpatialWeights {
        n: w.n,
        neighbors,
        meta: WeightsMeta {
            standardized: true,
            ..w.meta.clone()
        },
    }
}

/// Writes `from_id,to_id,weight` rows.
pub fn write_weights_csv<W: Write>(w: &SpatialWeights, ids: &[String], out: W) -> Result<()> {
    if ids.len() != w.n {
        return Err(Error::Data(format!("{} zone ids for {} weight rows", ids.len(), w.n)));
    }
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["from_id", "to_id", "weight"])?;
    for (i, row) in w.neighbors.iter().enumerate() {
        for &(j, x) in row {
            csv.write_record([ids[i].as_str(), ids[j].as_str(), &x.to_string()])?;
        }
    }
    csv.flush().map_err(|e| Error::io("<weights csv>", e))?;
    Ok(())
}

/// Reads weights written by [`write_weights_csv`]. Zone order follows `ids`.
pub fn read_weights_csv<R: Read>(source: R, ids: &[String], meta: WeightsMeta) -> Result<SpatialWeights> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ids.len()];
    let mut csv = csv::Reader::from_reader(source);
    for (row, rec) in csv.records().enumerate() {
        let rec = rec?;
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::Data(format!("weights row {}: unknown zone `{s}`", row + 1)))
        };
        let (i, j) = (lookup(&rec[0])?, lookup(&rec[1])?);
        let x: f64 = rec[2]
            .parse()
            .map_err(|_| Error::Data(format!("weights row {}: bad weight `{}`", row + 1, &rec[2])))?;
        neighbors[i].push((j, x));
    }
    SpatialWeights::from_neighbors(neighbors, meta)
}
