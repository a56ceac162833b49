//! Grid cells: k-means (k-means++ seeding, Lloyd iterations) over POI
//! coordinates projected to a local plane.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geo::LocalProjection;
use super::KgError;

const MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridCells {
    /// poi id -> grid id
    pub assignment: BTreeMap<String, String>,
    /// grid id -> centroid (lat, lon)
    pub centroids: BTreeMap<String, (f64, f64)>,
}

impl GridCells {
    pub fn grid_of(&self, poi: &str) -> Option<&str> {
        self.assignment.get(poi).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

/// Default cell count: one cell per ~200 POIs, at least 10, never more than
/// the number of distinct coordinates.
pub fn default_k(pois: &[(String, f64, f64)]) -> usize {
    let distinct = distinct_points(pois);
    let k = 10usize.max(pois.len().div_ceil(200));
    k.min(distinct).max(1)
}

fn distinct_points(pois: &[(String, f64, f64)]) -> usize {
    let mut pts: Vec<(u64, u64)> = pois.iter().map(|p| (p.1.to_bits(), p.2.to_bits())).collect();
    pts.sort_unstable();
    pts.dedup();
    pts.len()
}

/// Clusters POIs into `k` cells. Same seed and input give the same cells.
/// Cell ids are `G00`, `G01`, ... ordered by centroid (lat, lon).
pub fn build_grid_cells(pois: &[(String, f64, f64)], k: usize, seed: u64) -> Result<GridCells, KgError> {
    if k == 0 {
        return Err(KgError::Config("k_grids must be at least 1".into()));
    }
    let distinct = distinct_points(pois);
    if k > distinct {
        return Err(KgError::Config(format!("k_grids = {k} exceeds {distinct} distinct POI locations")));
    }
    let coords: Vec<(f64, f64)> = pois.iter().map(|p| (p.1, p.2)).collect();
    let proj = LocalProjection::centered_on(&coords);
    let xy: Vec<[f64; 2]> = coords.iter().map(|c| {
        let (x, y) = proj.project(*c);
        [x, y]
    }).collect();

    let (labels, centers) = kmeans(&xy, k, seed);

    let mut order: Vec<usize> = (0..k).collect();
    let geo_centers: Vec<(f64, f64)> = centers.iter().map(|c| proj.unproject((c[0], c[1]))).collect();
    order.sort_by(|&a, &b| {
        geo_centers[a].partial_cmp(&geo_centers[b]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut rename = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        rename[old] = new;
    }
    let width = if k > 100 { 3 } else { 2 };
    let name = |c: usize| format!("G{:0width$}", rename[c], width = width);

    let mut cells = GridCells::default();
    for (poi, &label) in pois.iter().zip(&labels) {
        cells.assignment.insert(poi.0.clone(), name(label));
    }
    for (c, g) in geo_centers.iter().enumerate() {
        cells.centroids.insert(name(c), *g);
    }
    Ok(cells)
}

fn sq(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Returns (labels, centers). Assumes `k <= distinct points`.
pub(crate) fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> (Vec<usize>, Vec<[f64; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();

    // k-means++ seeding
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[idx];
        centers.push(c);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq(p, &c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest(p, &centers);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            } else {
                // empty cell: move it onto the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq(&points[a], &centers[labels[a]])
                            .partial_cmp(&sq(&points[b], &centers[labels[b]]))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .unwrap_or(0);
                centers[c] = points[far];
                labels[far] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (labels, centers)
}

fn nearest(p: &[f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq(p, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}
