//! Grids, anisotropic distances, the powered semivariogram, and maximin
//! orderings with nearest-previous neighbour sets.
//!
//! Coordinates are planar and measured in units of 100 km. Anisotropy is a
//! stretch of the y-coordinate by `exp(theta_scale)` (no rotation).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lonlat: Option<(f64, f64)>,
}

/// A fixed set of D sites with ids `0..D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<GridPoint>,
}

impl Grid {
    /// Validates ids (unique, contiguous from 0) and rejects duplicate
    /// coordinates. Points are stored by id.
    pub fn new(mut points: Vec<GridPoint>) -> Result<Self> {
        points.sort_by_key(|p| p.id);
        for (i, p) in points.iter().enumerate() {
            if p.id != i {
                return Err(Error::Data(format!(
                    "grid ids must be unique and contiguous from 0; expected id {i}, found {}",
                    p.id
                )));
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::Data(format!("grid point {} has non-finite coordinates", p.id)));
            }
        }
        let mut by_coord: Vec<(f64, f64, usize)> = points.iter().map(|p| (p.x, p.y, p.id)).collect();
        by_coord.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for w in by_coord.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Data(format!(
                    "grid points {} and {} share coordinates ({}, {})",
                    w[0].2, w[1].2, w[0].0, w[0].1
                )));
            }
        }
        Ok(Self { points })
    }

    /// Grid from planar coordinates only, ids assigned in order.
    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().enumerate().map(|(id, &(x, y))| GridPoint { id, x, y, lonlat: None }).collect())
    }

    /// Regular `nx` by `ny` lattice with the given spacing, row-major from the
    /// lower-left corner.
    pub fn regular(nx: usize, ny: usize, spacing: f64) -> Self {
        let mut coords = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                coords.push((i as f64 * spacing, j as f64 * spacing));
            }
        }
        Self::from_xy(&coords).expect("regular lattice is always valid")
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &GridPoint {
        &self.points[id]
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        let sx: f64 = self.points.iter().map(|p| p.x).sum();
        let sy: f64 = self.points.iter().map(|p| p.y).sum();
        (sx / n, sy / n)
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b, c, d), p| {
                (a.min(p.x), b.min(p.y), c.max(p.x), d.max(p.y))
            })
    }

    /// Sub-grid made of the listed ids, re-labelled `0..ids.len()`.
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        Self::new(ids.iter().enumerate().map(|(new_id, &old)| GridPoint { id: new_id, ..self.points[old] }).collect())
    }
}

/// Parameters of the powered semivariogram
/// `gamma(s1, s2) = (||s1 - s2||_aniso / exp(theta_extent))^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemivariogramParams {
    pub alpha: f64,
    pub theta_extent: f64,
    pub theta_scale: f64,
}

impl SemivariogramParams {
    pub fn new(alpha: f64, theta_extent: f64, theta_scale: f64) -> Result<Self> {
        let p = Self { alpha, theta_extent, theta_scale };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 2], got {}", self.alpha)));
        }
        if !self.theta_extent.is_finite() || !self.theta_scale.is_finite() {
            return Err(Error::Config("theta_extent and theta_scale must be finite".into()));
        }
        Ok(())
    }

    pub fn with_extent(self, theta_extent: f64) -> Self {
        Self { theta_extent, ..self }
    }

    /// Semivariogram as a function of anisotropic distance.
    pub fn gamma_at(&self, distance: f64) -> f64 {
        if distance == 0.0 {
            return 0.0;
        }
        (distance / self.theta_extent.exp()).powf(self.alpha)
    }
}

/// Euclidean distance after stretching the y-difference by `exp(theta_scale)`.
pub fn anisotropic_distance(s1: &GridPoint, s2: &GridPoint, theta_scale: f64) -> f64 {
    let dx = s1.x - s2.x;
    let dy = (s1.y - s2.y) * theta_scale.exp();
    dx.hypot(dy)
}

pub fn semivariogram(s1: &GridPoint, s2: &GridPoint, params: &SemivariogramParams) -> f64 {
    params.gamma_at(anisotropic_distance(s1, s2, params.theta_scale))
}

/// Limit of the pairwise conditional exceedance probability of a
/// Brown–Resnick process, `2 (1 - Phi(sqrt(gamma / 2)))`.
pub fn pairwise_limit_prob(gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Numeric(format!("semivariogram value must be >= 0, got {gamma}")));
    }
    // 2 (1 - Phi(x)) = erfc(x / sqrt 2), evaluated without cancellation
    Ok(libm::erfc(gamma.sqrt() / 2.0))
}

/// A point ordering with, for each position `j`, the grid ids of up to `k`
/// earlier points used as conditioning set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub permutation: Vec<usize>,
    pub neighbor_sets: Vec<Vec<usize>>,
}

impl Ordering {
    /// Position of every grid id in the permutation.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.permutation.len()];
        for (j, &id) in self.permutation.iter().enumerate() {
            pos[id] = j;
        }
        pos
    }

    pub fn from_permutation(permutation: Vec<usize>) -> Self {
        let n = permutation.len();
        Self { permutation, neighbor_sets: vec![Vec::new(); n] }
    }
}

/// Exact greedy maximin ordering: the point closest to the centroid comes
/// first (lowest id on ties), then repeatedly the point whose distance to the
/// already selected set is largest (lowest id on ties).
///
/// The running minimum-distance update makes this O(D^2) for any D, so the
/// exact rule is used at every size.
pub fn maximin_ordering(grid: &Grid) -> Result<Ordering> {
    if grid.is_empty() {
        return Err(Error::Data("maximin ordering of an empty grid".into()));
    }
    let (cx, cy) = grid.centroid();
    let mut start = 0;
    let mut best = f64::INFINITY;
    for p in grid.points() {
        let d = (p.x - cx).hypot(p.y - cy);
        if d < best {
            best = d;
            start = p.id;
        }
    }
    maximin_ordering_from(grid, start)
}

/// Greedy maximin ordering seeded with an explicit first point.
pub fn maximin_ordering_from(grid: &Grid, start: usize) -> Result<Ordering> {
    let n = grid.len();
    if start >= n {
        return Err(Error::Data(format!("start point {start} outside grid of size {n}")));
    }
    let pts = grid.points();
    let mut selected = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut perm = Vec::with_capacity(n);
    let mut current = start;
    loop {
        selected[current] = true;
        perm.push(current);
        if perm.len() == n {
            break;
        }
        let c = &pts[current];
        let mut next = usize::MAX;
        let mut next_d = f64::NEG_INFINITY;
        for (i, p) in pts.iter().enumerate() {
            if selected[i] {
                continue;
            }
            let d = (p.x - c.x).hypot(p.y - c.y);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if min_dist[i] > next_d {
                next_d = min_dist[i];
                next = i;
            }
        }
        current = next;
    }
    Ok(Ordering::from_permutation(perm))
}

/// Fill the conditioning sets: for position `j`, the `min(j, k)` earlier
/// points nearest in anisotropic distance, nearest first (earlier position
/// wins ties).
pub fn neighbor_sets(ordering: &Ordering, grid: &Grid, k: usize, theta_scale: f64) -> Ordering {
    let pts = grid.points();
    let perm = &ordering.permutation;
    let sets = (0..perm.len())
        .map(|j| {
            let here = &pts[perm[j]];
            let mut cand: Vec<(f64, usize)> = perm[..j]
                .iter()
                .enumerate()
                .map(|(pos, &id)| (anisotropic_distance(here, &pts[id], theta_scale), pos))
                .collect();
            let take = k.min(j);
            if take < cand.len() {
                cand.select_nth_unstable_by(take, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(take);
            }
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().map(|(_, pos)| perm[pos]).collect()
        })
        .collect();
    Ordering { permutation: perm.clone(), neighbor_sets: sets }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pt(x: f64, y: f64) -> GridPoint {
        GridPoint { id: 0, x, y, lonlat: None }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(anisotropic_distance(&pt(1.0, 2.0), &pt(1.0, 2.0), 0.3), 0.0);
        assert_eq!(anisotropic_distance(&pt(0.0, 0.0), &pt(3.0, 4.0), 0.0), 5.0);
        let d = anisotropic_distance(&pt(0.0, 0.0), &pt(0.0, 1.0), 2f64.ln());
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn semivariogram_examples() {
        let p = SemivariogramParams::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(semivariogram(&pt(0.0, 0.0), &pt(0.0, 0.0), &p), 0.0);
        assert!((semivariogram(&pt(0.0, 0.0), &pt(1.0, 0.0), &p) - 1.0).abs() < 1e-15);
        // (3 / e^1.81)^1.27 evaluated in 40-digit arithmetic
        let p = SemivariogramParams::new(1.27, 1.81, 0.0).unwrap();
        let g = semivariogram(&pt(0.0, 0.0), &pt(3.0, 0.0), &p);
        assert!((g - 0.405_164_389_840_021_1).abs() < 1e-13, "{g}");
    }

    #[test]
    fn params_are_validated() {
        assert!(SemivariogramParams::new(0.0, 0.0, 0.0).is_err());
        assert!(SemivariogramParams::new(2.5, 0.0, 0.0).is_err());
        assert!(SemivariogramParams::new(2.0, f64::NAN, 0.0).is_err());
        assert!(SemivariogramParams::new(2.0, 1.0, -1.0).is_ok());
    }

    #[test]
    fn limit_prob_examples() {
        assert!((pairwise_limit_prob(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(pairwise_limit_prob(1e6).unwrap() < 1e-100);
        assert!((pairwise_limit_prob(2.0).unwrap() - 0.317_310_507_862_914_1).abs() < 1e-12);
        assert!(pairwise_limit_prob(-0.1).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::from_xy(&[(0.0, 0.0), (0.0, 0.0)]).is_err());
        let bad =
            vec![GridPoint { id: 0, x: 0.0, y: 0.0, lonlat: None }, GridPoint { id: 2, x: 1.0, y: 0.0, lonlat: None }];
        assert!(Grid::new(bad).is_err());
    }

    #[test]
    fn ordering_small_cases() {
        let g = Grid::from_xy(&[(5.0, 5.0)]).unwrap();
        assert_eq!(maximin_ordering(&g).unwrap().permutation, vec![0]);
        assert!(maximin_ordering(&Grid { points: vec![] }).is_err());

        let g = Grid::from_xy(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).unwrap();
        let o = maximin_ordering(&g).unwrap();
        assert_eq!(o.permutation[0], 1);
        assert!(o.permutation[1] == 0 || o.permutation[1] == 2);
    }

    /// Exhaustive greedy oracle: recompute every min-distance from scratch.
    fn greedy_oracle(grid: &Grid) -> Vec<usize> {
        let pts = grid.points();
        let (cx, cy) = grid.centroid();
        let first = (0..pts.len())
            .min_by(|&a, &b| {
                let da = (pts[a].x - cx).hypot(pts[a].y - cy);
                let db = (pts[b].x - cx).hypot(pts[b].y - cy);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        let mut order = vec![first];
        while order.len() < pts.len() {
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for i in 0..pts.len() {
                if order.contains(&i) {
                    continue;
                }
                let m = order
                    .iter()
                    .map(|&j| (pts[i].x - pts[j].x).hypot(pts[i].y - pts[j].y))
                    .fold(f64::INFINITY, f64::min);
                if m > best.0 {
                    best = (m, i);
                }
            }
            order.push(best.1);
        }
        order
    }

    fn random_grid(n: usize, seed: u64) -> Grid {
        let mut rng = crate::stats::stream_rng(seed, 0);
        let coords: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0)).collect();
        Grid::from_xy(&coords).unwrap()
    }

    #[test]
    fn ordering_matches_exhaustive_greedy() {
        for seed in 0..20 {
            let g = random_grid(10, seed);
            assert_eq!(maximin_ordering(&g).unwrap().permutation, greedy_oracle(&g));
        }
    }

    #[test]
    fn neighbor_examples() {
        let g = random_grid(10, 11);
        let o = maximin_ordering(&g).unwrap();
        let full = neighbor_sets(&o, &g, 9, 0.0);
        assert!(full.neighbor_sets[0].is_empty());
        for j in 0..10 {
            let mut s = full.neighbor_sets[j].clone();
            s.sort();
            let mut prev = o.permutation[..j].to_vec();
            prev.sort();
            assert_eq!(s, prev);
        }
        // brute force nearest-previous search with k = 3
        let ns = neighbor_sets(&o, &g, 3, 0.4);
        for j in 0..10 {
            let here = g.point(o.permutation[j]);
            let mut prev: Vec<(f64, usize)> =
                o.permutation[..j].iter().map(|&id| (anisotropic_distance(here, g.point(id), 0.4), id)).collect();
            prev.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let want: Vec<usize> = prev.iter().take(3).map(|p| p.1).collect();
            assert_eq!(ns.neighbor_sets[j], want);
        }
    }
}
