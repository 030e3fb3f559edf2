//! Procedural 1-peak and 4-peak toroidal height maps, and peak analysis.
//!
//! A map is a sum of periodic (von Mises) bumps, smoothed with the wrapped
//! box filter and rescaled so its minimum is 0 and its maximum exactly 32.
//! Candidates whose peak structure is off are rejected and redrawn.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::torus::{box_kernel, circular_conv3x3, Grid, Node, Torus, GRID};

pub const MAX_HEIGHT: f64 = 32.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeParams {
    pub smoothing_passes: usize,
    /// Minimum wrapped Manhattan distance between peak centers.
    pub min_peak_distance: usize,
    /// Minimum prominence of every peak after rescaling.
    pub min_prominence: f64,
    pub max_attempts: usize,
    /// Range of the bump concentration; larger is narrower.
    pub kappa: (f64, f64),
    /// Amplitude range of the tallest bump and of the others (4-peak maps).
    pub global_amplitude: (f64, f64),
    pub local_amplitude: (f64, f64),
}

impl Default for LandscapeParams {
    fn default() -> Self {
        Self {
            smoothing_passes: 2,
            min_peak_distance: 6,
            min_prominence: 2.0,
            max_attempts: 1000,
            kappa: (2.0, 5.0),
            global_amplitude: (1.0, 1.2),
            local_amplitude: (0.4, 0.8),
        }
    }
}

impl LandscapeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_attempts > 0
            && self.min_prominence >= 0.0
            && self.kappa.0 > 0.0
            && self.kappa.0 <= self.kappa.1
            && self.local_amplitude.0 > 0.0
            && self.local_amplitude.0 <= self.local_amplitude.1
            && self.global_amplitude.0 <= self.global_amplitude.1
            && self.local_amplitude.1 < self.global_amplitude.0;
        if ok {
            Ok(())
        } else {
            Err(CoreError::Invalid(format!("bad landscape parameters {self:?}")))
        }
    }
}

/// A 24×24 elevation grid in [0, 32] with a known number of peaks.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightMap {
    pub landscape_id: String,
    pub seed: u64,
    pub peaks: usize,
    pub values: Grid<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeightMapRecord {
    landscape_id: String,
    seed: u64,
    peaks: usize,
    values: Vec<Vec<f64>>,
}

impl Serialize for HeightMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HeightMapRecord {
            landscape_id: self.landscape_id.clone(),
            seed: self.seed,
            peaks: self.peaks,
            values: self.values.rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for HeightMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = HeightMapRecord::deserialize(d)?;
        if r.values.len() != GRID {
            return Err(D::Error::custom(format!("expected {GRID} rows, got {}", r.values.len())));
        }
        let values = Grid::from_rows(&r.values).ok_or_else(|| D::Error::custom("ragged height map"))?;
        if values.values().iter().any(|v| !(0.0..=MAX_HEIGHT).contains(v)) {
            return Err(D::Error::custom("height outside [0, 32]"));
        }
        if r.peaks != 1 && r.peaks != 4 {
            return Err(D::Error::custom(format!("peak count must be 1 or 4, got {}", r.peaks)));
        }
        Ok(HeightMap { landscape_id: r.landscape_id, seed: r.seed, peaks: r.peaks, values })
    }
}

pub fn height_at(map: &HeightMap, node: Node) -> f64 {
    map.values.get(node)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Peak {
    pub node: Node,
    pub height: f64,
    /// Drop from the peak to the highest saddle leading to strictly higher
    /// ground; for the global maximum, the drop to the map minimum.
    pub prominence: f64,
}

/// Strict local maxima, tallest first.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakReport {
    pub peaks: Vec<Peak>,
}

impl PeakReport {
    pub fn count(&self) -> usize {
        self.peaks.len()
    }

    pub fn global_max(&self) -> Option<&Peak> {
        self.peaks.first()
    }

    /// True when exactly one peak attains the greatest height.
    pub fn has_unique_global_max(&self) -> bool {
        match self.peaks.as_slice() {
            [] => false,
            [_] => true,
            [a, b, ..] => a.height > b.height,
        }
    }
}

fn is_strict_max(grid: &Grid<f64>, t: &Torus, node: Node) -> bool {
    let h = grid.get(node);
    t.neighbors8(node).iter().all(|&m| grid.get(m) < h)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Strict wrapped 8-neighborhood maxima with prominences.
///
/// Prominence comes from a descending sweep with union-find: when two
/// components meet at a node, the one whose summit is lower ends there, and
/// its summit's prominence is the summit height minus the meeting height.
/// Equal heights are ordered by cell index.
pub fn detect_peaks_grid(grid: &Grid<f64>) -> PeakReport {
    let t = grid.torus();
    let h = grid.values();
    let n = h.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let mut parent: Vec<usize> = (0..n).collect();
    let summit: Vec<usize> = (0..n).collect();
    let mut added = vec![false; n];
    let mut prominence = vec![f64::NAN; n];
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);

    for &u in &order {
        added[u] = true;
        let mut roots: Vec<usize> = t
            .neighbors8(t.node(u))
            .iter()
            .map(|&m| t.index(m))
            .filter(|&v| added[v])
            .map(|v| find(&mut parent, v))
            .collect();
        roots.sort_by_key(|&r| rank[summit[r]]);
        roots.dedup();
        let Some(&top) = roots.first() else {
            continue;
        };
        parent[u] = top;
        for &r in &roots[1..] {
            let s = summit[r];
            if prominence[s].is_nan() {
                prominence[s] = h[s] - h[u];
            }
            parent[r] = top;
        }
    }

    let mut peaks: Vec<Peak> = (0..n)
        .filter(|&i| is_strict_max(grid, &t, t.node(i)))
        .map(|i| {
            let p = if prominence[i].is_nan() { h[i] - min } else { prominence[i] };
            Peak { node: t.node(i), height: h[i], prominence: p }
        })
        .collect();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height).then_with(|| a.node.cmp(&b.node)));
    PeakReport { peaks }
}

pub fn detect_peaks(map: &HeightMap) -> PeakReport {
    detect_peaks_grid(&map.values)
}

fn draw_centers(rng: &mut ChaCha8Rng, t: &Torus, count: usize, min_dist: usize) -> Option<Vec<Node>> {
    let mut centers: Vec<Node> = Vec::with_capacity(count);
    for _ in 0..10_000 {
        if centers.len() == count {
            break;
        }
        let c = Node::new(rng.gen_range(0..t.n), rng.gen_range(0..t.n));
        if centers.iter().all(|&o| t.manhattan(o, c).total >= min_dist) {
            centers.push(c);
        }
    }
    (centers.len() == count).then_some(centers)
}

fn candidate(rng: &mut ChaCha8Rng, peaks: usize, params: &LandscapeParams) -> Option<Grid<f64>> {
    let t = Torus::STANDARD;
    let centers = draw_centers(rng, &t, peaks, params.min_peak_distance)?;
    let mut grid = Grid::filled(t.n, 0.0);
    for (k, c) in centers.iter().enumerate() {
        let (lo, hi) = if k == 0 { params.global_amplitude } else { params.local_amplitude };
        let amp = rng.gen_range(lo..=hi);
        let kx = rng.gen_range(params.kappa.0..=params.kappa.1);
        let ky = rng.gen_range(params.kappa.0..=params.kappa.1);
        for node in t.nodes() {
            let ax = TAU * (node.x as f64 - c.x as f64) / t.n as f64;
            let ay = TAU * (node.y as f64 - c.y as f64) / t.n as f64;
            let v = amp * (kx * (ax.cos() - 1.0) + ky * (ay.cos() - 1.0)).exp();
            grid.set(node, grid.get(node) + v);
        }
    }
    let kernel = box_kernel();
    for _ in 0..params.smoothing_passes {
        grid = circular_conv3x3(&grid, &kernel);
    }
    let (min, max) = grid.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = max - min;
    if !(span > 0.0) {
        return None;
    }
    for v in grid.values_mut() {
        *v = (*v - min) / span * MAX_HEIGHT;
    }
    Some(grid)
}

/// Whether a grid has the structure required of a map with `peaks` peaks.
pub fn acceptable(report: &PeakReport, peaks: usize, params: &LandscapeParams) -> bool {
    let t = Torus::STANDARD;
    report.count() == peaks
        && report.has_unique_global_max()
        && report.peaks.iter().all(|p| p.prominence >= params.min_prominence && p.prominence > 0.0)
        && report.peaks.iter().enumerate().all(|(i, a)| {
            report.peaks[i + 1..].iter().all(|b| t.manhattan(a.node, b.node).total >= params.min_peak_distance)
        })
}

/// Draw a map with exactly `peaks` peaks, deterministically from `seed`.
pub fn generate(seed: u64, peaks: usize, params: &LandscapeParams) -> Result<HeightMap> {
    if peaks != 1 && peaks != 4 {
        return Err(CoreError::Invalid(format!("peak count must be 1 or 4, got {peaks}")));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..params.max_attempts {
        let Some(grid) = candidate(&mut rng, peaks, params) else {
            continue;
        };
        if acceptable(&detect_peaks_grid(&grid), peaks, params) {
            return Ok(HeightMap { landscape_id: format!("map-{seed:016x}-{peaks}"), seed, peaks, values: grid });
        }
    }
    Err(CoreError::GenerationFailed { peaks, attempts: params.max_attempts })
}

/// Lowest and highest elevation.
pub fn range(map: &HeightMap) -> (f64, f64) {
    map.values.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    /// Prominence by exhaustive threshold search: the highest level `t` at
    /// which the peak is connected, through cells at least `t` high, to a
    /// strictly higher cell.
    fn brute_prominence(grid: &Grid<f64>, peak: Node) -> f64 {
        let t = grid.torus();
        let h = grid.get(peak);
        let mut levels: Vec<f64> = grid.values().iter().copied().filter(|&v| v <= h).collect();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        for &level in &levels {
            let mut seen = vec![false; t.cells()];
            let mut queue = VecDeque::from([peak]);
            seen[t.index(peak)] = true;
            while let Some(u) = queue.pop_front() {
                if grid.get(u) > h {
                    return h - level;
                }
                for m in t.neighbors8(u) {
                    if !seen[t.index(m)] && grid.get(m) >= level {
                        seen[t.index(m)] = true;
                        queue.push_back(m);
                    }
                }
            }
        }
        h - levels.last().copied().unwrap_or(h)
    }

    fn brute_maxima(grid: &Grid<f64>) -> Vec<Node> {
        let t = grid.torus();
        t.nodes()
            .filter(|&c| {
                let h = grid.get(c);
                (-1i64..=1).all(|dy| {
                    (-1i64..=1).all(|dx| (dx == 0 && dy == 0) || grid.get(t.wrap(c.x as i64 + dx, c.y as i64 + dy)) < h)
                })
            })
            .collect()
    }

    #[test]
    fn constant_map_has_no_peaks() {
        assert_eq!(detect_peaks_grid(&Grid::filled(GRID, 3.0)).count(), 0);
    }

    #[test]
    fn isolated_delta_has_full_prominence() {
        let mut g = Grid::filled(GRID, 0.0);
        g.set(Node::new(3, 3), 7.5);
        let r = detect_peaks_grid(&g);
        assert_eq!(r.count(), 1);
        assert_eq!(r.peaks[0].node, Node::new(3, 3));
        assert_eq!(r.peaks[0].prominence, 7.5);
    }

    #[test]
    fn two_bumps_saddle() {
        // A ridge profile along x, constant in y would tie; vary y slightly.
        let mut g = Grid::filled(8, 0.0);
        for node in Torus::new(8).nodes() {
            let base = [1.0, 5.0, 2.0, 4.0, 1.5, 0.5, 0.2, 0.1][node.x];
            g.set(node, base - 0.01 * node.y.abs_diff(3) as f64);
        }
        let r = detect_peaks_grid(&g);
        assert_eq!(r.count(), 2);
        assert!((r.peaks[1].prominence - 2.0).abs() < 1e-12);
        assert!((r.peaks[0].prominence - (5.0 - 0.06)).abs() < 1e-12);
    }

    #[test]
    fn generated_examples() {
        let p = LandscapeParams::default();
        let a = generate(7, 1, &p).unwrap();
        assert_eq!(detect_peaks(&a).count(), 1);
        assert_eq!(a, generate(7, 1, &p).unwrap());
        let b = generate(11, 4, &p).unwrap();
        let r = detect_peaks(&b);
        assert_eq!(r.count(), 4);
        assert!(r.peaks[0].height > r.peaks[1].height);
        assert_eq!(brute_maxima(&b.values).len(), 4);
        let (lo, hi) = range(&b);
        assert_eq!((lo, hi), (0.0, 32.0));
        assert_ne!(generate(8, 1, &p).unwrap().values, a.values);
    }

    #[test]
    fn prominence_matches_brute_force_on_generated_maps() {
        let p = LandscapeParams::default();
        for seed in 0..10 {
            let map = generate(seed, 4, &p).unwrap();
            for peak in detect_peaks(&map).peaks {
                assert!((peak.prominence - brute_prominence(&map.values, peak.node)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn height_lookup_and_global_max() {
        let map = generate(3, 4, &LandscapeParams::default()).unwrap();
        let t = Torus::STANDARD;
        let max = t.nodes().map(|n| height_at(&map, n)).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, detect_peaks(&map).global_max().unwrap().height);
        assert_eq!(height_at(&map, Node::new(5, 9)), map.values.at(9, 5));
        assert_eq!(height_at(&map, t.wrap(5 + 24, 9)), height_at(&map, Node::new(5, 9)));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let map = generate(5, 4, &LandscapeParams::default()).unwrap();
        let s = serde_json::to_string(&map).unwrap();
        assert!(s.starts_with("{\"landscape_id\""));
        assert_eq!(serde_json::from_str::<HeightMap>(&s).unwrap(), map);
        let bad = s.replacen("\"peaks\":4", "\"peaks\":3", 1);
        assert!(serde_json::from_str::<HeightMap>(&bad).is_err());
    }

    #[test]
    fn infeasible_params_fail() {
        let p = LandscapeParams { min_peak_distance: 30, max_attempts: 5, ..Default::default() };
        assert!(matches!(generate(1, 4, &p), Err(CoreError::GenerationFailed { .. })));
        assert!(generate(1, 2, &LandscapeParams::default()).is_err());
    }

    fn random_grid(n: usize) -> impl Strategy<Value = Grid<f64>> {
        proptest::collection::vec(0.0..10.0f64, n * n).prop_map(move |v| Grid::from_vec(n, v).unwrap())
    }

    proptest! {
        #[test]
        fn union_find_matches_brute_force(g in random_grid(7)) {
            let r = detect_peaks_grid(&g);
            let mut want = brute_maxima(&g);
            let mut got: Vec<Node> = r.peaks.iter().map(|p| p.node).collect();
            want.sort();
            got.sort();
            prop_assert_eq!(got, want);
            for p in &r.peaks {
                prop_assert!((p.prominence - brute_prominence(&g, p.node)).abs() < 1e-12);
                prop_assert!(p.prominence >= 0.0);
            }
        }

        #[test]
        fn analysis_is_shift_invariant(seed in 0u64..40, dr in 0usize..24, dc in 0usize..24) {
            let map = generate(seed, 4, &LandscapeParams::default()).unwrap();
            let a = detect_peaks_grid(&map.values);
            let b = detect_peaks_grid(&map.values.roll(dr, dc));
            prop_assert_eq!(a.count(), b.count());
            for (p, q) in a.peaks.iter().zip(&b.peaks) {
                prop_assert_eq!(p.height, q.height);
                prop_assert!((p.prominence - q.prominence).abs() < 1e-12);
            }
        }
    }
}
