//! Trajectory encodings: explore/exploit labels, the four image
//! formulations, the ±1 series and channel-wise standardization.
//!
//! Images are channel-major `C × 24 × 24` with row = y, column = x.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::TrajectoryLog;
use crate::error::{CoreError, Result};
use crate::landscape::HeightMap;
use crate::torus::{box_kernel, circular_conv3x3, Grid, Torus, GRID};

pub const SERIES_LEN: usize = 126;
pub const EXPLOIT_RADIUS: usize = 2;
pub const STD_EPSILON: f64 = 1e-8;
const PLANE: usize = GRID * GRID;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Sharp,
    Smooth,
    Bmc,
    Cmc,
}

impl Formulation {
    pub const ALL: [Formulation; 4] = [Formulation::Sharp, Formulation::Smooth, Formulation::Bmc, Formulation::Cmc];

    pub fn channels(self) -> usize {
        match self {
            Formulation::Sharp | Formulation::Smooth => 1,
            Formulation::Bmc => 3,
            Formulation::Cmc => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::Sharp => "sharp",
            Formulation::Smooth => "smooth",
            Formulation::Bmc => "bmc",
            Formulation::Cmc => "cmc",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Formulation::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| CoreError::Invalid(format!("unknown formulation `{s}` (expected sharp, smooth, bmc or cmc)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Whether behavioral distances wrap around the torus edges.
    pub wrap_distance: bool,
    /// Smoothing kernel for the smooth formulation.
    pub kernel: [[f64; 3]; 3],
    pub series_len: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self { wrap_distance: true, kernel: box_kernel(), series_len: SERIES_LEN }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveLabel {
    Explore,
    Exploit,
}

impl MoveLabel {
    pub fn sign(self) -> i8 {
        match self {
            MoveLabel::Explore => 1,
            MoveLabel::Exploit => -1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoveClass {
    pub labels: Vec<MoveLabel>,
    /// Per-axis displacement from the preceding move; `(0, 0)` for the first.
    pub displacements: Vec<(usize, usize)>,
}

impl MoveClass {
    pub fn explorations(&self) -> usize {
        self.labels.iter().filter(|&&l| l == MoveLabel::Explore).count()
    }
}

fn axis(a: usize, b: usize, wrap: bool) -> usize {
    let d = a.abs_diff(b);
    if wrap {
        d.min(GRID - d)
    } else {
        d
    }
}

/// A move exploits when it lands within distance 2 of any earlier move; the
/// first move explores.
pub fn classify_moves(log: &TrajectoryLog, cfg: &EncodingConfig) -> Result<MoveClass> {
    let moves = &log.moves;
    if moves.is_empty() {
        return Err(CoreError::EmptyTrajectory);
    }
    let t = Torus::STANDARD;
    let mut labels = Vec::with_capacity(moves.len());
    let mut displacements = Vec::with_capacity(moves.len());
    let mut visited = vec![false; t.cells()];
    let mut distinct = Vec::with_capacity(moves.len());
    for (i, &m) in moves.iter().enumerate() {
        let near = distinct.iter().any(|&v| t.distance(v, m, cfg.wrap_distance) <= EXPLOIT_RADIUS);
        labels.push(if near { MoveLabel::Exploit } else { MoveLabel::Explore });
        displacements.push(match i {
            0 => (0, 0),
            _ => (axis(moves[i - 1].x, m.x, cfg.wrap_distance), axis(moves[i - 1].y, m.y, cfg.wrap_distance)),
        });
        if !visited[t.index(m)] {
            visited[t.index(m)] = true;
            distinct.push(m);
        }
    }
    Ok(MoveClass { labels, displacements })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedImage {
    pub formulation: Formulation,
    /// Channel-major values, `channels × 24 × 24`.
    pub data: Vec<f64>,
}

impl EncodedImage {
    pub fn channels(&self) -> usize {
        self.formulation.channels()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * PLANE..(c + 1) * PLANE]
    }
}

fn cell(node: crate::torus::Node) -> usize {
    node.y * GRID + node.x
}

fn sharp_plane(log: &TrajectoryLog, map: &HeightMap) -> Vec<f64> {
    let mut plane = vec![0.0; PLANE];
    for &m in &log.moves {
        plane[cell(m)] = map.values.get(m);
    }
    plane
}

pub fn sharp_im(log: &TrajectoryLog, map: &HeightMap) -> EncodedImage {
    EncodedImage { formulation: Formulation::Sharp, data: sharp_plane(log, map) }
}

pub fn smooth_im(log: &TrajectoryLog, map: &HeightMap, cfg: &EncodingConfig) -> EncodedImage {
    let grid = Grid::from_vec(GRID, sharp_plane(log, map)).expect("plane is 24x24");
    let data = circular_conv3x3(&grid, &cfg.kernel).values().to_vec();
    EncodedImage { formulation: Formulation::Smooth, data }
}

/// Heights, visited mask and the explore (+1) / exploit (-1) state of each
/// node's most recent visit, plus, for cmc, horizontal and vertical
/// exploration flags at exploration destinations.
fn multi_channel(log: &TrajectoryLog, map: &HeightMap, cfg: &EncodingConfig, flags: bool) -> Result<Vec<f64>> {
    let channels = if flags { 5 } else { 3 };
    let mut data = vec![0.0; channels * PLANE];
    data[..PLANE].copy_from_slice(map.values.values());
    if log.moves.is_empty() {
        return Ok(data);
    }
    let classes = classify_moves(log, cfg)?;
    for ((&m, &label), &(dx, dy)) in log.moves.iter().zip(&classes.labels).zip(&classes.displacements) {
        let c = cell(m);
        data[PLANE + c] = 1.0;
        data[2 * PLANE + c] = label.sign() as f64;
        if flags {
            let explore = label == MoveLabel::Explore;
            data[3 * PLANE + c] = if explore && dx > 0 { 1.0 } else { 0.0 };
            data[4 * PLANE + c] = if explore && dy > 0 { 1.0 } else { 0.0 };
        }
    }
    Ok(data)
}

pub fn bmc_im(log: &TrajectoryLog, map: &HeightMap, cfg: &EncodingConfig) -> Result<EncodedImage> {
    Ok(EncodedImage { formulation: Formulation::Bmc, data: multi_channel(log, map, cfg, false)? })
}

pub fn cmc_im(log: &TrajectoryLog, map: &HeightMap, cfg: &EncodingConfig) -> Result<EncodedImage> {
    Ok(EncodedImage { formulation: Formulation::Cmc, data: multi_channel(log, map, cfg, true)? })
}

pub fn encode_image(
    formulation: Formulation,
    log: &TrajectoryLog,
    map: &HeightMap,
    cfg: &EncodingConfig,
) -> Result<EncodedImage> {
    match formulation {
        Formulation::Sharp => Ok(sharp_im(log, map)),
        Formulation::Smooth => Ok(smooth_im(log, map, cfg)),
        Formulation::Bmc => bmc_im(log, map, cfg),
        Formulation::Cmc => cmc_im(log, map, cfg),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesEncoding {
    pub values: Vec<i8>,
    pub true_length: usize,
    /// Set when the trajectory was longer than the series and got cut.
    pub truncated: bool,
}

pub fn series(log: &TrajectoryLog, cfg: &EncodingConfig) -> Result<SeriesEncoding> {
    let classes = classify_moves(log, cfg)?;
    let n = classes.labels.len().min(cfg.series_len);
    let mut values = vec![0i8; cfg.series_len];
    for (v, l) in values.iter_mut().zip(&classes.labels) {
        *v = l.sign();
    }
    Ok(SeriesEncoding { values, true_length: n, truncated: classes.labels.len() > cfg.series_len })
}

/// A model-ready sample. `label` is 0 for solo and 1 for aided sessions.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub session_id: String,
    pub label: u8,
    pub peaks: u8,
    pub formulation: Formulation,
    pub image: Vec<f32>,
    pub series: Vec<f32>,
}

pub fn encode_sample(
    formulation: Formulation,
    log: &TrajectoryLog,
    map: &HeightMap,
    cfg: &EncodingConfig,
) -> Result<EncodedSample> {
    let image = encode_image(formulation, log, map, cfg)?;
    let s = series(log, cfg)?;
    Ok(EncodedSample {
        session_id: log.session_id.clone(),
        label: log.condition.label(),
        peaks: log.peaks as u8,
        formulation,
        image: image.data.iter().map(|&v| v as f32).collect(),
        series: s.values.iter().map(|&v| v as f32).collect(),
    })
}

/// Per-channel mean and standard deviation of image values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of samples the statistics were computed from.
    pub samples: usize,
}

impl ChannelStats {
    /// Population moments over the given samples; zero deviations become
    /// [`STD_EPSILON`].
    pub fn compute<'a>(samples: impl IntoIterator<Item = &'a EncodedSample>, channels: usize) -> Result<Self> {
        let mut sum = vec![0.0f64; channels];
        let mut sq = vec![0.0f64; channels];
        let mut count = 0usize;
        for s in samples {
            if s.image.len() != channels * PLANE {
                return Err(CoreError::Invalid(format!(
                    "sample {} has {} values, expected {}",
                    s.session_id,
                    s.image.len(),
                    channels * PLANE
                )));
            }
            for c in 0..channels {
                for &v in &s.image[c * PLANE..(c + 1) * PLANE] {
                    let v = v as f64;
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            count += 1;
        }
        if count == 0 {
            return Err(CoreError::MissingStats);
        }
        let n = (count * PLANE) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    STD_EPSILON
                }
            })
            .collect();
        Ok(Self { mean, std, samples: count })
    }

    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels], samples: 0 }
    }

    pub fn apply(&self, image: &[f32]) -> Vec<f32> {
        image
            .chunks(PLANE)
            .zip(self.mean.iter().zip(&self.std))
            .flat_map(|(plane, (&m, &s))| plane.iter().map(move |&v| ((v as f64 - m) / s) as f32))
            .collect()
    }
}

/// Standardize image channels in place; series are left as they are.
pub fn normalize(samples: &mut [EncodedSample], stats: Option<&ChannelStats>) -> Result<()> {
    let stats = stats.ok_or(CoreError::MissingStats)?;
    for s in samples {
        if s.image.len() != stats.mean.len() * PLANE {
            return Err(CoreError::Invalid(format!("sample {} does not match the statistics' channels", s.session_id)));
        }
        s.image = stats.apply(&s.image);
    }
    Ok(())
}
