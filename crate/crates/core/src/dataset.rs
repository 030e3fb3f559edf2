//! Encoded corpora, outlier trimming, splits and the binary tensor pack.
//!
//! Pack layout, integers and floats little-endian:
//!
//! ```text
//! "AIDT" | u32 version = 1 | u32 samples | u32 channels | u32 height = 24
//! | u32 width = 24 | u32 series_len = 126 | u32 formulation | u32 subset
//! per sample: u8 label | u8 peaks | f32 image (channel-major) | f32 series
//! u32 CRC32 of everything above
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::TrajectoryLog;
use crate::encoding::{encode_sample, EncodedSample, EncodingConfig, Formulation, SERIES_LEN};
use crate::error::{CoreError, Result};
use crate::landscape::HeightMap;
use crate::torus::GRID;

pub const PACK_MAGIC: &[u8; 4] = b"AIDT";
pub const PACK_VERSION: u32 = 1;
pub const TRIM_FRACTION: f64 = 0.025;
pub const MIN_TRIM_TRIALS: usize = 40;
pub const TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    X1,
    X4,
    All,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::X1, Subset::X4, Subset::All];

    pub fn admits(self, peaks: usize) -> bool {
        match self {
            Subset::X1 => peaks == 1,
            Subset::X4 => peaks == 4,
            Subset::All => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subset::X1 => "x1",
            Subset::X4 => "x4",
            Subset::All => "all",
        }
    }

    fn code(self) -> u32 {
        self as u32
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subset {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Subset::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CoreError::Invalid(format!("unknown subset `{s}` (expected x1, x4 or all)")))
    }
}

fn formulation_code(f: Formulation) -> u32 {
    Formulation::ALL.iter().position(|&g| g == f).expect("listed") as u32
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub seeds: Vec<u64>,
    pub trimmed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub formulation: Formulation,
    pub subset: Subset,
    pub samples: Vec<EncodedSample>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.formulation.channels()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label as usize).collect()
    }

    /// Keep only samples from the given subset's environments.
    pub fn filter(&self, subset: Subset) -> Result<Corpus> {
        if self.subset != Subset::All && self.subset != subset {
            return Err(CoreError::Invalid(format!("cannot take subset {subset} of a {} corpus", self.subset)));
        }
        Ok(Corpus {
            formulation: self.formulation,
            subset,
            samples: self.samples.iter().filter(|s| subset.admits(s.peaks as usize)).cloned().collect(),
            provenance: self.provenance.clone(),
        })
    }

    /// The same corpus with labels permuted by `seed`; a leakage control.
    pub fn with_shuffled_labels(&self, seed: u64) -> Corpus {
        let mut labels: Vec<u8> = self.samples.iter().map(|s| s.label).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = self.clone();
        for (s, l) in out.samples.iter_mut().zip(labels) {
            s.label = l;
        }
        out
    }
}

/// Encode every log against its landscape.
pub fn encode_corpus(
    logs: &[TrajectoryLog],
    maps: &[HeightMap],
    formulation: Formulation,
    cfg: &EncodingConfig,
) -> Result<Corpus> {
    let by_id: HashMap<&str, &HeightMap> = maps.iter().map(|m| (m.landscape_id.as_str(), m)).collect();
    let mut seen = HashSet::new();
    for log in logs {
        if !seen.insert(log.session_id.as_str()) {
            return Err(CoreError::Invalid(format!("duplicate session id `{}`", log.session_id)));
        }
    }
    let samples = logs
        .par_iter()
        .map(|log| {
            let map = by_id
                .get(log.landscape_id.as_str())
                .ok_or_else(|| CoreError::UnknownLandscape(log.landscape_id.clone()))?;
            if map.peaks != log.peaks {
                return Err(CoreError::Invalid(format!(
                    "session {} claims {} peaks but its map has {}",
                    log.session_id, log.peaks, map.peaks
                )));
            }
            encode_sample(formulation, log, map, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { formulation, subset: Subset::All, samples, provenance: Provenance::default() })
}

/// Number of trials dropped from each tail.
pub fn tail_count(n: usize) -> usize {
    (TRIM_FRACTION * n as f64).floor() as usize
}

/// Drop the 2.5% shortest and 2.5% longest trials by submission count. Ties
/// are ordered by session id. Survivors keep their original order.
pub fn trim_outliers(logs: &[TrajectoryLog]) -> Result<Vec<TrajectoryLog>> {
    if logs.len() < MIN_TRIM_TRIALS {
        return Err(CoreError::TooFewTrials { min: MIN_TRIM_TRIALS, got: logs.len() });
    }
    let k = tail_count(logs.len());
    let mut order: Vec<usize> = (0..logs.len()).collect();
    order.sort_by(|&a, &b| {
        logs[a].moves.len().cmp(&logs[b].moves.len()).then_with(|| logs[a].session_id.cmp(&logs[b].session_id))
    });
    let mut keep = vec![false; logs.len()];
    for &i in &order[k..logs.len() - k] {
        keep[i] = true;
    }
    Ok(logs.iter().zip(keep).filter(|(_, k)| *k).map(|(l, _)| l.clone()).collect())
}

/// Trim once; a second attempt on the same provenance is refused.
pub fn trim_once(logs: &[TrajectoryLog], provenance: &mut Provenance) -> Result<Vec<TrajectoryLog>> {
    if provenance.trimmed {
        return Err(CoreError::AlreadyTrimmed);
    }
    let out = trim_outliers(logs)?;
    provenance.trimmed = true;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub fn test_size(n: usize) -> usize {
    (TEST_FRACTION * n as f64).round() as usize
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Uniformly random 80/20 split of `0..n`.
pub fn split_80_20(n: usize, seed: u64) -> Result<SplitSpec> {
    if n < 5 {
        return Err(CoreError::Invalid(format!("an 80/20 split needs at least 5 samples, got {n}")));
    }
    let perm = permutation(n, seed);
    let t = test_size(n);
    let mut test = perm[..t].to_vec();
    let mut train = perm[t..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitSpec { train, test, seed })
}

/// `k` folds over a random permutation; the first `n % k` folds get one
/// extra sample.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<SplitSpec>> {
    if k < 2 || n < k {
        return Err(CoreError::Invalid(format!("{k}-fold cross-validation needs k >= 2 and at least k samples, got {n}")));
    }
    let perm = permutation(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = perm[start..start + size].to_vec();
        let mut train: Vec<usize> = perm[..start].iter().chain(&perm[start + size..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(SplitSpec { train, test, seed });
        start += size;
    }
    Ok(folds)
}

pub fn encode_pack(corpus: &Corpus) -> Result<Vec<u8>> {
    let channels = corpus.channels();
    let image_len = channels * GRID * GRID;
    let mut out = Vec::with_capacity(36 + corpus.len() * (2 + 4 * (image_len + SERIES_LEN)) + 4);
    out.extend_from_slice(PACK_MAGIC);
    for v in [
        PACK_VERSION,
        corpus.len() as u32,
        channels as u32,
        GRID as u32,
        GRID as u32,
        SERIES_LEN as u32,
        formulation_code(corpus.formulation),
        corpus.subset.code(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in &corpus.samples {
        if s.image.len() != image_len || s.series.len() != SERIES_LEN || s.formulation != corpus.formulation {
            return Err(CoreError::Invalid(format!("sample {} does not match the corpus layout", s.session_id)));
        }
        out.push(s.label);
        out.push(s.peaks);
        for v in s.image.iter().chain(&s.series) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CoreError::Format(format!("pack truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

pub fn decode_pack(bytes: &[u8]) -> Result<Corpus> {
    if bytes.len() < 40 || &bytes[..4] != PACK_MAGIC {
        return Err(CoreError::Format("not an AIDT tensor pack".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let mut c = Cursor { bytes: body, pos: 4 };
    let version = c.u32()?;
    if version != PACK_VERSION {
        return Err(CoreError::Format(format!("unsupported pack version {version}")));
    }
    let count = c.u32()? as usize;
    let channels = c.u32()? as usize;
    let (h, w, series_len) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let formulation = *Formulation::ALL
        .get(c.u32()? as usize)
        .ok_or_else(|| CoreError::Format("unknown formulation code".into()))?;
    let subset = *Subset::ALL.get(c.u32()? as usize).ok_or_else(|| CoreError::Format("unknown subset code".into()))?;
    if h != GRID || w != GRID || series_len != SERIES_LEN {
        return Err(CoreError::Format(format!("unexpected dimensions {h}x{w}, series {series_len}")));
    }
    if channels != formulation.channels() {
        return Err(CoreError::Format(format!("{channels} channels do not fit formulation {formulation}")));
    }
    let image_len = channels * GRID * GRID;
    let expected = 36usize
        .checked_add(count.checked_mul(2 + 4 * (image_len + SERIES_LEN)).ok_or_else(|| CoreError::Format("sample count overflows".into()))?)
        .ok_or_else(|| CoreError::Format("sample count overflows".into()))?;
    if body.len() != expected {
        return Err(CoreError::Format(format!("pack body is {} bytes, header implies {expected}", body.len())));
    }
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CoreError::ChecksumMismatch { stored, computed });
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let head = c.take(2)?;
        let (label, peaks) = (head[0], head[1]);
        if label > 1 || (peaks != 1 && peaks != 4) {
            return Err(CoreError::Format(format!("sample {i} has label {label}, peaks {peaks}")));
        }
        samples.push(EncodedSample {
            session_id: format!("sample-{i:05}"),
            label,
            peaks,
            formulation,
            image: c.f32s(image_len)?,
            series: c.f32s(SERIES_LEN)?,
        });
    }
    Ok(Corpus { formulation, subset, samples, provenance: Provenance::default() })
}

pub fn save_pack(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, encode_pack(corpus)?)?;
    Ok(())
}

pub fn load_pack(path: &Path) -> Result<Corpus> {
    decode_pack(&fs::read(path)?)
}
