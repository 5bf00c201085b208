//! Spatial attention maps: fixation filtering of raw gaze streams,
//! duration heat maps, downsampling, normalization, and random control
//! maps.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamodel::{Geometry, GrayRaster};
use crate::error::{Error, Result};

/// One raw eye-tracker sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub timestamp_ms: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

/// A dispersion-filtered fixation: centroid of its member samples plus the
/// accumulated duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub start_ms: f64,
    pub duration_ms: f64,
}

/// Dispersion filter parameters. Defaults follow the tracker setup this
/// pipeline models: 50 px merge radius, 60 ms minimum duration, 300 Hz.
#[derive(Debug, Clone, Copy)]
pub struct FixationFilter {
    pub radius_px: f64,
    pub min_duration_ms: f64,
    pub sample_rate_hz: f64,
}

impl Default for FixationFilter {
    fn default() -> Self {
        FixationFilter {
            radius_px: 50.0,
            min_duration_ms: 60.0,
            sample_rate_hz: 300.0,
        }
    }
}

impl FixationFilter {
    /// Minimum run length in samples: `ceil(min_duration * rate / 1000)`.
    pub fn min_samples(&self) -> usize {
        (self.min_duration_ms * self.sample_rate_hz / 1000.0).ceil() as usize
    }
}

// Accumulates one candidate run. Positions are kept relative to the run's
// first sample so that integer-coordinate streams group identically under
// integer translations.
struct Run {
    first_x: f64,
    first_y: f64,
    start_ms: f64,
    sum_dx: f64,
    sum_dy: f64,
    count: usize,
}

impl Run {
    fn start(sample: &GazeSample) -> Self {
        Run {
            first_x: sample.x,
            first_y: sample.y,
            start_ms: sample.timestamp_ms,
            sum_dx: 0.0,
            sum_dy: 0.0,
            count: 1,
        }
    }

    fn centroid_offset(&self) -> (f64, f64) {
        let c = self.count as f64;
        (self.sum_dx / c, self.sum_dy / c)
    }

    fn push(&mut self, sample: &GazeSample) {
        self.sum_dx += sample.x - self.first_x;
        self.sum_dy += sample.y - self.first_y;
        self.count += 1;
    }

    fn finish(&self, filter: &FixationFilter) -> Option<Fixation> {
        if self.count < filter.min_samples() {
            return None;
        }
        let (cdx, cdy) = self.centroid_offset();
        Some(Fixation {
            centroid_x: self.first_x + cdx,
            centroid_y: self.first_y + cdy,
            start_ms: self.start_ms,
            duration_ms: self.count as f64 * 1000.0 / filter.sample_rate_hz,
        })
    }
}

/// Dispersion-threshold fixation filter.
///
/// Maximal runs of consecutive valid samples staying within `radius_px` of
/// the running centroid become fixations; runs shorter than
/// [`FixationFilter::min_samples`] are discarded. Invalid samples break
/// runs. The stream must be strictly time-ordered.
pub fn filter_fixations(
    samples: &[GazeSample],
    filter: &FixationFilter,
) -> Result<Vec<Fixation>> {
    if filter.sample_rate_hz <= 0.0 {
        return Err(Error::InvalidInput("sample rate must be positive".into()));
    }
    for i in 1..samples.len() {
        if samples[i].timestamp_ms <= samples[i - 1].timestamp_ms {
            return Err(Error::NonMonotonicTimestamps { index: i });
        }
    }

    let mut fixations = Vec::new();
    let mut run: Option<Run> = None;
    for sample in samples {
        if !sample.valid {
            if let Some(r) = run.take() {
                fixations.extend(r.finish(filter));
            }
            continue;
        }
        match run.as_mut() {
            None => run = Some(Run::start(sample)),
            Some(r) => {
                let (cdx, cdy) = r.centroid_offset();
                let dx = (sample.x - r.first_x) - cdx;
                let dy = (sample.y - r.first_y) - cdy;
                if (dx * dx + dy * dy).sqrt() <= filter.radius_px {
                    r.push(sample);
                } else {
                    fixations.extend(r.finish(filter));
                    run = Some(Run::start(sample));
                }
            }
        }
    }
    if let Some(r) = run.take() {
        fixations.extend(r.finish(filter));
    }
    Ok(fixations)
}

/// Fraction of samples flagged valid; streams under the participant-quality
/// threshold (25% by default) are excluded upstream.
pub fn valid_fraction(samples: &[GazeSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| s.valid).count() as f64 / samples.len() as f64
}

/// Accumulated fixation-duration density over a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl HeatMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        HeatMap {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                context: "heat map buffer".into(),
                expected: width as usize * height as usize,
                found: values.len(),
            });
        }
        Ok(HeatMap {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Row-major view of the grid.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Render fixations into an absolute-duration heat map.
///
/// The first `skip_first` fixations are dropped (central-cross bias).
/// Each remaining fixation deposits `duration_ms` of mass as an isotropic
/// Gaussian of the given sigma centered at its centroid, truncated to the
/// 3-sigma box around the center; mass falling off the grid is clipped.
/// Cell `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)`.
pub fn accumulate_heatmap(
    fixations: &[Fixation],
    width: u32,
    height: u32,
    kernel_sigma: f64,
    skip_first: usize,
) -> HeatMap {
    assert!(width > 0 && height > 0, "heat map must be at least 1x1");
    assert!(kernel_sigma > 0.0, "kernel sigma must be positive");
    let mut map = HeatMap::zeros(width, height);
    let radius = 3.0 * kernel_sigma;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * kernel_sigma * kernel_sigma);
    let inv_two_sigma_sq = 1.0 / (2.0 * kernel_sigma * kernel_sigma);

    for fix in fixations.iter().skip(skip_first) {
        let x_lo = ((fix.centroid_x - radius).floor().max(0.0)) as i64;
        let x_hi = ((fix.centroid_x + radius).ceil().min(width as f64 - 1.0)) as i64;
        let y_lo = ((fix.centroid_y - radius).floor().max(0.0)) as i64;
        let y_hi = ((fix.centroid_y + radius).ceil().min(height as f64 - 1.0)) as i64;
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let dx = (x as f64 + 0.5) - fix.centroid_x;
                let dy = (y as f64 + 0.5) - fix.centroid_y;
                if dx.abs() <= radius && dy.abs() <= radius {
                    let d_sq = dx * dx + dy * dy;
                    map.values[y as usize * width as usize + x as usize] +=
                        fix.duration_ms * norm * (-d_sq * inv_two_sigma_sq).exp();
                }
            }
        }
    }
    map
}

/// Element-wise arithmetic mean of heat maps with identical geometry.
pub fn average_heatmaps(maps: &[HeatMap]) -> Result<HeatMap> {
    let first = maps.first().ok_or_else(|| Error::EmptyInput("heat map list".into()))?;
    let mut out = HeatMap::zeros(first.width, first.height);
    for m in maps {
        if m.width != first.width || m.height != first.height {
            return Err(Error::GeometryMismatch {
                context: "average_heatmaps".into(),
                expected_rows: first.height,
                expected_cols: first.width,
                found_rows: m.height,
                found_cols: m.width,
            });
        }
        for (o, v) in out.values.iter_mut().zip(&m.values) {
            *o += v;
        }
    }
    let count = maps.len() as f64;
    for o in out.values.iter_mut() {
        *o /= count;
    }
    Ok(out)
}

/// Block-average pooling; source dimensions must be integer multiples of
/// the target dimensions. Each target cell is the mean of its block.
pub fn downsample(map: &HeatMap, target_w: u32, target_h: u32) -> Result<HeatMap> {
    if target_w == 0
        || target_h == 0
        || map.width % target_w != 0
        || map.height % target_h != 0
    {
        return Err(Error::InvalidInput(format!(
            "cannot downsample {}x{} to {}x{}: non-integral block size",
            map.width, map.height, target_w, target_h
        )));
    }
    let bx = map.width / target_w;
    let by = map.height / target_h;
    let block = (bx * by) as f64;
    let mut out = HeatMap::zeros(target_w, target_h);
    for ty in 0..target_h {
        for tx in 0..target_w {
            let mut sum = 0.0;
            for y in ty * by..(ty + 1) * by {
                for x in tx * bx..(tx + 1) * bx {
                    sum += map.get(x, y);
                }
            }
            out.values[(ty * target_w + tx) as usize] = sum / block;
        }
    }
    Ok(out)
}

/// Where an attention map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Empirical,
    RandomUniform,
    RandomFixation,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Empirical => "empirical",
            Provenance::RandomUniform => "random_uniform",
            Provenance::RandomFixation => "random_fixation",
        }
    }
}

/// Normalized per-pixel attention weights: non-negative, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    weights: DVector<f64>,
    provenance: Provenance,
    seed: Option<u64>,
}

/// Tolerance on the sum-to-one invariant.
pub const SUM_TOLERANCE: f64 = 1e-9;

impl AttentionMap {
    /// Build from already-normalized weights, enforcing the invariants
    /// `w_j >= 0` and `|sum(w) - 1| <= 1e-9`.
    pub fn new(weights: DVector<f64>, provenance: Provenance, seed: Option<u64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("attention weights".into()));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "attention weights must be non-negative and finite".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "attention weights must sum to 1 (got {sum})"
            )));
        }
        Ok(AttentionMap {
            weights,
            provenance,
            seed,
        })
    }

    /// The constant map `w_j = 1/n`.
    pub fn uniform(n: usize) -> Self {
        AttentionMap {
            weights: DVector::from_element(n, 1.0 / n as f64),
            provenance: Provenance::Empirical,
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Lossy visualization raster: weights scaled so the maximum maps
    /// to intensity 255.
    pub fn to_visualization_raster(&self, geometry: Geometry) -> Result<GrayRaster> {
        if geometry.dim() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "attention map visualization".into(),
                expected: self.len(),
                found: geometry.dim(),
            });
        }
        let max = self.weights.max();
        let data = self
            .weights
            .iter()
            .map(|&w| if max > 0.0 { (w / max * 255.0).round() as u8 } else { 0 })
            .collect();
        GrayRaster::new(geometry.rows, geometry.cols, data)
    }

    /// Exact binary export: 16-byte header (8-byte magic, `n` as u64 LE)
    /// followed by `n` little-endian f64 weights.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(MAP_MAGIC).map_err(io_err)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io_err)?;
        for &v in self.weights.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    /// Read the exact binary format. Files carry no provenance, so loaded
    /// maps are treated as empirical sources.
    pub fn read_from(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header = [0u8; 16];
        file.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[..8] != MAP_MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "bad magic (not an attention map file)".into(),
            });
        }
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let mut buf = vec![0u8; n * 8];
        file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        let weights = DVector::from_iterator(
            n,
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
        );
        AttentionMap::new(weights, Provenance::Empirical, None).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

const MAP_MAGIC: &[u8; 8] = b"EGZMAP01";

/// Parse one trial's gaze stream from CSV (`timestamp_ms,x,y,valid`;
/// valid is 0/1 or true/false).
pub fn read_gaze_csv(path: &Path) -> Result<Vec<GazeSample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: Some(1),
        message: e.to_string(),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    if found != ["timestamp_ms", "x", "y", "valid"] {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: Some(1),
            message: format!(
                "expected header `timestamp_ms,x,y,valid`, found `{}`",
                found.join(",")
            ),
        });
    }

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: Some(line),
            message,
        };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", record.len())));
        }
        let field = |j: usize, name: &str| -> Result<f64> {
            record[j]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("bad {name} `{}`", &record[j])))
        };
        let valid = match &record[3] {
            "1" | "true" | "TRUE" | "True" => true,
            "0" | "false" | "FALSE" | "False" => false,
            other => return Err(parse_err(format!("bad valid flag `{other}`"))),
        };
        samples.push(GazeSample {
            timestamp_ms: field(0, "timestamp")?,
            x: field(1, "x")?,
            y: field(2, "y")?,
            valid,
        });
    }
    Ok(samples)
}

/// Normalize a heat map into an attention map: flatten row-major, then
/// `w_j = |v_j| / sum_k |v_k|`.
pub fn normalize(map: &HeatMap) -> Result<AttentionMap> {
    normalize_raw(map.values(), Provenance::Empirical, None)
}

fn normalize_raw(raw: &[f64], provenance: Provenance, seed: Option<u64>) -> Result<AttentionMap> {
    let total: f64 = raw.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Err(Error::AllZeroMap);
    }
    let weights = DVector::from_iterator(raw.len(), raw.iter().map(|v| v.abs() / total));
    AttentionMap::new(weights, provenance, seed)
}

/// Random control map: i.i.d. Uniform(0,1) weights, then normalized.
/// Deterministic per seed.
pub fn random_uniform_map(n: usize, seed: u64) -> AttentionMap {
    assert!(n >= 1, "map length must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    normalize_raw(&raw, Provenance::RandomUniform, Some(seed))
        .expect("uniform draws cannot all be zero")
}

/// Random control map mimicking scattered fixation blobs: `fixation_count`
/// centers drawn uniformly over the grid, equal durations, rendered with
/// the Gaussian kernel and normalized. Deterministic per seed.
pub fn random_fixation_map(
    n: usize,
    width: u32,
    height: u32,
    fixation_count: usize,
    kernel_sigma: f64,
    seed: u64,
) -> Result<AttentionMap> {
    if fixation_count < 1 {
        return Err(Error::InvalidInput("fixation_count must be at least 1".into()));
    }
    if n != width as usize * height as usize {
        return Err(Error::DimensionMismatch {
            context: "random_fixation_map".into(),
            expected: width as usize * height as usize,
            found: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixations: Vec<Fixation> = (0..fixation_count)
        .map(|i| Fixation {
            centroid_x: rng.random_range(0.0..width as f64),
            centroid_y: rng.random_range(0.0..height as f64),
            start_ms: i as f64,
            duration_ms: 100.0,
        })
        .collect();
    let map = accumulate_heatmap(&fixations, width, height, kernel_sigma, 0);
    let mut out = normalize(&map)?;
    out.provenance = Provenance::RandomFixation;
    out.seed = Some(seed);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn burst(at: (f64, f64), count: usize, t0: f64) -> Vec<GazeSample> {
        (0..count)
            .map(|i| GazeSample {
                timestamp_ms: t0 + i as f64 * (1000.0 / 300.0),
                x: at.0,
                y: at.1,
                valid: true,
            })
            .collect()
    }

    #[test]
    fn single_fixation_from_steady_burst() {
        // 30 samples at 300 Hz = 100 ms.
        let samples = burst((100.0, 100.0), 30, 0.0);
        let fix = filter_fixations(&samples, &FixationFilter::default()).unwrap();
        assert_eq!(fix.len(), 1);
        assert_eq!(fix[0].centroid_x, 100.0);
        assert_eq!(fix[0].centroid_y, 100.0);
        assert!((fix[0].duration_ms - 100.0).abs() < 1e-9);
    }

    #[test]
    fn jump_beyond_radius_splits_fixations() {
        // 141.4 px jump, both runs of 20 samples (66.7 ms) survive.
        let mut samples = burst((100.0, 100.0), 20, 0.0);
        samples.extend(burst((200.0, 200.0), 20, 1000.0));
        let fix = filter_fixations(&samples, &FixationFilter::default()).unwrap();
        assert_eq!(fix.len(), 2);
        let expected_gap = ((100.0f64).powi(2) + (100.0f64).powi(2)).sqrt();
        assert!(expected_gap > 50.0);
        assert_eq!(fix[0].centroid_x, 100.0);
        assert_eq!(fix[1].centroid_x, 200.0);
    }

    #[test]
    fn sub_threshold_run_is_discarded() {
        // 10 samples (~33 ms) < ceil(0.06 * 300) = 18 samples.
        let samples = burst((50.0, 50.0), 10, 0.0);
        assert_eq!(FixationFilter::default().min_samples(), 18);
        let fix = filter_fixations(&samples, &FixationFilter::default()).unwrap();
        assert!(fix.is_empty());
    }

    #[test]
    fn empty_stream_yields_no_fixations() {
        let fix = filter_fixations(&[], &FixationFilter::default()).unwrap();
        assert!(fix.is_empty());
    }

    #[test]
    fn non_monotonic_timestamps_rejected() {
        let mut samples = burst((0.0, 0.0), 3, 0.0);
        samples[2].timestamp_ms = samples[1].timestamp_ms;
        assert!(matches!(
            filter_fixations(&samples, &FixationFilter::default()).unwrap_err(),
            Error::NonMonotonicTimestamps { index: 2 }
        ));
    }

    #[test]
    fn invalid_samples_break_runs() {
        let mut samples = burst((10.0, 10.0), 40, 0.0);
        samples[20].valid = false;
        let fix = filter_fixations(&samples, &FixationFilter::default()).unwrap();
        // 20 valid + 19 valid; both runs pass the 18-sample minimum.
        assert_eq!(fix.len(), 2);
    }

    #[test]
    fn valid_fraction_counts() {
        let mut samples = burst((0.0, 0.0), 10, 0.0);
        for s in samples.iter_mut().take(8) {
            s.valid = false;
        }
        assert!((valid_fraction(&samples) - 0.2).abs() < 1e-12);
        assert_eq!(valid_fraction(&[]), 0.0);
    }

    #[test]
    fn heatmap_empty_fixations_all_zero() {
        let map = accumulate_heatmap(&[], 16, 16, 2.0, 2);
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_mass_matches_duration_within_truncation() {
        // Gaussian mass inside a 3-sigma disc is 1 - exp(-4.5) = 98.9%.
        let fix = vec![
            Fixation { centroid_x: 0.0, centroid_y: 0.0, start_ms: 0.0, duration_ms: 1.0 },
            Fixation { centroid_x: 0.0, centroid_y: 0.0, start_ms: 1.0, duration_ms: 1.0 },
            Fixation { centroid_x: 64.0, centroid_y: 64.0, start_ms: 2.0, duration_ms: 100.0 },
        ];
        let map = accumulate_heatmap(&fix, 128, 128, 5.0, 2);
        assert!((map.total_mass() - 100.0).abs() < 1.0);
    }

    #[test]
    fn heatmap_skip_first_drops_fixations() {
        let fix = vec![
            Fixation { centroid_x: 8.0, centroid_y: 8.0, start_ms: 0.0, duration_ms: 50.0 },
            Fixation { centroid_x: 8.0, centroid_y: 8.0, start_ms: 1.0, duration_ms: 50.0 },
        ];
        let map = accumulate_heatmap(&fix, 16, 16, 1.0, 2);
        assert_eq!(map.total_mass(), 0.0);
    }

    #[test]
    fn heatmap_mirror_symmetry() {
        let w = 32u32;
        let fix_a = Fixation { centroid_x: 10.25, centroid_y: 15.0, start_ms: 0.0, duration_ms: 80.0 };
        let fix_b = Fixation {
            centroid_x: w as f64 - 10.25,
            centroid_y: 15.0,
            start_ms: 1.0,
            duration_ms: 80.0,
        };
        let map = accumulate_heatmap(&[fix_a, fix_b], w, 32, 3.0, 0);
        for y in 0..32 {
            for x in 0..w {
                let mirrored = map.get(w - 1 - x, y);
                assert!((map.get(x, y) - mirrored).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn average_heatmaps_examples() {
        let zero = HeatMap::zeros(2, 2);
        let twos = HeatMap::from_values(2, 2, vec![2.0; 4]).unwrap();
        let avg = average_heatmaps(&[zero.clone(), twos.clone()]).unwrap();
        assert!(avg.values().iter().all(|&v| v == 1.0));

        // Identity and idempotence.
        assert_eq!(average_heatmaps(&[twos.clone()]).unwrap(), twos);
        assert_eq!(
            average_heatmaps(&[twos.clone(), twos.clone(), twos.clone()]).unwrap(),
            twos
        );

        assert!(matches!(
            average_heatmaps(&[]).unwrap_err(),
            Error::EmptyInput(_)
        ));
        let other = HeatMap::zeros(3, 2);
        assert!(matches!(
            average_heatmaps(&[zero, other]).unwrap_err(),
            Error::GeometryMismatch { .. }
        ));
    }

    #[test]
    fn downsample_constant_field_is_preserved() {
        let map = HeatMap::from_values(4, 4, vec![8.0; 16]).unwrap();
        let down = downsample(&map, 2, 2).unwrap();
        assert!(down.values().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn downsample_block_mean_single_hot_cell() {
        let mut values = vec![0.0; 16];
        values[5] = 16.0;
        let map = HeatMap::from_values(4, 4, values).unwrap();
        let down = downsample(&map, 1, 1).unwrap();
        assert_eq!(down.get(0, 0), 1.0);
    }

    #[test]
    fn downsample_512_to_128_uses_4x4_blocks() {
        let map = HeatMap::from_values(512, 512, vec![1.0; 512 * 512]).unwrap();
        let down = downsample(&map, 128, 128).unwrap();
        assert_eq!(down.width(), 128);
        assert!((down.total_mass() - 128.0 * 128.0).abs() < 1e-6);

        assert!(downsample(&map, 100, 100).is_err());
    }

    #[test]
    fn normalize_examples() {
        let map = HeatMap::from_values(3, 1, vec![2.0, 3.0, 5.0]).unwrap();
        let att = normalize(&map).unwrap();
        assert_eq!(att.weights().as_slice(), &[0.2, 0.3, 0.5]);

        // Absolute-value rule.
        let map = HeatMap::from_values(3, 1, vec![-2.0, 3.0, 5.0]).unwrap();
        let att = normalize(&map).unwrap();
        assert_eq!(att.weights().as_slice(), &[0.2, 0.3, 0.5]);

        let map = HeatMap::from_values(4, 1, vec![1.0; 4]).unwrap();
        let att = normalize(&map).unwrap();
        assert!(att.weights().iter().all(|&w| w == 0.25));

        let map = HeatMap::zeros(2, 2);
        assert!(matches!(normalize(&map).unwrap_err(), Error::AllZeroMap));
    }

    #[test]
    fn random_uniform_map_is_deterministic_and_normalized() {
        let a = random_uniform_map(16384, 7);
        let b = random_uniform_map(16384, 7);
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.provenance(), Provenance::RandomUniform);
        assert_eq!(a.seed(), Some(7));
        assert!(a.weights().iter().all(|&w| w >= 0.0 && w.is_finite()));
        assert!((a.weights().sum() - 1.0).abs() <= SUM_TOLERANCE);
        assert!(a.weights().max() > a.weights().min());

        let c = random_uniform_map(16384, 8);
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn random_fixation_map_determinism_and_shape() {
        let a = random_fixation_map(256, 16, 16, 5, 1.0, 3).unwrap();
        let b = random_fixation_map(256, 16, 16, 5, 1.0, 3).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.provenance(), Provenance::RandomFixation);

        // Tight kernel, one fixation: mass concentrated near one cell.
        let single = random_fixation_map(256, 16, 16, 1, 0.4, 9).unwrap();
        assert!(single.weights().max() > 0.2);

        assert!(matches!(
            random_fixation_map(100, 16, 16, 5, 1.0, 3).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn random_fixation_map_approaches_uniform_for_many_fixations() {
        // Monte-Carlo check with a frozen seed: 8000 fixations on a 16x16
        // grid keep every cell within +/-50% of 1/n.
        let n = 256;
        let map = random_fixation_map(n, 16, 16, 8000, 0.35, 42).unwrap();
        let uniform = 1.0 / n as f64;
        for &w in map.weights().iter() {
            assert!(
                w > 0.5 * uniform && w < 1.5 * uniform,
                "cell weight {w} vs uniform {uniform}"
            );
        }
    }

    #[test]
    fn attention_map_io_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.egm");
        let map = random_uniform_map(64, 5);
        map.write_to(&path).unwrap();
        let back = AttentionMap::read_from(&path).unwrap();
        assert_eq!(map.weights(), back.weights());

        std::fs::write(dir.path().join("junk.egm"), b"NOTAMAP!restofit").unwrap();
        assert!(matches!(
            AttentionMap::read_from(&dir.path().join("junk.egm")).unwrap_err(),
            Error::Format { .. }
        ));
    }

    #[test]
    fn gaze_csv_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trial.csv");
        std::fs::write(
            &path,
            "timestamp_ms,x,y,valid\n0,100.5,200,1\n3.33,101,201,0\n6.67,102,202,true\n",
        )
        .unwrap();
        let samples = read_gaze_csv(&path).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].x, 100.5);
        assert!(!samples[1].valid);
        assert!(samples[2].valid);

        std::fs::write(&path, "timestamp_ms,x,y,valid\n0,1,2,maybe\n").unwrap();
        assert!(matches!(read_gaze_csv(&path).unwrap_err(), Error::Parse { .. }));

        std::fs::write(&path, "time,x,y,valid\n").unwrap();
        assert!(matches!(read_gaze_csv(&path).unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn visualization_raster_scales_to_255() {
        let map = AttentionMap::new(
            DVector::from_vec(vec![0.0, 0.25, 0.75]),
            Provenance::Empirical,
            None,
        )
        .unwrap();
        let raster = map
            .to_visualization_raster(Geometry::new(1, 3))
            .unwrap();
        assert_eq!(raster.data(), &[0, 85, 255]);
    }

    proptest! {
        #[test]
        fn normalized_maps_satisfy_invariants(seed in 0u64..500, n in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            prop_assume!(raw.iter().any(|&v| v != 0.0));
            let map = HeatMap::from_values(n as u32, 1, raw).unwrap();
            let att = normalize(&map).unwrap();
            prop_assert!(att.weights().iter().all(|&w| w >= 0.0));
            prop_assert!((att.weights().sum() - 1.0).abs() <= SUM_TOLERANCE);
        }

        #[test]
        fn translation_equivariance_with_jitter(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut samples = Vec::new();
            let mut t = 0.0;
            for _ in 0..4 {
                let cx = rng.random_range(0.0..500.0);
                let cy = rng.random_range(0.0..500.0);
                let len = rng.random_range(5usize..40);
                for _ in 0..len {
                    samples.push(GazeSample {
                        timestamp_ms: t,
                        x: cx + rng.random_range(-3.0..3.0),
                        y: cy + rng.random_range(-3.0..3.0),
                        valid: true,
                    });
                    t += 1000.0 / 300.0;
                }
            }
            let (dx, dy) = (rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
            let shifted: Vec<GazeSample> = samples
                .iter()
                .map(|s| GazeSample { x: s.x + dx, y: s.y + dy, ..*s })
                .collect();
            let filter = FixationFilter::default();
            let a = filter_fixations(&samples, &filter).unwrap();
            let b = filter_fixations(&shifted, &filter).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (fa, fb) in a.iter().zip(&b) {
                prop_assert!((fa.centroid_x + dx - fb.centroid_x).abs() < 1e-9);
                prop_assert!((fa.centroid_y + dy - fb.centroid_y).abs() < 1e-9);
                prop_assert_eq!(fa.duration_ms, fb.duration_ms);
            }
        }
    }
}
