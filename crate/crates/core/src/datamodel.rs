//! Dataset ingestion: grayscale rasters, CSV manifests, row-major
//! flattening, and the centered data matrix shared by every face-space
//! method.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Image geometry in pixels: `rows` high, `cols` wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub rows: u32,
    pub cols: u32,
}

impl Geometry {
    pub fn new(rows: u32, cols: u32) -> Self {
        Geometry { rows, cols }
    }

    /// Flattened vector length `n = rows * cols`.
    pub fn dim(&self) -> usize {
        self.rows as usize * self.cols as usize
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// 8-bit grayscale raster stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    geometry: Geometry,
    data: Vec<u8>,
}

impl GrayRaster {
    pub fn new(rows: u32, cols: u32, data: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "raster must be at least 1x1, got {rows}x{cols}"
            )));
        }
        let expected = rows as usize * cols as usize;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "raster buffer".into(),
                expected,
                found: data.len(),
            });
        }
        Ok(GrayRaster {
            geometry: Geometry::new(rows, cols),
            data,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.data[row as usize * self.geometry.cols as usize + col as usize]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Write as a binary graymap (PGM, `P5`).
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let encoder = PnmEncoder::new(BufWriter::new(file))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
        encoder
            .write_image(
                &self.data,
                self.geometry.cols,
                self.geometry.rows,
                ExtendedColorType::L8,
            )
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }

    /// Decode any raster format the image backend understands and convert
    /// to 8-bit grayscale.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let gray = img.into_luma8();
        let (cols, rows) = gray.dimensions();
        GrayRaster::new(rows, cols, gray.into_raw())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn code(&self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
        }
    }

    /// Parse a manifest token; `-` (or empty) means unlabeled.
    pub fn parse(token: &str) -> Result<Option<Self>> {
        match token.trim() {
            "m" => Ok(Some(Gender::Male)),
            "f" => Ok(Some(Gender::Female)),
            "-" | "" => Ok(None),
            other => Err(Error::InvalidInput(format!(
                "gender label must be m, f or -, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expression {
    Smiling,
    Neutral,
}

impl Expression {
    pub fn code(&self) -> &'static str {
        match self {
            Expression::Smiling => "s",
            Expression::Neutral => "n",
        }
    }

    pub fn parse(token: &str) -> Result<Option<Self>> {
        match token.trim() {
            "s" => Ok(Some(Expression::Smiling)),
            "n" => Ok(Some(Expression::Neutral)),
            "-" | "" => Ok(None),
            other => Err(Error::InvalidInput(format!(
                "expression label must be s, n or -, got `{other}`"
            ))),
        }
    }
}

/// A single labeled face image.
#[derive(Debug, Clone)]
pub struct FaceImage {
    pub id: String,
    pub subject_id: String,
    pub gender: Option<Gender>,
    pub expression: Option<Expression>,
    pub raster: GrayRaster,
}

/// A flattened image: intensities promoted to `f64`, length `rows * cols`.
pub type ImageVector = DVector<f64>;

/// Row-major flattening: `values[i * cols + j] = pixels[i][j]`.
pub fn flatten(raster: &GrayRaster) -> ImageVector {
    DVector::from_iterator(raster.data.len(), raster.data.iter().map(|&v| v as f64))
}

/// Inverse of [`flatten`]; every value must be an integer in `[0, 255]`.
pub fn unflatten(vector: &ImageVector, rows: u32, cols: u32) -> Result<GrayRaster> {
    let expected = rows as usize * cols as usize;
    if vector.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "unflatten".into(),
            expected,
            found: vector.len(),
        });
    }
    let mut data = Vec::with_capacity(expected);
    for &v in vector.iter() {
        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
            return Err(Error::InvalidInput(format!(
                "value {v} is not an 8-bit intensity"
            )));
        }
        data.push(v as u8);
    }
    GrayRaster::new(rows, cols, data)
}

/// Per-row labels carried alongside the data matrix.
#[derive(Debug, Clone)]
pub struct SampleInfo {
    pub id: String,
    pub subject_id: String,
    pub gender: Option<Gender>,
    pub expression: Option<Expression>,
}

impl SampleInfo {
    pub fn unlabeled(id: impl Into<String>) -> Self {
        let id = id.into();
        SampleInfo {
            subject_id: id.clone(),
            id,
            gender: None,
            expression: None,
        }
    }
}

/// One manifest line: an image path plus its labels.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject_id: String,
    pub gender: Option<Gender>,
    pub expression: Option<Expression>,
}

/// A dataset manifest: the list of images to load and, optionally, the
/// geometry they must all share (inferred from the first image otherwise).
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub geometry: Option<Geometry>,
}

const MANIFEST_HEADER: [&str; 4] = ["path", "subject_id", "gender", "expression"];

impl DatasetManifest {
    /// Parse a manifest CSV (`path,subject_id,gender,expression`; gender in
    /// {m,f,-}, expression in {s,n,-}). Relative image paths are resolved
    /// against the manifest's directory.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
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
        if found != MANIFEST_HEADER {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: Some(1),
                message: format!(
                    "expected header `{}`, found `{}`",
                    MANIFEST_HEADER.join(","),
                    found.join(",")
                ),
            });
        }

        let mut entries = Vec::new();
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
            let rel = Path::new(&record[0]);
            let resolved = if rel.is_absolute() {
                rel.to_path_buf()
            } else {
                base.join(rel)
            };
            entries.push(ManifestEntry {
                path: resolved,
                subject_id: record[1].to_string(),
                gender: Gender::parse(&record[1 + 1]).map_err(|e| parse_err(e.to_string()))?,
                expression: Expression::parse(&record[3]).map_err(|e| parse_err(e.to_string()))?,
            });
        }
        Ok(DatasetManifest {
            entries,
            geometry: None,
        })
    }
}

/// The loaded dataset: an `N x n` real matrix (one image per row), its
/// grand mean, and per-row labels.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    samples: DMatrix<f64>,
    grand_mean: DVector<f64>,
    info: Vec<SampleInfo>,
    geometry: Geometry,
}

impl DataMatrix {
    /// Core constructor. Requires `N >= 2` rows and `n = geometry.dim()`
    /// columns; computes the grand mean.
    pub fn from_parts(
        samples: DMatrix<f64>,
        info: Vec<SampleInfo>,
        geometry: Geometry,
    ) -> Result<Self> {
        let n_samples = samples.nrows();
        if n_samples < 2 {
            return Err(Error::InvalidInput(format!(
                "a dataset needs at least 2 samples, got {n_samples}"
            )));
        }
        if samples.ncols() != geometry.dim() {
            return Err(Error::DimensionMismatch {
                context: "data matrix columns".into(),
                expected: geometry.dim(),
                found: samples.ncols(),
            });
        }
        if info.len() != n_samples {
            return Err(Error::DimensionMismatch {
                context: "sample labels".into(),
                expected: n_samples,
                found: info.len(),
            });
        }
        let grand_mean = grand_mean(&samples);
        Ok(DataMatrix {
            samples,
            grand_mean,
            info,
            geometry,
        })
    }

    pub fn from_images(images: Vec<FaceImage>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyInput("image list".into()));
        }
        let geometry = images[0].raster.geometry();
        let n = geometry.dim();
        let mut samples = DMatrix::zeros(images.len(), n);
        let mut info = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            let g = img.raster.geometry();
            if g != geometry {
                return Err(Error::GeometryMismatch {
                    context: format!("image `{}`", img.id),
                    expected_rows: geometry.rows,
                    expected_cols: geometry.cols,
                    found_rows: g.rows,
                    found_cols: g.cols,
                });
            }
            for (j, &v) in img.raster.data().iter().enumerate() {
                samples[(i, j)] = v as f64;
            }
            info.push(SampleInfo {
                id: img.id.clone(),
                subject_id: img.subject_id.clone(),
                gender: img.gender,
                expression: img.expression,
            });
        }
        DataMatrix::from_parts(samples, info, geometry)
    }

    pub fn num_samples(&self) -> usize {
        self.samples.nrows()
    }

    /// Pixel dimension `n`.
    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn grand_mean(&self) -> &DVector<f64> {
        &self.grand_mean
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn info(&self) -> &[SampleInfo] {
        &self.info
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }

    /// Centered matrix `Z` with `z_ij = x_ij - mean_j`.
    pub fn center(&self) -> DMatrix<f64> {
        let mut z = self.samples.clone();
        for mut row in z.row_iter_mut() {
            row -= self.grand_mean.transpose();
        }
        z
    }

    /// Sub-dataset restricted to `indices` (in the given order). The grand
    /// mean is recomputed from the selected rows only.
    pub fn select_rows(&self, indices: &[usize]) -> Result<DataMatrix> {
        for &i in indices {
            if i >= self.num_samples() {
                return Err(Error::InvalidInput(format!(
                    "row index {i} out of bounds for {} samples",
                    self.num_samples()
                )));
            }
        }
        let samples = DMatrix::from_fn(indices.len(), self.dim(), |i, j| {
            self.samples[(indices[i], j)]
        });
        let info = indices.iter().map(|&i| self.info[i].clone()).collect();
        DataMatrix::from_parts(samples, info, self.geometry)
    }
}

fn grand_mean(samples: &DMatrix<f64>) -> DVector<f64> {
    let n_samples = samples.nrows() as f64;
    let mut mean = DVector::zeros(samples.ncols());
    for row in samples.row_iter() {
        mean += row.transpose();
    }
    mean / n_samples
}

/// Load every image referenced by the manifest, in manifest order.
///
/// Errors on missing files, unreadable rasters, geometry mismatches and
/// duplicate ids (the id of a loaded image is its manifest path string).
pub fn load_dataset(manifest: &DatasetManifest) -> Result<DataMatrix> {
    if manifest.entries.is_empty() {
        return Err(Error::EmptyInput("manifest".into()));
    }
    let mut seen = HashSet::new();
    for entry in &manifest.entries {
        let id = entry.path.to_string_lossy().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
    }

    let images: Result<Vec<FaceImage>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let raster = GrayRaster::load(&entry.path)?;
            if let Some(expected) = manifest.geometry {
                let g = raster.geometry();
                if g != expected {
                    return Err(Error::GeometryMismatch {
                        context: format!("image `{}`", entry.path.display()),
                        expected_rows: expected.rows,
                        expected_cols: expected.cols,
                        found_rows: g.rows,
                        found_cols: g.cols,
                    });
                }
            }
            Ok(FaceImage {
                id: entry.path.to_string_lossy().to_string(),
                subject_id: entry.subject_id.clone(),
                gender: entry.gender,
                expression: entry.expression,
                raster,
            })
        })
        .collect();

    DataMatrix::from_images(images?)
}
