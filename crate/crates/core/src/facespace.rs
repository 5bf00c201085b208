//! Face-space construction: standard principal components, feature-based
//! attention weighting (wPCA), and pattern-based re-ranking by attention
//! alignment (dPCA), plus projection, reconstruction and serialization.
//!
//! All fits use the snapshot (Gram) method: the eigendecomposition of the
//! `N x N` matrix `Z Z^T / (N - 1)` shares its nonzero spectrum with the
//! `n x n` covariance, and eigenvectors map back as `Z^T u`, normalized.
//! With `n = 16384` pixels and a few hundred samples this avoids ever
//! forming the pixel-space covariance.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::datamodel::DataMatrix;
use crate::error::{Error, Result};

/// Eigenvalues below `threshold * lambda_max` count as zero.
pub const NONZERO_EIGENVALUE_REL_THRESHOLD: f64 = 1e-10;

/// Alignment coefficients equal within this tolerance tie-break by
/// eigenvalue (larger first), preserving variance order among
/// indistinguishable directions.
pub const ALIGNMENT_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pca,
    Wpca,
    Dpca,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Wpca => "wpca",
            Method::Dpca => "dpca",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "pca" => Ok(Method::Pca),
            "wpca" => Ok(Method::Wpca),
            "dpca" => Ok(Method::Dpca),
            other => Err(Error::Usage(format!(
                "method must be pca, wpca or dpca, got `{other}`"
            ))),
        }
    }

    /// Whether the fit consumes an attention map.
    pub fn uses_map(&self) -> bool {
        !matches!(self, Method::Pca)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fitted face space: mean vector, orthonormal component basis (one
/// column per component), eigenvalues, and for dPCA the attention
/// alignment coefficients of the stored components.
#[derive(Debug, Clone)]
pub struct FaceSpace {
    mean: DVector<f64>,
    components: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    method: Method,
    alignment: Option<Vec<f64>>,
}

impl FaceSpace {
    pub fn method(&self) -> Method {
        self.method
    }

    /// Pixel dimension `n`.
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of stored components.
    pub fn num_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `n x m` matrix, one orthonormal component per column.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn component(&self, i: usize) -> DVector<f64> {
        self.components.column(i).into_owned()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// dPCA only: `k_i = <w, p_i>` for each stored component, in stored
    /// order (non-increasing `|k|`).
    pub fn alignment(&self) -> Option<&[f64]> {
        self.alignment.as_deref()
    }

    /// Coordinates of `x` on the first `m_use` stored components:
    /// `y_i = <p_i, x - mean>`.
    pub fn project(&self, x: &DVector<f64>, m_use: usize) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "project".into(),
                expected: self.dim(),
                found: x.len(),
            });
        }
        if m_use > self.num_components() {
            return Err(Error::RankExceeded {
                requested: m_use,
                available: self.num_components(),
            });
        }
        let centered = x - &self.mean;
        // Per-component dots keep coordinates prefix-stable: the first m
        // coordinates never depend on how many components are requested.
        Ok(DVector::from_fn(m_use, |i, _| {
            self.components.column(i).dot(&centered)
        }))
    }

    /// `mean + sum_i y_i p_i`.
    pub fn reconstruct(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() > self.num_components() {
            return Err(Error::RankExceeded {
                requested: y.len(),
                available: self.num_components(),
            });
        }
        let mut out = self.mean.clone();
        for (i, &coord) in y.iter().enumerate() {
            out.axpy(coord, &self.components.column(i).into_owned(), 1.0);
        }
        Ok(out)
    }

    /// Write the versioned binary format plus a `<path>.json` metadata
    /// sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);

        w.write_all(FACESPACE_MAGIC).map_err(io_err)?;
        w.write_all(&FACESPACE_VERSION.to_le_bytes()).map_err(io_err)?;
        let method_code: u32 = match self.method {
            Method::Pca => 0,
            Method::Wpca => 1,
            Method::Dpca => 2,
        };
        w.write_all(&method_code.to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.dim() as u64).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.num_components() as u64).to_le_bytes())
            .map_err(io_err)?;

        write_f64s(&mut w, self.mean.iter().copied()).map_err(io_err)?;
        write_f64s(&mut w, self.eigenvalues.iter().copied()).map_err(io_err)?;
        if let Some(alignment) = &self.alignment {
            write_f64s(&mut w, alignment.iter().copied()).map_err(io_err)?;
        }
        for i in 0..self.num_components() {
            write_f64s(&mut w, self.components.column(i).iter().copied()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;

        let meta = FaceSpaceMetadata {
            format_version: FACESPACE_VERSION,
            method: self.method.as_str().to_string(),
            dimension: self.dim(),
            components: self.num_components(),
            eigenvalues: self.eigenvalues.clone(),
            alignment: self.alignment.clone(),
        };
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::Format {
                path: sidecar.clone(),
                message: e.to_string(),
            })?;
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let io_err = |e| Error::io(path, e);
        let format_err = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };

        let mut header = [0u8; 32];
        file.read_exact(&mut header).map_err(io_err)?;
        if &header[..8] != FACESPACE_MAGIC {
            return Err(format_err("bad magic (not a face-space file)".into()));
        }
        let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
        if version != FACESPACE_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let method = match u32::from_le_bytes(header[12..16].try_into().unwrap()) {
            0 => Method::Pca,
            1 => Method::Wpca,
            2 => Method::Dpca,
            other => return Err(format_err(format!("unknown method code {other}"))),
        };
        let n = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let m = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;

        let mean = DVector::from_vec(read_f64s(&mut file, n).map_err(io_err)?);
        let eigenvalues = read_f64s(&mut file, m).map_err(io_err)?;
        let alignment = if method == Method::Dpca {
            Some(read_f64s(&mut file, m).map_err(io_err)?)
        } else {
            None
        };
        let mut components = DMatrix::zeros(n, m);
        for i in 0..m {
            let col = read_f64s(&mut file, n).map_err(io_err)?;
            components.set_column(i, &DVector::from_vec(col));
        }
        Ok(FaceSpace {
            mean,
            components,
            eigenvalues,
            method,
            alignment,
        })
    }
}

const FACESPACE_MAGIC: &[u8; 8] = b"EGZFSP01";
const FACESPACE_VERSION: u32 = 1;

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FaceSpaceMetadata {
    pub format_version: u32,
    pub method: String,
    pub dimension: usize,
    pub components: usize,
    pub eigenvalues: Vec<f64>,
    pub alignment: Option<Vec<f64>>,
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Nonzero spectrum of the snapshot (Gram) matrix, eigenvalues sorted
/// non-increasing with their `N`-dimensional eigenvectors.
struct SnapshotEig {
    eigenvalues: Vec<f64>,
    gram_vectors: DMatrix<f64>,
}

impl SnapshotEig {
    fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn snapshot_eigen(z: &DMatrix<f64>) -> Result<SnapshotEig> {
    let n_samples = z.nrows();
    let mut gram = (z * z.transpose()) / (n_samples as f64 - 1.0);
    // Kill asymmetric rounding noise before the symmetric solver.
    let gram_t = gram.transpose();
    gram += &gram_t;
    gram /= 2.0;

    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let lambda_max = eig.eigenvalues[order[0]];
    if lambda_max <= 0.0 {
        return Err(Error::DegenerateData(
            "data matrix has no variance (all rows identical)".into(),
        ));
    }
    let threshold = NONZERO_EIGENVALUE_REL_THRESHOLD * lambda_max;
    let retained: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > threshold)
        .collect();

    let eigenvalues: Vec<f64> = retained.iter().map(|&i| eig.eigenvalues[i]).collect();
    let gram_vectors = DMatrix::from_fn(n_samples, retained.len(), |r, c| {
        eig.eigenvectors[(r, retained[c])]
    });
    Ok(SnapshotEig {
        eigenvalues,
        gram_vectors,
    })
}

/// Map Gram eigenvectors back to pixel space (`p = Z^T u`, normalized) and
/// fix signs so each component's largest-magnitude entry is positive.
fn backmap(z: &DMatrix<f64>, gram_vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let mut components = z.transpose() * gram_vectors;
    for i in 0..components.ncols() {
        let mut col = components.column_mut(i);
        let norm = col.norm();
        col /= norm;
    }
    fix_signs(&mut components);
    components
}

fn fix_signs(components: &mut DMatrix<f64>) {
    for i in 0..components.ncols() {
        let mut col = components.column_mut(i);
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for (j, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = j;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Standard principal components: the top-`m` eigenvectors of the sample
/// covariance, computed via the snapshot method.
pub fn fit_pca(data: &DataMatrix, m: usize) -> Result<FaceSpace> {
    let z = data.center();
    let snap = snapshot_eigen(&z)?;
    if m > snap.rank() {
        return Err(Error::RankExceeded {
            requested: m,
            available: snap.rank(),
        });
    }
    let components = backmap(&z, &DMatrix::from(snap.gram_vectors.columns(0, m)));
    Ok(FaceSpace {
        mean: data.grand_mean().clone(),
        components,
        eigenvalues: snap.eigenvalues[..m].to_vec(),
        method: Method::Pca,
        alignment: None,
    })
}

/// Feature-based combination: each centered pixel is scaled by the square
/// root of its attention weight (`z*_ij = z_ij sqrt(w_j)`) before the
/// snapshot eigendecomposition. Eigenvalues are those of the weighted
/// covariance.
pub fn fit_wpca(data: &DataMatrix, map: &AttentionMap, m: usize) -> Result<FaceSpace> {
    if map.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "attention map".into(),
            expected: data.dim(),
            found: map.len(),
        });
    }
    let mut z = data.center();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col *= map.weights()[j].sqrt();
    }
    let snap = snapshot_eigen(&z)?;
    if m > snap.rank() {
        return Err(Error::RankExceeded {
            requested: m,
            available: snap.rank(),
        });
    }
    let components = backmap(&z, &DMatrix::from(snap.gram_vectors.columns(0, m)));
    Ok(FaceSpace {
        mean: data.grand_mean().clone(),
        components,
        eigenvalues: snap.eigenvalues[..m].to_vec(),
        method: Method::Wpca,
        alignment: None,
    })
}

/// Pattern-based combination: compute all nonzero standard components,
/// score each by its alignment `k_j = <w, p_j>` with the attention map,
/// and return the `m_plus` components with the largest `|k|`, keeping
/// their original eigenvalues.
pub fn fit_dpca(data: &DataMatrix, map: &AttentionMap, m_plus: usize) -> Result<FaceSpace> {
    if map.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "attention map".into(),
            expected: data.dim(),
            found: map.len(),
        });
    }
    let z = data.center();
    let snap = snapshot_eigen(&z)?;
    let rank = snap.rank();
    if m_plus > rank {
        return Err(Error::RankExceeded {
            requested: m_plus,
            available: rank,
        });
    }

    // Alignment without materializing pixel-space components:
    // k_j = w . (Z^T u_j) / ||Z^T u_j||, and ||Z^T u_j||^2 = (N-1) lambda_j.
    let zw = &z * map.weights();
    let scale = (data.num_samples() as f64 - 1.0).sqrt();
    let k_all: Vec<f64> = (0..rank)
        .map(|j| snap.gram_vectors.column(j).dot(&zw) / (scale * snap.eigenvalues[j].sqrt()))
        .collect();

    let order = rank_by_alignment(&k_all, &snap.eigenvalues);
    let selected = &order[..m_plus];
    let u_sel = DMatrix::from_fn(z.nrows(), m_plus, |r, c| {
        snap.gram_vectors[(r, selected[c])]
    });
    let components = backmap(&z, &u_sel);

    // Recompute alignment against the sign-fixed stored components and
    // re-sort the selected set by these exact values.
    let mut entries: Vec<(usize, f64, f64)> = (0..m_plus)
        .map(|i| {
            let k = map.weights().dot(&components.column(i).into_owned());
            (i, k, snap.eigenvalues[selected[i]])
        })
        .collect();
    let refined_order = rank_by_alignment(
        &entries.iter().map(|e| e.1).collect::<Vec<_>>(),
        &entries.iter().map(|e| e.2).collect::<Vec<_>>(),
    );
    entries = refined_order.iter().map(|&i| entries[i]).collect();

    let final_components = DMatrix::from_fn(data.dim(), m_plus, |r, c| {
        components[(r, entries[c].0)]
    });
    Ok(FaceSpace {
        mean: data.grand_mean().clone(),
        components: final_components,
        eigenvalues: entries.iter().map(|e| e.2).collect(),
        method: Method::Dpca,
        alignment: Some(entries.iter().map(|e| e.1).collect()),
    })
}

/// Method dispatch used by the harness and the CLI: pca takes no map,
/// wpca and dpca require one.
pub fn fit(
    data: &DataMatrix,
    method: Method,
    map: Option<&AttentionMap>,
    m: usize,
) -> Result<FaceSpace> {
    match (method, map) {
        (Method::Pca, None) => fit_pca(data, m),
        (Method::Pca, Some(_)) => Err(Error::Usage(
            "method pca takes no attention map".into(),
        )),
        (Method::Wpca, Some(map)) => fit_wpca(data, map, m),
        (Method::Dpca, Some(map)) => fit_dpca(data, map, m),
        (method, None) => Err(Error::Usage(format!(
            "method {method} requires an attention map"
        ))),
    }
}

/// Order indices by `|k|` non-increasing. Runs of coefficients equal
/// within [`ALIGNMENT_TIE_TOLERANCE`] are re-sorted by eigenvalue
/// (non-increasing), then original index, so the result is deterministic.
fn rank_by_alignment(k: &[f64], eigenvalues: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k.len()).collect();
    order.sort_by(|&a, &b| {
        k[b].abs()
            .partial_cmp(&k[a].abs())
            .expect("alignment coefficients are finite")
            .then_with(|| {
                eigenvalues[b]
                    .partial_cmp(&eigenvalues[a])
                    .expect("eigenvalues are finite")
            })
            .then_with(|| a.cmp(&b))
    });

    // Re-sort runs of near-equal |k| by eigenvalue.
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len()
            && (k[order[j]].abs() - k[order[j + 1]].abs()).abs() <= ALIGNMENT_TIE_TOLERANCE
        {
            j += 1;
        }
        if j > i {
            order[i..=j].sort_by(|&a, &b| {
                eigenvalues[b]
                    .partial_cmp(&eigenvalues[a])
                    .expect("eigenvalues are finite")
                    .then_with(|| a.cmp(&b))
            });
        }
        i = j + 1;
    }
    order
}
