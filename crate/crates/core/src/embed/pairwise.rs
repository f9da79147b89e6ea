//! Blocked computation of the pairwise Bhattacharyya matrix.
//!
//! Models are loaded one block at a time, so at most two blocks are resident.
//! Each entry is computed exactly as [`crate::model::bhattacharyya`] computes
//! it and written to a fixed slot, so the result does not depend on the block
//! size or on thread scheduling.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::DistanceMatrix;
use crate::error::{Error, Result};
use crate::model::{bhattacharyya_from_bc, mean, sqrt_row_bc, PredictionMatrix};
use crate::par;

/// Random access to a list of models.
pub trait ModelSource: Sync {
    fn len(&self) -> usize;
    fn load(&self, index: usize) -> Result<PredictionMatrix>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelSource for [PredictionMatrix] {
    fn len(&self) -> usize {
        <[PredictionMatrix]>::len(self)
    }

    fn load(&self, index: usize) -> Result<PredictionMatrix> {
        Ok(self[index].clone())
    }
}

impl ModelSource for Vec<PredictionMatrix> {
    fn len(&self) -> usize {
        <[PredictionMatrix]>::len(self)
    }

    fn load(&self, index: usize) -> Result<PredictionMatrix> {
        Ok(self[index].clone())
    }
}

/// Models stored as PMAT files, read on demand.
#[derive(Clone, Debug)]
pub struct FileModels {
    pub paths: Vec<PathBuf>,
}

impl ModelSource for FileModels {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn load(&self, index: usize) -> Result<PredictionMatrix> {
        crate::io::read_pmat_file(&self.paths[index])
    }
}

struct LoadedModel {
    shape: (usize, usize),
    sqrt: Vec<f64>,
}

fn load_block(source: &dyn ModelSource, range: std::ops::Range<usize>, shape: &mut Option<(usize, usize)>) -> Result<Vec<LoadedModel>> {
    range
        .map(|i| {
            let p = source.load(i)?;
            match shape {
                Some(s) if *s != p.shape() => Err(Error::Dimension(format!(
                    "model {i} has shape {:?}, expected {:?}",
                    p.shape(),
                    s
                ))),
                _ => {
                    *shape = Some(p.shape());
                    Ok(LoadedModel {
                        shape: p.shape(),
                        sqrt: p.sqrt_entries(),
                    })
                }
            }
        })
        .collect()
}

fn pair_distance(a: &LoadedModel, b: &LoadedModel) -> f64 {
    let c = a.shape.1;
    let per_sample: Vec<f64> = a
        .sqrt
        .chunks_exact(c)
        .zip(b.sqrt.chunks_exact(c))
        .map(|(x, y)| bhattacharyya_from_bc(sqrt_row_bc(x, y)))
        .collect();
    mean(&per_sample)
}

/// Visits every block pair `(I, J)` with `I <= J` and hands the computed
/// tile (rows of `I`, columns of `J`) to `sink`.
fn for_each_tile(
    source: &dyn ModelSource,
    chunk: usize,
    mut sink: impl FnMut(usize, usize, usize, usize, &[f64]) -> Result<()>,
) -> Result<()> {
    let n = source.len();
    let chunk = chunk.max(1);
    let mut shape = None;
    let blocks: Vec<(usize, usize)> = (0..n).step_by(chunk).map(|s| (s, (s + chunk).min(n))).collect();
    for (bi, &(r0, r1)) in blocks.iter().enumerate() {
        let rows = load_block(source, r0..r1, &mut shape)?;
        for &(c0, c1) in &blocks[bi..] {
            let owned;
            let cols = if c0 == r0 {
                &rows
            } else {
                owned = load_block(source, c0..c1, &mut shape)?;
                &owned
            };
            let width = c1 - c0;
            let tile = par::map_indexed((r1 - r0) * width, |k| {
                let (i, j) = (r0 + k / width, c0 + k % width);
                if j <= i {
                    0.0
                } else {
                    pair_distance(&rows[i - r0], &cols[j - c0])
                }
            });
            sink(r0, r1, c0, c1, &tile)?;
        }
    }
    Ok(())
}

/// Full pairwise Bhattacharyya matrix, loading `chunk` models at a time.
pub fn pairwise_bhattacharyya(source: &dyn ModelSource, chunk: usize) -> Result<DistanceMatrix> {
    let n = source.len();
    if n == 0 {
        return Err(Error::Validation("no models".into()));
    }
    let mut data = vec![0.0; n * n];
    for_each_tile(source, chunk, |r0, r1, c0, c1, tile| {
        let width = c1 - c0;
        for i in r0..r1 {
            for j in c0.max(i + 1)..c1 {
                let x = tile[(i - r0) * width + (j - c0)];
                data[i * n + j] = x;
                data[j * n + i] = x;
            }
        }
        Ok(())
    })?;
    Ok(DistanceMatrix::from_parts(n, data))
}

/// Row access to a distance matrix that may not be resident in memory.
pub trait DistanceRows {
    fn n(&self) -> usize;
    fn row_into(&self, i: usize, out: &mut [f64]) -> Result<()>;
}

impl DistanceRows for DistanceMatrix {
    fn n(&self) -> usize {
        DistanceMatrix::n(self)
    }

    fn row_into(&self, i: usize, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(self.row(i));
        Ok(())
    }
}

/// Distance matrix spilled to a file of square little-endian `f64` tiles.
///
/// Tile `(I, J)` holds rows of block `I` and columns of block `J`, row-major,
/// and tiles are laid out in row-major block order.
#[derive(Debug)]
pub struct DiskDistances {
    n: usize,
    tile: usize,
    path: PathBuf,
    file: Mutex<File>,
}

impl DiskDistances {
    fn create(path: &Path, n: usize, tile: usize) -> Result<Self> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.set_len((n * n * 8) as u64).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            n,
            tile,
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn block_len(&self, b: usize) -> usize {
        (self.n - b * self.tile).min(self.tile)
    }

    /// Byte offset of tile `(bi, bj)`.
    fn tile_offset(&self, bi: usize, bj: usize) -> u64 {
        // Rows before block bi fill complete block rows of width n.
        let before_rows = bi * self.tile * self.n;
        let within = bj * self.tile * self.block_len(bi);
        ((before_rows + within) * 8) as u64
    }

    fn write_tile(&self, bi: usize, bj: usize, values: &[f64]) -> Result<()> {
        let mut f = self.file.lock().expect("spill file lock poisoned");
        f.seek(SeekFrom::Start(self.tile_offset(bi, bj)))
            .map_err(|e| Error::io(&self.path, e))?;
        let bytes: Vec<u8> = values.iter().flat_map(|x| x.to_le_bytes()).collect();
        f.write_all(&bytes).map_err(|e| Error::io(&self.path, e))
    }
}

impl DistanceRows for DiskDistances {
    fn n(&self) -> usize {
        self.n
    }

    fn row_into(&self, i: usize, out: &mut [f64]) -> Result<()> {
        let bi = i / self.tile;
        let local = i - bi * self.tile;
        let mut f = self.file.lock().expect("spill file lock poisoned");
        let mut buf = Vec::new();
        for bj in 0..self.n.div_ceil(self.tile) {
            let width = self.block_len(bj);
            let offset = self.tile_offset(bi, bj) + (local * width * 8) as u64;
            buf.resize(width * 8, 0);
            f.seek(SeekFrom::Start(offset)).map_err(|e| Error::io(&self.path, e))?;
            f.read_exact(&mut buf).map_err(|e| Error::io(&self.path, e))?;
            for (k, bytes) in buf.chunks_exact(8).enumerate() {
                out[bj * self.tile + k] = f64::from_le_bytes(bytes.try_into().unwrap());
            }
        }
        Ok(())
    }
}

impl Drop for DiskDistances {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// A distance matrix held in memory or spilled to disk.
#[derive(Debug)]
pub enum DistanceStore {
    Memory(DistanceMatrix),
    Disk(DiskDistances),
}

impl DistanceStore {
    pub fn is_on_disk(&self) -> bool {
        matches!(self, DistanceStore::Disk(_))
    }

    /// Materialises the whole matrix in memory.
    pub fn to_matrix(&self) -> Result<DistanceMatrix> {
        match self {
            DistanceStore::Memory(d) => Ok(d.clone()),
            DistanceStore::Disk(disk) => {
                let n = disk.n;
                let mut data = vec![0.0; n * n];
                for (i, row) in data.chunks_exact_mut(n).enumerate() {
                    disk.row_into(i, row)?;
                }
                Ok(DistanceMatrix::from_parts(n, data))
            }
        }
    }
}

impl DistanceRows for DistanceStore {
    fn n(&self) -> usize {
        match self {
            DistanceStore::Memory(d) => d.n(),
            DistanceStore::Disk(d) => d.n,
        }
    }

    fn row_into(&self, i: usize, out: &mut [f64]) -> Result<()> {
        match self {
            DistanceStore::Memory(d) => d.row_into(i, out),
            DistanceStore::Disk(d) => d.row_into(i, out),
        }
    }
}

/// Like [`pairwise_bhattacharyya`], but spills the matrix to a tiled file in
/// `spill_dir` when `n * n * 8` bytes exceeds `memory_budget_bytes`.
pub fn pairwise_bhattacharyya_store(
    source: &dyn ModelSource,
    chunk: usize,
    memory_budget_bytes: u64,
    spill_dir: &Path,
) -> Result<DistanceStore> {
    let n = source.len();
    if ((n * n * 8) as u64) <= memory_budget_bytes {
        return pairwise_bhattacharyya(source, chunk).map(DistanceStore::Memory);
    }
    if n == 0 {
        return Err(Error::Validation("no models".into()));
    }
    let chunk = chunk.max(1);
    let path = spill_dir.join(format!("dmat-spill-{}-{n}.tiles", std::process::id()));
    let disk = DiskDistances::create(&path, n, chunk)?;
    for_each_tile(source, chunk, |r0, r1, c0, c1, tile| {
        let (bi, bj) = (r0 / chunk, c0 / chunk);
        let (h, w) = (r1 - r0, c1 - c0);
        // Diagonal tiles carry only the strict upper triangle; mirror it.
        let mut upper = tile.to_vec();
        if bi == bj {
            for i in 0..h {
                for j in 0..i {
                    upper[i * w + j] = tile[j * w + i];
                }
            }
            return disk.write_tile(bi, bj, &upper);
        }
        disk.write_tile(bi, bj, &upper)?;
        let mut lower = vec![0.0; w * h];
        for i in 0..h {
            for j in 0..w {
                lower[j * h + i] = tile[i * w + j];
            }
        }
        disk.write_tile(bj, bi, &lower)
    })?;
    Ok(DistanceStore::Disk(disk))
}
