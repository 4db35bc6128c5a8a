//! Rod-solver datasets: generation, splitting, binary persistence, CSV export.
//!
//! Binary layout (little-endian): a 64-byte header
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 8    | magic `SOFTCLIK`           |
//! | 8      | 4    | version (1)                |
//! | 12     | 4    | m                          |
//! | 16     | 4    | n_s                        |
//! | 20     | 4    | d                          |
//! | 24     | 8    | N                          |
//! | 32     | 8    | seed                       |
//! | 40     | 8    | rod parameter fingerprint  |
//! | 48     | 8    | failed solve count         |
//! | 56     | 8    | checksum                   |
//!
//! followed by the `N × m` actuation matrix and the `N × n_s × d` shapes as
//! row-major `f64`. The checksum is 64-bit FNV-1a over every other byte of
//! the file (header bytes 0..56, then the payload).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::actuation::ActuationBox;
use crate::curve::grid_point;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::rod::{solve_bvp, RodParams};

pub const MAGIC: &[u8; 8] = b"SOFTCLIK";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;
/// Extra draws per slot after a failed solve.
pub const RETRIES: usize = 3;
/// Largest tolerated fraction of slots that fail every draw.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DatasetMeta {
    pub seed: u64,
    pub params_hash: u64,
    /// Solves that failed during generation (retried or dropped).
    pub failed: u64,
}

/// `N` actuation vectors with their centerlines on a shared uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    m: usize,
    d: usize,
    n_s: usize,
    /// `N × m`
    q: DMatrix<f64>,
    /// Sample-major, then node, then coordinate.
    shapes: Vec<f64>,
    pub meta: DatasetMeta,
}

/// Generation settings.
#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub n: usize,
    pub n_s: usize,
    pub seed: u64,
    pub tol: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { n: 20_000, n_s: 100, seed: 0, tol: 1e-10, workers: None }
    }
}

/// Summary of a generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationReport {
    pub requested: usize,
    pub stored: usize,
    pub failed_solves: u64,
    pub dropped_slots: usize,
}

impl Dataset {
    pub fn new(q: DMatrix<f64>, shapes: Vec<f64>, n_s: usize, d: usize, meta: DatasetMeta) -> Result<Self> {
        let n = q.nrows();
        if n_s < 2 || d == 0 || q.ncols() == 0 {
            return Err(Error::InvalidArgument(format!("bad dataset dimensions m={} n_s={n_s} d={d}", q.ncols())));
        }
        if shapes.len() != n * n_s * d {
            return Err(Error::DimensionMismatch { expected: n * n_s * d, got: shapes.len() });
        }
        if q.iter().chain(shapes.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { m: q.ncols(), d, n_s, q, shapes, meta })
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn actuation_dim(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_nodes(&self) -> usize {
        self.n_s
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n_s).map(|k| grid_point(k, self.n_s)).collect()
    }

    /// `N × m` actuation matrix.
    pub fn actuations(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn actuation(&self, i: usize) -> DVector<f64> {
        self.q.row(i).transpose()
    }

    /// Flat shapes, sample-major then node then coordinate.
    pub fn raw_shapes(&self) -> &[f64] {
        &self.shapes
    }

    /// Centerline of sample `i` as `n_s × d`.
    pub fn shape(&self, i: usize) -> DMatrix<f64> {
        let stride = self.n_s * self.d;
        DMatrix::from_row_slice(self.n_s, self.d, &self.shapes[i * stride..(i + 1) * stride])
    }

    pub fn point(&self, i: usize, k: usize) -> DVector<f64> {
        let start = (i * self.n_s + k) * self.d;
        DVector::from_column_slice(&self.shapes[start..start + self.d])
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let stride = self.n_s * self.d;
        let q = DMatrix::from_fn(indices.len(), self.m, |r, c| self.q[(indices[r], c)]);
        let shapes = indices.iter().flat_map(|&i| self.shapes[i * stride..(i + 1) * stride].iter().copied()).collect();
        Dataset { m: self.m, d: self.d, n_s: self.n_s, q, shapes, meta: self.meta }
    }

    /// Per-coordinate mean and (population) standard deviation over all
    /// samples and nodes. Zero deviations are replaced by one.
    pub fn coordinate_stats(&self) -> (DVector<f64>, DVector<f64>) {
        let count = (self.len() * self.n_s) as f64;
        let mut mean = DVector::zeros(self.d);
        for p in self.shapes.chunks_exact(self.d) {
            for (k, v) in p.iter().enumerate() {
                mean[k] += v;
            }
        }
        mean /= count;
        let mut var = DVector::zeros(self.d);
        for p in self.shapes.chunks_exact(self.d) {
            for (k, v) in p.iter().enumerate() {
                var[k] += (v - mean[k]).powi(2);
            }
        }
        let std = (var / count).map(|v: f64| if v > 0.0 { v.sqrt() } else { 1.0 });
        (mean, std)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (self.q.len() + self.shapes.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.m, self.n_s, self.d] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [self.len() as u64, self.meta.seed, self.meta.params_hash, self.meta.failed, 0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        debug_assert_eq!(out.len(), HEADER_LEN);
        for r in 0..self.len() {
            for c in 0..self.m {
                out.extend_from_slice(&self.q[(r, c)].to_le_bytes());
            }
        }
        for v in &self.shapes {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let sum = checksum(&out);
        out[CHECKSUM_AT..HEADER_LEN].copy_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        let magic = rd.take(8)?;
        if magic != MAGIC {
            return Err(Error::Format { offset: 0, message: "bad magic, not a dataset file".into() });
        }
        let version = rd.u32()?;
        if version != VERSION {
            return Err(Error::Format { offset: 8, message: format!("unsupported version {version}") });
        }
        let m = rd.u32()? as usize;
        let n_s = rd.u32()? as usize;
        let d = rd.u32()? as usize;
        if m == 0 || d == 0 || n_s < 2 {
            return Err(Error::Format { offset: 12, message: format!("bad dimensions m={m} n_s={n_s} d={d}") });
        }
        let n = rd.u64()?;
        let seed = rd.u64()?;
        let params_hash = rd.u64()?;
        let failed = rd.u64()?;
        let stored_sum = rd.u64()?;
        let n = usize::try_from(n).map_err(|_| Error::Format { offset: 24, message: "sample count overflows".into() })?;
        let expected = n
            .checked_mul(m + n_s * d)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(HEADER_LEN))
            .ok_or(Error::Format { offset: 24, message: "sample count overflows".into() })?;
        if bytes.len() < expected {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                message: format!("truncated: expected {expected} bytes, found {}", bytes.len()),
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format { offset: expected as u64, message: "trailing bytes after data".into() });
        }
        if checksum(bytes) != stored_sum {
            return Err(Error::Format { offset: CHECKSUM_AT as u64, message: "checksum mismatch, file is corrupted".into() });
        }
        let mut q = DMatrix::zeros(n, m);
        for r in 0..n {
            for c in 0..m {
                q[(r, c)] = rd.f64_finite()?;
            }
        }
        let mut shapes = Vec::with_capacity(n * n_s * d);
        for _ in 0..n * n_s * d {
            shapes.push(rd.f64_finite()?);
        }
        Ok(Self { m, d, n_s, q, shapes, meta: DatasetMeta { seed, params_hash, failed } })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// One row per (sample, node): `sample,node,s,q0..,x0..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["sample".to_string(), "node".into(), "s".into()];
        header.extend((0..self.m).map(|i| format!("q{i}")));
        header.extend((0..self.d).map(|k| format!("x{k}")));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let q: Vec<String> = (0..self.m).map(|c| self.q[(i, c)].to_string()).collect();
            for k in 0..self.n_s {
                let p: Vec<String> = self.point(i, k).iter().map(f64::to_string).collect();
                writeln!(w, "{i},{k},{},{},{}", grid_point(k, self.n_s), q.join(","), p.join(","))?;
            }
        }
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

const CHECKSUM_AT: usize = 56;

fn checksum(file: &[u8]) -> u64 {
    crate::hash::fnv1a(file[..CHECKSUM_AT].iter().chain(&file[HEADER_LEN..]).copied())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format { offset: self.pos as u64, message: format!("unexpected end of file reading {n} bytes") });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64_finite(&mut self) -> Result<f64> {
        let at = self.pos as u64;
        let v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::Format { offset: at, message: "non-finite value".into() });
        }
        Ok(v)
    }
}

/// Uniform draw over the box.
pub fn draw_actuation(bounds: &ActuationBox, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(bounds.dim(), |c, _| rng.uniform_in(bounds.lo()[c], bounds.hi()[c]))
}

enum Slot {
    Solved { q: DVector<f64>, shape: DMatrix<f64>, failures: u64 },
    Dropped { failures: u64 },
}

fn solve_slot(p: &RodParams, bounds: &ActuationBox, opts: &GenerateOptions, i: usize) -> Slot {
    let mut rng = Rng::for_item(opts.seed, i as u64);
    let mut failures = 0;
    for _ in 0..=RETRIES {
        let q = draw_actuation(bounds, &mut rng);
        match solve_bvp(p, &q, opts.n_s, opts.tol) {
            Ok(sol) => return Slot::Solved { q, shape: sol.centerline.values().clone(), failures },
            Err(e) => {
                log::debug!("sample {i}: solve failed at {:?}: {e}", q.as_slice());
                failures += 1;
            }
        }
    }
    Slot::Dropped { failures }
}

/// Solves the rod at `opts.n` uniform draws from `bounds`.
///
/// Slot `i` draws from the stream seeded by `seed ^ i`, so the result does
/// not depend on the worker count. A failed solve is replaced by a fresh
/// draw up to [`RETRIES`] times; slots that never succeed are dropped.
pub fn generate(p: &RodParams, bounds: &ActuationBox, opts: &GenerateOptions) -> Result<(Dataset, GenerationReport)> {
    if opts.n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    if opts.n_s < 2 {
        return Err(Error::InvalidArgument(format!("n_s must be >= 2, got {}", opts.n_s)));
    }
    if bounds.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: bounds.dim() });
    }
    p.validate()?;
    let run = || -> Vec<Slot> { (0..opts.n).into_par_iter().map(|i| solve_slot(p, bounds, opts, i)).collect() };
    let slots = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut failed = 0;
    let mut dropped = 0;
    let mut qs = Vec::with_capacity(opts.n);
    let mut shapes = Vec::with_capacity(opts.n * opts.n_s * 3);
    for slot in slots {
        match slot {
            Slot::Solved { q, shape, failures } => {
                failed += failures;
                qs.push(q);
                for r in 0..shape.nrows() {
                    shapes.extend(shape.row(r).iter());
                }
            }
            Slot::Dropped { failures } => {
                failed += failures;
                dropped += 1;
            }
        }
    }
    if dropped as f64 > MAX_FAILURE_RATE * opts.n as f64 || qs.is_empty() {
        return Err(Error::Generation { failed: dropped, total: opts.n });
    }
    if dropped > 0 {
        log::warn!("{dropped} of {} samples dropped after {RETRIES} retries", opts.n);
    }
    let q = DMatrix::from_fn(qs.len(), 3, |r, c| qs[r][c]);
    let meta = DatasetMeta { seed: opts.seed, params_hash: p.fingerprint(), failed };
    let ds = Dataset::new(q, shapes, opts.n_s, 3, meta)?;
    let report = GenerationReport { requested: opts.n, stored: ds.len(), failed_solves: failed, dropped_slots: dropped };
    Ok((ds, report))
}

/// Split sizes: `floor(f·N)` each, then the remainder goes one by one to
/// the largest fractional parts (earlier parts win ties).
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let exact = fractions.map(|f| f * n as f64);
    let mut sizes = exact.map(|e| e.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let remainder = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(remainder) {
        sizes[i] += 1;
    }
    Ok(sizes)
}

/// Index sets of a seeded random split.
pub fn split_indices(n: usize, fractions: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    let sizes = split_sizes(n, fractions)?;
    let mut perm: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut perm);
    let test = perm.split_off(sizes[0] + sizes[1]);
    let val = perm.split_off(sizes[0]);
    Ok([perm, val, test])
}

/// `(train, validation, test)` subsets.
pub fn split(ds: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let [a, b, c] = split_indices(ds.len(), fractions, seed)?;
    Ok((ds.subset(&a), ds.subset(&b), ds.subset(&c)))
}

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.64, 0.16, 0.20];
