//! Adam training of the operator network, evaluation metrics and checkpoints.
//!
//! A minibatch is `batch_size` samples, each contributing every grid node,
//! so one step sees `batch_size · n_s` `(q, s, r)` triples. The loss is the
//! mean squared error in standardized output space.
//!
//! Checkpoint layout (little-endian): magic `SOFTCKPT`, `u32` version, the
//! branch and trunk layer-size tables (`u32` count then `u32` widths),
//! `u32` latent width, `u32` output dimension, the input and output affine
//! maps (`f64` scales then offsets), a `u8` training-box flag with optional
//! `f64` lower/upper bounds, a `u64` parameter count, the parameters, and a
//! `u64` FNV-1a checksum of everything before it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::actuation::ActuationBox;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neuralop::{AffineMap, GridBatch, Mlp, OperatorNet};
use crate::rng::Rng;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SOFTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Samples per chunk when evaluating whole datasets.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Best checkpoint is written here after every improvement.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            lr0: 1e-3,
            lr_final: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr0 && self.lr0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < lr_final <= lr0, got lr0={} lr_final={}",
                self.lr0, self.lr_final
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("Adam constants out of range".into()));
        }
        Ok(())
    }

    /// `lr0 · (lr_final / lr0)^(epoch / epochs)`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * (self.lr_final / self.lr0).powf(epoch as f64 / self.epochs as f64)
    }
}

/// Adam with bias correction; one moment buffer per parameter slice.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(shapes: &[usize], beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_net(net: &OperatorNet, cfg: &TrainConfig) -> Self {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::new(&shapes, cfg.beta1, cfg.beta2, cfg.eps)
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        assert_eq!(params.len(), self.m.len(), "parameter slice count");
        assert_eq!(grads.len(), self.m.len(), "gradient slice count");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl History {
    pub fn best_val_mse(&self) -> f64 {
        self.records[self.best_epoch].val_mse
    }

    /// Minimum validation MSE up to and including each epoch.
    pub fn running_best(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.val_mse);
                Some(*best)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,lr,train_mse,val_mse")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.epoch, r.lr, r.train_mse, r.val_mse)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Output map that standardizes each coordinate with the dataset statistics.
pub fn standardization(ds: &Dataset) -> AffineMap {
    let (mean, std) = ds.coordinate_stats();
    AffineMap::new(std, mean).expect("finite statistics with positive deviations")
}

/// Standardized targets per coordinate, each `N × n_s`.
fn standardized_targets(net: &OperatorNet, ds: &Dataset) -> Vec<DMatrix<f64>> {
    let (n, n_s, d) = (ds.len(), ds.n_nodes(), ds.dim());
    let raw = ds.raw_shapes();
    let map = &net.output_map;
    (0..d)
        .map(|k| DMatrix::from_fn(n, n_s, |i, j| (raw[(i * n_s + j) * d + k] - map.offset[k]) / map.scale[k]))
        .collect()
}

fn check_compatible(net: &OperatorNet, ds: &Dataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} set is empty")));
    }
    if ds.actuation_dim() != net.actuation_dim() {
        return Err(Error::DimensionMismatch { expected: net.actuation_dim(), got: ds.actuation_dim() });
    }
    if ds.dim() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: ds.dim() });
    }
    Ok(())
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Sum of squared standardized residuals over a dataset.
fn squared_error(net: &OperatorNet, ds: &Dataset, targets: &[DMatrix<f64>]) -> f64 {
    let grid = ds.grid();
    let q_t = ds.actuations().transpose();
    let mut total = 0.0;
    for start in (0..ds.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(ds.len());
        let pred = net.predict_grid(&q_t.columns(start, end - start).into_owned(), &grid);
        for (k, p) in pred.iter().enumerate() {
            total += (p - targets[k].rows(start, end - start)).norm_squared();
        }
    }
    total
}

/// Validation MSE in standardized space, as used for checkpoint selection.
pub fn normalized_mse(net: &OperatorNet, ds: &Dataset) -> Result<f64> {
    check_compatible(net, ds, "evaluation")?;
    let targets = standardized_targets(net, ds);
    Ok(squared_error(net, ds, &targets) / (ds.len() * ds.n_nodes() * ds.dim()) as f64)
}

/// Trains `net` and returns the parameters with the lowest validation MSE.
///
/// Each epoch draws a fresh permutation from a stream seeded by
/// `cfg.seed`; the learning rate is constant within an epoch.
pub fn train(mut net: OperatorNet, train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<(OperatorNet, History)> {
    cfg.validate()?;
    check_compatible(&net, train_set, "training")?;
    check_compatible(&net, val_set, "validation")?;
    if train_set.n_nodes() != val_set.n_nodes() {
        return Err(Error::DimensionMismatch { expected: train_set.n_nodes(), got: val_set.n_nodes() });
    }
    let grid = train_set.grid();
    let train_targets = standardized_targets(&net, train_set);
    let val_targets = standardized_targets(&net, val_set);
    let q_train = train_set.actuations().transpose();
    let val_count = (val_set.len() * val_set.n_nodes() * val_set.dim()) as f64;

    let mut adam = Adam::for_net(&net, cfg);
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best = net.clone();
    let mut best_val = f64::INFINITY;

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = GridBatch {
                actuation: DMatrix::from_fn(q_train.nrows(), idx.len(), |r, c| q_train[(r, idx[c])]),
                grid: grid.clone(),
                targets: train_targets.iter().map(|t| rows(t, idx)).collect(),
            };
            let (loss, grads) = net.grid_loss_and_grads(&batch);
            if !loss.is_finite() || grads.slices().iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFiniteLoss { epoch, batch: b, lr });
            }
            adam.step(net.param_slices_mut(), grads.slices(), lr);
            loss_sum += loss * idx.len() as f64;
            weight_sum += idx.len() as f64;
        }
        let val_mse = squared_error(&net, val_set, &val_targets) / val_count;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: order.len().div_ceil(cfg.batch_size), lr });
        }
        let record = EpochRecord { epoch, lr, train_mse: loss_sum / weight_sum, val_mse };
        log::info!("epoch {epoch}: lr={lr:.3e} train={:.3e} val={val_mse:.3e}", record.train_mse);
        history.records.push(record);
        if val_mse < best_val {
            best_val = val_mse;
            best = net.clone();
            history.best_epoch = epoch;
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(&best, path)?;
            }
        }
    }
    Ok((best, history))
}

/// Test-set metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean squared residual over (sample, node, coordinate), standardized space.
    pub mse: f64,
    /// The same mean in physical units.
    pub mse_physical: f64,
    /// Mean over samples of `‖pred − true‖ / ‖true‖`, discrete L² over the grid.
    pub l2_relative: f64,
}

pub fn evaluate(net: &OperatorNet, test: &Dataset) -> Result<Metrics> {
    check_compatible(net, test, "test")?;
    let (n, n_s, d) = (test.len(), test.n_nodes(), test.dim());
    let grid = test.grid();
    let q_t = test.actuations().transpose();
    let raw = test.raw_shapes();
    let (mut norm_sum, mut phys_sum, mut rel_sum) = (0.0, 0.0, 0.0);
    for start in (0..n).step_by(EVAL_CHUNK) {
        let len = (start + EVAL_CHUNK).min(n) - start;
        let pred = net.predict_grid(&q_t.columns(start, len).into_owned(), &grid);
        for i in 0..len {
            let (mut err2, mut true2) = (0.0, 0.0);
            for j in 0..n_s {
                for k in 0..d {
                    let truth = raw[((start + i) * n_s + j) * d + k];
                    let phys = pred[k][(i, j)] * net.output_map.scale[k] + net.output_map.offset[k];
                    let e = phys - truth;
                    let en = pred[k][(i, j)] - (truth - net.output_map.offset[k]) / net.output_map.scale[k];
                    norm_sum += en * en;
                    err2 += e * e;
                    true2 += truth * truth;
                }
            }
            phys_sum += err2;
            rel_sum += if true2 > 0.0 { (err2 / true2).sqrt() } else { err2.sqrt() };
        }
    }
    let count = (n * n_s * d) as f64;
    Ok(Metrics { mse: norm_sum / count, mse_physical: phys_sum / count, l2_relative: rel_sum / n as f64 })
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, vals: impl IntoIterator<Item = &'a f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn checkpoint_bytes(net: &OperatorNet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for mlp in [&net.branch, &net.trunk] {
        let sizes = mlp.layer_sizes();
        put_u32(&mut out, sizes.len());
        for s in sizes {
            put_u32(&mut out, s);
        }
    }
    put_u32(&mut out, net.latent());
    put_u32(&mut out, net.dim());
    for map in [&net.input_map, &net.output_map] {
        put_f64s(&mut out, map.scale.iter());
        put_f64s(&mut out, map.offset.iter());
    }
    match &net.train_box {
        Some(b) => {
            out.push(1);
            put_f64s(&mut out, b.lo().iter());
            put_f64s(&mut out, b.hi().iter());
        }
        None => out.push(0),
    }
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for s in net.param_slices() {
        put_f64s(&mut out, s.iter());
    }
    let sum = crate::hash::fnv1a(out.iter().copied());
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format { offset: self.pos as u64, message: message.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("unexpected end of file reading {n} bytes")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if !v.is_finite() {
            self.pos -= 8;
            return Err(self.err("non-finite value"));
        }
        Ok(v)
    }

    fn vector(&mut self, n: usize) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(n);
        for x in v.iter_mut() {
            *x = self.f64()?;
        }
        Ok(v)
    }

    fn sizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        if !(2..=64).contains(&n) {
            return Err(self.err(format!("implausible layer count {n}")));
        }
        let sizes = (0..n).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        if sizes.iter().any(|&s| s == 0 || s > 1 << 16) {
            return Err(self.err(format!("implausible layer sizes {sizes:?}")));
        }
        Ok(sizes)
    }

    fn map(&mut self, n: usize) -> Result<AffineMap> {
        let at = self.pos;
        let scale = self.vector(n)?;
        let offset = self.vector(n)?;
        AffineMap::new(scale, offset).map_err(|e| Error::Format { offset: at as u64, message: e.to_string() })
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<OperatorNet> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format { offset: 0, message: "bad magic, not a checkpoint".into() });
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format { offset: 8, message: format!("unsupported version {version}") });
    }
    let body_len = bytes.len().checked_sub(8).filter(|&n| n >= c.pos).ok_or_else(|| c.err("file too short"))?;
    let (body, sum) = bytes.split_at(body_len);
    if crate::hash::fnv1a(body.iter().copied()) != u64::from_le_bytes(sum.try_into().expect("8 bytes")) {
        return Err(Error::Format { offset: body_len as u64, message: "checksum mismatch, file is corrupted".into() });
    }
    let mut c = Cursor { bytes: body, pos: c.pos };
    let branch_sizes = c.sizes()?;
    let trunk_sizes = c.sizes()?;
    let latent = c.u32()?;
    let dim = c.u32()?;
    let header_end = c.pos;
    let mut branch = Mlp::zeros(&branch_sizes).map_err(|e| c.err(e.to_string()))?;
    let mut trunk = Mlp::zeros(&trunk_sizes).map_err(|e| c.err(e.to_string()))?;
    let input_map = c.map(branch_sizes[0])?;
    let output_map = c.map(dim)?;
    let train_box = match c.take(1)?[0] {
        0 => None,
        1 => {
            let at = c.pos;
            let lo = c.vector(branch_sizes[0])?;
            let hi = c.vector(branch_sizes[0])?;
            Some(ActuationBox::new(lo, hi).map_err(|e| Error::Format { offset: at as u64, message: e.to_string() })?)
        }
        flag => return Err(Error::Format { offset: c.pos as u64 - 1, message: format!("bad box flag {flag}") }),
    };
    let count_at = c.pos;
    let count = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    if count != (branch.param_count() + trunk.param_count()) as u64 {
        return Err(Error::Format {
            offset: count_at as u64,
            message: format!("parameter count {count} does not match the layer table"),
        });
    }
    for s in branch.param_slices_mut().into_iter().chain(trunk.param_slices_mut()) {
        for x in s.iter_mut() {
            *x = c.f64()?;
        }
    }
    if c.pos != c.bytes.len() {
        return Err(c.err("trailing bytes after parameters"));
    }
    let mut net = OperatorNet::new(branch, trunk, latent, dim, input_map, output_map)
        .map_err(|e| Error::Format { offset: header_end as u64, message: e.to_string() })?;
    net.train_box = train_box;
    Ok(net)
}

pub fn save_checkpoint(net: &OperatorNet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&checkpoint_bytes(net))?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<OperatorNet> {
    checkpoint_from_bytes(&fs::read(path)?)
}
