use nalgebra::{DMatrix, DVector};

use super::mlp::{Mlp, MlpGrads, Tape};
use crate::actuation::ActuationBox;
use crate::error::{Error, Result};
use crate::model::ShapeModel;
use crate::rng::Rng;

/// Branch layer widths of the three-fiber network.
pub const BRANCH_LAYERS: [usize; 5] = [3, 64, 64, 64, 192];
/// Trunk layer widths of the three-fiber network.
pub const TRUNK_LAYERS: [usize; 5] = [1, 64, 64, 64, 192];
pub const LATENT: usize = 64;

/// Index of latent `j`, coordinate `k` in a flat `v·d` output.
/// Latent-major: `j` outer, `k` inner.
#[inline]
pub fn latent_index(j: usize, k: usize, dim: usize) -> usize {
    j * dim + k
}

/// Reshapes a flat `v·d` vector into a `v × d` matrix.
pub fn unflatten_latent(flat: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    let v = flat.len() / dim;
    DMatrix::from_fn(v, dim, |j, k| flat[latent_index(j, k, dim)])
}

pub fn flatten_latent(m: &DMatrix<f64>) -> DVector<f64> {
    let dim = m.ncols();
    let mut out = DVector::zeros(m.len());
    for j in 0..m.nrows() {
        for k in 0..dim {
            out[latent_index(j, k, dim)] = m[(j, k)];
        }
    }
    out
}

/// Component-wise affine map `x ↦ scale ∘ x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub scale: DVector<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(scale: DVector<f64>, offset: DVector<f64>) -> Result<Self> {
        if scale.len() != offset.len() {
            return Err(Error::DimensionMismatch { expected: scale.len(), got: offset.len() });
        }
        if scale.iter().chain(offset.iter()).any(|v| !v.is_finite()) || scale.iter().any(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("affine map must be finite and invertible".into()));
        }
        Ok(Self { scale, offset })
    }

    pub fn identity(n: usize) -> Self {
        Self { scale: DVector::from_element(n, 1.0), offset: DVector::zeros(n) }
    }

    /// Maps the box `[lo, hi]` onto `[-1, 1]`.
    pub fn box_to_unit(bounds: &ActuationBox) -> Result<Self> {
        let width = bounds.hi() - bounds.lo();
        let scale = width.map(|w| 2.0 / w);
        let offset = (bounds.hi() + bounds.lo()).component_div(&width) * -1.0;
        Self::new(scale, offset)
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.scale) + &self.offset
    }

    pub fn invert(&self, y: &DVector<f64>) -> DVector<f64> {
        (y - &self.offset).component_div(&self.scale)
    }
}

/// Branch/trunk operator network `(q, s) ↦ r(s)`.
///
/// The branch maps normalized actuation to `v·d` features, the trunk maps
/// `s` to `v·d` features, and coordinate `k` of the normalized output is
/// `Σ_j br[j,k]·tr[j,k]`. Outputs are de-standardized with `output_map`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNet {
    pub branch: Mlp,
    pub trunk: Mlp,
    latent: usize,
    dim: usize,
    /// Raw actuation → network input.
    pub input_map: AffineMap,
    /// Network output → physical position.
    pub output_map: AffineMap,
    /// Region the network was trained on; evaluation outside it is logged.
    pub train_box: Option<ActuationBox>,
}

/// Parameter gradients of both sub-networks.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorGrads {
    pub branch: MlpGrads,
    pub trunk: MlpGrads,
}

impl OperatorGrads {
    pub fn zeros_like(net: &OperatorNet) -> Self {
        Self { branch: MlpGrads::zeros_like(&net.branch), trunk: MlpGrads::zeros_like(&net.trunk) }
    }

    /// Flat views in [`OperatorNet::param_slices`] order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = self.branch.slices();
        out.extend(self.trunk.slices());
        out
    }
}

/// A training batch on a shared arc-length grid: every sample contributes
/// every grid node.
#[derive(Debug, Clone)]
pub struct GridBatch {
    /// Raw actuation, `m × B`.
    pub actuation: DMatrix<f64>,
    pub grid: Vec<f64>,
    /// Standardized targets per output coordinate, each `B × n_s`.
    pub targets: Vec<DMatrix<f64>>,
}

impl OperatorNet {
    pub fn new(branch: Mlp, trunk: Mlp, latent: usize, dim: usize, input_map: AffineMap, output_map: AffineMap) -> Result<Self> {
        if latent == 0 || dim == 0 {
            return Err(Error::InvalidArgument("latent width and output dimension must be positive".into()));
        }
        for (name, out) in [("branch", branch.output_dim()), ("trunk", trunk.output_dim())] {
            if out != latent * dim {
                return Err(Error::InvalidArgument(format!(
                    "{name} output {out} does not equal latent {latent} x dim {dim}"
                )));
            }
        }
        if trunk.input_dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: trunk.input_dim() });
        }
        if input_map.dim() != branch.input_dim() {
            return Err(Error::DimensionMismatch { expected: branch.input_dim(), got: input_map.dim() });
        }
        if output_map.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: output_map.dim() });
        }
        Ok(Self { branch, trunk, latent, dim, input_map, output_map, train_box: None })
    }

    /// Randomly initialized network with the given layer widths.
    pub fn init(
        branch_sizes: &[usize],
        trunk_sizes: &[usize],
        latent: usize,
        dim: usize,
        input_map: AffineMap,
        output_map: AffineMap,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let branch = Mlp::new(branch_sizes, &mut rng)?;
        let trunk = Mlp::new(trunk_sizes, &mut rng)?;
        Self::new(branch, trunk, latent, dim, input_map, output_map)
    }

    /// The three-fiber architecture: branch `[3, 64, 64, 64, 192]`, trunk
    /// `[1, 64, 64, 64, 192]`, `v = 64`, `d = 3`.
    pub fn three_fiber(bounds: &ActuationBox, output_map: AffineMap, seed: u64) -> Result<Self> {
        let mut net = Self::init(&BRANCH_LAYERS, &TRUNK_LAYERS, LATENT, 3, AffineMap::box_to_unit(bounds)?, output_map, seed)?;
        net.train_box = Some(bounds.clone());
        Ok(net)
    }

    pub fn latent(&self) -> usize {
        self.latent
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn actuation_dim(&self) -> usize {
        self.branch.input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.branch.param_count() + self.trunk.param_count()
    }

    /// Branch parameters then trunk parameters; each layer weights then bias.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = self.branch.param_slices();
        out.extend(self.trunk.param_slices());
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.branch.param_slices_mut();
        out.extend(self.trunk.param_slices_mut());
        out
    }

    fn check_actuation(&self, q: &DVector<f64>) {
        assert_eq!(q.len(), self.actuation_dim(), "actuation dimension");
        if let Some(b) = &self.train_box {
            if !b.inflated(1e-9).contains(q) {
                log::warn!("operator evaluated outside its training box at {:?}", q.as_slice());
            }
        }
    }

    fn branch_tape(&self, q: &DVector<f64>) -> Tape {
        let x = self.input_map.apply(q);
        self.branch.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))
    }

    fn trunk_tape(&self, s: f64) -> Tape {
        self.trunk.forward_batch(&DMatrix::from_element(1, 1, s))
    }

    fn contract(&self, br: &[f64], tr: &[f64]) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim);
        for j in 0..self.latent {
            for k in 0..self.dim {
                let idx = latent_index(j, k, self.dim);
                y[k] += br[idx] * tr[idx];
            }
        }
        y
    }

    /// Physical position `r(s)` at actuation `q`.
    pub fn eval(&self, q: &DVector<f64>, s: f64) -> DVector<f64> {
        self.check_actuation(q);
        let br = self.branch_tape(q);
        let tr = self.trunk_tape(s);
        self.output_map.apply(&self.contract(br.output().as_slice(), tr.output().as_slice()))
    }

    /// `∂r(s)/∂q`, `d × m`, by reverse mode through the branch.
    pub fn grad_actuation(&self, q: &DVector<f64>, s: f64) -> DMatrix<f64> {
        self.check_actuation(q);
        let br = self.branch_tape(q);
        let tr = self.trunk_tape(s);
        let seeds = self.readout_seeds(tr.output().as_slice());
        let grad_in = self.branch.backward(&br, &seeds, None); // m × d
        let mut out = grad_in.transpose();
        for (i, mut col) in out.column_iter_mut().enumerate() {
            col *= self.input_map.scale[i];
        }
        out
    }

    /// `∂r(s)/∂s`, by reverse mode through the trunk.
    pub fn grad_arclength(&self, q: &DVector<f64>, s: f64) -> DVector<f64> {
        self.check_actuation(q);
        let br = self.branch_tape(q);
        let tr = self.trunk_tape(s);
        let seeds = self.readout_seeds(br.output().as_slice());
        self.trunk.backward(&tr, &seeds, None).row(0).transpose()
    }

    /// `(v·d) × d` seeds: column `k` holds `std_k · other[j, k]` at the rows of coordinate `k`.
    fn readout_seeds(&self, other: &[f64]) -> DMatrix<f64> {
        let mut seeds = DMatrix::zeros(self.latent * self.dim, self.dim);
        for j in 0..self.latent {
            for k in 0..self.dim {
                let idx = latent_index(j, k, self.dim);
                seeds[(idx, k)] = self.output_map.scale[k] * other[idx];
            }
        }
        seeds
    }

    /// Loss and parameter gradients for arbitrary `(q, s, target)` triples.
    ///
    /// Loss is the mean over triples and coordinates of the squared error in
    /// standardized output space.
    pub fn loss_and_grads(&self, batch: &[(DVector<f64>, f64, DVector<f64>)]) -> Result<(f64, OperatorGrads)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = batch.len();
        let m = self.actuation_dim();
        let mut qs = DMatrix::zeros(m, n);
        let mut ss = DMatrix::zeros(1, n);
        let mut targets = DMatrix::zeros(self.dim, n);
        for (c, (q, s, t)) in batch.iter().enumerate() {
            if q.len() != m || t.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: m, got: q.len() });
            }
            qs.set_column(c, &self.input_map.apply(q));
            ss[(0, c)] = *s;
            targets.set_column(c, &self.output_map.invert(t));
        }
        let br = self.branch.forward_batch(&qs);
        let tr = self.trunk.forward_batch(&ss);
        let (bo, to) = (br.output(), tr.output());
        let norm = 2.0 / (n * self.dim) as f64;
        let mut loss = 0.0;
        let mut d_br = DMatrix::zeros(bo.nrows(), n);
        let mut d_tr = DMatrix::zeros(to.nrows(), n);
        for c in 0..n {
            let y = self.contract(bo.column(c).as_slice(), to.column(c).as_slice());
            let err = y - targets.column(c);
            loss += err.norm_squared();
            for j in 0..self.latent {
                for k in 0..self.dim {
                    let idx = latent_index(j, k, self.dim);
                    d_br[(idx, c)] = norm * err[k] * to[(idx, c)];
                    d_tr[(idx, c)] = norm * err[k] * bo[(idx, c)];
                }
            }
        }
        let mut grads = OperatorGrads::zeros_like(self);
        self.branch.backward(&br, &d_br, Some(&mut grads.branch));
        self.trunk.backward(&tr, &d_tr, Some(&mut grads.trunk));
        Ok((loss / (n * self.dim) as f64, grads))
    }

    /// Standardized predictions on a shared grid: one `B × n_s` matrix per coordinate.
    pub fn predict_grid(&self, actuation: &DMatrix<f64>, grid: &[f64]) -> Vec<DMatrix<f64>> {
        let (br, tr) = self.grid_tapes(actuation, grid);
        (0..self.dim)
            .map(|k| {
                let bk = br.output().rows_with_step(k, self.latent, self.dim - 1);
                let tk = tr.output().rows_with_step(k, self.latent, self.dim - 1);
                let mut y = DMatrix::zeros(actuation.ncols(), grid.len());
                y.gemm_tr(1.0, &bk, &tk, 0.0);
                y
            })
            .collect()
    }

    fn grid_tapes(&self, actuation: &DMatrix<f64>, grid: &[f64]) -> (Tape, Tape) {
        let mut xs = actuation.clone();
        for mut col in xs.column_iter_mut() {
            let mapped = col.component_mul(&self.input_map.scale) + &self.input_map.offset;
            col.copy_from(&mapped);
        }
        let br = self.branch.forward_batch(&xs);
        let tr = self.trunk.forward_batch(&DMatrix::from_row_slice(1, grid.len(), grid));
        (br, tr)
    }

    /// Grid-batch loss and gradients; equal to [`Self::loss_and_grads`] on
    /// the `B · n_s` triples of the batch, but shares the branch pass
    /// across nodes and the trunk pass across samples.
    pub fn grid_loss_and_grads(&self, batch: &GridBatch) -> (f64, OperatorGrads) {
        let b = batch.actuation.ncols();
        let n_s = batch.grid.len();
        let (br, tr) = self.grid_tapes(&batch.actuation, &batch.grid);
        let norm = 2.0 / (b * n_s * self.dim) as f64;
        let mut loss = 0.0;
        let mut d_br = DMatrix::zeros(self.latent * self.dim, b);
        let mut d_tr = DMatrix::zeros(self.latent * self.dim, n_s);
        for k in 0..self.dim {
            let bk = br.output().rows_with_step(k, self.latent, self.dim - 1).into_owned();
            let tk = tr.output().rows_with_step(k, self.latent, self.dim - 1).into_owned();
            let mut err = DMatrix::zeros(b, n_s);
            err.gemm_tr(1.0, &bk, &tk, 0.0);
            err -= &batch.targets[k];
            loss += err.norm_squared();
            // d_bk = tk · errᵀ (v × B), d_tk = bk · err (v × n_s)
            let mut d_bk = DMatrix::zeros(self.latent, b);
            d_bk.gemm(norm, &tk, &err.transpose(), 0.0);
            let mut d_tk = DMatrix::zeros(self.latent, n_s);
            d_tk.gemm(norm, &bk, &err, 0.0);
            for j in 0..self.latent {
                d_br.row_mut(latent_index(j, k, self.dim)).copy_from(&d_bk.row(j));
                d_tr.row_mut(latent_index(j, k, self.dim)).copy_from(&d_tk.row(j));
            }
        }
        let mut grads = OperatorGrads::zeros_like(self);
        self.branch.backward(&br, &d_br, Some(&mut grads.branch));
        self.trunk.backward(&tr, &d_tr, Some(&mut grads.trunk));
        (loss / (b * n_s * self.dim) as f64, grads)
    }
}

impl ShapeModel for OperatorNet {
    fn actuation_dim(&self) -> usize {
        OperatorNet::actuation_dim(self)
    }

    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn shape(&self, q: &DVector<f64>, s: f64) -> DVector<f64> {
        self.eval(q, s)
    }

    fn partials(&self, q: &DVector<f64>, s: f64) -> DMatrix<f64> {
        self.grad_actuation(q, s)
    }

    fn curve<'a>(&'a self, q: &DVector<f64>) -> Box<dyn Fn(f64) -> DVector<f64> + 'a> {
        self.check_actuation(q);
        let br = self.branch_tape(q).output().column(0).into_owned();
        Box::new(move |s| {
            let tr = self.trunk_tape(s);
            self.output_map.apply(&self.contract(br.as_slice(), tr.output().as_slice()))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralop::mlp::Dense;

    fn tiny(seed: u64) -> OperatorNet {
        let out = AffineMap::new(DVector::from_vec(vec![0.5, 2.0, 1.5]), DVector::from_vec(vec![0.1, -0.2, 0.3])).unwrap();
        let inp = AffineMap::box_to_unit(&ActuationBox::uniform(3, -1.67, 0.0).unwrap()).unwrap();
        OperatorNet::init(&[3, 4, 6], &[1, 4, 6], 2, 3, inp, out, seed).unwrap()
    }

    fn ones_layer(out: usize, inp: usize) -> Dense {
        Dense { weight: DMatrix::zeros(out, inp), bias: DVector::from_element(out, 1.0) }
    }

    #[test]
    fn all_ones_features_sum_over_latent() {
        let branch = Mlp::from_layers(vec![ones_layer(6, 3)]).unwrap();
        let trunk = Mlp::from_layers(vec![ones_layer(6, 1)]).unwrap();
        let net = OperatorNet::new(branch, trunk, 2, 3, AffineMap::identity(3), AffineMap::identity(3)).unwrap();
        let y = net.eval(&DVector::from_vec(vec![0.3, 0.1, -0.2]), 0.4);
        assert_eq!(y.as_slice(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn zero_branch_gives_output_offset() {
        let mut net = tiny(1);
        net.branch = Mlp::zeros(&[3, 4, 6]).unwrap();
        for s in [0.0, 0.3, 1.0] {
            let y = net.eval(&DVector::from_vec(vec![-0.5, -1.0, -0.1]), s);
            assert_eq!(y, net.output_map.offset);
        }
        let g = net.grad_actuation(&DVector::from_vec(vec![-0.5, -1.0, -0.1]), 0.5);
        assert_eq!(g, DMatrix::zeros(3, 3));
    }

    #[test]
    fn linear_single_latent_gradient_closed_form() {
        // v = 1, d = 1, branch = w·x̃ + b, x̃ = a∘q + c  ⇒  ∂y/∂q = σ · tr(s) · w ∘ a
        let w = DMatrix::from_row_slice(1, 3, &[0.4, -1.3, 2.2]);
        let branch = Mlp::from_layers(vec![Dense { weight: w.clone(), bias: DVector::from_vec(vec![0.7]) }]).unwrap();
        let trunk = Mlp::from_layers(vec![
            Dense { weight: DMatrix::from_element(2, 1, 0.9), bias: DVector::from_vec(vec![0.1, -0.3]) },
            Dense { weight: DMatrix::from_row_slice(1, 2, &[1.5, -0.6]), bias: DVector::from_vec(vec![0.2]) },
        ])
        .unwrap();
        let input = AffineMap::new(DVector::from_vec(vec![2.0, 0.5, -1.0]), DVector::from_vec(vec![0.1, 0.0, 0.3])).unwrap();
        let output = AffineMap::new(DVector::from_vec(vec![3.0]), DVector::from_vec(vec![-1.0])).unwrap();
        let net = OperatorNet::new(branch, trunk, 1, 1, input.clone(), output).unwrap();
        let s = 0.35;
        let tr = 1.5 * (0.9 * s + 0.1f64).tanh() - 0.6 * (0.9 * s - 0.3f64).tanh() + 0.2;
        let g = net.grad_actuation(&DVector::from_vec(vec![0.2, -0.1, 0.5]), s);
        for i in 0..3 {
            let expected = 3.0 * tr * w[(0, i)] * input.scale[i];
            assert!((g[(0, i)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn actuation_gradient_matches_finite_differences() {
        let net = tiny(7);
        let mut rng = Rng::new(8);
        for _ in 0..100 {
            let q = DVector::from_fn(3, |_, _| rng.uniform_in(-1.67, 0.0));
            let s = rng.uniform();
            let g = net.grad_actuation(&q, s);
            let h = 1e-5;
            for i in 0..3 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += h;
                qm[i] -= h;
                let fd = (net.eval(&qp, s) - net.eval(&qm, s)) / (2.0 * h);
                let rel = (g.column(i) - &fd).norm() / fd.norm().max(1e-6);
                assert!(rel < 1e-6, "rel {rel}");
            }
        }
    }

    #[test]
    fn arclength_gradient_matches_finite_differences() {
        let net = tiny(9);
        let q = DVector::from_vec(vec![-0.4, -1.2, -0.7]);
        for s in [0.1, 0.5, 0.9] {
            let g = net.grad_arclength(&q, s);
            let h = 1e-6;
            let fd = (net.eval(&q, s + h) - net.eval(&q, s - h)) / (2.0 * h);
            assert!((g - fd).norm() < 1e-8);
        }
    }

    #[test]
    fn perfect_targets_give_zero_loss_and_gradient() {
        let net = tiny(3);
        let batch: Vec<_> = (0..4)
            .map(|i| {
                let q = DVector::from_vec(vec![-0.1 * i as f64, -0.5, -1.0]);
                let s = 0.2 * i as f64;
                let t = net.eval(&q, s);
                (q, s, t)
            })
            .collect();
        let (loss, grads) = net.loss_and_grads(&batch).unwrap();
        assert!(loss < 1e-30);
        assert!(grads.slices().iter().all(|sl| sl.iter().all(|g| g.abs() < 1e-15)));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let net = tiny(5);
        let mut rng = Rng::new(6);
        let batch: Vec<_> = (0..4)
            .map(|_| {
                let q = DVector::from_fn(3, |_, _| rng.uniform_in(-1.67, 0.0));
                let s = rng.uniform();
                let t = DVector::from_fn(3, |_, _| rng.uniform_in(-1.0, 1.0));
                (q, s, t)
            })
            .collect();
        assert!(net.param_count() <= 100);
        let (_, grads) = net.loss_and_grads(&batch).unwrap();
        let analytic: Vec<f64> = grads.slices().concat();
        let h = 1e-6;
        let mut idx = 0;
        let n_slices = net.param_slices().len();
        for si in 0..n_slices {
            let len = net.param_slices()[si].len();
            for e in 0..len {
                let mut plus = net.clone();
                plus.param_slices_mut()[si][e] += h;
                let mut minus = net.clone();
                minus.param_slices_mut()[si][e] -= h;
                let fd = (plus.loss_and_grads(&batch).unwrap().0 - minus.loss_and_grads(&batch).unwrap().0) / (2.0 * h);
                let a = analytic[idx];
                assert!((a - fd).abs() <= 1e-5 * a.abs().max(1e-4), "param {idx}: {a} vs {fd}");
                idx += 1;
            }
        }
    }

    #[test]
    fn grid_batch_matches_triples() {
        let net = tiny(12);
        let mut rng = Rng::new(13);
        let b = 3;
        let grid = vec![0.0, 0.25, 0.5, 1.0];
        let actuation = DMatrix::from_fn(3, b, |_, _| rng.uniform_in(-1.67, 0.0));
        let targets: Vec<DMatrix<f64>> = (0..3).map(|_| DMatrix::from_fn(b, grid.len(), |_, _| rng.uniform())).collect();
        let (loss_grid, g_grid) = net.grid_loss_and_grads(&GridBatch { actuation: actuation.clone(), grid: grid.clone(), targets: targets.clone() });
        let mut triples = Vec::new();
        for i in 0..b {
            for (n, &s) in grid.iter().enumerate() {
                let t_norm = DVector::from_fn(3, |k, _| targets[k][(i, n)]);
                triples.push((actuation.column(i).into_owned(), s, net.output_map.apply(&t_norm)));
            }
        }
        let (loss, g) = net.loss_and_grads(&triples).unwrap();
        assert!((loss - loss_grid).abs() < 1e-12 * loss);
        for (a, c) in g.slices().iter().zip(g_grid.slices()) {
            for (x, y) in a.iter().zip(c) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let pred = net.predict_grid(&actuation, &grid);
        for i in 0..b {
            let y = net.eval(&actuation.column(i).into_owned(), grid[2]);
            let y_norm = net.output_map.invert(&y);
            for k in 0..3 {
                assert!((pred[k][(i, 2)] - y_norm[k]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn latent_reshape_round_trip() {
        let m = DMatrix::from_fn(64, 3, |j, k| (j * 10 + k) as f64);
        let flat = flatten_latent(&m);
        assert_eq!(flat[latent_index(5, 2, 3)], 52.0);
        assert_eq!(unflatten_latent(&flat, 3), m);
    }

    #[test]
    fn curve_matches_pointwise_eval() {
        let net = tiny(4);
        let q = DVector::from_vec(vec![-0.2, -0.9, -1.4]);
        let c = net.curve(&q);
        for s in [0.0, 0.33, 1.0] {
            assert_eq!(c(s), net.eval(&q, s));
        }
    }

    #[test]
    fn construction_checks_widths() {
        let inp = AffineMap::identity(3);
        let out = AffineMap::identity(3);
        let mut rng = Rng::new(0);
        let branch = Mlp::new(&[3, 4, 6], &mut rng).unwrap();
        let trunk = Mlp::new(&[1, 4, 5], &mut rng).unwrap();
        assert!(OperatorNet::new(branch, trunk, 2, 3, inp, out).is_err());
        assert!(AffineMap::new(DVector::from_vec(vec![0.0]), DVector::zeros(1)).is_err());
    }
}
