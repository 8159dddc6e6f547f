use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, NdFloat};
use num_traits::FromPrimitive;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Activation, LevelConditioning, ModelConfig, Precision};
use crate::error::{Error, Result};
use crate::probe::{MaskedView, ProbeConfig};
use crate::rng::{self, Domain};
use crate::schema::{Code, FeatureSpec, MASK};
use crate::scorer::{score_sample, ReconstructionEstimator, ScoreReport};

/// Rows per forward pass when evaluating large view sets.
const EVAL_CHUNK: usize = 1024;

/// Floating-point type the network computes in.
pub trait Scalar: NdFloat + FromPrimitive + Default {
    const PRECISION: Precision;

    /// `self` if `|self| >= floor`, else zero; branch-free so loops vectorize.
    fn keep_above(self, floor: Self) -> Self;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::F32;

    #[inline(always)]
    fn keep_above(self, floor: f32) -> f32 {
        self * f32::from(u8::from(self.abs() >= floor))
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::F64;

    #[inline(always)]
    fn keep_above(self, floor: f64) -> f64 {
        self * f64::from(u8::from(self.abs() >= floor))
    }
}

#[inline]
pub(crate) fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("f64 converts to any float type")
}

#[inline]
pub(crate) fn wide<T: Scalar>(v: T) -> f64 {
    v.to_f64().expect("float converts to f64")
}

/// Smallest gradient magnitude kept in the backward pass. Products of two
/// values above it cannot be subnormal, where arithmetic is very slow; the
/// dropped values are far below anything the optimizer's `eps` lets through.
#[inline]
pub(crate) fn grad_floor<T: Scalar>() -> T {
    T::min_positive_value().sqrt()
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Dot product with independent lane accumulators so it vectorises.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug)]
struct Layout {
    blocks: Vec<ParamBlock>,
    emb: Vec<usize>,
    w1: Vec<usize>,
    b1: usize,
    trunk: Vec<(usize, usize)>,
    head_w: usize,
    head_b: usize,
    n_params: usize,
}

impl Layout {
    fn build(cfg: &ModelConfig, cards: &[usize], n_levels: usize) -> Self {
        let (e, h) = (cfg.embed_dim, cfg.hidden_dim);
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            blocks.push(ParamBlock {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
            blocks.len() - 1
        };
        let mut emb: Vec<usize> = cards
            .iter()
            .enumerate()
            .map(|(j, &c)| push(format!("emb.{j}"), c + 1, e))
            .collect();
        if cfg.level_conditioning == LevelConditioning::Embedding {
            emb.push(push("emb.level".into(), n_levels, e));
        }
        let w1 = (0..emb.len()).map(|t| push(format!("w1.{t}"), h, e)).collect();
        let b1 = push("b1".into(), 1, h);
        let trunk = (1..cfg.n_layers)
            .map(|l| (push(format!("w{}", l + 1), h, h), push(format!("b{}", l + 1), 1, h)))
            .collect();
        let total: usize = cards.iter().sum();
        let head_w = push("head.w".into(), total, h);
        let head_b = push("head.b".into(), 1, total);
        Layout {
            blocks,
            emb,
            w1,
            b1,
            trunk,
            head_w,
            head_b,
            n_params: offset,
        }
    }
}

/// Identifies one dropout draw: masks depend only on `(seed, epoch, step, layer)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DropoutKey {
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
}

/// A training example: the clean row and one masked view of it.
#[derive(Clone, Debug)]
pub struct TrainItem<'a> {
    pub x: &'a [Code],
    pub view: MaskedView,
}

struct Cache<T> {
    idx: Vec<usize>,
    zs: Vec<Array2<T>>,
    hs: Vec<Array2<T>>,
    masks: Vec<Option<Array2<T>>>,
    logits: Array2<T>,
}

/// Masked reconstruction network with all parameters in one flat vector.
///
/// The first affine layer over the concatenated embeddings is evaluated as a
/// sum of per-input lookup tables `emb_t * w1_t^T`, which are rebuilt whenever
/// the parameters change. Losses and output probabilities are always formed in
/// f64 from the logits.
#[derive(Clone, Debug)]
pub struct ReconNet<T: Scalar = f64> {
    config: ModelConfig,
    cards: Vec<usize>,
    n_levels: usize,
    layout: Layout,
    head_offsets: Vec<usize>,
    params: Vec<T>,
    tables: Vec<Vec<T>>,
}

impl<T: Scalar> ReconNet<T> {
    pub fn new(config: ModelConfig, cardinalities: &[u32], n_levels: usize) -> Result<Self> {
        let mut net = Self::empty(config, cardinalities, n_levels)?;
        let gain = match net.config.activation {
            Activation::Relu => 2.0,
            Activation::Identity => 1.0,
        };
        let fan_in = (net.layout.emb.len() * net.config.embed_dim) as f64;
        let hidden = net.config.hidden_dim as f64;
        let mut scales = vec![0.0; net.layout.blocks.len()];
        for &b in &net.layout.emb {
            scales[b] = 1.0;
        }
        for &b in &net.layout.w1 {
            scales[b] = (gain / fan_in).sqrt();
        }
        for &(w, _) in &net.layout.trunk {
            scales[w] = (gain / hidden).sqrt();
        }
        // Biases and the output heads start at zero: an untrained net predicts uniformly.
        for (id, blk) in net.layout.blocks.iter().enumerate() {
            if scales[id] == 0.0 {
                continue;
            }
            let mut rng = rng::stream(net.config.seed, Domain::Init, &[id as u64]);
            for p in &mut net.params[blk.range()] {
                *p = cast(scales[id] * rng.sample::<f64, _>(StandardNormal));
            }
        }
        net.refresh_tables();
        Ok(net)
    }

    /// Rebuilds a network from an explicit parameter vector.
    pub fn from_params(config: ModelConfig, cardinalities: &[u32], n_levels: usize, params: Vec<T>) -> Result<Self> {
        let mut net = Self::empty(config, cardinalities, n_levels)?;
        net.set_params(params)?;
        Ok(net)
    }

    fn empty(mut config: ModelConfig, cardinalities: &[u32], n_levels: usize) -> Result<Self> {
        config.validate()?;
        config.precision = T::PRECISION;
        if cardinalities.is_empty() {
            return Err(Error::Empty("no features".into()));
        }
        if cardinalities.contains(&0) {
            return Err(Error::config("feature cardinalities must be positive"));
        }
        if config.level_conditioning == LevelConditioning::Embedding && n_levels == 0 {
            return Err(Error::config("level conditioning needs at least one level"));
        }
        let cards: Vec<usize> = cardinalities.iter().map(|&c| c as usize).collect();
        let layout = Layout::build(&config, &cards, n_levels);
        let mut head_offsets = vec![0];
        for &c in &cards {
            head_offsets.push(head_offsets.last().unwrap() + c);
        }
        Ok(ReconNet {
            params: vec![T::zero(); layout.n_params],
            tables: Vec::new(),
            config,
            cards,
            n_levels,
            layout,
            head_offsets,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cardinalities(&self) -> Vec<u32> {
        self.cards.iter().map(|&c| c as u32).collect()
    }

    pub fn n_features(&self) -> usize {
        self.cards.len()
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_params(&self) -> usize {
        self.layout.n_params
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.layout.blocks
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.layout.n_params {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                self.layout.n_params,
                params.len()
            )));
        }
        self.params = params;
        self.refresh_tables();
        Ok(())
    }

    /// Mutates parameters in place, then rebuilds the lookup tables.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [T])) {
        f(&mut self.params);
        self.refresh_tables();
    }

    /// Checks that `specs` describe the features this net was built for.
    pub fn validate_cardinalities(&self, specs: &[FeatureSpec]) -> Result<()> {
        if specs.len() != self.cards.len() {
            return Err(Error::config(format!(
                "model has {} features, schema has {}",
                self.cards.len(),
                specs.len()
            )));
        }
        for (spec, &c) in specs.iter().zip(&self.cards) {
            if spec.cardinality as usize != c {
                return Err(Error::feature(
                    &spec.name,
                    format!("model cardinality {c} != schema cardinality {}", spec.cardinality),
                ));
            }
        }
        Ok(())
    }

    /// Checks that a probe grid matches the levels the net is conditioned on.
    pub fn check_probe(&self, probe: &ProbeConfig) -> Result<()> {
        if self.config.level_conditioning == LevelConditioning::Embedding && probe.n_levels() != self.n_levels {
            return Err(Error::config(format!(
                "probe grid has {} levels, model was built for {}",
                probe.n_levels(),
                self.n_levels
            )));
        }
        Ok(())
    }

    fn slice(&self, id: usize) -> &[T] {
        &self.params[self.layout.blocks[id].range()]
    }

    fn matrix(&self, id: usize) -> ArrayView2<'_, T> {
        let b = &self.layout.blocks[id];
        ArrayView2::from_shape((b.rows, b.cols), self.slice(id)).unwrap()
    }

    fn vector(&self, id: usize) -> ArrayView1<'_, T> {
        ArrayView1::from(self.slice(id))
    }

    fn refresh_tables(&mut self) {
        let (e, h) = (self.config.embed_dim, self.config.hidden_dim);
        let tables = self
            .layout
            .emb
            .iter()
            .zip(&self.layout.w1)
            .map(|(&eb, &wb)| {
                let (emb, w1) = (self.slice(eb), self.slice(wb));
                let rows = self.layout.blocks[eb].rows;
                let mut t = vec![T::zero(); rows * h];
                // One pass over w1; the few embedding rows stay in cache.
                for (k, wk) in w1.chunks_exact(e).enumerate() {
                    for (r, er) in emb.chunks_exact(e).enumerate() {
                        t[r * h + k] = dot(er, wk);
                    }
                }
                t
            })
            .collect();
        self.tables = tables;
    }

    /// Table row index of every (item, input) pair.
    fn input_indices(&self, views: &[&MaskedView]) -> Result<Vec<usize>> {
        let d = self.cards.len();
        let ni = self.layout.emb.len();
        let mut idx = Vec::with_capacity(views.len() * ni);
        for v in views {
            if v.codes.len() != d {
                return Err(Error::config(format!("view has {} coordinates, model expects {d}", v.codes.len())));
            }
            for (&c, &card) in v.codes.iter().zip(&self.cards) {
                if c == MASK {
                    idx.push(card);
                } else if (c as usize) < card {
                    idx.push(c as usize);
                } else {
                    return Err(Error::OutOfRange {
                        index: c as usize,
                        len: card,
                    });
                }
            }
            if ni > d {
                if v.level_index >= self.n_levels {
                    return Err(Error::OutOfRange {
                        index: v.level_index,
                        len: self.n_levels,
                    });
                }
                idx.push(v.level_index);
            }
        }
        Ok(idx)
    }

    fn activate(&self, z: &Array2<T>) -> Array2<T> {
        match self.config.activation {
            Activation::Relu => z.mapv(|v| v.max(T::zero())),
            Activation::Identity => z.clone(),
        }
    }

    fn dropout_mask(&self, key: DropoutKey, layer: usize, shape: (usize, usize)) -> Option<Array2<T>> {
        let p = self.config.dropout;
        if p == 0.0 {
            return None;
        }
        let keep = cast(1.0 / (1.0 - p));
        // Dropped with probability p, up to 2^-32 resolution.
        let cut = (p * 4_294_967_296.0) as u32;
        let mut rng = rng::stream(key.seed, Domain::Dropout, &[key.epoch, key.step, layer as u64]);
        Some(Array2::from_shape_simple_fn(shape, || {
            if rng.next_u32() < cut {
                T::zero()
            } else {
                keep
            }
        }))
    }

    fn forward(&self, views: &[&MaskedView], dropout: Option<DropoutKey>) -> Result<Cache<T>> {
        let idx = self.input_indices(views)?;
        let (b, h) = (views.len(), self.config.hidden_dim);
        let ni = self.layout.emb.len();
        let mut z = Array2::zeros((b, h));
        let b1 = self.slice(self.layout.b1);
        for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
            let row = row.as_slice_mut().unwrap();
            row.copy_from_slice(b1);
            for (t, table) in self.tables.iter().enumerate() {
                let r = idx[i * ni + t];
                for (o, &v) in row.iter_mut().zip(&table[r * h..(r + 1) * h]) {
                    *o += v;
                }
            }
        }
        let mut zs = Vec::with_capacity(self.config.n_layers);
        let mut hs: Vec<Array2<T>> = Vec::with_capacity(self.config.n_layers);
        let mut masks = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            if l > 0 {
                let (w, bias) = self.layout.trunk[l - 1];
                z = hs[l - 1].dot(&self.matrix(w).t());
                z += &self.vector(bias);
            }
            let mut a = self.activate(&z);
            let mask = dropout.and_then(|key| self.dropout_mask(key, l, (b, h)));
            if let Some(m) = &mask {
                a *= m;
            }
            zs.push(std::mem::replace(&mut z, Array2::zeros((0, 0))));
            hs.push(a);
            masks.push(mask);
        }
        let mut logits = hs.last().unwrap().dot(&self.matrix(self.layout.head_w).t());
        logits += &self.vector(self.layout.head_b);
        Ok(Cache {
            idx,
            zs,
            hs,
            masks,
            logits,
        })
    }

    fn head(&self, j: usize) -> std::ops::Range<usize> {
        self.head_offsets[j]..self.head_offsets[j + 1]
    }

    /// Per-item view-normalised losses and, optionally, d(mean loss)/d(logits).
    fn item_losses(&self, items: &[TrainItem<'_>], logits: &Array2<T>, want_grad: bool) -> (Vec<f64>, Option<Array2<T>>) {
        let n = items.len() as f64;
        let mut dlogits = want_grad.then(|| Array2::zeros(logits.dim()));
        let mut losses = Vec::with_capacity(items.len());
        let mut seg = Vec::new();
        for (b, item) in items.iter().enumerate() {
            let row = logits.row(b);
            let w = 1.0 / item.view.masked.len().max(1) as f64;
            let mut loss = 0.0;
            for &j in &item.view.masked {
                seg.clear();
                seg.extend(row.slice(ndarray::s![self.head(j)]).iter().map(|&v| wide(v)));
                let (max, lse) = log_sum_exp(&seg);
                let target = item.x[j] as usize;
                loss -= w * (seg[target] - max - lse);
                if let Some(d) = dlogits.as_mut() {
                    let mut drow = d.row_mut(b);
                    let off = self.head_offsets[j];
                    for (c, &v) in seg.iter().enumerate() {
                        let p = (v - max - lse).exp();
                        let onehot = if c == target { 1.0 } else { 0.0 };
                        drow[off + c] = cast::<T>(w * (p - onehot) / n).keep_above(grad_floor());
                    }
                }
            }
            losses.push(loss);
        }
        (losses, dlogits)
    }

    fn check_items(&self, items: &[TrainItem<'_>]) -> Result<()> {
        if items.is_empty() {
            return Err(Error::Empty("no training items".into()));
        }
        for item in items {
            if item.x.len() != self.cards.len() {
                return Err(Error::config("row width does not match the model"));
            }
            for (&c, &card) in item.x.iter().zip(&self.cards) {
                if c as usize >= card {
                    return Err(Error::OutOfRange {
                        index: c as usize,
                        len: card,
                    });
                }
            }
        }
        Ok(())
    }

    /// Mean view-normalised masked loss over `items`.
    pub fn loss(&self, items: &[TrainItem<'_>], dropout: Option<DropoutKey>) -> Result<f64> {
        self.check_items(items)?;
        let views: Vec<&MaskedView> = items.iter().map(|it| &it.view).collect();
        let cache = self.forward(&views, dropout)?;
        let (losses, _) = self.item_losses(items, &cache.logits, false);
        Ok(losses.iter().sum::<f64>() / items.len() as f64)
    }

    /// Mean loss over `items` and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, items: &[TrainItem<'_>], dropout: Option<DropoutKey>) -> Result<(f64, Vec<T>)> {
        self.check_items(items)?;
        let views: Vec<&MaskedView> = items.iter().map(|it| &it.view).collect();
        let cache = self.forward(&views, dropout)?;
        let (losses, dlogits) = self.item_losses(items, &cache.logits, true);
        let loss = losses.iter().sum::<f64>() / items.len() as f64;
        let grads = self.backward(&cache, &dlogits.unwrap());
        Ok((loss, grads))
    }

    fn backward(&self, cache: &Cache<T>, dlogits: &Array2<T>) -> Vec<T> {
        let lay = &self.layout;
        let mut grads = vec![T::zero(); lay.n_params];
        let n_layers = self.config.n_layers;
        let last = &cache.hs[n_layers - 1];

        general_mat_mul(T::one(), &dlogits.t(), last, T::zero(), &mut grad_matrix(&mut grads, &lay.blocks[lay.head_w]));
        add_column_sums(&mut grads, &lay.blocks[lay.head_b], dlogits);
        let mut dh = dlogits.dot(&self.matrix(lay.head_w));

        let floor = grad_floor::<T>();
        for l in (0..n_layers).rev() {
            if let Some(m) = &cache.masks[l] {
                dh *= m;
            }
            dh.mapv_inplace(|v| v.keep_above(floor));
            if self.config.activation == Activation::Relu {
                ndarray::Zip::from(&mut dh).and(&cache.zs[l]).for_each(|g, &z| {
                    if z <= T::zero() {
                        *g = T::zero();
                    }
                });
            }
            let dz = dh;
            if l == 0 {
                add_column_sums(&mut grads, &lay.blocks[lay.b1], &dz);
                self.backward_inputs(cache, &dz, &mut grads);
                break;
            }
            let (w, b) = lay.trunk[l - 1];
            general_mat_mul(T::one(), &dz.t(), &cache.hs[l - 1], T::zero(), &mut grad_matrix(&mut grads, &lay.blocks[w]));
            add_column_sums(&mut grads, &lay.blocks[b], &dz);
            dh = dz.dot(&self.matrix(w));
        }
        grads
    }

    /// Gradients of the embedding tables and first-layer blocks. Each input
    /// selects one table row per item, so the upstream gradient is first
    /// accumulated per row and then pushed through both factors.
    fn backward_inputs(&self, cache: &Cache<T>, dz: &Array2<T>, grads: &mut [T]) {
        let lay = &self.layout;
        let ni = lay.emb.len();
        let (e, h) = (self.config.embed_dim, self.config.hidden_dim);
        for t in 0..ni {
            let emb_blk = &lay.blocks[lay.emb[t]];
            let rows = emb_blk.rows;
            let mut g = vec![T::zero(); rows * h];
            let mut used = vec![false; rows];
            for (b, dzr) in dz.axis_iter(Axis(0)).enumerate() {
                let r = cache.idx[b * ni + t];
                used[r] = true;
                axpy(&mut g[r * h..(r + 1) * h], T::one(), dzr.as_slice().unwrap());
            }
            let used: Vec<usize> = (0..rows).filter(|&r| used[r]).collect();
            let (emb, w1) = (self.slice(lay.emb[t]), self.slice(lay.w1[t]));
            let mut demb = vec![T::zero(); rows * e];
            let dw1 = &mut grads[lay.blocks[lay.w1[t]].range()];
            // Single pass over w1 for both factors.
            for (k, (wk, out)) in w1.chunks_exact(e).zip(dw1.chunks_exact_mut(e)).enumerate() {
                for &r in &used {
                    let gk = g[r * h + k];
                    axpy(out, gk, &emb[r * e..(r + 1) * e]);
                    axpy(&mut demb[r * e..(r + 1) * e], gk, wk);
                }
            }
            grads[emb_blk.range()].copy_from_slice(&demb);
        }
    }

    /// Softmax distributions for every masked coordinate of every view.
    pub fn predict_batch(&self, views: &[&MaskedView]) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut out = Vec::with_capacity(views.len());
        for chunk in views.chunks(EVAL_CHUNK) {
            let cache = self.forward(chunk, None)?;
            for (b, v) in chunk.iter().enumerate() {
                let row = cache.logits.row(b);
                out.push(
                    v.masked
                        .iter()
                        .map(|&j| {
                            let seg: Vec<f64> = row.slice(ndarray::s![self.head(j)]).iter().map(|&v| wide(v)).collect();
                            let max = seg.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                            let e: Vec<f64> = seg.iter().map(|&z| (z - max).exp()).collect();
                            let s: f64 = e.iter().sum();
                            e.into_iter().map(|v| v / s).collect()
                        })
                        .collect(),
                );
            }
        }
        Ok(out)
    }
}

fn log_sum_exp(seg: &[f64]) -> (f64, f64) {
    let max = seg.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s: f64 = seg.iter().map(|&z| (z - max).exp()).sum();
    (max, s.ln())
}

fn grad_matrix<'a, T>(grads: &'a mut [T], blk: &ParamBlock) -> ArrayViewMut2<'a, T> {
    ArrayViewMut2::from_shape((blk.rows, blk.cols), &mut grads[blk.range()]).unwrap()
}

fn add_column_sums<T: Scalar>(grads: &mut [T], blk: &ParamBlock, m: &Array2<T>) {
    for (g, s) in grads[blk.range()].iter_mut().zip(m.sum_axis(Axis(0))) {
        *g += s;
    }
}

impl<T: Scalar> ReconstructionEstimator for ReconNet<T> {
    fn predict(&self, view: &MaskedView, j: usize) -> Result<Vec<f64>> {
        let pos = view
            .masked
            .binary_search(&j)
            .map_err(|_| Error::config(format!("coordinate {j} is not masked in this view")))?;
        Ok(self.predict_batch(&[view])?.swap_remove(0).swap_remove(pos))
    }

    fn predict_masked(&self, view: &MaskedView) -> Result<Vec<Vec<f64>>> {
        Ok(self.predict_batch(&[view])?.swap_remove(0))
    }

    fn predict_views(&self, views: &[&MaskedView]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.predict_batch(views)
    }
}

/// Mean masked loss of `items` with dropout disabled.
pub fn masked_loss<T: Scalar>(net: &ReconNet<T>, items: &[TrainItem<'_>]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in items.chunks(EVAL_CHUNK) {
        total += net.loss(chunk, None)? * chunk.len() as f64;
    }
    Ok(total / items.len().max(1) as f64)
}

/// Scores one sample with a trained network over the full probe grid.
pub fn pm_score_sample<T: Scalar>(x: &[Code], sample_id: u64, cfg: &ProbeConfig, net: &ReconNet<T>) -> Result<ScoreReport> {
    net.check_probe(cfg)?;
    score_sample(x, sample_id, cfg, net)
}
