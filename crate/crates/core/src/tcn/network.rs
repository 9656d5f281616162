//! Entity embeddings, a stack of causal dilated convolutions over the lag
//! sequence, and a dense ReLU stack with a sigmoid head.
//!
//! The temporal input at lag position `t` is the temporal continuous row
//! concatenated with the embeddings of that row's temporal categorical
//! indices. After the convolution stack the activations of the last position
//! are concatenated with the static embeddings and the static continuous
//! values and fed to the dense layers.
//!
//! All parameters live in one flat vector; [`Layout`] maps every tensor to
//! its slice. Gradients come back in the same layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TcnError;
use crate::featurize::{FeatureManifest, SampleRow};

pub const BCE_EPSILON: f64 = 1e-12;
const EMBEDDING_INIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerConfig {
    pub kernel_size: usize,
    pub dilation: usize,
    pub channels: usize,
}

/// Size-independent network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub conv: Vec<ConvLayerConfig>,
    pub fc: Vec<usize>,
    /// Fixed embedding width; `None` uses `min(16, ceil(vocab / 2))`.
    pub embedding_dim: Option<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            conv: [1, 2, 4]
                .into_iter()
                .map(|dilation| ConvLayerConfig { kernel_size: 2, dilation, channels: 16 })
                .collect(),
            fc: vec![64, 32, 16],
            embedding_dim: None,
        }
    }
}

pub fn default_embedding_dim(vocab: usize) -> usize {
    vocab.div_ceil(2).clamp(1, 16)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub static_vocab: Vec<usize>,
    pub static_embedding: Vec<usize>,
    pub temporal_vocab: Vec<usize>,
    pub temporal_embedding: Vec<usize>,
    pub static_continuous: usize,
    pub temporal_continuous: usize,
    pub n_lags: usize,
    pub conv: Vec<ConvLayerConfig>,
    /// Hidden dense widths; the sigmoid head of width 1 follows them.
    pub fc: Vec<usize>,
}

impl NetworkConfig {
    pub fn from_manifest(manifest: &FeatureManifest, arch: &Architecture) -> Self {
        let dim = |v: usize| arch.embedding_dim.unwrap_or_else(|| default_embedding_dim(v));
        Self {
            static_vocab: manifest.static_categorical.iter().map(|(_, v)| *v).collect(),
            static_embedding: manifest.static_categorical.iter().map(|(_, v)| dim(*v)).collect(),
            temporal_vocab: manifest.temporal_categorical.iter().map(|(_, v)| *v).collect(),
            temporal_embedding: manifest.temporal_categorical.iter().map(|(_, v)| dim(*v)).collect(),
            static_continuous: manifest.static_continuous.len(),
            temporal_continuous: manifest.temporal_continuous.len(),
            n_lags: manifest.n_lags,
            conv: arch.conv.clone(),
            fc: arch.fc.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), TcnError> {
        let fail = |m: String| Err(TcnError::Config(m));
        if self.static_vocab.len() != self.static_embedding.len()
            || self.temporal_vocab.len() != self.temporal_embedding.len()
        {
            return fail("embedding dimension count differs from field count".into());
        }
        if self.static_vocab.iter().chain(&self.temporal_vocab).any(|&v| v == 0) {
            return fail("vocabulary sizes must be positive".into());
        }
        if self.n_lags == 0 {
            return fail("n_lags must be at least 1".into());
        }
        if self.conv.is_empty() {
            return fail("at least one convolution layer is required".into());
        }
        for (i, c) in self.conv.iter().enumerate() {
            if c.kernel_size == 0 || c.dilation == 0 || c.channels == 0 {
                return fail(format!("conv layer {i} needs positive kernel size, dilation and channels"));
            }
        }
        if self.fc.contains(&0) {
            return fail("dense widths must be positive".into());
        }
        if self.temporal_input_width() == 0 {
            return fail("temporal input has no channels".into());
        }
        Ok(())
    }

    pub fn temporal_input_width(&self) -> usize {
        self.temporal_continuous + self.temporal_embedding.iter().sum::<usize>()
    }

    pub fn dense_input_width(&self) -> usize {
        self.conv.last().map(|c| c.channels).unwrap_or(0)
            + self.static_embedding.iter().sum::<usize>()
            + self.static_continuous
    }

    pub fn layout(&self) -> Layout {
        let mut next = 0;
        let mut take = |n: usize| {
            let at = next;
            next += n;
            at
        };
        let static_emb = self.static_vocab.iter().zip(&self.static_embedding).map(|(v, d)| take(v * d)).collect();
        let temporal_emb =
            self.temporal_vocab.iter().zip(&self.temporal_embedding).map(|(v, d)| take(v * d)).collect();
        let mut conv = Vec::new();
        let mut cin = self.temporal_input_width();
        for c in &self.conv {
            let w = take(c.channels * cin * c.kernel_size);
            let b = take(c.channels);
            conv.push(ConvBlock { weight: w, bias: b, cin, cout: c.channels, kernel: c.kernel_size, dilation: c.dilation });
            cin = c.channels;
        }
        let mut dense = Vec::new();
        let mut din = self.dense_input_width();
        for &w in self.fc.iter().chain(std::iter::once(&1)) {
            let weight = take(w * din);
            let bias = take(w);
            dense.push(DenseBlock { weight, bias, din, dout: w });
            din = w;
        }
        Layout { static_emb, temporal_emb, conv, dense, total: next }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvBlock {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl ConvBlock {
    #[inline]
    fn w(&self, o: usize, i: usize, tap: usize) -> usize {
        self.weight + (o * self.cin + i) * self.kernel + tap
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DenseBlock {
    pub weight: usize,
    pub bias: usize,
    pub din: usize,
    pub dout: usize,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Layout {
    pub static_emb: Vec<usize>,
    pub temporal_emb: Vec<usize>,
    pub conv: Vec<ConvBlock>,
    pub dense: Vec<DenseBlock>,
    pub total: usize,
}

/// Parameter class of a flat index, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamClass {
    StaticEmbedding,
    TemporalEmbedding,
    ConvWeight,
    ConvBias,
    DenseWeight,
    DenseBias,
}

impl Layout {
    pub fn class_of(&self, cfg: &NetworkConfig, index: usize) -> ParamClass {
        for c in &self.conv {
            if (c.weight..c.bias).contains(&index) {
                return ParamClass::ConvWeight;
            }
            if (c.bias..c.bias + c.cout).contains(&index) {
                return ParamClass::ConvBias;
            }
        }
        for d in &self.dense {
            if (d.weight..d.bias).contains(&index) {
                return ParamClass::DenseWeight;
            }
            if (d.bias..d.bias + d.dout).contains(&index) {
                return ParamClass::DenseBias;
            }
        }
        let static_end = self
            .static_emb
            .last()
            .zip(cfg.static_vocab.last().zip(cfg.static_embedding.last()))
            .map(|(o, (v, d))| o + v * d)
            .unwrap_or(0);
        if index < static_end {
            ParamClass::StaticEmbedding
        } else {
            ParamClass::TemporalEmbedding
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    pub values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(config: NetworkConfig) -> Result<Self, TcnError> {
        config.validate()?;
        let n = config.layout().total;
        Ok(Self { config, values: vec![0.0; n] })
    }

    /// Uniform Glorot init for conv and dense weights, +-0.05 for
    /// embeddings, zero biases.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self, TcnError> {
        let mut p = Self::zeros(config)?;
        let layout = p.config.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb_len = layout.conv.first().map(|c| c.weight).unwrap_or(0);
        for v in &mut p.values[..emb_len] {
            *v = rng.gen_range(-EMBEDDING_INIT..=EMBEDDING_INIT);
        }
        for c in &layout.conv {
            let bound = (6.0 / ((c.cin + c.cout) * c.kernel) as f64).sqrt();
            for v in &mut p.values[c.weight..c.bias] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        for d in &layout.dense {
            let bound = (6.0 / (d.din + d.dout) as f64).sqrt();
            for v in &mut p.values[d.weight..d.bias] {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Temporal input, time-major `[t * width + channel]`.
    pub input: Vec<f64>,
    pub conv_pre: Vec<Vec<f64>>,
    pub conv_post: Vec<Vec<f64>>,
    pub dense_input: Vec<f64>,
    pub dense_pre: Vec<Vec<f64>>,
    pub dense_post: Vec<Vec<f64>>,
    pub probability: f64,
}

impl Trace {
    pub fn logit(&self) -> f64 {
        self.dense_pre.last().map(|z| z[0]).unwrap_or(0.0)
    }
}

pub fn check_sample(sample: &SampleRow, cfg: &NetworkConfig) -> Result<(), TcnError> {
    let fail = |m: String| Err(TcnError::Shape(m));
    if sample.static_categorical.len() != cfg.static_vocab.len() {
        return fail(format!(
            "{} static categorical values, expected {}",
            sample.static_categorical.len(),
            cfg.static_vocab.len()
        ));
    }
    if let Some((i, _)) = sample.static_categorical.iter().zip(&cfg.static_vocab).enumerate().find(|(_, (x, v))| x >= v) {
        return fail(format!("static categorical field {i} index out of range"));
    }
    if sample.temporal_categorical.len() != cfg.n_lags || sample.temporal_continuous.len() != cfg.n_lags {
        return fail(format!("temporal groups must have {} rows", cfg.n_lags));
    }
    for row in &sample.temporal_categorical {
        if row.len() != cfg.temporal_vocab.len() || row.iter().zip(&cfg.temporal_vocab).any(|(x, v)| x >= v) {
            return fail("temporal categorical row does not match vocabularies".into());
        }
    }
    if sample.temporal_continuous.iter().any(|r| r.len() != cfg.temporal_continuous) {
        return fail(format!("temporal continuous rows must have {} values", cfg.temporal_continuous));
    }
    if sample.static_continuous.len() != cfg.static_continuous {
        return fail(format!(
            "{} static continuous values, expected {}",
            sample.static_continuous.len(),
            cfg.static_continuous
        ));
    }
    Ok(())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Forward pass for one sample, keeping every intermediate value.
pub fn forward_trace(sample: &SampleRow, params: &NetworkParams, layout: &Layout) -> Trace {
    let cfg = &params.config;
    let w = &params.values;
    let lags = cfg.n_lags;

    let width = cfg.temporal_input_width();
    let mut input = Vec::with_capacity(lags * width);
    for t in 0..lags {
        input.extend_from_slice(&sample.temporal_continuous[t]);
        for (f, &ix) in sample.temporal_categorical[t].iter().enumerate() {
            let d = cfg.temporal_embedding[f];
            let at = layout.temporal_emb[f] + ix * d;
            input.extend_from_slice(&w[at..at + d]);
        }
    }

    let mut conv_pre = Vec::with_capacity(layout.conv.len());
    let mut conv_post: Vec<Vec<f64>> = Vec::with_capacity(layout.conv.len());
    for c in &layout.conv {
        let x = conv_post.last().unwrap_or(&input);
        let mut z = vec![0.0; lags * c.cout];
        for t in 0..lags {
            for o in 0..c.cout {
                let mut acc = w[c.bias + o];
                for tap in 0..c.kernel {
                    let lag = tap * c.dilation;
                    if lag > t {
                        break;
                    }
                    let row = &x[(t - lag) * c.cin..(t - lag + 1) * c.cin];
                    for (i, xv) in row.iter().enumerate() {
                        acc += w[c.w(o, i, tap)] * xv;
                    }
                }
                z[t * c.cout + o] = acc;
            }
        }
        let a = z.iter().map(|v| v.max(0.0)).collect();
        conv_pre.push(z);
        conv_post.push(a);
    }

    let last = conv_post.last().expect("at least one conv layer");
    let cout = layout.conv.last().map(|c| c.cout).unwrap_or(0);
    let mut dense_input = last[(lags - 1) * cout..lags * cout].to_vec();
    for (f, &ix) in sample.static_categorical.iter().enumerate() {
        let d = cfg.static_embedding[f];
        let at = layout.static_emb[f] + ix * d;
        dense_input.extend_from_slice(&w[at..at + d]);
    }
    dense_input.extend_from_slice(&sample.static_continuous);

    let mut dense_pre = Vec::with_capacity(layout.dense.len());
    let mut dense_post: Vec<Vec<f64>> = Vec::with_capacity(layout.dense.len());
    let n_dense = layout.dense.len();
    for (l, d) in layout.dense.iter().enumerate() {
        let x = dense_post.last().unwrap_or(&dense_input);
        let z: Vec<f64> = (0..d.dout)
            .map(|o| {
                let row = &w[d.weight + o * d.din..d.weight + (o + 1) * d.din];
                w[d.bias + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let a = if l + 1 == n_dense { z.iter().map(|&v| sigmoid(v)).collect() } else { z.iter().map(|v| v.max(0.0)).collect() };
        dense_pre.push(z);
        dense_post.push(a);
    }
    let probability = dense_post.last().map(|a| a[0]).unwrap_or(0.5);
    Trace { input, conv_pre, conv_post, dense_input, dense_pre, dense_post, probability }
}

pub fn forward(batch: &[SampleRow], params: &NetworkParams) -> Result<Vec<f64>, TcnError> {
    params.config.validate()?;
    let layout = params.config.layout();
    if params.values.len() != layout.total {
        return Err(TcnError::Config(format!("{} parameters, layout needs {}", params.values.len(), layout.total)));
    }
    batch
        .iter()
        .map(|s| {
            check_sample(s, &params.config)?;
            Ok(forward_trace(s, params, &layout).probability)
        })
        .collect()
}

/// Activations after each convolution layer, time-major.
pub fn conv_activations(sample: &SampleRow, params: &NetworkParams) -> Result<Vec<Vec<f64>>, TcnError> {
    check_sample(sample, &params.config)?;
    Ok(forward_trace(sample, params, &params.config.layout()).conv_post)
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(p: &[f64], y: &[u8]) -> Result<f64, TcnError> {
    if p.len() != y.len() {
        return Err(TcnError::Shape(format!("{} probabilities for {} labels", p.len(), y.len())));
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / p.len() as f64)
}

/// Mean BCE over the batch and its exact gradient in parameter layout.
pub fn backward(batch: &[SampleRow], params: &NetworkParams) -> Result<(f64, Vec<f64>), TcnError> {
    let refs: Vec<&SampleRow> = batch.iter().collect();
    backward_refs(&refs, params)
}

pub(crate) fn backward_refs(batch: &[&SampleRow], params: &NetworkParams) -> Result<(f64, Vec<f64>), TcnError> {
    params.config.validate()?;
    let cfg = &params.config;
    let layout = cfg.layout();
    let w = &params.values;
    let mut grad = vec![0.0; layout.total];
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / batch.len() as f64;
    let lags = cfg.n_lags;
    let mut probs = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());

    for &sample in batch {
        check_sample(sample, cfg)?;
        let tr = forward_trace(sample, params, &layout);
        probs.push(tr.probability);
        labels.push(sample.label);

        // d(loss)/d(logit) of sigmoid + BCE
        let mut upstream = vec![(tr.probability - f64::from(sample.label)) * scale];
        for l in (0..layout.dense.len()).rev() {
            let d = layout.dense[l];
            let x = if l == 0 { &tr.dense_input } else { &tr.dense_post[l - 1] };
            let dz: Vec<f64> = if l + 1 == layout.dense.len() {
                upstream.clone()
            } else {
                upstream.iter().zip(&tr.dense_pre[l]).map(|(g, &z)| if z > 0.0 { *g } else { 0.0 }).collect()
            };
            let mut dx = vec![0.0; d.din];
            for (o, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[d.bias + o] += g;
                let row = d.weight + o * d.din;
                for i in 0..d.din {
                    grad[row + i] += g * x[i];
                    dx[i] += w[row + i] * g;
                }
            }
            upstream = dx;
        }

        // split the dense input gradient
        let last = *layout.conv.last().expect("conv layer");
        let mut cursor = last.cout;
        for (f, &ix) in sample.static_categorical.iter().enumerate() {
            let dim = cfg.static_embedding[f];
            let at = layout.static_emb[f] + ix * dim;
            for k in 0..dim {
                grad[at + k] += upstream[cursor + k];
            }
            cursor += dim;
        }

        let mut d_post = vec![0.0; lags * last.cout];
        d_post[(lags - 1) * last.cout..].copy_from_slice(&upstream[..last.cout]);
        for l in (0..layout.conv.len()).rev() {
            let c = layout.conv[l];
            let x = if l == 0 { &tr.input } else { &tr.conv_post[l - 1] };
            let dz: Vec<f64> =
                d_post.iter().zip(&tr.conv_pre[l]).map(|(g, &z)| if z > 0.0 { *g } else { 0.0 }).collect();
            let mut dx = vec![0.0; lags * c.cin];
            for t in 0..lags {
                for o in 0..c.cout {
                    let g = dz[t * c.cout + o];
                    if g == 0.0 {
                        continue;
                    }
                    grad[c.bias + o] += g;
                    for tap in 0..c.kernel {
                        let lag = tap * c.dilation;
                        if lag > t {
                            break;
                        }
                        let src = (t - lag) * c.cin;
                        for i in 0..c.cin {
                            let wi = c.w(o, i, tap);
                            grad[wi] += g * x[src + i];
                            dx[src + i] += w[wi] * g;
                        }
                    }
                }
            }
            d_post = dx;
        }

        let width = cfg.temporal_input_width();
        for t in 0..lags {
            let mut cursor = t * width + cfg.temporal_continuous;
            for (f, &ix) in sample.temporal_categorical[t].iter().enumerate() {
                let dim = cfg.temporal_embedding[f];
                let at = layout.temporal_emb[f] + ix * dim;
                for k in 0..dim {
                    grad[at + k] += d_post[cursor + k];
                }
                cursor += dim;
            }
        }
    }
    Ok((bce_loss(&probs, &labels)?, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ConsumerItemKey;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            static_vocab: vec![3, 4],
            static_embedding: vec![2, 2],
            temporal_vocab: vec![5],
            temporal_embedding: vec![2],
            static_continuous: 2,
            temporal_continuous: 3,
            n_lags: 4,
            conv: [1, 2, 4].into_iter().map(|d| ConvLayerConfig { kernel_size: 2, dilation: d, channels: 4 }).collect(),
            fc: vec![8, 8, 8],
        }
    }

    fn sample(seed: u64) -> SampleRow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleRow {
            key: ConsumerItemKey { consumer_id: "c".into(), item_id: "i".into(), category: "g".into() },
            period_index: 4,
            label: u8::from(rng.gen_bool(0.5)),
            static_categorical: vec![rng.gen_range(0..3), rng.gen_range(0..4)],
            temporal_categorical: (0..4).map(|_| vec![rng.gen_range(0..5)]).collect(),
            static_continuous: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            temporal_continuous: (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
        }
    }

    #[test]
    fn zero_weights_give_one_half() {
        let p = NetworkParams::zeros(tiny_config()).unwrap();
        let out = forward(&[sample(1), sample(2), sample(3)], &p).unwrap();
        assert_eq!(out, vec![0.5; 3]);
    }

    #[test]
    fn duplicated_rows_identical() {
        let p = NetworkParams::init(tiny_config(), 9).unwrap();
        let s = sample(4);
        let out = forward(&[s.clone(), sample(5), s], &p).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], out[2]);
        assert!(out.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = NetworkParams::init(tiny_config(), 9).unwrap();
        let mut s = sample(4);
        s.static_continuous.push(1.0);
        assert!(matches!(forward(&[s], &p), Err(TcnError::Shape(_))));
        let mut s = sample(4);
        s.static_categorical[0] = 3;
        assert!(matches!(forward(&[s], &p), Err(TcnError::Shape(_))));
        let mut cfg = tiny_config();
        cfg.conv[1].dilation = 0;
        assert!(matches!(NetworkParams::zeros(cfg), Err(TcnError::Config(_))));
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(&[0.5], &[1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(&[0.9, 0.1], &[1, 0]).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(bce_loss(&[1.0 - 1e-15], &[1]).unwrap() < 1e-11);
        // clamped instead of infinite
        assert!(bce_loss(&[0.0], &[1]).unwrap().is_finite());
        assert!(matches!(bce_loss(&[0.5], &[1, 0]), Err(TcnError::Shape(_))));
    }

    #[test]
    fn unused_embedding_rows_have_zero_gradient() {
        let p = NetworkParams::init(tiny_config(), 3).unwrap();
        let mut batch: Vec<SampleRow> = (0..4).map(sample).collect();
        for s in &mut batch {
            s.static_categorical[1] = 0;
        }
        let (_, g) = backward(&batch, &p).unwrap();
        let layout = p.config.layout();
        // rows 1..4 of the second static field
        let at = layout.static_emb[1];
        assert!(g[at + 2..at + 8].iter().all(|&v| v == 0.0));
        assert!(g[at..at + 2].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let p = NetworkParams::init(tiny_config(), 3).unwrap();
        let batch: Vec<SampleRow> = (0..4).map(sample).collect();
        let doubled: Vec<SampleRow> = batch.iter().chain(&batch).cloned().collect();
        let (l1, g1) = backward(&batch, &p).unwrap();
        let (l2, g2) = backward(&doubled, &p).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn layout_covers_every_parameter_once() {
        let cfg = tiny_config();
        let layout = cfg.layout();
        let mut seen = vec![0u8; layout.total];
        for c in &layout.conv {
            for v in &mut seen[c.weight..c.bias + c.cout] {
                *v += 1;
            }
        }
        for d in &layout.dense {
            for v in &mut seen[d.weight..d.bias + d.dout] {
                *v += 1;
            }
        }
        let emb_end = layout.conv[0].weight;
        for v in &mut seen[..emb_end] {
            *v += 1;
        }
        assert!(seen.iter().all(|&v| v == 1));
        assert_eq!(layout.class_of(&cfg, 0), ParamClass::StaticEmbedding);
        assert_eq!(layout.class_of(&cfg, layout.temporal_emb[0]), ParamClass::TemporalEmbedding);
        assert_eq!(layout.class_of(&cfg, layout.total - 1), ParamClass::DenseBias);
    }
}
