use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Euclidean,
    Cosine,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Pairwise,
    Triplet,
}

impl FromStr for DistanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(DistanceKind::Euclidean),
            "cosine" => Ok(DistanceKind::Cosine),
            "bilinear" => Ok(DistanceKind::Bilinear),
            other => Err(Error::Config(format!("unknown distance kind `{other}`"))),
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Cosine => "cosine",
            DistanceKind::Bilinear => "bilinear",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise" => Ok(LossKind::Pairwise),
            "triplet" => Ok(LossKind::Triplet),
            other => Err(Error::Config(format!("unknown loss kind `{other}`"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Pairwise => "pairwise",
            LossKind::Triplet => "triplet",
        })
    }
}

/// Affine layer `y = W x + b` with `W` stored row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn random(inputs: usize, outputs: usize, std: f64, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Dense {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| dot(row, x) + b),
        );
    }

    /// Accumulates parameter gradients into `grad` and input gradient into
    /// `grad_x` (if given).
    fn backward(&self, x: &[f64], grad_y: &[f64], grad: &mut Dense, grad_x: Option<&mut [f64]>) {
        for (r, &g) in grad_y.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[r] += g;
            let row = &mut grad.weight[r * self.inputs..(r + 1) * self.inputs];
            for (w, xi) in row.iter_mut().zip(x) {
                *w += g * xi;
            }
        }
        if let Some(gx) = grad_x {
            for (r, &g) in grad_y.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight[r * self.inputs..(r + 1) * self.inputs];
                for (o, w) in gx.iter_mut().zip(row) {
                    *o += g * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub key_dim: usize,
    pub value_dim: usize,
}

impl ModelShape {
    pub fn new(input_dim: usize) -> Self {
        ModelShape {
            input_dim,
            hidden: vec![64, 64],
            key_dim: 16,
            value_dim: 32,
        }
    }

    pub fn trunk_output(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.key_dim == 0 || self.value_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub trunk: Vec<Dense>,
    pub key: Dense,
    pub value: Dense,
    /// Row-major `n_sources x 2*key_dim`.
    pub q: Vec<f64>,
    /// Row-major `value_dim x value_dim`, present for the bilinear distance.
    pub bilinear: Option<Vec<f64>>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params {
            trunk: other
                .trunk
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
            key: Dense::zeros(other.key.inputs, other.key.outputs),
            value: Dense::zeros(other.value.inputs, other.value.outputs),
            q: vec![0.0; other.q.len()],
            bilinear: other.bilinear.as_ref().map(|m| vec![0.0; m.len()]),
        }
    }

    /// Named tensors in a fixed order: `(name, rows, cols, data)`.
    pub fn tensors(&self) -> Vec<(String, usize, usize, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.trunk.iter().enumerate() {
            out.push((format!("trunk.{i}.weight"), l.outputs, l.inputs, &l.weight[..]));
            out.push((format!("trunk.{i}.bias"), 1, l.outputs, &l.bias[..]));
        }
        for (name, l) in [("key", &self.key), ("value", &self.value)] {
            out.push((format!("{name}.weight"), l.outputs, l.inputs, &l.weight[..]));
            out.push((format!("{name}.bias"), 1, l.outputs, &l.bias[..]));
        }
        let q_cols = 2 * self.key.outputs;
        out.push(("q".into(), self.q.len() / q_cols, q_cols, &self.q[..]));
        if let Some(m) = &self.bilinear {
            let d = self.value.outputs;
            out.push(("bilinear".into(), d, d, &m[..]));
        }
        out
    }

    /// Mutable tensors in the same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.trunk {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.key.weight);
        out.push(&mut self.key.bias);
        out.push(&mut self.value.weight);
        out.push(&mut self.value.bias);
        out.push(&mut self.q);
        if let Some(m) = &mut self.bilinear {
            out.push(m);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, _, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Metric model: ReLU MLP trunk shared by a key head and a value head. The
/// value embedding is the place embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricModel {
    pub shape: ModelShape,
    pub alpha: f64,
    pub distance: DistanceKind,
    pub loss: LossKind,
    /// Registered label sources, one `q` row each.
    pub sources: Vec<String>,
    pub params: Params,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by each trunk layer's post-ReLU output.
    pub acts: Vec<Vec<f64>>,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
}

impl MetricModel {
    /// He-initialized trunk, Xavier-initialized heads, zero `q` (uniform
    /// attention) and identity bilinear matrix.
    pub fn new(
        shape: ModelShape,
        sources: Vec<String>,
        alpha: f64,
        distance: DistanceKind,
        loss: LossKind,
        rng: &mut Rng,
    ) -> Result<Self> {
        shape.validate()?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {alpha}")));
        }
        let mut trunk = Vec::new();
        let mut prev = shape.input_dim;
        for &h in &shape.hidden {
            trunk.push(Dense::random(prev, h, (2.0 / prev as f64).sqrt(), rng));
            prev = h;
        }
        let key = Dense::random(prev, shape.key_dim, (1.0 / prev as f64).sqrt(), rng);
        let value = Dense::random(prev, shape.value_dim, (1.0 / prev as f64).sqrt(), rng);
        let bilinear = (distance == DistanceKind::Bilinear).then(|| {
            let d = shape.value_dim;
            let mut m = vec![0.0; d * d];
            for i in 0..d {
                m[i * d + i] = 1.0;
            }
            m
        });
        let q = vec![0.0; sources.len() * 2 * shape.key_dim];
        Ok(MetricModel {
            shape,
            alpha,
            distance,
            loss,
            sources,
            params: Params {
                trunk,
                key,
                value,
                q,
                bilinear,
            },
        })
    }

    pub fn source_index(&self, source: &str) -> Result<usize> {
        self.sources
            .iter()
            .position(|s| s == source)
            .ok_or_else(|| Error::UnknownSource(source.to_string()))
    }

    pub fn q(&self, s: usize) -> &[f64] {
        let w = 2 * self.shape.key_dim;
        &self.params.q[s * w..(s + 1) * w]
    }

    /// `(key, value)` embeddings of one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.shape.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.shape.input_dim,
                actual: x.len(),
            });
        }
        let c = self.forward_cached(x);
        Ok((c.key, c.value))
    }

    pub(crate) fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        let mut acts = Vec::with_capacity(self.params.trunk.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.params.trunk {
            let mut h = Vec::new();
            layer.apply(acts.last().expect("input pushed"), &mut h);
            for v in &mut h {
                *v = v.max(0.0);
            }
            acts.push(h);
        }
        let top = acts.last().expect("input pushed");
        let (mut key, mut value) = (Vec::new(), Vec::new());
        self.params.key.apply(top, &mut key);
        self.params.value.apply(top, &mut value);
        ForwardCache { acts, key, value }
    }

    /// Back-propagates head gradients through the network into `grads`.
    pub(crate) fn backward(
        &self,
        cache: &ForwardCache,
        grad_key: Option<&[f64]>,
        grad_value: &[f64],
        grads: &mut Params,
    ) {
        let top = cache.acts.last().expect("input pushed");
        let mut grad_h = vec![0.0; top.len()];
        self.params
            .value
            .backward(top, grad_value, &mut grads.value, Some(&mut grad_h));
        if let Some(gk) = grad_key {
            self.params
                .key
                .backward(top, gk, &mut grads.key, Some(&mut grad_h));
        }
        for l in (0..self.params.trunk.len()).rev() {
            let out = &cache.acts[l + 1];
            for (g, &a) in grad_h.iter_mut().zip(out) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            let input = &cache.acts[l];
            let mut grad_in = if l > 0 { vec![0.0; input.len()] } else { Vec::new() };
            self.params.trunk[l].backward(
                input,
                &grad_h,
                &mut grads.trunk[l],
                (l > 0).then_some(&mut grad_in[..]),
            );
            grad_h = grad_in;
        }
    }

    /// Value embedding of one feature vector.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(_, v)| v)
    }

    /// Value embeddings of every row of a row-major feature matrix.
    pub fn embed_all(&self, features: &[f64]) -> Result<Vec<f64>> {
        let d = self.shape.input_dim;
        if !features.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: features.len() % d,
            });
        }
        let mut out = Vec::with_capacity(features.len() / d * self.shape.value_dim);
        for x in features.chunks_exact(d) {
            out.extend(self.forward_cached(x).value);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::stream_rng;

    fn model() -> MetricModel {
        let mut rng = stream_rng(3, 0);
        MetricModel::new(
            ModelShape {
                input_dim: 5,
                hidden: vec![7, 6],
                key_dim: 3,
                value_dim: 4,
            },
            vec!["a".into(), "b".into()],
            1.0,
            DistanceKind::Euclidean,
            LossKind::Pairwise,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_embeddings() {
        let mut m = model();
        for t in m.params.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        let (k, v) = m.forward(&[1.0, -2.0, 3.0, 0.5, 0.1]).unwrap();
        assert!(k.iter().chain(&v).all(|&x| x == 0.0));
    }

    #[test]
    fn output_shapes_and_determinism() {
        let m = model();
        let x = [0.3, -0.1, 0.8, 0.0, 0.2];
        let (k1, v1) = m.forward(&x).unwrap();
        let (k2, v2) = m.forward(&x).unwrap();
        assert_eq!((k1.len(), v1.len()), (3, 4));
        assert_eq!((k1, v1), (k2, v2));
        assert_eq!(m.params.q.len(), 2 * 2 * 3);
        assert!(m.params.q.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn wrong_input_dimension_is_an_error() {
        assert!(matches!(
            model().forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 5, actual: 2 })
        ));
    }

    #[test]
    fn unknown_source_is_an_error() {
        let m = model();
        assert_eq!(m.source_index("b").unwrap(), 1);
        assert!(matches!(m.source_index("c"), Err(Error::UnknownSource(_))));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [DistanceKind::Euclidean, DistanceKind::Cosine, DistanceKind::Bilinear] {
            assert_eq!(k.to_string().parse::<DistanceKind>().unwrap(), k);
        }
        for k in [LossKind::Pairwise, LossKind::Triplet] {
            assert_eq!(k.to_string().parse::<LossKind>().unwrap(), k);
        }
        assert!("manhattan".parse::<DistanceKind>().is_err());
    }
}
