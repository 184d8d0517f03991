//! One attention graph convolution: SiPF-driven kernel weights, rotation-invariant
//! attention over each neighbourhood, max aggregation and reversed EdgeConv fusion.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::descriptors::{sipf_stack, DescriptorMask, ShadowCloud};
use crate::geometry::{NeighborGraph, PointCloud};
use crate::lrf::LocalFrame;
use crate::{Error, Result};

pub const DESCRIPTOR_DIM: usize = 8;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Kernel MLP `8 -> hidden -> c_in` and a single affine fusion `2·c_in -> c_out`.
///
/// The same struct holds parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RiAttnLayer {
    pub c_in: usize,
    pub c_out: usize,
    pub hidden: usize,
    pub m_w1: DMatrix<f64>,
    pub m_b1: DVector<f64>,
    pub m_w2: DMatrix<f64>,
    pub m_b2: DVector<f64>,
    pub g_w: DMatrix<f64>,
    pub g_b: DVector<f64>,
}

impl RiAttnLayer {
    pub fn zeros(c_in: usize, c_out: usize, hidden: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive (c_in {c_in}, c_out {c_out}, hidden {hidden})"
            )));
        }
        Ok(Self {
            c_in,
            c_out,
            hidden,
            m_w1: DMatrix::zeros(hidden, DESCRIPTOR_DIM),
            m_b1: DVector::zeros(hidden),
            m_w2: DMatrix::zeros(c_in, hidden),
            m_b2: DVector::zeros(c_in),
            g_w: DMatrix::zeros(c_out, 2 * c_in),
            g_b: DVector::zeros(c_out),
        })
    }

    /// Gaussian weights with variance `1 / fan_in`, zero biases.
    pub fn random<R: Rng + ?Sized>(c_in: usize, c_out: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(c_in, c_out, hidden)?;
        let mut fill = |m: &mut DMatrix<f64>| {
            let s = (m.ncols() as f64).sqrt().recip();
            for v in m.iter_mut() {
                *v = s * rng.sample::<f64, _>(StandardNormal);
            }
        };
        fill(&mut layer.m_w1);
        fill(&mut layer.m_w2);
        fill(&mut layer.g_w);
        Ok(layer)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.c_in, self.c_out, self.hidden).expect("widths already validated")
    }

    fn tensors(&self) -> [&[f64]; 6] {
        [
            self.m_w1.as_slice(),
            self.m_b1.as_slice(),
            self.m_w2.as_slice(),
            self.m_b2.as_slice(),
            self.g_w.as_slice(),
            self.g_b.as_slice(),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.m_w1.as_mut_slice(),
            self.m_b1.as_mut_slice(),
            self.m_w2.as_mut_slice(),
            self.m_b2.as_mut_slice(),
            self.g_w.as_mut_slice(),
            self.g_b.as_mut_slice(),
        ]
    }

    pub const TENSOR_NAMES: [&'static str; 6] = ["m_w1", "m_b1", "m_w2", "m_b2", "g_w", "g_b"];

    /// Parameters as named flat slices (column-major for matrices).
    pub fn named_tensors(&self) -> impl Iterator<Item = (&'static str, &[f64])> {
        Self::TENSOR_NAMES.into_iter().zip(self.tensors())
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in t.iter_mut().zip(o) {
                *x += a * y;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn check_cols(m: &DMatrix<f64>, cols: usize, what: &str) -> Result<()> {
    if m.ncols() != cols {
        return Err(Error::InvalidArgument(format!("{what} has {} columns, expected {cols}", m.ncols())));
    }
    Ok(())
}

fn kernel_parts(p: &DMatrix<f64>, layer: &RiAttnLayer) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_cols(p, DESCRIPTOR_DIM, "descriptor stack")?;
    let mut h1 = p * layer.m_w1.transpose();
    for mut row in h1.row_iter_mut() {
        row += layer.m_b1.transpose();
    }
    let a1 = h1.map(leaky);
    let mut w = &a1 * layer.m_w2.transpose();
    for mut row in w.row_iter_mut() {
        row += layer.m_b2.transpose();
    }
    Ok((h1, a1, w))
}

/// Row `j` is the kernel MLP applied to descriptor row `j`.
pub fn kernel_weights(p: &DMatrix<f64>, layer: &RiAttnLayer) -> Result<DMatrix<f64>> {
    Ok(kernel_parts(p, layer)?.2)
}

fn attention_parts(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if w.shape() != x.shape() || w.ncols() == 0 || w.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "attention inputs must share a nonempty shape, got {:?} and {:?}",
            w.shape(),
            x.shape()
        )));
    }
    let scale = (w.ncols() as f64).sqrt().recip();
    let mut att = w * x.transpose() * scale;
    for (i, mut row) in att.row_iter_mut().enumerate() {
        let m = row.max();
        if !m.is_finite() || row.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("non-finite attention score in row {i}")));
        }
        row.apply(|s| *s = (*s - m).exp());
        let z = row.sum();
        row /= z;
    }
    let v = w.component_mul(x);
    let out = &att * &v;
    Ok((att, v, out))
}

/// `softmax(W Xᵀ / √c_in) (W ⊙ X)`, softmax taken per row.
pub fn ri_attention(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(attention_parts(w, x)?.2)
}

fn column_argmax(m: &DMatrix<f64>) -> Vec<usize> {
    (0..m.ncols())
        .map(|c| {
            let col = m.column(c);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i] > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn fuse(x_hat: &DVector<f64>, x_r: &DVector<f64>, layer: &RiAttnLayer) -> (DVector<f64>, DVector<f64>) {
    let c = x_r.len();
    let mut u = DVector::zeros(2 * c);
    u.rows_mut(0, c).copy_from(&(x_hat - x_r));
    u.rows_mut(c, c).copy_from(x_r);
    let y = &layer.g_w * &u + &layer.g_b;
    (u, y)
}

/// Column-wise max over neighbours, then `g((x̂ - x_r) ⊕ x_r)`.
pub fn reversed_edgeconv(attn_out: &DMatrix<f64>, x_r: &DVector<f64>, layer: &RiAttnLayer) -> Result<DVector<f64>> {
    check_cols(attn_out, layer.c_in, "attention output")?;
    if x_r.len() != layer.c_in || attn_out.nrows() == 0 {
        return Err(Error::InvalidArgument("reference feature width differs from c_in".into()));
    }
    let x_hat = DVector::from_iterator(layer.c_in, column_argmax(attn_out).iter().enumerate().map(|(c, &i)| attn_out[(i, c)]));
    Ok(fuse(&x_hat, x_r, layer).1)
}

/// Everything the backward pass needs for one reference point.
#[derive(Debug, Clone)]
pub struct LayerActivation {
    pub p: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub x_r: DVector<f64>,
    pub h1: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub attention: DMatrix<f64>,
    pub values: DMatrix<f64>,
    pub attn_out: DMatrix<f64>,
    pub argmax: Vec<usize>,
    pub fused_input: DVector<f64>,
    pub output: DVector<f64>,
}

pub fn point_forward(p: &DMatrix<f64>, x: &DMatrix<f64>, x_r: &DVector<f64>, layer: &RiAttnLayer) -> Result<LayerActivation> {
    check_cols(x, layer.c_in, "neighbour features")?;
    if x_r.len() != layer.c_in || p.nrows() != x.nrows() {
        return Err(Error::InvalidArgument("descriptor rows, neighbour rows and widths must agree".into()));
    }
    let (h1, a1, w) = kernel_parts(p, layer)?;
    let (attention, values, attn_out) = attention_parts(&w, x)?;
    let argmax = column_argmax(&attn_out);
    let x_hat = DVector::from_iterator(layer.c_in, argmax.iter().enumerate().map(|(c, &i)| attn_out[(i, c)]));
    let (fused_input, output) = fuse(&x_hat, x_r, layer);
    Ok(LayerActivation {
        p: p.clone(),
        x: x.clone(),
        x_r: x_r.clone(),
        h1,
        a1,
        w,
        attention,
        values,
        attn_out,
        argmax,
        fused_input,
        output,
    })
}

/// Masked descriptor stack (`k × 8`) for every reference point.
pub fn descriptor_stacks(
    cloud: &PointCloud,
    frames: &[LocalFrame],
    graph: &NeighborGraph,
    shadow: &ShadowCloud,
    mask: DescriptorMask,
) -> Result<Vec<DMatrix<f64>>> {
    (0..cloud.len())
        .into_par_iter()
        .map(|r| {
            let stack = sipf_stack(cloud, frames, graph, shadow, r)?;
            let rows: Vec<f64> = stack.iter().flat_map(|d| mask.apply(d)).collect();
            Ok(DMatrix::from_row_slice(stack.len(), DESCRIPTOR_DIM, &rows))
        })
        .collect()
}

fn gather(features: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), features.ncols(), |i, c| features[(idx[i], c)])
}

/// Applies the layer at every point; `features` is `N × c_in`.
pub fn layer_forward(
    stacks: &[DMatrix<f64>],
    graph: &NeighborGraph,
    features: &DMatrix<f64>,
    layer: &RiAttnLayer,
) -> Result<(DMatrix<f64>, Vec<LayerActivation>)> {
    let n = features.nrows();
    if stacks.len() != n || graph.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} stacks and {} graph rows for {n} feature rows",
            stacks.len(),
            graph.len()
        )));
    }
    check_cols(features, layer.c_in, "features")?;
    let acts: Vec<LayerActivation> = (0..n)
        .into_par_iter()
        .map(|r| {
            let x = gather(features, graph.row(r));
            let x_r = features.row(r).transpose();
            point_forward(&stacks[r], &x, &x_r, layer).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("point {r}: {msg}")),
                other => other.at_index(r),
            })
        })
        .collect::<Result<_>>()?;
    let out = DMatrix::from_fn(n, layer.c_out, |r, c| acts[r].output[c]);
    Ok((out, acts))
}

/// Full layer from geometry: descriptor stacks under `mask`, then [`layer_forward`].
pub fn riattnconv_forward(
    cloud: &PointCloud,
    frames: &[LocalFrame],
    graph: &NeighborGraph,
    shadow: &ShadowCloud,
    features: &DMatrix<f64>,
    layer: &RiAttnLayer,
    mask: DescriptorMask,
) -> Result<DMatrix<f64>> {
    let stacks = descriptor_stacks(cloud, frames, graph, shadow, mask)?;
    Ok(layer_forward(&stacks, graph, features, layer)?.0)
}

/// Gradients of one reference point: parameters, neighbour rows and the point's own row.
fn point_backward(act: &LayerActivation, dy: &DVector<f64>, layer: &RiAttnLayer) -> (RiAttnLayer, DMatrix<f64>, DVector<f64>) {
    let c = layer.c_in;
    let mut g = layer.zeros_like();
    g.g_w = dy * act.fused_input.transpose();
    g.g_b = dy.clone();
    let du = layer.g_w.tr_mul(dy);
    let dx_hat = du.rows(0, c).into_owned();
    let dx_r = du.rows(c, c) - &dx_hat;

    let k = act.x.nrows();
    let mut d_out = DMatrix::zeros(k, c);
    for (col, &i) in act.argmax.iter().enumerate() {
        d_out[(i, col)] = dx_hat[col];
    }
    let d_att = &d_out * act.values.transpose();
    let d_values = act.attention.tr_mul(&d_out);
    let mut d_scores = d_att.component_mul(&act.attention);
    for (mut row, a) in d_scores.row_iter_mut().zip(act.attention.row_iter()) {
        let s = row.sum();
        row -= a * s;
    }
    let scale = (c as f64).sqrt().recip();
    let dw = d_values.component_mul(&act.x) + &d_scores * &act.x * scale;
    let dx = d_values.component_mul(&act.w) + d_scores.tr_mul(&act.w) * scale;

    g.m_w2 = dw.tr_mul(&act.a1);
    g.m_b2 = dw.row_sum().transpose();
    let da1 = &dw * &layer.m_w2;
    let dh1 = da1.zip_map(&act.h1, |d, h| d * leaky_grad(h));
    g.m_w1 = dh1.tr_mul(&act.p);
    g.m_b1 = dh1.row_sum().transpose();
    (g, dx, dx_r)
}

/// Backward pass for [`layer_forward`]. `d_output` is `N × c_out`; returns parameter
/// gradients and the gradient with respect to the `N × c_in` input features.
/// Per-point contributions are summed in point order.
pub fn layer_backward(
    layer: &RiAttnLayer,
    acts: &[LayerActivation],
    graph: &NeighborGraph,
    d_output: &DMatrix<f64>,
) -> Result<(RiAttnLayer, DMatrix<f64>)> {
    let n = acts.len();
    if d_output.shape() != (n, layer.c_out) || graph.len() != n {
        return Err(Error::InvalidArgument(format!(
            "output gradient {:?} does not match {n} points × {}",
            d_output.shape(),
            layer.c_out
        )));
    }
    let parts: Vec<_> = (0..n)
        .into_par_iter()
        .map(|r| point_backward(&acts[r], &d_output.row(r).transpose(), layer))
        .collect();
    let mut grad = layer.zeros_like();
    let mut d_features = DMatrix::zeros(n, layer.c_in);
    for (r, (g, dx, dx_r)) in parts.into_iter().enumerate() {
        grad.axpy(1.0, &g);
        for (i, &j) in graph.row(r).iter().enumerate() {
            for col in 0..layer.c_in {
                d_features[(j, col)] += dx[(i, col)];
            }
        }
        for col in 0..layer.c_in {
            d_features[(r, col)] += dx_r[col];
        }
    }
    Ok((grad, d_features))
}
