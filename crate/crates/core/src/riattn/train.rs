//! Epoch-wise trainer: one Bingham-sampled shadow rotation per epoch, SGD on the layer
//! stack, the classifier head and the Bingham seed.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{make_wingtip_dataset, WingtipDataset};
use super::layer::{descriptor_stacks, layer_backward, layer_forward, leaky, LayerActivation, RiAttnLayer, LEAKY_SLOPE};
use super::loss::{cross_entropy, total_loss, total_loss_grad, DEFAULT_DELTA};
use crate::bingham::{mode, rotation_is_identity, sample, BinghamLossKind, BinghamSeed, SeedLoss, DEFAULT_QUADRATURE_ORDER};
use crate::descriptors::{shadow_of, DescriptorMask};
use crate::geometry::{knn_graph, NeighborGraph, PointCloud, Rotation3, UnitQuaternion};
use crate::lrf::{build_all_lrfs, input_descriptor, LocalFrame, LrfMode};
use crate::{Error, Result};

/// Width of the per-point input descriptor.
pub const INPUT_DIM: usize = 3;
const IDENTITY_PERTURBATION: f64 = 1e-3;
const MAX_IDENTITY_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRateSchedule {
    Constant,
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTaskConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LearningRateSchedule,
    /// Clouds per SGD step.
    pub batch_size: usize,
    pub k: usize,
    pub delta: f64,
    pub mask: DescriptorMask,
    pub seed: u64,
    pub quadrature_order: usize,
    pub bingham_loss_kind: BinghamLossKind,
    /// Number of stacked attention layers (1 or 2).
    pub layers: usize,
    /// Output width of every layer.
    pub width: usize,
    /// Hidden width of the kernel MLP; the layer's input width when unset.
    pub hidden: Option<usize>,
    pub train_clouds: usize,
    pub eval_clouds: usize,
    pub points_per_cloud: usize,
    pub noise_sigma: f64,
}

impl Default for ToyTaskConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            schedule: LearningRateSchedule::Cosine,
            batch_size: 1,
            k: 20,
            delta: DEFAULT_DELTA,
            mask: DescriptorMask::Sipf,
            seed: 0,
            quadrature_order: DEFAULT_QUADRATURE_ORDER,
            bingham_loss_kind: BinghamLossKind::Entropy,
            layers: 2,
            width: 16,
            hidden: None,
            train_clouds: 16,
            eval_clouds: 8,
            points_per_cloud: 128,
            noise_sigma: 0.002,
        }
    }
}

impl ToyTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be a finite non-negative number, got {}", self.delta));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.k >= self.points_per_cloud {
            return bad(format!("k = {} needs more than {} points", self.k, self.points_per_cloud));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.train_clouds == 0 || self.eval_clouds == 0 {
            return bad("batch size and cloud counts must be positive".into());
        }
        if !(1..=2).contains(&self.layers) {
            return bad(format!("layers must be 1 or 2, got {}", self.layers));
        }
        if self.width == 0 || self.hidden == Some(0) {
            return bad("layer widths must be positive".into());
        }
        if self.quadrature_order < crate::bingham::MIN_QUADRATURE_ORDER {
            return bad(format!("quadrature order {} is below the minimum", self.quadrature_order));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            LearningRateSchedule::Constant => self.learning_rate,
            LearningRateSchedule::Cosine => {
                let t = epoch as f64 / self.epochs.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Rotation-independent per-cloud inputs: graph, frames, input descriptors, labels.
#[derive(Debug, Clone)]
pub struct PreparedCloud {
    pub cloud: PointCloud,
    pub graph: NeighborGraph,
    pub frames: Vec<LocalFrame>,
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl PreparedCloud {
    pub fn new(cloud: PointCloud, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != cloud.len() {
            return Err(Error::InvalidArgument(format!("{} labels for {} points", labels.len(), cloud.len())));
        }
        let graph = knn_graph(&cloud, k)?;
        let mode = if cloud.has_normals() { LrfMode::Normal } else { LrfMode::Barycenter };
        let frames = build_all_lrfs(&cloud, &graph, mode)?;
        let desc = input_descriptor(&cloud, &frames)?;
        let features = DMatrix::from_fn(cloud.len(), INPUT_DIM, |i, c| desc[i].to_array()[c]);
        Ok(Self { cloud, graph, frames, features, labels })
    }

    pub fn stacks(&self, r_g: &Rotation3, mask: DescriptorMask) -> Result<Vec<DMatrix<f64>>> {
        let shadow = shadow_of(&self.cloud, &self.frames, r_g);
        descriptor_stacks(&self.cloud, &self.frames, &self.graph, &shadow, mask)
    }
}

pub fn prepare_dataset(ds: &WingtipDataset, k: usize) -> Result<Vec<PreparedCloud>> {
    ds.clouds.iter().map(|c| PreparedCloud::new(c.cloud.clone(), c.labels.clone(), k)).collect()
}

/// Stacked attention layers (leaky rectifier in between) and a per-point linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub layers: Vec<RiAttnLayer>,
    pub head_w: DMatrix<f64>,
    pub head_b: DVector<f64>,
}

/// Forward state of one cloud.
pub struct ModelTrace {
    pub inputs: Vec<DMatrix<f64>>,
    pub pre_activations: Vec<DMatrix<f64>>,
    pub activations: Vec<Vec<LayerActivation>>,
    pub logits: DMatrix<f64>,
}

impl ToyModel {
    pub fn new<R: Rng + ?Sized>(config: &ToyTaskConfig, classes: usize, rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(config.layers);
        let mut c_in = INPUT_DIM;
        for _ in 0..config.layers {
            layers.push(RiAttnLayer::random(c_in, config.width, config.hidden.unwrap_or(c_in), rng)?);
            c_in = config.width;
        }
        let s = (c_in as f64).sqrt().recip();
        let head_w = DMatrix::from_fn(classes, c_in, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        Ok(Self { layers, head_w, head_b: DVector::zeros(classes) })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(RiAttnLayer::num_params).sum::<usize>() + self.head_w.len() + self.head_b.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.layers.iter().flat_map(|l| l.to_flat()).collect();
        out.extend_from_slice(self.head_w.as_slice());
        out.extend_from_slice(self.head_b.as_slice());
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::InvalidArgument(format!("expected {} parameters, got {}", self.num_params(), flat.len())));
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (head, tail) = rest.split_at(l.num_params());
            l.set_flat(head)?;
            rest = tail;
        }
        let (hw, hb) = rest.split_at(self.head_w.len());
        self.head_w.as_mut_slice().copy_from_slice(hw);
        self.head_b.as_mut_slice().copy_from_slice(hb);
        Ok(())
    }

    pub fn forward(&self, stacks: &[DMatrix<f64>], graph: &NeighborGraph, features: &DMatrix<f64>) -> Result<ModelTrace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut x = features.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, acts) = layer_forward(stacks, graph, &x, layer)?;
            inputs.push(x);
            activations.push(acts);
            x = if i + 1 < self.layers.len() { out.map(leaky) } else { out.clone() };
            pre_activations.push(out);
        }
        let mut logits = &x * self.head_w.transpose();
        for mut row in logits.row_iter_mut() {
            row += self.head_b.transpose();
        }
        Ok(ModelTrace { inputs, pre_activations, activations, logits })
    }

    /// Flat parameter gradient given `∂L/∂logits`.
    pub fn backward(&self, trace: &ModelTrace, graph: &NeighborGraph, d_logits: &DMatrix<f64>) -> Result<Vec<f64>> {
        let last = self.layers.len() - 1;
        let top = &trace.pre_activations[last];
        let d_head_w = d_logits.tr_mul(top);
        let d_head_b = d_logits.row_sum().transpose();
        let mut d_out = d_logits * &self.head_w;
        let mut layer_grads = vec![None; self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let (g, d_in) = layer_backward(&self.layers[i], &trace.activations[i], graph, &d_out)?;
            layer_grads[i] = Some(g);
            if i > 0 {
                d_out = d_in.zip_map(&trace.pre_activations[i - 1], |d, z| if z > 0.0 { d } else { LEAKY_SLOPE * d });
            }
        }
        let mut flat: Vec<f64> = layer_grads.into_iter().flat_map(|g| g.expect("filled above").to_flat()).collect();
        flat.extend_from_slice(d_head_w.as_slice());
        flat.extend_from_slice(d_head_b.as_slice());
        Ok(flat)
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub task_loss: f64,
    pub bingham_loss: f64,
    pub total_loss: f64,
    pub accuracy: f64,
    pub rg_quaternion: [f64; 4],
}

pub fn metrics_to_ndjson(metrics: &[EpochMetrics]) -> String {
    metrics
        .iter()
        .map(|m| serde_json::to_string(m).expect("metrics serialise") + "\n")
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ToyModel,
    pub seed: BinghamSeed,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutput {
    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.accuracy)
    }

    pub fn max_accuracy(&self) -> f64 {
        self.metrics.iter().map(|m| m.accuracy).fold(0.0, f64::max)
    }
}

/// Draws the epoch's shadow quaternion, nudging `z1` while the draw is the identity.
fn draw_shadow<R: Rng + ?Sized>(seed: &mut BinghamSeed, rng: &mut R) -> Result<UnitQuaternion> {
    for _ in 0..MAX_IDENTITY_RETRIES {
        let q = sample(&seed.params()?, rng, 1)?[0].canonical();
        if !rotation_is_identity(&q) {
            return Ok(q);
        }
        for z in &mut seed.z1 {
            *z += IDENTITY_PERTURBATION * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Err(Error::Numeric("shadow rotation stayed at the identity".into()))
}

/// The Bingham mode as a rotation, nudging `z1` while the mode is the identity.
fn mode_rotation<R: Rng + ?Sized>(seed: &mut BinghamSeed, rng: &mut R) -> Result<Rotation3> {
    for _ in 0..MAX_IDENTITY_RETRIES {
        let m = mode(&seed.params()?);
        if !m.is_identity {
            return Ok(m.quaternion.to_rotation());
        }
        for z in &mut seed.z1 {
            *z += IDENTITY_PERTURBATION * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Err(Error::Numeric("Bingham mode stayed at the identity".into()))
}

/// Fraction of correctly classified points over `clouds` under shadow rotation `r_g`.
pub fn evaluate(model: &ToyModel, clouds: &[PreparedCloud], r_g: &Rotation3, mask: DescriptorMask) -> Result<f64> {
    let (mut correct, mut total) = (0, 0);
    for c in clouds {
        let stacks = c.stacks(r_g, mask)?;
        let trace = model.forward(&stacks, &c.graph, &c.features)?;
        correct += cross_entropy(&trace.logits, &c.labels)?.2;
        total += c.labels.len();
    }
    Ok(correct as f64 / total as f64)
}

/// Runs the epoch loop: shadow drawn at the start of each epoch and fixed across its
/// batches, joint SGD step on network and Bingham seed after every batch. Accuracy on
/// `eval` is measured at the end of each epoch with the shadow placed at the Bingham mode.
pub fn train_toy(train: &[PreparedCloud], eval: &[PreparedCloud], config: &ToyTaskConfig) -> Result<TrainOutput> {
    config.validate()?;
    if train.is_empty() || eval.is_empty() {
        return Err(Error::InvalidArgument("training and evaluation sets must be nonempty".into()));
    }
    let classes = train.iter().chain(eval).flat_map(|c| c.labels.iter()).max().map_or(0, |m| m + 1).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ToyModel::new(config, classes, &mut rng)?;
    let mut seed = BinghamSeed::random(&mut rng);
    let mut q_g = draw_shadow(&mut seed, &mut rng)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let r_g = q_g.to_rotation();
        let lr = config.learning_rate_at(epoch);
        let stacks: Vec<_> = train.iter().map(|c| c.stacks(&r_g, config.mask)).collect::<Result<_>>()?;
        order.shuffle(&mut rng);
        let (mut sum_task, mut sum_bingham, mut sum_total, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let points: usize = chunk.iter().map(|&i| train[i].labels.len()).sum();
            let mut task = 0.0;
            let mut grad = vec![0.0; model.num_params()];
            for &i in chunk {
                let c = &train[i];
                let trace = model.forward(&stacks[i], &c.graph, &c.features)?;
                let (loss, d_logits, _) = cross_entropy(&trace.logits, &c.labels)?;
                let w = c.labels.len() as f64 / points as f64;
                task += w * loss;
                let g = model.backward(&trace, &c.graph, &d_logits)?;
                grad.iter_mut().zip(g).for_each(|(a, b)| *a += w * b);
            }
            let seed_loss = SeedLoss::evaluate(&seed, config.bingham_loss_kind, &q_g, config.quadrature_order)?;
            let total = total_loss(task, seed_loss.value, config.delta);
            if !total.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            let (d_task, d_bingham) = total_loss_grad(task, seed_loss.value, config.delta);
            let mut params = model.to_flat();
            params.iter_mut().zip(&grad).for_each(|(p, g)| *p -= lr * d_task * g);
            model.set_flat(&params)?;
            for (z, g) in seed.z1.iter_mut().zip(seed_loss.grad_z1) {
                *z -= lr * d_bingham * g;
            }
            for (z, g) in seed.z2.iter_mut().zip(seed_loss.grad_z2) {
                *z -= lr * d_bingham * g;
            }
            seed.validate()?;
            sum_task += task;
            sum_bingham += seed_loss.value;
            sum_total += total;
            batches += 1;
        }
        let accuracy = evaluate(&model, eval, &mode_rotation(&mut seed, &mut rng)?, config.mask)?;
        let n = batches as f64;
        metrics.push(EpochMetrics {
            epoch,
            task_loss: sum_task / n,
            bingham_loss: sum_bingham / n,
            total_loss: sum_total / n,
            accuracy,
            rg_quaternion: q_g.to_array(),
        });
        q_g = draw_shadow(&mut seed, &mut rng)?;
    }
    Ok(TrainOutput { model, seed, metrics })
}

/// Generates the train/eval wing-tip clouds described by `config` and trains on them.
pub fn run_wingtip(config: &ToyTaskConfig) -> Result<TrainOutput> {
    config.validate()?;
    let n = config.train_clouds + config.eval_clouds;
    let ds = make_wingtip_dataset(n, config.points_per_cloud, config.noise_sigma, config.seed)?;
    let prepared = prepare_dataset(&ds, config.k)?;
    let (train, eval) = prepared.split_at(config.train_clouds);
    train_toy(train, eval, config)
}
