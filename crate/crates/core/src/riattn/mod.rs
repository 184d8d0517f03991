//! Attention graph convolution over shadow-informed descriptors, the composite loss and a
//! small trainer.

pub mod dataset;
pub mod layer;
pub mod loss;
pub mod train;

pub use dataset::{make_wingtip_dataset, mirror_rotation, WingtipCloud, WingtipDataset};
pub use layer::{
    descriptor_stacks, kernel_weights, layer_backward, layer_forward, point_forward, reversed_edgeconv, ri_attention,
    riattnconv_forward, LayerActivation, RiAttnLayer,
};
pub use loss::{cross_entropy, total_loss, total_loss_grad};
pub use train::{
    evaluate, metrics_to_ndjson, prepare_dataset, run_wingtip, train_toy, EpochMetrics, PreparedCloud, ToyModel,
    ToyTaskConfig, TrainOutput,
};
