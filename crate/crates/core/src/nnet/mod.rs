//! Multimodal multi-task regression network.
//!
//! Five convolutional branches (full face and its four quarters) and one
//! dense branch (height, gender, age, weight, chin-curve coefficients) run
//! independently; their embeddings are concatenated, passed through a shared
//! fully connected trunk, and split into two scalar heads predicting body-fat
//! percentage and skeletal muscle mass. Gradients are computed by
//! hand-written reverse-mode backpropagation in `f64`.

mod arch;
mod gradcheck;
mod io;
mod layers;
mod model;
mod tensor;
mod train;

pub use arch::{conv_stack, ArchitectureSpec, LayerSpec, IMAGE_BRANCHES, TASKS};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckReport, Mismatch};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_KIND};
pub use model::{init_model, loss, LossWeights, NetInputs, NetworkModel, Prediction, TargetStats};
pub use tensor::Tensor;
pub use train::{train, train_with_progress, Adam, EpochStats, History, TrainConfig};
