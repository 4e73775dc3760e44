use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names of the five image branches, in input order.
pub const IMAGE_BRANCHES: [&str; 5] = ["full", "ul", "ur", "ll", "lr"];
pub const TASKS: [&str; 2] = ["pbf", "smm"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Square kernel, zero "same" padding. Only stride 1 is supported.
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    GlobalAvgPool,
}

/// Layer sizes of the six-branch, shared-trunk, two-head network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub image_side: usize,
    /// Layer stack used by each of the five image branches (weights are not
    /// shared between branches). Must end in `global_avg_pool`.
    pub image_branch: Vec<LayerSpec>,
    pub structured_inputs: usize,
    /// Dense widths of the structured branch; ReLU between layers, none after
    /// the last.
    pub structured_widths: Vec<usize>,
    /// Shared trunk widths, each followed by ReLU.
    pub trunk_widths: Vec<usize>,
    /// Hidden widths of each task head (ReLU after each), followed by a
    /// scalar output layer.
    pub head_widths: Vec<usize>,
    pub activation: String,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            image_side: 128,
            image_branch: conv_stack(&[8, 16, 32], false),
            structured_inputs: 7,
            structured_widths: vec![16, 16],
            trunk_widths: vec![64, 32],
            head_widths: vec![16],
            activation: "relu".into(),
        }
    }
}

/// `conv3x3(c) → ReLU → maxpool2` for every width but the last, whose block
/// ends in global average pooling instead. With `downsample_input` the input
/// is max-pooled once before the first convolution.
pub fn conv_stack(channels: &[usize], downsample_input: bool) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    if downsample_input {
        layers.push(LayerSpec::MaxPool { size: 2, stride: 2 });
    }
    for (i, &c) in channels.iter().enumerate() {
        layers.push(LayerSpec::Conv {
            channels: c,
            kernel: 3,
            stride: 1,
        });
        layers.push(LayerSpec::Relu);
        if i + 1 < channels.len() {
            layers.push(LayerSpec::MaxPool { size: 2, stride: 2 });
        } else {
            layers.push(LayerSpec::GlobalAvgPool);
        }
    }
    layers
}

impl ArchitectureSpec {
    /// Small instance of the same topology, for tests and gradient checks.
    pub fn miniature(image_side: usize) -> Self {
        ArchitectureSpec {
            image_side,
            image_branch: conv_stack(&[2, 2], false),
            structured_inputs: 7,
            structured_widths: vec![4, 3],
            trunk_widths: vec![6, 5],
            head_widths: vec![3],
            activation: "relu".into(),
        }
    }

    /// Walk the image branch, returning the embedding width.
    pub fn image_embedding(&self) -> Result<usize> {
        let bad = |m: String| Error::invalid(format!("image branch: {m}"));
        if self.image_side == 0 {
            return Err(bad("image_side must be positive".into()));
        }
        let (mut c, mut side) = (1usize, self.image_side);
        let mut pooled = false;
        for (i, layer) in self.image_branch.iter().enumerate() {
            if pooled {
                return Err(bad("global_avg_pool must be the last layer".into()));
            }
            match *layer {
                LayerSpec::Conv {
                    channels,
                    kernel,
                    stride,
                } => {
                    if channels == 0 || kernel % 2 == 0 || stride != 1 {
                        return Err(bad(format!(
                            "layer {i}: conv needs channels ≥ 1, odd kernel and stride 1"
                        )));
                    }
                    c = channels;
                }
                LayerSpec::Relu => {}
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || size != stride || side % size != 0 {
                        return Err(bad(format!(
                            "layer {i}: max pool {size}/{stride} does not tile side {side}"
                        )));
                    }
                    side /= size;
                }
                LayerSpec::GlobalAvgPool => pooled = true,
            }
        }
        if !pooled {
            return Err(bad("must end with global_avg_pool".into()));
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.image_embedding()?;
        if self.activation != "relu" {
            return Err(Error::invalid(format!(
                "unsupported activation {:?} (only \"relu\")",
                self.activation
            )));
        }
        if self.structured_inputs == 0 || self.structured_widths.is_empty() {
            return Err(Error::invalid("structured branch needs inputs and at least one layer"));
        }
        let widths = self
            .structured_widths
            .iter()
            .chain(&self.trunk_widths)
            .chain(&self.head_widths);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::invalid("dense widths must be positive"));
        }
        Ok(())
    }

    pub fn concat_width(&self) -> Result<usize> {
        Ok(IMAGE_BRANCHES.len() * self.image_embedding()? + self.structured_widths.last().copied().unwrap_or(0))
    }
}
