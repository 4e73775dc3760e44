use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, LayerSpec, IMAGE_BRANCHES, TASKS};
use super::layers::{Op, Stack, StackCache};
use super::Tensor;
use crate::error::{Error, Result};
use crate::preprocess::{FeatureStat, NormStats, PreprocessConfig, PreprocessedSample};
use crate::rng::{self, Rng};

/// Per-task standardisation of the regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub pbf: FeatureStat,
    pub smm: FeatureStat,
}

impl Default for TargetStats {
    fn default() -> Self {
        TargetStats {
            pbf: FeatureStat::IDENTITY,
            smm: FeatureStat::IDENTITY,
        }
    }
}

impl TargetStats {
    pub fn from_samples(samples: &[PreprocessedSample]) -> Result<Self> {
        Ok(TargetStats {
            pbf: FeatureStat::of(samples.iter().map(|s| s.targets.pbf))?,
            smm: FeatureStat::of(samples.iter().map(|s| s.targets.smm))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub pbf: f64,
    pub smm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { pbf: 1.0, smm: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.pbf < 0.0 || self.smm < 0.0 || !(self.pbf + self.smm > 0.0) {
            return Err(Error::invalid(format!(
                "task loss weights must be non-negative with a positive sum, got ({}, {})",
                self.pbf, self.smm
            )));
        }
        Ok(())
    }
}

/// De-standardised prediction for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub pbf: f64,
    pub smm: f64,
}

/// Squared error in standardised units, weighted per task.
pub fn loss(pred: Prediction, target: Prediction, weights: LossWeights, stats: &TargetStats) -> f64 {
    let ep = stats.pbf.z(pred.pbf) - stats.pbf.z(target.pbf);
    let es = stats.smm.z(pred.smm) - stats.smm.z(target.smm);
    weights.pbf * ep * ep + weights.smm * es * es
}

#[derive(Debug, Clone)]
struct Network {
    branches: Vec<Stack>,
    structured: Stack,
    trunk: Stack,
    heads: Vec<Stack>,
}

struct ParamBuilder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    fan_in: Vec<usize>,
}

impl ParamBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.fan_in.push(fan_in);
        self.names.len() - 1
    }

    fn dense_stack(&mut self, prefix: &str, inp: usize, widths: &[usize], relu_last: bool) -> Stack {
        let mut ops = Vec::new();
        let mut labels = Vec::new();
        let mut cur = inp;
        for (i, &wd) in widths.iter().enumerate() {
            let label = format!("{prefix}.dense{i}");
            let weight = self.add(format!("{label}.weight"), vec![wd, cur], cur);
            let bias = self.add(format!("{label}.bias"), vec![wd], 0);
            ops.push(Op::Dense {
                weight,
                bias,
                inp: cur,
                out: wd,
            });
            labels.push(label.clone());
            if i + 1 < widths.len() || relu_last {
                ops.push(Op::Relu);
                labels.push(format!("{label}.relu"));
            }
            cur = wd;
        }
        Stack {
            ops,
            labels,
            out_len: cur,
        }
    }

    fn image_stack(&mut self, prefix: &str, arch: &ArchitectureSpec) -> Stack {
        let mut ops = Vec::new();
        let mut labels = Vec::new();
        let (mut c, mut side) = (1usize, arch.image_side);
        let mut n_conv = 0usize;
        let mut n_pool = 0;
        for layer in &arch.image_branch {
            match *layer {
                LayerSpec::Conv {
                    channels, kernel, ..
                } => {
                    let label = format!("{prefix}.conv{n_conv}");
                    let fan_in = c * kernel * kernel;
                    let weight = self.add(
                        format!("{label}.weight"),
                        vec![channels, c, kernel, kernel],
                        fan_in,
                    );
                    let bias = self.add(format!("{label}.bias"), vec![channels], 0);
                    ops.push(Op::Conv {
                        weight,
                        bias,
                        in_c: c,
                        out_c: channels,
                        k: kernel,
                        h: side,
                        w: side,
                    });
                    labels.push(label);
                    c = channels;
                    n_conv += 1;
                }
                LayerSpec::Relu => {
                    ops.push(Op::Relu);
                    labels.push(format!("{prefix}.relu{}", n_conv.saturating_sub(1)));
                }
                LayerSpec::MaxPool { size, .. } => {
                    ops.push(Op::MaxPool {
                        size,
                        c,
                        h: side,
                        w: side,
                    });
                    labels.push(format!("{prefix}.pool{n_pool}"));
                    side /= size;
                    n_pool += 1;
                }
                LayerSpec::GlobalAvgPool => {
                    ops.push(Op::GlobalAvgPool { c, hw: side * side });
                    labels.push(format!("{prefix}.gap"));
                }
            }
        }
        Stack {
            ops,
            labels,
            out_len: c,
        }
    }
}

fn compile(arch: &ArchitectureSpec) -> Result<(Network, ParamBuilder)> {
    arch.validate()?;
    let mut pb = ParamBuilder {
        names: Vec::new(),
        shapes: Vec::new(),
        fan_in: Vec::new(),
    };
    let branches = IMAGE_BRANCHES
        .iter()
        .map(|b| pb.image_stack(b, arch))
        .collect();
    let structured = pb.dense_stack("structured", arch.structured_inputs, &arch.structured_widths, false);
    let trunk = pb.dense_stack("trunk", arch.concat_width()?, &arch.trunk_widths, true);
    let trunk_out = trunk.out_len;
    let heads = TASKS
        .iter()
        .map(|t| {
            let mut widths = arch.head_widths.clone();
            widths.push(1);
            pb.dense_stack(&format!("{t}_head"), trunk_out, &widths, false)
        })
        .collect();
    Ok((
        Network {
            branches,
            structured,
            trunk,
            heads,
        },
        pb,
    ))
}

/// Trainable parameters plus everything needed to turn a subject record
/// into a prediction.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub architecture: ArchitectureSpec,
    pub preprocess: PreprocessConfig,
    pub norm_stats: NormStats,
    pub target_stats: TargetStats,
    names: Vec<String>,
    params: Vec<Tensor>,
    net: Network,
}

/// Flattened network inputs for one sample, pixels scaled to [0, 1].
#[derive(Debug, Clone)]
pub struct NetInputs {
    pub images: [Vec<f64>; 5],
    pub structured: Vec<f64>,
}

struct ForwardCache {
    branches: Vec<StackCache>,
    structured: StackCache,
    trunk: StackCache,
    heads: Vec<StackCache>,
}

/// He-uniform weights (variance 2 / fan_in), zero biases.
pub fn init_model(arch: &ArchitectureSpec, seed: u64) -> Result<NetworkModel> {
    let (net, pb) = compile(arch)?;
    let params = pb
        .shapes
        .iter()
        .zip(&pb.fan_in)
        .enumerate()
        .map(|(i, (shape, &fan_in))| {
            let mut t = Tensor::zeros(shape.clone());
            if fan_in > 0 {
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut r = rng::substream(seed, &[i as u64]);
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = r.gen_range(-bound..bound));
            }
            t
        })
        .collect();
    let chin_degree = arch.structured_inputs.checked_sub(5).filter(|d| *d >= 1).unwrap_or(2);
    Ok(NetworkModel {
        architecture: arch.clone(),
        preprocess: PreprocessConfig {
            image_side: arch.image_side,
            chin_degree,
            ..PreprocessConfig::default()
        },
        norm_stats: NormStats::IDENTITY,
        target_stats: TargetStats::default(),
        names: pb.names,
        params,
        net,
    })
}

impl NetworkModel {
    pub(crate) fn from_parts(
        architecture: ArchitectureSpec,
        preprocess: PreprocessConfig,
        norm_stats: NormStats,
        target_stats: TargetStats,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let (net, pb) = compile(&architecture)?;
        if tensors.len() != pb.names.len() {
            return Err(Error::format(
                "model parameters",
                format!("expected {} tensors, found {}", pb.names.len(), tensors.len()),
            ));
        }
        for ((name, t), (want, shape)) in tensors.iter().zip(pb.names.iter().zip(&pb.shapes)) {
            if name != want || t.shape() != shape.as_slice() {
                return Err(Error::format(
                    "model parameters",
                    format!("found {name} {:?}, expected {want} {shape:?}", t.shape()),
                ));
            }
        }
        if !(target_stats.pbf.sd > 0.0 && target_stats.smm.sd > 0.0) {
            return Err(Error::format("target_stats", "standard deviations must be positive"));
        }
        let (names, params) = tensors.into_iter().unzip();
        Ok(NetworkModel {
            architecture,
            preprocess,
            norm_stats,
            target_stats,
            names,
            params,
            net,
        })
    }

    pub fn with_stats(mut self, norm: NormStats, target: TargetStats) -> Self {
        self.norm_stats = norm;
        self.target_stats = target;
        self
    }

    pub fn with_preprocess(mut self, cfg: PreprocessConfig) -> Result<Self> {
        if cfg.image_side != self.architecture.image_side
            || cfg.structured_len() != self.architecture.structured_inputs
        {
            return Err(Error::invalid(format!(
                "preprocessing (side {}, {} structured features) does not match the architecture (side {}, {} inputs)",
                cfg.image_side,
                cfg.structured_len(),
                self.architecture.image_side,
                self.architecture.structured_inputs
            )));
        }
        self.preprocess = cfg;
        Ok(self)
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.names
    }

    pub fn parameters(&self) -> &[Tensor] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn named_parameters(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect()
    }

    pub fn inputs(&self, sample: &PreprocessedSample) -> Result<NetInputs> {
        let side = self.architecture.image_side;
        let mut images: [Vec<f64>; 5] = Default::default();
        for ((dst, img), name) in images.iter_mut().zip(sample.images()).zip(IMAGE_BRANCHES) {
            if img.width() != side || img.height() != side || img.channels() != 1 {
                return Err(Error::Shape {
                    branch: name.into(),
                    message: format!(
                        "expected {side}x{side} grayscale, got {}x{}x{}",
                        img.width(),
                        img.height(),
                        img.channels()
                    ),
                });
            }
            *dst = img.pixels().iter().map(|&p| p as f64 / 255.0).collect();
        }
        if sample.structured.len() != self.architecture.structured_inputs {
            return Err(Error::Shape {
                branch: "structured".into(),
                message: format!(
                    "expected {} features, got {}",
                    self.architecture.structured_inputs,
                    sample.structured.len()
                ),
            });
        }
        Ok(NetInputs {
            images,
            structured: sample.structured.clone(),
        })
    }

    fn embed(&self, inputs: &NetInputs) -> Result<Vec<f64>> {
        let mut emb = Vec::new();
        for (stack, img) in self.net.branches.iter().zip(&inputs.images) {
            emb.extend(stack.infer(&self.params, img.clone())?);
        }
        emb.extend(self.net.structured.infer(&self.params, inputs.structured.clone())?);
        Ok(emb)
    }

    /// Standardised outputs `(z_pbf, z_smm)`.
    pub fn forward_standardized(&self, inputs: &NetInputs) -> Result<[f64; 2]> {
        let t = self.net.trunk.infer(&self.params, self.embed(inputs)?)?;
        let zp = self.net.heads[0].infer(&self.params, t.clone())?[0];
        let zs = self.net.heads[1].infer(&self.params, t)?[0];
        Ok([zp, zs])
    }

    fn destandardize(&self, z: [f64; 2]) -> Prediction {
        Prediction {
            pbf: self.target_stats.pbf.mean + self.target_stats.pbf.sd * z[0],
            smm: self.target_stats.smm.mean + self.target_stats.smm.sd * z[1],
        }
    }

    pub fn forward(&self, sample: &PreprocessedSample) -> Result<Prediction> {
        Ok(self.destandardize(self.forward_standardized(&self.inputs(sample)?)?))
    }

    pub fn predict_batch(&self, samples: &[PreprocessedSample]) -> Result<Vec<Prediction>> {
        samples.par_iter().map(|s| self.forward(s)).collect()
    }

    fn forward_cached(&self, inputs: &NetInputs) -> Result<(ForwardCache, [f64; 2])> {
        let mut emb = Vec::new();
        let mut branches = Vec::with_capacity(5);
        for (stack, img) in self.net.branches.iter().zip(&inputs.images) {
            let (out, cache) = stack.forward(&self.params, img.clone())?;
            emb.extend(out);
            branches.push(cache);
        }
        let (s_out, structured) = self.net.structured.forward(&self.params, inputs.structured.clone())?;
        emb.extend(s_out);
        let (t, trunk) = self.net.trunk.forward(&self.params, emb)?;
        let (zp, hp) = self.net.heads[0].forward(&self.params, t.clone())?;
        let (zs, hs) = self.net.heads[1].forward(&self.params, t)?;
        Ok((
            ForwardCache {
                branches,
                structured,
                trunk,
                heads: vec![hp, hs],
            },
            [zp[0], zs[0]],
        ))
    }

    /// Loss of one sample and its gradient, with the loss scaled by `scale`.
    fn sample_gradient(
        &self,
        sample: &PreprocessedSample,
        weights: LossWeights,
        scale: f64,
    ) -> Result<(f64, Vec<Tensor>, [f64; 2])> {
        let inputs = self.inputs(sample)?;
        let (cache, z) = self.forward_cached(&inputs)?;
        let tp = self.target_stats.pbf.z(sample.targets.pbf);
        let ts = self.target_stats.smm.z(sample.targets.smm);
        let (ep, es) = (z[0] - tp, z[1] - ts);
        let l = weights.pbf * ep * ep + weights.smm * es * es;

        let mut grads = self.zero_grads();
        let p = &self.params;
        let mut dt = vec![0.0; self.net.trunk.out_len];
        for (head, (cache, dz)) in self.net.heads.iter().zip(
            cache
                .heads
                .iter()
                .zip([2.0 * weights.pbf * ep * scale, 2.0 * weights.smm * es * scale]),
        ) {
            let d = head.backward(p, &mut grads, cache, vec![dz], true)?.expect("input grad requested");
            dt.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        let demb = self.net.trunk.backward(p, &mut grads, &cache.trunk, dt, true)?.expect("input grad requested");
        let mut offset = 0;
        for (stack, c) in self.net.branches.iter().zip(&cache.branches) {
            let d = demb[offset..offset + stack.out_len].to_vec();
            stack.backward(p, &mut grads, c, d, false)?;
            offset += stack.out_len;
        }
        let d = demb[offset..].to_vec();
        self.net.structured.backward(p, &mut grads, &cache.structured, d, false)?;
        Ok((l, grads, z))
    }

    /// Mean batch loss and its exact gradient. Per-sample gradients are
    /// computed in parallel and reduced in sample order.
    pub fn backward(&self, batch: &[PreprocessedSample], weights: LossWeights) -> Result<(f64, Vec<Tensor>)> {
        let (loss, grads, _) = self.backward_with_predictions(batch, weights)?;
        Ok((loss, grads))
    }

    /// As [`backward`](Self::backward), also returning the de-standardised
    /// predictions made along the way.
    pub fn backward_with_predictions(
        &self,
        batch: &[PreprocessedSample],
        weights: LossWeights,
    ) -> Result<(f64, Vec<Tensor>, Vec<Prediction>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let parts: Vec<(f64, Vec<Tensor>, [f64; 2])> = batch
            .par_iter()
            .map(|s| self.sample_gradient(s, weights, scale))
            .collect::<Result<_>>()?;
        let mut total = self.zero_grads();
        let mut loss_sum = 0.0;
        let mut preds = Vec::with_capacity(batch.len());
        for (l, g, z) in parts {
            loss_sum += l;
            for (t, gi) in total.iter_mut().zip(&g) {
                t.add_assign(gi);
            }
            preds.push(self.destandardize(z));
        }
        Ok((loss_sum * scale, total, preds))
    }

    /// Mean loss over `samples` without gradients.
    pub fn batch_loss(&self, samples: &[PreprocessedSample], weights: LossWeights) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let losses: Vec<f64> = samples
            .par_iter()
            .map(|s| {
                let z = self.forward_standardized(&self.inputs(s)?)?;
                let ep = z[0] - self.target_stats.pbf.z(s.targets.pbf);
                let es = z[1] - self.target_stats.smm.z(s.targets.smm);
                Ok(weights.pbf * ep * ep + weights.smm * es * es)
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / samples.len() as f64)
    }
}
