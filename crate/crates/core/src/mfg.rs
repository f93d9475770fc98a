//! Motion field generator: an asymmetric autoencoder that predicts the
//! translational (unit inverse depth) and rotational motion fields from
//! optic flow.
//!
//! The encoder is a stack of conv+relu blocks whose receptive field grows
//! to cover the whole image, ending in a hidden layer of `M` nonnegative
//! activations. The decoder is a single linear map without bias: two
//! matrices of shape `(2*W*H) x M` whose columns are the translational and
//! rotational basis motion fields of the hidden neurons. Training combines
//! per-field L1 prediction losses, norm-ratio loss balancing and a
//! population-sparsity penalty on the hidden layer.
//!
//! Field vectors are flattened row-major, u before v per pixel.

use crate::egosolver::{recover_rotation, recover_translation, SolveError};
use crate::geometry::{
    rotational_field, translational_field, CameraModel, EgoMotion, FlowField,
};
use crate::gradnet::{
    adam_step, generalized_logistic, read_checkpoint, write_checkpoint, xavier_uniform,
    AdamParams, AdamState, CheckpointError, GradError, NodeId, Param, ParamSet, Tape,
};
use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Sharpness constants of the differentiable "is active" approximation.
pub const SPARSITY_Q: f64 = 25.0;
pub const SPARSITY_STEEPNESS: f64 = 10.0;

/// Hidden activations above this threshold count as active in logs.
pub const ACTIVE_THRESHOLD: f64 = 1e-6;

/// Norm-ratio denominators are floored here so zero fields produce large
/// but finite loss weights.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input flow is {got_w}x{got_h}, network expects {want_w}x{want_h}")]
    InputShape {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("neuron index {index} out of range for {hidden} hidden units")]
    NeuronOutOfRange { index: usize, hidden: usize },
    #[error("checkpoint does not describe a network: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// One conv+relu encoder block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderLayer {
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MfgConfig {
    pub width: usize,
    pub height: usize,
    /// Hidden layer size M; the last encoder layer must emit exactly this
    /// many channels at 1x1 spatial extent.
    pub hidden: usize,
    pub encoder: Vec<EncoderLayer>,
    /// Coefficient of the population-sparsity loss.
    pub sparsity_weight: f64,
    /// Input flow is divided by this before entering the encoder so typical
    /// magnitudes are O(1).
    pub input_scale: f64,
    /// Training-only clamp on the norm-ratio loss weights. Samples with a
    /// near-zero ground-truth field otherwise carry weights of 1e4 and
    /// beyond, and a single such sample distorts Adam's second-moment
    /// estimates for the next thousand steps. Reported losses and
    /// [`total_loss`] are not affected.
    pub weight_cap: f64,
    pub optimizer: AdamParams,
}

impl MfgConfig {
    /// Desk-scale default: 16x48 flow, M = 128, four conv blocks reducing
    /// the grid to 1x1.
    pub fn desk() -> Self {
        Self::auto(48, 16, 128)
    }

    /// Build a config for arbitrary grid sizes: stride-2 3x3 blocks while
    /// the grid allows, then one block spanning the remaining extent.
    pub fn auto(width: usize, height: usize, hidden: usize) -> Self {
        let mut encoder = Vec::new();
        let channel_plan = [16usize, 32, 64];
        let (mut h, mut w) = (height, width);
        for ch in channel_plan {
            if h < 4 || w < 4 || encoder.len() >= 3 {
                break;
            }
            encoder.push(EncoderLayer {
                out_channels: ch,
                kernel: (3, 3),
                stride: (2, 2),
                padding: (1, 1),
            });
            h = (h + 2 - 3) / 2 + 1;
            w = (w + 2 - 3) / 2 + 1;
        }
        encoder.push(EncoderLayer {
            out_channels: hidden,
            kernel: (h, w),
            stride: (1, 1),
            padding: (0, 0),
        });
        Self {
            width,
            height,
            hidden,
            encoder,
            // Desk-scale L1 losses are two orders of magnitude below
            // full-resolution ones, so the sparsity coefficient that
            // plays the same relative role is correspondingly smaller.
            sparsity_weight: 3.0,
            input_scale: 0.1,
            weight_cap: 1e3,
            optimizer: AdamParams {
                learning_rate: 2e-4,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
        }
    }

    /// Channel/spatial extents after each encoder layer; errors if any
    /// layer under-runs or the final output is not `hidden` scalars.
    pub fn infer_shapes(&self) -> Result<Vec<(usize, usize, usize)>, MfgError> {
        if self.hidden == 0 {
            return Err(MfgError::Config("hidden size must be at least 1".into()));
        }
        if self.encoder.is_empty() {
            return Err(MfgError::Config("encoder has no layers".into()));
        }
        if !(self.input_scale > 0.0) {
            return Err(MfgError::Config("input_scale must be positive".into()));
        }
        let mut shapes = Vec::new();
        let (mut h, mut w) = (self.height, self.width);
        for (i, layer) in self.encoder.iter().enumerate() {
            let (kh, kw) = layer.kernel;
            let (sh, sw) = layer.stride;
            let (ph, pw) = layer.padding;
            if sh == 0 || sw == 0 || kh == 0 || kw == 0 || layer.out_channels == 0 {
                return Err(MfgError::Config(format!("layer {i} has a zero extent")));
            }
            if h + 2 * ph < kh || w + 2 * pw < kw {
                return Err(MfgError::Config(format!(
                    "layer {i} kernel {kh}x{kw} exceeds its {h}x{w} input"
                )));
            }
            h = (h + 2 * ph - kh) / sh + 1;
            w = (w + 2 * pw - kw) / sw + 1;
            shapes.push((layer.out_channels, h, w));
        }
        let (c, h, w) = *shapes.last().unwrap();
        if c != self.hidden || h != 1 || w != 1 {
            return Err(MfgError::Config(format!(
                "encoder ends with {c}x{h}x{w}, expected {}x1x1",
                self.hidden
            )));
        }
        Ok(shapes)
    }

    pub fn field_len(&self) -> usize {
        2 * self.width * self.height
    }
}

/// Flatten a field row-major, u before v.
pub fn field_to_vec(field: &FlowField) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * field.len());
    for (_, _, v) in field.iter() {
        out.push(v.x);
        out.push(v.y);
    }
    out
}

/// Inverse of [`field_to_vec`].
pub fn vec_to_field(width: usize, height: usize, values: &[f64]) -> FlowField {
    assert_eq!(values.len(), 2 * width * height);
    FlowField::from_fn(width, height, |row, col| {
        let i = 2 * (row * width + col);
        Vector2::new(values[i], values[i + 1])
    })
}

/// Split a field into planar `[2, H, W]` tensor values (u plane, v plane).
fn field_to_planes(field: &FlowField, scale: f64) -> Vec<f64> {
    let n = field.len();
    let mut out = vec![0.0; 2 * n];
    for (i, (_, _, v)) in field.iter().enumerate() {
        out[i] = v.x / scale;
        out[n + i] = v.y / scale;
    }
    out
}

/// Network output for one input flow.
#[derive(Debug, Clone)]
pub struct MfgOutput {
    pub trans_field: FlowField,
    pub rot_field: FlowField,
    pub hidden: Vec<f64>,
}

/// One supervised training example.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub flow: FlowField,
    pub gt: EgoMotion,
}

/// Encoder parameters plus the two decoder basis matrices.
#[derive(Debug, Clone)]
pub struct MfgModel {
    config: MfgConfig,
    params: ParamSet,
}

const DEC_T: &str = "dec_t.weight";
const DEC_W: &str = "dec_w.weight";

impl MfgModel {
    /// Fresh model with Glorot-uniform weights and zero biases, drawn from
    /// a seeded generator in a fixed order.
    pub fn new_seeded(config: MfgConfig, seed: u64) -> Result<Self, MfgError> {
        config.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut in_ch = 2usize;
        for (i, layer) in config.encoder.iter().enumerate() {
            let (kh, kw) = layer.kernel;
            let out = layer.out_channels;
            let fan_in = in_ch * kh * kw;
            let fan_out = out * kh * kw;
            params.push(Param::new(
                format!("enc{i}.weight"),
                vec![out, in_ch, kh, kw],
                xavier_uniform(&mut rng, fan_in, fan_out, out * in_ch * kh * kw),
            ));
            // Mildly positive biases keep relu units alive early on; the
            // sparsity penalty prunes from a living population instead of
            // a dead one.
            params.push(Param::new(
                format!("enc{i}.bias"),
                vec![out],
                vec![0.1; out],
            ));
            in_ch = out;
        }
        let rows = config.field_len();
        // Decoder columns start as motion-field prototypes of random
        // forward-biased translations and yaw-biased rotations. A random
        // dense decoder makes "predict zero" the steepest descent
        // direction early in training, which silences the relu bottleneck
        // for good; prototype columns make hidden activity useful from
        // the first step.
        let cam = CameraModel::centered(config.width, config.height);
        let mut dec_t = vec![0.0; rows * config.hidden];
        let mut dec_w = vec![0.0; rows * config.hidden];
        for n in 0..config.hidden {
            let t = nalgebra::Vector3::new(
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.2..1.2),
            );
            let w = nalgebra::Vector3::new(
                rng.gen_range(-0.015..0.015),
                rng.gen_range(-0.06..0.06),
                rng.gen_range(-0.015..0.015),
            );
            let ft = field_to_vec(&translational_field(t, &cam));
            let fw = field_to_vec(&rotational_field(w, &cam));
            for r in 0..rows {
                dec_t[r * config.hidden + n] = ft[r];
                dec_w[r * config.hidden + n] = fw[r];
            }
        }
        params.push(Param::new(DEC_T, vec![rows, config.hidden], dec_t));
        params.push(Param::new(DEC_W, vec![rows, config.hidden], dec_w));
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &MfgConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check_input(&self, flow: &FlowField) -> Result<(), MfgError> {
        if flow.width() != self.config.width || flow.height() != self.config.height {
            return Err(MfgError::InputShape {
                want_w: self.config.width,
                want_h: self.config.height,
                got_w: flow.width(),
                got_h: flow.height(),
            });
        }
        Ok(())
    }

    /// Run the conv stack on a tape, returning the node of the hidden
    /// vector along with the leaf ids of all parameters in ParamSet order.
    fn build_encoder(
        &self,
        tape: &mut Tape,
        flow: &FlowField,
    ) -> Result<(NodeId, Vec<NodeId>), MfgError> {
        let input_values = field_to_planes(flow, self.config.input_scale);
        let mut x = tape.leaf(&[2, self.config.height, self.config.width], &input_values)?;
        let mut param_ids = Vec::with_capacity(self.params.len());
        for p in self.params.iter() {
            param_ids.push(tape.leaf(&p.shape, &p.values)?);
        }
        for (i, layer) in self.config.encoder.iter().enumerate() {
            let w = param_ids[2 * i];
            let b = param_ids[2 * i + 1];
            let c = tape.conv2d(x, w, Some(b), layer.stride, layer.padding)?;
            x = tape.relu(c);
        }
        let hidden = tape.reshape(x, &[self.config.hidden])?;
        Ok((hidden, param_ids))
    }

    /// Encoder followed by the plain linear decode. The hidden vector is
    /// nonnegative by construction.
    pub fn forward(&self, flow: &FlowField) -> Result<MfgOutput, MfgError> {
        self.check_input(flow)?;
        let mut tape = Tape::new();
        let (hidden_id, _) = self.build_encoder(&mut tape, flow)?;
        let hidden = tape.value(hidden_id).to_vec();
        let (trans_field, rot_field) = self.decode_hidden(&hidden);
        Ok(MfgOutput {
            trans_field,
            rot_field,
            hidden,
        })
    }

    /// Forward pass with only the top `keep_percent`% of hidden
    /// activations retained before decoding.
    pub fn forward_masked(
        &self,
        flow: &FlowField,
        keep_percent: f64,
    ) -> Result<MfgOutput, MfgError> {
        self.check_input(flow)?;
        let mut tape = Tape::new();
        let (hidden_id, _) = self.build_encoder(&mut tape, flow)?;
        let hidden = topk_mask(tape.value(hidden_id), keep_percent);
        let (trans_field, rot_field) = self.decode_hidden(&hidden);
        Ok(MfgOutput {
            trans_field,
            rot_field,
            hidden,
        })
    }

    /// Linear decode of an arbitrary hidden vector through both basis
    /// matrices. Masking then decoding equals decoding the masked vector;
    /// there is no nonlinearity past the hidden layer.
    pub fn decode_hidden(&self, hidden: &[f64]) -> (FlowField, FlowField) {
        assert_eq!(hidden.len(), self.config.hidden);
        let rows = self.config.field_len();
        let decode = |name: &str| {
            let w = &self.params.get(name).unwrap().values;
            let mut out = vec![0.0; rows];
            for (r, slot) in out.iter_mut().enumerate() {
                let base = r * hidden.len();
                let mut acc = 0.0;
                for (j, h) in hidden.iter().enumerate() {
                    acc += w[base + j] * h;
                }
                *slot = acc;
            }
            vec_to_field(self.config.width, self.config.height, &out)
        };
        (decode(DEC_T), decode(DEC_W))
    }

    /// Basis motion fields of one hidden neuron: column `neuron` of the
    /// two decoder matrices, reshaped to fields.
    pub fn decode_basis(&self, neuron: usize) -> Result<(FlowField, FlowField), MfgError> {
        if neuron >= self.config.hidden {
            return Err(MfgError::NeuronOutOfRange {
                index: neuron,
                hidden: self.config.hidden,
            });
        }
        let mut one_hot = vec![0.0; self.config.hidden];
        one_hot[neuron] = 1.0;
        Ok(self.decode_hidden(&one_hot))
    }

    /// Fields to 6DoF parameters: least-squares recovery on the predicted
    /// partial fields, optionally through a top-k mask.
    pub fn predict_egomotion(
        &self,
        flow: &FlowField,
        keep_percent: Option<f64>,
        cam: &CameraModel,
    ) -> Result<EgoMotion, MfgError> {
        let out = match keep_percent {
            Some(k) => self.forward_masked(flow, k)?,
            None => self.forward(flow)?,
        };
        let t = recover_translation(&out.trans_field, cam)?;
        let w = recover_rotation(&out.rot_field, cam)?;
        Ok(EgoMotion::new(t, w))
    }
}

/// L1 prediction errors over both components and all pixels.
pub fn prediction_losses(
    pred_t: &FlowField,
    pred_w: &FlowField,
    target_t: &FlowField,
    target_w: &FlowField,
) -> (f64, f64) {
    let l1 = |a: &FlowField, b: &FlowField| -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x.x - y.x).abs() + (x.y - y.y).abs())
            .sum()
    };
    (l1(pred_t, target_t), l1(pred_w, target_w))
}

/// Norm-ratio balancing weights. Whichever ground-truth field is weaker
/// gets its loss scaled up by the squared-norm ratio; the other weight
/// stays at 1.
pub fn loss_weights(target_t: &FlowField, target_w: &FlowField) -> (f64, f64) {
    let nt = target_t.norm_squared().max(NORM_FLOOR);
    let nw = target_w.norm_squared().max(NORM_FLOOR);
    ((nw / nt).max(1.0), (nt / nw).max(1.0))
}

/// Population sparsity: differentiable count of active hidden neurons.
pub fn sparsity_loss(hidden: &[f64]) -> f64 {
    hidden
        .iter()
        .map(|h| generalized_logistic(*h, SPARSITY_Q, SPARSITY_STEEPNESS))
        .sum()
}

/// Keep the `ceil(keep_percent * M / 100)` largest activations (ties keep
/// the lower index), zero the rest.
pub fn topk_mask(hidden: &[f64], keep_percent: f64) -> Vec<f64> {
    assert!(
        keep_percent > 0.0 && keep_percent <= 100.0,
        "keep_percent must be in (0, 100]"
    );
    let m = hidden.len();
    let keep = ((keep_percent * m as f64) / 100.0).ceil() as usize;
    if keep >= m {
        return hidden.to_vec();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| hidden[b].total_cmp(&hidden[a]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    for &i in order.iter().take(keep) {
        out[i] = hidden[i];
    }
    out
}

struct SampleTargets {
    target_t_vec: Vec<f64>,
    target_w_vec: Vec<f64>,
    weight_t: f64,
    weight_w: f64,
    /// Both ground-truth fields identically zero; nothing to learn from.
    skip: bool,
}

fn build_targets(sample: &TrainSample, cam: &CameraModel, weight_cap: f64) -> SampleTargets {
    let target_t = translational_field(sample.gt.translation, cam);
    let target_w = rotational_field(sample.gt.rotation, cam);
    let (weight_t, weight_w) = loss_weights(&target_t, &target_w);
    let skip = target_t.norm_squared() == 0.0 && target_w.norm_squared() == 0.0;
    SampleTargets {
        target_t_vec: field_to_vec(&target_t),
        target_w_vec: field_to_vec(&target_w),
        weight_t: weight_t.min(weight_cap),
        weight_w: weight_w.min(weight_cap),
        skip,
    }
}

struct LossNodes {
    total: NodeId,
    trans: NodeId,
    rot: NodeId,
    sparsity: NodeId,
    hidden: NodeId,
    param_ids: Vec<NodeId>,
}

fn build_loss_graph(
    model: &MfgModel,
    tape: &mut Tape,
    flow: &FlowField,
    targets: &SampleTargets,
) -> Result<LossNodes, MfgError> {
    let (hidden, param_ids) = model.build_encoder(tape, flow)?;
    let n_enc = 2 * model.config.encoder.len();
    let dec_t = param_ids[n_enc];
    let dec_w = param_ids[n_enc + 1];
    let pred_t = tape.linear(hidden, dec_t, None)?;
    let pred_w = tape.linear(hidden, dec_w, None)?;

    let field_shape = [model.config.field_len()];
    let tgt_t = tape.leaf(&field_shape, &targets.target_t_vec)?;
    let tgt_w = tape.leaf(&field_shape, &targets.target_w_vec)?;
    let trans = tape.l1_distance(pred_t, tgt_t)?;
    let rot = tape.l1_distance(pred_w, tgt_w)?;
    let squashed = tape.generalized_logistic(hidden, SPARSITY_Q, SPARSITY_STEEPNESS);
    let sparsity = tape.sum(squashed);

    let wt = tape.scale(trans, targets.weight_t);
    let ww = tape.scale(rot, targets.weight_w);
    let ws = tape.scale(sparsity, model.config.sparsity_weight);
    let partial = tape.add(wt, ww)?;
    let total = tape.add(partial, ws)?;
    Ok(LossNodes {
        total,
        trans,
        rot,
        sparsity,
        hidden,
        param_ids,
    })
}

/// Total training loss of the model on one sample:
/// `w_t L_t + w_w L_w + w_s L_s` with the weights computed from that
/// sample's ground-truth fields.
pub fn total_loss(
    model: &MfgModel,
    sample: &TrainSample,
    cam: &CameraModel,
) -> Result<f64, MfgError> {
    model.check_input(&sample.flow)?;
    let targets = build_targets(sample, cam, f64::INFINITY);
    let mut tape = Tape::new();
    let nodes = build_loss_graph(model, &mut tape, &sample.flow, &targets)?;
    Ok(tape.value_scalar(nodes.total))
}

/// Per-epoch training summary. Losses are raw (unweighted) means over the
/// samples visited in the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub trans_loss: f64,
    pub rot_loss: f64,
    pub sparsity_loss: f64,
    pub active_count: f64,
}

/// Fully stochastic training: one Adam step per sample, samples shuffled
/// each epoch by a generator seeded from `seed`. Deterministic: the same
/// model, data and seed give bit-identical parameters.
pub fn train(
    model: &mut MfgModel,
    samples: &[TrainSample],
    cam: &CameraModel,
    epochs: usize,
    seed: u64,
) -> Result<Vec<EpochStats>, MfgError> {
    if samples.is_empty() {
        return Err(MfgError::Config("training set is empty".into()));
    }
    for s in samples {
        model.check_input(&s.flow)?;
    }
    let targets: Vec<SampleTargets> = samples
        .iter()
        .map(|s| build_targets(s, cam, model.config.weight_cap))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = AdamState::new(&model.params, model.config.optimizer);
    let mut log = Vec::with_capacity(epochs);

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);

        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut visited = 0usize;
        for idx in order {
            let t = &targets[idx];
            if t.skip {
                continue;
            }
            let mut tape = Tape::new();
            let nodes = build_loss_graph(model, &mut tape, &samples[idx].flow, t)?;
            tape.backward(nodes.total)?;

            let hidden = tape.value(nodes.hidden);
            sums.0 += tape.value_scalar(nodes.trans);
            sums.1 += tape.value_scalar(nodes.rot);
            sums.2 += tape.value_scalar(nodes.sparsity);
            sums.3 += hidden.iter().filter(|h| **h > ACTIVE_THRESHOLD).count() as f64;
            visited += 1;

            let grads: Vec<Vec<f64>> = nodes
                .param_ids
                .iter()
                .map(|id| tape.grad(*id).to_vec())
                .collect();
            adam_step(&mut adam, &mut model.params, &grads);
        }

        let denom = visited.max(1) as f64;
        log.push(EpochStats {
            epoch,
            trans_loss: sums.0 / denom,
            rot_loss: sums.1 / denom,
            sparsity_loss: sums.2 / denom,
            active_count: sums.3 / denom,
        });
    }
    Ok(log)
}

/// Training log as CSV: `epoch,trans_loss,rot_loss,sparsity_loss,active_count`.
pub fn write_train_log_csv(
    mut w: impl std::io::Write,
    log: &[EpochStats],
) -> std::io::Result<()> {
    writeln!(w, "epoch,trans_loss,rot_loss,sparsity_loss,active_count")?;
    for row in log {
        writeln!(
            w,
            "{},{:.8e},{:.8e},{:.8e},{:.8e}",
            row.epoch, row.trans_loss, row.rot_loss, row.sparsity_loss, row.active_count
        )?;
    }
    Ok(())
}

// Reserved checkpoint entries carrying the architecture alongside the
// weights, so a checkpoint alone reconstructs the model.
const CFG_DIMS: &str = "config.dims";
const CFG_ENCODER: &str = "config.encoder";
const CFG_TRAIN: &str = "config.train";

/// Serialize config and parameters into the checkpoint container.
pub fn save_model(mut w: impl std::io::Write, model: &MfgModel) -> std::io::Result<()> {
    let cfg = &model.config;
    let mut all = ParamSet::new();
    all.push(Param::new(
        CFG_DIMS,
        vec![4],
        vec![
            cfg.height as f64,
            cfg.width as f64,
            cfg.hidden as f64,
            cfg.input_scale,
        ],
    ));
    let mut enc = Vec::with_capacity(cfg.encoder.len() * 7);
    for l in &cfg.encoder {
        enc.extend_from_slice(&[
            l.out_channels as f64,
            l.kernel.0 as f64,
            l.kernel.1 as f64,
            l.stride.0 as f64,
            l.stride.1 as f64,
            l.padding.0 as f64,
            l.padding.1 as f64,
        ]);
    }
    all.push(Param::new(CFG_ENCODER, vec![cfg.encoder.len(), 7], enc));
    all.push(Param::new(
        CFG_TRAIN,
        vec![6],
        vec![
            cfg.sparsity_weight,
            cfg.optimizer.learning_rate,
            cfg.optimizer.beta1,
            cfg.optimizer.beta2,
            cfg.optimizer.epsilon,
            cfg.weight_cap,
        ],
    ));
    for p in model.params.iter() {
        all.push(p.clone());
    }
    write_checkpoint(&mut w, &all)
}

fn as_dim(v: f64, what: &str) -> Result<usize, MfgError> {
    let rounded = v.round();
    if !(0.0..=1e9).contains(&rounded) || (v - rounded).abs() > 1e-9 {
        return Err(MfgError::BadCheckpoint(format!(
            "{what} holds a non-integral extent {v}"
        )));
    }
    Ok(rounded as usize)
}

/// Rebuild a model from a checkpoint written by [`save_model`].
pub fn load_model(r: impl std::io::Read) -> Result<MfgModel, MfgError> {
    let all = read_checkpoint(r)?;
    let dims = all
        .get(CFG_DIMS)
        .ok_or_else(|| MfgError::BadCheckpoint(format!("missing {CFG_DIMS}")))?;
    if dims.values.len() != 4 {
        return Err(MfgError::BadCheckpoint(format!(
            "{CFG_DIMS} must hold 4 values"
        )));
    }
    let enc = all
        .get(CFG_ENCODER)
        .ok_or_else(|| MfgError::BadCheckpoint(format!("missing {CFG_ENCODER}")))?;
    if enc.shape.len() != 2 || enc.shape[1] != 7 {
        return Err(MfgError::BadCheckpoint(format!(
            "{CFG_ENCODER} must be Lx7, got {:?}",
            enc.shape
        )));
    }
    let tr = all
        .get(CFG_TRAIN)
        .ok_or_else(|| MfgError::BadCheckpoint(format!("missing {CFG_TRAIN}")))?;
    if tr.values.len() != 6 {
        return Err(MfgError::BadCheckpoint(format!(
            "{CFG_TRAIN} must hold 6 values"
        )));
    }

    let mut encoder = Vec::with_capacity(enc.shape[0]);
    for row in enc.values.chunks_exact(7) {
        encoder.push(EncoderLayer {
            out_channels: as_dim(row[0], CFG_ENCODER)?,
            kernel: (as_dim(row[1], CFG_ENCODER)?, as_dim(row[2], CFG_ENCODER)?),
            stride: (as_dim(row[3], CFG_ENCODER)?, as_dim(row[4], CFG_ENCODER)?),
            padding: (as_dim(row[5], CFG_ENCODER)?, as_dim(row[6], CFG_ENCODER)?),
        });
    }
    let config = MfgConfig {
        height: as_dim(dims.values[0], CFG_DIMS)?,
        width: as_dim(dims.values[1], CFG_DIMS)?,
        hidden: as_dim(dims.values[2], CFG_DIMS)?,
        input_scale: dims.values[3],
        encoder,
        sparsity_weight: tr.values[0],
        weight_cap: tr.values[5],
        optimizer: AdamParams {
            learning_rate: tr.values[1],
            beta1: tr.values[2],
            beta2: tr.values[3],
            epsilon: tr.values[4],
        },
    };
    config.infer_shapes()?;

    // A reference model defines which weight entries must exist and their
    // shapes; values come from the file.
    let reference = MfgModel::new_seeded(config.clone(), 0)?;
    let mut params = ParamSet::new();
    for want in reference.params.iter() {
        let got = all
            .get(&want.name)
            .ok_or_else(|| MfgError::BadCheckpoint(format!("missing parameter {}", want.name)))?;
        if got.shape != want.shape {
            return Err(MfgError::BadCheckpoint(format!(
                "parameter {} has shape {:?}, expected {:?}",
                want.name, got.shape, want.shape
            )));
        }
        params.push(got.clone());
    }
    Ok(MfgModel { config, params })
}
