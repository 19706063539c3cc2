//! The attention-based changeset classifier.
//!
//! Changeset and user vectors are refined by FC+ReLU layers, fused through a
//! normalized FC, and used as the attention query over the refined edit
//! rows; the aggregated edit vector is refined again, concatenated with the
//! fused vector, and pushed through `n_pred` normalized prediction blocks
//! into a sigmoid. Changesets with no edits, more than `th_e_max` edits, or
//! zero-flagged history contribute a zero edit vector instead.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureBundle, NormStats, D_EDIT, D_USER};
use crate::miner::Label;
use crate::nn::{
    adam_step, bce_loss, dropout, fc, kaiming_uniform, l2_penalty, multi_head, xavier_uniform,
    Activation, AdamState, HeadNodes, Mode, NnError, NodeId, Parameter, Tape, Tensor,
};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OVIDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    ConfigViolation(String),
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint i/o failure: {0}")]
    Io(String),
    #[error("checkpoint format version mismatch: expected {CHECKPOINT_VERSION}, found {found}")]
    FormatVersionMismatch { found: u32 },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("reference prediction mismatch at batch index {index}")]
    ReferencePredictionMismatch { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvidConfig {
    /// Edit-branch cap: above this many edits the edit vector is zeroed.
    pub th_e_max: usize,
    pub n_pred: usize,
    pub n_head: usize,
    pub d_h: usize,
    pub dropout: f64,
    /// L2 regularization weight over weight matrices.
    pub lambda: f64,
    pub th_class: f64,
    pub use_changeset: bool,
    pub use_user: bool,
    pub use_edits: bool,
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for OvidConfig {
    fn default() -> Self {
        OvidConfig {
            th_e_max: 20,
            n_pred: 2,
            n_head: 5,
            d_h: 24,
            dropout: 0.5,
            lambda: 0.01,
            th_class: 0.5,
            use_changeset: true,
            use_user: true,
            use_edits: true,
            seed: 0,
            batch_size: 64,
            learning_rate: 1e-3,
            patience: 10,
            max_epochs: 100,
        }
    }
}

impl OvidConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.use_changeset && !self.use_user {
            return Err(ModelError::ConfigViolation(
                "edit aggregation needs at least one of the changeset or user branches".into(),
            ));
        }
        if self.d_h == 0 || self.n_pred == 0 || self.n_head == 0 || self.th_e_max == 0 {
            return Err(ModelError::ConfigViolation(
                "d_h, n_pred, n_head, and th_e_max must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::ConfigViolation(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(0.0..=1.0).contains(&self.th_class) {
            return Err(ModelError::ConfigViolation(format!(
                "classification threshold {} outside [0, 1]",
                self.th_class
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    NoChangeset,
    NoUser,
    NoEdits,
    NoChangesetEdits,
    NoUserEdits,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::NoChangeset,
        AblationVariant::NoUser,
        AblationVariant::NoEdits,
        AblationVariant::NoChangesetEdits,
        AblationVariant::NoUserEdits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::NoChangeset => "-Changeset",
            AblationVariant::NoUser => "-User",
            AblationVariant::NoEdits => "-Edits",
            AblationVariant::NoChangesetEdits => "-Changeset&Edits",
            AblationVariant::NoUserEdits => "-User&Edits",
        }
    }

    /// Accepts the canonical "-User" form, with or without the leading dash.
    pub fn parse(s: &str) -> Option<Self> {
        let wanted = s.trim().trim_start_matches('-');
        Self::ALL
            .into_iter()
            .find(|v| v.name()[1..].eq_ignore_ascii_case(wanted))
    }
}

/// Clears the feature branches removed by the variant; rejects combinations
/// that would leave the attention query without both source branches.
pub fn ablate(config: &OvidConfig, variant: AblationVariant) -> Result<OvidConfig, ModelError> {
    let mut out = config.clone();
    match variant {
        AblationVariant::NoChangeset => out.use_changeset = false,
        AblationVariant::NoUser => out.use_user = false,
        AblationVariant::NoEdits => out.use_edits = false,
        AblationVariant::NoChangesetEdits => {
            out.use_changeset = false;
            out.use_edits = false;
        }
        AblationVariant::NoUserEdits => {
            out.use_user = false;
            out.use_edits = false;
        }
    }
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub d_changeset: usize,
    pub d_user: usize,
    pub d_edit: usize,
}

impl FeatureDims {
    pub fn standard(d_changeset: usize) -> Self {
        FeatureDims {
            d_changeset,
            d_user: D_USER,
            d_edit: D_EDIT,
        }
    }
}

/// All learnable parameters, in a stable named order.
#[derive(Debug, Clone)]
pub struct OvidParams {
    pub dims: FeatureDims,
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl OvidParams {
    pub fn init(config: &OvidConfig, dims: FeatureDims) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d_h = config.d_h;
        let mut params = Vec::new();

        let fc_layer =
            |params: &mut Vec<Parameter>, name: &str, d_in: usize, rng: &mut ChaCha8Rng| {
                params.push(Parameter::new(
                    format!("{name}.w"),
                    kaiming_uniform(d_in, d_h, rng),
                    true,
                ));
                params.push(Parameter::new(
                    format!("{name}.b"),
                    Tensor::zeros(1, d_h),
                    false,
                ));
            };
        let norm_layer = |params: &mut Vec<Parameter>, name: &str| {
            params.push(Parameter::new(
                format!("{name}.norm.gain"),
                Tensor::row(vec![1.0; d_h]),
                false,
            ));
            params.push(Parameter::new(
                format!("{name}.norm.bias"),
                Tensor::zeros(1, d_h),
                false,
            ));
        };

        if config.use_changeset {
            fc_layer(&mut params, "changeset", dims.d_changeset, &mut rng);
        }
        if config.use_user {
            fc_layer(&mut params, "user", dims.d_user, &mut rng);
        }
        let n_active = config.use_changeset as usize + config.use_user as usize;
        fc_layer(&mut params, "fusion", n_active * d_h, &mut rng);
        norm_layer(&mut params, "fusion");

        if config.use_edits {
            fc_layer(&mut params, "edit", dims.d_edit, &mut rng);
            for i in 0..config.n_head {
                for which in ["wq", "wk", "wv"] {
                    params.push(Parameter::new(
                        format!("attn.{i}.{which}"),
                        xavier_uniform(d_h, d_h, &mut rng),
                        true,
                    ));
                }
            }
            params.push(Parameter::new(
                "attn.out.w",
                xavier_uniform(config.n_head * d_h, d_h, &mut rng),
                true,
            ));
            fc_layer(&mut params, "edit_refine", d_h, &mut rng);
            norm_layer(&mut params, "edit_refine");
        }

        let pred_in = d_h * (1 + config.use_edits as usize);
        for i in 0..config.n_pred {
            let d_in = if i == 0 { pred_in } else { d_h };
            fc_layer(&mut params, &format!("pred.{i}"), d_in, &mut rng);
            norm_layer(&mut params, &format!("pred.{i}"));
        }
        params.push(Parameter::new(
            "out.w",
            xavier_uniform(d_h, 1, &mut rng),
            true,
        ));
        params.push(Parameter::new("out.b", Tensor::zeros(1, 1), false));

        let index = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        Ok(OvidParams {
            dims,
            params,
            index,
        })
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// The parameters registered as leaves on one tape.
pub struct ParamNodes {
    ids: Vec<NodeId>,
    index: HashMap<String, usize>,
    regularized: Vec<NodeId>,
}

impl ParamNodes {
    pub fn register(tape: &mut Tape, params: &OvidParams) -> Self {
        let ids: Vec<NodeId> = params
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect();
        let regularized = params
            .params
            .iter()
            .zip(&ids)
            .filter(|(p, _)| p.regularized)
            .map(|(_, id)| *id)
            .collect();
        ParamNodes {
            ids,
            index: params.index.clone(),
            regularized,
        }
    }

    fn get(&self, name: &str) -> NodeId {
        self.ids[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    /// Leaf ids in parameter order.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn regularized(&self) -> &[NodeId] {
        &self.regularized
    }

    /// Copies the leaf gradients back into the parameter store.
    pub fn harvest_grads(&self, tape: &Tape, params: &mut OvidParams) {
        for (p, id) in params.params.iter_mut().zip(&self.ids) {
            p.grad = tape.grad(*id).clone();
        }
    }
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected != found {
        return Err(ModelError::DimMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Builds the forward graph for one (normalized) bundle and returns the
/// sigmoid output node.
pub fn forward_graph<R: Rng>(
    tape: &mut Tape,
    nodes: &ParamNodes,
    bundle: &FeatureBundle,
    config: &OvidConfig,
    dims: FeatureDims,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId, ModelError> {
    config.validate()?;

    let fc_named = |tape: &mut Tape, name: &str, x: NodeId| -> Result<NodeId, NnError> {
        fc(
            tape,
            x,
            nodes.get(&format!("{name}.w")),
            nodes.get(&format!("{name}.b")),
            Activation::Relu,
        )
    };
    let norm_named = |tape: &mut Tape, name: &str, x: NodeId| -> Result<NodeId, NnError> {
        tape.layer_norm(
            x,
            nodes.get(&format!("{name}.norm.gain")),
            nodes.get(&format!("{name}.norm.bias")),
        )
    };

    // Refined changeset / user branches feeding the fusion layer.
    let mut branches = Vec::new();
    if config.use_changeset {
        check_dim("changeset vector", dims.d_changeset, bundle.x_c.len())?;
        let x_c = tape.leaf(Tensor::row(bundle.x_c.clone()));
        branches.push(fc_named(tape, "changeset", x_c)?);
    }
    if config.use_user {
        check_dim("user vector", dims.d_user, bundle.x_u.len())?;
        let x_u = tape.leaf(Tensor::row(bundle.x_u.clone()));
        branches.push(fc_named(tape, "user", x_u)?);
    }
    let concat = tape.concat_cols(&branches)?;
    let fused = fc_named(tape, "fusion", concat)?;
    let x_cu = norm_named(tape, "fusion", fused)?;

    // Edit aggregation; over-large, empty, or history-flagged changesets
    // fall back to a zero vector.
    let edit_vec = if config.use_edits {
        let n = bundle.m_e.len();
        let usable = n > 0 && n <= config.th_e_max && !bundle.flagged;
        if usable {
            for row in &bundle.m_e {
                check_dim("edit row", dims.d_edit, row.len())?;
            }
            let flat: Vec<f64> = bundle.m_e.iter().flatten().copied().collect();
            let m_e = tape.leaf(Tensor::from_vec(n, dims.d_edit, flat));
            let refined = fc_named(tape, "edit", m_e)?;
            let heads: Vec<HeadNodes> = (0..config.n_head)
                .map(|i| HeadNodes {
                    wq: nodes.get(&format!("attn.{i}.wq")),
                    wk: nodes.get(&format!("attn.{i}.wk")),
                    wv: nodes.get(&format!("attn.{i}.wv")),
                })
                .collect();
            let aggregated = multi_head(
                tape,
                x_cu,
                refined,
                refined,
                &heads,
                nodes.get("attn.out.w"),
            )?;
            let refined_agg = fc_named(tape, "edit_refine", aggregated)?;
            Some(norm_named(tape, "edit_refine", refined_agg)?)
        } else {
            Some(tape.leaf(Tensor::zeros(1, config.d_h)))
        }
    } else {
        None
    };

    let mut x_p = match edit_vec {
        Some(e) => tape.concat_cols(&[x_cu, e])?,
        None => x_cu,
    };
    for i in 0..config.n_pred {
        let name = format!("pred.{i}");
        let h = fc_named(tape, &name, x_p)?;
        let h = dropout(tape, h, config.dropout, mode, rng)?;
        x_p = norm_named(tape, &name, h)?;
    }
    let logit = fc(
        tape,
        x_p,
        nodes.get("out.w"),
        nodes.get("out.b"),
        Activation::None,
    )?;
    Ok(tape.sigmoid(logit))
}

/// Eval-mode prediction for one normalized bundle.
pub fn predict(
    params: &OvidParams,
    config: &OvidConfig,
    bundle: &FeatureBundle,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = forward_graph(
        &mut tape,
        &nodes,
        bundle,
        config,
        params.dims,
        Mode::Eval,
        &mut rng,
    )?;
    Ok(tape.value(y).item())
}

/// Vandalism iff the score strictly exceeds the threshold.
pub fn classify(y_pred: f64, th_class: f64) -> Label {
    if y_pred > th_class {
        Label::Vandalism
    } else {
        Label::Regular
    }
}

/// One normalized bundle with its 0/1 training target.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub bundle: FeatureBundle,
    pub target: f64,
}

impl TrainExample {
    pub fn new(bundle: FeatureBundle, label: Label) -> Self {
        TrainExample {
            bundle,
            target: match label {
                Label::Vandalism => 1.0,
                Label::Regular => 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

/// Mean eval-mode BCE over a set, without the regularization term.
pub fn mean_loss(
    params: &OvidParams,
    config: &OvidConfig,
    set: &[TrainExample],
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for ex in set {
        let p = crate::nn::clamp_pred(predict(params, config, &ex.bundle)?);
        total -= ex.target * p.ln() + (1.0 - ex.target) * (1.0 - p).ln();
    }
    Ok(total / set.len() as f64)
}

/// Minimizes mean BCE + lambda * L2 with ADAM over shuffled mini-batches,
/// early-stopping on validation loss and restoring the best parameters.
/// Identical (data, config) pairs give bit-identical results.
pub fn fit(
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    config: &OvidConfig,
    dims: FeatureDims,
) -> Result<(OvidParams, TrainingLog), ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptySplit("validation"));
    }

    let mut params = OvidParams::init(config, dims)?;
    let mut adam = AdamState::new(params.params(), config.learning_rate);
    // Init consumed the seed stream; training draws continue from a derived
    // stream so the two never overlap.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stale_epochs = 0usize;
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.max_epochs {
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let mut epoch_bce = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let nodes = ParamNodes::register(&mut tape, &params);
            let mut preds = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let ex = &train_set[i];
                preds.push(forward_graph(
                    &mut tape,
                    &nodes,
                    &ex.bundle,
                    config,
                    dims,
                    Mode::Train,
                    &mut rng,
                )?);
                targets.push(ex.target);
            }
            let data_loss = bce_loss(&mut tape, &preds, &targets)?;
            epoch_bce += tape.value(data_loss).item() * batch.len() as f64;
            let loss = if config.lambda > 0.0 {
                let reg = l2_penalty(&mut tape, nodes.regularized(), config.lambda)?;
                tape.add_n(&[data_loss, reg])?
            } else {
                data_loss
            };
            tape.backward(loss);
            nodes.harvest_grads(&tape, &mut params);
            adam_step(params.params_mut(), &mut adam);
        }

        let val_loss = mean_loss(&params, config, val_set)?;
        let improved = val_loss < best_val;
        if improved {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_bce / train_set.len() as f64,
            val_loss,
            improved,
        });
        log.stopped_epoch = epoch;
        if stale_epochs >= config.patience {
            break;
        }
    }
    log.best_epoch = best_epoch;
    Ok((best_params, log))
}

/// A frozen, self-validating model artifact.
#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub config: OvidConfig,
    pub stats: NormStats,
    pub dims: FeatureDims,
    pub editor_vocab_hash: String,
    pub params: OvidParams,
    pub reference_inputs: Vec<FeatureBundle>,
    pub reference_outputs: Vec<f64>,
}

impl ModelCheckpoint {
    /// Packages trained parameters with everything prediction needs, plus a
    /// seeded synthetic reference batch whose outputs loading re-verifies.
    pub fn assemble(
        config: OvidConfig,
        params: OvidParams,
        stats: NormStats,
        editor_vocab_hash: String,
    ) -> Result<Self, ModelError> {
        let dims = params.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xFEED_BA7C);
        let mut inputs = Vec::new();
        for i in 0..2 {
            let n_edits = (i + 1).min(config.th_e_max);
            let mut gen =
                |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
            inputs.push(FeatureBundle {
                changeset: i as u64,
                x_c: gen(dims.d_changeset),
                x_u: gen(dims.d_user),
                m_e: (0..n_edits).map(|_| gen(dims.d_edit)).collect(),
                flagged: false,
            });
        }
        let outputs = inputs
            .iter()
            .map(|b| predict(&params, &config, b))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(ModelCheckpoint {
            config,
            stats,
            dims,
            editor_vocab_hash,
            params,
            reference_inputs: inputs,
            reference_outputs: outputs,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    rows: usize,
    cols: usize,
    regularized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config: OvidConfig,
    stats: NormStats,
    dims: FeatureDims,
    editor_vocab_hash: String,
    init: String,
    params: Vec<ParamMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceSection {
    inputs: Vec<FeatureBundle>,
    /// Bit patterns of the expected outputs; reload must reproduce them to
    /// 0 ULP.
    output_bits: Vec<u64>,
}

pub fn save_checkpoint(cp: &ModelCheckpoint, path: &Path) -> Result<(), ModelError> {
    let mut body: Vec<u8> = Vec::new();
    body.extend_from_slice(CHECKPOINT_MAGIC);
    body.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

    let header = CheckpointHeader {
        config: cp.config.clone(),
        stats: cp.stats.clone(),
        dims: cp.dims,
        editor_vocab_hash: cp.editor_vocab_hash.clone(),
        init: "kaiming-uniform(fc)/xavier-uniform(projections), zero biases".into(),
        params: cp
            .params
            .params()
            .iter()
            .map(|p| ParamMeta {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                regularized: p.regularized,
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| ModelError::Io(e.to_string()))?;
    body.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    body.extend_from_slice(&header_bytes);

    let mut blob: Vec<u8> = Vec::new();
    for p in cp.params.params() {
        for v in p.value.values() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    body.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    body.extend_from_slice(&blob);

    let reference = ReferenceSection {
        inputs: cp.reference_inputs.clone(),
        output_bits: cp.reference_outputs.iter().map(|v| v.to_bits()).collect(),
    };
    let ref_bytes = serde_json::to_vec(&reference).map_err(|e| ModelError::Io(e.to_string()))?;
    body.extend_from_slice(&(ref_bytes.len() as u64).to_le_bytes());
    body.extend_from_slice(&ref_bytes);

    let checksum = Sha256::digest(&body);
    body.extend_from_slice(&checksum);

    std::fs::write(path, body).map_err(|e| ModelError::Io(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint, ModelError> {
    let data = std::fs::read(path).map_err(|e| ModelError::Io(e.to_string()))?;
    if data.len() < CHECKPOINT_MAGIC.len() + 4 + 32 {
        return Err(ModelError::Io("checkpoint file too short".into()));
    }
    let (body, checksum) = data.split_at(data.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(ModelError::ChecksumMismatch);
    }

    let mut cursor = std::io::Cursor::new(body);
    let mut magic = [0u8; 8];
    cursor
        .read_exact(&mut magic)
        .map_err(|e| ModelError::Io(e.to_string()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Io("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    cursor
        .read_exact(&mut word)
        .map_err(|e| ModelError::Io(e.to_string()))?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::FormatVersionMismatch { found: version });
    }

    let read_section = |cursor: &mut std::io::Cursor<&[u8]>| -> Result<Vec<u8>, ModelError> {
        let mut len_bytes = [0u8; 8];
        cursor
            .read_exact(&mut len_bytes)
            .map_err(|e| ModelError::Io(e.to_string()))?;
        let len = u64::from_le_bytes(len_bytes) as usize;
        let mut section = vec![0u8; len];
        cursor
            .read_exact(&mut section)
            .map_err(|e| ModelError::Io(e.to_string()))?;
        Ok(section)
    };

    let header: CheckpointHeader = serde_json::from_slice(&read_section(&mut cursor)?)
        .map_err(|e| ModelError::Io(format!("bad checkpoint header: {e}")))?;
    let blob = read_section(&mut cursor)?;
    let reference: ReferenceSection = serde_json::from_slice(&read_section(&mut cursor)?)
        .map_err(|e| ModelError::Io(format!("bad reference section: {e}")))?;

    let expected_blob: usize = header.params.iter().map(|m| m.rows * m.cols * 8).sum();
    if blob.len() != expected_blob {
        return Err(ModelError::Io(format!(
            "parameter blob length {} does not match manifest ({expected_blob})",
            blob.len()
        )));
    }
    let mut params = Vec::with_capacity(header.params.len());
    let mut offset = 0usize;
    for meta in &header.params {
        let count = meta.rows * meta.cols;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let mut v = [0u8; 8];
            v.copy_from_slice(&blob[offset..offset + 8]);
            values.push(f64::from_le_bytes(v));
            offset += 8;
        }
        params.push(Parameter::new(
            meta.name.clone(),
            Tensor::from_vec(meta.rows, meta.cols, values),
            meta.regularized,
        ));
    }
    let index = params
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.clone(), i))
        .collect();
    let params = OvidParams {
        dims: header.dims,
        params,
        index,
    };

    let cp = ModelCheckpoint {
        config: header.config,
        stats: header.stats,
        dims: header.dims,
        editor_vocab_hash: header.editor_vocab_hash,
        params,
        reference_inputs: reference.inputs,
        reference_outputs: reference
            .output_bits
            .iter()
            .map(|b| f64::from_bits(*b))
            .collect(),
    };

    for (index, (bundle, expected)) in cp
        .reference_inputs
        .iter()
        .zip(&cp.reference_outputs)
        .enumerate()
    {
        let got = predict(&cp.params, &cp.config, bundle)?;
        if got.to_bits() != expected.to_bits() {
            return Err(ModelError::ReferencePredictionMismatch { index });
        }
    }
    Ok(cp)
}
