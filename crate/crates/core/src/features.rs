//! Feature extraction: one changeset vector, one user vector, and one
//! feature row per edit, plus dataset-level z-score normalization.
//!
//! Featurization is a pure function of (changeset, store): user counters see
//! only activity strictly before the changeset's commit time, and edit
//! history comes from the store's version index. Dimensions are fixed at
//! construction and asserted throughout.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::miner::{Label, SplitName};
use crate::osm::{Changeset, Edit, EditOp};
use crate::store::{ChangesetStore, UserHistories};

pub const D_USER: usize = 7;
pub const D_EDIT: usize = 15;
/// Number of non-editor changeset feature slots; d_c = this + vocab slots.
pub const D_CHANGESET_BASE: usize = 11;

/// 2004-01-01T00:00:00Z, the reference origin for account ages.
pub const OSM_EPOCH: i64 = 1_072_915_200;

pub const FEATURES_SCHEMA: &str = "ovid-features";
pub const FEATURES_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit normalization on an empty training set")]
    EmptyTrainingSet,
    #[error("feature file i/o failure at line {line}: {msg}")]
    Io { line: usize, msg: String },
    #[error("feature file schema mismatch: expected {FEATURES_SCHEMA} v{FEATURES_VERSION}, found {found}")]
    SchemaMismatch { found: String },
    #[error("feature dimension mismatch: expected {expected}, found {found} ({what})")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// The editor one-hot vocabulary: known prefixes plus a trailing "other"
/// slot that guarantees totality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditorVocab {
    prefixes: Vec<String>,
}

impl EditorVocab {
    pub fn bundled() -> Self {
        Self::from_lines(include_str!("../data/editor_vocab.txt"))
    }

    pub fn from_lines(text: &str) -> Self {
        let prefixes = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        EditorVocab { prefixes }
    }

    /// Total one-hot width, including the "other" slot.
    pub fn slots(&self) -> usize {
        self.prefixes.len() + 1
    }

    /// Longest-prefix match; misses and absent values land in "other".
    pub fn slot(&self, created_by: Option<&str>) -> usize {
        let other = self.prefixes.len();
        let Some(value) = created_by else {
            return other;
        };
        self.prefixes
            .iter()
            .enumerate()
            .filter(|(_, p)| value.starts_with(p.as_str()))
            .max_by_key(|(_, p)| p.len())
            .map(|(i, _)| i)
            .unwrap_or(other)
    }

    /// Content hash recorded in checkpoints to pin the feature layout.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.prefixes {
            hasher.update(p.as_bytes());
            hasher.update([0]);
        }
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The bundled map-features snapshot: a tag is valid when its exact
/// key-value pair is listed, or when its key is listed as free-form.
#[derive(Debug, Clone, Default)]
pub struct MapFeatures {
    free_keys: HashSet<String>,
    pairs: HashMap<String, HashSet<String>>,
}

impl MapFeatures {
    pub fn bundled() -> Self {
        Self::from_lines(include_str!("../data/map_features.txt"))
    }

    pub fn from_lines(text: &str) -> Self {
        let mut mf = MapFeatures::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    mf.pairs
                        .entry(k.to_string())
                        .or_default()
                        .insert(v.to_string());
                }
                None => {
                    mf.free_keys.insert(line.to_string());
                }
            }
        }
        mf
    }

    pub fn is_valid(&self, key: &str, value: &str) -> bool {
        self.free_keys.contains(key) || self.pairs.get(key).is_some_and(|vals| vals.contains(value))
    }

    pub fn count_valid(&self, tags: &BTreeMap<String, String>) -> usize {
        tags.iter().filter(|(k, v)| self.is_valid(k, v)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct FeaturizerConfig {
    /// The feature heading reads "no. top-12 keys used" while the body text
    /// counts addition events; the text reading is the default and this
    /// toggle selects the distinct-keys reading (capped at 12).
    pub top12_distinct: bool,
}

/// One edit's feature row plus the missing-history flag.
#[derive(Debug, Clone, PartialEq)]
pub struct EditFeatures {
    pub values: Vec<f64>,
    /// Set for modify/delete edits whose previous version is absent from the
    /// store; history-derived slots hold zeros then.
    pub missing_history: bool,
}

/// All features of one changeset, ready for the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub changeset: u64,
    pub x_c: Vec<f64>,
    pub x_u: Vec<f64>,
    /// One row per edit, in changeset order; each row has `D_EDIT` entries
    /// (the edit matrix stored row-major, edits conventionally being columns).
    pub m_e: Vec<Vec<f64>>,
    pub flagged: bool,
}

impl FeatureBundle {
    pub fn n_edits(&self) -> usize {
        self.m_e.len()
    }
}

pub struct Featurizer<'a> {
    store: &'a ChangesetStore,
    histories: UserHistories,
    vocab: EditorVocab,
    map_features: MapFeatures,
    config: FeaturizerConfig,
}

impl<'a> Featurizer<'a> {
    pub fn new(
        store: &'a ChangesetStore,
        vocab: EditorVocab,
        map_features: MapFeatures,
        config: FeaturizerConfig,
    ) -> Self {
        Featurizer {
            histories: store.build_user_histories(),
            store,
            vocab,
            map_features,
            config,
        }
    }

    pub fn with_defaults(store: &'a ChangesetStore) -> Self {
        Self::new(
            store,
            EditorVocab::bundled(),
            MapFeatures::bundled(),
            FeaturizerConfig::default(),
        )
    }

    pub fn d_changeset(&self) -> usize {
        D_CHANGESET_BASE + self.vocab.slots()
    }

    pub fn vocab(&self) -> &EditorVocab {
        &self.vocab
    }

    /// X_c: counts, geographic extent, editor one-hot, imagery flag,
    /// comment length.
    pub fn changeset_features(&self, cs: &Changeset) -> Vec<f64> {
        let (creates, mods, dels) = cs.count_ops();
        let mut out = Vec::with_capacity(self.d_changeset());
        out.push(creates as f64);
        out.push(mods as f64);
        out.push(dels as f64);
        out.push(cs.edits.len() as f64);
        match cs.bounding_box() {
            Some(b) => {
                out.push(b.min_lat);
                out.push(b.max_lat);
                out.push(b.min_lon);
                out.push(b.max_lon);
                out.push(b.size());
            }
            None => out.extend_from_slice(&[0.0; 5]),
        }
        let slot = self.vocab.slot(cs.created_by.as_deref());
        for i in 0..self.vocab.slots() {
            out.push(if i == slot { 1.0 } else { 0.0 });
        }
        let has_imagery = cs.imagery_used.as_deref().is_some_and(|s| !s.is_empty());
        out.push(if has_imagery { 1.0 } else { 0.0 });
        out.push(cs.comment.chars().count() as f64);
        debug_assert_eq!(out.len(), self.d_changeset());
        out
    }

    /// X_u: the author's activity strictly before the changeset time.
    pub fn user_features(&self, cs: &Changeset) -> Vec<f64> {
        let t = cs.t;
        let mut out = vec![0.0; D_USER];
        if let Some(h) = self.histories.get(cs.uid) {
            out[0] = h.past_creates(t) as f64;
            out[1] = h.past_modifications(t) as f64;
            out[2] = h.past_deletes(t) as f64;
            out[3] = h.contributions(t) as f64;
            out[4] = if self.config.top12_distinct {
                h.top12_distinct_keys(t) as f64
            } else {
                h.top12_addition_events(t) as f64
            };
            out[5] = match h.account_creation(t) {
                Some(ts) => ((ts - OSM_EPOCH) as f64 / 86_400.0).floor().max(0.0),
                None => 0.0,
            };
            out[6] = h.active_weeks(t) as f64;
        }
        out
    }

    /// X_e for one edit: type/op one-hots, version context, tag-diff counts,
    /// map-features validity, and the name-change flag.
    pub fn edit_features(&self, e: &Edit) -> EditFeatures {
        let mut out = vec![0.0; D_EDIT];
        out[e.object.kind.index()] = 1.0;
        out[3 + e.op.index()] = 1.0;
        out[6] = e.ver as f64;
        out[9] = e.object.tags.len() as f64;

        // The state after a delete has no tags; e.object holds the
        // pre-deletion state for features that need the prior tags.
        let empty = BTreeMap::new();
        let current: &BTreeMap<String, String> = match e.op {
            EditOp::Delete => &empty,
            _ => &e.object.tags,
        };
        out[12] = self.map_features.count_valid(current) as f64;

        let mut missing_history = false;
        match e.op {
            EditOp::Create => {
                // New object: zero time/author/prior slots by definition;
                // every tag counts as added.
                out[10] = e.object.tags.len() as f64;
            }
            EditOp::Modify | EditOp::Delete => {
                let (id, kind) = e.object.identity();
                match self.store.previous_version(id, kind, e.ver) {
                    Some(prev) => {
                        let authors: HashSet<u64> = self
                            .store
                            .version_history(id, kind)
                            .iter()
                            .filter(|v| v.ver < e.ver)
                            .map(|v| v.uid)
                            .collect();
                        out[7] = authors.len() as f64;
                        out[8] = (e.t - prev.t) as f64;
                        out[10] = current
                            .keys()
                            .filter(|k| !prev.tags.contains_key(*k))
                            .count() as f64;
                        out[11] = prev
                            .tags
                            .keys()
                            .filter(|k| !current.contains_key(*k))
                            .count() as f64;
                        out[13] = self.map_features.count_valid(&prev.tags) as f64;
                        let prev_name = prev.tags.get("name");
                        let cur_name = current.get("name");
                        if (prev_name.is_some() || cur_name.is_some()) && prev_name != cur_name {
                            out[14] = 1.0;
                        }
                    }
                    None => {
                        missing_history = true;
                    }
                }
            }
        }
        EditFeatures {
            values: out,
            missing_history,
        }
    }

    /// M_e: one feature row per edit in changeset order; empty for edit-less
    /// changesets. The flag is the OR of the per-edit missing-history flags.
    pub fn edit_matrix(&self, cs: &Changeset) -> (Vec<Vec<f64>>, bool) {
        let mut rows = Vec::with_capacity(cs.edits.len());
        let mut flagged = false;
        for e in &cs.edits {
            let f = self.edit_features(e);
            flagged |= f.missing_history;
            rows.push(f.values);
        }
        (rows, flagged)
    }

    pub fn bundle(&self, cs: &Changeset) -> FeatureBundle {
        let (m_e, flagged) = self.edit_matrix(cs);
        FeatureBundle {
            changeset: cs.id,
            x_c: self.changeset_features(cs),
            x_u: self.user_features(cs),
            m_e,
            flagged,
        }
    }
}

/// Per-dimension mean and standard deviation, fitted on the training split
/// only. Edit statistics are pooled over all edit rows of all training
/// changesets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub changeset_mean: Vec<f64>,
    pub changeset_std: Vec<f64>,
    pub user_mean: Vec<f64>,
    pub user_std: Vec<f64>,
    pub edit_mean: Vec<f64>,
    pub edit_std: Vec<f64>,
}

fn fit_dims(rows: impl Iterator<Item = Vec<f64>> + Clone, dims: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dims];
    let mut count = 0usize;
    for row in rows.clone() {
        for (m, x) in mean.iter_mut().zip(&row) {
            *m += x;
        }
        count += 1;
    }
    if count == 0 {
        return (mean, vec![0.0; dims]);
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; dims];
    for row in rows {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(&row) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|v| (v / count as f64).sqrt()).collect();
    (mean, std)
}

pub fn fit_norm(train: &[FeatureBundle]) -> Result<NormStats, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let d_c = train[0].x_c.len();
    let (changeset_mean, changeset_std) = fit_dims(train.iter().map(|b| b.x_c.clone()), d_c);
    let (user_mean, user_std) = fit_dims(train.iter().map(|b| b.x_u.clone()), D_USER);
    let edit_rows = train.iter().flat_map(|b| b.m_e.iter().cloned());
    let (edit_mean, edit_std) = fit_dims(edit_rows, D_EDIT);
    Ok(NormStats {
        changeset_mean,
        changeset_std,
        user_mean,
        user_std,
        edit_mean,
        edit_std,
    })
}

fn z_score(values: &mut [f64], mean: &[f64], std: &[f64]) {
    for ((x, m), s) in values.iter_mut().zip(mean).zip(std) {
        // Zero-variance dimensions pass through centered, i.e. become 0.
        *x = if *s == 0.0 { *x - m } else { (*x - m) / s };
    }
}

pub fn apply_norm(bundle: &FeatureBundle, stats: &NormStats) -> FeatureBundle {
    let mut out = bundle.clone();
    z_score(&mut out.x_c, &stats.changeset_mean, &stats.changeset_std);
    z_score(&mut out.x_u, &stats.user_mean, &stats.user_std);
    for row in &mut out.m_e {
        z_score(row, &stats.edit_mean, &stats.edit_std);
    }
    out
}

/// One line of the features file: a labeled, split-assigned raw bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub label: Label,
    pub user: u64,
    pub split: SplitName,
    #[serde(flatten)]
    pub bundle: FeatureBundle,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeaturesManifest {
    schema: String,
    version: u32,
    d_changeset: usize,
    d_user: usize,
    d_edit: usize,
    editor_vocab_hash: String,
    records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub d_changeset: usize,
    pub editor_vocab_hash: String,
    pub stats: NormStats,
    pub records: Vec<FeatureRecord>,
}

impl FeatureFile {
    pub fn part(&self, split: SplitName) -> Vec<&FeatureRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsLine {
    stats: NormStats,
}

/// Writes the manifest, the training-fitted statistics, then one raw record
/// per line.
pub fn write_features<W: Write>(mut w: W, file: &FeatureFile) -> Result<(), FeatureError> {
    let io_err = |e: std::io::Error| FeatureError::Io {
        line: 0,
        msg: e.to_string(),
    };
    let ser_err = |e: serde_json::Error| FeatureError::Io {
        line: 0,
        msg: e.to_string(),
    };
    let manifest = FeaturesManifest {
        schema: FEATURES_SCHEMA.into(),
        version: FEATURES_VERSION,
        d_changeset: file.d_changeset,
        d_user: D_USER,
        d_edit: D_EDIT,
        editor_vocab_hash: file.editor_vocab_hash.clone(),
        records: file.records.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&manifest).map_err(ser_err)?).map_err(io_err)?;
    let stats = StatsLine {
        stats: file.stats.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&stats).map_err(ser_err)?).map_err(io_err)?;
    for r in &file.records {
        writeln!(w, "{}", serde_json::to_string(r).map_err(ser_err)?).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_features<R: BufRead>(r: R) -> Result<FeatureFile, FeatureError> {
    let mut lines = r.lines().enumerate();
    let mut next_line = |expect: &'static str| -> Result<(usize, String), FeatureError> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(FeatureError::Io {
                line: i + 1,
                msg: e.to_string(),
            }),
            None => Err(FeatureError::Io {
                line: 0,
                msg: format!("missing {expect}"),
            }),
        }
    };

    let (_, manifest_line) = next_line("manifest line")?;
    let manifest: FeaturesManifest =
        serde_json::from_str(&manifest_line).map_err(|e| FeatureError::Io {
            line: 1,
            msg: e.to_string(),
        })?;
    if manifest.schema != FEATURES_SCHEMA || manifest.version != FEATURES_VERSION {
        return Err(FeatureError::SchemaMismatch {
            found: format!("{} v{}", manifest.schema, manifest.version),
        });
    }
    let (_, stats_line) = next_line("statistics line")?;
    let stats: StatsLine = serde_json::from_str(&stats_line).map_err(|e| FeatureError::Io {
        line: 2,
        msg: e.to_string(),
    })?;

    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| FeatureError::Io {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let record: FeatureRecord = serde_json::from_str(&line).map_err(|e| FeatureError::Io {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if record.bundle.x_c.len() != manifest.d_changeset {
            return Err(FeatureError::DimMismatch {
                what: "changeset vector",
                expected: manifest.d_changeset,
                found: record.bundle.x_c.len(),
            });
        }
        records.push(record);
    }
    Ok(FeatureFile {
        d_changeset: manifest.d_changeset,
        editor_vocab_hash: manifest.editor_vocab_hash,
        stats: stats.stats,
        records,
    })
}
