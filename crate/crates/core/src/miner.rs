//! Ground-truth extraction from vandalism-fixing reverts.
//!
//! The pipeline mirrors the OSM-Reverts construction: find reverts that
//! mention vandalism, attribute them to the vandalized changesets (explicit
//! id mentions first, then single-author deletions), sample an equal number
//! of regular changesets, and split the result so that no user's changesets
//! span two splits. Everything is deterministic given (store, seed).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::osm::{Changeset, EditOp, ObjectKind};
use crate::store::ChangesetStore;

pub const DATASET_SCHEMA: &str = "ovid-dataset";
pub const SPLIT_SCHEMA: &str = "ovid-split";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error(
        "population too small: {requested} negatives requested, {available} changesets eligible"
    )]
    InsufficientPopulation { requested: usize, available: usize },
    #[error("dataset i/o failure at line {line}: {msg}")]
    Io { line: usize, msg: String },
    #[error("dataset schema mismatch: expected {expected} v{FORMAT_VERSION}, found {found}")]
    SchemaMismatch {
        expected: &'static str,
        found: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Vandalism,
    Regular,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExplicitMention {
        revert: u64,
    },
    DeletionAttribution {
        revert: u64,
        object_id: u64,
        object_kind: ObjectKind,
    },
    NegativeSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub changeset: u64,
    pub label: Label,
    pub provenance: Provenance,
    pub user: u64,
}

/// Changesets whose comment mentions "vandalism", case-insensitively.
pub fn find_vandalism_reverts(store: &ChangesetStore) -> Vec<&Changeset> {
    store
        .changesets()
        .filter(|cs| cs.comment.to_lowercase().contains("vandalism"))
        .collect()
}

/// Changeset ids explicitly mentioned after a "changeset"/"changesets" token
/// in the revert comment.
///
/// Revert comments follow no fixed grammar; this scanner accepts the common
/// patterns: after the token, integers separated by whitespace, ",", "and",
/// "#", or ":" are collected until something else appears. Only ids in the
/// store and not authored by the reverter qualify.
pub fn attribute_explicit(revert: &Changeset, store: &ChangesetStore) -> BTreeSet<u64> {
    let token = Regex::new(r"(?i)\bchangesets?\b").expect("static pattern");
    let mut out = BTreeSet::new();
    for m in token.find_iter(&revert.comment) {
        let rest = &revert.comment[m.end()..];
        for id in scan_id_list(rest) {
            if let Some(cs) = store.get(id) {
                if cs.uid != revert.uid {
                    out.insert(id);
                }
            }
        }
    }
    out
}

fn scan_id_list(mut rest: &str) -> Vec<u64> {
    let mut ids = Vec::new();
    loop {
        rest = rest
            .trim_start_matches(|c: char| c.is_whitespace() || c == ',' || c == '#' || c == ':');
        let lower = rest.to_lowercase();
        if lower.starts_with("and") && !lower[3..].starts_with(|c: char| c.is_alphanumeric()) {
            rest = &rest[3..];
            continue;
        }
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if digits.is_empty() {
            break;
        }
        match digits.parse::<u64>() {
            Ok(id) => ids.push(id),
            Err(_) => break,
        }
        rest = &rest[digits.len()..];
    }
    ids
}

/// Changesets attributed through single-author deletions, with the deleted
/// object that justified each attribution.
pub fn attribute_by_deletion_detailed(
    revert: &Changeset,
    store: &ChangesetStore,
) -> Vec<(u64, (u64, ObjectKind))> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for edit in revert.edits.iter().filter(|e| e.op == EditOp::Delete) {
        let identity = edit.object.identity();
        let prior: Vec<_> = store
            .version_history(identity.0, identity.1)
            .iter()
            .filter(|v| v.changeset != revert.id && v.ver < edit.ver)
            .collect();
        let authors: BTreeSet<u64> = prior.iter().map(|v| v.uid).collect();
        // Underspecified cases (several prior authors, or no recorded
        // history) contribute nothing.
        if authors.len() != 1 {
            continue;
        }
        let author = *authors.iter().next().expect("exactly one author");
        if author == revert.uid {
            continue;
        }
        for v in prior {
            if store.get(v.changeset).is_some() && seen.insert(v.changeset) {
                out.push((v.changeset, identity));
            }
        }
    }
    out
}

/// Set view of [`attribute_by_deletion_detailed`].
pub fn attribute_by_deletion(revert: &Changeset, store: &ChangesetStore) -> BTreeSet<u64> {
    attribute_by_deletion_detailed(revert, store)
        .into_iter()
        .map(|(id, _)| id)
        .collect()
}

/// Draws `n` distinct regular changesets uniformly without replacement from
/// the store minus `exclude`.
pub fn sample_negatives(
    store: &ChangesetStore,
    exclude: &HashSet<u64>,
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>, MinerError> {
    let eligible: Vec<&Changeset> = store
        .changesets()
        .filter(|cs| !exclude.contains(&cs.id))
        .collect();
    if eligible.len() < n {
        return Err(MinerError::InsufficientPopulation {
            requested: n,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, eligible.len(), n);
    Ok(picked
        .into_iter()
        .map(|i| LabeledExample {
            changeset: eligible[i].id,
            label: Label::Regular,
            provenance: Provenance::NegativeSample,
            user: eligible[i].uid,
        })
        .collect())
}

/// The full mining pipeline: attributed positives (explicit mentions take
/// precedence on duplicates), then an equal number of sampled negatives.
pub fn mine(store: &ChangesetStore, seed: u64) -> Result<Vec<LabeledExample>, MinerError> {
    let reverts = find_vandalism_reverts(store);
    let revert_ids: HashSet<u64> = reverts.iter().map(|r| r.id).collect();

    let mut positives: Vec<LabeledExample> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    for revert in &reverts {
        for id in attribute_explicit(revert, store) {
            if !revert_ids.contains(&id) && seen.insert(id) {
                positives.push(LabeledExample {
                    changeset: id,
                    label: Label::Vandalism,
                    provenance: Provenance::ExplicitMention { revert: revert.id },
                    user: store.get(id).expect("filtered to stored ids").uid,
                });
            }
        }
    }
    for revert in &reverts {
        for (id, (object_id, object_kind)) in attribute_by_deletion_detailed(revert, store) {
            if !revert_ids.contains(&id) && seen.insert(id) {
                positives.push(LabeledExample {
                    changeset: id,
                    label: Label::Vandalism,
                    provenance: Provenance::DeletionAttribution {
                        revert: revert.id,
                        object_id,
                        object_kind,
                    },
                    user: store.get(id).expect("filtered to stored ids").uid,
                });
            }
        }
    }

    let mut exclude: HashSet<u64> = revert_ids;
    exclude.extend(seen.iter().copied());
    let negatives = sample_negatives(store, &exclude, positives.len(), seed)?;

    let mut examples = positives;
    examples.extend(negatives);
    Ok(examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl DatasetSplit {
    pub fn part(&self, name: SplitName) -> &[LabeledExample] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Shuffles users deterministically and assigns each, with all their
/// changesets, to the split currently furthest below its target count.
/// Ties break train, validation, test.
pub fn split_user_disjoint(
    examples: &[LabeledExample],
    ratios: (f64, f64, f64),
    seed: u64,
) -> DatasetSplit {
    let sum = ratios.0 + ratios.1 + ratios.2;
    assert!(
        (sum - 1.0).abs() < 1e-9,
        "split ratios must sum to 1 (got {sum})"
    );

    let mut by_user: BTreeMap<u64, Vec<LabeledExample>> = BTreeMap::new();
    for ex in examples {
        by_user.entry(ex.user).or_default().push(ex.clone());
    }
    let mut users: Vec<u64> = by_user.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);

    let total = examples.len() as f64;
    let targets = [ratios.0 * total, ratios.1 * total, ratios.2 * total];
    let mut counts = [0usize; 3];
    let mut parts: [Vec<LabeledExample>; 3] = [Vec::new(), Vec::new(), Vec::new()];

    for user in users {
        let deficits: Vec<f64> = (0..3).map(|i| targets[i] - counts[i] as f64).collect();
        let mut best = 0;
        for i in 1..3 {
            if deficits[i] > deficits[best] {
                best = i;
            }
        }
        let group = by_user.remove(&user).expect("grouped above");
        counts[best] += group.len();
        parts[best].extend(group);
    }

    let [train, validation, test] = parts;
    DatasetSplit {
        train,
        validation,
        test,
        ratios,
        seed,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    schema: String,
    version: u32,
    seed: u64,
    positives: usize,
    negatives: usize,
}

pub fn write_dataset<W: Write>(
    mut w: W,
    examples: &[LabeledExample],
    seed: u64,
) -> Result<(), MinerError> {
    let io_err = |e: std::io::Error| MinerError::Io {
        line: 0,
        msg: e.to_string(),
    };
    let ser_err = |e: serde_json::Error| MinerError::Io {
        line: 0,
        msg: e.to_string(),
    };
    let manifest = DatasetManifest {
        schema: DATASET_SCHEMA.into(),
        version: FORMAT_VERSION,
        seed,
        positives: examples
            .iter()
            .filter(|e| e.label == Label::Vandalism)
            .count(),
        negatives: examples
            .iter()
            .filter(|e| e.label == Label::Regular)
            .count(),
    };
    writeln!(w, "{}", serde_json::to_string(&manifest).map_err(ser_err)?).map_err(io_err)?;
    for ex in examples {
        writeln!(w, "{}", serde_json::to_string(ex).map_err(ser_err)?).map_err(io_err)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<(Vec<LabeledExample>, u64), MinerError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or(MinerError::Io {
        line: 1,
        msg: "empty dataset file".into(),
    })?;
    let first = first.map_err(|e| MinerError::Io {
        line: 1,
        msg: e.to_string(),
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&first).map_err(|e| MinerError::Io {
        line: 1,
        msg: e.to_string(),
    })?;
    if manifest.schema != DATASET_SCHEMA || manifest.version != FORMAT_VERSION {
        return Err(MinerError::SchemaMismatch {
            expected: DATASET_SCHEMA,
            found: format!("{} v{}", manifest.schema, manifest.version),
        });
    }
    let mut examples = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| MinerError::Io {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let ex: LabeledExample = serde_json::from_str(&line).map_err(|e| MinerError::Io {
            line: i + 1,
            msg: e.to_string(),
        })?;
        examples.push(ex);
    }
    Ok((examples, manifest.seed))
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitManifest {
    schema: String,
    version: u32,
    seed: u64,
    ratios: (f64, f64, f64),
    train: usize,
    validation: usize,
    test: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRecord {
    split: SplitName,
    #[serde(flatten)]
    example: LabeledExample,
}

pub fn write_split<W: Write>(mut w: W, split: &DatasetSplit) -> Result<(), MinerError> {
    let io_err = |e: std::io::Error| MinerError::Io {
        line: 0,
        msg: e.to_string(),
    };
    let ser_err = |e: serde_json::Error| MinerError::Io {
        line: 0,
        msg: e.to_string(),
    };
    let manifest = SplitManifest {
        schema: SPLIT_SCHEMA.into(),
        version: FORMAT_VERSION,
        seed: split.seed,
        ratios: split.ratios,
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
    };
    writeln!(w, "{}", serde_json::to_string(&manifest).map_err(ser_err)?).map_err(io_err)?;
    for (name, part) in [
        (SplitName::Train, &split.train),
        (SplitName::Validation, &split.validation),
        (SplitName::Test, &split.test),
    ] {
        for ex in part.iter() {
            let record = SplitRecord {
                split: name,
                example: ex.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&record).map_err(ser_err)?).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn read_split<R: BufRead>(r: R) -> Result<DatasetSplit, MinerError> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or(MinerError::Io {
        line: 1,
        msg: "empty split file".into(),
    })?;
    let first = first.map_err(|e| MinerError::Io {
        line: 1,
        msg: e.to_string(),
    })?;
    let manifest: SplitManifest = serde_json::from_str(&first).map_err(|e| MinerError::Io {
        line: 1,
        msg: e.to_string(),
    })?;
    if manifest.schema != SPLIT_SCHEMA || manifest.version != FORMAT_VERSION {
        return Err(MinerError::SchemaMismatch {
            expected: SPLIT_SCHEMA,
            found: format!("{} v{}", manifest.schema, manifest.version),
        });
    }
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        ratios: manifest.ratios,
        seed: manifest.seed,
    };
    for (i, line) in lines {
        let line = line.map_err(|e| MinerError::Io {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let record: SplitRecord = serde_json::from_str(&line).map_err(|e| MinerError::Io {
            line: i + 1,
            msg: e.to_string(),
        })?;
        match record.split {
            SplitName::Train => split.train.push(record.example),
            SplitName::Validation => split.validation.push(record.example),
            SplitName::Test => split.test.push(record.example),
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osm::{Coord, Edit, OsmObject};

    fn changeset(id: u64, uid: u64, comment: &str) -> Changeset {
        Changeset {
            id,
            edits: vec![],
            t: id as i64 * 1000,
            uid,
            username: format!("u{uid}"),
            comment: comment.into(),
            created_by: None,
            imagery_used: None,
            bbox: None,
        }
    }

    fn node_edit(id: u64, ver: u64, t: i64, op: EditOp) -> Edit {
        Edit {
            object: OsmObject {
                id,
                kind: ObjectKind::Node,
                coords: vec![Coord::new(0.0, 0.0)],
                tags: Default::default(),
                ver: if op == EditOp::Delete {
                    ver.saturating_sub(1).max(1)
                } else {
                    ver
                },
            },
            op,
            ver,
            t,
        }
    }

    #[test]
    fn vandalism_substring_filter() {
        let mut store = ChangesetStore::new();
        store
            .insert_changeset(changeset(1, 1, "Revert vandalism by user X"))
            .unwrap();
        store.insert_changeset(changeset(2, 2, "fix typo")).unwrap();
        store
            .insert_changeset(changeset(3, 3, "VANDALISM cleanup"))
            .unwrap();

        let reverts = find_vandalism_reverts(&store);
        let ids: Vec<u64> = reverts.iter().map(|r| r.id).collect();
        // Brute-force lowercase scan over the fixture agrees.
        let brute: Vec<u64> = store
            .changesets()
            .filter(|c| c.comment.to_lowercase().contains("vandalism"))
            .map(|c| c.id)
            .collect();
        assert_eq!(ids, vec![1, 3]);
        assert_eq!(ids, brute);
    }

    #[test]
    fn explicit_single_id() {
        let mut store = ChangesetStore::new();
        store
            .insert_changeset(changeset(12345, 5, "bad edit"))
            .unwrap();
        store
            .insert_changeset(changeset(99, 9, "revert vandalism, changeset 12345"))
            .unwrap();
        let revert = store.get(99).unwrap();
        let ids = attribute_explicit(revert, &store);
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![12345]);
    }

    #[test]
    fn explicit_id_list_with_separators() {
        let mut store = ChangesetStore::new();
        for id in [10, 11, 12] {
            store.insert_changeset(changeset(id, 5, "x")).unwrap();
        }
        store
            .insert_changeset(changeset(
                99,
                9,
                "vandalism reverts of changesets 10, 11 and 12",
            ))
            .unwrap();
        let ids = attribute_explicit(store.get(99).unwrap(), &store);
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![10, 11, 12]);
    }

    #[test]
    fn explicit_no_ids_yields_empty() {
        let mut store = ChangesetStore::new();
        store
            .insert_changeset(changeset(99, 9, "vandalism"))
            .unwrap();
        assert!(attribute_explicit(store.get(99).unwrap(), &store).is_empty());
    }

    #[test]
    fn explicit_filters_reverter_and_unknown_ids() {
        let mut store = ChangesetStore::new();
        store.insert_changeset(changeset(7, 9, "mine")).unwrap();
        store
            .insert_changeset(changeset(99, 9, "revert vandalism changesets 7, 8"))
            .unwrap();
        // 7 is the reverter's own, 8 is not in the store.
        assert!(attribute_explicit(store.get(99).unwrap(), &store).is_empty());
    }

    #[test]
    fn explicit_hash_and_colon_separators() {
        let mut store = ChangesetStore::new();
        store.insert_changeset(changeset(123, 5, "x")).unwrap();
        store.insert_changeset(changeset(456, 5, "x2")).unwrap();
        store
            .insert_changeset(changeset(
                99,
                9,
                "reverts vandalism; see changeset: #123 #456 done",
            ))
            .unwrap();
        let ids = attribute_explicit(store.get(99).unwrap(), &store);
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![123, 456]);
    }

    fn deletion_fixture() -> ChangesetStore {
        let mut store = ChangesetStore::new();
        // User U=4 created and modified node 77 via changesets 100, 101.
        store
            .insert_changeset(changeset(100, 4, "add poi"))
            .unwrap();
        store
            .insert_changeset(changeset(101, 4, "tweak poi"))
            .unwrap();
        // The revert (user 9, changeset 200) deletes node 77 at version 3.
        store
            .insert_changeset(changeset(200, 9, "revert vandalism"))
            .unwrap();
        store.attach_edit(100, 4, node_edit(77, 1, 10, EditOp::Create));
        store.attach_edit(101, 4, node_edit(77, 2, 20, EditOp::Modify));
        store.attach_edit(200, 9, node_edit(77, 3, 30, EditOp::Delete));
        store
    }

    #[test]
    fn deletion_attribution_single_author() {
        let store = deletion_fixture();
        let revert = store.get(200).unwrap();
        let ids = attribute_by_deletion(revert, &store);
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![100, 101]);
    }

    #[test]
    fn deletion_attribution_multi_author_excluded() {
        let mut store = ChangesetStore::new();
        store.insert_changeset(changeset(100, 4, "a")).unwrap();
        store.insert_changeset(changeset(101, 5, "b")).unwrap();
        store
            .insert_changeset(changeset(200, 9, "revert vandalism"))
            .unwrap();
        store.attach_edit(100, 4, node_edit(77, 1, 10, EditOp::Create));
        store.attach_edit(101, 5, node_edit(77, 2, 20, EditOp::Modify));
        store.attach_edit(200, 9, node_edit(77, 3, 30, EditOp::Delete));
        assert!(attribute_by_deletion(store.get(200).unwrap(), &store).is_empty());
    }

    #[test]
    fn deletion_attribution_needs_delete_edits() {
        let mut store = ChangesetStore::new();
        store.insert_changeset(changeset(100, 4, "a")).unwrap();
        store
            .insert_changeset(changeset(200, 9, "revert vandalism"))
            .unwrap();
        store.attach_edit(100, 4, node_edit(77, 1, 10, EditOp::Create));
        store.attach_edit(200, 9, node_edit(77, 2, 30, EditOp::Modify));
        assert!(attribute_by_deletion(store.get(200).unwrap(), &store).is_empty());
    }

    #[test]
    fn negatives_deterministic_and_guarded() {
        let mut store = ChangesetStore::new();
        for id in 0..20 {
            store
                .insert_changeset(changeset(id, id, "regular"))
                .unwrap();
        }
        let exclude: HashSet<u64> = [0, 1].into_iter().collect();
        let a = sample_negatives(&store, &exclude, 5, 42).unwrap();
        let b = sample_negatives(&store, &exclude, 5, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|e| !exclude.contains(&e.changeset)));
        let distinct: HashSet<u64> = a.iter().map(|e| e.changeset).collect();
        assert_eq!(distinct.len(), 5);

        assert!(matches!(
            sample_negatives(&store, &exclude, 19, 42),
            Err(MinerError::InsufficientPopulation {
                requested: 19,
                available: 18
            })
        ));
    }

    #[test]
    fn mine_produces_balanced_dataset() {
        let mut store = deletion_fixture();
        for id in 300..320 {
            store
                .insert_changeset(changeset(id, id, "normal work"))
                .unwrap();
        }
        let examples = mine(&store, 7).unwrap();
        let positives: Vec<_> = examples
            .iter()
            .filter(|e| e.label == Label::Vandalism)
            .collect();
        let negatives: Vec<_> = examples
            .iter()
            .filter(|e| e.label == Label::Regular)
            .collect();
        assert_eq!(positives.len(), 2);
        assert_eq!(positives.len(), negatives.len());
        // The revert itself appears nowhere.
        assert!(examples.iter().all(|e| e.changeset != 200));
        // Determinism.
        assert_eq!(examples, mine(&store, 7).unwrap());
    }

    fn symmetric_examples(users: u64, per_user: u64) -> Vec<LabeledExample> {
        let mut out = Vec::new();
        for u in 0..users {
            for k in 0..per_user {
                out.push(LabeledExample {
                    changeset: u * 1000 + k,
                    label: if k % 2 == 0 {
                        Label::Vandalism
                    } else {
                        Label::Regular
                    },
                    provenance: if k % 2 == 0 {
                        Provenance::ExplicitMention { revert: 1 }
                    } else {
                        Provenance::NegativeSample
                    },
                    user: u,
                });
            }
        }
        out
    }

    #[test]
    fn split_symmetric_users_hits_targets() {
        let examples = symmetric_examples(10, 10);
        let split = split_user_disjoint(&examples, (0.70, 0.10, 0.20), 3);
        assert_eq!(split.train.len(), 70);
        assert_eq!(split.validation.len(), 10);
        assert_eq!(split.test.len(), 20);
        assert_eq!(split.total(), 100);
    }

    #[test]
    fn split_single_user_goes_to_train() {
        let examples = symmetric_examples(1, 5);
        let split = split_user_disjoint(&examples, (0.70, 0.10, 0.20), 3);
        assert_eq!(split.train.len(), 5);
        assert!(split.validation.is_empty() && split.test.is_empty());
    }

    #[test]
    fn split_deterministic_and_user_disjoint() {
        let examples = symmetric_examples(23, 7);
        let a = split_user_disjoint(&examples, (0.70, 0.10, 0.20), 11);
        let b = split_user_disjoint(&examples, (0.70, 0.10, 0.20), 11);
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.test, b.test);

        let users = |part: &[LabeledExample]| part.iter().map(|e| e.user).collect::<HashSet<_>>();
        let (tr, va, te) = (users(&a.train), users(&a.validation), users(&a.test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    }

    #[test]
    fn dataset_file_round_trip() {
        let examples = symmetric_examples(3, 4);
        let mut bytes = Vec::new();
        write_dataset(&mut bytes, &examples, 5).unwrap();
        let (back, seed) = read_dataset(&bytes[..]).unwrap();
        assert_eq!(back, examples);
        assert_eq!(seed, 5);
    }

    #[test]
    fn split_file_round_trip() {
        let examples = symmetric_examples(10, 10);
        let split = split_user_disjoint(&examples, (0.70, 0.10, 0.20), 3);
        let mut bytes = Vec::new();
        write_split(&mut bytes, &split).unwrap();
        let back = read_split(&bytes[..]).unwrap();
        assert_eq!(back.train, split.train);
        assert_eq!(back.validation, split.validation);
        assert_eq!(back.test, split.test);
        assert_eq!(back.seed, split.seed);
    }
}
