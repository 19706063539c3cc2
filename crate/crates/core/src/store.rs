//! The changeset store: changesets keyed by id, a per-object version-history
//! index, and the line-delimited on-disk format.
//!
//! On disk a store is a JSON-lines file: a schema-version header line
//! followed by one record per line. Records keep their insertion order, so
//! parse -> save -> load -> save is byte-identical. The version index and
//! node-coordinate map are derived data and are rebuilt on load.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::osm::{
    top12_index, Changeset, Coord, Edit, EditOp, ObjectKind, UserHistory, UserHistoryBuilder,
};

pub const STORE_SCHEMA: &str = "ovid-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o failure at record {line} (byte offset {offset}): {msg}")]
    Io {
        line: usize,
        offset: u64,
        msg: String,
    },
    #[error("store schema mismatch: expected {STORE_SCHEMA} v{STORE_VERSION}, found {found_schema} v{found_version}")]
    SchemaVersionMismatch {
        found_schema: String,
        found_version: u32,
    },
    #[error("duplicate changeset id {0}")]
    DuplicateChangeset(u64),
}

impl StoreError {
    fn io(line: usize, offset: u64, msg: impl Into<String>) -> Self {
        StoreError::Io {
            line,
            offset,
            msg: msg.into(),
        }
    }
}

/// One version of one object, as recorded by the ingest pass.
///
/// `tags` is the object's tag set at this version; delete entries carry an
/// empty set (the object is gone after them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub changeset: u64,
    pub uid: u64,
    pub ver: u64,
    pub t: i64,
    pub op: EditOp,
    pub tags: std::collections::BTreeMap<String, String>,
}

impl VersionEntry {
    pub fn name(&self) -> Option<&str> {
        self.tags.get("name").map(String::as_str)
    }
}

/// An edit whose changeset is not (yet) in the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkedEdit {
    pub changeset: u64,
    pub uid: u64,
    pub edit: Edit,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
enum Record {
    #[serde(rename = "changeset")]
    Changeset(Changeset),
    #[serde(rename = "parked")]
    Parked(ParkedEdit),
}

#[derive(Debug, Default)]
pub struct ChangesetStore {
    changesets: Vec<Changeset>,
    by_id: HashMap<u64, usize>,
    version_index: HashMap<(u64, ObjectKind), Vec<VersionEntry>>,
    parked: Vec<ParkedEdit>,
    node_coords: HashMap<u64, Coord>,
}

impl ChangesetStore {
    pub fn new() -> Self {
        ChangesetStore::default()
    }

    pub fn len(&self) -> usize {
        self.changesets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changesets.is_empty()
    }

    pub fn changesets(&self) -> impl Iterator<Item = &Changeset> {
        self.changesets.iter()
    }

    pub fn get(&self, id: u64) -> Option<&Changeset> {
        self.by_id.get(&id).map(|&i| &self.changesets[i])
    }

    pub fn parked(&self) -> &[ParkedEdit] {
        &self.parked
    }

    pub fn insert_changeset(&mut self, cs: Changeset) -> Result<(), StoreError> {
        if self.by_id.contains_key(&cs.id) {
            return Err(StoreError::DuplicateChangeset(cs.id));
        }
        self.by_id.insert(cs.id, self.changesets.len());
        for e in &cs.edits {
            self.index_edit(cs.id, cs.uid, e);
        }
        self.changesets.push(cs);
        Ok(())
    }

    /// Attaches an edit to its changeset, updating the version index either
    /// way. Returns false when the changeset is unknown and the edit was
    /// parked instead.
    pub fn attach_edit(&mut self, changeset_id: u64, uid: u64, edit: Edit) -> bool {
        self.index_edit(changeset_id, uid, &edit);
        match self.by_id.get(&changeset_id) {
            Some(&i) => {
                self.changesets[i].edits.push(edit);
                true
            }
            None => {
                self.parked.push(ParkedEdit {
                    changeset: changeset_id,
                    uid,
                    edit,
                });
                false
            }
        }
    }

    fn index_edit(&mut self, changeset_id: u64, uid: u64, edit: &Edit) {
        let obj = &edit.object;
        if obj.kind == ObjectKind::Node {
            if let Some(c) = obj.coords.first() {
                self.node_coords.insert(obj.id, *c);
            }
        }
        let entry = VersionEntry {
            changeset: changeset_id,
            uid,
            ver: edit.ver,
            t: edit.t,
            op: edit.op,
            // The state after a delete has no tags.
            tags: if edit.op == EditOp::Delete {
                Default::default()
            } else {
                obj.tags.clone()
            },
        };
        let history = self.version_index.entry(obj.identity()).or_default();
        let pos = history.partition_point(|v| (v.ver, v.t) <= (entry.ver, entry.t));
        history.insert(pos, entry);
    }

    /// Version entries for one object, sorted by version ascending.
    pub fn version_history(&self, id: u64, kind: ObjectKind) -> &[VersionEntry] {
        self.version_index
            .get(&(id, kind))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// The greatest recorded version strictly below `ver`.
    pub fn previous_version(&self, id: u64, kind: ObjectKind, ver: u64) -> Option<&VersionEntry> {
        self.version_history(id, kind)
            .iter()
            .rev()
            .find(|e| e.ver < ver)
    }

    pub fn node_coord(&self, node_id: u64) -> Option<Coord> {
        self.node_coords.get(&node_id).copied()
    }

    /// Builds the per-user activity aggregates for every user in the store.
    pub fn build_user_histories(&self) -> UserHistories {
        let mut builders: HashMap<u64, UserHistoryBuilder> = HashMap::new();
        for cs in &self.changesets {
            let b = builders
                .entry(cs.uid)
                .or_insert_with(|| UserHistoryBuilder::new(cs.uid));
            b.record_changeset(cs.t);
            for e in &cs.edits {
                let added = self.added_top12_keys(e);
                b.record_edit(e.op, e.t, &added);
            }
        }
        UserHistories {
            by_user: builders.into_iter().map(|(u, b)| (u, b.finish())).collect(),
        }
    }

    /// TOP12 indices of keys present on this edit's resulting state but not
    /// on the previous version.
    fn added_top12_keys(&self, e: &Edit) -> Vec<usize> {
        if e.op == EditOp::Delete {
            return Vec::new();
        }
        let (id, kind) = e.object.identity();
        let prev = self.previous_version(id, kind, e.ver);
        e.object
            .tags
            .keys()
            .filter_map(|k| top12_index(k))
            .filter(|idx| match prev {
                Some(p) => !p.tags.contains_key(crate::osm::TOP12_KEYS[*idx]),
                None => true,
            })
            .collect()
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), StoreError> {
        let to_io = |e: serde_json::Error| StoreError::io(0, 0, e.to_string());
        let write_err = |e: std::io::Error| StoreError::io(0, 0, e.to_string());
        let header = serde_json::to_string(&Header {
            schema: STORE_SCHEMA.into(),
            version: STORE_VERSION,
        })
        .map_err(to_io)?;
        writeln!(w, "{header}").map_err(write_err)?;
        for cs in &self.changesets {
            let line = serde_json::to_string(&Record::Changeset(cs.clone())).map_err(to_io)?;
            writeln!(w, "{line}").map_err(write_err)?;
        }
        for p in &self.parked {
            let line = serde_json::to_string(&Record::Parked(p.clone())).map_err(to_io)?;
            writeln!(w, "{line}").map_err(write_err)?;
        }
        Ok(())
    }

    pub fn save_path(&self, path: &Path) -> Result<(), StoreError> {
        let f = std::fs::File::create(path).map_err(|e| StoreError::io(0, 0, e.to_string()))?;
        self.save(std::io::BufWriter::new(f))
    }

    pub fn load<R: BufRead>(r: R) -> Result<Self, StoreError> {
        let mut store = ChangesetStore::new();
        let mut offset: u64 = 0;
        let mut lines = r.lines();

        let header_line = match lines.next() {
            Some(Ok(l)) => l,
            Some(Err(e)) => return Err(StoreError::io(1, 0, e.to_string())),
            None => return Err(StoreError::io(1, 0, "empty store file")),
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| StoreError::io(1, 0, format!("unreadable header: {e}")))?;
        if header.schema != STORE_SCHEMA || header.version != STORE_VERSION {
            return Err(StoreError::SchemaVersionMismatch {
                found_schema: header.schema,
                found_version: header.version,
            });
        }
        offset += header_line.len() as u64 + 1;

        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| StoreError::io(lineno, offset, e.to_string()))?;
            let record: Record = serde_json::from_str(&line)
                .map_err(|e| StoreError::io(lineno, offset, format!("bad record: {e}")))?;
            match record {
                Record::Changeset(cs) => store.insert_changeset(cs)?,
                Record::Parked(p) => {
                    store.index_edit(p.changeset, p.uid, &p.edit);
                    store.parked.push(p);
                }
            }
            offset += line.len() as u64 + 1;
        }
        Ok(store)
    }

    pub fn load_path(path: &Path) -> Result<Self, StoreError> {
        let f = std::fs::File::open(path).map_err(|e| StoreError::io(0, 0, e.to_string()))?;
        Self::load(std::io::BufReader::new(f))
    }
}

/// Pre-built user histories for a store snapshot.
#[derive(Debug, Default)]
pub struct UserHistories {
    by_user: HashMap<u64, UserHistory>,
}

impl UserHistories {
    pub fn get(&self, uid: u64) -> Option<&UserHistory> {
        self.by_user.get(&uid)
    }

    pub fn len(&self) -> usize {
        self.by_user.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_user.is_empty()
    }
}
