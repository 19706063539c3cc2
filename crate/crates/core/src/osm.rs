//! The OSM domain model: objects, edits, changesets, and per-user history.
//!
//! All types are immutable value records; they are `Send + Sync` and safe to
//! share across threads. Timestamps are UTC integer seconds throughout.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The twelve most frequent OSM keys (as of May 2020), in canonical order.
pub const TOP12_KEYS: [&str; 12] = [
    "building", "source", "highway", "name", "natural", "surface", "landuse", "power", "waterway",
    "amenity", "service", "oneway",
];

/// Returns the index of `key` in [`TOP12_KEYS`], if present.
pub fn top12_index(key: &str) -> Option<usize> {
    TOP12_KEYS.iter().position(|k| *k == key)
}

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("object version must be >= 1 (got {0})")]
    InvalidVersion(u64),
    #[error("node coordinate out of range: lat={lat}, lon={lon}")]
    CoordinateOutOfRange { lat: f64, lon: f64 },
    #[error("create edit must carry version 1 (got {0})")]
    CreateVersion(u64),
    #[error("{op:?} edit must carry version >= 2 (got {ver})")]
    NonCreateVersion { op: EditOp, ver: u64 },
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub lat: f64,
    pub lon: f64,
}

impl Coord {
    pub fn new(lat: f64, lon: f64) -> Self {
        Coord { lat, lon }
    }

    pub fn in_range(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Node,
    Way,
    Relation,
}

impl ObjectKind {
    /// Fixed one-hot slot of this kind in the edit feature layout.
    pub fn index(self) -> usize {
        match self {
            ObjectKind::Node => 0,
            ObjectKind::Way => 1,
            ObjectKind::Relation => 2,
        }
    }
}

/// A versioned OSM object.
///
/// `coords` holds every node coordinate resolvable for the object: the single
/// point of a node, member node coordinates for ways and relations. Topology
/// is not modeled; no consumer of this crate needs more than the coordinate
/// envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsmObject {
    pub id: u64,
    pub kind: ObjectKind,
    pub coords: Vec<Coord>,
    pub tags: BTreeMap<String, String>,
    pub ver: u64,
}

impl OsmObject {
    /// The composite identity key: objects of different kinds may share ids.
    pub fn identity(&self) -> (u64, ObjectKind) {
        (self.id, self.kind)
    }

    pub fn name(&self) -> Option<&str> {
        self.tags.get("name").map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.ver < 1 {
            return Err(DomainError::InvalidVersion(self.ver));
        }
        if self.kind == ObjectKind::Node {
            for c in &self.coords {
                if !c.in_range() {
                    return Err(DomainError::CoordinateOutOfRange {
                        lat: c.lat,
                        lon: c.lon,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Create,
    Modify,
    Delete,
}

impl EditOp {
    pub fn index(self) -> usize {
        match self {
            EditOp::Create => 0,
            EditOp::Modify => 1,
            EditOp::Delete => 2,
        }
    }
}

/// One create/modify/delete operation on a single object.
///
/// For create and modify edits `object` is the state after the edit; for
/// delete edits it is the state before (OSM deletion records carry no tags,
/// so the prior version is joined in at ingest time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub object: OsmObject,
    pub op: EditOp,
    pub ver: u64,
    pub t: i64,
}

impl Edit {
    pub fn validate(&self) -> Result<(), DomainError> {
        self.object.validate()?;
        match self.op {
            EditOp::Create if self.ver != 1 => Err(DomainError::CreateVersion(self.ver)),
            EditOp::Modify | EditOp::Delete if self.ver < 2 => Err(DomainError::NonCreateVersion {
                op: self.op,
                ver: self.ver,
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    /// Envelope of a non-empty coordinate sequence.
    pub fn envelope<'a>(coords: impl IntoIterator<Item = &'a Coord>) -> Option<BoundingBox> {
        let mut bbox: Option<BoundingBox> = None;
        for c in coords {
            let b = bbox.get_or_insert(BoundingBox {
                min_lat: c.lat,
                min_lon: c.lon,
                max_lat: c.lat,
                max_lon: c.lon,
            });
            b.min_lat = b.min_lat.min(c.lat);
            b.min_lon = b.min_lon.min(c.lon);
            b.max_lat = b.max_lat.max(c.lat);
            b.max_lon = b.max_lon.max(c.lon);
        }
        bbox
    }

    pub fn contains(&self, c: &Coord) -> bool {
        c.lat >= self.min_lat
            && c.lat <= self.max_lat
            && c.lon >= self.min_lon
            && c.lon <= self.max_lon
    }

    /// Degree-rectangle area (no geodesic correction).
    pub fn size(&self) -> f64 {
        (self.max_lat - self.min_lat) * (self.max_lon - self.min_lon)
    }
}

/// A bundle of edits committed by one user in one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Changeset {
    pub id: u64,
    pub edits: Vec<Edit>,
    /// Commit time, UTC seconds (the dump's `created_at`).
    pub t: i64,
    pub uid: u64,
    pub username: String,
    pub comment: String,
    pub created_by: Option<String>,
    pub imagery_used: Option<String>,
    pub bbox: Option<BoundingBox>,
}

impl Changeset {
    /// The declared bounding box when present, otherwise the envelope over
    /// every node coordinate reachable from the edits. `None` when no
    /// coordinates exist (e.g. tag-only relation edits with no resolvable
    /// geometry).
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        if let Some(b) = self.bbox {
            return Some(b);
        }
        BoundingBox::envelope(self.edits.iter().flat_map(|e| e.object.coords.iter()))
    }

    pub fn count_ops(&self) -> (u64, u64, u64) {
        let mut counts = (0, 0, 0);
        for e in &self.edits {
            match e.op {
                EditOp::Create => counts.0 += 1,
                EditOp::Modify => counts.1 += 1,
                EditOp::Delete => counts.2 += 1,
            }
        }
        counts
    }
}

/// Encodes a timestamp as an ISO year-week bucket.
pub fn iso_week_bucket(t: i64) -> i64 {
    let dt = DateTime::from_timestamp(t, 0).unwrap_or_default();
    let week = dt.iso_week();
    week.year() as i64 * 100 + week.week() as i64
}

/// Per-user activity aggregates, queryable at any timestamp.
///
/// Every query counts only activity strictly before the query time, so a
/// changeset under classification never leaks its own label-time activity
/// into the features.
#[derive(Debug, Clone, Default)]
pub struct UserHistory {
    pub user: u64,
    creates: Vec<i64>,
    modifies: Vec<i64>,
    deletes: Vec<i64>,
    edits: Vec<i64>,
    /// (timestamp, TOP12 key index) for every edit that added a top-12 key.
    top12_additions: Vec<(i64, usize)>,
    changeset_times: Vec<i64>,
}

fn count_before(sorted: &[i64], t: i64) -> u64 {
    sorted.partition_point(|&x| x < t) as u64
}

impl UserHistory {
    pub fn past_creates(&self, t: i64) -> u64 {
        count_before(&self.creates, t)
    }

    pub fn past_modifications(&self, t: i64) -> u64 {
        count_before(&self.modifies, t)
    }

    pub fn past_deletes(&self, t: i64) -> u64 {
        count_before(&self.deletes, t)
    }

    pub fn contributions(&self, t: i64) -> u64 {
        count_before(&self.edits, t)
    }

    /// How often the user added one of the top-12 keys to an object.
    pub fn top12_addition_events(&self, t: i64) -> u64 {
        self.top12_additions
            .iter()
            .filter(|(ts, _)| *ts < t)
            .count() as u64
    }

    /// How many distinct top-12 keys the user has ever added (at most 12).
    pub fn top12_distinct_keys(&self, t: i64) -> u64 {
        let mut seen = [false; 12];
        for (ts, idx) in &self.top12_additions {
            if *ts < t {
                seen[*idx] = true;
            }
        }
        seen.iter().filter(|s| **s).count() as u64
    }

    /// Timestamp of the user's earliest changeset strictly before `t`.
    ///
    /// Changeset dumps carry no account registration date, so first observed
    /// activity stands in for it; `None` for users with no prior activity.
    pub fn account_creation(&self, t: i64) -> Option<i64> {
        self.changeset_times
            .first()
            .copied()
            .filter(|&first| first < t)
    }

    /// Number of distinct ISO year-weeks with at least one changeset before `t`.
    pub fn active_weeks(&self, t: i64) -> u64 {
        let mut weeks: Vec<i64> = self
            .changeset_times
            .iter()
            .filter(|&&ts| ts < t)
            .map(|&ts| iso_week_bucket(ts))
            .collect();
        weeks.sort_unstable();
        weeks.dedup();
        weeks.len() as u64
    }
}

/// Accumulates a user's activity stream into a [`UserHistory`].
#[derive(Debug, Default)]
pub struct UserHistoryBuilder {
    history: UserHistory,
}

impl UserHistoryBuilder {
    pub fn new(user: u64) -> Self {
        UserHistoryBuilder {
            history: UserHistory {
                user,
                ..UserHistory::default()
            },
        }
    }

    pub fn record_changeset(&mut self, t: i64) {
        self.history.changeset_times.push(t);
    }

    /// Records one edit. `added_top12` lists the TOP12 indices of keys that
    /// are present on the new version but absent from the previous one.
    pub fn record_edit(&mut self, op: EditOp, t: i64, added_top12: &[usize]) {
        match op {
            EditOp::Create => self.history.creates.push(t),
            EditOp::Modify => self.history.modifies.push(t),
            EditOp::Delete => self.history.deletes.push(t),
        }
        self.history.edits.push(t);
        for &idx in added_top12 {
            self.history.top12_additions.push((t, idx));
        }
    }

    pub fn finish(mut self) -> UserHistory {
        self.history.creates.sort_unstable();
        self.history.modifies.sort_unstable();
        self.history.deletes.sort_unstable();
        self.history.edits.sort_unstable();
        self.history.changeset_times.sort_unstable();
        self.history.top12_additions.sort_unstable();
        self.history
    }
}
