//! Streaming parsers for OSM changeset-dump XML and osmChange XML.
//!
//! Both parsers feed a [`ChangesetStore`]: changeset metadata first, then one
//! or more osmChange files whose edits are attached to their changesets. The
//! previous-version join for delete edits happens here, eagerly, in a single
//! forward pass over version-ordered input.
//!
//! Input files may be gzip-compressed; [`open_xml`] sniffs the magic bytes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use flate2::bufread::GzDecoder;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::osm::{BoundingBox, Changeset, Coord, Edit, EditOp, ObjectKind, OsmObject};
use crate::store::ChangesetStore;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed XML at byte {position}: {msg}")]
    MalformedXml { position: u64, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Counters reported by one parse pass.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct IngestStats {
    pub changesets_added: usize,
    /// Elements missing required fields (id, uid, created_at) or colliding
    /// with an already-stored id; skipped with this counter as the warning.
    pub changesets_skipped: usize,
    pub edits_attached: usize,
    /// Edits referencing a changeset id absent from the store; they are
    /// parked on the store, not dropped.
    pub edits_parked: usize,
}

/// Opens a possibly gzip-compressed XML file, sniffing the magic bytes.
pub fn open_xml(path: &Path) -> Result<Box<dyn BufRead>, IngestError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let magic = reader.fill_buf()?;
    if magic.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::new(GzDecoder::new(reader))))
    } else {
        Ok(Box::new(reader))
    }
}

fn xml_err<R>(reader: &Reader<R>, e: impl std::fmt::Display) -> IngestError {
    IngestError::MalformedXml {
        position: reader.buffer_position(),
        msg: e.to_string(),
    }
}

fn attrs(e: &BytesStart) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for a in e.attributes() {
        let a = a.map_err(|e| e.to_string())?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a.unescape_value().map_err(|e| e.to_string())?.into_owned();
        out.push((key, value));
    }
    Ok(out)
}

fn lookup<'a>(attrs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    attrs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn parse_timestamp(s: &str) -> Option<i64> {
    chrono::DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.timestamp())
}

#[derive(Default)]
struct PendingChangeset {
    id: Option<u64>,
    uid: Option<u64>,
    username: String,
    t: Option<i64>,
    bbox: Option<BoundingBox>,
    tags: BTreeMap<String, String>,
}

impl PendingChangeset {
    fn from_attrs(attrs: &[(String, String)]) -> Self {
        let num = |k: &str| lookup(attrs, k).and_then(|v| v.parse::<u64>().ok());
        let coord = |k: &str| lookup(attrs, k).and_then(|v| v.parse::<f64>().ok());
        let bbox = match (
            coord("min_lat"),
            coord("min_lon"),
            coord("max_lat"),
            coord("max_lon"),
        ) {
            (Some(min_lat), Some(min_lon), Some(max_lat), Some(max_lon)) => Some(BoundingBox {
                min_lat,
                min_lon,
                max_lat,
                max_lon,
            }),
            _ => None,
        };
        PendingChangeset {
            id: num("id"),
            uid: num("uid"),
            username: lookup(attrs, "user").unwrap_or_default().to_string(),
            t: lookup(attrs, "created_at").and_then(parse_timestamp),
            bbox,
            tags: BTreeMap::new(),
        }
    }

    fn finish(mut self) -> Option<Changeset> {
        Some(Changeset {
            id: self.id?,
            uid: self.uid?,
            t: self.t?,
            edits: Vec::new(),
            username: self.username,
            comment: self.tags.remove("comment").unwrap_or_default(),
            created_by: self.tags.remove("created_by"),
            imagery_used: self.tags.remove("imagery_used"),
            bbox: self.bbox,
        })
    }
}

/// Parses a changesets-dump file into the store. Edits stay empty; they come
/// from [`parse_osc`].
pub fn parse_changeset_metadata<R: BufRead>(
    input: R,
    store: &mut ChangesetStore,
) -> Result<IngestStats, IngestError> {
    let mut reader = Reader::from_reader(input);
    let mut buf = Vec::new();
    let mut stats = IngestStats::default();
    let mut pending: Option<PendingChangeset> = None;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(&reader, e))?;
        match event {
            Event::Eof => break,
            Event::Start(e) => match e.name().as_ref() {
                b"changeset" => {
                    let a = attrs(&e).map_err(|m| xml_err(&reader, m))?;
                    pending = Some(PendingChangeset::from_attrs(&a));
                }
                b"tag" => record_tag(&e, &reader, &mut pending)?,
                _ => {}
            },
            Event::Empty(e) => match e.name().as_ref() {
                b"changeset" => {
                    let a = attrs(&e).map_err(|m| xml_err(&reader, m))?;
                    finalize_changeset(PendingChangeset::from_attrs(&a), store, &mut stats);
                }
                b"tag" => record_tag(&e, &reader, &mut pending)?,
                _ => {}
            },
            Event::End(e) if e.name().as_ref() == b"changeset" => {
                if let Some(p) = pending.take() {
                    finalize_changeset(p, store, &mut stats);
                }
            }
            _ => {}
        }
        buf.clear();
    }
    Ok(stats)
}

fn record_tag<R>(
    e: &BytesStart,
    reader: &Reader<R>,
    pending: &mut Option<PendingChangeset>,
) -> Result<(), IngestError> {
    if let Some(p) = pending.as_mut() {
        let a = attrs(e).map_err(|m| xml_err(reader, m))?;
        if let (Some(k), Some(v)) = (lookup(&a, "k"), lookup(&a, "v")) {
            p.tags.insert(k.to_string(), v.to_string());
        }
    }
    Ok(())
}

fn finalize_changeset(p: PendingChangeset, store: &mut ChangesetStore, stats: &mut IngestStats) {
    match p.finish() {
        Some(cs) => match store.insert_changeset(cs) {
            Ok(()) => stats.changesets_added += 1,
            Err(_) => stats.changesets_skipped += 1,
        },
        None => stats.changesets_skipped += 1,
    }
}

#[derive(Default)]
struct PendingElement {
    kind: Option<ObjectKind>,
    id: Option<u64>,
    ver: Option<u64>,
    changeset: Option<u64>,
    uid: Option<u64>,
    t: Option<i64>,
    coord: Option<Coord>,
    node_refs: Vec<u64>,
    tags: BTreeMap<String, String>,
}

impl PendingElement {
    fn from_attrs(kind: ObjectKind, attrs: &[(String, String)]) -> Self {
        let num = |k: &str| lookup(attrs, k).and_then(|v| v.parse::<u64>().ok());
        let coord = match (
            lookup(attrs, "lat").and_then(|v| v.parse::<f64>().ok()),
            lookup(attrs, "lon").and_then(|v| v.parse::<f64>().ok()),
        ) {
            (Some(lat), Some(lon)) => Some(Coord::new(lat, lon)),
            _ => None,
        };
        PendingElement {
            kind: Some(kind),
            id: num("id"),
            ver: num("version"),
            changeset: num("changeset"),
            uid: num("uid"),
            t: lookup(attrs, "timestamp").and_then(parse_timestamp),
            coord,
            node_refs: Vec::new(),
            tags: BTreeMap::new(),
        }
    }
}

/// Parses an osmChange file, attaching each edit to its changeset in the
/// store. Edits whose changeset is unknown are parked on the store.
pub fn parse_osc<R: BufRead>(
    input: R,
    store: &mut ChangesetStore,
) -> Result<IngestStats, IngestError> {
    let mut reader = Reader::from_reader(input);
    let mut buf = Vec::new();
    let mut stats = IngestStats::default();
    let mut current_op: Option<EditOp> = None;
    let mut pending: Option<PendingElement> = None;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(&reader, e))?;
        match event {
            Event::Eof => break,
            Event::Start(e) => match e.name().as_ref() {
                b"create" => current_op = Some(EditOp::Create),
                b"modify" => current_op = Some(EditOp::Modify),
                b"delete" => current_op = Some(EditOp::Delete),
                b"node" | b"way" | b"relation" => {
                    pending = Some(start_element(&e, &reader)?);
                }
                b"tag" | b"nd" | b"member" => {
                    child_element(&e, &reader, &mut pending)?;
                }
                _ => {}
            },
            Event::Empty(e) => match e.name().as_ref() {
                b"node" | b"way" | b"relation" => {
                    let p = start_element(&e, &reader)?;
                    finish_element(p, current_op, store, &mut stats, &reader)?;
                }
                b"tag" | b"nd" | b"member" => {
                    child_element(&e, &reader, &mut pending)?;
                }
                _ => {}
            },
            Event::End(e) => match e.name().as_ref() {
                b"create" | b"modify" | b"delete" => current_op = None,
                b"node" | b"way" | b"relation" => {
                    if let Some(p) = pending.take() {
                        finish_element(p, current_op, store, &mut stats, &reader)?;
                    }
                }
                _ => {}
            },
            _ => {}
        }
        buf.clear();
    }
    Ok(stats)
}

fn start_element<R>(e: &BytesStart, reader: &Reader<R>) -> Result<PendingElement, IngestError> {
    let kind = match e.name().as_ref() {
        b"node" => ObjectKind::Node,
        b"way" => ObjectKind::Way,
        _ => ObjectKind::Relation,
    };
    let a = attrs(e).map_err(|m| xml_err(reader, m))?;
    Ok(PendingElement::from_attrs(kind, &a))
}

fn child_element<R>(
    e: &BytesStart,
    reader: &Reader<R>,
    pending: &mut Option<PendingElement>,
) -> Result<(), IngestError> {
    let Some(p) = pending.as_mut() else {
        return Ok(());
    };
    let a = attrs(e).map_err(|m| xml_err(reader, m))?;
    match e.name().as_ref() {
        b"tag" => {
            if let (Some(k), Some(v)) = (lookup(&a, "k"), lookup(&a, "v")) {
                p.tags.insert(k.to_string(), v.to_string());
            }
        }
        b"nd" => {
            if let Some(r) = lookup(&a, "ref").and_then(|v| v.parse::<u64>().ok()) {
                p.node_refs.push(r);
            }
        }
        b"member" if lookup(&a, "type") == Some("node") => {
            if let Some(r) = lookup(&a, "ref").and_then(|v| v.parse::<u64>().ok()) {
                p.node_refs.push(r);
            }
        }
        _ => {}
    }
    Ok(())
}

fn finish_element<R>(
    p: PendingElement,
    current_op: Option<EditOp>,
    store: &mut ChangesetStore,
    stats: &mut IngestStats,
    reader: &Reader<R>,
) -> Result<(), IngestError> {
    let malformed = |msg: &str| IngestError::MalformedXml {
        position: reader.buffer_position(),
        msg: msg.to_string(),
    };
    let op = current_op.ok_or_else(|| malformed("element outside create/modify/delete block"))?;
    let kind = p.kind.expect("element kind set at start");
    let id = p.id.ok_or_else(|| malformed("element missing id"))?;
    let ver = p.ver.ok_or_else(|| malformed("element missing version"))?;
    let changeset = p
        .changeset
        .ok_or_else(|| malformed("element missing changeset"))?;
    let uid = p.uid.ok_or_else(|| malformed("element missing uid"))?;
    let t = p.t.ok_or_else(|| malformed("element missing timestamp"))?;

    // Resolvable coordinates: the node's own point, or member node positions
    // seen earlier in the stream.
    let mut coords = Vec::new();
    if kind == ObjectKind::Node {
        if let Some(c) = p.coord {
            coords.push(c);
        } else if op == EditOp::Delete {
            if let Some(c) = store.node_coord(id) {
                coords.push(c);
            }
        }
    } else {
        for r in &p.node_refs {
            if let Some(c) = store.node_coord(*r) {
                coords.push(c);
            }
        }
    }

    let (tags, object_ver) = if op == EditOp::Delete {
        // Deletion records carry no tags; join the pre-deletion state.
        match store.previous_version(id, kind, ver) {
            Some(prev) => (prev.tags.clone(), prev.ver),
            None => (p.tags, ver.saturating_sub(1).max(1)),
        }
    } else {
        (p.tags, ver)
    };

    let edit = Edit {
        object: OsmObject {
            id,
            kind,
            coords,
            tags,
            ver: object_ver,
        },
        op,
        ver,
        t,
    };
    edit.validate().map_err(|e| malformed(&e.to_string()))?;

    if store.attach_edit(changeset, uid, edit) {
        stats.edits_attached += 1;
    } else {
        stats.edits_parked += 1;
    }
    Ok(())
}
