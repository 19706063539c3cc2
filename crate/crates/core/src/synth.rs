//! Deterministic synthetic changeset histories.
//!
//! Builds a small world of regular mappers, a handful of vandals, and the
//! reverts that clean up after them. The expected mining outcome is known by
//! construction, which makes the world usable as an oracle fixture, as demo
//! input for the CLI, and as benchmark data. The same world can be rendered
//! as a changeset-dump file plus an osmChange file, or loaded directly into
//! a store.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::osm::{Changeset, Coord, Edit, EditOp, ObjectKind, OsmObject};
use crate::store::ChangesetStore;

const EDITORS: [&str; 8] = [
    "JOSM/1.5 (14066)",
    "iD 2.19.6",
    "Potlatch 2",
    "Vespucci 14.0",
    "StreetComplete 30.1",
    "MAPS.ME android",
    "Go Map!! 2.0.3",
    "custom-import-bot 0.9",
];

const COMMENTS: [&str; 6] = [
    "add buildings around the market",
    "survey update: shops and addresses",
    "fix road names",
    "new footpaths in the park",
    "import cleanup, local knowledge",
    "added amenities",
];

/// 2015-01-05T00:00:00Z; everything else is offset from here.
const T0: i64 = 1_420_416_000;
const DAY: i64 = 86_400;

pub struct SynthWorld {
    pub changesets: Vec<Changeset>,
    /// Vandalism changesets a miner must recover via explicit id mentions.
    pub expected_explicit: Vec<u64>,
    /// Vandalism changesets a miner must recover via deletion attribution.
    pub expected_deletion: Vec<u64>,
    pub revert_ids: Vec<u64>,
}

impl SynthWorld {
    pub fn expected_positives(&self) -> Vec<u64> {
        let mut all = self.expected_explicit.clone();
        all.extend(&self.expected_deletion);
        all.sort_unstable();
        all
    }

    pub fn to_store(&self) -> ChangesetStore {
        let mut store = ChangesetStore::new();
        for cs in &self.changesets {
            store
                .insert_changeset(cs.clone())
                .expect("unique synth ids");
        }
        store
    }

    /// The world as a changesets-dump document (metadata only).
    pub fn changesets_xml(&self) -> String {
        let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm>\n");
        for cs in &self.changesets {
            let created = format_ts(cs.t);
            write!(
                out,
                " <changeset id=\"{}\" created_at=\"{}\" uid=\"{}\" user=\"{}\"",
                cs.id,
                created,
                cs.uid,
                escape(&cs.username)
            )
            .unwrap();
            if let Some(b) = cs.bbox {
                write!(
                    out,
                    " min_lat=\"{}\" min_lon=\"{}\" max_lat=\"{}\" max_lon=\"{}\"",
                    b.min_lat, b.min_lon, b.max_lat, b.max_lon
                )
                .unwrap();
            }
            out.push_str(">\n");
            if !cs.comment.is_empty() {
                writeln!(out, "  <tag k=\"comment\" v=\"{}\"/>", escape(&cs.comment)).unwrap();
            }
            if let Some(e) = &cs.created_by {
                writeln!(out, "  <tag k=\"created_by\" v=\"{}\"/>", escape(e)).unwrap();
            }
            if let Some(i) = &cs.imagery_used {
                writeln!(out, "  <tag k=\"imagery_used\" v=\"{}\"/>", escape(i)).unwrap();
            }
            out.push_str(" </changeset>\n");
        }
        out.push_str("</osm>\n");
        out
    }

    /// The world's edits as one osmChange document in timestamp order.
    /// Delete elements carry no tags or coordinates, as in real dumps; the
    /// ingest join has to reconstruct them.
    pub fn osc_xml(&self) -> String {
        let mut edits: Vec<(u64, u64, &Edit)> = Vec::new();
        for cs in &self.changesets {
            for e in &cs.edits {
                edits.push((cs.id, cs.uid, e));
            }
        }
        edits.sort_by_key(|(cs, _, e)| (e.t, e.object.id, e.ver, *cs));

        let mut out = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osmChange version=\"0.6\">\n",
        );
        for (cs, uid, e) in edits {
            let block = match e.op {
                EditOp::Create => "create",
                EditOp::Modify => "modify",
                EditOp::Delete => "delete",
            };
            let name = match e.object.kind {
                ObjectKind::Node => "node",
                ObjectKind::Way => "way",
                ObjectKind::Relation => "relation",
            };
            writeln!(out, " <{block}>").unwrap();
            write!(
                out,
                "  <{name} id=\"{}\" version=\"{}\" timestamp=\"{}\" uid=\"{uid}\" changeset=\"{cs}\"",
                e.object.id,
                e.ver,
                format_ts(e.t)
            )
            .unwrap();
            let with_body = e.op != EditOp::Delete;
            if with_body && e.object.kind == ObjectKind::Node {
                if let Some(c) = e.object.coords.first() {
                    write!(out, " lat=\"{}\" lon=\"{}\"", c.lat, c.lon).unwrap();
                }
            }
            if with_body && !e.object.tags.is_empty() {
                out.push_str(">\n");
                for (k, v) in &e.object.tags {
                    writeln!(out, "   <tag k=\"{}\" v=\"{}\"/>", escape(k), escape(v)).unwrap();
                }
                writeln!(out, "  </{name}>").unwrap();
            } else {
                out.push_str("/>\n");
            }
            writeln!(out, " </{block}>").unwrap();
        }
        out.push_str("</osmChange>\n");
        out
    }
}

fn format_ts(t: i64) -> String {
    chrono::DateTime::from_timestamp(t, 0)
        .expect("valid synth timestamp")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

struct Builder {
    changesets: Vec<Changeset>,
}

impl Builder {
    fn changeset(
        &mut self,
        id: u64,
        uid: u64,
        username: &str,
        t: i64,
        comment: &str,
        editor_idx: usize,
    ) -> usize {
        self.changesets.push(Changeset {
            id,
            edits: vec![],
            t,
            uid,
            username: username.to_string(),
            comment: comment.to_string(),
            created_by: Some(EDITORS[editor_idx % EDITORS.len()].to_string()),
            imagery_used: if id.is_multiple_of(3) {
                Some("Bing".to_string())
            } else {
                None
            },
            bbox: None,
        });
        self.changesets.len() - 1
    }

    fn edit(&mut self, idx: usize, object: OsmObject, op: EditOp, ver: u64, offset_minutes: i64) {
        let t = self.changesets[idx].t + offset_minutes * 60;
        self.changesets[idx].edits.push(Edit { object, op, ver, t });
    }
}

fn node(id: u64, lat: f64, lon: f64, ver: u64, pairs: &[(&str, &str)]) -> OsmObject {
    OsmObject {
        id,
        kind: ObjectKind::Node,
        coords: vec![Coord::new(lat, lon)],
        tags: tags(pairs),
        ver,
    }
}

/// The default fixture world: 20 regular mappers with 8 changesets each,
/// three vandals, five reverts, and one deliberately ambiguous deletion.
pub fn build_world() -> SynthWorld {
    let mut b = Builder { changesets: vec![] };

    // Regular mappers. Each changeset creates two nodes; later changesets
    // revisit the previous one's first node, and changeset 6 deletes an old
    // node, so version history has depth.
    for u in 0..20u64 {
        let uid = 100 + u;
        let username = format!("mapper{u}");
        let home_lat = -8.0 + u as f64 * 0.7;
        let home_lon = 3.0 + u as f64 * 1.1;
        for k in 0..8u64 {
            let cs_id = 1000 + u * 20 + k;
            let t = T0 + (u as i64) * 3 * DAY + (k as i64) * 11 * DAY;
            let comment = COMMENTS[((u + k) % COMMENTS.len() as u64) as usize];
            let idx = b.changeset(cs_id, uid, &username, t, comment, u as usize);

            let n1 = 20_000 + cs_id * 10;
            let n2 = n1 + 1;
            let lat = home_lat + k as f64 * 0.001;
            let lon = home_lon + k as f64 * 0.001;
            b.edit(
                idx,
                node(n1, lat, lon, 1, &[("building", "yes"), ("name", "House A")]),
                EditOp::Create,
                1,
                5,
            );
            b.edit(
                idx,
                node(n2, lat + 0.0005, lon, 1, &[("highway", "residential")]),
                EditOp::Create,
                1,
                7,
            );
            if k >= 1 {
                // Second version of the previous changeset's first node.
                let prev = 20_000 + (cs_id - 1) * 10;
                b.edit(
                    idx,
                    node(
                        prev,
                        lat,
                        lon,
                        2,
                        &[
                            ("building", "yes"),
                            ("name", "House B"),
                            ("source", "survey"),
                        ],
                    ),
                    EditOp::Modify,
                    2,
                    9,
                );
            }
            if k == 6 {
                // Delete the node this user modified two changesets ago.
                let victim = 20_000 + (cs_id - 2) * 10;
                b.edit(
                    idx,
                    node(
                        victim,
                        lat,
                        lon,
                        2,
                        &[
                            ("building", "yes"),
                            ("name", "House B"),
                            ("source", "survey"),
                        ],
                    ),
                    EditOp::Delete,
                    3,
                    11,
                );
            }
        }
    }

    let t_vandal = T0 + 400 * DAY;
    let mut expected_explicit = Vec::new();
    let mut expected_deletion = Vec::new();
    let mut revert_ids = Vec::new();

    // Explicit-mention vandals: each drops two junk changesets that a revert
    // later names by id. Comments stay free of the word "changeset" so the
    // extraction grammar only ever fires on the reverts.
    for i in 0..3u64 {
        let uid = 201 + i;
        let name = format!("wreck-it-{i}");
        let (cs_a, cs_b) = (5000 + 2 * i, 5001 + 2 * i);
        let idx = b.changeset(
            cs_a,
            uid,
            &name,
            t_vandal + (2 * i) as i64 * DAY,
            "hello",
            7,
        );
        b.edit(
            idx,
            node(
                9000 + 2 * i,
                0.0,
                0.1 * i as f64,
                1,
                &[("name", "xXx was here")],
            ),
            EditOp::Create,
            1,
            1,
        );
        let idx = b.changeset(
            cs_b,
            uid,
            &name,
            t_vandal + (2 * i + 1) as i64 * DAY,
            "more",
            7,
        );
        b.edit(
            idx,
            node(
                9001 + 2 * i,
                0.2,
                0.1 * i as f64,
                1,
                &[("name", "fake town")],
            ),
            EditOp::Create,
            1,
            1,
        );
        expected_explicit.push(cs_a);
        expected_explicit.push(cs_b);
    }

    // Deletion-attributed vandals. The first three build a node across two
    // changesets, the rest in one; a revert deletes the node, and every
    // prior changeset of its single author gets attributed.
    for j in 0..6u64 {
        let uid = 211 + j;
        let name = format!("sneaky-{j}");
        let node_id = 9100 + j;
        let t = t_vandal + (10 + 2 * j) as i64 * DAY;
        let cs_create = 5100 + 2 * j;
        let idx = b.changeset(cs_create, uid, &name, t, "new city", 7);
        b.edit(
            idx,
            node(
                node_id,
                1.0 + j as f64,
                1.0,
                1,
                &[("place", "city"), ("name", "Atlantis")],
            ),
            EditOp::Create,
            1,
            1,
        );
        expected_deletion.push(cs_create);
        if j < 3 {
            let cs_grow = 5101 + 2 * j;
            let idx = b.changeset(cs_grow, uid, &name, t + DAY, "grow city", 7);
            b.edit(
                idx,
                node(
                    node_id,
                    1.0 + j as f64,
                    1.0,
                    2,
                    &[
                        ("place", "city"),
                        ("name", "Atlantis"),
                        ("population", "9000000"),
                    ],
                ),
                EditOp::Modify,
                2,
                1,
            );
            expected_deletion.push(cs_grow);
        }
    }

    // An object with two distinct regular authors; deleting it must
    // attribute nothing.
    let idx = b.changeset(
        5501,
        100,
        "mapper0",
        t_vandal + 30 * DAY,
        "add viewpoint",
        0,
    );
    b.edit(
        idx,
        node(9300, 3.0, 3.0, 1, &[("tourism", "viewpoint")]),
        EditOp::Create,
        1,
        1,
    );
    let idx = b.changeset(
        5502,
        101,
        "mapper1",
        t_vandal + 31 * DAY,
        "name the viewpoint",
        1,
    );
    b.edit(
        idx,
        node(
            9300,
            3.0,
            3.0,
            2,
            &[("tourism", "viewpoint"), ("name", "Lookout")],
        ),
        EditOp::Modify,
        2,
        1,
    );

    let t_revert = t_vandal + 40 * DAY;

    // Reverts naming the explicit vandals (uid 300).
    for i in 0..3u64 {
        let id = 6001 + i;
        let comment = format!(
            "revert vandalism, changesets {} and {}",
            5000 + 2 * i,
            5001 + 2 * i
        );
        b.changeset(id, 300, "moderator", t_revert + i as i64 * DAY, &comment, 0);
        revert_ids.push(id);
    }

    // Reverts deleting the single-author nodes (uid 300 and 301 alternating).
    for j in 0..6u64 {
        let id = 6101 + j;
        let uid = 300 + (j % 2);
        let username = if uid == 300 {
            "moderator"
        } else {
            "moderator2"
        };
        let idx = b.changeset(
            id,
            uid,
            username,
            t_revert + (4 + j) as i64 * DAY,
            "removing vandalism from the map",
            0,
        );
        let (prior_ver, prior_tags): (u64, &[(&str, &str)]) = if j < 3 {
            (
                2,
                &[
                    ("place", "city"),
                    ("name", "Atlantis"),
                    ("population", "9000000"),
                ],
            )
        } else {
            (1, &[("place", "city"), ("name", "Atlantis")])
        };
        b.edit(
            idx,
            node(9100 + j, 1.0 + j as f64, 1.0, prior_ver, prior_tags),
            EditOp::Delete,
            prior_ver + 1,
            1,
        );
        revert_ids.push(id);
    }

    // Revert of the two-author node: underspecified, contributes nothing.
    let idx = b.changeset(
        6201,
        300,
        "moderator",
        t_revert + 12 * DAY,
        "revert vandalism",
        0,
    );
    b.edit(
        idx,
        node(
            9300,
            3.0,
            3.0,
            2,
            &[("tourism", "viewpoint"), ("name", "Lookout")],
        ),
        EditOp::Delete,
        3,
        1,
    );
    revert_ids.push(6201);

    // A revert that mentions vandalism but names nothing and deletes nothing.
    b.changeset(
        6202,
        301,
        "moderator2",
        t_revert + 13 * DAY,
        "partial vandalism fix, more to do",
        0,
    );
    revert_ids.push(6202);

    SynthWorld {
        changesets: b.changesets,
        expected_explicit,
        expected_deletion,
        revert_ids,
    }
}
