//! Property tests for the store and domain invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use ovid_core::osm::{BoundingBox, Changeset, Coord, Edit, EditOp, ObjectKind, OsmObject};
use ovid_core::store::ChangesetStore;

fn coord_strategy() -> impl Strategy<Value = Coord> {
    (-90.0f64..90.0, -180.0f64..180.0).prop_map(|(lat, lon)| Coord::new(lat, lon))
}

fn tags_strategy() -> impl Strategy<Value = BTreeMap<String, String>> {
    proptest::collection::btree_map("[a-z]{1,8}", "[a-zA-Z0-9 ]{0,12}", 0..4)
}

fn edit_strategy(object_id: u64) -> impl Strategy<Value = Edit> {
    (coord_strategy(), tags_strategy(), 0i64..2_000_000_000).prop_map(move |(c, tags, t)| Edit {
        object: OsmObject {
            id: object_id,
            kind: ObjectKind::Node,
            coords: vec![c],
            tags,
            ver: 1,
        },
        op: EditOp::Create,
        ver: 1,
        t,
    })
}

fn changeset_strategy(id: u64) -> impl Strategy<Value = Changeset> {
    (
        proptest::collection::vec(edit_strategy(id * 100), 0..5),
        0u64..50,
        "[ -~]{0,40}",
        0i64..2_000_000_000,
        proptest::option::of((coord_strategy(), coord_strategy())),
    )
        .prop_map(move |(mut edits, uid, comment, t, bbox)| {
            for (k, e) in edits.iter_mut().enumerate() {
                e.object.id = id * 100 + k as u64;
            }
            Changeset {
                id,
                edits,
                t,
                uid,
                username: format!("u{uid}"),
                comment,
                created_by: None,
                imagery_used: None,
                bbox: bbox.map(|(a, b)| BoundingBox {
                    min_lat: a.lat.min(b.lat),
                    min_lon: a.lon.min(b.lon),
                    max_lat: a.lat.max(b.lat),
                    max_lon: a.lon.max(b.lon),
                }),
            }
        })
}

fn store_strategy() -> impl Strategy<Value = Vec<Changeset>> {
    proptest::collection::vec(0u64..1_000_000, 1..20).prop_flat_map(|ids| {
        let unique: Vec<u64> = {
            let mut v = ids;
            v.sort_unstable();
            v.dedup();
            v
        };
        unique
            .into_iter()
            .map(changeset_strategy)
            .collect::<Vec<_>>()
    })
}

proptest! {
    /// The computed envelope contains every node coordinate of the edits.
    #[test]
    fn bbox_envelope_contains_all_coordinates(cs in changeset_strategy(7)) {
        let mut no_declared = cs.clone();
        no_declared.bbox = None;
        match no_declared.bounding_box() {
            Some(b) => {
                for e in &no_declared.edits {
                    for c in &e.object.coords {
                        prop_assert!(b.contains(c), "{c:?} outside {b:?}");
                    }
                }
            }
            None => {
                prop_assert!(no_declared.edits.iter().all(|e| e.object.coords.is_empty()));
            }
        }
    }

    /// save -> load -> save is byte-identical for arbitrary stores.
    #[test]
    fn store_round_trip_bytes(changesets in store_strategy()) {
        let mut store = ChangesetStore::new();
        for cs in changesets {
            store.insert_changeset(cs).unwrap();
        }
        let mut first = Vec::new();
        store.save(&mut first).unwrap();
        let reloaded = ChangesetStore::load(&first[..]).unwrap();
        let mut second = Vec::new();
        reloaded.save(&mut second).unwrap();
        prop_assert_eq!(first, second);
    }
}

#[test]
fn every_edit_reachable_from_exactly_one_changeset() {
    let store = ovid_core::synth::build_world().to_store();
    // Each (changeset id, edit index) pair is a distinct edit owned by that
    // changeset; version index entries must account for each exactly once.
    let total_edits: usize = store.changesets().map(|c| c.edits.len()).sum();
    let mut indexed = 0usize;
    let mut object_ids: Vec<(u64, ObjectKind)> = store
        .changesets()
        .flat_map(|c| c.edits.iter().map(|e| e.object.identity()))
        .collect();
    object_ids.sort_unstable();
    object_ids.dedup();
    for (id, kind) in object_ids {
        let history = store.version_history(id, kind);
        indexed += history.len();
        // Version chains are strictly increasing and gapless.
        for pair in history.windows(2) {
            assert_eq!(pair[1].ver, pair[0].ver + 1, "gap in {id}/{kind:?}");
        }
        assert_eq!(
            history[0].ver, 1,
            "chain for {id}/{kind:?} does not start at v1"
        );
        // Creates carry version 1.
        for entry in history {
            if entry.op == EditOp::Create {
                assert_eq!(entry.ver, 1);
            }
        }
    }
    assert_eq!(indexed, total_edits);
    assert!(store.parked().is_empty());
}

#[test]
fn user_history_matches_brute_force_scan() {
    let world = ovid_core::synth::build_world();
    let store = world.to_store();
    let histories = store.build_user_histories();

    // Brute force over the raw changeset stream for a spread of users and
    // query times.
    for uid in [100, 105, 119, 201, 211, 300] {
        let h = histories
            .get(uid)
            .unwrap_or_else(|| panic!("no history for {uid}"));
        let mut times: Vec<i64> = store.changesets().map(|c| c.t).collect();
        times.push(i64::MAX);
        times.sort_unstable();
        for &t in times.iter().step_by(17) {
            let mut creates = 0;
            let mut modifies = 0;
            let mut deletes = 0;
            let mut weeks = std::collections::BTreeSet::new();
            for cs in store.changesets().filter(|c| c.uid == uid) {
                if cs.t < t {
                    weeks.insert(ovid_core::osm::iso_week_bucket(cs.t));
                }
                for e in &cs.edits {
                    if e.t < t {
                        match e.op {
                            EditOp::Create => creates += 1,
                            EditOp::Modify => modifies += 1,
                            EditOp::Delete => deletes += 1,
                        }
                    }
                }
            }
            assert_eq!(h.past_creates(t), creates, "uid {uid} at {t}");
            assert_eq!(h.past_modifications(t), modifies);
            assert_eq!(h.past_deletes(t), deletes);
            assert_eq!(h.contributions(t), creates + modifies + deletes);
            assert_eq!(h.active_weeks(t), weeks.len() as u64);
        }
    }
}

#[test]
fn edit_feature_one_hot_blocks_sum_to_one() {
    let world = ovid_core::synth::build_world();
    let store = world.to_store();
    let featurizer = ovid_core::features::Featurizer::with_defaults(&store);
    for cs in store.changesets() {
        let (rows, _) = featurizer.edit_matrix(cs);
        for row in rows {
            let type_sum: f64 = row[0..3].iter().sum();
            let op_sum: f64 = row[3..6].iter().sum();
            assert_eq!(type_sum, 1.0);
            assert_eq!(op_sum, 1.0);
        }
        let x_c = featurizer.changeset_features(cs);
        let editor_sum: f64 = x_c[9..x_c.len() - 2].iter().sum();
        assert_eq!(editor_sum, 1.0);
    }
}
