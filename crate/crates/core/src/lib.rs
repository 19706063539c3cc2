//! Vandalism detection for OpenStreetMap changesets.
//!
//! The crate is organized along the processing pipeline:
//!
//! - [`osm`]: the changeset / edit / object domain model
//! - [`ingest`]: changeset-dump and osmChange XML parsing
//! - [`store`]: the line-delimited changeset store with version history
//! - [`miner`]: ground-truth extraction from vandalism reverts
//! - [`features`]: changeset / user / edit feature vectors and normalization
//! - [`nn`]: dense-tensor neural primitives with reverse-mode differentiation
//! - [`model`]: the attention-based classifier, training, and checkpoints
//! - [`eval`]: metrics, threshold sweeps, baselines, and random search

pub mod eval;
pub mod features;
pub mod ingest;
pub mod miner;
pub mod model;
pub mod nn;
pub mod osm;
pub mod store;
pub mod synth;

pub use osm::{BoundingBox, Changeset, Coord, Edit, EditOp, ObjectKind, OsmObject, UserHistory};
pub use store::ChangesetStore;
