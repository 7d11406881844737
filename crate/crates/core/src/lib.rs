//! Epidemic risk maps and long-term migration prediction from call detail records.
//!
//! Two pipelines share one data model:
//!
//! * **Risk maps**: infer each client's home antenna from weeknight activity,
//!   tag the social neighbors of endemic-zone residents as vulnerable, and
//!   aggregate resident, vulnerable and call-volume indicators per antenna.
//! * **Migration prediction**: build per-user features from the present window
//!   (T1) and predict whether the user lived in the endemic zone during the
//!   past window (T0) with L2-regularized logistic regression.
//!
//! Every aggregation (ingestion statistics, the communication graph, call
//! tallies) is a commutative monoid under [`Merge`], so shards can be built
//! independently and combined in any order.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod classifier;
pub mod cli;
pub mod error;
pub mod features;
pub mod graph;
pub mod homes;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod provenance;
pub mod riskmap;
mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use graph::{build_graph, CommGraph, EdgeStats};
pub use homes::{infer_homes, residents_of, HomeAssignment};
pub use ingest::{parse_cdr_stream, IngestReport};
pub use model::{
    classify_time, Antenna, AntennaId, AntennaRegistry, CallRecord, Direction, EndemicZone, StudyWindow, TimeBucket,
    UserId,
};
pub use riskmap::{aggregate, filter_map, tag_vulnerable, AntennaStats, RiskMap, RiskParams};

pub type LatLon = model::geo::LatLon<f64>;
pub type Dataset = classifier::Dataset<f64>;
pub type LogRegModel = classifier::LogRegModel<f64>;
pub type NaiveBayes = classifier::MultinomialNb<f64>;
pub type Metrics = classifier::Metrics<f64>;
pub type Standardizer = classifier::Standardizer<f64>;

/// Commutative, associative combination of partial aggregates.
pub trait Merge: Sized {
    fn merge(&mut self, other: Self);

    fn merged(mut self, other: Self) -> Self {
        self.merge(other);
        self
    }
}
