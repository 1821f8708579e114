//! Facility location and k-means in a simulated massively parallel
//! computation (MPC) model.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds points, instances, the cost function and the constant table.
//! * [`graph`] builds the multi-scale LSH spanner and answers 2-hop ball queries.
//! * [`mpc`] simulates machines of bounded memory and charges rounds to a ledger.
//! * [`ruling`] has Luby-style marking, ruling sets, weighted cover sets and MIS.
//! * [`facility`] runs the seven-step facility location pipeline and its dual certificate.
//! * [`kmeans`] reduces k-means to facility location via a λ bracket and randomized rounding.
//! * [`oracles`] contains sequential ground truth used by tests and the verifier.

pub mod error;
pub mod facility;
pub mod graph;
pub mod io;
pub mod kmeans;
pub mod model;
pub mod mpc;
pub mod oracles;
pub mod rng;
pub mod ruling;

pub use error::{Error, Result};

pub use facility::{solve_fl, FlConfig, FlSolution, Mode};
pub use kmeans::{solve_kmeans, KMeansConfig, KMeansSolution};
pub use graph::{build_spanner, exact_mode_spanner, LshParams, SpannerGraph};

pub use model::{cost, make_constants, ConstantTable, FlInstance, KMeansInstance, PointSet};
pub use mpc::{ClusterConfig, RoundLedger};
