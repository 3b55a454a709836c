//! Container-native data persistence.
//!
//! A single master applies all writes and periodically emits full dumps.
//! Each dump is baked into an immutable, content-addressed image whose data
//! layer is the dump itself. Disposable read-only replicas are launched from
//! those images and never mount any storage; a gateway splits reads (to
//! replicas) from writes (to the master), and a rolling update swaps replicas
//! onto a new image without dropping below a minimum ready count. The
//! simulator composes all of it on a logical clock to measure how long a
//! write takes to become visible on every replica.
//!
//! Module map:
//!
//! - [`dump`]: SQL dump parsing, canonical emission, digests.
//! - [`master`]: the stateful write path and the generation/dump store.
//! - [`bakery`]: image baking, verification, export/import.
//! - [`runtime`]: simulated replica containers.
//! - [`gateway`]: read/write splitting and scenario policies.
//! - [`rollout`]: surge-then-drain replacement of a replica pool.
//! - [`simulator`]: staleness and availability measurements.
//! - [`demo`]: scripted end-to-end runs of each scenario policy.

pub mod bakery;
pub mod cli;
pub mod clock;
pub mod demo;
pub mod digest;
pub mod dump;
pub mod fixtures;
pub mod gateway;
pub mod master;
pub mod rollout;
pub mod runtime;
pub mod simulator;
pub mod storage;

pub use clock::{LogicalClock, Timestamp};
pub use digest::Digest;
