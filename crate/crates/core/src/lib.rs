//! Networked-microgrid day-ahead scheduling with asynchronous Lagrangian
//! coordination.
//!
//! * [`case`]: case files, validation and the bundled systems.
//! * [`builder`]: MILP formulations (centralized and per-microgrid).
//! * [`daslr`]: the asynchronous surrogate Lagrangian coordinator.
//! * [`admm`]: a synchronous consensus ADMM baseline.
//! * [`harness`]: discrete-event and threaded runners, run logs and replay.

pub mod admm;
pub mod builder;
pub mod case;
pub mod daslr;
pub mod harness;

pub use case::{load_case, resolve_case, NetworkCase};
