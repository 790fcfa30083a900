//! Energy-optimal placement of health-monitoring processing servers.
//!
//! Clinics stream patient sensor records (ECG windows, fall-detection
//! video) over LTE base stations into a GPON access network. The records
//! must be processed by dedicated processing servers and the results
//! archived in cloud storage, all within a per-record deadline. Servers
//! can sit deep in the network (ONUs, OLT: "fog") or next to the cloud
//! storage ("cloud"); the placement changes how far every bit travels and
//! therefore how much energy the network and the servers burn.
//!
//! The crate models one reporting cycle in three phases, each with its own
//! derived rate and duration:
//!
//! * upload: clinics -> base stations -> chosen servers (`delta_a`, `tau_a`)
//! * feedback: servers -> base stations -> clinics (`delta_b`, `tau_b`)
//! * storage: servers -> cloud archive (`delta_c`, `tau_c`)
//!
//! Modules, bottom-up:
//!
//! * [`topology`]: node/link schema, loader with wiring invariants, BFS
//!   min-hop paths with deterministic tie-breaking.
//! * [`power`]: device power profiles, the affine load/power model and the
//!   idle-share attribution for shared devices.
//! * [`traffic`]: per-phase rate derivation (quantization to physical
//!   resource blocks, deadline split, storage share).
//! * [`instance`] / [`solution`]: a solvable placement problem and a fully
//!   routed candidate answer.
//! * [`energy`]: the evaluator (solution -> joules by network segment) and
//!   an independent constraint validator.
//! * [`exact`]: the mixed-integer model, a branch-and-bound solver over LP
//!   relaxations, LP text export/re-parse, and an exhaustive enumeration
//!   oracle for cross-checking.
//! * [`heuristic`]: the fast greedy placement used for full-size instances.
//! * [`scenario`]: dataset/scenario loading and deterministic CSV sweeps.
//! * [`synth`]: seeded random instance generation for solver campaigns.

pub mod energy;
pub mod exact;
pub mod heuristic;
pub mod instance;
pub mod power;
pub mod scenario;
pub mod solution;
pub mod synth;
pub mod topology;
pub mod traffic;

pub use energy::{evaluate, validate, EnergyBreakdown, ValidationReport};
pub use instance::{Instance, PhiMode, PlacementMode};
pub use power::{DeviceProfile, ProfileCatalog};
pub use solution::PlacementSolution;
pub use topology::{NodeKind, Topology};
pub use traffic::{AppProfile, PhaseParams, PrbRounding};
