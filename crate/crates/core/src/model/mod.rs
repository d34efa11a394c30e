//! Controlled path-dependent dynamics `dX = b(t, X, u) dt + u dB` in discrete time.

mod control;
mod drift;
mod kernel;
mod simulate;
mod tree;

pub use control::{Control, ControlSet};
pub use drift::{drift_eval, interpolate_table, DriftSpec};
pub use kernel::{step_kernel, Branching, StepKernel};
pub use simulate::{simulate_paths, simulate_paths_from, FeedbackFn, McControl, PathSample};
pub use tree::{expand_tree, NodeId, ScenarioTree, TreeSpec, TreeSummary, DEFAULT_NODE_CAP};
