//! Comparison approaches: pairwise marginals, interval hierarchies (full and
//! pairwise), the per-attribute square-wave baseline, and the uniform guess.

pub mod calm;
pub mod hierarchy;
pub mod hio;
pub mod lhio;
pub mod msw;

pub use calm::CalmModel;
pub use hierarchy::{constrained_inference, HierNode, Hierarchy1D};
pub use hio::{HioModel, DEFAULT_BRANCHING};
pub use lhio::LhioModel;
pub use msw::{uni_answer, MswModel};
