//! Base listener and speaker sequence models for grounded sequential tasks,
//! with pragmatic reranking on top.

pub mod error;
pub mod harness;
pub mod listener;
pub mod neural;
pub mod pragmatics;
pub mod sail;
pub mod speaker;
pub mod scone;
pub mod vocab;
pub mod world;

pub use error::{ActionError, Error, Result};
pub use world::{Action, Domain, Instance, Segment, Split, WorldState};
