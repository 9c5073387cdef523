//! Core of the co-creative image ideation studio: sessions as event logs,
//! parameterized prompt sketches, ideation, refinement, provider adapters
//! and evaluation tooling.

pub mod blob;
pub mod clock;
pub mod demo;
pub mod evaluation;
pub mod ideation;
pub mod ids;
pub mod instructions;
pub mod providers;
pub mod refinement;
pub mod session;
pub mod sketch;
pub mod structured;
pub mod studio;
pub mod tiling;

pub use blob::{BlobRef, BlobStore, MemoryBlobStore};
pub use ideation::{IdeaCard, IdeaPatch, IdeationMode, Provenance};
pub use refinement::{RefinementRound, VariationRequest};
pub use session::{Event, EventKind, Session, SessionError, SessionLog};
pub use sketch::{Choice, RenderedPrompt, Selections, Sketch};
pub use studio::{SessionHandle, Studio, StudioConfig, StudioError};
