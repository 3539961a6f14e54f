//! labloop — a self-evolving research pipeline.
//!
//! The pipeline turns a user goal into a ranked research proposal and a
//! verifiable experiment-execution report, then distills the run's outcomes
//! and failures into two persistent vector memories that improve later runs.
//!
//! The crate is organised around the pipeline's moving parts:
//!
//! - [`gateway`] — one abstraction for chat generation and embeddings, with a
//!   live HTTP backend, a deterministic scripted mock, and full transcript
//!   recording.
//! - [`memory`] — the ideation and experimentation stores: persistent vector
//!   memories with cosine top-k retrieval and append-style updates.
//! - [`ideation`] — literature fetching and the tree-structured
//!   propose–review–refine search over candidate ideas.
//! - [`tournament`] — Elo ranking over swapped-position pairwise judgments,
//!   top-k selection, and extension of the winner into a full proposal.
//! - [`experiment`] — the four-stage generate–execute–diagnose–revise loop
//!   over code attempts in a subprocess sandbox.
//! - [`evolution`] — the three evolutions that convert a finished run into
//!   memory items: direction, validation, and strategy.
//! - [`pipeline`] — the durable run state machine tying it all together.
//!
//! Every capability has a runnable demonstration under `examples/`; start
//! with `examples/full_pipeline.rs`.

pub mod cli;
pub mod error;
pub mod evolution;
pub mod experiment;
pub mod gateway;
pub mod ideation;
pub mod memory;
pub mod pipeline;
pub mod tournament;

mod text;
mod workers;

pub use error::{Error, Result};
pub use gateway::{
    ChatBackend, ChatRequest, ChatResponse, EmbeddingBackend, EmbeddingVector, HashEmbedder,
    Message, ModelGateway, Role, ScriptedMockProgram, Transcript,
};
pub use memory::{MemoryItem, MemoryKind, MemoryStore, RetrievedContext, StoreName};
pub use ideation::{Idea, IdeaNode, LiteratureDoc, ReviewFeedback, UserGoal};
pub use tournament::{EloRating, MatchOutcome, MatchRecord, Proposal};
pub use experiment::{
    CodeAttempt, ExecutionRecord, ExecutionReport, RunStatus, Stage, StageHistory, StageName,
};
pub use evolution::{EvolutionFinding, EvolutionSource, ValidationVerdict};
pub use pipeline::{Phase, RunConfig, RunState};
