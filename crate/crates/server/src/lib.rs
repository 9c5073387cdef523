//! HTTP service, durable event store and operations commands for the
//! co-creation studio.

pub mod api;
pub mod commands;
pub mod jobs;
pub mod store;
