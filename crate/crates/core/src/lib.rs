//! Appreciation pipeline for open-source packages.
//!
//! The crate is organised as a set of stages that can be used on their own or
//! chained together by the `kudos` binary:
//!
//! * [`scanner`] finds the lines of a source file that interface with an
//!   imported package.
//! * [`ledger`] stores anonymous thanks events and folds them into thanked
//!   objects.
//! * [`attribution`] maps thanked objects to repositories, files, and recent
//!   contributors.
//! * [`notify`] batches credits into one digest per contributor and delivers
//!   them to an outbox or a mail server.
//! * [`insights`] computes package statistics, badges, and usage summaries.
//! * [`server`] exposes the HTTP API used by editor companions.

pub mod attribution;
pub mod config;
pub mod insights;
pub mod language;
pub mod ledger;
pub mod notify;
pub mod pipeline;
pub mod scanner;
pub mod server;
pub mod window;

pub use language::{Ecosystem, Language, Scope, Target};
pub use window::TimeWindow;
