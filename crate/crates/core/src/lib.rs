//! Personalized relevance-feedback image retrieval.
//!
//! A session shows the user a batch of images, collects which ones look
//! similar to the image they have in mind, trains a small projection network
//! on those judgments with a separating-cluster contrastive loss, and ranks the
//! unseen pool by cosine similarity to the centroid of the projected similar
//! set. The crate also carries the baselines, a deterministic user simulator,
//! and the evaluation metrics used to compare them.

pub mod corpus;
pub mod engine;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod simulator;
pub mod vector;

pub use error::{Error, Result};
