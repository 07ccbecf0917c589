//! Corpus-to-taxonomy pipeline for skill extraction from job postings.

pub mod clustering;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod labeling;
pub mod mining;
pub mod providers;
pub mod selection;
pub mod synthetic;
pub mod taxonomy;
pub mod text;

pub use error::{Error, Result};
