//! Command-line tool and HTTP service for questions over IFC building models.

pub mod cli;
pub mod config;
pub mod query;
pub mod service;
