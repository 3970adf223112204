//! HTTP/JSON service and command-line front end for the radiology
//! annotation and dialogue engine.

pub mod api;
pub mod app;
pub mod cli;
pub mod config;
