//! File formats, corpus loading and the command-line front end around
//! `structura-core`.

pub mod cli;
pub mod config;
pub mod export;
pub mod manifest;
pub mod midi;
pub mod pipeline;
pub mod synth;
