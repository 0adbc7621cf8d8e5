//! Configuration, orchestration and artifact output for `nsf-layers`.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod svg;
pub mod verify;
