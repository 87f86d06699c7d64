//! IO companion to `wigbell-core`: strict experiment configs, command
//! drivers with atomic report writing, and run manifests.

pub mod config;
pub mod manifest;
pub mod runner;
