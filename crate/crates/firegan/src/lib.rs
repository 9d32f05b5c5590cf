//! Filesystem, configuration, and orchestration layer over `firegan-core`:
//! corpus loading, checkpoint persistence, the training loop, batch
//! evaluation, and the command-line interface.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod evaluation;
pub mod trainer;
