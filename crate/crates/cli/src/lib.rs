//! Problem files, the bundled fixture corpus, result records and the
//! commands behind the `cco` binary.

pub mod commands;
pub mod fixtures;
pub mod problem;
pub mod report;
