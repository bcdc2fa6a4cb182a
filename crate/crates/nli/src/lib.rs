//! File formats, corpus handling, the experiment grid and the command-line
//! front end around `nli-core`.

pub mod cli;
pub mod corpus;
pub mod experiments;
pub mod report;
pub mod store;
pub mod wav;
