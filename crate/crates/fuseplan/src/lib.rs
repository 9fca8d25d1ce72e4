//! File formats, configuration, reports and the command-line front end for
//! `fuseplan-core`.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod fpvd;
pub mod parallel;
pub mod profiles;
pub mod report;
pub mod trajectory;
