//! Std side of obsval: solver processes, campaign configuration, the
//! experiment database, the campaign driver and reports.

pub mod config;
pub mod db;
pub mod harness;
pub mod report;
pub mod solver;

