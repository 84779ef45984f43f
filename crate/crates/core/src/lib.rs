pub mod checkers;
pub mod cli;
pub mod consensus;
pub mod fixtures;
pub mod gqs;
pub mod harness;
pub mod history;
pub mod lattice;
pub mod model;
pub mod qaf;
pub mod register;
pub mod scenario;
pub mod sim;
pub mod snapshot;
