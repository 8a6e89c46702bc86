//! Benchmark tasks, dataset generators and hyperparameter search.

pub mod config;
pub mod firing;
pub mod mnist;
pub mod pattern;
pub mod reservoir;
pub mod search;
