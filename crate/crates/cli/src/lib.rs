//! Command line and HTTP front ends for the `ilc2d` library.

pub mod api;
pub mod commands;
pub mod config;
