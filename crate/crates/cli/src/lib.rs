//! Command-line front end and live service for the bicycle balance laboratory.

pub mod commands;
pub mod live;
pub mod replay;
pub mod server;
pub mod wire;
