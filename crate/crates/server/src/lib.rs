pub mod cli;
pub mod config;
pub mod error;
pub mod http;
pub mod provider;
pub mod service;
