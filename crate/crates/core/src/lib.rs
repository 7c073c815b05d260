pub mod canonical;
pub mod explore;
pub mod fixtures;
pub mod gateway;
pub mod genesis;
pub mod model;
pub mod runtime;
pub mod testkit;
pub mod versions;
pub mod views;
pub mod workspace;
