pub mod geometry;
pub mod world;
pub mod dsl;
pub mod mpc;
pub mod prompts;
pub mod text;
pub mod backend;
pub mod planner;
pub mod low_level;
pub mod verifier;
pub mod perceiver;
pub mod orchestrator;
pub mod report;
