//! Deterministic simulation toolkit for two agent-training grounds: a
//! weakest-first security curriculum with persistent cross-session memory,
//! and a nine-agent hidden-role arena with covariation-based belief
//! attribution and Shapley credit assignment.

pub mod arena;
pub mod asat;
pub mod attribution;
pub mod credit;
pub mod csma;
pub mod cultivation;
pub mod experiment;
pub mod policy;
pub mod tldt;
