//! Detection and mitigation of uninitialized-memory leaks through struct
//! padding at enclave call boundaries.
//!
//! The pipeline is [`decl::parse`] → [`decl::resolve`] → [`layout`] →
//! [`leak::analyze`], with [`codegen`] producing copy plans and proxy C code
//! for a chosen [`codegen::Strategy`] and [`taint`] replaying those plans
//! byte by byte to show which secret bytes reach untrusted memory.

pub mod cli;
pub mod codegen;
pub mod decl;
pub mod layout;
pub mod leak;
pub mod taint;
