#![cfg_attr(not(feature = "std"), no_std)]
extern crate alloc;

pub mod canonical;
pub mod catalog;
pub mod identity;
pub mod mpc;
pub mod orchestrator;
pub mod provisioning;
pub mod runtime;
