#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod cli;
pub mod des;
pub mod error;
pub mod io;
pub mod methods;
pub mod network;
pub mod opf;
pub mod powerflow;
pub mod synth;
pub mod system;
