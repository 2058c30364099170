//! Block-level fault localization for SystemVerilog designs.

pub mod hdl;
pub mod logic;
pub mod blocks;
pub mod eval;
pub mod wave;
pub mod dataflow;
pub mod coverage;
pub mod slice;
pub mod sim;
pub mod agent;
pub mod harness;
