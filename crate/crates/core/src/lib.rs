#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod io;
pub mod patterns;
pub mod pipeline;
pub mod quad;
pub mod rng;
pub mod verify;
pub mod cftp;
pub mod selection;
pub mod regularize;
pub mod marking;
pub mod regen;
