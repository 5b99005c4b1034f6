//! Estimation of bilateral digital trade from firm revenues and observed
//! consumption, with trade analytics and economic complexity measures.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod boost;
pub mod complexity;
pub mod data_model;
pub mod features;
pub mod harmonize;
pub mod pipeline;
pub mod stats;
pub mod transport;
