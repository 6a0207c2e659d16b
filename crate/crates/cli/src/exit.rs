//! Process exit codes.

use ralp_core::costmodel::CostError;
use ralp_core::profiler::ProfileError;
use ralp_core::sim::SimError;
use ralp_core::ModelError;
use std::fmt;

pub const PARSE: u8 = 2;
pub const UNKNOWN_MODEL: u8 = 3;
pub const BAD_FLAG: u8 = 4;
pub const CAPACITY: u8 = 5;

/// A flag combination that clap cannot reject on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::UnknownBenchmark { .. } => UNKNOWN_MODEL,
        _ => PARSE,
    }
}

fn sim_code(e: &SimError) -> u8 {
    match e {
        e if e.is_capacity() => CAPACITY,
        SimError::Model(m) => model_code(m),
        SimError::Stalled { .. } => 1,
        _ => PARSE,
    }
}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ModelError>() {
            return model_code(e);
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return sim_code(e);
        }
        if cause.is::<UsageError>() || cause.is::<CostError>() {
            return BAD_FLAG;
        }
        if cause.is::<ProfileError>() {
            return PARSE;
        }
    }
    1
}
