pub mod ast;
pub mod harness;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;

#[cfg(test)]
pub(crate) mod testutil;
