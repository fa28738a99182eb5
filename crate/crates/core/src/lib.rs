pub mod dataset;
pub mod extraction;
pub mod geometry;
pub mod kv;
pub mod label;
pub mod metrics;
pub mod network;
pub mod tensor;
pub mod training;
