pub mod analyzer;
pub mod dataset_gen;
pub mod fgc_sei;
pub mod media_io;
pub mod metrics;
pub mod scalar;
pub mod seed;
pub mod synthesis;
pub mod tensor;
