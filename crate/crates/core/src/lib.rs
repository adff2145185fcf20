pub mod error;
pub mod tensor;
pub mod score;
pub mod moments;
pub mod cp;
pub mod activation;
pub mod fourier;
pub mod regression;
pub mod pipeline;
pub mod cli;
