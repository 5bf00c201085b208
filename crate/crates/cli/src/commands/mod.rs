pub mod build_map;
pub mod experiment;
pub mod fit;
pub mod summarize;
pub mod synth;
