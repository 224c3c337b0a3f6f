pub mod analysis;
pub mod corpus;
pub mod llm;
pub mod outputs;
pub mod metrics;
pub mod par;
pub mod perturb;
pub mod pipeline;
pub mod provenance;
pub mod ratings;
pub mod report;
pub mod scores;
pub mod synth;
pub mod textkit;
