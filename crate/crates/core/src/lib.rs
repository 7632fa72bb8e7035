pub mod corpus;
pub mod extract;
pub mod fusion;
pub mod graph;
pub mod linkpred;
pub mod llm;
pub mod metrics;
pub mod qa;
pub mod seeds;
pub mod stopwords;
