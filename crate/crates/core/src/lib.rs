pub mod bench;
pub mod cli;
pub mod graph;
pub mod learn;
pub mod qpca;
pub mod sections;
pub mod subspace;
