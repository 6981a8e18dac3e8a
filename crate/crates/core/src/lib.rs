pub mod adm;
pub mod attack;
pub mod dynamics;
pub mod grid_model;
pub mod harness;
pub mod ingest;
pub mod lfc;
pub mod optimizer;
pub mod par;
