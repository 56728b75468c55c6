pub mod bands;
pub mod ontology;
pub mod scene;
pub mod frontend;
pub mod localization;
pub mod segregation;
pub mod attention;
pub mod config;
pub mod engine;
pub mod protocol;
pub mod harness;
