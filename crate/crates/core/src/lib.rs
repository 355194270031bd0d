//! Extraction programs for template documents, synthesized from a single
//! annotated example.
//!
//! Word boxes become primitive facts ([`factstore`]), a small SLD engine
//! ([`logic`]) proves `trans/3` chains over the transition catalog
//! ([`background`]), and [`synthesis`] generalizes every proof into a
//! program. [`training`] prunes the programs with a noisy clone and with
//! annotator feedback, and [`extraction`] lets them vote on new documents.
//! [`docgen`] renders synthetic corpora and [`harness`] scores models on
//! them.

pub mod background;
pub mod docgen;
pub mod extraction;
pub mod factstore;
pub mod harness;
pub mod logic;
pub mod synthesis;
pub mod training;
