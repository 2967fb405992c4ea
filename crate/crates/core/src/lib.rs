//! Generation and probing of Dutch cross-serial dependency corpora.

pub mod builtin;
pub mod derivation;
pub mod grammar;
pub mod harness;
pub mod lexicon;
pub mod probe;
