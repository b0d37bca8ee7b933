//! Fill-in-middle protein sequence design and the secondary-structure
//! infilling recovery benchmark.
//!
//! The crate is organised bottom-up:
//!
//! - [`seqcore`]: residue alphabet, tokenization, FIM transformation and span sampling
//! - [`lm`]: decoder-only transformer inference over a portable weight bundle
//! - [`generators`]: candidate middle-segment generators behind one interface
//! - [`structio`]: mmCIF/PDB parsing, interaction sites, corpus statistics
//! - [`dssp`]: Kabsch–Sander secondary-structure assignment and class mappings
//! - [`seifer`]: the benchmark engine (sites, oracles, judging, metrics, ablations)
//! - [`fitness`]: zero-shot fitness scoring and Spearman correlation

pub mod dssp;
pub mod fitness;
pub mod generators;
pub mod lm;
pub mod plot;
pub mod rng;
pub mod seifer;
pub mod seqcore;
pub mod structio;
