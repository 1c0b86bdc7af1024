//! Document grounding toolkit: grounded-text markup, box extraction by
//! re-rendering, reading-order merging of block lists, corpus I/O,
//! post-annotation, sample verification and bench scoring.

pub mod annotate;
pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod index;
pub mod layout;
pub mod markup;
pub mod raster;
pub mod synth;
pub mod taxonomy;
pub mod templates;
pub mod text;
pub mod verify;
