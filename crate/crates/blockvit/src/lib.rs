//! File formats, dataset directories and the command-line front-end for
//! [`blockvit_core`].

pub mod cli;
pub mod dataset;
pub mod keyfile;
pub mod ppm;
pub mod report;
pub mod weights;

pub use blockvit_core;
