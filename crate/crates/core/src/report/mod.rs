//! Figures and result files.

mod results;
mod svg;

pub use results::*;
pub use svg::*;
