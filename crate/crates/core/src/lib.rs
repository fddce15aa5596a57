pub mod attention;
pub mod corruption;
pub mod dataset;
pub mod error;
pub mod features;
pub mod metrics;
pub mod night;
pub mod pca;
pub mod pipeline;
pub mod raster;
pub mod svm;

mod binio;

pub use error::{Error, Result};
