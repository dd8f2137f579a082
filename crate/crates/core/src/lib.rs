pub mod design;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod panel;
pub mod similarity;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
