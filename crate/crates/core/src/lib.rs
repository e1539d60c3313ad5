pub mod cli;
pub mod closedloop;
pub mod error;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod moments;
pub mod sdp;
pub mod settings;
pub mod simulator;
pub mod synthesis;

pub use error::{Error, Result};
pub use settings::NumericSettings;
