//! Physiological stress features and individual performance calibration.

pub mod calibration;
pub mod cardiac;
pub mod dsp;
pub mod eda;
pub mod emg;
pub mod error;
pub mod features;
pub mod ingest;
mod linalg;
pub mod markers;
pub mod pipeline;
pub mod plot;
pub mod protocol;
pub mod series;
pub mod synth;

pub use error::{Error, Result};
pub use series::{slice_window, ChannelKind, TimeSeries, Window};
