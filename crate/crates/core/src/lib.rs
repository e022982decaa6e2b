//! Outdoor radio tomographic imaging: link-channel selection, adaptive
//! reference RSS, regularized reconstruction, background subtraction and
//! tracking, plus a forward-model simulator and evaluation harness.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases below fix it to
//! `f64`.

pub mod background;
pub mod channel;
pub mod config;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod io;
pub mod pipeline;
pub mod presets;
pub mod scalar;
pub mod scene;
pub mod selection;
pub mod simulate;
pub mod trace;
pub mod track;

pub use error::{Result, RtiError};
pub use scalar::Scalar;
pub use scene::{Channel, LinkKey, NodeId};
pub use selection::{SetTag, Strategy};

pub type Deployment = scene::Deployment<f64>;
pub type NodeRecord = scene::NodeRecord<f64>;
pub type Area = scene::Area<f64>;
pub type PixelGrid = scene::PixelGrid<f64>;
pub type SurveyMeasurement = scene::SurveyMeasurement<f64>;
pub type RtiConfig = config::RtiConfig<f64>;
pub type RssTrace = trace::RssTrace<f64>;
pub type TruthTrace = trace::TruthTrace<f64>;
pub type LinkChannelStats = channel::LinkChannelStats<f64>;
pub type PathLossModel = channel::PathLossModel<f64>;
pub type SelectionSet = selection::SelectionSet<f64>;
pub type ScenarioConfig = simulate::ScenarioConfig<f64>;
pub type ImagingModel = pipeline::ImagingModel<f64>;
pub type Pipeline<'m> = pipeline::Pipeline<'m, f64>;
pub type TrackerConfig = track::TrackerConfig<f64>;
pub type ExperimentOptions = eval::ExperimentOptions<f64>;
