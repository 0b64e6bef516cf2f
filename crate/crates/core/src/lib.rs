//! Camera-based respiratory motion extraction.
//!
//! Frames are cut into blocks, reduced to vertical profiles, compared between
//! frames by cross-correlation or optical flow, and integrated into a
//! respiratory signal. A synthetic phantom generates test videos with known
//! ground truth, and the evaluation module scores detected breaths against it.

pub mod artifacts;
pub mod bench;
pub mod error;
pub mod eval;
pub mod frame;
pub mod framework;
pub mod motion;
pub mod phantom;
pub mod pipeline;
pub mod profiles;
pub mod rawvideo;
pub mod textio;

pub use error::{Error, Result};
pub use frame::{Frame, FrameSource, Region, VideoBuffer};
pub use framework::{AlgorithmId, BlockGrid};
pub use motion::{Strategy, VelocitySample};
pub use phantom::{GroundTruth, PhantomProtocol};
pub use pipeline::{PeakList, RespiratorySignal};
pub use profiles::ProfileKind;
