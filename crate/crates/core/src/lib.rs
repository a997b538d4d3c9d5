//! Compressed-domain detection and tracking of multiple moving objects.
//!
//! The pipeline reads a [`mbfs`] macroblock feature stream. Non-skip
//! macroblocks of each P-frame are clustered and filtered into per-entity
//! region trains ([`psmf`]); entities whose trains are temporally coherent
//! become tracked objects. At each I-frame the object blobs are refined by
//! partially decoding the predicted blob regions ([`intra`]), subtracting the
//! background and interpolating back over the preceding P-frames
//! ([`refine`]). Occlusions are tracked as merged regions and identities are
//! recovered from hue histograms after the objects separate ([`occlusion`]).

pub mod components;
pub mod image;
pub mod intra;
pub mod mbfs;
pub mod events;
pub mod occlusion;
pub mod psmf;
pub mod refine;
pub mod synth;
pub mod eval;
pub mod pipeline;
pub mod overlay;
