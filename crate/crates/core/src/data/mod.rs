//! Two-person motion data: sequences, interaction clips, contact detection,
//! windowing, canonicalization, a synthetic dataset generator and the motion
//! file format.

mod canonical;
mod extract;
mod io;
mod motion;
mod synth;

pub use canonical::{canonical_frame, canonicalize, facing_direction, CanonicalFrame};
pub use extract::{detect_interactive_frames, extract_clips, Extraction, ExtractionConfig, ExtractionWarning};
pub use io::{
    read_motion, read_motion_document, read_motion_dir, write_motion, write_motion_document, MotionDocument,
    Provenance, MOTION_FORMAT_VERSION,
};
pub use motion::{InteractionClip, MotionSequence};
pub use synth::{synth_dataset, Archetype, SynthParams};
