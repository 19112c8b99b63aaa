//! Temporal saliency toolkit.
//!
//! * [`gaze`]: gaze logs, fixation timestamp recovery, temporal slicing and rasterization.
//! * [`metrics`]: AUC-Judd, sAUC, NSS, CC, KL, SIM and IG, plus CC/KL as tape nodes.
//! * [`analysis`]: inter-slice correlation, intra-slice deviation, attention-shift
//!   maps, saliency/time histograms and paired t-tests.
//! * [`model`]: a small encoder with temporal and image decoders, the
//!   spatiotemporal mixing module and the two-stage training loop.
//! * [`synth`]: seeded synthetic scenes and observers.
//! * [`tensor`], [`autodiff`], [`optim`], [`checkpoint`]: the numeric core.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod gaze;
pub mod io;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod tensor;
