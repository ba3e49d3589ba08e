//! Pose sequences, file I/O, preprocessing, skeleton partitions, forward
//! kinematics and synthetic motion.

pub mod h36m;
pub mod partition;
pub mod preprocess;
pub mod sequence;
pub mod skeleton;
pub mod synth;

pub use partition::{make_partition, Level, PartMap, PartPartition};
pub use preprocess::{preprocess, reconstruct};
pub use sequence::{load_sequence, PoseSequence, RemovedCoords, Representation};
pub use skeleton::{expmap_to_xyz, rodrigues, Skeleton};
pub use synth::{
    add_noise, synth_periodic, synth_repeat_after_gap, synth_triangle, PeriodicSpec, RepeatLayout, RepeatSpec,
    TriangleSpec,
};
