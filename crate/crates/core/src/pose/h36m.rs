//! Human3.6M skeleton layout.
//!
//! The raw exp-map files store 33 triples per frame: the global translation
//! followed by one rotation per joint of the 32-joint tree below.

use super::partition::PartMap;
use super::skeleton::Skeleton;
use crate::error::Result;

pub const JOINT_NAMES: [&str; 32] = [
    "Hips", "RightUpLeg", "RightLeg", "RightFoot", "RightToeBase", "RightToeSite",
    "LeftUpLeg", "LeftLeg", "LeftFoot", "LeftToeBase", "LeftToeSite",
    "Spine", "Spine1", "Neck", "Head", "HeadSite",
    "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand", "LeftHandThumb", "LeftThumbSite",
    "LeftWristEnd", "LeftWristSite",
    "RightShoulder", "RightArm", "RightForeArm", "RightHand", "RightHandThumb", "RightThumbSite",
    "RightWristEnd", "RightWristSite",
];

pub const PARENTS: [i64; 32] = [
    -1, 0, 1, 2, 3, 4, 0, 6, 7, 8, 9, 0, 11, 12, 13, 14, 12, 16, 17, 18, 19, 20, 19, 22, 12, 24, 25,
    26, 27, 28, 27, 30,
];

/// Rest offsets of subject S1, millimetres.
pub const OFFSETS: [[f64; 3]; 32] = [
    [0.0, 0.0, 0.0],
    [-132.948591, 0.0, 0.0],
    [0.0, -442.894612, 0.0],
    [0.0, -454.206447, 0.0],
    [0.0, 0.0, 162.767078],
    [0.0, 0.0, 74.999437],
    [132.948826, 0.0, 0.0],
    [0.0, -442.894413, 0.0],
    [0.0, -454.206590, 0.0],
    [0.0, 0.0, 162.767426],
    [0.0, 0.0, 74.999948],
    [0.0, 0.1, 0.0],
    [0.0, 233.383263, 0.0],
    [0.0, 257.077681, 0.0],
    [0.0, 121.134938, 0.0],
    [0.0, 115.002227, 0.0],
    [0.0, 257.077681, 0.0],
    [0.0, 151.034226, 0.0],
    [0.0, 278.882773, 0.0],
    [0.0, 251.733451, 0.0],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 99.999627],
    [0.0, 100.000188, 0.0],
    [0.0, 0.0, 0.0],
    [0.0, 257.077681, 0.0],
    [0.0, 151.031437, 0.0],
    [0.0, 278.892924, 0.0],
    [0.0, 251.728680, 0.0],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 99.999888],
    [0.0, 137.499922, 0.0],
    [0.0, 0.0, 0.0],
];

/// The 22 joints kept for 3D-coordinate experiments, as indices into the
/// 32-joint tree.
pub const XYZ_JOINTS: [usize; 22] = [2, 3, 4, 5, 7, 8, 9, 10, 12, 13, 14, 15, 17, 18, 19, 21, 22, 25, 26, 27, 29, 30];

/// Exp-map dimensions (out of 99) that vary in the recorded data; all others
/// are constant or global.
pub const ANGLE_DIMS_USED: [usize; 48] = [
    6, 7, 8, 9, 12, 13, 14, 15, 21, 22, 23, 24, 27, 28, 29, 30, 36, 37, 38, 39, 40, 41, 42, 43, 44,
    45, 46, 47, 51, 52, 53, 54, 55, 56, 57, 60, 61, 62, 75, 76, 77, 78, 79, 80, 81, 84, 85, 86,
];

pub fn skeleton() -> Result<Skeleton> {
    Skeleton::new(
        &PARENTS,
        OFFSETS.to_vec(),
        JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Torso (with neck and head), arms and legs over the 22-joint layout.
pub fn part_map_22() -> PartMap {
    let limb = |name: &str, js: &[usize]| (name.to_string(), js.to_vec());
    PartMap {
        limbs: vec![
            limb("torso", &[8, 9, 10, 11]),
            limb("left_arm", &[12, 13, 14, 15, 16]),
            limb("right_arm", &[17, 18, 19, 20, 21]),
            limb("left_leg", &[4, 5, 6, 7]),
            limb("right_leg", &[0, 1, 2, 3]),
        ],
    }
}
