use super::sequence::{PoseSequence, RemovedCoords, Representation};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Coordinates whose range over the whole sequence is below this are constant.
pub const CONSTANT_RANGE: f64 = 1e-9;

/// Downsamples by an integer stride, removes global motion and optionally
/// drops constant coordinates.
///
/// Global motion: for `xyz` the root joint position is subtracted from every
/// joint; for `expmap` the root rotation triple is zeroed. Constant `xyz`
/// coordinates are dropped per joint (a joint goes when all three of its
/// coordinates are constant); every other layout drops single coordinates and
/// the result carries `DIMS=1`.
pub fn preprocess(seq: &PoseSequence, target_fps: f64, drop_constant: bool) -> Result<PoseSequence> {
    if !(target_fps > 0.0) || target_fps > seq.fps() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {} fps to {} fps (no upsampling)",
            seq.fps(),
            target_fps
        )));
    }
    let stride = ((seq.fps() / target_fps).round() as usize).max(1);
    let k = seq.dim();
    let frames: Vec<usize> = (0..seq.frames()).step_by(stride).collect();
    let mut data = Vec::with_capacity(frames.len() * k);
    for &t in &frames {
        data.extend_from_slice(seq.frame(t));
    }

    if seq.dims() == 3 && seq.removed().is_none() {
        for row in data.chunks_mut(k) {
            match seq.repr() {
                Representation::Xyz => {
                    let root = [row[0], row[1], row[2]];
                    for j in 0..k / 3 {
                        for c in 0..3 {
                            row[3 * j + c] -= root[c];
                        }
                    }
                }
                Representation::Expmap => row[..3].iter_mut().for_each(|v| *v = 0.0),
            }
        }
    }
    let n = frames.len();
    let fps = seq.fps() / stride as f64;
    let resampled = Tensor::from_parts(vec![n, k], data);

    if !drop_constant {
        return Ok(PoseSequence::new(seq.repr(), seq.joints(), seq.dims(), fps, resampled)?
            .with_removed(seq.removed().cloned()));
    }

    let constant: Vec<bool> = (0..k)
        .map(|c| {
            let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let v = resampled.get(t, c);
                (lo.min(v), hi.max(v))
            });
            hi - lo < CONSTANT_RANGE
        })
        .collect();

    let joint_wise = seq.repr() == Representation::Xyz && seq.dims() == 3;
    let keep: Vec<usize> = if joint_wise {
        (0..k / 3)
            .filter(|&j| !(constant[3 * j] && constant[3 * j + 1] && constant[3 * j + 2]))
            .flat_map(|j| 3 * j..3 * j + 3)
            .collect()
    } else {
        (0..k).filter(|&c| !constant[c]).collect()
    };
    if keep.is_empty() {
        return Err(Error::InvalidArgument("every coordinate is constant".into()));
    }

    let mut out = Vec::with_capacity(n * keep.len());
    for t in 0..n {
        out.extend(keep.iter().map(|&c| resampled.get(t, c)));
    }
    let (joints, dims) = if joint_wise { (keep.len() / 3, 3) } else { (keep.len(), 1) };

    // compose with any earlier removal so indices always refer to the raw layout
    let removed = match seq.removed() {
        Some(prev) => {
            let mut fill = prev.fill.clone();
            for c in 0..k {
                fill[prev.kept[c]] = resampled.get(0, c);
            }
            RemovedCoords {
                original_joints: prev.original_joints,
                original_dims: prev.original_dims,
                kept: keep.iter().map(|&c| prev.kept[c]).collect(),
                fill,
            }
        }
        None => RemovedCoords {
            original_joints: seq.joints(),
            original_dims: seq.dims(),
            kept: keep.clone(),
            fill: (0..k).map(|c| resampled.get(0, c)).collect(),
        },
    };

    Ok(
        PoseSequence::new(seq.repr(), joints, dims, fps, Tensor::from_parts(vec![n, keep.len()], out))?
            .with_removed(Some(removed)),
    )
}

/// Re-inserts coordinates dropped by [`preprocess`], restoring the original
/// layout. Dropped coordinates take their constant value.
pub fn reconstruct(seq: &PoseSequence) -> Result<PoseSequence> {
    let Some(rem) = seq.removed() else {
        return Ok(seq.clone());
    };
    let k0 = rem.original_joints * rem.original_dims;
    let n = seq.frames();
    let mut data = Vec::with_capacity(n * k0);
    for t in 0..n {
        let mut row = rem.fill.clone();
        for (c, &orig) in rem.kept.iter().enumerate() {
            row[orig] = seq.frame(t)[c];
        }
        data.extend(row);
    }
    PoseSequence::new(
        seq.repr(),
        rem.original_joints,
        rem.original_dims,
        seq.fps(),
        Tensor::from_parts(vec![n, k0], data),
    )
}
