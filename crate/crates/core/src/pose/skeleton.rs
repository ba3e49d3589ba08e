//! Kinematic trees and forward kinematics from exponential maps.

use super::sequence::{PoseSequence, Representation};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Skeleton {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    names: Vec<String>,
    order: Vec<usize>,
}

impl Skeleton {
    /// `parents[j] = -1` marks a root. Offsets are rest-pose translations
    /// from the parent, in millimetres.
    pub fn new(parents: &[i64], offsets: Vec<Vec3>, names: Vec<String>) -> Result<Self> {
        let n = parents.len();
        if offsets.len() != n || names.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} parents, {} offsets, {} names",
                n,
                offsets.len(),
                names.len()
            )));
        }
        let mut ps = Vec::with_capacity(n);
        for (j, &p) in parents.iter().enumerate() {
            ps.push(match p {
                -1 => None,
                p if p >= 0 && (p as usize) < n && p as usize != j => Some(p as usize),
                p => return Err(Error::InvalidArgument(format!("joint {j} has invalid parent {p}"))),
            });
        }
        let order = topo_order(&ps)?;
        Ok(Self {
            parents: ps,
            offsets,
            names,
            order,
        })
    }

    /// Joints named `j0, j1, ...`.
    pub fn unnamed(parents: &[i64], offsets: Vec<Vec3>) -> Result<Self> {
        let names = (0..parents.len()).map(|j| format!("j{j}")).collect();
        Self::new(parents, offsets, names)
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, j: usize) -> Option<usize> {
        self.parents[j]
    }

    pub fn offset(&self, j: usize) -> Vec3 {
        self.offsets[j]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Global joint positions for one frame of per-joint exp-map triples.
    pub fn forward_kinematics(&self, angles: &[f64]) -> Result<Vec<Vec3>> {
        let n = self.joint_count();
        if angles.len() != 3 * n {
            return Err(Error::InvalidArgument(format!(
                "skeleton has {n} joints but frame has {} angle values",
                angles.len()
            )));
        }
        let mut rot = vec![identity(); n];
        let mut pos = vec![[0.0; 3]; n];
        for &j in &self.order {
            let local = rodrigues([angles[3 * j], angles[3 * j + 1], angles[3 * j + 2]]);
            match self.parents[j] {
                Some(p) => {
                    let off = mat_vec(&rot[p], &self.offsets[j]);
                    pos[j] = [pos[p][0] + off[0], pos[p][1] + off[1], pos[p][2] + off[2]];
                    rot[j] = mat_mul(&rot[p], &local);
                }
                None => {
                    pos[j] = self.offsets[j];
                    rot[j] = local;
                }
            }
        }
        Ok(pos)
    }
}

fn topo_order(parents: &[Option<usize>]) -> Result<Vec<usize>> {
    let n = parents.len();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        let mut chain = Vec::new();
        let mut j = start;
        loop {
            match state[j] {
                2 => break,
                1 => return Err(Error::InvalidArgument(format!("cycle through joint {j}"))),
                _ => {
                    state[j] = 1;
                    chain.push(j);
                    match parents[j] {
                        Some(p) => j = p,
                        None => break,
                    }
                }
            }
        }
        for &c in chain.iter().rev() {
            state[c] = 2;
            order.push(c);
        }
    }
    Ok(order)
}

pub fn identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat_vec(a: &Mat3, v: &Vec3) -> Vec3 {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// Rotation matrix of an axis-angle vector (Rodrigues' formula).
pub fn rodrigues(e: Vec3) -> Mat3 {
    let theta2 = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    let theta = theta2.sqrt();
    // sin(θ)/θ and (1 − cos θ)/θ², with series near zero
    let (a, b) = if theta < 1e-8 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = [[0.0, -e[2], e[1]], [e[2], 0.0, -e[0]], [-e[1], e[0], 0.0]];
    let k2 = mat_mul(&k, &k);
    let mut r = identity();
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Converts an exp-map sequence (one triple per skeleton joint) into joint
/// positions.
pub fn expmap_to_xyz(seq: &PoseSequence, skel: &Skeleton) -> Result<PoseSequence> {
    if seq.repr() != Representation::Expmap {
        return Err(Error::Representation {
            expected: "expmap",
            got: seq.repr().as_str(),
        });
    }
    let nj = skel.joint_count();
    if seq.dim() != 3 * nj {
        return Err(Error::InvalidArgument(format!(
            "skeleton has {nj} joints, sequence has {} values per frame",
            seq.dim()
        )));
    }
    let mut out = Vec::with_capacity(seq.frames() * 3 * nj);
    for t in 0..seq.frames() {
        for p in skel.forward_kinematics(seq.frame(t))? {
            out.extend_from_slice(&p);
        }
    }
    PoseSequence::new(
        Representation::Xyz,
        nj,
        3,
        seq.fps(),
        Tensor::new(vec![seq.frames(), 3 * nj], out)?,
    )
}
