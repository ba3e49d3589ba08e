use crate::error::{Error, Result};

/// Attention granularity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    Pose,
    Part,
    Joint,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Pose, Level::Part, Level::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Pose => "pose",
            Level::Part => "part",
            Level::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pose" => Ok(Level::Pose),
            "part" => Ok(Level::Part),
            "joint" => Ok(Level::Joint),
            other => Err(Error::InvalidArgument(format!("unknown level {other:?}"))),
        }
    }
}

/// Assignment of joints to named limbs.
#[derive(Clone, Debug, PartialEq)]
pub struct PartMap {
    pub limbs: Vec<(String, Vec<usize>)>,
}

impl PartMap {
    /// Parses lines of the form `<limb-name>: <joint indices comma-separated>`.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut limbs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, rest) = line.split_once(':').ok_or(Error::Parse {
                line: i + 1,
                msg: "expected `<limb>: <indices>`".into(),
            })?;
            let joints = rest
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<usize>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad joint index {s:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            limbs.push((name.trim().to_string(), joints));
        }
        Ok(Self { limbs })
    }

    pub fn to_text(&self) -> String {
        self.limbs
            .iter()
            .map(|(n, js)| {
                let js: Vec<String> = js.iter().map(usize::to_string).collect();
                format!("{}: {}\n", n, js.join(","))
            })
            .collect()
    }

    /// Splits `joints` into at most five contiguous limbs, for skeletons
    /// without an anatomical map.
    pub fn contiguous(joints: usize) -> Self {
        const NAMES: [&str; 5] = ["torso", "left_arm", "right_arm", "left_leg", "right_leg"];
        let parts = joints.clamp(1, 5);
        let mut limbs = Vec::with_capacity(parts);
        let mut start = 0;
        for (p, name) in NAMES.iter().enumerate().take(parts) {
            let size = joints / parts + usize::from(p < joints % parts);
            limbs.push((name.to_string(), (start..start + size).collect()));
            start += size;
        }
        Self { limbs }
    }
}

/// Disjoint groups of coordinate indices covering `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct PartPartition {
    level: Level,
    groups: Vec<Vec<usize>>,
    k: usize,
}

impl PartPartition {
    pub fn from_groups(level: Level, groups: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let mut seen = vec![false; k];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty part".into()));
            }
            for &i in g {
                if i >= k {
                    return Err(Error::InvalidArgument(format!("coordinate {i} outside 0..{k}")));
                }
                if seen[i] {
                    return Err(Error::InvalidArgument(format!("coordinate {i} assigned twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("coordinate {i} is not assigned to any part")));
        }
        Ok(Self { level, groups, k })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Coordinate order obtained by concatenating the groups.
    pub fn stacked_order(&self) -> Vec<usize> {
        self.groups.concat()
    }

    /// For each coordinate, its row in the stacked order.
    pub fn unstack_index(&self) -> Vec<usize> {
        let mut inv = vec![0; self.k];
        for (row, c) in self.stacked_order().into_iter().enumerate() {
            inv[c] = row;
        }
        inv
    }
}

/// Builds the partition of `k` coordinates (`dims` per joint) for `level`.
/// Level `Part` requires a joint-to-limb map covering every joint once.
pub fn make_partition(k: usize, dims: usize, level: Level, part_map: Option<&PartMap>) -> Result<PartPartition> {
    if dims == 0 || k % dims != 0 {
        return Err(Error::InvalidArgument(format!("{k} coordinates are not a multiple of {dims}")));
    }
    let joints = k / dims;
    let joint_coords = |j: usize| (j * dims..(j + 1) * dims).collect::<Vec<_>>();
    let groups = match level {
        Level::Pose => vec![(0..k).collect()],
        Level::Joint => (0..joints).map(joint_coords).collect(),
        Level::Part => {
            let map = part_map.ok_or_else(|| Error::InvalidArgument("part level requires a part map".into()))?;
            let mut owner = vec![None; joints];
            for (li, (name, js)) in map.limbs.iter().enumerate() {
                for &j in js {
                    if j >= joints {
                        return Err(Error::InvalidArgument(format!("limb {name} names joint {j} of {joints}")));
                    }
                    if owner[j].replace(li).is_some() {
                        return Err(Error::InvalidArgument(format!("joint {j} assigned to more than one limb")));
                    }
                }
            }
            if let Some(j) = owner.iter().position(Option::is_none) {
                return Err(Error::InvalidArgument(format!("joint {j} is not assigned to any limb")));
            }
            map.limbs
                .iter()
                .filter(|(_, js)| !js.is_empty())
                .map(|(_, js)| js.iter().flat_map(|&j| joint_coords(j)).collect())
                .collect()
        }
    };
    PartPartition::from_groups(level, groups, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_and_joint_levels() {
        let p = make_partition(66, 3, Level::Pose, None).unwrap();
        assert_eq!(p.sizes(), vec![66]);
        let j = make_partition(66, 3, Level::Joint, None).unwrap();
        assert_eq!(j.len(), 22);
        assert!(j.sizes().iter().all(|&s| s == 3));
    }

    #[test]
    fn five_limb_map() {
        let map = PartMap::parse("torso: 0,1\nleft_arm: 2\nright_arm: 3\nleft_leg: 4\nright_leg: 5\n").unwrap();
        let p = make_partition(18, 3, Level::Part, Some(&map)).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.sizes().iter().sum::<usize>(), 18);
        assert_eq!(p.groups()[0], vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn unassigned_joint_is_an_error() {
        let map = PartMap::parse("a: 0,1\nb: 2\n").unwrap();
        assert!(make_partition(12, 3, Level::Part, Some(&map)).is_err());
        let dup = PartMap::parse("a: 0,1\nb: 1,2,3\n").unwrap();
        assert!(make_partition(12, 3, Level::Part, Some(&dup)).is_err());
    }

    #[test]
    fn contiguous_map_covers_all_joints() {
        for joints in 1..12 {
            let map = PartMap::contiguous(joints);
            let p = make_partition(joints * 3, 3, Level::Part, Some(&map)).unwrap();
            assert_eq!(p.len(), joints.min(5));
        }
        let map = PartMap::contiguous(6);
        assert_eq!(PartMap::parse(&map.to_text()).unwrap(), map);
    }

    #[test]
    fn unstack_inverts_stacking() {
        let p = PartPartition::from_groups(Level::Part, vec![vec![3, 0], vec![1, 2]], 4).unwrap();
        let order = p.stacked_order();
        let inv = p.unstack_index();
        for c in 0..4 {
            assert_eq!(order[inv[c]], c);
        }
    }
}
