use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Representation {
    /// 3D joint coordinates in millimetres.
    Xyz,
    /// Exponential-map rotations in radians.
    Expmap,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Xyz => "xyz",
            Representation::Expmap => "expmap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "xyz" => Ok(Representation::Xyz),
            "expmap" => Ok(Representation::Expmap),
            other => Err(Error::InvalidArgument(format!("unknown representation {other:?}"))),
        }
    }
}

/// Bookkeeping for coordinates dropped by preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct RemovedCoords {
    pub original_joints: usize,
    pub original_dims: usize,
    /// Original coordinate index of every retained column, in order.
    pub kept: Vec<usize>,
    /// Value of every original coordinate; used to refill dropped ones.
    pub fill: Vec<f64>,
}

/// `N × K` pose sequence (frames as rows).
#[derive(Clone, Debug, PartialEq)]
pub struct PoseSequence {
    repr: Representation,
    joints: usize,
    dims: usize,
    fps: f64,
    data: Tensor,
    removed: Option<RemovedCoords>,
}

impl PoseSequence {
    pub fn new(repr: Representation, joints: usize, dims: usize, fps: f64, data: Tensor) -> Result<Self> {
        let (n, k) = data.expect_matrix("pose_sequence")?;
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("a sequence needs at least one frame".into()));
        }
        if !(dims == 1 || dims == 3) {
            return Err(Error::InvalidArgument(format!("dims must be 1 or 3, got {dims}")));
        }
        if joints * dims != k {
            return Err(Error::InvalidArgument(format!(
                "{joints} joints x {dims} dims does not match {k} columns"
            )));
        }
        if !data.is_finite() {
            return Err(Error::NonFinite("pose data".into()));
        }
        Ok(Self {
            repr,
            joints,
            dims,
            fps,
            data,
            removed: None,
        })
    }

    pub(crate) fn with_removed(mut self, removed: Option<RemovedCoords>) -> Self {
        self.removed = removed;
        self
    }

    pub fn repr(&self) -> Representation {
        self.repr
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    /// Number of values per frame (`K`).
    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &Tensor {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.data.row(t)
    }

    pub fn removed(&self) -> Option<&RemovedCoords> {
        self.removed.as_ref()
    }

    /// `K × len` trajectory matrix of frames `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Tensor> {
        self.data.slice_rows(start, start + len)?.transpose()
    }

    /// Whole sequence as a `K × N` trajectory matrix.
    pub fn trajectories(&self) -> Tensor {
        self.data.transpose().expect("pose data is a matrix")
    }

    /// Same metadata, new frames (`N' × K`).
    pub fn with_data(&self, data: Tensor) -> Result<Self> {
        Ok(Self::new(self.repr, self.joints, self.dims, self.fps, data)?.with_removed(self.removed.clone()))
    }

    /// Builds a sequence from a `K × N` trajectory matrix with this sequence's metadata.
    pub fn from_trajectories_like(&self, traj: &Tensor) -> Result<Self> {
        self.with_data(traj.transpose()?)
    }

    pub fn header(&self) -> String {
        format!(
            "JOINTS={} DIMS={} FPS={} REPR={}",
            self.joints,
            self.dims,
            self.fps,
            self.repr.as_str()
        )
    }

    /// Text encoding: header line then one line per frame with 17
    /// significant digits per value.
    pub fn to_text(&self) -> String {
        let mut s = self.header();
        s.push('\n');
        for t in 0..self.frames() {
            for (i, v) in self.frame(t).iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                write!(s, "{v:.16e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        load_sequence(std::io::BufReader::new(f))
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, f64, Representation)> {
    let err = |msg: String| Error::Parse { line: 1, msg };
    let (mut joints, mut dims, mut fps, mut repr) = (None, None, None, None);
    for tok in line.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| err(format!("header token {tok:?} is not KEY=VALUE")))?;
        match k {
            "JOINTS" => joints = Some(v.parse::<usize>().map_err(|_| err(format!("bad JOINTS {v:?}")))?),
            "DIMS" => dims = Some(v.parse::<usize>().map_err(|_| err(format!("bad DIMS {v:?}")))?),
            "FPS" => fps = Some(v.parse::<f64>().map_err(|_| err(format!("bad FPS {v:?}")))?),
            "REPR" => repr = Some(Representation::parse(v).map_err(|e| err(e.to_string()))?),
            other => return Err(err(format!("unknown header key {other:?}"))),
        }
    }
    match (joints, dims, fps, repr) {
        (Some(j), Some(d), Some(f), Some(r)) => {
            if d != 1 && d != 3 {
                return Err(err(format!("DIMS must be 1 or 3, got {d}")));
            }
            if !(f > 0.0 && f.is_finite()) {
                return Err(err(format!("FPS must be positive, got {f}")));
            }
            if j == 0 {
                return Err(err("JOINTS must be positive".into()));
            }
            Ok((j, d, f, r))
        }
        _ => Err(err("header must define JOINTS, DIMS, FPS and REPR".into())),
    }
}

/// Parses the line-oriented pose format.
pub fn load_sequence<R: BufRead>(reader: R) -> Result<PoseSequence> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty input".into(),
    })??;
    let (joints, dims, fps, repr) = parse_header(&header)?;
    let k = joints * dims;
    let mut data = Vec::new();
    let mut frames = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid number {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite value {tok:?}"),
                });
            }
            data.push(v);
            count += 1;
        }
        if count != k {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {k} values, found {count}"),
            });
        }
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::Parse {
            line: 2,
            msg: "no frames".into(),
        });
    }
    PoseSequence::new(repr, joints, dims, fps, Tensor::new(vec![frames, k], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(rows: usize, k: usize) -> String {
        let mut s = format!("JOINTS={} DIMS=3 FPS=25 REPR=xyz\n", k / 3);
        for r in 0..rows {
            let row: Vec<String> = (0..k).map(|c| format!("{}", (r * k + c) as f64 * 0.5)).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    #[test]
    fn parses_well_formed_file() {
        let seq = load_sequence(text(50, 66).as_bytes()).unwrap();
        assert_eq!(seq.frames(), 50);
        assert_eq!(seq.dim(), 66);
        assert_eq!(seq.fps(), 25.0);
        assert_eq!(seq.repr(), Representation::Xyz);
    }

    #[test]
    fn short_row_reports_line() {
        let mut s = text(3, 66);
        s.push_str(&vec!["1.0"; 65].join(" "));
        s.push('\n');
        match load_sequence(s.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_header_and_non_finite() {
        assert!(matches!(
            load_sequence("JOINTS=2 DIMS=3 FPS=25\n1 2 3 4 5 6\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            load_sequence("JOINTS=1 DIMS=3 FPS=25 REPR=xyz\n1 NaN 3\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            load_sequence("JOINTS=1 DIMS=2 FPS=25 REPR=xyz\n1 2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn writer_emits_seventeen_significant_digits() {
        let seq = PoseSequence::new(
            Representation::Xyz,
            1,
            3,
            25.0,
            Tensor::matrix(1, 3, vec![0.1, -1.0 / 3.0, 12345.678]).unwrap(),
        )
        .unwrap();
        let txt = seq.to_text();
        assert!(txt.starts_with("JOINTS=1 DIMS=3 FPS=25 REPR=xyz\n"));
        assert!(txt.contains("1.0000000000000001e-1"), "{txt}");
        assert_eq!(load_sequence(txt.as_bytes()).unwrap(), seq);
    }
}
