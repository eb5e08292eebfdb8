//! Two-phase pixel/voxel images.
//!
//! Binary voxel format (little endian):
//!
//! ```text
//! b"RVE1"  u32 dims[3]  packed phase bits
//! ```
//!
//! Cells are ordered with axis 0 fastest (row-major for a 2D image whose
//! rows run along axis 0); bit `k` of the stream is bit `k % 8` (LSB first)
//! of byte `k / 8`. A set bit is the stiff phase. 2D images store `dims[2] = 1`.

use std::io::{Read, Write};
use std::path::Path;

use super::grid::{linear_index, ScalarGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RveImage {
    /// Two or three axes, axis 0 fastest.
    pub dims: Vec<usize>,
    /// `true` = stiff phase.
    pub phase: Vec<bool>,
}

impl RveImage {
    pub fn new(dims: Vec<usize>, phase: Vec<bool>) -> Result<Self> {
        if !(2..=3).contains(&dims.len()) || dims.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!("RVE must have 2 or 3 non-empty axes, got {dims:?}")));
        }
        if dims.iter().product::<usize>() != phase.len() {
            return Err(Error::Parameter("phase count does not match dims".into()));
        }
        Ok(Self { dims, phase })
    }

    pub fn uniform(dims: Vec<usize>, stiff: bool) -> Self {
        let n = dims.iter().product();
        Self::new(dims, vec![stiff; n]).expect("valid dims")
    }

    pub fn from_fn(dims: Vec<usize>, f: impl Fn(&[usize]) -> bool) -> Self {
        let n: usize = dims.iter().product();
        let phase = (0..n).map(|i| f(&super::grid::unravel(&dims, i))).collect();
        Self::new(dims, phase).expect("valid dims")
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn get(&self, ijk: &[usize]) -> bool {
        self.phase[linear_index(&self.dims, ijk)]
    }

    /// Fraction of stiff cells.
    pub fn volume_fraction(&self) -> f64 {
        self.phase.iter().filter(|&&p| p).count() as f64 / self.phase.len() as f64
    }

    pub fn inverted(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            phase: self.phase.iter().map(|p| !p).collect(),
        }
    }
}

/// Stiff wherever the value exceeds `threshold` (strict).
pub fn level_cut(grid: &ScalarGrid, threshold: f64) -> Result<RveImage> {
    if grid.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("level cut of non-finite field".into()));
    }
    let phase = grid.values.iter().map(|&v| v > threshold).collect();
    if grid.dims.len() == 1 {
        return RveImage::new(vec![grid.dims[0], 1], phase);
    }
    RveImage::new(grid.dims.clone(), phase)
}

/// Cross-section of a 3D image at index `plane` along `axis`. The remaining
/// axes keep their relative order.
pub fn slice_2d(rve: &RveImage, axis: usize, plane: usize) -> Result<RveImage> {
    if rve.dim() != 3 {
        return Err(Error::Parameter("slice_2d needs a 3D image".into()));
    }
    if axis > 2 {
        return Err(Error::Parameter(format!("axis {axis} out of range")));
    }
    if plane >= rve.dims[axis] {
        return Err(Error::Bounds(format!(
            "plane {plane} outside 0..{} along axis {axis}",
            rve.dims[axis]
        )));
    }
    let keep: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
    let dims = vec![rve.dims[keep[0]], rve.dims[keep[1]]];
    let mut phase = Vec::with_capacity(dims[0] * dims[1]);
    for v in 0..dims[1] {
        for u in 0..dims[0] {
            let mut ijk = [0usize; 3];
            ijk[axis] = plane;
            ijk[keep[0]] = u;
            ijk[keep[1]] = v;
            phase.push(rve.get(&ijk));
        }
    }
    RveImage::new(dims, phase)
}

/// Binary portable graymap (P5) of a 2D image: stiff = 255, compliant = 0.
/// Image rows run along axis 0, the first row is axis-1 index 0.
pub fn write_pgm(rve: &RveImage, path: &Path) -> Result<()> {
    if rve.dim() != 2 {
        return Err(Error::Parameter("graymap export needs a 2D image".into()));
    }
    let bytes: Vec<u8> = rve.phase.iter().map(|&p| if p { 255 } else { 0 }).collect();
    crate::io::write_pgm_bytes(path, rve.dims[0], rve.dims[1], &bytes)
}

pub fn write_rve(rve: &RveImage, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 + rve.phase.len() / 8 + 1);
    out.extend_from_slice(b"RVE1");
    for ax in 0..3 {
        let d = rve.dims.get(ax).copied().unwrap_or(1);
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let mut bits = vec![0u8; rve.phase.len().div_ceil(8)];
    for (k, &p) in rve.phase.iter().enumerate() {
        if p {
            bits[k / 8] |= 1 << (k % 8);
        }
    }
    out.extend_from_slice(&bits);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_rve(path: &Path) -> Result<RveImage> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::Format {
        kind: "RVE",
        reason: reason.to_string(),
    };
    if buf.len() < 16 || &buf[..4] != b"RVE1" {
        return Err(bad("missing RVE1 header"));
    }
    let mut dims: Vec<usize> = (0..3)
        .map(|i| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if buf.len() != 16 + n.div_ceil(8) {
        return Err(bad("payload length does not match dims"));
    }
    let phase = (0..n).map(|k| buf[16 + k / 8] & (1 << (k % 8)) != 0).collect();
    if dims[2] == 1 {
        dims.pop();
    }
    RveImage::new(dims, phase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_cut_is_strict() {
        let g = ScalarGrid::new(vec![2, 2], vec![-1.0, 2.0, 0.0, 3.0]);
        let r = level_cut(&g, 0.0).unwrap();
        assert_eq!(r.phase, vec![false, true, false, true]);
        let z = level_cut(&ScalarGrid::zeros(vec![3, 3]), 0.0).unwrap();
        assert_eq!(z.volume_fraction(), 0.0);
    }

    #[test]
    fn slicing_uniform_and_layered_cubes() {
        let cube = RveImage::uniform(vec![4, 4, 4], true);
        let s = slice_2d(&cube, 0, 0).unwrap();
        assert_eq!(s.dims, vec![4, 4]);
        assert!(s.phase.iter().all(|&p| p));

        let layered = RveImage::from_fn(vec![4, 4, 4], |ijk| ijk[0] == 0);
        assert!(slice_2d(&layered, 0, 0).unwrap().phase.iter().all(|&p| p));
        assert!(slice_2d(&layered, 0, 1).unwrap().phase.iter().all(|&p| !p));
        assert!(matches!(slice_2d(&layered, 0, 4), Err(Error::Bounds(_))));
    }

    #[test]
    fn slice_fraction_matches_recount() {
        let cube = RveImage::from_fn(vec![16, 16, 16], |ijk| (ijk[0] * 7 + ijk[1] * 3 + ijk[2] * ijk[2]) % 5 < 2);
        for axis in 0..3 {
            let s = slice_2d(&cube, axis, 5).unwrap();
            let mut count = 0;
            for a in 0..16 {
                for b in 0..16 {
                    let ijk = match axis {
                        0 => [5, a, b],
                        1 => [a, 5, b],
                        _ => [a, b, 5],
                    };
                    count += cube.get(&ijk) as usize;
                }
            }
            assert_eq!(s.volume_fraction(), count as f64 / 256.0);
        }
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cube = RveImage::from_fn(vec![5, 3, 2], |ijk| (ijk[0] + ijk[1] + ijk[2]) % 3 == 0);
        let p = dir.path().join("a.rve");
        write_rve(&cube, &p).unwrap();
        assert_eq!(read_rve(&p).unwrap(), cube);
        let img = RveImage::from_fn(vec![9, 2], |ij| ij[0] > ij[1]);
        write_rve(&img, &p).unwrap();
        assert_eq!(read_rve(&p).unwrap(), img);
        std::fs::write(&p, b"RVE0\0\0").unwrap();
        assert!(matches!(read_rve(&p), Err(Error::Format { .. })));
    }
}
