//! Catalogs of homogenized tensors.
//!
//! Binary layout (little endian): magic `CTLG`, u32 dim, u32 count, then
//! `count` row-major f64 Voigt matrices (3×3 in 2D, 6×6 in 3D). A text
//! manifest with the generator descriptor, seed and phase moduli is written
//! next to it with a `.manifest` suffix.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::fe::homogenize_fe;
use super::mori_tanaka::mori_tanaka;
use super::tensor::{isotropic_tensor, reduce_to_plane, voigt_size, ConstitutiveTensor, Hypothesis, IsotropicPhase};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, LeReader, LeWriter};
use crate::microstructure::{
    evaluate_field, evaluate_slice, level_cut, sample_fiber, sample_spectral_coefficients, FiberBounds, FieldParams,
    RveImage,
};
use crate::par::Exec;
use crate::rng::{Purpose, RandomStream};

#[derive(Debug, Clone, PartialEq)]
pub enum CatalogGenerator {
    /// Level cut of a Gaussian random field, homogenized by finite elements.
    /// In 2D the image is a cross-section of the 3D field.
    RandomField {
        field: FieldParams,
        stiff: IsotropicPhase,
        compliant: IsotropicPhase,
        dim: usize,
        resolution: usize,
        hypothesis: Hypothesis,
    },
    /// Chopped fibers by Mori-Tanaka; `plane` reduces the 3D tensor for a
    /// 2D macro model.
    Fiber {
        bounds: FiberBounds,
        plane: Option<Hypothesis>,
    },
    /// Every entry is the same isotropic phase.
    Uniform {
        phase: IsotropicPhase,
        dim: usize,
        hypothesis: Hypothesis,
    },
}

impl CatalogGenerator {
    pub fn dim(&self) -> usize {
        match self {
            Self::RandomField { dim, .. } | Self::Uniform { dim, .. } => *dim,
            Self::Fiber { plane, .. } => {
                if plane.is_some() {
                    2
                } else {
                    3
                }
            }
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::RandomField {
                field,
                stiff,
                compliant,
                dim,
                resolution,
                hypothesis,
            } => format!(
                "random_field period={} max_wavenumber={} correlation_length={} dim={dim} resolution={resolution} \
                 hypothesis={hypothesis:?} stiff_e={} stiff_nu={} compliant_e={} compliant_nu={}",
                field.period, field.max_wavenumber, field.correlation_length, stiff.e, stiff.nu, compliant.e, compliant.nu
            ),
            Self::Fiber { bounds, plane } => format!(
                "fiber e_fiber={:?} e_matrix={:?} nu_fiber={:?} nu_matrix={:?} aspect_ratio={:?} angle_inplane={:?} \
                 angle_outplane={:?} volume_fraction={:?} plane={plane:?}",
                bounds.e_fiber,
                bounds.e_matrix,
                bounds.nu_fiber,
                bounds.nu_matrix,
                bounds.aspect_ratio,
                bounds.angle_inplane,
                bounds.angle_outplane,
                bounds.volume_fraction
            ),
            Self::Uniform { phase, dim, hypothesis } => {
                format!("uniform e={} nu={} dim={dim} hypothesis={hypothesis:?}", phase.e, phase.nu)
            }
        }
    }

    /// RVE image for one entry stream; `None` for generators without images.
    pub fn sample_image(&self, stream: RandomStream) -> Result<Option<RveImage>> {
        let Self::RandomField { field, dim, resolution, .. } = self else {
            return Ok(None);
        };
        let spectral = sample_spectral_coefficients(*field, stream.child(Purpose::Field, 0))?;
        let grid = match dim {
            2 => evaluate_slice(&spectral, 2, 0, *resolution)?,
            3 => evaluate_field(&spectral, &[*resolution; 3])?,
            _ => return Err(Error::Parameter(format!("random field catalogs need dim 2 or 3, got {dim}"))),
        };
        level_cut(&grid, 0.0).map(Some)
    }

    fn entry(&self, stream: RandomStream) -> Result<(ConstitutiveTensor, Option<f64>)> {
        match self {
            Self::RandomField {
                stiff,
                compliant,
                hypothesis,
                ..
            } => {
                let rve = self.sample_image(stream)?.expect("random field has an image");
                let vf = rve.volume_fraction();
                Ok((homogenize_fe(&rve, *stiff, *compliant, *hypothesis)?, Some(vf)))
            }
            Self::Fiber { bounds, plane } => {
                let fiber = sample_fiber(bounds, stream.child(Purpose::Fiber, 0))?;
                let c = mori_tanaka(&fiber)?;
                let c = match plane {
                    Some(h) => reduce_to_plane(&c, *h)?,
                    None => c,
                };
                Ok((c, Some(fiber.volume_fraction)))
            }
            Self::Uniform { phase, dim, hypothesis } => Ok((isotropic_tensor(*phase, *dim, *hypothesis)?, None)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryProvenance {
    pub seed: u64,
    pub stream_id: u64,
    /// Stiff-phase (or fiber) volume fraction when the generator has one.
    pub volume_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrostructureCatalog {
    pub dim: usize,
    pub entries: Vec<ConstitutiveTensor>,
    pub provenance: Vec<EntryProvenance>,
    /// Mass density per entry; only the ratio to the solid mass matters.
    pub density: Vec<f64>,
    pub descriptor: String,
}

impl MicrostructureCatalog {
    pub fn from_entries(entries: Vec<ConstitutiveTensor>, descriptor: impl Into<String>) -> Result<Self> {
        let dim = entries.first().map(|c| c.dim).ok_or_else(|| Error::Parameter("catalog is empty".into()))?;
        if let Some(i) = entries.iter().position(|c| c.dim != dim) {
            return Err(Error::Parameter(format!("catalog entry {i} is {}D, expected {dim}D", entries[i].dim)));
        }
        let n = entries.len();
        Ok(Self {
            dim,
            entries,
            provenance: vec![
                EntryProvenance {
                    seed: 0,
                    stream_id: 0,
                    volume_fraction: None,
                };
                n
            ],
            density: vec![1.0; n],
            descriptor: descriptor.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Catalog with the given entries reordered: entry `i` of the result is
    /// entry `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            dim: self.dim,
            entries: order.iter().map(|&i| self.entries[i].clone()).collect(),
            provenance: order.iter().map(|&i| self.provenance[i].clone()).collect(),
            density: order.iter().map(|&i| self.density[i]).collect(),
            descriptor: self.descriptor.clone(),
        }
    }
}

/// Builds `count` independent entries; entry `i` draws from
/// `stream.child(Catalog, i)` so the result does not depend on scheduling.
pub fn build_catalog(
    count: usize,
    generator: &CatalogGenerator,
    stream: RandomStream,
    exec: Exec,
) -> Result<MicrostructureCatalog> {
    if count == 0 {
        return Err(Error::Parameter("catalog count must be at least 1".into()));
    }
    let built = exec.try_map(count, |i| {
        let s = stream.child(Purpose::Catalog, i as u64);
        let wrap = |e: Error| Error::CatalogEntry {
            index: i,
            source: Box::new(e),
        };
        let (c, vf) = generator.entry(s).map_err(wrap)?;
        c.check_spd().map_err(wrap)?;
        Ok((
            c,
            EntryProvenance {
                seed: s.seed,
                stream_id: s.stream_id,
                volume_fraction: vf,
            },
        ))
    })?;
    let (entries, provenance): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    Ok(MicrostructureCatalog {
        dim: generator.dim(),
        density: vec![1.0; count],
        entries,
        provenance,
        descriptor: generator.descriptor(),
    })
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

pub fn write_catalog(catalog: &MicrostructureCatalog, path: &Path) -> Result<()> {
    let mut w = LeWriter::default();
    w.bytes(b"CTLG").u32(catalog.dim as u32).u32(catalog.len() as u32);
    for c in &catalog.entries {
        // nalgebra is column-major; the file is row-major.
        w.f64s(c.voigt.transpose().as_slice());
    }
    write_file(path, &w.buf)?;

    let mut m = String::new();
    let _ = writeln!(m, "generator = {}", catalog.descriptor);
    let _ = writeln!(m, "dim = {}", catalog.dim);
    let _ = writeln!(m, "count = {}", catalog.len());
    for (i, p) in catalog.provenance.iter().enumerate() {
        let vf = p.volume_fraction.map_or_else(|| "-".to_string(), |v| format!("{v}"));
        let _ = writeln!(
            m,
            "entry {i} seed = {} stream = {:#018x} volume_fraction = {vf} density = {}",
            p.seed, p.stream_id, catalog.density[i]
        );
    }
    write_file(&manifest_path(path), m.as_bytes())
}

pub fn read_catalog(path: &Path) -> Result<MicrostructureCatalog> {
    let bytes = read_file(path)?;
    let mut r = LeReader::new(&bytes, "catalog");
    r.magic(b"CTLG")?;
    let dim = r.u32()? as usize;
    if dim != 2 && dim != 3 {
        return Err(Error::Format {
            kind: "catalog",
            reason: format!("dimension {dim} not supported"),
        });
    }
    let count = r.u32()? as usize;
    if count == 0 {
        return Err(Error::Format {
            kind: "catalog",
            reason: "empty catalog".into(),
        });
    }
    let n = voigt_size(dim);
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let vals = r.f64s(n * n)?;
        let c = ConstitutiveTensor::new(dim, DMatrix::from_row_slice(n, n, &vals))?;
        c.check_spd().map_err(|e| Error::CatalogEntry {
            index: i,
            source: Box::new(e),
        })?;
        entries.push(c);
    }
    r.finish()?;
    MicrostructureCatalog::from_entries(entries, format!("loaded from {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_field() -> CatalogGenerator {
        CatalogGenerator::RandomField {
            field: FieldParams::new(4.0 * std::f64::consts::PI, 5.0),
            stiff: IsotropicPhase::new(10.0, 0.3),
            compliant: IsotropicPhase::new(1.0, 0.3),
            dim: 2,
            resolution: 12,
            hypothesis: Hypothesis::PlaneStress,
        }
    }

    #[test]
    fn uniform_catalog_is_the_phase() {
        let phase = IsotropicPhase::new(2.0, 0.25);
        let g = CatalogGenerator::Uniform {
            phase,
            dim: 2,
            hypothesis: Hypothesis::PlaneStress,
        };
        let cat = build_catalog(1, &g, RandomStream::new(1, 0), Exec::Sequential).unwrap();
        assert_eq!(cat.entries[0], isotropic_tensor(phase, 2, Hypothesis::PlaneStress).unwrap());
    }

    #[test]
    fn same_seed_gives_identical_catalogs_under_any_schedule() {
        let a = build_catalog(4, &small_field(), RandomStream::new(9, 0), Exec::Sequential).unwrap();
        let b = build_catalog(4, &small_field(), RandomStream::new(9, 0), Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries[0], a.entries[1]);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(build_catalog(0, &small_field(), RandomStream::new(9, 0), Exec::Sequential).is_err());
    }

    #[test]
    fn fiber_catalog_reduces_to_plane() {
        let g = CatalogGenerator::Fiber {
            bounds: FiberBounds::chopped_fiber_example(),
            plane: Some(Hypothesis::PlaneStress),
        };
        let cat = build_catalog(3, &g, RandomStream::new(2, 0), Exec::Sequential).unwrap();
        assert_eq!(cat.dim, 2);
        assert!(cat.entries.iter().all(|c| c.is_spd()));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.bin");
        let cat = build_catalog(3, &small_field(), RandomStream::new(5, 0), Exec::Sequential).unwrap();
        write_catalog(&cat, &path).unwrap();
        let back = read_catalog(&path).unwrap();
        assert_eq!(back.entries, cat.entries);
        let manifest = std::fs::read_to_string(manifest_path(&path)).unwrap();
        assert!(manifest.contains("random_field") && manifest.contains("stiff_e=10"));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.bin");
        let cat = build_catalog(2, &small_field(), RandomStream::new(5, 0), Exec::Sequential).unwrap();
        write_catalog(&cat, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_catalog(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"XXXX").unwrap();
        assert!(matches!(read_catalog(&path), Err(Error::Format { .. })));
    }
}
