//! Catalog and image files, and bounds on random cuts.

use std::f64::consts::PI;

use stopo::homogenization::{
    build_catalog, homogenize_fe, isotropic_tensor, read_catalog, reuss_voigt_diagonals, write_catalog,
    CatalogGenerator, Hypothesis, IsotropicPhase,
};
use stopo::microstructure::{read_rve, write_rve, FiberBounds, FieldParams, RveImage};
use stopo::{Exec, Purpose, RandomStream};

fn random_field(resolution: usize, stiff: IsotropicPhase, compliant: IsotropicPhase) -> CatalogGenerator {
    CatalogGenerator::RandomField {
        field: FieldParams::new(4.0 * PI, 25.0),
        stiff,
        compliant,
        dim: 2,
        resolution,
        hypothesis: Hypothesis::PlaneStress,
    }
}

#[test]
fn catalog_file_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let g = random_field(24, IsotropicPhase::new(10.0, 0.3), IsotropicPhase::new(1.0, 0.3));
    let c = build_catalog(4, &g, RandomStream::new(5, 0), Exec::Parallel).unwrap();
    let path = dir.path().join("c.ctlg");
    write_catalog(&c, &path).unwrap();
    let back = read_catalog(&path).unwrap();
    assert_eq!(back.entries, c.entries);
    let manifest = std::fs::read_to_string(dir.path().join("c.ctlg.manifest")).unwrap();
    assert!(manifest.contains("count = 4") && manifest.contains("random_field"), "{manifest}");
    assert_eq!(manifest.lines().filter(|l| l.starts_with("entry ")).count(), 4);
    // 12-byte header plus 4 row-major 3×3 matrices.
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 12 + 4 * 9 * 8);
}

#[test]
fn catalog_does_not_depend_on_scheduling() {
    let g = CatalogGenerator::Fiber {
        bounds: FiberBounds::default(),
        plane: Some(Hypothesis::PlaneStress),
    };
    let s = RandomStream::new(8, 0);
    let seq = build_catalog(12, &g, s, Exec::Sequential).unwrap();
    let par = stopo::par::with_threads(4, || build_catalog(12, &g, s, Exec::Parallel).unwrap());
    assert_eq!(seq.entries, par.entries);
    assert!(seq.entries.iter().all(|c| c.is_spd()));
}

#[test]
fn rve_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for dims in [vec![5, 3], vec![3, 4, 5]] {
        let rve = RveImage::from_fn(dims.clone(), |ijk| ijk.iter().sum::<usize>() % 3 == 0);
        let path = dir.path().join("x.rve");
        write_rve(&rve, &path).unwrap();
        assert_eq!(read_rve(&path).unwrap(), rve);
    }
}

#[test]
fn random_cuts_respect_the_mixture_bounds_with_unequal_poisson_ratios() {
    let (stiff, compliant) = (IsotropicPhase::new(50.0, 0.2), IsotropicPhase::new(2.0, 0.4));
    let hyp = Hypothesis::PlaneStress;
    let g = random_field(32, stiff, compliant);
    let (cs, cc) = (isotropic_tensor(stiff, 2, hyp).unwrap(), isotropic_tensor(compliant, 2, hyp).unwrap());
    for i in 0..4 {
        let rve = g.sample_image(RandomStream::new(21, 0).child(Purpose::Catalog, i)).unwrap().unwrap();
        let c = homogenize_fe(&rve, stiff, compliant, hyp).unwrap();
        let (lo, hi) = reuss_voigt_diagonals(&cs, &cc, rve.volume_fraction()).unwrap();
        for k in 0..3 {
            assert!(c.get(k, k) >= lo[k] * (1.0 - 1e-9) && c.get(k, k) <= hi[k] * (1.0 + 1e-9), "{i} {k}");
        }
        assert!(c.is_spd());
    }
}
