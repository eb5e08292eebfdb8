use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// One realization of the uncertain chopped-fiber parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberRealization {
    pub e_fiber: f64,
    pub e_matrix: f64,
    pub nu_fiber: f64,
    pub nu_matrix: f64,
    /// l/d
    pub aspect_ratio: f64,
    /// In-plane angle θ_i (radians).
    pub angle_inplane: f64,
    /// Out-of-plane angle θ_o (radians).
    pub angle_outplane: f64,
    pub volume_fraction: f64,
}

impl FiberRealization {
    pub fn validate(&self) -> Result<()> {
        let ok = self.e_fiber > 0.0
            && self.e_matrix > 0.0
            && (0.0..=1.0).contains(&self.volume_fraction)
            && self.aspect_ratio >= 1.0
            && (0.0..=PI).contains(&self.angle_inplane)
            && (0.0..=PI).contains(&self.angle_outplane)
            && self.nu_fiber > -1.0
            && self.nu_fiber < 0.5
            && self.nu_matrix > -1.0
            && self.nu_matrix < 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid fiber realization {self:?}")))
        }
    }
}

/// Independent uniform ranges `[lower, upper]` per parameter. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberBounds {
    pub e_fiber: [f64; 2],
    pub e_matrix: [f64; 2],
    pub nu_fiber: [f64; 2],
    pub nu_matrix: [f64; 2],
    pub aspect_ratio: [f64; 2],
    pub angle_inplane: [f64; 2],
    pub angle_outplane: [f64; 2],
    pub volume_fraction: [f64; 2],
}

impl Default for FiberBounds {
    fn default() -> Self {
        Self::chopped_fiber_example()
    }
}

impl FiberBounds {
    /// Chopped-fiber ranges of the 3D beam example. Poisson ratios and the
    /// fiber volume fraction are not reported there and are fixed at 0.3 and 0.2.
    pub fn chopped_fiber_example() -> Self {
        Self {
            e_fiber: [0.95, 1.05],
            e_matrix: [0.0095, 0.0105],
            nu_fiber: [0.3, 0.3],
            nu_matrix: [0.3, 0.3],
            aspect_ratio: [10.0, 100.0],
            angle_inplane: [0.0, PI],
            angle_outplane: [0.0, PI],
            volume_fraction: [0.2, 0.2],
        }
    }

    fn ranges(&self) -> [(&'static str, [f64; 2]); 8] {
        [
            ("e_fiber", self.e_fiber),
            ("e_matrix", self.e_matrix),
            ("nu_fiber", self.nu_fiber),
            ("nu_matrix", self.nu_matrix),
            ("aspect_ratio", self.aspect_ratio),
            ("angle_inplane", self.angle_inplane),
            ("angle_outplane", self.angle_outplane),
            ("volume_fraction", self.volume_fraction),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in self.ranges() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Parameter(format!("{name}: lower bound {lo} exceeds upper bound {hi}")));
            }
        }
        Ok(())
    }
}

/// Draws every parameter uniformly from its range, in declaration order.
pub fn sample_fiber(bounds: &FiberBounds, stream: RandomStream) -> Result<FiberRealization> {
    bounds.validate()?;
    let mut rng = stream.rng();
    let mut draw = |[lo, hi]: [f64; 2]| {
        let u: f64 = rng.random();
        if lo == hi {
            lo
        } else {
            lo + (hi - lo) * u
        }
    };
    let r = FiberRealization {
        e_fiber: draw(bounds.e_fiber),
        e_matrix: draw(bounds.e_matrix),
        nu_fiber: draw(bounds.nu_fiber),
        nu_matrix: draw(bounds.nu_matrix),
        aspect_ratio: draw(bounds.aspect_ratio),
        angle_inplane: draw(bounds.angle_inplane),
        angle_outplane: draw(bounds.angle_outplane),
        volume_fraction: draw(bounds.volume_fraction),
    };
    r.validate()?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    #[test]
    fn draws_stay_in_table_ranges() {
        let b = FiberBounds::chopped_fiber_example();
        let s = RandomStream::new(1, 0);
        for i in 0..200 {
            let f = sample_fiber(&b, s.child(Purpose::Fiber, i)).unwrap();
            assert!((0.95..=1.05).contains(&f.e_fiber));
            assert!((10.0..=100.0).contains(&f.aspect_ratio));
            assert!((0.0..=PI).contains(&f.angle_inplane));
            assert_eq!(f.volume_fraction, 0.2);
        }
    }

    #[test]
    fn degenerate_bounds_are_deterministic() {
        let mut b = FiberBounds::chopped_fiber_example();
        b.aspect_ratio = [42.0, 42.0];
        let f = sample_fiber(&b, RandomStream::new(9, 9)).unwrap();
        assert_eq!(f.aspect_ratio, 42.0);
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        let mut b = FiberBounds::chopped_fiber_example();
        b.e_fiber = [1.05, 0.95];
        assert!(matches!(sample_fiber(&b, RandomStream::new(0, 0)), Err(Error::Parameter(_))));
    }

    #[test]
    fn aspect_ratio_mean() {
        let b = FiberBounds::chopped_fiber_example();
        let s = RandomStream::new(77, 0);
        let n = 10_000;
        let mean = (0..n)
            .map(|i| sample_fiber(&b, s.child(Purpose::Fiber, i)).unwrap().aspect_ratio)
            .sum::<f64>()
            / n as f64;
        // σ/√n ≈ 26/100 = 0.26
        assert!((mean - 55.0).abs() < 1.0, "{mean}");
    }
}
