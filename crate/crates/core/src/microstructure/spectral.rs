//! Truncated periodic Gaussian random field
//!
//!   ψ(r) = Σ_{l,m,n ∈ [−N, N]} c_{lmn} exp(i f_{lmn}·r),   f_{lmn} = (2π/T)(l, m, n)
//!
//! with c = a + ib, a and b i.i.d. zero-mean Gaussians of variance
//! ½ S_K(|f|) (2π/T)³ and S_K the squared-exponential spectral density
//! renormalized over the ball |f| < K. Conjugate symmetry c_{−l,−m,−n} = c*_{lmn}
//! makes ψ real.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::grid::ScalarGrid;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Generator parameters of the random field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    /// Period T of the field along every axis.
    pub period: f64,
    /// Maximum wavenumber K; modes with |f| ≥ K are dropped.
    pub max_wavenumber: f64,
    /// Correlation length ℓ in E[ψ(r₁)ψ(r₂)] = exp(−|r₁ − r₂|²/ℓ²).
    pub correlation_length: f64,
}

impl FieldParams {
    pub fn new(period: f64, max_wavenumber: f64) -> Self {
        Self {
            period,
            max_wavenumber,
            correlation_length: 1.0,
        }
    }

    /// Modes per half axis, N = K T / 2π. Must be a positive integer.
    pub fn half_terms(&self) -> Result<usize> {
        if !(self.period > 0.0) || !(self.max_wavenumber > 0.0) {
            return Err(Error::Parameter(format!(
                "period and max wavenumber must be positive (T = {}, K = {})",
                self.period, self.max_wavenumber
            )));
        }
        if !(self.correlation_length > 0.0) {
            return Err(Error::Parameter("correlation length must be positive".into()));
        }
        let n = self.max_wavenumber * self.period / (2.0 * PI);
        let r = n.round();
        if (n - r).abs() > 1e-8 * n.max(1.0) || r < 1.0 {
            return Err(Error::Parameter(format!(
                "K·T/2π = {n} is not a positive integer"
            )));
        }
        Ok(r as usize)
    }

    /// Untruncated spectral density of exp(−r²/ℓ²).
    pub fn spectral_density(&self, f: f64) -> f64 {
        let l = self.correlation_length;
        l * l * l * (-f * f * l * l / 4.0).exp() / (4.0 * PI).powf(1.5)
    }

    /// ∫₀ᴷ 4π f² S(f) df, the spectral mass kept by the truncation.
    pub fn truncated_mass(&self) -> f64 {
        // Composite Simpson; the integrand is smooth and decays like a Gaussian.
        let k = self.max_wavenumber;
        let n = 20_000;
        let h = k / n as f64;
        let g = |f: f64| 4.0 * PI * f * f * self.spectral_density(f);
        let mut s = g(0.0) + g(k);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(i as f64 * h);
        }
        s * h / 3.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub params: FieldParams,
    pub half_terms: usize,
    /// Real parts, indexed by (l, m, n) ∈ [−N, N]³.
    pub coeff_a: Vec<f64>,
    /// Imaginary parts, same indexing.
    pub coeff_b: Vec<f64>,
    /// Normalizer of the truncated spectral density.
    mass: f64,
}

impl SpectralField {
    /// All-zero field with the lattice of `params`.
    pub fn zeros(params: FieldParams) -> Result<Self> {
        let n = params.half_terms()?;
        let len = (2 * n + 1).pow(3);
        Ok(Self {
            params,
            half_terms: n,
            coeff_a: vec![0.0; len],
            coeff_b: vec![0.0; len],
            mass: params.truncated_mass(),
        })
    }

    pub fn side(&self) -> usize {
        2 * self.half_terms + 1
    }

    pub fn index(&self, l: i64, m: i64, n: i64) -> usize {
        let big_n = self.half_terms as i64;
        let s = self.side() as i64;
        debug_assert!(l.abs() <= big_n && m.abs() <= big_n && n.abs() <= big_n);
        (((l + big_n) * s + (m + big_n)) * s + (n + big_n)) as usize
    }

    /// Complex coefficient c_{lmn}.
    pub fn coeff(&self, l: i64, m: i64, n: i64) -> Complex64 {
        let i = self.index(l, m, n);
        Complex64::new(self.coeff_a[i], self.coeff_b[i])
    }

    /// Sets c_{lmn} and its mirror c_{−l,−m,−n} = conj(c).
    pub fn set_pair(&mut self, l: i64, m: i64, n: i64, a: f64, b: f64) {
        let i = self.index(l, m, n);
        let j = self.index(-l, -m, -n);
        self.coeff_a[i] = a;
        self.coeff_b[i] = b;
        self.coeff_a[j] = a;
        self.coeff_b[j] = -b;
    }

    /// Whether (l, m, n) lies inside the truncation ball |f| < K.
    pub fn is_active(&self, l: i64, m: i64, n: i64) -> bool {
        let big_n = self.half_terms as i64;
        l * l + m * m + n * n < big_n * big_n
    }

    /// Standard deviation of a_{lmn} (and b_{lmn}); zero for dropped modes.
    pub fn coefficient_std(&self, l: i64, m: i64, n: i64) -> f64 {
        if (l, m, n) == (0, 0, 0) || !self.is_active(l, m, n) {
            return 0.0;
        }
        let dk = 2.0 * PI / self.params.period;
        let f = dk * ((l * l + m * m + n * n) as f64).sqrt();
        let s_k = self.params.spectral_density(f) / self.mass;
        (0.5 * s_k * dk.powi(3)).sqrt()
    }

    /// Representative modes of the half lattice in sampling order:
    /// l > 0, or l = 0 ∧ m > 0, or l = m = 0 ∧ n > 0, lexicographic.
    pub fn half_lattice(&self) -> impl Iterator<Item = (i64, i64, i64)> + '_ {
        let big_n = self.half_terms as i64;
        (0..=big_n).flat_map(move |l| {
            (-big_n..=big_n).flat_map(move |m| {
                (-big_n..=big_n).filter_map(move |n| {
                    let half = l > 0 || (l == 0 && m > 0) || (l == 0 && m == 0 && n > 0);
                    half.then_some((l, m, n))
                })
            })
        })
    }
}

/// Draws the Gaussian coefficients of one field realization.
pub fn sample_spectral_coefficients(params: FieldParams, stream: RandomStream) -> Result<SpectralField> {
    let mut field = SpectralField::zeros(params)?;
    let mut rng = stream.rng();
    let modes: Vec<_> = field.half_lattice().filter(|&(l, m, n)| field.is_active(l, m, n)).collect();
    for (l, m, n) in modes {
        let sd = field.coefficient_std(l, m, n);
        let za: f64 = StandardNormal.sample(&mut rng);
        let zb: f64 = StandardNormal.sample(&mut rng);
        field.set_pair(l, m, n, sd * za, sd * zb);
    }
    Ok(field)
}

/// Direct evaluation of the series at one point. The imaginary part is the
/// round-off residue of the conjugate-symmetric sum.
pub fn evaluate_point_direct(field: &SpectralField, r: [f64; 3]) -> Complex64 {
    let big_n = field.half_terms as i64;
    let dk = 2.0 * PI / field.params.period;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in -big_n..=big_n {
        for m in -big_n..=big_n {
            for n in -big_n..=big_n {
                let c = field.coeff(l, m, n);
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                let phase = dk * (l as f64 * r[0] + m as f64 * r[1] + n as f64 * r[2]);
                acc += c * Complex64::from_polar(1.0, phase);
            }
        }
    }
    acc
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() > 3 || dims.iter().any(|&d| d == 0) {
        return Err(Error::Parameter(format!("invalid grid shape {dims:?}")));
    }
    Ok(())
}

/// Samples ψ at the cell centers of a grid spanning one period per axis.
/// `dims` has up to three axes; missing axes are evaluated at coordinate 0.
///
/// Modes are folded onto the grid frequencies (with the half-cell phase
/// shift) and summed by inverse FFT, which reproduces the direct series
/// exactly at the grid points.
pub fn evaluate_field(field: &SpectralField, dims: &[usize]) -> Result<ScalarGrid> {
    check_dims(dims)?;
    let mut g = [1usize; 3];
    g[..dims.len()].copy_from_slice(dims);
    let big_n = field.half_terms as i64;
    let len = g[0] * g[1] * g[2];
    let mut bins = vec![Complex64::new(0.0, 0.0); len];
    let phases: Vec<Vec<Complex64>> = (0..3)
        .map(|ax| {
            (-big_n..=big_n)
                .map(|k| {
                    if ax < dims.len() {
                        Complex64::from_polar(1.0, PI * k as f64 / g[ax] as f64)
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    for l in -big_n..=big_n {
        let i0 = l.rem_euclid(g[0] as i64) as usize;
        let p0 = phases[0][(l + big_n) as usize];
        for m in -big_n..=big_n {
            let i1 = m.rem_euclid(g[1] as i64) as usize;
            let p01 = p0 * phases[1][(m + big_n) as usize];
            for n in -big_n..=big_n {
                let c = field.coeff(l, m, n);
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                let i2 = n.rem_euclid(g[2] as i64) as usize;
                bins[i0 + g[0] * (i1 + g[1] * i2)] += c * p01 * phases[2][(n + big_n) as usize];
            }
        }
    }
    inverse_dft(&mut bins, g);
    Ok(ScalarGrid::new(dims.to_vec(), bins.into_iter().map(|c| c.re).collect()))
}

/// ψ on the plane `plane` (cell-center index along `axis` of a grid with
/// `resolution` cells per axis), sampled on a `resolution²` grid over the two
/// remaining axes in increasing axis order. Equals the corresponding slice
/// of [`evaluate_field`] on a `resolution³` grid without building it.
pub fn evaluate_slice(field: &SpectralField, axis: usize, plane: usize, resolution: usize) -> Result<ScalarGrid> {
    if axis > 2 {
        return Err(Error::Parameter(format!("slice axis {axis} out of range")));
    }
    if plane >= resolution {
        return Err(Error::Bounds(format!("plane {plane} outside 0..{resolution}")));
    }
    check_dims(&[resolution])?;
    let big_n = field.half_terms as i64;
    let side = field.side();
    let g = resolution;
    let (ax_u, ax_v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    // Collapse the sliced axis: c'(u, v) = Σ_k c e^{i 2π k (plane + ½)/g}
    let x = (plane as f64 + 0.5) / g as f64;
    let kphase: Vec<Complex64> = (-big_n..=big_n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x))
        .collect();
    let mut reduced = vec![Complex64::new(0.0, 0.0); side * side];
    for l in -big_n..=big_n {
        for m in -big_n..=big_n {
            for n in -big_n..=big_n {
                let c = field.coeff(l, m, n);
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                let idx = [l, m, n];
                let k = idx[axis];
                let (u, v) = (idx[ax_u], idx[ax_v]);
                reduced[((u + big_n) as usize) * side + (v + big_n) as usize] += c * kphase[(k + big_n) as usize];
            }
        }
    }
    let half: Vec<Complex64> = (-big_n..=big_n)
        .map(|k| Complex64::from_polar(1.0, PI * k as f64 / g as f64))
        .collect();
    let mut bins = vec![Complex64::new(0.0, 0.0); g * g];
    for u in -big_n..=big_n {
        let iu = u.rem_euclid(g as i64) as usize;
        for v in -big_n..=big_n {
            let c = reduced[((u + big_n) as usize) * side + (v + big_n) as usize];
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let iv = v.rem_euclid(g as i64) as usize;
            bins[iu + g * iv] += c * half[(u + big_n) as usize] * half[(v + big_n) as usize];
        }
    }
    inverse_dft(&mut bins, [g, g, 1]);
    Ok(ScalarGrid::new(vec![g, g], bins.into_iter().map(|c| c.re).collect()))
}

/// Unnormalized inverse DFT along every axis of an axis-0-fastest array.
fn inverse_dft(data: &mut [Complex64], g: [usize; 3]) {
    let mut planner = FftPlanner::<f64>::new();
    let strides = [1, g[0], g[0] * g[1]];
    for ax in 0..3 {
        let n = g[ax];
        if n == 1 {
            continue;
        }
        let fft = planner.plan_fft_inverse(n);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let stride = strides[ax];
        let total = data.len();
        for start in 0..total {
            // Visit each line once: its start has index 0 along `ax`.
            if (start / stride) % n != 0 {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Purpose;

    fn small_params() -> FieldParams {
        // N = 3
        FieldParams::new(2.0 * PI, 3.0)
    }

    #[test]
    fn paper_case_gives_fifty_terms() {
        assert_eq!(FieldParams::new(4.0 * PI, 25.0).half_terms().unwrap(), 50);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(FieldParams::new(4.0 * PI, 24.9).half_terms(), Err(Error::Parameter(_))));
        assert!(FieldParams::new(-1.0, 25.0).half_terms().is_err());
        assert!(FieldParams::new(1.0, 0.0).half_terms().is_err());
    }

    #[test]
    fn zero_mode_and_truncated_modes_vanish() {
        let f = sample_spectral_coefficients(FieldParams::new(4.0 * PI, 5.0), RandomStream::new(1, 0)).unwrap();
        assert_eq!(f.coeff(0, 0, 0), Complex64::new(0.0, 0.0));
        let n = f.half_terms as i64;
        for (l, m, k) in [(n, 0, 0), (0, n, 0), (n, n, n), (n - 1, n - 1, 0)] {
            if !f.is_active(l, m, k) {
                assert_eq!(f.coeff(l, m, k), Complex64::new(0.0, 0.0));
            }
        }
        assert!(!f.is_active(n, 0, 0));
    }

    #[test]
    fn conjugate_symmetry() {
        let f = sample_spectral_coefficients(small_params(), RandomStream::new(3, 0)).unwrap();
        let n = f.half_terms as i64;
        for l in -n..=n {
            for m in -n..=n {
                for k in -n..=n {
                    assert_eq!(f.coeff(l, m, k), f.coeff(-l, -m, -k).conj());
                }
            }
        }
    }

    #[test]
    fn all_zero_field_evaluates_to_zero() {
        let f = SpectralField::zeros(small_params()).unwrap();
        let g = evaluate_field(&f, &[4, 4, 4]).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_pair_is_a_cosine() {
        let mut f = SpectralField::zeros(small_params()).unwrap();
        f.set_pair(1, 0, 0, 1.0, 0.0);
        let g = evaluate_field(&f, &[8, 3, 2]).unwrap();
        let t = f.params.period;
        for i in 0..8 {
            let x = (i as f64 + 0.5) * t / 8.0;
            let expect = 2.0 * (2.0 * PI * x / t).cos();
            for j in 0..3 {
                for k in 0..2 {
                    assert!((g.get(&[i, j, k]) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fft_matches_direct_sum_on_small_grids() {
        let f = sample_spectral_coefficients(small_params(), RandomStream::new(11, 2)).unwrap();
        for dims in [[8usize, 8, 8], [5, 6, 7], [2, 3, 4]] {
            let g = evaluate_field(&f, &dims).unwrap();
            let t = f.params.period;
            let rms = (g.values.iter().map(|v| v * v).sum::<f64>() / g.values.len() as f64).sqrt();
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let r = [
                            (i as f64 + 0.5) * t / dims[0] as f64,
                            (j as f64 + 0.5) * t / dims[1] as f64,
                            (k as f64 + 0.5) * t / dims[2] as f64,
                        ];
                        let d = evaluate_point_direct(&f, r);
                        let v = g.get(&[i, j, k]);
                        assert!((v - d.re).abs() <= 1e-10 * d.re.abs().max(rms), "{dims:?} {v} {}", d.re);
                        assert!(d.im.abs() < 1e-12 * rms);
                    }
                }
            }
        }
    }

    #[test]
    fn periodic_in_every_axis() {
        let f = sample_spectral_coefficients(small_params(), RandomStream::new(5, 0)).unwrap();
        let t = f.params.period;
        let r = [0.3, 1.1, 2.7];
        let base = evaluate_point_direct(&f, r).re;
        for ax in 0..3 {
            let mut s = r;
            s[ax] += t;
            assert!((evaluate_point_direct(&f, s).re - base).abs() < 1e-10);
        }
    }

    #[test]
    fn slice_matches_full_grid() {
        let f = sample_spectral_coefficients(small_params(), RandomStream::new(9, 0)).unwrap();
        let g = 6;
        let full = evaluate_field(&f, &[g, g, g]).unwrap();
        for axis in 0..3 {
            for plane in [0, 4] {
                let s = evaluate_slice(&f, axis, plane, g).unwrap();
                for v in 0..g {
                    for u in 0..g {
                        let ijk = match axis {
                            0 => [plane, u, v],
                            1 => [u, plane, v],
                            _ => [u, v, plane],
                        };
                        assert!((s.get(&[u, v]) - full.get(&ijk)).abs() < 1e-12);
                    }
                }
            }
        }
        assert!(matches!(evaluate_slice(&f, 0, g, g), Err(Error::Bounds(_))));
    }

    #[test]
    fn standardized_coefficients_have_unit_variance() {
        // T = 4π, K = 25: roughly 2.6e5 active modes per field, 5.2e5 (a, b) draws.
        let f = sample_spectral_coefficients(
            FieldParams::new(4.0 * PI, 25.0),
            RandomStream::new(2024, 0).child(Purpose::Field, 0),
        )
        .unwrap();
        let mut acc = 0.0;
        let mut count = 0usize;
        for (l, m, n) in f.half_lattice() {
            if count == 100_000 {
                break;
            }
            let sd = f.coefficient_std(l, m, n);
            if sd > 0.0 {
                let z = f.coeff(l, m, n).re / sd;
                acc += z * z;
                count += 1;
            }
        }
        assert_eq!(count, 100_000);
        let var = acc / count as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn determinism() {
        let p = small_params();
        let a = sample_spectral_coefficients(p, RandomStream::new(8, 1)).unwrap();
        let b = sample_spectral_coefficients(p, RandomStream::new(8, 1)).unwrap();
        let c = sample_spectral_coefficients(p, RandomStream::new(8, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn truncated_mass_is_near_one_for_wide_cutoff() {
        let m = FieldParams::new(4.0 * PI, 25.0).truncated_mass();
        assert!((m - 1.0).abs() < 1e-10);
        // X = 1: erf(1) − 2/√π e^{-1}
        let narrow = FieldParams::new(2.0 * PI, 2.0).truncated_mass();
        assert!((narrow - (0.842_700_792_949_714_9 - 2.0 / PI.sqrt() * (-1.0f64).exp())).abs() < 1e-9);
    }
}
