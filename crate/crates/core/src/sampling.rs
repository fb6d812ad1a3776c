//! Seeded collocation sets on the unit disk and lattice evaluation grids.
//!
//! All randomness comes from SplitMix64 (Steele, Lea & Flood 2014; the
//! `rand_xoshiro` implementation, state initialized to the seed). A uniform
//! variate in `[0, 1)` is `(x >> 11) · 2⁻⁵³` of the next 64-bit output. Given
//! the same `(seed, n)` every platform produces the same samples.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::scalar::{Point, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("sample count must be at least 1")]
    Empty,
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
}

pub type Result<T> = std::result::Result<T, SamplingError>;

/// Seeded uniform stream on `[0, 1)`.
#[derive(Debug, Clone)]
pub struct UniformStream(SplitMix64);

impl UniformStream {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// `n` i.i.d. uniform points of the open unit disk, `r = √u₁`, `θ = 2π u₂`.
/// A draw whose rounded radius reaches 1 is discarded and redrawn.
pub fn sample_disk<T: Real>(n: usize, seed: u64) -> Result<Vec<Point<T>>> {
    if n == 0 {
        return Err(SamplingError::Empty);
    }
    let mut rng = UniformStream::new(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let r = rng.next_unit().sqrt();
        let theta = std::f64::consts::TAU * rng.next_unit();
        let p = [T::lit(r * theta.cos()), T::lit(r * theta.sin())];
        if p[0].hypot(p[1]) < T::one() {
            points.push(p);
        }
    }
    Ok(points)
}

/// `n_b` stratified points on the unit circle: `θ_k = 2π (k + u_k) / n_b`.
pub fn sample_circle<T: Real>(n_b: usize, seed: u64) -> Result<Vec<Point<T>>> {
    if n_b == 0 {
        return Err(SamplingError::Empty);
    }
    let mut rng = UniformStream::new(seed);
    Ok((0..n_b)
        .map(|k| {
            let theta = std::f64::consts::TAU * (k as f64 + rng.next_unit()) / n_b as f64;
            [T::lit(theta.cos()), T::lit(theta.sin())]
        })
        .collect())
}

/// Boundary sample count used when none is given: `max(n / 8, 1)`.
pub fn default_boundary_count(n_interior: usize) -> usize {
    (n_interior / 8).max(1)
}

/// Seed of the boundary stream derived from a sampler seed.
pub fn boundary_seed_for(sampler_seed: u64) -> u64 {
    sampler_seed.wrapping_add(1)
}

/// Interior points (quadrature weight `π/N`) followed by boundary points
/// (weight `2π/N_b`), stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    points: Vec<Point<T>>,
    n_interior: usize,
    pub interior_seed: u64,
    pub boundary_seed: u64,
}

impl<T: Real> SampleSet<T> {
    /// Interior stream seeded with `seed`, boundary stream with
    /// [`boundary_seed_for`]`(seed)`.
    pub fn generate(n_interior: usize, n_boundary: usize, seed: u64) -> Result<Self> {
        Self::with_seeds(n_interior, n_boundary, seed, boundary_seed_for(seed))
    }

    pub fn with_seeds(n_interior: usize, n_boundary: usize, interior_seed: u64, boundary_seed: u64) -> Result<Self> {
        let mut points = sample_disk(n_interior, interior_seed)?;
        points.extend(sample_circle::<T>(n_boundary, boundary_seed)?);
        Ok(Self { points, n_interior, interior_seed, boundary_seed })
    }

    /// Builds a set from explicit points. The caller is responsible for the
    /// interior/boundary geometry.
    pub fn from_points(interior: Vec<Point<T>>, boundary: Vec<Point<T>>) -> Result<Self> {
        if interior.is_empty() {
            return Err(SamplingError::Empty);
        }
        let n_interior = interior.len();
        let mut points = interior;
        points.extend(boundary);
        Ok(Self { points, n_interior, interior_seed: 0, boundary_seed: 0 })
    }

    pub fn interior(&self) -> &[Point<T>] {
        &self.points[..self.n_interior]
    }

    pub fn boundary(&self) -> &[Point<T>] {
        &self.points[self.n_interior..]
    }

    /// Interior points followed by boundary points.
    pub fn all_points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_boundary(&self) -> usize {
        self.points.len() - self.n_interior
    }

    pub fn interior_weight(&self) -> T {
        T::PI() / T::from_count(self.n_interior)
    }

    pub fn boundary_weight(&self) -> T {
        T::TAU() / T::from_count(self.n_boundary().max(1))
    }

    /// One `x1 x2 w` line per point, interior first.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (wi, wb) = (self.interior_weight(), self.boundary_weight());
        for (k, p) in self.points.iter().enumerate() {
            let w = if k < self.n_interior { wi } else { wb };
            writeln!(out, "{:e} {:e} {:e}", p[0], p[1], w)?;
        }
        Ok(())
    }
}

/// Nodes of the `R × R` lattice on `[-1, 1]²` with spacing `2/(R-1)`; a node
/// is inside when it lies in the closed unit disk. Lattice order is row-major
/// with rows indexed by `x2` and columns by `x1`, both increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid<T> {
    pub resolution: usize,
    pub mask: Vec<bool>,
    pub points: Vec<Point<T>>,
}

pub fn make_grid<T: Real>(resolution: usize) -> Result<EvalGrid<T>> {
    if resolution < 2 {
        return Err(SamplingError::Resolution(resolution));
    }
    // Integer lattice coordinates keep the mask exactly symmetric.
    let span = (resolution - 1) as i64;
    let coord = |k: usize| 2 * k as i64 - span;
    let mut mask = Vec::with_capacity(resolution * resolution);
    let mut points = Vec::new();
    for row in 0..resolution {
        for col in 0..resolution {
            let (a, b) = (coord(col), coord(row));
            let inside = a * a + b * b <= span * span;
            mask.push(inside);
            if inside {
                let s = T::from_count(span as usize);
                points.push([T::lit(a as f64) / s, T::lit(b as f64) / s]);
            }
        }
    }
    Ok(EvalGrid { resolution, mask, points })
}

impl<T: Real> EvalGrid<T> {
    pub fn inside_count(&self) -> usize {
        self.points.len()
    }

    pub fn spacing(&self) -> T {
        T::lit(2.0) / T::from_count(self.resolution - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::DiskHarmonic;

    #[test]
    fn splitmix_first_outputs_are_fixed() {
        let mut s = UniformStream::new(4321);
        let got: Vec<u64> = (0..8).map(|_| s.next_u64()).collect();
        assert_eq!(
            got,
            [
                0xa12bb80327815178,
                0x02e1dfdcdd0bfd52,
                0x63c0a064849ec316,
                0xc6887f3a9bd5f00d,
                0xf9010f01d28acccb,
                0xa77a5848be3046b4,
                0x551ecffc7474a67d,
                0xeb315ad59ee88fec,
            ]
        );
        assert_eq!(UniformStream::new(0).next_u64(), 0xe220a8397b1dcdaf);
    }

    #[test]
    fn disk_samples_statistics() {
        let pts = sample_disk::<f64>(65536, 4321).unwrap();
        assert!(pts.iter().all(|p| p[0].hypot(p[1]) < 1.0));
        let n = pts.len() as f64;
        let mean_r = pts.iter().map(|p| p[0].hypot(p[1])).sum::<f64>() / n;
        let mean_x = pts.iter().map(|p| p[0]).sum::<f64>() / n;
        assert!((mean_r - 2.0 / 3.0).abs() <= 0.005, "{mean_r}");
        assert!(mean_x.abs() <= 0.01, "{mean_x}");
        assert_eq!(sample_disk::<f64>(0, 1), Err(SamplingError::Empty));
    }

    #[test]
    fn circle_samples() {
        let n_b = 512;
        let pts = sample_circle::<f64>(n_b, 9).unwrap();
        assert!(pts.iter().all(|p| (p[0].hypot(p[1]) - 1.0).abs() <= 1e-14));
        let mut angles: Vec<f64> = pts.iter().map(|p| p[1].atan2(p[0]).rem_euclid(std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let bound = 4.0 * std::f64::consts::PI / n_b as f64;
        for w in angles.windows(2) {
            assert!(w[1] - w[0] < bound);
        }
        assert!(angles[0] + std::f64::consts::TAU - angles[n_b - 1] < bound);
        assert_eq!(pts, sample_circle::<f64>(n_b, 9).unwrap());
    }

    #[test]
    fn sample_set_layout_and_weights() {
        let set = SampleSet::<f64>::generate(1000, 125, 4321).unwrap();
        assert_eq!(set.interior().len(), 1000);
        assert_eq!(set.boundary().len(), 125);
        assert_eq!(set.boundary_seed, 4322);
        let total: f64 = (0..set.n_interior()).map(|_| set.interior_weight()).sum();
        assert!((total - std::f64::consts::PI).abs() <= 1e-12);
        assert_eq!(set, SampleSet::generate(1000, 125, 4321).unwrap());
        let mut buf = Vec::new();
        set.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1125);
        let first: Vec<f64> = text.lines().next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first, vec![set.interior()[0][0], set.interior()[0][1], set.interior_weight()]);
    }

    #[test]
    fn monte_carlo_normalization_of_z01() {
        let z01 = DiskHarmonic::<f64>::new(0, 1).unwrap();
        let set = SampleSet::<f64>::generate(65536, 8, 4321).unwrap();
        let w = set.interior_weight();
        let f: Vec<f64> = set.interior().iter().map(|p| z01.value(p).powi(2)).collect();
        let n = f.len() as f64;
        let estimate: f64 = f.iter().map(|v| w * v).sum();
        let mean = f.iter().sum::<f64>() / n;
        let var = f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std_err = std::f64::consts::PI * (var / n).sqrt();
        let j1 = crate::verify::bessel_j_integral(1, z01.lambda);
        let exact = std::f64::consts::PI * j1 * j1;
        assert!((estimate - exact).abs() <= 3.0 * std_err, "{estimate} vs {exact} (se {std_err})");
    }

    #[test]
    fn grid_enumeration_and_symmetry() {
        let g = make_grid::<f64>(3).unwrap();
        assert_eq!(g.mask.len(), 9);
        assert_eq!(g.inside_count(), 5);
        assert_eq!(g.mask, vec![false, true, false, true, true, true, false, true, false]);
        for r in [4usize, 7, 64, 101] {
            let g = make_grid::<f64>(r).unwrap();
            for row in 0..r {
                for col in 0..r {
                    let m = g.mask[row * r + col];
                    assert_eq!(m, g.mask[row * r + (r - 1 - col)]);
                    assert_eq!(m, g.mask[(r - 1 - row) * r + col]);
                    assert_eq!(m, g.mask[col * r + row]);
                }
            }
        }
        let g = make_grid::<f64>(101).unwrap();
        let frac = g.inside_count() as f64 / (101.0 * 101.0);
        assert!((frac - std::f64::consts::FRAC_PI_4).abs() <= 0.02);
        assert_eq!(make_grid::<f64>(1), Err(SamplingError::Resolution(1)));
    }
}
