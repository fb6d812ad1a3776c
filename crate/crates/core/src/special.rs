//! Bessel functions of the first kind, their positive zeros, and the disk
//! harmonics `Z_mn(r, θ) = J_m(λ_mn r) cos(mθ)` that diagonalize the Dirichlet
//! Laplacian on the unit disk.

use thiserror::Error;

use crate::scalar::{Point, Real};

/// Largest supported Bessel order.
pub const MAX_ORDER: u32 = 10;
/// Largest supported Bessel argument.
pub const MAX_ARGUMENT: f64 = 50.0;
/// Largest supported zero index.
pub const MAX_ZERO_INDEX: u32 = 8;

const NEWTON_MAX_ITERS: usize = 50;
const SCAN_START: f64 = 0.05;
const SCAN_STEP: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("bessel_j({order}, {x}) is outside the supported envelope 0 <= m <= 10, 0 <= x <= 50")]
    Domain { order: u32, x: f64 },
    #[error("zero index (m = {order}, n = {index}) outside 0 <= m <= 10, 1 <= n <= 8")]
    ZeroIndex { order: u32, index: u32 },
    #[error("failed to locate zero n = {index} of J_{order}")]
    NoConvergence { order: u32, index: u32 },
}

pub type Result<T> = std::result::Result<T, SpecialError>;

/// Bessel function of the first kind `J_m(x)` for `0 <= m <= 10`, `0 <= x <= 50`.
///
/// Uses the ascending power series for `x <= m + 2` and Miller's downward
/// recurrence, normalized by `J_0 + 2 Σ J_2k = 1`, above that.
pub fn bessel_j<T: Real>(m: u32, x: T) -> Result<T> {
    let xf = x.to_f64().unwrap_or(f64::NAN);
    if m > MAX_ORDER || !(0.0..=MAX_ARGUMENT).contains(&xf) {
        return Err(SpecialError::Domain { order: m, x: xf });
    }
    if x <= T::from_count(m as usize + 2) {
        Ok(ascending_series(m, x))
    } else {
        Ok(miller(m, x))
    }
}

fn ascending_series<T: Real>(m: u32, x: T) -> T {
    let half = x * T::lit(0.5);
    let mut term = T::one();
    for k in 1..=m {
        term = term * half / T::from_count(k as usize);
    }
    let q = -(half * half);
    let mut sum = term;
    for k in 1..200usize {
        term = term * q / (T::from_count(k) * T::from_count(k + m as usize));
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() * T::lit(0.5) {
            break;
        }
    }
    sum
}

fn miller<T: Real>(m: u32, x: T) -> T {
    let xf = x.to_f64().unwrap_or(0.0);
    let top = (m as usize).max(xf.ceil() as usize) + 20 + (6.0 * xf.sqrt()).ceil() as usize;
    let start = top + (top & 1);
    let big = T::max_value().powf(T::lit(0.25));
    let two_over_x = T::lit(2.0) / x;

    let (mut above, mut current) = (T::zero(), T::min_positive_value().sqrt());
    let (mut target, mut norm) = (T::zero(), T::zero());
    for k in (1..=start).rev() {
        let below = T::from_count(k) * two_over_x * current - above;
        above = current;
        current = below;
        // `current` now holds J_{k-1} up to scale
        if k - 1 == m as usize {
            target = current;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += T::lit(2.0) * current;
        }
        if current.abs() > big {
            let s = big.recip();
            above *= s;
            current *= s;
            target *= s;
            norm *= s;
        }
    }
    norm += current;
    target / norm
}

/// Derivative `J_m'(x)`.
pub fn bessel_j_prime<T: Real>(m: u32, x: T) -> Result<T> {
    if m == 0 {
        return Ok(-bessel_j(1, x)?);
    }
    if m == MAX_ORDER {
        // J_m' = J_{m-1} - (m / x) J_m avoids the order m + 1
        if x == T::zero() {
            return Ok(T::zero());
        }
        return Ok(bessel_j(m - 1, x)? - T::from_count(m as usize) / x * bessel_j(m, x)?);
    }
    Ok((bessel_j(m - 1, x)? - bessel_j(m + 1, x)?) * T::lit(0.5))
}

/// McMahon asymptotic estimate of the `n`-th positive zero of `J_m`.
pub fn mcmahon_guess(m: u32, n: u32) -> f64 {
    let beta = (n as f64 + m as f64 / 2.0 - 0.25) * std::f64::consts::PI;
    beta - (4.0 * (m * m) as f64 - 1.0) / (8.0 * beta)
}

/// `n`-th positive zero `λ_mn` of `J_m` (`m <= 10`, `1 <= n <= 8`).
///
/// Newton's method from the McMahon estimate, validated by counting sign
/// changes below the candidate; falls back to bisection on the `n`-th sign
/// change bracket.
pub fn bessel_zero<T: Real>(m: u32, n: u32) -> Result<T> {
    if m > MAX_ORDER || n == 0 || n > MAX_ZERO_INDEX {
        return Err(SpecialError::ZeroIndex { order: m, index: n });
    }
    if let Some(root) = newton_zero(m, n)? {
        return Ok(root);
    }
    bisect_zero(m, n)
}

fn newton_zero<T: Real>(m: u32, n: u32) -> Result<Option<T>> {
    let mut x = T::lit(mcmahon_guess(m, n));
    for _ in 0..NEWTON_MAX_ITERS {
        let d = bessel_j_prime(m, x)?;
        if d == T::zero() {
            return Ok(None);
        }
        let step = bessel_j(m, x)? / d;
        x -= step;
        if !(x > T::zero()) || x > T::lit(MAX_ARGUMENT) {
            return Ok(None);
        }
        if step.abs() <= T::lit(4.0) * T::epsilon() * x {
            return Ok(if sign_changes_below(m, x - T::lit(0.5))? == n - 1 {
                Some(polish(m, x)?)
            } else {
                None
            });
        }
    }
    Ok(None)
}

/// One last Newton step is taken only if it lowers `|J_m|`.
fn polish<T: Real>(m: u32, x: T) -> Result<T> {
    let fx = bessel_j(m, x)?;
    let y = x - fx / bessel_j_prime(m, x)?;
    Ok(if bessel_j(m, y)?.abs() < fx.abs() { y } else { x })
}

fn sign_changes_below<T: Real>(m: u32, limit: T) -> Result<u32> {
    let mut count = 0;
    let mut a = T::lit(SCAN_START);
    let mut fa = bessel_j(m, a)?;
    while a < limit {
        let b = (a + T::lit(SCAN_STEP)).min(limit);
        let fb = bessel_j(m, b)?;
        if fa.signum() != fb.signum() && fb != T::zero() {
            count += 1;
        }
        a = b;
        fa = fb;
    }
    Ok(count)
}

fn bisect_zero<T: Real>(m: u32, n: u32) -> Result<T> {
    let fail = SpecialError::NoConvergence { order: m, index: n };
    let mut count = 0;
    let mut a = T::lit(SCAN_START);
    let mut fa = bessel_j(m, a)?;
    loop {
        let b = a + T::lit(SCAN_STEP);
        if b > T::lit(MAX_ARGUMENT) {
            return Err(fail);
        }
        let fb = bessel_j(m, b)?;
        if fb == T::zero() {
            count += 1;
            if count == n {
                return Ok(b);
            }
        } else if fa.signum() != fb.signum() {
            count += 1;
            if count == n {
                let (mut lo, mut hi, mut flo) = (a, b, fa);
                for _ in 0..200 {
                    let mid = (lo + hi) * T::lit(0.5);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let fm = bessel_j(m, mid)?;
                    if fm == T::zero() {
                        return Ok(mid);
                    }
                    if fm.signum() == flo.signum() {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                return Ok((lo + hi) * T::lit(0.5));
            }
        }
        a = b;
        fa = fb;
    }
}

/// Cached zeros `λ_mn` for `m <= max_order`, `1 <= n <= max_index`.
#[derive(Debug, Clone)]
pub struct BesselZeroTable<T> {
    max_order: u32,
    max_index: u32,
    zeros: Vec<T>,
}

impl<T: Real> BesselZeroTable<T> {
    pub fn build(max_order: u32, max_index: u32) -> Result<Self> {
        if max_order > MAX_ORDER || max_index == 0 || max_index > MAX_ZERO_INDEX {
            return Err(SpecialError::ZeroIndex { order: max_order, index: max_index });
        }
        let mut zeros = Vec::with_capacity(((max_order + 1) * max_index) as usize);
        for m in 0..=max_order {
            for n in 1..=max_index {
                zeros.push(bessel_zero(m, n)?);
            }
        }
        Ok(Self { max_order, max_index, zeros })
    }

    pub fn get(&self, m: u32, n: u32) -> Option<T> {
        (m <= self.max_order && (1..=self.max_index).contains(&n))
            .then(|| self.zeros[(m * self.max_index + n - 1) as usize])
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn max_index(&self) -> u32 {
        self.max_index
    }
}

/// Disk harmonic `Z_mn(r, θ) = J_m(λ_mn r) cos(mθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskHarmonic<T> {
    pub m: u32,
    pub n: u32,
    pub lambda: T,
}

impl<T: Real> DiskHarmonic<T> {
    pub fn new(m: u32, n: u32) -> Result<Self> {
        Ok(Self { m, n, lambda: bessel_zero(m, n)? })
    }

    pub fn from_table(table: &BesselZeroTable<T>, m: u32, n: u32) -> Result<Self> {
        let lambda = table.get(m, n).ok_or(SpecialError::ZeroIndex { order: m, index: n })?;
        Ok(Self { m, n, lambda })
    }

    /// Eigenvalue of the Laplacian, `-λ²`.
    pub fn eigenvalue(&self) -> T {
        -self.lambda * self.lambda
    }

    /// Value at a Cartesian point of the closed disk. Points marginally
    /// outside (by rounding) are clamped onto the unit circle.
    pub fn value(&self, p: &Point<T>) -> T {
        let r = p[0].hypot(p[1]);
        if r == T::zero() {
            return if self.m == 0 { T::one() } else { T::zero() };
        }
        let arg = (self.lambda * r.min(T::one())).min(T::lit(MAX_ARGUMENT));
        let radial = bessel_j(self.m, arg).expect("harmonic argument inside envelope");
        if self.m == 0 {
            return radial;
        }
        let theta = p[1].atan2(p[0]);
        radial * (T::from_count(self.m as usize) * theta).cos()
    }

    pub fn laplacian_value(&self, p: &Point<T>) -> T {
        self.eigenvalue() * self.value(p)
    }
}

pub fn harmonic_eval<T: Real>(h: &DiskHarmonic<T>, points: &[Point<T>]) -> Vec<T> {
    points.iter().map(|p| h.value(p)).collect()
}

/// `ΔZ_mn = -λ_mn² Z_mn`.
pub fn harmonic_laplacian<T: Real>(h: &DiskHarmonic<T>, points: &[Point<T>]) -> Vec<T> {
    points.iter().map(|p| h.laplacian_value(p)).collect()
}

/// Finite sum `Σ c_k Z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalExpansion<T> {
    pub terms: Vec<(DiskHarmonic<T>, T)>,
}

impl<T: Real> ModalExpansion<T> {
    pub fn new(terms: Vec<(DiskHarmonic<T>, T)>) -> Self {
        Self { terms }
    }

    pub fn single_mode(m: u32, n: u32, coeff: T) -> Result<Self> {
        Ok(Self::new(vec![(DiskHarmonic::new(m, n)?, coeff)]))
    }

    pub fn value(&self, p: &Point<T>) -> T {
        self.terms.iter().fold(T::zero(), |acc, (h, c)| acc + *c * h.value(p))
    }

    pub fn laplacian_value(&self, p: &Point<T>) -> T {
        self.terms.iter().fold(T::zero(), |acc, (h, c)| acc + *c * h.laplacian_value(p))
    }

    pub fn eval(&self, points: &[Point<T>]) -> Vec<T> {
        points.iter().map(|p| self.value(p)).collect()
    }

    pub fn laplacian(&self, points: &[Point<T>]) -> Vec<T> {
        points.iter().map(|p| self.laplacian_value(p)).collect()
    }
}

/// Initial condition shared by both heat-equation experiments:
/// `¼ (Z01 - ¼Z02 + 1/16 Z03 - 1/64 Z04 + Z11 - ½Z12 + ¼Z13 - ⅛Z14 + Z21 + Z31 + Z41)`.
pub fn experiment1_expansion<T: Real>() -> Result<ModalExpansion<T>> {
    const TERMS: [(u32, u32, f64); 11] = [
        (0, 1, 1.0),
        (0, 2, -0.25),
        (0, 3, 0.0625),
        (0, 4, -0.015625),
        (1, 1, 1.0),
        (1, 2, -0.5),
        (1, 3, 0.25),
        (1, 4, -0.125),
        (2, 1, 1.0),
        (3, 1, 1.0),
        (4, 1, 1.0),
    ];
    let table = BesselZeroTable::build(4, 4)?;
    let terms = TERMS
        .iter()
        .map(|&(m, n, c)| Ok((DiskHarmonic::from_table(&table, m, n)?, T::lit(0.25 * c))))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModalExpansion::new(terms))
}

/// Exact solution of `u_t = ν Δu`, `u = 0` on the circle, with `u(·, 0)` a
/// modal expansion: each mode decays as `exp(-ν λ² t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution<T> {
    pub expansion: ModalExpansion<T>,
    pub nu: T,
}

impl<T: Real> ExactSolution<T> {
    pub fn new(expansion: ModalExpansion<T>, nu: T) -> Self {
        Self { expansion, nu }
    }

    pub fn value(&self, t: T, p: &Point<T>) -> T {
        self.expansion.terms.iter().fold(T::zero(), |acc, (h, c)| {
            acc + *c * h.value(p) * (-self.nu * h.lambda * h.lambda * t).exp()
        })
    }

    pub fn laplacian_value(&self, t: T, p: &Point<T>) -> T {
        self.expansion.terms.iter().fold(T::zero(), |acc, (h, c)| {
            acc + *c * h.laplacian_value(p) * (-self.nu * h.lambda * h.lambda * t).exp()
        })
    }

    pub fn eval(&self, t: T, points: &[Point<T>]) -> Vec<T> {
        points.iter().map(|p| self.value(t, p)).collect()
    }
}

pub fn exact_solution_eval<T: Real>(sol: &ExactSolution<T>, t: T, points: &[Point<T>]) -> Vec<T> {
    sol.eval(t, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify;

    #[test]
    fn bessel_at_origin() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        for m in 1..=MAX_ORDER {
            assert_eq!(bessel_j(m, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn bessel_domain_errors() {
        assert!(matches!(bessel_j(11, 1.0), Err(SpecialError::Domain { .. })));
        assert!(matches!(bessel_j(0, 50.5), Err(SpecialError::Domain { .. })));
        assert!(matches!(bessel_j(0, -0.1), Err(SpecialError::Domain { .. })));
        assert!(matches!(bessel_zero::<f64>(0, 0), Err(SpecialError::ZeroIndex { .. })));
        assert!(matches!(bessel_zero::<f64>(0, 9), Err(SpecialError::ZeroIndex { .. })));
    }

    #[test]
    fn bessel_matches_integral_representation_on_envelope() {
        for m in 0..=MAX_ORDER {
            for i in 0..=500 {
                let x = i as f64 * 0.1;
                let got = bessel_j(m, x).unwrap();
                let want = verify::bessel_j_integral(m, x);
                assert!((got - want).abs() <= 1e-12, "J_{m}({x}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn series_recurrence_crossover_is_continuous() {
        for m in 0..=MAX_ORDER {
            let threshold = m as f64 + 2.0;
            let below = bessel_j(m, threshold).unwrap();
            let above = bessel_j(m, threshold * (1.0 + f64::EPSILON)).unwrap();
            assert!((below - above).abs() <= 1e-11, "m = {m}: {below} vs {above}");
        }
    }

    #[test]
    fn first_zero_of_j0_is_a_root() {
        assert!(bessel_j(0, 2.404825557695773f64).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn zeros_match_bisection_oracle() {
        for (m, n) in [(0, 1), (1, 1), (0, 2), (0, 3), (0, 4), (1, 4), (2, 1), (3, 1), (4, 1)] {
            let got: f64 = bessel_zero(m, n).unwrap();
            let want = verify::bessel_zero_bisection(m, n);
            assert!((got - want).abs() <= 1e-10, "λ_{m}{n}: {got} vs {want}");
        }
        let l01: f64 = bessel_zero(0, 1).unwrap();
        let l11: f64 = bessel_zero(1, 1).unwrap();
        assert!((l01 - 2.404825557695773).abs() <= 1e-10);
        assert!((l11 - 3.831705970207512).abs() <= 1e-10);
    }

    #[test]
    fn full_zero_table_is_ordered_and_vanishing() {
        let table = BesselZeroTable::<f64>::build(MAX_ORDER, MAX_ZERO_INDEX).unwrap();
        for m in 0..=MAX_ORDER {
            let mut prev = 0.0;
            for n in 1..=MAX_ZERO_INDEX {
                let z = table.get(m, n).unwrap();
                assert!(z > prev);
                assert!(bessel_j(m, z).unwrap().abs() <= 1e-12, "J_{m}(λ_{m}{n})");
                assert!((z - verify::bessel_zero_integral_bisection(m, n)).abs() <= 1e-10);
                prev = z;
            }
        }
        assert_eq!(table.get(MAX_ORDER + 1, 1), None);
        assert_eq!(table.get(0, 0), None);
    }

    #[test]
    fn bisection_fallback_agrees_with_newton() {
        for (m, n) in [(0, 1), (3, 2), (10, 1), (10, 8)] {
            let newton: f64 = bessel_zero(m, n).unwrap();
            let bisect: f64 = bisect_zero(m, n).unwrap();
            assert!((newton - bisect).abs() <= 1e-12);
        }
    }

    #[test]
    fn harmonic_basic_values() {
        let z01 = DiskHarmonic::<f64>::new(0, 1).unwrap();
        assert_eq!(z01.value(&[0.0, 0.0]), 1.0);
        assert_eq!(z01.laplacian_value(&[0.0, 0.0]), -z01.lambda * z01.lambda);
        let z11 = DiskHarmonic::<f64>::new(1, 1).unwrap();
        assert_eq!(z11.value(&[0.0, 0.0]), 0.0);
        let (r, th) = (0.6f64, 0.7f64);
        let a = z11.value(&[r * th.cos(), r * th.sin()]);
        let b = z11.value(&[r * th.cos(), -r * th.sin()]);
        assert!((a - b).abs() <= 1e-15);
        for m in 0..=4 {
            for n in 1..=4 {
                let h = DiskHarmonic::<f64>::new(m, n).unwrap();
                for k in 0..16 {
                    let t = k as f64 * 0.4;
                    let p = [t.cos(), t.sin()];
                    assert!(h.value(&p).abs() <= 1e-12);
                    assert!(h.laplacian_value(&p).abs() <= 1e-12 * h.lambda * h.lambda);
                }
            }
        }
    }

    #[test]
    fn harmonic_laplacian_matches_stencil() {
        for (m, n) in [(0, 1), (1, 2), (3, 1), (4, 1)] {
            let h = DiskHarmonic::<f64>::new(m, n).unwrap();
            for p in [[0.3, -0.2], [-0.5, 0.4], [0.1, 0.7]] {
                let want = verify::five_point_laplacian(|q| h.value(q), &p, 1e-4);
                let got = h.laplacian_value(&p);
                assert!((got - want).abs() <= 1e-4 * got.abs().max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn experiment1_terms() {
        let e = experiment1_expansion::<f64>().unwrap();
        assert_eq!(e.terms.len(), 11);
        let (h, c) = e.terms.iter().find(|(h, _)| h.m == 0 && h.n == 4).unwrap();
        assert_eq!(*c, -1.0 / 256.0);
        assert_eq!(h.lambda, bessel_zero::<f64>(0, 4).unwrap());
        for k in 0..64 {
            let t = k as f64 * std::f64::consts::TAU / 64.0;
            assert!(e.value(&[t.cos(), t.sin()]).abs() <= 1e-12);
        }
    }

    #[test]
    fn exact_solution_examples() {
        let e = experiment1_expansion::<f64>().unwrap();
        let sol = ExactSolution::new(e.clone(), 0.1);
        for p in [[0.1, 0.2], [-0.4, 0.3], [0.0, 0.0]] {
            assert_eq!(sol.value(0.0, &p), e.value(&p));
        }
        for t in [0.0, 0.5, 3.0] {
            assert!(sol.value(t, &[0.6, 0.8]).abs() <= 1e-12);
        }
        let single = ExactSolution::new(ModalExpansion::single_mode(0, 1, 1.0).unwrap(), 0.1);
        let lambda = verify::bessel_zero_bisection(0, 1);
        let want = (-0.1 * lambda * lambda).exp();
        assert!((single.value(1.0, &[0.0, 0.0]) - want).abs() <= 1e-12);
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let v = single.value(k as f64 * 0.2, &[0.0, 0.0]);
            assert!(v < prev);
            prev = v;
        }
    }
}
