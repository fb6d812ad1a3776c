//! Parametric fields `û_θ: ℝ² → ℝ` with exact parameter Jacobians and exact
//! spatial Laplacians.
//!
//! The network is a tanh multilayer perceptron with scalar output. The
//! Jacobian is obtained by one reverse sweep per point; the Laplacian by
//! propagating values, input gradients and the trace of the input Hessian
//! forward through the layers.

use std::io::{BufRead, Write};
use std::ops::Deref;
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::{Point, Real};
use crate::special::ModalExpansion;

pub const INPUT_DIM: usize = 2;
const SNAPSHOT_MAGIC: &str = "teng-snapshot";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnsatzError {
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AnsatzError>;

/// Flat parameter vector θ: for each layer, its weights (row-major,
/// `out × in`) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(Vec<T>);

impl<T: Real> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![T::zero(); len])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    /// `θ + scale · δ`.
    pub fn add_scaled(&self, delta: &[T], scale: T) -> Self {
        assert_eq!(delta.len(), self.0.len(), "parameter update length");
        Self(self.0.iter().zip(delta).map(|(&a, &d)| a + scale * d).collect())
    }

    /// Euclidean distance to another parameter vector.
    pub fn distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
            .sqrt()
    }
}

impl<T> Deref for ParamVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

/// Architecture and initialization of a scalar-output MLP on ℝ².
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl ModelSpec {
    pub fn new(hidden_widths: Vec<usize>, init_seed: u64) -> Result<Self> {
        let spec = Self { hidden_widths, activation: Activation::Tanh, init_seed, init_scale: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(AnsatzError::InvalidSpec("at least one hidden layer is required".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(AnsatzError::InvalidSpec("hidden widths must be positive".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(AnsatzError::InvalidSpec(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    /// `[2, hidden..., 1]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_widths.len() + 2);
        sizes.push(INPUT_DIM);
        sizes.extend_from_slice(&self.hidden_widths);
        sizes.push(1);
        sizes
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn shapes(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes()
            .windows(2)
            .map(|w| {
                let shape = LayerShape { n_in: w[0], n_out: w[1], offset };
                offset += w[0] * w[1] + w[1];
                shape
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    offset: usize,
}

impl LayerShape {
    fn weights<'a, T>(&self, theta: &'a [T]) -> &'a [T] {
        &theta[self.offset..self.offset + self.n_in * self.n_out]
    }

    fn bias<'a, T>(&self, theta: &'a [T]) -> &'a [T] {
        let start = self.offset + self.n_in * self.n_out;
        &theta[start..start + self.n_out]
    }
}

/// One dense layer; `weights` is row-major `n_out × n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

pub fn unpack<T: Real>(theta: &[T], spec: &ModelSpec) -> Result<Vec<Layer<T>>> {
    let expected = spec.n_params();
    if theta.len() != expected {
        return Err(AnsatzError::LengthMismatch { expected, got: theta.len() });
    }
    Ok(spec
        .shapes()
        .iter()
        .map(|s| Layer {
            n_in: s.n_in,
            n_out: s.n_out,
            weights: s.weights(theta).to_vec(),
            bias: s.bias(theta).to_vec(),
        })
        .collect())
}

pub fn pack<T: Real>(layers: &[Layer<T>], spec: &ModelSpec) -> Result<ParamVector<T>> {
    let shapes = spec.shapes();
    let consistent = shapes.len() == layers.len()
        && shapes.iter().zip(layers).all(|(s, l)| {
            s.n_in == l.n_in
                && s.n_out == l.n_out
                && l.weights.len() == l.n_in * l.n_out
                && l.bias.len() == l.n_out
        });
    if !consistent {
        let got = layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        return Err(AnsatzError::LengthMismatch { expected: spec.n_params(), got });
    }
    let mut theta = Vec::with_capacity(spec.n_params());
    for l in layers {
        theta.extend_from_slice(&l.weights);
        theta.extend_from_slice(&l.bias);
    }
    Ok(ParamVector(theta))
}

/// Seeded initialization: weights `N(0, 1) · init_scale / √fan_in` drawn from
/// SplitMix64 in layout order, biases zero.
pub fn init_params<T: Real>(spec: &ModelSpec) -> ParamVector<T> {
    let mut rng = SplitMix64::seed_from_u64(spec.init_seed);
    let mut theta = Vec::with_capacity(spec.n_params());
    for s in spec.shapes() {
        let scale = spec.init_scale / (s.n_in as f64).sqrt();
        for _ in 0..s.n_in * s.n_out {
            let z: f64 = StandardNormal.sample(&mut rng);
            theta.push(T::lit(z * scale));
        }
        theta.extend(std::iter::repeat_n(T::zero(), s.n_out));
    }
    ParamVector(theta)
}

/// A field parameterized by a flat vector, with exact derivatives.
pub trait Ansatz<T: Real> {
    fn n_params(&self) -> usize;

    fn eval(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T>;

    /// Values together with the `points × params` Jacobian.
    fn eval_and_jacobian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> (Vec<T>, Matrix<T>);

    fn param_jacobian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Matrix<T> {
        self.eval_and_jacobian(theta, points).1
    }

    /// `Δû_θ = ∂²û/∂x₁² + ∂²û/∂x₂²` at each point.
    fn laplacian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T>;
}

/// Points with field values and, optionally, Laplacians.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBatch<T> {
    pub points: Vec<Point<T>>,
    pub values: Vec<T>,
    pub laplacians: Option<Vec<T>>,
}

pub fn eval_batch<T: Real, A: Ansatz<T> + ?Sized>(
    ansatz: &A,
    theta: &ParamVector<T>,
    points: &[Point<T>],
    with_laplacian: bool,
) -> EvalBatch<T> {
    EvalBatch {
        points: points.to_vec(),
        values: ansatz.eval(theta, points),
        laplacians: with_laplacian.then(|| ansatz.laplacian(theta, points)),
    }
}

fn check_len<T>(theta: &[T], expected: usize) {
    assert_eq!(theta.len(), expected, "parameter vector length does not match the ansatz");
}

/// Plain tanh MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: ModelSpec,
    shapes: Vec<LayerShape>,
    n_params: usize,
}

impl Mlp {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.shapes();
        let n_params = spec.n_params();
        Ok(Self { spec, shapes, n_params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn widest(&self) -> usize {
        self.shapes.iter().map(|s| s.n_out.max(s.n_in)).max().unwrap_or(INPUT_DIM)
    }

    fn value_at<T: Real>(&self, theta: &[T], p: &Point<T>, cur: &mut Vec<T>, next: &mut Vec<T>) -> T {
        cur.clear();
        cur.extend_from_slice(p);
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let (w, b) = (s.weights(theta), s.bias(theta));
            next.clear();
            for o in 0..s.n_out {
                let row = &w[o * s.n_in..(o + 1) * s.n_in];
                let z = row.iter().zip(cur.iter()).fold(b[o], |acc, (&wi, &hi)| acc + wi * hi);
                next.push(if l == last { z } else { z.tanh() });
            }
            std::mem::swap(cur, next);
        }
        cur[0]
    }

    /// Forward pass keeping every layer input, then a reverse sweep that
    /// writes `∂û/∂θ` into `row`. Returns the value.
    fn value_and_gradient<T: Real>(&self, theta: &[T], p: &Point<T>, acts: &mut [Vec<T>], row: &mut [T]) -> T {
        let last = self.shapes.len() - 1;
        acts[0].clear();
        acts[0].extend_from_slice(p);
        let mut out = T::zero();
        for (l, s) in self.shapes.iter().enumerate() {
            let (w, b) = (s.weights(theta), s.bias(theta));
            let (input, rest) = acts.split_at_mut(l + 1);
            let input = &input[l];
            if l == last {
                out = w.iter().zip(input.iter()).fold(b[0], |acc, (&wi, &hi)| acc + wi * hi);
            } else {
                let output = &mut rest[0];
                output.clear();
                for o in 0..s.n_out {
                    let r = &w[o * s.n_in..(o + 1) * s.n_in];
                    let z = r.iter().zip(input.iter()).fold(b[o], |acc, (&wi, &hi)| acc + wi * hi);
                    output.push(z.tanh());
                }
            }
        }

        // Reverse sweep: `delta` holds ∂û/∂z for the current layer.
        let mut delta = vec![T::one()];
        for (l, s) in self.shapes.iter().enumerate().rev() {
            let input = &acts[l];
            let grad_w = &mut row[s.offset..s.offset + s.n_in * s.n_out];
            for o in 0..s.n_out {
                let d = delta[o];
                for (g, &h) in grad_w[o * s.n_in..(o + 1) * s.n_in].iter_mut().zip(input) {
                    *g = d * h;
                }
            }
            let bias_start = s.offset + s.n_in * s.n_out;
            row[bias_start..bias_start + s.n_out].copy_from_slice(&delta);
            if l > 0 {
                let w = s.weights(theta);
                let mut prev = vec![T::zero(); s.n_in];
                for o in 0..s.n_out {
                    let d = delta[o];
                    for (pv, &wi) in prev.iter_mut().zip(&w[o * s.n_in..(o + 1) * s.n_in]) {
                        *pv += d * wi;
                    }
                }
                for (pv, &h) in prev.iter_mut().zip(input) {
                    *pv *= T::one() - h * h;
                }
                delta = prev;
            }
        }
        out
    }

    /// Propagates (value, ∂/∂x₁, ∂/∂x₂, Laplacian) through the network.
    fn laplacian_at<T: Real>(&self, theta: &[T], p: &Point<T>) -> T {
        let mut val = p.to_vec();
        let mut dx = vec![T::one(), T::zero()];
        let mut dy = vec![T::zero(), T::one()];
        let mut lap = vec![T::zero(), T::zero()];
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let (w, b) = (s.weights(theta), s.bias(theta));
            let mut nv = Vec::with_capacity(s.n_out);
            let mut ndx = Vec::with_capacity(s.n_out);
            let mut ndy = Vec::with_capacity(s.n_out);
            let mut nlap = Vec::with_capacity(s.n_out);
            for o in 0..s.n_out {
                let r = &w[o * s.n_in..(o + 1) * s.n_in];
                let (mut z, mut zx, mut zy, mut zl) = (b[o], T::zero(), T::zero(), T::zero());
                for i in 0..s.n_in {
                    z += r[i] * val[i];
                    zx += r[i] * dx[i];
                    zy += r[i] * dy[i];
                    zl += r[i] * lap[i];
                }
                if l == last {
                    return zl;
                }
                let t = z.tanh();
                let d1 = T::one() - t * t;
                let d2 = T::lit(-2.0) * t * d1;
                nv.push(t);
                ndx.push(d1 * zx);
                ndy.push(d1 * zy);
                nlap.push(d2 * (zx * zx + zy * zy) + d1 * zl);
            }
            val = nv;
            dx = ndx;
            dy = ndy;
            lap = nlap;
        }
        unreachable!("network has an output layer")
    }
}

impl<T: Real> Ansatz<T> for Mlp {
    fn n_params(&self) -> usize {
        self.n_params
    }

    fn eval(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        check_len(theta, self.n_params);
        let mut cur = Vec::with_capacity(self.widest());
        let mut next = Vec::with_capacity(self.widest());
        points.iter().map(|p| self.value_at(theta, p, &mut cur, &mut next)).collect()
    }

    fn eval_and_jacobian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> (Vec<T>, Matrix<T>) {
        check_len(theta, self.n_params);
        let p = self.n_params;
        let mut jac = vec![T::zero(); points.len() * p];
        let mut acts: Vec<Vec<T>> = vec![Vec::with_capacity(self.widest()); self.shapes.len()];
        let values = points
            .iter()
            .zip(jac.chunks_exact_mut(p))
            .map(|(pt, row)| self.value_and_gradient(theta, pt, &mut acts, row))
            .collect();
        (values, Matrix::from_row_major_unchecked(points.len(), p, jac))
    }

    fn laplacian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        check_len(theta, self.n_params);
        points.iter().map(|p| self.laplacian_at(theta, p)).collect()
    }
}

/// `û = NN_θ − NN_frozen + u₀`: a live network minus a frozen copy of itself
/// plus the initial condition, so `θ = frozen` reproduces `u₀` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenDifference<T> {
    net: Mlp,
    frozen: ParamVector<T>,
    baseline: ModalExpansion<T>,
}

impl<T: Real> FrozenDifference<T> {
    pub fn new(net: Mlp, frozen: ParamVector<T>, baseline: ModalExpansion<T>) -> Result<Self> {
        let expected = <Mlp as Ansatz<T>>::n_params(&net);
        if frozen.len() != expected {
            return Err(AnsatzError::LengthMismatch { expected, got: frozen.len() });
        }
        Ok(Self { net, frozen, baseline })
    }

    pub fn frozen(&self) -> &ParamVector<T> {
        &self.frozen
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn baseline(&self) -> &ModalExpansion<T> {
        &self.baseline
    }
}

impl<T: Real> Ansatz<T> for FrozenDifference<T> {
    fn n_params(&self) -> usize {
        <Mlp as Ansatz<T>>::n_params(&self.net)
    }

    fn eval(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        let live = self.net.eval(theta, points);
        let frozen = self.net.eval(&self.frozen, points);
        points
            .iter()
            .zip(live.iter().zip(frozen))
            .map(|(p, (&a, b))| (a - b) + self.baseline.value(p))
            .collect()
    }

    fn eval_and_jacobian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> (Vec<T>, Matrix<T>) {
        let (live, jac) = self.net.eval_and_jacobian(theta, points);
        let frozen = self.net.eval(&self.frozen, points);
        let values = points
            .iter()
            .zip(live.iter().zip(frozen))
            .map(|(p, (&a, b))| (a - b) + self.baseline.value(p))
            .collect();
        (values, jac)
    }

    fn laplacian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        let live = self.net.laplacian(theta, points);
        let frozen = self.net.laplacian(&self.frozen, points);
        points
            .iter()
            .zip(live.iter().zip(frozen))
            .map(|(p, (&a, b))| (a - b) + self.baseline.laplacian_value(p))
            .collect()
    }
}

/// The two network ansätze selectable at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnsatzKind<T> {
    PlainMlp(Mlp),
    FrozenDifference(FrozenDifference<T>),
}

impl<T: Real> AnsatzKind<T> {
    pub fn spec(&self) -> &ModelSpec {
        match self {
            Self::PlainMlp(m) => m.spec(),
            Self::FrozenDifference(f) => f.net().spec(),
        }
    }
}

impl<T: Real> Ansatz<T> for AnsatzKind<T> {
    fn n_params(&self) -> usize {
        match self {
            Self::PlainMlp(m) => <Mlp as Ansatz<T>>::n_params(m),
            Self::FrozenDifference(f) => f.n_params(),
        }
    }

    fn eval(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        match self {
            Self::PlainMlp(m) => m.eval(theta, points),
            Self::FrozenDifference(f) => f.eval(theta, points),
        }
    }

    fn eval_and_jacobian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> (Vec<T>, Matrix<T>) {
        match self {
            Self::PlainMlp(m) => m.eval_and_jacobian(theta, points),
            Self::FrozenDifference(f) => f.eval_and_jacobian(theta, points),
        }
    }

    fn laplacian(&self, theta: &ParamVector<T>, points: &[Point<T>]) -> Vec<T> {
        match self {
            Self::PlainMlp(m) => m.laplacian(theta, points),
            Self::FrozenDifference(f) => f.laplacian(theta, points),
        }
    }
}

/// Writes a versioned text snapshot of `(spec, θ)`. Parameters are stored as
/// the hexadecimal bit pattern of their `f64` value, so the round trip is
/// exact for both `f32` and `f64`.
///
/// ```text
/// teng-snapshot 1
/// hidden_widths 32 32
/// activation tanh
/// init_seed 1234
/// init_scale 1
/// n_params 1185
/// 3fb999999999999a
/// ...
/// ```
pub fn write_snapshot<T: Real, W: Write>(mut out: W, spec: &ModelSpec, theta: &ParamVector<T>) -> Result<()> {
    if theta.len() != spec.n_params() {
        return Err(AnsatzError::LengthMismatch { expected: spec.n_params(), got: theta.len() });
    }
    writeln!(out, "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}")?;
    let widths: Vec<String> = spec.hidden_widths.iter().map(usize::to_string).collect();
    writeln!(out, "hidden_widths {}", widths.join(" "))?;
    writeln!(out, "activation tanh")?;
    writeln!(out, "init_seed {}", spec.init_seed)?;
    writeln!(out, "init_scale {}", spec.init_scale)?;
    writeln!(out, "n_params {}", theta.len())?;
    for v in theta.iter() {
        writeln!(out, "{:016x}", v.to_f64().unwrap_or(f64::NAN).to_bits())?;
    }
    Ok(())
}

pub fn read_snapshot<T: Real, R: BufRead>(input: R) -> Result<(ModelSpec, ParamVector<T>)> {
    let bad = |msg: &str| AnsatzError::Snapshot(msg.to_string());
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines.next().ok_or_else(|| bad(&format!("missing {what}")))?.map_err(AnsatzError::from)
    };

    let header = next("header")?;
    if header != format!("{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION}") {
        return Err(bad(&format!("unsupported header {header:?}")));
    }
    let field = |line: String, key: &str| -> Result<String> {
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected {key}")))
    };
    let hidden_widths = field(next("hidden_widths")?, "hidden_widths")?
        .split_whitespace()
        .map(|w| w.parse::<usize>().map_err(|_| bad("hidden width")))
        .collect::<Result<Vec<_>>>()?;
    if field(next("activation")?, "activation")? != "tanh" {
        return Err(bad("unknown activation"));
    }
    let init_seed = field(next("init_seed")?, "init_seed")?.parse().map_err(|_| bad("init_seed"))?;
    let init_scale = field(next("init_scale")?, "init_scale")?.parse().map_err(|_| bad("init_scale"))?;
    let n_params: usize = field(next("n_params")?, "n_params")?.parse().map_err(|_| bad("n_params"))?;

    let spec = ModelSpec { hidden_widths, activation: Activation::Tanh, init_seed, init_scale };
    spec.validate()?;
    if n_params != spec.n_params() {
        return Err(AnsatzError::LengthMismatch { expected: spec.n_params(), got: n_params });
    }
    let mut theta = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let line = next("parameter")?;
        let hex = line.trim();
        if hex.len() != 16 {
            return Err(bad("parameter bits must be 16 hex digits"));
        }
        let bits = u64::from_str_radix(hex, 16).map_err(|_| bad("parameter bits"))?;
        theta.push(T::lit(f64::from_bits(bits)));
    }
    Ok((spec, ParamVector(theta)))
}

pub fn save_snapshot<T: Real>(path: &Path, spec: &ModelSpec, theta: &ParamVector<T>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(&mut file, spec, theta)?;
    file.flush()?;
    Ok(())
}

pub fn load_snapshot<T: Real>(path: &Path) -> Result<(ModelSpec, ParamVector<T>)> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}
