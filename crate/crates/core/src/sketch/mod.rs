//! Sketching operators `Π` and their application to data.
//!
//! Every operator is realized as a [`SketchPlan`] that stores the randomness
//! of one draw of `Π`, so applying a plan twice gives the same result and a
//! plan can be audited after the fact.

mod exact_sum;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::DataBundle;
use crate::linalg::{bucket, fwht_in_place, Matrix, Qr, RealDft, RngStream};
use exact_sum::ExactSum;

/// Family of the random matrix `Π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchKind {
    Bernoulli,
    #[serde(rename = "uniform")]
    UniformWithReplacement,
    #[serde(rename = "leverage")]
    LeverageScore,
    CountSketch,
    Srht,
    Srft,
    Gaussian,
}

impl SketchKind {
    pub const ALL: [SketchKind; 7] = [
        SketchKind::Bernoulli,
        SketchKind::UniformWithReplacement,
        SketchKind::LeverageScore,
        SketchKind::CountSketch,
        SketchKind::Srht,
        SketchKind::Srft,
        SketchKind::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SketchKind::Bernoulli => "bernoulli",
            SketchKind::UniformWithReplacement => "uniform",
            SketchKind::LeverageScore => "leverage",
            SketchKind::CountSketch => "countsketch",
            SketchKind::Srht => "srht",
            SketchKind::Srft => "srft",
            SketchKind::Gaussian => "gaussian",
        }
    }

    /// Random projections mix rows with zero-mean weights; the other kinds
    /// select and reweight rows.
    pub fn is_random_projection(self) -> bool {
        matches!(self, SketchKind::CountSketch | SketchKind::Srht | SketchKind::Srft | SketchKind::Gaussian)
    }
}

impl fmt::Display for SketchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let k = match s.to_ascii_lowercase().as_str() {
            "bernoulli" | "bs" => SketchKind::Bernoulli,
            "uniform" | "rs" | "unif" => SketchKind::UniformWithReplacement,
            "leverage" => SketchKind::LeverageScore,
            "countsketch" | "cs" => SketchKind::CountSketch,
            "srht" => SketchKind::Srht,
            "srft" | "fft" => SketchKind::Srft,
            "gaussian" | "gp" => SketchKind::Gaussian,
            other => return Err(Error::InvalidSpec(format!("unknown sketch scheme `{other}`"))),
        };
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchScheme {
    pub kind: SketchKind,
    pub target_m: usize,
}

impl SketchScheme {
    pub fn new(kind: SketchKind, target_m: usize) -> Self {
        SketchScheme { kind, target_m }
    }
}

/// Per-scheme randomness of one realized `Π`.
#[derive(Debug, Clone, PartialEq)]
pub enum Draws {
    Bernoulli { selected: Vec<bool> },
    /// `probs == None` means uniform sampling.
    Sampling { indices: Vec<usize>, probs: Option<Vec<f64>> },
    CountSketch { buckets: Vec<usize>, signs: Vec<f64> },
    Hadamard { rows: Vec<usize>, signs: Vec<f64>, n_pad: usize },
    Fourier { rows: Vec<usize>, signs: Vec<f64> },
    /// Row `k` is regenerated from the plan stream's child `k`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchPlan {
    pub scheme: SketchScheme,
    pub n: usize,
    pub master_seed: u64,
    pub stream_id: u64,
    pub draws: Draws,
}

/// Blocks `(Πy, ΠX, ΠZ)` of a sketched data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchedData {
    pub rows_out: usize,
    pub y: Vec<f64>,
    pub x: Matrix,
    pub z: Option<Matrix>,
    pub effective_m: usize,
}

impl SketchedData {
    pub fn into_bundle(self) -> Result<DataBundle> {
        DataBundle::new(self.y, self.x, self.z)
    }
}

fn validate_probs(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::BadProbabilities(format!("length {} for n = {n}", p.len())));
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::BadProbabilities(format!("entry {i} is {}", p[i])));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::BadProbabilities(format!("sum is {total}")));
    }
    Ok(())
}

fn sample_weighted(p: &[f64], m: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut cum = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in p {
        acc += v;
        cum.push(acc);
    }
    let last_positive = p.iter().rposition(|v| *v > 0.0).unwrap_or(0);
    (0..m)
        .map(|_| {
            let x = rng.uniform() * acc;
            cum.partition_point(|c| *c <= x).min(last_positive)
        })
        .collect()
}

/// Draws the randomness of one sketch of `n` rows.
///
/// The plan is a pure function of `(stream identity, scheme, n, probs)`: the
/// stream is read from its first word regardless of its current position.
///
/// ```
/// use sketchreg::linalg::RngStream;
/// use sketchreg::sketch::{plan_sketch, Draws, SketchKind, SketchScheme};
/// let plan = plan_sketch(SketchScheme::new(SketchKind::CountSketch, 2), 4, &RngStream::new(1, 0), None).unwrap();
/// if let Draws::CountSketch { buckets, signs } = &plan.draws {
///     assert!(buckets.iter().all(|b| *b < 2));
///     assert!(signs.iter().all(|s| s.abs() == 1.0));
/// }
/// ```
pub fn plan_sketch(scheme: SketchScheme, n: usize, stream: &RngStream, probs: Option<&[f64]>) -> Result<SketchPlan> {
    let m = scheme.target_m;
    if m == 0 {
        return Err(Error::InvalidSpec("sketch size m must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    let mut rng = stream.restart();
    let draws = match scheme.kind {
        SketchKind::Bernoulli => {
            if m > n {
                return Err(Error::MTooLarge { m, n });
            }
            let prob = m as f64 / n as f64;
            Draws::Bernoulli { selected: (0..n).map(|_| rng.uniform() < prob).collect() }
        }
        SketchKind::UniformWithReplacement => match probs {
            Some(p) => {
                validate_probs(p, n)?;
                Draws::Sampling { indices: sample_weighted(p, m, &mut rng), probs: Some(p.to_vec()) }
            }
            None => Draws::Sampling { indices: (0..m).map(|_| rng.below(n)).collect(), probs: None },
        },
        SketchKind::LeverageScore => {
            let p = probs.ok_or_else(|| Error::BadProbabilities("leverage sampling needs probabilities".into()))?;
            validate_probs(p, n)?;
            Draws::Sampling { indices: sample_weighted(p, m, &mut rng), probs: Some(p.to_vec()) }
        }
        SketchKind::CountSketch => {
            let (buckets, signs) = (0..n).map(|_| countsketch_hash(&mut rng, m)).unzip();
            Draws::CountSketch { buckets, signs }
        }
        SketchKind::Srht => {
            if m > n {
                return Err(Error::MTooLarge { m, n });
            }
            let n_pad = n.next_power_of_two();
            let signs = (0..n).map(|_| rng.rademacher()).collect();
            let rows = (0..m).map(|_| rng.below(n_pad)).collect();
            Draws::Hadamard { rows, signs, n_pad }
        }
        SketchKind::Srft => {
            let signs = (0..n).map(|_| rng.rademacher()).collect();
            let rows = (0..m).map(|_| rng.below(n)).collect();
            Draws::Fourier { rows, signs }
        }
        SketchKind::Gaussian => Draws::Gaussian,
    };
    Ok(SketchPlan { scheme, n, master_seed: stream.master_seed(), stream_id: stream.stream_id(), draws })
}

/// Bucket and sign of one row; consumes exactly one 64-bit word so row `i`
/// sits at word position `2i` of the stream.
fn countsketch_hash(rng: &mut RngStream, m: usize) -> (usize, f64) {
    use rand::RngCore;
    let w = rng.next_u64();
    (bucket(w, m), if w & 1 == 0 { 1.0 } else { -1.0 })
}

impl SketchPlan {
    pub fn kind(&self) -> SketchKind {
        self.scheme.kind
    }

    pub fn stream(&self) -> RngStream {
        RngStream::new(self.master_seed, self.stream_id)
    }

    /// Row count of `ΠA`; random for Bernoulli sampling.
    pub fn rows_out(&self) -> usize {
        match &self.draws {
            Draws::Bernoulli { selected } => selected.iter().filter(|s| **s).count(),
            _ => self.scheme.target_m,
        }
    }

    /// The `m` used in variance scaling, the target size for every scheme.
    pub fn effective_m(&self) -> usize {
        self.scheme.target_m
    }

    fn check_rows(&self, a: &Matrix) -> Result<()> {
        if a.nrows() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: a.nrows() });
        }
        Ok(())
    }

    /// Computes `ΠA` with the scheme's fast path.
    pub fn apply(&self, a: &Matrix) -> Result<Matrix> {
        self.check_rows(a)?;
        let m = self.scheme.target_m;
        let k = a.ncols();
        match &self.draws {
            Draws::Bernoulli { selected } => {
                let s = (self.n as f64 / m as f64).sqrt();
                let rows: Vec<usize> = (0..self.n).filter(|&i| selected[i]).collect();
                let mut out = a.select_rows(&rows);
                if s != 1.0 {
                    out.as_mut_slice().iter_mut().for_each(|v| *v *= s);
                }
                Ok(out)
            }
            Draws::Sampling { indices, probs } => {
                let mut out = a.select_rows(indices);
                for (t, &i) in indices.iter().enumerate() {
                    let p = probs.as_ref().map_or(1.0 / self.n as f64, |p| p[i]);
                    let s = 1.0 / (m as f64 * p).sqrt();
                    out.row_mut(t).iter_mut().for_each(|v| *v *= s);
                }
                Ok(out)
            }
            Draws::CountSketch { buckets, signs } => {
                let mut acc = CountSketchAccumulator::new(m, k);
                for i in 0..self.n {
                    acc.add(buckets[i], signs[i], a.row(i));
                }
                Ok(acc.finish())
            }
            Draws::Hadamard { .. } => srht_apply(self, a),
            Draws::Fourier { .. } => srft_apply(self, a),
            Draws::Gaussian => {
                let root = self.stream();
                let inv = 1.0 / (m as f64).sqrt();
                let rows: Vec<Vec<f64>> = (0..m)
                    .into_par_iter()
                    .map(|r| {
                        let mut g = root.derive(r as u64);
                        let mut out = vec![0.0; k];
                        for i in 0..self.n {
                            let w = g.normal() * inv;
                            for (o, v) in out.iter_mut().zip(a.row(i)) {
                                *o += w * v;
                            }
                        }
                        out
                    })
                    .collect();
                Ok(Matrix::from_fn(m, k, |r, j| rows[r][j]))
            }
        }
    }

    /// The realized `Π` as a dense `rows_out × n` matrix, built entrywise
    /// from its closed form rather than through the fast transforms.
    pub fn to_dense(&self) -> Matrix {
        let n = self.n;
        let m = self.scheme.target_m;
        let mf = m as f64;
        match &self.draws {
            Draws::Bernoulli { selected } => {
                let rows: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
                let s = (n as f64 / mf).sqrt();
                Matrix::from_fn(rows.len(), n, |r, i| if rows[r] == i { s } else { 0.0 })
            }
            Draws::Sampling { indices, probs } => Matrix::from_fn(m, n, |t, i| {
                if indices[t] == i {
                    let p = probs.as_ref().map_or(1.0 / n as f64, |p| p[i]);
                    1.0 / (mf * p).sqrt()
                } else {
                    0.0
                }
            }),
            Draws::CountSketch { buckets, signs } => {
                Matrix::from_fn(m, n, |k, i| if buckets[i] == k { signs[i] } else { 0.0 })
            }
            Draws::Hadamard { rows, signs, .. } => Matrix::from_fn(m, n, |k, i| {
                let h = if (rows[k] & i).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                h * signs[i] / mf.sqrt()
            }),
            Draws::Fourier { rows, signs } => Matrix::from_fn(m, n, |k, i| {
                let angle = 2.0 * std::f64::consts::PI * ((rows[k] * i) % n) as f64 / n as f64;
                (2.0 / mf).sqrt() * signs[i] * angle.cos()
            }),
            Draws::Gaussian => {
                let root = self.stream();
                let inv = 1.0 / mf.sqrt();
                let mut out = Matrix::zeros(m, n);
                for k in 0..m {
                    let mut g = root.derive(k as u64);
                    for v in out.row_mut(k) {
                        *v = g.normal() * inv;
                    }
                }
                out
            }
        }
    }
}

/// `ΠA` for the plan; equivalent to [`SketchPlan::apply`].
pub fn apply_sketch(plan: &SketchPlan, a: &Matrix) -> Result<Matrix> {
    plan.apply(a)
}

/// Sketches `(y, X, Z)` with one application of the plan.
pub fn sketch_data(plan: &SketchPlan, data: &DataBundle) -> Result<SketchedData> {
    let y = Matrix::column_vector(&data.y);
    let p = data.x.ncols();
    let stacked = match &data.z {
        Some(z) => Matrix::hstack(&[&y, &data.x, z])?,
        None => Matrix::hstack(&[&y, &data.x])?,
    };
    let s = plan.apply(&stacked)?;
    let total = s.ncols();
    Ok(SketchedData {
        rows_out: s.nrows(),
        y: s.column(0),
        x: s.column_block(1, 1 + p),
        z: data.z.as_ref().map(|_| s.column_block(1 + p, total)),
        effective_m: plan.effective_m(),
    })
}

fn padded_column(a: &Matrix, j: usize, signs: &[f64], len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for (i, (out, s)) in v.iter_mut().zip(signs).enumerate() {
        *out = s * a[(i, j)];
    }
    v
}

/// `√(n_pad/m) S H D A_pad` by a fast Walsh-Hadamard transform per column.
pub fn srht_apply(plan: &SketchPlan, a: &Matrix) -> Result<Matrix> {
    plan.check_rows(a)?;
    let Draws::Hadamard { rows, signs, n_pad } = &plan.draws else {
        return Err(Error::UnsupportedScheme(plan.kind()));
    };
    let m = plan.scheme.target_m;
    // Normalized H contributes n_pad^{-1/2}, so the net factor is m^{-1/2}.
    let scale = 1.0 / (m as f64).sqrt();
    let cols: Vec<Vec<f64>> = (0..a.ncols())
        .into_par_iter()
        .map(|j| {
            let mut v = padded_column(a, j, signs, *n_pad);
            fwht_in_place(&mut v).expect("padded length is a power of two");
            rows.iter().map(|&r| v[r] * scale).collect()
        })
        .collect();
    Ok(Matrix::from_fn(m, a.ncols(), |k, j| cols[j][k]))
}

/// `√(2n/m) S Re(F) D A` with the unitary DFT, one FFT per column.
///
/// The factor 2 compensates for `Re(F)ᵀRe(F) = (I + J)/2`, where `J`
/// reverses indices modulo `n`, so that `E[Π²_ki] = 1/m` away from the
/// self-conjugate columns `i = 0` and `i = n/2`.
pub fn srft_apply(plan: &SketchPlan, a: &Matrix) -> Result<Matrix> {
    plan.check_rows(a)?;
    let Draws::Fourier { rows, signs } = &plan.draws else {
        return Err(Error::UnsupportedScheme(plan.kind()));
    };
    let n = plan.n;
    let m = plan.scheme.target_m;
    let dft = RealDft::new(n);
    let scale = (2.0 * n as f64 / m as f64).sqrt();
    let cols: Vec<Vec<f64>> = (0..a.ncols())
        .into_par_iter()
        .map(|j| {
            let v = padded_column(a, j, signs, n);
            let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n);
            let mut out = vec![0.0; n];
            dft.apply_into(&v, &mut buf, &mut out);
            rows.iter().map(|&r| out[r] * scale).collect()
        })
        .collect();
    Ok(Matrix::from_fn(m, a.ncols(), |k, j| cols[j][k]))
}

struct CountSketchAccumulator {
    k: usize,
    cells: Vec<ExactSum>,
}

impl CountSketchAccumulator {
    fn new(m: usize, k: usize) -> Self {
        CountSketchAccumulator { k, cells: vec![ExactSum::default(); m * k] }
    }

    fn add(&mut self, bucket: usize, sign: f64, row: &[f64]) {
        let cells = &mut self.cells[bucket * self.k..(bucket + 1) * self.k];
        for (c, v) in cells.iter_mut().zip(row) {
            if *v != 0.0 {
                c.add(sign * v);
            }
        }
    }

    fn finish(self) -> Matrix {
        let m = self.cells.len() / self.k.max(1);
        let data = self.cells.iter().map(ExactSum::value).collect();
        Matrix::from_row_major(if self.k == 0 { 0 } else { m }, self.k, data).expect("finite bucket sums")
    }
}

/// One-pass countsketch of rows arriving in any order, using `O(m·k)`
/// memory for the accumulator plus one bit per seen row index.
///
/// Bucket sums are correctly rounded, so the output is bitwise identical to
/// [`SketchPlan::apply`] on the countsketch plan drawn from the same stream,
/// for every arrival order.
///
/// ```
/// use sketchreg::linalg::RngStream;
/// use sketchreg::sketch::stream_countsketch;
/// let rows = vec![(1, vec![2.0, 1.0]), (0, vec![1.0, -1.0])];
/// let s = stream_countsketch(rows, 1, &RngStream::new(5, 0)).unwrap();
/// assert_eq!((s.nrows(), s.ncols()), (1, 2));
/// ```
pub fn stream_countsketch<I, R>(row_source: I, m: usize, stream: &RngStream) -> Result<Matrix>
where
    I: IntoIterator<Item = (usize, R)>,
    R: AsRef<[f64]>,
{
    if m == 0 {
        return Err(Error::InvalidSpec("sketch size m must be at least 1".into()));
    }
    let mut rng = stream.restart();
    let mut next_index = 0usize;
    let mut seen: Vec<u64> = Vec::new();
    let mut acc: Option<CountSketchAccumulator> = None;
    for (i, row) in row_source {
        let row = row.as_ref();
        let word = i / 64;
        if word >= seen.len() {
            seen.resize(word + 1, 0);
        }
        if seen[word] & (1 << (i % 64)) != 0 {
            return Err(Error::DuplicateRowIndex(i));
        }
        seen[word] |= 1 << (i % 64);
        let acc = acc.get_or_insert_with(|| CountSketchAccumulator::new(m, row.len()));
        if row.len() != acc.k {
            return Err(Error::DimensionMismatch { expected: acc.k, found: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if i != next_index {
            rng.seek_word(2 * i as u128);
        }
        let (b, s) = countsketch_hash(&mut rng, m);
        next_index = i + 1;
        acc.add(b, s, row);
    }
    Ok(acc.map_or_else(|| Matrix::zeros(m, 0), CountSketchAccumulator::finish))
}

/// Leverage-score sampling probabilities `p_i = ‖U_X row i‖² / p`.
///
/// ```
/// use sketchreg::linalg::Matrix;
/// use sketchreg::sketch::leverage_probs;
/// let p = leverage_probs(&Matrix::identity(3)).unwrap();
/// assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
/// ```
pub fn leverage_probs(x: &Matrix) -> Result<Vec<f64>> {
    let qr = Qr::new(x)?;
    qr.check_rank()?;
    let q = qr.q_thin();
    let lev: Vec<f64> = (0..q.nrows()).map(|i| q.row(i).iter().map(|v| v * v).sum()).collect();
    let total: f64 = lev.iter().sum();
    Ok(lev.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme(kind: SketchKind, m: usize) -> SketchScheme {
        SketchScheme::new(kind, m)
    }

    fn fixture(n: usize, k: usize) -> Matrix {
        Matrix::from_fn(n, k, |i, j| ((i * 31 + j * 17) % 11) as f64 / 4.0 - 1.2)
    }

    #[test]
    fn bernoulli_full_size_is_identity() {
        let a = fixture(9, 3);
        let plan = plan_sketch(scheme(SketchKind::Bernoulli, 9), 9, &RngStream::new(2, 2), None).unwrap();
        assert_eq!(plan.rows_out(), 9);
        assert_eq!(plan.apply(&a).unwrap(), a);
    }

    #[test]
    fn single_bucket_countsketch_is_signed_sum() {
        let a = fixture(6, 2);
        let plan = plan_sketch(scheme(SketchKind::CountSketch, 1), 6, &RngStream::new(4, 0), None).unwrap();
        let Draws::CountSketch { signs, .. } = &plan.draws else { unreachable!() };
        let out = plan.apply(&a).unwrap();
        for j in 0..2 {
            let direct: f64 = (0..6).map(|i| signs[i] * a[(i, j)]).sum();
            assert!((out[(0, j)] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn fast_paths_match_dense_operator() {
        let n = 12;
        let a = fixture(n, 3);
        for kind in SketchKind::ALL {
            let probs: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
            let total: f64 = probs.iter().sum();
            let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
            let p = (kind == SketchKind::LeverageScore).then_some(probs.as_slice());
            let plan = plan_sketch(scheme(kind, 5), n, &RngStream::new(11, 3), p).unwrap();
            let fast = plan.apply(&a).unwrap();
            let dense = plan.to_dense().matmul(&a);
            assert_eq!(fast.nrows(), dense.nrows(), "{kind}");
            assert!(fast.sub(&dense).max_abs() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn apply_is_deterministic() {
        let a = fixture(20, 2);
        for kind in [SketchKind::Gaussian, SketchKind::Srft, SketchKind::CountSketch] {
            let plan = plan_sketch(scheme(kind, 4), 20, &RngStream::new(0, 9), None).unwrap();
            assert_eq!(plan.apply(&a).unwrap().as_slice(), plan.apply(&a).unwrap().as_slice());
        }
    }

    #[test]
    fn srht_first_row_is_scaled_column_sum() {
        let n = 8;
        let m = 2;
        let a = fixture(n, 2);
        let plan = SketchPlan {
            scheme: scheme(SketchKind::Srht, m),
            n,
            master_seed: 0,
            stream_id: 0,
            draws: Draws::Hadamard { rows: vec![0, 3], signs: vec![1.0; n], n_pad: n },
        };
        let out = plan.apply(&a).unwrap();
        for j in 0..2 {
            let sum: f64 = a.column(j).iter().sum();
            let expected = (n as f64 / m as f64).sqrt() * sum / (n as f64).sqrt();
            assert!((out[(0, j)] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn plan_errors() {
        let s = RngStream::new(0, 0);
        assert_eq!(
            plan_sketch(scheme(SketchKind::Bernoulli, 5), 4, &s, None),
            Err(Error::MTooLarge { m: 5, n: 4 })
        );
        assert!(matches!(
            plan_sketch(scheme(SketchKind::Srht, 5), 4, &s, None),
            Err(Error::MTooLarge { .. })
        ));
        assert!(matches!(
            plan_sketch(scheme(SketchKind::LeverageScore, 2), 4, &s, None),
            Err(Error::BadProbabilities(_))
        ));
        assert!(matches!(
            plan_sketch(scheme(SketchKind::UniformWithReplacement, 2), 2, &s, Some(&[0.7, 0.2])),
            Err(Error::BadProbabilities(_))
        ));
        let plan = plan_sketch(scheme(SketchKind::Gaussian, 2), 4, &s, None).unwrap();
        assert!(matches!(plan.apply(&Matrix::zeros(3, 1)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_probability_rows_are_never_sampled() {
        let p = [0.0, 0.5, 0.0, 0.5, 0.0];
        let plan =
            plan_sketch(scheme(SketchKind::UniformWithReplacement, 500), 5, &RngStream::new(1, 1), Some(&p)).unwrap();
        let Draws::Sampling { indices, .. } = &plan.draws else { unreachable!() };
        assert!(indices.iter().all(|&i| i == 1 || i == 3));
        let degenerate = [0.0, 1.0, 0.0];
        let plan = plan_sketch(scheme(SketchKind::LeverageScore, 3), 3, &RngStream::new(1, 1), Some(&degenerate))
            .unwrap();
        let Draws::Sampling { indices, .. } = &plan.draws else { unreachable!() };
        assert_eq!(indices, &vec![1, 1, 1]);
    }

    #[test]
    fn streaming_single_row_lands_in_its_bucket() {
        let stream = RngStream::new(3, 1);
        let plan = plan_sketch(scheme(SketchKind::CountSketch, 4), 6, &stream, None).unwrap();
        let Draws::CountSketch { buckets, signs } = &plan.draws else { unreachable!() };
        let out = stream_countsketch([(5usize, vec![2.0, -1.0])], 4, &stream).unwrap();
        for k in 0..4 {
            let expect = if k == buckets[5] { [2.0 * signs[5], -signs[5]] } else { [0.0, 0.0] };
            assert_eq!(out.row(k), &expect);
        }
        assert_eq!(
            stream_countsketch([(1usize, vec![1.0]), (1, vec![1.0])], 2, &stream),
            Err(Error::DuplicateRowIndex(1))
        );
    }

    #[test]
    fn scheme_names_round_trip() {
        for k in SketchKind::ALL {
            assert_eq!(k.name().parse::<SketchKind>().unwrap(), k);
        }
        assert_eq!("fft".parse::<SketchKind>().unwrap(), SketchKind::Srft);
        assert!("nope".parse::<SketchKind>().is_err());
    }
}
