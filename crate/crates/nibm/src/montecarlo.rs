//! Stochastic oracles for the determinant formulas: LOE top eigenvalues, the
//! top path of non-intersecting bridges realized through stationary Dyson
//! Brownian motion, and single Brownian bridges, excursions and reflected
//! bridges.

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{CliError, Result};

pub const MAX_WISHART_N: usize = 100;
pub const MAX_DYSON_N: usize = 30;
pub const MAX_DYSON_L: f64 = 6.0;
pub const MIN_DYSON_DS: f64 = 1.0 / 1024.0;
pub const MAX_GRID_POW: u32 = 14;
pub const MAX_REJECTIONS: usize = 1_000_000;
/// Samples drawn from one stream by [`parallel_samples`]; fixing it makes
/// results independent of the thread count.
pub const CHUNK: usize = 1000;

/// A reproducible ChaCha20 stream: `seed` picks the key, `stream_id` the
/// independent substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn generator(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `count` draws of `sample`, chunked over substreams `0, 1, ...` of `seed`.
pub fn parallel_samples<T: Send>(
    count: usize,
    seed: u64,
    sample: impl Fn(&mut ChaCha20Rng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let chunks: Vec<Result<Vec<T>>> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(seed, c as u64).generator();
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|_| sample(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Largest eigenvalue of `X^T X` for an `(N+1) x N` standard Gaussian `X`.
pub fn sample_wishart_max(n: usize, rng: &mut impl Rng) -> Result<f64> {
    if n == 0 || n > MAX_WISHART_N {
        return Err(CliError::Config(format!("Wishart N must be in 1..={MAX_WISHART_N}, got {n}")));
    }
    let x = DMatrix::<f64>::from_fn(n + 1, n, |_, _| normal(rng));
    let gram = x.transpose() * x;
    Ok(gram.symmetric_eigenvalues().max())
}

/// GUE draw with `E|H_ii|^2 = 1/2` and `E|H_ij|^2 = 1/2` (real and
/// imaginary parts of variance 1/4 each).
fn gue(n: usize, rng: &mut impl Rng) -> DMatrix<Complex<f64>> {
    let mut h = DMatrix::<Complex<f64>>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex::new(FRAC_1_SQRT_2 * normal(rng), 0.0);
        for j in 0..i {
            let z = Complex::new(0.5 * normal(rng), 0.5 * normal(rng));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

/// One realization of the top path on the grid `s_k = -L + k ds`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathEnsembleSample {
    pub s_grid: Vec<f64>,
    /// `lambda_N(s) sech(s) / sqrt 2` at `u = e^{2s} / (1 + e^{2s})`.
    pub top_values: Vec<f64>,
    pub realized_max: f64,
    /// Grid `u` of the leftmost maximizer.
    pub realized_argmax_u: f64,
}

/// Bridge time of hatted time `s`.
pub fn bridge_time(s: f64) -> f64 {
    0.5 * (1.0 + s.tanh())
}

/// Stationary matrix Ornstein–Uhlenbeck process
/// `A(s + ds) = e^{-ds} A(s) + sqrt(1 - e^{-2 ds}) Xi`, mapped to the top
/// path of `N` non-intersecting bridges.
pub fn sample_dyson_bridge(n: usize, l: f64, ds: f64, rng: &mut impl Rng) -> Result<PathEnsembleSample> {
    if n == 0 || n > MAX_DYSON_N {
        return Err(CliError::Config(format!("Dyson N must be in 1..={MAX_DYSON_N}, got {n}")));
    }
    if !(l > 0.0 && l <= MAX_DYSON_L) {
        return Err(CliError::Config(format!("L must lie in (0, {MAX_DYSON_L}], got {l}")));
    }
    if !(ds >= MIN_DYSON_DS && ds <= l) {
        return Err(CliError::Config(format!("ds must lie in [{MIN_DYSON_DS}, L], got {ds}")));
    }
    let steps = (2.0 * l / ds).round() as usize;
    let step = 2.0 * l / steps as f64;
    let decay = (-step).exp();
    let kick = (1.0 - decay * decay).sqrt();
    let mut a = gue(n, rng);
    let mut s_grid = Vec::with_capacity(steps + 1);
    let mut top_values = Vec::with_capacity(steps + 1);
    let (mut best, mut best_k) = (f64::NEG_INFINITY, 0);
    for k in 0..=steps {
        if k > 0 {
            a = a * Complex::new(decay, 0.0) + gue(n, rng) * Complex::new(kick, 0.0);
        }
        let s = -l + k as f64 * step;
        let top = a.clone().symmetric_eigenvalues().max();
        let v = top * FRAC_1_SQRT_2 / s.cosh();
        if v > best {
            best = v;
            best_k = k;
        }
        s_grid.push(s);
        top_values.push(v);
    }
    Ok(PathEnsembleSample { realized_argmax_u: bridge_time(s_grid[best_k]), s_grid, top_values, realized_max: best })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Bridge,
    Excursion,
    Reflected,
}

/// Brownian bridge on `k / 2^grid_pow`, `k = 0..=2^grid_pow`.
pub fn sample_bridge(grid_pow: u32, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if grid_pow > MAX_GRID_POW {
        return Err(CliError::Config(format!("grid_pow must be at most {MAX_GRID_POW}, got {grid_pow}")));
    }
    let n = 1usize << grid_pow;
    let sd = (1.0 / n as f64).sqrt();
    let mut w = Vec::with_capacity(n + 1);
    w.push(0.0);
    for k in 0..n {
        w.push(w[k] + sd * normal(rng));
    }
    let end = w[n];
    for (k, v) in w.iter_mut().enumerate() {
        *v -= end * k as f64 / n as f64;
    }
    w[n] = 0.0;
    Ok(w)
}

/// Cyclic shift of a bridge to its minimum (Vervaat). Bridge increments are
/// exchangeable, so the shift has exactly the law of the grid bridge
/// conditioned to stay non-negative.
pub fn vervaat(bridge: &[f64]) -> Vec<f64> {
    let n = bridge.len() - 1;
    let mut k_min = 0;
    for k in 0..n {
        if bridge[k] < bridge[k_min] {
            k_min = k;
        }
    }
    (0..=n).map(|j| bridge[(k_min + j) % n] - bridge[k_min]).collect()
}

/// Grid bridge conditioned to stay positive, by rejection.
pub fn sample_excursion_rejection(grid_pow: u32, rng: &mut impl Rng) -> Result<Vec<f64>> {
    for _ in 0..MAX_REJECTIONS {
        let b = sample_bridge(grid_pow, rng)?;
        if b[1..b.len() - 1].iter().all(|&v| v > 0.0) {
            return Ok(b);
        }
    }
    Err(CliError::Sampling(format!("excursion rejection exceeded {MAX_REJECTIONS} attempts")))
}

fn max_and_argmax(path: &[f64]) -> (f64, f64) {
    let mut k_best = 0;
    for (k, &v) in path.iter().enumerate() {
        if v > path[k_best] {
            k_best = k;
        }
    }
    (path[k_best], k_best as f64 / (path.len() - 1) as f64)
}

/// `(max, argmax)` of one path on the grid `2^{-grid_pow}`.
pub fn sample_single_path_max(kind: PathKind, grid_pow: u32, rng: &mut impl Rng) -> Result<(f64, f64)> {
    let bridge = sample_bridge(grid_pow, rng)?;
    let path = match kind {
        PathKind::Bridge => bridge,
        PathKind::Reflected => bridge.iter().map(|v| v.abs()).collect(),
        PathKind::Excursion => vervaat(&bridge),
    };
    Ok(max_and_argmax(&path))
}

/// Kolmogorov–Smirnov distance between the sample ECDF and `cdf`.
pub fn ecdf_ks(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// Mean and standard error.
pub fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(7, 3).generator().random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let b: u64 = RngStream::new(7, 4).generator().random();
        assert_ne!(a[0], b);
    }

    #[test]
    fn samples_do_not_depend_on_thread_count() {
        let draw = |rng: &mut ChaCha20Rng| Ok(normal(rng));
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| parallel_samples(2500, 11, draw)).unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = three.install(|| parallel_samples(2500, 11, draw)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bridge_pins_both_ends() {
        let mut rng = RngStream::new(1, 0).generator();
        let b = sample_bridge(6, &mut rng).unwrap();
        assert_eq!(b.len(), 65);
        assert_eq!(b[0], 0.0);
        assert_eq!(b[64], 0.0);
        let e = vervaat(&b);
        assert!(e.iter().all(|&v| v >= 0.0));
        assert_eq!(e[0], 0.0);
        assert_eq!(e[64], 0.0);
        let (m, u) = sample_single_path_max(PathKind::Reflected, 6, &mut rng).unwrap();
        assert!(m > 0.0 && (0.0..=1.0).contains(&u));
    }

    #[test]
    fn ks_of_degenerate_and_quantile_samples() {
        let cdf = |x: f64| x.clamp(0.0, 1.0);
        let constant = vec![0.5; 200];
        assert!(ecdf_ks(&constant, cdf) >= 0.5);
        let n = 400;
        let quantiles: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ecdf_ks(&quantiles, cdf) <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn dyson_grid_and_argmax() {
        let mut rng = RngStream::new(3, 0).generator();
        let p = sample_dyson_bridge(3, 2.0, 0.25, &mut rng).unwrap();
        assert_eq!(p.s_grid.len(), 17);
        let best = p.top_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, p.realized_max);
        let k = p.top_values.iter().position(|&v| v == best).unwrap();
        assert_eq!(p.realized_argmax_u, bridge_time(p.s_grid[k]));
        assert!(sample_dyson_bridge(31, 2.0, 0.25, &mut rng).is_err());
        assert!(sample_dyson_bridge(3, 2.0, 1e-4, &mut rng).is_err());
    }
}
