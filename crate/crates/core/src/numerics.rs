//! Seeded randomness and the handful of scalar primitives everything
//! else is built on.
//!
//! All stochastic operations in this crate draw from [`RngStream`]s, which
//! are counter-based ChaCha8 generators. A stream is addressed by
//! `(master_seed, stream_id)`: the master seed keys the cipher and the
//! stream id selects the ChaCha stream counter, so distinct ids yield
//! independent sequences and the same pair always replays the same
//! sequence. Parallel work hands each worker its own stream id instead of
//! sharing a generator, which keeps results independent of scheduling.

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A deterministic random stream addressed by `(master_seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
    spare_gaussian: Option<f64>,
}

impl RngStream {
    /// Derives the stream for `(master_seed, stream_id)`.
    ///
    /// The master seed keys a ChaCha8 generator (`seed_from_u64`) and the
    /// stream id is installed as the ChaCha stream counter, so the full
    /// 64-bit id space yields disjoint sequences under one master seed.
    pub fn derive(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        RngStream {
            master_seed,
            stream_id,
            rng,
            spare_gaussian: None,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform integer in `[0, bound)`. `bound` must be nonzero.
    pub fn next_below(&mut self, bound: usize) -> usize {
        self.rng.gen_range(0..bound)
    }

    /// One standard-normal draw.
    ///
    /// Uses the Marsaglia polar transform over pairs of uniforms; the only
    /// transcendental involved is `libm::log`, so sequences do not depend
    /// on the platform's libm. The second variate of each pair is cached
    /// and returned by the next call.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(g) = self.spare_gaussian.take() {
            return g;
        }
        loop {
            let x = 2.0 * self.next_f64() - 1.0;
            let y = 2.0 * self.next_f64() - 1.0;
            let s = x * x + y * y;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * libm::log(s) / s).sqrt();
                self.spare_gaussian = Some(y * scale);
                return x * scale;
            }
        }
    }

    /// In-place seeded Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
///
/// Branches on the sign so only `exp` of a non-positive argument is ever
/// taken; saturates cleanly to 0/1 for large `|x|` and propagates NaN.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`] on (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Overflow-free `log(1 + exp(x))`, computed as
/// `max(x, 0) + log1p(exp(-|x|))`.
pub fn log1p_exp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log-domain accumulator: returns `log(exp(a) + exp(b))` without leaving
/// the log domain. `f64::NEG_INFINITY` is the identity.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Samples an independent Bernoulli entrywise: output entry is 1.0 with
/// the probability given by the matching input entry, else 0.0. Draws are
/// consumed in row-major order.
pub fn sample_bernoulli_matrix(probs: &Array2<f64>, rng: &mut RngStream) -> Result<Array2<f64>> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!(
            "Bernoulli probability {p} outside [0, 1]"
        )));
    }
    let mut out = Array2::zeros(probs.raw_dim());
    for (o, &p) in out.iter_mut().zip(probs.iter()) {
        *o = f64::from(rng.next_f64() < p);
    }
    Ok(out)
}

/// Samples `Normal(mean, 1)` entrywise, row-major draw order.
pub fn sample_gaussian_matrix(means: &Array2<f64>, rng: &mut RngStream) -> Array2<f64> {
    let mut out = Array2::zeros(means.raw_dim());
    for (o, &m) in out.iter_mut().zip(means.iter()) {
        *o = m + rng.next_gaussian();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_of_ln3_is_three_quarters() {
        assert!((sigmoid(3.0_f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!(sigmoid(f64::NAN).is_nan());
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &p in &[0.05, 0.3, 0.5, 0.75, 0.95] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn log1p_exp_handles_extremes() {
        assert!((log1p_exp(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(log1p_exp(-800.0), 0.0);
        // For large x the additive term vanishes and the result is x itself.
        assert_eq!(log1p_exp(800.0), 800.0);
    }

    #[test]
    fn log_add_exp_matches_direct_sum() {
        let direct = (0.3f64.exp() + 0.9f64.exp()).ln();
        assert!((log_add_exp(0.3, 0.9) - direct).abs() < 1e-14);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
    }

    #[test]
    fn derive_stream_is_deterministic() {
        let mut a = RngStream::derive(42, 0);
        let mut b = RngStream::derive(42, 0);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_stream_ids_diverge() {
        let mut a = RngStream::derive(42, 0);
        let mut b = RngStream::derive(42, 1);
        let differing = (0..100)
            .filter(|_| (a.next_f64() - b.next_f64()).abs() > 1e-12)
            .count();
        assert!(differing >= 95, "only {differing} of 100 draws differ");
    }

    #[test]
    fn distinct_master_seeds_diverge() {
        let mut a = RngStream::derive(42, 7);
        let mut b = RngStream::derive(43, 7);
        assert!((0..100).any(|_| a.next_u64() != b.next_u64()));
    }

    #[test]
    fn bernoulli_endpoints_are_exact() {
        let mut rng = RngStream::derive(1, 0);
        let zeros = Array2::zeros((4, 5));
        assert_eq!(sample_bernoulli_matrix(&zeros, &mut rng).unwrap(), zeros);
        let ones = Array2::ones((4, 5));
        assert_eq!(sample_bernoulli_matrix(&ones, &mut rng).unwrap(), ones);
    }

    #[test]
    fn bernoulli_rejects_out_of_range() {
        let mut rng = RngStream::derive(1, 0);
        let bad = array![[0.5, 1.5]];
        assert!(sample_bernoulli_matrix(&bad, &mut rng).is_err());
        let nan = array![[f64::NAN]];
        assert!(sample_bernoulli_matrix(&nan, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_mean_concentrates() {
        let mut rng = RngStream::derive(7, 0);
        let probs = Array2::from_elem((100, 100), 0.3);
        let sample = sample_bernoulli_matrix(&probs, &mut rng).unwrap();
        let mean = sample.mean().unwrap();
        assert!((0.29..=0.31).contains(&mean), "mean {mean}");
    }

    #[test]
    fn bernoulli_mean_within_four_sigma() {
        let n = 100_000usize;
        for (i, &p) in [0.1, 0.5, 0.9].iter().enumerate() {
            let mut rng = RngStream::derive(11, i as u64);
            let probs = Array2::from_elem((n / 100, 100), p);
            let sample = sample_bernoulli_matrix(&probs, &mut rng).unwrap();
            let mean = sample.mean().unwrap();
            let bound = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((mean - p).abs() <= bound, "p={p}: mean {mean}");
        }
    }

    #[test]
    fn gaussian_mean_and_variance_concentrate() {
        let mut rng = RngStream::derive(3, 0);
        let zeros = Array2::zeros((100, 100));
        let sample = sample_gaussian_matrix(&zeros, &mut rng);
        let mean = sample.mean().unwrap();
        assert!((-0.03..=0.03).contains(&mean), "mean {mean}");

        let fives = Array2::from_elem((100, 100), 5.0);
        let sample = sample_gaussian_matrix(&fives, &mut rng);
        let m = sample.mean().unwrap();
        let var = sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (sample.len() - 1) as f64;
        assert!((0.94..=1.06).contains(&var), "variance {var}");
    }

    #[test]
    fn gaussian_preserves_shape() {
        let mut rng = RngStream::derive(3, 1);
        let means = Array2::zeros((3, 4));
        assert_eq!(sample_gaussian_matrix(&means, &mut rng).dim(), (3, 4));
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let mut a: Vec<u32> = (0..50).collect();
        let mut b: Vec<u32> = (0..50).collect();
        RngStream::derive(5, 0).shuffle(&mut a);
        RngStream::derive(5, 0).shuffle(&mut b);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn sigmoid_symmetry(x in -700.0f64..700.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn sigmoid_is_monotone(x in -700.0f64..700.0, dx in 1e-6f64..10.0) {
            prop_assert!(sigmoid(x + dx) >= sigmoid(x));
        }

        #[test]
        fn log1p_exp_matches_naive_in_safe_range(x in -30.0f64..30.0) {
            let naive = x.exp().ln_1p();
            prop_assert!((log1p_exp(x) - naive).abs() <= 1e-12 * (1.0 + naive.abs()));
        }
    }
}
