use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

const LOG_2PI: f64 = 1.837877066409345483560659472811; // ln(2π)

/// Clamps a log standard deviation into the supported range.
#[inline]
pub fn clamp_log_std(x: f64) -> f64 {
    x.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Diagonal Gaussian over action vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagGaussian {
    /// Builds the distribution, clamping `log_std` into `[-10, 2]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::contract("mean and log_std dimensions differ"));
        }
        crate::error::ensure_finite(&mean, "gaussian mean")?;
        crate::error::ensure_finite(&log_std, "gaussian log_std")?;
        let log_std = log_std.into_iter().map(clamp_log_std).collect();
        Ok(DiagGaussian { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Exact log density at `a`.
    pub fn log_prob(&self, a: &[f64]) -> Result<f64> {
        if a.len() != self.dim() {
            return Err(Error::contract(format!(
                "log_prob dimension {} vs distribution {}",
                a.len(),
                self.dim()
            )));
        }
        let mut lp = 0.0;
        for d in 0..a.len() {
            let ls = self.log_std[d];
            let z = (a[d] - self.mean[d]) * (-ls).exp();
            lp += -0.5 * LOG_2PI - ls - 0.5 * z * z;
        }
        Ok(lp)
    }

    /// Closed-form KL(self ‖ other).
    pub fn kl(&self, other: &DiagGaussian) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::contract("KL dimension mismatch"));
        }
        let mut kl = 0.0;
        for d in 0..self.dim() {
            let (lp, lq) = (self.log_std[d], other.log_std[d]);
            let vp = (2.0 * lp).exp();
            let vq = (2.0 * lq).exp();
            let dm = self.mean[d] - other.mean[d];
            kl += lq - lp + (vp + dm * dm) / (2.0 * vq) - 0.5;
        }
        Ok(kl)
    }

    /// One reparameterized sample `μ + σ·z`.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std_normal(dim: usize) -> DiagGaussian {
        DiagGaussian::new(vec![0.0; dim], vec![0.0; dim]).unwrap()
    }

    #[test]
    fn standard_normal_log_density() {
        let d = std_normal(1);
        assert!((d.log_prob(&[0.0]).unwrap() + 0.9189385).abs() < 1e-6);
        assert!((d.log_prob(&[1.0]).unwrap() + 1.4189385).abs() < 1e-6);
        let d2 = std_normal(2);
        assert!((d2.log_prob(&[0.0, 0.0]).unwrap() + 1.8378771).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        let p = std_normal(1);
        assert_eq!(p.kl(&p).unwrap(), 0.0);

        let shifted = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((shifted.kl(&p).unwrap() - 0.5).abs() < 1e-12);

        let wide = DiagGaussian::new(vec![0.0], vec![2.0f64.ln()]).unwrap();
        assert!((wide.kl(&p).unwrap() - 0.8068528).abs() < 1e-6);
    }

    #[test]
    fn log_std_is_clamped() {
        let d = DiagGaussian::new(vec![0.0], vec![100.0]).unwrap();
        assert_eq!(d.log_std[0], LOG_STD_MAX);
        let d = DiagGaussian::new(vec![0.0], vec![-100.0]).unwrap();
        assert_eq!(d.log_std[0], LOG_STD_MIN);
    }

    #[test]
    fn density_integrates_to_one() {
        // trapezoid over ±8σ
        let d = DiagGaussian::new(vec![0.37], vec![(0.85f64).ln()]).unwrap();
        let sigma = 0.85;
        let (lo, hi) = (0.37 - 8.0 * sigma, 0.37 + 8.0 * sigma);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * d.log_prob(&[x]).unwrap().exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-3, "integral {total}");
    }

    #[test]
    fn kl_matches_monte_carlo() {
        let p = DiagGaussian::new(vec![0.3, -0.7], vec![0.1, -0.4]).unwrap();
        let q = DiagGaussian::new(vec![-0.2, 0.5], vec![-0.1, 0.3]).unwrap();
        let closed = p.kl(&q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let a = p.sample(&mut rng);
            let diff = p.log_prob(&a).unwrap() - q.log_prob(&a).unwrap();
            sum += diff;
            sum_sq += diff * diff;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (closed - mean).abs() <= 3.0 * se,
            "closed {closed} vs mc {mean} ± {se}"
        );
    }
}
