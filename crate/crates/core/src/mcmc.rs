//! Sampling kernels: a univariate stepping-out/shrinkage slice sampler and
//! the conjugate Gibbs updates for normal means and precisions.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PpdError, Result};

const MAX_STEP_OUT: usize = 1_000;
const MAX_SHRINK: usize = 10_000;

/// Bounds and initial bracket width for one slice-sampled coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

impl SliceConfig {
    pub fn new(lower: f64, upper: f64, width: f64) -> Result<Self> {
        let cfg = Self { lower, upper, width };
        cfg.check()?;
        Ok(cfg)
    }

    /// Defaults for a discounting parameter: (0, 1), width 0.1.
    pub fn a0() -> Self {
        Self { lower: 0.0, upper: 1.0, width: 0.1 }
    }

    /// Unbounded coefficient, width 1.
    pub fn coefficient() -> Self {
        Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY, width: 1.0 }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.lower < self.upper) || !(self.width > 0.0 && self.width.is_finite()) {
            return Err(PpdError::InvalidInput(format!(
                "slice config needs lower < upper and width > 0, got ({}, {}, {})",
                self.lower, self.upper, self.width
            )));
        }
        Ok(())
    }
}

/// One slice-sampling transition from `x0`: stepping out (Neal 2003) with at
/// most `MAX_STEP_OUT` steps, truncated at the configured bounds, followed
/// by shrinkage. `log_density` may return `-inf` outside the support; such
/// points are never accepted.
pub fn slice_step<F, R>(mut log_density: F, x0: f64, cfg: &SliceConfig, rng: &mut R) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let f0 = log_density(x0);
    slice_step_from(log_density, x0, f0, cfg, rng).map(|(x, _)| x)
}

/// [`slice_step`] with the log density at `x0` already known. Returns the
/// new point and its log density.
pub fn slice_step_from<F, R>(mut log_density: F, x0: f64, f0: f64, cfg: &SliceConfig, rng: &mut R) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    if !(f0.is_finite() && x0 > cfg.lower && x0 < cfg.upper) {
        return Err(PpdError::InvalidInitialPoint { x: x0, value: f0 });
    }
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let level = f0 + u.ln();

    let w = cfg.width;
    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    let mut steps_left = (MAX_STEP_OUT as f64 * rng.random::<f64>()) as usize;
    let mut steps_right = MAX_STEP_OUT - 1 - steps_left;
    while steps_left > 0 && left > cfg.lower && log_density(left) > level {
        left -= w;
        steps_left -= 1;
    }
    while steps_right > 0 && right < cfg.upper && log_density(right) > level {
        right += w;
        steps_right -= 1;
    }
    left = left.max(cfg.lower);
    right = right.min(cfg.upper);

    for _ in 0..MAX_SHRINK {
        let x1 = left + rng.random::<f64>() * (right - left);
        if x1 > cfg.lower && x1 < cfg.upper {
            let f1 = log_density(x1);
            if f1 > level {
                return Ok((x1, f1));
            }
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left <= f64::EPSILON * x0.abs() || right <= left {
            break;
        }
    }
    Err(PpdError::SliceStalled { coordinate: None })
}

/// Normal sufficient statistics for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalStats {
    pub n: f64,
    pub mean: f64,
    /// Sum of squared deviations about `mean`.
    pub sum_squares: f64,
}

impl NormalStats {
    pub fn residual_ss(&self, mu: f64) -> f64 {
        self.sum_squares + self.n * (self.mean - mu).powi(2)
    }
}

/// A dataset's contribution to the mean conditional: its likelihood is
/// raised to `weight` (a0, or 1 for current data) at precision `precision`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalComponent {
    pub stats: NormalStats,
    pub weight: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationPrior {
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrecisionPrior {
    Jeffreys,
}

/// Draw of the common mean given each component's precision under a flat
/// prior: Normal(sum w tau n ybar / P, 1 / P) with P = sum w tau n.
pub fn gibbs_normal_mean<R: Rng + ?Sized>(
    components: &[NormalComponent],
    _prior: LocationPrior,
    rng: &mut R,
) -> Result<f64> {
    let mut precision = 0.0;
    let mut weighted = 0.0;
    for c in components {
        if !(c.precision > 0.0) {
            return Err(PpdError::InvalidInput(format!("precision {} must be positive", c.precision)));
        }
        let p = c.weight * c.precision * c.stats.n;
        precision += p;
        weighted += p * c.stats.mean;
    }
    if !(precision > 0.0) {
        return Err(PpdError::PosteriorImproper("no data inform the mean".into()));
    }
    let mean = weighted / precision;
    let normal = Normal::new(mean, precision.recip().sqrt())
        .map_err(|e| PpdError::InvalidInput(e.to_string()))?;
    Ok(normal.sample(rng))
}

/// Draw of a precision given the mean under the `1/tau` prior, for data whose
/// likelihood is raised to `weight`: Gamma(w n / 2, rate = w RSS / 2).
pub fn gibbs_normal_precision<R: Rng + ?Sized>(
    stats: &NormalStats,
    weight: f64,
    mean: f64,
    _prior: PrecisionPrior,
    rng: &mut R,
) -> Result<f64> {
    if !(stats.n >= 1.0) || !(weight > 0.0) {
        return Err(PpdError::InvalidInput("precision update needs n >= 1 and weight > 0".into()));
    }
    let rss = stats.residual_ss(mean);
    if !(rss > 0.0) {
        return Err(PpdError::DegenerateData);
    }
    gamma_draw(0.5 * weight * stats.n, 0.5 * weight * rss, rng)
}

/// Gamma draw in shape/rate form.
pub fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, rate.recip())
        .map_err(|e| PpdError::InvalidInput(format!("gamma({shape}, {rate}): {e}")))?;
    Ok(g.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = RngStream::new(1, 0).rng();
        let cfg = SliceConfig::coefficient();
        let mut x = 0.0;
        let draws: Vec<f64> = (0..50_000)
            .map(|_| {
                x = slice_step(|x| -0.5 * x * x, x, &cfg, &mut rng).unwrap();
                x
            })
            .collect();
        let (m, sd) = moments(&draws);
        assert!(m.abs() < 0.03, "mean {m}");
        assert!((0.97..=1.03).contains(&sd), "sd {sd}");
    }

    #[test]
    fn respects_open_bounds() {
        let mut rng = RngStream::new(2, 0).rng();
        let cfg = SliceConfig::a0();
        // Mass piles up against both bounds.
        let target = |x: f64| -0.9 * x.ln() - 0.9 * (1.0 - x).ln();
        let mut x = 0.5;
        for _ in 0..20_000 {
            x = slice_step(target, x, &cfg, &mut rng).unwrap();
            assert!(x > 0.0 && x < 1.0);
        }
    }

    #[test]
    fn beta_target_mean() {
        let (a, b) = (13.1 + 1e-4, 424.1 + 1e-4);
        let mut rng = RngStream::new(3, 0).rng();
        let cfg = SliceConfig { lower: 0.0, upper: 1.0, width: 0.1 };
        let mut x = 0.5;
        let mut sum = 0.0;
        let n = 30_000;
        for i in 0..n + 500 {
            x = slice_step(|x: f64| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln(), x, &cfg, &mut rng)
                .unwrap();
            if i >= 500 {
                sum += x;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - a / (a + b)).abs() < 0.005, "{mean}");
    }

    #[test]
    fn nan_start_is_rejected() {
        let mut rng = RngStream::new(4, 0).rng();
        let r = slice_step(|_| f64::NAN, 0.0, &SliceConfig::coefficient(), &mut rng);
        assert!(matches!(r, Err(PpdError::InvalidInitialPoint { .. })));
    }

    #[test]
    fn zero_measure_slice_never_moves() {
        let mut rng = RngStream::new(5, 0).rng();
        // Only the starting point has positive density.
        let r = slice_step(
            |x| if x == 0.25 { 0.0 } else { f64::NEG_INFINITY },
            0.25,
            &SliceConfig::a0(),
            &mut rng,
        );
        // Either the bracket collapses or it lands back on the only supported point.
        match r {
            Ok(x) => assert_eq!(x, 0.25),
            Err(e) => assert_eq!(e, PpdError::SliceStalled { coordinate: None }),
        }
    }

    #[test]
    fn deterministic_given_stream() {
        let run = || {
            let mut rng = RngStream::new(9, 9).rng();
            let mut x = 0.1;
            (0..100)
                .map(|_| {
                    x = slice_step(|x| -x.abs(), x, &SliceConfig::coefficient(), &mut rng).unwrap();
                    x.to_bits()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gibbs_mean_concentrates() {
        let mut rng = RngStream::new(6, 0).rng();
        let stats = NormalStats { n: 10_000.0, mean: 2.0, sum_squares: 9_999.0 };
        let comp = [NormalComponent { stats, weight: 1.0, precision: 1.0 }];
        let draws: Vec<f64> = (0..10_000)
            .map(|_| gibbs_normal_mean(&comp, LocationPrior::Flat, &mut rng).unwrap())
            .collect();
        let (m, sd) = moments(&draws);
        assert!((m - 2.0).abs() < 0.02);
        assert!((sd - 0.01).abs() < 0.001);
    }

    #[test]
    fn zero_weight_component_drops_out() {
        let current = NormalStats { n: 20.0, mean: 1.0, sum_squares: 19.0 };
        let hist = NormalStats { n: 500.0, mean: 5.0, sum_squares: 499.0 };
        let with = [
            NormalComponent { stats: current, weight: 1.0, precision: 2.0 },
            NormalComponent { stats: hist, weight: 0.0, precision: 3.0 },
        ];
        let without = [with[0]];
        let a = gibbs_normal_mean(&with, LocationPrior::Flat, &mut RngStream::new(7, 0).rng());
        let b = gibbs_normal_mean(&without, LocationPrior::Flat, &mut RngStream::new(7, 0).rng());
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn gibbs_precision_mean() {
        let mut rng = RngStream::new(8, 0).rng();
        // Residual SS equals n at the conditioning mean.
        let stats = NormalStats { n: 100.0, mean: 0.0, sum_squares: 100.0 };
        let n = 20_000;
        let avg = (0..n)
            .map(|_| gibbs_normal_precision(&stats, 1.0, 0.0, PrecisionPrior::Jeffreys, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((avg - 1.0).abs() < 0.05, "{avg}");
    }

    #[test]
    fn zero_residual_is_degenerate() {
        let mut rng = RngStream::new(9, 0).rng();
        let stats = NormalStats { n: 5.0, mean: 1.0, sum_squares: 0.0 };
        let r = gibbs_normal_precision(&stats, 1.0, 1.0, PrecisionPrior::Jeffreys, &mut rng);
        assert_eq!(r, Err(PpdError::DegenerateData));
    }
}
