//! Normalizing constants of the power prior: the partition-weighted kernel
//! (PWK) estimator from posterior draws, and a polynomial surface for
//! `log c(a0)` fitted over a grid of a0 values.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{PpdError, Result};
use crate::glm::{normal_power_prior_log_c, sample_fixed, GlmProblem, McmcSettings};
use crate::model::{EndpointSpec, Family, GlmData, Link};
use crate::rng::RngStream;
use crate::special::{ln_gamma, log_sum_exp};

pub const DEFAULT_RINGS: usize = 20;
pub const MAX_DEGREE: usize = 10;
pub const R_SQUARED_TARGET: f64 = 0.99;
const HULL_TOLERANCE: f64 = 1e-12;
const RECORD_HEADER: &str = "ppd-normconst-surface v1";

/// PWK estimate of `log int q(theta) dtheta` from draws of the density
/// proportional to `q`. `draws` holds one draw per row; `log_kernel`
/// evaluates `log q`.
pub fn pwk_log_c<F>(draws: &DMatrix<f64>, mut log_kernel: F, rings: usize) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let (t, d) = draws.shape();
    if rings == 0 {
        return Err(PpdError::InvalidInput("at least one ring required".into()));
    }
    if t <= d + 1 || d == 0 {
        return Err(PpdError::DegeneratePosteriorSample(format!("{t} draws in {d} dimensions")));
    }
    let mean = draws.row_mean();
    let centered = DMatrix::from_fn(t, d, |i, j| draws[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (t as f64 - 1.0);
    let chol = cov
        .cholesky()
        .ok_or_else(|| PpdError::DegeneratePosteriorSample("sample covariance is singular".into()))?;
    let l = chol.l();
    let z = l
        .solve_lower_triangular(&centered.transpose())
        .ok_or_else(|| PpdError::DegeneratePosteriorSample("sample covariance is singular".into()))?;
    let radii: Vec<f64> = z.column_iter().map(|c| c.norm()).collect();
    let mut sorted = radii.clone();
    sorted.sort_by(f64::total_cmp);
    let r_max = sorted[((0.99 * t as f64).ceil() as usize).clamp(1, t) - 1];
    if !(r_max > 0.0) {
        return Err(PpdError::DegeneratePosteriorSample("draws do not spread".into()));
    }

    let mut log_q = Vec::with_capacity(t);
    let mut row = vec![0.0; d];
    for i in 0..t {
        for (j, v) in row.iter_mut().enumerate() {
            *v = draws[(i, j)];
        }
        log_q.push(log_kernel(&row));
    }

    let shell_of = |r: f64| ((r / r_max * rings as f64) as usize).min(rings - 1);
    let mut rep = vec![f64::NEG_INFINITY; rings];
    let mut occupied = vec![false; rings];
    for (&r, &lq) in radii.iter().zip(&log_q) {
        if r < r_max && lq.is_finite() {
            let k = shell_of(r);
            occupied[k] = true;
            rep[k] = rep[k].max(lq);
        }
    }
    if !occupied.iter().any(|&o| o) {
        return Err(PpdError::DegeneratePosteriorSample("no draws inside the working region".into()));
    }
    if occupied.iter().any(|&o| !o) {
        log::warn!("empty PWK shells merged with neighbours");
        // Empty shells take the representative of the nearest inner shell;
        // leading empty shells take the first occupied one.
        let first = occupied.iter().position(|&o| o).unwrap_or(0);
        for k in 0..rings {
            if !occupied[k] {
                rep[k] = if k < first { rep[first] } else { rep[k - 1] };
            }
        }
    }

    let ln_det_l: f64 = l.diagonal().iter().map(|v| v.abs().ln()).sum();
    let df = d as f64;
    let ln_unit_ball = 0.5 * df * PI.ln() - ln_gamma(0.5 * df + 1.0);
    let width = r_max / rings as f64;
    let numerator = log_sum_exp((0..rings).map(|k| {
        let lo = (k as f64 * width).powf(df);
        let hi = ((k + 1) as f64 * width).powf(df);
        rep[k] + ln_det_l + ln_unit_ball + (hi - lo).ln()
    }));
    let ratios: Vec<f64> = radii
        .iter()
        .zip(&log_q)
        .filter(|(r, lq)| **r < r_max && lq.is_finite())
        .map(|(&r, &lq)| rep[shell_of(r)] - lq)
        .collect();
    let denominator = log_sum_exp(ratios) - (t as f64).ln();
    let value = numerator - denominator;
    if !value.is_finite() {
        return Err(PpdError::DegeneratePosteriorSample("estimate is not finite".into()));
    }
    Ok(value)
}

/// Grid of a0 vectors (rows) at which `log c(a0)` is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A0Grid {
    pub rows: DMatrix<f64>,
}

impl A0Grid {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(PpdError::InvalidInput("a0 grid is empty".into()));
        }
        if rows.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(PpdError::InvalidInput("a0 grid values must lie in (0, 1]".into()));
        }
        Ok(Self { rows })
    }

    /// `m` evenly spaced values on `[lo, hi]` for a single historical set.
    pub fn lattice(m: usize, lo: f64, hi: f64) -> Result<Self> {
        if m < 2 {
            return Err(PpdError::InvalidInput("lattice needs at least two points".into()));
        }
        let values: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
        Self::new(DMatrix::from_column_slice(m, 1, &values))
    }

    /// Default grid: a lattice for one set; otherwise the corners of
    /// `[lo, 1]^k` plus uniform interior points.
    pub fn default_for(k: usize, stream: &RngStream) -> Result<Self> {
        const LO: f64 = 0.05;
        if k == 1 {
            return Self::lattice(30, LO, 1.0);
        }
        use rand::Rng;
        let corners = 1usize << k.min(10);
        let m = corners + 20 * k;
        let mut rng = stream.rng();
        let rows = DMatrix::from_fn(m, k, |i, j| {
            if i < corners {
                if (i >> j) & 1 == 1 { 1.0 } else { LO }
            } else {
                LO + (1.0 - LO) * rng.random::<f64>()
            }
        });
        Self::new(rows)
    }

    pub fn dims(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.rows.row(i).iter().copied().collect()
    }
}

/// Exponent vectors of all monomials of total degree at most `degree` in
/// `k` variables, in graded order.
fn monomials(k: usize, degree: usize) -> Vec<Vec<u32>> {
    fn extend(prefix: &mut Vec<u32>, k: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == k - 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            extend(prefix, k, remaining - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree as u32 {
        extend(&mut Vec::with_capacity(k), k, total, &mut out);
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k.min(n - k)).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Polynomial surface for `log c(a0)` on the hull of its fitting grid.
/// Inputs are rescaled per coordinate to `[-1, 1]` before the monomial basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySurface {
    pub endpoint: EndpointSpec,
    /// Identifies the historical data the surface was fitted to.
    pub fingerprint: String,
    pub degree: usize,
    pub r_squared: f64,
    hull: Vec<(f64, f64)>,
    coefficients: Vec<f64>,
}

impl PolySurface {
    /// Least-squares fit over a total-degree monomial basis. The degree is the
    /// first one whose R² exceeds 0.99, raised further while each increase
    /// is statistically significant.
    pub fn fit(
        grid: &A0Grid,
        log_c: &[f64],
        endpoint: EndpointSpec,
        fingerprint: impl Into<String>,
    ) -> Result<Self> {
        let (m, k) = grid.rows.shape();
        if log_c.len() != m {
            return Err(PpdError::InvalidInput(format!("{} values for {m} grid rows", log_c.len())));
        }
        if log_c.iter().any(|v| !v.is_finite()) {
            return Err(PpdError::InvalidInput("log c values must be finite".into()));
        }
        let hull: Vec<(f64, f64)> = (0..k)
            .map(|j| {
                let col = grid.rows.column(j);
                (col.min(), col.max())
            })
            .collect();
        let y = DVector::from_column_slice(log_c);
        let mean = y.mean();
        let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let fit_degree = |degree: usize| -> Option<Result<(DVector<f64>, f64, usize)>> {
            let basis = monomials(k, degree);
            debug_assert_eq!(basis.len(), binomial(k + degree, degree));
            if basis.len() > m {
                return None;
            }
            let design = DMatrix::from_fn(m, basis.len(), |i, b| {
                let u = scale_to_hull(&hull, &grid.row(i));
                basis_value(&u, &basis[b])
            });
            Some(least_squares(design.clone(), &y, degree).map(|coef| {
                let rss = (&y - &design * &coef).norm_squared();
                (coef, rss, basis.len())
            }))
        };
        let r_squared = |rss: f64| if ss_tot > 0.0 { 1.0 - rss / ss_tot } else { 1.0 };

        // The first degree with R² above target, then higher degrees while
        // the added terms are significant (partial F-test at 1%).
        let mut best = f64::NEG_INFINITY;
        let mut best_degree = 0;
        let mut chosen: Option<(usize, DVector<f64>, f64, usize)> = None;
        for degree in 1..=MAX_DEGREE {
            let Some(fit) = fit_degree(degree) else { break };
            match chosen.take() {
                None => {
                    let (coef, rss, size) = fit?;
                    let r2 = r_squared(rss);
                    if r2 > best {
                        best = r2;
                        best_degree = degree;
                    }
                    if r2 > R_SQUARED_TARGET {
                        chosen = Some((degree, coef, rss, size));
                    }
                }
                Some(current) => {
                    let keep = match fit {
                        Ok((coef, rss, size)) if improves(current.2, rss, size - current.3, m - size, ss_tot) => {
                            (degree, coef, rss, size)
                        }
                        _ => {
                            chosen = Some(current);
                            break;
                        }
                    };
                    chosen = Some(keep);
                }
            }
        }
        if let Some((degree, coef, rss, _)) = chosen {
            return Ok(Self {
                endpoint,
                fingerprint: fingerprint.into(),
                degree,
                r_squared: r_squared(rss),
                hull,
                coefficients: coef.iter().copied().collect(),
            });
        }
        Err(PpdError::SurfaceFitFailed { best_r_squared: best, degree: best_degree })
    }

    pub fn dims(&self) -> usize {
        self.hull.len()
    }

    /// Per-coordinate `(min, max)` of the fitting grid.
    pub fn hull(&self) -> &[(f64, f64)] {
        &self.hull
    }

    fn scaled(&self, a0: &[f64]) -> Vec<f64> {
        scale_to_hull(&self.hull, a0)
    }

    /// `log c(a0)`; errors outside the fitting hull.
    pub fn eval(&self, a0: &[f64]) -> Result<f64> {
        if a0.len() != self.dims() {
            return Err(PpdError::InvalidInput(format!(
                "surface takes {} coordinates, got {}",
                self.dims(),
                a0.len()
            )));
        }
        for (j, (&a, &(lo, hi))) in a0.iter().zip(&self.hull).enumerate() {
            if !(a >= lo - HULL_TOLERANCE && a <= hi + HULL_TOLERANCE) {
                return Err(PpdError::SurfaceExtrapolation { coordinate: j, value: a, lower: lo, upper: hi });
            }
        }
        let u = self.scaled(a0);
        let basis = monomials(self.dims(), self.degree);
        Ok(basis.iter().zip(&self.coefficients).map(|(e, c)| c * basis_value(&u, e)).sum())
    }

    /// Line-oriented text record; floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{RECORD_HEADER}");
        let _ = writeln!(s, "endpoint {} {}", self.endpoint.family, self.endpoint.link);
        let _ = writeln!(s, "fingerprint {}", self.fingerprint);
        let _ = writeln!(s, "dims {}", self.dims());
        let _ = writeln!(s, "degree {}", self.degree);
        let _ = writeln!(s, "r_squared {:?}", self.r_squared);
        let _ = writeln!(s, "hull {}", join(&mut self.hull.iter().flat_map(|&(lo, hi)| [lo, hi])));
        let _ = writeln!(s, "coefficients {}", join(&mut self.coefficients.iter().copied()));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| PpdError::InvalidInput(format!("surface record: {msg}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(RECORD_HEADER) {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<Vec<&str>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing `{name}`")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected `{name}`")));
            }
            Ok(parts.collect())
        };
        let floats = |parts: &[&str]| -> Result<Vec<f64>> {
            parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|_| bad(&format!("bad number `{p}`"))))
                .collect()
        };
        let one = |parts: Vec<&str>, name: &str| -> Result<String> {
            match parts.as_slice() {
                [v] => Ok((*v).to_string()),
                _ => Err(bad(&format!("`{name}` takes one value"))),
            }
        };
        let endpoint = match field("endpoint")?.as_slice() {
            [f, l] => EndpointSpec::new(f.parse::<Family>()?, l.parse::<Link>()?)?,
            _ => return Err(bad("`endpoint` takes family and link")),
        };
        let fingerprint = one(field("fingerprint")?, "fingerprint")?;
        let dims: usize = one(field("dims")?, "dims")?.parse().map_err(|_| bad("bad dims"))?;
        let degree: usize = one(field("degree")?, "degree")?.parse().map_err(|_| bad("bad degree"))?;
        let r_squared: f64 = one(field("r_squared")?, "r_squared")?.parse().map_err(|_| bad("bad r_squared"))?;
        let hull = floats(&field("hull")?)?;
        let coefficients = floats(&field("coefficients")?)?;
        if dims == 0 || dims > 64 || degree == 0 || degree > MAX_DEGREE {
            return Err(bad("dims or degree out of range"));
        }
        if hull.len() != 2 * dims {
            return Err(bad("hull length does not match dims"));
        }
        let hull: Vec<(f64, f64)> = hull.chunks(2).map(|c| (c[0], c[1])).collect();
        if hull.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
            return Err(bad("hull bounds must be finite and ordered"));
        }
        if coefficients.len() != binomial(dims + degree, degree) {
            return Err(bad("coefficient count does not match dims and degree"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(bad("coefficients must be finite"));
        }
        Ok(Self { endpoint, fingerprint, degree, r_squared, hull, coefficients })
    }
}

fn scale_to_hull(hull: &[(f64, f64)], a0: &[f64]) -> Vec<f64> {
    a0.iter()
        .zip(hull)
        .map(|(&a, &(lo, hi))| if hi > lo { (2.0 * a - lo - hi) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Partial F-test: do `df1` added terms reduce the residual sum of squares
/// from `rss0` to `rss1` significantly, with `df2` residual degrees of freedom?
fn improves(rss0: f64, rss1: f64, df1: usize, df2: usize, ss_tot: f64) -> bool {
    if df1 == 0 || df2 == 0 || rss0 <= 1e-14 * ss_tot.max(f64::MIN_POSITIVE) || rss1 >= rss0 {
        return false;
    }
    if rss1 <= 0.0 {
        return true;
    }
    let f = ((rss0 - rss1) / df1 as f64) / (rss1 / df2 as f64);
    match FisherSnedecor::new(df1 as f64, df2 as f64) {
        Ok(dist) => dist.sf(f) < 0.01,
        Err(_) => false,
    }
}

fn basis_value(u: &[f64], exponents: &[u32]) -> f64 {
    u.iter().zip(exponents).map(|(x, &e)| x.powi(e as i32)).product()
}

fn least_squares(design: DMatrix<f64>, y: &DVector<f64>, degree: usize) -> Result<DVector<f64>> {
    let (m, b) = design.shape();
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * m.max(b) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < b {
        return Err(PpdError::SurfaceSingular { degree });
    }
    svd.solve(y, tol).map_err(|_| PpdError::SurfaceSingular { degree })
}

/// `log c(a0)` at every grid row: closed form for normal data, PWK from
/// power prior draws otherwise. Rows run in parallel, each on its own
/// child stream, so results do not depend on the thread count.
pub fn grid_log_c(
    endpoint: &EndpointSpec,
    historical: &[&GlmData],
    grid: &A0Grid,
    settings: &McmcSettings,
    rings: usize,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    if grid.dims() != historical.len() {
        return Err(PpdError::InvalidInput(format!(
            "grid has {} columns for {} historical sets",
            grid.dims(),
            historical.len()
        )));
    }
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let a0 = grid.row(i);
            if endpoint.family == Family::Normal {
                return normal_power_prior_log_c(historical, &a0);
            }
            let mut rng = stream.child(i as u64).rng();
            let post = sample_fixed(endpoint, None, historical, &a0, settings, &mut rng)?;
            let mut problem = GlmProblem::new(endpoint, None, historical)?;
            pwk_log_c(&post.beta_draws, |beta| problem.log_power_prior_kernel(beta, &a0), rings)
        })
        .collect()
}

/// Estimates `log c` over the grid and fits the surface.
pub fn fit_surface(
    endpoint: &EndpointSpec,
    historical: &[&GlmData],
    grid: &A0Grid,
    settings: &McmcSettings,
    rings: usize,
    fingerprint: impl Into<String>,
    stream: &RngStream,
) -> Result<(PolySurface, Vec<f64>)> {
    let values = grid_log_c(endpoint, historical, grid, settings, rings, stream)?;
    let surface = PolySurface::fit(grid, &values, *endpoint, fingerprint)?;
    Ok((surface, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn monomial_counts() {
        for k in 1..4 {
            for d in 1..6 {
                assert_eq!(monomials(k, d).len(), binomial(k + d, d));
            }
        }
        assert_eq!(monomials(2, 1), vec![vec![0, 0], vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn pwk_standard_normal_1d() {
        let mut rng = RngStream::new(11, 0).rng();
        let draws = DMatrix::from_fn(20_000, 1, |_, _| StandardNormal.sample(&mut rng));
        let est = pwk_log_c(&draws, |x| -0.5 * x[0] * x[0], DEFAULT_RINGS).unwrap();
        assert!((est - 0.5 * (2.0 * PI).ln()).abs() < 0.05, "{est}");
    }

    #[test]
    fn collinear_draws_are_degenerate() {
        let draws = DMatrix::from_fn(100, 2, |i, _| i as f64);
        let r = pwk_log_c(&draws, |_| 0.0, DEFAULT_RINGS);
        assert!(matches!(r, Err(PpdError::DegeneratePosteriorSample(_))));
    }

    #[test]
    fn quadratic_surface_is_recovered() {
        let grid = A0Grid::lattice(15, 0.1, 1.0).unwrap();
        let values: Vec<f64> = (0..15).map(|i| {
            let a = grid.rows[(i, 0)];
            1.0 - 2.0 * a + 0.5 * a * a
        }).collect();
        let s = PolySurface::fit(&grid, &values, EndpointSpec::canonical(Family::Bernoulli), "x").unwrap();
        assert!(s.degree <= 2);
        assert!(s.r_squared > 0.99);
        let a: f64 = 0.55;
        let truth = 1.0 - 2.0 * a + 0.5 * a * a;
        assert!((s.eval(&[a]).unwrap() - truth).abs() < 0.05);
        assert!(matches!(s.eval(&[0.05]), Err(PpdError::SurfaceExtrapolation { coordinate: 0, .. })));
    }

    #[test]
    fn constant_values_fit_exactly() {
        let grid = A0Grid::lattice(5, 0.2, 1.0).unwrap();
        let s = PolySurface::fit(&grid, &[3.0; 5], EndpointSpec::canonical(Family::Poisson), "c").unwrap();
        assert_eq!(s.r_squared, 1.0);
        assert!((s.eval(&[0.5]).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_rows_fail_to_fit() {
        // A zigzag over 12 rows is beyond degree 10.
        let grid = A0Grid::lattice(12, 0.1, 1.0).unwrap();
        let values: Vec<f64> = (0..12).map(|i| (i % 2) as f64).collect();
        let r = PolySurface::fit(&grid, &values, EndpointSpec::canonical(Family::Bernoulli), "x");
        assert!(matches!(r, Err(PpdError::SurfaceFitFailed { .. })), "{r:?}");
    }

    #[test]
    fn duplicate_rows_are_singular() {
        let grid = A0Grid::new(DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.7, 0.7])).unwrap();
        let r = PolySurface::fit(&grid, &[1.0, 1.0, 1.0, 2.0], EndpointSpec::canonical(Family::Bernoulli), "x");
        assert!(matches!(r, Err(PpdError::SurfaceSingular { degree: 1 })), "{r:?}");
    }

    #[test]
    fn text_record_round_trips() {
        let grid = A0Grid::lattice(12, 0.1, 1.0).unwrap();
        let values: Vec<f64> = (0..12).map(|i| (grid.rows[(i, 0)] * 3.1).sin()).collect();
        let s = PolySurface::fit(&grid, &values, EndpointSpec::canonical(Family::Bernoulli), "abc123").unwrap();
        let back = PolySurface::from_text(&s.to_text()).unwrap();
        assert_eq!(s, back);
        assert!(PolySurface::from_text("ppd-normconst-surface v1\nendpoint bernoulli log\n").is_err());
    }
}
