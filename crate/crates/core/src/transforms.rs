//! Reduction of independent-marginal priors to a standard Gaussian prior.
//!
//! Each coordinate is mapped by `T_d(z) = P_Θd⁻¹(Φ(z))`. Inference runs on
//! `z ~ N(0, I)` and densities come back through the diagonal Jacobian
//! `dz/dθ = p_Θ(θ)/φ(z)`. For `z > 0` the maps go through survival
//! functions so the upper tail keeps full precision.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::embedding::GaussianPrior;
use crate::error::{check_dim, Error, Result};
use crate::surrogate::SurrogateState;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Standardized clamp applied to z-draws in sampling paths.
pub const SAMPLE_CLAMP: f64 = 8.0;

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`.
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "normal quantile needs u in (0, 1), got {u}"
        )));
    }
    if u > 0.5 {
        return Ok(-lower_quantile(1.0 - u));
    }
    Ok(lower_quantile(u))
}

/// Rational approximation (Acklam) for `u ≤ 0.5` plus one Newton step.
fn lower_quantile(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let x = if u < 0.024_25 {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    x - (std_normal_cdf(x) - u) / std_normal_pdf(x)
}

/// One marginal prior family as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, stddev: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Monotone (PCHIP) interpolation of CDF values at increasing knots;
    /// `cdf` must run from 0 to 1.
    Tabulated { x: Vec<f64>, cdf: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Uniform { lo: f64, hi: f64 },
    LogUniform { ln_lo: f64, ln_hi: f64 },
    Gaussian { mean: f64, stddev: f64 },
    Gamma { shape: f64, rate: f64, ln_norm: f64 },
    Tabulated(Pchip),
}

/// Validated marginal with CDF, survival function, quantiles and density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginalSpec", into = "MarginalSpec")]
pub struct Marginal {
    spec: MarginalSpec,
    family: Family,
}

impl TryFrom<MarginalSpec> for Marginal {
    type Error = Error;

    fn try_from(spec: MarginalSpec) -> Result<Self> {
        Marginal::new(spec)
    }
}

impl From<Marginal> for MarginalSpec {
    fn from(m: Marginal) -> Self {
        m.spec
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl Marginal {
    pub fn new(spec: MarginalSpec) -> Result<Self> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let family = match &spec {
            MarginalSpec::Uniform { lo, hi } => {
                if !(finite(&[*lo, *hi]) && lo < hi) {
                    return Err(bad("uniform needs lo < hi"));
                }
                Family::Uniform { lo: *lo, hi: *hi }
            }
            MarginalSpec::LogUniform { lo, hi } => {
                if !(finite(&[*lo, *hi]) && *lo > 0.0 && lo < hi) {
                    return Err(bad("log-uniform needs 0 < lo < hi"));
                }
                Family::LogUniform {
                    ln_lo: lo.ln(),
                    ln_hi: hi.ln(),
                }
            }
            MarginalSpec::Gaussian { mean, stddev } => {
                if !(finite(&[*mean, *stddev]) && *stddev > 0.0) {
                    return Err(bad("gaussian needs stddev > 0"));
                }
                Family::Gaussian {
                    mean: *mean,
                    stddev: *stddev,
                }
            }
            MarginalSpec::Gamma { shape, rate } => {
                if !(finite(&[*shape, *rate]) && *shape > 0.0 && *rate > 0.0) {
                    return Err(bad("gamma needs shape > 0 and rate > 0"));
                }
                Family::Gamma {
                    shape: *shape,
                    rate: *rate,
                    ln_norm: shape * rate.ln() - ln_gamma(*shape),
                }
            }
            MarginalSpec::Tabulated { x, cdf } => Family::Tabulated(Pchip::new(x, cdf)?),
        };
        Ok(Self { spec, family })
    }

    pub fn spec(&self) -> &MarginalSpec {
        &self.spec
    }

    /// Open support interval.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            Family::Uniform { lo, hi } => (*lo, *hi),
            Family::LogUniform { ln_lo, ln_hi } => (ln_lo.exp(), ln_hi.exp()),
            Family::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Gamma { .. } => (0.0, f64::INFINITY),
            Family::Tabulated(p) => (p.x[0], *p.x.last().unwrap()),
        }
    }

    fn interior(&self, theta: f64) -> bool {
        let (lo, hi) = self.support();
        theta > lo && theta < hi
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        if !self.interior(theta) {
            return 0.0;
        }
        match &self.family {
            Family::Uniform { lo, hi } => 1.0 / (hi - lo),
            Family::LogUniform { ln_lo, ln_hi } => 1.0 / (theta * (ln_hi - ln_lo)),
            Family::Gaussian { mean, stddev } => std_normal_pdf((theta - mean) / stddev) / stddev,
            Family::Gamma {
                shape,
                rate,
                ln_norm,
            } => (ln_norm + (shape - 1.0) * theta.ln() - rate * theta).exp(),
            Family::Tabulated(p) => p.derivative(theta),
        }
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if theta <= lo {
            return 0.0;
        }
        if theta >= hi {
            return 1.0;
        }
        match &self.family {
            Family::Uniform { lo, hi } => (theta - lo) / (hi - lo),
            Family::LogUniform { ln_lo, ln_hi } => (theta.ln() - ln_lo) / (ln_hi - ln_lo),
            Family::Gaussian { mean, stddev } => std_normal_cdf((theta - mean) / stddev),
            Family::Gamma { shape, rate, .. } => gamma_lr(*shape, rate * theta),
            Family::Tabulated(p) => p.value(theta),
        }
    }

    /// `1 − cdf(θ)` computed without cancellation where the family allows.
    pub fn sf(&self, theta: f64) -> f64 {
        let (lo, hi) = self.support();
        if theta <= lo {
            return 1.0;
        }
        if theta >= hi {
            return 0.0;
        }
        match &self.family {
            Family::Uniform { lo, hi } => (hi - theta) / (hi - lo),
            Family::LogUniform { ln_lo, ln_hi } => (ln_hi - theta.ln()) / (ln_hi - ln_lo),
            Family::Gaussian { mean, stddev } => std_normal_cdf((mean - theta) / stddev),
            Family::Gamma { shape, rate, .. } => gamma_ur(*shape, rate * theta),
            Family::Tabulated(p) => 1.0 - p.value(theta),
        }
    }

    /// `θ` with `cdf(θ) = u`, for `u` in `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        self.solve(u, false)
    }

    /// `θ` with `sf(θ) = v`, for `v` in `(0, 1)`.
    pub fn upper_quantile(&self, v: f64) -> Result<f64> {
        self.solve(v, true)
    }

    fn solve(&self, p: f64, upper: bool) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(bad(format!("probability must lie in (0, 1), got {p}")));
        }
        let u = if upper { 1.0 - p } else { p };
        let x = match &self.family {
            Family::Uniform { lo, hi } => {
                if upper {
                    hi - p * (hi - lo)
                } else {
                    lo + p * (hi - lo)
                }
            }
            Family::LogUniform { ln_lo, ln_hi } => {
                if upper {
                    (ln_hi - p * (ln_hi - ln_lo)).exp()
                } else {
                    (ln_lo + p * (ln_hi - ln_lo)).exp()
                }
            }
            Family::Gaussian { mean, stddev } => {
                let z = std_normal_quantile(p)?;
                if upper {
                    mean - stddev * z
                } else {
                    mean + stddev * z
                }
            }
            Family::Gamma { shape, rate, .. } => {
                let target_sf = if upper { p } else { 1.0 - p };
                let mut hi = (shape / rate).max(1.0 / rate);
                while self.sf(hi) > target_sf && hi.is_finite() {
                    hi *= 2.0;
                }
                self.invert(p, upper, 0.0, hi)
            }
            Family::Tabulated(p_) => {
                let k = p_.segment_for_value(u);
                self.invert(p, upper, p_.x[k], p_.x[k + 1])
            }
        };
        Ok(x)
    }

    /// Safeguarded Newton iteration for `cdf(θ) = p` (or `sf(θ) = p`) on a
    /// bracket `[lo, hi]`.
    fn invert(&self, p: f64, upper: bool, mut lo: f64, mut hi: f64) -> f64 {
        let resid = |x: f64| {
            if upper {
                p - self.sf(x)
            } else {
                self.cdf(x) - p
            }
        };
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = resid(x);
            if r == 0.0 {
                return x;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let newton = x - r / d;
            let next = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi.abs() {
                return next;
            }
            x = next;
        }
        x
    }

    /// `T(z) = P_Θ⁻¹(Φ(z))`.
    pub fn forward(&self, z: f64) -> Result<f64> {
        if let Family::Gaussian { mean, stddev } = self.family {
            return Ok(mean + stddev * z);
        }
        if z > 0.0 {
            self.upper_quantile(std_normal_cdf(-z))
        } else {
            self.quantile(std_normal_cdf(z))
        }
    }

    /// `T⁻¹(θ) = Φ⁻¹(P_Θ(θ))`; errors unless `θ` is interior.
    pub fn inverse(&self, theta: f64) -> Result<f64> {
        if let Family::Gaussian { mean, stddev } = self.family {
            if theta.is_finite() {
                return Ok((theta - mean) / stddev);
            }
        }
        let (lo, hi) = self.support();
        if !(theta.is_finite() && theta > lo && theta < hi) {
            return Err(Error::OutOfSupport {
                dim: 0,
                value: theta,
            });
        }
        let u = self.cdf(theta);
        let z = if u <= 0.5 {
            std_normal_quantile(u)
        } else {
            std_normal_quantile(self.sf(theta)).map(|z| -z)
        };
        z.map_err(|_| Error::OutOfSupport {
            dim: 0,
            value: theta,
        })
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(bad("tabulated CDF needs at least 2 matching knots"));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(bad("tabulated CDF has non-finite entries"));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) || y.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("tabulated CDF must be strictly increasing"));
        }
        if y[0] != 0.0 || y[n - 1] != 1.0 {
            return Err(bad("tabulated CDF must run from 0 to 1"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d = vec![delta[0]; 2];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    fn segment(&self, t: f64) -> usize {
        self.x.partition_point(|&k| k <= t).clamp(1, self.x.len() - 1) - 1
    }

    fn segment_for_value(&self, v: f64) -> usize {
        self.y.partition_point(|&k| k <= v).clamp(1, self.y.len() - 1) - 1
    }

    fn value(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * self.y[k]
            + (s3 - 2.0 * s2 + s) * h * self.d[k]
            + (-2.0 * s3 + 3.0 * s2) * self.y[k + 1]
            + (s3 - s2) * h * self.d[k + 1];
        v.clamp(0.0, 1.0)
    }

    fn derivative(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        (6.0 * s2 - 6.0 * s) / h * self.y[k]
            + (3.0 * s2 - 4.0 * s + 1.0) * self.d[k]
            + (-6.0 * s2 + 6.0 * s) / h * self.y[k + 1]
            + (3.0 * s2 - 2.0 * s) * self.d[k + 1]
    }
}

/// Three-point end derivative, limited to keep the interpolant monotone.
fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Coordinate-wise map between `z ~ N(0, I)` and a product prior on `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginalTransform {
    marginals: Vec<Marginal>,
}

impl MarginalTransform {
    pub fn new(specs: Vec<MarginalSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Empty("marginals"));
        }
        Ok(Self {
            marginals: specs.into_iter().map(Marginal::new).collect::<Result<_>>()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// The standard Gaussian prior on `z`.
    pub fn z_prior(&self) -> GaussianPrior {
        GaussianPrior::standard(self.dim()).expect("dim >= 1")
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        self.marginals
            .iter()
            .zip(z)
            .enumerate()
            .map(|(d, (m, &zd))| {
                m.forward(zd)
                    .map_err(|_| Error::OutOfSupport { dim: d, value: zd })
            })
            .collect()
    }

    pub fn inverse(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), theta.len())?;
        self.marginals
            .iter()
            .zip(theta)
            .enumerate()
            .map(|(d, (m, &t))| m.inverse(t).map_err(|_| Error::OutOfSupport { dim: d, value: t }))
            .collect()
    }

    /// Product prior density `p_Θ(θ)`.
    pub fn prior_density(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        Ok(self.marginals.iter().zip(theta).map(|(m, &t)| m.pdf(t)).product())
    }

    /// `|det dT⁻¹/dθ| = Π p_Θd(θ_d) / φ(T_d⁻¹(θ_d))`.
    pub fn inverse_jacobian(&self, theta: &[f64]) -> Result<f64> {
        let z = self.inverse(theta)?;
        Ok(self
            .marginals
            .iter()
            .zip(theta)
            .zip(&z)
            .map(|((m, &t), &zd)| m.pdf(t) / std_normal_pdf(zd))
            .product())
    }

    /// Prior draw: standard normal `z`, clamped to `±8`, pushed forward.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let z = self.z_prior().sample_clamped(rng, SAMPLE_CLAMP);
        self.forward(&z)
    }
}

/// Pushes a density on `z` to `θ`: `density_z(T⁻¹θ) · |dT⁻¹/dθ|`.
pub fn change_of_variables(
    t: &MarginalTransform,
    density_z: impl Fn(&[f64]) -> Result<f64>,
    theta: &[f64],
) -> Result<f64> {
    let z = t.inverse(theta)?;
    Ok(density_z(&z)? * t.inverse_jacobian(theta)?)
}

/// Surrogate posterior density in `θ` for a state fitted in `z`-space:
/// `kml(T⁻¹θ) · p_Θ(θ) / q(y)`, where the `p_Z` factors have cancelled.
pub fn transformed_posterior_density(
    t: &MarginalTransform,
    state: &SurrogateState,
    theta: &[f64],
) -> Result<f64> {
    let z = t.inverse(theta)?;
    let q = state.mkml();
    if !(q > 0.0) {
        return Err(Error::NonPositiveEvidence(q));
    }
    Ok(state.kml(&z)? * t.prior_density(theta)? / q)
}
