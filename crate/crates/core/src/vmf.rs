//! von Mises-Fisher lobes and mixtures on the unit sphere.
//!
//! Density v(w; mu, kappa) = kappa / (2 pi (1 - e^{-2 kappa})) *
//! e^{kappa (mu.w - 1)}. The exponent is kept non-positive and the
//! normalizer goes through expm1, so evaluation is stable from the uniform
//! limit (kappa -> 0 gives 1/(4 pi)) up to the concentration cap used by
//! the fitter (1e6).

use crate::math::{basis_from_normal, Vec3};

pub const INV_4PI: f64 = 1.0 / (4.0 * std::f64::consts::PI);

pub fn vmf_pdf(mu: Vec3, kappa: f64, w: Vec3) -> f64 {
    if kappa <= 0.0 {
        return INV_4PI;
    }
    let c = kappa / (std::f64::consts::TAU * -f64::exp_m1(-2.0 * kappa));
    c * (kappa * (mu.dot(&w) - 1.0)).exp()
}

/// Log density; usable where the density itself underflows.
pub fn vmf_log_pdf(mu: Vec3, kappa: f64, w: Vec3) -> f64 {
    if kappa <= 0.0 {
        return INV_4PI.ln();
    }
    (kappa / -f64::exp_m1(-2.0 * kappa)).ln() - std::f64::consts::TAU.ln()
        + kappa * (mu.dot(&w) - 1.0)
}

/// Inversion sampling. u1 drives the polar angle around mu, u2 the azimuth.
pub fn vmf_sample(mu: Vec3, kappa: f64, u1: f64, u2: f64) -> Vec3 {
    let w = if kappa <= 0.0 {
        1.0 - 2.0 * u1
    } else {
        // cos angle: 1 + ln(u + (1-u) e^{-2 kappa}) / kappa, evaluated as
        // ln1p(expm1(-2k) (1-u)) to survive both kappa extremes.
        (1.0 + f64::ln_1p(f64::exp_m1(-2.0 * kappa) * (1.0 - u1)) / kappa).clamp(-1.0, 1.0)
    };
    let s = (1.0 - w * w).max(0.0).sqrt();
    let phi = std::f64::consts::TAU * u2;
    let (t1, t2) = basis_from_normal(mu);
    (w * mu + s * (phi.cos() * t1 + phi.sin() * t2)).normalize()
}

#[derive(Clone, Copy, Debug)]
pub struct VmfLobe {
    pub mu: Vec3,
    pub kappa: f64,
    /// Normalized at mixture construction.
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct VmfMixture {
    lobes: Vec<VmfLobe>,
    /// Cumulative lobe weights for selection.
    cdf: Vec<f64>,
}

impl VmfMixture {
    /// Normalizes lobe weights. None when no lobe carries positive weight.
    pub fn new(mut lobes: Vec<VmfLobe>) -> Option<Self> {
        lobes.retain(|l| l.weight > 0.0 && l.weight.is_finite());
        let total: f64 = lobes.iter().map(|l| l.weight).sum();
        if !(total > 0.0) {
            return None;
        }
        let mut cdf = Vec::with_capacity(lobes.len());
        let mut acc = 0.0;
        for l in &mut lobes {
            l.weight /= total;
            acc += l.weight;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Some(VmfMixture { lobes, cdf })
    }

    pub fn lobes(&self) -> &[VmfLobe] {
        &self.lobes
    }

    pub fn pdf(&self, w: Vec3) -> f64 {
        self.lobes
            .iter()
            .map(|l| l.weight * vmf_pdf(l.mu, l.kappa, w))
            .sum()
    }

    /// u[0] selects the lobe, u[1..] shape the direction.
    pub fn sample(&self, u: [f64; 3]) -> Vec3 {
        let i = self.cdf.partition_point(|&c| c <= u[0]).min(self.lobes.len() - 1);
        let l = &self.lobes[i];
        vmf_sample(l.mu, l.kappa, u[1], u[2])
    }
}

/// Upper-tail p-value of a chi-square statistic via the Wilson-Hilferty
/// cube-root normal approximation; adequate for the df >= 20 goodness-of-fit
/// checks this crate runs.
pub fn chi_square_pvalue(stat: f64, df: f64) -> f64 {
    if df <= 0.0 {
        return 1.0;
    }
    let t = 2.0 / (9.0 * df);
    let z = ((stat / df).powf(1.0 / 3.0) - (1.0 - t)) / t.sqrt();
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| < 1.5e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        poly
    } else {
        2.0 - poly
    }
}
