//! Seed-chain importance sampling and the reciprocal-probability estimator.
//!
//! For a separator pair the chain length n is drawn from a defensive blend
//! of the uniform initializer law and the leaf's learned table; a coin then
//! decides whether the (type string, direction) conditional comes from the
//! initializer (uniform area over specular shapes, types flipped per vertex
//! hit) or from the learned per-type direction mixtures. The deduced seed
//! runs through the manifold walk; on success, the discovery probability is
//! estimated by counting how many independent repetitions of the identical
//! capped procedure it takes to re-find the same chain. That geometric
//! count k is an unbiased estimate of the reciprocal conditional
//! probability, so the contribution weight is k / P(n) with no analytic
//! seed density anywhere.

use crate::chain::{
    deduce_chain, deduce_chain_by, ChainType, Configuration, ScatterKind, SpecularChain,
    MAX_CHAIN_LEN,
};
use crate::guiding::LeafDist;
use crate::math::Vec3;
use crate::scene::{Material, Scene};
use crate::solver::{same_chain, walk, WalkOptions, WalkStatus};

use rand::Rng;

/// Whether rediscovery trials reuse the drawn chain length (the default,
/// dividing by P(n) analytically) or redraw it per trial (the whole
/// probability estimated stochastically). Both are unbiased.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReciprocalMode {
    FactoredN,
    FullJoint,
}

#[derive(Clone, Copy, Debug)]
pub struct SamplerOptions {
    /// Initializer share of the defensive mixture.
    pub alpha: f64,
    /// Conditional (type, direction) attempts per procedure invocation.
    pub retry_cap: u32,
    /// Rediscovery trial cap; hitting it truncates the estimate and bumps a
    /// counter.
    pub k_max: u32,
    pub mode: ReciprocalMode,
    pub walk: WalkOptions,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            alpha: 0.5,
            retry_cap: 4,
            k_max: 10_000,
            mode: ReciprocalMode::FactoredN,
            walk: WalkOptions::default(),
        }
    }
}

/// Counters aggregated across estimator invocations.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleStats {
    pub invocations: u64,
    pub seed_attempts: u64,
    pub walks_run: u64,
    pub chains_found: u64,
    pub trial_count: u64,
    pub truncations: u64,
}

impl SampleStats {
    pub fn merge(&mut self, other: &SampleStats) {
        self.invocations += other.invocations;
        self.seed_attempts += other.seed_attempts;
        self.walks_run += other.walks_run;
        self.chains_found += other.chains_found;
        self.trial_count += other.trial_count;
        self.truncations += other.truncations;
    }
}

/// One seed draw: the deduced chain plus the densities of the blend it was
/// drawn from.
#[derive(Clone, Debug)]
pub struct SeedDraw {
    pub n: usize,
    pub tau: ChainType,
    pub omega: Vec3,
    pub learned_branch: bool,
    /// Blended length probability P(n).
    pub p_n: f64,
    /// Blended conditional density p(tau, omega | n), solid-angle measure.
    pub p_dir: f64,
    pub chain: SpecularChain,
}

/// An admissible chain with its stochastic contribution weight.
#[derive(Clone, Debug)]
pub struct ChainEstimate {
    pub chain: SpecularChain,
    pub n: usize,
    /// Direction from the separator to the converged first vertex.
    pub omega_star: Vec3,
    pub k: u32,
    pub truncated: bool,
    pub p_n: f64,
    /// Contribution scale: k / P(n) (FactoredN) or k (FullJoint).
    pub recip: f64,
}

/// Initializer chain-length law: uniform through length 5, then the
/// integrator's Russian-roulette survival 0.95 per extra bounce, truncated
/// at 13 and normalized. Index 0 is unused.
pub fn p0_length_pmf() -> [f64; MAX_CHAIN_LEN + 1] {
    let mut pmf = [0.0f64; MAX_CHAIN_LEN + 1];
    for (n, p) in pmf.iter_mut().enumerate().skip(1) {
        *p = if n <= 5 { 1.0 } else { 0.95f64.powi(n as i32 - 5) };
    }
    let z: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= z;
    }
    pmf
}

/// Blended length pmf at n.
pub fn length_pdf(p0: &[f64; MAX_CHAIN_LEN + 1], dist: Option<&LeafDist>, alpha: f64, n: usize) -> f64 {
    if n == 0 || n > MAX_CHAIN_LEN {
        return 0.0;
    }
    match dist {
        Some(d) => alpha * p0[n] + (1.0 - alpha) * d.pdf_n(n),
        None => p0[n],
    }
}

/// Draws n from the blended pmf; returns (n, P(n)).
pub fn sample_length(
    p0: &[f64; MAX_CHAIN_LEN + 1],
    dist: Option<&LeafDist>,
    alpha: f64,
    u: f64,
) -> (usize, f64) {
    let mut acc = 0.0;
    for n in 1..=MAX_CHAIN_LEN {
        let p = length_pdf(p0, dist, alpha, n);
        acc += p;
        if u < acc && p > 0.0 {
            return (n, p);
        }
    }
    // Numerical tail: last length with positive mass.
    for n in (1..=MAX_CHAIN_LEN).rev() {
        let p = length_pdf(p0, dist, alpha, n);
        if p > 0.0 {
            return (n, p);
        }
    }
    (1, p0[1])
}

/// Solid-angle density of the initializer direction draw: uniform area over
/// specular shapes, summed over every specular surface point the ray meets.
pub fn p0_dir_pdf(scene: &Scene, x_d: Vec3, omega: Vec3) -> f64 {
    let area = scene.specular_area();
    if area <= 0.0 {
        return 0.0;
    }
    let eps = scene.ray_epsilon();
    let mut pdf = 0.0;
    let mut origin = x_d;
    loop {
        let Some(it) = scene.intersect(&crate::geometry::Ray::new(origin, omega, eps), true)
        else {
            break;
        };
        let d2 = (it.p - x_d).norm_squared();
        let cos = omega.dot(&it.n).abs();
        if cos > 1e-9 {
            pdf += d2 / (area * cos);
        }
        origin = it.p;
    }
    pdf
}

/// Discrete probability of the type string along the deduced trace:
/// one half per dielectric vertex, one per conductor. Zero when the trace
/// fails or mismatches.
pub fn p0_type_prob(scene: &Scene, x_d: Vec3, omega: Vec3, tau: ChainType) -> f64 {
    match deduce_chain(scene, x_d, omega, tau) {
        Err(_) => 0.0,
        Ok(chain) => chain
            .vertices
            .iter()
            .map(|v| match scene.material(v.shape) {
                Material::Dielectric { .. } => 0.5,
                _ => 1.0,
            })
            .product(),
    }
}

/// Blended conditional density p(tau, omega | n).
pub fn seed_dir_pdf(
    scene: &Scene,
    x_d: Vec3,
    dist: Option<&LeafDist>,
    alpha: f64,
    n: usize,
    tau: ChainType,
    omega: Vec3,
) -> f64 {
    if tau.len() != n {
        return 0.0;
    }
    let p0 = p0_dir_pdf(scene, x_d, omega) * p0_type_prob(scene, x_d, omega, tau);
    match dist {
        Some(d) => alpha * p0 + (1.0 - alpha) * d.pdf_tau_dir(tau, omega),
        None => p0,
    }
}

/// One conditional draw at fixed n: pick the branch, draw (tau, omega),
/// deduce. No walk, no retries.
fn draw_seed_once(
    scene: &Scene,
    config: &Configuration,
    dist: Option<&LeafDist>,
    alpha: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Option<(bool, SpecularChain)> {
    let use_learned = match dist {
        Some(d) => rng.gen::<f64>() >= alpha && d.pdf_n(n) > 0.0,
        None => {
            if alpha < 1.0 {
                // Keep the stream layout identical whether or not a
                // distribution is present.
                let _ = rng.gen::<f64>();
            }
            false
        }
    };
    if use_learned {
        let d = dist.expect("learned branch");
        let (tau, omega) = d.sample_tau_omega(n, rng.gen(), [rng.gen(), rng.gen(), rng.gen()])?;
        let chain = deduce_chain(scene, config.x_d, omega, tau).ok()?;
        Some((true, chain))
    } else {
        let it = scene.sample_specular_point(rng.gen(), rng.gen(), rng.gen())?;
        let delta = it.p - config.x_d;
        if delta.norm_squared() < (1e-9 * scene.scale()).powi(2) {
            return None;
        }
        let omega = delta.normalize();
        let chain = deduce_chain_by(scene, config.x_d, omega, n, |_, mat| match mat {
            Material::Dielectric { .. } => {
                if rng.gen::<f64>() < 0.5 {
                    ScatterKind::Refract
                } else {
                    ScatterKind::Reflect
                }
            }
            _ => ScatterKind::Reflect,
        })
        .ok()?;
        Some((false, chain))
    }
}

/// A single seed draw with its blend densities; deduction failure is a
/// failed draw the caller may retry.
pub fn sample_seed(
    scene: &Scene,
    config: &Configuration,
    dist: Option<&LeafDist>,
    opts: &SamplerOptions,
    rng: &mut impl Rng,
) -> Option<SeedDraw> {
    let p0 = p0_length_pmf();
    let (n, p_n) = sample_length(&p0, dist, opts.alpha, rng.gen());
    let (learned_branch, chain) = draw_seed_once(scene, config, dist, opts.alpha, n, rng)?;
    let omega = (chain.vertices[0].p - config.x_d).normalize();
    let tau = chain.tau;
    let p_dir = seed_dir_pdf(scene, config.x_d, dist, opts.alpha, n, tau, omega);
    Some(SeedDraw { n, tau, omega, learned_branch, p_n, p_dir, chain })
}

/// The capped discovery procedure at fixed n: up to retry_cap conditional
/// draws, each walked; first admissible chain wins.
fn attempt(
    scene: &Scene,
    config: &Configuration,
    dist: Option<&LeafDist>,
    opts: &SamplerOptions,
    n: usize,
    rng: &mut impl Rng,
    stats: &mut SampleStats,
) -> Option<SpecularChain> {
    for _ in 0..opts.retry_cap {
        stats.seed_attempts += 1;
        let Some((_, seed)) = draw_seed_once(scene, config, dist, opts.alpha, n, rng) else {
            continue;
        };
        stats.walks_run += 1;
        let r = walk(scene, config, &seed, &opts.walk);
        if r.status == WalkStatus::Admissible {
            return Some(r.chain);
        }
    }
    None
}

/// Geometric trial counting: number of calls of `trial`, including the
/// succeeding one, capped. E[count] = 1/p for per-trial success p.
pub fn count_until(mut trial: impl FnMut() -> bool, k_max: u32) -> (u32, bool) {
    let mut k = 1u32;
    loop {
        if trial() {
            return (k, false);
        }
        if k >= k_max {
            return (k, true);
        }
        k += 1;
    }
}

/// Full estimator invocation: find an admissible chain, then price it by
/// rediscovery counting.
pub fn sample_admissible(
    scene: &Scene,
    config: &Configuration,
    dist: Option<&LeafDist>,
    opts: &SamplerOptions,
    rng: &mut impl Rng,
    stats: &mut SampleStats,
) -> Option<ChainEstimate> {
    stats.invocations += 1;
    let p0 = p0_length_pmf();
    let (n, p_n) = sample_length(&p0, dist, opts.alpha, rng.gen());
    let found = attempt(scene, config, dist, opts, n, rng, stats)?;
    stats.chains_found += 1;

    let (k, truncated) = count_until(
        || {
            let trial_n = match opts.mode {
                ReciprocalMode::FactoredN => n,
                ReciprocalMode::FullJoint => sample_length(&p0, dist, opts.alpha, rng.gen()).0,
            };
            match attempt(scene, config, dist, opts, trial_n, rng, stats) {
                Some(c) => same_chain(scene, &found, &c),
                None => false,
            }
        },
        opts.k_max,
    );
    stats.trial_count += k as u64;
    if truncated {
        stats.truncations += 1;
    }
    let recip = match opts.mode {
        ReciprocalMode::FactoredN => k as f64 / p_n,
        ReciprocalMode::FullJoint => k as f64,
    };
    let omega_star = (found.vertices[0].p - config.x_d).normalize();
    Some(ChainEstimate { chain: found, n, omega_star, k, truncated, p_n, recip })
}
