//! Brute-force ground truth for tests: exhaustive admissible-chain
//! enumeration over stratified first-vertex seeds, convergence basin maps,
//! and a plain specular path probe that cross-checks chain sums against
//! ordinary ray tracing.

use crate::chain::{
    deduce_chain, throughput, ChainType, Configuration, GgtError, GgtOptions, LightPoint,
    SpecularChain,
};
use crate::geometry::{fresnel_dielectric, reflect, refract, Ray, ShapeKind};
use crate::math::{stream_rng, Rgb, Vec3};
use crate::scene::{Emitter, Material, Scene};
use crate::solver::{same_chain, walk, WalkOptions, WalkStatus};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Clone, Debug)]
pub struct OracleOptions {
    /// Seed grid cells per parameter axis, per shape.
    pub resolution: usize,
    /// Re-run at double resolution and require the same chain set.
    pub check_doubling: bool,
    pub walk: WalkOptions,
    pub ggt: GgtOptions,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            resolution: 256,
            check_doubling: true,
            walk: WalkOptions::default(),
            ggt: GgtOptions::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("seed grid resolution {0} is below the 64 per axis minimum")]
    ResolutionTooCoarse(usize),
    #[error("resolution insufficient: {base} chains at the base grid, {doubled} at double")]
    Unstable { base: usize, doubled: usize },
    #[error("throughput evaluation failed: {0}")]
    Throughput(#[from] GgtError),
}

fn param_domain(kind: &ShapeKind) -> ([f64; 2], [f64; 2]) {
    match kind {
        ShapeKind::Quad { .. } => ([-1.0, -1.0], [1.0, 1.0]),
        ShapeKind::Sphere { .. } => ([0.0, 0.0], [std::f64::consts::PI, std::f64::consts::TAU]),
    }
}

fn cell_uv(kind: &ShapeKind, resolution: usize, i: usize, j: usize) -> [f64; 2] {
    let (lo, hi) = param_domain(kind);
    [
        lo[0] + (i as f64 + 0.5) / resolution as f64 * (hi[0] - lo[0]),
        lo[1] + (j as f64 + 0.5) / resolution as f64 * (hi[1] - lo[1]),
    ]
}

/// Seed at a surface point, deduce along the prescribed types, walk.
fn converge_cell(
    scene: &Scene,
    config: &Configuration,
    tau: ChainType,
    shape: usize,
    uv: [f64; 2],
    wopts: &WalkOptions,
) -> Option<SpecularChain> {
    let p = scene.shapes[shape].point_at(uv);
    let delta = p - config.x_d;
    if delta.norm_squared() < (1e-9 * scene.scale()).powi(2) {
        return None;
    }
    let seed = deduce_chain(scene, config.x_d, delta.normalize(), tau).ok()?;
    let r = walk(scene, config, &seed, wopts);
    (r.status == WalkStatus::Admissible).then_some(r.chain)
}

/// Walk every cell of every specular shape for every type string; dedup in
/// deterministic cell order.
fn enumerate_at(
    scene: &Scene,
    config: &Configuration,
    tau_set: &[ChainType],
    resolution: usize,
    wopts: &WalkOptions,
) -> Vec<SpecularChain> {
    let shapes: Vec<usize> = (0..scene.shapes.len())
        .filter(|&s| scene.material(s).is_specular())
        .collect();
    let per_shape = resolution * resolution;
    let total = shapes.len() * tau_set.len() * per_shape;
    let found: Vec<Option<SpecularChain>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let shape = shapes[idx / (tau_set.len() * per_shape)];
            let rest = idx % (tau_set.len() * per_shape);
            let tau = tau_set[rest / per_shape];
            let cell = rest % per_shape;
            let uv = cell_uv(&scene.shapes[shape].kind, resolution, cell / resolution, cell % resolution);
            converge_cell(scene, config, tau, shape, uv, wopts)
        })
        .collect();
    let mut out: Vec<SpecularChain> = Vec::new();
    for c in found.into_iter().flatten() {
        if !out.iter().any(|o| same_chain(scene, o, &c)) {
            out.push(c);
        }
    }
    out
}

/// The deduped admissible chain set, checked for stability under grid
/// doubling. Geometry only; no throughput.
pub fn enumerate_chains(
    scene: &Scene,
    config: &Configuration,
    tau_set: &[ChainType],
    opts: &OracleOptions,
) -> Result<Vec<SpecularChain>, OracleError> {
    if opts.resolution < 64 {
        return Err(OracleError::ResolutionTooCoarse(opts.resolution));
    }
    let base = enumerate_at(scene, config, tau_set, opts.resolution, &opts.walk);
    if opts.check_doubling {
        let doubled = enumerate_at(scene, config, tau_set, 2 * opts.resolution, &opts.walk);
        let stable = base.len() == doubled.len()
            && base.iter().all(|b| doubled.iter().any(|d| same_chain(scene, b, d)));
        if !stable {
            return Err(OracleError::Unstable { base: base.len(), doubled: doubled.len() });
        }
    }
    Ok(base)
}

/// Chains plus their throughputs.
pub fn enumerate_admissible(
    scene: &Scene,
    config: &Configuration,
    tau_set: &[ChainType],
    opts: &OracleOptions,
) -> Result<Vec<(SpecularChain, Rgb)>, OracleError> {
    enumerate_chains(scene, config, tau_set, opts)?
        .into_iter()
        .map(|c| {
            let t = throughput(scene, config, &c, &opts.ggt)?;
            Ok((c, t))
        })
        .collect()
}

/// Sum of throughput over every admissible chain.
pub fn reference_throughput(
    scene: &Scene,
    config: &Configuration,
    tau_set: &[ChainType],
    opts: &OracleOptions,
) -> Result<Rgb, OracleError> {
    Ok(enumerate_admissible(scene, config, tau_set, opts)?
        .iter()
        .fold(Rgb::zeros(), |acc, (_, t)| acc + t))
}

/// For one (shape, type string): which admissible chain each seed cell's
/// walk lands on. Labels index the deduped chain list; None marks failed or
/// unmatched walks.
#[derive(Clone, Debug)]
pub struct BasinMap {
    pub shape: usize,
    pub tau: ChainType,
    pub resolution: usize,
    labels: Vec<Option<usize>>,
}

impl BasinMap {
    pub fn label(&self, i: usize, j: usize) -> Option<usize> {
        self.labels[i * self.resolution + j]
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// The seed parameters at cell (i, j), for re-running a cell by hand.
    pub fn seed_uv(&self, scene: &Scene, i: usize, j: usize) -> [f64; 2] {
        cell_uv(&scene.shapes[self.shape].kind, self.resolution, i, j)
    }
}

pub fn basin_map(
    scene: &Scene,
    config: &Configuration,
    chains: &[SpecularChain],
    shape: usize,
    tau: ChainType,
    resolution: usize,
    wopts: &WalkOptions,
) -> BasinMap {
    let labels: Vec<Option<usize>> = (0..resolution * resolution)
        .into_par_iter()
        .map(|cell| {
            let uv = cell_uv(&scene.shapes[shape].kind, resolution, cell / resolution, cell % resolution);
            let c = converge_cell(scene, config, tau, shape, uv, wopts)?;
            chains.iter().position(|o| same_chain(scene, o, &c))
        })
        .collect();
    BasinMap { shape, tau, resolution, labels }
}

/// Renders a basin map as text, one row per line: chain index digit or '.'
/// for unlabeled cells. A crude but diffable inspection format.
pub fn basin_map_text(map: &BasinMap) -> String {
    let mut s = String::with_capacity((map.resolution + 1) * map.resolution);
    for i in 0..map.resolution {
        for j in 0..map.resolution {
            match map.label(i, j) {
                Some(idx) if idx < 10 => s.push(char::from_digit(idx as u32, 10).unwrap()),
                Some(_) => s.push('#'),
                None => s.push('.'),
            }
        }
        s.push('\n');
    }
    s
}

/// Plain path-traced probe of the irradiance arriving at x_d through
/// purely specular paths of 1..=max_bounces vertices that end on the given
/// emitter. Uniform sphere directions, Fresnel-weighted branch selection at
/// dielectrics, reflectance products at conductors; chunked so the result
/// is independent of thread count.
pub fn pt_irradiance_probe(
    scene: &Scene,
    x_d: Vec3,
    n_d: Vec3,
    emitter: usize,
    max_bounces: usize,
    samples: u64,
    seed: u64,
) -> Rgb {
    const CHUNK: u64 = 1 << 14;
    let chunks = samples.div_ceil(CHUNK);
    let total: Rgb = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(&[seed, c]);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut acc = Rgb::zeros();
            for _ in 0..count {
                acc += probe_one(scene, x_d, n_d, emitter, max_bounces, &mut rng);
            }
            acc
        })
        .reduce(Rgb::zeros, |a, b| a + b);
    total / samples as f64 * 4.0 * std::f64::consts::PI
}

fn probe_one(
    scene: &Scene,
    x_d: Vec3,
    n_d: Vec3,
    emitter: usize,
    max_bounces: usize,
    rng: &mut impl Rng,
) -> Rgb {
    let z: f64 = 1.0 - 2.0 * rng.gen::<f64>();
    let phi = std::f64::consts::TAU * rng.gen::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    let omega = Vec3::new(s * phi.cos(), s * phi.sin(), z);
    let cos_d = n_d.dot(&omega).abs();

    let eps = scene.ray_epsilon();
    let mut weight = Rgb::new(1.0, 1.0, 1.0);
    let mut origin = x_d;
    let mut dir = omega;
    for bounce in 0..=max_bounces {
        let Some(it) = scene.intersect(&Ray::new(origin, dir, eps), false) else {
            return Rgb::zeros();
        };
        if let Some(e) = scene.shapes[it.shape].emitter {
            if e == emitter && bounce >= 1 {
                let l = scene.emitted_radiance(e, it.n, -dir);
                return weight.component_mul(&l) * cos_d;
            }
            return Rgb::zeros();
        }
        if bounce == max_bounces {
            return Rgb::zeros();
        }
        match scene.material(it.shape) {
            Material::Conductor { reflectance } => {
                weight.component_mul_assign(reflectance);
                dir = reflect(dir, it.n);
            }
            Material::Dielectric { ior } => {
                let (ei, eo) =
                    if dir.dot(&it.n) < 0.0 { (1.0, *ior) } else { (*ior, 1.0) };
                let f = fresnel_dielectric(dir.dot(&it.n), ei, eo);
                if rng.gen::<f64>() < f {
                    dir = reflect(dir, it.n);
                } else {
                    match refract(dir, it.n, ei, eo) {
                        Some(t) => dir = t,
                        None => dir = reflect(dir, it.n),
                    }
                }
            }
            _ => return Rgb::zeros(),
        }
        origin = it.p;
    }
    Rgb::zeros()
}

/// Reference irradiance through specular chains for a spherical area light:
/// enumerate once against the sphere center, then re-converge the chain set
/// to uniformly sampled surface points and average the throughputs over the
/// emitter area.
pub fn area_light_reference(
    scene: &Scene,
    x_d: Vec3,
    n_d: Vec3,
    emitter: usize,
    tau_set: &[ChainType],
    opts: &OracleOptions,
    light_samples: u64,
    seed: u64,
) -> Result<Rgb, OracleError> {
    let Emitter::AreaSphere { position, radius, .. } = scene.emitters[emitter] else {
        return Ok(Rgb::zeros());
    };
    let center_cfg = Configuration {
        x_d,
        n_d,
        light: LightPoint { p: position, n: None, emitter },
    };
    let chains = enumerate_chains(scene, &center_cfg, tau_set, opts)?;
    let area = 4.0 * std::f64::consts::PI * radius * radius;

    const CHUNK: u64 = 256;
    let chunks = light_samples.div_ceil(CHUNK);
    let total: Rgb = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(&[seed, c]);
            let count = CHUNK.min(light_samples - c * CHUNK);
            let mut acc = Rgb::zeros();
            for _ in 0..count {
                let z: f64 = 1.0 - 2.0 * rng.gen::<f64>();
                let phi = std::f64::consts::TAU * rng.gen::<f64>();
                let s = (1.0 - z * z).max(0.0).sqrt();
                let n = Vec3::new(s * phi.cos(), s * phi.sin(), z);
                let cfg = Configuration {
                    x_d,
                    n_d,
                    light: LightPoint { p: position + radius * n, n: Some(n), emitter },
                };
                for chain in &chains {
                    let r = walk(scene, &cfg, chain, &opts.walk);
                    if r.status != WalkStatus::Admissible {
                        continue;
                    }
                    if let Ok(t) = throughput(scene, &cfg, &r.chain, &opts.ggt) {
                        acc += t;
                    }
                }
            }
            acc
        })
        .reduce(Rgb::zeros, |a, b| a + b);
    Ok(total / light_samples as f64 * area)
}
