//! Progressive train/render pipeline: a unidirectional path tracer with
//! emitter next-event estimation, plus one guided chain connection per
//! separator. Unidirectional suffixes that reach an emitter through one or
//! more specular vertices are dropped at separators where the chain sampler
//! ran, so the two strategies partition the path space instead of double
//! counting.

use std::time::Instant;

use crate::chain::{throughput, Configuration, GgtOptions, LightPoint};
use crate::geometry::{fresnel_dielectric, reflect, refract, Ray};
use crate::guiding::{GuidingTree, LeafDist, SubPathSample, TreeParams};
use crate::math::{basis_from_normal, luminance, stream_rng, Rgb, Vec3};
use crate::sampler::{sample_admissible, SampleStats, SamplerOptions};
use crate::scene::{Emitter, EmitterSample, Material, Scene};

use rand::Rng;
use rayon::prelude::*;

const STREAM_TRAIN: u64 = 0x7452;
const STREAM_RENDER: u64 = 0x52e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Train the guiding tree, then render with guided chain connections.
    Mpg,
    /// Chain connections from the initializer only; no training, tree
    /// ignored.
    SmsUniform,
    /// Plain path tracing with emitter next-event estimation.
    Pt,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpg" => Ok(Mode::Mpg),
            "sms-uniform" => Ok(Mode::SmsUniform),
            "pt" => Ok(Mode::Pt),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderOptions {
    pub mode: Mode,
    /// Total budget in samples per pixel; training is paid out of it.
    pub spp: u32,
    pub seed: u64,
    pub train_fraction: f64,
    /// Reweight leaf lobes by the separator BSDF before drawing.
    pub product_sampling: bool,
    /// Skip chain connections where the guiding leaf holds no real samples.
    pub selective_activation: bool,
    /// Diagnostic only: keep unidirectional specular-suffix emitter hits
    /// even where the chain sampler owns them. Double counts on purpose.
    pub keep_owned_caustics: bool,
    pub sampler: SamplerOptions,
    pub ggt: GgtOptions,
    pub tree: TreeParams,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            mode: Mode::Mpg,
            spp: 64,
            seed: 0,
            train_fraction: 0.30,
            product_sampling: false,
            selective_activation: false,
            keep_owned_caustics: false,
            sampler: SamplerOptions::default(),
            ggt: GgtOptions::default(),
            tree: TreeParams::default(),
        }
    }
}

/// Iteration plan for online training: sizes double while less than half
/// the training budget is spent at an iteration's end; the first iteration
/// to cross the halfway mark is extended to the training boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainSchedule {
    pub total_spp: u32,
    pub train_spp: u32,
    pub iterations: Vec<u32>,
}

impl TrainSchedule {
    pub fn new(total_spp: u32, fraction: f64) -> Self {
        let budget = (fraction.clamp(0.0, 1.0) * total_spp as f64).floor() as u32;
        TrainSchedule { total_spp, train_spp: budget, iterations: Self::plan(budget) }
    }

    fn plan(budget: u32) -> Vec<u32> {
        let mut out = Vec::new();
        if budget == 0 {
            return out;
        }
        let half = budget as f64 / 2.0;
        let mut used = 0u32;
        let mut next = 1u32;
        loop {
            used += next;
            if (used as f64) < half {
                out.push(next);
                next *= 2;
            } else {
                out.push(next + (budget - used));
                return out;
            }
        }
    }

    pub fn render_spp(&self) -> u32 {
        self.total_spp - self.train_spp
    }
}

/// Accumulated pixel sums; means are sums divided by sample counts.
/// Training samples are never added here.
#[derive(Clone, Debug, PartialEq)]
pub struct Film {
    width: u32,
    height: u32,
    sums: Vec<Rgb>,
    counts: Vec<u64>,
}

impl Film {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Film { width, height, sums: vec![Rgb::zeros(); n], counts: vec![0; n] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn idx(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn add(&mut self, x: u32, y: u32, value: Rgb) {
        let i = self.idx(x, y);
        self.sums[i] += value;
        self.counts[i] += 1;
    }

    pub fn mean(&self, x: u32, y: u32) -> Rgb {
        let i = self.idx(x, y);
        if self.counts[i] == 0 {
            Rgb::zeros()
        } else {
            self.sums[i] / self.counts[i] as f64
        }
    }

    /// Row-major means, pixel (0,0) top left.
    pub fn means(&self) -> Vec<Rgb> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.mean(x, y))
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct RenderStats {
    pub train_spp: u32,
    pub render_spp: u32,
    pub train_iterations: Vec<u32>,
    /// Sub-path samples recorded over all training iterations.
    pub recorded_samples: u64,
    pub train_sampler: SampleStats,
    pub render_sampler: SampleStats,
    pub separators: u64,
    pub separators_active: u64,
    /// Time spent in guiding-tree queries and distribution reweighting.
    pub guide_nanos: u64,
    /// Total time spent producing chain connections (queries + sampling +
    /// walks + throughput).
    pub chain_nanos: u64,
    pub tree_leaves: usize,
    pub tree_samples: usize,
}

impl RenderStats {
    pub fn activation_rate(&self) -> f64 {
        if self.separators == 0 {
            0.0
        } else {
            self.separators_active as f64 / self.separators as f64
        }
    }

    pub fn guide_share(&self) -> f64 {
        if self.chain_nanos == 0 {
            0.0
        } else {
            self.guide_nanos as f64 / self.chain_nanos as f64
        }
    }

    /// Key: value lines for the stats report.
    pub fn report(&self) -> String {
        let iters: Vec<String> = self.train_iterations.iter().map(|s| s.to_string()).collect();
        let walks = self.train_sampler.walks_run + self.render_sampler.walks_run;
        let chains = self.train_sampler.chains_found + self.render_sampler.chains_found;
        let trials = self.train_sampler.trial_count + self.render_sampler.trial_count;
        let truncations = self.train_sampler.truncations + self.render_sampler.truncations;
        format!(
            "train_spp: {}\nrender_spp: {}\ntrain_iterations: [{}]\nsub_path_samples: {}\n\
             tree_leaves: {}\ntree_samples: {}\nseparators: {}\nactivation_rate: {:.4}\n\
             walks_run: {}\nchains_found: {}\nrediscovery_trials: {}\ntruncations: {}\n\
             guide_time_share: {:.4}\n",
            self.train_spp,
            self.render_spp,
            iters.join(", "),
            self.recorded_samples,
            self.tree_leaves,
            self.tree_samples,
            self.separators,
            self.activation_rate(),
            walks,
            chains,
            trials,
            truncations,
            self.guide_share(),
        )
    }
}

fn shading_normal(n: Vec3, wo: Vec3) -> Vec3 {
    if n.dot(&wo) < 0.0 {
        -n
    } else {
        n
    }
}

fn phong_exponent(roughness: f64) -> f64 {
    (2.0 / (roughness * roughness).max(1e-8) - 2.0).max(0.0)
}

/// BSDF value without the cosine. `n_s` already faces the wo side.
fn bsdf_eval(mat: &Material, n_s: Vec3, wo: Vec3, wi: Vec3) -> Rgb {
    if wi.dot(&n_s) <= 0.0 {
        return Rgb::zeros();
    }
    match mat {
        Material::Diffuse { albedo } => albedo / std::f64::consts::PI,
        Material::Glossy { albedo, roughness } => {
            let e = phong_exponent(*roughness);
            let m = 2.0 * wo.dot(&n_s) * n_s - wo;
            let c = wi.dot(&m).max(0.0);
            albedo * (e + 2.0) / (2.0 * std::f64::consts::PI) * c.powf(e)
        }
        _ => Rgb::zeros(),
    }
}

/// Solid-angle density of bsdf_sample; defined on the whole sphere so MIS
/// stays consistent with lobes that leak below the horizon.
fn bsdf_pdf(mat: &Material, n_s: Vec3, wo: Vec3, wi: Vec3) -> f64 {
    match mat {
        Material::Diffuse { .. } => wi.dot(&n_s).max(0.0) / std::f64::consts::PI,
        Material::Glossy { roughness, .. } => {
            let e = phong_exponent(*roughness);
            let m = 2.0 * wo.dot(&n_s) * n_s - wo;
            let c = wi.dot(&m).max(0.0);
            (e + 1.0) / (2.0 * std::f64::consts::PI) * c.powf(e)
        }
        _ => 0.0,
    }
}

fn bsdf_sample(
    mat: &Material,
    n_s: Vec3,
    wo: Vec3,
    u1: f64,
    u2: f64,
) -> Option<(Vec3, f64, Rgb)> {
    match mat {
        Material::Diffuse { .. } => {
            let r = u1.sqrt();
            let phi = std::f64::consts::TAU * u2;
            let (t1, t2) = basis_from_normal(n_s);
            let z = (1.0 - u1).max(0.0).sqrt();
            let wi = (r * phi.cos()) * t1 + (r * phi.sin()) * t2 + z * n_s;
            let pdf = bsdf_pdf(mat, n_s, wo, wi);
            (pdf > 0.0).then(|| (wi, pdf, bsdf_eval(mat, n_s, wo, wi)))
        }
        Material::Glossy { roughness, .. } => {
            let e = phong_exponent(*roughness);
            let m = 2.0 * wo.dot(&n_s) * n_s - wo;
            let cos_t = u1.powf(1.0 / (e + 1.0)).min(1.0);
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = std::f64::consts::TAU * u2;
            let (t1, t2) = basis_from_normal(m);
            let wi = (sin_t * phi.cos()) * t1 + (sin_t * phi.sin()) * t2 + cos_t * m;
            let pdf = (e + 1.0) / (2.0 * std::f64::consts::PI) * cos_t.powf(e);
            (pdf > 0.0).then(|| (wi, pdf, bsdf_eval(mat, n_s, wo, wi)))
        }
        _ => None,
    }
}

fn emitter_area_pdf(scene: &Scene, emitter: usize) -> f64 {
    match &scene.emitters[emitter] {
        Emitter::AreaSphere { radius, .. } => {
            1.0 / (4.0 * std::f64::consts::PI * radius * radius)
        }
        Emitter::Point { .. } => 1.0,
    }
}

struct TraceCtx<'a> {
    scene: &'a Scene,
    tree: Option<&'a GuidingTree>,
    opts: &'a RenderOptions,
    /// Effective sampler options for chain connections (alpha forced to 1
    /// in the uniform mode).
    chain_sampler: Option<SamplerOptions>,
    /// Honor the selective-activation flag. Training always connects so the
    /// tree can learn; only rendering skips inactive leaves.
    selective: bool,
}

#[derive(Default)]
struct TraceStats {
    sampler: SampleStats,
    separators: u64,
    separators_active: u64,
    guide_nanos: u64,
    chain_nanos: u64,
}

impl TraceStats {
    fn merge(&mut self, other: &TraceStats) {
        self.sampler.merge(&other.sampler);
        self.separators += other.separators;
        self.separators_active += other.separators_active;
        self.guide_nanos += other.guide_nanos;
        self.chain_nanos += other.chain_nanos;
    }
}

/// Direct (chain-free) next-event estimate at a separator, balance-weighted
/// against BSDF hits for area lights.
fn direct_light(
    scene: &Scene,
    es: &EmitterSample,
    p: Vec3,
    n_s: Vec3,
    wo: Vec3,
    mat: &Material,
) -> Rgb {
    let delta = es.point - p;
    let r2 = delta.norm_squared();
    if r2 <= 0.0 {
        return Rgb::zeros();
    }
    let dist = r2.sqrt();
    let dir = delta / dist;
    let f = bsdf_eval(mat, n_s, wo, dir);
    if f == Rgb::zeros() {
        return Rgb::zeros();
    }
    let cos_d = dir.dot(&n_s);
    match &scene.emitters[es.emitter] {
        Emitter::Point { intensity, .. } => {
            if !scene.visible(p, es.point) {
                return Rgb::zeros();
            }
            f.component_mul(intensity) * (cos_d / (r2 * es.pdf_choose))
        }
        Emitter::AreaSphere { .. } => {
            let n_y = es.normal.expect("area sample has a normal");
            let l_e = scene.emitted_radiance(es.emitter, n_y, -dir);
            if l_e == Rgb::zeros() || !scene.visible(p, es.point) {
                return Rgb::zeros();
            }
            let cos_l = n_y.dot(&-dir).max(0.0);
            let p_light = es.pdf_choose * es.pdf_area;
            let p_bsdf_area = bsdf_pdf(mat, n_s, wo, dir) * cos_l / r2;
            let w = p_light / (p_light + p_bsdf_area);
            f.component_mul(&l_e) * (cos_d * cos_l / (r2 * p_light) * w)
        }
    }
}

/// One camera path. Returns the radiance estimate; when `sink` is given,
/// successful chain connections are also recorded as training samples.
fn trace(
    ctx: &TraceCtx,
    ray0: Ray,
    rng: &mut impl Rng,
    stats: &mut TraceStats,
    mut sink: Option<&mut Vec<SubPathSample>>,
) -> Rgb {
    let scene = ctx.scene;
    let eps = scene.ray_epsilon();
    let max_bounces = scene.integrator.max_path_length;
    let rr_start = scene.integrator.rr_start;
    let rr_survival = scene.integrator.rr_survival;

    let mut l = Rgb::zeros();
    let mut beta = Rgb::new(1.0, 1.0, 1.0);
    let mut ray = ray0;
    let mut bounce = 0u32;
    let mut had_separator = false;
    let mut owned = false;
    let mut specular_since = false;
    let mut prev_pos = ray0.origin;
    let mut prev_bsdf_pdf = 0.0f64;

    loop {
        let Some(it) = scene.intersect(&ray, false) else {
            break;
        };

        if let Some(e) = scene.shapes[it.shape].emitter {
            let l_e = scene.emitted_radiance(e, it.n, -ray.dir);
            let weight = if !had_separator {
                1.0
            } else if specular_since {
                if owned && !ctx.opts.keep_owned_caustics {
                    0.0
                } else {
                    1.0
                }
            } else {
                let r2 = (it.p - prev_pos).norm_squared();
                let cos_l = it.n.dot(&-ray.dir).abs();
                let p_light = emitter_area_pdf(scene, e) / scene.emitters.len() as f64;
                let p_bsdf_area = prev_bsdf_pdf * cos_l / r2.max(1e-300);
                p_bsdf_area / (p_bsdf_area + p_light)
            };
            l += beta.component_mul(&l_e) * weight;
            break;
        }

        if bounce >= max_bounces {
            break;
        }
        let mat = scene.material(it.shape).clone();
        match mat {
            Material::Conductor { reflectance } => {
                beta.component_mul_assign(&reflectance);
                specular_since |= had_separator;
                ray = Ray::new(it.p, reflect(ray.dir, it.n), eps);
            }
            Material::Dielectric { ior } => {
                let (ei, eo) =
                    if ray.dir.dot(&it.n) < 0.0 { (1.0, ior) } else { (ior, 1.0) };
                let fr = fresnel_dielectric(ray.dir.dot(&it.n), ei, eo);
                let dir = if rng.gen::<f64>() < fr {
                    reflect(ray.dir, it.n)
                } else {
                    refract(ray.dir, it.n, ei, eo).unwrap_or_else(|| reflect(ray.dir, it.n))
                };
                specular_since |= had_separator;
                ray = Ray::new(it.p, dir, eps);
            }
            Material::Diffuse { .. } | Material::Glossy { .. } => {
                let wo = -ray.dir;
                let n_s = shading_normal(it.n, wo);
                had_separator = true;
                specular_since = false;
                stats.separators += 1;

                let es = scene.sample_emitter(rng.gen(), rng.gen(), rng.gen());
                l += beta.component_mul(&direct_light(scene, &es, it.p, n_s, wo, &mat));

                owned = false;
                if let Some(base_sampler) = &ctx.chain_sampler {
                    let t_chain = Instant::now();
                    let t_guide = Instant::now();
                    let lookup = if ctx.opts.mode == Mode::Mpg {
                        ctx.tree.and_then(|t| t.lookup(it.p, es.point))
                    } else {
                        None
                    };
                    let active = if ctx.selective {
                        ctx.tree.is_some_and(|t| t.selective_active(it.p, es.point))
                    } else {
                        true
                    };
                    let product;
                    let dist: Option<&LeafDist> = if ctx.opts.product_sampling
                        && matches!(mat, Material::Glossy { .. })
                    {
                        match lookup {
                            Some(d) => {
                                product =
                                    d.reweighted(|mu| luminance(bsdf_eval(&mat, n_s, wo, mu)));
                                product.as_ref()
                            }
                            None => None,
                        }
                    } else {
                        lookup
                    };
                    stats.guide_nanos += t_guide.elapsed().as_nanos() as u64;

                    if active {
                        stats.separators_active += 1;
                        owned = true;
                        let config = Configuration {
                            x_d: it.p,
                            n_d: n_s,
                            light: LightPoint {
                                p: es.point,
                                n: es.normal,
                                emitter: es.emitter,
                            },
                        };
                        if let Some(est) = sample_admissible(
                            scene,
                            &config,
                            dist,
                            base_sampler,
                            rng,
                            &mut stats.sampler,
                        ) {
                            if let Ok(t) = throughput(scene, &config, &est.chain, &ctx.opts.ggt)
                            {
                                let t_lum = luminance(t);
                                if t_lum > 0.0 {
                                    let f = bsdf_eval(&mat, n_s, wo, est.omega_star);
                                    let scale =
                                        est.recip / (es.pdf_choose * es.pdf_area);
                                    l += beta
                                        .component_mul(&f)
                                        .component_mul(&t)
                                        * scale;
                                    if let Some(v) = sink.as_deref_mut() {
                                        v.push(SubPathSample::new(
                                            it.p,
                                            es.point,
                                            est.omega_star,
                                            t_lum,
                                            est.recip,
                                            est.chain.tau,
                                        ));
                                    }
                                }
                            }
                        }
                    }
                    stats.chain_nanos += t_chain.elapsed().as_nanos() as u64;
                }

                let Some((wi, pdf, f)) = bsdf_sample(&mat, n_s, wo, rng.gen(), rng.gen())
                else {
                    break;
                };
                let cos_i = wi.dot(&n_s).max(0.0);
                if cos_i <= 0.0 || luminance(f) == 0.0 {
                    break;
                }
                beta = beta.component_mul(&f) * (cos_i / pdf);
                prev_pos = it.p;
                prev_bsdf_pdf = pdf;
                ray = Ray::new(it.p, wi, eps);
            }
        }

        bounce += 1;
        if bounce >= rr_start {
            if rng.gen::<f64>() < rr_survival {
                beta /= rr_survival;
            } else {
                break;
            }
        }
    }
    l
}

fn chain_sampler_for(opts: &RenderOptions) -> Option<SamplerOptions> {
    match opts.mode {
        Mode::Pt => None,
        Mode::Mpg => Some(opts.sampler),
        Mode::SmsUniform => Some(SamplerOptions { alpha: 1.0, ..opts.sampler }),
    }
}

pub struct TrainOutcome {
    pub tree: GuidingTree,
    pub recorded: u64,
    pub sampler: SampleStats,
}

/// Online training: per iteration, trace camera paths, connect chains at
/// every separator, record the successes; the tree is rebuilt from each
/// iteration's samples alone and the last build is returned. Samples never
/// touch the film.
pub fn train(scene: &Scene, schedule: &TrainSchedule, opts: &RenderOptions) -> TrainOutcome {
    let [w, h] = scene.camera.resolution;
    let pixels = (w * h) as u64;
    let mut tree: Option<GuidingTree> = None;
    let mut recorded = 0u64;
    let mut sampler_stats = SampleStats::default();
    let mut sample_base = 0u64;

    for &size in &schedule.iterations {
        let ctx = TraceCtx {
            scene,
            tree: tree.as_ref(),
            opts,
            chain_sampler: chain_sampler_for(opts),
            selective: false,
        };
        let per_pixel: Vec<(Vec<SubPathSample>, TraceStats)> = (0..pixels)
            .into_par_iter()
            .map(|pix| {
                let (px, py) = ((pix % w as u64) as u32, (pix / w as u64) as u32);
                let mut sink = Vec::new();
                let mut stats = TraceStats::default();
                for s in 0..size as u64 {
                    let mut rng =
                        stream_rng(&[opts.seed, STREAM_TRAIN, pix, sample_base + s]);
                    let ray = scene.camera.generate_ray(
                        px,
                        py,
                        rng.gen(),
                        rng.gen(),
                        scene.ray_epsilon(),
                    );
                    let _ = trace(&ctx, ray, &mut rng, &mut stats, Some(&mut sink));
                }
                (sink, stats)
            })
            .collect();

        let mut samples = Vec::new();
        for (sink, stats) in per_pixel {
            samples.extend(sink);
            sampler_stats.merge(&stats.sampler);
        }
        recorded += samples.len() as u64;
        tree = Some(GuidingTree::build(&scene.bounds(), samples, &opts.tree));
        sample_base += size as u64;
    }

    let tree = tree
        .unwrap_or_else(|| GuidingTree::build(&scene.bounds(), Vec::new(), &opts.tree));
    TrainOutcome { tree, recorded, sampler: sampler_stats }
}

/// Render `spp` samples per pixel against a (possibly absent) guiding tree.
/// Per-pixel RNG streams keep the film bitwise independent of the worker
/// count.
pub fn render(
    scene: &Scene,
    tree: Option<&GuidingTree>,
    spp: u32,
    opts: &RenderOptions,
) -> (Film, RenderStats) {
    let [w, h] = scene.camera.resolution;
    let pixels = (w * h) as u64;
    let ctx = TraceCtx {
        scene,
        tree,
        opts,
        chain_sampler: chain_sampler_for(opts),
        selective: opts.selective_activation,
    };

    let per_pixel: Vec<(Rgb, TraceStats)> = (0..pixels)
        .into_par_iter()
        .map(|pix| {
            let (px, py) = ((pix % w as u64) as u32, (pix / w as u64) as u32);
            let mut sum = Rgb::zeros();
            let mut stats = TraceStats::default();
            for s in 0..spp as u64 {
                let mut rng = stream_rng(&[opts.seed, STREAM_RENDER, pix, s]);
                let ray = scene.camera.generate_ray(
                    px,
                    py,
                    rng.gen(),
                    rng.gen(),
                    scene.ray_epsilon(),
                );
                sum += trace(&ctx, ray, &mut rng, &mut stats, None);
            }
            (sum, stats)
        })
        .collect();

    let mut film = Film::new(w, h);
    let mut stats = RenderStats { render_spp: spp, ..RenderStats::default() };
    let mut merged = TraceStats::default();
    for (pix, (sum, st)) in per_pixel.into_iter().enumerate() {
        film.sums[pix] = sum;
        film.counts[pix] = spp as u64;
        merged.merge(&st);
    }
    stats.render_sampler = merged.sampler;
    stats.separators = merged.separators;
    stats.separators_active = merged.separators_active;
    stats.guide_nanos = merged.guide_nanos;
    stats.chain_nanos = merged.chain_nanos;
    if let Some(t) = tree {
        stats.tree_leaves = t.leaves().count();
        stats.tree_samples = t.sample_count();
    }
    (film, stats)
}

/// Full pipeline: train when the mode calls for it, render with the
/// remaining budget, and merge the statistics.
pub fn run(scene: &Scene, opts: &RenderOptions) -> (Film, RenderStats) {
    let schedule = match opts.mode {
        Mode::Mpg => TrainSchedule::new(opts.spp, opts.train_fraction),
        _ => TrainSchedule { total_spp: opts.spp, train_spp: 0, iterations: Vec::new() },
    };
    let (tree, outcome) = if schedule.train_spp > 0 {
        let outcome = train(scene, &schedule, opts);
        (Some(outcome.tree), Some((outcome.recorded, outcome.sampler)))
    } else {
        (None, None)
    };
    let (film, mut stats) = render(scene, tree.as_ref(), schedule.render_spp(), opts);
    stats.train_spp = schedule.train_spp;
    stats.train_iterations = schedule.iterations;
    if let Some((recorded, sampler)) = outcome {
        stats.recorded_samples = recorded;
        stats.train_sampler = sampler;
    }
    (film, stats)
}
