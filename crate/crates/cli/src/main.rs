//! Renderer front-end: loads a TOML scene, runs the selected integrator
//! mode (or the chain-enumeration probe), writes a PFM image plus a
//! key: value stats report, and keeps exit codes scriptable: 0 done,
//! 1 bad input or unwritable output, 2 broken internal invariant.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use mpg::chain::{ChainType, Configuration, LightPoint};
use mpg::geometry::{reflect, refract, Ray};
use mpg::integrator::{run, Mode, RenderOptions, RenderStats};
use mpg::math::{luminance, Rgb, Vec3};
use mpg::oracle::{basin_map, enumerate_admissible, BasinMap, OracleOptions};
use mpg::pfm::{save_png, write_pfm};
use mpg::scene::{Emitter, Material, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CliMode {
    /// Guided chain connections trained online.
    Mpg,
    /// Chain connections from the uniform initializer only.
    SmsUniform,
    /// Plain path tracing with emitter sampling.
    Pt,
    /// No rendering: enumerate admissible chains for the center-ray
    /// separator and write a convergence basin map.
    OracleProbe,
}

#[derive(Parser, Debug)]
#[command(name = "mpg", version, about = "Unbiased renderer with guided specular-chain sampling")]
struct Args {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,

    /// Output image path (PFM). A `<stem>.stats.txt` report lands next to it.
    #[arg(short = 'o', long = "out")]
    out: PathBuf,

    #[arg(long, value_enum, default_value_t = CliMode::Mpg)]
    mode: CliMode,

    /// Total samples per pixel; training is paid out of this budget.
    /// Defaults to the scene's integrator block.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    spp: Option<u32>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads; 0 means one per core. MPG_THREADS overrides the
    /// default when the flag is absent.
    #[arg(long)]
    threads: Option<usize>,

    /// Fraction of the budget spent training, in [0, 1). Defaults to the
    /// scene's integrator block.
    #[arg(long)]
    train_fraction: Option<f64>,

    /// Reweight guided lobes by the separator BSDF (glossy separators).
    #[arg(long)]
    product_sampling: bool,

    /// Skip chain connections where the guiding tree learned nothing.
    #[arg(long)]
    selective_activation: bool,

    /// Also write a tone-mapped PNG next to the PFM.
    #[arg(long)]
    png: bool,
}

fn main() {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            std::process::exit(0);
        }
    };
    let code = match std::panic::catch_unwind(|| dispatch(&args)) {
        Ok(code) => code,
        Err(_) => {
            eprintln!("internal invariant violated; see panic message above");
            2
        }
    };
    std::process::exit(code);
}

fn fail(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    1
}

fn dispatch(args: &Args) -> i32 {
    let scene = match Scene::load(&args.scene) {
        Ok(s) => s,
        Err(e) => return fail(format!("scene `{}`: {e}", args.scene.display())),
    };

    let train_fraction = args.train_fraction.unwrap_or(scene.integrator.train_fraction);
    if !(0.0..1.0).contains(&train_fraction) {
        return fail(format!("train fraction {train_fraction} outside [0, 1)"));
    }
    let spp = args.spp.unwrap_or(scene.integrator.spp).max(1);

    let threads = args
        .threads
        .or_else(|| std::env::var("MPG_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => return fail(format!("thread pool: {e}")),
    };

    match args.mode {
        CliMode::OracleProbe => probe(args, &scene, &pool),
        _ => render(args, &scene, &pool, spp, train_fraction),
    }
}

fn render(
    args: &Args,
    scene: &Scene,
    pool: &rayon::ThreadPool,
    spp: u32,
    train_fraction: f64,
) -> i32 {
    let opts = RenderOptions {
        mode: match args.mode {
            CliMode::Mpg => Mode::Mpg,
            CliMode::SmsUniform => Mode::SmsUniform,
            CliMode::Pt => Mode::Pt,
            CliMode::OracleProbe => unreachable!(),
        },
        spp,
        seed: args.seed,
        train_fraction,
        product_sampling: args.product_sampling,
        selective_activation: args.selective_activation,
        ..RenderOptions::default()
    };

    let start = Instant::now();
    let (film, stats) = pool.install(|| run(scene, &opts));
    let seconds = start.elapsed().as_secs_f64();

    if let Err(e) = mpg::pfm::save_pfm(&args.out, &film) {
        return fail(format!("writing `{}`: {e}", args.out.display()));
    }
    if args.png {
        let png_path = args.out.with_extension("png");
        if let Err(e) = save_png(&png_path, &film) {
            return fail(format!("writing `{}`: {e}", png_path.display()));
        }
    }
    let report = render_report(args, scene, &stats, seconds);
    if let Err(e) = std::fs::write(stats_path(&args.out), report) {
        return fail(format!("writing stats: {e}"));
    }
    0
}

fn stats_path(out: &Path) -> PathBuf {
    out.with_extension("stats.txt")
}

fn render_report(args: &Args, scene: &Scene, stats: &RenderStats, seconds: f64) -> String {
    let [w, h] = scene.camera.resolution;
    format!(
        "mode: {:?}\nscene: {}\nresolution: {}x{}\nseed: {}\nwall_seconds: {:.3}\n{}",
        args.mode,
        args.scene.display(),
        w,
        h,
        args.seed,
        seconds,
        stats.report(),
    )
}

/// Marches the center camera ray through specular hits (refraction
/// preferred, reflection on total internal reflection) to the first
/// diffuse or glossy surface.
fn probe_separator(scene: &Scene) -> Option<(Vec3, Vec3)> {
    let [w, h] = scene.camera.resolution;
    let eps = scene.ray_epsilon();
    let mut ray = scene.camera.generate_ray(w / 2, h / 2, 0.5, 0.5, eps);
    for _ in 0..32 {
        let it = scene.intersect(&ray, false)?;
        if scene.shapes[it.shape].emitter.is_some() {
            return None;
        }
        match scene.material(it.shape) {
            Material::Diffuse { .. } | Material::Glossy { .. } => {
                let n_s = if it.n.dot(&ray.dir) > 0.0 { -it.n } else { it.n };
                return Some((it.p, n_s));
            }
            Material::Conductor { .. } => {
                ray = Ray::new(it.p, reflect(ray.dir, it.n), eps);
            }
            Material::Dielectric { ior } => {
                let (ei, eo) =
                    if ray.dir.dot(&it.n) < 0.0 { (1.0, *ior) } else { (*ior, 1.0) };
                let dir = refract(ray.dir, it.n, ei, eo)
                    .unwrap_or_else(|| reflect(ray.dir, it.n));
                ray = Ray::new(it.p, dir, eps);
            }
        }
    }
    None
}

fn probe_light(scene: &Scene, x_d: Vec3) -> LightPoint {
    match &scene.emitters[0] {
        Emitter::Point { position, .. } => LightPoint { p: *position, n: None, emitter: 0 },
        Emitter::AreaSphere { position, radius, .. } => {
            let n = (x_d - position).normalize();
            LightPoint { p: position + *radius * n, n: Some(n), emitter: 0 }
        }
    }
}

fn probe(args: &Args, scene: &Scene, pool: &rayon::ThreadPool) -> i32 {
    let Some((x_d, n_d)) = probe_separator(scene) else {
        return fail("center camera ray never reaches a diffuse or glossy surface");
    };
    let Some(first_specular) = scene.shapes.iter().position(|s| {
        matches!(
            scene.materials[s.material],
            Material::Dielectric { .. } | Material::Conductor { .. }
        )
    }) else {
        return fail("scene has no specular shapes to probe");
    };
    let config = Configuration { x_d, n_d, light: probe_light(scene, x_d) };

    // Every scattering-type string up to three vertices.
    let mut tau_set = Vec::new();
    for len in 1..=3u16 {
        for bits in 0..(1u16 << len) {
            let s: String = (0..len)
                .map(|i| if bits >> i & 1 == 1 { 'T' } else { 'R' })
                .collect();
            tau_set.push(ChainType::parse(&s).expect("generated tau is well formed"));
        }
    }

    let opts = OracleOptions { resolution: 64, ..OracleOptions::default() };
    let found = match pool.install(|| enumerate_admissible(scene, &config, &tau_set, &opts)) {
        Ok(v) => v,
        Err(e) => {
            // The enumeration's own stability guarantees failed; this is
            // not a user error.
            eprintln!("error: chain enumeration: {e}");
            return 2;
        }
    };

    let (map_shape, map_tau) = found
        .iter()
        .max_by(|a, b| luminance(a.1).total_cmp(&luminance(b.1)))
        .map(|(c, _)| (c.vertices[0].shape, c.tau))
        .unwrap_or((first_specular, ChainType::parse("R").unwrap()));
    let chains: Vec<_> = found.iter().map(|(c, _)| c.clone()).collect();
    let map = pool.install(|| {
        basin_map(scene, &config, &chains, map_shape, map_tau, opts.resolution, &opts.walk)
    });

    if let Err(e) = write_basin_pfm(&args.out, &map) {
        return fail(format!("writing `{}`: {e}", args.out.display()));
    }

    let mut report = format!(
        "mode: OracleProbe\nscene: {}\nseparator: [{:.6}, {:.6}, {:.6}]\n\
         light_point: [{:.6}, {:.6}, {:.6}]\ntau_candidates: {}\nchains_found: {}\n\
         map_shape: {}\nmap_tau: {}\nmap_resolution: {}\n",
        args.scene.display(),
        x_d.x,
        x_d.y,
        x_d.z,
        config.light.p.x,
        config.light.p.y,
        config.light.p.z,
        tau_set.len(),
        found.len(),
        map_shape,
        map_tau,
        opts.resolution,
    );
    for (i, (c, t)) in found.iter().enumerate() {
        let head = c.vertices[0].p;
        report.push_str(&format!(
            "chain_{i}: tau={} vertices={} luminance={:.6e} first=[{:.4}, {:.4}, {:.4}]\n",
            c.tau,
            c.vertices.len(),
            luminance(*t),
            head.x,
            head.y,
            head.z,
        ));
    }
    if let Err(e) = std::fs::write(stats_path(&args.out), report) {
        return fail(format!("writing stats: {e}"));
    }
    0
}

/// Basin labels as a grayscale float image: cell (i, j) lands at row i,
/// column j; unlabeled cells are 0, basin k is k+1.
fn write_basin_pfm(path: &Path, map: &BasinMap) -> std::io::Result<()> {
    let res = map.resolution;
    let mut data = vec![Rgb::zeros(); res * res];
    for i in 0..res {
        for j in 0..res {
            if let Some(k) = map.label(i, j) {
                let v = (k + 1) as f64;
                data[i * res + j] = Rgb::new(v, v, v);
            }
        }
    }
    let out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_pfm(out, res as u32, res as u32, &data)
}
