use mpg::chain::{self, Configuration, GgtOptions, LightPoint};
use mpg::integrator::{self, RenderOptions, TrainSchedule};
use mpg::math::{luminance, stream_rng, Rgb, Vec3};
use mpg::sampler::{self, SampleStats, SamplerOptions};
use rand::Rng as _;
use mpg::scene::{Camera, Emitter, IntegratorDefaults, Material, Scene};
use mpg::geometry::{Shape, ShapeKind};

fn light_center() -> Vec3 {
    Vec3::new(0.0, 0.0, 4.0)
}

fn glossy_two_spheres(res: u32, rough: f64, r_mis: f64, mis_c: Vec3) -> Scene {
    let materials = vec![
        Material::Glossy { albedo: Rgb::new(0.7, 0.7, 0.7), roughness: rough },
        Material::Conductor { reflectance: Rgb::new(0.9, 0.9, 0.9) },
        Material::Diffuse { albedo: Rgb::new(0.0, 0.0, 0.0) },
    ];
    let shapes = vec![
        Shape {
            kind: ShapeKind::Quad {
                origin: Vec3::zeros(),
                edge_u: Vec3::new(1.5, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 1.5, 0.0),
            },
            material: 0,
            emitter: None,
        },
        Shape {
            kind: ShapeKind::Sphere { center: Vec3::new(0.0, 1.75, 1.06), radius: 0.5 },
            material: 1,
            emitter: None,
        },
        Shape { kind: ShapeKind::Sphere { center: mis_c, radius: r_mis }, material: 1, emitter: None },
        Shape {
            kind: ShapeKind::Sphere { center: light_center(), radius: 0.15 },
            material: 2,
            emitter: Some(0),
        },
    ];
    let emitters = vec![Emitter::AreaSphere {
        position: light_center(),
        radius: 0.15,
        radiance: Rgb::new(60.0, 60.0, 60.0),
        shape: 3,
    }];
    let camera = Camera {
        position: Vec3::new(0.0, -3.5, 5.0),
        look_at: Vec3::new(0.0, 0.3, 0.0),
        up: Vec3::new(0.0, 0.0, 1.0),
        fov_degrees: 40.0,
        resolution: [res, res],
    };
    Scene::assemble(shapes, materials, emitters, camera, IntegratorDefaults::default()).unwrap()
}

fn main() {
    let scene = glossy_two_spheres(32, 0.3, 0.9, Vec3::new(0.0, -2.6, 1.1));
    let opts = RenderOptions { spp: 64, seed: 21, ..RenderOptions::default() };
    let out = integrator::train(&scene, &TrainSchedule::new(64, 0.30), &opts);
    println!("recorded {} leaves {}", out.recorded, out.tree.leaves().count());

    // Probe three floor points across the y range, light point fixed at the
    // sphere nadir (representative emitter sample).
    let light_p = Vec3::new(0.0, 0.0, 3.85);
    let n_l = Vec3::new(0.0, 0.0, -1.0);
    for y0 in [-0.8f64, 0.0, 0.8] {
        let x_d = Vec3::new(0.0, y0, 0.0);
        let cfg = Configuration {
            x_d,
            n_d: Vec3::new(0.0, 0.0, 1.0),
            light: LightPoint { p: light_p, n: Some(n_l), emitter: 0 },
        };
        let Some(dist) = out.tree.lookup(x_d, light_p) else {
            println!("y0 {y0}: no leaf");
            continue;
        };
        // wo toward the camera from this point, floor normal up.
        let wo = (scene.camera.position - x_d).normalize();
        let n_s = Vec3::new(0.0, 0.0, 1.0);
        let m = 2.0 * wo.dot(&n_s) * n_s - wo;
        println!("y0 {y0}: mirror dir {:?}", [m.x, m.y, m.z]);
        for c in dist.classes() {
            let (mut mass_al, mut mass_mis) = (0.0, 0.0);
            for &(mu, _k, w) in c.lobes() {
                if mu.y > 0.0 {
                    mass_al += w;
                } else {
                    mass_mis += w;
                }
            }
            println!(
                "  class {:?} weight {:.3e}: lobe mass aligned {:.3e} mis {:.3e}",
                c.tau(),
                c.weight(),
                mass_al,
                mass_mis
            );
        }
        // Empirical selection probabilities: aligned = found chain whose
        // first vertex is on shape 1.
        let rw = dist.reweighted(|mu| luminance(integrator_bsdf(&scene, n_s, wo, mu)));
        if let Some(ref r) = rw {
            for c in r.classes() {
                let (mut mass_al, mut mass_mis) = (0.0, 0.0);
                for &(mu, _k, w) in c.lobes() {
                    if mu.y > 0.0 {
                        mass_al += w;
                    } else {
                        mass_mis += w;
                    }
                }
                println!(
                    "  RW class {:?} weight {:.3e}: lobe mass aligned {:.3e} mis {:.3e}",
                    c.tau(),
                    c.weight(),
                    mass_al,
                    mass_mis
                );
            }
        } else {
            println!("  RW: all mass vanished");
        }
        for (label, d) in [("off", Some(dist)), ("on", rw.as_ref())] {
            let sopts = SamplerOptions::default();
            let mut rng = stream_rng(&[555, y0.to_bits()]);
            let (mut nones, mut l_ded, mut l_adm_al, mut l_adm_mis) = (0u64, 0u64, 0u64, 0u64);
            let (mut i_ded, mut i_adm_al, mut i_adm_mis) = (0u64, 0u64, 0u64);
            for _ in 0..8000 {
                let Some(seed) = sampler::sample_seed(&scene, &cfg, d, &sopts, &mut rng) else {
                    nones += 1;
                    continue;
                };
                if seed.learned_branch {
                    l_ded += 1;
                } else {
                    i_ded += 1;
                }
                let r = mpg::solver::walk(&scene, &cfg, &seed.chain, &sopts.walk);
                if r.status == mpg::solver::WalkStatus::Admissible {
                    let al = r.chain.vertices[0].shape == 1;
                    if seed.learned_branch {
                        if al { l_adm_al += 1 } else { l_adm_mis += 1 }
                    } else if al {
                        i_adm_al += 1
                    } else {
                        i_adm_mis += 1
                    }
                }
            }
            println!(
                "  {label} seeds: none {nones} learned ded {l_ded} -> adm al {l_adm_al} mis {l_adm_mis}; init ded {i_ded} -> adm al {i_adm_al} mis {i_adm_mis}"
            );
        }
        for (label, d) in [("off2", Some(dist)), ("on2", rw.as_ref())] {
            let sopts = SamplerOptions::default();
            let mut stats = SampleStats::default();
            let mut rng = stream_rng(&[777, y0.to_bits()]);
            let (mut n_al, mut n_mis, mut n_tot, mut k_al, mut k_mis) = (0u64, 0u64, 0u64, 0.0, 0.0);
            let (mut g_al, mut g_mis) = (0.0f64, 0.0f64);
            for _ in 0..4000 {
                n_tot += 1;
                if let Some(est) =
                    sampler::sample_admissible(&scene, &cfg, d, &sopts, &mut rng, &mut stats)
                {
                    let t = chain::throughput(&scene, &cfg, &est.chain, &GgtOptions::default())
                        .unwrap_or_else(|_| Rgb::zeros());
                    let f = luminance(integrator_bsdf(&scene, n_s, wo, est.omega_star));
                    let g = f * luminance(t);
                    if est.chain.vertices[0].shape == 1 {
                        n_al += 1;
                        k_al += est.k as f64;
                        g_al += g * est.recip;
                    } else {
                        n_mis += 1;
                        k_mis += est.k as f64;
                        g_mis += g * est.recip;
                    }
                }
            }
            println!(
                "  {label}: found al {} mis {} of {}  mean k al {:.1} mis {:.1}  contrib al {:.3e} mis {:.3e}",
                n_al,
                n_mis,
                n_tot,
                k_al / n_al.max(1) as f64,
                k_mis / n_mis.max(1) as f64,
                g_al / n_tot as f64,
                g_mis / n_tot as f64
            );
        }
    }
}

// Same shape as the integrator's glossy lobe: normalized Phong around the
// mirror direction.
fn integrator_bsdf(scene: &Scene, n_s: Vec3, wo: Vec3, wi: Vec3) -> Rgb {
    let Material::Glossy { albedo, roughness } = scene.materials[0] else { unreachable!() };
    if wi.dot(&n_s) <= 0.0 {
        return Rgb::zeros();
    }
    let e = 2.0 / (roughness * roughness) - 2.0;
    let m = 2.0 * wo.dot(&n_s) * n_s - wo;
    let c = wi.dot(&m).max(0.0);
    albedo * ((e + 2.0) / (2.0 * std::f64::consts::PI) * c.powf(e))
}
