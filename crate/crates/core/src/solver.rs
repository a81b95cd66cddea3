//! Damped Newton walk over a chain's intrinsic surface coordinates.
//!
//! The unknowns are the 2n parameters of the n chain vertices; the residual
//! stacks the per-vertex tangent-projected half-vectors. Because vertices
//! move in their shapes' own parameterizations they stay on the surfaces by
//! construction, so no reprojection step exists. The Jacobian is assembled
//! analytically from parametric derivatives and tangent-frame derivatives;
//! a finite-difference Jacobian is kept alongside as a verification mode.

use crate::chain::{branches_valid, vertex_geom, Configuration, ScatterKind, SpecularChain};
use crate::math::Vec3;
use crate::scene::Scene;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Matrix3x2};

#[derive(Clone, Copy, Debug)]
pub struct WalkOptions {
    /// Admissibility threshold on the residual infinity norm.
    pub tol: f64,
    pub max_iterations: u32,
    /// Initial step scale and its growth after an accepted step.
    pub beta0: f64,
    pub growth: f64,
    /// Per-vertex step cap, as a fraction of the vertex shape's
    /// characteristic parameter extent.
    pub step_clamp: f64,
    /// Walk fails once damping shrinks below this.
    pub beta_min: f64,
}

impl Default for WalkOptions {
    fn default() -> Self {
        WalkOptions {
            tol: 1e-6,
            max_iterations: 20,
            beta0: 1.0,
            growth: 2.0,
            step_clamp: 0.5,
            beta_min: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkStatus {
    Admissible,
    NotConverged,
    /// A vertex left its quad's extents; the sought solution is not on the
    /// seeded shapes.
    Escaped,
}

#[derive(Clone, Debug)]
pub struct WalkResult {
    pub status: WalkStatus,
    pub chain: SpecularChain,
    /// Accepted Newton steps.
    pub iterations: u32,
}

/// Per-vertex differential geometry refreshed each iteration.
struct VertexState {
    p: Vec3,
    t_u: Vec3,
    t_v: Vec3,
    dpu: Vec3,
    dpv: Vec3,
    frame_derivs: [Vec3; 4],
}

fn refresh(scene: &Scene, chain: &SpecularChain) -> Vec<VertexState> {
    chain
        .vertices
        .iter()
        .map(|v| {
            let shape = &scene.shapes[v.shape];
            let (t_u, t_v, _) = shape.frame_at(v.uv);
            let (dpu, dpv) = shape.param_derivs(v.uv);
            VertexState {
                p: shape.point_at(v.uv),
                t_u,
                t_v,
                dpu,
                dpv,
                frame_derivs: shape.frame_derivs(v.uv),
            }
        })
        .collect()
}

/// Half-vector context per vertex: h, |g| and the direction-pair data.
struct HalfVector {
    h: Vec3,
    g_norm: f64,
    wi: Vec3,
    wo: Vec3,
    r_i: f64,
    r_o: f64,
    /// Coefficients on (dwi, dwo) in dg.
    a: f64,
    b: f64,
}

fn half_vectors(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
    states: &[VertexState],
) -> Option<Vec<HalfVector>> {
    let n = chain.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = &chain.vertices[i];
        let it = scene.shapes[v.shape].interaction_at(v.uv, v.shape);
        let prev = if i == 0 { config.x_d } else { states[i - 1].p };
        let next = if i + 1 == n { config.light.p } else { states[i + 1].p };
        let g = vertex_geom(scene, &it, v.shape, prev, next)?;
        let (a, b, raw) = match chain.tau.kind(i) {
            ScatterKind::Reflect => (1.0, 1.0, g.wi + g.wo),
            ScatterKind::Refract => {
                (-g.eta_i, -g.eta_o, -(g.eta_i * g.wi + g.eta_o * g.wo))
            }
        };
        let g_norm = raw.norm();
        if g_norm < 1e-12 {
            return None;
        }
        out.push(HalfVector {
            h: raw / g_norm,
            g_norm,
            wi: g.wi,
            wo: g.wo,
            r_i: g.r_i,
            r_o: g.r_o,
            a,
            b,
        });
    }
    Some(out)
}

fn residual_vector(states: &[VertexState], hvs: &[HalfVector]) -> DVector<f64> {
    let n = states.len();
    let mut r = DVector::zeros(2 * n);
    for i in 0..n {
        r[2 * i] = hvs[i].h.dot(&states[i].t_u);
        r[2 * i + 1] = hvs[i].h.dot(&states[i].t_v);
    }
    r
}

fn proj(w: Vec3) -> Matrix3<f64> {
    Matrix3::identity() - w * w.transpose()
}

/// Analytic Jacobian of the stacked residual w.r.t. the flattened intrinsic
/// parameters. Block-tridiagonal: constraint i sees vertices i-1, i, i+1.
fn jacobian(
    config: &Configuration,
    chain: &SpecularChain,
    states: &[VertexState],
    hvs: &[HalfVector],
) -> DMatrix<f64> {
    let n = chain.len();
    let _ = config;
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let hv = &hvs[i];
        let s = &states[i];
        let t = Matrix2x3::from_rows(&[s.t_u.transpose(), s.t_v.transpose()]);
        let ph = proj(hv.h) / hv.g_norm;
        let dwi_dxi = -proj(hv.wi) / hv.r_i;
        let dwo_dxi = -proj(hv.wo) / hv.r_o;

        let mut put = |j: usize, dh_dx: Matrix3<f64>, frame_term: Option<Matrix2<f64>>| {
            let sj = &states[j];
            let p = Matrix3x2::from_columns(&[sj.dpu, sj.dpv]);
            let mut block = t * dh_dx * p;
            if let Some(ft) = frame_term {
                block += ft;
            }
            for r in 0..2 {
                for c in 0..2 {
                    jac[(2 * i + r, 2 * j + c)] += block[(r, c)];
                }
            }
        };

        // Own vertex: direction terms plus the rotating tangent frame.
        let [dtu_du, dtu_dv, dtv_du, dtv_dv] = s.frame_derivs;
        let frame = Matrix2::new(
            hv.h.dot(&dtu_du),
            hv.h.dot(&dtu_dv),
            hv.h.dot(&dtv_du),
            hv.h.dot(&dtv_dv),
        );
        put(i, ph * (hv.a * dwi_dxi + hv.b * dwo_dxi), Some(frame));
        if i > 0 {
            put(i - 1, ph * (hv.a * (proj(hv.wi) / hv.r_i)), None);
        }
        if i + 1 < n {
            put(i + 1, ph * (hv.b * (proj(hv.wo) / hv.r_o)), None);
        }
    }
    jac
}

/// Central-difference Jacobian; verification twin of `jacobian`.
pub fn fd_jacobian(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
    h: f64,
) -> Option<DMatrix<f64>> {
    let n = chain.len();
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    let eval = |c: &SpecularChain| -> Option<DVector<f64>> {
        let states = refresh(scene, c);
        let hvs = half_vectors(scene, config, c, &states)?;
        Some(residual_vector(&states, &hvs))
    };
    for j in 0..n {
        for k in 0..2 {
            let mut cp = chain.clone();
            cp.vertices[j].uv[k] += h;
            cp.refresh_positions(scene);
            let rp = eval(&cp)?;
            let mut cm = chain.clone();
            cm.vertices[j].uv[k] -= h;
            cm.refresh_positions(scene);
            let rm = eval(&cm)?;
            let col = (rp - rm) / (2.0 * h);
            for r in 0..2 * n {
                jac[(r, 2 * j + k)] = col[r];
            }
        }
    }
    Some(jac)
}

pub fn analytic_jacobian(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
) -> Option<DMatrix<f64>> {
    let states = refresh(scene, chain);
    let hvs = half_vectors(scene, config, chain, &states)?;
    Some(jacobian(config, chain, &states, &hvs))
}

/// One undamped Newton step (with the usual per-vertex clamp); returns the
/// stepped chain and its residual infinity norm. Exposed for convergence
/// diagnostics.
pub fn newton_step(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
    opts: &WalkOptions,
) -> Option<(SpecularChain, f64)> {
    let states = refresh(scene, chain);
    let hvs = half_vectors(scene, config, chain, &states)?;
    let res = residual_vector(&states, &hvs);
    let jac = jacobian(config, chain, &states, &hvs);
    let delta = jac.lu().solve(&(-&res))?;
    let stepped = apply_step(scene, chain, &delta, 1.0, opts)?;
    let s2 = refresh(scene, &stepped);
    let h2 = half_vectors(scene, config, &stepped, &s2)?;
    let r2 = residual_vector(&s2, &h2);
    Some((stepped, r2.amax()))
}

/// Applies w + beta*delta, canonicalizing sphere angles. None when a quad
/// vertex leaves its extents.
fn apply_step(
    scene: &Scene,
    chain: &SpecularChain,
    delta: &DVector<f64>,
    beta: f64,
    opts: &WalkOptions,
) -> Option<SpecularChain> {
    // Global rescale preserving the Newton direction when any per-vertex
    // step exceeds its shape's clamp.
    let mut scale = 1.0f64;
    for (i, v) in chain.vertices.iter().enumerate() {
        let s = (delta[2 * i].powi(2) + delta[2 * i + 1].powi(2)).sqrt();
        let limit = opts.step_clamp * scene.shapes[v.shape].param_extent();
        if s > limit {
            scale = scale.min(limit / s);
        }
    }

    let mut out = chain.clone();
    for (i, v) in out.vertices.iter_mut().enumerate() {
        let uv = [
            v.uv[0] + beta * scale * delta[2 * i],
            v.uv[1] + beta * scale * delta[2 * i + 1],
        ];
        let shape = &scene.shapes[v.shape];
        let uv = shape.canonical_uv(uv);
        if !shape.uv_in_domain(uv) {
            return None;
        }
        v.uv = uv;
        v.p = shape.point_at(uv);
    }
    Some(out)
}

/// Damped Newton iteration from the seed chain. A step is accepted only if
/// it reduces the residual norm; otherwise the damping halves. Termination:
/// residual below tol (Admissible), quad-domain exit (Escaped), iteration or
/// damping exhaustion (NotConverged).
pub fn walk(
    scene: &Scene,
    config: &Configuration,
    seed: &SpecularChain,
    opts: &WalkOptions,
) -> WalkResult {
    let mut chain = seed.clone();
    for v in &mut chain.vertices {
        let shape = &scene.shapes[v.shape];
        v.uv = shape.canonical_uv(v.uv);
        if !shape.uv_in_domain(v.uv) {
            return WalkResult { status: WalkStatus::Escaped, chain, iterations: 0 };
        }
        v.p = shape.point_at(v.uv);
    }
    if chain.is_empty() {
        return WalkResult { status: WalkStatus::Admissible, chain, iterations: 0 };
    }

    let mut beta = opts.beta0;
    let mut iterations = 0u32;
    let (mut states, mut hvs) = {
        let s = refresh(scene, &chain);
        match half_vectors(scene, config, &chain, &s) {
            Some(h) => (s, h),
            None => return WalkResult { status: WalkStatus::NotConverged, chain, iterations },
        }
    };
    let mut res = residual_vector(&states, &hvs);

    loop {
        if res.amax() < opts.tol {
            // The constraint's zero set contains mislabeled duplicates of
            // the other event kind's solutions (a same-side "transmission"
            // picks up equal indices and degenerates to the mirror
            // equation). Converging there is not success.
            let status = if branches_valid(scene, config, &chain) {
                WalkStatus::Admissible
            } else {
                WalkStatus::NotConverged
            };
            return WalkResult { status, chain, iterations };
        }
        if iterations >= opts.max_iterations {
            return WalkResult { status: WalkStatus::NotConverged, chain, iterations };
        }
        let jac = jacobian(config, &chain, &states, &hvs);
        let delta = match jac.lu().solve(&(-&res)) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => return WalkResult { status: WalkStatus::NotConverged, chain, iterations },
        };

        let res_norm = res.norm();
        loop {
            match apply_step(scene, &chain, &delta, beta, opts) {
                None => {
                    // The Newton direction leads off the shape.
                    return WalkResult { status: WalkStatus::Escaped, chain, iterations };
                }
                Some(cand) => {
                    let s = refresh(scene, &cand);
                    let improved = half_vectors(scene, config, &cand, &s).map(|h| {
                        let r = residual_vector(&s, &h);
                        (r.norm() < res_norm, r, h)
                    });
                    if let Some((true, r, h)) = improved {
                        chain = cand;
                        states = s;
                        hvs = h;
                        res = r;
                        beta = (beta * opts.growth).min(opts.beta0.max(1.0));
                        iterations += 1;
                        break;
                    }
                }
            }
            beta *= 0.5;
            if beta < opts.beta_min {
                return WalkResult { status: WalkStatus::NotConverged, chain, iterations };
            }
        }
    }
}

/// Chain identity test: same types, same shapes, every vertex within
/// 1e-4 * scene scale.
pub fn same_chain(scene: &Scene, a: &SpecularChain, b: &SpecularChain) -> bool {
    if a.tau != b.tau || a.len() != b.len() {
        return false;
    }
    let tol = 1e-4 * scene.scale();
    a.vertices
        .iter()
        .zip(&b.vertices)
        .all(|(x, y)| x.shape == y.shape && (x.p - y.p).norm() <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{deduce_chain, ChainType, ChainVertex, LightPoint};
    use crate::math::stream_rng;
    use crate::scene::{Camera, Emitter, IntegratorDefaults, Material, Scene};
    use crate::geometry::{Shape, ShapeKind};
    use crate::math::Rgb;
    use rand::Rng;

    fn camera() -> Camera {
        Camera {
            position: Vec3::new(0.0, -5.0, 1.0),
            look_at: Vec3::zeros(),
            up: Vec3::new(0.0, 0.0, 1.0),
            fov_degrees: 45.0,
            resolution: [16, 16],
        }
    }

    fn mirror_scene(half_extent: f64) -> Scene {
        let shapes = vec![Shape {
            kind: ShapeKind::Quad {
                origin: Vec3::zeros(),
                edge_u: Vec3::new(half_extent, 0.0, 0.0),
                edge_v: Vec3::new(0.0, half_extent, 0.0),
            },
            material: 0,
            emitter: None,
        }];
        let materials = vec![Material::Conductor { reflectance: Rgb::new(0.9, 0.9, 0.9) }];
        let emitters = vec![Emitter::Point {
            position: Vec3::new(2.0, 0.0, 1.0),
            intensity: Rgb::new(1.0, 1.0, 1.0),
        }];
        Scene::assemble(shapes, materials, emitters, camera(), IntegratorDefaults::default())
            .unwrap()
    }

    fn sphere_scene() -> Scene {
        let shapes = vec![Shape {
            kind: ShapeKind::Sphere { center: Vec3::zeros(), radius: 1.0 },
            material: 0,
            emitter: None,
        }];
        let materials = vec![Material::Conductor { reflectance: Rgb::new(0.9, 0.9, 0.9) }];
        let emitters = vec![Emitter::Point {
            position: Vec3::new(0.0, 0.0, 3.0),
            intensity: Rgb::new(1.0, 1.0, 1.0),
        }];
        Scene::assemble(shapes, materials, emitters, camera(), IntegratorDefaults::default())
            .unwrap()
    }

    fn slab_scene() -> Scene {
        let shapes = vec![
            Shape {
                kind: ShapeKind::Quad {
                    origin: Vec3::new(0.0, 0.0, 1.0),
                    edge_u: Vec3::new(2.0, 0.0, 0.0),
                    edge_v: Vec3::new(0.0, 2.0, 0.0),
                },
                material: 0,
                emitter: None,
            },
            Shape {
                kind: ShapeKind::Quad {
                    origin: Vec3::new(0.0, 0.0, 0.8),
                    edge_u: Vec3::new(2.0, 0.0, 0.0),
                    edge_v: Vec3::new(0.0, -2.0, 0.0),
                },
                material: 0,
                emitter: None,
            },
        ];
        let materials = vec![Material::Dielectric { ior: 1.5 }];
        let emitters = vec![Emitter::Point {
            position: Vec3::new(0.0, 0.0, 3.0),
            intensity: Rgb::new(1.0, 1.0, 1.0),
        }];
        Scene::assemble(shapes, materials, emitters, camera(), IntegratorDefaults::default())
            .unwrap()
    }

    fn mirror_config() -> Configuration {
        Configuration {
            x_d: Vec3::new(0.0, 0.0, 1.0),
            n_d: Vec3::new(0.0, 0.0, 1.0),
            light: LightPoint { p: Vec3::new(2.0, 0.0, 1.0), n: None, emitter: 0 },
        }
    }

    fn chain_on(scene: &Scene, shape: usize, uv: [f64; 2], tau: &str) -> SpecularChain {
        SpecularChain {
            vertices: vec![ChainVertex {
                shape,
                uv,
                p: scene.shapes[shape].point_at(uv),
            }],
            tau: ChainType::parse(tau).unwrap(),
        }
    }

    #[test]
    fn mirror_converges_to_image_point_from_anywhere() {
        let scene = mirror_scene(2.5);
        let cfg = mirror_config();
        let opts = WalkOptions::default();
        for su in -4..=4 {
            for sv in -4..=4 {
                let seed = chain_on(&scene, 0, [su as f64 / 4.5, sv as f64 / 4.5], "R");
                let r = walk(&scene, &cfg, &seed, &opts);
                assert_eq!(r.status, WalkStatus::Admissible, "seed {su},{sv}");
                assert!(
                    (r.chain.vertices[0].p - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-5,
                    "seed {su},{sv} -> {:?} in {} iters",
                    r.chain.vertices[0].p,
                    r.iterations
                );
            }
        }
    }

    /// Seeds near the solution (the kind guided seeding produces) converge
    /// in at most two Newton steps.
    #[test]
    fn mirror_near_seeds_need_at_most_two_steps() {
        let scene = mirror_scene(2.5);
        let cfg = mirror_config();
        let opts = WalkOptions::default();
        let sol = [0.4, 0.0];
        for k in 0..24 {
            let ang = k as f64 / 24.0 * std::f64::consts::TAU;
            for f in [0.3, 0.7, 1.0] {
                let r_param = 0.04 * f;
                let seed = chain_on(
                    &scene,
                    0,
                    [sol[0] + r_param * ang.cos(), sol[1] + r_param * ang.sin()],
                    "R",
                );
                let r = walk(&scene, &cfg, &seed, &opts);
                assert_eq!(r.status, WalkStatus::Admissible);
                assert!(r.iterations <= 2, "seed #{k} f={f} took {}", r.iterations);
                assert!((r.chain.vertices[0].p - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn admissible_seed_is_idempotent() {
        let scene = mirror_scene(2.5);
        let cfg = mirror_config();
        let sol = chain_on(&scene, 0, [0.4, 0.0], "R");
        let r = walk(&scene, &cfg, &sol, &WalkOptions::default());
        assert_eq!(r.status, WalkStatus::Admissible);
        assert_eq!(r.iterations, 0);
        assert!(same_chain(&scene, &r.chain, &sol));
    }

    #[test]
    fn walk_escapes_when_solution_is_off_quad() {
        // Mirror image point for this light sits at x=3.0, outside a
        // half-extent-2 quad.
        let scene = mirror_scene(2.0);
        let mut cfg = mirror_config();
        cfg.light.p = Vec3::new(6.0, 0.0, 1.0);
        let seed = chain_on(&scene, 0, [0.9, 0.0], "R");
        let r = walk(&scene, &cfg, &seed, &WalkOptions::default());
        assert_eq!(r.status, WalkStatus::Escaped);
    }

    #[test]
    fn walk_never_accepts_a_mislabeled_transmission() {
        // Endpoints on the same side of the slab admit a reflection
        // solution only. A seed labeled "T" sees the spurious equal-index
        // branch of the constraint, whose root is that same mirror point;
        // the walk must fail it rather than converge.
        let scene = slab_scene();
        let cfg = Configuration {
            x_d: Vec3::new(-0.8, 0.0, 2.5),
            n_d: Vec3::new(0.0, 0.0, -1.0),
            light: LightPoint { p: Vec3::new(0.8, 0.0, 2.5), n: None, emitter: 0 },
        };
        for su in -3..=3 {
            for sv in -3..=3 {
                let uv = [su as f64 / 4.0, sv as f64 / 4.0];
                let r = walk(&scene, &cfg, &chain_on(&scene, 0, uv, "T"), &WalkOptions::default());
                assert_ne!(r.status, WalkStatus::Admissible, "phantom accepted at {uv:?}");
                let r = walk(&scene, &cfg, &chain_on(&scene, 0, uv, "R"), &WalkOptions::default());
                assert_eq!(r.status, WalkStatus::Admissible);
            }
        }
    }

    #[test]
    fn walk_is_bitwise_deterministic() {
        let scene = sphere_scene();
        let cfg = Configuration {
            x_d: Vec3::new(0.0, 0.0, 3.0),
            n_d: Vec3::new(0.0, 0.0, -1.0),
            light: LightPoint { p: Vec3::new(3.0, 0.5, 0.2), n: None, emitter: 0 },
        };
        let seed = chain_on(&scene, 0, [0.7, 0.3], "R");
        let a = walk(&scene, &cfg, &seed, &WalkOptions::default());
        let b = walk(&scene, &cfg, &seed, &WalkOptions::default());
        assert_eq!(a.status, b.status);
        assert_eq!(a.iterations, b.iterations);
        for (va, vb) in a.chain.vertices.iter().zip(&b.chain.vertices) {
            assert_eq!(va.uv[0].to_bits(), vb.uv[0].to_bits());
            assert_eq!(va.uv[1].to_bits(), vb.uv[1].to_bits());
        }
    }

    #[test]
    fn sphere_reflection_converges() {
        let scene = sphere_scene();
        let cfg = Configuration {
            x_d: Vec3::new(0.0, 0.0, 3.0),
            n_d: Vec3::new(0.0, 0.0, -1.0),
            light: LightPoint { p: Vec3::new(3.0, 0.0, 0.0), n: None, emitter: 0 },
        };
        let mut rng = stream_rng(&[5]);
        let mut hits = 0;
        for _ in 0..64 {
            let seed = chain_on(
                &scene,
                0,
                [
                    0.3 + rng.gen::<f64>() * 1.0,
                    rng.gen::<f64>() * 1.2 - 0.6,
                ],
                "R",
            );
            let r = walk(&scene, &cfg, &seed, &WalkOptions::default());
            if r.status == WalkStatus::Admissible {
                hits += 1;
                let states = refresh(&scene, &r.chain);
                let hv = half_vectors(&scene, &cfg, &r.chain, &states).unwrap();
                assert!(residual_vector(&states, &hv).amax() < 1e-6);
            }
        }
        assert!(hits > 32, "only {hits}/64 seeds converged");
    }

    #[test]
    fn analytic_jacobian_matches_fd_on_random_chains() {
        let slab = slab_scene();
        let sph = sphere_scene();
        let mut rng = stream_rng(&[6]);
        let mut checked = 0;
        while checked < 100 {
            let (scene, chain, cfg): (&Scene, SpecularChain, Configuration) = if checked % 2 == 0 {
                let x_d = Vec3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, 2.0);
                let dir = (Vec3::new(
                    rng.gen::<f64>() * 2.0 - 1.0,
                    rng.gen::<f64>() * 2.0 - 1.0,
                    0.9,
                ) - x_d)
                    .normalize();
                let Ok(chain) = deduce_chain(&slab, x_d, dir, ChainType::parse("TT").unwrap())
                else {
                    continue;
                };
                let cfg = Configuration {
                    x_d,
                    n_d: Vec3::new(0.0, 0.0, -1.0),
                    light: LightPoint {
                        p: Vec3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, -1.0),
                        n: None,
                        emitter: 0,
                    },
                };
                (&slab, chain, cfg)
            } else {
                let chain = chain_on(
                    &sph,
                    0,
                    [0.2 + rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 6.0],
                    "R",
                );
                let cfg = Configuration {
                    x_d: Vec3::new(0.0, 0.0, 3.0),
                    n_d: Vec3::new(0.0, 0.0, -1.0),
                    light: LightPoint {
                        p: Vec3::new(3.0, rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>()),
                        n: None,
                        emitter: 0,
                    },
                };
                (&sph, chain, cfg)
            };
            let Some(ja) = analytic_jacobian(scene, &cfg, &chain) else { continue };
            let Some(jf) = fd_jacobian(scene, &cfg, &chain, 1e-6) else { continue };
            let rel = (&ja - &jf).norm() / ja.norm().max(1e-30);
            assert!(rel < 1e-4, "relative error {rel}\n{ja}\n{jf}");
            checked += 1;
        }
    }

    #[test]
    fn same_chain_tolerance() {
        let scene = mirror_scene(2.5);
        let a = chain_on(&scene, 0, [0.4, 0.0], "R");
        let mut b = a.clone();
        // Nudge well inside delta = 1e-4 * scale.
        b.vertices[0].uv[0] += 1e-7;
        b.refresh_positions(&scene);
        assert!(same_chain(&scene, &a, &b));
        let mut c = a.clone();
        c.vertices[0].uv[0] += 0.1;
        c.refresh_positions(&scene);
        assert!(!same_chain(&scene, &a, &c));
        let d = chain_on(&scene, 0, [0.4, 0.0], "T");
        assert!(!same_chain(&scene, &a, &d));
    }
}
