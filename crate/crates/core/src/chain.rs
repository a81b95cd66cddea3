//! Specular chains: deduction from a seed direction, the tangent-projected
//! half-vector constraints, Fresnel products, and the generalized geometric
//! term that turns an admissible chain into throughput.

use crate::geometry::{reflect, refract, Interaction, Ray};
use crate::math::{luminance, Rgb, Vec3};
use crate::scene::{Emitter, Material, Scene};

use thiserror::Error;

/// Maximum chain length the packed encodings support.
pub const MAX_CHAIN_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScatterKind {
    Reflect,
    Refract,
}

/// Scattering-type string tau, one bit per vertex (0 = R, 1 = T), packed
/// with a marker bit so the length rides along: bits = (1 << n) | types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainType(u16);

impl ChainType {
    pub fn empty() -> Self {
        ChainType(1)
    }

    pub fn from_kinds(kinds: &[ScatterKind]) -> Self {
        assert!(kinds.len() <= MAX_CHAIN_LEN);
        let mut bits = 1u16;
        for k in kinds.iter().rev() {
            bits = (bits << 1) | u16::from(*k == ScatterKind::Refract);
        }
        ChainType(bits)
    }

    /// Parse e.g. "TRT". Fails on other characters or length > 13.
    pub fn parse(s: &str) -> Option<Self> {
        if s.len() > MAX_CHAIN_LEN {
            return None;
        }
        let mut kinds = Vec::with_capacity(s.len());
        for c in s.chars() {
            kinds.push(match c {
                'R' | 'r' => ScatterKind::Reflect,
                'T' | 't' => ScatterKind::Refract,
                _ => return None,
            });
        }
        Some(Self::from_kinds(&kinds))
    }

    pub fn len(&self) -> usize {
        (15 - self.0.leading_zeros()) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 1
    }

    pub fn kind(&self, i: usize) -> ScatterKind {
        debug_assert!(i < self.len());
        if (self.0 >> i) & 1 == 1 {
            ScatterKind::Refract
        } else {
            ScatterKind::Reflect
        }
    }

    pub fn kinds(&self) -> impl Iterator<Item = ScatterKind> + '_ {
        (0..self.len()).map(move |i| self.kind(i))
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    pub fn from_bits(bits: u16) -> Option<Self> {
        if bits == 0 || (bits >> (MAX_CHAIN_LEN + 1)) != 0 {
            return None;
        }
        Some(ChainType(bits))
    }
}

impl std::fmt::Display for ChainType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for k in self.kinds() {
            write!(f, "{}", if k == ScatterKind::Refract { 'T' } else { 'R' })?;
        }
        Ok(())
    }
}

/// A light point the chain connects to: an area-emitter surface point or a
/// point light (treated as the zero-radius limit; its Jacobian plane is
/// orthogonal to the final segment).
#[derive(Clone, Copy, Debug)]
pub struct LightPoint {
    pub p: Vec3,
    /// Surface normal for area emitters; None for point lights.
    pub n: Option<Vec3>,
    pub emitter: usize,
}

/// The fixed endpoints a chain is solved against.
#[derive(Clone, Copy, Debug)]
pub struct Configuration {
    pub x_d: Vec3,
    /// Shading normal at the separator (for the cosine in the geometric
    /// term).
    pub n_d: Vec3,
    pub light: LightPoint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainVertex {
    pub shape: usize,
    pub uv: [f64; 2],
    pub p: Vec3,
}

/// A specular chain: an ordered run of specular vertices between the
/// separator and the light point. Only geometry; admissibility is a
/// judgement made against a Configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecularChain {
    pub vertices: Vec<ChainVertex>,
    pub tau: ChainType,
}

impl SpecularChain {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.vertices.iter().map(|v| v.p)
    }

    pub fn refresh_positions(&mut self, scene: &Scene) {
        for v in &mut self.vertices {
            v.p = scene.shapes[v.shape].point_at(v.uv);
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeduceError {
    #[error("ray left the specular geometry at vertex {0}")]
    Miss(usize),
    #[error("scattering type needs transmission on a conductor at vertex {0}")]
    TypeMismatch(usize),
    #[error("total internal reflection at vertex {0}")]
    Tir(usize),
    #[error("chain type is empty")]
    EmptyType,
}

/// Follows the deterministic recursion: intersect the specular geometry,
/// scatter with the prescribed type, repeat. The result has exactly
/// |tau| vertices; the type at the final vertex is only checked for
/// material compatibility (its constraint binds against the light point).
pub fn deduce_chain(
    scene: &Scene,
    x_d: Vec3,
    omega_d: Vec3,
    tau: ChainType,
) -> Result<SpecularChain, DeduceError> {
    let n = tau.len();
    if n == 0 {
        return Err(DeduceError::EmptyType);
    }
    deduce_chain_by(scene, x_d, omega_d, n, |i, _| tau.kind(i))
}

/// Deduction with the scattering type decided per vertex as it is reached;
/// lets the initializer flip types based on the material actually hit.
pub fn deduce_chain_by(
    scene: &Scene,
    x_d: Vec3,
    omega_d: Vec3,
    n: usize,
    mut pick: impl FnMut(usize, &Material) -> ScatterKind,
) -> Result<SpecularChain, DeduceError> {
    if n == 0 {
        return Err(DeduceError::EmptyType);
    }
    let eps = scene.ray_epsilon();
    let mut vertices = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);
    let mut origin = x_d;
    let mut dir = omega_d;
    for i in 0..n {
        let it = scene
            .intersect(&Ray::new(origin, dir, eps), true)
            .ok_or(DeduceError::Miss(i))?;
        let mat = scene.material(it.shape);
        let kind = pick(i, mat);
        if kind == ScatterKind::Refract && !matches!(mat, Material::Dielectric { .. }) {
            return Err(DeduceError::TypeMismatch(i));
        }
        vertices.push(ChainVertex { shape: it.shape, uv: it.uv, p: it.p });
        kinds.push(kind);
        if i + 1 < n {
            dir = match kind {
                ScatterKind::Reflect => reflect(dir, it.n),
                ScatterKind::Refract => {
                    let ior = match mat {
                        Material::Dielectric { ior } => *ior,
                        _ => unreachable!(),
                    };
                    let (ei, eo) = if dir.dot(&it.n) < 0.0 { (1.0, ior) } else { (ior, 1.0) };
                    refract(dir, it.n, ei, eo).ok_or(DeduceError::Tir(i))?
                }
            };
            origin = it.p;
        }
    }
    Ok(SpecularChain { vertices, tau: ChainType::from_kinds(&kinds) })
}

/// Per-vertex tangent projection of the generalized half-vector. Both
/// neighbor directions point away from the vertex; for refraction each is
/// weighted by the refractive index on its own side, so the residual is zero
/// exactly on mirror/Snell solutions.
///
/// Returns one (t_u, t_v) pair per vertex, or None when a segment
/// degenerates (coincident points).
pub fn constraint_residual(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
) -> Option<Vec<[f64; 2]>> {
    let n = chain.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let v = &chain.vertices[i];
        let it = scene.shapes[v.shape].interaction_at(v.uv, v.shape);
        let prev = if i == 0 { config.x_d } else { chain.vertices[i - 1].p };
        let next = if i + 1 == n { config.light.p } else { chain.vertices[i + 1].p };
        let h = generalized_half_vector(scene, &it, v.shape, prev, next, chain.tau.kind(i))?;
        out.push([h.dot(&it.t_u), h.dot(&it.t_v)]);
    }
    Some(out)
}

pub fn residual_inf_norm(res: &[[f64; 2]]) -> f64 {
    res.iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Unnormalized direction-pair data for one vertex; shared by the residual
/// and the Jacobian assembly in the solver.
pub(crate) struct VertexGeom {
    pub wi: Vec3,
    pub wo: Vec3,
    pub r_i: f64,
    pub r_o: f64,
    pub eta_i: f64,
    pub eta_o: f64,
    pub cos_i: f64,
    pub cos_o: f64,
}

impl VertexGeom {
    /// The projected half-vector also vanishes on a spurious branch where
    /// the event label contradicts the geometry: a "transmission" whose
    /// directions sit on one side picks up equal indices and degenerates to
    /// the mirror equation, and a "reflection" straddling the surface can
    /// zero out the same way. Those roots are not scattering solutions and
    /// have to be ruled out before any norm test can bless them.
    pub(crate) fn branch_valid(&self, kind: ScatterKind) -> bool {
        match kind {
            ScatterKind::Reflect => self.cos_i * self.cos_o >= 0.0,
            ScatterKind::Refract => self.cos_i * self.cos_o < 0.0,
        }
    }
}

pub(crate) fn vertex_geom(
    scene: &Scene,
    it: &Interaction,
    shape: usize,
    prev: Vec3,
    next: Vec3,
) -> Option<VertexGeom> {
    let ui = prev - it.p;
    let uo = next - it.p;
    let r_i = ui.norm();
    let r_o = uo.norm();
    let tiny = 1e-12 * scene.scale();
    if r_i < tiny || r_o < tiny {
        return None;
    }
    let wi = ui / r_i;
    let wo = uo / r_o;
    let ior = match scene.material(shape) {
        Material::Dielectric { ior } => *ior,
        _ => 1.0,
    };
    let cos_i = wi.dot(&it.n);
    let cos_o = wo.dot(&it.n);
    let side = |c: f64| if c >= 0.0 { 1.0 } else { ior };
    Some(VertexGeom { wi, wo, r_i, r_o, eta_i: side(cos_i), eta_o: side(cos_o), cos_i, cos_o })
}

/// True when every vertex's labeled event matches the sides its segments
/// actually lie on. Iteration states may roam freely, but a converged chain
/// is only a solution of its own event sequence when the labels hold.
pub(crate) fn branches_valid(scene: &Scene, config: &Configuration, chain: &SpecularChain) -> bool {
    let n = chain.len();
    (0..n).all(|i| {
        let v = &chain.vertices[i];
        let it = scene.shapes[v.shape].interaction_at(v.uv, v.shape);
        let prev = if i == 0 { config.x_d } else { chain.vertices[i - 1].p };
        let next = if i + 1 == n { config.light.p } else { chain.vertices[i + 1].p };
        vertex_geom(scene, &it, v.shape, prev, next)
            .is_some_and(|g| g.branch_valid(chain.tau.kind(i)))
    })
}

fn generalized_half_vector(
    scene: &Scene,
    it: &Interaction,
    shape: usize,
    prev: Vec3,
    next: Vec3,
    kind: ScatterKind,
) -> Option<Vec3> {
    let g = vertex_geom(scene, it, shape, prev, next)?;
    if !g.branch_valid(kind) {
        return None;
    }
    let raw = match kind {
        ScatterKind::Reflect => g.wi + g.wo,
        ScatterKind::Refract => -(g.eta_i * g.wi + g.eta_o * g.wo),
    };
    let norm = raw.norm();
    if norm < 1e-12 {
        return None;
    }
    Some(raw / norm)
}

/// Product of Fresnel/conductor factors along the chain: F for dielectric
/// reflections, 1-F for transmissions, the reflectance spectrum for
/// conductors.
pub fn specular_kappa(scene: &Scene, config: &Configuration, chain: &SpecularChain) -> Rgb {
    let n = chain.len();
    let mut kappa = Rgb::new(1.0, 1.0, 1.0);
    for i in 0..n {
        let v = &chain.vertices[i];
        let normal = scene.shapes[v.shape].normal_at(v.uv);
        let prev = if i == 0 { config.x_d } else { chain.vertices[i - 1].p };
        let wi = (prev - v.p).normalize();
        let cos_i = wi.dot(&normal);
        match scene.material(v.shape) {
            Material::Conductor { reflectance } => {
                kappa.component_mul_assign(reflectance);
            }
            Material::Dielectric { ior } => {
                let (ei, eo) = if cos_i >= 0.0 { (1.0, *ior) } else { (*ior, 1.0) };
                let f = crate::geometry::fresnel_dielectric(cos_i, ei, eo);
                let factor = match chain.tau.kind(i) {
                    ScatterKind::Reflect => f,
                    ScatterKind::Refract => 1.0 - f,
                };
                kappa *= factor;
            }
            _ => {} // non-specular vertices cannot appear in a chain
        }
    }
    kappa
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GgtError {
    #[error("manifold re-convergence failed during differentiation")]
    Reconverge,
    #[error("degenerate differential (zero-area map)")]
    Degenerate,
}

/// Options controlling the finite-difference width of the geometric term.
#[derive(Clone, Copy, Debug)]
pub struct GgtOptions {
    /// Offset as a fraction of the scene scale.
    pub fd_scale: f64,
    pub walk: crate::solver::WalkOptions,
}

impl Default for GgtOptions {
    fn default() -> Self {
        GgtOptions { fd_scale: 1e-4, walk: crate::solver::WalkOptions::default() }
    }
}

/// Generalized geometric term: cos(theta_D) * |d omega_D / d A_L| * V.
///
/// The Jacobian is measured by nudging the light point along two tangent
/// directions and re-converging the chain with the manifold walk; for point
/// lights the tangent plane is orthogonal to the final segment (the
/// zero-radius limit). Occlusion anywhere on the chain gives 0 outright.
pub fn ggt(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
    opts: &GgtOptions,
) -> Result<f64, GgtError> {
    // Visibility along every segment, endpoints included.
    let mut points = Vec::with_capacity(chain.len() + 2);
    points.push(config.x_d);
    points.extend(chain.positions());
    points.push(config.light.p);
    for w in points.windows(2) {
        if !scene.visible(w[0], w[1]) {
            return Ok(0.0);
        }
    }

    let first = if chain.is_empty() { config.light.p } else { chain.vertices[0].p };
    let omega_d = (first - config.x_d).normalize();
    let cos_d = config.n_d.dot(&omega_d).abs();

    let last = if chain.is_empty() { config.x_d } else { chain.vertices[chain.len() - 1].p };
    let seg = (config.light.p - last).normalize();
    let (t1, t2) = match config.light.n {
        Some(n) => crate::math::basis_from_normal(n),
        None => crate::math::basis_from_normal(seg),
    };

    let delta = opts.fd_scale * scene.scale();
    let omega_for = |x_l: Vec3| -> Option<Vec3> {
        if chain.is_empty() {
            return Some((x_l - config.x_d).normalize());
        }
        let mut cfg = *config;
        cfg.light.p = x_l;
        let walked = crate::solver::walk(scene, &cfg, chain, &opts.walk);
        if walked.status != crate::solver::WalkStatus::Admissible {
            return None;
        }
        Some((walked.chain.vertices[0].p - config.x_d).normalize())
    };

    let mut partials = [Vec3::zeros(); 2];
    for (j, t) in [t1, t2].iter().enumerate() {
        let op = omega_for(config.light.p + delta * *t).ok_or(GgtError::Reconverge)?;
        let om = omega_for(config.light.p - delta * *t).ok_or(GgtError::Reconverge)?;
        partials[j] = (op - om) / (2.0 * delta);
    }
    let jac = partials[0].cross(&partials[1]).norm();
    if !jac.is_finite() {
        return Err(GgtError::Degenerate);
    }
    Ok(cos_d * jac)
}

/// Full chain throughput T = kappa * G * L (radiance for area emitters,
/// intensity for point lights). Per unit emitter area for area lights; per
/// light for point lights.
pub fn throughput(
    scene: &Scene,
    config: &Configuration,
    chain: &SpecularChain,
    opts: &GgtOptions,
) -> Result<Rgb, GgtError> {
    let g = ggt(scene, config, chain, opts)?;
    if g == 0.0 {
        return Ok(Rgb::zeros());
    }
    let last = if chain.is_empty() { config.x_d } else { chain.vertices[chain.len() - 1].p };
    let emitted = match &scene.emitters[config.light.emitter] {
        Emitter::Point { intensity, .. } => *intensity,
        Emitter::AreaSphere { .. } => {
            let n = config.light.n.expect("area light point carries a normal");
            scene.emitted_radiance(config.light.emitter, n, (last - config.light.p).normalize())
        }
    };
    Ok(specular_kappa(scene, config, chain).component_mul(&emitted) * g)
}

pub fn throughput_scalar(t: Rgb) -> f64 {
    luminance(t)
}
