//! Scene description: shapes, materials, emitters, camera, plus the TOML
//! loader and the global queries (intersection, visibility, emitter
//! sampling) everything downstream is built on.

use crate::geometry::{Aabb, Interaction, Ray, Shape, ShapeKind};
use crate::math::{Rgb, Vec3};

use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

/// Ray epsilon and several tolerances scale with the scene extent so the
/// same constants work for scenes of any size.
pub const RAY_EPSILON_SCALE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub enum Material {
    Diffuse { albedo: Rgb },
    Glossy { albedo: Rgb, roughness: f64 },
    Dielectric { ior: f64 },
    Conductor { reflectance: Rgb },
}

impl Material {
    pub fn is_specular(&self) -> bool {
        matches!(self, Material::Dielectric { .. } | Material::Conductor { .. })
    }
}

#[derive(Clone, Debug)]
pub enum Emitter {
    Point { position: Vec3, intensity: Rgb },
    /// Uniform spherical area light; `shape` indexes its backing geometry.
    AreaSphere { position: Vec3, radius: f64, radiance: Rgb, shape: usize },
}

#[derive(Clone, Debug)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_degrees: f64,
    pub resolution: [u32; 2],
}

impl Camera {
    /// Pinhole ray through pixel (px, py) with in-pixel jitter (jx, jy) in
    /// [0,1). Pixel (0,0) is the top-left corner of the image.
    pub fn generate_ray(&self, px: u32, py: u32, jx: f64, jy: f64, t_min: f64) -> Ray {
        let w = (self.look_at - self.position).normalize();
        let u = w.cross(&self.up).normalize();
        let v = u.cross(&w);
        let (rx, ry) = (self.resolution[0] as f64, self.resolution[1] as f64);
        let tan_half = (self.fov_degrees.to_radians() / 2.0).tan();
        let ndc_x = (2.0 * (px as f64 + jx) / rx - 1.0) * tan_half * (rx / ry);
        let ndc_y = (1.0 - 2.0 * (py as f64 + jy) / ry) * tan_half;
        Ray::new(self.position, (w + ndc_x * u + ndc_y * v).normalize(), t_min)
    }
}

#[derive(Clone, Debug)]
pub struct Scene {
    pub shapes: Vec<Shape>,
    pub materials: Vec<Material>,
    pub emitters: Vec<Emitter>,
    pub camera: Camera,
    pub integrator: IntegratorDefaults,
    bounds: Aabb,
    scale: f64,
    /// Cumulative area table over specular shapes, for uniform-area seeding.
    specular_cdf: Vec<(usize, f64)>,
    specular_area: f64,
}

#[derive(Clone, Debug)]
pub struct IntegratorDefaults {
    pub spp: u32,
    pub max_path_length: u32,
    pub rr_start: u32,
    pub rr_survival: f64,
    pub train_fraction: f64,
}

impl Default for IntegratorDefaults {
    fn default() -> Self {
        IntegratorDefaults {
            spp: 64,
            max_path_length: 15,
            rr_start: 5,
            rr_survival: 0.95,
            train_fraction: 0.30,
        }
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scene has no camera")]
    MissingCamera,
    #[error("scene has no emitters")]
    NoEmitters,
    #[error("shape {0} references unknown material `{1}`")]
    UnknownMaterial(usize, String),
    #[error("material `{0}`: ior {1} outside (1, 3]")]
    BadIor(String, f64),
    #[error("material `{0}`: albedo/reflectance component outside [0, 1]")]
    BadAlbedo(String),
    #[error("material `{0}`: roughness {1} outside (0, 1]")]
    BadRoughness(String, f64),
    #[error("quad {0}: edge vectors must be non-degenerate and orthogonal")]
    BadQuad(usize),
    #[error("sphere/emitter {0}: radius must be positive")]
    BadRadius(usize),
    #[error("emitter {0}: radiance/intensity must be non-negative")]
    BadEmission(usize),
    #[error("duplicate material name `{0}`")]
    DuplicateMaterial(String),
}

// ---------------------------------------------------------------------------
// TOML schema. Unknown keys are rejected everywhere.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    camera: CameraDecl,
    #[serde(default)]
    integrator: IntegratorDecl,
    #[serde(default)]
    materials: Vec<MaterialDecl>,
    #[serde(default)]
    shapes: Vec<ShapeDecl>,
    #[serde(default)]
    emitters: Vec<EmitterDecl>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDecl {
    position: [f64; 3],
    look_at: [f64; 3],
    #[serde(default = "default_up")]
    up: [f64; 3],
    fov_degrees: f64,
    resolution: [u32; 2],
}

fn default_up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IntegratorDecl {
    spp: Option<u32>,
    max_path_length: Option<u32>,
    rr_start: Option<u32>,
    rr_survival: Option<f64>,
    train_fraction: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum MaterialDecl {
    Diffuse { name: String, albedo: [f64; 3] },
    Glossy { name: String, albedo: [f64; 3], roughness: f64 },
    Dielectric { name: String, ior: f64 },
    Conductor { name: String, reflectance: [f64; 3] },
}

impl MaterialDecl {
    fn name(&self) -> &str {
        match self {
            MaterialDecl::Diffuse { name, .. }
            | MaterialDecl::Glossy { name, .. }
            | MaterialDecl::Dielectric { name, .. }
            | MaterialDecl::Conductor { name, .. } => name,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum ShapeDecl {
    Quad { origin: [f64; 3], edge_u: [f64; 3], edge_v: [f64; 3], material: String },
    Sphere { center: [f64; 3], radius: f64, material: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum EmitterDecl {
    Point { position: [f64; 3], intensity: [f64; 3] },
    AreaSphere { position: [f64; 3], radius: f64, radiance: [f64; 3] },
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

impl Scene {
    pub fn load(path: &Path) -> Result<Scene, SceneError> {
        Scene::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Scene, SceneError> {
        let file: SceneFile = toml::from_str(text)?;

        let mut names = std::collections::HashMap::new();
        for (i, m) in file.materials.iter().enumerate() {
            if names.insert(m.name().to_string(), i).is_some() {
                return Err(SceneError::DuplicateMaterial(m.name().to_string()));
            }
        }
        let mut materials: Vec<Material> = Vec::new();
        for m in &file.materials {
            materials.push(match m {
                MaterialDecl::Diffuse { name, albedo } => {
                    check_unit_rgb(name, albedo)?;
                    Material::Diffuse { albedo: v3(*albedo) }
                }
                MaterialDecl::Glossy { name, albedo, roughness } => {
                    check_unit_rgb(name, albedo)?;
                    if !(*roughness > 0.0 && *roughness <= 1.0) {
                        return Err(SceneError::BadRoughness(name.clone(), *roughness));
                    }
                    Material::Glossy { albedo: v3(*albedo), roughness: *roughness }
                }
                MaterialDecl::Dielectric { name, ior } => {
                    if !(*ior > 1.0 && *ior <= 3.0) {
                        return Err(SceneError::BadIor(name.clone(), *ior));
                    }
                    Material::Dielectric { ior: *ior }
                }
                MaterialDecl::Conductor { name, reflectance } => {
                    check_unit_rgb(name, reflectance)?;
                    Material::Conductor { reflectance: v3(*reflectance) }
                }
            });
        }

        let mut shapes: Vec<Shape> = Vec::new();
        for (i, s) in file.shapes.iter().enumerate() {
            let (kind, mat_name) = match s {
                ShapeDecl::Quad { origin, edge_u, edge_v, material } => {
                    let (eu, ev) = (v3(*edge_u), v3(*edge_v));
                    let ok = eu.norm() > 0.0
                        && ev.norm() > 0.0
                        && eu.dot(&ev).abs() < 1e-9 * eu.norm() * ev.norm();
                    if !ok {
                        return Err(SceneError::BadQuad(i));
                    }
                    (ShapeKind::Quad { origin: v3(*origin), edge_u: eu, edge_v: ev }, material)
                }
                ShapeDecl::Sphere { center, radius, material } => {
                    if *radius <= 0.0 {
                        return Err(SceneError::BadRadius(i));
                    }
                    (ShapeKind::Sphere { center: v3(*center), radius: *radius }, material)
                }
            };
            let material = *names
                .get(mat_name.as_str())
                .ok_or_else(|| SceneError::UnknownMaterial(i, mat_name.clone()))?;
            shapes.push(Shape { kind, material, emitter: None });
        }

        if file.emitters.is_empty() {
            return Err(SceneError::NoEmitters);
        }
        let mut emitters: Vec<Emitter> = Vec::new();
        // Area emitters occlude; give each a backing shape with a reserved
        // black material so rays can hit it.
        let backing_material = materials.len();
        let mut need_backing = false;
        for (i, e) in file.emitters.iter().enumerate() {
            match e {
                EmitterDecl::Point { position, intensity } => {
                    if intensity.iter().any(|c| *c < 0.0) {
                        return Err(SceneError::BadEmission(i));
                    }
                    emitters.push(Emitter::Point { position: v3(*position), intensity: v3(*intensity) });
                }
                EmitterDecl::AreaSphere { position, radius, radiance } => {
                    if *radius <= 0.0 {
                        return Err(SceneError::BadRadius(i));
                    }
                    if radiance.iter().any(|c| *c < 0.0) {
                        return Err(SceneError::BadEmission(i));
                    }
                    need_backing = true;
                    let shape = shapes.len();
                    shapes.push(Shape {
                        kind: ShapeKind::Sphere { center: v3(*position), radius: *radius },
                        material: backing_material,
                        emitter: Some(emitters.len()),
                    });
                    emitters.push(Emitter::AreaSphere {
                        position: v3(*position),
                        radius: *radius,
                        radiance: v3(*radiance),
                        shape,
                    });
                }
            }
        }
        if need_backing {
            materials.push(Material::Diffuse { albedo: Rgb::zeros() });
        }

        let d = IntegratorDefaults::default();
        let integrator = IntegratorDefaults {
            spp: file.integrator.spp.unwrap_or(d.spp),
            max_path_length: file.integrator.max_path_length.unwrap_or(d.max_path_length),
            rr_start: file.integrator.rr_start.unwrap_or(d.rr_start),
            rr_survival: file.integrator.rr_survival.unwrap_or(d.rr_survival),
            train_fraction: file.integrator.train_fraction.unwrap_or(d.train_fraction),
        };

        let camera = Camera {
            position: v3(file.camera.position),
            look_at: v3(file.camera.look_at),
            up: v3(file.camera.up).normalize(),
            fov_degrees: file.camera.fov_degrees,
            resolution: file.camera.resolution,
        };

        Scene::assemble(shapes, materials, emitters, camera, integrator)
    }

    /// Programmatic construction; tests and probes use this directly.
    pub fn assemble(
        shapes: Vec<Shape>,
        materials: Vec<Material>,
        emitters: Vec<Emitter>,
        camera: Camera,
        integrator: IntegratorDefaults,
    ) -> Result<Scene, SceneError> {
        if emitters.is_empty() {
            return Err(SceneError::NoEmitters);
        }
        let mut bounds = Aabb::empty();
        for s in &shapes {
            let b = s.bounds();
            bounds.grow(b.min);
            bounds.grow(b.max);
        }
        for e in &emitters {
            if let Emitter::Point { position, .. } = e {
                bounds.grow(*position);
            }
        }
        let scale = bounds.diagonal().max(1e-9);

        let mut specular_cdf = Vec::new();
        let mut acc = 0.0;
        for (i, s) in shapes.iter().enumerate() {
            if materials[s.material].is_specular() {
                acc += s.area();
                specular_cdf.push((i, acc));
            }
        }

        Ok(Scene {
            shapes,
            materials,
            emitters,
            camera,
            integrator,
            bounds,
            scale,
            specular_cdf,
            specular_area: acc,
        })
    }

    /// Scene extent (bounding-box diagonal); the unit for all relative
    /// epsilons.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn ray_epsilon(&self) -> f64 {
        RAY_EPSILON_SCALE * self.scale
    }

    pub fn material(&self, shape: usize) -> &Material {
        &self.materials[self.shapes[shape].material]
    }

    pub fn specular_area(&self) -> f64 {
        self.specular_area
    }

    /// Nearest hit. With `specular_only` set, non-specular shapes are
    /// transparent to the ray (the chain-deduction intersection operator).
    pub fn intersect(&self, ray: &Ray, specular_only: bool) -> Option<Interaction> {
        let mut best: Option<Interaction> = None;
        let mut r = *ray;
        for (i, s) in self.shapes.iter().enumerate() {
            if specular_only && !self.materials[s.material].is_specular() {
                continue;
            }
            if let Some(it) = s.intersect(&r, i) {
                r.t_max = it.t;
                best = Some(it);
            }
        }
        best
    }

    /// Mutual visibility of two surface points; both segment ends are pulled
    /// in by the ray epsilon so the endpoints' own surfaces don't occlude.
    pub fn visible(&self, a: Vec3, b: Vec3) -> bool {
        let seg = b - a;
        let len = seg.norm();
        let eps = self.ray_epsilon();
        if len <= 2.0 * eps {
            return true;
        }
        let dir = seg / len;
        let ray = Ray { origin: a, dir, t_min: eps, t_max: len - eps };
        self.intersect(&ray, false).is_none()
    }

    /// Uniform point on the specular surfaces (by area). None when the scene
    /// has no specular geometry.
    pub fn sample_specular_point(&self, u_shape: f64, u1: f64, u2: f64) -> Option<Interaction> {
        if self.specular_cdf.is_empty() {
            return None;
        }
        let target = u_shape * self.specular_area;
        let mut idx = self.specular_cdf.len() - 1;
        for (j, (_, acc)) in self.specular_cdf.iter().enumerate() {
            if target <= *acc {
                idx = j;
                break;
            }
        }
        let (shape, _) = self.specular_cdf[idx];
        let uv = self.shapes[shape].sample_area(u1, u2);
        Some(self.shapes[shape].interaction_at(uv, shape))
    }

    /// Uniform emitter pick + uniform-area point on it.
    pub fn sample_emitter(&self, u_pick: f64, u1: f64, u2: f64) -> EmitterSample {
        let count = self.emitters.len();
        let idx = ((u_pick * count as f64) as usize).min(count - 1);
        let pdf_choose = 1.0 / count as f64;
        match &self.emitters[idx] {
            Emitter::Point { position, .. } => EmitterSample {
                emitter: idx,
                point: *position,
                normal: None,
                pdf_choose,
                pdf_area: 1.0,
            },
            Emitter::AreaSphere { radius, shape, .. } => {
                let uv = self.shapes[*shape].sample_area(u1, u2);
                let it = self.shapes[*shape].interaction_at(uv, *shape);
                EmitterSample {
                    emitter: idx,
                    point: it.p,
                    normal: Some(it.n),
                    pdf_choose,
                    pdf_area: 1.0 / (4.0 * std::f64::consts::PI * radius * radius),
                }
            }
        }
    }

    /// Outgoing radiance of an area emitter surface point towards `dir_out`;
    /// emission is one-sided.
    pub fn emitted_radiance(&self, emitter: usize, normal: Vec3, dir_out: Vec3) -> Rgb {
        match &self.emitters[emitter] {
            Emitter::AreaSphere { radiance, .. } => {
                if normal.dot(&dir_out) > 0.0 {
                    *radiance
                } else {
                    Rgb::zeros()
                }
            }
            Emitter::Point { .. } => Rgb::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EmitterSample {
    pub emitter: usize,
    pub point: Vec3,
    /// Surface normal for area emitters; None for point lights.
    pub normal: Option<Vec3>,
    pub pdf_choose: f64,
    /// 1/(4 pi r^2) for area spheres, 1 (discrete) for point lights.
    pub pdf_area: f64,
}

fn check_unit_rgb(name: &str, c: &[f64; 3]) -> Result<(), SceneError> {
    if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(SceneError::BadAlbedo(name.to_string()));
    }
    Ok(())
}
