//! Analytic shapes (quads, spheres), ray intersection and the specular
//! scattering maps. Shapes carry an intrinsic 2D parameterization, and every
//! quantity the Newton walk needs (parametric derivatives, orthonormal tangent
//! frame, frame derivatives, shape operator) is exact, not sampled.
//!
//! Direction convention: ray/propagation directions point along travel. The
//! chain constraint machinery converts to away-from-vertex directions itself.

use crate::math::Vec3;

use std::f64::consts::{PI, TAU};

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3, t_min: f64) -> Self {
        Ray { origin, dir, t_min, t_max: f64::INFINITY }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.dir
    }
}

/// Surface hit / surface point with its local differential geometry.
#[derive(Clone, Copy, Debug)]
pub struct Interaction {
    pub p: Vec3,
    /// Outward geometric normal (unit).
    pub n: Vec3,
    /// Orthonormal tangents; (t_u, t_v, n) is right-handed.
    pub t_u: Vec3,
    pub t_v: Vec3,
    /// Intrinsic parameters: (u, v) in [-1,1]^2 for quads, (theta, phi) for
    /// spheres.
    pub uv: [f64; 2],
    pub shape: usize,
    /// Ray parameter of the hit; 0 when built directly from parameters.
    pub t: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum ShapeKind {
    /// p(u,v) = origin + u*edge_u + v*edge_v over [-1,1]^2. The edge vectors
    /// are half-extents and must be orthogonal; the normal is their cross.
    Quad { origin: Vec3, edge_u: Vec3, edge_v: Vec3 },
    /// p(theta,phi) = center + radius * (sin t cos p, sin t sin p, cos t).
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub kind: ShapeKind,
    pub material: usize,
    /// Set when this shape is the surface of an area emitter.
    pub emitter: Option<usize>,
}

impl Shape {
    pub fn point_at(&self, uv: [f64; 2]) -> Vec3 {
        match self.kind {
            ShapeKind::Quad { origin, edge_u, edge_v } => {
                origin + uv[0] * edge_u + uv[1] * edge_v
            }
            ShapeKind::Sphere { center, radius } => {
                center + radius * crate::math::dir_from_spherical(uv[0], uv[1])
            }
        }
    }

    pub fn normal_at(&self, uv: [f64; 2]) -> Vec3 {
        match self.kind {
            ShapeKind::Quad { edge_u, edge_v, .. } => edge_u.cross(&edge_v).normalize(),
            ShapeKind::Sphere { .. } => crate::math::dir_from_spherical(uv[0], uv[1]),
        }
    }

    /// Orthonormal frame (t_u, t_v, n) at the given parameters.
    pub fn frame_at(&self, uv: [f64; 2]) -> (Vec3, Vec3, Vec3) {
        match self.kind {
            ShapeKind::Quad { edge_u, edge_v, .. } => {
                let n = edge_u.cross(&edge_v).normalize();
                let t_u = edge_u.normalize();
                let t_v = n.cross(&t_u);
                (t_u, t_v, n)
            }
            ShapeKind::Sphere { .. } => {
                let (theta, phi) = (uv[0], uv[1]);
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                let n = Vec3::new(st * cp, st * sp, ct);
                let t_u = Vec3::new(ct * cp, ct * sp, -st);
                let t_v = Vec3::new(-sp, cp, 0.0);
                (t_u, t_v, n)
            }
        }
    }

    pub fn interaction_at(&self, uv: [f64; 2], shape: usize) -> Interaction {
        let (t_u, t_v, n) = self.frame_at(uv);
        Interaction { p: self.point_at(uv), n, t_u, t_v, uv, shape, t: 0.0 }
    }

    /// Parametric derivatives (dp/du, dp/dv); columns of the 3x2 map the
    /// Newton walk chains through.
    pub fn param_derivs(&self, uv: [f64; 2]) -> (Vec3, Vec3) {
        match self.kind {
            ShapeKind::Quad { edge_u, edge_v, .. } => (edge_u, edge_v),
            ShapeKind::Sphere { radius, .. } => {
                let (t_u, t_v, _) = self.frame_at(uv);
                (radius * t_u, radius * uv[0].sin() * t_v)
            }
        }
    }

    /// Derivatives of the orthonormal tangents w.r.t. the parameters:
    /// [dtu/du, dtu/dv, dtv/du, dtv/dv]. Zero on quads.
    pub fn frame_derivs(&self, uv: [f64; 2]) -> [Vec3; 4] {
        match self.kind {
            ShapeKind::Quad { .. } => [Vec3::zeros(); 4],
            ShapeKind::Sphere { .. } => {
                let (theta, _) = (uv[0], uv[1]);
                let (st, ct) = theta.sin_cos();
                let (t_u, t_v, n) = self.frame_at(uv);
                [-n, ct * t_v, Vec3::zeros(), -(st * n + ct * t_u)]
            }
        }
    }

    /// Shape operator (normal field derivative) in the orthonormal tangent
    /// basis: zero for planes, I/r for spheres.
    pub fn shape_operator(&self, _uv: [f64; 2]) -> nalgebra::Matrix2<f64> {
        match self.kind {
            ShapeKind::Quad { .. } => nalgebra::Matrix2::zeros(),
            ShapeKind::Sphere { radius, .. } => nalgebra::Matrix2::identity() / radius,
        }
    }

    pub fn area(&self) -> f64 {
        match self.kind {
            ShapeKind::Quad { edge_u, edge_v, .. } => 4.0 * edge_u.cross(&edge_v).norm(),
            ShapeKind::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    /// Uniform-by-area parameter sample from two uniforms in [0,1).
    pub fn sample_area(&self, u1: f64, u2: f64) -> [f64; 2] {
        match self.kind {
            ShapeKind::Quad { .. } => [2.0 * u1 - 1.0, 2.0 * u2 - 1.0],
            ShapeKind::Sphere { .. } => {
                let z = 1.0 - 2.0 * u1;
                [z.clamp(-1.0, 1.0).acos(), (TAU * u2).rem_euclid(TAU)]
            }
        }
    }

    /// True when the parameters lie on the shape. Quads are bounded; sphere
    /// parameters are always valid after canonicalization.
    pub fn uv_in_domain(&self, uv: [f64; 2]) -> bool {
        match self.kind {
            ShapeKind::Quad { .. } => {
                uv[0].abs() <= 1.0 && uv[1].abs() <= 1.0 && uv[0].is_finite() && uv[1].is_finite()
            }
            ShapeKind::Sphere { .. } => uv[0].is_finite() && uv[1].is_finite(),
        }
    }

    /// Characteristic size of the intrinsic parameter domain, used to scale
    /// per-vertex Newton step limits.
    pub fn param_extent(&self) -> f64 {
        match self.kind {
            ShapeKind::Quad { .. } => 2.0,
            ShapeKind::Sphere { .. } => PI,
        }
    }

    /// Folds sphere angles back into theta in [0,pi], phi in [0,tau). Quads
    /// pass through unchanged (domain checks handle them).
    pub fn canonical_uv(&self, uv: [f64; 2]) -> [f64; 2] {
        match self.kind {
            ShapeKind::Quad { .. } => uv,
            ShapeKind::Sphere { .. } => {
                let mut theta = uv[0].rem_euclid(TAU);
                let mut phi = uv[1];
                if theta > PI {
                    theta = TAU - theta;
                    phi += PI;
                }
                [theta, phi.rem_euclid(TAU)]
            }
        }
    }

    pub fn intersect(&self, ray: &Ray, shape: usize) -> Option<Interaction> {
        match self.kind {
            ShapeKind::Quad { origin, edge_u, edge_v } => {
                let n = edge_u.cross(&edge_v).normalize();
                let denom = ray.dir.dot(&n);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (origin - ray.origin).dot(&n) / denom;
                if t <= ray.t_min || t >= ray.t_max {
                    return None;
                }
                let q = ray.at(t) - origin;
                let u = q.dot(&edge_u) / edge_u.norm_squared();
                let v = q.dot(&edge_v) / edge_v.norm_squared();
                if u.abs() > 1.0 || v.abs() > 1.0 {
                    return None;
                }
                let mut it = self.interaction_at([u, v], shape);
                it.t = t;
                Some(it)
            }
            ShapeKind::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(&ray.dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = if -b - sq > ray.t_min {
                    -b - sq
                } else if -b + sq > ray.t_min {
                    -b + sq
                } else {
                    return None;
                };
                if t >= ray.t_max {
                    return None;
                }
                // Reproject so the hit sits exactly on the sphere.
                let d = (ray.at(t) - center).normalize();
                let uv = [d.z.clamp(-1.0, 1.0).acos(), d.y.atan2(d.x).rem_euclid(TAU)];
                let mut it = self.interaction_at(uv, shape);
                it.t = t;
                Some(it)
            }
        }
    }
}

/// Mirror reflection of a propagation direction.
pub fn reflect(d: Vec3, n: Vec3) -> Vec3 {
    d - 2.0 * d.dot(&n) * n
}

/// Refraction of a propagation direction across a dielectric interface.
/// eta_i is the index on the incoming side of `d`, eta_o on the far side.
/// The normal may point to either side. None on total internal reflection.
pub fn refract(d: Vec3, n: Vec3, eta_i: f64, eta_o: f64) -> Option<Vec3> {
    let n_o = if d.dot(&n) < 0.0 { n } else { -n };
    let cos_i = -d.dot(&n_o);
    let eta = eta_i / eta_o;
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i).max(0.0);
    if sin2_t >= 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    Some(eta * d + (eta * cos_i - cos_t) * n_o)
}

/// Unpolarized Fresnel reflectance for a dielectric interface. cos_i is
/// measured against the incoming-side normal; sign is ignored.
pub fn fresnel_dielectric(cos_i: f64, eta_i: f64, eta_o: f64) -> f64 {
    let ci = cos_i.abs().min(1.0);
    let sin2_t = (eta_i / eta_o).powi(2) * (1.0 - ci * ci);
    if sin2_t >= 1.0 {
        return 1.0;
    }
    let ct = (1.0 - sin2_t).sqrt();
    let rs = (eta_i * ci - eta_o * ct) / (eta_i * ci + eta_o * ct);
    let rp = (eta_o * ci - eta_i * ct) / (eta_o * ci + eta_i * ct);
    0.5 * (rs * rs + rp * rp)
}

#[derive(Clone, Copy, Debug)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    pub fn diagonal(&self) -> f64 {
        if self.min.x > self.max.x {
            0.0
        } else {
            (self.max - self.min).norm()
        }
    }
}

impl Shape {
    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        match self.kind {
            ShapeKind::Quad { origin, edge_u, edge_v } => {
                for su in [-1.0, 1.0] {
                    for sv in [-1.0, 1.0] {
                        b.grow(origin + su * edge_u + sv * edge_v);
                    }
                }
            }
            ShapeKind::Sphere { center, radius } => {
                b.grow(center - Vec3::repeat(radius));
                b.grow(center + Vec3::repeat(radius));
            }
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::stream_rng;
    use rand::Rng;

    fn unit_sphere() -> Shape {
        Shape {
            kind: ShapeKind::Sphere { center: Vec3::zeros(), radius: 1.0 },
            material: 0,
            emitter: None,
        }
    }

    fn floor_quad() -> Shape {
        Shape {
            kind: ShapeKind::Quad {
                origin: Vec3::zeros(),
                edge_u: Vec3::new(2.0, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 2.0, 0.0),
            },
            material: 0,
            emitter: None,
        }
    }

    #[test]
    fn quad_hit_and_params() {
        let q = floor_quad();
        let r = Ray::new(Vec3::new(0.5, -1.0, 1.0), Vec3::new(0.0, 0.0, -1.0), 1e-6);
        let it = q.intersect(&r, 0).unwrap();
        assert!((it.t - 1.0).abs() < 1e-12);
        assert!((it.p - Vec3::new(0.5, -1.0, 0.0)).norm() < 1e-12);
        assert!((it.uv[0] - 0.25).abs() < 1e-12);
        assert!((it.uv[1] + 0.5).abs() < 1e-12);
        assert!((it.n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn quad_edge_graze_outside_extents_misses() {
        let q = floor_quad();
        let r = Ray::new(Vec3::new(2.0001, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0), 1e-6);
        assert!(q.intersect(&r, 0).is_none());
    }

    #[test]
    fn sphere_hit_front_and_inside() {
        let s = unit_sphere();
        let r = Ray::new(Vec3::new(0.0, 0.0, 3.0), Vec3::new(0.0, 0.0, -1.0), 1e-6);
        let it = s.intersect(&r, 0).unwrap();
        assert!((it.t - 2.0).abs() < 1e-12);
        assert!((it.p - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        // From the center, the far intersection is picked.
        let r2 = Ray::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), 1e-6);
        let it2 = s.intersect(&r2, 0).unwrap();
        assert!((it2.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intersect_is_bitwise_deterministic() {
        let s = unit_sphere();
        let r = Ray::new(Vec3::new(0.1, 0.2, 3.0), Vec3::new(-0.02, 0.01, -1.0).normalize(), 1e-6);
        let a = s.intersect(&r, 0).unwrap();
        let b = s.intersect(&r, 0).unwrap();
        assert_eq!(a.t.to_bits(), b.t.to_bits());
        assert_eq!(a.p.x.to_bits(), b.p.x.to_bits());
    }

    #[test]
    fn reflect_matches_mirror_example() {
        let d = Vec3::new(1.0, 0.0, -1.0).normalize();
        let out = reflect(d, Vec3::new(0.0, 0.0, 1.0));
        assert!((out - Vec3::new(1.0, 0.0, 1.0).normalize()).norm() < 1e-15);
    }

    #[test]
    fn reflect_involution_many() {
        let mut rng = stream_rng(&[42]);
        for _ in 0..1_000_000 {
            let d = crate::math::dir_from_spherical(
                rng.gen::<f64>() * std::f64::consts::PI,
                rng.gen::<f64>() * TAU,
            );
            let n = crate::math::dir_from_spherical(
                rng.gen::<f64>() * std::f64::consts::PI,
                rng.gen::<f64>() * TAU,
            );
            let twice = reflect(reflect(d, n), n);
            assert!((twice - d).norm() <= 1e-12);
        }
    }

    #[test]
    fn refract_preserves_tangential_wave_vector() {
        let mut rng = stream_rng(&[43]);
        let n = Vec3::new(0.0, 0.0, 1.0);
        for _ in 0..10_000 {
            let (ei, eo) = if rng.gen::<bool>() { (1.0, 1.5) } else { (1.5, 1.0) };
            let theta = rng.gen::<f64>() * std::f64::consts::FRAC_PI_2 * 0.999;
            let phi = rng.gen::<f64>() * TAU;
            let d = -crate::math::dir_from_spherical(theta, phi); // downward onto z=0
            if let Some(t) = refract(d, n, ei, eo) {
                assert!((t.norm() - 1.0).abs() < 1e-12);
                let tang_in = ei * Vec3::new(d.x, d.y, 0.0);
                let tang_out = eo * Vec3::new(t.x, t.y, 0.0);
                assert!((tang_in - tang_out).norm() < 1e-9);
            } else {
                // Only the dense-to-rare side may TIR.
                assert!(ei > eo);
                assert!(theta.sin() >= eo / ei - 1e-9);
            }
        }
    }

    #[test]
    fn refract_tir_at_critical_angle() {
        let n = Vec3::new(0.0, 0.0, 1.0);
        let crit = (1.0f64 / 1.5).asin();
        let below = crate::math::dir_from_spherical(std::f64::consts::PI - (crit - 1e-4), 0.0);
        let above = crate::math::dir_from_spherical(std::f64::consts::PI - (crit + 1e-4), 0.0);
        assert!(refract(below, n, 1.5, 1.0).is_some());
        assert!(refract(above, n, 1.5, 1.0).is_none());
    }

    #[test]
    fn fresnel_normal_incidence_and_grazing() {
        let f0 = fresnel_dielectric(1.0, 1.0, 1.5);
        assert!((f0 - 0.04).abs() < 1e-12);
        let fg = fresnel_dielectric(1e-8, 1.0, 1.5);
        assert!(fg > 0.999);
        assert!(fresnel_dielectric(0.3, 1.5, 1.0) == 1.0); // beyond critical
    }

    #[test]
    fn sphere_frame_and_param_derivs_match_fd() {
        let s = Shape {
            kind: ShapeKind::Sphere { center: Vec3::new(0.3, -0.2, 0.1), radius: 2.0 },
            material: 0,
            emitter: None,
        };
        let uv = [1.1, 2.3];
        let h = 1e-6;
        let (dpu, dpv) = s.param_derivs(uv);
        let fd_u = (s.point_at([uv[0] + h, uv[1]]) - s.point_at([uv[0] - h, uv[1]])) / (2.0 * h);
        let fd_v = (s.point_at([uv[0], uv[1] + h]) - s.point_at([uv[0], uv[1] - h])) / (2.0 * h);
        assert!((dpu - fd_u).norm() < 1e-8);
        assert!((dpv - fd_v).norm() < 1e-8);

        let [duu, duv, dvu, dvv] = s.frame_derivs(uv);
        let (tu_p, tv_p, _) = s.frame_at([uv[0] + h, uv[1]]);
        let (tu_m, tv_m, _) = s.frame_at([uv[0] - h, uv[1]]);
        assert!((duu - (tu_p - tu_m) / (2.0 * h)).norm() < 1e-8);
        assert!((dvu - (tv_p - tv_m) / (2.0 * h)).norm() < 1e-8);
        let (tu_p2, tv_p2, _) = s.frame_at([uv[0], uv[1] + h]);
        let (tu_m2, tv_m2, _) = s.frame_at([uv[0], uv[1] - h]);
        assert!((duv - (tu_p2 - tu_m2) / (2.0 * h)).norm() < 1e-8);
        assert!((dvv - (tv_p2 - tv_m2) / (2.0 * h)).norm() < 1e-8);
    }

    #[test]
    fn shape_operator_matches_normal_field_derivative() {
        // Walk along a tangent by arc length ds; the normal must tilt by
        // S * ds with S = I/r on a sphere and S = 0 on a quad.
        let r = 2.0;
        let s = Shape {
            kind: ShapeKind::Sphere { center: Vec3::zeros(), radius: r },
            material: 0,
            emitter: None,
        };
        let uv = [0.9, 0.7];
        let it = s.interaction_at(uv, 0);
        let ds = 1e-5;
        // Move along t_u: dtheta = ds / r.
        let n2 = s.normal_at([uv[0] + ds / r, uv[1]]);
        let dn = (n2 - it.n) / ds;
        assert!((dn - it.t_u / r).norm() < 1e-5);
        // Move along t_v: dphi = ds / (r sin theta).
        let n3 = s.normal_at([uv[0], uv[1] + ds / (r * uv[0].sin())]);
        let dn2 = (n3 - it.n) / ds;
        assert!((dn2 - it.t_v / r).norm() < 1e-5);
        assert!(s.shape_operator(uv)[(0, 0)] == 1.0 / r);
        assert!(floor_quad().shape_operator([0.0, 0.0]).norm() == 0.0);
    }

    #[test]
    fn sphere_canonical_uv_folds_poles() {
        let s = unit_sphere();
        let c = s.canonical_uv([-0.2, 1.0]);
        assert!((c[0] - 0.2).abs() < 1e-12);
        assert!((c[1] - (1.0 + PI)).abs() < 1e-12);
        let c2 = s.canonical_uv([PI + 0.3, 0.5]);
        assert!((c2[0] - (PI - 0.3)).abs() < 1e-12);
        // Position is preserved by canonicalization.
        let raw = [-1.3, 4.0];
        assert!((s.point_at(raw) - s.point_at(s.canonical_uv(raw))).norm() < 1e-12);
    }

    #[test]
    fn areas_and_uniform_sampling() {
        assert!((floor_quad().area() - 16.0).abs() < 1e-12);
        assert!((unit_sphere().area() - 4.0 * PI).abs() < 1e-12);
        // Uniform sphere sampling: mean position tends to the center.
        let s = unit_sphere();
        let mut rng = stream_rng(&[7]);
        let mut mean = Vec3::zeros();
        let n = 100_000;
        for _ in 0..n {
            mean += s.point_at(s.sample_area(rng.gen(), rng.gen()));
        }
        assert!((mean / n as f64).norm() < 0.01);
    }
}
