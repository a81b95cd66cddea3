//! Small numeric helpers shared across the crate. All transport math runs in
//! f64; f32 appears only in stored sample records and image output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Rgb = nalgebra::Vector3<f64>;

pub fn luminance(c: Rgb) -> f64 {
    0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z
}

/// Right-handed orthonormal frame completion: returns (t1, t2) with
/// t1 x t2 = n for unit n. Branch on the dominant axis keeps it stable.
pub fn basis_from_normal(n: Vec3) -> (Vec3, Vec3) {
    let t1 = if n.x.abs() > 0.9 {
        Vec3::new(0.0, 1.0, 0.0).cross(&n).normalize()
    } else {
        Vec3::new(1.0, 0.0, 0.0).cross(&n).normalize()
    };
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Unit direction from spherical angles, z-up: theta from +z, phi around z.
pub fn dir_from_spherical(theta: f64, phi: f64) -> Vec3 {
    let st = theta.sin();
    Vec3::new(st * phi.cos(), st * phi.sin(), theta.cos())
}

pub fn spherical_from_dir(d: Vec3) -> (f64, f64) {
    (d.z.clamp(-1.0, 1.0).acos(), d.y.atan2(d.x))
}

/// Angle between two unit vectors, stable near 0 and pi.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    2.0 * ((a - b).norm() / 2.0).clamp(-1.0, 1.0).asin()
}

/// SplitMix64 step; used to derive independent RNG streams from ids.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-task RNG stream. Output depends only on the ids, never
/// on scheduling, so renders are bitwise reproducible at any thread count.
pub fn stream_rng(ids: &[u64]) -> ChaCha8Rng {
    let mut state = 0x243f6a8885a308d3u64;
    for &id in ids {
        state = splitmix64(state ^ id);
    }
    ChaCha8Rng::seed_from_u64(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let mut rng = stream_rng(&[1]);
        use rand::Rng;
        for _ in 0..1000 {
            let n = dir_from_spherical(
                rng.gen::<f64>() * std::f64::consts::PI,
                rng.gen::<f64>() * std::f64::consts::TAU,
            );
            let (t1, t2) = basis_from_normal(n);
            assert!(t1.dot(&n).abs() < 1e-12);
            assert!(t2.dot(&n).abs() < 1e-12);
            assert!(t1.dot(&t2).abs() < 1e-12);
            assert!((t1.cross(&t2) - n).norm() < 1e-12);
        }
    }

    #[test]
    fn spherical_round_trip() {
        let d = Vec3::new(0.3, -0.4, 0.866).normalize();
        let (t, p) = spherical_from_dir(d);
        assert!((dir_from_spherical(t, p) - d).norm() < 1e-12);
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        use rand::Rng;
        let a: u64 = stream_rng(&[7, 9]).gen();
        let b: u64 = stream_rng(&[7, 9]).gen();
        let c: u64 = stream_rng(&[9, 7]).gen();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
