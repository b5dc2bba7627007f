//! Height-queryable test environments: flat floor, bounded incline runway,
//! a six-step staircase with vertical risers, and a value-noise heightfield.

use alloc::vec::Vec;

use crate::dynamics::contact::Material;
use crate::math::Vec3;
use crate::rng::lattice_uniform;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StairDirection {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum TerrainKind {
    Flat,
    /// Plane `z = tan(angle) x` on a runway starting at `x = 0`; `length` is
    /// measured along the slope, `width` across it.
    Incline { angle_deg: f64, length: f64, width: f64 },
    /// Treads `k = 0..steps` occupy `x >= k run` at height `(k + 1) rise`.
    Stairs {
        steps: u32,
        rise: f64,
        run: f64,
        half_width: f64,
        direction: StairDirection,
    },
    Heightfield { seed: u64, rms_amp: f64, corr_len: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerrainError {
    InvalidParameters(&'static str),
    WrongTerrain,
}

impl core::fmt::Display for TerrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TerrainError::InvalidParameters(why) => write!(f, "invalid terrain: {why}"),
            TerrainError::WrongTerrain => write!(f, "operation requires stairs terrain"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TerrainError {}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Terrain {
    pub kind: TerrainKind,
    pub material: Material,
}

/// One sphere-vs-surface penetration. `point` lies on the surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceHit {
    pub point: Vec3,
    pub normal: Vec3,
    pub depth: f64,
}

const HF_DIFF: f64 = 1e-3;

impl Terrain {
    pub fn flat() -> Terrain {
        Terrain {
            kind: TerrainKind::Flat,
            material: Material::with_mu(0.45),
        }
    }

    pub fn incline(angle_deg: f64) -> Terrain {
        Terrain {
            kind: TerrainKind::Incline {
                angle_deg,
                length: 0.85,
                width: 0.50,
            },
            material: Material::with_mu(1.3),
        }
    }

    pub fn stairs(direction: StairDirection) -> Terrain {
        Terrain {
            kind: TerrainKind::Stairs {
                steps: 6,
                rise: 0.025,
                run: 0.25,
                half_width: 0.25,
                direction,
            },
            material: Material::with_mu(0.55),
        }
    }

    pub fn heightfield(seed: u64, rms_amp: f64, corr_len: f64) -> Terrain {
        Terrain {
            kind: TerrainKind::Heightfield {
                seed,
                rms_amp,
                corr_len,
            },
            material: Material::with_mu(0.5),
        }
    }

    /// Pebble-bed proxy.
    pub fn pebbles(seed: u64) -> Terrain {
        Terrain::heightfield(seed, 0.012, 0.04)
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if !self.material.is_valid() {
            return Err(TerrainError::InvalidParameters("material constants out of range"));
        }
        match self.kind {
            TerrainKind::Flat => Ok(()),
            TerrainKind::Incline {
                angle_deg,
                length,
                width,
            } => {
                if !(0.0..=45.0).contains(&angle_deg) {
                    Err(TerrainError::InvalidParameters("incline angle must lie in [0, 45] degrees"))
                } else if !(length > 0.0 && width > 0.0) {
                    Err(TerrainError::InvalidParameters("runway dimensions must be positive"))
                } else {
                    Ok(())
                }
            }
            TerrainKind::Stairs {
                steps,
                rise,
                run,
                half_width,
                ..
            } => {
                if steps == 0 || !(rise > 0.0 && run > 0.0 && half_width > 0.0) {
                    Err(TerrainError::InvalidParameters("stairs need steps >= 1 and positive rise, run, width"))
                } else {
                    Ok(())
                }
            }
            TerrainKind::Heightfield { rms_amp, corr_len, .. } => {
                if !(rms_amp >= 0.0 && rms_amp.is_finite() && corr_len > 0.0) {
                    Err(TerrainError::InvalidParameters("heightfield needs rms_amp >= 0 and corr_len > 0"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Top surface height. Beside a runway or track this is the floor.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        match self.kind {
            TerrainKind::Flat => 0.0,
            TerrainKind::Incline {
                angle_deg,
                length,
                width,
            } => {
                if x < 0.0 {
                    return 0.0;
                }
                if y.abs() > 0.5 * width {
                    return 0.0;
                }
                let (s, c) = libm::sincos(deg(angle_deg));
                let end = length * c;
                if x <= end {
                    x * libm::tan(deg(angle_deg))
                } else {
                    length * s
                }
            }
            TerrainKind::Stairs {
                steps,
                rise,
                run,
                half_width,
                ..
            } => {
                if y.abs() > half_width {
                    0.0
                } else {
                    rise * stair_tread(x, run, steps) as f64
                }
            }
            TerrainKind::Heightfield {
                seed,
                rms_amp,
                corr_len,
            } => value_noise(seed, rms_amp, corr_len, x, y),
        }
    }

    pub fn surface_normal(&self, x: f64, y: f64) -> Vec3 {
        match self.kind {
            TerrainKind::Flat | TerrainKind::Stairs { .. } => Vec3::Z,
            TerrainKind::Incline {
                angle_deg, length, ..
            } => {
                let a = deg(angle_deg);
                if x >= 0.0 && x <= length * libm::cos(a) {
                    let (s, c) = libm::sincos(a);
                    Vec3::new(-s, 0.0, c)
                } else {
                    Vec3::Z
                }
            }
            TerrainKind::Heightfield { rms_amp, .. } => {
                if rms_amp == 0.0 {
                    return Vec3::Z;
                }
                let h = HF_DIFF;
                let dx = (self.height_at(x + h, y) - self.height_at(x - h, y)) / (2.0 * h);
                let dy = (self.height_at(x, y + h) - self.height_at(x, y - h)) / (2.0 * h);
                Vec3::new(-dx, -dy, 1.0).try_normalize().unwrap_or(Vec3::Z)
            }
        }
    }

    /// True when the horizontal position has left the runway or track.
    pub fn is_off_runway(&self, position: Vec3) -> bool {
        match self.kind {
            TerrainKind::Flat | TerrainKind::Heightfield { .. } => false,
            TerrainKind::Incline { width, .. } => position.x >= 0.0 && position.y.abs() > 0.5 * width,
            TerrainKind::Stairs { half_width, .. } => position.y.abs() > half_width,
        }
    }

    /// Horizontal x at which the incline runway ends.
    pub fn runway_end_x(&self) -> Option<f64> {
        match self.kind {
            TerrainKind::Incline {
                angle_deg, length, ..
            } => Some(length * libm::cos(deg(angle_deg))),
            _ => None,
        }
    }

    /// Appends every surface within `margin` of a sphere to `out`; `depth`
    /// is positive when the sphere penetrates.
    pub fn sphere_hits(&self, center: Vec3, radius: f64, margin: f64, out: &mut Vec<SurfaceHit>) {
        let reach = radius + margin;
        match self.kind {
            TerrainKind::Flat => plane_hit(center, radius, reach, Vec3::ZERO, Vec3::Z, out),
            TerrainKind::Incline {
                angle_deg,
                length,
                width,
            } => {
                let half = 0.5 * width;
                floor_hit(center, radius, reach, half, out);
                let prof = ramp_profile(center.x, center.z, deg(angle_deg), length);
                prism_hit(center, radius, reach, half, prof, out);
            }
            TerrainKind::Stairs {
                steps,
                rise,
                run,
                half_width,
                ..
            } => {
                floor_hit(center, radius, reach, half_width, out);
                for k in 0..steps {
                    let prof = quadrant_profile(center.x, center.z, k as f64 * run, (k + 1) as f64 * rise);
                    prism_hit(center, radius, reach, half_width, prof, out);
                }
            }
            TerrainKind::Heightfield { .. } => {
                let z = self.height_at(center.x, center.y);
                let n = self.surface_normal(center.x, center.y);
                plane_hit(center, radius, reach, Vec3::new(center.x, center.y, z), n, out);
            }
        }
    }
}

#[inline]
fn deg(d: f64) -> f64 {
    d * core::f64::consts::PI / 180.0
}

/// Number of the tread under `x`: 0 before the first riser, capped at `steps`.
pub fn stair_tread(x: f64, run: f64, steps: u32) -> u32 {
    if x < 0.0 {
        0
    } else {
        let k = libm::floor(x / run) + 1.0;
        if k >= steps as f64 {
            steps
        } else {
            k as u32
        }
    }
}

fn plane_hit(c: Vec3, radius: f64, reach: f64, p0: Vec3, n: Vec3, out: &mut Vec<SurfaceHit>) {
    let d = (c - p0).dot(n);
    if d < reach {
        out.push(SurfaceHit {
            point: c - n * d,
            normal: n,
            depth: radius - d,
        });
    }
}

/// Closest boundary point of a convex x-z profile region. `dist` is
/// negative inside; `(nx, nz)` is the outward unit normal at the point.
#[derive(Clone, Copy, Debug)]
struct Profile {
    px: f64,
    pz: f64,
    nx: f64,
    nz: f64,
    dist: f64,
}

/// Floor plane `z = 0`, except where a runway solid of the given
/// half-width covers it (`x >= 0`).
fn floor_hit(c: Vec3, radius: f64, reach: f64, half_width: f64, out: &mut Vec<SurfaceHit>) {
    if c.z < reach && (c.x < 0.0 || c.y.abs() > half_width) {
        out.push(SurfaceHit {
            point: Vec3::new(c.x, c.y, 0.0),
            normal: Vec3::Z,
            depth: radius - c.z,
        });
    }
}

/// Profile `{x >= corner_x, z <= top}` of one stair block.
fn quadrant_profile(cx: f64, cz: f64, corner_x: f64, top: f64) -> Profile {
    if cx >= corner_x && cz <= top {
        let up = top - cz;
        let back = cx - corner_x;
        return if up <= back {
            Profile { px: cx, pz: top, nx: 0.0, nz: 1.0, dist: -up }
        } else {
            Profile { px: corner_x, pz: cz, nx: -1.0, nz: 0.0, dist: -back }
        };
    }
    let px = cx.max(corner_x);
    let pz = cz.min(top);
    let (dx, dz) = (cx - px, cz - pz);
    let d = libm::hypot(dx, dz);
    Profile { px, pz, nx: dx / d, nz: dz / d, dist: d }
}

/// Profile `{x >= 0, z <= min(x tan(a), length sin(a))}` of the ramp and
/// its plateau.
fn ramp_profile(cx: f64, cz: f64, a: f64, length: f64) -> Profile {
    let (s, c) = libm::sincos(a);
    let (end, top) = (length * c, length * s);
    let ramp_d = c * cz - s * cx;
    let inside = cx >= 0.0 && ramp_d <= 0.0 && cz <= top;
    if inside {
        let plateau_d = cz - top;
        return if ramp_d >= plateau_d {
            Profile { px: cx + s * ramp_d, pz: cz - c * ramp_d, nx: -s, nz: c, dist: ramp_d }
        } else {
            Profile { px: cx, pz: top, nx: 0.0, nz: 1.0, dist: plateau_d }
        };
    }
    // nearest point on the ramp segment, then on the plateau ray
    let along = (cx * c + cz * s).clamp(0.0, length);
    let (rx, rz) = (along * c, along * s);
    let rd = libm::hypot(cx - rx, cz - rz);
    let qx = cx.max(end);
    let qd = libm::hypot(cx - qx, cz - top);
    let (px, pz, d) = if rd <= qd { (rx, rz, rd) } else { (qx, top, qd) };
    if d > 0.0 {
        Profile { px, pz, nx: (cx - px) / d, nz: (cz - pz) / d, dist: d }
    } else if px < end {
        Profile { px, pz, nx: -s, nz: c, dist: 0.0 }
    } else {
        Profile { px, pz, nx: 0.0, nz: 1.0, dist: 0.0 }
    }
}

/// Contact with the profile extruded over `|y| <= half_width`, including
/// the side walls and their top edges.
fn prism_hit(c: Vec3, radius: f64, reach: f64, half_width: f64, p: Profile, out: &mut Vec<SurfaceHit>) {
    let side = if c.y >= 0.0 { 1.0 } else { -1.0 };
    let e = c.y.abs() - half_width;
    let hit = if e <= 0.0 {
        if p.dist >= 0.0 || p.dist >= e {
            // above the profile, or inside and nearer the profile boundary
            SurfaceHit {
                point: Vec3::new(p.px, c.y, p.pz),
                normal: Vec3::new(p.nx, 0.0, p.nz),
                depth: radius - p.dist,
            }
        } else {
            SurfaceHit {
                point: Vec3::new(c.x, side * half_width, c.z),
                normal: Vec3::new(0.0, side, 0.0),
                depth: radius - e,
            }
        }
    } else if p.dist > 0.0 {
        let d = libm::hypot(p.dist, e);
        SurfaceHit {
            point: Vec3::new(p.px, side * half_width, p.pz),
            normal: Vec3::new(p.nx * p.dist / d, side * e / d, p.nz * p.dist / d),
            depth: radius - d,
        }
    } else {
        SurfaceHit {
            point: Vec3::new(c.x, side * half_width, c.z),
            normal: Vec3::new(0.0, side, 0.0),
            depth: radius - e,
        }
    };
    if radius - hit.depth < reach {
        out.push(hit);
    }
}

/// Cosine-interpolated lattice noise. Node values are uniform with standard
/// deviation `rms / 0.75`; bi-cosine blending scales variance by `(3/4)^2`.
fn value_noise(seed: u64, rms: f64, corr: f64, x: f64, y: f64) -> f64 {
    if rms == 0.0 {
        return 0.0;
    }
    let half_width = rms / 0.75 * libm::sqrt(3.0);
    let gx = x / corr;
    let gy = y / corr;
    let (i, j) = (libm::floor(gx), libm::floor(gy));
    let (u, v) = (blend(gx - i), blend(gy - j));
    let (i, j) = (i as i64, j as i64);
    let n = |a: i64, b: i64| lattice_uniform(seed, a, b) * half_width;
    let top = n(i, j) * (1.0 - u) + n(i + 1, j) * u;
    let bottom = n(i, j + 1) * (1.0 - u) + n(i + 1, j + 1) * u;
    top * (1.0 - v) + bottom * v
}

#[inline]
fn blend(t: f64) -> f64 {
    0.5 * (1.0 - libm::cos(core::f64::consts::PI * t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stairs_examples() {
        let s = Terrain::stairs(StairDirection::Up);
        assert!((s.height_at(0.30, 0.0) - 0.05).abs() < 1e-15);
        assert_eq!(s.height_at(-0.1, 0.0), 0.0);
        assert!((s.height_at(10.0, 0.0) - 0.15).abs() < 1e-15);
        assert_eq!(stair_tread(0.0, 0.25, 6), 1);
        assert_eq!(stair_tread(1.2499, 0.25, 6), 5);
        assert_eq!(stair_tread(1.25, 0.25, 6), 6);
    }

    #[test]
    fn incline_examples() {
        let t = Terrain::incline(20.0);
        assert!((t.height_at(0.5, 0.0) - 0.18199).abs() < 1e-5);
        let n = Terrain::incline(10.0).surface_normal(0.2, 0.0);
        let a = 10f64.to_radians();
        assert!((n - Vec3::new(-a.sin(), 0.0, a.cos())).max_abs() < 1e-15);
        assert_eq!(t.height_at(0.2, 0.3), 0.0);
        assert_eq!(t.height_at(-0.2, 0.3), 0.0);
    }

    #[test]
    fn runway_bounds() {
        assert!(!Terrain::flat().is_off_runway(Vec3::new(3.0, 9.0, 0.0)));
        assert!(Terrain::incline(15.0).is_off_runway(Vec3::new(0.3, 0.26, 0.0)));
        assert!(!Terrain::incline(15.0).is_off_runway(Vec3::new(0.3, 0.24, 0.0)));
        assert!(!Terrain::stairs(StairDirection::Up).is_off_runway(Vec3::new(0.3, 0.0, 0.0)));
        assert!(!Terrain::pebbles(1).is_off_runway(Vec3::new(0.3, 5.0, 0.0)));
    }

    #[test]
    fn flat_heightfield_normal() {
        let t = Terrain::heightfield(5, 0.0, 0.04);
        for i in 0..20 {
            let x = i as f64 * 0.013;
            assert_eq!(t.surface_normal(x, -x), Vec3::Z);
            assert_eq!(t.height_at(x, x), 0.0);
        }
        assert_eq!(Terrain::flat().surface_normal(1.0, 2.0), Vec3::Z);
    }

    #[test]
    fn heightfield_rms() {
        let t = Terrain::pebbles(42);
        let mut sum = 0.0;
        let n = 10_000;
        let mut state = 0x1234_5678u64;
        for _ in 0..n {
            state = crate::rng::splitmix64(state);
            let x = (state >> 11) as f64 / (1u64 << 53) as f64 * 8.0;
            state = crate::rng::splitmix64(state);
            let y = (state >> 11) as f64 / (1u64 << 53) as f64 * 8.0;
            let z = t.height_at(x, y);
            sum += z * z;
        }
        let rms = libm::sqrt(sum / n as f64);
        assert!((rms - 0.012).abs() < 0.15 * 0.012, "rms {rms}");
    }

    #[test]
    fn heightfield_is_seeded() {
        let a = Terrain::pebbles(1);
        let b = Terrain::pebbles(2);
        assert_eq!(a.height_at(0.123, 0.456), Terrain::pebbles(1).height_at(0.123, 0.456));
        assert_ne!(a.height_at(0.123, 0.456), b.height_at(0.123, 0.456));
    }

    #[test]
    fn riser_pushes_back() {
        let s = Terrain::stairs(StairDirection::Up);
        let mut hits = Vec::new();
        // sphere on the floor touching the first riser
        s.sphere_hits(Vec3::new(-0.003, 0.0, 0.010), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].normal, -Vec3::X);
        assert!((hits[0].depth - 0.001).abs() < 1e-12);
    }

    #[test]
    fn inner_corner_gives_two_contacts() {
        let s = Terrain::stairs(StairDirection::Up);
        let mut hits = Vec::new();
        s.sphere_hits(Vec3::new(0.2465, 0.0, 0.0285), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn step_edge_normal_is_radial() {
        let s = Terrain::stairs(StairDirection::Up);
        let mut hits = Vec::new();
        let c = Vec3::new(-0.002, 0.0, 0.027);
        s.sphere_hits(c, 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        let n = hits[0].normal;
        let expect = Vec3::new(-0.002, 0.0, 0.002).try_normalize().unwrap();
        assert!((n - expect).max_abs() < 1e-12);
    }

    #[test]
    fn incline_plateau_and_floor() {
        let t = Terrain::incline(15.0);
        let end = t.runway_end_x().unwrap();
        let mut hits = Vec::new();
        t.sphere_hits(Vec3::new(end + 0.1, 0.0, t.height_at(end + 0.1, 0.0) + 0.003), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].normal, Vec3::Z);
        hits.clear();
        t.sphere_hits(Vec3::new(-0.1, 0.0, 0.003), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        hits.clear();
        // beside the runway only the floor is in reach
        t.sphere_hits(Vec3::new(0.1, 0.4, 0.003), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].normal, Vec3::Z);
    }

    #[test]
    fn runway_side_wall_and_edge() {
        let t = Terrain::incline(15.0);
        let top = t.height_at(0.3, 0.0);
        let mut hits = Vec::new();
        // beside the side wall, below the ramp surface
        t.sphere_hits(Vec3::new(0.3, 0.253, 0.5 * top), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].normal, Vec3::Y);
        assert!((hits[0].depth - 0.001).abs() < 1e-12);
        // diagonally off the top edge: normal points from the edge to the center
        hits.clear();
        let a = 15f64.to_radians();
        let n = Vec3::new(-a.sin(), 0.0, a.cos());
        let c = Vec3::new(0.3, 0.25, top) + n * 0.002 + Vec3::new(0.0, 0.002, 0.0);
        t.sphere_hits(c, 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        let expect = (n + Vec3::Y).try_normalize().unwrap();
        assert!((hits[0].normal - expect).max_abs() < 1e-9);
        assert!((hits[0].depth - (0.004 - 0.002 * 2f64.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn ramp_crest_is_continuous() {
        let t = Terrain::incline(20.0);
        let end = t.runway_end_x().unwrap();
        let mut hits = Vec::new();
        for i in 0..41 {
            let x = end - 0.01 + i as f64 * 0.0005;
            hits.clear();
            t.sphere_hits(Vec3::new(x, 0.0, t.height_at(x, 0.0) + 0.0036), 0.004, 0.0, &mut hits);
            assert!(!hits.is_empty(), "no contact at x = {x}");
        }
    }

    #[test]
    fn off_track_stairs_fall_to_floor() {
        let s = Terrain::stairs(StairDirection::Up);
        assert_eq!(s.height_at(0.6, 0.3), 0.0);
        let mut hits = Vec::new();
        s.sphere_hits(Vec3::new(0.6, 0.3, 0.003), 0.004, 0.0, &mut hits);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].normal, Vec3::Z);
    }

    #[test]
    fn validation() {
        assert!(Terrain::incline(50.0).validate().is_err());
        assert!(Terrain::heightfield(1, -0.1, 0.04).validate().is_err());
        assert!(Terrain::stairs(StairDirection::Down).validate().is_ok());
    }
}
