use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{add, cross, dot, norm, scale, sub, Point3};
use crate::rng::FlowRng;

/// Smallest ray parameter counted as a hit.
const RAY_EPS: f64 = 1e-9;

/// Scene building blocks, in meters. Boxes and cylinders are closed solids;
/// a face lying on the ground plane (`z = 0`) is left out of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Primitive {
    /// Box rotated by `yaw` radians about the vertical axis.
    Box {
        center: Point3,
        half_extents: Point3,
        yaw: f64,
    },
    /// Vertical cylinder standing on `base`.
    Cylinder { base: Point3, radius: f64, height: f64 },
    /// Rectangular patch spanned by two orthogonal axes.
    Plane {
        center: Point3,
        u_axis: Point3,
        v_axis: Point3,
        half_u: f64,
        half_v: f64,
    },
}

/// A single analytic surface patch.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    Rect {
        center: Point3,
        u: Point3,
        v: Point3,
        normal: Point3,
        half_u: f64,
        half_v: f64,
    },
    /// Horizontal disk.
    Disk { center: Point3, radius: f64 },
    /// Lateral surface of a vertical cylinder.
    Tube { base: Point3, radius: f64, height: f64 },
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::DegeneratePrimitive(format!("{what} must be > 0, got {v}")))
    }
}

impl Surface {
    pub fn rect(center: Point3, u: Point3, v: Point3, half_u: f64, half_v: f64) -> Result<Self> {
        positive(half_u, "half_u")?;
        positive(half_v, "half_v")?;
        let (nu, nv) = (norm(&u), norm(&v));
        positive(nu, "|u_axis|")?;
        positive(nv, "|v_axis|")?;
        let u = scale(&u, 1.0 / nu);
        let v = scale(&v, 1.0 / nv);
        if dot(&u, &v).abs() > 1e-9 {
            return Err(Error::DegeneratePrimitive("plane axes are not orthogonal".into()));
        }
        let normal = cross(&u, &v);
        Ok(Surface::Rect {
            center,
            u,
            v,
            normal,
            half_u,
            half_v,
        })
    }

    pub fn area(&self) -> f64 {
        match self {
            Surface::Rect { half_u, half_v, .. } => 4.0 * half_u * half_v,
            Surface::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Surface::Tube { radius, height, .. } => 2.0 * std::f64::consts::PI * radius * height,
        }
    }

    /// Uniform draw on the patch.
    pub fn sample(&self, rng: &mut FlowRng) -> Point3 {
        match self {
            Surface::Rect {
                center,
                u,
                v,
                half_u,
                half_v,
                ..
            } => {
                let a = rng.random_range(-1.0..1.0) * half_u;
                let b = rng.random_range(-1.0..1.0) * half_v;
                add(center, &add(&scale(u, a), &scale(v, b)))
            }
            Surface::Disk { center, radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                [center[0] + r * th.cos(), center[1] + r * th.sin(), center[2]]
            }
            Surface::Tube { base, radius, height } => {
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random::<f64>() * height;
                [base[0] + radius * th.cos(), base[1] + radius * th.sin(), base[2] + z]
            }
        }
    }

    /// Smallest ray parameter `t > 0` with `origin + t dir` on the patch.
    pub fn intersect(&self, origin: &Point3, dir: &Point3) -> Option<f64> {
        match self {
            Surface::Rect {
                center,
                u,
                v,
                normal,
                half_u,
                half_v,
            } => {
                let denom = dot(dir, normal);
                if denom == 0.0 {
                    return None;
                }
                let t = dot(&sub(center, origin), normal) / denom;
                if t <= RAY_EPS {
                    return None;
                }
                let rel = sub(&add(origin, &scale(dir, t)), center);
                (dot(&rel, u).abs() <= *half_u && dot(&rel, v).abs() <= *half_v).then_some(t)
            }
            Surface::Disk { center, radius } => {
                if dir[2] == 0.0 {
                    return None;
                }
                let t = (center[2] - origin[2]) / dir[2];
                if t <= RAY_EPS {
                    return None;
                }
                let dx = origin[0] + t * dir[0] - center[0];
                let dy = origin[1] + t * dir[1] - center[1];
                (dx * dx + dy * dy <= radius * radius).then_some(t)
            }
            Surface::Tube { base, radius, height } => {
                let ox = origin[0] - base[0];
                let oy = origin[1] - base[1];
                let a = dir[0] * dir[0] + dir[1] * dir[1];
                if a == 0.0 {
                    return None;
                }
                let b = 2.0 * (ox * dir[0] + oy * dir[1]);
                let c = ox * ox + oy * oy - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let mut roots = [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)];
                roots.sort_by(f64::total_cmp);
                roots.into_iter().find(|&t| {
                    let z = origin[2] + t * dir[2] - base[2];
                    t > RAY_EPS && (0.0..=*height).contains(&z)
                })
            }
        }
    }

    /// Euclidean distance from `p` to the patch.
    pub fn distance(&self, p: &Point3) -> f64 {
        match self {
            Surface::Rect {
                center,
                u,
                v,
                normal,
                half_u,
                half_v,
            } => {
                let rel = sub(p, center);
                let a = dot(&rel, u);
                let b = dot(&rel, v);
                let n = dot(&rel, normal);
                let da = (a.abs() - half_u).max(0.0);
                let db = (b.abs() - half_v).max(0.0);
                (da * da + db * db + n * n).sqrt()
            }
            Surface::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let dr = ((dx * dx + dy * dy).sqrt() - radius).max(0.0);
                let dz = p[2] - center[2];
                (dr * dr + dz * dz).sqrt()
            }
            Surface::Tube { base, radius, height } => {
                let dx = p[0] - base[0];
                let dy = p[1] - base[1];
                let dr = (dx * dx + dy * dy).sqrt() - radius;
                let z = p[2] - base[2];
                let dz = z - z.clamp(0.0, *height);
                (dr * dr + dz * dz).sqrt()
            }
        }
    }
}

impl Primitive {
    /// The surface patches that make up the primitive.
    pub fn surfaces(&self) -> Result<Vec<Surface>> {
        match *self {
            Primitive::Box {
                center,
                half_extents: [hx, hy, hz],
                yaw,
            } => {
                positive(hx, "box half extent x")?;
                positive(hy, "box half extent y")?;
                positive(hz, "box half extent z")?;
                let ex = [yaw.cos(), yaw.sin(), 0.0];
                let ey = [-yaw.sin(), yaw.cos(), 0.0];
                let ez = [0.0, 0.0, 1.0];
                let mut out = vec![
                    Surface::rect(add(&center, &scale(&ex, hx)), ey, ez, hy, hz)?,
                    Surface::rect(sub(&center, &scale(&ex, hx)), ey, ez, hy, hz)?,
                    Surface::rect(add(&center, &scale(&ey, hy)), ex, ez, hx, hz)?,
                    Surface::rect(sub(&center, &scale(&ey, hy)), ex, ez, hx, hz)?,
                    Surface::rect(add(&center, &scale(&ez, hz)), ex, ey, hx, hy)?,
                ];
                if center[2] - hz > 1e-9 {
                    out.push(Surface::rect(sub(&center, &scale(&ez, hz)), ex, ey, hx, hy)?);
                }
                Ok(out)
            }
            Primitive::Cylinder { base, radius, height } => {
                positive(radius, "cylinder radius")?;
                positive(height, "cylinder height")?;
                let mut out = vec![
                    Surface::Tube { base, radius, height },
                    Surface::Disk {
                        center: [base[0], base[1], base[2] + height],
                        radius,
                    },
                ];
                if base[2] > 1e-9 {
                    out.push(Surface::Disk { center: base, radius });
                }
                Ok(out)
            }
            Primitive::Plane {
                center,
                u_axis,
                v_axis,
                half_u,
                half_v,
            } => Ok(vec![Surface::rect(center, u_axis, v_axis, half_u, half_v)?]),
        }
    }

    /// Horizontal radius of a disk around the origin of the primitive's
    /// footprint: `(center_x, center_y, radius)`.
    pub fn footprint(&self) -> (f64, f64, f64) {
        match *self {
            Primitive::Box {
                center,
                half_extents: [hx, hy, _],
                ..
            } => (center[0], center[1], (hx * hx + hy * hy).sqrt()),
            Primitive::Cylinder { base, radius, .. } => (base[0], base[1], radius),
            Primitive::Plane {
                center, half_u, half_v, ..
            } => (center[0], center[1], (half_u * half_u + half_v * half_v).sqrt()),
        }
    }
}
