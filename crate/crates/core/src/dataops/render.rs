//! Rasterization of the class-determined polygon in each domain's style.

use super::domain::{DomainId, DomainSpec};
use crate::numerics::RngStream;

/// Relative radius of vertex `j` of class `class`, in [0.45, 1]: a fixed
/// irregular profile per class.
fn radius_profile(class: usize, j: usize) -> f64 {
    let mut z = (class as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 31)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 29;
    0.45 + 0.55 * (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Polygon for `class`: `class + 3` vertices at the class's radius profile.
pub(crate) fn class_polygon(class: usize, cx: f64, cy: f64, radius: f64, rotation: f64) -> Vec<(f64, f64)> {
    let m = class + 3;
    (0..m)
        .map(|j| {
            let r = radius * radius_profile(class, j);
            let a = rotation + 2.0 * std::f64::consts::PI * j as f64 / m as f64 - std::f64::consts::FRAC_PI_2;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn inside(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut c = false;
    let n = poly.len();
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            c = !c;
        }
    }
    c
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Fractional fill coverage (4×4 supersampling) and outline intensity per pixel.
fn rasterize(poly: &[(f64, f64)], size: usize, stroke: f64) -> (Vec<f64>, Vec<f64>) {
    let mut fill = vec![0.0; size * size];
    let mut line = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            let mut hits = 0;
            for sy in 0..4 {
                for sx in 0..4 {
                    if inside(poly, x as f64 + (sx as f64 + 0.5) / 4.0, y as f64 + (sy as f64 + 0.5) / 4.0) {
                        hits += 1;
                    }
                }
            }
            fill[y * size + x] = hits as f64 / 16.0;
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let d = (0..poly.len())
                .map(|i| segment_distance(p, poly[i], poly[(i + 1) % poly.len()]))
                .fold(f64::INFINITY, f64::min);
            line[y * size + x] = (1.0 - d / stroke).clamp(0.0, 1.0);
        }
    }
    (fill, line)
}

fn blur(img: &[f64], size: usize) -> Vec<f64> {
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let at = |v: &[f64], y: isize, x: isize| {
        let y = y.clamp(0, size as isize - 1) as usize;
        let x = x.clamp(0, size as isize - 1) as usize;
        v[y * size + x]
    };
    let mut tmp = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = (0..3).map(|k| K[k] * at(img, y as isize, x as isize + k as isize - 1)).sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = (0..3).map(|k| K[k] * at(&tmp, y as isize + k as isize - 1, x as isize)).sum();
        }
    }
    out
}

fn color(rng: &mut RngStream, lo: f64, hi: f64) -> [f64; 3] {
    [lo + (hi - lo) * rng.next_f64(), lo + (hi - lo) * rng.next_f64(), lo + (hi - lo) * rng.next_f64()]
}

/// Renders one HWC image with values in [0, 1].
pub(crate) fn render(spec: &DomainSpec, class: usize, rng: &mut RngStream) -> Vec<f32> {
    let size = spec.image_size;
    let half = size as f64 / 2.0;
    let cx = half + (rng.next_f64() - 0.5) * 2.0 * spec.style.center_jitter;
    let cy = half + (rng.next_f64() - 0.5) * 2.0 * spec.style.center_jitter;
    let radius = spec.style.radius * size as f64 / 16.0 * (1.0 + (rng.next_f64() - 0.5) * 0.3);
    let rotation = (rng.next_f64() - 0.5) * 2.0 * spec.style.rotation_jitter;
    let poly = class_polygon(class, cx, cy, radius, rotation);
    let (fill, line) = rasterize(&poly, size, spec.style.stroke);
    let mut out = vec![0.0f64; size * size * 3];
    match spec.domain_id {
        DomainId::Source | DomainId::RealLike => {
            let base = color(rng, 0.2, 0.8);
            // Foreground sits at least 0.3 away from the background in every channel.
            let mut fg = [0.0; 3];
            for (f, b) in fg.iter_mut().zip(base) {
                let step = 0.3 + 0.2 * rng.next_f64();
                *f = if rng.next_f64() < 0.5 && b - step >= 0.0 || b + step > 1.0 { b - step } else { b + step };
            }
            // Smooth lighting ramp plus per-pixel texture.
            let gx = (rng.next_f64() - 0.5) * spec.style.gradient;
            let gy = (rng.next_f64() - 0.5) * spec.style.gradient;
            for y in 0..size {
                for x in 0..size {
                    let ramp = gx * (x as f64 / size as f64 - 0.5) + gy * (y as f64 / size as f64 - 0.5);
                    let c = fill[y * size + x];
                    for ch in 0..3 {
                        let bg = base[ch] + ramp + spec.style.noise * rng.next_normal();
                        let fgv = fg[ch] + spec.style.fill_noise * rng.next_normal();
                        out[(y * size + x) * 3 + ch] = bg * (1.0 - c) + fgv * c;
                    }
                }
            }
        }
        DomainId::ClipartLike => {
            let bg = color(rng, 0.75, 1.0);
            let fg = color(rng, 0.0, 0.9);
            for i in 0..size * size {
                let c = fill[i];
                let l = line[i];
                for ch in 0..3 {
                    let v = bg[ch] * (1.0 - c) + fg[ch] * c;
                    out[i * 3 + ch] = v * (1.0 - l) + 0.05 * l;
                }
            }
        }
        DomainId::QuickdrawLike => {
            for i in 0..size * size {
                let v = 1.0 - line[i];
                out[i * 3..i * 3 + 3].fill(v);
            }
        }
        DomainId::XrayLike => {
            let soft = blur(&blur(&fill, size), size);
            let bg = 0.3 + 0.1 * rng.next_f64();
            for i in 0..size * size {
                let v = bg + 0.18 * soft[i] + spec.style.noise * rng.next_normal();
                out[i * 3..i * 3 + 3].fill(v);
            }
        }
    }
    out.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect()
}
