//! Small dense helpers shared by the geometric modules.

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Volume of the unit ball in `R^k`, `pi^(k/2) / Gamma(k/2 + 1)`.
///
/// Uses the two-step recursion `w_k = 2 pi / k * w_(k-2)` from `w_0 = 1`,
/// `w_1 = 2`, which is exact in closed form for every `k`.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / k as f64 * unit_ball_volume(k - 2),
    }
}

/// `n`-volume of the unit sphere `S^n`, equal to `(n + 1) * w_(n+1)`.
pub fn unit_sphere_volume(n: usize) -> f64 {
    (n as f64 + 1.0) * unit_ball_volume(n + 1)
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Determinant of the square matrix whose columns are `cols`.
pub fn det_columns(cols: &[Vec<f64>]) -> f64 {
    let k = cols.len();
    match k {
        0 => 1.0,
        1 => cols[0][0],
        2 => cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1],
        3 => {
            let (a, b, c) = (&cols[0], &cols[1], &cols[2]);
            a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1])
                + c[0] * (a[1] * b[2] - a[2] * b[1])
        }
        _ => DMatrix::from_fn(k, k, |i, j| cols[j][i]).determinant(),
    }
}

/// `k`-volume of the simplex spanned by `points` (k + 1 of them) in any
/// ambient dimension, via the Gram determinant of the edge vectors.
pub fn simplex_volume(points: &[&[f64]]) -> f64 {
    let k = points.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let edges: Vec<Vec<f64>> = points[1..].iter().map(|p| sub(p, points[0])).collect();
    let gram = DMatrix::from_fn(k, k, |i, j| dot(&edges[i], &edges[j]));
    gram.determinant().max(0.0).sqrt() / factorial(k)
}

/// Orthonormal basis of the orthogonal complement of `x` (x need not be
/// unit). Built by Gram-Schmidt on the standard basis, skipping the most
/// parallel axis, so it is deterministic for a given `x`.
pub fn complement_frame(x: &[f64]) -> Vec<Vec<f64>> {
    let d = x.len();
    let nx = norm(x);
    let u: Vec<f64> = x.iter().map(|v| v / nx).collect();
    let skip = (0..d)
        .max_by(|&i, &j| u[i].abs().partial_cmp(&u[j].abs()).unwrap())
        .unwrap();
    let mut basis: Vec<Vec<f64>> = vec![u];
    for i in (0..d).filter(|&i| i != skip) {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        for b in &basis {
            let c = dot(&e, b);
            for (ek, bk) in e.iter_mut().zip(b) {
                *ek -= c * bk;
            }
        }
        let ne = norm(&e);
        basis.push(e.into_iter().map(|v| v / ne).collect());
    }
    basis.remove(0);
    basis
}

/// Radical inverse of `index` in the given base (van der Corput / Halton).
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Grundmann-Moeller cubature on the standard `dim`-simplex, exact for
/// polynomials of degree `2s + 1`. Points are barycentric (dim + 1 entries);
/// the weights sum to the simplex volume `1 / dim!`.
pub fn grundmann_moller(dim: usize, s: usize) -> Vec<(Vec<f64>, f64)> {
    let degree = 2 * s + 1;
    let mut rule = Vec::new();
    for i in 0..=s {
        let denom = (degree + dim - 2 * i) as f64;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let weight = sign * 2f64.powi(-(2 * s as i32)) * denom.powi(degree as i32)
            / (factorial(i) * factorial(degree + dim - i));
        for beta in compositions(s - i, dim + 1) {
            let point: Vec<f64> = beta.iter().map(|&b| (2 * b + 1) as f64 / denom).collect();
            rule.push((point, weight));
        }
    }
    rule
}

/// All ways to write `total` as an ordered sum of `parts` non-negative ints.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Euclidean distance from `p` to the closed simplex with vertices `verts`
/// (at most a handful). Enumerates every face; the nearest point lies in the
/// relative interior of exactly one face, where it equals the orthogonal
/// projection onto that face's affine hull.
pub fn point_simplex_distance(p: &[f64], verts: &[&[f64]]) -> f64 {
    let k = verts.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << k) {
        let face: Vec<&[f64]> = (0..k)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| verts[i])
            .collect();
        if let Some(d) = projection_distance(p, &face) {
            best = best.min(d);
        }
    }
    best
}

fn projection_distance(p: &[f64], face: &[&[f64]]) -> Option<f64> {
    let base = face[0];
    if face.len() == 1 {
        return Some(dist(p, base));
    }
    let edges: Vec<Vec<f64>> = face[1..].iter().map(|v| sub(v, base)).collect();
    let r = sub(p, base);
    let m = edges.len();
    let gram = DMatrix::from_fn(m, m, |i, j| dot(&edges[i], &edges[j]));
    let rhs = nalgebra::DVector::from_fn(m, |i, _| dot(&edges[i], &r));
    let coeffs = gram.lu().solve(&rhs)?;
    let tol = -1e-12;
    if coeffs.iter().any(|&c| c < tol) || 1.0 - coeffs.sum() < tol {
        return None;
    }
    let mut q = base.to_vec();
    for (c, e) in coeffs.iter().zip(&edges) {
        for (qk, ek) in q.iter_mut().zip(e) {
            *qk += c * ek;
        }
    }
    Some(dist(p, &q))
}

/// Signed volume of the radial projection of a flat `n`-simplex onto the
/// sphere through its vertices (all of norm `r`, `n + 1` of them in
/// `R^(n+1)`), positive when `det[v_0 .. v_n] > 0`.
pub fn spherical_simplex_volume(verts: &[&[f64]]) -> f64 {
    let n = verts.len() - 1;
    let r = norm(verts[0]);
    let unit: Vec<Vec<f64>> = verts.iter().map(|v| v.iter().map(|x| x / norm(v)).collect()).collect();
    let det = det_columns(&unit);
    let omega = match n {
        1 => det.atan2(dot(&unit[0], &unit[1])),
        2 => {
            let (a, b, c) = (&unit[0], &unit[1], &unit[2]);
            2.0 * det.atan2(1.0 + dot(a, b) + dot(b, c) + dot(c, a))
        }
        _ => cone_solid_angle(unit, 12),
    };
    omega * r.powi(n as i32)
}

/// Solid angle of the cone over a flat simplex: det times the integral over
/// the standard simplex of `|sum lambda_i v_i|^-(n+1)`. Cells with a chord
/// longer than 0.5 are bisected along their longest edge first.
fn cone_solid_angle(verts: Vec<Vec<f64>>, depth: usize) -> f64 {
    let n = verts.len() - 1;
    let mut longest = (0, 0, 0.0);
    for i in 0..=n {
        for j in (i + 1)..=n {
            let a: Vec<f64> = verts[i].iter().map(|x| x / norm(&verts[i])).collect();
            let b: Vec<f64> = verts[j].iter().map(|x| x / norm(&verts[j])).collect();
            let l = dist(&a, &b);
            if l > longest.2 {
                longest = (i, j, l);
            }
        }
    }
    if depth > 0 && longest.2 > 0.5 {
        let (i, j, _) = longest;
        let mid: Vec<f64> = verts[i].iter().zip(&verts[j]).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut left = verts.clone();
        left[j] = mid.clone();
        let mut right = verts;
        right[i] = mid;
        return cone_solid_angle(left, depth - 1) + cone_solid_angle(right, depth - 1);
    }
    let det = det_columns(&verts);
    let integral: f64 = grundmann_moller(n, 3)
        .iter()
        .map(|(lambda, w)| {
            let mut p = vec![0.0; n + 1];
            for (l, v) in lambda.iter().zip(&verts) {
                for (pk, vk) in p.iter_mut().zip(v) {
                    *pk += l * vk;
                }
            }
            w * norm(&p).powi(-(n as i32 + 1))
        })
        .sum();
    det * integral
}
