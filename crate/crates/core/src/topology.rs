//! Homotopy obstructions of sampled maps between spheres (Brouwer degree,
//! Hopf invariant by fibre linking) and the two witness probes used by the
//! lower mass bound: the zero locus of `F` and containment of its image in
//! a tube around `R N`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::boundary_data::BoundaryMap;
use crate::error::{Error, Result};
use crate::geometry::GraphFunction;
use crate::mesh::{Mesh, MeshKind};
use crate::numeric::{dist, dot, halton, norm, spherical_simplex_volume, unit_sphere_volume};

/// Rounding tolerance for every integer invariant.
pub const INTEGER_TOLERANCE: f64 = 0.2;

/// Barycentric margin separating a regular value from the 1-skeleton image.
pub const FIBER_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<Vec<f64>>,
    pub closed: bool,
}

impl Polyline {
    pub fn new(points: Vec<Vec<f64>>, closed: bool) -> Result<Self> {
        if points.windows(2).any(|w| dist(&w[0], &w[1]) == 0.0) {
            return Err(Error::InvalidInput("consecutive polyline points coincide".into()));
        }
        if closed && points.len() < 3 {
            return Err(Error::InvalidInput("closed polyline needs at least 3 segments".into()));
        }
        Ok(Polyline { points, closed })
    }

    pub fn segments(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.points[i].as_slice(), self.points[(i + 1) % n].as_slice()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Polyline = serde_json::from_str(s)?;
        Polyline::new(p.points, p.closed)
    }
}

/// An integer invariant with the raw value it was rounded from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundedInvariant {
    pub value: i64,
    pub raw: f64,
}

fn round_invariant(raw: f64, what: &str) -> Result<RoundedInvariant> {
    if !raw.is_finite() {
        return Err(Error::Numerical(format!("{what}: non-finite raw value")));
    }
    let value = raw.round();
    if (raw - value).abs() > INTEGER_TOLERANCE {
        return Err(Error::Resolution(format!(
            "{what}: raw value {raw:.6} is more than {INTEGER_TOLERANCE} from an integer; refine the mesh"
        )));
    }
    Ok(RoundedInvariant { value: value as i64, raw })
}

/// Values of `f` at the vertices of a sphere mesh, scaled onto its domain
/// radius and normalised to unit length.
pub fn sample_sphere_map(mesh: &Mesh, f: &BoundaryMap) -> Result<Vec<Vec<f64>>> {
    let r = f.domain_radius();
    mesh.vertices()
        .enumerate()
        .map(|(i, x)| {
            let nx = norm(x);
            let y = f.eval(&x.iter().map(|v| v * r / nx).collect::<Vec<_>>())?;
            let ny = norm(&y);
            if ny < 1e-12 {
                return Err(Error::Degenerate(format!("map vanishes at vertex {i}")));
            }
            Ok(y.into_iter().map(|v| v / ny).collect())
        })
        .collect()
}

fn sphere_n(mesh: &Mesh) -> Result<usize> {
    match mesh.kind() {
        MeshKind::Sphere { n, .. } => Ok(n),
        _ => Err(Error::InvalidInput("expected a sphere mesh".into())),
    }
}

/// Brouwer degree of a sampled map `S^n -> S^n`: the signed spherical
/// volume of the image complex over `vol(S^n)`.
pub fn sphere_degree(mesh: &Mesh, values: &[Vec<f64>]) -> Result<RoundedInvariant> {
    let n = sphere_n(mesh)?;
    check_values(mesh, values, n + 1)?;
    check_cell_spread(mesh, values)?;
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        let img: Vec<&[f64]> = mesh.cell(c).iter().map(|&v| values[v].as_slice()).collect();
        total += spherical_simplex_volume(&img);
    }
    round_invariant(total / unit_sphere_volume(n), "degree")
}

/// Rejects meshes on which some cell's image spans a right angle: the
/// piecewise-linear surrogate no longer follows the map there.
fn check_cell_spread(mesh: &Mesh, values: &[Vec<f64>]) -> Result<()> {
    for c in 0..mesh.num_cells() {
        let cell = mesh.cell(c);
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                if dot(&values[cell[a]], &values[cell[b]]) <= 0.0 {
                    return Err(Error::Resolution(format!(
                        "image of cell {c} spans a right angle or more; refine the mesh"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn check_values(mesh: &Mesh, values: &[Vec<f64>], dim: usize) -> Result<()> {
    if values.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_vertices(),
            actual: values.len(),
            context: "sampled map values",
        });
    }
    for (i, v) in values.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
                context: "sampled map value",
            });
        }
        if (norm(v) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("value at vertex {i} is not unit")));
        }
    }
    Ok(())
}

/// Orthonormal `e1, e2` with `(q, e1, e2)` a positive basis of `R^3`.
fn plane_basis(q: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if q.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (axis - q * q.dot(&axis)).normalize();
    let e2 = q.cross(&e1);
    (e1, e2)
}

enum FaceHit {
    None,
    Point(Vec<f64>),
}

/// Preimage of the regular value `q` under a sampled map `S^3 -> S^2`, as
/// closed oriented polylines on the chords of the tetrahedra.
pub fn preimage_fiber(mesh: &Mesh, values: &[Vec<f64>], q: &[f64]) -> Result<Vec<Polyline>> {
    if sphere_n(mesh)? != 3 {
        return Err(Error::InvalidInput("fibres need a tetrahedral mesh of S^3".into()));
    }
    check_values(mesh, values, 3)?;
    if q.len() != 3 || (norm(q) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("regular value must be a unit vector in R^3".into()));
    }
    let qv = Vector3::from_column_slice(q);
    let (e1, e2) = plane_basis(&qv);
    let proj: Vec<[f64; 2]> = values
        .iter()
        .map(|v| {
            let y = Vector3::from_column_slice(v);
            [y.dot(&e1), y.dot(&e2)]
        })
        .collect();

    let mut faces: BTreeMap<[usize; 3], FaceHit> = BTreeMap::new();
    // Directed segment per tetrahedron, between two hit faces.
    let mut next: BTreeMap<[usize; 3], [usize; 3]> = BTreeMap::new();
    let mut incoming: BTreeSet<[usize; 3]> = BTreeSet::new();
    for c in 0..mesh.num_cells() {
        let cell = mesh.cell(c);
        let mut hits: Vec<[usize; 3]> = Vec::new();
        for skip in 0..4 {
            let mut key = [0usize; 3];
            let mut k = 0;
            for (i, &v) in cell.iter().enumerate() {
                if i != skip {
                    key[k] = v;
                    k += 1;
                }
            }
            key.sort_unstable();
            if !faces.contains_key(&key) {
                let hit = face_hit(mesh, values, &proj, &qv, &key)?;
                faces.insert(key, hit);
            }
            if let FaceHit::Point(_) = faces[&key] {
                hits.push(key);
            }
        }
        match hits.len() {
            0 => continue,
            2 => {}
            k => {
                return Err(Error::NonRegularValue(format!(
                    "tetrahedron {c} meets the fibre in {k} faces; perturb q"
                )))
            }
        }
        let dir = tet_fiber_direction(mesh, cell, &proj);
        let (FaceHit::Point(a), FaceHit::Point(b)) = (&faces[&hits[0]], &faces[&hits[1]]) else {
            unreachable!()
        };
        let ab: f64 = b.iter().zip(a).zip(&dir).map(|((x, y), d)| (x - y) * d).sum();
        let (from, to) = if ab > 0.0 { (hits[0], hits[1]) } else { (hits[1], hits[0]) };
        if next.insert(from, to).is_some() || !incoming.insert(to) {
            return Err(Error::Chaining(format!(
                "inconsistent fibre orientation at tetrahedron {c}; perturb q"
            )));
        }
    }
    let mut visited: BTreeSet<[usize; 3]> = BTreeSet::new();
    let mut lines = Vec::new();
    for &start in next.keys() {
        if visited.contains(&start) {
            continue;
        }
        let mut points = Vec::new();
        let mut cur = start;
        loop {
            visited.insert(cur);
            let FaceHit::Point(p) = &faces[&cur] else { unreachable!() };
            points.push(p.clone());
            cur = *next.get(&cur).ok_or_else(|| {
                Error::Chaining(format!("fibre chain breaks at face {cur:?}; perturb q"))
            })?;
            if cur == start {
                break;
            }
            if visited.contains(&cur) {
                return Err(Error::Chaining(format!("fibre chain re-enters face {cur:?}")));
            }
        }
        if points.len() < 3 {
            return Err(Error::Resolution("fibre component with fewer than 3 segments; refine".into()));
        }
        lines.push(Polyline::new(points, true)?);
    }
    Ok(lines)
}

fn face_hit(
    mesh: &Mesh,
    values: &[Vec<f64>],
    proj: &[[f64; 2]],
    q: &Vector3<f64>,
    face: &[usize; 3],
) -> Result<FaceHit> {
    // sum l_i u_i = 0, sum l_i = 1.
    let m = Matrix3::new(
        proj[face[0]][0], proj[face[1]][0], proj[face[2]][0],
        proj[face[0]][1], proj[face[1]][1], proj[face[2]][1],
        1.0, 1.0, 1.0,
    );
    let Some(lambda) = m.lu().solve(&Vector3::new(0.0, 0.0, 1.0)) else {
        return Ok(FaceHit::None);
    };
    let min = lambda.min();
    if min < -FIBER_MARGIN {
        return Ok(FaceHit::None);
    }
    if min < FIBER_MARGIN {
        return Err(Error::NonRegularValue(format!(
            "regular value within the margin of the image of an edge of face {face:?}; perturb q"
        )));
    }
    let along: f64 = (0..3).map(|i| lambda[i] * Vector3::from_column_slice(&values[face[i]]).dot(q)).sum();
    if along <= 0.0 {
        return Ok(FaceHit::None);
    }
    let mut p = vec![0.0; 4];
    for i in 0..3 {
        for (pk, xk) in p.iter_mut().zip(mesh.vertex(face[i])) {
            *pk += lambda[i] * xk;
        }
    }
    Ok(FaceHit::Point(p))
}

/// Direction in `R^4` of the kernel of the local PL map, oriented by the
/// cross product of its two rows in the tetrahedron's edge frame.
fn tet_fiber_direction(mesh: &Mesh, cell: &[usize], proj: &[[f64; 2]]) -> Vec<f64> {
    let u0 = proj[cell[0]];
    let r1 = Vector3::from_fn(|k, _| proj[cell[k + 1]][0] - u0[0]);
    let r2 = Vector3::from_fn(|k, _| proj[cell[k + 1]][1] - u0[1]);
    let t = r1.cross(&r2);
    let x0 = mesh.vertex(cell[0]);
    let mut dir = vec![0.0; 4];
    for k in 0..3 {
        for (d, (a, b)) in dir.iter_mut().zip(mesh.vertex(cell[k + 1]).iter().zip(x0)) {
            *d += t[k] * (a - b);
        }
    }
    dir
}

/// Gauss linking number of two closed polylines in `R^3`, summing the exact
/// solid angle of each segment pair.
pub fn linking_number(a: &Polyline, b: &Polyline) -> Result<RoundedInvariant> {
    round_invariant(linking_raw(a, b)?, "linking number")
}

fn linking_raw(a: &Polyline, b: &Polyline) -> Result<f64> {
    if !a.closed || !b.closed {
        return Err(Error::InvalidInput("linking number needs closed polylines".into()));
    }
    if a.points.iter().chain(&b.points).any(|p| p.len() != 3) {
        return Err(Error::DimensionMismatch {
            expected: 3,
            actual: a.points[0].len(),
            context: "linking number polyline points",
        });
    }
    let mut total = 0.0;
    for (p1, p2) in a.segments() {
        for (p3, p4) in b.segments() {
            total += segment_solid_angle(p1, p2, p3, p4)?;
        }
    }
    Ok(total / (4.0 * PI))
}

fn segment_solid_angle(p1: &[f64], p2: &[f64], p3: &[f64], p4: &[f64]) -> Result<f64> {
    let v = |p: &[f64]| Vector3::from_column_slice(p);
    let (p1, p2, p3, p4) = (v(p1), v(p2), v(p3), v(p4));
    let r13 = p3 - p1;
    let r14 = p4 - p1;
    let r23 = p3 - p2;
    let r24 = p4 - p2;
    if [r13, r14, r23, r24].iter().any(|r| r.norm() < 1e-14) {
        return Err(Error::InvalidInput("polylines intersect".into()));
    }
    let unit = |w: Vector3<f64>| -> Option<Vector3<f64>> {
        let n = w.norm();
        (n > 1e-300).then(|| w / n)
    };
    let (Some(n1), Some(n2), Some(n3), Some(n4)) = (
        unit(r13.cross(&r14)),
        unit(r14.cross(&r24)),
        unit(r24.cross(&r23)),
        unit(r23.cross(&r13)),
    ) else {
        // Coplanar segment pair: zero solid angle.
        return Ok(0.0);
    };
    let asin = |x: f64| x.clamp(-1.0, 1.0).asin();
    let omega = asin(n1.dot(&n2)) + asin(n2.dot(&n3)) + asin(n3.dot(&n4)) + asin(n4.dot(&n1));
    let sign = (p4 - p3).cross(&(p2 - p1)).dot(&r13);
    Ok(if sign > 0.0 { omega } else if sign < 0.0 { -omega } else { 0.0 })
}

/// Stereographic projection of points on (chords of) `S^3` from `pole`,
/// using a basis of `pole^perp` that keeps the orientation.
pub fn stereographic(points: &[Vec<f64>], pole: &[f64]) -> Vec<Vec<f64>> {
    let mut basis = crate::numeric::complement_frame(pole);
    let det = crate::numeric::det_columns(&[pole.to_vec(), basis[0].clone(), basis[1].clone(), basis[2].clone()]);
    if det > 0.0 {
        basis[0].iter_mut().for_each(|v| *v = -*v);
    }
    points
        .iter()
        .map(|p| {
            let np = norm(p);
            let y: Vec<f64> = p.iter().map(|v| v / np).collect();
            let denom = 1.0 - dot(&y, pole);
            basis.iter().map(|b| dot(&y, b) / denom).collect()
        })
        .collect()
}

/// Linking number of polylines on `S^3`, projected from the candidate pole
/// farthest from both.
pub fn linking_number_on_sphere(a: &Polyline, b: &Polyline, pole_candidates: &[&[f64]]) -> Result<RoundedInvariant> {
    round_invariant(linking_raw_on_sphere(a, b, pole_candidates)?, "linking number")
}

fn linking_raw_on_sphere(a: &Polyline, b: &Polyline, pole_candidates: &[&[f64]]) -> Result<f64> {
    let pole = choose_pole(&[a, b], pole_candidates)?;
    let pa = Polyline::new(stereographic(&a.points, &pole), a.closed)?;
    let pb = Polyline::new(stereographic(&b.points, &pole), b.closed)?;
    linking_raw(&pa, &pb)
}

fn choose_pole(lines: &[&Polyline], candidates: &[&[f64]]) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in candidates {
        let nc = norm(c);
        let c: Vec<f64> = c.iter().map(|v| v / nc).collect();
        let d = lines
            .iter()
            .flat_map(|l| l.points.iter())
            .map(|p| {
                let np = norm(p);
                dist(&p.iter().map(|v| v / np).collect::<Vec<_>>(), &c)
            })
            .fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(bd, _)| d > *bd) {
            best = Some((d, c));
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::InvalidInput("no pole candidates".into()))
}

/// Regular values on `S^2` from an area-preserving Halton(2, 3) sequence.
pub fn regular_value_candidates(count: usize) -> Vec<[f64; 3]> {
    (1..=count as u64)
        .map(|i| {
            let phi = 2.0 * PI * halton(i, 2);
            let z = 1.0 - 2.0 * halton(i, 3);
            let s = (1.0 - z * z).max(0.0).sqrt();
            [s * phi.cos(), s * phi.sin(), z]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfInvariant {
    pub value: i64,
    pub raw: f64,
    /// Regular value used; its antipode gives the second fibre.
    pub q: [f64; 3],
    pub components: (usize, usize),
    pub attempts: usize,
}

/// Hopf invariant of a sampled map `S^3 -> S^2`: the linking number of the
/// fibres over `q` and `-q`, summed over components.
///
/// Sign convention: fibres carry the preimage orientation and are projected
/// orientation-preservingly, so the Hopf map itself has invariant `+1`.
pub fn hopf_invariant(mesh: &Mesh, values: &[Vec<f64>]) -> Result<HopfInvariant> {
    if sphere_n(mesh)? != 3 {
        return Err(Error::InvalidInput("Hopf invariants need a mesh of S^3".into()));
    }
    check_values(mesh, values, 3)?;
    check_cell_spread(mesh, values)?;
    let candidates: Vec<&[f64]> = mesh.vertices().collect();
    let mut last_err = None;
    for (attempt, q) in regular_value_candidates(64).into_iter().enumerate() {
        let neg = [-q[0], -q[1], -q[2]];
        let fibers = preimage_fiber(mesh, values, &q).and_then(|a| Ok((a, preimage_fiber(mesh, values, &neg)?)));
        let (fa, fb) = match fibers {
            Ok(f) => f,
            Err(e @ (Error::NonRegularValue(_) | Error::Chaining(_))) => {
                log::debug!("regular value {q:?} rejected: {e}");
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut raw = 0.0;
        for a in &fa {
            for b in &fb {
                raw += linking_raw_on_sphere(a, b, &candidates)?;
            }
        }
        let r = round_invariant(raw, "Hopf invariant")?;
        return Ok(HopfInvariant {
            value: r.value,
            raw: r.raw,
            q,
            components: (fa.len(), fb.len()),
            attempts: attempt + 1,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::NonRegularValue("no regular value found".into())))
}

/// Smallest `|F|` over mesh vertices and the first vertex attaining it.
pub fn min_norm_locus(f: &GraphFunction) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for v in 0..f.mesh().num_vertices() {
        let n = norm(f.value(v));
        if n < best.0 {
            best = (n, v);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    pub contained: bool,
    pub max_dist: f64,
    pub witness: usize,
}

/// Largest distance from `F(x)` (over vertices) to a point cloud sampling
/// `R N`, and whether it stays within `epsilon`.
pub fn neighborhood_containment(f: &GraphFunction, cloud: &[Vec<f64>], epsilon: f64) -> Result<Containment> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty sample cloud".into()));
    }
    if cloud.iter().any(|p| p.len() != f.target_dim()) {
        return Err(Error::DimensionMismatch {
            expected: f.target_dim(),
            actual: cloud[0].len(),
            context: "containment cloud",
        });
    }
    let mut out = Containment {
        contained: true,
        max_dist: 0.0,
        witness: 0,
    };
    for v in 0..f.mesh().num_vertices() {
        let y = f.value(v);
        let d = cloud.iter().map(|p| dist(p, y)).fold(f64::INFINITY, f64::min);
        if d > out.max_dist {
            out.max_dist = d;
            out.witness = v;
        }
    }
    out.contained = out.max_dist <= epsilon;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_data::{BoundaryMap, HopfFamily};
    use crate::mesh::sphere_mesh;

    fn circle(center: [f64; 3], u: [f64; 3], v: [f64; 3], r: f64, k: usize) -> Polyline {
        let pts = (0..k)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / k as f64;
                (0..3).map(|j| center[j] + r * (t.cos() * u[j] + t.sin() * v[j])).collect()
            })
            .collect();
        Polyline::new(pts, true).unwrap()
    }

    #[test]
    fn degrees_of_simple_maps() {
        let s2 = sphere_mesh(2, 2).unwrap();
        let id = sample_sphere_map(&s2, &BoundaryMap::identity(2)).unwrap();
        assert_eq!(sphere_degree(&s2, &id).unwrap().value, 1);
        let anti = sample_sphere_map(&s2, &BoundaryMap::antipodal(2)).unwrap();
        assert_eq!(sphere_degree(&s2, &anti).unwrap().value, -1);
        let s1 = sphere_mesh(1, 4).unwrap();
        let z2 = sample_sphere_map(&s1, &BoundaryMap::power_s1(2)).unwrap();
        let d = sphere_degree(&s1, &z2).unwrap();
        assert_eq!(d.value, 2);
        assert!((d.raw - 2.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_mesh_is_a_resolution_error() {
        let s1 = sphere_mesh(1, 0).unwrap();
        let z3 = sample_sphere_map(&s1, &BoundaryMap::power_s1(3)).unwrap();
        assert!(sphere_degree(&s1, &z3).unwrap_err().is_resolution());
        // Fibres on the cross-polytope miss each other; refuse rather than report 0.
        let s3 = sphere_mesh(3, 0).unwrap();
        let h = sample_sphere_map(&s3, &BoundaryMap::hopf(HopfFamily::S3S2)).unwrap();
        assert!(hopf_invariant(&s3, &h).unwrap_err().is_resolution());
    }

    #[test]
    fn hopf_link_and_unlink() {
        let a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 64);
        let b = circle([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0, 64);
        let lab = linking_number(&a, &b).unwrap();
        let lba = linking_number(&b, &a).unwrap();
        assert_eq!(lab.value.abs(), 1);
        assert_eq!(lab.value, lba.value);
        let c = circle([3.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 64);
        assert_eq!(linking_number(&a, &c).unwrap().value, 0);
    }

    #[test]
    fn linking_sign_matches_gauss_integral() {
        let a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 40);
        let b = circle([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0, 40);
        // Midpoint rule for (1/4pi) sum (r1 - r2) . (dr1 x dr2) / |r1 - r2|^3.
        let mut gauss = 0.0;
        for (p1, p2) in a.segments() {
            for (q1, q2) in b.segments() {
                let m1 = Vector3::from_fn(|i, _| 0.5 * (p1[i] + p2[i]));
                let m2 = Vector3::from_fn(|i, _| 0.5 * (q1[i] + q2[i]));
                let d1 = Vector3::from_fn(|i, _| p2[i] - p1[i]);
                let d2 = Vector3::from_fn(|i, _| q2[i] - q1[i]);
                let r = m1 - m2;
                gauss += r.dot(&d1.cross(&d2)) / r.norm().powi(3);
            }
        }
        gauss /= 4.0 * PI;
        let exact = linking_number(&a, &b).unwrap();
        assert!((gauss - exact.raw).abs() < 0.05, "{gauss} vs {}", exact.raw);
    }

    #[test]
    fn hopf_fibers_follow_analytic_circles() {
        let s3 = sphere_mesh(3, 3).unwrap();
        let values = sample_sphere_map(&s3, &BoundaryMap::hopf(HopfFamily::S3S2)).unwrap();
        let h = s3.max_edge_length();
        // Slightly perturbed poles avoid the mesh's symmetric vertices.
        for (q, analytic) in [([1.0, 0.0, 0.0], 0usize), ([-1.0, 0.0, 0.0], 2usize)] {
            let qp = [q[0], 0.0123, -0.0171];
            let qn = norm(&qp);
            let q: Vec<f64> = qp.iter().map(|v| v / qn).collect();
            let lines = preimage_fiber(&s3, &values, &q).unwrap();
            assert_eq!(lines.len(), 1);
            for p in &lines[0].points {
                // Distance to the circle in the (analytic, analytic+1) plane.
                let inplane = p[analytic].hypot(p[analytic + 1]);
                let off: f64 = (0..4).filter(|&k| k != analytic && k != analytic + 1).map(|k| p[k] * p[k]).sum();
                let d = ((inplane - 1.0).powi(2) + off).sqrt();
                assert!(d <= 2.0 * h, "{d} vs edge {h}");
            }
        }
    }

    #[test]
    fn constant_map_has_empty_fibers() {
        let s3 = sphere_mesh(3, 1).unwrap();
        let values = vec![vec![1.0, 0.0, 0.0]; s3.num_vertices()];
        assert!(preimage_fiber(&s3, &values, &[0.0, 0.0, 1.0]).unwrap().is_empty());
        assert_eq!(hopf_invariant(&s3, &values).unwrap().value, 0);
    }

    #[test]
    fn min_norm_and_containment() {
        let m = crate::mesh::domain_mesh(crate::mesh::Domain::Ball { radius: 1.0 }, 2, 3, 2).unwrap();
        let f = GraphFunction::from_fn(&m, 2, |x| vec![3.0 * x[0], 3.0 * x[1]]).unwrap();
        let (val, v) = min_norm_locus(&f);
        assert_eq!(val, 0.0);
        assert_eq!(norm(m.vertex(v)), 0.0);
        let (val2, v2) = min_norm_locus(&f.scaled(2.0));
        assert_eq!((val2, v2), (2.0 * val, v));
        let cloud: Vec<Vec<f64>> = (0..400)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 400.0;
                vec![3.0 * t.cos(), 3.0 * t.sin()]
            })
            .collect();
        let c = neighborhood_containment(&f, &cloud, 2.0).unwrap();
        assert!(!c.contained);
        assert!((c.max_dist - 3.0).abs() < 1e-12);
        assert!(neighborhood_containment(&f, &[], 1.0).is_err());
    }

    #[test]
    fn polyline_json_round_trip() {
        let a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 8);
        let back = Polyline::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, back);
    }
}
