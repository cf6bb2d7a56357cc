//! Closed-form boundary maps `eta: S^n -> R^(m+1)` and the two geometric
//! quantities the mass bounds need: the graph volume of `eta` over the
//! sphere and the reach of its image.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshKind};
use crate::numeric::{complement_frame, dist, dot, norm, spherical_simplex_volume};

/// Finite-difference step for differentials of closed-form maps.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HopfFamily {
    #[serde(rename = "S3_S2")]
    S3S2,
    #[serde(rename = "S7_S4")]
    S7S4,
    #[serde(rename = "S15_S8")]
    S15S8,
}

impl HopfFamily {
    /// Dimension of the algebra (complex, quaternion, octonion).
    fn algebra_dim(self) -> usize {
        match self {
            HopfFamily::S3S2 => 2,
            HopfFamily::S7S4 => 4,
            HopfFamily::S15S8 => 8,
        }
    }

    pub fn domain_dim(self) -> usize {
        2 * self.algebra_dim() - 1
    }

    pub fn target_dim(self) -> usize {
        self.algebra_dim() + 1
    }
}

/// Cayley-Dickson product `(a,b)(c,d) = (ac - conj(d) b, d a + b conj(c))`
/// on vectors of length `2^k`; reals, complexes, quaternions, octonions.
pub fn cd_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let h = n / 2;
    let (a, b) = x.split_at(h);
    let (c, d) = y.split_at(h);
    let ac = cd_mul(a, c);
    let db = cd_mul(&cd_conj(d), b);
    let da = cd_mul(d, a);
    let bc = cd_mul(b, &cd_conj(c));
    let mut out: Vec<f64> = ac.iter().zip(&db).map(|(p, q)| p - q).collect();
    out.extend(da.iter().zip(&bc).map(|(p, q)| p + q));
    out
}

pub fn cd_conj(x: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = x.iter().map(|v| -v).collect();
    out[0] = x[0];
    out
}

/// Hopf map `(p, q) -> (|p|^2 - |q|^2, 2 p conj(q))` over the complex,
/// quaternion or octonion algebra. The input must be unit to within 1e-10.
pub fn hopf_map(family: HopfFamily, x: &[f64]) -> Result<Vec<f64>> {
    let k = family.algebra_dim();
    if x.len() != 2 * k {
        return Err(Error::DimensionMismatch {
            expected: 2 * k,
            actual: x.len(),
            context: "Hopf map input",
        });
    }
    let nx = norm(x);
    if (nx - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "Hopf map input must be a unit vector, got norm {nx}"
        )));
    }
    let (p, q) = x.split_at(k);
    let mut out = Vec::with_capacity(k + 1);
    out.push(dot(p, p) - dot(q, q));
    out.extend(cd_mul(p, &cd_conj(q)).into_iter().map(|v| 2.0 * v));
    Ok(out)
}

type CustomFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum MapKind {
    Hopf(HopfFamily),
    Identity,
    Antipodal,
    /// `z -> z^k` on the unit circle.
    PowerS1(i32),
    Constant(Vec<f64>),
    /// `(p) -> (|p_12| - circle_radius, p_3, ..)` on the boundary of a solid torus.
    Torus { circle_radius: f64 },
    Scaled(Box<BoundaryMap>, f64),
    Deformed(Box<BoundaryMap>, DMatrix<f64>),
    /// Evaluates the inner map at `x / |x|`.
    Radial(Box<BoundaryMap>),
    /// Inner map below `split` in norm, outer map above.
    Annulus {
        inner: Box<BoundaryMap>,
        outer: Box<BoundaryMap>,
        split: f64,
    },
    Custom(CustomFn),
}

/// A closed-form map from a sphere `S^n(r)` (or the boundary of a solid
/// torus) into `R^target_dim`.
#[derive(Clone)]
pub struct BoundaryMap {
    name: String,
    domain_dim: usize,
    domain_radius: f64,
    target_dim: usize,
    image_dim: usize,
    image_radius: Option<f64>,
    kind: MapKind,
}

impl fmt::Debug for BoundaryMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryMap")
            .field("name", &self.name)
            .field("domain_dim", &self.domain_dim)
            .field("domain_radius", &self.domain_radius)
            .field("target_dim", &self.target_dim)
            .field("image_dim", &self.image_dim)
            .field("image_radius", &self.image_radius)
            .finish()
    }
}

/// Serializable summary of a map, echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapInfo {
    pub name: String,
    pub domain_dim: usize,
    pub domain_radius: f64,
    pub target_dim: usize,
    pub image_dim: usize,
    pub image_radius: Option<f64>,
}

impl BoundaryMap {
    pub fn hopf(family: HopfFamily) -> Self {
        let name = match family {
            HopfFamily::S3S2 => "hopf3",
            HopfFamily::S7S4 => "hopf7",
            HopfFamily::S15S8 => "hopf15",
        };
        BoundaryMap {
            name: name.into(),
            domain_dim: family.domain_dim(),
            domain_radius: 1.0,
            target_dim: family.target_dim(),
            image_dim: family.target_dim() - 1,
            image_radius: Some(1.0),
            kind: MapKind::Hopf(family),
        }
    }

    pub fn identity(n: usize) -> Self {
        BoundaryMap {
            name: format!("identity:{n}"),
            domain_dim: n,
            domain_radius: 1.0,
            target_dim: n + 1,
            image_dim: n,
            image_radius: Some(1.0),
            kind: MapKind::Identity,
        }
    }

    pub fn antipodal(n: usize) -> Self {
        BoundaryMap {
            name: format!("antipodal:{n}"),
            kind: MapKind::Antipodal,
            ..BoundaryMap::identity(n)
        }
    }

    /// `z -> z^k` on `S^1`.
    pub fn power_s1(k: i32) -> Self {
        BoundaryMap {
            name: format!("zpow:{k}"),
            kind: MapKind::PowerS1(k),
            image_dim: if k == 0 { 0 } else { 1 },
            image_radius: if k == 0 { None } else { Some(1.0) },
            ..BoundaryMap::identity(1)
        }
    }

    pub fn constant(n: usize, value: Vec<f64>) -> Self {
        BoundaryMap {
            name: format!("const:{n}:{}", value.len()),
            domain_dim: n,
            domain_radius: 1.0,
            target_dim: value.len(),
            image_dim: 0,
            image_radius: None,
            kind: MapKind::Constant(value),
        }
    }

    /// User-supplied evaluator on `S^n(1)`.
    pub fn custom(
        name: &str,
        domain_dim: usize,
        target_dim: usize,
        image_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        BoundaryMap {
            name: name.into(),
            domain_dim,
            domain_radius: 1.0,
            target_dim,
            image_dim,
            image_radius: None,
            kind: MapKind::Custom(Arc::new(f)),
        }
    }

    /// Evaluates the map on a sphere of radius `radius` through `x / |x|`.
    pub fn on_sphere_of_radius(self, radius: f64) -> Self {
        BoundaryMap {
            name: format!("{}@r{radius}", self.name),
            domain_dim: self.domain_dim,
            domain_radius: radius,
            target_dim: self.target_dim,
            image_dim: self.image_dim,
            image_radius: self.image_radius,
            kind: MapKind::Radial(Box::new(self)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    /// Radius of the sphere the map is defined on.
    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    /// Radius of the image when it is a full round sphere about the origin.
    pub fn image_radius(&self) -> Option<f64> {
        self.image_radius
    }

    pub fn is_annulus(&self) -> bool {
        matches!(self.kind, MapKind::Annulus { .. })
    }

    /// The two components of annulus data.
    pub fn is_torus(&self) -> bool {
        matches!(self.kind, MapKind::Torus { .. })
    }

    pub fn components(&self) -> Option<(&BoundaryMap, &BoundaryMap)> {
        match &self.kind {
            MapKind::Annulus { inner, outer, .. } => Some((inner, outer)),
            _ => None,
        }
    }

    pub fn info(&self) -> MapInfo {
        MapInfo {
            name: self.name.clone(),
            domain_dim: self.domain_dim,
            domain_radius: self.domain_radius,
            target_dim: self.target_dim,
            image_dim: self.image_dim,
            image_radius: self.image_radius,
        }
    }

    /// Evaluates the map at a point of `R^(n+1)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.domain_dim + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.domain_dim + 1,
                actual: x.len(),
                context: "boundary map input",
            });
        }
        let y = match &self.kind {
            MapKind::Hopf(family) => hopf_map(*family, x)?,
            MapKind::Identity => x.to_vec(),
            MapKind::Antipodal => x.iter().map(|v| -v).collect(),
            MapKind::PowerS1(k) => {
                let t = x[1].atan2(x[0]) * *k as f64;
                vec![t.cos(), t.sin()]
            }
            MapKind::Constant(c) => c.clone(),
            MapKind::Torus { circle_radius } => {
                let mut y = Vec::with_capacity(x.len() - 1);
                y.push(x[0].hypot(x[1]) - circle_radius);
                y.extend_from_slice(&x[2..]);
                y
            }
            MapKind::Scaled(f, r) => f.eval(x)?.into_iter().map(|v| v * r).collect(),
            MapKind::Deformed(f, a) => (a * DVector::from_vec(f.eval(x)?)).as_slice().to_vec(),
            MapKind::Radial(f) => {
                let nx = norm(x);
                if nx == 0.0 {
                    return Err(Error::InvalidInput("radial map evaluated at the origin".into()));
                }
                f.eval(&x.iter().map(|v| v / nx).collect::<Vec<_>>())?
            }
            MapKind::Annulus { inner, outer, split } => {
                if norm(x) < *split {
                    inner.eval(x)?
                } else {
                    outer.eval(x)?
                }
            }
            MapKind::Custom(f) => f(x),
        };
        if y.len() != self.target_dim {
            return Err(Error::DimensionMismatch {
                expected: self.target_dim,
                actual: y.len(),
                context: "boundary map output",
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{} produced a non-finite value", self.name)));
        }
        Ok(y)
    }

    /// Evaluates at a boundary point of a domain mesh. Sphere maps see the
    /// point pushed radially onto their domain sphere; annulus and torus
    /// data take it as is.
    pub fn eval_on_boundary(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            MapKind::Annulus { .. } | MapKind::Torus { .. } => self.eval(x),
            _ => {
                let nx = norm(x);
                if nx == 0.0 {
                    return Err(Error::InvalidInput("boundary point at the origin".into()));
                }
                let s = self.domain_radius / nx;
                self.eval(&x.iter().map(|v| v * s).collect::<Vec<_>>())
            }
        }
    }

    /// Directional derivative along the unit tangent `v` at `x` on the
    /// domain sphere, by central differences along the great circle.
    pub fn differential(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let r = norm(x);
        let h = FD_STEP;
        let along = |t: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a * t.cos() + r * b * t.sin()).collect() };
        let plus = self.eval(&along(h))?;
        let minus = self.eval(&along(-h))?;
        Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * r * h)).collect())
    }

    /// Jacobian in the tangent frame at `x`: one column per frame vector.
    pub fn tangent_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let frame = complement_frame(x);
        let mut j = DMatrix::zeros(self.target_dim, frame.len());
        for (k, v) in frame.iter().enumerate() {
            let d = self.differential(x, v)?;
            j.column_mut(k).copy_from_slice(&d);
        }
        Ok(j)
    }
}

/// `eta_R = R * eta`.
pub fn scale_map(f: &BoundaryMap, r: f64) -> BoundaryMap {
    BoundaryMap {
        name: if r == 1.0 { f.name.clone() } else { format!("{r}*{}", f.name) },
        domain_dim: f.domain_dim,
        domain_radius: f.domain_radius,
        target_dim: f.target_dim,
        image_dim: if r == 0.0 { 0 } else { f.image_dim },
        image_radius: if r == 0.0 { None } else { f.image_radius.map(|q| q * r.abs()) },
        kind: MapKind::Scaled(Box::new(f.clone()), r),
    }
}

/// `A o eta` for a square matrix `A`.
pub fn deform_map(f: &BoundaryMap, a: &DMatrix<f64>) -> Result<BoundaryMap> {
    if a.nrows() != f.target_dim || a.ncols() != f.target_dim {
        return Err(Error::DimensionMismatch {
            expected: f.target_dim,
            actual: if a.nrows() != f.target_dim { a.nrows() } else { a.ncols() },
            context: "deformation matrix",
        });
    }
    let orthogonal = (a.transpose() * a - DMatrix::identity(f.target_dim, f.target_dim)).abs().max() < 1e-14;
    Ok(BoundaryMap {
        name: format!("A*{}", f.name),
        domain_dim: f.domain_dim,
        domain_radius: f.domain_radius,
        target_dim: f.target_dim,
        image_dim: f.image_dim,
        image_radius: if orthogonal { f.image_radius } else { None },
        kind: MapKind::Deformed(Box::new(f.clone()), a.clone()),
    })
}

/// Deterministic samples on `S^n(radius)`.
pub fn sphere_samples(n: usize, count: usize, radius: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let g: Vec<f64> = (0..=n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ng = norm(&g);
            if ng > 1e-8 {
                break g.into_iter().map(|v| radius * v / ng).collect();
            }
        })
        .collect()
}

/// Largest violation of the isometry conditions for `A o eta` over sampled
/// points and tangent frames: `| |A eta| - |eta| |`, `|<A eta, A d eta(v)>|`
/// and `|<A d eta(v), A d eta(w)> - <d eta(v), d eta(w)>|`.
pub fn verify_isometry(a: &DMatrix<f64>, f: &BoundaryMap, samples: usize) -> Result<f64> {
    if a.nrows() != f.target_dim || a.ncols() != f.target_dim {
        return Err(Error::DimensionMismatch {
            expected: f.target_dim,
            actual: a.nrows(),
            context: "isometry matrix",
        });
    }
    let apply = |v: &[f64]| -> Vec<f64> { (a * DVector::from_column_slice(v)).as_slice().to_vec() };
    let mut worst: f64 = 0.0;
    for x in sphere_samples(f.domain_dim, samples, f.domain_radius, 0x150) {
        let eta = f.eval(&x)?;
        let a_eta = apply(&eta);
        worst = worst.max((norm(&a_eta) - norm(&eta)).abs());
        let frame = complement_frame(&x);
        let d: Vec<Vec<f64>> = frame.iter().map(|v| f.differential(&x, v)).collect::<Result<_>>()?;
        let ad: Vec<Vec<f64>> = d.iter().map(|v| apply(v)).collect();
        for i in 0..d.len() {
            worst = worst.max(dot(&a_eta, &ad[i]).abs());
            for j in i..d.len() {
                worst = worst.max((dot(&ad[i], &ad[j]) - dot(&d[i], &d[j])).abs());
            }
        }
    }
    Ok(worst)
}

/// n-volume of the graph `x -> (x, eta(x))` over a sphere mesh: the
/// spherical volume of each cell times `sqrt(det(I + J^T J))` at its
/// projected centroid.
pub fn graph_volume(f: &BoundaryMap, sphere: &Mesh) -> Result<f64> {
    let MeshKind::Sphere { n, radius, .. } = sphere.kind() else {
        return Err(Error::InvalidInput("graph volume needs a sphere mesh".into()));
    };
    if n != f.domain_dim {
        return Err(Error::DimensionMismatch {
            expected: f.domain_dim,
            actual: n,
            context: "sphere mesh for graph volume",
        });
    }
    if f.is_annulus() {
        let (inner, outer) = f.components().unwrap();
        return Err(Error::InvalidInput(format!(
            "annulus data: take graph volumes of {} and {} separately",
            inner.name, outer.name
        )));
    }
    if (radius - f.domain_radius).abs() > 1e-12 * radius.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "sphere mesh radius {radius} differs from the map's domain radius {}",
            f.domain_radius
        )));
    }
    let mut total = 0.0;
    for c in 0..sphere.num_cells() {
        let verts: Vec<&[f64]> = sphere.cell(c).iter().map(|&v| sphere.vertex(v)).collect();
        let cell_vol = spherical_simplex_volume(&verts).abs();
        let mut centroid = vec![0.0; n + 1];
        for v in &verts {
            centroid.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += b);
        }
        let nc = norm(&centroid);
        centroid.iter_mut().for_each(|a| *a *= radius / nc);
        let j = f.tangent_jacobian(&centroid)?;
        let g = DMatrix::identity(n, n) + j.transpose() * &j;
        total += cell_vol * g.determinant().max(0.0).sqrt();
    }
    Ok(total)
}

/// n-volume of the piecewise-linear graph of `f` over the boundary facets of
/// a domain mesh. Used where the boundary is not a sphere (solid torus).
pub fn boundary_graph_volume(f: &BoundaryMap, mesh: &Mesh) -> Result<f64> {
    if !mesh.is_domain() || mesh.ambient_dim() != f.domain_dim + 1 {
        return Err(Error::DimensionMismatch {
            expected: f.domain_dim + 1,
            actual: mesh.ambient_dim(),
            context: "domain mesh for boundary graph volume",
        });
    }
    let n = f.domain_dim;
    let rows = n + 1 + f.target_dim;
    let mut total = 0.0;
    for facet in mesh.boundary_facets() {
        let pts: Vec<Vec<f64>> = facet
            .vertices
            .iter()
            .map(|&v| {
                let x = mesh.vertex(v);
                let mut p = x.to_vec();
                p.extend(f.eval_on_boundary(x)?);
                Ok(p)
            })
            .collect::<Result<_>>()?;
        let e = DMatrix::from_fn(rows, n, |i, k| pts[k + 1][i] - pts[0][i]);
        let gram = e.transpose() * &e;
        total += gram.determinant().max(0.0).sqrt() / crate::numeric::factorial(n);
    }
    Ok(total)
}

/// Reach (normal injectivity radius) of the image `eta(S^n)`.
///
/// Round-sphere images return their radius. Otherwise the estimate is the
/// smaller of a focal bound, `1 / max principal curvature` from local
/// quadric fits, and a global bound, the least Federer ratio
/// `|y - x|^2 / (2 dist(y - x, T_x N))` over sample pairs whose chord is
/// mostly normal.
pub fn reach_estimate(f: &BoundaryMap, samples: usize) -> Result<f64> {
    reach_estimate_with_seed(f, samples, 0xEEAC)
}

pub fn reach_estimate_with_seed(f: &BoundaryMap, samples: usize, seed: u64) -> Result<f64> {
    if samples < 100 {
        return Err(Error::InvalidInput(format!(
            "reach estimate needs at least 100 samples for the quadric fits, got {samples}"
        )));
    }
    if let Some(r) = f.image_radius {
        return Ok(r);
    }
    if f.image_dim == 0 {
        return Ok(f64::INFINITY);
    }
    if f.is_annulus() {
        return Err(Error::Unsupported("reach of two-component annulus data".into()));
    }
    let l = f.image_dim;
    let m = f.target_dim;
    if l >= m {
        return Err(Error::InvalidInput(format!(
            "image dimension {l} must be below the target dimension {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = sphere_samples(f.domain_dim, samples, f.domain_radius, seed ^ 0xA5A5);
    let stencil = (4 * (l + l * (l + 1) / 2)).max(32);
    let h = 0.05;
    let mut images = Vec::with_capacity(samples);
    let mut tangents: Vec<DMatrix<f64>> = Vec::with_capacity(samples);
    let mut kappa_max: f64 = 0.0;
    for x in &points {
        let y = f.eval(x)?;
        let frame = complement_frame(x);
        let r = f.domain_radius;
        let mut offsets = Vec::with_capacity(stencil);
        for s in 0..stencil {
            let coeff: Vec<f64> = (0..frame.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nc = norm(&coeff);
            let t: f64 = h * if s % 2 == 0 { 1.0 } else { 0.5 };
            let dir: Vec<f64> = (0..x.len())
                .map(|i| frame.iter().zip(&coeff).map(|(v, c)| v[i] * c / nc).sum())
                .collect();
            let z: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a * t.cos() + r * b * t.sin()).collect();
            let fz = f.eval(&z)?;
            offsets.push(DVector::from_iterator(m, fz.iter().zip(&y).map(|(a, b)| a - b)));
        }
        let cov = offsets.iter().fold(DMatrix::zeros(m, m), |acc, o| acc + o * o.transpose());
        let eig = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let tangent = DMatrix::from_fn(l, m, |i, k| eig.eigenvectors[(k, order[i])]);
        let normal = DMatrix::from_fn(m - l, m, |i, k| eig.eigenvectors[(k, order[l + i])]);
        kappa_max = kappa_max.max(max_curvature(&offsets, &tangent, &normal)?);
        images.push(y);
        tangents.push(tangent);
    }
    let focal = if kappa_max > 0.0 { 1.0 / kappa_max } else { f64::INFINITY };
    let mut global = f64::INFINITY;
    for i in 0..images.len() {
        for j in 0..images.len() {
            if i == j {
                continue;
            }
            let delta = DVector::from_iterator(m, images[j].iter().zip(&images[i]).map(|(a, b)| a - b));
            let len2 = delta.norm_squared();
            if len2 < 1e-24 {
                continue;
            }
            let tang2 = (&tangents[i] * &delta).norm_squared();
            let normal2 = (len2 - tang2).max(0.0);
            if normal2 >= 0.25 * len2 {
                global = global.min(len2 / (2.0 * normal2.sqrt()));
            }
        }
    }
    log::debug!("reach estimate for {}: focal {focal}, global {global}", f.name);
    Ok(focal.min(global))
}

/// Fits `w_k = b_k . s + s^T H_k s / 2` in local tangent coordinates `s`
/// and returns `max over unit u of |(u^T H_k u)_k|`.
fn max_curvature(offsets: &[DVector<f64>], tangent: &DMatrix<f64>, normal: &DMatrix<f64>) -> Result<f64> {
    let l = tangent.nrows();
    let q = normal.nrows();
    let quad: Vec<(usize, usize)> = (0..l).flat_map(|a| (a..l).map(move |b| (a, b))).collect();
    let unknowns = l + quad.len();
    let rows = offsets.len();
    let mut design = DMatrix::zeros(rows, unknowns);
    let mut rhs = DMatrix::zeros(rows, q);
    for (r, o) in offsets.iter().enumerate() {
        let s = tangent * o;
        let w = normal * o;
        for a in 0..l {
            design[(r, a)] = s[a];
        }
        for (k, &(a, b)) in quad.iter().enumerate() {
            design[(r, l + k)] = if a == b { 0.5 * s[a] * s[a] } else { s[a] * s[b] };
        }
        for k in 0..q {
            rhs[(r, k)] = w[k];
        }
    }
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(format!("quadric fit failed: {e}")))?;
    let hess: Vec<DMatrix<f64>> = (0..q)
        .map(|k| {
            let mut h = DMatrix::zeros(l, l);
            for (idx, &(a, b)) in quad.iter().enumerate() {
                h[(a, b)] = coef[(l + idx, k)];
                h[(b, a)] = coef[(l + idx, k)];
            }
            h
        })
        .collect();
    let second = |u: &DVector<f64>| -> f64 {
        hess.iter().map(|h| (u.transpose() * h * u)[(0, 0)].powi(2)).sum::<f64>().sqrt()
    };
    // Candidate directions: axes and diagonals, then projected ascent.
    let mut best_u = DVector::zeros(l);
    let mut best = -1.0;
    for a in 0..l {
        for b in a..l {
            for sign in [1.0, -1.0] {
                let mut u = DVector::zeros(l);
                u[a] += 1.0;
                if b != a {
                    u[b] += sign;
                }
                let u = u.normalize();
                let v = second(&u);
                if v > best {
                    best = v;
                    best_u = u;
                }
            }
        }
    }
    let mut u = best_u;
    for _ in 0..100 {
        let mut grad = DVector::zeros(l);
        for h in &hess {
            let hu = h * &u;
            grad += hu * (4.0 * u.dot(&(h * &u)));
        }
        let cand = (&u + grad * 0.05 / best.max(1e-12)).normalize();
        let v = second(&cand);
        if v <= best {
            break;
        }
        best = v;
        u = cand;
    }
    Ok(best)
}

/// Two-component annulus data: `inner` on the inner sphere and `outer` on
/// the outer one.
pub fn annulus_data(inner: &BoundaryMap, outer: &BoundaryMap) -> Result<BoundaryMap> {
    if inner.domain_dim != outer.domain_dim {
        return Err(Error::DimensionMismatch {
            expected: inner.domain_dim,
            actual: outer.domain_dim,
            context: "annulus component domains",
        });
    }
    if inner.target_dim != outer.target_dim {
        return Err(Error::DimensionMismatch {
            expected: inner.target_dim,
            actual: outer.target_dim,
            context: "annulus component targets",
        });
    }
    if inner.domain_radius >= outer.domain_radius {
        return Err(Error::InvalidInput(format!(
            "inner radius {} must be below outer radius {}",
            inner.domain_radius, outer.domain_radius
        )));
    }
    Ok(BoundaryMap {
        name: format!("annulus({},{})", inner.name, outer.name),
        domain_dim: inner.domain_dim,
        domain_radius: outer.domain_radius,
        target_dim: inner.target_dim,
        image_dim: inner.image_dim.max(outer.image_dim),
        image_radius: None,
        kind: MapKind::Annulus {
            split: 0.5 * (inner.domain_radius + outer.domain_radius),
            inner: Box::new(inner.clone()),
            outer: Box::new(outer.clone()),
        },
    })
}

/// Least distance between sampled images of two maps. Both maps are
/// sampled at the same sphere parameters, scaled to their own domain radii.
pub fn image_distance(f1: &BoundaryMap, f2: &BoundaryMap, samples: usize) -> Result<f64> {
    if f1.domain_dim != f2.domain_dim || f1.target_dim != f2.target_dim {
        return Err(Error::DimensionMismatch {
            expected: f1.target_dim,
            actual: f2.target_dim,
            context: "image distance maps",
        });
    }
    if samples == 0 {
        return Err(Error::InvalidInput("image distance needs samples".into()));
    }
    let params = sphere_samples(f1.domain_dim, samples, 1.0, 0xD157);
    let scaled = |x: &[f64], r: f64| -> Vec<f64> { x.iter().map(|v| v * r).collect() };
    let a: Vec<Vec<f64>> = params.iter().map(|x| f1.eval(&scaled(x, f1.domain_radius))).collect::<Result<_>>()?;
    let b: Vec<Vec<f64>> = params.iter().map(|x| f2.eval(&scaled(x, f2.domain_radius))).collect::<Result<_>>()?;
    let mut best = f64::INFINITY;
    for p in &a {
        for q in &b {
            best = best.min(dist(p, q));
        }
    }
    Ok(best)
}

/// Boundary data on the solid torus `D^n(1/2) x S^1(1)`: the boundary
/// point `(x, t)` maps to `x` in `S^(n-1)(1/2)`.
pub fn torus_data(n: usize) -> Result<BoundaryMap> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("torus data needs n >= 2, got {n}")));
    }
    Ok(BoundaryMap {
        name: if n == 2 { "torus".into() } else { format!("torus:{n}") },
        domain_dim: n,
        domain_radius: 1.0,
        target_dim: n,
        image_dim: n - 1,
        image_radius: Some(0.5),
        kind: MapKind::Torus { circle_radius: 1.0 },
    })
}

/// Example annulus data: Hopf on `S^3(1)` and `2 * Hopf(x / |x|)` on
/// `S^3(2)`.
pub fn annulus_hopf12() -> BoundaryMap {
    let inner = BoundaryMap::hopf(HopfFamily::S3S2);
    let outer = scale_map(&inner.clone().on_sphere_of_radius(2.0), 2.0);
    let mut data = annulus_data(&inner, &outer).expect("compatible components");
    data.name = "annulus:hopf12".into();
    data
}

/// Identifiers understood by [`registry`].
pub const REGISTRY_IDS: [&str; 12] = [
    "hopf3",
    "hopf7",
    "hopf15",
    "torus",
    "torus:<n>",
    "annulus:hopf12",
    "identity:<n>",
    "antipodal:<n>",
    "zpow:<k>",
    "const:<n>:<m>",
    "zero:<n>:<m>",
    "ellipsoid",
];

/// Looks up a boundary map by identifier. `const:n:m` is the constant
/// `e_1` in `R^m` and `ellipsoid` the Hopf map followed by
/// `diag(1, 1, 1/2)`.
pub fn registry(id: &str) -> Result<BoundaryMap> {
    let parts: Vec<&str> = id.split(':').collect();
    let num = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad number '{s}' in map id '{id}'")))
    };
    let map = match parts.as_slice() {
        ["hopf3"] => BoundaryMap::hopf(HopfFamily::S3S2),
        ["hopf7"] => BoundaryMap::hopf(HopfFamily::S7S4),
        ["hopf15"] => BoundaryMap::hopf(HopfFamily::S15S8),
        ["torus"] => torus_data(2)?,
        ["torus", n] => torus_data(num(n)?)?,
        ["annulus", "hopf12"] => annulus_hopf12(),
        ["identity", n] => BoundaryMap::identity(num(n)?),
        ["antipodal", n] => BoundaryMap::antipodal(num(n)?),
        ["zpow", k] => BoundaryMap::power_s1(
            k.parse::<i32>()
                .map_err(|_| Error::InvalidInput(format!("bad exponent in map id '{id}'")))?,
        ),
        ["const", n, m] | ["zero", n, m] => {
            let m = num(m)?;
            if m == 0 {
                return Err(Error::InvalidInput("target dimension must be positive".into()));
            }
            let mut c = vec![0.0; m];
            if parts[0] == "const" {
                c[0] = 1.0;
            }
            let mut f = BoundaryMap::constant(num(n)?, c);
            f.name = id.into();
            f
        }
        ["ellipsoid"] => {
            let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.5]));
            let mut f = deform_map(&BoundaryMap::hopf(HopfFamily::S3S2), &a)?;
            f.name = "ellipsoid".into();
            f
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "unknown map id '{id}'; known: {}",
                REGISTRY_IDS.join(", ")
            )))
        }
    };
    Ok(map)
}

/// Volume `2 pi^2` of `S^3`, the Hopf graph volume divided by five.
pub const S3_VOLUME: f64 = 2.0 * PI * PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sphere_mesh, sphere_mesh_with_radius};

    fn hopf() -> BoundaryMap {
        BoundaryMap::hopf(HopfFamily::S3S2)
    }

    #[test]
    fn hopf_examples() {
        let h = |x: &[f64]| hopf_map(HopfFamily::S3S2, x).unwrap();
        assert_eq!(h(&[1.0, 0.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(h(&[0.0, 0.0, 1.0, 0.0]), vec![-1.0, 0.0, 0.0]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let y = h(&[s, 0.0, s, 0.0]);
        assert!((y[0]).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15 && y[2].abs() < 1e-15);
    }

    #[test]
    fn hopf_rejects_non_unit_input() {
        assert!(matches!(
            hopf_map(HopfFamily::S3S2, &[1.1, 0.0, 0.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(hopf_map(HopfFamily::S3S2, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn hopf_matches_complex_formula() {
        for x in sphere_samples(3, 50, 1.0, 3) {
            let (z1r, z1i, z2r, z2i) = (x[0], x[1], x[2], x[3]);
            let expect = [
                z1r * z1r + z1i * z1i - z2r * z2r - z2i * z2i,
                2.0 * (z1r * z2r + z1i * z2i),
                2.0 * (z1i * z2r - z1r * z2i),
            ];
            let y = hopf_map(HopfFamily::S3S2, &x).unwrap();
            for k in 0..3 {
                assert!((y[k] - expect[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn all_hopf_families_are_unit() {
        for fam in [HopfFamily::S3S2, HopfFamily::S7S4, HopfFamily::S15S8] {
            for x in sphere_samples(fam.domain_dim(), 500, 1.0, 11) {
                let y = hopf_map(fam, &x).unwrap();
                assert_eq!(y.len(), fam.target_dim());
                assert!((norm(&y) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn octonions_are_alternative_and_normed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rand8 = || -> Vec<f64> { (0..8).map(|_| StandardNormal.sample(&mut rng)).collect() };
        for _ in 0..50 {
            let (a, b) = (rand8(), rand8());
            let lhs = cd_mul(&cd_mul(&a, &a), &b);
            let rhs = cd_mul(&a, &cd_mul(&a, &b));
            assert!(dist(&lhs, &rhs) < 1e-12);
            let lhs = cd_mul(&cd_mul(&a, &b), &b);
            let rhs = cd_mul(&a, &cd_mul(&b, &b));
            assert!(dist(&lhs, &rhs) < 1e-12);
            assert!((norm(&cd_mul(&a, &b)) - norm(&a) * norm(&b)).abs() < 1e-12);
        }
        // Not associative.
        let e = |i: usize| {
            let mut v = vec![0.0; 8];
            v[i] = 1.0;
            v
        };
        let lhs = cd_mul(&cd_mul(&e(1), &e(2)), &e(4));
        let rhs = cd_mul(&e(1), &cd_mul(&e(2), &e(4)));
        assert!(dist(&lhs, &rhs) > 1.0);
    }

    #[test]
    fn scale_map_examples() {
        let h = hopf();
        let x = [0.5, 0.5, 0.5, 0.5];
        assert_eq!(scale_map(&h, 1.0).eval(&x).unwrap(), h.eval(&x).unwrap());
        assert!(scale_map(&h, 0.0).eval(&x).unwrap().iter().all(|&v| v == 0.0));
        let big = scale_map(&h, 5.0);
        assert_eq!(big.image_radius(), Some(5.0));
        for x in sphere_samples(3, 10_000, 1.0, 9) {
            assert!((norm(&big.eval(&x).unwrap()) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hopf_jacobian_eigenvalues() {
        for x in sphere_samples(3, 20, 1.0, 2) {
            let j = hopf().tangent_jacobian(&x).unwrap();
            let mut eig: Vec<f64> = (j.transpose() * &j).symmetric_eigenvalues().iter().copied().collect();
            eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!(eig[0].abs() < 1e-8 && (eig[1] - 4.0).abs() < 1e-8 && (eig[2] - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn isometry_violations() {
        let h = hopf();
        let id = DMatrix::identity(3, 3);
        assert!(verify_isometry(&id, &h, 50).unwrap() <= 1e-9);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rot = DMatrix::from_iterator(3, 3, rot.matrix().iter().copied());
        assert!(verify_isometry(&rot, &h, 50).unwrap() <= 1e-8);
        let stretch = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0]));
        assert!(verify_isometry(&stretch, &h, 50).unwrap() > 0.1);
        assert!(verify_isometry(&DMatrix::identity(4, 4), &h, 5).is_err());
    }

    #[test]
    fn graph_volume_examples() {
        let s2 = sphere_mesh(2, 3).unwrap();
        let c = BoundaryMap::constant(2, vec![3.0, 1.0]);
        assert!((graph_volume(&c, &s2).unwrap() - 4.0 * PI).abs() < 1e-10);
        let s1 = sphere_mesh(1, 4).unwrap();
        let v = graph_volume(&BoundaryMap::identity(1), &s1).unwrap();
        assert!((v - 2.0 * PI * 2f64.sqrt()).abs() / (2.0 * PI * 2f64.sqrt()) < 0.01);
        let s3 = sphere_mesh(3, 2).unwrap();
        let v = graph_volume(&hopf(), &s3).unwrap();
        assert!((v - 10.0 * PI * PI).abs() / (10.0 * PI * PI) < 0.02, "{v}");
    }

    #[test]
    fn graph_volume_checks_dimensions() {
        let s2 = sphere_mesh(2, 1).unwrap();
        assert!(graph_volume(&hopf(), &s2).is_err());
        let s3 = sphere_mesh_with_radius(3, 1, 2.0).unwrap();
        assert!(graph_volume(&hopf(), &s3).is_err());
    }

    #[test]
    fn round_images_short_circuit() {
        assert_eq!(reach_estimate(&hopf(), 100).unwrap(), 1.0);
        assert_eq!(reach_estimate(&scale_map(&hopf(), 0.5), 100).unwrap(), 0.5);
        assert!(reach_estimate(&hopf(), 10).is_err());
    }

    #[test]
    fn distances_between_concentric_images() {
        let data = annulus_hopf12();
        let (f1, f2) = data.components().unwrap();
        assert!((image_distance(f1, f2, 300).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(image_distance(f1, f1, 50).unwrap(), 0.0);
        let f5 = scale_map(f1, 5.0);
        assert!((image_distance(f1, &f5, 200).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn torus_boundary_graph_volume_converges() {
        // f(x, t) = x on S^1(1/2) x S^1(1): sqrt(2) times the boundary area 2 pi^2.
        let f = torus_data(2).unwrap();
        let domain = crate::mesh::Domain::SolidTorus { cross_radius: 0.5, circle_radius: 1.0 };
        let exact = 2f64.sqrt() * 2.0 * PI * PI;
        let mut errs = Vec::new();
        for level in [2, 3] {
            let m = crate::mesh::domain_mesh(domain, 3, 1, level).unwrap();
            errs.push((boundary_graph_volume(&f, &m).unwrap() - exact).abs() / exact);
        }
        assert!(errs[1] < 0.01 && errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn torus_data_returns_cross_section() {
        let f = torus_data(3).unwrap();
        // Boundary point with t = 0.7 and cross-section x = (0.3, 0.4, 0.0)/|.| * 1/2.
        let x = [0.3, 0.4, 0.0];
        let t: f64 = 0.7;
        let p = [(1.0 + x[0]) * t.cos(), (1.0 + x[0]) * t.sin(), x[1], x[2]];
        let y = f.eval(&p).unwrap();
        for k in 0..3 {
            assert!((y[k] - x[k]).abs() < 1e-14);
        }
        assert!(torus_data(1).is_err());
    }

    #[test]
    fn registry_resolves_ids() {
        for id in ["hopf3", "hopf7", "hopf15", "torus", "annulus:hopf12", "identity:2", "zpow:-2", "const:3:3", "ellipsoid"] {
            assert!(registry(id).is_ok(), "{id}");
        }
        assert_eq!(registry("hopf7").unwrap().target_dim(), 5);
        assert!(registry("nope").is_err());
        assert!(registry("identity:x").is_err());
    }
}
