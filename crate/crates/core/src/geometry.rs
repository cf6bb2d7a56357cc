//! Measurement instruments for piecewise-linear graphs `x -> (x, F(x))`:
//! induced metric, mass, the boundary mass formula, the weak residual of the
//! minimal surface system, density ratios and Lipschitz constants.
//!
//! A [`GraphFunction`] stores one value in `R^(m+1)` per mesh vertex. On each
//! top simplex its Jacobian `J` is constant, so the graph of a PL map is
//! itself a simplicial complex and its mass is computed exactly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::numeric::{dist, dot, point_simplex_distance, simplex_volume, unit_ball_volume};

/// Piecewise-linear map from the vertices of a mesh into `R^target_dim`.
#[derive(Debug, Clone)]
pub struct GraphFunction<'m> {
    mesh: &'m Mesh,
    values: Vec<f64>,
    target_dim: usize,
}

impl<'m> GraphFunction<'m> {
    pub fn new(mesh: &'m Mesh, values: Vec<f64>, target_dim: usize) -> Result<Self> {
        if target_dim == 0 {
            return Err(Error::InvalidInput("target dimension must be positive".into()));
        }
        if values.len() != mesh.num_vertices() * target_dim {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_vertices() * target_dim,
                actual: values.len(),
                context: "graph function values",
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at vertex {}",
                i / target_dim
            )));
        }
        Ok(GraphFunction {
            mesh,
            values,
            target_dim,
        })
    }

    pub fn zeros(mesh: &'m Mesh, target_dim: usize) -> Self {
        GraphFunction {
            mesh,
            values: vec![0.0; mesh.num_vertices() * target_dim],
            target_dim,
        }
    }

    /// Samples `f` at every vertex.
    pub fn from_fn(mesh: &'m Mesh, target_dim: usize, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(mesh.num_vertices() * target_dim);
        for x in mesh.vertices() {
            let y = f(x);
            if y.len() != target_dim {
                return Err(Error::DimensionMismatch {
                    expected: target_dim,
                    actual: y.len(),
                    context: "sampled value",
                });
            }
            values.extend(y);
        }
        GraphFunction::new(mesh, values, target_dim)
    }

    /// Like [`from_fn`](Self::from_fn) for fallible evaluators.
    pub fn try_from_fn(
        mesh: &'m Mesh,
        target_dim: usize,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(mesh.num_vertices() * target_dim);
        for x in mesh.vertices() {
            values.extend(f(x)?);
        }
        GraphFunction::new(mesh, values, target_dim)
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn value(&self, v: usize) -> &[f64] {
        &self.values[v * self.target_dim..(v + 1) * self.target_dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// The graph point `(x, F(x))` of vertex `v`.
    pub fn graph_point(&self, v: usize) -> Vec<f64> {
        let mut p = self.mesh.vertex(v).to_vec();
        p.extend_from_slice(self.value(v));
        p
    }

    /// Returns `lambda * F` on the same mesh.
    pub fn scaled(&self, lambda: f64) -> GraphFunction<'m> {
        GraphFunction {
            mesh: self.mesh,
            values: self.values.iter().map(|v| v * lambda).collect(),
            target_dim: self.target_dim,
        }
    }

    /// Constant Jacobian `(m+1) x (n+1)` of the PL map on top simplex `c`.
    pub fn jacobian(&self, c: usize) -> DMatrix<f64> {
        let d = self.mesh.ambient_dim();
        let m = self.target_dim;
        let mut j = DMatrix::zeros(m, d);
        let cell = self.mesh.cell(c);
        // Differences against the first vertex: constants drop out exactly,
        // so affine maps give cell-independent Jacobians up to one rounding.
        let base = self.value(cell[0]);
        for (local, &v) in cell.iter().enumerate().skip(1) {
            let grad = self.mesh.hat_gradient(c, local);
            let val = self.value(v);
            for a in 0..m {
                let dv = val[a] - base[a];
                for i in 0..d {
                    j[(a, i)] += dv * grad[i];
                }
            }
        }
        j
    }

    /// Evaluates the PL interpolant at a domain point, or `None` outside
    /// the mesh.
    pub fn evaluate(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mesh = self.mesh;
        let d = mesh.ambient_dim();
        for c in 0..mesh.num_cells() {
            let cell = mesh.cell(c);
            let mut lambda = vec![0.0; d + 1];
            let p0 = mesh.vertex(cell[0]);
            for (local, l) in lambda.iter_mut().enumerate() {
                let g = mesh.hat_gradient(c, local);
                let base = if local == 0 { 1.0 } else { 0.0 };
                *l = base + (0..d).map(|i| g[i] * (x[i] - p0[i])).sum::<f64>();
            }
            if lambda.iter().all(|&l| l >= -1e-12) {
                let mut y = vec![0.0; self.target_dim];
                for (l, &v) in lambda.iter().zip(cell) {
                    for (yk, fk) in y.iter_mut().zip(self.value(v)) {
                        *yk += l * fk;
                    }
                }
                return Some(y);
            }
        }
        None
    }
}

/// Induced metric `g = I + J^T J` of a graph at one point, its inverse and
/// area density `sqrt(det g)`.
#[derive(Debug, Clone)]
pub struct MetricSample {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub sqrt_g: f64,
}

/// Builds the [`MetricSample`] for a Jacobian with one row per target
/// component and one column per domain direction.
pub fn induced_metric(jacobian: &DMatrix<f64>) -> MetricSample {
    let d = jacobian.ncols();
    let g = DMatrix::identity(d, d) + jacobian.transpose() * jacobian;
    // g >= I, so Cholesky cannot fail for finite input.
    let chol = g.clone().cholesky().expect("I + J^T J is positive definite");
    let sqrt_g = chol.l().diagonal().iter().product::<f64>();
    let g_inv = chol.inverse();
    MetricSample { g, g_inv, sqrt_g }
}

fn require_domain(mesh: &Mesh) -> Result<()> {
    if mesh.is_domain() {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "operation needs a full-dimensional domain mesh".into(),
        ))
    }
}

/// Mass (area) of the graph of a PL map over a domain mesh.
pub fn graph_mass(f: &GraphFunction) -> Result<f64> {
    require_domain(f.mesh())?;
    let mesh = f.mesh();
    Ok((0..mesh.num_cells())
        .map(|c| mesh.cell_volume(c) * induced_metric(&f.jacobian(c)).sqrt_g)
        .sum())
}

/// Right-hand side of the boundary mass formula,
/// `(1/(n+1)) * sum over boundary facets of <nu, p> * |facet|`, where `p`
/// is the graph position and `nu` the unit exterior conormal of the graph
/// boundary computed from the adjacent top simplex. For a stationary graph
/// this equals the mass.
pub fn boundary_mass_integral(f: &GraphFunction) -> Result<f64> {
    require_domain(f.mesh())?;
    let mesh = f.mesh();
    let d = mesh.ambient_dim();
    let mut total = 0.0;
    for (idx, facet) in mesh.boundary_facets().iter().enumerate() {
        let pts: Vec<Vec<f64>> = facet.vertices.iter().map(|&v| f.graph_point(v)).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let area = simplex_volume(&refs);
        if !(area > 1e-300) {
            return Err(Error::Degenerate(format!(
                "boundary facet {idx} {:?} has zero graph volume",
                facet.vertices
            )));
        }
        let opposite = *mesh
            .cell(facet.cell)
            .iter()
            .find(|v| !facet.vertices.contains(v))
            .expect("facet cell has an opposite vertex");
        let inward = crate::numeric::sub(&f.graph_point(opposite), &pts[0]);
        let nu = conormal(&pts, inward).ok_or_else(|| {
            Error::Degenerate(format!("boundary facet {idx}: conormal undefined"))
        })?;
        // <nu, p> is affine on the facet; its mean is the value at the centroid.
        let centroid: Vec<f64> = (0..pts[0].len())
            .map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / d as f64)
            .collect();
        total += dot(&nu, &centroid) * area;
    }
    Ok(total / d as f64)
}

/// Unit vector opposite to the component of `inward` orthogonal to the
/// span of the facet edges.
fn conormal(pts: &[Vec<f64>], mut inward: Vec<f64>) -> Option<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in &pts[1..] {
        let mut e = crate::numeric::sub(p, &pts[0]);
        for b in &basis {
            let c = dot(&e, b);
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let ne = crate::numeric::norm(&e);
        if ne == 0.0 {
            return None;
        }
        basis.push(e.into_iter().map(|x| x / ne).collect());
    }
    for b in &basis {
        let c = dot(&inward, b);
        inward.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
    let n = crate::numeric::norm(&inward);
    if n == 0.0 {
        return None;
    }
    Some(inward.into_iter().map(|x| -x / n).collect())
}

/// Maxima of the weak residual of the two equation groups of the minimal
/// surface system, normalised by the vertex dual volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// `max |sum_T vol sqrt(g) g^ij d_i phi| / dual` over interior vertices and j.
    pub domain: f64,
    /// `max |sum_T vol sqrt(g) g^ij d_j F^a d_i phi| / dual` over interior vertices and a.
    pub range: f64,
}

impl Residual {
    pub fn max(&self) -> f64 {
        self.domain.max(self.range)
    }
}

/// Per-vertex weak residuals: `(domain part, range part)`, flattened with
/// strides `n+1` and `m+1`. The range part is the gradient of the mass with
/// respect to the vertex values.
pub fn weak_residuals(f: &GraphFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    require_domain(f.mesh())?;
    let mesh = f.mesh();
    let d = mesh.ambient_dim();
    let m = f.target_dim();
    let mut dom = vec![0.0; mesh.num_vertices() * d];
    let mut ran = vec![0.0; mesh.num_vertices() * m];
    for c in 0..mesh.num_cells() {
        let j = f.jacobian(c);
        let metric = induced_metric(&j);
        let w = mesh.cell_volume(c) * metric.sqrt_g;
        let stress_dom = &metric.g_inv * w;
        let stress_ran = &j * &stress_dom;
        for (local, &v) in mesh.cell(c).iter().enumerate() {
            let grad = DVector::from_column_slice(mesh.hat_gradient(c, local));
            let rd = &stress_dom * &grad;
            let rr = &stress_ran * &grad;
            for i in 0..d {
                dom[v * d + i] += rd[i];
            }
            for a in 0..m {
                ran[v * m + a] += rr[a];
            }
        }
    }
    Ok((dom, ran))
}

/// Weak residual of the minimal surface system against hat functions of
/// interior vertices; zero (up to rounding) for affine maps.
pub fn msys_residual(f: &GraphFunction) -> Result<Residual> {
    let (dom, ran) = weak_residuals(f)?;
    let mesh = f.mesh();
    let dual = mesh.dual_volumes();
    let d = mesh.ambient_dim();
    let m = f.target_dim();
    let mut out = Residual {
        domain: 0.0,
        range: 0.0,
    };
    for v in 0..mesh.num_vertices() {
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        for i in 0..d {
            out.domain = out.domain.max(dom[v * d + i].abs() / dual[v]);
        }
        for a in 0..m {
            out.range = out.range.max(ran[v * m + a].abs() / dual[v]);
        }
    }
    Ok(out)
}

/// Largest operator norm of the per-simplex Jacobian.
pub fn lipschitz_estimate(f: &GraphFunction) -> Result<f64> {
    require_domain(f.mesh())?;
    let mut lip: f64 = 0.0;
    for c in 0..f.mesh().num_cells() {
        let j = f.jacobian(c);
        let jtj = j.transpose() * &j;
        let top = jtj.symmetric_eigenvalues().max();
        lip = lip.max(top.max(0.0).sqrt());
    }
    Ok(lip)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub theta: Vec<f64>,
    pub mass_in_ball: Vec<f64>,
    /// Distance from the centre to the graph boundary.
    pub max_valid_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    /// Sample points per simplex straddling the sphere of radius d.
    pub samples: usize,
    pub seed: u64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        DensityOptions {
            samples: 64,
            seed: 0x5EED,
        }
    }
}

/// Density ratios `M(G ∩ B_d(p)) / (w_(n+1) d^(n+1))` about the graph point
/// over `center_domain_point`.
pub fn density_profile(f: &GraphFunction, center_domain_point: &[f64], radii: &[f64]) -> Result<DensityProfile> {
    density_profile_with(f, center_domain_point, radii, DensityOptions::default())
}

pub fn density_profile_with(
    f: &GraphFunction,
    center_domain_point: &[f64],
    radii: &[f64],
    opts: DensityOptions,
) -> Result<DensityProfile> {
    require_domain(f.mesh())?;
    let mesh = f.mesh();
    let d = mesh.ambient_dim();
    if center_domain_point.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: center_domain_point.len(),
            context: "density centre",
        });
    }
    if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("radii must be positive and strictly increasing".into()));
    }
    if opts.samples == 0 {
        return Err(Error::InvalidInput("at least one sample per simplex".into()));
    }
    let value = f
        .evaluate(center_domain_point)
        .ok_or_else(|| Error::InvalidInput("density centre lies outside the mesh".into()))?;
    let mut center = center_domain_point.to_vec();
    center.extend(value);

    let points: Vec<Vec<f64>> = (0..mesh.num_vertices()).map(|v| f.graph_point(v)).collect();
    let mut max_valid = f64::INFINITY;
    for facet in mesh.boundary_facets() {
        let verts: Vec<&[f64]> = facet.vertices.iter().map(|&v| points[v].as_slice()).collect();
        max_valid = max_valid.min(point_simplex_distance(&center, &verts));
    }
    let last = *radii.last().unwrap();
    if last > max_valid {
        return Err(Error::RadiusTooLarge {
            requested: last,
            max_valid,
        });
    }

    let mut mass = vec![0.0; radii.len()];
    let k = d; // simplex dimension
    let shifts_per_cell = opts.samples;
    for c in 0..mesh.num_cells() {
        let verts: Vec<&[f64]> = mesh.cell(c).iter().map(|&v| points[v].as_slice()).collect();
        let far = verts.iter().map(|p| dist(p, &center)).fold(0.0, f64::max);
        let near = point_simplex_distance(&center, &verts);
        if near > last {
            continue;
        }
        let area = simplex_volume(&verts);
        // Fixed sample set per simplex, shared by all radii, so the mass
        // estimate is nondecreasing in d.
        let mut samples: Option<Vec<f64>> = None;
        for (r_idx, &r) in radii.iter().enumerate() {
            if far <= r {
                mass[r_idx] += area;
            } else if near <= r {
                let dists = samples.get_or_insert_with(|| {
                    simplex_samples(&verts, k, shifts_per_cell, opts.seed, c)
                        .iter()
                        .map(|p| dist(p, &center))
                        .collect()
                });
                let inside = dists.iter().filter(|&&s| s <= r).count();
                mass[r_idx] += area * inside as f64 / dists.len() as f64;
            }
        }
    }
    let omega = unit_ball_volume(d);
    let theta = radii
        .iter()
        .zip(&mass)
        .map(|(r, m)| m / (omega * r.powi(d as i32)))
        .collect();
    Ok(DensityProfile {
        center,
        radii: radii.to_vec(),
        theta,
        mass_in_ball: mass,
        max_valid_radius: max_valid,
    })
}

/// Randomly shifted Kronecker points mapped into the simplex by sorting.
fn simplex_samples(verts: &[&[f64]], k: usize, count: usize, seed: u64, cell: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    // Generalised golden ratio: root of x^(k+1) = x + 1.
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (k as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=k).map(|i| (1.0 / phi.powi(i as i32)).fract()).collect();
    let shift: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let dim = verts[0].len();
    (0..count)
        .map(|j| {
            let mut u: Vec<f64> = (0..k)
                .map(|i| (shift[i] + (j as f64 + 1.0) * alpha[i]).fract())
                .collect();
            u.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut lambda = Vec::with_capacity(k + 1);
            let mut prev = 0.0;
            for &x in &u {
                lambda.push(x - prev);
                prev = x;
            }
            lambda.push(1.0 - prev);
            let mut p = vec![0.0; dim];
            for (l, v) in lambda.iter().zip(verts) {
                for (pk, vk) in p.iter_mut().zip(v.iter()) {
                    *pk += l * vk;
                }
            }
            p
        })
        .collect()
}
