//! Oriented simplicial meshes of spheres `S^n` and of the domains a graph is
//! spanned over: balls, annuli (radial shells) and solid tori.
//!
//! Sphere meshes start from the boundary of the `(n+1)`-cross-polytope and
//! are refined by edge-midpoint subdivision with radial projection. Domain
//! meshes stack scaled copies of a sphere mesh into shells and split each
//! prism between consecutive shells with the staircase rule on sorted vertex
//! indices, so neighbouring prisms always agree on their shared faces.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{det_columns, factorial, norm, simplex_volume, sub};

/// Ambient dimensions above this are rejected.
pub const MAX_AMBIENT_DIM: usize = 4;

/// Refuse to build meshes with more top simplices than this.
pub const MAX_SIMPLICES: usize = 4_000_000;

pub const MESH_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Ball { radius: f64 },
    Annulus { r_in: f64, r_out: f64 },
    /// `D^n(cross_radius) x S^1(circle_radius)`; the circle lies in the
    /// first two coordinates, the disk spans the radial direction and the
    /// remaining coordinates.
    SolidTorus { cross_radius: f64, circle_radius: f64 },
}

impl Domain {
    /// Closed-form volume of the domain in `R^dim`.
    pub fn volume(&self, dim: usize) -> f64 {
        use crate::numeric::unit_ball_volume;
        match *self {
            Domain::Ball { radius } => unit_ball_volume(dim) * radius.powi(dim as i32),
            Domain::Annulus { r_in, r_out } => {
                unit_ball_volume(dim) * (r_out.powi(dim as i32) - r_in.powi(dim as i32))
            }
            // Pappus: cross-section volume times the length of the centre circle.
            Domain::SolidTorus {
                cross_radius,
                circle_radius,
            } => {
                unit_ball_volume(dim - 1)
                    * cross_radius.powi(dim as i32 - 1)
                    * 2.0
                    * std::f64::consts::PI
                    * circle_radius
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellSpacing {
    #[default]
    Uniform,
    /// Radii in geometric progression; denser towards the origin.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MeshKind {
    Sphere { n: usize, level: usize, radius: f64 },
    Domain {
        domain: Domain,
        shells: usize,
        level: usize,
        spacing: ShellSpacing,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Outer,
    Inner,
    Torus,
}

/// An oriented boundary facet: `(n+1)` vertices ordered so that the
/// exterior direction followed by the facet edges is positively oriented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFacet {
    pub vertices: Vec<usize>,
    /// Index of the unique top simplex containing the facet.
    pub cell: usize,
    pub tag: BoundaryTag,
}

/// Radius of each shell and the shell index of every vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellStructure {
    pub radii: Vec<f64>,
    pub vertex_shell: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    kind: MeshKind,
    ambient_dim: usize,
    top_dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    boundary_vertices: Vec<usize>,
    boundary_facets: Vec<BoundaryFacet>,
    shells: Option<ShellStructure>,
    // Per top simplex: volume and hat-function gradients, (top_dim + 1) rows
    // of ambient_dim entries. Only filled for full-dimensional meshes.
    cell_volume: Vec<f64>,
    hat_gradients: Vec<f64>,
    is_boundary: Vec<bool>,
}

impl Mesh {
    fn assemble(
        kind: MeshKind,
        ambient_dim: usize,
        top_dim: usize,
        coords: Vec<f64>,
        cells: Vec<usize>,
        boundary_facets: Vec<BoundaryFacet>,
        shells: Option<ShellStructure>,
    ) -> Mesh {
        let nv = coords.len() / ambient_dim;
        let mut is_boundary = vec![false; nv];
        for f in &boundary_facets {
            for &v in &f.vertices {
                is_boundary[v] = true;
            }
        }
        let boundary_vertices = (0..nv).filter(|&v| is_boundary[v]).collect();
        let mut mesh = Mesh {
            kind,
            ambient_dim,
            top_dim,
            coords,
            cells,
            boundary_vertices,
            boundary_facets,
            shells,
            cell_volume: Vec::new(),
            hat_gradients: Vec::new(),
            is_boundary,
        };
        if top_dim == ambient_dim {
            mesh.precompute_hat_gradients();
        }
        mesh
    }

    fn precompute_hat_gradients(&mut self) {
        let d = self.ambient_dim;
        let nc = self.num_cells();
        self.cell_volume = Vec::with_capacity(nc);
        self.hat_gradients = Vec::with_capacity(nc * (d + 1) * d);
        for c in 0..nc {
            let verts = self.cell(c);
            let p0 = self.vertex(verts[0]);
            // Edge matrix E with columns v_i - v_0; rows of E^-1 are the
            // gradients of the hat functions of v_1..v_d.
            let e = nalgebra::DMatrix::from_fn(d, d, |i, j| self.vertex(verts[j + 1])[i] - p0[i]);
            let det = e.determinant();
            self.cell_volume.push(det.abs() / factorial(d));
            let inv = e.try_inverse().unwrap_or_else(|| nalgebra::DMatrix::zeros(d, d));
            let mut g0 = vec![0.0; d];
            let mut rows = Vec::with_capacity(d * d);
            for i in 0..d {
                for k in 0..d {
                    let v = inv[(i, k)];
                    g0[k] -= v;
                    rows.push(v);
                }
            }
            self.hat_gradients.extend_from_slice(&g0);
            self.hat_gradients.extend_from_slice(&rows);
        }
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    /// Dimension of the ambient space the vertices live in.
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Dimension of the top simplices.
    pub fn top_dim(&self) -> usize {
        self.top_dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len() / self.ambient_dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.top_dim + 1)
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn vertices(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.ambient_dim)
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.top_dim + 1;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.top_dim + 1)
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn shells(&self) -> Option<&ShellStructure> {
        self.shells.as_ref()
    }

    pub fn is_domain(&self) -> bool {
        self.top_dim == self.ambient_dim
    }

    pub fn domain(&self) -> Option<Domain> {
        match self.kind {
            MeshKind::Domain { domain, .. } => Some(domain),
            MeshKind::Sphere { .. } => None,
        }
    }

    /// Volume of top simplex `c` (domain meshes only).
    pub fn cell_volume(&self, c: usize) -> f64 {
        self.cell_volume[c]
    }

    /// Gradient of the hat function of local vertex `local` on cell `c`.
    pub fn hat_gradient(&self, c: usize, local: usize) -> &[f64] {
        let d = self.ambient_dim;
        let base = (c * (d + 1) + local) * d;
        &self.hat_gradients[base..base + d]
    }

    /// Signed volume of a top simplex of a full-dimensional mesh, or the
    /// outward-orientation determinant `det[v0..vn] / n!` for sphere meshes.
    pub fn signed_volume(&self, c: usize) -> f64 {
        let verts = self.cell(c);
        if self.is_domain() {
            let p0 = self.vertex(verts[0]);
            let cols: Vec<Vec<f64>> = verts[1..].iter().map(|&v| sub(self.vertex(v), p0)).collect();
            det_columns(&cols) / factorial(self.top_dim)
        } else {
            let cols: Vec<Vec<f64>> = verts.iter().map(|&v| self.vertex(v).to_vec()).collect();
            det_columns(&cols) / factorial(self.top_dim)
        }
    }

    /// Flat volume of top simplex `c` (facet area for sphere meshes).
    pub fn simplex_volume(&self, c: usize) -> f64 {
        if self.is_domain() {
            return self.cell_volume[c];
        }
        let pts: Vec<&[f64]> = self.cell(c).iter().map(|&v| self.vertex(v)).collect();
        simplex_volume(&pts)
    }

    /// Sum of the flat volumes of all top simplices.
    pub fn total_volume(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.simplex_volume(c)).sum()
    }

    /// Longest edge over all top simplices.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for cell in self.cells() {
            for (i, &a) in cell.iter().enumerate() {
                for &b in &cell[i + 1..] {
                    h = h.max(crate::numeric::dist(self.vertex(a), self.vertex(b)));
                }
            }
        }
        h
    }

    /// Barycentric volume share of every vertex (sum of incident cell
    /// volumes divided by `top_dim + 1`).
    pub fn dual_volumes(&self) -> Vec<f64> {
        let mut dual = vec![0.0; self.num_vertices()];
        let share = 1.0 / (self.top_dim + 1) as f64;
        for c in 0..self.num_cells() {
            let v = self.simplex_volume(c) * share;
            for &a in self.cell(c) {
                dual[a] += v;
            }
        }
        dual
    }

    /// Checks the structural invariants: facet sharing, positive
    /// orientation, unit norm of sphere vertices and shell radii.
    pub fn validate(&self) -> Result<()> {
        let k = self.top_dim;
        let mut faces: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for cell in self.cells() {
            for skip in 0..=k {
                let mut f: Vec<usize> = cell
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                f.sort_unstable();
                *faces.entry(f).or_default() += 1;
            }
        }
        let mut boundary: Vec<Vec<usize>> = self
            .boundary_facets
            .iter()
            .map(|f| {
                let mut s = f.vertices.clone();
                s.sort_unstable();
                s
            })
            .collect();
        boundary.sort();
        let mut found = Vec::new();
        for (f, count) in &faces {
            match count {
                1 => found.push(f.clone()),
                2 => {}
                _ => {
                    return Err(Error::Degenerate(format!(
                        "face {f:?} shared by {count} simplices"
                    )))
                }
            }
        }
        if found != boundary {
            return Err(Error::Degenerate(format!(
                "boundary facet list disagrees with face counts ({} vs {})",
                boundary.len(),
                found.len()
            )));
        }
        for c in 0..self.num_cells() {
            if self.signed_volume(c) <= 0.0 {
                return Err(Error::Degenerate(format!("simplex {c} is not positively oriented")));
            }
        }
        if let MeshKind::Sphere { radius, .. } = self.kind {
            for (i, v) in self.vertices().enumerate() {
                if (norm(v) - radius).abs() > 1e-14 * radius.max(1.0) {
                    return Err(Error::Degenerate(format!("sphere vertex {i} off the sphere")));
                }
            }
        }
        if let Some(sh) = &self.shells {
            for (i, v) in self.vertices().enumerate() {
                let r = sh.radii[sh.vertex_shell[i]];
                if (norm(v) - r).abs() > 1e-14 * r.max(1.0) {
                    return Err(Error::Degenerate(format!("vertex {i} off its shell")));
                }
            }
        }
        Ok(())
    }

    /// The boundary facets as a closed mesh of their own (used to check
    /// boundary closure). Vertex indices are kept.
    pub fn boundary_face_counts(&self) -> BTreeMap<Vec<usize>, usize> {
        let mut ridges: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for f in &self.boundary_facets {
            let n = f.vertices.len();
            for skip in 0..n {
                let mut r: Vec<usize> = (0..n).filter(|&i| i != skip).map(|i| f.vertices[i]).collect();
                r.sort_unstable();
                *ridges.entry(r).or_default() += 1;
            }
        }
        ridges
    }

    /// Returns a copy with every vertex multiplied by `factor > 0`.
    pub fn dilated(&self, factor: f64) -> Mesh {
        let coords = self.coords.iter().map(|x| x * factor).collect();
        let kind = match self.kind {
            MeshKind::Sphere { n, level, radius } => MeshKind::Sphere {
                n,
                level,
                radius: radius * factor,
            },
            MeshKind::Domain {
                domain,
                shells,
                level,
                spacing,
            } => MeshKind::Domain {
                domain: match domain {
                    Domain::Ball { radius } => Domain::Ball { radius: radius * factor },
                    Domain::Annulus { r_in, r_out } => Domain::Annulus {
                        r_in: r_in * factor,
                        r_out: r_out * factor,
                    },
                    Domain::SolidTorus {
                        cross_radius,
                        circle_radius,
                    } => Domain::SolidTorus {
                        cross_radius: cross_radius * factor,
                        circle_radius: circle_radius * factor,
                    },
                },
                shells,
                level,
                spacing,
            },
        };
        let shells = self.shells.as_ref().map(|s| ShellStructure {
            radii: s.radii.iter().map(|r| r * factor).collect(),
            vertex_shell: s.vertex_shell.clone(),
        });
        Mesh::assemble(
            kind,
            self.ambient_dim,
            self.top_dim,
            coords,
            self.cells.clone(),
            self.boundary_facets.clone(),
            shells,
        )
    }

    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            version: MESH_FILE_VERSION,
            kind: match self.kind {
                MeshKind::Sphere { .. } => "sphere".into(),
                MeshKind::Domain { domain, .. } => match domain {
                    Domain::Ball { .. } => "ball".into(),
                    Domain::Annulus { .. } => "annulus".into(),
                    Domain::SolidTorus { .. } => "solid_torus".into(),
                },
            },
            params: self.kind,
            ambient_dim: self.ambient_dim,
            top_dim: self.top_dim,
            vertices: self.vertices().map(|v| v.to_vec()).collect(),
            simplices: self.cells().map(|c| c.to_vec()).collect(),
            boundary: self.boundary_facets.clone(),
            shells: self.shells.clone(),
        }
    }

    pub fn from_file(file: MeshFile) -> Result<Mesh> {
        if file.version != MESH_FILE_VERSION {
            return Err(Error::InvalidInput(format!(
                "mesh file version {} (expected {MESH_FILE_VERSION})",
                file.version
            )));
        }
        let d = file.ambient_dim;
        if file.vertices.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidInput("vertex with wrong dimension".into()));
        }
        if file.simplices.iter().any(|c| c.len() != file.top_dim + 1) {
            return Err(Error::InvalidInput("simplex with wrong arity".into()));
        }
        let nv = file.vertices.len();
        if file.simplices.iter().flatten().any(|&v| v >= nv) {
            return Err(Error::InvalidInput("simplex references a missing vertex".into()));
        }
        let coords = file.vertices.into_iter().flatten().collect();
        let cells = file.simplices.into_iter().flatten().collect();
        Ok(Mesh::assemble(
            file.params,
            d,
            file.top_dim,
            coords,
            cells,
            file.boundary,
            file.shells,
        ))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Mesh> {
        Mesh::from_file(serde_json::from_str(s)?)
    }
}

/// On-disk mesh cache container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub version: u32,
    pub kind: String,
    pub params: MeshKind,
    pub ambient_dim: usize,
    pub top_dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub simplices: Vec<Vec<usize>>,
    pub boundary: Vec<BoundaryFacet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shells: Option<ShellStructure>,
}

/// Simplicial mesh of the unit sphere `S^n ⊂ R^(n+1)`.
pub fn sphere_mesh(n: usize, level: usize) -> Result<Mesh> {
    sphere_mesh_with_radius(n, level, 1.0)
}

/// Simplicial mesh of the round sphere `S^n(radius)`.
pub fn sphere_mesh_with_radius(n: usize, level: usize, radius: f64) -> Result<Mesh> {
    if n == 0 || n + 1 > MAX_AMBIENT_DIM {
        return Err(Error::Unsupported(format!(
            "sphere meshes need 1 <= n <= {} (got n = {n})",
            MAX_AMBIENT_DIM - 1
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("sphere radius {radius}")));
    }
    let estimate = (1usize << (n + 1)) as f64 * ((1usize << n) as f64).powi(level as i32);
    if estimate > MAX_SIMPLICES as f64 {
        return Err(Error::InvalidInput(format!(
            "refinement level {level} on S^{n} needs {estimate:.0} simplices (budget {MAX_SIMPLICES})"
        )));
    }
    let d = n + 1;
    // Cross-polytope: vertex 2i = +e_i, 2i+1 = -e_i.
    let mut coords = Vec::with_capacity(2 * d * d);
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[i] = sign;
            coords.extend(v);
        }
    }
    let mut cells = Vec::new();
    for signs in 0..(1usize << d) {
        for i in 0..d {
            cells.push(2 * i + ((signs >> i) & 1));
        }
    }
    for _ in 0..level {
        refine_sphere(n, &mut coords, &mut cells);
    }
    for c in coords.iter_mut() {
        *c *= radius;
    }
    orient_sphere_cells(d, &coords, &mut cells);
    Ok(Mesh::assemble(
        MeshKind::Sphere { n, level, radius },
        d,
        n,
        coords,
        cells,
        Vec::new(),
        None,
    ))
}

fn refine_sphere(n: usize, coords: &mut Vec<f64>, cells: &mut Vec<usize>) {
    let d = n + 1;
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, coords: &mut Vec<f64>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let m: Vec<f64> = (0..d)
                .map(|k| 0.5 * (coords[a * d + k] + coords[b * d + k]))
                .collect();
            let nm = norm(&m);
            let idx = coords.len() / d;
            coords.extend(m.iter().map(|x| x / nm));
            idx
        })
    };
    let k = n + 1;
    let mut out = Vec::with_capacity(cells.len() * (1 << n));
    for cell in cells.chunks_exact(k) {
        match n {
            1 => {
                let (a, b) = (cell[0], cell[1]);
                let m = mid(a, b, coords);
                out.extend([a, m, m, b]);
            }
            2 => {
                let (a, b, c) = (cell[0], cell[1], cell[2]);
                let ab = mid(a, b, coords);
                let bc = mid(b, c, coords);
                let ca = mid(c, a, coords);
                out.extend([a, ab, ca, ab, b, bc, ca, bc, c, ab, bc, ca]);
            }
            3 => {
                let x = [cell[0], cell[1], cell[2], cell[3]];
                let mut m = [[0usize; 4]; 4];
                for i in 0..4 {
                    for j in (i + 1)..4 {
                        let v = mid(x[i], x[j], coords);
                        m[i][j] = v;
                        m[j][i] = v;
                    }
                }
                out.extend([x[0], m[0][1], m[0][2], m[0][3]]);
                out.extend([m[0][1], x[1], m[1][2], m[1][3]]);
                out.extend([m[0][2], m[1][2], x[2], m[2][3]]);
                out.extend([m[0][3], m[1][3], m[2][3], x[3]]);
                // Inner octahedron: split along its shortest diagonal.
                let diagonals = [(m[0][1], m[2][3]), (m[0][2], m[1][3]), (m[0][3], m[1][2])];
                let len = |(a, b): (usize, usize)| {
                    (0..d).map(|k| (coords[a * d + k] - coords[b * d + k]).powi(2)).sum::<f64>()
                };
                let mut best = 0;
                for i in 1..3 {
                    if len(diagonals[i]) < len(diagonals[best]) - 1e-12 {
                        best = i;
                    }
                }
                let (p, q) = diagonals[best];
                let ring: [usize; 4] = match best {
                    0 => [m[0][2], m[0][3], m[1][3], m[1][2]],
                    1 => [m[0][1], m[0][3], m[2][3], m[1][2]],
                    _ => [m[0][1], m[0][2], m[2][3], m[1][3]],
                };
                for i in 0..4 {
                    out.extend([p, q, ring[i], ring[(i + 1) % 4]]);
                }
            }
            _ => unreachable!("sphere dimension checked by caller"),
        }
    }
    *cells = out;
}

fn orient_sphere_cells(d: usize, coords: &[f64], cells: &mut [usize]) {
    for cell in cells.chunks_exact_mut(d) {
        let cols: Vec<Vec<f64>> = cell.iter().map(|&v| coords[v * d..(v + 1) * d].to_vec()).collect();
        if det_columns(&cols) < 0.0 {
            cell.swap(0, 1);
        }
    }
}

/// Mesh of a ball, annulus or solid torus in `R^ambient_dim` with uniformly
/// spaced shells.
pub fn domain_mesh(domain: Domain, ambient_dim: usize, shells: usize, level: usize) -> Result<Mesh> {
    domain_mesh_with_spacing(domain, ambient_dim, shells, level, ShellSpacing::Uniform)
}

pub fn domain_mesh_with_spacing(
    domain: Domain,
    ambient_dim: usize,
    shells: usize,
    level: usize,
    spacing: ShellSpacing,
) -> Result<Mesh> {
    if !(2..=MAX_AMBIENT_DIM).contains(&ambient_dim) {
        return Err(Error::Unsupported(format!(
            "domain meshes need ambient dimension 2..={MAX_AMBIENT_DIM} (got {ambient_dim})"
        )));
    }
    if shells == 0 {
        return Err(Error::InvalidInput("at least one shell is required".into()));
    }
    let kind = MeshKind::Domain {
        domain,
        shells,
        level,
        spacing,
    };
    match domain {
        Domain::Ball { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::InvalidInput(format!("ball radius {radius} must be positive")));
            }
            let radii = shell_radii(0.0, radius, shells, spacing, true);
            radial_mesh(kind, ambient_dim, level, &radii, true)
        }
        Domain::Annulus { r_in, r_out } => {
            if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "annulus needs 0 < r_in < r_out (got {r_in}, {r_out})"
                )));
            }
            let radii = shell_radii(r_in, r_out, shells, spacing, false);
            radial_mesh(kind, ambient_dim, level, &radii, false)
        }
        Domain::SolidTorus {
            cross_radius,
            circle_radius,
        } => {
            if !(cross_radius > 0.0 && circle_radius > cross_radius) {
                return Err(Error::InvalidInput(format!(
                    "solid torus needs 0 < cross_radius < circle_radius (got {cross_radius}, {circle_radius})"
                )));
            }
            if ambient_dim < 3 {
                return Err(Error::Unsupported("solid torus needs ambient dimension >= 3".into()));
            }
            torus_mesh(kind, ambient_dim, shells, level, cross_radius, circle_radius)
        }
    }
}

/// Shell radii from inner to outer. For balls the origin is not a shell and
/// `shells` radii are returned; for annuli `shells + 1`.
fn shell_radii(r0: f64, r1: f64, shells: usize, spacing: ShellSpacing, ball: bool) -> Vec<f64> {
    let k = shells as f64;
    match (spacing, ball) {
        (ShellSpacing::Uniform, true) => (1..=shells).map(|i| r1 * i as f64 / k).collect(),
        (ShellSpacing::Uniform, false) => (0..=shells)
            .map(|i| if i == shells { r1 } else { r0 + (r1 - r0) * i as f64 / k })
            .collect(),
        // Ball: innermost shell at r1 / 2^(shells-1), each shell doubling.
        (ShellSpacing::Geometric, true) => (1..=shells)
            .map(|i| r1 * 0.5f64.powi((shells - i) as i32))
            .collect(),
        (ShellSpacing::Geometric, false) => (0..=shells)
            .map(|i| if i == shells { r1 } else { r0 * (r1 / r0).powf(i as f64 / k) })
            .collect(),
    }
}

fn radial_mesh(kind: MeshKind, d: usize, level: usize, radii: &[f64], with_center: bool) -> Result<Mesh> {
    let sphere = sphere_mesh(d - 1, level)?;
    let nv = sphere.num_vertices();
    let layers = radii.len() - usize::from(!with_center);
    let ncells = sphere.num_cells() * (layers * d + usize::from(with_center));
    if ncells > MAX_SIMPLICES {
        return Err(Error::InvalidInput(format!(
            "domain mesh would have {ncells} simplices (budget {MAX_SIMPLICES})"
        )));
    }
    let offset = usize::from(with_center);
    let mut coords = Vec::with_capacity((radii.len() * nv + offset) * d);
    let mut vertex_shell = Vec::new();
    let mut shell_r = Vec::new();
    if with_center {
        coords.extend(std::iter::repeat_n(0.0, d));
        vertex_shell.push(0);
        shell_r.push(0.0);
    }
    for (s, &r) in radii.iter().enumerate() {
        shell_r.push(r);
        for v in sphere.vertices() {
            coords.extend(v.iter().map(|x| x * r));
            vertex_shell.push(s + offset);
        }
    }
    let at = |shell: usize, v: usize| offset + shell * nv + v;
    let mut cells = Vec::with_capacity(ncells * (d + 1));
    for facet in sphere.cells() {
        let mut sorted = facet.to_vec();
        sorted.sort_unstable();
        if with_center {
            cells.push(0);
            cells.extend(sorted.iter().map(|&v| at(0, v)));
        }
        for s in 0..radii.len() - 1 {
            staircase(&sorted, |v| at(s, v), |v| at(s + 1, v), &mut cells);
        }
    }
    finish_domain(
        kind,
        d,
        coords,
        cells,
        Some(ShellStructure {
            radii: shell_r,
            vertex_shell,
        }),
    )
}

/// Staircase split of `simplex x [lo, hi]` into `k + 1` simplices, where
/// `sorted` lists the base simplex's vertex ids in increasing order.
fn staircase(sorted: &[usize], lo: impl Fn(usize) -> usize, hi: impl Fn(usize) -> usize, out: &mut Vec<usize>) {
    let k = sorted.len();
    for j in 0..k {
        out.extend(sorted[..=j].iter().map(|&v| lo(v)));
        out.extend(sorted[j..].iter().map(|&v| hi(v)));
    }
}

fn torus_mesh(
    kind: MeshKind,
    d: usize,
    shells: usize,
    level: usize,
    cross_radius: f64,
    circle_radius: f64,
) -> Result<Mesh> {
    let disk = domain_mesh(Domain::Ball { radius: cross_radius }, d - 1, shells, level)?;
    let segments = 8usize << level;
    let nd = disk.num_vertices();
    let ncells = disk.num_cells() * d * segments;
    if ncells > MAX_SIMPLICES {
        return Err(Error::InvalidInput(format!(
            "solid torus mesh would have {ncells} simplices (budget {MAX_SIMPLICES})"
        )));
    }
    let mut coords = Vec::with_capacity(nd * segments * d);
    for j in 0..segments {
        let t = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
        let (s, c) = t.sin_cos();
        for v in disk.vertices() {
            let rho = circle_radius + v[0];
            coords.push(rho * c);
            coords.push(rho * s);
            coords.extend_from_slice(&v[1..]);
        }
    }
    let mut cells = Vec::with_capacity(ncells * (d + 1));
    for cell in disk.cells() {
        let mut sorted = cell.to_vec();
        sorted.sort_unstable();
        for j in 0..segments {
            let jn = (j + 1) % segments;
            staircase(&sorted, |v| j * nd + v, |v| jn * nd + v, &mut cells);
        }
    }
    finish_domain(kind, d, coords, cells, None)
}

fn finish_domain(
    kind: MeshKind,
    d: usize,
    coords: Vec<f64>,
    mut cells: Vec<usize>,
    shells: Option<ShellStructure>,
) -> Result<Mesh> {
    let vertex = |v: usize| &coords[v * d..(v + 1) * d];
    for cell in cells.chunks_exact_mut(d + 1) {
        let p0 = vertex(cell[0]);
        let cols: Vec<Vec<f64>> = cell[1..].iter().map(|&v| sub(vertex(v), p0)).collect();
        let det = det_columns(&cols);
        if det.abs() < 1e-300 {
            return Err(Error::Degenerate(format!("flat simplex {cell:?}")));
        }
        if det < 0.0 {
            cell.swap(0, 1);
        }
    }
    let boundary = extract_boundary(kind, d, &coords, &cells)?;
    Ok(Mesh::assemble(kind, d, d, coords, cells, boundary, shells))
}

fn extract_boundary(kind: MeshKind, d: usize, coords: &[f64], cells: &[usize]) -> Result<Vec<BoundaryFacet>> {
    let vertex = |v: usize| &coords[v * d..(v + 1) * d];
    // sorted face -> (count, cell, opposite vertex)
    let mut faces: BTreeMap<Vec<usize>, (usize, usize, usize)> = BTreeMap::new();
    for (c, cell) in cells.chunks_exact(d + 1).enumerate() {
        for skip in 0..=d {
            let mut f: Vec<usize> = (0..=d).filter(|&i| i != skip).map(|i| cell[i]).collect();
            f.sort_unstable();
            let e = faces.entry(f).or_insert((0, c, cell[skip]));
            e.0 += 1;
        }
    }
    let split = match kind {
        MeshKind::Domain {
            domain: Domain::Annulus { r_in, r_out },
            ..
        } => Some(0.5 * (r_in + r_out)),
        _ => None,
    };
    let mut out = Vec::new();
    for (mut f, (count, cell, opposite)) in faces {
        if count > 2 {
            return Err(Error::Degenerate(format!("face {f:?} shared by {count} simplices")));
        }
        if count == 2 {
            continue;
        }
        let p0 = vertex(f[0]);
        let mut cols = vec![sub(p0, vertex(opposite))];
        cols.extend(f[1..].iter().map(|&v| sub(vertex(v), p0)));
        if det_columns(&cols) < 0.0 {
            f.swap(0, 1);
        }
        let tag = match (kind, split) {
            (_, Some(mid)) => {
                let r = f.iter().map(|&v| norm(vertex(v))).sum::<f64>() / d as f64;
                if r < mid {
                    BoundaryTag::Inner
                } else {
                    BoundaryTag::Outer
                }
            }
            (
                MeshKind::Domain {
                    domain: Domain::SolidTorus { .. },
                    ..
                },
                _,
            ) => BoundaryTag::Torus,
            _ => BoundaryTag::Outer,
        };
        out.push(BoundaryFacet {
            vertices: f,
            cell,
            tag,
        });
    }
    Ok(out)
}

/// Checks that the outward orientation of a boundary facet points away from
/// its adjacent cell (used by tests and `validate` callers).
pub fn facet_orientation(mesh: &Mesh, facet: &BoundaryFacet) -> f64 {
    let cell = mesh.cell(facet.cell);
    let opposite = *cell.iter().find(|v| !facet.vertices.contains(v)).unwrap();
    let p0 = mesh.vertex(facet.vertices[0]);
    let mut cols = vec![sub(p0, mesh.vertex(opposite))];
    cols.extend(facet.vertices[1..].iter().map(|&v| sub(mesh.vertex(v), p0)));
    det_columns(&cols)
}

/// Sorted vertex ids on the boundary component with the given tag.
pub fn boundary_points(mesh: &Mesh, tag: BoundaryTag) -> Vec<usize> {
    let mut vs: Vec<usize> = mesh
        .boundary_facets()
        .iter()
        .filter(|f| f.tag == tag)
        .flat_map(|f| f.vertices.iter().copied())
        .collect();
    vs.sort_unstable();
    vs.dedup();
    vs
}
