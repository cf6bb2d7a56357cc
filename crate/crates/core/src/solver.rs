//! Discrete area minimisation with Dirichlet data `R eta`, continuation in
//! `R`, and residual scans of cone candidates `tan(theta) |x| eta(x/|x|)`.
//!
//! The unknowns are the values at interior vertices. The energy is the
//! exact mass of the PL graph; its gradient is assembled per simplex from
//! `d sqrt(det g) / dF_a = vol sqrt(g) J g^-1 grad(phi_a)`. Minimisation is
//! Polak-Ribiere+ conjugate gradient, Jacobi-preconditioned with the
//! diagonal of the flat stiffness matrix.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::boundary_data::BoundaryMap;
use crate::bounds::{exact_upper_bound, BoundModel};
use crate::error::{Error, Result};
use crate::geometry::{lipschitz_estimate, msys_residual, weak_residuals, GraphFunction, Residual};
use crate::mesh::{Domain, Mesh, MeshKind};
use crate::numeric::norm;

/// Mass and its gradient with respect to vertex values (flattened, stride
/// `m+1`), with the entries of pinned vertices set to zero.
pub fn area_energy_and_gradient(f: &GraphFunction, free: &[bool]) -> Result<(f64, Vec<f64>)> {
    let mesh = f.mesh();
    if !mesh.is_domain() {
        return Err(Error::InvalidInput("area gradient needs a domain mesh".into()));
    }
    if free.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_vertices(),
            actual: free.len(),
            context: "free-vertex mask",
        });
    }
    let mut grad = vec![0.0; f.values().len()];
    let e = energy_gradient(mesh, f.values(), f.target_dim(), &mut grad);
    mask(&mut grad, free, f.target_dim());
    Ok((e, grad))
}

fn mask(v: &mut [f64], free: &[bool], m: usize) {
    for (i, &fr) in free.iter().enumerate() {
        if !fr {
            v[i * m..(i + 1) * m].iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Cholesky of a small SPD matrix (row-major `d x d`): `(sqrt det, inverse)`.
fn spd_sqrt_det_inverse(g: &[f64], d: usize, inv: &mut [f64]) -> f64 {
    let mut l = [0.0f64; 64];
    let mut sqrt_det = 1.0;
    for i in 0..d {
        for j in 0..=i {
            let mut s = g[i * d + j];
            for k in 0..j {
                s -= l[i * 8 + k] * l[j * 8 + k];
            }
            if i == j {
                let r = s.sqrt();
                l[i * 8 + i] = r;
                sqrt_det *= r;
            } else {
                l[i * 8 + j] = s / l[j * 8 + j];
            }
        }
    }
    // inv = L^-T L^-1, column by column.
    let mut linv = [0.0f64; 64];
    for c in 0..d {
        for i in c..d {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[i * 8 + k] * linv[k * 8 + c];
            }
            linv[i * 8 + c] = s / l[i * 8 + i];
        }
    }
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for k in i.max(j)..d {
                s += linv[k * 8 + i] * linv[k * 8 + j];
            }
            inv[i * d + j] = s;
        }
    }
    sqrt_det
}

/// Mass of the graph and accumulated gradient (added into `grad`).
fn energy_gradient(mesh: &Mesh, values: &[f64], m: usize, grad: &mut [f64]) -> f64 {
    let d = mesh.ambient_dim();
    let mut j = vec![0.0; m * d];
    let mut w = vec![0.0; m * d];
    let mut g = [0.0; 16];
    let mut ginv = [0.0; 16];
    let mut energy = 0.0;
    for c in 0..mesh.num_cells() {
        let cell = mesh.cell(c);
        j.iter_mut().for_each(|x| *x = 0.0);
        for (local, &v) in cell.iter().enumerate() {
            let grad_phi = mesh.hat_gradient(c, local);
            let val = &values[v * m..(v + 1) * m];
            for a in 0..m {
                for i in 0..d {
                    j[a * d + i] += val[a] * grad_phi[i];
                }
            }
        }
        for i in 0..d {
            for k in 0..=i {
                let mut s = if i == k { 1.0 } else { 0.0 };
                for a in 0..m {
                    s += j[a * d + i] * j[a * d + k];
                }
                g[i * d + k] = s;
                g[k * d + i] = s;
            }
        }
        let sqrt_g = spd_sqrt_det_inverse(&g[..d * d], d, &mut ginv[..d * d]);
        let vol = mesh.cell_volume(c);
        energy += vol * sqrt_g;
        let scale = vol * sqrt_g;
        for a in 0..m {
            for i in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += j[a * d + k] * ginv[k * d + i];
                }
                w[a * d + i] = scale * s;
            }
        }
        for (local, &v) in cell.iter().enumerate() {
            let grad_phi = mesh.hat_gradient(c, local);
            for a in 0..m {
                let mut s = 0.0;
                for i in 0..d {
                    s += w[a * d + i] * grad_phi[i];
                }
                grad[v * m + a] += s;
            }
        }
    }
    energy
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zero,
    #[default]
    Radial,
    WarmStart,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    Zero,
    /// `R |x| eta(x/|x|)` on balls, the ray-wise blend of the two boundary
    /// values on annuli, and the cross-section analogue on solid tori.
    Radial,
    /// Full vertex values (flattened); boundary entries are overwritten.
    WarmStart(Vec<f64>),
}

impl InitialGuess {
    pub fn kind(&self) -> InitKind {
        match self {
            InitialGuess::Zero => InitKind::Zero,
            InitialGuess::Radial => InitKind::Radial,
            InitialGuess::WarmStart(_) => InitKind::WarmStart,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop when `|grad| <= max(rtol |grad_0|, atol)`.
    pub rtol: f64,
    pub atol: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Lipschitz constant above which continuation flags a blow-up.
    pub lipschitz_blowup: f64,
    pub record_trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rtol: 1e-8,
            atol: 1e-14,
            max_iterations: 20_000,
            armijo: 1e-4,
            lipschitz_blowup: 1e3,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
    pub tolerance: f64,
    pub mass: f64,
    pub lipschitz: f64,
    pub min_norm_interior: f64,
    pub residual: Residual,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// A solve together with the final vertex values and the iteration trace.
#[derive(Debug, Clone)]
pub struct Solution {
    pub result: SolveResult,
    pub values: Vec<f64>,
    pub target_dim: usize,
    pub trace: Vec<TraceRow>,
}

impl Solution {
    pub fn graph<'m>(&self, mesh: &'m Mesh) -> Result<GraphFunction<'m>> {
        GraphFunction::new(mesh, self.values.clone(), self.target_dim)
    }
}

/// Boundary values `R eta(x)` at every boundary vertex, computed once.
pub fn boundary_values(mesh: &Mesh, data: &BoundaryMap, r: f64) -> Result<Vec<(usize, Vec<f64>)>> {
    if data.domain_dim() + 1 != mesh.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: mesh.ambient_dim(),
            actual: data.domain_dim() + 1,
            context: "boundary data for this mesh",
        });
    }
    mesh.boundary_vertices()
        .iter()
        .map(|&v| {
            let y = data.eval_on_boundary(mesh.vertex(v))?;
            Ok((v, y.into_iter().map(|a| a * r).collect()))
        })
        .collect()
}

fn radial_guess(mesh: &Mesh, data: &BoundaryMap, r: f64) -> Result<Vec<f64>> {
    let m = data.target_dim();
    let d = mesh.ambient_dim();
    let mut values = vec![0.0; mesh.num_vertices() * m];
    let domain = mesh
        .domain()
        .ok_or_else(|| Error::InvalidInput("solver needs a domain mesh".into()))?;
    for v in 0..mesh.num_vertices() {
        let x = mesh.vertex(v);
        let nx = norm(x);
        let out = &mut values[v * m..(v + 1) * m];
        match domain {
            Domain::Ball { radius } => {
                if nx == 0.0 {
                    continue;
                }
                let y = data.eval_on_boundary(&x.iter().map(|a| a * radius / nx).collect::<Vec<_>>())?;
                for (o, yk) in out.iter_mut().zip(y) {
                    *o = r * yk * nx / radius;
                }
            }
            Domain::Annulus { r_in, r_out } => {
                let t = ((nx - r_in) / (r_out - r_in)).clamp(0.0, 1.0);
                let yi = data.eval_on_boundary(&x.iter().map(|a| a * r_in / nx).collect::<Vec<_>>())?;
                let yo = data.eval_on_boundary(&x.iter().map(|a| a * r_out / nx).collect::<Vec<_>>())?;
                for ((o, a), b) in out.iter_mut().zip(yi).zip(yo) {
                    *o = r * ((1.0 - t) * a + t * b);
                }
            }
            Domain::SolidTorus {
                cross_radius,
                circle_radius,
            } => {
                let rho = x[0].hypot(x[1]);
                let mut s = vec![rho - circle_radius];
                s.extend_from_slice(&x[2..]);
                let ns = norm(&s);
                if ns == 0.0 {
                    continue;
                }
                let scale = cross_radius / ns;
                let rb = circle_radius + s[0] * scale;
                let mut q = vec![rb * x[0] / rho, rb * x[1] / rho];
                q.extend(s[1..].iter().map(|a| a * scale));
                debug_assert_eq!(q.len(), d);
                let y = data.eval_on_boundary(&q)?;
                for (o, yk) in out.iter_mut().zip(y) {
                    *o = r * yk * ns / cross_radius;
                }
            }
        }
    }
    Ok(values)
}

/// Strong Wolfe curvature factor of the line search.
const CURVATURE: f64 = 0.4;

/// Relative width of the band in which energy differences count as round-off.
pub const ROUNDOFF_BAND: f64 = 64.0 * f64::EPSILON;

/// Minimises the graph mass over interior values with boundary values
/// pinned to `R eta`. Non-finite energies end the run as a divergence.

pub fn minimize(mesh: &Mesh, data: &BoundaryMap, r: f64, init: InitialGuess, opts: &SolveOptions) -> Result<Solution> {
    let start = Instant::now();
    if !r.is_finite() {
        return Err(Error::InvalidInput(format!("scaling R = {r} is not finite")));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    let m = data.target_dim();
    let pinned = boundary_values(mesh, data, r)?;
    let mut x = match init {
        InitialGuess::Zero => vec![0.0; mesh.num_vertices() * m],
        InitialGuess::Radial => radial_guess(mesh, data, r)?,
        InitialGuess::WarmStart(v) => {
            if v.len() != mesh.num_vertices() * m {
                return Err(Error::DimensionMismatch {
                    expected: mesh.num_vertices() * m,
                    actual: v.len(),
                    context: "warm start values",
                });
            }
            v
        }
    };
    for (v, y) in &pinned {
        x[v * m..(v + 1) * m].copy_from_slice(y);
    }
    let free: Vec<bool> = (0..mesh.num_vertices()).map(|v| !mesh.is_boundary_vertex(v)).collect();
    let free_dofs = free.iter().filter(|&&f| f).count() * m;

    // Jacobi preconditioner: diagonal of the flat stiffness matrix.
    let mut diag = vec![0.0; mesh.num_vertices()];
    for c in 0..mesh.num_cells() {
        for (local, &v) in mesh.cell(c).iter().enumerate() {
            let gp = mesh.hat_gradient(c, local);
            diag[v] += mesh.cell_volume(c) * gp.iter().map(|a| a * a).sum::<f64>();
        }
    }

    let eval = |x: &[f64], g: &mut Vec<f64>| -> f64 {
        g.iter_mut().for_each(|a| *a = 0.0);
        let e = energy_gradient(mesh, x, m, g);
        mask(g, &free, m);
        e
    };
    let precondition = |g: &[f64]| -> Vec<f64> {
        g.iter().enumerate().map(|(i, a)| if free[i / m] { a / diag[i / m] } else { 0.0 }).collect()
    };
    let dotp = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(p, q)| p * q).sum() };

    let mut g = vec![0.0; x.len()];
    let mut energy = eval(&x, &mut g);
    let g0 = norm(&g);
    let tol = (opts.rtol * g0).max(opts.atol);
    let mut trace = Vec::new();
    let mut record = |it: usize, e: f64, gn: f64, step: f64| {
        if opts.record_trace {
            trace.push(TraceRow {
                iteration: it,
                energy: e,
                gradient_norm: gn,
                step,
            });
        }
    };
    record(0, energy, g0, 0.0);

    let mut converged = g0 <= tol;
    let mut termination = if converged { "gradient tolerance" } else { "iteration cap" }.to_string();
    let mut iterations = 0;
    if !energy.is_finite() {
        converged = false;
        termination = "diverged: non-finite energy".into();
    } else if !converged {
        let mut z = precondition(&g);
        let mut d: Vec<f64> = z.iter().map(|a| -a).collect();
        let mut prev: Option<(f64, f64)> = None; // (alpha, slope)
        let mut since_restart = 0;
        let mut xt = vec![0.0; x.len()];
        let mut gt = vec![0.0; x.len()];
        while iterations < opts.max_iterations {
            iterations += 1;
            let mut slope = dotp(&g, &d);
            if slope >= 0.0 {
                d = z.iter().map(|a| -a).collect();
                slope = dotp(&g, &d);
                since_restart = 0;
            }
            let mut alpha = match prev {
                Some((a, s)) => (a * s / slope).clamp(1e-12, 1e6),
                None => 1.0,
            };
            let mut accepted = None;
            let mut diverged = false;
            // Bracket on the directional derivative. Energy differences inside
            // the round-off band are not trusted; there only the derivative
            // decides, so the energy may rise by at most that band.
            let (mut lo, mut s_lo) = (0.0, slope);
            let mut hi: Option<(f64, f64)> = None;
            for _ in 0..60 {
                for i in 0..x.len() {
                    xt[i] = x[i] + alpha * d[i];
                }
                let et = eval(&xt, &mut gt);
                if !et.is_finite() {
                    diverged = true;
                    break;
                }
                let st = dotp(&gt, &d);
                let roundoff = (et - energy).abs() <= ROUNDOFF_BAND * energy.abs();
                let armijo = et <= energy + opts.armijo * alpha * slope;
                if (roundoff || (armijo && et <= energy)) && st.abs() <= CURVATURE * slope.abs() {
                    accepted = Some((et, st));
                    break;
                }
                if (!armijo && !roundoff) || st > 0.0 {
                    hi = Some((alpha, st));
                } else {
                    (lo, s_lo) = (alpha, st);
                }
                alpha = match hi {
                    Some((h, s_hi)) => {
                        let width = h - lo;
                        let secant = if s_hi > s_lo { lo - s_lo * width / (s_hi - s_lo) } else { lo + 0.5 * width };
                        secant.clamp(lo + 0.1 * width, h - 0.1 * width)
                    }
                    None => {
                        let secant = if st > s_lo { alpha - st * (alpha - lo) / (st - s_lo) } else { 4.0 * alpha };
                        secant.clamp(1.5 * alpha, 4.0 * alpha)
                    }
                };
            }
            if diverged {
                termination = "diverged: non-finite energy".into();
                break;
            }
            let Some((et, _)) = accepted else {
                let gn = norm(&g);
                converged = gn <= tol;
                termination = if converged { "gradient tolerance" } else { "line search failed" }.into();
                break;
            };
            std::mem::swap(&mut x, &mut xt);
            energy = et;
            let g_old = std::mem::replace(&mut g, gt.clone());
            let gn = norm(&g);
            record(iterations, energy, gn, alpha);
            if gn <= tol {
                converged = true;
                termination = "gradient tolerance".into();
                break;
            }
            let z_new = precondition(&g);
            let denom = dotp(&g_old, &z);
            let beta = if since_restart + 1 >= free_dofs.max(1) || denom <= 0.0 {
                since_restart = 0;
                0.0
            } else {
                since_restart += 1;
                let num: f64 = z_new.iter().zip(g.iter().zip(&g_old)).map(|(zn, (gn, go))| zn * (gn - go)).sum();
                (num / denom).max(0.0)
            };
            prev = Some((alpha, slope));
            for i in 0..d.len() {
                d[i] = -z_new[i] + beta * d[i];
            }
            z = z_new;
        }
    }

    let f = GraphFunction::new(mesh, x, m).or_else(|e| match e {
        Error::InvalidInput(_) => Err(Error::Numerical("solver produced non-finite values".into())),
        other => Err(other),
    });
    let (lipschitz, residual, min_norm_interior, values) = match f {
        Ok(f) => {
            let min_norm = (0..mesh.num_vertices())
                .filter(|&v| free[v])
                .map(|v| norm(f.value(v)))
                .fold(f64::INFINITY, f64::min);
            (lipschitz_estimate(&f)?, msys_residual(&f)?, min_norm, f.into_values())
        }
        Err(_) => {
            converged = false;
            termination = "diverged: non-finite values".into();
            (
                f64::INFINITY,
                Residual {
                    domain: f64::INFINITY,
                    range: f64::INFINITY,
                },
                f64::NAN,
                vec![f64::NAN; mesh.num_vertices() * m],
            )
        }
    };
    let result = SolveResult {
        converged,
        termination,
        iterations,
        initial_gradient_norm: g0,
        final_gradient_norm: norm(&g),
        tolerance: tol,
        mass: energy,
        lipschitz,
        min_norm_interior,
        residual,
        r,
        wall_time: start.elapsed(),
    };
    log::info!(
        "solve R = {r}: converged = {}, {} iterations, mass {:.12}",
        result.converged,
        result.iterations,
        result.mass
    );
    Ok(Solution {
        result,
        values,
        target_dim: m,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    pub result: SolveResult,
    /// Boundary-formula bound at the mesh's refinement level; `None` for
    /// data whose boundary is not a union of spheres.
    pub upper_exact: Option<f64>,
    pub upper: Option<f64>,
    pub lower: Option<f64>,
    pub flags: Vec<String>,
}

/// Per-R diagnostics of a continuation run. Non-rigorous: a failed solve is
/// evidence, not proof, of non-existence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub steps: Vec<ContinuationStep>,
    pub first_failure: Option<f64>,
    pub first_blowup: Option<f64>,
    /// Converged results whose mass exceeds `upper_exact`.
    pub bound_violations: Vec<f64>,
    /// Converged results beyond `R*` with mass below the lower bound.
    pub suspicious: Vec<f64>,
}

/// Solves along an increasing schedule, warm-starting each `R` from the
/// previous solution scaled by `R_new / R_old`.
pub fn continuation(
    mesh: &Mesh,
    data: &BoundaryMap,
    schedule: &[f64],
    opts: &SolveOptions,
    bounds: Option<&BoundModel>,
) -> Result<(ContinuationReport, Vec<Solution>)> {
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("R schedule must be strictly increasing".into()));
    }
    let r_star = bounds.and_then(|b| b.threshold().ok()).map(|t| t.r_star);
    let mut report = ContinuationReport {
        steps: Vec::new(),
        first_failure: None,
        first_blowup: None,
        bound_violations: Vec::new(),
        suspicious: Vec::new(),
    };
    let sphere_level = match mesh.kind() {
        MeshKind::Domain {
            domain: Domain::Ball { .. } | Domain::Annulus { .. },
            level,
            ..
        } => Some(level),
        _ => None,
    };
    let mut solutions: Vec<Solution> = Vec::new();
    for &r in schedule {
        let init = match solutions.last() {
            Some(prev) if prev.result.r != 0.0 && prev.result.converged => {
                let s = r / prev.result.r;
                InitialGuess::WarmStart(prev.values.iter().map(|v| v * s).collect())
            }
            _ => InitialGuess::Radial,
        };
        let sol = minimize(mesh, data, r, init, opts)?;
        let res = &sol.result;
        let mut flags = Vec::new();
        if !res.converged {
            flags.push(format!("not converged: {}", res.termination));
            report.first_failure.get_or_insert(r);
        }
        if res.lipschitz > opts.lipschitz_blowup {
            flags.push(format!("lipschitz {:.3e} exceeds blow-up threshold", res.lipschitz));
            report.first_blowup.get_or_insert(r);
        }
        let upper_exact = match sphere_level {
            Some(level) => Some(exact_upper_bound(data, r, level)?),
            None => None,
        };
        if let Some(u) = upper_exact {
            if res.converged && res.mass > u * (1.0 + 1e-9) {
                flags.push(format!("mass {:.6} exceeds the boundary bound {u:.6}", res.mass));
                report.bound_violations.push(r);
            }
        }
        let upper = bounds.map(|b| b.upper(r));
        let lower = bounds.map(|b| b.lower(r));
        if let (Some(rs), Some(lo)) = (r_star, lower) {
            if res.converged && r > rs && res.mass < lo {
                flags.push("converged beyond R* with mass below the lower bound: discretization artifact".into());
                report.suspicious.push(r);
            }
        }
        report.steps.push(ContinuationStep {
            result: res.clone(),
            upper_exact,
            upper,
            lower,
            flags,
        });
        solutions.push(sol);
    }
    Ok((report, solutions))
}

/// `F(x) = tan(theta) |x| eta(x/|x|)`, with `F(0) = 0`.
pub fn cone_candidate<'m>(theta: f64, eta: &BoundaryMap, mesh: &'m Mesh) -> Result<GraphFunction<'m>> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidInput(format!("cone angle {theta} outside (0, pi/2)")));
    }
    if eta.domain_dim() + 1 != mesh.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: mesh.ambient_dim(),
            actual: eta.domain_dim() + 1,
            context: "cone data for this mesh",
        });
    }
    let t = theta.tan();
    GraphFunction::try_from_fn(mesh, eta.target_dim(), |x| {
        let nx = norm(x);
        if nx == 0.0 {
            return Ok(vec![0.0; eta.target_dim()]);
        }
        let unit: Vec<f64> = x.iter().map(|a| a * eta.domain_radius() / nx).collect();
        Ok(eta.eval(&unit)?.into_iter().map(|a| t * nx * a).collect())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeScan {
    pub theta_grid: Vec<f64>,
    /// Hat-function residuals of each candidate.
    pub residuals: Vec<Residual>,
    /// Signed mode residual divided by `tan(theta)`.
    pub mode: Vec<f64>,
    /// `|mode|`; its grid argmin is `theta_star`.
    pub scaled: Vec<f64>,
    pub theta_star: f64,
    /// Root of the mode residual inside the bracket around `theta_star`,
    /// or the grid value when no sign change is bracketed.
    pub theta_star_refined: f64,
}

/// Weak range residual of `F` tested against the cone mode
/// `psi(x) = b(|x|) eta(x/|x|)`, `b(r) = (r - r_in)(r_out - r)`, averaged with
/// weight `b` over interior vertices. Hat-function maxima carry an O(1)
/// consistency error on these meshes; this projection does not.
pub fn cone_mode_residual(f: &GraphFunction, eta: &BoundaryMap) -> Result<f64> {
    let mesh = f.mesh();
    let (r_in, r_out) = match mesh.domain() {
        Some(Domain::Annulus { r_in, r_out }) => (r_in, r_out),
        Some(Domain::Ball { radius }) => (0.0, radius),
        _ => return Err(Error::InvalidInput("cone scans need a ball or annulus mesh".into())),
    };
    let (_, ran) = weak_residuals(f)?;
    let dual = mesh.dual_volumes();
    let m = f.target_dim();
    let (mut num, mut den) = (0.0, 0.0);
    for v in 0..mesh.num_vertices() {
        let x = mesh.vertex(v);
        let r = norm(x);
        if mesh.is_boundary_vertex(v) || r == 0.0 {
            continue;
        }
        let unit: Vec<f64> = x.iter().map(|a| a * eta.domain_radius() / r).collect();
        let e = eta.eval(&unit)?;
        let b = (r - r_in) * (r_out - r);
        num += b * (0..m).map(|a| e[a] * ran[v * m + a]).sum::<f64>();
        den += b * dual[v];
    }
    if den == 0.0 {
        return Err(Error::InvalidInput("cone scans need interior vertices".into()));
    }
    Ok(num / den)
}

/// Residual scan of cone candidates over a grid of angles. The mode residual
/// is divided by `tan(theta)` so that the trivial small-angle decay does not
/// mask the stationary angle.
pub fn cone_scan(eta: &BoundaryMap, theta_grid: &[f64], mesh: &Mesh) -> Result<ConeScan> {
    if theta_grid.is_empty() || theta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("theta grid must be non-empty and strictly increasing".into()));
    }
    let mode_at = |theta: f64| -> Result<(Residual, f64)> {
        let f = cone_candidate(theta, eta, mesh)?;
        Ok((msys_residual(&f)?, cone_mode_residual(&f, eta)? / theta.tan()))
    };
    let mut residuals = Vec::with_capacity(theta_grid.len());
    let mut mode = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        let (r, p) = mode_at(theta)?;
        residuals.push(r);
        mode.push(p);
    }
    let scaled: Vec<f64> = mode.iter().map(|p| p.abs()).collect();
    let k = (0..scaled.len())
        .min_by(|&a, &b| scaled[a].total_cmp(&scaled[b]))
        .unwrap();
    let bracket = [k.checked_sub(1).map(|j| (j, k)), (k + 1 < mode.len()).then_some((k, k + 1))]
        .into_iter()
        .flatten()
        .find(|&(a, b)| mode[a] * mode[b] <= 0.0);
    let refined = match bracket {
        Some((a, b)) => {
            let (mut lo, mut hi) = (theta_grid[a], theta_grid[b]);
            let mut f_lo = mode[a];
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let f_mid = mode_at(mid)?.1;
                if f_lo * f_mid <= 0.0 {
                    hi = mid;
                } else {
                    (lo, f_lo) = (mid, f_mid);
                }
                if hi - lo < 1e-6 {
                    break;
                }
            }
            0.5 * (lo + hi)
        }
        None => theta_grid[k],
    };
    Ok(ConeScan {
        theta_grid: theta_grid.to_vec(),
        residuals,
        mode,
        scaled,
        theta_star: theta_grid[k],
        theta_star_refined: refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::graph_mass;
    use crate::mesh::domain_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(shells: usize, level: usize) -> Mesh {
        domain_mesh(Domain::Ball { radius: 1.0 }, 2, shells, level).unwrap()
    }

    #[test]
    fn cholesky_kernel_matches_nalgebra() {
        let a = nalgebra::DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
        let mut inv = [0.0; 9];
        let s = spd_sqrt_det_inverse(a.as_slice(), 3, &mut inv);
        assert!((s - a.determinant().sqrt()).abs() < 1e-13);
        let expect = a.try_inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((inv[i * 3 + j] - expect[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn energy_matches_graph_mass() {
        let m = disk(4, 3);
        let f = fixtures::zsquare(&m);
        let free = vec![true; m.num_vertices()];
        let (e, _) = area_energy_and_gradient(&f, &free).unwrap();
        assert!((e - graph_mass(&f).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn affine_and_flat_gradients_vanish() {
        let m = disk(4, 3);
        let free: Vec<bool> = (0..m.num_vertices()).map(|v| !m.is_boundary_vertex(v)).collect();
        let f = fixtures::affine(&m, &[[0.3, -1.2], [2.0, 0.7]], &[0.1, 0.2]);
        let (_, g) = area_energy_and_gradient(&f, &free).unwrap();
        assert!(g.iter().all(|x| x.abs() <= 1e-10));
        let z = GraphFunction::zeros(&m, 3);
        let (e, g) = area_energy_and_gradient(&z, &free).unwrap();
        assert!((e - m.total_volume()).abs() < 1e-14);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = disk(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..m.num_vertices() * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = GraphFunction::new(&m, values.clone(), 2).unwrap();
        let free = vec![true; m.num_vertices()];
        let (_, g) = area_energy_and_gradient(&f, &free).unwrap();
        let dir: Vec<f64> = (0..values.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = 1e-6;
        let shifted = |s: f64| {
            let v: Vec<f64> = values.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            graph_mass(&GraphFunction::new(&m, v, 2).unwrap()).unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() / an.abs() < 1e-5, "{fd} vs {an}");
    }

    #[test]
    fn zero_data_converges_immediately() {
        let m = disk(3, 2);
        let data = BoundaryMap::power_s1(1);
        let sol = minimize(&m, &data, 0.0, InitialGuess::Radial, &SolveOptions::default()).unwrap();
        assert!(sol.result.converged);
        assert_eq!(sol.result.iterations, 0);
        assert!((sol.result.mass - m.total_volume()).abs() < 1e-14);
    }

    #[test]
    fn boundary_values_stay_pinned() {
        let m = disk(4, 2);
        let data = BoundaryMap::power_s1(2);
        let r = 0.7;
        let sol = minimize(&m, &data, r, InitialGuess::Zero, &SolveOptions::default()).unwrap();
        assert!(sol.result.converged, "{:?}", sol.result);
        for &v in m.boundary_vertices() {
            let x = m.vertex(v);
            let nx = norm(x);
            let y = data.eval(&[x[0] / nx, x[1] / nx]).unwrap();
            for k in 0..2 {
                assert_eq!(sol.values[v * 2 + k].to_bits(), (y[k] * r).to_bits());
            }
        }
    }

    #[test]
    fn energy_never_increases() {
        let m = disk(4, 3);
        let sol = minimize(&m, &BoundaryMap::power_s1(2), 1.0, InitialGuess::Zero, &SolveOptions::default()).unwrap();
        for w in sol.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + ROUNDOFF_BAND * w[0].energy.abs());
        }
    }

    #[test]
    fn cone_angle_is_validated() {
        let m = domain_mesh(Domain::Annulus { r_in: 0.5, r_out: 1.0 }, 2, 2, 2).unwrap();
        let eta = BoundaryMap::power_s1(2);
        assert!(cone_candidate(0.0, &eta, &m).is_err());
        assert!(cone_candidate(std::f64::consts::FRAC_PI_2, &eta, &m).is_err());
        assert!(cone_candidate(0.5, &eta, &m).is_ok());
    }
}
