//! Upper and lower mass bounds for solutions with boundary data `R eta`,
//! and the scaling `R*` beyond which they are inconsistent.
//!
//! All regimes share one shape. The boundary mass formula bounds the mass by
//! `max |p| / (n+1) * M(boundary graph)`, with `|p| <= sqrt(a^2 + b^2 R^2)`
//! (`a` the domain radius, `b` the image radius) and the boundary graph
//! volume at most `R^l V` for `R >= 1`. Density monotonicity about a
//! witness point at distance `c R` from the boundary gives
//! `w_(n+1) (c R)^(n+1)`.

use serde::{Deserialize, Serialize};

use crate::boundary_data::{graph_volume, scale_map, BoundaryMap};
use crate::error::{Error, Result};
use crate::geometry::{graph_mass, GraphFunction};
use crate::mesh::{sphere_mesh_with_radius, Mesh, MeshKind};
use crate::numeric::{norm, unit_ball_volume};
use crate::topology::{min_norm_locus, neighborhood_containment};

/// `w_k`, the volume of the unit ball in `R^k`.
pub fn omega(k: usize) -> f64 {
    unit_ball_volume(k)
}

/// `(sqrt(1 + R^2) / (n+1)) R^l V`.
pub fn upper_bound_curve(r: f64, n: usize, l: usize, v_eta: f64) -> f64 {
    upper_general(r, n, l, v_eta, 1.0, 1.0)
}

/// Constant `C = sqrt(2) V / (n+1)` of the simplified bound `C R^(l+1)`,
/// valid for `R >= 1`.
pub fn simplified_constant(n: usize, v_eta: f64) -> f64 {
    2f64.sqrt() * v_eta / (n + 1) as f64
}

pub fn upper_bound_simplified(r: f64, n: usize, l: usize, v_eta: f64) -> f64 {
    simplified_constant(n, v_eta) * r.powi(l as i32 + 1)
}

/// `w_(n+1) (eps0 R)^(n+1)`.
pub fn lower_bound_curve(r: f64, n: usize, epsilon0: f64) -> f64 {
    omega(n + 1) * (epsilon0 * r).powi(n as i32 + 1)
}

fn upper_general(r: f64, n: usize, l: usize, v: f64, a: f64, b: f64) -> f64 {
    (a * a + b * b * r * r).sqrt() / (n + 1) as f64 * r.powi(l as i32) * v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Disk,
    Annulus,
    Torus,
    /// Constant data: no image dimension, no threshold.
    Degenerate,
}

/// Parameters of the two bound curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundModel {
    pub regime: Regime,
    pub n: usize,
    pub l: usize,
    /// Graph volume of `eta` (summed over components for annulus data).
    pub v_eta: f64,
    /// Domain radius bounding `|x|` on the boundary.
    pub position_radius: f64,
    /// Bound on `|eta|` on the boundary.
    pub image_radius: f64,
    /// Witness-ball radius per unit `R`: `eps0`, `d/2`, ...
    pub ball_coefficient: f64,
}

impl BoundModel {
    pub fn disk(n: usize, l: usize, v_eta: f64, epsilon0: f64) -> Self {
        BoundModel {
            regime: Regime::Disk,
            n,
            l,
            v_eta,
            position_radius: 1.0,
            image_radius: 1.0,
            ball_coefficient: epsilon0,
        }
    }

    /// Two-component data at distance `d`, outer boundary `S^n(r_out)`
    /// mapped into the ball of radius `rho_out`.
    pub fn annulus(n: usize, l: usize, v_total: f64, d: f64, r_out: f64, rho_out: f64) -> Self {
        BoundModel {
            regime: Regime::Annulus,
            n,
            l,
            v_eta: v_total,
            position_radius: r_out,
            image_radius: rho_out,
            ball_coefficient: d / 2.0,
        }
    }

    /// Solid torus `D^n(cross) x S^1(circle)` with data into
    /// `S^(n-1)(image_radius)`.
    pub fn torus(n: usize, l: usize, v_eta: f64, cross: f64, circle: f64, image_radius: f64, epsilon0: f64) -> Self {
        BoundModel {
            regime: Regime::Torus,
            n,
            l,
            v_eta,
            position_radius: cross + circle,
            image_radius,
            ball_coefficient: epsilon0,
        }
    }

    pub fn upper(&self, r: f64) -> f64 {
        upper_general(r, self.n, self.l, self.v_eta, self.position_radius, self.image_radius)
    }

    pub fn lower(&self, r: f64) -> f64 {
        lower_bound_curve(r, self.n, self.ball_coefficient)
    }

    /// Crossing of the two curves.
    pub fn threshold(&self) -> Result<Threshold> {
        crossing(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub r_star: f64,
    /// The crossing lies below `R = 1`, where `R^l V` does not bound the
    /// boundary graph volume.
    pub below_one: bool,
    /// `|L - U| / L` at the returned root.
    pub relative_gap: f64,
}

/// Root of `L(R) = U(R)` for the disk regime.
pub fn nonexistence_threshold(n: usize, l: usize, v_eta: f64, epsilon0: f64) -> Result<Threshold> {
    BoundModel::disk(n, l, v_eta, epsilon0).threshold()
}

/// Root of `w_(n+1) (R d/2)^(n+1) = sqrt(r_out^2 + rho_out^2 R^2)/(n+1) R^l V_total`.
pub fn annulus_threshold(n: usize, l: usize, v_total: f64, d: f64, r_out: f64, rho_out: f64) -> Result<Threshold> {
    BoundModel::annulus(n, l, v_total, d, r_out, rho_out).threshold()
}

fn crossing(m: &BoundModel) -> Result<Threshold> {
    if m.regime == Regime::Degenerate {
        return Err(Error::InvalidInput("degenerate data has no threshold".into()));
    }
    if m.l >= m.n {
        return Err(Error::NoCrossing(format!(
            "image dimension l = {} is not below n = {}; the bounds never cross",
            m.l, m.n
        )));
    }
    for (name, v) in [
        ("graph volume", m.v_eta),
        ("witness radius coefficient", m.ball_coefficient),
        ("position radius", m.position_radius),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")));
        }
    }
    // After dividing by R^l, L - U = a R^k - b sqrt(..) with k >= 2 has
    // exactly one positive root; L < U below it.
    let phi = |r: f64| m.lower(r) / r.powi(m.l as i32) - m.upper(r) / r.powi(m.l as i32);
    let mut hi = 1.0;
    while phi(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e150 {
            return Err(Error::NoCrossing("bounds do not cross below R = 1e150".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r_star = 0.5 * (lo + hi);
    let l_val = m.lower(r_star);
    let gap = (l_val - m.upper(r_star)).abs() / l_val;
    Ok(Threshold {
        r_star,
        below_one: r_star < 1.0,
        relative_gap: gap,
    })
}

/// Bound curves sampled on a grid plus the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub model: BoundModel,
    pub omega: f64,
    pub simplified_constant: f64,
    pub r_grid: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub threshold: Option<Threshold>,
}

impl BoundsReport {
    pub fn new(model: BoundModel, r_grid: Vec<f64>) -> Result<Self> {
        let threshold = match model.regime {
            Regime::Degenerate => None,
            _ => Some(model.threshold()?),
        };
        Ok(BoundsReport {
            omega: omega(model.n + 1),
            simplified_constant: simplified_constant(model.n, model.v_eta),
            upper: r_grid.iter().map(|&r| model.upper(r)).collect(),
            lower: r_grid.iter().map(|&r| model.lower(r)).collect(),
            r_grid,
            model,
            threshold,
        })
    }

    /// Degenerate report for constant data.
    pub fn degenerate(n: usize, r_grid: Vec<f64>) -> Self {
        let model = BoundModel {
            regime: Regime::Degenerate,
            n,
            l: 0,
            v_eta: crate::numeric::unit_sphere_volume(n),
            position_radius: 1.0,
            image_radius: 0.0,
            ball_coefficient: 0.0,
        };
        BoundsReport::new(model, r_grid).expect("degenerate report never computes a root")
    }

    pub fn r_star(&self) -> Option<f64> {
        self.threshold.map(|t| t.r_star)
    }
}

/// Evenly spaced grid `[0, r_max]` with `points` entries.
pub fn linear_grid(r_max: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| r_max * i as f64 / (points - 1) as f64).collect()
}

/// Measured mass of a graph set against the bounds at scaling `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertBundle {
    pub r: f64,
    pub regime: Regime,
    pub measured_mass: f64,
    /// `U(R)` of the report (the `R^l V` form).
    pub upper: f64,
    /// `max |p| / (n+1) * M(boundary graph of R eta)`, valid for every R.
    pub upper_exact: f64,
    pub lower: f64,
    pub mass_within_upper: bool,
    pub min_norm: f64,
    pub min_norm_vertex: usize,
    pub containment_max_dist: f64,
    pub containment_epsilon: f64,
    pub contained: bool,
}

/// `max |p| / (n+1) * M(boundary graph of R eta)`: the boundary mass
/// formula bound, valid for every `R`. Each component is meshed as
/// `S^n(domain radius)` at the given refinement level.
pub fn exact_upper_bound(eta: &BoundaryMap, r: f64, level: usize) -> Result<f64> {
    let n = eta.domain_dim();
    let (volume, max_pos, _) = boundary_graph(eta, r, n, level, None)?;
    Ok(max_pos / (n + 1) as f64 * volume)
}

/// Graph volume of `R eta` summed over components, the largest position
/// norm `|(x, R eta(x))|` at sphere vertices, and the image cloud.
fn boundary_graph(
    eta: &BoundaryMap,
    r: f64,
    n: usize,
    level: usize,
    unit_sphere: Option<&Mesh>,
) -> Result<(f64, f64, Vec<Vec<f64>>)> {
    let comps: Vec<&BoundaryMap> = match eta.components() {
        Some((a, b)) => vec![a, b],
        None => vec![eta],
    };
    let mut volume = 0.0;
    let mut max_pos: f64 = 0.0;
    let mut cloud = Vec::new();
    for comp in comps {
        let mesh = match unit_sphere {
            Some(s) if (comp.domain_radius() - 1.0).abs() < 1e-12 => s.clone(),
            _ => sphere_mesh_with_radius(n, level, comp.domain_radius())?,
        };
        let scaled = scale_map(comp, r);
        volume += graph_volume(&scaled, &mesh)?;
        for x in mesh.vertices() {
            let y = scaled.eval(x)?;
            max_pos = max_pos.max((norm(x).powi(2) + norm(&y).powi(2)).sqrt());
            cloud.push(y);
        }
    }
    Ok((volume, max_pos, cloud))
}

/// Joins the mass of `F` (a solution or fixture at scaling `R`) to the
/// bound curves. `sphere` fixes the resolution of the boundary graph
/// volume; annulus components are meshed at the same level.
pub fn certify(f: &GraphFunction, report: &BoundsReport, r: f64, eta: &BoundaryMap, sphere: &Mesh) -> Result<CertBundle> {
    let MeshKind::Sphere { n, level, .. } = sphere.kind() else {
        return Err(Error::InvalidInput("certify needs a sphere mesh for the boundary volume".into()));
    };
    let measured = graph_mass(f)?;
    let (volume, max_pos, cloud) = boundary_graph(eta, r, n, level, Some(sphere))?;
    let model = &report.model;
    let upper_exact = max_pos / (model.n + 1) as f64 * volume;
    let (min_norm, min_norm_vertex) = min_norm_locus(f);
    let epsilon = model.ball_coefficient * r;
    let containment = neighborhood_containment(f, &cloud, epsilon)?;
    Ok(CertBundle {
        r,
        regime: model.regime,
        measured_mass: measured,
        upper: model.upper(r),
        upper_exact,
        lower: model.lower(r),
        mass_within_upper: measured <= upper_exact * (1.0 + 1e-9),
        min_norm,
        min_norm_vertex,
        containment_max_dist: containment.max_dist,
        containment_epsilon: epsilon,
        contained: containment.contained,
    })
}
