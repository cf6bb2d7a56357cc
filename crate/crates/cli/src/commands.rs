//! The eight subcommands. Each resolves its configuration, runs the core
//! computation, writes artifacts and only then reports failed checks.

use std::f64::consts::FRAC_PI_2;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mslab::boundary_data::{
    boundary_graph_volume, graph_volume, image_distance, reach_estimate_with_seed, registry, BoundaryMap,
};
use mslab::bounds::{linear_grid, certify, BoundModel, BoundsReport};
use mslab::geometry::{boundary_mass_integral, density_profile_with, graph_mass, DensityOptions};
use mslab::mesh::{domain_mesh, sphere_mesh, sphere_mesh_with_radius, Domain, Mesh};
use mslab::numeric::norm;
use mslab::solver::{cone_scan as run_cone_scan, continuation, minimize, InitialGuess, SolveOptions};
use mslab::topology::{hopf_invariant, sample_sphere_map, sphere_degree};
use mslab::fixtures;

use crate::config::{resolve, CommonArgs, DEFAULT_OUT};
use crate::output::Artifacts;
use crate::svg::{LinePlot, Series};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Ball,
    Annulus,
    Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Zero,
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InvariantKind {
    Degree,
    Hopf,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_map(id: &str) -> Result<BoundaryMap, CliError> {
    Ok(registry(id)?)
}

/// The domain the data lives on; a requested domain must agree with it.
fn resolve_domain(f: &BoundaryMap, requested: Option<DomainKind>) -> Result<DomainKind, CliError> {
    let natural = if f.is_annulus() {
        DomainKind::Annulus
    } else if f.is_torus() {
        DomainKind::Torus
    } else {
        DomainKind::Ball
    };
    match requested {
        Some(d) if d != natural => Err(usage(format!(
            "map '{}' is {natural:?} data; --domain {d:?} does not apply",
            f.name()
        ))),
        _ => Ok(natural),
    }
}

fn check_n(f: &BoundaryMap, n: Option<usize>) -> Result<usize, CliError> {
    match n {
        Some(n) if n != f.domain_dim() => Err(usage(format!(
            "map '{}' has domain dimension {}, not {n}",
            f.name(),
            f.domain_dim()
        ))),
        _ => Ok(f.domain_dim()),
    }
}

/// Domain mesh in `R^(n+1)` matching the data's boundary.
fn data_mesh(f: &BoundaryMap, domain: DomainKind, shells: usize, level: usize) -> Result<Mesh, CliError> {
    let dim = f.domain_dim() + 1;
    let d = match domain {
        DomainKind::Ball => Domain::Ball {
            radius: f.domain_radius(),
        },
        DomainKind::Annulus => {
            let (inner, outer) = f.components().expect("annulus data has two components");
            Domain::Annulus {
                r_in: inner.domain_radius(),
                r_out: outer.domain_radius(),
            }
        }
        DomainKind::Torus => Domain::SolidTorus {
            cross_radius: 0.5,
            circle_radius: 1.0,
        },
    };
    Ok(domain_mesh(d, dim, shells, level)?)
}

/// Largest `|f|` over the vertices of a sphere mesh.
fn image_max(f: &BoundaryMap, sphere: &Mesh) -> Result<f64, CliError> {
    let mut m: f64 = 0.0;
    for x in sphere.vertices() {
        m = m.max(norm(&f.eval(x)?));
    }
    Ok(m)
}

fn image_radius(f: &BoundaryMap, level: usize) -> Result<f64, CliError> {
    match f.image_radius() {
        Some(r) => Ok(r),
        None => image_max(f, &sphere_mesh_with_radius(f.domain_dim(), level, f.domain_radius())?),
    }
}

struct ModelInputs {
    level: usize,
    v_eta: Option<f64>,
    epsilon0: Option<f64>,
    d: Option<f64>,
    samples: usize,
    distance_samples: usize,
    seed: u64,
}

/// Bound model for the data, or `None` for constant data.
fn bound_model(f: &BoundaryMap, domain: DomainKind, inp: &ModelInputs) -> Result<Option<BoundModel>, CliError> {
    if f.image_dim() == 0 {
        return Ok(None);
    }
    let n = f.domain_dim();
    let l = f.image_dim();
    let model = match domain {
        DomainKind::Ball => {
            let v = match inp.v_eta {
                Some(v) => v,
                None => graph_volume(f, &sphere_mesh_with_radius(n, inp.level, f.domain_radius())?)?,
            };
            let eps = match inp.epsilon0 {
                Some(e) => e,
                None => reach_estimate_with_seed(f, inp.samples, inp.seed)?,
            };
            let mut m = BoundModel::disk(n, l, v, eps);
            m.position_radius = f.domain_radius();
            m.image_radius = image_radius(f, inp.level)?;
            m
        }
        DomainKind::Annulus => {
            let (inner, outer) = f.components().expect("annulus data has two components");
            let v = match inp.v_eta {
                Some(v) => v,
                None => {
                    graph_volume(inner, &sphere_mesh_with_radius(n, inp.level, inner.domain_radius())?)?
                        + graph_volume(outer, &sphere_mesh_with_radius(n, inp.level, outer.domain_radius())?)?
                }
            };
            let d = match inp.d {
                Some(d) => d,
                None => image_distance(inner, outer, inp.distance_samples)?,
            };
            BoundModel::annulus(n, l, v, d, outer.domain_radius(), image_radius(outer, inp.level)?)
        }
        DomainKind::Torus => {
            let v = match inp.v_eta {
                Some(v) => v,
                None => boundary_graph_volume(f, &data_mesh(f, domain, 1, inp.level)?)?,
            };
            let eps = match inp.epsilon0 {
                Some(e) => e,
                None => reach_estimate_with_seed(f, inp.samples, inp.seed)?,
            };
            BoundModel::torus(n, l, v, 0.5, 1.0, image_radius(f, inp.level)?, eps)
        }
    };
    Ok(Some(model))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

// ---------------------------------------------------------------- bounds

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    /// Boundary map id (hopf3, ellipsoid, annulus:hopf12, torus, const:3:3, ...).
    #[arg(long)]
    map: Option<String>,
    /// Domain kind; must agree with the map.
    #[arg(long, value_enum)]
    domain: Option<DomainKind>,
    /// Sphere dimension n of the boundary; must agree with the map.
    #[arg(long)]
    n: Option<usize>,
    /// Sphere mesh level for the graph volume.
    #[arg(long)]
    level: Option<usize>,
    /// Graph volume override.
    #[arg(long)]
    v_eta: Option<f64>,
    /// Reach override.
    #[arg(long)]
    epsilon0: Option<f64>,
    /// Distance between annulus images override.
    #[arg(long)]
    d: Option<f64>,
    /// Samples for the reach estimate.
    #[arg(long)]
    samples: Option<usize>,
    /// Samples per component for the annulus image distance.
    #[arg(long)]
    distance_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Right end of the R grid (default 1.5 R*).
    #[arg(long)]
    r_max: Option<f64>,
    /// Points on the R grid.
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub map: String,
    pub domain: Option<DomainKind>,
    pub n: Option<usize>,
    pub level: usize,
    pub v_eta: Option<f64>,
    pub epsilon0: Option<f64>,
    pub d: Option<f64>,
    pub samples: usize,
    pub distance_samples: usize,
    pub seed: u64,
    pub r_max: Option<f64>,
    pub points: usize,
    pub out: String,
    pub plot: bool,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            map: "hopf3".into(),
            domain: None,
            n: None,
            level: 3,
            v_eta: None,
            epsilon0: None,
            d: None,
            samples: 400,
            distance_samples: 300,
            seed: 0xEEAC,
            r_max: None,
            points: 201,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct BoundsRow {
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "U")]
    u: f64,
    #[serde(rename = "L")]
    l: f64,
}

pub fn bounds(args: BoundsArgs) -> Result<(), CliError> {
    let mut cfg: BoundsConfig = resolve(&BoundsConfig::default(), &args.common, &args)?;
    let f = load_map(&cfg.map)?;
    let domain = resolve_domain(&f, cfg.domain)?;
    cfg.domain = Some(domain);
    cfg.n = Some(check_n(&f, cfg.n)?);
    for (name, v) in [("v_eta", cfg.v_eta), ("epsilon0", cfg.epsilon0), ("d", cfg.d), ("r_max", cfg.r_max)] {
        if let Some(v) = v {
            positive(name, v)?;
        }
    }
    let model = bound_model(
        &f,
        domain,
        &ModelInputs {
            level: cfg.level,
            v_eta: cfg.v_eta,
            epsilon0: cfg.epsilon0,
            d: cfg.d,
            samples: cfg.samples,
            distance_samples: cfg.distance_samples,
            seed: cfg.seed,
        },
    )?;
    let report = match model {
        Some(m) => {
            let t = m.threshold()?;
            let r_max = *cfg.r_max.get_or_insert(1.5 * t.r_star);
            BoundsReport::new(m, linear_grid(r_max, cfg.points))?
        }
        None => {
            let r_max = *cfg.r_max.get_or_insert(10.0);
            BoundsReport::degenerate(f.domain_dim(), linear_grid(r_max, cfg.points))
        }
    };

    let out = Artifacts::create(&cfg.out)?;
    let results = json!({
        "map": f.info(),
        "R_star": report.r_star(),
        "threshold": report.threshold,
        "model": report.model,
        "omega": report.omega,
        "simplified_constant": report.simplified_constant,
    });
    let rows: Vec<BoundsRow> = (0..report.r_grid.len())
        .map(|i| BoundsRow {
            r: report.r_grid[i],
            u: report.upper[i],
            l: report.lower[i],
        })
        .collect();
    out.csv("bounds.csv", &rows)?;
    let series = |name: &str, ys: &[f64]| Series {
        name: name.into(),
        points: report.r_grid.iter().copied().zip(ys.iter().copied()).collect(),
    };
    out.plot(
        cfg.plot,
        &LinePlot {
            title: format!("Mass bounds for {}", f.name()),
            x_label: "R".into(),
            y_label: "mass".into(),
            series: vec![series("U(R)", &report.upper), series("L(R)", &report.lower)],
            log_y: false,
            marker: report.r_star().map(|r| (r, format!("R* = {r:.4}"))),
        },
    )?;
    out.report("bounds", &cfg, &results)
}

// ----------------------------------------------------------------- solve

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    map: Option<String>,
    #[arg(long, value_enum)]
    domain: Option<DomainKind>,
    /// Radial shells of the domain mesh.
    #[arg(long)]
    shells: Option<usize>,
    /// Sphere refinement level of each shell.
    #[arg(long)]
    level: Option<usize>,
    /// Scaling R of the boundary data.
    #[arg(long = "r")]
    r: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    lipschitz_blowup: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub map: String,
    pub domain: Option<DomainKind>,
    pub shells: usize,
    pub level: usize,
    pub r: f64,
    pub init: InitArg,
    pub rtol: f64,
    pub atol: f64,
    pub max_iterations: usize,
    pub lipschitz_blowup: f64,
    pub out: String,
    pub plot: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolveConfig {
            map: "hopf3".into(),
            domain: None,
            shells: 4,
            level: 2,
            r: 0.2,
            init: InitArg::Radial,
            rtol: o.rtol,
            atol: o.atol,
            max_iterations: o.max_iterations,
            lipschitz_blowup: o.lipschitz_blowup,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

fn solve_options(rtol: f64, atol: f64, max_iterations: usize, lipschitz_blowup: f64) -> Result<SolveOptions, CliError> {
    positive("rtol", rtol)?;
    positive("atol", atol)?;
    positive("lipschitz_blowup", lipschitz_blowup)?;
    if max_iterations == 0 {
        return Err(usage("max_iterations must be positive"));
    }
    Ok(SolveOptions {
        rtol,
        atol,
        max_iterations,
        lipschitz_blowup,
        ..SolveOptions::default()
    })
}

fn default_model_inputs(level: usize) -> ModelInputs {
    let d = BoundsConfig::default();
    ModelInputs {
        level,
        v_eta: None,
        epsilon0: None,
        d: None,
        samples: d.samples,
        distance_samples: d.distance_samples,
        seed: d.seed,
    }
}

pub fn solve(args: SolveArgs) -> Result<(), CliError> {
    let mut cfg: SolveConfig = resolve(&SolveConfig::default(), &args.common, &args)?;
    let f = load_map(&cfg.map)?;
    let domain = resolve_domain(&f, cfg.domain)?;
    cfg.domain = Some(domain);
    if !(cfg.r >= 0.0 && cfg.r.is_finite()) {
        return Err(usage(format!("R must be nonnegative, got {}", cfg.r)));
    }
    let opts = solve_options(cfg.rtol, cfg.atol, cfg.max_iterations, cfg.lipschitz_blowup)?;
    let mesh = data_mesh(&f, domain, cfg.shells, cfg.level)?;
    let init = match cfg.init {
        InitArg::Zero => InitialGuess::Zero,
        InitArg::Radial => InitialGuess::Radial,
    };
    let sol = minimize(&mesh, &f, cfg.r, init, &opts)?;

    let certificate = match (domain, bound_model(&f, domain, &default_model_inputs(cfg.level))?) {
        (DomainKind::Ball | DomainKind::Annulus, Some(model)) => {
            let report = BoundsReport::new(model, vec![cfg.r])?;
            let sphere = sphere_mesh(f.domain_dim(), cfg.level)?;
            Some(certify(&sol.graph(&mesh)?, &report, cfg.r, &f, &sphere)?)
        }
        _ => None,
    };

    let out = Artifacts::create(&cfg.out)?;
    out.csv("trace.csv", &sol.trace)?;
    out.json(
        "solution.json",
        &json!({
            "mesh": mesh.kind(),
            "num_vertices": mesh.num_vertices(),
            "target_dim": sol.target_dim,
            "R": cfg.r,
            "values": sol.values,
        }),
    )?;
    out.plot(
        cfg.plot,
        &LinePlot {
            title: format!("Solve {} at R = {}", f.name(), cfg.r),
            x_label: "iteration".into(),
            y_label: "gradient norm".into(),
            series: vec![Series {
                name: "|grad|".into(),
                points: sol.trace.iter().map(|t| (t.iteration as f64, t.gradient_norm)).collect(),
            }],
            log_y: true,
            marker: None,
        },
    )?;
    let results = json!({
        "map": f.info(),
        "mesh": mesh.kind(),
        "num_cells": mesh.num_cells(),
        "solve": sol.result,
        "certificate": certificate,
    });
    out.report("solve", &cfg, &results)?;

    if !sol.result.converged {
        return Err(CliError::Check(format!("solve did not converge: {}", sol.result.termination)));
    }
    if let Some(c) = &certificate {
        if !c.mass_within_upper {
            return Err(CliError::Check(format!(
                "mass {} exceeds the boundary bound {}",
                c.measured_mass, c.upper_exact
            )));
        }
    }
    Ok(())
}

// -------------------------------------------------------------- continue

#[derive(Debug, Args, Serialize)]
pub struct ContinueArgs {
    #[arg(long)]
    map: Option<String>,
    #[arg(long, value_enum)]
    domain: Option<DomainKind>,
    #[arg(long)]
    shells: Option<usize>,
    #[arg(long)]
    level: Option<usize>,
    /// Strictly increasing R values, comma separated.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    lipschitz_blowup: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinueConfig {
    pub map: String,
    pub domain: Option<DomainKind>,
    pub shells: usize,
    pub level: usize,
    pub schedule: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub max_iterations: usize,
    pub lipschitz_blowup: f64,
    pub out: String,
    pub plot: bool,
}

impl Default for ContinueConfig {
    fn default() -> Self {
        let s = SolveConfig::default();
        ContinueConfig {
            map: s.map,
            domain: None,
            shells: s.shells,
            level: s.level,
            schedule: vec![0.1, 0.2, 0.4],
            rtol: s.rtol,
            atol: s.atol,
            max_iterations: s.max_iterations,
            lipschitz_blowup: s.lipschitz_blowup,
            out: s.out,
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct ContinuationRow {
    #[serde(rename = "R")]
    r: f64,
    converged: bool,
    iterations: usize,
    mass: f64,
    upper_exact: Option<f64>,
    upper: Option<f64>,
    lower: Option<f64>,
    lipschitz: f64,
    final_gradient_norm: f64,
    flags: String,
}

pub fn continue_(args: ContinueArgs) -> Result<(), CliError> {
    let mut cfg: ContinueConfig = resolve(&ContinueConfig::default(), &args.common, &args)?;
    let f = load_map(&cfg.map)?;
    let domain = resolve_domain(&f, cfg.domain)?;
    cfg.domain = Some(domain);
    if cfg.schedule.is_empty() || cfg.schedule.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(usage("schedule must be a non-empty list of nonnegative R values"));
    }
    let opts = solve_options(cfg.rtol, cfg.atol, cfg.max_iterations, cfg.lipschitz_blowup)?;
    let mesh = data_mesh(&f, domain, cfg.shells, cfg.level)?;
    let model = bound_model(&f, domain, &default_model_inputs(cfg.level))?;
    let (report, _) = continuation(&mesh, &f, &cfg.schedule, &opts, model.as_ref())?;

    let out = Artifacts::create(&cfg.out)?;
    let rows: Vec<ContinuationRow> = report
        .steps
        .iter()
        .map(|s| ContinuationRow {
            r: s.result.r,
            converged: s.result.converged,
            iterations: s.result.iterations,
            mass: s.result.mass,
            upper_exact: s.upper_exact,
            upper: s.upper,
            lower: s.lower,
            lipschitz: s.result.lipschitz,
            final_gradient_norm: s.result.final_gradient_norm,
            flags: s.flags.join("; "),
        })
        .collect();
    out.csv("continuation.csv", &rows)?;
    let mut series = vec![Series {
        name: "mass".into(),
        points: rows.iter().map(|r| (r.r, r.mass)).collect(),
    }];
    if rows.iter().all(|r| r.upper_exact.is_some()) {
        series.push(Series {
            name: "U exact".into(),
            points: rows.iter().map(|r| (r.r, r.upper_exact.unwrap())).collect(),
        });
    }
    if rows.iter().all(|r| r.lower.is_some()) {
        series.push(Series {
            name: "L(R)".into(),
            points: rows.iter().map(|r| (r.r, r.lower.unwrap())).collect(),
        });
    }
    out.plot(
        cfg.plot,
        &LinePlot {
            title: format!("Continuation of {}", f.name()),
            x_label: "R".into(),
            y_label: "mass".into(),
            series,
            log_y: false,
            marker: None,
        },
    )?;
    let results = json!({
        "map": f.info(),
        "mesh": mesh.kind(),
        "num_cells": mesh.num_cells(),
        "model": model,
        "continuation": report,
    });
    out.report("continue", &cfg, &results)?;

    if !report.bound_violations.is_empty() {
        return Err(CliError::Check(format!(
            "mass exceeds the boundary bound at R = {:?}",
            report.bound_violations
        )));
    }
    Ok(())
}

// ------------------------------------------------------------- invariant

#[derive(Debug, Args, Serialize)]
pub struct InvariantArgs {
    #[arg(long)]
    map: Option<String>,
    /// degree for S^n -> S^n, hopf for S^3 -> S^2 (inferred from the map).
    #[arg(long, value_enum)]
    kind: Option<InvariantKind>,
    #[arg(long)]
    level: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantConfig {
    pub map: String,
    pub kind: Option<InvariantKind>,
    pub level: usize,
    pub out: String,
    /// Unused: this command has no plot.
    pub plot: bool,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        InvariantConfig {
            map: "hopf3".into(),
            kind: None,
            level: 3,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct InvariantRow<'a> {
    kind: &'a str,
    value: i64,
    raw: f64,
}

pub fn invariant(args: InvariantArgs) -> Result<(), CliError> {
    let mut cfg: InvariantConfig = resolve(&InvariantConfig::default(), &args.common, &args)?;
    let f = load_map(&cfg.map)?;
    let n = f.domain_dim();
    let natural = if n == 3 && f.target_dim() == 3 {
        Some(InvariantKind::Hopf)
    } else if f.target_dim() == n + 1 {
        Some(InvariantKind::Degree)
    } else {
        None
    };
    let kind = match (cfg.kind, natural) {
        (Some(k), Some(nat)) if k == nat => k,
        (None, Some(nat)) => nat,
        _ => {
            return Err(usage(format!(
                "map '{}' (S^{n} -> R^{}) has no {} invariant",
                f.name(),
                f.target_dim(),
                cfg.kind.map_or("supported", |k| if k == InvariantKind::Hopf { "Hopf" } else { "degree" })
            )))
        }
    };
    cfg.kind = Some(kind);
    let mesh = sphere_mesh(n, cfg.level)?;
    let values = sample_sphere_map(&mesh, &f)?;
    let (results, row) = match kind {
        InvariantKind::Hopf => {
            let h = hopf_invariant(&mesh, &values)?;
            let row = InvariantRow {
                kind: "hopf",
                value: h.value,
                raw: h.raw,
            };
            (
                json!({
                    "map": f.info(),
                    "hopf_invariant": h.value,
                    "raw": h.raw,
                    "regular_value": h.q,
                    "fiber_components": h.components,
                    "attempts": h.attempts,
                }),
                row,
            )
        }
        InvariantKind::Degree => {
            let d = sphere_degree(&mesh, &values)?;
            (
                json!({ "map": f.info(), "degree": d.value, "raw": d.raw }),
                InvariantRow {
                    kind: "degree",
                    value: d.value,
                    raw: d.raw,
                },
            )
        }
    };
    let out = Artifacts::create(&cfg.out)?;
    out.csv("invariant.csv", &[row])?;
    out.report("invariant", &cfg, &results)
}

// --------------------------------------------------------------- density

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    /// Planar fixture: flat, zsquare, cubic or affine.
    #[arg(long)]
    fixture: Option<String>,
    /// Disk mesh level (2^level shells).
    #[arg(long)]
    level: Option<usize>,
    /// Domain point under the centre, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    center: Option<Vec<f64>>,
    /// Increasing radii, comma separated (default: 16 radii up to 0.8 of the largest valid one).
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Samples per simplex cut by a sphere.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Allowed decrease between consecutive ratios.
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub fixture: String,
    pub level: usize,
    pub center: Vec<f64>,
    pub radii: Option<Vec<f64>>,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub out: String,
    pub plot: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        let o = DensityOptions::default();
        DensityConfig {
            fixture: "zsquare".into(),
            level: 4,
            center: vec![0.0, 0.0],
            radii: None,
            samples: o.samples,
            seed: o.seed,
            tolerance: 0.02,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct DensityRow {
    d: f64,
    theta: f64,
    mass: f64,
}

/// Fixtures whose graphs are minimal, so monotonicity must hold.
const MINIMAL_FIXTURES: [&str; 3] = ["flat", "zsquare", "affine"];

fn fixture_mesh(name: &str, level: usize) -> Result<Mesh, CliError> {
    if !fixtures::NAMES.contains(&name) {
        return Err(usage(format!(
            "unknown fixture '{name}'; known: {}",
            fixtures::NAMES.join(", ")
        )));
    }
    Ok(fixtures::disk_mesh(level)?)
}

pub fn density(args: DensityArgs) -> Result<(), CliError> {
    let mut cfg: DensityConfig = resolve(&DensityConfig::default(), &args.common, &args)?;
    positive("tolerance", cfg.tolerance)?;
    let mesh = fixture_mesh(&cfg.fixture, cfg.level)?;
    let f = fixtures::by_name(&cfg.fixture, &mesh).expect("known planar fixture");
    let opts = DensityOptions {
        samples: cfg.samples,
        seed: cfg.seed,
    };
    let radii = match &cfg.radii {
        Some(r) => r.clone(),
        None => {
            let probe = density_profile_with(&f, &cfg.center, &[1e-9], opts)?;
            let top = 0.8 * probe.max_valid_radius;
            (1..=16).map(|k| top * k as f64 / 16.0).collect()
        }
    };
    cfg.radii = Some(radii.clone());
    let profile = density_profile_with(&f, &cfg.center, &radii, opts)?;
    let max_drop = profile
        .theta
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max);
    let monotone = max_drop <= cfg.tolerance;
    let theta_zero = profile.theta[0];
    let minimal = MINIMAL_FIXTURES.contains(&cfg.fixture.as_str());

    let out = Artifacts::create(&cfg.out)?;
    let rows: Vec<DensityRow> = (0..radii.len())
        .map(|i| DensityRow {
            d: radii[i],
            theta: profile.theta[i],
            mass: profile.mass_in_ball[i],
        })
        .collect();
    out.csv("density.csv", &rows)?;
    out.plot(
        cfg.plot,
        &LinePlot {
            title: format!("Density ratio of {}", cfg.fixture),
            x_label: "d".into(),
            y_label: "Theta".into(),
            series: vec![Series {
                name: "Theta(d)".into(),
                points: rows.iter().map(|r| (r.d, r.theta)).collect(),
            }],
            log_y: false,
            marker: None,
        },
    )?;
    let results = json!({
        "profile": profile,
        "max_drop": max_drop,
        "monotone": monotone,
        "theta_zero": theta_zero,
        "minimal_fixture": minimal,
    });
    out.report("density", &cfg, &results)?;

    if minimal && !monotone {
        return Err(CliError::Check(format!(
            "density ratio decreases by {max_drop:.4} > {}",
            cfg.tolerance
        )));
    }
    Ok(())
}

// ------------------------------------------------------------ mass-check

#[derive(Debug, Args, Serialize)]
pub struct MassCheckArgs {
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long)]
    level: Option<usize>,
    /// Relative tolerance for both the reference errors and the gap.
    #[arg(long)]
    tolerance: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassCheckConfig {
    pub fixture: String,
    pub level: usize,
    pub tolerance: f64,
    pub out: String,
    /// Unused: this command has no plot.
    pub plot: bool,
}

impl Default for MassCheckConfig {
    fn default() -> Self {
        MassCheckConfig {
            fixture: "zsquare".into(),
            level: 4,
            tolerance: 0.02,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct MassRow {
    direct: f64,
    boundary: f64,
    reference: Option<f64>,
    direct_error: Option<f64>,
    boundary_error: Option<f64>,
    gap: f64,
}

pub fn mass_check(args: MassCheckArgs) -> Result<(), CliError> {
    let cfg: MassCheckConfig = resolve(&MassCheckConfig::default(), &args.common, &args)?;
    positive("tolerance", cfg.tolerance)?;
    let mesh = fixture_mesh(&cfg.fixture, cfg.level)?;
    let f = fixtures::by_name(&cfg.fixture, &mesh).expect("known planar fixture");
    let direct = graph_mass(&f)?;
    let boundary = boundary_mass_integral(&f)?;
    let reference = fixtures::reference_mass(&cfg.fixture);
    let rel = |a: f64| reference.map(|r| (a - r).abs() / r);
    let row = MassRow {
        direct,
        boundary,
        reference,
        direct_error: rel(direct),
        boundary_error: rel(boundary),
        gap: (direct - boundary).abs() / direct.abs(),
    };
    let pass = row.gap <= cfg.tolerance
        && row.direct_error.is_none_or(|e| e <= cfg.tolerance)
        && row.boundary_error.is_none_or(|e| e <= cfg.tolerance);

    let out = Artifacts::create(&cfg.out)?;
    let mut results = to_value(&row);
    results["pass"] = json!(pass);
    results["num_cells"] = json!(mesh.num_cells());
    out.csv("mass_check.csv", &[&row])?;
    out.report("mass-check", &cfg, &results)?;
    if !pass {
        return Err(CliError::Check(format!(
            "mass check failed: direct {direct}, boundary {boundary}, reference {reference:?}, tolerance {}",
            cfg.tolerance
        )));
    }
    Ok(())
}

// ------------------------------------------------------------- cone-scan

#[derive(Debug, Args, Serialize)]
pub struct ConeScanArgs {
    #[arg(long)]
    map: Option<String>,
    /// Inner radius of the annular mesh; 0 meshes the full ball.
    #[arg(long)]
    r_in: Option<f64>,
    #[arg(long)]
    r_out: Option<f64>,
    #[arg(long)]
    shells: Option<usize>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    theta_min: Option<f64>,
    #[arg(long)]
    theta_max: Option<f64>,
    /// Angles on the grid.
    #[arg(long)]
    points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeScanConfig {
    pub map: String,
    pub r_in: f64,
    pub r_out: f64,
    pub shells: usize,
    pub level: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub points: usize,
    pub out: String,
    pub plot: bool,
}

impl Default for ConeScanConfig {
    fn default() -> Self {
        ConeScanConfig {
            map: "hopf3".into(),
            r_in: 0.5,
            r_out: 1.0,
            shells: 2,
            level: 2,
            theta_min: 0.05,
            theta_max: 1.5,
            points: 30,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct ConeRow {
    theta: f64,
    r_domain: f64,
    r_range: f64,
    mode: f64,
    scaled: f64,
}

pub fn cone_scan(args: ConeScanArgs) -> Result<(), CliError> {
    let cfg: ConeScanConfig = resolve(&ConeScanConfig::default(), &args.common, &args)?;
    if !(0.0 < cfg.theta_min && cfg.theta_min < cfg.theta_max && cfg.theta_max < FRAC_PI_2) {
        return Err(usage("need 0 < theta_min < theta_max < pi/2"));
    }
    if cfg.points < 2 {
        return Err(usage("cone scans need at least two angles"));
    }
    if !(cfg.r_in >= 0.0 && cfg.r_in < cfg.r_out) {
        return Err(usage("need 0 <= r_in < r_out"));
    }
    let f = load_map(&cfg.map)?;
    let domain = if cfg.r_in == 0.0 {
        Domain::Ball { radius: cfg.r_out }
    } else {
        Domain::Annulus {
            r_in: cfg.r_in,
            r_out: cfg.r_out,
        }
    };
    let mesh = domain_mesh(domain, f.domain_dim() + 1, cfg.shells, cfg.level)?;
    let grid: Vec<f64> = (0..cfg.points)
        .map(|i| cfg.theta_min + (cfg.theta_max - cfg.theta_min) * i as f64 / (cfg.points - 1) as f64)
        .collect();
    let scan = run_cone_scan(&f, &grid, &mesh)?;

    let out = Artifacts::create(&cfg.out)?;
    let rows: Vec<ConeRow> = (0..grid.len())
        .map(|i| ConeRow {
            theta: grid[i],
            r_domain: scan.residuals[i].domain,
            r_range: scan.residuals[i].range,
            mode: scan.mode[i],
            scaled: scan.scaled[i],
        })
        .collect();
    out.csv("cone_scan.csv", &rows)?;
    out.plot(
        cfg.plot,
        &LinePlot {
            title: format!("Cone residuals for {}", f.name()),
            x_label: "theta".into(),
            y_label: "residual".into(),
            series: vec![
                Series {
                    name: "|mode| / tan".into(),
                    points: rows.iter().map(|r| (r.theta, r.scaled)).collect(),
                },
                Series {
                    name: "max range".into(),
                    points: rows.iter().map(|r| (r.theta, r.r_range)).collect(),
                },
            ],
            log_y: true,
            marker: Some((scan.theta_star_refined, format!("theta* = {:.4}", scan.theta_star_refined))),
        },
    )?;
    let results = json!({
        "map": f.info(),
        "mesh": mesh.kind(),
        "theta_star": scan.theta_star,
        "theta_star_refined": scan.theta_star_refined,
        "tan_theta_star": scan.theta_star_refined.tan(),
    });
    out.report("cone-scan", &cfg, &results)
}

// ----------------------------------------------------------------- reach

#[derive(Debug, Args, Serialize)]
pub struct ReachArgs {
    #[arg(long)]
    map: Option<String>,
    /// Sample points on the sphere (at least 100).
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    pub map: String,
    pub samples: usize,
    pub seed: u64,
    pub out: String,
    /// Unused: this command has no plot.
    pub plot: bool,
}

impl Default for ReachConfig {
    fn default() -> Self {
        ReachConfig {
            map: "ellipsoid".into(),
            samples: 400,
            seed: 0xEEAC,
            out: DEFAULT_OUT.into(),
            plot: true,
        }
    }
}

#[derive(Serialize)]
struct ReachRow {
    samples: usize,
    reach: Option<f64>,
}

pub fn reach(args: ReachArgs) -> Result<(), CliError> {
    let cfg: ReachConfig = resolve(&ReachConfig::default(), &args.common, &args)?;
    let f = load_map(&cfg.map)?;
    let reach = reach_estimate_with_seed(&f, cfg.samples, cfg.seed)?;
    let out = Artifacts::create(&cfg.out)?;
    // Infinite reach (constant data) has no JSON number; report null.
    let finite = reach.is_finite().then_some(reach);
    out.csv(
        "reach.csv",
        &[ReachRow {
            samples: cfg.samples,
            reach: finite,
        }],
    )?;
    let results = json!({ "map": f.info(), "reach": finite, "infinite": !reach.is_finite() });
    out.report("reach", &cfg, &results)
}
