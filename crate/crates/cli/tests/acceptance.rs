//! Acceptance suite: nine criteria, each run at its stated tolerance and
//! runtime budget. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mslab::boundary_data::{annulus_hopf12, graph_volume, image_distance, registry, BoundaryMap, HopfFamily};
use mslab::bounds::{annulus_threshold, certify, nonexistence_threshold, omega, BoundModel, BoundsReport};
use mslab::fixtures;
use mslab::geometry::{
    boundary_mass_integral, density_profile, graph_mass, msys_residual, GraphFunction,
};
use mslab::mesh::{domain_mesh, sphere_mesh, sphere_mesh_with_radius, Domain};
use mslab::solver::{area_energy_and_gradient, continuation, minimize, InitialGuess, SolveOptions};
use mslab::topology::{hopf_invariant, sample_sphere_map, sphere_degree};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Closed-form root of `R^4 - 25 R^2 - 25 = 0`: the Hopf threshold with
/// `V = 10 pi^2` and unit reach.
fn quartic_root() -> f64 {
    ((25.0 + 725f64.sqrt()) / 2.0).sqrt()
}

fn c1_mass_formula() -> Check {
    let mesh = fixtures::disk_mesh(4).map_err(e)?;
    let flat = fixtures::flat(&mesh, 2);
    let b_flat = boundary_mass_integral(&flat).map_err(e)?;
    let w = omega(2);
    ensure(rel(b_flat, w) <= 0.01, || format!("flat boundary integral {b_flat} vs {w}"))?;
    let z = fixtures::zsquare(&mesh);
    let direct = graph_mass(&z).map_err(e)?;
    let boundary = boundary_mass_integral(&z).map_err(e)?;
    let exact = 3.0 * PI;
    ensure(rel(direct, exact) <= 0.02, || format!("z^2 direct {direct} vs 3 pi"))?;
    ensure(rel(boundary, exact) <= 0.02, || format!("z^2 boundary {boundary} vs 3 pi"))?;
    let gap = (direct - boundary).abs() / direct;
    ensure(gap <= 0.02, || format!("z^2 direct/boundary gap {gap}"))?;
    Ok(format!(
        "flat {:.2e} rel err; z^2 direct {:.2e}, boundary {:.2e}, gap {:.2e}",
        rel(b_flat, w),
        rel(direct, exact),
        rel(boundary, exact),
        gap
    ))
}

fn c2_residual() -> Check {
    // The round-off floor of the dual-normalised residual grows like
    // eps / h^2 at the innermost shell and passes 1e-12 from level 4 on.
    let mesh = fixtures::disk_mesh(3).map_err(e)?;
    let a = fixtures::by_name("affine", &mesh).unwrap();
    let ball = domain_mesh(Domain::Ball { radius: 1.0 }, 4, 2, 1).map_err(e)?;
    let a4 = fixtures::affine(&ball, &[[0.3, -1.2, 0.5, 0.0], [2.0, 0.7, -0.4, 1.1]], &[0.1, 0.2]);
    let ra = msys_residual(&a).map_err(e)?.max().max(msys_residual(&a4).map_err(e)?.max());
    ensure(ra <= 1e-12, || format!("affine residual {ra:e}"))?;
    let mut res = Vec::new();
    for level in [4, 5, 6] {
        let m = fixtures::disk_mesh(level).map_err(e)?;
        res.push(msys_residual(&fixtures::zsquare(&m)).map_err(e)?.max());
    }
    let factors = [res[0] / res[1], res[1] / res[2]];
    ensure(factors.iter().all(|&f| f >= 1.8), || {
        format!("z^2 residuals {res:?}, factors {factors:?}")
    })?;
    Ok(format!(
        "affine {ra:.1e}; z^2 levels 4-6 {:.4} {:.4} {:.4}, factors {:.2} {:.2}",
        res[0], res[1], res[2], factors[0], factors[1]
    ))
}

fn c3_density() -> Check {
    let mesh = fixtures::disk_mesh(4).map_err(e)?;
    let radii: Vec<f64> = (1..=16).map(|k| 0.05 * k as f64).collect();
    let mut detail = Vec::new();
    for name in ["flat", "zsquare"] {
        let f = fixtures::by_name(name, &mesh).unwrap();
        let p = density_profile(&f, &[0.0, 0.0], &radii).map_err(e)?;
        let drop = p.theta.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        ensure(drop <= 0.02, || format!("{name}: density decreases by {drop}"))?;
        let t0 = p.theta[0];
        ensure((0.98..=1.05).contains(&t0), || format!("{name}: Theta(0+) = {t0}"))?;
        detail.push(format!("{name} Theta0 {t0:.4} max drop {drop:.1e}"));
    }
    Ok(detail.join("; "))
}

fn invariant_of(f: &BoundaryMap, level: usize, hopf: bool) -> Result<(i64, f64), String> {
    let mesh = sphere_mesh(f.domain_dim(), level).map_err(e)?;
    let values = sample_sphere_map(&mesh, f).map_err(e)?;
    if hopf {
        let h = hopf_invariant(&mesh, &values).map_err(e)?;
        Ok((h.value, h.raw))
    } else {
        let d = sphere_degree(&mesh, &values).map_err(e)?;
        Ok((d.value, d.raw))
    }
}

fn c4_topology() -> Check {
    let mut cases: Vec<(BoundaryMap, i64)> = Vec::new();
    for n in 1..=3 {
        cases.push((BoundaryMap::identity(n), 1));
        cases.push((BoundaryMap::antipodal(n), if n % 2 == 1 { 1 } else { -1 }));
    }
    for k in -2..=3 {
        cases.push((BoundaryMap::power_s1(k), k as i64));
    }
    let mut worst: f64 = 0.0;
    for (f, expected) in &cases {
        let (d, raw) = invariant_of(f, 3, false)?;
        ensure(d == *expected, || format!("degree of {} = {d}, expected {expected}", f.name()))?;
        worst = worst.max((raw - d as f64).abs());
    }
    let (h, raw_h) = invariant_of(&BoundaryMap::hopf(HopfFamily::S3S2), 3, true)?;
    ensure(h == 1, || format!("Hopf invariant of the Hopf map = {h}"))?;
    let (c, raw_c) = invariant_of(&registry("const:3:3").map_err(e)?, 3, true)?;
    ensure(c == 0, || format!("Hopf invariant of a constant = {c}"))?;
    worst = worst.max((raw_h - 1.0).abs()).max(raw_c.abs());
    ensure(worst <= 0.2, || format!("raw value {worst} from an integer"))?;
    Ok(format!(
        "{} degrees exact, Hopf {h} (raw {raw_h:.6}), const {c}; worst raw offset {worst:.1e}",
        cases.len()
    ))
}

fn c5_threshold() -> Check {
    let v_exact = 10.0 * PI * PI;
    let v = graph_volume(&BoundaryMap::hopf(HopfFamily::S3S2), &sphere_mesh(3, 3).map_err(e)?).map_err(e)?;
    ensure(rel(v, v_exact) <= 0.02, || format!("V = {v} vs 10 pi^2"))?;
    let root = quartic_root();
    let r_quad = nonexistence_threshold(3, 2, v, 1.0).map_err(e)?.r_star;
    // Propagate a 2% volume error through the threshold.
    let lo = nonexistence_threshold(3, 2, 0.98 * v_exact, 1.0).map_err(e)?.r_star;
    let hi = nonexistence_threshold(3, 2, 1.02 * v_exact, 1.0).map_err(e)?.r_star;
    let band = (root - lo).max(hi - root);
    ensure((r_quad - root).abs() <= band, || format!("R* {r_quad} vs {root} +- {band}"))?;
    let r_exact = nonexistence_threshold(3, 2, v_exact, 1.0).map_err(e)?.r_star;
    ensure((r_exact - root).abs() <= 1e-6, || format!("exact-V R* {r_exact} vs {root}"))?;
    Ok(format!(
        "V rel err {:.1e}; R* {r_quad:.6} (band +-{band:.4}); exact-V |R* - root| {:.1e}",
        rel(v, v_exact),
        (r_exact - root).abs()
    ))
}

fn c6_bounds_consistency() -> Check {
    let hopf = BoundaryMap::hopf(HopfFamily::S3S2);
    let opts = SolveOptions::default();
    let mesh = domain_mesh(Domain::Ball { radius: 1.0 }, 4, 4, 2).map_err(e)?;
    let model = BoundModel::disk(3, 2, 10.0 * PI * PI, 1.0);
    let (report, _) = continuation(&mesh, &hopf, &[0.1, 0.2, 0.4], &opts, Some(&model)).map_err(e)?;
    ensure(report.first_failure.is_none(), || format!("continuation failed at R = {:?}", report.first_failure))?;
    let mut violations = report.bound_violations.len();
    let mut checked = report.steps.len();

    // Further converged solves: a coarse ball at larger R and the annulus example.
    let sphere = sphere_mesh(3, 2).map_err(e)?;
    let coarse = domain_mesh(Domain::Ball { radius: 1.0 }, 4, 2, 1).map_err(e)?;
    let annulus = annulus_hopf12();
    let amesh = domain_mesh(Domain::Annulus { r_in: 1.0, r_out: 2.0 }, 4, 2, 1).map_err(e)?;
    let amodel = BoundModel::annulus(3, 2, 1.0, 1.0, 2.0, 2.0);
    for (m, data, mdl, r) in [
        (&coarse, &hopf, model, 1.0),
        (&coarse, &hopf, model, 2.0),
        (&amesh, &annulus, amodel, 0.2),
        (&amesh, &annulus, amodel, 0.5),
    ] {
        let sol = minimize(m, data, r, InitialGuess::Radial, &opts).map_err(e)?;
        if !sol.result.converged {
            continue;
        }
        let rep = BoundsReport::new(mdl, vec![r]).map_err(e)?;
        let cert = certify(&sol.graph(m).map_err(e)?, &rep, r, data, &sphere).map_err(e)?;
        checked += 1;
        if !cert.mass_within_upper {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} bound violations"))?;
    let masses: Vec<String> = report.steps.iter().map(|s| format!("{:.3}", s.result.mass)).collect();
    Ok(format!(
        "continuation masses [{}] on {} cells; {checked} converged solves, 0 violations",
        masses.join(", "),
        mesh.num_cells()
    ))
}

fn c7_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let meshes = [
        fixtures::disk_mesh(3).map_err(e)?,
        domain_mesh(Domain::Ball { radius: 1.0 }, 4, 2, 1).map_err(e)?,
    ];
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for mesh in &meshes {
        for _ in 0..10 {
            let m = rng.random_range(1..=3usize);
            let amp = rng.random_range(0.1..2.0);
            let values: Vec<f64> = (0..mesh.num_vertices() * m).map(|_| amp * rng.random_range(-1.0..1.0)).collect();
            let free: Vec<bool> = (0..mesh.num_vertices()).map(|v| !mesh.is_boundary_vertex(v)).collect();
            let f = GraphFunction::new(mesh, values.clone(), m).map_err(e)?;
            let (_, g) = area_energy_and_gradient(&f, &free).map_err(e)?;
            let dir: Vec<f64> = (0..values.len())
                .map(|i| if free[i / m] { rng.random_range(-1.0..1.0) } else { 0.0 })
                .collect();
            let h = 1e-6;
            let mass_at = |s: f64| -> Result<f64, String> {
                let v: Vec<f64> = values.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
                graph_mass(&GraphFunction::new(mesh, v, m).map_err(e)?).map_err(e)
            };
            let fd = (mass_at(h)? - mass_at(-h)?) / (2.0 * h);
            let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let err = (fd - an).abs() / an.abs();
            ensure(err <= 1e-5, || format!("dim {} m {m}: fd {fd} vs analytic {an}", mesh.ambient_dim()))?;
            worst = worst.max(err);
            count += 1;
        }
    }
    Ok(format!("{count} configurations, worst relative error {worst:.1e}"))
}

fn c8_annulus() -> Check {
    let data = annulus_hopf12();
    let (inner, outer) = data.components().unwrap();
    let d = image_distance(inner, outer, 300).map_err(e)?;
    ensure((d - 1.0).abs() <= 1e-12, || format!("image distance {d}"))?;
    let v = graph_volume(inner, &sphere_mesh_with_radius(3, 2, 1.0).map_err(e)?).map_err(e)?
        + graph_volume(outer, &sphere_mesh_with_radius(3, 2, 2.0).map_err(e)?).map_err(e)?;
    let grid = [0.5, 0.75, 1.0, 1.5, 2.0];
    let mut rs = Vec::new();
    for dd in grid {
        let t = annulus_threshold(3, 2, v, dd, 2.0, 2.0).map_err(e)?;
        ensure(t.r_star.is_finite(), || format!("threshold at d = {dd} not finite"))?;
        rs.push(t.r_star);
    }
    ensure(rs.windows(2).all(|w| w[1] < w[0]), || format!("thresholds {rs:?} not decreasing"))?;
    Ok(format!("d = {d}; R*(d) = {}", rs.iter().map(|r| format!("{r:.4e}")).collect::<Vec<_>>().join(", ")))
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_mslab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(e)?;
    ensure(status.success(), || format!("mslab {args:?} exited with {status}"))
}

/// Every file of an output directory, with the report timestamp removed.
fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(e)? {
        let path = entry.map_err(e)?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let bytes = std::fs::read(&path).map_err(e)?;
        let bytes = if name == "report.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(e)?;
            v.as_object_mut().unwrap().remove("timestamp");
            serde_json::to_vec(&v).map_err(e)?
        } else {
            bytes
        };
        files.push((name, bytes));
    }
    files.sort();
    Ok(files)
}

fn c9_determinism() -> Check {
    let runs: [&[&str]; 8] = [
        &["bounds", "--map", "hopf3"],
        &["solve", "--shells", "2", "--level", "1", "--r", "0.3"],
        &["continue", "--shells", "2", "--level", "1", "--schedule", "0.1,0.3"],
        &["invariant", "--map", "hopf3", "--level", "3"],
        &["density", "--fixture", "zsquare", "--level", "3"],
        &["mass-check", "--fixture", "zsquare", "--level", "4"],
        &["cone-scan", "--points", "8"],
        &["reach", "--map", "ellipsoid", "--samples", "200"],
    ];
    let tmp = tempfile::tempdir().map_err(e)?;
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        // Same output directory both times: it is part of the echoed config.
        let dir = tmp.path().join(i.to_string());
        run_cli(args, &dir)?;
        let sa = snapshot(&dir)?;
        std::fs::remove_dir_all(&dir).map_err(e)?;
        run_cli(args, &dir)?;
        let sb = snapshot(&dir)?;
        ensure(sa == sb, || format!("{} differs between runs", args[0]))?;
        files += sa.len();
    }
    Ok(format!("8 subcommands, {files} artifacts identical across runs"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        ("mass-formula equivalence", Duration::from_secs(10), c1_mass_formula),
        ("minimal-surface-system residual", Duration::from_secs(30), c2_residual),
        ("density monotonicity", Duration::from_secs(30), c3_density),
        ("topological obstructions", Duration::from_secs(60), c4_topology),
        ("threshold reproduction", Duration::from_secs(1), c5_threshold),
        ("bounds consistency", Duration::from_secs(600), c6_bounds_consistency),
        ("gradient correctness", Duration::from_secs(60), c7_gradient),
        ("annulus regime", Duration::from_secs(30), c8_annulus),
        ("determinism", Duration::from_secs(600), c9_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(d) if took > *budget => Err(format!("{d}; over budget {budget:?}")),
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("criterion {} {tag} [{name}] {:.2}s: {detail}", i + 1, took.as_secs_f64());
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
