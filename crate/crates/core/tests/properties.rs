use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;

use mslab::boundary_data::{graph_volume, hopf_map, scale_map, BoundaryMap, HopfFamily};
use mslab::bounds::BoundModel;
use mslab::fixtures::{affine, disk_mesh};
use mslab::geometry::{graph_mass, induced_metric, msys_residual, GraphFunction};
use mslab::mesh::{domain_mesh, sphere_mesh, Domain};
use mslab::numeric::norm;
use mslab::topology::{linking_number, min_norm_locus, Polyline};

fn unit_vector(raw: &[f64]) -> Option<Vec<f64>> {
    let n = norm(raw);
    (n > 1e-3).then(|| raw.iter().map(|x| x / n).collect())
}

fn circle(center: [f64; 3], u: [f64; 3], v: [f64; 3], phase: f64, m: usize) -> Polyline {
    let pts = (0..m)
        .map(|i| {
            let t = phase + 2.0 * PI * i as f64 / m as f64;
            (0..3).map(|k| center[k] + t.cos() * u[k] + t.sin() * v[k]).collect()
        })
        .collect();
    Polyline::new(pts, true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn area_density_is_at_least_one(
        rows in 1usize..4,
        cols in 1usize..4,
        entries in prop::collection::vec(-5.0f64..5.0, 16),
    ) {
        let j = DMatrix::from_iterator(rows, cols, entries.into_iter().take(rows * cols));
        let m = induced_metric(&j);
        prop_assert!(m.sqrt_g >= 1.0 - 1e-14);
        let det = (DMatrix::<f64>::identity(cols, cols) + j.transpose() * &j).determinant();
        prop_assert!((m.sqrt_g - det.sqrt()).abs() <= 1e-9 * det.sqrt());
        let id = &m.g * &m.g_inv;
        prop_assert!((id - DMatrix::<f64>::identity(cols, cols)).abs().max() < 1e-8);
    }

    #[test]
    fn hopf_map_lands_on_the_sphere_and_is_circle_invariant(
        raw in prop::collection::vec(-1.0f64..1.0, 4),
        phase in 0.0f64..(2.0 * PI),
    ) {
        let Some(x) = unit_vector(&raw) else { return Ok(()) };
        let h = hopf_map(HopfFamily::S3S2, &x).unwrap();
        prop_assert!((norm(&h) - 1.0).abs() < 1e-12);
        let (c, s) = (phase.cos(), phase.sin());
        let rotated = [
            c * x[0] - s * x[1],
            s * x[0] + c * x[1],
            c * x[2] - s * x[3],
            s * x[2] + c * x[3],
        ];
        let h2 = hopf_map(HopfFamily::S3S2, &rotated).unwrap();
        for (a, b) in h.iter().zip(&h2) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_maps_have_the_scaled_norm(
        raw in prop::collection::vec(-1.0f64..1.0, 4),
        r in 0.01f64..50.0,
    ) {
        let Some(x) = unit_vector(&raw) else { return Ok(()) };
        let f = scale_map(&BoundaryMap::hopf(HopfFamily::S3S2), r);
        prop_assert!((norm(&f.eval(&x).unwrap()) - r).abs() <= 1e-12 * r);
    }

    #[test]
    fn linking_number_is_symmetric(
        offset in prop_oneof![0.2f64..1.8, 2.2f64..3.5],
        phase in 0.0f64..1.0,
        tilt in -0.3f64..0.3,
    ) {
        let a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, tilt.cos(), tilt.sin()], phase, 48);
        let b = circle([offset, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.0, 48);
        let ab = linking_number(&a, &b).unwrap();
        let ba = linking_number(&b, &a).unwrap();
        prop_assert_eq!(ab.value, ba.value);
        prop_assert!((ab.raw - ba.raw).abs() < 1e-9);
        prop_assert_eq!(ab.value.abs(), i64::from(offset < 2.0));
    }

    #[test]
    fn threshold_is_a_sign_change_of_the_bound_gap(
        n in 2usize..7,
        l_frac in 0.0f64..1.0,
        v in 1.0f64..1e3,
        eps in 0.1f64..10.0,
    ) {
        let l = 1 + ((n - 1) as f64 * l_frac) as usize;
        let model = BoundModel::disk(n, l, v, eps);
        let t = model.threshold().unwrap();
        prop_assert!(t.relative_gap <= 1e-10);
        let gap = |r: f64| model.lower(r) - model.upper(r);
        prop_assert!(gap(t.r_star * (1.0 - 1e-3)) < 0.0);
        prop_assert!(gap(t.r_star * (1.0 + 1e-3)) > 0.0);
    }

    #[test]
    fn both_bounds_increase_beyond_one(
        n in 2usize..7,
        v in 1.0f64..1e3,
        eps in 0.1f64..10.0,
        r in 1.0f64..100.0,
        dr in 1e-3f64..10.0,
    ) {
        let model = BoundModel::disk(n, n - 1, v, eps);
        prop_assert!(model.upper(r + dr) > model.upper(r));
        prop_assert!(model.lower(r + dr) > model.lower(r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_scales_under_dilation(
        rows in prop::collection::vec(-2.0f64..2.0, 4),
        lambda in 0.1f64..10.0,
    ) {
        let mesh = disk_mesh(2).unwrap();
        let f = affine(&mesh, &[[rows[0], rows[1]], [rows[2], rows[3]]], &[0.3, -0.1]);
        let big = mesh.dilated(lambda);
        let values: Vec<f64> = f.values().iter().map(|x| lambda * x).collect();
        let g = GraphFunction::new(&big, values, 2).unwrap();
        let (m1, m2) = (graph_mass(&f).unwrap(), graph_mass(&g).unwrap());
        prop_assert!((m2 / m1 - lambda * lambda).abs() <= 1e-10 * lambda * lambda);
    }

    #[test]
    fn min_norm_locus_is_homogeneous(lambda in 0.01f64..100.0, shift in -0.5f64..0.5) {
        let mesh = domain_mesh(Domain::Ball { radius: 1.0 }, 2, 3, 2).unwrap();
        let f = GraphFunction::from_fn(&mesh, 2, |x| vec![x[0] - shift, x[1] + 0.1]).unwrap();
        let (m, v) = min_norm_locus(&f);
        let (ms, vs) = min_norm_locus(&f.scaled(lambda));
        prop_assert_eq!(v, vs);
        prop_assert!((ms - lambda * m).abs() <= 1e-12 * lambda.max(1.0));
    }

    #[test]
    fn affine_maps_have_vanishing_residual(rows in prop::collection::vec(-2.0f64..2.0, 6)) {
        let mesh = disk_mesh(2).unwrap();
        let f = affine(
            &mesh,
            &[[rows[0], rows[1]], [rows[2], rows[3]], [rows[4], rows[5]]],
            &[1.0, 0.0, -1.0],
        );
        prop_assert!(msys_residual(&f).unwrap().max() < 1e-11);
    }

    #[test]
    fn graph_volume_grows_with_the_scale(r in 0.1f64..5.0, dr in 0.05f64..2.0) {
        let sphere = sphere_mesh(3, 1).unwrap();
        let eta = BoundaryMap::hopf(HopfFamily::S3S2);
        let a = graph_volume(&scale_map(&eta, r), &sphere).unwrap();
        let b = graph_volume(&scale_map(&eta, r + dr), &sphere).unwrap();
        prop_assert!(b > a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn domain_meshes_are_oriented_and_closed(
        dim in 2usize..5,
        shells in 1usize..3,
        level in 0usize..2,
        annulus in any::<bool>(),
    ) {
        let domain = if annulus {
            Domain::Annulus { r_in: 0.5, r_out: 1.0 }
        } else {
            Domain::Ball { radius: 1.0 }
        };
        let mesh = domain_mesh(domain, dim, shells, level).unwrap();
        prop_assert!(mesh.validate().is_ok());
        prop_assert!((0..mesh.num_cells()).all(|c| mesh.signed_volume(c) > 0.0));
        prop_assert!(mesh.boundary_face_counts().values().all(|&k| k == 2));
    }
}
