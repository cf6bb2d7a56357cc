//! Analytic test graphs over planar and higher-dimensional domain meshes.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::geometry::GraphFunction;
use crate::mesh::{domain_mesh, Domain, Mesh};

/// `x -> A x + b`, one row of `A` per target component.
pub fn affine<'m, const D: usize>(mesh: &'m Mesh, rows: &[[f64; D]], offset: &[f64]) -> GraphFunction<'m> {
    assert_eq!(mesh.ambient_dim(), D, "affine fixture dimension");
    assert_eq!(rows.len(), offset.len(), "affine fixture rows");
    GraphFunction::from_fn(mesh, rows.len(), |x| {
        rows.iter()
            .zip(offset)
            .map(|(row, b)| b + row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>())
            .collect()
    })
    .expect("affine values are finite")
}

/// Real form `(x^2 - y^2, 2xy)` of `z -> z^2`; a holomorphic, hence minimal,
/// graph with mass `3 pi` over the unit disk.
pub fn zsquare(mesh: &Mesh) -> GraphFunction<'_> {
    assert_eq!(mesh.ambient_dim(), 2, "zsquare lives on planar meshes");
    GraphFunction::from_fn(mesh, 2, |x| vec![x[0] * x[0] - x[1] * x[1], 2.0 * x[0] * x[1]]).unwrap()
}

/// `(x^3, 0)`: not minimal.
pub fn cubic(mesh: &Mesh) -> GraphFunction<'_> {
    assert_eq!(mesh.ambient_dim(), 2, "cubic lives on planar meshes");
    GraphFunction::from_fn(mesh, 2, |x| vec![x[0].powi(3), 0.0]).unwrap()
}

/// The flat graph `F = 0` into `R^target_dim`.
pub fn flat(mesh: &Mesh, target_dim: usize) -> GraphFunction<'_> {
    GraphFunction::zeros(mesh, target_dim)
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 4] = ["flat", "zsquare", "cubic", "affine"];

/// Planar fixtures by name; `affine` is a fixed generic affine map.
pub fn by_name<'m>(name: &str, mesh: &'m Mesh) -> Option<GraphFunction<'m>> {
    if mesh.ambient_dim() != 2 {
        return None;
    }
    match name {
        "flat" => Some(flat(mesh, 2)),
        "zsquare" => Some(zsquare(mesh)),
        "cubic" => Some(cubic(mesh)),
        "affine" => Some(affine(mesh, &AFFINE_ROWS, &[0.1, 0.2])),
        _ => None,
    }
}

/// Reference planar mesh at refinement `level`: unit disk with `2^level`
/// uniform shells over the level-`level` circle mesh.
pub fn disk_mesh(level: usize) -> Result<Mesh> {
    domain_mesh(Domain::Ball { radius: 1.0 }, 2, 1 << level, level)
}

/// Closed-form graph mass over the unit disk, where one is known.
pub fn reference_mass(name: &str) -> Option<f64> {
    match name {
        "flat" => Some(PI),
        "zsquare" => Some(3.0 * PI),
        "affine" => {
            let j = DMatrix::from_row_slice(2, 2, &AFFINE_ROWS.concat());
            let g = DMatrix::identity(2, 2) + j.transpose() * &j;
            Some(PI * g.determinant().sqrt())
        }
        _ => None,
    }
}

const AFFINE_ROWS: [[f64; 2]; 2] = [[0.3, -1.2], [2.0, 0.7]];
