use std::fmt::Write;

use nalgebra::Vector3;
use origami_core::collision::triangulate;
use origami_core::constraints::ConstraintSystem;
use origami_core::kinematics::Folder;
use origami_core::model::CreasePattern;

use crate::error::CliError;

/// Wavefront OBJ of the folded state. Each panel is its own group with its
/// own vertices, triangulated counter-clockwise so face normals follow the
/// panel's folded +z; the base panel stays in the z = 0 plane.
pub fn write_obj(pattern: &CreasePattern, system: &ConstraintSystem, rho: &[f64]) -> Result<String, CliError> {
    let folder = Folder::new(pattern);
    let mesh = folder.fold_mesh(rho)?;
    let placements = folder.placements(rho);
    let mut out = String::new();
    let fmt_list = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(" ");
    writeln!(out, "# origami fold state").unwrap();
    writeln!(out, "# rho: {}", fmt_list(rho)).unwrap();
    writeln!(out, "# residual: {:.6e}", system.max_norm(rho)).unwrap();
    writeln!(out, "# base panel: {}", pattern.base_panel()).unwrap();
    let mut next = 1usize;
    for (placed, t) in mesh.iter().zip(&placements) {
        writeln!(out, "g panel_{}", placed.panel).unwrap();
        for p in &placed.vertices {
            writeln!(out, "v {} {} {}", clean(p.x), clean(p.y), clean(p.z)).unwrap();
        }
        let n: Vector3<f64> = t.fixed_view::<3, 1>(0, 2).into_owned();
        writeln!(out, "vn {} {} {}", clean(n.x), clean(n.y), clean(n.z)).unwrap();
        let normal = placed.panel + 1;
        for tri in triangulate(folder.shape(placed.panel)) {
            let [a, b, c] = tri.map(|i| next + i);
            writeln!(out, "f {a}//{normal} {b}//{normal} {c}//{normal}").unwrap();
        }
        next += placed.vertices.len();
    }
    Ok(out)
}

/// Fixed-precision coordinate with negative zero folded to zero, so that
/// identical states give identical files.
fn clean(x: f64) -> String {
    let s = format!("{x:.12}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        "0.000000000000".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use origami_core::fixtures;
    use std::f64::consts::FRAC_PI_2;

    fn vertices(obj: &str) -> Vec<[f64; 3]> {
        obj.lines()
            .filter_map(|l| l.strip_prefix("v "))
            .map(|l| {
                let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect()
    }

    #[test]
    fn flat_state_is_planar() {
        let p = fixtures::miura(2, 2);
        let s = ConstraintSystem::build(&p);
        let obj = write_obj(&p, &s, &vec![0.0; p.num_inner_creases()]).unwrap();
        assert!(obj.starts_with("# origami fold state\n# rho: "));
        assert!(vertices(&obj).iter().all(|v| v[2] == 0.0));
        let faces = obj.lines().filter(|l| l.starts_with("f ")).count();
        let expected: usize = p.panels().iter().map(|c| c.len() - 2).sum();
        assert_eq!(faces, expected);
    }

    #[test]
    fn cube_corner_faces_are_orthogonal() {
        let p = fixtures::cube_corner();
        let s = ConstraintSystem::build(&p);
        let rho = [FRAC_PI_2; 3];
        assert!(s.is_satisfied(&rho));
        let obj = write_obj(&p, &s, &rho).unwrap();
        let normals: Vec<Vector3<f64>> = obj
            .lines()
            .filter_map(|l| l.strip_prefix("vn "))
            .map(|l| {
                let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
                Vector3::new(v[0], v[1], v[2])
            })
            .collect();
        assert_eq!(normals.len(), 3);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert!(normals[i].dot(&normals[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn clean_drops_negative_zero() {
        assert_eq!(clean(-0.0), clean(0.0));
        assert_eq!(clean(-1e-15), clean(0.0));
        assert_eq!(clean(-0.5), "-0.500000000000");
    }
}
