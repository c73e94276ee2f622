//! Reference crease patterns used by tests, the CLI and the bindings.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::ConstraintSystem;
use crate::model::{CreasePattern, RawPattern};
use crate::newton::{project, NewtonOptions};

fn build(raw: RawPattern) -> CreasePattern {
    raw.validate().expect("fixture is valid")
}

/// Unit square split by one diagonal.
pub fn square_with_diagonal() -> CreasePattern {
    build(
        RawPattern::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .inner(0, 2)
            .boundary_cycle(&[0, 1, 2, 3])
            .panel(vec![0, 1, 2])
            .panel(vec![0, 2, 3]),
    )
}

/// Single inner vertex with the given sector angles. `alphas[k]` is the
/// sector between creases `k-1` and `k` (cyclically); crease `k` has index
/// `k` and crease 0 points along +x. When the angles do not sum to 2pi the
/// embedding is a rescaled stand-in and the angles are stored explicitly.
pub fn single_vertex(alphas: &[f64]) -> CreasePattern {
    let n = alphas.len();
    assert!(n >= 2, "a star needs at least two creases");
    let total: f64 = alphas.iter().sum();
    let scale = TAU / total;
    let mut phi = vec![0.0; n];
    for k in 1..n {
        phi[k] = phi[k - 1] + scale * alphas[k];
    }
    let mut vertices = vec![[0.0, 0.0]];
    let mut boundary = Vec::new();
    let mut sectors = Vec::new();
    for k in 0..n {
        let ray = vertices.len();
        vertices.push([phi[k].cos(), phi[k].sin()]);
        boundary.push(ray);
        let width = scale * alphas[(k + 1) % n];
        let extra = (width / (PI / 3.0)).ceil() as usize - 1;
        let mut arc = Vec::new();
        for m in 1..=extra {
            let a = phi[k] + width * m as f64 / (extra + 1) as f64;
            arc.push(vertices.len());
            vertices.push([a.cos(), a.sin()]);
        }
        boundary.extend(&arc);
        sectors.push((ray, arc));
    }
    let mut raw = RawPattern::new(vertices);
    for k in 0..n {
        raw = raw.inner(0, sectors[k].0);
    }
    raw = raw.boundary_cycle(&boundary);
    for k in 0..n {
        let mut cycle = vec![0, sectors[k].0];
        cycle.extend(&sectors[k].1);
        cycle.push(sectors[(k + 1) % n].0);
        raw = raw.panel(cycle);
    }
    if (total - TAU).abs() > 1e-12 {
        let p = raw.clone().validate().expect("fixture is valid");
        let mut corners = p.embedding_sector_angles();
        for (k, c) in corners.iter_mut().enumerate() {
            c[0] = alphas[(k + 1) % n];
        }
        raw.sector_angles = Some(corners);
    }
    build(raw)
}

/// Four right-angle sectors.
pub fn fig2_vertex() -> CreasePattern {
    single_vertex(&[PI / 2.0; 4])
}

/// Three right-angle sectors: the corner of a cube.
pub fn cube_corner() -> CreasePattern {
    single_vertex(&[PI / 2.0; 3])
}

/// Flat degree-6 vertex with unequal sectors.
pub fn degree6_vertex() -> CreasePattern {
    let a = [0.9, 1.1, 1.0, 0.95, 1.05];
    let last = TAU - a.iter().sum::<f64>();
    single_vertex(&[a[0], a[1], a[2], a[3], a[4], last])
}

/// Six panels fanned around a boundary vertex.
pub fn fan6() -> CreasePattern {
    let mut vertices = vec![[0.0, 0.0]];
    for k in 0..=6 {
        let a = PI * k as f64 / 6.0;
        vertices.push([a.cos(), a.sin()]);
    }
    let mut raw = RawPattern::new(vertices);
    for k in 1..=5 {
        raw = raw.inner(0, 1 + k);
    }
    let mut cycle = vec![0];
    cycle.extend(1..=7);
    raw = raw.boundary_cycle(&cycle);
    for k in 0..6 {
        raw = raw.panel(vec![0, 1 + k, 2 + k]);
    }
    build(raw)
}

/// Grid of parallelogram panels, `nx` by `ny`, with alternate rows shifted
/// so that every interior vertex is a degree-4 zig-zag vertex.
pub fn miura(nx: usize, ny: usize) -> CreasePattern {
    grid_pattern(nx, ny, |i, j| [i as f64 + 0.4 * (j % 2) as f64, j as f64])
}

/// Square grid of unit panels.
pub fn quad_grid(nx: usize, ny: usize) -> CreasePattern {
    grid_pattern(nx, ny, |i, j| [i as f64, j as f64])
}

/// Square grid with interior vertices moved by up to `amp` in each axis.
pub fn jittered_grid(nx: usize, ny: usize, amp: f64, seed: u64) -> CreasePattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<[f64; 2]> = (0..(nx + 1) * (ny + 1))
        .map(|_| [rng.random_range(-amp..amp), rng.random_range(-amp..amp)])
        .collect();
    grid_pattern(nx, ny, |i, j| {
        let interior = i > 0 && i < nx && j > 0 && j < ny;
        let o = if interior { offsets[j * (nx + 1) + i] } else { [0.0, 0.0] };
        [i as f64 + o[0], j as f64 + o[1]]
    })
}

fn grid_pattern(nx: usize, ny: usize, coord: impl Fn(usize, usize) -> [f64; 2]) -> CreasePattern {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(coord(i, j));
        }
    }
    let mut raw = RawPattern::new(vertices);
    for j in 0..=ny {
        for i in 0..nx {
            let outer = j == 0 || j == ny;
            raw = if outer { raw.outer(id(i, j), id(i + 1, j)) } else { raw.inner(id(i, j), id(i + 1, j)) };
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            let outer = i == 0 || i == nx;
            raw = if outer { raw.outer(id(i, j), id(i, j + 1)) } else { raw.inner(id(i, j), id(i, j + 1)) };
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            raw = raw.panel(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    build(raw)
}

/// Three unit squares in a row hinged at x = 1 and x = 2; middle panel fixed.
pub fn three_squares() -> CreasePattern {
    build(
        RawPattern::new(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [3.0, 0.0],
            [3.0, 1.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [0.0, 1.0],
        ])
        .inner(1, 6)
        .inner(2, 5)
        .boundary_cycle(&[0, 1, 2, 3, 4, 5, 6, 7])
        .panel(vec![0, 1, 6, 7])
        .panel(vec![1, 2, 5, 6])
        .panel(vec![2, 3, 4, 5])
        .base(1),
    )
}

/// Middle strip of width `w` with flaps of length `l` on both sides. Folding
/// both creases by the same angle makes the flap tips meet at
/// `acos(-w / (2 l))` and pass through each other beyond it.
pub fn flap_strip(w: f64, l: f64) -> CreasePattern {
    build(
        RawPattern::new(vec![[-l, 0.0], [0.0, 0.0], [w, 0.0], [w + l, 0.0], [w + l, 1.0], [w, 1.0], [0.0, 1.0], [-l, 1.0]])
            .inner(1, 6)
            .inner(2, 5)
            .boundary_cycle(&[0, 1, 2, 3, 4, 5, 6, 7])
            .panel(vec![0, 1, 6, 7])
            .panel(vec![1, 2, 5, 6])
            .panel(vec![2, 3, 4, 5])
            .base(1),
    )
}

/// Pentagonal hole with twisted radial creases to an outer pentagon.
pub fn pentagon_hole(twist: f64) -> CreasePattern {
    let n = 5;
    let mut vertices = Vec::new();
    for k in 0..n {
        let a = TAU * k as f64 / n as f64;
        vertices.push([a.cos(), a.sin()]);
    }
    for k in 0..n {
        let a = TAU * k as f64 / n as f64 + twist;
        vertices.push([3.0 * a.cos(), 3.0 * a.sin()]);
    }
    let mut raw = RawPattern::new(vertices);
    for k in 0..n {
        raw = raw.inner(k, n + k);
    }
    let hole: Vec<usize> = (0..n).collect();
    let outer: Vec<usize> = (n..2 * n).collect();
    raw = raw.boundary_cycle(&hole).boundary_cycle(&outer);
    for k in 0..n {
        let k1 = (k + 1) % n;
        raw = raw.panel(vec![k, n + k, n + k1, k1]);
    }
    build(raw.hole(hole))
}

const FIG6_A: f64 = 100.0;
const FIG6_V1_NARROW: f64 = 30.0;
const FIG6_V2_FIRST: f64 = 50.0;

/// Sector that, between two sectors of `FIG6_A`, closes a rigid degree-3
/// vertex at a right folding angle: cos(m) = cos(A)^2. About 88.27 degrees.
fn fig6_merged() -> f64 {
    FIG6_A.to_radians().cos().powi(2).acos().to_degrees()
}

fn fig6_raw(split_top: bool) -> RawPattern {
    // v1, v2 inner; the rest lie on the boundary.
    let mut vertices = vec![[0.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [-1.0, -2.0], [3.0, -2.0], [4.0, 2.0]];
    let (v1, v2, p1, p2, q2, q1) = (0, 1, 2, 3, 4, 5);
    let tops = if split_top {
        vertices.push([0.5, 2.0]);
        vertices.push([1.5, 2.0]);
        (6, 7)
    } else {
        vertices.push([1.0, 2.0]);
        (6, 6)
    };
    let (x1, x2) = tops;
    let mut raw = RawPattern::new(vertices)
        .inner(v1, v2)
        .inner(v1, x1)
        .inner(v1, p1)
        .inner(v1, p2)
        .inner(v2, q2)
        .inner(v2, q1)
        .inner(v2, x2);
    let mut boundary = vec![x1, p1, p2, q2, q1, x2];
    if !split_top {
        boundary.pop();
    }
    raw = raw.boundary_cycle(&boundary);
    let top = if split_top { vec![v1, v2, x2, x1] } else { vec![v1, v2, x1] };
    raw = raw
        .panel(top)
        .panel(vec![v1, x1, p1])
        .panel(vec![v1, p1, p2])
        .panel(vec![v1, p2, q2, v2])
        .panel(vec![v2, q2, q1])
        .panel(vec![v2, q1, x2]);
    let p = raw.clone().validate().expect("fixture is valid");
    let mut corners = p.embedding_sector_angles();
    let set = |corners: &mut Vec<Vec<f64>>, panel: usize, v: usize, deg: f64| {
        let k = p.panels()[panel].iter().position(|&x| x == v).unwrap();
        corners[panel][k] = deg.to_radians();
    };
    set(&mut corners, 0, v1, FIG6_A);
    set(&mut corners, 1, v1, FIG6_V1_NARROW + fig6_merged());
    set(&mut corners, 2, v1, FIG6_V1_NARROW);
    set(&mut corners, 3, v1, FIG6_A);
    set(&mut corners, 0, v2, FIG6_A);
    set(&mut corners, 3, v2, FIG6_A);
    set(&mut corners, 4, v2, FIG6_V2_FIRST);
    set(&mut corners, 5, v2, fig6_merged() - FIG6_V2_FIRST);
    raw.sector_angles = Some(corners);
    raw
}

/// Two degree-4 vertices sharing the crease between them and the two panels
/// on either side of it. The sectors are chosen so that the shared folding
/// angle can only be at most pi/2 at one vertex and at least pi/2 at the
/// other. Inner crease order: shared, v1-top, v1-p1, v1-p2, v2-q2, v2-q1,
/// v2-top.
pub fn fig6_lock() -> CreasePattern {
    build(fig6_raw(false))
}

/// The locked state of [`fig6_lock`] (and [`fig6_tree`]): the shared crease
/// at pi/2, v1-p1 at pi and v2-q1 at 0. The remaining angles are solved
/// numerically.
pub fn fig6_locked_state(pattern: &CreasePattern) -> Vec<f64> {
    let system = ConstraintSystem::build(pattern);
    let fixed = [(0usize, PI / 2.0), (2, PI), (5, 0.0)];
    let free: Vec<bool> = (0..7).map(|k| fixed.iter().all(|&(f, _)| f != k)).collect();
    let opts = NewtonOptions {
        max_iter: 100,
        ..NewtonOptions::default()
    };
    // Near 80 and -100 degrees from the rigid degree-3 reduction.
    let guess = vec![PI / 2.0, 1.4, PI, -1.74, 1.4, 0.0, 1.4];
    let r = project(&system, &guess, Some(&free), &opts);
    assert!(r.converged, "locked state not found");
    r.rho
}

/// Variant of [`fig6_lock`] whose top panel is a quadrilateral, so the inner
/// crease graph is a tree while the sector angles are unchanged.
pub fn fig6_tree() -> CreasePattern {
    build(fig6_raw(true))
}

/// Two generic flat degree-4 vertices joined by one crease; every other inner
/// crease runs to its own boundary vertex.
pub fn forest_pair() -> CreasePattern {
    let ray = |o: [f64; 2], deg: f64, r: f64| [o[0] + r * deg.to_radians().cos(), o[1] + r * deg.to_radians().sin()];
    let v1 = [0.0, 0.0];
    let v2 = [2.0, 0.0];
    let vertices = vec![
        v1,
        v2,
        ray(v2, 20.0, 2.5),
        ray(v2, 95.0, 2.5),
        ray(v1, 80.0, 2.5),
        ray(v1, 190.0, 2.5),
        ray(v1, 265.0, 2.5),
        ray(v2, 290.0, 2.5),
    ];
    let raw = RawPattern::new(vertices)
        .inner(0, 1)
        .inner(0, 4)
        .inner(0, 5)
        .inner(0, 6)
        .inner(1, 7)
        .inner(1, 2)
        .inner(1, 3)
        .boundary_cycle(&[2, 3, 4, 5, 6, 7])
        .panel(vec![0, 1, 3, 4])
        .panel(vec![0, 4, 5])
        .panel(vec![0, 5, 6])
        .panel(vec![0, 6, 7, 1])
        .panel(vec![1, 7, 2])
        .panel(vec![1, 2, 3]);
    build(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_validate() {
        for p in [
            square_with_diagonal(),
            fig2_vertex(),
            cube_corner(),
            degree6_vertex(),
            fan6(),
            miura(3, 3),
            quad_grid(2, 2),
            jittered_grid(3, 3, 0.2, 7),
            three_squares(),
            flap_strip(1.0, 2.0),
            pentagon_hole(0.35),
            fig6_lock(),
            fig6_tree(),
            forest_pair(),
        ] {
            assert!(!p.panels().is_empty());
        }
    }

    #[test]
    fn miura_counts() {
        let p = miura(3, 3);
        assert_eq!(p.inner_vertices().len(), 4);
        assert_eq!(p.num_inner_creases(), 12);
        assert!(p.is_developable(1e-12));
    }

    #[test]
    fn cube_corner_is_not_developable() {
        let p = cube_corner();
        assert!(p.has_sector_overrides());
        let sums = p.angle_sums();
        assert!((sums[&0] - 1.5 * PI).abs() < 1e-12);
    }

    #[test]
    fn fig6_sector_sums() {
        let p = fig6_lock();
        let sums = p.angle_sums();
        assert_eq!(sums.len(), 2);
        assert!((sums[&0].to_degrees() - 348.27).abs() < 1e-2);
        assert!((sums[&1].to_degrees() - 288.27).abs() < 1e-2);
    }
}
