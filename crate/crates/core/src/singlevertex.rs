//! Closed-form configuration spaces of degree 1, 2 and 3 single creased
//! papers and the case split for degree-n vertices.

use std::f64::consts::{PI, TAU};

use serde::Serialize;
use thiserror::Error;

use crate::constraints::{ClosureLoop, ConstraintSystem, LoopKind, LoopStep};
use crate::newton::{max_dist, project, NewtonOptions};

/// Tolerance for the exact angle conditions (equalities like `alpha = pi`).
pub const ANGLE_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SingleVertexError {
    #[error("expected a degree-3 vertex, got degree {0}")]
    NotDegree3(usize),
    #[error("sector angles must be finite and in (0, 2pi), at least three of them")]
    BadAngles,
    #[error("no configuration case applies")]
    NoCase,
    #[error("degree {0} is not 1 or 2")]
    BadDegree(usize),
}

/// Closure loop of a single vertex: `alphas[k]` precedes crease `k`.
pub fn star_loop(alphas: &[f64]) -> ClosureLoop {
    ClosureLoop {
        kind: LoopKind::Vertex { vertex: 0 },
        steps: alphas
            .iter()
            .enumerate()
            .map(|(k, &a)| LoopStep {
                beta: a,
                a: 0.0,
                b: 0.0,
                crease: k,
                var: k,
            })
            .collect(),
    }
}

pub fn star_system(alphas: &[f64]) -> ConstraintSystem {
    ConstraintSystem::from_loops(vec![star_loop(alphas)], alphas.len())
}

/// Max-norm deviation of the vertex loop product from the identity.
pub fn star_residual(alphas: &[f64], rho: &[f64]) -> f64 {
    star_system(alphas).max_norm(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Degree3Case {
    /// One angle is pi: the two creases bounding it are collinear and fold
    /// together, the third stays flat.
    Collinear { straight_sector: usize },
    /// Flat vertex without a straight sector: only the flat state.
    Flat,
    /// Two isolated states `rho` and `-rho`.
    Isolated,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Degree3Solution {
    pub case: Degree3Case,
    /// Isolated solutions.
    pub points: Vec<[f64; 3]>,
    /// Directions `d` of one-parameter families `rho = s d`, `s in [-pi, pi]`.
    pub families: Vec<[f64; 3]>,
}

impl Degree3Solution {
    /// Distance from `rho` to the solution set in max-norm.
    pub fn distance(&self, rho: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        for p in &self.points {
            best = best.min(max_dist(p, rho));
        }
        for d in &self.families {
            // Closest s on the segment in max-norm: scan breakpoints of the
            // piecewise-linear objective.
            let mut candidates = vec![-PI, PI];
            for k in 0..3 {
                if d[k].abs() > 0.0 {
                    candidates.push((rho[k] / d[k]).clamp(-PI, PI));
                }
                for l in 0..3 {
                    for sign in [-1.0, 1.0] {
                        let den = d[k] - sign * d[l];
                        if k != l && den.abs() > 0.0 {
                            candidates.push(((rho[k] - sign * rho[l]) / den).clamp(-PI, PI));
                        }
                    }
                }
            }
            for s in candidates {
                let p = [s * d[0], s * d[1], s * d[2]];
                best = best.min(max_dist(&p, rho));
            }
        }
        best
    }
}

fn valid_angle(a: f64) -> bool {
    a.is_finite() && a > 0.0 && a < TAU
}

/// Closed-form solution set of a degree-3 vertex.
pub fn solve_degree3(alpha: &[f64]) -> Result<Degree3Solution, SingleVertexError> {
    if alpha.len() != 3 {
        return Err(SingleVertexError::NotDegree3(alpha.len()));
    }
    if !alpha.iter().all(|&a| valid_angle(a)) {
        return Err(SingleVertexError::BadAngles);
    }
    let sum: f64 = alpha.iter().sum();
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        if (alpha[i] - PI).abs() <= ANGLE_EPS && (alpha[j] + alpha[k] - PI).abs() <= ANGLE_EPS {
            // Sector i lies between creases i-1 and i.
            let mut d = [0.0; 3];
            d[(i + 2) % 3] = 1.0;
            d[i] = 1.0;
            return Ok(Degree3Solution {
                case: Degree3Case::Collinear { straight_sector: i },
                points: Vec::new(),
                families: vec![d],
            });
        }
    }
    if (sum - TAU).abs() <= ANGLE_EPS {
        return Ok(Degree3Solution {
            case: Degree3Case::Flat,
            points: vec![[0.0; 3]],
            families: Vec::new(),
        });
    }
    let (s, c): (Vec<f64>, Vec<f64>) = alpha.iter().map(|a| a.sin_cos()).unzip();
    let empty = Degree3Solution {
        case: Degree3Case::Empty,
        points: Vec::new(),
        families: Vec::new(),
    };
    // Crease i sits between sectors i and i+1; its opposite sector is i+2.
    let mut cosines = [0.0; 3];
    for i in 0..3 {
        let (a, b, o) = (i, (i + 1) % 3, (i + 2) % 3);
        let den = s[a] * s[b];
        if den.abs() <= ANGLE_EPS {
            return Ok(empty);
        }
        let value = (c[a] * c[b] - c[o]) / den;
        if value.abs() > 1.0 + 1e-12 {
            return Ok(empty);
        }
        cosines[i] = value.clamp(-1.0, 1.0);
    }
    let base = cosines.map(f64::acos);
    let system = star_system(alpha);
    let opts = NewtonOptions {
        tol: 1e-13,
        ..NewtonOptions::default()
    };
    let mut points: Vec<[f64; 3]> = Vec::new();
    for mask in 0..8u32 {
        let cand: Vec<f64> = (0..3).map(|k| if mask & (1 << k) != 0 { -base[k] } else { base[k] }).collect();
        if system.max_norm(&cand) > 1e-6 {
            continue;
        }
        let polished = project(&system, &cand, None, &opts);
        if polished.residual > 1e-10 || max_dist(&polished.rho, &cand) > 1e-6 {
            continue;
        }
        let p = [polished.rho[0], polished.rho[1], polished.rho[2]];
        if !points.iter().any(|q| max_dist(q, &p) <= 1e-7) {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Ok(empty);
    }
    // Close under negation.
    let negated: Vec<[f64; 3]> = points.iter().map(|p| p.map(|x| -x)).collect();
    for p in negated {
        if !points.iter().any(|q| max_dist(q, &p) <= 1e-7) {
            points.push(p);
        }
    }
    points.sort_by(|a, b| b[0].total_cmp(&a[0]));
    Ok(Degree3Solution {
        case: Degree3Case::Isolated,
        points,
        families: Vec::new(),
    })
}

/// One crossing of a degree-1 or degree-2 loop. Vertices use `a = b = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowDegreeStep {
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

impl LowDegreeStep {
    pub fn vertex(alpha: f64) -> Self {
        Self { beta: alpha, a: 0.0, b: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LowDegreeCase {
    /// Degree 1: the single angle is 0.
    Zero,
    /// Degree 2: `rho_1 = rho_2`, a single effective crease.
    EqualFamily,
    /// Degree 2: only `rho = 0`.
    Origin,
    /// Degree 2: `rho_1, rho_2 in {pi, -pi}`.
    FlatPairs,
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-12 * (1.0 + y.abs())
}

/// Applicable cases of a degree-1 or degree-2 vertex or hole loop.
pub fn solve_degree1and2(steps: &[LowDegreeStep]) -> Result<Vec<LowDegreeCase>, SingleVertexError> {
    match steps {
        [s] => {
            if near(s.beta, TAU) && near(s.a, 0.0) && near(s.b, 0.0) {
                Ok(vec![LowDegreeCase::Zero])
            } else {
                Err(SingleVertexError::NoCase)
            }
        }
        [s1, s2] => {
            let mut out = Vec::new();
            if near(s1.beta, PI) && near(s2.beta, PI) && near(s1.a, s2.a) && near(s1.b, 0.0) && near(s2.b, 0.0) {
                out.push(LowDegreeCase::EqualFamily);
            }
            let (sn, cs) = s1.beta.sin_cos();
            if near(s1.beta + s2.beta, TAU)
                && near(s1.a + s2.a * cs - s2.b * sn, 0.0)
                && near(s1.b + s2.a * sn + s2.b * cs, 0.0)
            {
                out.push(LowDegreeCase::Origin);
            }
            if near(s1.beta, s2.beta) && near(s1.a + s2.a * cs + s2.b * sn, 0.0) && near(s1.b + s2.a * sn - s2.b * cs, 0.0) {
                out.push(LowDegreeCase::FlatPairs);
            }
            if out.is_empty() {
                Err(SingleVertexError::NoCase)
            } else {
                Ok(out)
            }
        }
        _ => Err(SingleVertexError::BadDegree(steps.len())),
    }
}

/// Loop system for a degree-1 or degree-2 vertex or hole.
pub fn low_degree_system(steps: &[LowDegreeStep], hole: bool) -> ConstraintSystem {
    let kind = if hole { LoopKind::Hole { hole: 0 } } else { LoopKind::Vertex { vertex: 0 } };
    let l = ClosureLoop {
        kind,
        steps: steps
            .iter()
            .enumerate()
            .map(|(k, s)| LoopStep {
                beta: s.beta,
                a: s.a,
                b: s.b,
                crease: k,
                var: k,
            })
            .collect(),
    };
    ConstraintSystem::from_loops(vec![l], steps.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VertexTag {
    CollinearPair,
    SumLessThan2Pi,
    DevelopableConvex,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VertexSpace {
    Empty,
    /// Only `rho_0` and `-rho_0`.
    IsolatedPair,
    /// Two components symmetric to each other, not through 0.
    TwoComponents,
    /// Only the flat state.
    FlatOnly,
    /// Contains motions through the flat state.
    Flexible,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleVertexCase {
    pub degree: usize,
    pub alphas: Vec<f64>,
    pub tag: VertexTag,
    pub space: VertexSpace,
    /// Pairs of crease indices that are collinear in the flat reference.
    pub collinear_pairs: Vec<(usize, usize)>,
    /// Degree 4 with two collinear pairs.
    pub cross: bool,
}

/// Pairs `(i, j)` of creases separated by sectors summing to exactly pi.
pub fn collinear_pairs(alpha: &[f64]) -> Vec<(usize, usize)> {
    let n = alpha.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            // Sectors strictly after crease i up to crease j.
            let partial: f64 = ((i + 1)..=j).map(|k| alpha[k]).sum();
            if (partial - PI).abs() <= ANGLE_EPS {
                out.push((i, j));
            }
        }
    }
    out
}

pub fn classify_vertex(alpha: &[f64]) -> Result<SingleVertexCase, SingleVertexError> {
    let n = alpha.len();
    if n < 3 || !alpha.iter().all(|&a| valid_angle(a)) {
        return Err(SingleVertexError::BadAngles);
    }
    let sum: f64 = alpha.iter().sum();
    let pairs = collinear_pairs(alpha);
    let max = alpha.iter().copied().fold(0.0, f64::max);
    let (tag, space) = if sum < TAU - ANGLE_EPS {
        let rest = sum - max;
        let space = if (max - rest).abs() <= ANGLE_EPS || n == 3 && max < rest {
            VertexSpace::IsolatedPair
        } else if max > rest {
            VertexSpace::Empty
        } else {
            VertexSpace::TwoComponents
        };
        (VertexTag::SumLessThan2Pi, space)
    } else if (sum - TAU).abs() <= ANGLE_EPS && alpha.iter().all(|&a| a < PI) {
        let space = if n >= 4 { VertexSpace::Flexible } else { VertexSpace::FlatOnly };
        (VertexTag::DevelopableConvex, space)
    } else if !pairs.is_empty() {
        (VertexTag::CollinearPair, VertexSpace::Flexible)
    } else {
        (VertexTag::General, VertexSpace::Unknown)
    };
    Ok(SingleVertexCase {
        degree: n,
        alphas: alpha.to_vec(),
        tag,
        space,
        cross: n == 4 && pairs.len() == 2,
        collinear_pairs: pairs,
    })
}

/// Numeric exploration: sweeps angle `sweep` over `samples` values in
/// `[-pi, pi]` and solves the remaining angles by Newton, continuing from the
/// previous solution. Returns every converged state.
pub fn explore_vertex(alpha: &[f64], sweep: usize, samples: usize, seed_state: Option<&[f64]>) -> Vec<Vec<f64>> {
    let system = star_system(alpha);
    let n = alpha.len();
    let mut free = vec![true; n];
    free[sweep] = false;
    let opts = NewtonOptions {
        tol: 1e-10,
        max_iter: 50,
        ..NewtonOptions::default()
    };
    let mut out = Vec::new();
    let mut guess: Vec<f64> = seed_state.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.3; n]);
    for k in 0..samples {
        let t = -PI + TAU * k as f64 / (samples.max(2) - 1) as f64;
        let mut start = guess.clone();
        start[sweep] = t;
        let r = project(&system, &start, Some(&free), &opts);
        if r.converged && r.rho.iter().all(|x| x.abs() <= PI + 1e-9) {
            guess = r.rho.clone();
            out.push(r.rho);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn equal_thirds_fold_flat_only() {
        let s = solve_degree3(&[TAU / 3.0; 3]).unwrap();
        assert_eq!(s.case, Degree3Case::Flat);
        assert_eq!(s.points, vec![[0.0; 3]]);
    }

    #[test]
    fn cube_corner_pair() {
        let s = solve_degree3(&[FRAC_PI_2; 3]).unwrap();
        assert_eq!(s.case, Degree3Case::Isolated);
        assert_eq!(s.points.len(), 2);
        for p in &s.points {
            assert!(star_residual(&[FRAC_PI_2; 3], p) <= 1e-10);
            assert!(p.iter().all(|x| (x.abs() - FRAC_PI_2).abs() < 1e-9));
        }
    }

    #[test]
    fn straight_sector_family() {
        let alpha = [PI, PI / 3.0, 2.0 * PI / 3.0];
        let s = solve_degree3(&alpha).unwrap();
        assert!(matches!(s.case, Degree3Case::Collinear { straight_sector: 0 }));
        let d = s.families[0];
        for k in 0..=10 {
            let t = -PI + TAU * k as f64 / 10.0;
            assert!(star_residual(&alpha, &[t * d[0], t * d[1], t * d[2]]) <= 1e-10);
        }
    }

    #[test]
    fn triangle_inequality_failure_is_empty() {
        let s = solve_degree3(&[2.5, 0.3, 0.4]).unwrap();
        assert_eq!(s.case, Degree3Case::Empty);
    }

    #[test]
    fn degree_one_and_two() {
        assert_eq!(solve_degree1and2(&[LowDegreeStep::vertex(TAU)]), Ok(vec![LowDegreeCase::Zero]));
        let straight = [LowDegreeStep::vertex(PI), LowDegreeStep::vertex(PI)];
        let cases = solve_degree1and2(&straight).unwrap();
        assert!(cases.contains(&LowDegreeCase::EqualFamily));
        let sys = low_degree_system(&straight, false);
        assert!(sys.max_norm(&[0.7, 0.7]) <= 1e-12);
        let bent = [LowDegreeStep::vertex(2.0), LowDegreeStep::vertex(TAU - 2.0)];
        assert_eq!(solve_degree1and2(&bent), Ok(vec![LowDegreeCase::Origin]));
        let cone = [LowDegreeStep::vertex(1.0), LowDegreeStep::vertex(1.0)];
        assert_eq!(solve_degree1and2(&cone), Ok(vec![LowDegreeCase::FlatPairs]));
        assert!(low_degree_system(&cone, false).max_norm(&[PI, -PI]) <= 1e-12);
    }

    #[test]
    fn classification_examples() {
        let c = classify_vertex(&[FRAC_PI_2; 4]).unwrap();
        assert_eq!(c.tag, VertexTag::DevelopableConvex);
        assert_eq!(c.space, VertexSpace::Flexible);
        assert!(c.cross);
        let c = classify_vertex(&[FRAC_PI_2, PI / 6.0, PI / 6.0, PI / 6.0]).unwrap();
        assert_eq!(c.tag, VertexTag::SumLessThan2Pi);
        assert_eq!(c.space, VertexSpace::IsolatedPair);
        let c = classify_vertex(&[PI, PI / 3.0, 2.0 * PI / 3.0]).unwrap();
        assert_eq!(c.tag, VertexTag::CollinearPair);
        assert!(classify_vertex(&[1.0, 1.0]).is_err());
        assert!(classify_vertex(&[1.0, -1.0, 2.0]).is_err());
    }

    #[test]
    fn isolated_pair_of_degree_four() {
        let alpha = [FRAC_PI_2, PI / 6.0, PI / 6.0, PI / 6.0];
        // The long sector is spanned by the three short ones laid out
        // straight, so the short creases are unfolded and the long ones
        // fully folded.
        let rho = [PI, 0.0, 0.0, PI];
        assert!(star_residual(&alpha, &rho) <= 1e-12);
    }

    #[test]
    fn exploration_of_generic_four() {
        let alpha = [1.2, 1.9, 1.5, TAU - 4.6];
        let states = explore_vertex(&alpha, 0, 41, Some(&[0.0; 4]));
        assert!(states.len() > 10);
        for s in &states {
            assert!(star_residual(&alpha, s) <= 1e-10);
        }
    }
}
