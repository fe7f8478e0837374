//! RBF-FD approximation weights over a stencil.
//!
//! Weights are obtained by demanding that the operator applied at the central
//! node is exact for the polyharmonic basis r^3 centered at every stencil
//! node plus the six monomials of total degree <= 2. This yields a symmetric
//! (s + 6) x (s + 6) saddle system with a zero lower-right block; the three
//! supported operators share the same matrix and differ only in the
//! right-hand side, so the gradient pair and the Laplacian reuse one
//! factorization.

use crate::error::{Error, Result};
use crate::linalg::LuFactor;
use crate::node_gen::{Point2, Stencil};

/// Differential operators with precomputable stencil weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiffOp {
    Dx,
    Dy,
    Laplacian,
}

pub const ALL_OPS: [DiffOp; 3] = [DiffOp::Dx, DiffOp::Dy, DiffOp::Laplacian];

/// Exponent pairs of the degree-2 monomial augmentation {1, x, y, x^2, xy, y^2}.
pub const MONOMIAL_EXPONENTS: [(u32, u32); 6] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)];

/// Number of augmentation terms; also the minimum admissible stencil size.
pub const NUM_MONOMIALS: usize = MONOMIAL_EXPONENTS.len();

/// Approximation weights for one operator on one stencil, ordered like the
/// stencil nodes. Units are 1/length for the gradient components and
/// 1/length^2 for the Laplacian, in stencil coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    pub op: DiffOp,
    pub weights: Vec<f64>,
}

/// The assembled saddle system for one stencil and one operator:
/// `matrix` is row-major of dimension `dim = size_s + 6`.
#[derive(Clone, Debug)]
pub struct AugmentedSystem {
    pub size_s: usize,
    pub dim: usize,
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// The polyharmonic spline kernel r^3.
pub fn phs3(r: f64) -> f64 {
    r * r * r
}

/// The operator applied analytically to the kernel r^3 centered at `center`,
/// evaluated at `eval`. All three formulas stay finite at r = 0.
pub fn phs3_applied(op: DiffOp, eval: Point2, center: Point2) -> f64 {
    let dx = eval.x - center.x;
    let dy = eval.y - center.y;
    let r = dx.hypot(dy);
    match op {
        DiffOp::Dx => 3.0 * r * dx,
        DiffOp::Dy => 3.0 * r * dy,
        DiffOp::Laplacian => 9.0 * r,
    }
}

/// The monomial `x^nx * y^ny` (for `op = None`) or its exact derivative under
/// `op`, evaluated at `p`. Exponents must stay within total degree 2.
pub fn monomial_applied(op: Option<DiffOp>, exponents: (u32, u32), p: Point2) -> f64 {
    let (nx, ny) = exponents;
    debug_assert!(nx + ny <= 2, "augmentation is degree 2");
    let pow = |base: f64, e: u32| base.powi(e as i32);
    match op {
        None => pow(p.x, nx) * pow(p.y, ny),
        Some(DiffOp::Dx) => {
            if nx == 0 {
                0.0
            } else {
                nx as f64 * pow(p.x, nx - 1) * pow(p.y, ny)
            }
        }
        Some(DiffOp::Dy) => {
            if ny == 0 {
                0.0
            } else {
                ny as f64 * pow(p.x, nx) * pow(p.y, ny - 1)
            }
        }
        Some(DiffOp::Laplacian) => {
            let tx = if nx < 2 {
                0.0
            } else {
                (nx * (nx - 1)) as f64 * pow(p.x, nx - 2) * pow(p.y, ny)
            };
            let ty = if ny < 2 {
                0.0
            } else {
                (ny * (ny - 1)) as f64 * pow(p.x, nx) * pow(p.y, ny - 2)
            };
            tx + ty
        }
    }
}

fn assemble_matrix(coords: &[Point2]) -> Vec<f64> {
    let s = coords.len();
    let dim = s + NUM_MONOMIALS;
    let mut m = vec![0.0; dim * dim];
    for i in 0..s {
        for j in 0..s {
            m[i * dim + j] = phs3(coords[i].dist(coords[j]));
        }
        for (k, &e) in MONOMIAL_EXPONENTS.iter().enumerate() {
            let v = monomial_applied(None, e, coords[i]);
            m[i * dim + s + k] = v;
            m[(s + k) * dim + i] = v;
        }
    }
    m
}

fn assemble_rhs(coords: &[Point2], op: DiffOp) -> Vec<f64> {
    let s = coords.len();
    let origin = Point2::new(0.0, 0.0);
    let mut rhs = Vec::with_capacity(s + NUM_MONOMIALS);
    for &c in coords {
        rhs.push(phs3_applied(op, origin, c));
    }
    for &e in &MONOMIAL_EXPONENTS {
        rhs.push(monomial_applied(Some(op), e, origin));
    }
    rhs
}

/// Assembles the saddle system for `stencil` and `op`. The evaluation point
/// is the central node, which sits at the origin of stencil coordinates.
pub fn build_system(stencil: &Stencil, op: DiffOp) -> AugmentedSystem {
    let coords = stencil.coords();
    AugmentedSystem {
        size_s: coords.len(),
        dim: coords.len() + NUM_MONOMIALS,
        matrix: assemble_matrix(coords),
        rhs: assemble_rhs(coords, op),
    }
}

fn check_solvable(coords: &[Point2]) -> Result<()> {
    if coords.len() < NUM_MONOMIALS {
        return Err(Error::Contract(format!(
            "stencil size {} below the unisolvency minimum {} of the degree-2 augmentation",
            coords.len(),
            NUM_MONOMIALS
        )));
    }
    Ok(())
}

fn translate_to_first(coords: &[Point2]) -> Vec<Point2> {
    let c = coords[0];
    let mut rel = Vec::with_capacity(coords.len());
    rel.push(Point2::new(0.0, 0.0));
    for p in &coords[1..] {
        rel.push(Point2::new(p.x - c.x, p.y - c.y));
    }
    rel
}

fn solve_ops(coords: &[Point2], ops: &[DiffOp]) -> Result<Vec<WeightSet>> {
    check_solvable(coords)?;
    let s = coords.len();
    let dim = s + NUM_MONOMIALS;
    let factor = LuFactor::new(assemble_matrix(coords), dim)?;
    ops.iter()
        .map(|&op| {
            let mut sol = factor.solve(&assemble_rhs(coords, op));
            sol.truncate(s);
            if sol.iter().any(|w| !w.is_finite()) {
                return Err(Error::IllConditioned {
                    cond: factor.cond_estimate(),
                    limit: crate::linalg::COND_LIMIT,
                });
            }
            Ok(WeightSet { op, weights: sol })
        })
        .collect()
}

/// Solves for the weights of one operator on a normalized stencil.
pub fn solve_weights(stencil: &Stencil, op: DiffOp) -> Result<WeightSet> {
    Ok(solve_ops(stencil.coords(), &[op])?.pop().expect("one op"))
}

/// Solves all three operators on a normalized stencil, sharing one
/// factorization of the saddle matrix. Order: Dx, Dy, Laplacian.
pub fn solve_weights_all(stencil: &Stencil) -> Result<[WeightSet; 3]> {
    let mut v = solve_ops(stencil.coords(), &ALL_OPS)?;
    let lap = v.pop().expect("three ops");
    let dy = v.pop().expect("three ops");
    let dx = v.pop().expect("three ops");
    Ok([dx, dy, lap])
}

/// Solves for weights on raw (unnormalized) coordinates; `coords[0]` is both
/// the central node and the evaluation point. Useful for stencils carrying a
/// physical scale, such as grid-spacing convergence studies.
pub fn weights_raw(coords: &[Point2], op: DiffOp) -> Result<WeightSet> {
    check_solvable(coords)?;
    let rel = translate_to_first(coords);
    Ok(solve_ops(&rel, &[op])?.pop().expect("one op"))
}

/// Raw-coordinate variant of [`solve_weights_all`].
pub fn weights_raw_all(coords: &[Point2]) -> Result<[WeightSet; 3]> {
    check_solvable(coords)?;
    let rel = translate_to_first(coords);
    let mut v = solve_ops(&rel, &ALL_OPS)?;
    let lap = v.pop().expect("three ops");
    let dy = v.pop().expect("three ops");
    let dx = v.pop().expect("three ops");
    Ok([dx, dy, lap])
}

/// The weighted sum over field samples: the approximated operator value at
/// the central node.
pub fn apply_weights(ws: &WeightSet, field_values: &[f64]) -> Result<f64> {
    if ws.weights.len() != field_values.len() {
        return Err(Error::Contract(format!(
            "weight count {} does not match value count {}",
            ws.weights.len(),
            field_values.len()
        )));
    }
    let mut acc = 0.0;
    for (w, v) in ws.weights.iter().zip(field_values) {
        acc += w * v;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node_gen::{fill_nodes, normalize, sample_stencil, GenConfig, Rect};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Regular hexagon of radius 1 around a central node.
    pub(crate) fn hexagon() -> Stencil {
        let h = 3f64.sqrt() / 2.0;
        Stencil::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.5, h),
            Point2::new(-0.5, h),
            Point2::new(-1.0, 0.0),
            Point2::new(-0.5, -h),
            Point2::new(0.5, -h),
        ])
        .unwrap()
    }

    /// Fixed irregular 7-node stencil used for recorded oracle values.
    pub(crate) fn irregular7() -> Stencil {
        Stencil::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.62, 0.55),
            Point2::new(-0.2, 0.77),
            Point2::new(-0.81, 0.21),
            Point2::new(-0.32, -0.66),
            Point2::new(0.4, -0.5),
        ])
        .unwrap()
    }

    fn sample_values(st: &Stencil, f: impl Fn(Point2) -> f64) -> Vec<f64> {
        st.coords().iter().map(|&p| f(p)).collect()
    }

    fn rel_close(got: f64, want: f64, tol: f64) -> bool {
        (got - want).abs() <= tol * want.abs().max(1.0)
    }

    #[test]
    fn phs3_values() {
        assert_eq!(phs3(0.0), 0.0);
        assert_eq!(phs3(1.0), 1.0);
        assert_eq!(phs3(2.0), 8.0);
    }

    #[test]
    fn phs3_applied_matches_finite_differences() {
        // Central finite differences of r^3 with step 1e-5 as an oracle.
        let center = Point2::new(0.3, -0.2);
        let phi = |p: Point2| phs3(p.dist(center));
        let h = 1e-5;
        for eval in [
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 2.0),
            Point2::new(-0.7, 0.4),
        ] {
            let fd_dx = (phi(Point2::new(eval.x + h, eval.y))
                - phi(Point2::new(eval.x - h, eval.y)))
                / (2.0 * h);
            let fd_dy = (phi(Point2::new(eval.x, eval.y + h))
                - phi(Point2::new(eval.x, eval.y - h)))
                / (2.0 * h);
            let fd_lap = (phi(Point2::new(eval.x + h, eval.y))
                + phi(Point2::new(eval.x - h, eval.y))
                + phi(Point2::new(eval.x, eval.y + h))
                + phi(Point2::new(eval.x, eval.y - h))
                - 4.0 * phi(eval))
                / (h * h);
            assert!((phs3_applied(DiffOp::Dx, eval, center) - fd_dx).abs() < 1e-6);
            assert!((phs3_applied(DiffOp::Dy, eval, center) - fd_dy).abs() < 1e-6);
            assert!((phs3_applied(DiffOp::Laplacian, eval, center) - fd_lap).abs() < 1e-4);
        }
    }

    #[test]
    fn phs3_applied_examples() {
        let o = Point2::new(0.0, 0.0);
        assert_eq!(phs3_applied(DiffOp::Laplacian, o, o), 0.0);
        assert!((phs3_applied(DiffOp::Dx, Point2::new(1.0, 0.0), o) - 3.0).abs() < 1e-15);
        assert!((phs3_applied(DiffOp::Laplacian, Point2::new(0.0, 2.0), o) - 18.0).abs() < 1e-15);
    }

    #[test]
    fn monomial_applied_examples() {
        assert_eq!(monomial_applied(None, (2, 0), Point2::new(3.0, 1.0)), 9.0);
        assert_eq!(
            monomial_applied(Some(DiffOp::Laplacian), (2, 0), Point2::new(-4.2, 7.0)),
            2.0
        );
        assert_eq!(
            monomial_applied(Some(DiffOp::Dx), (1, 1), Point2::new(2.0, 5.0)),
            5.0
        );
        assert_eq!(
            monomial_applied(Some(DiffOp::Dy), (0, 0), Point2::new(2.0, 5.0)),
            0.0
        );
    }

    #[test]
    fn system_is_symmetric_with_zero_corner() {
        let sys = build_system(&irregular7(), DiffOp::Laplacian);
        assert_eq!(sys.dim, 13);
        for i in 0..sys.dim {
            for j in 0..sys.dim {
                assert_eq!(
                    sys.matrix[i * sys.dim + j].to_bits(),
                    sys.matrix[j * sys.dim + i].to_bits(),
                    "asymmetry at ({i},{j})"
                );
            }
        }
        for i in sys.size_s..sys.dim {
            for j in sys.size_s..sys.dim {
                assert_eq!(sys.matrix[i * sys.dim + j], 0.0);
            }
        }
    }

    #[test]
    fn six_node_stencil_yields_a_12x12_system() {
        let st = Stencil::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 0.9),
            Point2::new(-0.8, 0.1),
            Point2::new(-0.1, -0.7),
            Point2::new(0.6, 0.6),
        ])
        .unwrap();
        let sys = build_system(&st, DiffOp::Dx);
        assert_eq!(sys.dim, 12);
        assert_eq!(sys.rhs.len(), 12);
    }

    #[test]
    fn hexagon_laplacian_rhs_is_nine_r() {
        let sys = build_system(&hexagon(), DiffOp::Laplacian);
        assert_eq!(sys.rhs[0], 0.0);
        for j in 1..7 {
            assert!(
                (sys.rhs[j] - 9.0).abs() < 1e-14,
                "rhs[{j}] = {}",
                sys.rhs[j]
            );
        }
    }

    #[test]
    fn hexagon_laplacian_weights_match_the_recorded_oracle() {
        // Independent dense solve (LAPACK) recorded during bring-up:
        // center weight -4, each rim weight 2/3.
        let ws = solve_weights(&hexagon(), DiffOp::Laplacian).unwrap();
        assert!(rel_close(ws.weights[0], -4.0, 1e-11));
        for &w in &ws.weights[1..] {
            assert!(rel_close(w, 2.0 / 3.0, 1e-10), "rim weight {w}");
        }
    }

    #[test]
    fn laplacian_of_r_squared_is_four() {
        for st in [hexagon(), irregular7()] {
            let ws = solve_weights(&st, DiffOp::Laplacian).unwrap();
            let vals = sample_values(&st, |p| p.x * p.x + p.y * p.y);
            let got = apply_weights(&ws, &vals).unwrap();
            assert!((got - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn derivative_weights_annihilate_constants() {
        for op in [DiffOp::Dx, DiffOp::Dy, DiffOp::Laplacian] {
            let ws = solve_weights(&irregular7(), op).unwrap();
            let got = apply_weights(&ws, &[1.0; 7]).unwrap();
            assert!(got.abs() < 1e-8, "{op:?} on constant gave {got}");
        }
    }

    #[test]
    fn duplicate_nodes_fail_with_a_conditioning_error() {
        let st = Stencil::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 0.8),
            Point2::new(-0.5, -0.5),
            Point2::new(0.5, -0.5),
        ])
        .unwrap();
        assert!(matches!(
            solve_weights(&st, DiffOp::Laplacian),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn undersized_stencils_are_rejected() {
        let st = Stencil::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 0.9),
            Point2::new(-0.8, 0.1),
            Point2::new(-0.1, -0.7),
        ])
        .unwrap();
        assert!(matches!(
            solve_weights(&st, DiffOp::Dx),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn apply_weights_basics() {
        let ws = WeightSet {
            op: DiffOp::Dx,
            weights: vec![0.0, 0.0, 0.0],
        };
        assert_eq!(apply_weights(&ws, &[5.0, -1.0, 2.0]).unwrap(), 0.0);
        let unit = WeightSet {
            op: DiffOp::Dx,
            weights: vec![0.0, 1.0, 0.0],
        };
        assert_eq!(apply_weights(&unit, &[5.0, -1.0, 2.0]).unwrap(), -1.0);
        assert!(apply_weights(&unit, &[1.0]).is_err());
    }

    #[test]
    fn recorded_oracle_values_for_applied_weights() {
        // Frozen during bring-up from an independent LAPACK implementation.
        let xy23 = |p: Point2| p.x * p.x * p.y * p.y * p.y;
        let st = irregular7();
        let [dx, _, lap] = solve_weights_all(&st).unwrap();
        let vals = sample_values(&st, xy23);
        let lap_applied = apply_weights(&lap, &vals).unwrap();
        assert!(
            rel_close(lap_applied, 0.11631421035037702, 1e-9),
            "lap applied {lap_applied}"
        );
        let dx_applied = apply_weights(&dx, &vals).unwrap();
        assert!(
            rel_close(dx_applied, 0.02550063816543542, 1e-9),
            "dx applied {dx_applied}"
        );
        // The symmetric hexagon cancels the odd integrand to rounding level.
        let hex = hexagon();
        let hex_lap = solve_weights(&hex, DiffOp::Laplacian).unwrap();
        let hex_applied = apply_weights(&hex_lap, &sample_values(&hex, xy23)).unwrap();
        assert!(hex_applied.abs() < 1e-13, "hex applied {hex_applied}");
    }

    #[test]
    fn weights_scale_covariantly() {
        let base: Vec<Point2> = irregular7().coords().to_vec();
        let scaled: Vec<Point2> = base
            .iter()
            .map(|p| Point2::new(0.5 * p.x, 0.5 * p.y))
            .collect();
        let [dx0, dy0, lap0] = weights_raw_all(&base).unwrap();
        let [dx1, dy1, lap1] = weights_raw_all(&scaled).unwrap();
        for i in 0..7 {
            assert!(rel_close(dx1.weights[i] * 0.5, dx0.weights[i], 1e-10));
            assert!(rel_close(dy1.weights[i] * 0.5, dy0.weights[i], 1e-10));
            assert!(rel_close(lap1.weights[i] * 0.25, lap0.weights[i], 1e-10));
        }
    }

    #[test]
    fn grid_laplacian_converges_on_the_sinusoidal_field() {
        // 3x3 grid stencils with physical spacing; the field is sampled
        // around a generic center so no symmetry cancels the error.
        let field = crate::fields::TestField::Sinusoidal { kx: 2.0, ky: 1.0 };
        let center = Point2::new(0.3, 0.4);
        let mut errors = Vec::new();
        for h in [0.1, 0.05, 0.025] {
            let mut coords = vec![Point2::new(0.0, 0.0)];
            for ix in -1..=1 {
                for iy in -1..=1 {
                    if (ix, iy) != (0, 0) {
                        coords.push(Point2::new(ix as f64 * h, iy as f64 * h));
                    }
                }
            }
            let ws = weights_raw(&coords, DiffOp::Laplacian).unwrap();
            let vals: Vec<f64> = coords
                .iter()
                .map(|p| field.value(Point2::new(center.x + p.x, center.y + p.y)))
                .collect();
            let approx = apply_weights(&ws, &vals).unwrap();
            errors.push((approx - field.laplacian(center)).abs());
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "errors not monotone: {errors:?}"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn weights_reproduce_degree_two_monomials(seed in 0u64..100_000, size in prop::sample::select(vec![6usize, 9, 15])) {
            let cloud = fill_nodes(Rect::unit(), 0.05, 77).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let config = GenConfig {
                spacing_h: 0.05,
                stencil_size_s: size,
                candidate_pool_m: 3 * size,
                ..GenConfig::default()
            };
            let sample = sample_stencil(&cloud, &config, &mut rng).unwrap();
            let st = normalize(&sample).unwrap();
            if let Ok(all) = solve_weights_all(&st) {
                for ws in &all {
                    for &e in &MONOMIAL_EXPONENTS {
                        let vals = sample_values(&st, |p| monomial_applied(None, e, p));
                        let got = apply_weights(ws, &vals).unwrap();
                        let want = monomial_applied(Some(ws.op), e, Point2::new(0.0, 0.0));
                        prop_assert!(
                            (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                            "op {:?} exponents {:?}: {} vs {}", ws.op, e, got, want
                        );
                    }
                }
            }
        }
    }
}
