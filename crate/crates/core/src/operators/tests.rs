use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use super::*;
use crate::coeff::{TimeFn, VectorField};

fn unit_spectral(n: usize, theta: TimeFn, k: TimeFn) -> OperatorFamily<f64> {
    build_spectral_family(Rectangle::unit(), (n, n), TimeCoefficients::new(theta, k, 1.0)).unwrap()
}

fn unit_fem(cells: usize, adv: Option<VectorField>, bc: BoundarySpec, k: f64) -> OperatorFamily<f64> {
    build_fem_family(FemFamilySpec {
        domain: Rectangle::unit(),
        cells: (cells, cells),
        coeffs: TimeCoefficients::new(TimeFn::one_plus_decay(), TimeFn::constant(k), 1.0),
        advection: adv,
        bc,
        garding_shift: 0.0,
    })
    .unwrap()
}

/// Dense `(M, K_diff, K_adv)` by quadrature on the reference triangle with an
/// affine map, independent of the closed-form local matrices.
fn dense_oracle(fam: &OperatorFamily<f64>, adv: Option<&VectorField>) -> [DMatrix<f64>; 3] {
    let f = fam.fem_data().unwrap();
    let nn = f.num_nodes();
    let mut m = DMatrix::zeros(nn, nn);
    let mut kd = DMatrix::zeros(nn, nn);
    let mut ka = DMatrix::zeros(nn, nn);
    let rule = crate::quadrature::triangle_rule(3);
    for tri in f.mesh.triangles() {
        let p = tri.map(|n| f.mesh.coords(n));
        let jac = DMatrix::from_row_slice(2, 2, &[p[1].0 - p[0].0, p[2].0 - p[0].0, p[1].1 - p[0].1, p[2].1 - p[0].1]);
        let det = jac.determinant().abs();
        let jinv_t = jac.try_inverse().unwrap().transpose();
        let ref_grads = [DVector::from_vec(vec![-1.0, -1.0]), DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let grads: Vec<DVector<f64>> = ref_grads.iter().map(|g| &jinv_t * g).collect();
        let cx = (p[0].0 + p[1].0 + p[2].0) / 3.0;
        let cy = (p[0].1 + p[1].1 + p[2].1) / 3.0;
        let q = adv.map(|a| a.eval(cx, cy)).unwrap_or([0.0, 0.0]);
        for &(r, s, w) in &rule {
            let phi = [1.0 - r - s, r, s];
            for a in 0..3 {
                for b in 0..3 {
                    m[(tri[a], tri[b])] += w * det * phi[a] * phi[b];
                    kd[(tri[a], tri[b])] += w * det * grads[a].dot(&grads[b]);
                    ka[(tri[a], tri[b])] += w * det * (q[0] * grads[b][0] + q[1] * grads[b][1]) * phi[a];
                }
            }
        }
    }
    [m, kd, ka]
}

#[test]
fn spectral_eigenvalue_examples() {
    let fam = unit_spectral(4, TimeFn::decaying_diffusion(), TimeFn::constant(1.0));
    assert!((fam.eigenvalue(0.0, 1, 0).unwrap() - (0.2 * PI * PI + 1.0)).abs() < 1e-12);
    assert!((fam.eigenvalue(0.0, 0, 0).unwrap() - 1.0).abs() < 1e-15);
    assert!((fam.spectral_data().unwrap().lambda[4] - PI * PI).abs() < 1e-12);
    assert!(matches!(fam.eigenvalue(0.0, 4, 0), Err(Error::OutOfRange(_))));
}

#[test]
fn nonpositive_theta_is_config_error() {
    let r = build_spectral_family::<f64>(
        Rectangle::unit(),
        (2, 2),
        TimeCoefficients::new(TimeFn::new("1-2t", |t| 1.0 - 2.0 * t), TimeFn::constant(0.0), 1.0),
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn spectral_apply_examples() {
    let fam = unit_spectral(3, TimeFn::constant(1.0), TimeFn::constant(1.0));
    let mut v = fam.zeros();
    v.values[0] = 1.0;
    assert_eq!(fam.apply_a(0.3, &v).unwrap(), v);
    let fam = unit_spectral(3, TimeFn::constant(1.0), TimeFn::constant(0.0));
    let mut v = fam.zeros();
    v.values[fam.spectral_data().unwrap().index(1, 1)] = 1.0;
    let out = fam.apply_a(0.0, &v).unwrap();
    assert!((out.values[4] - 2.0 * PI * PI).abs() < 1e-12);
}

#[test]
fn spectral_resolvent_multiplier() {
    // eigenvalue 3 on the zero mode via k = 3
    let fam = unit_spectral(2, TimeFn::constant(1.0), TimeFn::constant(3.0));
    let mut v = fam.zeros();
    v.values[0] = 1.0;
    let out = fam.solve_resolvent(0.0, 1.0 / 3.0, &v).unwrap();
    assert!((out.values[0] - 0.5).abs() < 1e-15);
    let tiny = fam.solve_resolvent(0.0, 1e-300, &fam.project(&|x, y| x + y * y)).unwrap();
    assert!(tiny.max_abs_diff(&fam.project(&|x, y| x + y * y)) < 1e-14);
}

#[test]
fn fractional_examples() {
    let fam = unit_spectral(2, TimeFn::constant(1.0), TimeFn::constant(4.0));
    let mut v = fam.zeros();
    v.values[0] = 1.0;
    assert_eq!(fam.fractional_apply(0.0, 0.0, &v).unwrap(), v);
    assert!((fam.fractional_apply(0.0, 0.5, &v).unwrap().values[0] - 2.0).abs() < 1e-15);
    let w = fam.project(&|x, y| (x * y).exp());
    let back = fam.fractional_apply(0.0, 1.0, &fam.fractional_apply(0.0, -1.0, &w).unwrap()).unwrap();
    assert!(back.max_abs_diff(&w) < 1e-12);
    let zero_mode = unit_spectral(2, TimeFn::constant(1.0), TimeFn::constant(0.0));
    assert!(matches!(zero_mode.fractional_apply(0.0, -0.5, &w), Err(Error::Domain(_))));
}

#[test]
fn spectral_projection_examples() {
    let fam = unit_spectral(5, TimeFn::constant(1.0), TimeFn::constant(0.0));
    let c = fam.project(&|_, _| 2.5);
    assert!((c.values[0] - 2.5).abs() < 1e-10);
    assert!(c.values[1..].iter().all(|v| v.abs() < 1e-10));
    let b = fam.project(&|x, _| 2f64.sqrt() * (PI * x).cos());
    let idx = fam.spectral_data().unwrap().index(1, 0);
    for (k, v) in b.values.iter().enumerate() {
        let want = if k == idx { 1.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-10, "mode {k}: {v}");
    }
}

#[test]
fn spectral_point_roundtrip() {
    let fam = unit_spectral(6, TimeFn::constant(1.0), TimeFn::constant(0.0));
    let v = fam.project(&|x, y| (3.0 * x).sin() * y);
    let pts = fam.to_points(&v).unwrap();
    let back = fam.from_points(&pts).unwrap();
    assert!(back.max_abs_diff(&v) < 1e-12);
    let (x, y) = fam.collocation_points()[7];
    assert!((fam.evaluate(&v, x, y).unwrap() - pts[7]).abs() < 1e-12);
}

#[test]
fn fem_neumann_kernel_and_mass_total() {
    let fam = unit_fem(2, None, BoundarySpec::neumann(), 0.0);
    let f = fam.fem_data().unwrap();
    let ones = vec![1.0; f.num_nodes()];
    let kv = f.matrices.matvec(fem::DIFFUSION, &ones);
    assert!(kv.iter().all(|x| x.abs() < 1e-14));
    let mv = f.matrices.matvec(MASS, &ones);
    assert!((mv.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    // interior node of 2x2 cells touches six triangles of area 1/8
    assert!((mv[4] - 6.0 * 0.125 / 3.0).abs() < 1e-15);
    // standard 5-point stencil at the interior node on a uniform right-triangle mesh
    let d = f.matrices.to_dense(fem::DIFFUSION);
    assert!((d[4][4] - 4.0).abs() < 1e-14);
    assert!((d[4][1] + 1.0).abs() < 1e-14 && (d[4][3] + 1.0).abs() < 1e-14);
    assert!(d[4][0].abs() < 1e-14 && d[4][8].abs() < 1e-14);
}

#[test]
fn fem_assembly_matches_dense_oracle() {
    let q = VectorField::new("swirl", |x, y| [1.0 + y, -0.5 * x]);
    for cells in [2, 4, 8] {
        let fam = unit_fem(cells, Some(q.clone()), BoundarySpec::neumann(), 0.0);
        let oracle = dense_oracle(&fam, Some(&q));
        let f = fam.fem_data().unwrap();
        for (k, o) in oracle.iter().enumerate() {
            let got = f.matrices.to_dense(k);
            for r in 0..o.nrows() {
                for c in 0..o.ncols() {
                    assert!((got[r][c] - o[(r, c)]).abs() <= 1e-12, "matrix {k} ({r},{c})");
                }
            }
        }
    }
}

#[test]
fn advection_is_not_symmetric_but_kills_constants() {
    let q = VectorField::constant(1.0, 0.0);
    let fam = unit_fem(4, Some(q.clone()), BoundarySpec::neumann(), 0.0);
    let [_, _, ka] = dense_oracle(&fam, Some(&q));
    assert!((&ka - ka.transpose()).abs().max() > 1e-3);
    let ones = DVector::from_element(ka.nrows(), 1.0);
    let sym = (&ka + ka.transpose()) * 0.5;
    assert!(ones.dot(&(&sym * &ones)).abs() < 1e-13);
}

/// Dense `K(t)` for the family and the free-node index list.
fn dense_k(fam: &OperatorFamily<f64>, t: f64, adv: Option<&VectorField>) -> DMatrix<f64> {
    let [m, kd, ka] = dense_oracle(fam, adv);
    (kd + ka) * fam.theta().eval(t) + m * fam.shift_at(t)
}

#[test]
fn fem_apply_a_matches_dense_oracle() {
    let q = VectorField::constant(1.0, 0.0);
    let fam = unit_fem(5, Some(q.clone()), BoundarySpec::dirichlet_left(1.0), 0.7);
    let t = 0.4;
    let v = fam.interpolate(&|x, y| (x - y).sin() + 1.0);
    let out = fam.apply_a(t, &v).unwrap();
    let want = dense_k(&fam, t, Some(&q)) * DVector::from_vec(v.values.clone());
    let f = fam.fem_data().unwrap();
    for n in 0..f.num_nodes() {
        let w = if f.is_free(n) { want[n] } else { 0.0 };
        assert!((out.values[n] - w).abs() <= 1e-12, "node {n}");
    }
}

#[test]
fn fem_resolvent_matches_dense_solve() {
    let q = VectorField::constant(1.0, 0.0);
    for bc in [BoundarySpec::neumann(), BoundarySpec::dirichlet_left(1.0)] {
        let fam = unit_fem(3, Some(q.clone()), bc, 0.0);
        let (t, dt) = (0.2, 0.1);
        let rhs = fam.interpolate(&|x, y| x * x + y);
        let got = fam.solve_resolvent(t, dt, &rhs).unwrap();
        let [m, _, _] = dense_oracle(&fam, Some(&q));
        let k = dense_k(&fam, t, Some(&q));
        let f = fam.fem_data().unwrap();
        let free = &f.free;
        let nf = free.len();
        let g = DVector::from_vec(f.lift.clone());
        let r = DVector::from_vec(rhs.values.clone());
        let sys = DMatrix::from_fn(nf, nf, |a, b| m[(free[a], free[b])] + dt * k[(free[a], free[b])]);
        let mut rhs_free = (&m * {
            let mut rr = r.clone();
            for n in 0..rr.len() {
                if !f.is_free(n) {
                    rr[n] = 0.0;
                }
            }
            rr
        }) - (&k * &g) * dt;
        rhs_free = DVector::from_fn(nf, |a, _| rhs_free[free[a]]);
        let x = sys.lu().solve(&rhs_free).unwrap();
        for (a, &n) in free.iter().enumerate() {
            assert!((got.values[n] - x[a]).abs() <= 1e-10);
        }
        for n in 0..f.num_nodes() {
            if let Some(gv) = f.dirichlet[n] {
                assert_eq!(got.values[n], gv);
            }
        }
    }
}

#[test]
fn fem_projection_reproduces_linears() {
    let fam = unit_fem(4, None, BoundarySpec::neumann(), 0.0);
    let lin = |x: f64, y: f64| 2.0 * x - 3.0 * y + 0.5;
    let p = fam.project(&lin);
    for (n, v) in p.values.iter().enumerate() {
        let (x, y) = fam.fem_data().unwrap().mesh.coords(n);
        assert!((v - lin(x, y)).abs() < 1e-10);
    }
    assert!(fam.l2_error_against(&p, &lin, 4).unwrap() < 1e-10);
}

#[test]
fn fem_fractional_roundtrip() {
    let q = VectorField::constant(1.0, 0.0);
    for adv in [None, Some(q)] {
        let fam = unit_fem(4, adv, BoundarySpec::neumann(), 1.0);
        let v = fam.interpolate(&|x, y| x * y + 0.3);
        let half = fam.fractional_apply(0.1, 0.5, &v).unwrap();
        let full = fam.fractional_apply(0.1, 0.5, &half).unwrap();
        let direct = fam.inverse_mass(&fam.apply_a(0.1, &v).unwrap()).unwrap();
        assert!(full.max_abs_diff(&direct) < 1e-9);
        let back = fam.fractional_apply(0.1, 1.0, &fam.fractional_apply(0.1, -1.0, &v).unwrap()).unwrap();
        assert!(back.max_abs_diff(&v) < 1e-10);
    }
}

#[test]
fn backend_mismatch_is_reported() {
    let s = unit_spectral(3, TimeFn::constant(1.0), TimeFn::constant(0.0));
    let f = unit_fem(2, None, BoundarySpec::neumann(), 0.0);
    assert!(matches!(s.apply_a(0.0, &f.zeros()), Err(Error::BackendMismatch { .. })));
    let factor = s.factorize(0.0, 0.1).unwrap();
    assert!(matches!(f.solve_with(&factor, &f.zeros()), Err(Error::BackendMismatch { .. })));
}

#[test]
fn degenerate_mesh_and_conflicting_corners() {
    let spec = |cells, bc| FemFamilySpec {
        domain: Rectangle::unit(),
        cells,
        coeffs: TimeCoefficients::new(TimeFn::constant(1.0), TimeFn::constant(0.0), 1.0),
        advection: None,
        bc,
        garding_shift: 0.0,
    };
    assert!(build_fem_family::<f64>(spec((1, 4), BoundarySpec::neumann())).unwrap_err().is_config());
    let bc = BoundarySpec {
        bottom: EdgeCondition::DirichletConstant(2.0),
        ..BoundarySpec::dirichlet_left(1.0)
    };
    assert!(build_fem_family::<f64>(spec((3, 3), bc)).unwrap_err().is_config());
    let bad = FemFamilySpec { advection: Some(VectorField::new("nan", |_, _| [f64::NAN, 0.0])), ..spec((3, 3), BoundarySpec::neumann()) };
    assert!(matches!(build_fem_family::<f64>(bad), Err(Error::Numerical(_))));
}

#[test]
fn f32_family_tracks_f64() {
    let coeffs = || TimeCoefficients::new(TimeFn::one_plus_decay(), TimeFn::constant(0.0), 1.0);
    let spec = FemFamilySpec {
        domain: Rectangle::unit(),
        cells: (4, 4),
        coeffs: coeffs(),
        advection: Some(VectorField::constant(1.0, 0.0)),
        bc: BoundarySpec::dirichlet_left(1.0),
        garding_shift: 0.0,
    };
    let f64fam = build_fem_family::<f64>(spec.clone()).unwrap();
    let f32fam = build_fem_family::<f32>(spec).unwrap();
    let v = f64fam.interpolate(&|x, y| x + y);
    let a = f64fam.solve_resolvent(0.0, 0.1, &v).unwrap();
    let b = f32fam.solve_resolvent(0.0, 0.1, &v.cast()).unwrap();
    assert!(a.max_abs_diff(&b.cast()) < 1e-5);
}

fn smooth_field(a: f64, b: f64, c: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| a * (PI * x).cos() + b * (x * y * 3.0).sin() + c * y * y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn resolvent_contracts(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, t in 0.0..1.0f64, dt in 1e-4..1.0f64) {
        let s = unit_spectral(6, TimeFn::decaying_diffusion(), TimeFn::constant(0.5));
        let v = s.project(&smooth_field(a, b, c));
        let out = s.solve_resolvent(t, dt, &v).unwrap();
        prop_assert!(s.norm(&out).unwrap() <= s.norm(&v).unwrap() * (1.0 + 1e-14));
        let f = unit_fem(4, None, BoundarySpec::neumann(), 0.5);
        let v = f.interpolate(&smooth_field(a, b, c));
        let out = f.solve_resolvent(t, dt, &v).unwrap();
        prop_assert!(f.norm(&out).unwrap() <= f.norm(&v).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn resolvent_inverts_identity_recombination(a in -2.0..2.0f64, b in -2.0..2.0f64, t in 0.0..1.0f64, dt in 1e-3..0.5f64) {
        let f = unit_fem(4, Some(VectorField::constant(1.0, 0.0)), BoundarySpec::dirichlet_left(1.0), 0.3);
        let v = f.interpolate(&smooth_field(a, b, 1.0));
        let av = f.inverse_mass(&f.apply_a(t, &v).unwrap()).unwrap();
        let out = f.solve_resolvent(t, dt, &v.axpy(dt, &av)).unwrap();
        prop_assert!(out.max_abs_diff(&v) < 1e-10);
    }

    #[test]
    fn fractional_powers_compose(p1 in -1.5..1.5f64, p2 in -1.5..1.5f64, a in -2.0..2.0f64) {
        let s = unit_spectral(5, TimeFn::one_plus_decay(), TimeFn::constant(1.0));
        let v = s.project(&smooth_field(a, 1.0, -0.5));
        let two = s.fractional_apply(0.3, p1, &s.fractional_apply(0.3, p2, &v).unwrap()).unwrap();
        let one = s.fractional_apply(0.3, p1 + p2, &v).unwrap();
        let scale = one.values.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!(two.max_abs_diff(&one) <= 1e-12 * scale);
    }

    #[test]
    fn spectral_eigenvalues_monotone(i in 0usize..7, j in 0usize..7, lx in 0.5..3.0f64, ly in 0.5..3.0f64) {
        let d = SpectralData::new(&Rectangle::new(lx, ly).unwrap(), 8, 8);
        prop_assert!(d.lambda[d.index(i, j)] >= 0.0);
        prop_assert!(d.lambda[d.index(i + 1, j)] >= d.lambda[d.index(i, j)]);
        prop_assert!(d.lambda[d.index(i, j + 1)] >= d.lambda[d.index(i, j)]);
    }
}
