use deeptv::energy::{EnergySpec, Problem};
use deeptv::forwardops::ForwardOp;
use deeptv::gridops::{grad_fb, grad_forward, huber2, huber21, lift2, lift21, maxlift2, maxlift21, norm_21};
use deeptv::netgrad::{clamp, forward, init_params, ramp_network, NetworkSpec, ParamVector};
use deeptv::oracles::{disk_solution, step1d_energy, step1d_solution, DiskParams, Step1DParams};
use deeptv::{Boundary, Field, Grid, Smoothing, TvVariant};
use ndarray::Array2;
use proptest::prelude::*;

const GAMMAS: [f64; 3] = [1e-2, 1e-6, 1e-10];

fn vec2() -> impl Strategy<Value = [f64; 2]> {
    prop_oneof![
        // mostly moderate, sometimes tiny vectors that fall into the smoothed region
        [-10.0..10.0f64, -10.0..10.0f64],
        [-1e-5..1e-5f64, -1e-5..1e-5f64],
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn smoothing_sandwich_2(v in vec2()) {
        let n = v[0].hypot(v[1]);
        for g in GAMMAS {
            let h = huber2(v, g).unwrap();
            let l = lift2(v, g).unwrap();
            let m = maxlift2(v, g);
            prop_assert!(h <= n && n - h <= g / 2.0 + 8.0 * f64::EPSILON * n);
            prop_assert!(n <= l && l - n <= g.sqrt() + 8.0 * f64::EPSILON * n);
            prop_assert!(n <= m && m - n <= g + 8.0 * f64::EPSILON * n);
        }
        // lift and maxlift decrease, huber increases as gamma decreases
        for w in GAMMAS.windows(2) {
            let (big, small) = (w[0], w[1]);
            prop_assert!(lift2(v, small).unwrap() <= lift2(v, big).unwrap());
            prop_assert!(maxlift2(v, small) <= maxlift2(v, big));
            prop_assert!(huber2(v, small).unwrap() >= huber2(v, big).unwrap());
        }
    }

    #[test]
    fn smoothing_sandwich_21(a in vec2(), b in vec2()) {
        let w = [a[0], a[1], b[0], b[1]];
        let n = norm_21(w);
        for g in GAMMAS {
            let h = huber21(w, g).unwrap();
            let l = lift21(w, g).unwrap();
            let m = maxlift21(w, g);
            prop_assert!(h <= n && n - h <= g / 2.0 + 8.0 * f64::EPSILON * n);
            prop_assert!(n <= l && l - n <= g.sqrt() + 8.0 * f64::EPSILON * n);
            prop_assert!(n <= m && m - n <= g + 8.0 * f64::EPSILON * n);
        }
    }

    #[test]
    fn clamp_is_a_projection(values in prop::collection::vec(-50.0..50.0f64, 7), c in 0.0..20.0f64) {
        let spec = NetworkSpec::new(1, vec![2]).unwrap();
        let t = ParamVector::new(&spec, values).unwrap();
        let once = clamp(&t, c).unwrap();
        prop_assert_eq!(&clamp(&once, c).unwrap(), &once);
        prop_assert!(once.max_abs() <= c);
        if t.max_abs() <= c {
            prop_assert_eq!(&once, &t);
        }
    }

    #[test]
    fn step_solution_is_ordered_and_optimal(
        l_ell in 0.05..5.0f64, l_u in 0.05..5.0f64, a1 in 0.0..5.0f64, a2 in 0.01..10.0f64,
        competitors in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 50),
    ) {
        let p = Step1DParams { l_ell, l_u, alpha1: a1, alpha2: a2 };
        let (c1, c2) = step1d_solution(&p).unwrap();
        prop_assert!(0.0 <= c2 && c2 <= c1 && c1 <= 1.0, "({}, {})", c1, c2);
        let best = step1d_energy(&p, c1, c2);
        for (x, y) in competitors {
            prop_assert!(best <= step1d_energy(&p, x, y) + 1e-12);
        }
    }

    #[test]
    fn tv_is_one_homogeneous(values in prop::collection::vec(-3.0..3.0f64, 30), t in 0.0..10.0f64) {
        let grid = Grid::unit_square(5, 6, Boundary::Dirichlet).unwrap();
        let u = Field::new(grid.clone(), values).unwrap();
        let spec = EnergySpec { alpha1: 0.0, alpha2: 0.0, smoothing: Smoothing::None, tv: TvVariant::Tv21, ..EnergySpec::default() };
        let p = Problem::new(spec, Field::zeros(&grid), ForwardOp::Identity).unwrap();
        let e = p.energy_fd(&u).unwrap();
        let et = p.energy_fd(&u.map(|x| t * x)).unwrap();
        prop_assert!((et - t * e).abs() <= 1e-12 * (1.0 + t * e));
    }

    #[test]
    fn fd_energy_is_convex(
        u in prop::collection::vec(-2.0..2.0f64, 20),
        v in prop::collection::vec(-2.0..2.0f64, 20),
        t in 0.01..0.99f64,
        smoothing in prop_oneof![Just(Smoothing::None), Just(Smoothing::Huber), Just(Smoothing::Lift), Just(Smoothing::MaxLift)],
    ) {
        let grid = Grid::unit_square(4, 5, Boundary::Neumann).unwrap();
        let g = Field::from_fn(&grid, |x| (x[0] > 0.5) as u8 as f64);
        let spec = EnergySpec { alpha1: 0.7, alpha2: 1.3, smoothing, gamma: 1e-3, ..EnergySpec::default() };
        let p = Problem::new(spec, g, ForwardOp::Identity).unwrap();
        let fu = Field::new(grid.clone(), u).unwrap();
        let fv = Field::new(grid.clone(), v).unwrap();
        let mix = fu.zip_with(&fv, |a, b| t * a + (1.0 - t) * b).unwrap();
        let lhs = p.energy_fd(&mix).unwrap();
        let rhs = t * p.energy_fd(&fu).unwrap() + (1.0 - t) * p.energy_fd(&fv).unwrap();
        prop_assert!(lhs <= rhs + 1e-12, "{} > {}", lhs, rhs);
    }

    #[test]
    fn networks_are_piecewise_linear_on_segments(seed in 0u64..1000, p in [-1.0..1.0f64, -1.0..1.0f64], q in [-1.0..1.0f64, -1.0..1.0f64]) {
        let spec = NetworkSpec::new(2, vec![6, 5]).unwrap();
        let theta = init_params(&spec, seed).unwrap();
        let n = 401;
        let pts = Array2::from_shape_fn((n, 2), |(i, k)| {
            let t = i as f64 / (n - 1) as f64;
            p[k] + t * (q[k] - p[k])
        });
        let y = forward(&spec, &theta, pts.view()).unwrap();
        // second differences are non-zero only at samples adjacent to a breakpoint;
        // 11 ReLUs give at most 2 * (6 + 6 * 5) kinks along a segment, each touching 2 samples
        let bumps = (1..n - 1)
            .filter(|&i| (y[[i + 1, 0]] - 2.0 * y[[i, 0]] + y[[i - 1, 0]]).abs() > 1e-9)
            .count();
        prop_assert!(bumps <= 2 * 2 * (6 + 6 * 5), "{} bumps", bumps);
        prop_assert!(bumps < n / 4);
    }

    #[test]
    fn ramp_matches_difference_quotient(h in 0.01..2.0f64, x in -5.0..5.0f64) {
        let (spec, theta) = ramp_network(h);
        let relu = |v: f64| v.max(0.0);
        let expected = (relu(x + h) - relu(x)) / h;
        let y = forward(&spec, &theta, Array2::from_elem((1, 1), x).view()).unwrap()[[0, 0]];
        prop_assert!((y - expected).abs() <= 1e-12);
    }
}

#[test]
fn forward_backward_l1_sum_equals_forward_l1_sum() {
    let grid = Grid::unit_square(9, 7, Boundary::Neumann).unwrap();
    for seed in 0..100u64 {
        let u = Field::from_fn(&grid, |x| ((x[0] * 37.0 + x[1] * 91.0 + seed as f64).sin() * 1e3).fract());
        let fb = grad_fb(&u).unwrap();
        let f = grad_forward(&u).unwrap();
        // the backward channels are the forward channels shifted by one node
        let mut a: Vec<f64> = fb.values().iter().map(|v| v.abs()).collect();
        let mut b: Vec<f64> = f.values().iter().chain(f.values()).map(|v| v.abs()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        let s_fb: f64 = fb.values().chunks(4).map(|w| (w.iter().map(|v| v.abs()).sum::<f64>()) / 2.0).sum();
        let s_f: f64 = f.values().iter().map(|v| v.abs()).sum();
        assert!((s_fb - s_f).abs() <= 1e-13 * s_f);
    }
}

#[test]
fn closed_forms_are_continuous_across_thresholds() {
    let d = 1e-9;
    // disk thresholds 2 lambda / (2 a2 + a1) and 2 lambda / a1
    let p = DiskParams { radius: 0.0, alpha1: 1.0, alpha2: 7.0, lambda: 1.0 };
    for r in [2.0 / 15.0, 2.0] {
        let lo = disk_solution(&DiskParams { radius: r - d, ..p });
        let hi = disk_solution(&DiskParams { radius: r + d, ..p });
        assert!((lo - hi).abs() < 1e-6, "r = {r}: {lo} vs {hi}");
    }
    // step saturation thresholds alpha1 = 1 / l_u and 1 / l_ell
    let p = Step1DParams { l_ell: 2.0, l_u: 0.5, alpha1: 0.0, alpha2: 1.5 };
    for a1 in [1.0 / 0.5, 1.0 / 2.0] {
        let lo = step1d_solution(&Step1DParams { alpha1: a1 - d, ..p }).unwrap();
        let hi = step1d_solution(&Step1DParams { alpha1: a1 + d, ..p }).unwrap();
        assert!((lo.0 - hi.0).abs() < 1e-6 && (lo.1 - hi.1).abs() < 1e-6, "{lo:?} vs {hi:?}");
    }
    // merge threshold: the separated plateaus meet
    let p = Step1DParams { l_ell: 1.0, l_u: 1.0, alpha1: 0.1, alpha2: 0.0 };
    // c1 = c2 at 1 - 0.9 / (2 a2) = 0.9 / (2 a2), i.e. a2 = 0.9
    for a2 in [0.9 - d, 0.9 + d] {
        let (c1, c2) = step1d_solution(&Step1DParams { alpha2: a2, ..p }).unwrap();
        assert!((c1 - 0.5).abs() < 1e-6 && (c2 - 0.5).abs() < 1e-6);
    }
}
