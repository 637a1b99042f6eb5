use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use distortia::adversary::{conditional_distortion, mmse_estimate, posterior, posterior_kbit};
use distortia::distribution::GaussianDist;
use distortia::mirror::{decode_kbit, encode_kbit, KeyedEncoder, MirrorPlane, MirrorScheme};
use distortia::shift_mirror::{SMScheme, TrajectoryCipher};
use distortia::system::{lqr_plan, LinearSystem, TrajectoryPlanner};

fn vector(n: usize, range: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-range..range, n).prop_map(DVector::from_vec)
}

fn matrix(r: usize, c: usize, range: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-range..range, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

/// Affine plane of codimension `rank` with orthonormal rows.
fn plane(n: usize, rank: usize) -> impl Strategy<Value = MirrorPlane> {
    (matrix(n, n, 1.0), vector(rank, 2.0)).prop_filter_map("degenerate basis", move |(m, b)| {
        let q = (m + DMatrix::identity(n, n) * 0.5).qr().q();
        MirrorPlane::new(q.columns(0, rank).transpose(), b).ok()
    })
}

fn path(n: usize, horizon: usize, range: f64) -> impl Strategy<Value = Vec<DVector<f64>>> {
    prop::collection::vec(vector(n, range), horizon)
}

proptest! {
    #[test]
    fn noiseless_simulation_follows_the_recursion(
        a in matrix(3, 3, 1.2), b in matrix(3, 2, 1.0), x0 in vector(3, 5.0), u in path(2, 6, 3.0)
    ) {
        let sys = LinearSystem::noiseless(a.clone(), b.clone()).unwrap();
        let traj = sys.simulate(&x0, &u, None).unwrap();
        prop_assert_eq!(traj.states.len(), u.len() + 1);
        for t in 0..u.len() {
            let next = &a * &traj.states[t] + &b * &u[t];
            prop_assert!((&traj.states[t + 1] - next).amax() <= 1e-12 * (1.0 + traj.states[t + 1].amax()));
        }
    }

    #[test]
    fn planner_reaches_target_and_is_affine(
        x0 in vector(2, 3.0), x1 in vector(2, 3.0), y0 in vector(2, 3.0), y1 in vector(2, 3.0),
        s in 0.0f64..1.0, horizon in 3usize..8, weight in 0.0f64..20.0
    ) {
        // Double integrator: controllable in two steps.
        let sys = LinearSystem::noiseless(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.125, 0.5]),
        ).unwrap();
        let planner = TrajectoryPlanner::new(&sys, horizon, weight).unwrap();
        let u = planner.plan(&x0, &x1).unwrap();
        let end = sys.simulate(&x0, &u, None).unwrap().states.last().unwrap().clone();
        prop_assert!((&end - &x1).amax() <= 1e-8);
        let direct = lqr_plan(&sys, &x0, &x1, horizon, weight).unwrap();
        for (p, q) in u.iter().zip(&direct) {
            prop_assert!((p - q).amax() <= 1e-9);
        }
        let v = planner.plan(&y0, &y1).unwrap();
        let mixed = planner.plan(&(&x0 * s + &y0 * (1.0 - s)), &(&x1 * s + &y1 * (1.0 - s))).unwrap();
        for t in 0..u.len() {
            prop_assert!((&mixed[t] - (&u[t] * s + &v[t] * (1.0 - s))).amax() <= 1e-8);
        }
    }

    #[test]
    fn reflection_is_an_involution(p in (1usize..=3).prop_flat_map(|r| plane(3, r)), x in vector(3, 10.0)) {
        let once = p.reflect(&x).unwrap();
        let twice = p.reflect(&once).unwrap();
        prop_assert!((twice - &x).amax() <= 1e-12 * (1.0 + x.amax()));
        // The midpoint of x and its image lies on the plane.
        let mid = (&x + &once) * 0.5;
        prop_assert!((p.s() * mid - p.b()).amax() <= 1e-10 * (1.0 + x.amax()));
    }

    #[test]
    fn kbit_mirror_is_lossless_and_x_is_a_preimage(
        planes in prop::collection::vec(prop::collection::vec((1usize..=2).prop_flat_map(|r| plane(2, r)), 3), 2),
        x in path(2, 2, 4.0),
        key in 0u64..8,
    ) {
        let scheme = MirrorScheme::new(planes).unwrap();
        let z = encode_kbit(&x, &scheme, key).unwrap();
        let back = decode_kbit(&z, &scheme, key).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).amax() <= 1e-10);
        }
        let law = GaussianDist::trajectory(DVector::zeros(4), DMatrix::identity(4, 4) * 4.0, 2).unwrap();
        let amb = posterior_kbit(&law, &z, &scheme).unwrap();
        prop_assert!(amb.len() <= 8);
        let total: f64 = amb.candidates().iter().map(|c| c.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let found = amb.candidates().iter().any(|c| c.path.iter().zip(&x).all(|(a, b)| (a - b).amax() <= 1e-9));
        prop_assert!(found);
    }

    #[test]
    fn commuting_reflections_apply_in_any_order(x in path(3, 1, 5.0), c in vector(3, 2.0), key in 0u64..4) {
        // Coordinate hyperplanes x_0 = c_0 and x_1 = c_1 commute.
        let p0 = MirrorPlane::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), DVector::from_element(1, c[0])).unwrap();
        let p1 = MirrorPlane::new(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]), DVector::from_element(1, c[1])).unwrap();
        let fwd = MirrorScheme::new(vec![vec![p0.clone(), p1.clone()]]).unwrap();
        let rev = MirrorScheme::new(vec![vec![p1, p0]]).unwrap();
        let swapped = ((key & 1) << 1) | (key >> 1);
        let a = encode_kbit(&x, &fwd, key).unwrap();
        let b = encode_kbit(&x, &rev, swapped).unwrap();
        prop_assert!((&a[0] - &b[0]).amax() <= 1e-12);
    }

    #[test]
    fn shift_mirror_round_trip_and_preimages(theta in 0.2f64..8.0, k in 1u32..=4, x in -30.0f64..30.0, key in 0u64..16) {
        let s = SMScheme::new(theta, k).unwrap();
        let key = key % s.key_count();
        let z = s.encode(x, key).unwrap();
        prop_assert!((s.decode(z, key).unwrap() - x).abs() <= 1e-10 * (1.0 + x.abs()));
        let pre = s.preimages(z);
        let keys: u64 = pre.iter().map(|(_, m)| *m).sum();
        prop_assert_eq!(keys, s.key_count());
        prop_assert!(pre.iter().any(|(p, _)| (p - x).abs() <= 1e-9 * (1.0 + x.abs())));
        if z.abs() > theta {
            let half = s.key_count() / 2;
            prop_assert_eq!(pre.len(), 2);
            prop_assert!(pre.iter().all(|(p, m)| (p.abs() - z.abs()).abs() <= 1e-12 && *m == half));
        } else if z.abs() < theta {
            prop_assert_eq!(pre.len() as u64, s.key_count());
            prop_assert!(pre.iter().all(|(p, _)| p.abs() <= theta));
        }
    }

    #[test]
    fn cipher_leaks_exactly_the_increments(
        a in matrix(2, 2, 1.1), ys in path(2, 5, 3.0), k0 in 0u64..4, k1 in 0u64..4
    ) {
        let sys = LinearSystem::noiseless(a.clone(), DMatrix::identity(2, 2)).unwrap();
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let cipher = TrajectoryCipher::gaussian(sys, DVector::zeros(2), &cov, 3.3, 2).unwrap();
        let z = cipher.encode(&ys, &[k0, k1]).unwrap();
        for t in 0..ys.len() - 1 {
            let leaked = &z[t + 1] - &a * &z[t];
            let truth = &ys[t + 1] - &a * &ys[t];
            prop_assert!((leaked - truth).amax() <= 1e-10);
        }
        let back = cipher.decode(&z, &[k0, k1]).unwrap();
        for (p, q) in ys.iter().zip(&back) {
            prop_assert!((p - q).amax() <= 1e-10);
        }
    }

    #[test]
    fn mmse_minimizes_posterior_squared_error(
        c in (1usize..=2).prop_flat_map(|r| plane(2, r)), x in path(2, 1, 3.0), probe in vector(2, 5.0), key in 0u64..2
    ) {
        let law = GaussianDist::new(DVector::from_vec(vec![0.3, -0.2]), DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8])).unwrap();
        let scheme = MirrorScheme::one_bit(vec![c]).unwrap();
        let z = scheme.encode(&x, key).unwrap();
        let amb = posterior(&law, &scheme, &z).unwrap();
        let total: f64 = amb.candidates().iter().map(|c| c.weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let est = mmse_estimate(&amb, 0);
        let risk = |p: &DVector<f64>| -> f64 {
            amb.candidates().iter().map(|c| c.weight * (&c.path[0] - p).norm_squared()).sum()
        };
        prop_assert!((risk(&est) - conditional_distortion(&amb, 0)).abs() <= 1e-9 * (1.0 + risk(&est)));
        prop_assert!(risk(&est) <= risk(&probe) + 1e-9);
    }
}
