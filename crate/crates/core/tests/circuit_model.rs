use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stackcap_core::circuit::{self, IntegrationControl};
use stackcap_core::edl::{self, Side, ZetaPotential};
use stackcap_core::timescale;
use stackcap_core::{DriveSpec, ElectrolyteSpec, StackGeometry};

fn random_cell(rng: &mut ChaCha8Rng, n: usize) -> (StackGeometry, DriveSpec, ElectrolyteSpec) {
    let g = if n == 1 {
        StackGeometry::two_plate()
    } else {
        let h = rng.random_range(0.1..0.9);
        StackGeometry::with_widths(n, 1.0 - h, h).unwrap()
    };
    let d = DriveSpec::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)).unwrap();
    let e = ElectrolyteSpec::new(rng.random_range(1..=3), -rng.random_range(1..=3)).unwrap();
    (g, d, e)
}

#[test]
fn charge_slope_is_minus_capacitance_on_both_sides() {
    for (zp, zm) in [(1, -1), (2, -1), (1, -3)] {
        let e = ElectrolyteSpec::new(zp, zm).unwrap();
        for side in [Side::LeftFacing, Side::RightFacing] {
            for u in [-3.0, -0.7, -0.05, 0.05, 0.7, 3.0] {
                let q = |v: f64| edl::diffuse_charge(&ZetaPotential::new(v, side).unwrap(), &e).unwrap();
                let h = 1e-5;
                let slope = (q(u + h) - q(u - h)) / (2.0 * h);
                let c = edl::differential_capacitance(u, &e).unwrap();
                assert!((slope + c).abs() <= 1e-7 * c, "{side:?} u={u}: {slope} vs {c}");
            }
        }
    }
}

#[test]
fn random_trajectories_conserve_charge_and_settle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let ctrl = IntegrationControl {
        rtol: 1e-10,
        atol: 1e-12,
        samples: 51,
        ..Default::default()
    };
    for n in [1usize, 2, 3, 7] {
        for _ in 0..3 {
            let (g, d, e) = random_cell(&mut rng, n);
            let s = circuit::assemble(&g, &d, &e).unwrap();
            let tau = timescale::charging_timescale(&g, &d, &e).unwrap();
            let traj = circuit::integrate(&s, 40.0 * tau, &ctrl).unwrap();
            assert!(traj.max_charge_drift() <= 1e-10, "drift {}", traj.max_charge_drift());
            let eq = circuit::equilibrium(&s).unwrap();
            let gap = eq
                .iter()
                .zip(traj.final_state())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(gap <= 1e-8, "n={n}: {gap}");
            let currents = traj.currents.last().unwrap();
            assert!(currents.iter().all(|c| c.abs() <= 1e-7), "{currents:?}");
        }
    }
}

#[test]
fn late_decay_rate_is_lambda_c() {
    let e = ElectrolyteSpec::new(1, -1).unwrap();
    for n in [1usize, 3, 6] {
        let g = if n == 1 {
            StackGeometry::two_plate()
        } else {
            StackGeometry::with_widths(n, 0.5, 0.5).unwrap()
        };
        let d = DriveSpec::symmetric(0.05);
        let s = circuit::assemble(&g, &d, &e).unwrap();
        let eq = circuit::equilibrium(&s).unwrap();
        let spec = timescale::spectrum(&s, &eq).unwrap();
        let tau = spec.tau_n;
        let times: Vec<f64> = (0..=200).map(|k| 20.0 * tau * k as f64 / 200.0).collect();
        let tol = IntegrationControl {
            rtol: 1e-11,
            atol: 1e-14,
            ..Default::default()
        }
        .tolerances();
        let traj = circuit::integrate_at(&s, &times, &tol).unwrap();
        let rate = timescale::relaxation_rate_fit(&traj, &eq, (5.0 * tau, 12.0 * tau)).unwrap();
        assert!((rate / spec.lambda_c - 1.0).abs() < 0.01, "n={n}: {rate} vs {}", spec.lambda_c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conductance_rows_sum_to_zero(n in 1usize..30, h in 0.05f64..0.95, v in -3.0f64..3.0) {
        let g = if n == 1 { StackGeometry::two_plate() } else { StackGeometry::with_widths(n, 1.0 - h, h).unwrap() };
        let s = circuit::assemble(&g, &DriveSpec::symmetric(v), &ElectrolyteSpec::new(1, -1).unwrap()).unwrap();
        let ones = vec![1.0; s.dim()];
        let r = s.t.mul_vec(&ones);
        let scale = s.t.diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(r.iter().all(|x| x.abs() <= 1e-12 * scale));
        prop_assert!((s.y.iter().sum::<f64>()).abs() <= 1e-12 * scale);
    }

    #[test]
    fn equilibrium_is_neutral_and_balanced(
        n in 1usize..12, h in 0.1f64..0.9, vp in -2.0f64..2.0, vm in -2.0f64..2.0,
        zp in 1i32..4, zm in -3i32..0,
    ) {
        let g = if n == 1 { StackGeometry::two_plate() } else { StackGeometry::with_widths(n, 1.0 - h, h).unwrap() };
        let s = circuit::assemble(&g, &DriveSpec::new(vp, vm).unwrap(), &ElectrolyteSpec::new(zp, zm).unwrap()).unwrap();
        let z = circuit::equilibrium(&s).unwrap();
        prop_assert!(circuit::conserved_charge(&z, &s).unwrap().abs() <= 1e-10);
        let r = s.residual(&z);
        prop_assert!(r.iter().all(|x| x.abs() <= 1e-9), "{:?}", r);
        // Every stack of one electrode sees the same drop at rest.
        prop_assert!(z[..n].iter().all(|v| (v - z[0]).abs() <= 1e-9));
        prop_assert!(z[n..].iter().all(|v| (v - z[n]).abs() <= 1e-9));
    }

    #[test]
    fn spectrum_has_one_zero_mode(n in 1usize..20, h in 0.1f64..0.9, v in -2.0f64..2.0) {
        let g = if n == 1 { StackGeometry::two_plate() } else { StackGeometry::with_widths(n, 1.0 - h, h).unwrap() };
        let s = circuit::assemble(&g, &DriveSpec::symmetric(v), &ElectrolyteSpec::new(2, -1).unwrap()).unwrap();
        let z = circuit::equilibrium(&s).unwrap();
        let rep = timescale::spectrum(&s, &z).unwrap();
        prop_assert_eq!(rep.zero_modes, 1);
        prop_assert_eq!(rep.eigenvalues.len(), 2 * n);
        prop_assert!(rep.eigenvalues[1..].windows(2).all(|w| w[1] > w[0]));
        prop_assert!((rep.tau_n * rep.lambda_c - 1.0).abs() < 1e-14);
    }
}
