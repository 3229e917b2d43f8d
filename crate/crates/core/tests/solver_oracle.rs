mod common;

use common::{expm_apply, ode_only, random_matrix, rng};
use dnode_core::node::{euler_integrate, rk4_integrate};
use ndarray::Array1;
use rand::Rng;

fn max_abs(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn rk4_matches_matrix_exponential() {
    let mut r = rng(1);
    for n in [2, 5, 8, 16] {
        let w = random_matrix(&mut r, n, 1.0);
        let z0 = Array1::from_shape_fn(n, |_| r.random_range(-1.0..1.0));
        let oracle = expm_apply(&w, &z0);
        let (z, _) = rk4_integrate(&ode_only(w), z0.view(), 16, 0).unwrap();
        assert!(max_abs(&z, &oracle) < 1e-5);
    }
}

#[test]
fn convergence_orders() {
    let mut r = rng(2);
    for _ in 0..5 {
        let n = 6;
        let w = random_matrix(&mut r, n, 1.0);
        let z0 = Array1::from_shape_fn(n, |_| r.random_range(-1.0..1.0));
        let oracle = expm_apply(&w, &z0);
        let p = ode_only(w);
        let err = |steps: usize, rk4: bool| {
            let (z, _) = if rk4 {
                rk4_integrate(&p, z0.view(), steps, 0).unwrap()
            } else {
                euler_integrate(&p, z0.view(), steps, 0).unwrap()
            };
            max_abs(&z, &oracle)
        };
        for steps in [2, 4, 8] {
            let ratio = err(steps, true) / err(2 * steps, true);
            assert!((8.0..=32.0).contains(&ratio), "rk4 ratio {ratio} at {steps}");
        }
        for steps in [4, 8, 16, 32] {
            let ratio = err(steps, false) / err(2 * steps, false);
            assert!((1.5..=3.0).contains(&ratio), "euler ratio {ratio} at {steps}");
        }
    }
}
