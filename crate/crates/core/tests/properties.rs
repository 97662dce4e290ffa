use egmarket::equilibrium::{dual_objective, kkt_verify, solve_equilibrium, DualPoint, DualSolverOptions};
use egmarket::first_best::solve_first_best;
use egmarket::market::MarketInstance;
use egmarket::online::{init_agent, update_agent};
use proptest::prelude::*;

/// Small markets with values on a coarse grid, so exact ties are common.
fn market() -> impl Strategy<Value = MarketInstance> {
    (1usize..=4, 1usize..=6).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(1u8..=8, m), n),
            prop::collection::vec(0.05f64..8.0, n),
            prop::collection::vec(1.0f64..3.0, n),
        )
            .prop_map(|(v, lambda, tau)| {
                let v: Vec<Vec<f64>> = v.into_iter().map(|r| r.into_iter().map(|x| x as f64 * 0.5).collect()).collect();
                MarketInstance::new(v, lambda, tau, 4.0).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equilibrium_clears_and_certifies(inst in market()) {
        let sol = solve_equilibrium(&inst, &DualSolverOptions::default()).unwrap();
        prop_assert!(kkt_verify(&inst, &sol).max_residual <= 1e-6);
        for j in 0..inst.m() {
            prop_assert!((sol.x.item_total(j) - 1.0).abs() <= 1e-7);
        }
        let fb = solve_first_best(&inst).unwrap();
        prop_assert!(sol.revenue() <= fb.revenue + 1e-7);
        prop_assert!(sol.revenue() >= 0.5 * fb.revenue - 1e-6);
    }

    #[test]
    fn dual_objective_is_midpoint_convex(inst in market(), a in prop::collection::vec(0.0f64..=1.0, 4), b in prop::collection::vec(0.0f64..=1.0, 4)) {
        let (lo, hi) = (inst.w_lower(), inst.w_upper());
        let at = |t: &[f64]| -> Vec<f64> { (0..inst.n()).map(|i| lo[i] + t[i] * (hi[i] - lo[i])).collect() };
        let (u, v) = (at(&a), at(&b));
        let mid: Vec<f64> = u.iter().zip(&v).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |w: Vec<f64>| dual_objective(&inst, &DualPoint::new(&inst, w).unwrap());
        let (fu, fv, fm) = (f(u), f(v), f(mid));
        prop_assert!(fm <= 0.5 * (fu + fv) + 1e-9 * (1.0 + fu.abs() + fv.abs()));
    }

    #[test]
    fn agent_multiplier_stays_in_interval(rho in 0.001f64..2.0, tau in 1.0f64..4.0, wins in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..200)) {
        let mut a = init_agent(rho, tau, 1.0).unwrap();
        for (v, won) in wins {
            a = update_agent(&a, v, won);
            prop_assert!(a.omega >= a.w_lower && a.omega <= a.w_upper());
        }
    }
}
