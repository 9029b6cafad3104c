use approx::assert_relative_eq;
use foilwind::config::{preset, RunConfig};
use foilwind::formulation::{assemble_fcm, assemble_reference, impose_excitation, spurious_air_term};
use foilwind::solver::run_transient;
use foilwind::study::{discretize, solver_config};
use foilwind::{Discretization32, Discretization64, FormulationVariant};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn small(name: &str) -> RunConfig {
    let mut cfg = preset(name).unwrap();
    cfg.geometry.n_turns = 4;
    cfg.mesh.n_alpha = 4;
    cfg.mesh.n_beta = 4;
    cfg.solver.periods = 0.5;
    cfg
}

fn random_state(n: usize, rng: &mut StdRng, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn zero_state_zero_current_gives_zero_residual() {
    for name in ["pancake2d_ref", "pancake2d_fcm_hfull", "pancake2d_fcm_hphi", "pancake2d_fcm_tw"] {
        let disc: Discretization64 = discretize(&small(name)).unwrap();
        let zero = vec![0.0; disc.n_dofs()];
        let sys = disc.assemble(&zero, &zero, 0.0, 1e-4).unwrap();
        assert!(sys.residual.iter().all(|&r| r == 0.0), "{name}");
        assert!(sys.jacobian.is_structurally_symmetric(), "{name}");
    }
}

#[test]
fn linear_limit_jacobian_is_state_independent() {
    let mut rng = StdRng::seed_from_u64(7);
    for name in ["pancake2d_ref", "pancake2d_fcm_hphi"] {
        let mut cfg = small(name);
        cfg.materials.n = 1.0;
        let disc: Discretization64 = discretize(&cfg).unwrap();
        let n = disc.n_dofs();
        let prev = vec![0.0; n];
        let a = disc.assemble(&random_state(n, &mut rng, 3.0), &prev, 1e-3, 1e-4).unwrap();
        let b = disc.assemble(&random_state(n, &mut rng, 3.0), &prev, 1e-3, 1e-4).unwrap();
        let scale = a.jacobian.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.jacobian.values.iter().zip(&b.jacobian.values) {
            assert!((x - y).abs() <= 1e-12 * scale, "{name}: {x} vs {y}");
        }
    }
}

#[test]
fn assembly_entry_points_check_the_variant() {
    let reference: Discretization64 = discretize(&small("pancake2d_ref")).unwrap();
    let fcm: Discretization64 = discretize(&small("pancake2d_fcm_tw")).unwrap();
    let zr = vec![0.0; reference.n_dofs()];
    let zf = vec![0.0; fcm.n_dofs()];
    assert!(assemble_reference(&reference, &zr, &zr, 0.0, 1e-4).is_ok());
    assert!(assemble_fcm(&reference, &zr, &zr, 0.0, 1e-4).is_err());
    assert!(assemble_fcm(&fcm, &zf, &zf, 0.0, 1e-4).is_ok());
    assert!(assemble_reference(&fcm, &zf, &zf, 0.0, 1e-4).is_err());

    let mut no_basis = fcm.clone();
    no_basis.voltage_basis = None;
    assert!(assemble_fcm(&no_basis, &zf, &zf, 0.0, 1e-4).is_err());
}

#[test]
fn spurious_air_term_is_linear_in_rho() {
    let disc: Discretization64 = discretize(&small("pancake2d_fcm_hfull")).unwrap();
    let a = spurious_air_term(&disc.mesh, &disc.layout, 1e-3).unwrap();
    let b = spurious_air_term(&disc.mesh, &disc.layout, 2e-3).unwrap();
    assert!(a.nnz() > 0);
    for (x, y) in a.values.iter().zip(&b.values) {
        assert_relative_eq!(2.0 * x, *y, max_relative = 1e-14);
    }
    let zero = vec![0.0; disc.n_dofs()];
    assert!(a.matvec(&zero).iter().all(|&v| v == 0.0));

    let hphi: Discretization64 = discretize(&small("pancake2d_fcm_hphi")).unwrap();
    assert!(hphi.spurious_air_term().is_err());
}

#[test]
fn excitation_values() {
    let reference: Discretization64 = discretize(&preset("pancake2d_ref").unwrap()).unwrap();
    let fcm: Discretization64 = discretize(&preset("pancake2d_fcm_hphi").unwrap()).unwrap();
    let quarter = 1.0 / (4.0 * 50.0);

    let at_zero = impose_excitation(&reference.layout, &reference.excitation, 20, 0.0);
    assert_eq!(at_zero.len(), 20);
    assert!(at_zero.iter().all(|c| c.value == 0.0 && c.strong));

    for c in impose_excitation(&reference.layout, &reference.excitation, 20, quarter) {
        assert_relative_eq!(c.value, 96.0, max_relative = 1e-12);
    }
    let coil = impose_excitation(&fcm.layout, &fcm.excitation, 20, quarter);
    assert_eq!(coil.len(), 1);
    assert_relative_eq!(coil[0].value, 1920.0, max_relative = 1e-12);

    let t = 3.1e-3;
    let a = impose_excitation(&fcm.layout, &fcm.excitation, 20, t)[0].value;
    let b = impose_excitation(&fcm.layout, &fcm.excitation, 20, t + 0.02)[0].value;
    assert_relative_eq!(a, b, max_relative = 1e-10);
}

#[test]
fn converged_steps_balance_power() {
    for name in ["pancake2d_ref", "pancake2d_fcm_hfull", "pancake2d_fcm_tw"] {
        let cfg = small(name);
        let disc: Discretization64 = discretize(&cfg).unwrap();
        let trace = run_transient(&disc, &solver_config(&cfg.solver), true).unwrap();
        for k in [trace.states.len() / 3, trace.states.len() - 1] {
            let dt = trace.times[k] - trace.times[k - 1];
            let pb = disc.power_balance(&trace.states[k], &trace.states[k - 1], dt);
            let size = pb.resistive.abs() + pb.voltage.abs() + pb.magnetic.abs();
            assert!(pb.resistive >= 0.0);
            assert!(pb.imbalance().abs() <= 1e-6 * size, "{name} step {k}: {pb:?}");
        }
    }
}

#[test]
fn scalar_potential_regions_are_curl_free() {
    let cfg = small("pancake2d_fcm_hphi");
    let disc: Discretization64 = discretize(&cfg).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    let u = random_state(disc.n_dofs(), &mut rng, 1.0);
    let j = disc.current_density(&u);
    let jmax = j.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (q, jq) in j.iter().enumerate() {
        if !disc.is_conducting(q) {
            assert!(jq.abs() <= 1e-12 * jmax, "quad {q}: {jq}");
        }
    }
}

#[test]
fn single_precision_run_follows_double() {
    let cfg = small("pancake2d_fcm_tw");
    let d64: Discretization64 = discretize(&cfg).unwrap();
    let d32: Discretization32 = discretize(&cfg).unwrap();
    assert_eq!(d32.n_dofs(), d64.n_dofs());
    assert_eq!(d32.variant(), FormulationVariant::FcmTOmega);
    let t64 = run_transient(&d64, &solver_config(&cfg.solver), false).unwrap();
    let t32 = run_transient(&d32, &solver_config::<f32>(&cfg.solver), false).unwrap();
    let last = |v: &[f64]| *v.last().unwrap();
    let p32 = *t32.losses.last().unwrap() as f64;
    assert!(p32.is_finite());
    assert_relative_eq!(p32, last(&t64.losses), max_relative = 0.05);
}
