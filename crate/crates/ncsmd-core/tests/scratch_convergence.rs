use nalgebra::DVector;
use ncsmd::geometry::ConvexBody;
use ncsmd::oracle::{build_instance, CostFunction, LinkFunction};
use ncsmd::solver::{derive_hyperparams, run};

#[test]
fn scratch_convergence_check() {
    let cost = CostFunction::isotropic(DVector::from_column_slice(&[0.3, 0.0]), 1.0).unwrap();
    let inst = build_instance(ConvexBody::unit_ball(2), cost, LinkFunction::Logistic).unwrap();
    for t in [1024u64, 8192, 65536] {
        let cfg = derive_hyperparams(&inst, inst.barrier.nu(), t).with_seed(1);
        let traj = run(&inst, &cfg);
        let abar = traj.averaged_action().unwrap();
        let gap_final = inst.cost_gap(&traj.a_final);
        let gap_bar = inst.cost_gap(&abar);
        // cumulative fo regret
        let cum: f64 = traj
            .steps
            .iter()
            .map(|s| inst.cost_gap(&s.action) + inst.cost_gap(&s.probe))
            .sum();
        println!(
            "T={t} eta={:.5} a_final=({:.4},{:.4}) gap_final={gap_final:.6} gap_abar={gap_bar:.6} cumFO={cum:.2} cumFO/T={:.5}",
            cfg.eta, traj.a_final[0], traj.a_final[1], cum / t as f64
        );
        assert!(traj.failure.is_none());
    }
}
