// TEMP-BOOTSTRAP: throwaway probe, deleted before finalizing.
use stochrel::ctmc::stationary_ct;
use stochrel::population::queueing_models;
use stochrel::prelude::*;

fn main() {
    for cap in [8i64, 12] {
        let models = queueing_models(&rat(2, 5), &rat(3, 10), cap).unwrap();
        let q_lb = models.load_balanced.to_rate_kernel().unwrap();
        let q_ind = models.independent.to_rate_kernel().unwrap();
        let t0 = std::time::Instant::now();
        let pi_lb = stationary_ct(&q_lb).unwrap();
        let pi_ind = stationary_ct(&q_ind).unwrap();
        let (pi_lb, pi_ind) = (pi_lb.exact().unwrap(), pi_ind.exact().unwrap());
        println!("cap {cap}: stationary solves in {:?}", t0.elapsed());

        let space = models.load_balanced.space().clone();
        let wm = Relation::build(&RelationKind::WeakMajorization, space.clone(), space.clone())
            .unwrap();
        let t0 = std::time::Instant::now();
        let d = st_related(&wm, pi_lb, pi_ind).unwrap();
        println!("  wm-related: {} ({:?})", d.related(), t0.elapsed());
        if let Some(v) = d.violation() {
            let gap = &v.mu_mass - &v.nu_conjugate_mass;
            println!(
                "    violating set size {} (first {:?}), gap ≈ {:.3e}",
                v.states.len(),
                v.states.first().map(|&i| space.label(i).to_string()),
                stochrel::rational::rat_to_f64(&gap),
            );
        }
        // float mode at tolerance 1e-9
        let to_f = |d: &Dist| d.masses().iter().map(stochrel::rational::rat_to_f64).collect::<Vec<_>>();
        let approx = st_related_f64(&wm, &to_f(pi_lb), &to_f(pi_ind), 1e-9).unwrap();
        println!("    wm-related within 1e-9: {}", approx.related);
        // one-dimensional totals: is |X^LB| ≤st |X^IND| exactly?
        let tot_space = StateSpace::integers(0..=2 * cap);
        let tot_map: Vec<usize> = (0..space.len())
            .map(|i| {
                let p = space.point(i).unwrap();
                (p[0] + p[1]) as usize
            })
            .collect();
        let tot_lb = pi_lb.pushforward(&tot_map, tot_space.clone()).unwrap();
        let tot_ind = pi_ind.pushforward(&tot_map, tot_space.clone()).unwrap();
        let tot_leq = Relation::build(
            &RelationKind::CoordinatewiseLeq(vec![1]),
            tot_space.clone(),
            tot_space.clone(),
        )
        .unwrap();
        let dtot = st_related(&tot_leq, &tot_lb, &tot_ind).unwrap();
        println!("    total-count FSD exact: {}", dtot.related());
        if let Some(v) = dtot.violation() {
            let gap = &v.mu_mass - &v.nu_conjugate_mass;
            println!(
                "      violating totals {:?}, gap ≈ {:.3e}",
                v.states,
                stochrel::rational::rat_to_f64(&gap)
            );
        }

        // E[X1+X2]
        let total = |pi: &Dist| -> Rat {
            let mut acc = rat_int(0);
            for i in 0..space.len() {
                let p = space.point(i).unwrap();
                acc += pi.mass(i) * rat_int(p[0] + p[1]);
            }
            acc
        };
        let e_lb = total(pi_lb);
        let e_ind = total(pi_ind);
        println!(
            "  E|X| LB = {} ≈ {:.6}, IND = {} ≈ {:.6}, strict less: {}",
            format_rat(&e_lb),
            stochrel::rational::rat_to_f64(&e_lb),
            format_rat(&e_ind),
            stochrel::rational::rat_to_f64(&e_ind),
            e_lb < e_ind
        );
        // also: coordinatewise order and sum order preservation fail (negative checks)
        let r_sum = Relation::build(&RelationKind::SumLeq, space.clone(), space.clone()).unwrap();
        let leq = Relation::build(
            &RelationKind::CoordinatewiseLeq(vec![1, 2]),
            space.clone(),
            space.clone(),
        )
        .unwrap();
        let p1 = ct_preserves(&leq, &q_lb, &q_ind).unwrap();
        let p2 = ct_preserves(&r_sum, &q_lb, &q_ind).unwrap();
        println!(
            "  preserves coordinatewise: {} ({} failures), preserves sum: {} ({} failures)",
            p1.holds(),
            p1.failures.len(),
            p2.holds(),
            p2.failures.len()
        );
    }
}
