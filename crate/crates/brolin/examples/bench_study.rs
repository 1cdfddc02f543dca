use brolin::pullback::{convergence_study, pullback_measure, PullbackConfig};
use brolin::sphere::SpherePoint;
use brolin::rational::RationalMap;
use num_complex::Complex64;
use std::time::Instant;

fn main() {
    let c = |re: f64| Complex64::new(re, 0.0);
    let map = RationalMap::from_polynomial(&[c(0.0), c(0.0), c(1.0)]).unwrap();
    let cfg = PullbackConfig { pair_budget: 20_000_000, ..PullbackConfig::default() };
    let z = SpherePoint::from_re_im(1.0, 0.0);
    let t0 = Instant::now();
    let reference = pullback_measure(&map, &z, 12, &cfg).unwrap();
    println!("pullback 12: {:?} ({} atoms)", t0.elapsed(), reference.measure.len());
    for m in 2..12 {
        let t1 = Instant::now();
        let lm = pullback_measure(&map, &z, m, &cfg).unwrap();
        let t2 = Instant::now();
        let (d, _) = brolin::transport::w1(&lm.measure, &reference.measure, cfg.pair_budget).unwrap();
        println!("m={m:2}: pullback {:?}, w1 {:?} -> {d:.5e}", t2 - t1, t2.elapsed());
    }
    let t3 = Instant::now();
    let fit = convergence_study(&map, &z, 2, 12, 7, &cfg).unwrap();
    println!("full study: {:?} alpha {:.4}", t3.elapsed(), fit.alpha);
}
