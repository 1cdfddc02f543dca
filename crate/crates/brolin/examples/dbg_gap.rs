use brolin::gapdomain::*;
use brolin::walk::{wos_sample, WalkConfig};
use num_complex::Complex64;
use std::collections::BTreeMap;

fn main() {
    for (name, state) in [("blocked", GateState::Blocked), ("open", GateState::Open { open: 1 })] {
        let mut gates = BTreeMap::new();
        gates.insert("1".to_string(), state);
        let spec = GapDomainSpec { n_lo: 1, n_hi: 1, gates, scale: GapScale::default() };
        let domain = gap_domain(&spec).unwrap();
        println!("{name}: h = {}, occupied = {}, cloud_res = {:.4e}",
            domain.oracle.cover.h, domain.oracle.cover.occupied.len(), domain.oracle.cloud_resolution);
        let cfg = WalkConfig::new(2e-4, 3000, 3, domain.oracle.bounding_radius);
        let gate = &domain.gates[0];
        println!("  disk center {} radius {}", gate.disk_center, gate.disk_radius);
        let mut outside = 0; let mut near_sn = 0; let mut dmin: f64 = 1e9; let mut steps_sum = 0u64;
        for i in 0..cfg.samples {
            let s = wos_sample(&domain.oracle, Complex64::new(0.0, 0.0), &cfg, i).unwrap();
            steps_sum += s.steps;
            if s.stop.norm() > 1.0 { outside += 1; }
            let d = dist_to_outer_boundary(gate, s.stop);
            dmin = dmin.min(d);
            if d <= domain.oracle.snap_radius(cfg.eps) { near_sn += 1; }
        }
        println!("  stops with |z|>1: {outside}/3000, near S_n (snap radius): {near_sn}, min dist to S_n: {dmin:.4e}, mean steps {}", steps_sum / 3000);
    }
}
