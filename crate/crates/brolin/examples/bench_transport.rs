use brolin::measure::DiscreteMeasure;
use brolin::sphere::SpherePoint;
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let m: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(4096);
    let mu = DiscreteMeasure::uniform_on(
        (0..n).map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            SpherePoint::from_re_im(t.cos(), t.sin())
        }).collect(),
    ).unwrap();
    let nu = DiscreteMeasure::uniform_on(
        (0..m).map(|k| {
            let t = 2.0 * PI * (k as f64 + if std::env::var_os("ALIGN").is_some() { 0.0 } else { 0.3 }) / m as f64;
            SpherePoint::from_re_im(t.cos(), t.sin())
        }).collect(),
    ).unwrap();
    let t0 = Instant::now();
    let (d, _) = brolin::w1(&mu, &nu, 100_000_000).unwrap();
    println!("w1({n}x{m}) = {d:.6e} in {:?}", t0.elapsed());
}
