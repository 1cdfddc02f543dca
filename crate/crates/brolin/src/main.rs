//! Command-line front end: rendering, measure computation, distances,
//! cross-validation, convergence studies, and reproducible manifests.

use brolin::config::{Manifest, MapSpec, Tolerances};
use brolin::error::Error;
use brolin::gapdomain::{gap_domain, gate_mass, GapDomainSpec, GapScale, GateState};
use brolin::julia::{escape_radius, filled_julia_outer, hausdorff, julia_inner, CoverIndex};
use brolin::measure::{measure_from_csv, DiscreteMeasure, MeasureFile};
use brolin::pullback::{
    bl_measure, convergence_study, invariance_defect, pullback_measure, PullbackConfig,
};
use brolin::rational::RationalMap;
use brolin::sphere::{sph_dist, SpherePoint};
use brolin::transport;
use brolin::walk::{harmonic_measure, wos_sample, CompactSetOracle, WalkConfig, WalkStart};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "brolin", version, about = "Brolin-Lyubich measures of rational maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Named preset: z2, basilica, dendrite, siegel-like.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Path to a map JSON file {"p": [[re,im],...], "q": [[re,im],...]}.
    #[arg(long, global = true)]
    map: Option<PathBuf>,
    /// Master seed for every randomized stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Cap on pullback tree atoms (d^m).
    #[arg(long, global = true, default_value_t = 1 << 20)]
    budget_atoms: u64,
    /// Cap on n*m pairs in exact transport solves.
    #[arg(long, global = true, default_value_t = 4_000_000)]
    pair_budget: u64,
    /// Walk stopping scale.
    #[arg(long, global = true, default_value_t = 1e-3)]
    eps: f64,
    /// Monte Carlo sample count.
    #[arg(long, global = true, default_value_t = 10_000)]
    samples: u64,
    /// Re-run a previously written manifest (overrides other flags).
    #[arg(long, global = true)]
    from_manifest: Option<PathBuf>,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Outer cover and inner cloud of the (filled) Julia set, with images.
    Render {
        #[command(flatten)]
        common: CommonArgs,
        /// Cover cell size.
        #[arg(long, default_value_t = 1.0 / 256.0)]
        cell: f64,
        /// Escape iteration budget.
        #[arg(long, default_value_t = 60)]
        iters: usize,
        /// Backward-orbit depth for the inner cloud.
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
    /// Pullback measure with the empirical precision certificate.
    Blmeasure {
        #[command(flatten)]
        common: CommonArgs,
        /// Precision parameter n: targets W1 accuracy 2^-n.
        #[arg(long, default_value_t = 4)]
        precision: u32,
    },
    /// Exact Wasserstein-1 distance between two measure files.
    W1 {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Harmonic measure of the filled-Julia complement by walk-on-spheres.
    Harmonic {
        #[command(flatten)]
        common: CommonArgs,
        /// Start point "re,im"; omitted = start uniformly on a circle.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = 1.0 / 256.0)]
        cell: f64,
        #[arg(long, default_value_t = 60)]
        iters: usize,
        #[arg(long, default_value_t = 12)]
        cloud_depth: usize,
    },
    /// Logarithmic capacity of the filled Julia set.
    Capacity {
        #[command(flatten)]
        common: CommonArgs,
        /// Start circle radius (default 4 * escape radius).
        #[arg(long)]
        rstart: Option<f64>,
        /// Jump radius cap (default 4 * escape radius).
        #[arg(long)]
        rcap: Option<f64>,
        #[arg(long, default_value_t = 1.0 / 256.0)]
        cell: f64,
        #[arg(long, default_value_t = 60)]
        iters: usize,
        #[arg(long, default_value_t = 12)]
        cloud_depth: usize,
    },
    /// Depth-versus-W1 convergence study with an exponential-rate fit.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Base point "re,im".
        #[arg(long, default_value = "1,0")]
        z: String,
        #[arg(long, default_value_t = 2)]
        mmin: usize,
        #[arg(long, default_value_t = 10)]
        mmax: usize,
        /// Also render the pullback atoms over the inner cloud.
        #[arg(long, default_value_t = false)]
        showcase: bool,
    },
    /// Gate-domain dichotomy demo: blocked versus open gate mass.
    Gapdemo {
        #[command(flatten)]
        common: CommonArgs,
        /// Gate index to probe.
        #[arg(long, default_value_t = 1)]
        gate: u32,
        /// Comb exponent for the open state.
        #[arg(long, default_value_t = 1)]
        open_j: u32,
        /// Optional gate-domain spec file; replaces the built-in pair.
        #[arg(long)]
        gapspec: Option<PathBuf>,
    },
    /// Run the invariant suites and report a machine-readable verdict.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Validate a measure file instead of a preset.
        #[arg(long)]
        measure: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version exits are not errors
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            e.exit();
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn common_of(cmd: &Command) -> &CommonArgs {
    match cmd {
        Command::Render { common, .. }
        | Command::Blmeasure { common, .. }
        | Command::W1 { common, .. }
        | Command::Harmonic { common, .. }
        | Command::Capacity { common, .. }
        | Command::Convergence { common, .. }
        | Command::Gapdemo { common, .. }
        | Command::Validate { common, .. } => common,
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    let common = common_of(&cli.command).clone();
    if common.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(common.workers)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    }
    std::fs::create_dir_all(&common.out)?;

    let manifest = match &common.from_manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<Manifest>(&text)?
        }
        None => build_manifest(&cli.command, &common)?,
    };
    std::fs::write(
        common.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    dispatch(&manifest, &common.out)
}

fn map_spec_of(common: &CommonArgs) -> Result<Option<MapSpec>, Error> {
    match (&common.preset, &common.map) {
        (Some(_), Some(_)) => Err(Error::InvalidInput("give either --preset or --map".into())),
        (Some(name), None) => Ok(Some(MapSpec::Preset(name.clone()))),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let file: brolin::rational::MapFile = serde_json::from_str(&text)?;
            file.to_map()?; // validate now
            Ok(Some(MapSpec::Coefficients { p: file.p, q: file.q }))
        }
        (None, None) => Ok(None),
    }
}

fn build_manifest(cmd: &Command, common: &CommonArgs) -> Result<Manifest, Error> {
    let map = map_spec_of(common)?;
    let (name, params) = match cmd {
        Command::Render { cell, iters, depth, .. } => (
            "render",
            serde_json::json!({"cell": cell, "iters": iters, "depth": depth}),
        ),
        Command::Blmeasure { precision, .. } => {
            ("blmeasure", serde_json::json!({"precision": precision}))
        }
        Command::W1 { a, b, .. } => (
            "w1",
            serde_json::json!({"a": a.to_string_lossy(), "b": b.to_string_lossy()}),
        ),
        Command::Harmonic { x0, cell, iters, cloud_depth, .. } => (
            "harmonic",
            serde_json::json!({"x0": x0, "cell": cell, "iters": iters, "cloud_depth": cloud_depth}),
        ),
        Command::Capacity { rstart, rcap, cell, iters, cloud_depth, .. } => (
            "capacity",
            serde_json::json!({
                "rstart": rstart, "rcap": rcap, "cell": cell, "iters": iters,
                "cloud_depth": cloud_depth
            }),
        ),
        Command::Convergence { z, mmin, mmax, showcase, .. } => (
            "convergence",
            serde_json::json!({"z": z, "mmin": mmin, "mmax": mmax, "showcase": showcase}),
        ),
        Command::Gapdemo { gate, open_j, gapspec, .. } => {
            let spec_json = match gapspec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    Some(serde_json::from_str::<GapDomainSpec>(&text).map(|s| serde_json::to_value(s))??)
                }
                None => None,
            };
            ("gapdemo", serde_json::json!({"gate": gate, "open_j": open_j, "gapspec": spec_json}))
        }
        Command::Validate { measure, .. } => (
            "validate",
            serde_json::json!({"measure": measure.as_ref().map(|p| p.to_string_lossy())}),
        ),
    };
    Ok(Manifest {
        command: name.to_string(),
        map,
        seed: common.seed,
        tolerances: Tolerances::default(),
        budget_atoms: common.budget_atoms,
        pair_budget: common.pair_budget,
        eps: common.eps,
        samples: common.samples,
        params,
    })
}

fn require_map(manifest: &Manifest) -> Result<RationalMap, Error> {
    manifest
        .map
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("this command needs --preset or --map".into()))?
        .resolve()
}

fn pullback_config(manifest: &Manifest) -> PullbackConfig {
    PullbackConfig {
        atom_budget: manifest.budget_atoms,
        pair_budget: manifest.pair_budget,
        max_depth: 24,
    }
}

fn parse_point(text: &str) -> Result<Complex64, Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidInput(format!("expected \"re,im\", got {text:?}")));
    }
    let re: f64 = parts[0].trim().parse().map_err(|_| Error::InvalidInput("bad re".into()))?;
    let im: f64 = parts[1].trim().parse().map_err(|_| Error::InvalidInput("bad im".into()))?;
    Ok(Complex64::new(re, im))
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) -> Result<(), Error> {
    std::fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn measure_json(mu: &DiscreteMeasure, manifest: &Manifest, meta: serde_json::Value) -> serde_json::Value {
    let file = MeasureFile::from_measure(mu);
    let mut value = serde_json::to_value(&file).expect("measure serializes");
    value["config_hash"] = serde_json::Value::String(manifest.config_hash());
    value["seed"] = serde_json::json!(manifest.seed);
    value["metadata"] = meta;
    value
}

fn read_measure(path: &Path) -> Result<DiscreteMeasure, Error> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().map_or(false, |e| e == "csv") {
        measure_from_csv(&text)
    } else {
        let file: MeasureFile = serde_json::from_str(&text)?;
        file.to_measure()
    }
}

/// Build the walk oracle for a polynomial preset/map.
fn build_oracle(
    map: &RationalMap,
    cell: f64,
    iters: usize,
    cloud_depth: usize,
    seed: u64,
) -> Result<(CompactSetOracle, f64), Error> {
    let m = escape_radius(map)?;
    let cover = filled_julia_outer(map, cell, iters)?;
    let cloud = julia_inner(map, cloud_depth, seed, 1 << 20)?;
    Ok((CompactSetOracle::from_parts(cover, &cloud, m)?, m))
}

fn dispatch(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    match manifest.command.as_str() {
        "render" => cmd_render(manifest, out),
        "blmeasure" => cmd_blmeasure(manifest, out),
        "w1" => cmd_w1(manifest, out),
        "harmonic" => cmd_harmonic(manifest, out),
        "capacity" => cmd_capacity(manifest, out),
        "convergence" => cmd_convergence(manifest, out),
        "gapdemo" => cmd_gapdemo(manifest, out),
        "validate" => cmd_validate(manifest, out),
        other => Err(Error::InvalidInput(format!("unknown command {other:?} in manifest"))),
    }
}

fn cmd_render(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let map = require_map(manifest)?;
    let cell = manifest.params["cell"].as_f64().unwrap_or(1.0 / 256.0);
    let iters = manifest.params["iters"].as_u64().unwrap_or(60) as usize;
    let depth = manifest.params["depth"].as_u64().unwrap_or(12) as usize;

    let cover = filled_julia_outer(&map, cell, iters)?;
    let cloud = julia_inner(&map, depth, manifest.seed, manifest.budget_atoms as usize)?;
    std::fs::write(out.join("outer.pgm"), cover.to_pgm())?;
    let mut cover_json = cover.to_json();
    cover_json["config_hash"] = serde_json::json!(manifest.config_hash());
    cover_json["seed"] = serde_json::json!(manifest.seed);
    write_json(out, "outer.json", &cover_json)?;
    std::fs::write(out.join("inner.csv"), cloud.to_csv())?;

    let dist = hausdorff(&cover.points(), &cloud.points)?;
    // connectedness diagnostic for quadratics: does the finite critical
    // point escape?
    let connectivity = quadratic_connectivity(&map, iters);
    let summary = serde_json::json!({
        "config_hash": manifest.config_hash(),
        "seed": manifest.seed,
        "hausdorff_cover_to_cloud": dist,
        "cell_inflation_note": format!(
            "cell centers carry an implicit inflation of h*sqrt(2)/2 = {:.3e}",
            cover.cell_diagonal() / 2.0
        ),
        "occupied_cells": cover.occupied.len(),
        "cloud_points": cloud.points.len(),
        "connectivity_diagnostic": connectivity,
    });
    write_json(out, "summary.json", &summary)?;
    println!(
        "render: {} occupied cells, {} cloud points, Hausdorff(cover, cloud) = {:.6} (cell diagonal {:.6})",
        cover.occupied.len(),
        cloud.points.len(),
        dist,
        cover.cell_diagonal()
    );
    if let Some(diag) = summary["connectivity_diagnostic"].as_str() {
        println!("render: {diag}");
    }
    Ok(0)
}

fn quadratic_connectivity(map: &RationalMap, budget: usize) -> Option<String> {
    let coeffs = map.poly_coeffs()?;
    if coeffs.len() != 3 {
        return None;
    }
    // finite critical point of a quadratic: -a1 / (2 a2)
    let crit = -coeffs[1] / (2.0 * coeffs[2]);
    let m = escape_radius(map).ok()?;
    let mut z = crit;
    for k in 0..budget {
        if z.norm() > m {
            return Some(format!(
                "critical orbit escapes after {k} iterations: Julia set is Cantor (filled set has empty interior)"
            ));
        }
        z = eval_quadratic(&coeffs, z);
    }
    Some("critical orbit stays bounded at this budget: Julia set appears connected".to_string())
}

fn eval_quadratic(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs[0] + coeffs[1] * z + coeffs[2] * z * z
}

fn cmd_blmeasure(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let map = require_map(manifest)?;
    let precision = manifest.params["precision"].as_u64().unwrap_or(4) as u32;
    let cfg = pullback_config(manifest);
    let (mu, cert) = bl_measure(&map, precision, manifest.seed, &cfg)?;
    let meta = serde_json::json!({
        "precision": precision,
        "depth": cert.depth,
        "consecutive_gap": cert.consecutive_gap,
        "cross_gap": cert.cross_gap,
        "thinned": cert.thinned,
        "atoms": mu.len(),
        // the maximal entropy of a degree-d map is log d; displayed, never estimated
        "max_entropy_label": (map.degree() as f64).ln(),
    });
    write_json(out, "measure.json", &measure_json(&mu, manifest, meta))?;
    println!(
        "blmeasure: depth {} with gaps {:.3e} / {:.3e} (target {:.3e}), {} atoms",
        cert.depth,
        cert.consecutive_gap,
        cert.cross_gap,
        0.25 * 0.5f64.powi(precision as i32),
        mu.len()
    );
    Ok(0)
}

fn cmd_w1(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let a = read_measure(Path::new(manifest.params["a"].as_str().unwrap_or_default()))?;
    let b = read_measure(Path::new(manifest.params["b"].as_str().unwrap_or_default()))?;
    let (dist, plan) = transport::w1(&a, &b, manifest.pair_budget)?;
    let value = serde_json::json!({
        "config_hash": manifest.config_hash(),
        "seed": manifest.seed,
        "w1": dist,
        "plan_support": plan.pairs.len(),
        "a_atoms": a.len(),
        "b_atoms": b.len(),
    });
    write_json(out, "w1.json", &value)?;
    println!("w1 = {dist:.9}");
    Ok(0)
}

fn cmd_harmonic(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let map = require_map(manifest)?;
    let cell = manifest.params["cell"].as_f64().unwrap_or(1.0 / 256.0);
    let iters = manifest.params["iters"].as_u64().unwrap_or(60) as usize;
    let cloud_depth = manifest.params["cloud_depth"].as_u64().unwrap_or(12) as usize;
    let (oracle, m) = build_oracle(&map, cell, iters, cloud_depth, manifest.seed)?;
    let cfg = WalkConfig {
        eps: manifest.eps,
        samples: manifest.samples,
        r_cap: 4.0 * m,
        r_start: 4.0 * m,
        seed: manifest.seed,
        step_cap: 1_000_000,
        snap: true,
    };
    let start = match manifest.params["x0"].as_str() {
        Some(text) => {
            let z = parse_point(text)?;
            WalkStart::Point(z.re, z.im)
        }
        None => WalkStart::Circle(cfg.r_start),
    };
    let (mu, stats) = harmonic_measure(&oracle, start, &cfg)?;
    let meta = serde_json::json!({
        "start": start,
        "eps": cfg.eps,
        "samples": cfg.samples,
        "atoms": mu.len(),
    });
    write_json(out, "measure.json", &measure_json(&mu, manifest, meta))?;
    let stats_json = serde_json::json!({
        "config_hash": manifest.config_hash(),
        "seed": manifest.seed,
        "mean_steps": stats.mean_steps,
        "flagged_count": stats.flagged_count,
        "stderr": stats.stderr,
    });
    write_json(out, "stats.json", &stats_json)?;
    println!(
        "harmonic: {} samples, {} atoms, {} unsnapped, mean steps {:.1}",
        cfg.samples,
        mu.len(),
        stats.flagged_count,
        stats.mean_steps
    );
    Ok(0)
}

fn cmd_capacity(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let map = require_map(manifest)?;
    let cell = manifest.params["cell"].as_f64().unwrap_or(1.0 / 256.0);
    let iters = manifest.params["iters"].as_u64().unwrap_or(60) as usize;
    let cloud_depth = manifest.params["cloud_depth"].as_u64().unwrap_or(12) as usize;
    let (oracle, m) = build_oracle(&map, cell, iters, cloud_depth, manifest.seed)?;
    let cfg = WalkConfig {
        eps: manifest.eps,
        samples: manifest.samples,
        r_cap: manifest.params["rcap"].as_f64().unwrap_or(4.0 * m),
        r_start: manifest.params["rstart"].as_f64().unwrap_or(4.0 * m),
        seed: manifest.seed,
        step_cap: 1_000_000,
        snap: true,
    };
    let est = brolin::walk::capacity(&oracle, &cfg)?;
    let mut value = serde_json::to_value(&est)?;
    value["config_hash"] = serde_json::json!(manifest.config_hash());
    value["seed"] = serde_json::json!(manifest.seed);
    write_json(out, "capacity.json", &value)?;
    println!(
        "capacity = {:.6} +- {:.6} (start-circle probe {:+.2e}, {} unsnapped)",
        est.value, est.stderr, est.bias_probe, est.flagged_count
    );
    Ok(0)
}

fn cmd_convergence(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let map = require_map(manifest)?;
    let z = parse_point(manifest.params["z"].as_str().unwrap_or("1,0"))?;
    let z = SpherePoint::from_complex(z);
    let mmin = manifest.params["mmin"].as_u64().unwrap_or(2) as usize;
    let mmax = manifest.params["mmax"].as_u64().unwrap_or(10) as usize;
    let cfg = pullback_config(manifest);
    let fit = convergence_study(&map, &z, mmin, mmax, manifest.seed, &cfg)?;
    let mut csv = String::from("m,w1\n");
    for (m, w) in fit.depths.iter().zip(&fit.distances) {
        csv.push_str(&format!("{m},{w}\n"));
    }
    std::fs::write(out.join("convergence.csv"), csv)?;
    let value = serde_json::json!({
        "config_hash": manifest.config_hash(),
        "seed": manifest.seed,
        "depths": fit.depths,
        "distances": fit.distances,
        "slope": fit.slope,
        "alpha": fit.alpha,
        "constant": fit.constant,
    });
    write_json(out, "convergence.json", &value)?;
    println!("convergence: fitted rate alpha = {:.4} (constant {:.4})", fit.alpha, fit.constant);
    for (m, w) in fit.depths.iter().zip(&fit.distances) {
        println!("  m = {m:2}   W1 = {w:.6e}");
    }

    if manifest.params["showcase"].as_bool().unwrap_or(false) {
        // depth-(mmax) pullback atoms over the inner cloud
        let res = pullback_measure(&map, &z, mmax, &cfg)?;
        let cloud = julia_inner(&map, 12, manifest.seed, manifest.budget_atoms as usize)?;
        std::fs::write(out.join("showcase_atoms.csv"), {
            let mut s = String::from("re,im\n");
            for a in res.measure.atoms() {
                if let Some(z) = a.to_complex() {
                    s.push_str(&format!("{},{}\n", z.re, z.im));
                }
            }
            s
        })?;
        std::fs::write(out.join("showcase.pgm"), overlay_pgm(&cloud.points, res.measure.atoms()))?;
    }
    Ok(0)
}

/// Gray overlay: cloud in mid-gray, measure atoms in black, 512x512.
fn overlay_pgm(cloud: &[SpherePoint], atoms: &[SpherePoint]) -> Vec<u8> {
    let n = 512usize;
    let all: Vec<Complex64> = cloud.iter().chain(atoms.iter()).filter_map(|p| p.to_complex()).collect();
    let extent = all.iter().map(|z| z.norm()).fold(1.0, f64::max) * 1.1;
    let mut img = vec![255u8; n * n];
    let mut put = |z: Complex64, shade: u8| {
        let col = ((z.re / extent + 1.0) / 2.0 * n as f64) as i64;
        let row = ((1.0 - z.im / extent) / 2.0 * n as f64) as i64;
        if col >= 0 && col < n as i64 && row >= 0 && row < n as i64 {
            let idx = row as usize * n + col as usize;
            img[idx] = img[idx].min(shade);
        }
    };
    for p in cloud {
        if let Some(z) = p.to_complex() {
            put(z, 128);
        }
    }
    for p in atoms {
        if let Some(z) = p.to_complex() {
            put(z, 0);
        }
    }
    let mut data = format!("P5\n{n} {n}\n255\n").into_bytes();
    data.extend_from_slice(&img);
    data
}

fn cmd_gapdemo(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let gate = manifest.params["gate"].as_u64().unwrap_or(1) as u32;
    let open_j = manifest.params["open_j"].as_u64().unwrap_or(1) as u32;

    let run_one = |state: GateState, label: &str| -> Result<serde_json::Value, Error> {
        let spec = match manifest.params["gapspec"].as_object() {
            Some(_) => serde_json::from_value::<GapDomainSpec>(manifest.params["gapspec"].clone())?,
            None => {
                let mut gates = BTreeMap::new();
                gates.insert(gate.to_string(), state);
                GapDomainSpec {
                    n_lo: gate.min(1),
                    n_hi: gate,
                    gates,
                    scale: GapScale { cell: Some(1.0 / 512.0), ..GapScale::default() },
                }
            }
        };
        let domain = gap_domain(&spec)?;
        let cfg = WalkConfig {
            eps: manifest.eps,
            samples: manifest.samples,
            r_cap: 4.0 * domain.oracle.bounding_radius,
            r_start: 4.0 * domain.oracle.bounding_radius,
            seed: manifest.seed,
            step_cap: 1_000_000,
            snap: false,
        };
        let mass = gate_mass(&domain, gate, &cfg)?;
        let mut v = serde_json::to_value(&mass)?;
        v["state"] = serde_json::json!(label);
        v["config_hash"] = serde_json::json!(manifest.config_hash());
        v["seed"] = serde_json::json!(manifest.seed);
        Ok(v)
    };

    if manifest.params["gapspec"].is_object() {
        let v = run_one(GateState::Blocked, "from-spec")?;
        write_json(out, "gate_mass.json", &v)?;
        println!("gapdemo: gate {} mass {}", gate, v["estimate"]);
        return Ok(0);
    }

    let blocked = run_one(GateState::Blocked, "blocked")?;
    let open = run_one(GateState::Open { open: open_j }, "open")?;
    write_json(out, "gate_blocked.json", &blocked)?;
    write_json(out, "gate_open.json", &open)?;
    let ratio = open["estimate"].as_f64().unwrap_or(0.0)
        / blocked["estimate"].as_f64().unwrap_or(0.0).max(1e-12);
    let summary = serde_json::json!({
        "config_hash": manifest.config_hash(),
        "seed": manifest.seed,
        "gate": gate,
        "open_estimate": open["estimate"],
        "blocked_estimate": blocked["estimate"],
        "ratio": ratio,
        "dichotomy": ratio >= 10.0,
    });
    write_json(out, "summary.json", &summary)?;
    println!(
        "gapdemo: open {} vs blocked {} (ratio {:.1})",
        open["estimate"], blocked["estimate"], ratio
    );
    Ok(0)
}

struct CheckReport {
    checks: Vec<(String, bool, String)>,
}

impl CheckReport {
    fn new() -> Self {
        CheckReport { checks: Vec::new() }
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push((name.to_string(), pass, detail));
    }

    fn all_pass(&self) -> bool {
        self.checks.iter().all(|(_, p, _)| *p)
    }
}

fn cmd_validate(manifest: &Manifest, out: &Path) -> Result<i32, Error> {
    let mut report = CheckReport::new();

    if let Some(path) = manifest.params["measure"].as_str() {
        // raw file invariants, before any normalization
        let text = std::fs::read_to_string(path)?;
        let parsed: Result<MeasureFile, _> = serde_json::from_str(&text);
        match parsed {
            Ok(file) => {
                let total: f64 = file.weights.iter().sum();
                report.push(
                    "measure_file_weights",
                    (total - 1.0).abs() <= 1e-9 && file.weights.iter().all(|w| *w >= 0.0),
                    format!("sum = {total}"),
                );
                report.push(
                    "measure_file_lengths",
                    file.atoms.len() == file.weights.len(),
                    format!("{} atoms, {} weights", file.atoms.len(), file.weights.len()),
                );
            }
            Err(e) => report.push("measure_file_parse", false, e.to_string()),
        }
    } else {
        validate_suites(manifest, &mut report)?;
    }

    let value = serde_json::json!({
        "config_hash": manifest.config_hash(),
        "seed": manifest.seed,
        "checks": report
            .checks
            .iter()
            .map(|(name, pass, detail)| serde_json::json!({"check": name, "pass": pass, "detail": detail}))
            .collect::<Vec<_>>(),
        "pass": report.all_pass(),
    });
    write_json(out, "validate.json", &value)?;
    for (name, pass, detail) in &report.checks {
        println!("{} {name}: {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    Ok(if report.all_pass() { 0 } else { 4 })
}

fn validate_suites(manifest: &Manifest, report: &mut CheckReport) -> Result<(), Error> {
    let map = require_map(manifest)?;
    let seed = manifest.seed;
    let mut rng = brolin::rng::stream(seed, brolin::rng::StreamKind::BasePoint, 99);

    // spherical metric axioms
    {
        let mut worst = 0.0f64;
        let mut ok = true;
        for _ in 0..20_000 {
            let a = SpherePoint::from_re_im(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let b = SpherePoint::from_re_im(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let c = SpherePoint::from_re_im(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let dab = sph_dist(&a, &b);
            ok &= dab == sph_dist(&b, &a);
            ok &= dab <= std::f64::consts::PI + 1e-15;
            let defect = sph_dist(&a, &c) - dab - sph_dist(&b, &c);
            worst = worst.max(defect);
        }
        report.push("sph_metric_axioms", ok && worst <= 4.0 * f64::EPSILON, format!("triangle defect {worst:.2e}"));
    }

    // W1 metric axioms + plan feasibility + dual bound on random measures
    {
        let family = brolin::measure::enumerate_family(24);
        let mut ok_metric = true;
        let mut ok_plan = true;
        let mut ok_dual = true;
        for _ in 0..10 {
            let random_measure = |rng: &mut rand_chacha::ChaCha8Rng| {
                let n = rng.gen_range(2..6);
                let atoms: Vec<SpherePoint> = (0..n)
                    .map(|_| SpherePoint::from_re_im(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                    .collect();
                let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
                DiscreteMeasure::new(atoms, weights).unwrap()
            };
            let a = random_measure(&mut rng);
            let b = random_measure(&mut rng);
            let c = random_measure(&mut rng);
            let (dab, plan) = transport::w1(&a, &b, manifest.pair_budget)?;
            let (dba, _) = transport::w1(&b, &a, manifest.pair_budget)?;
            let (dac, _) = transport::w1(&a, &c, manifest.pair_budget)?;
            let (dbc, _) = transport::w1(&b, &c, manifest.pair_budget)?;
            ok_metric &= (dab - dba).abs() <= 1e-9 && dac <= dab + dbc + 1e-9;
            let mut row = vec![0.0; a.len()];
            let mut col = vec![0.0; b.len()];
            for &(i, j, f) in &plan.pairs {
                row[i as usize] += f;
                col[j as usize] += f;
            }
            ok_plan &= row.iter().zip(a.weights()).all(|(x, w)| (x - w).abs() <= 1e-12)
                && col.iter().zip(b.weights()).all(|(x, w)| (x - w).abs() <= 1e-12);
            ok_dual &= brolin::measure::w1_dual_lb(&a, &b, &family, 1.0) <= dab + 1e-12;
        }
        report.push("w1_metric_axioms", ok_metric, "symmetry/triangle at 1e-9".into());
        report.push("plan_feasibility", ok_plan, "marginals at 1e-12".into());
        report.push("w1_dual_bound", ok_dual, "dual lower bound never exceeds W1".into());
    }

    // bump Lipschitz certification
    {
        let family = brolin::measure::enumerate_family(16);
        let mut ok = true;
        for phi in &family {
            for _ in 0..200 {
                let x = SpherePoint::from_re_im(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let y = SpherePoint::from_re_im(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                ok &= (phi.eval(&x) - phi.eval(&y)).abs() <= sph_dist(&x, &y) / phi.margin + 1e-12;
            }
        }
        report.push("bump_lipschitz", ok, "|phi(x)-phi(y)| <= d(x,y)/margin".into());
    }

    // pullback structure + defect decay
    {
        let cfg = pullback_config(manifest);
        let z = SpherePoint::from_re_im(1.0, 0.0);
        if brolin::pullback::exceptional_check(&map, &z)? {
            let deep = pullback_measure(&map, &z, 5, &cfg)?;
            let shallow = pullback_measure(&map, &z, 4, &cfg)?;
            let pushed = deep.measure.push_forward(|p| map.eval(p))?;
            let (gap, _) = transport::w1(&pushed, &shallow.measure, manifest.pair_budget)?;
            report.push("pullback_pushforward", gap <= 1e-8, format!("W1 = {gap:.2e}"));
            let d3 = invariance_defect(&map, &pullback_measure(&map, &z, 3, &cfg)?.measure, 32)?;
            let d6 = invariance_defect(&map, &pullback_measure(&map, &z, 6, &cfg)?.measure, 32)?;
            report.push("invariance_defect_decay", d6 < d3, format!("{d3:.3e} -> {d6:.3e}"));
        }
    }

    // walk suites need a polynomial map
    if map.is_polynomial() {
        let (oracle, _m) = build_oracle(&map, 1.0 / 128.0, 40, 10, seed)?;
        let cfg = WalkConfig {
            eps: manifest.eps,
            samples: 0,
            r_cap: 4.0 * oracle.bounding_radius,
            r_start: 4.0 * oracle.bounding_radius,
            seed,
            step_cap: 1_000_000,
            snap: true,
        };
        let mut in_band = true;
        let start = Complex64::new(oracle.bounding_radius + 1.0, 0.0);
        for i in 0..2000u64 {
            let s = wos_sample(&oracle, start, &cfg, i)?;
            in_band &= s.dist_at_stop > 0.5 * cfg.eps && s.dist_at_stop < cfg.eps;
        }
        report.push("stopping_band", in_band, "2000 walks inside (eps/2, eps)".into());

        let mut sandwich = true;
        for _ in 0..20_000 {
            let x = Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            sandwich &= oracle.dist_lower(x) <= oracle.dist_upper(x) + 1e-12;
        }
        report.push("oracle_sandwich", sandwich, "dist_lower <= dist_upper".into());

        let index = CoverIndex::build(&oracle.cover);
        let mut contained = true;
        for p in &oracle.cloud {
            contained &= oracle.cover.distance_to_cover(*p, &index) <= oracle.cover.cell_diagonal();
        }
        report.push("sandwich_inner_outer", contained, "cloud inside cover + one diagonal".into());
    }

    Ok(())
}
