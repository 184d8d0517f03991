//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use shadowpose_cli::config::RunConfig;
use shadowpose_core::bingham::{
    birdal_v, entropy, log_unnormalized_density, mode, normalization, sample, BinghamLossKind, SeedLoss,
    DEFAULT_QUADRATURE_ORDER,
};
use shadowpose_core::descriptors::{ppf, shadow_of, sipf, sipf_stack, sippf};
use shadowpose_core::fixtures::{circle_configuration, generic_rotation, random_oriented_cloud};
use shadowpose_core::geometry::{apply_rotation, knn_graph, random_rotation, random_unit_quaternion};
use shadowpose_core::lrf::{build_all_lrfs, input_descriptor};
use shadowpose_core::riattn::{
    descriptor_stacks, layer_backward, layer_forward, make_wingtip_dataset, mirror_rotation, prepare_dataset, total_loss,
    EpochMetrics,
};
use shadowpose_core::{BinghamParams, BinghamSeed, DescriptorMask, LrfMode, PointCloud, RiAttnLayer, Rotation3, Vec3};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn within(budget: Duration, started: Instant) -> Result<String, String> {
    let t = started.elapsed();
    if t < budget {
        Ok(format!("{:.1} s (< {} s)", t.as_secs_f64(), budget.as_secs()))
    } else {
        Err(format!("took {:.1} s (budget {} s)", t.as_secs_f64(), budget.as_secs()))
    }
}

fn features_of(cloud: &PointCloud, frames: &[shadowpose_core::LocalFrame]) -> DMatrix<f64> {
    let d = input_descriptor(cloud, frames).unwrap();
    DMatrix::from_fn(d.len(), 3, |i, c| d[i].to_array()[c])
}

fn c1_rotation_invariance() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut sipf_dev, mut layer_dev) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let cloud = random_oriented_cloud(&mut rng, 24).unwrap();
        let graph = knn_graph(&cloud, 6).unwrap();
        let frames = build_all_lrfs(&cloud, &graph, LrfMode::Normal).unwrap();
        let shadow = shadow_of(&cloud, &frames, &generic_rotation(&mut rng, 0.3));
        let layer = RiAttnLayer::random(3, 5, 6, &mut rng).unwrap();
        let r = random_rotation(&mut rng);
        let cloud_r = apply_rotation(&cloud, &r);
        let frames_r: Vec<_> = frames.iter().map(|f| f.rotated(&r)).collect();
        let shadow_r = shadow.rotated(&r);
        for i in 0..cloud.len() {
            let a = sipf_stack(&cloud, &frames, &graph, &shadow, i).unwrap();
            let b = sipf_stack(&cloud_r, &frames_r, &graph, &shadow_r, i).unwrap();
            for (x, y) in a.iter().zip(&b) {
                sipf_dev = sipf_dev.max(max_diff(&x.to_array(), &y.to_array()));
            }
        }
        let s = descriptor_stacks(&cloud, &frames, &graph, &shadow, DescriptorMask::Sipf).unwrap();
        let s_r = descriptor_stacks(&cloud_r, &frames_r, &graph, &shadow_r, DescriptorMask::Sipf).unwrap();
        let (out, _) = layer_forward(&s, &graph, &features_of(&cloud, &frames), &layer).unwrap();
        let (out_r, _) = layer_forward(&s_r, &graph, &features_of(&cloud_r, &frames_r), &layer).unwrap();
        layer_dev = layer_dev.max((out - out_r).abs().max());
    }
    let time = within(Duration::from_secs(30), started)?;
    let msg = format!("1000 instances, SiPF dev {sipf_dev:.2e} (< 1e-9), layer dev {layer_dev:.2e} (< 1e-8), {time}");
    if sipf_dev < 1e-9 && layer_dev < 1e-8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c2_circle_ambiguity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let (mut ppf_dev, mut min_sep) = (0.0f64, f64::INFINITY);
    for angle in [0.3, 0.9, 1.7, 2.6, PI] {
        let c = circle_configuration(Vec3::new(0.3, -0.2, 0.4), angle).map_err(|e| e.to_string())?;
        let a = ppf(&c.p_r, &c.frame_r, &c.p_a, &c.frame_a).unwrap();
        let b = ppf(&c.p_r, &c.frame_r, &c.p_b, &c.frame_b).unwrap();
        ppf_dev = ppf_dev.max(max_diff(&a.0, &b.0));
        let r_g = generic_rotation(&mut rng, 0.5);
        let (s_p, s_f) = (r_g.apply(&c.p_r), c.frame_r.rotated(&r_g));
        let da = sipf(&c.p_r, &c.frame_r, &c.p_a, &c.frame_a, &s_p, &s_f).unwrap();
        let db = sipf(&c.p_r, &c.frame_r, &c.p_b, &c.frame_b, &s_p, &s_f).unwrap();
        min_sep = min_sep.min(max_diff(&da.to_array(), &db.to_array()));
    }
    let msg = format!("PPF4 dev {ppf_dev:.2e} (< 1e-12), min SiPF separation {min_sep:.3} (> 1e-3)");
    if ppf_dev < 1e-12 && min_sep > 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c3_degeneracy() -> Check {
    let c = circle_configuration(Vec3::new(0.0, 0.0, 1.0), 1.1).map_err(|e| e.to_string())?;
    let r_g = Rotation3::from_axis_angle(&Vec3::x(), PI).unwrap();
    let (s_p, s_f) = (r_g.apply(&c.p_r), c.frame_r.rotated(&r_g));
    let a = sippf(&c.p_r, &c.frame_r, &c.p_a, &c.frame_a, &s_p, &s_f).unwrap();
    let b = sippf(&c.p_r, &c.frame_r, &c.p_b, &c.frame_b, &s_p, &s_f).unwrap();
    let b1 = max_diff(&a.0, &b.0);

    let ds = make_wingtip_dataset(3, 96, 0.0, 1003).map_err(|e| e.to_string())?;
    let (mut b2, mut compared, mut skipped) = (0.0f64, 0usize, 0usize);
    for c in prepare_dataset(&ds, 10).map_err(|e| e.to_string())? {
        let shadow = shadow_of(&c.cloud, &c.frames, &mirror_rotation());
        let half = c.labels.len() / 2;
        for i in 0..half {
            let left = sipf_stack(&c.cloud, &c.frames, &c.graph, &shadow, i);
            let right = sipf_stack(&c.cloud, &c.frames, &c.graph, &shadow, i + half);
            match (left, right) {
                (Ok(l), Ok(r)) => {
                    compared += 1;
                    for (x, y) in l.iter().zip(&r) {
                        b2 = b2.max(max_diff(&x.to_array(), &y.to_array()));
                    }
                }
                _ => skipped += 1,
            }
        }
    }
    let msg = format!(
        "B.1 SiPPF separation {b1:.2e} (< 1e-6), B.2 mirrored stack dev {b2:.2e} (< 1e-9) over {compared} pairs ({skipped} skipped: partner is a neighbour and coincides with the shadow)"
    );
    if b1 < 1e-6 && b2 < 1e-9 && compared > 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn read_metrics(path: &Path) -> Vec<EpochMetrics> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn c4_wingtip() -> Check {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let run = Command::new(env!("CARGO_BIN_EXE_shadowpose"))
        .args(["demo-wingtip", "--seed", "0", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if !run.status.success() {
        return Err(format!("demo-wingtip failed: {}", String::from_utf8_lossy(&run.stderr)));
    }
    let time = within(Duration::from_secs(600), started)?;
    let ppf = read_metrics(&out.join("ppf_metrics.ndjson"));
    let full = read_metrics(&out.join("sipf_metrics.ndjson"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let ppf_max = ppf.iter().map(|m| m.accuracy).fold(0.0, f64::max);
    let reached = full.iter().find(|m| m.accuracy >= 0.95).map(|m| m.epoch + 1);
    let final_acc = full.last().map_or(0.0, |m| m.accuracy);
    let confirmed = summary["collapse_confirmed"].as_bool() == Some(true);
    let msg = format!(
        "{} epochs, PPF-only max acc {ppf_max:.3} (<= 0.60), SiPF >= 0.95 at epoch {} (final {final_acc:.3}), collapse_confirmed {confirmed}, {time}",
        full.len(),
        reached.map_or("never".into(), |e| e.to_string()),
    );
    if full.len() <= 200 && ppf_max <= 0.60 && reached.is_some() && confirmed {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn params(z1: [f64; 4], lambda: [f64; 3]) -> BinghamParams {
    BinghamParams::new(birdal_v(z1).unwrap(), lambda).unwrap()
}

fn c5_sampler() -> Check {
    let started = Instant::now();
    let p = params([0.3, 0.5, -0.7, 0.4], [-10.0, -5.0, -2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let qs = sample(&p, &mut rng, 100_000).map_err(|e| e.to_string())?;
    let s = qs.iter().fold(Matrix4::zeros(), |acc, q| acc + q.to_vector() * q.to_vector().transpose()) / qs.len() as f64;
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let worst = order
        .iter()
        .enumerate()
        .map(|(col, &e)| eig.eigenvectors.column(e).dot(&p.v().column(col)).abs().min(1.0).acos().to_degrees())
        .fold(0.0, f64::max);

    let conc = params([0.6, -0.2, 0.1, 0.77], [-200.0, -200.0, -200.0]);
    let m = mode(&conc).quaternion;
    let qs = sample(&conc, &mut rng, 100_000).map_err(|e| e.to_string())?;
    let inside = qs.iter().filter(|q| q.dot(&m).abs().min(1.0).acos() <= 0.2).count() as f64 / qs.len() as f64;
    let time = within(Duration::from_secs(60), started)?;
    let msg = format!("worst eigenvector angle {worst:.3}° (< 2°), containment {:.2}% (>= 99%), {time}", 100.0 * inside);
    if worst < 2.0 && inside >= 0.99 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_entropy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, lambda) in [("diffuse", [-1.0, -0.5, -0.2]), ("moderate", [-10.0, -5.0, -2.0]), ("concentrated", [-100.0, -100.0, -100.0])] {
        let p = params([0.1, 0.9, -0.3, 0.2], lambda);
        let log_f = normalization(&p, DEFAULT_QUADRATURE_ORDER).map_err(|e| e.to_string())?.f.ln();
        let qs = sample(&p, &mut rng, 100_000).map_err(|e| e.to_string())?;
        let mc = qs.iter().map(|q| log_f - log_unnormalized_density(q, &p)).sum::<f64>() / qs.len() as f64;
        let h = entropy(&p, DEFAULT_QUADRATURE_ORDER).map_err(|e| e.to_string())?;
        worst = worst.max((h - mc).abs());
        parts.push(format!("{name} {:.4}", (h - mc).abs()));
    }
    let uniform = entropy(&params([1.0, 0.0, 0.0, 0.0], [-3e-9, -2e-9, -1e-9]), DEFAULT_QUADRATURE_ORDER).unwrap();
    let u_dev = (uniform - (2.0 * PI * PI).ln()).abs();
    let msg = format!("|h - MC| {} (< 0.02), uniform limit dev {u_dev:.2e} (< 1e-3)", parts.join(", "));
    if worst < 0.02 && u_dev < 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

#[derive(Default)]
struct FdTally {
    checked: usize,
    worst_rel: f64,
    /// Worst absolute error among partials smaller than `1e-6`, where relative error is meaningless.
    worst_tiny_abs: f64,
}

impl FdTally {
    fn add(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        let scale = analytic.abs().max(numeric.abs());
        let err = (analytic - numeric).abs();
        if scale > 1e-6 {
            self.worst_rel = self.worst_rel.max(err / scale);
        } else {
            self.worst_tiny_abs = self.worst_tiny_abs.max(err);
        }
    }
}

fn central(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-5;
    let mut y = x.to_vec();
    y[i] = x[i] + h;
    let up = f(&y);
    y[i] = x[i] - h;
    (up - f(&y)) / (2.0 * h)
}

fn c7_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let mut tally = FdTally::default();
    for _ in 0..5 {
        let cloud = random_oriented_cloud(&mut rng, 8).unwrap();
        let graph = knn_graph(&cloud, 3).unwrap();
        let frames = build_all_lrfs(&cloud, &graph, LrfMode::Normal).unwrap();
        let shadow = shadow_of(&cloud, &frames, &generic_rotation(&mut rng, 0.3));
        let stacks = descriptor_stacks(&cloud, &frames, &graph, &shadow, DescriptorMask::Sipf).unwrap();
        let layer = RiAttnLayer::random(4, 4, 5, &mut rng).unwrap();
        let mut gauss = |r, c| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let x = gauss(8, 4);
        let probe = gauss(8, 4);
        let (_, acts) = layer_forward(&stacks, &graph, &x, &layer).unwrap();
        let (grad, d_x) = layer_backward(&layer, &acts, &graph, &probe).unwrap();
        let flat = layer.to_flat();
        let analytic = grad.to_flat();
        let mut f = |p: &[f64]| {
            let mut l = layer.clone();
            l.set_flat(p).unwrap();
            layer_forward(&stacks, &graph, &x, &l).unwrap().0.component_mul(&probe).sum()
        };
        for i in 0..flat.len() {
            tally.add(analytic[i], central(&mut f, &flat, i));
        }
        let x0 = x.as_slice().to_vec();
        let mut g = |v: &[f64]| layer_forward(&stacks, &graph, &DMatrix::from_column_slice(8, 4, v), &layer).unwrap().0.component_mul(&probe).sum();
        for i in 0..x0.len() {
            tally.add(d_x.as_slice()[i], central(&mut g, &x0, i));
        }
        let seed = BinghamSeed::random(&mut rng);
        let q = random_unit_quaternion(&mut rng);
        for kind in [BinghamLossKind::Entropy, BinghamLossKind::NllMode] {
            let loss = SeedLoss::evaluate(&seed, kind, &q, DEFAULT_QUADRATURE_ORDER).unwrap();
            let z0: Vec<f64> = seed.z1.iter().chain(&seed.z2).copied().collect();
            let analytic: Vec<f64> = loss.grad_z1.iter().chain(&loss.grad_z2).copied().collect();
            let mut h = |z: &[f64]| {
                let s = BinghamSeed::new([z[0], z[1], z[2], z[3]], [z[4], z[5], z[6]]).unwrap();
                SeedLoss::evaluate(&s, kind, &q, DEFAULT_QUADRATURE_ORDER).unwrap().value
            };
            for i in 0..7 {
                tally.add(analytic[i], central(&mut h, &z0, i));
            }
        }
    }
    let msg = format!(
        "{} partials (layer tensors, features, seed), worst rel error {:.2e} (< 1e-4), worst abs error on near-zero partials {:.2e} (< 1e-7)",
        tally.checked, tally.worst_rel, tally.worst_tiny_abs
    );
    if tally.worst_rel < 1e-4 && tally.worst_tiny_abs < 1e-7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_loss_identity() -> Check {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        for j in 0..=40 {
            let (t, delta) = (10.0 * i as f64 / 200.0, 2.0 * j as f64 / 40.0);
            let excess = (total_loss(t, 0.1 * t, delta) - t).abs() - delta * 1e-12;
            worst = worst.max(excess);
        }
    }
    let default = RunConfig::load(None).map_err(|e| e.0)?.delta;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, r#"{"seed": 3}"#).unwrap();
    let from_file = RunConfig::load(Some(&path)).map_err(|e| e.0)?.delta;
    let msg = format!("worst excess over smoothing {worst:.1e} on 201x41 grid, default delta {default}, delta from config file {from_file}");
    if worst <= 1e-15 && default == 0.8 && from_file == 0.8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cli_output(args: &[&str], files: &[&Path]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_shadowpose")).args(args).output().map_err(|e| e.to_string())?;
    let mut bytes = o.stdout;
    bytes.extend(o.status.code().unwrap_or(-1).to_le_bytes());
    for f in files {
        bytes.extend(std::fs::read(f).map_err(|e| format!("{}: {e}", f.display()))?);
    }
    Ok(bytes)
}

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut rng = ChaCha8Rng::seed_from_u64(1009);
    let cloud = random_oriented_cloud(&mut rng, 64).unwrap();
    let text: String = cloud
        .points()
        .iter()
        .zip(cloud.normals().unwrap())
        .map(|(p, n)| format!("{} {} {} {} {} {}\n", p.x, p.y, p.z, n.x, n.y, n.z))
        .collect();
    let input = d.join("cloud.xyz");
    std::fs::write(&input, text).unwrap();
    let cfg = d.join("short.json");
    std::fs::write(&cfg, r#"{"epochs": 3, "seed": 9}"#).unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let (feat, toy, demo) = (d.join("f.csv"), d.join("toy.ndjson"), d.join("demo"));
    let demo_files = ["sipf_metrics.ndjson", "ppf_metrics.ndjson", "summary.json"].map(|f| demo.join(f));
    let cases: Vec<(&str, Vec<String>, Vec<&Path>)> = vec![
        ("features", vec!["features".into(), "--input".into(), s(&input), "--k".into(), "8".into(), "--seed".into(), "4".into(), "--out".into(), s(&feat)], vec![&feat]),
        ("verify-invariance", vec!["verify-invariance".into(), "--input".into(), s(&input), "--trials".into(), "10".into(), "--seed".into(), "4".into()], vec![]),
        ("bingham sample", vec!["bingham".into(), "sample".into(), "--n".into(), "500".into(), "--seed".into(), "4".into()], vec![]),
        ("bingham entropy", vec!["bingham".into(), "entropy".into(), "--seed".into(), "4".into()], vec![]),
        ("bingham mode", vec!["bingham".into(), "mode".into(), "--seed".into(), "4".into()], vec![]),
        ("train-toy", vec!["train-toy".into(), "--config".into(), s(&cfg), "--out".into(), s(&toy)], vec![&toy]),
        ("demo-wingtip", vec!["demo-wingtip".into(), "--config".into(), s(&cfg), "--out".into(), s(&demo)], demo_files.iter().map(|p| p.as_path()).collect()),
    ];
    let mut differing = Vec::new();
    for (name, args, files) in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = cli_output(&args, files)?;
        let b = cli_output(&args, files)?;
        if a != b {
            differing.push(*name);
        }
    }
    if differing.is_empty() {
        Ok(format!("{} commands byte-identical across repeated runs", cases.len()))
    } else {
        Err(format!("outputs differ for {}", differing.join(", ")))
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("rotation invariance", c1_rotation_invariance),
        ("PPF circle ambiguity", c2_circle_ambiguity),
        ("degeneracy regressions", c3_degeneracy),
        ("wing-tip collapse/rescue", c4_wingtip),
        ("Bingham sampler statistics", c5_sampler),
        ("entropy formula", c6_entropy),
        ("gradient correctness", c7_gradients),
        ("loss identity", c8_loss_identity),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
