use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use shadowpose_core::bingham::{self, BinghamSeed};
use shadowpose_core::descriptors::{shadow_of, sipf, ShadowCloud};
use shadowpose_core::geometry::{apply_rotation, knn_graph, random_rotation, NeighborGraph, Rotation3, UnitQuaternion};
use shadowpose_core::lrf::{try_build_all_lrfs, LocalFrame, LrfMode};
use shadowpose_core::riattn::{metrics_to_ndjson, run_wingtip, TrainOutput};
use shadowpose_core::{DescriptorMask, PointCloud};

use crate::args::{BinghamArgs, BinghamOp, CommonArgs, DemoArgs, FeaturesArgs, TrainArgs, VerifyArgs};
use crate::config::RunConfig;
use crate::io::{fmt_f64, read_cloud, write_atomic};
use crate::CliError;

pub const INVARIANCE_TOL: f64 = 1e-8;
pub const COLLAPSE_MAX_ACCURACY: f64 = 0.6;
pub const RESCUE_MIN_ACCURACY: f64 = 0.95;

pub const FEATURES_HEADER: &str = "ref_index,nbr_index,ppf1,ppf2,ppf3,ppf4,sippf1,sippf2,sippf3,sippf4";

fn resolve(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref()).map_err(CliError::usage)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(m) = common.mask {
        cfg.descriptor_mask = m;
    }
    cfg.validate().map_err(CliError::usage)?;
    Ok(cfg)
}

fn parse_list<const N: usize>(text: &str, what: &str) -> Result<[f64; N], CliError> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("{what}: expected {N} comma-separated numbers, got {text:?}")))?;
    vals.try_into()
        .map_err(|_| CliError::usage(format!("{what}: expected {N} comma-separated numbers, got {text:?}")))
}

fn parse_rotation(text: &str) -> Result<Rotation3, CliError> {
    let q = parse_list::<4>(text, "--rotation")?;
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(CliError::usage("--rotation must be a nonzero quaternion"));
    }
    let q = UnitQuaternion::from_vector(q.map(|c| c / n))?;
    Ok(q.to_rotation())
}

/// Shadow rotation: explicit, or the mode of a random Bingham seed drawn from `seed`.
fn shadow_rotation(explicit: Option<&str>, seed: u64) -> Result<Rotation3, CliError> {
    let q = match explicit {
        Some(text) => parse_rotation(text)?.to_quat(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bingham::mode(&BinghamSeed::random(&mut rng).params()?).quaternion
        }
    };
    if bingham::rotation_is_identity(&q) {
        return Err(CliError::usage("shadow rotation is the identity; every shadow would coincide with its point"));
    }
    Ok(q.to_rotation())
}

/// Graph, frames (with per-point validity) and the placeholder-filled frame list.
struct Geometry {
    graph: NeighborGraph,
    valid: Vec<bool>,
    frames: Vec<LocalFrame>,
}

fn geometry(cloud: &PointCloud, k: usize) -> Result<Geometry, CliError> {
    if k >= cloud.len() {
        return Err(CliError::usage(format!("k = {k} needs more than {} points", cloud.len())));
    }
    let graph = knn_graph(cloud, k)?;
    let mode = if cloud.has_normals() { LrfMode::Normal } else { LrfMode::Barycenter };
    let built = try_build_all_lrfs(cloud, &graph, mode)?;
    let fallback = built.iter().find_map(|f| f.as_ref().ok().copied());
    let Some(fallback) = fallback else {
        return Err(CliError::usage("no point has a valid local frame"));
    };
    let valid = built.iter().map(Result::is_ok).collect();
    let frames = built.into_iter().map(|f| f.unwrap_or(fallback)).collect();
    Ok(Geometry { graph, valid, frames })
}

type Row = (usize, usize, [f64; 8]);

#[derive(Debug, Default)]
struct Skipped {
    degenerate_frame: usize,
    coincident: usize,
}

/// Masked descriptor rows for every edge whose endpoints both have frames and whose
/// point pairs are distinct, plus counts of the edges left out.
fn descriptor_rows(cloud: &PointCloud, geo: &Geometry, shadow: &ShadowCloud, mask: DescriptorMask) -> (Vec<Row>, Skipped) {
    let mut rows = Vec::new();
    let mut skipped = Skipped::default();
    for r in 0..cloud.len() {
        for &j in geo.graph.row(r) {
            if !(geo.valid[r] && geo.valid[j]) {
                skipped.degenerate_frame += 1;
                continue;
            }
            match sipf(&cloud.point(r), &geo.frames[r], &cloud.point(j), &geo.frames[j], &shadow.points[r], &shadow.frames[r]) {
                Ok(d) => rows.push((r, j, mask.apply(&d))),
                Err(_) => skipped.coincident += 1,
            }
        }
    }
    (rows, skipped)
}

pub fn features(args: &FeaturesArgs) -> Result<(), CliError> {
    let cfg = resolve(&args.common)?;
    let cloud = read_cloud(&args.input).map_err(CliError::usage)?.cloud;
    let r_g = shadow_rotation(args.rotation.as_deref(), cfg.seed)?;
    let geo = geometry(&cloud, cfg.k)?;
    let shadow = shadow_of(&cloud, &geo.frames, &r_g);
    let (rows, skipped) = descriptor_rows(&cloud, &geo, &shadow, cfg.descriptor_mask);
    let mut csv = String::with_capacity(rows.len() * 200);
    csv.push_str(FEATURES_HEADER);
    csv.push('\n');
    for (r, j, d) in &rows {
        write!(csv, "{r},{j}").expect("string write");
        for v in d {
            csv.push(',');
            csv.push_str(&fmt_f64(*v));
        }
        csv.push('\n');
    }
    write_atomic(&args.out, csv.as_bytes())?;
    if skipped.degenerate_frame > 0 {
        let bad: Vec<usize> = (0..cloud.len()).filter(|&i| !geo.valid[i]).collect();
        eprintln!("warning: {} edges omitted; degenerate frames at points {bad:?}", skipped.degenerate_frame);
    }
    if skipped.coincident > 0 {
        eprintln!("warning: {} edges omitted; a point coincides with its neighbour or its shadow", skipped.coincident);
    }
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct InvarianceReport {
    trials: usize,
    edges: usize,
    max_deviation: f64,
    tolerance: f64,
    break_shadow: bool,
    passed: bool,
}

pub fn verify_invariance(args: &VerifyArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let cfg = resolve(&args.common)?;
    let cloud = read_cloud(&args.input).map_err(CliError::usage)?.cloud;
    let r_g = shadow_rotation(args.rotation.as_deref(), cfg.seed)?;
    let geo = geometry(&cloud, cfg.k)?;
    let shadow = shadow_of(&cloud, &geo.frames, &r_g);
    let (base, _) = descriptor_rows(&cloud, &geo, &shadow, cfg.descriptor_mask);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut max_dev: f64 = 0.0;
    for _ in 0..args.trials {
        let r = random_rotation(&mut rng);
        let moved = apply_rotation(&cloud, &r);
        let moved_geo = Geometry {
            graph: geo.graph.clone(),
            valid: geo.valid.clone(),
            frames: geo.frames.iter().map(|f| f.rotated(&r)).collect(),
        };
        let moved_shadow = if args.break_shadow {
            shadow_of(&moved, &moved_geo.frames, &r_g)
        } else {
            shadow.rotated(&r)
        };
        let (rows, _) = descriptor_rows(&moved, &moved_geo, &moved_shadow, cfg.descriptor_mask);
        if rows.len() != base.len() {
            max_dev = f64::INFINITY;
            continue;
        }
        for ((_, _, a), (_, _, b)) in base.iter().zip(&rows) {
            for (x, y) in a.iter().zip(b) {
                max_dev = max_dev.max((x - y).abs());
            }
        }
    }
    let report = InvarianceReport {
        trials: args.trials,
        edges: base.len(),
        max_deviation: max_dev,
        tolerance: INVARIANCE_TOL,
        break_shadow: args.break_shadow,
        passed: max_dev <= INVARIANCE_TOL,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    if let Some(out) = &args.out {
        write_atomic(out, text.as_bytes())?;
    }
    print!("{text}");
    if report.passed {
        Ok(())
    } else {
        Err(CliError::invariance(format!("max deviation {max_dev:e} exceeds {INVARIANCE_TOL:e}")))
    }
}

fn bingham_seed(args: &BinghamArgs, seed: u64) -> Result<BinghamSeed, CliError> {
    match (&args.z1, &args.z2) {
        (Some(z1), Some(z2)) => Ok(BinghamSeed::new(parse_list::<4>(z1, "--z1")?, parse_list::<3>(z2, "--z2")?)?),
        (None, None) => Ok(BinghamSeed::random(&mut ChaCha8Rng::seed_from_u64(seed))),
        _ => Err(CliError::usage("--z1 and --z2 must be given together")),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn bingham(op: &BinghamOp) -> Result<(), CliError> {
    let (args, n) = match op {
        BinghamOp::Sample { args, n } => (args, Some(*n)),
        BinghamOp::Entropy { args } | BinghamOp::Mode { args } => (args, None),
    };
    let mut cfg = RunConfig::load(args.config.as_deref()).map_err(CliError::usage)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let seed = bingham_seed(args, cfg.seed)?;
    let params = seed.params()?;
    let text = match op {
        BinghamOp::Sample { .. } => {
            let n = n.unwrap_or(0);
            if n == 0 {
                return Err(CliError::usage("--n must be at least 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
            let qs = bingham::sample(&params, &mut rng, n)?;
            let mut csv = String::from("w,x,y,z\n");
            for q in qs {
                let a = q.to_array();
                writeln!(csv, "{},{},{},{}", fmt_f64(a[0]), fmt_f64(a[1]), fmt_f64(a[2]), fmt_f64(a[3])).expect("string write");
            }
            csv
        }
        BinghamOp::Entropy { .. } => {
            let norm = bingham::normalization(&params, cfg.quadrature_order)?;
            let h = bingham::entropy(&params, cfg.quadrature_order)?;
            let doc = json!({
                "z1": seed.z1,
                "z2": seed.z2,
                "lambda": params.lambda(),
                "F": norm.f,
                "gradF": norm.grad_f,
                "entropy": h,
                "quadrature_order": cfg.quadrature_order,
            });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
        BinghamOp::Mode { .. } => {
            let m = bingham::mode(&params);
            let doc = json!({
                "quaternion": m.quaternion.to_array(),
                "rotation_matrix": m.quaternion.to_rotation().rows(),
                "is_identity": m.is_identity,
            });
            serde_json::to_string_pretty(&doc).expect("json") + "\n"
        }
    };
    emit(args.out.as_deref(), &text)
}

fn train(cfg: &RunConfig, mask: DescriptorMask) -> Result<TrainOutput, CliError> {
    let mut task = cfg.toy_task();
    task.mask = mask;
    Ok(run_wingtip(&task)?)
}

pub fn demo_wingtip(args: &DemoArgs) -> Result<(), CliError> {
    let cfg = resolve(&args.common)?;
    std::fs::create_dir_all(&args.out)?;
    let full = train(&cfg, DescriptorMask::Sipf)?;
    let ppf = train(&cfg, DescriptorMask::Ppf)?;
    write_atomic(&args.out.join("sipf_metrics.ndjson"), metrics_to_ndjson(&full.metrics).as_bytes())?;
    write_atomic(&args.out.join("ppf_metrics.ndjson"), metrics_to_ndjson(&ppf.metrics).as_bytes())?;
    let sipf_accuracy = full.final_accuracy();
    let ppf_accuracy = ppf.final_accuracy();
    let ppf_max_accuracy = ppf.max_accuracy();
    let mut summary = json!({
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "sipf_accuracy": sipf_accuracy,
        "ppf_accuracy": ppf_accuracy,
        "ppf_max_accuracy": ppf_max_accuracy,
        "collapse_confirmed": ppf_max_accuracy <= COLLAPSE_MAX_ACCURACY && sipf_accuracy >= RESCUE_MIN_ACCURACY,
    });
    let variant = common_variant(&args.common);
    if let Some(mask) = variant {
        let run = train(&cfg, mask)?;
        write_atomic(&args.out.join(format!("{}_metrics.ndjson", mask.name())), metrics_to_ndjson(&run.metrics).as_bytes())?;
        summary["variant_mask"] = json!(mask.name());
        summary["variant_accuracy"] = json!(run.final_accuracy());
    }
    let text = serde_json::to_string_pretty(&summary).expect("json") + "\n";
    write_atomic(&args.out.join("summary.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

/// A `--mask` other than the two baselines adds a third run.
fn common_variant(common: &CommonArgs) -> Option<DescriptorMask> {
    common.mask.filter(|m| !matches!(m, DescriptorMask::Sipf | DescriptorMask::Ppf))
}

pub fn train_toy(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = resolve(&args.common)?;
    let run = train(&cfg, cfg.descriptor_mask)?;
    write_atomic(&args.out, metrics_to_ndjson(&run.metrics).as_bytes())?;
    let summary = json!({
        "mask": cfg.descriptor_mask.name(),
        "epochs": run.metrics.len(),
        "final_accuracy": run.final_accuracy(),
        "max_accuracy": run.max_accuracy(),
        "final_rg_quaternion": run.metrics.last().map(|m| m.rg_quaternion),
    });
    print!("{}", serde_json::to_string_pretty(&summary).expect("json") + "\n");
    Ok(())
}
