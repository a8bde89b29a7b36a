//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use depthsweep::ablation::{run_ablation, Axis};
use depthsweep::config::{ExperimentConfig, ScenePreset};
use depthsweep::cost_volume::{cost_to_probability, CostVolume};
use depthsweep::depth_estimator::{argmax, localmax_depth, probability_entropy};
use depthsweep::geometry::{ego_motion_depth, project, Intrinsics, Pose};
use depthsweep::maps::{DepthKind, DepthMap, Mask, Resolution, ScalarMap};
use depthsweep::metrics::{evaluate, evaluate_values, EvalOptions, MetricReport, MIN_DEPTH};
use depthsweep::pfm;
use depthsweep::photometric::{composite_loss, photometric_error, DepthSet, LossWeights, SourceView};
use depthsweep::pipeline::{run_pipeline, Experiment};
use depthsweep::sampling::{
    inverse_sample, velocity_range, DepthRange, HypothesisGrid, VelocityEstimate, VelocitySource, ScaleFn,
    FRACTION_CEIL, FRACTION_FLOOR,
};
use depthsweep::scene_sim::BACKGROUND_LABEL;
use depthsweep::Error;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_geometry() -> Check {
    let start = Instant::now();
    let k = Intrinsics::centered(320.0, 160, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let point = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0), rng.gen_range(4.0..30.0));
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let t = Vector3::new(side * rng.gen_range(0.2..1.0), rng.gen_range(-0.05..0.05), rng.gen_range(-0.3..0.3));
        let pose = Pose::from_translation(t);
        let p1 = project(&point, &k).unwrap();
        let moved = pose.transform(&point);
        let p2 = project(&moved, &k).unwrap();
        let depth = ego_motion_depth(p1.u, p1.v, p2.u, &k, &pose).unwrap();
        worst = worst.max((depth - moved.z).abs() / moved.z);
    }
    let zero = ego_motion_depth(80.0, 24.0, 90.0, &k, &Pose::identity());
    let forward = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let at_epipole = ego_motion_depth(k.cu, 30.0, k.cu, &k, &forward);
    let epipole_ok = matches!(zero, Err(Error::EpipoleDegenerate { .. }))
        && matches!(at_epipole, Err(Error::EpipoleDegenerate { .. }));
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-6 && epipole_ok && secs < 1.0,
        format!("max rel err {worst:.2e} (< 1e-6), epipole rejected {epipole_ok}, {secs:.3} s (< 1 s)"),
    )
}

fn c2_sampling() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_value, mut worst_spacing): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let range = DepthRange::centered(rng.gen_range(0.5..80.0), rng.gen_range(0.01..0.99)).unwrap();
        let count = rng.gen_range(2..=64);
        let set = inverse_sample(&range, count).unwrap();
        let (lo, hi) = (1.0 / range.d_max, 1.0 / range.d_min);
        let step = (hi - lo) / (count - 1) as f64;
        for (j, &d) in set.depths.iter().enumerate() {
            let expected = 1.0 / ((hi - lo) * j as f64 / (count - 1) as f64 + lo);
            worst_value = worst_value.max((d - expected).abs() / expected);
        }
        for pair in set.depths.windows(2) {
            worst_spacing = worst_spacing.max(((1.0 / pair[1] - 1.0 / pair[0]) - step).abs());
        }
    }
    let v = |v: f64| VelocityEstimate {
        v,
        source: VelocitySource::GroundTruth,
        scale_fn: ScaleFn::Identity,
    };
    let still = velocity_range(10.0, &v(0.0), 0.15).unwrap();
    let fast = velocity_range(10.0, &v(1e12), 0.15).unwrap();
    let clamps = still.fraction == FRACTION_FLOOR && fast.fraction == FRACTION_CEIL;
    ensure(
        worst_value < 1e-12 && worst_spacing < 1e-12 && clamps,
        format!(
            "max rel err {worst_value:.1e}, spacing err {worst_spacing:.1e} (< 1e-12), \
             fraction at v=0 {}, at v=1e12 {}",
            still.fraction, fast.fraction
        ),
    )
}

fn c3_mvs_recovery() -> Check {
    let config = ExperimentConfig::default();
    let baseline = config.speed / config.frame_rate;
    let record = run_pipeline(&config, None).map_err(|e| e.to_string())?;
    let agg = record.aggregate.ok_or("no frame evaluated")?;
    let (prior, fused) = (agg.mono.abs_rel, agg.fused.abs_rel);
    let secs = record.wall_clock.as_secs_f64();
    ensure(
        (0.3..=0.5).contains(&baseline) && fused < 0.5 * prior && fused < 0.05 && secs < 30.0,
        format!(
            "baseline {baseline} m, prior {prior:.4}, fused {fused:.4} (< {:.4} and < 0.05), {secs:.2} s (< 30 s)",
            0.5 * prior
        ),
    )
}

fn c4_velocity_guidance() -> Check {
    let table = run_ablation(&ExperimentConfig::default(), Axis::Strategy).map_err(|e| e.to_string())?;
    let pooled = |s: &str| table.row(s, None).map(|r| r.reports.fused.abs_rel).ok_or(format!("missing {s}"));
    let velocity = pooled("velocity(beta=0.15)")?;
    let mut detail = format!("velocity {velocity:.4}");
    let mut ok = true;
    for s in ["fixed(0.5)", "fixed(0.25)", "cascade(0.5)", "confidence(beta=0.15)"] {
        let other = pooled(s)?;
        ok &= velocity <= other;
        detail += &format!(", {s} {other:.4}");
    }
    let still = table.row("velocity(beta=0.15)", Some(0.0)).ok_or("missing static row")?;
    let gap = (still.reports.fused.abs_rel - still.reports.mono.abs_rel).abs();
    ok &= gap < 1e-3;
    detail += &format!("; static |fused - prior| {gap:.1e} (< 1e-3)");
    let per_speed: Vec<String> = table
        .rows
        .iter()
        .filter(|r| r.speed.is_some() && r.setting.starts_with("velocity(beta=0.15)"))
        .map(|r| format!("{}:{:.4}", r.speed.unwrap(), r.reports.fused.abs_rel))
        .collect();
    detail += &format!("; velocity per speed {}", per_speed.join(" "));
    ensure(ok, detail)
}

fn c5_fusion_rescue() -> Check {
    let mut config = ExperimentConfig::default();
    config.scene = ScenePreset::Fusion;
    let experiment = Experiment::prepare(&config).map_err(|e| e.to_string())?;
    let surfaces = &experiment.scene.surfaces;
    let moving = |l: u32| l != BACKGROUND_LABEL && surfaces[l as usize].is_moving();
    let flat = |l: u32| l != BACKGROUND_LABEL && surfaces[l as usize].texture.is_textureless();
    let (mut hard, mut easy) = (Vec::new(), Vec::new());
    let (mut fused_reports, mut mvs_reports) = (Vec::new(), Vec::new());
    for t in 1..config.frames {
        let f = experiment.process(t).map_err(|e| e.to_string())?;
        for (&l, &u) in f.labels_quarter.iter().zip(&f.uncertainty_quarter.values.data) {
            if moving(l) || flat(l) {
                hard.push(u);
            } else {
                easy.push(u);
            }
        }
        let mask = f.label_mask(moving);
        let opts = config.eval_options();
        fused_reports.push(evaluate(&f.fused, &f.gt, Some(&mask), &opts).map_err(|e| e.to_string())?);
        mvs_reports.push(evaluate(&f.mvs, &f.gt, Some(&mask), &opts).map_err(|e| e.to_string())?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (u_hard, u_easy) = (mean(&hard), mean(&easy));
    let fused = MetricReport::aggregate(&fused_reports).ok_or("no moving pixels")?.abs_rel;
    let mvs = MetricReport::aggregate(&mvs_reports).ok_or("no moving pixels")?.abs_rel;
    ensure(
        !hard.is_empty() && u_hard >= u_easy + 0.2 && fused <= mvs,
        format!(
            "mean U moving+textureless {u_hard:.3} vs static {u_easy:.3} (gap >= 0.2); \
             moving-object abs_rel fused {fused:.4} vs mvs {mvs:.4}"
        ),
    )
}

fn c6_loss_landscape() -> Check {
    let config = ExperimentConfig::default();
    let e = Experiment::prepare(&config).map_err(|e| e.to_string())?;
    let target = &e.frames[1];
    let sources = [
        SourceView {
            image: &e.frames[0].image,
            pose: e.trajectory.relative(1, 0),
        },
        SourceView {
            image: &e.frames[2].image,
            pose: e.trajectory.relative(1, 2),
        },
    ];
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=100 {
        let s = 0.5 + i as f64 * 0.01;
        let depth = DepthMap::new(target.depth_gt.values.map(|d| d * s), Resolution::Full, DepthKind::Fused)
            .map_err(|e| e.to_string())?;
        let set = DepthSet {
            mono: &depth,
            mvs: &depth,
            fused: &depth,
        };
        let loss = composite_loss(&target.image, &sources, set, &e.camera, &LossWeights::default())
            .map_err(|e| e.to_string())?
            .total;
        if loss < best.0 {
            best = (loss, s);
        }
    }
    let img = &target.image;
    let all = Mask::filled(img.width, img.height, true);
    let pe = photometric_error(img, img, &all).map_err(|e| e.to_string())?;
    let zero = pe.values.data.iter().all(|&v| v == 0.0);
    ensure(
        (0.98..=1.02).contains(&best.1) && zero,
        format!("loss minimised at scale {:.2} (within [0.98, 1.02]), pe(a, a) == 0: {zero}", best.1),
    )
}

/// Straightforward reference implementation of the depth metrics.
fn brute_force(pred: &[f64], gt: &[f64], median_scale: bool, cap: f64) -> [f64; 7] {
    let median = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    };
    let scale = if median_scale { median(gt) / median(pred) } else { 1.0 };
    let n = pred.len() as f64;
    let mut out = [0.0; 7];
    let mut sums = [0.0; 4];
    for i in 0..pred.len() {
        let p = (pred[i] * scale).max(MIN_DEPTH).min(cap);
        let g = gt[i].max(MIN_DEPTH).min(cap);
        sums[0] += (g - p).abs() / g;
        sums[1] += (g - p) * (g - p) / g;
        sums[2] += (g - p) * (g - p);
        sums[3] += (g.ln() - p.ln()) * (g.ln() - p.ln());
        let ratio = if g > p { g / p } else { p / g };
        for k in 0..3 {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                out[4 + k] += 1.0 / n;
            }
        }
    }
    out[0] = sums[0] / n;
    out[1] = sums[1] / n;
    out[2] = (sums[2] / n).sqrt();
    out[3] = (sums[3] / n).sqrt();
    out
}

fn c7_metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut invariant = true;
    for i in 0..1000 {
        let n = rng.gen_range(1..40);
        let gt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..120.0)).collect();
        let pred: Vec<f64> = gt.iter().map(|g| g * rng.gen_range(0.5..1.8)).collect();
        let median_scale = i % 2 == 0;
        let cap = if i % 3 == 0 { 200.0 } else { 80.0 };
        let opts = EvalOptions { median_scale, cap };
        let r = evaluate_values(&pred, &gt, &opts).unwrap();
        let got = [r.abs_rel, r.sq_rel, r.rmse, r.rmse_log, r.delta1, r.delta2, r.delta3];
        for (a, b) in got.iter().zip(brute_force(&pred, &gt, median_scale, cap)) {
            worst = worst.max((a - b).abs());
        }
        if median_scale {
            let factor = 2f64.powi(rng.gen_range(-4..=4));
            let scaled: Vec<f64> = pred.iter().map(|p| p * factor).collect();
            invariant &= evaluate_values(&scaled, &gt, &opts).unwrap().abs_rel == r.abs_rel;
        }
    }
    ensure(
        worst < 1e-12 && invariant,
        format!("max |evaluate - oracle| {worst:.1e} (< 1e-12), median-scaling invariance exact: {invariant}"),
    )
}

fn c8_determinism() -> Check {
    let config = ExperimentConfig::default();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(&config, Some(a.path())).map_err(|e| e.to_string())?;
    run_pipeline(&config, Some(b.path())).map_err(|e| e.to_string())?;
    let mut identical = true;
    for name in ["metrics.csv", "summary.json", "frame_001_fused.pfm", "frame_002_uncertainty.pfm"] {
        let x = std::fs::read(a.path().join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(name)).map_err(|e| e.to_string())?;
        identical &= x == y;
    }
    let t1 = run_ablation(&config, Axis::Fusion).and_then(|t| t.to_csv()).map_err(|e| e.to_string())?;
    let t2 = run_ablation(&config, Axis::Fusion).and_then(|t| t.to_csv()).map_err(|e| e.to_string())?;
    identical &= t1 == t2;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = 0;
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..24), rng.gen_range(1..24));
        let data: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1e4f32..1e4f32) as f64).collect();
        let map = ScalarMap::new(w, h, data).unwrap();
        let back = pfm::decode(&pfm::encode(&map).unwrap()).unwrap();
        let same = back.width == w
            && back.height == h
            && back.data.iter().zip(&map.data).all(|(x, y)| x.to_bits() == y.to_bits());
        exact += same as usize;
    }
    ensure(
        identical && exact == 100,
        format!("CSV/JSON/PFM outputs byte-identical: {identical}; PFM round trips bit-exact {exact}/100"),
    )
}

fn c9_probability_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut norm_err, mut entropy_ok, mut window_ok, mut pixels): (f64, bool, bool, usize) = (0.0, true, true, 0);
    for &(count, groups) in &[(2, 1), (5, 4), (16, 16), (48, 8)] {
        let (w, h) = (50, 50);
        let cells = w * h * count;
        let data: Vec<f64> = (0..cells * groups).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let all_invalid: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.05)).collect();
        let valid: Vec<bool> = (0..cells).map(|c| !all_invalid[c / count] && rng.gen_bool(0.8)).collect();
        let data = data
            .chunks(groups)
            .zip(&valid)
            .flat_map(|(g, &v)| g.iter().map(move |&x| if v { x } else { 0.0 }))
            .collect();
        let cost = CostVolume {
            width: w,
            height: h,
            groups,
            count,
            data,
            valid,
        };
        let prob = cost_to_probability(&cost, rng.gen_range(0.02..2.0)).unwrap();
        let ranges = (0..w * h)
            .map(|_| DepthRange::centered(rng.gen_range(1.0..50.0), rng.gen_range(1e-3..0.99)).unwrap())
            .collect();
        let hyp = HypothesisGrid::from_ranges(w, h, ranges, count).unwrap();
        let r = 1.min((count - 1) / 2);
        let depth = localmax_depth(&prob, &hyp, r).unwrap();
        let entropy = probability_entropy(&prob);
        let ln_d = (count as f64).ln();
        for i in 0..w * h {
            let p = &prob.data[i * count..(i + 1) * count];
            norm_err = norm_err.max((p.iter().sum::<f64>() - 1.0).abs());
            let e = entropy.data[i];
            entropy_ok &= (0.0..=ln_d).contains(&e);
            let x = argmax(p);
            let window = &hyp.depths[i * count..(i + 1) * count][x.saturating_sub(r)..=(x + r).min(count - 1)];
            let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = window.iter().copied().fold(0.0, f64::max);
            let d = depth.values.data[i];
            window_ok &= d >= lo * (1.0 - 1e-12) && d <= hi * (1.0 + 1e-12);
            pixels += 1;
        }
    }
    ensure(
        norm_err < 1e-6 && entropy_ok && window_ok && pixels >= 10_000,
        format!(
            "{pixels} pixels: max |sum p - 1| {norm_err:.1e} (< 1e-6), entropy in [0, ln D]: {entropy_ok}, \
             localmax inside window: {window_ok}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("geometry oracle", c1_geometry),
        ("sampling exactness", c2_sampling),
        ("mvs recovery", c3_mvs_recovery),
        ("velocity guidance", c4_velocity_guidance),
        ("fusion rescue", c5_fusion_rescue),
        ("loss landscape", c6_loss_landscape),
        ("metrics oracle", c7_metrics_oracle),
        ("determinism and i/o", c8_determinism),
        ("probability invariants", c9_probability_invariants),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {}. {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
