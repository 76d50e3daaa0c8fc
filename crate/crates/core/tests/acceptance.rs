//! Acceptance run: one PASS/FAIL line per criterion; exits non-zero when any
//! criterion fails. Tolerances and runtime limits are pinned below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use defilter::augment::augment;
use defilter::biometric::{det_curve, eer, fnmr_at_fmr, minmax_normalize, TrialSet};
use defilter::compositor::{coverage_intensity, CoverageClass};
use defilter::face::{FaceRecord, LANDMARK_COUNT};
use defilter::geometry::Point2;
use defilter::inpaint::{
    discriminator_loss, generator_loss, huber_loss, reconstruction_loss, Activation, GatedConv2d, LossWeights,
    SsimWindow,
};
use defilter::pipeline::{run_all, ExperimentConfig, MetricsRow, Profile};
use defilter::schedule::OptimSchedule;
use defilter::segmenter::{mean_iou, train_segnet, SegModel, SegNetConfig, SegSample, SegTrainOptions};
use defilter::{io, quality};
use defilter_nn::gradcheck::{central_difference, max_relative_error};
use defilter_nn::{ConvOptions, ParamStore, Tape, Tensor};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const COVERAGE_TOL: f64 = 1e-9;
const LOSS_TOL: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-3;
const IOU_MIN: f64 = 0.9;
const SEG_MAX_ITERS: u64 = 200;
const GAN_MAX_ITERS: u64 = 5000;
const LIMIT_COVERAGE: Duration = Duration::from_secs(10);
const LIMIT_METRICS: Duration = Duration::from_secs(30);
const LIMIT_SEGMENTER: Duration = Duration::from_secs(5 * 60);
const LIMIT_INPAINT: Duration = Duration::from_secs(60 * 60);
const LIMIT_END_TO_END: Duration = Duration::from_secs(90 * 60);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    under(limit, start.elapsed())
}

fn under(limit: Duration, t: Duration) -> Result<Duration, String> {
    check(t <= limit, format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

// ---------------------------------------------------------------- 1

/// Convex hull by gift wrapping, counter-clockwise in image coordinates
/// viewed with y up.
fn hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let start = *points
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .unwrap();
    let mut out = vec![start];
    let mut cur = start;
    loop {
        let mut next = points[0];
        for &p in points {
            if next == cur {
                next = p;
                continue;
            }
            let c = cross(cur, next, p);
            let d = |q: (f64, f64)| (q.0 - cur.0).powi(2) + (q.1 - cur.1).powi(2);
            if c < 0.0 || (c == 0.0 && d(p) > d(next)) {
                next = p;
            }
        }
        if next == start {
            return out;
        }
        out.push(next);
        cur = next;
    }
}

fn strictly_inside(h: &[(f64, f64)], p: (f64, f64)) -> bool {
    (0..h.len()).all(|i| {
        let (a, b) = (h[i], h[(i + 1) % h.len()]);
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) > 0.0
    })
}

fn luma(p: [u8; 3]) -> i64 {
    (299 * p[0] as i64 + 587 * p[1] as i64 + 114 * p[2] as i64 + 500) / 1000
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let landmarks: Vec<Point2> = (0..LANDMARK_COUNT)
            .map(|_| Point2::new(rng.random_range(2.0..61.0f64).round(), rng.random_range(2.0..61.0f64).round()))
            .collect();
        let a = RgbImage::from_fn(64, 64, |_, _| Rgb(rng.random()));
        let mut b = a.clone();
        for _ in 0..rng.random_range(0..400) {
            let (x, y) = (rng.random_range(0..64), rng.random_range(0..64));
            b.put_pixel(x, y, Rgb(rng.random()));
        }
        let ra = FaceRecord::new(a.clone(), landmarks.clone(), "id", "a").map_err(|e| e.to_string())?;
        let rb = ra.with_image(b.clone()).map_err(|e| e.to_string())?;
        let poly = ra.facial_polygon().map_err(|e| e.to_string())?;
        let got = coverage_intensity(&ra, &rb, &poly, "random").map_err(|e| e.to_string())?;

        let pts: Vec<(f64, f64)> = landmarks.iter().map(|p| (p.x, p.y)).collect();
        let h = hull(&pts);
        let (mut sum, mut count) = (0i64, 0i64);
        for y in 0..64 {
            for x in 0..64 {
                if strictly_inside(&h, (x as f64, y as f64)) {
                    count += 1;
                    sum += (luma(a.get_pixel(x, y).0) - luma(b.get_pixel(x, y).0)).abs();
                }
            }
        }
        let want = sum as f64 / (count as f64 * 255.0);
        worst = worst.max((got.coverage_intensity - want).abs());
        check(got.coverage_class == CoverageClass::of(want), "class disagrees".into())?;
    }
    check(worst <= COVERAGE_TOL, format!("max |error| {worst:e}"))?;
    let boundaries = [
        (0.15f64.next_down(), CoverageClass::Low),
        (0.15, CoverageClass::Medium),
        (0.40, CoverageClass::Medium),
        (0.40f64.next_up(), CoverageClass::High),
    ];
    for (v, class) in boundaries {
        check(CoverageClass::of(v) == class, format!("class of {v} is not {class}"))?;
    }
    let t = within(LIMIT_COVERAGE, start)?;
    Ok(format!("50 pairs, max |error| {worst:.1e}, boundaries closed on medium, {t:.2?}"))
}

// ---------------------------------------------------------------- 2, 3

fn trial_set(seed: u64) -> TrialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sep = rng.random_range(0.0..2.5);
    let g = Normal::new(sep, 1.0).unwrap();
    let i = Normal::new(0.0, 1.0).unwrap();
    // every third set is quantised so thresholds see ties
    let q = |v: f64| if seed % 3 == 0 { (v * 20.0).round() / 20.0 } else { v };
    TrialSet::new(
        (0..1000).map(|_| q(g.sample(&mut rng))).collect(),
        (0..1000).map(|_| q(i.sample(&mut rng))).collect(),
    )
}

/// Thresholds, FMR and FNMR by direct counting at every distinct score and
/// at reject-all.
fn exhaustive(t: &TrialSet) -> Vec<(f64, f64, f64)> {
    let mut th: Vec<f64> = t.genuine.iter().chain(&t.impostor).copied().collect();
    th.sort_by(f64::total_cmp);
    th.dedup();
    th.push(f64::INFINITY);
    th.into_iter()
        .map(|x| {
            let fmr = t.impostor.iter().filter(|&&s| s >= x).count() as f64 / t.impostor.len() as f64;
            let fnmr = t.genuine.iter().filter(|&&s| s < x).count() as f64 / t.genuine.len() as f64;
            (x, fmr, fnmr)
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let targets = [1e-4, 1e-3, 1e-2];
    for seed in 0..100 {
        let t = trial_set(seed);
        let oracle = exhaustive(&t);
        let det = det_curve(&t).map_err(|e| e.to_string())?;
        let det: Vec<(f64, f64, f64)> = det.iter().map(|p| (p.threshold, p.fmr, p.fnmr)).collect();
        check(det == oracle, format!("set {seed}: DET differs"))?;

        let observed = &oracle[..oracle.len() - 1];
        let mut best = observed[0];
        for &p in observed {
            if (p.1 - p.2).abs() < (best.1 - best.2).abs() {
                best = p;
            }
        }
        let e = eer(&t).map_err(|e| e.to_string())?;
        check(
            (e.threshold, e.fmr, e.fnmr, e.eer) == (best.0, best.1, best.2, (best.1 + best.2) / 2.0),
            format!("set {seed}: EER {e:?} vs oracle {best:?}"),
        )?;

        let ops = fnmr_at_fmr(&t, &targets).map_err(|e| e.to_string())?;
        for (op, target) in ops.iter().zip(targets) {
            let want = oracle.iter().find(|p| p.1 <= target).unwrap();
            check(
                (op.threshold, op.attained_fmr, op.fnmr) == (want.0, want.1, want.2),
                format!("set {seed}: FNMR@{target} {op:?} vs oracle {want:?}"),
            )?;
        }
    }
    let same: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
    let e = eer(&TrialSet::new(same.clone(), same)).map_err(|e| e.to_string())?.eer;
    check(e == 0.5, format!("identical distributions give {e}"))?;
    let sep = TrialSet::new((0..1000).map(|i| 2.0 + i as f64).collect(), (0..1000).map(|i| -(i as f64)).collect());
    let e = eer(&sep).map_err(|e| e.to_string())?.eer;
    check(e == 0.0, format!("separable sets give {e}"))?;
    let t = within(LIMIT_METRICS, start)?;
    Ok(format!("100 sets x 1000 scores/class match the exhaustive sweep, {t:.2?}"))
}

fn criterion_3() -> Outcome {
    for seed in 0..20 {
        let t = trial_set(1000 + seed);
        let all: Vec<f64> = t.genuine.iter().chain(&t.impostor).copied().collect();
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = |v: &[f64]| minmax_normalize(v, (lo, hi), (0.0, 1.0)).map_err(|e| e.to_string());
        let n = TrialSet::new(norm(&t.genuine)?, norm(&t.impostor)?);
        let (a, b) = (eer(&t).map_err(|e| e.to_string())?, eer(&n).map_err(|e| e.to_string())?);
        check((a.eer, a.fmr, a.fnmr) == (b.eer, b.fmr, b.fnmr), format!("set {seed}: EER {a:?} vs {b:?}"))?;
        let rates = |t: &TrialSet| -> Result<Vec<(f64, f64)>, String> {
            Ok(det_curve(t).map_err(|e| e.to_string())?.iter().map(|p| (p.fmr, p.fnmr)).collect())
        };
        check(rates(&t)? == rates(&n)?, format!("set {seed}: DET rates differ"))?;
    }
    Ok("20 sets: EER and DET rates identical after min-max normalisation".into())
}

// ---------------------------------------------------------------- 4, 5

fn t64(shape: &[usize], f: impl FnMut(usize) -> f64) -> Tensor<f64> {
    Tensor::from_fn(shape, f)
}

fn criterion_4() -> Outcome {
    for (e, want) in [(0.5, 0.125), (1.0, 0.5), (2.0, 1.5)] {
        let tape = Tape::<f64>::new();
        let v = huber_loss(tape.constant(Tensor::full(&[1, 1, 1, 1], e)), tape.constant(Tensor::zeros(&[1, 1, 1, 1])))
            .map_err(|e| e.to_string())?
            .value()
            .item();
        check((v - want).abs() <= LOSS_TOL, format!("L_H({e}) = {v}, want {want}"))?;
    }
    // LSGAN critic: ((D(x) - 1)^2 + D(G(z))^2) / 2 averaged over the map
    for (real, fake, want) in [(1.0, 0.0, 0.0), (0.5, 0.5, 0.25), (0.0, 1.0, 1.0), (0.8, 0.3, 0.065)] {
        let tape = Tape::<f64>::new();
        let v = discriminator_loss(tape.constant(Tensor::full(&[2, 1, 2, 2], real)), tape.constant(Tensor::full(&[2, 1, 2, 2], fake)))
            .map_err(|e| e.to_string())?
            .value()
            .item();
        check((v - want).abs() <= LOSS_TOL, format!("L_D({real}, {fake}) = {v}, want {want}"))?;
    }
    let tape = Tape::<f64>::new();
    let t = tape.constant(t64(&[1, 3, 12, 12], |i| ((i * 7) % 13) as f64 / 13.0));
    let c = tape.constant(t64(&[1, 3, 12, 12], |i| ((i * 5) % 11) as f64 / 11.0));
    let r = tape.constant(t64(&[1, 3, 12, 12], |i| ((i * 3) % 7) as f64 / 7.0));
    let d = tape.constant(t64(&[1, 1, 2, 2], |i| 0.3 * i as f64));
    let w = SsimWindow::default();
    let total = |lw: &LossWeights| generator_loss(c, r, t, d, &[(r, t)], lw, w).map(|x| x.1).map_err(|e| e.to_string());
    let zero = LossWeights { rc_coarse: 0.0, rc_refined: 0.0, perceptual: 0.0, adversarial: 0.0 };
    let base = total(&zero)?;
    check(base.total.abs() <= LOSS_TOL, format!("all-zero weights give {}", base.total))?;
    let unit = [
        LossWeights { rc_coarse: 1.0, ..zero.clone() },
        LossWeights { rc_refined: 1.0, ..zero.clone() },
        LossWeights { perceptual: 1.0, ..zero.clone() },
        LossWeights { adversarial: 1.0, ..zero.clone() },
    ];
    let mut terms = [0.0; 4];
    for (k, lw) in unit.iter().enumerate() {
        terms[k] = total(lw)?.total;
    }
    let defaults = LossWeights::default();
    check(
        (defaults.rc_coarse, defaults.rc_refined, defaults.perceptual, defaults.adversarial) == (30.0, 70.0, 50.0, 0.7),
        format!("default weights {defaults:?}"),
    )?;
    let full = total(&defaults)?.total;
    let linear = 30.0 * terms[0] + 70.0 * terms[1] + 50.0 * terms[2] + 0.7 * terms[3];
    check((full - linear).abs() <= LOSS_TOL, format!("total {full} vs weighted sum {linear}"))?;
    let doubled = total(&LossWeights { adversarial: 1.4, ..defaults.clone() })?.total;
    check((doubled - full - 0.7 * terms[3]).abs() <= LOSS_TOL, "adversarial weight not linear".into())?;
    Ok(format!("L_H, L_D and lambda = (30, 70, 50, 0.7) linearity within {LOSS_TOL:e}"))
}

fn criterion_5() -> Outcome {
    let target = t64(&[1, 1, 4, 4], |i| ((i * 5) % 7) as f64 / 7.0);
    let x0 = t64(&[1, 1, 4, 4], |i| ((i * 3) % 11) as f64 / 11.0 + 0.05);
    let window = SsimWindow { size: 3, sigma: 1.5 };
    let f = |x: &Tensor<f64>| {
        let tape = Tape::new();
        reconstruction_loss(tape.constant(x.clone()), tape.constant(target.clone()), window).unwrap().value().item()
    };
    let tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let l = reconstruction_loss(x, tape.constant(target.clone()), window).map_err(|e| e.to_string())?;
    let g = tape.backward(l).map_err(|e| e.to_string())?;
    let e1 = max_relative_error(g.get(x).unwrap(), &central_difference(f, &x0, 1e-6), 1e-6);
    check(e1 < GRAD_REL_TOL, format!("L_H + L_SSIM relative error {e1:e}"))?;

    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gc = GatedConv2d::new(&mut store, "g", 2, 2, 3, ConvOptions::same(3, 1), Activation::Elu, &mut rng)
        .map_err(|e| e.to_string())?;
    let x0 = t64(&[1, 2, 4, 4], |i| (i as f64 * 0.61).cos());
    let f = |x: &Tensor<f64>| {
        let tape = Tape::new();
        let p = store.bind(&tape, false);
        gc.forward(&p, tape.constant(x.clone())).unwrap().sqr().sum_all().value().item()
    };
    let tape = Tape::new();
    let p = store.bind(&tape, true);
    let x = tape.leaf(x0.clone());
    let loss = gc.forward(&p, x).map_err(|e| e.to_string())?.sqr().sum_all();
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    let e2 = max_relative_error(grads.get(x).unwrap(), &central_difference(f, &x0, 1e-6), 1e-6);
    check(e2 < GRAD_REL_TOL, format!("gated conv relative error {e2:e}"))?;
    Ok(format!("4x4 relative errors: reconstruction {e1:.1e}, gated conv {e2:.1e}"))
}

// ---------------------------------------------------------------- 6, 7

fn criterion_6() -> Outcome {
    let s = OptimSchedule::default();
    for (iter, want) in [(0, 1e-3), (49_999, 1e-3), (50_000, 1e-4), (100_000, 1e-5)] {
        let got = s.lr_at(iter);
        check(got == want, format!("lr({iter}) = {got:e}, want {want:e}"))?;
    }
    Ok("lr(0, 49999, 50000, 100000) = 1e-3, 1e-3, 1e-4, 1e-5 exactly".into())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let faces = defilter::synth::dataset("S", 16, 1, 64, 11);
    let samples: Vec<SegSample> = faces
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let (rec, mask) = augment(f, 100 + i as u64, 16, 0.4).unwrap();
            SegSample { image: rec.image().clone(), mask }
        })
        .collect();
    let mut model = SegModel::build(SegNetConfig::desk(), 5).map_err(|e| e.to_string())?;
    let opts = SegTrainOptions { iterations: SEG_MAX_ITERS, batch_size: 8, seed: 3, ..Default::default() };
    train_segnet(&mut model, &samples, &opts).map_err(|e| e.to_string())?;
    let iou = mean_iou(&model, &samples).map_err(|e| e.to_string())?;
    for s in &samples {
        let m = model.segment(&s.image).map_err(|e| e.to_string())?;
        check(m.dimensions() == (64, 64), format!("mask is {:?}", m.dimensions()))?;
        check(m.to_gray().pixels().all(|p| p.0[0] == 0 || p.0[0] == 255), "mask is not binary".into())?;
    }
    check(iou > IOU_MIN, format!("training IoU {iou:.4} after {SEG_MAX_ITERS} iterations"))?;
    let t = within(LIMIT_SEGMENTER, start)?;
    Ok(format!("training IoU {iou:.4} after {SEG_MAX_ITERS} iterations, {t:.1?}"))
}

// ---------------------------------------------------------------- 8, 9, 10

struct Run {
    root: PathBuf,
    elapsed: Duration,
    config: ExperimentConfig,
}

fn pipeline_run(dir: &Path) -> Result<Run, String> {
    let config = ExperimentConfig::profile(Profile::Desk);
    let start = Instant::now();
    run_all(&config, dir).map_err(|e| e.to_string())?;
    Ok(Run { root: dir.to_path_buf(), elapsed: start.elapsed(), config })
}

fn criterion_8(run: &Run) -> Outcome {
    let c = &run.config;
    check(c.data.image_size == 64, "not the 64x64 desk profile".into())?;
    check(c.gan_train.iterations <= GAN_MAX_ITERS, format!("{} GAN iterations", c.gan_train.iterations))?;
    let heldout: Vec<defilter::compositor::ManifestRow> =
        io::read_jsonl(&run.root.join("augment/heldout.jsonl")).map_err(|e| e.to_string())?;
    check(heldout.len() == 20, format!("{} held-out images", heldout.len()))?;
    let (mut po, mut pr, mut so, mut sr) = (0.0, 0.0, 0.0, 0.0);
    for h in &heldout {
        let load = |p: &str| io::load_rgb(&run.root.join(p)).map_err(|e| e.to_string());
        let occluded = load(&h.path)?;
        let truth = load(h.truth_path.as_deref().unwrap())?;
        let name = Path::new(&h.path).file_name().unwrap().to_str().unwrap();
        let rec = load(&format!("remove/heldout/{name}"))?;
        let (a, b) = (quality::score(&occluded, &truth).unwrap(), quality::score(&rec, &truth).unwrap());
        po += a.psnr;
        pr += b.psnr;
        so += a.mssim;
        sr += b.mssim;
    }
    let n = heldout.len() as f64;
    let (po, pr, so, sr) = (po / n, pr / n, so / n, sr / n);
    let summary = format!("PSNR {po:.2} -> {pr:.2} dB, MSSIM {so:.4} -> {sr:.4}");
    check(pr > po && sr > so, summary.clone())?;
    under(LIMIT_INPAINT, run.elapsed)?;
    Ok(format!("20 held-out images, predicted masks: {summary}"))
}

fn criterion_9(run: &Run) -> Outcome {
    let text = std::fs::read_to_string(run.root.join("evaluate/metrics.csv")).map_err(|e| e.to_string())?;
    let rows = MetricsRow::parse_csv(&text).map_err(|e| e.to_string())?;
    let get = |cond: &str| {
        rows.iter()
            .find(|r| r.condition == cond && r.group_kind == "coverage" && r.group == "high")
            .and_then(|r| r.eer)
    };
    let (f, r) = (get("filtered"), get("reconstructed"));
    let summary = format!("high-coverage EER filtered {f:?}, reconstructed {r:?}");
    match (f, r) {
        (Some(f), Some(r)) if r < f => {}
        _ => return Err(summary),
    }
    let t = under(LIMIT_END_TO_END, run.elapsed)?;
    Ok(format!("{summary} (pipeline {t:.1?})"))
}

fn outputs(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if matches!(p.extension().and_then(|s| s.to_str()), Some("jsonl" | "csv")) {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_10(a: &Run, b: &Run) -> Outcome {
    let (oa, ob) = (outputs(&a.root), outputs(&b.root));
    check(oa.keys().eq(ob.keys()), "the runs wrote different file sets".into())?;
    for (k, v) in &oa {
        check(ob[k] == *v, format!("{k} differs"))?;
    }
    for stage in defilter::pipeline::Stage::ALL {
        let ra = defilter::pipeline::read_record(&a.root, stage).map_err(|e| e.to_string())?;
        let rb = defilter::pipeline::read_record(&b.root, stage).map_err(|e| e.to_string())?;
        check(ra == rb && ra.is_some(), format!("{stage} content hashes differ"))?;
    }
    Ok(format!("{} manifests and CSVs bit-identical; all stage hashes equal", oa.len()))
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut record = |n: u32, name: &'static str, o: Outcome| {
        let (tag, msg) = match &o {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("criterion {n:>2} [{tag}] {name}: {msg}");
        results.push((n, name, o));
    };
    record(1, "coverage metric oracle", criterion_1());
    record(2, "verification metric oracle", criterion_2());
    record(3, "normalisation invariance", criterion_3());
    record(4, "loss correctness", criterion_4());
    record(5, "gradient checks", criterion_5());
    record(6, "learning-rate schedule", criterion_6());
    record(7, "segmenter overfit", criterion_7());

    let first = tempfile::tempdir().expect("temp dir");
    let second = tempfile::tempdir().expect("temp dir");
    match pipeline_run(first.path()) {
        Ok(run) => {
            record(8, "inpainting direction", criterion_8(&run));
            record(9, "end-to-end EER direction", criterion_9(&run));
            match pipeline_run(second.path()) {
                Ok(again) => record(10, "determinism", criterion_10(&run, &again)),
                Err(e) => record(10, "determinism", Err(format!("second run failed: {e}"))),
            }
        }
        Err(e) => {
            for (n, name) in [(8, "inpainting direction"), (9, "end-to-end EER direction"), (10, "determinism")] {
                record(n, name, Err(format!("desk pipeline failed: {e}")));
            }
        }
    }
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
