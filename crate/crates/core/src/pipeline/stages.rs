//! Builders for the data and training stages. Each writes into `ctx.out`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{derive_seed, ExperimentConfig};
use crate::augment::augment as occlude;
use crate::compositor::{apply_filter_with_mask, coverage_intensity, record_stem, ManifestRow, Role};
use crate::error::{Error, Result};
use crate::face::FaceRecord;
use crate::inpaint::{remove_filter, train_gan as fit_gan, GanSample, GanTrainOptions, Inpainter};
use crate::io;
use crate::mask::OcclusionMask;
use crate::quality;
use crate::segmenter::{mean_iou, train_segnet, SegModel, SegSample, SegTrainOptions};
use crate::stickers;

pub(crate) struct Ctx<'a> {
    pub config: &'a ExperimentConfig,
    /// Stage root; manifest paths are relative to it.
    pub root: &'a Path,
    /// Temporary directory standing in for this stage's own directory.
    pub out: &'a Path,
}

pub(crate) const SEGNET_CHECKPOINT: &str = "train_seg/segnet.ckpt";
pub(crate) const GAN_CHECKPOINT: &str = "train_gan/gan.ckpt";
pub(crate) const PROBES: &str = "remove/probes.jsonl";

pub(crate) fn manifest(root: &Path, rel: &str) -> Result<Vec<ManifestRow>> {
    io::read_jsonl(&root.join(rel))
}

/// Session index encoded in a synthetic source id (`<prefix>-<nnnn>-<s>`).
pub(crate) fn session_of(source_id: &str) -> Result<usize> {
    source_id
        .rsplit('-')
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidRecord(format!("source id `{source_id}` carries no session index")))
}

fn baseline_row(path: String, record: &FaceRecord) -> ManifestRow {
    ManifestRow {
        path,
        identity: record.identity.clone(),
        source_id: record.source_id.clone(),
        filter_name: None,
        placement: None,
        coverage_intensity: None,
        coverage_class: None,
        role: Role::Baseline,
        mask_path: None,
        truth_path: None,
    }
}

pub(crate) fn synth(ctx: &Ctx) -> Result<()> {
    let d = &ctx.config.data;
    let sets = [
        (&d.train_prefix, d.train_identities, d.train_sessions),
        (&d.eval_prefix, d.eval_identities, d.eval_sessions),
    ];
    for (prefix, identities, sessions) in sets {
        let seed = derive_seed(ctx.config.seed, &format!("synth/{prefix}"));
        let records = crate::synth::dataset(prefix, identities, sessions, d.image_size, seed);
        let mut rows = Vec::with_capacity(records.len());
        for r in &records {
            let stem = record_stem(r);
            r.save(&ctx.out.join(prefix).join("baseline"), &stem)?;
            rows.push(baseline_row(format!("synth/{prefix}/baseline/{stem}.png"), r));
        }
        io::write_jsonl(&ctx.out.join(prefix).join(crate::compositor::MANIFEST_FILE), &rows)?;
    }
    Ok(())
}

pub(crate) fn synth_manifest(prefix: &str) -> String {
    format!("synth/{prefix}/{}", crate::compositor::MANIFEST_FILE)
}

fn augmented_rows(
    ctx: &Ctx,
    sources: &[ManifestRow],
    count: usize,
    dir: &str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ManifestRow>> {
    let a = &ctx.config.augment;
    let mut rows = Vec::with_capacity(count);
    for k in 0..count {
        let src = &sources[rng.random_range(0..sources.len())];
        let fill = if a.fill_max > a.fill_min {
            rng.random_range(a.fill_min..=a.fill_max)
        } else {
            a.fill_min
        };
        let seed: u64 = rng.random();
        let record = FaceRecord::load(&ctx.root.join(&src.path))?;
        let (out, mask) = occlude(&record, seed, a.n_subregions, fill)?;
        let stem = format!("{k:05}-{}", record_stem(&record));
        out.save(&ctx.out.join(dir), &stem)?;
        io::save_gray(&mask.to_gray(), &ctx.out.join(dir).join("masks").join(format!("{stem}.png")))?;
        rows.push(ManifestRow {
            path: format!("augment/{dir}/{stem}.png"),
            role: Role::Augmented,
            mask_path: Some(format!("augment/{dir}/masks/{stem}.png")),
            truth_path: Some(src.path.clone()),
            ..baseline_row(String::new(), &record)
        });
    }
    Ok(rows)
}

pub(crate) fn augment(ctx: &Ctx) -> Result<()> {
    let c = ctx.config;
    let a_rows = manifest(ctx.root, &synth_manifest(&c.data.train_prefix))?;
    let b_rows = manifest(ctx.root, &synth_manifest(&c.data.eval_prefix))?;
    let assets = c
        .filters
        .train
        .iter()
        .map(|n| stickers::by_name(n).ok_or_else(|| Error::Config(format!("unknown filter `{n}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, "augment"));

    let n_filtered = (c.augment.count as f64 * c.augment.filtered_ratio).round() as usize;
    let mut pool = Vec::with_capacity(n_filtered + c.augment.count);
    for i in 0..n_filtered {
        let src = &a_rows[rng.random_range(0..a_rows.len())];
        let asset = &assets[i % assets.len()];
        let record = FaceRecord::load(&ctx.root.join(&src.path))?;
        let (filtered, mask) = apply_filter_with_mask(&record, asset)?;
        let cov = coverage_intensity(&record, &filtered, &record.facial_polygon()?, &asset.name)?;
        let stem = format!("{i:05}-{}", record_stem(&record));
        let dir = format!("filtered/{}", asset.name);
        filtered.save(&ctx.out.join(&dir), &stem)?;
        io::save_gray(&mask, &ctx.out.join(&dir).join("masks").join(format!("{stem}.png")))?;
        pool.push(ManifestRow {
            path: format!("augment/{dir}/{stem}.png"),
            filter_name: Some(asset.name.clone()),
            placement: Some(asset.placement),
            coverage_intensity: Some(cov.coverage_intensity),
            coverage_class: Some(cov.coverage_class),
            role: Role::Filtered,
            mask_path: Some(format!("augment/{dir}/masks/{stem}.png")),
            truth_path: Some(src.path.clone()),
            ..baseline_row(String::new(), &record)
        });
    }
    pool.extend(augmented_rows(ctx, &a_rows, c.augment.count, "augmented", &mut rng)?);

    let n_val = (pool.len() as f64 * c.augment.validation_fraction).round() as usize;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let mut is_val = vec![false; pool.len()];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = pool.into_iter().zip(is_val).partition(|(_, v)| *v);
    let strip = |v: Vec<(ManifestRow, bool)>| v.into_iter().map(|(r, _)| r).collect::<Vec<_>>();
    io::write_jsonl(&ctx.out.join("train.jsonl"), &strip(train))?;
    io::write_jsonl(&ctx.out.join("val.jsonl"), &strip(val))?;

    let heldout = augmented_rows(ctx, &b_rows, c.augment.heldout, "heldout", &mut rng)?;
    io::write_jsonl(&ctx.out.join("heldout.jsonl"), &heldout)
}

fn load_mask(path: &Path) -> Result<OcclusionMask> {
    Ok(OcclusionMask::from_gray(&io::load_gray(path)?))
}

fn seg_samples(root: &Path, rows: &[ManifestRow]) -> Result<Vec<SegSample>> {
    rows.iter()
        .map(|r| {
            let mask = r.mask_path.as_ref().ok_or_else(|| Error::InvalidRecord(format!("{} has no mask", r.path)))?;
            Ok(SegSample {
                image: io::load_rgb(&root.join(&r.path))?,
                mask: load_mask(&root.join(mask))?,
            })
        })
        .collect()
}

fn gan_samples(root: &Path, rows: &[ManifestRow]) -> Result<Vec<GanSample>> {
    rows.iter()
        .map(|r| {
            let missing = || Error::InvalidRecord(format!("{} lacks a mask or a clean counterpart", r.path));
            Ok(GanSample {
                input: io::load_rgb(&root.join(&r.path))?,
                mask: load_mask(&root.join(r.mask_path.as_ref().ok_or_else(missing)?))?,
                truth: io::load_rgb(&root.join(r.truth_path.as_ref().ok_or_else(missing)?))?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SegMetrics {
    iterations: u64,
    train_samples: usize,
    val_samples: usize,
    final_loss: Option<f32>,
    train_iou: f64,
    val_iou: Option<f64>,
    loss_history: Vec<f32>,
}

pub(crate) fn train_seg(ctx: &Ctx) -> Result<()> {
    let c = ctx.config;
    let train = seg_samples(ctx.root, &manifest(ctx.root, "augment/train.jsonl")?)?;
    let val = seg_samples(ctx.root, &manifest(ctx.root, "augment/val.jsonl")?)?;
    let mut model = SegModel::build(c.segnet.clone(), derive_seed(c.seed, "segnet/init"))?;
    let opts = SegTrainOptions {
        iterations: c.segnet_train.iterations,
        batch_size: c.segnet_train.batch_size,
        schedule: c.schedule.clone(),
        seed: derive_seed(c.seed, "segnet/batches"),
    };
    train_segnet(&mut model, &train, &opts)?;
    model.save(&ctx.out.join("segnet.ckpt"))?;
    let metrics = SegMetrics {
        iterations: model.iteration,
        train_samples: train.len(),
        val_samples: val.len(),
        final_loss: model.loss_history.last().copied(),
        train_iou: mean_iou(&model, &train)?,
        val_iou: if val.is_empty() { None } else { Some(mean_iou(&model, &val)?) },
        loss_history: model.loss_history.clone(),
    };
    log::info!("segmenter: train IoU {:.4}, val IoU {:?}", metrics.train_iou, metrics.val_iou);
    io::write_json(&ctx.out.join("metrics.json"), &metrics)
}

#[derive(Serialize)]
struct GanMetrics {
    iterations: u64,
    train_samples: usize,
    val_samples: usize,
    /// Means over the validation set with ground-truth masks.
    val_psnr_occluded: Option<f64>,
    val_psnr_reconstructed: Option<f64>,
    val_mssim_occluded: Option<f64>,
    val_mssim_reconstructed: Option<f64>,
    loss_history: Vec<crate::inpaint::GanLossRecord>,
}

pub(crate) fn train_gan(ctx: &Ctx) -> Result<()> {
    let c = ctx.config;
    let train = gan_samples(ctx.root, &manifest(ctx.root, "augment/train.jsonl")?)?;
    let val = gan_samples(ctx.root, &manifest(ctx.root, "augment/val.jsonl")?)?;
    let mut model = Inpainter::build(c.gan.clone(), derive_seed(c.seed, "gan/init"))?;
    let opts = GanTrainOptions {
        iterations: c.gan_train.iterations,
        batch_size: c.gan_train.batch_size,
        schedule: c.schedule.clone(),
        weights: c.loss_weights.clone(),
        ssim_window: c.gan_train.ssim_window,
        seed: derive_seed(c.seed, "gan/batches"),
    };
    fit_gan(&mut model, &train, &opts)?;
    model.save(&ctx.out.join("gan.ckpt"))?;
    let mut sums = [0.0; 4];
    for s in &val {
        let rec = model.inpaint(&s.input, &s.mask)?;
        let occ = quality::score(&s.input, &s.truth)?;
        let got = quality::score(&rec, &s.truth)?;
        for (acc, v) in sums.iter_mut().zip([occ.psnr, got.psnr, occ.mssim, got.mssim]) {
            *acc += v;
        }
    }
    let mean = |i: usize| (!val.is_empty()).then(|| sums[i] / val.len() as f64);
    let metrics = GanMetrics {
        iterations: model.iteration,
        train_samples: train.len(),
        val_samples: val.len(),
        val_psnr_occluded: mean(0),
        val_psnr_reconstructed: mean(1),
        val_mssim_occluded: mean(2),
        val_mssim_reconstructed: mean(3),
        loss_history: model.loss_history.clone(),
    };
    log::info!(
        "inpainter: val PSNR {:?} -> {:?}",
        metrics.val_psnr_occluded,
        metrics.val_psnr_reconstructed
    );
    io::write_json(&ctx.out.join("metrics.json"), &metrics)
}

/// Running means of one comparison set in `quality_summary.csv`.
#[derive(Default)]
struct QualityAcc {
    n: usize,
    sums: [f64; 5],
}

impl QualityAcc {
    fn add(&mut self, occluded: quality::QualityScorePair, rec: quality::QualityScorePair, iou: f64) {
        self.n += 1;
        for (acc, v) in self.sums.iter_mut().zip([occluded.psnr, rec.psnr, occluded.mssim, rec.mssim, iou]) {
            *acc += v;
        }
    }

    fn line(&self, set: &str) -> String {
        let m: Vec<String> = self.sums.iter().map(|s| format!("{:.6}", s / self.n as f64)).collect();
        format!("{set},{},{}\n", self.n, m.join(","))
    }
}

pub(crate) const QUALITY_HEADER: &str = "path_a,path_b,psnr,mssim\n";
pub(crate) const QUALITY_SUMMARY_HEADER: &str =
    "set,n,psnr_occluded,psnr_reconstructed,mssim_occluded,mssim_reconstructed,mask_iou\n";

fn quality_line(csv: &mut String, a: &str, b: &str, q: quality::QualityScorePair) {
    csv.push_str(&format!("{a},{b},{:.6},{:.6}\n", q.psnr, q.mssim));
}

pub(crate) fn remove(ctx: &Ctx) -> Result<()> {
    let c = ctx.config;
    let seg = SegModel::load(&ctx.root.join(SEGNET_CHECKPOINT))?;
    let gan = Inpainter::load(&ctx.root.join(GAN_CHECKPOINT))?;
    let assets = c
        .filters
        .test
        .iter()
        .map(|n| stickers::by_name(n).ok_or_else(|| Error::Config(format!("unknown filter `{n}`"))))
        .collect::<Result<Vec<_>>>()?;
    let b_rows = manifest(ctx.root, &synth_manifest(&c.data.eval_prefix))?;
    let mut rows = Vec::new();
    let mut csv = String::from(QUALITY_HEADER);
    let mut summary = String::from(QUALITY_SUMMARY_HEADER);

    let mut heldout_acc = QualityAcc::default();
    for h in manifest(ctx.root, "augment/heldout.jsonl")? {
        let input = io::load_rgb(&ctx.root.join(&h.path))?;
        let truth_rel = h.truth_path.clone().ok_or_else(|| Error::InvalidRecord(format!("{} has no truth", h.path)))?;
        let truth = io::load_rgb(&ctx.root.join(&truth_rel))?;
        let truth_mask = load_mask(&ctx.root.join(h.mask_path.as_deref().unwrap_or_default()))?;
        let (rec, mask) = remove_filter(&seg, &gan, &input)?;
        let name = Path::new(&h.path).file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        io::save_rgb(&rec, &ctx.out.join("heldout").join(&name))?;
        io::save_gray(&mask.to_gray(), &ctx.out.join("heldout/masks").join(&name))?;
        let (occ_q, rec_q) = (quality::score(&input, &truth)?, quality::score(&rec, &truth)?);
        quality_line(&mut csv, &h.path, &truth_rel, occ_q);
        quality_line(&mut csv, &format!("remove/heldout/{name}"), &truth_rel, rec_q);
        heldout_acc.add(occ_q, rec_q, mask.iou(&truth_mask)?);
    }
    if heldout_acc.n > 0 {
        summary.push_str(&heldout_acc.line("heldout"));
    }

    let refs = c.data.references_per_identity;
    let probes: Vec<&ManifestRow> = b_rows
        .iter()
        .map(|r| Ok((r, session_of(&r.source_id)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, s)| *s >= refs)
        .map(|(r, _)| r)
        .collect();
    for asset in &assets {
        let mut acc = QualityAcc::default();
        for src in &probes {
            let record = FaceRecord::load(&ctx.root.join(&src.path))?;
            let (filtered, truth_mask) = apply_filter_with_mask(&record, asset)?;
            let truth_mask = OcclusionMask::from_gray(&truth_mask);
            let cov = coverage_intensity(&record, &filtered, &record.facial_polygon()?, &asset.name)?;
            let (rec_image, mask) = remove_filter(&seg, &gan, filtered.image())?;
            let rec = filtered.with_image(rec_image)?;
            let stem = record_stem(&record);
            filtered.save(&ctx.out.join("filtered").join(&asset.name), &stem)?;
            rec.save(&ctx.out.join("reconstructed").join(&asset.name), &stem)?;
            let mask_rel = format!("masks/{}/{stem}.png", asset.name);
            io::save_gray(&mask.to_gray(), &ctx.out.join(&mask_rel))?;
            let row = |role: Role, dir: &str| ManifestRow {
                path: format!("remove/{dir}/{}/{stem}.png", asset.name),
                filter_name: Some(asset.name.clone()),
                placement: Some(asset.placement),
                coverage_intensity: Some(cov.coverage_intensity),
                coverage_class: Some(cov.coverage_class),
                role,
                mask_path: Some(format!("remove/{mask_rel}")),
                truth_path: Some(src.path.clone()),
                ..baseline_row(String::new(), &record)
            };
            let (f_row, r_row) = (row(Role::Filtered, "filtered"), row(Role::Reconstructed, "reconstructed"));
            let (occ_q, rec_q) = (
                quality::score(filtered.image(), record.image())?,
                quality::score(rec.image(), record.image())?,
            );
            quality_line(&mut csv, &f_row.path, &src.path, occ_q);
            quality_line(&mut csv, &r_row.path, &src.path, rec_q);
            acc.add(occ_q, rec_q, mask.iou(&truth_mask)?);
            rows.push(f_row);
            rows.push(r_row);
        }
        if acc.n > 0 {
            summary.push_str(&acc.line(&asset.name));
        }
    }
    io::write_jsonl(&ctx.out.join("probes.jsonl"), &rows)?;
    io::write_text(&ctx.out.join("quality.csv"), &csv)?;
    io::write_text(&ctx.out.join("quality_summary.csv"), &summary)
}
