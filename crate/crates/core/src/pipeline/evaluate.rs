//! Verification trials and metric tables for the baseline, filtered and
//! reconstructed probes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive_seed;
use super::stages::{manifest, session_of, synth_manifest, Ctx, PROBES};
use crate::biometric::{
    det_csv, detection_stats, eer, fnmr_at_fmr, fte, minmax_normalize, BaselineEngine, DetectionResult,
    EngineAdapter, TrialSet,
};
use crate::compositor::{CoverageClass, ManifestRow, Placement, Role};
use crate::error::{Error, Result};
use crate::face::FaceRecord;
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    Filtered,
    Reconstructed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Filtered => "filtered",
            Condition::Reconstructed => "reconstructed",
        }
    }

    fn of(role: Role) -> Result<Self> {
        match role {
            Role::Baseline => Ok(Condition::Baseline),
            Role::Filtered => Ok(Condition::Filtered),
            Role::Reconstructed => Ok(Condition::Reconstructed),
            Role::Augmented => Err(Error::InvalidRecord("augmented images are not probes".into())),
        }
    }
}

/// One line of `trials.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub probe_path: String,
    pub reference_path: String,
    pub same_identity: bool,
    pub condition: Condition,
    pub coverage_class: Option<CoverageClass>,
    pub placement: Option<Placement>,
    pub filter_name: Option<String>,
    pub score: f64,
}

/// One line of `metrics.csv`. Rates are fractions; `None` where a group
/// lacks genuine or impostor scores.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub engine: String,
    pub condition: String,
    pub group_kind: String,
    pub group: String,
    pub n_probes: usize,
    pub fte: f64,
    pub eer: Option<f64>,
    /// (target FMR, FNMR) pairs.
    pub fnmr: Vec<(f64, Option<f64>)>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl MetricsRow {
    pub fn csv_header(targets: &[f64]) -> String {
        let mut h = "engine,condition,group_kind,group,n_probes,fte,eer".to_string();
        for t in targets {
            write!(h, ",fnmr@{t}").unwrap();
        }
        h.push_str(",n_genuine,n_impostor\n");
        h
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{:.6},{}",
            self.engine,
            self.condition,
            self.group_kind,
            self.group,
            self.n_probes,
            self.fte,
            opt(self.eer)
        );
        for (_, f) in &self.fnmr {
            write!(s, ",{}", opt(*f)).unwrap();
        }
        writeln!(s, ",{},{}", self.n_genuine, self.n_impostor).unwrap();
        s
    }

    pub fn to_csv(rows: &[MetricsRow], targets: &[f64]) -> String {
        let mut out = Self::csv_header(targets);
        for r in rows {
            out.push_str(&r.csv_line());
        }
        out
    }

    /// Inverse of [`MetricsRow::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
        let bad = |m: String| Error::InvalidArgument(format!("metrics.csv: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
        if header.len() < 9 || header[..7] != ["engine", "condition", "group_kind", "group", "n_probes", "fte", "eer"] {
            return Err(bad("unexpected header".into()));
        }
        let targets = header[7..header.len() - 2]
            .iter()
            .map(|h| {
                h.strip_prefix("fnmr@")
                    .and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("column `{h}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let num = |s: &str| -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("`{s}` is not a number")))
            }
        };
        let count = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("`{s}` is not a count")));
        lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != header.len() {
                    return Err(bad(format!("row `{line}` has {} fields", f.len())));
                }
                let k = targets.len();
                Ok(MetricsRow {
                    engine: f[0].into(),
                    condition: f[1].into(),
                    group_kind: f[2].into(),
                    group: f[3].into(),
                    n_probes: count(f[4])?,
                    fte: num(f[5])?.ok_or_else(|| bad("fte is NA".into()))?,
                    eer: num(f[6])?,
                    fnmr: targets.iter().zip(&f[7..7 + k]).map(|(t, v)| Ok((*t, num(v)?))).collect::<Result<_>>()?,
                    n_genuine: count(f[7 + k])?,
                    n_impostor: count(f[8 + k])?,
                })
            })
            .collect()
    }
}

struct Probe {
    row: ManifestRow,
    condition: Condition,
}

struct Reference {
    path: String,
    identity: String,
    template: Vec<f64>,
}

/// Key of one metric group: (condition, kind, group).
type GroupKey = (Condition, &'static str, String);

fn groups_of(p: &Probe) -> Vec<GroupKey> {
    let mut g = vec![(p.condition, "all", "all".to_string())];
    if let Some(c) = p.row.coverage_class {
        g.push((p.condition, "coverage", c.as_str().into()));
    }
    if let Some(pl) = p.row.placement {
        g.push((p.condition, "placement", pl.as_str().into()));
    }
    if let Some(f) = &p.row.filter_name {
        g.push((p.condition, "filter", f.clone()));
    }
    g
}

pub(crate) fn evaluate(ctx: &Ctx) -> Result<()> {
    let c = ctx.config;
    let engine = BaselineEngine::synthetic(c.data.image_size);
    let refs_per_identity = c.data.references_per_identity;
    let mut references = Vec::new();
    let mut probes = Vec::new();
    for row in manifest(ctx.root, &synth_manifest(&c.data.eval_prefix))? {
        if session_of(&row.source_id)? < refs_per_identity {
            let rec = FaceRecord::load(&ctx.root.join(&row.path))?;
            match engine.embed(rec.image(), Some(rec.landmarks())) {
                Ok(template) => references.push(Reference {
                    path: row.path.clone(),
                    identity: row.identity.clone(),
                    template,
                }),
                Err(e) => log::warn!("reference {} not enrolled: {e}", row.path),
            }
        } else {
            probes.push(Probe {
                row,
                condition: Condition::Baseline,
            });
        }
    }
    for row in manifest(ctx.root, PROBES)? {
        let condition = Condition::of(row.role)?;
        probes.push(Probe { row, condition });
    }
    if references.is_empty() {
        return Err(Error::NoData("no enrolled references".into()));
    }

    let mut trials = Vec::new();
    let mut sets: BTreeMap<GroupKey, (usize, TrialSet)> = BTreeMap::new();
    let mut detections: BTreeMap<Condition, Vec<DetectionResult>> = BTreeMap::new();
    let mut detection_csv = String::from("path,condition,filter,detected,confidence,confidence_normalised\n");
    for p in &probes {
        let rec = FaceRecord::load(&ctx.root.join(&p.row.path))?;
        let lm = Some(rec.landmarks());
        let det = engine.detect(rec.image(), lm);
        let norm = minmax_normalize(&[det.confidence], det.native_range, (0.0, 1.0))?[0];
        writeln!(
            detection_csv,
            "{},{},{},{},{:.6},{:.6}",
            p.row.path,
            p.condition.as_str(),
            p.row.filter_name.as_deref().unwrap_or("none"),
            det.detected,
            det.confidence,
            norm
        )
        .unwrap();
        let template = if det.detected {
            engine.embed(rec.image(), lm).ok()
        } else {
            None
        };
        detections.entry(p.condition).or_default().push(det);

        let mut set = TrialSet::new(Vec::new(), Vec::new());
        set.total_enrol_attempts = 1;
        match &template {
            None => set.enrol_failures = 1,
            Some(t) => {
                let others: Vec<&Reference> = references.iter().filter(|r| r.identity != p.row.identity).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, &format!("impostors/{}", p.row.source_id)));
                let k = c.evaluation.impostors_per_probe.min(others.len());
                let mut picks = rand::seq::index::sample(&mut rng, others.len(), k).into_vec();
                picks.sort_unstable();
                let chosen = references
                    .iter()
                    .filter(|r| r.identity == p.row.identity)
                    .chain(picks.into_iter().map(|i| others[i]));
                for r in chosen {
                    let score = engine.compare(t, &r.template);
                    let same = r.identity == p.row.identity;
                    if same {
                        set.genuine.push(score);
                    } else {
                        set.impostor.push(score);
                    }
                    trials.push(TrialRecord {
                        probe_path: p.row.path.clone(),
                        reference_path: r.path.clone(),
                        same_identity: same,
                        condition: p.condition,
                        coverage_class: p.row.coverage_class,
                        placement: p.row.placement,
                        filter_name: p.row.filter_name.clone(),
                        score,
                    });
                }
            }
        }
        for key in groups_of(p) {
            let slot = sets.entry(key).or_insert_with(|| (0, TrialSet::new(Vec::new(), Vec::new())));
            slot.0 += 1;
            slot.1 = std::mem::replace(&mut slot.1, TrialSet::new(Vec::new(), Vec::new())).merge(&set);
        }
    }

    let targets = &c.evaluation.fmr_targets;
    let mut metrics = Vec::new();
    let mut det = String::from("engine,condition,group_kind,group,threshold,fmr,fnmr\n");
    for ((condition, kind, group), (n, set)) in &sets {
        let scored = !set.genuine.is_empty() && !set.impostor.is_empty();
        let row = MetricsRow {
            engine: engine.id().into(),
            condition: condition.as_str().into(),
            group_kind: kind.to_string(),
            group: group.clone(),
            n_probes: *n,
            fte: fte(set),
            eer: if scored { Some(eer(set)?.eer) } else { None },
            fnmr: if scored {
                fnmr_at_fmr(set, targets)?.into_iter().map(|o| (o.target_fmr, Some(o.fnmr))).collect()
            } else {
                targets.iter().map(|t| (*t, None)).collect()
            },
            n_genuine: set.genuine.len(),
            n_impostor: set.impostor.len(),
        };
        metrics.push(row);
        if scored && (*kind == "all" || *kind == "coverage") {
            let curve = crate::biometric::det_curve(set)?;
            for line in det_csv(&curve).lines().skip(1) {
                writeln!(det, "{},{},{kind},{group},{line}", engine.id(), condition.as_str()).unwrap();
            }
        }
    }

    let mut summary = String::from("engine,condition,total,error_rate,mean_confidence,std_confidence\n");
    for (condition, results) in &detections {
        let s = detection_stats(results)?;
        writeln!(
            summary,
            "{},{},{},{:.6},{:.6},{:.6}",
            engine.id(),
            condition.as_str(),
            s.total,
            s.error_rate,
            s.mean,
            s.std
        )
        .unwrap();
    }

    io::write_jsonl(&ctx.out.join("trials.jsonl"), &trials)?;
    io::write_text(&ctx.out.join("metrics.csv"), &MetricsRow::to_csv(&metrics, targets))?;
    io::write_text(&ctx.out.join("det.csv"), &det)?;
    io::write_text(&ctx.out.join("detection.csv"), &detection_csv)?;
    io::write_text(&ctx.out.join("detection_summary.csv"), &summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_round_trips() {
        let targets = [0.0001, 0.001, 0.01];
        let rows = vec![
            MetricsRow {
                engine: "baseline".into(),
                condition: "filtered".into(),
                group_kind: "coverage".into(),
                group: "high".into(),
                n_probes: 12,
                fte: 0.25,
                eer: Some(0.198),
                fnmr: vec![(0.0001, Some(1.0)), (0.001, Some(0.5)), (0.01, None)],
                n_genuine: 18,
                n_impostor: 90,
            },
            MetricsRow {
                engine: "baseline".into(),
                condition: "reconstructed".into(),
                group_kind: "all".into(),
                group: "all".into(),
                n_probes: 3,
                fte: 1.0,
                eer: None,
                fnmr: targets.iter().map(|t| (*t, None)).collect(),
                n_genuine: 0,
                n_impostor: 0,
            },
        ];
        let text = MetricsRow::to_csv(&rows, &targets);
        assert!(text.starts_with("engine,condition,group_kind,group,n_probes,fte,eer,fnmr@0.0001,fnmr@0.001,fnmr@0.01,"));
        assert_eq!(MetricsRow::parse_csv(&text).unwrap(), rows);
    }

    #[test]
    fn malformed_metrics_are_rejected() {
        assert!(MetricsRow::parse_csv("").is_err());
        assert!(MetricsRow::parse_csv("a,b\n").is_err());
        let mut text = MetricsRow::csv_header(&[0.01]);
        text.push_str("baseline,filtered,all,all,x,0,NA,NA,0,0\n");
        assert!(MetricsRow::parse_csv(&text).is_err());
    }
}
