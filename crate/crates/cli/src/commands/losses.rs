use std::path::PathBuf;

use crosstask::losses::{
    attention_mse, ce_loss, combined_loss, mean_box_embedding, modulate, triplet_object_loss, KeyStore, LossBreakdown,
    LossParts,
};
use serde::{Deserialize, Serialize};

use super::CommandReport;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{read_field, read_mask, BoxesDocument, KeysFile};
use crate::gradcheck::{check_all, GradCheck};
use crate::io::write_atomic;

/// Coordinates sampled per tensor by `--check-grads`.
pub const GRADCHECK_COORDS: usize = 256;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Default)]
pub struct LossesArgs {
    pub logits: PathBuf,
    pub alpha: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub coarse_mask: PathBuf,
    pub box_mask: PathBuf,
    /// Ground-truth boxes whose mean embeddings are the triplet queries.
    pub boxes: Option<PathBuf>,
    pub image_id: Option<String>,
    pub keys: Option<PathBuf>,
    pub det_loss: f64,
    pub m4b_loss: f64,
    pub seg_loss: f64,
    /// Overrides the configured lambda.
    pub lambda: Option<f64>,
    pub check_grads: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossesReport {
    pub l_det_supervised: f64,
    pub l_m4b: f64,
    pub l_seg_supervised: f64,
    pub l_s: f64,
    pub l_alpha: f64,
    pub l_object: f64,
    pub l_b4m: f64,
    pub lambda: f64,
    pub total: f64,
    pub triplet_queries: usize,
    pub triplet_active: usize,
    pub gradcheck: Option<GradCheckReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub ce: f64,
    pub attention: f64,
    pub modulate_logits: f64,
    pub modulate_alpha: f64,
    pub triplet: Option<f64>,
    pub max: f64,
    pub passed: bool,
}

impl From<&GradCheck> for GradCheckReport {
    fn from(g: &GradCheck) -> Self {
        GradCheckReport {
            ce: g.ce,
            attention: g.attention,
            modulate_logits: g.modulate_logits,
            modulate_alpha: g.modulate_alpha,
            triplet: g.triplet,
            max: g.max(),
            passed: g.max() < GRADCHECK_TOLERANCE,
        }
    }
}

impl LossesReport {
    fn new(b: &LossBreakdown, queries: usize, active: usize, gradcheck: Option<GradCheckReport>) -> Self {
        LossesReport {
            l_det_supervised: b.l_det_supervised,
            l_m4b: b.l_m4b,
            l_seg_supervised: b.l_seg_supervised,
            l_s: b.l_s,
            l_alpha: b.l_alpha,
            l_object: b.l_object,
            l_b4m: b.l_b4m,
            lambda: b.lambda,
            total: b.total,
            triplet_queries: queries,
            triplet_active: active,
            gradcheck,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn cmd_losses(args: &LossesArgs, cfg: &RunConfig) -> Result<CommandReport> {
    let logits = read_field(&args.logits)?;
    let alpha = read_field(&args.alpha)?;
    let classes = u8::try_from(logits.channels().saturating_sub(1)).unwrap_or(u8::MAX);
    let coarse = read_mask(&args.coarse_mask, classes)?;
    let box_mask = read_mask(&args.box_mask, classes)?;
    let shape_err = |e: crosstask::losses::LossError| CliError::data(&args.logits, e.to_string());

    let modulated = modulate(&logits, &alpha).map_err(|e| CliError::data(&args.alpha, e.to_string()))?;
    let (l_s, _) = ce_loss(&modulated, &coarse).map_err(|e| CliError::data(&args.coarse_mask, e.to_string()))?;
    let (l_alpha, _) = attention_mse(&alpha, &box_mask).map_err(|e| CliError::data(&args.box_mask, e.to_string()))?;

    let keys = match &args.keys {
        Some(p) => KeysFile::read(p)?.into_store(cfg.key_capacity).map_err(|m| CliError::data(p, m))?,
        None => KeyStore::new(cfg.key_capacity),
    };
    let mut queries = Vec::new();
    if let (Some(zp), Some(bp)) = (&args.embeddings, &args.boxes) {
        let z = read_field(zp)?;
        let doc = BoxesDocument::read(bp)?;
        let entry = match &args.image_id {
            Some(id) => doc.image(id).ok_or_else(|| CliError::data(bp, format!("no image with id {id:?}")))?,
            None if doc.images.len() == 1 => &doc.images[0],
            None => return Err(CliError::Usage(format!("{} holds several images; choose one with --id", bp.display()))),
        };
        for b in entry.labeled() {
            if let Some(q) = mean_box_embedding(&z, &modulated, &b.bbox, b.category).map_err(shape_err)? {
                queries.push((q, b.category));
            }
        }
    } else if args.embeddings.is_some() != args.boxes.is_some() {
        return Err(CliError::Usage("--embeddings and --boxes go together".into()));
    }
    let triplet = triplet_object_loss(&queries, &keys, cfg.gamma).map_err(shape_err)?;

    let lambda = args.lambda.unwrap_or(cfg.lambda);
    let parts = LossParts {
        l_det_supervised: args.det_loss,
        l_m4b: args.m4b_loss,
        l_seg_supervised: args.seg_loss,
        l_s,
        l_alpha,
        l_object: triplet.loss,
    };
    let breakdown = combined_loss(&parts, lambda).map_err(|e| CliError::Usage(e.to_string()))?;

    let gradcheck = if args.check_grads {
        let g = check_all(&logits, &alpha, &coarse, &box_mask, &queries, &keys, cfg.gamma, GRADCHECK_COORDS, cfg.seed)
            .map_err(|m| CliError::data(&args.logits, m))?;
        Some(GradCheckReport::from(&g))
    } else {
        None
    };
    let report = LossesReport::new(&breakdown, queries.len(), triplet.active, gradcheck);
    if let Some(out) = &args.out {
        write_atomic(out, report.to_json().as_bytes())?;
    }

    let mut lines = vec![
        format!("L_det (supervised) {:.9}", report.l_det_supervised),
        format!("L_M4B              {:.9}", report.l_m4b),
        format!("L_seg (supervised) {:.9}", report.l_seg_supervised),
        format!("L_S                {:.9}", report.l_s),
        format!("L_alpha            {:.9}", report.l_alpha),
        format!("L_object           {:.9} ({} of {} queries active)", report.l_object, triplet.active, queries.len()),
        format!("L_B4M              {:.9}", report.l_b4m),
        format!("lambda             {}", report.lambda),
        format!("total              {:.9}", report.total),
    ];
    let mut partial = false;
    if let Some(g) = &report.gradcheck {
        let triplet = g.triplet.map_or("n/a".to_string(), |t| format!("{t:.3e}"));
        lines.push(format!(
            "gradcheck ce {:.3e} mse {:.3e} modulate {:.3e}/{:.3e} triplet {triplet}",
            g.ce, g.attention, g.modulate_logits, g.modulate_alpha
        ));
        lines.push(format!("gradcheck max relative error {:.3e} ({})", g.max, if g.passed { "ok" } else { "FAILED" }));
        partial = !g.passed;
    }
    Ok(CommandReport { lines, warnings: Vec::new(), partial })
}
