//! Greedy-decode evaluation, part scoring and the qualitative good/bad
//! sample bundle with attention exports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::controller::write_attention_pgm;
use crate::corpus::{
    count_special, is_special, split_parts, SpecialCounts, StructureFlags, Vocab, END_TOKEN,
};
use crate::error::{Error, Result};
use crate::generator::{greedy_decode, write_beta_csv};
use crate::harness::config::TrainConfig;
use crate::harness::train::{model_configs, NormStats};
use crate::metrics::{meteor_sentence, score_parts, PartScores};
use crate::numerics::params::ParamStore;
use crate::synth::Clip;

#[derive(Debug, Clone)]
pub struct SampleEval {
    pub clip_id: String,
    /// Emitted tokens (specials included, `<END>` appended when emitted).
    pub generated: Vec<String>,
    pub truth: Vec<String>,
    pub meteor: f64,
    pub flags: StructureFlags,
    pub good: bool,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub variant: String,
    pub scores: PartScores,
    pub samples: Vec<SampleEval>,
    /// Free-running expected-count penalties, mean over clips.
    pub free_null_penalty: f64,
    pub free_struct_penalty: f64,
    /// Hard special-token counts over all decodes.
    pub hard_counts: SpecialCounts,
    pub threshold: f64,
    pub runtime_secs: f64,
    pub config_echo: String,
    pub norm: NormStats,
}

fn strip(tokens: &[String]) -> Vec<String> {
    tokens.iter().filter(|t| !is_special(t)).cloned().collect()
}

/// Greedy-decodes every clip of the split and scores the corpus; the
/// checkpoint's embedding rows must match the dataset vocabulary.
pub fn evaluate(
    store: &ParamStore,
    cfg: &TrainConfig,
    split: &[Clip],
    vocab: &Vocab,
) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let embed_rows = store.get(crate::generator::names::EMBED).shape()[0];
    if embed_rows != vocab.size() {
        return Err(Error::VocabMismatch {
            expected: embed_rows,
            actual: vocab.size(),
        });
    }
    let started = Instant::now();
    let (ctrl_cfg, gen_cfg) = model_configs(cfg, vocab.size());

    let mut samples = Vec::with_capacity(split.len());
    let mut candidates = Vec::with_capacity(split.len());
    let mut references = Vec::with_capacity(split.len());
    let mut free_null = 0.0;
    let mut free_struct = 0.0;
    let mut hard_counts = SpecialCounts::default();
    let mut norm = NormStats::default();

    for clip in split {
        let decode = greedy_decode(store, &clip.frames, vocab, &ctrl_cfg, &gen_cfg, cfg.max_len)?;
        for row in &decode.word_rows {
            norm.record_row(row);
        }
        for beta in &decode.betas {
            norm.record_row(beta);
        }
        for alpha in &decode.alphas {
            norm.record_row(alpha);
        }

        // Expected counts over the steps actually taken.
        let expected = |id: usize| -> f64 { decode.word_rows.iter().map(|row| row[id]).sum() };
        free_null += cfg.gamma_null * expected(crate::corpus::NULL_ID);
        free_struct += cfg.gamma_other
            * ((expected(crate::corpus::START_ID) - 1.0).abs()
                + (expected(crate::corpus::SEP_ID) - 1.0).abs()
                + (expected(crate::corpus::END_ID) - 1.0).abs());

        let mut generated = decode.tokens.clone();
        if decode.terminated {
            generated.push(END_TOKEN.to_string());
        }
        let counts = count_special(&generated);
        hard_counts.null += counts.null;
        hard_counts.start += counts.start;
        hard_counts.end += counts.end;
        hard_counts.sep += counts.sep;

        let truth = clip.caption.caption.tokens.clone();
        let meteor = meteor_sentence(&strip(&generated), &strip(&truth)).score;
        let flags = split_parts(&generated).flags;
        samples.push(SampleEval {
            clip_id: clip.id.clone(),
            generated: generated.clone(),
            truth: truth.clone(),
            meteor,
            flags,
            good: meteor >= cfg.meteor_threshold,
        });
        candidates.push(generated);
        references.push(truth);
    }

    let scores = score_parts(&candidates, &references);
    Ok(EvalReport {
        variant: cfg.variant_label(),
        scores,
        samples,
        free_null_penalty: free_null / split.len() as f64,
        free_struct_penalty: free_struct / split.len() as f64,
        hard_counts,
        threshold: cfg.meteor_threshold,
        runtime_secs: started.elapsed().as_secs_f64(),
        config_echo: cfg.render(),
        norm,
    })
}

/// Per-sample CSV: one row per evaluated clip.
pub fn render_per_sample_csv(report: &EvalReport) -> String {
    let mut out = String::from("clip_id,meteor,category,missing_sep,missing_end,generated,truth\n");
    for s in &report.samples {
        out.push_str(&format!(
            "{},{:.4},{},{},{},\"{}\",\"{}\"\n",
            s.clip_id,
            s.meteor,
            if s.good { "good" } else { "bad" },
            s.flags.missing_sep,
            s.flags.missing_end,
            s.generated.join(" "),
            s.truth.join(" "),
        ));
    }
    out
}

/// Machine-readable evaluation summary. Runtime goes to a separate
/// timings file so every file under the output directory other than it is
/// byte-deterministic for a fixed (inputs, argv) pair.
#[derive(Serialize)]
struct EvalSummary<'a> {
    variant: &'a str,
    samples: usize,
    threshold: f64,
    good: usize,
    flagged_candidates: usize,
    free_null_penalty: f64,
    free_struct_penalty: f64,
    hard_null_count: usize,
    hard_start_count: usize,
    hard_sep_count: usize,
    hard_end_count: usize,
    max_row_sum_err: f64,
    config: &'a str,
}

pub fn write_eval_outputs(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let rows = crate::metrics::report_rows(&report.variant, &report.scores);
    let scores_path = dir.join("scores.csv");
    std::fs::write(&scores_path, crate::metrics::render_report_csv(&rows))
        .map_err(|e| Error::io(scores_path.display().to_string(), e))?;

    let per_sample_path = dir.join("per_sample.csv");
    std::fs::write(&per_sample_path, render_per_sample_csv(report))
        .map_err(|e| Error::io(per_sample_path.display().to_string(), e))?;

    let summary = EvalSummary {
        variant: &report.variant,
        samples: report.samples.len(),
        threshold: report.threshold,
        good: report.samples.iter().filter(|s| s.good).count(),
        flagged_candidates: report.scores.flagged_candidates,
        free_null_penalty: report.free_null_penalty,
        free_struct_penalty: report.free_struct_penalty,
        hard_null_count: report.hard_counts.null,
        hard_start_count: report.hard_counts.start,
        hard_sep_count: report.hard_counts.sep,
        hard_end_count: report.hard_counts.end,
        max_row_sum_err: report.norm.max_row_err,
        config: &report.config_echo,
    };
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Json {
        path: summary_path.display().to_string(),
        source: e,
    })?;
    std::fs::write(&summary_path, text + "\n")
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;

    let timings_path = dir.join("timings.txt");
    std::fs::write(&timings_path, format!("eval_runtime_secs = {}\n", report.runtime_secs))
        .map_err(|e| Error::io(timings_path.display().to_string(), e))
}

/// One qualitative sample with its attention export paths.
#[derive(Debug, Clone)]
pub struct QualitativeSample {
    pub clip_id: String,
    pub generated: String,
    pub truth: String,
    pub meteor: f64,
    pub good: bool,
    pub pgm_paths: Vec<PathBuf>,
    pub beta_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct QualitativeBundle {
    pub samples: Vec<QualitativeSample>,
    /// Set when `k` exceeded half the split and was clamped.
    pub clamped_k: Option<usize>,
}

/// Top-k and bottom-k samples by sentence METEOR, with spatial attention
/// PGMs and temporal attention CSVs written under `dir/attention/`.
pub fn qualitative_report(
    store: &ParamStore,
    cfg: &TrainConfig,
    split: &[Clip],
    vocab: &Vocab,
    report: &EvalReport,
    k: usize,
    dir: &Path,
) -> Result<QualitativeBundle> {
    let attention_dir = dir.join("attention");
    std::fs::create_dir_all(&attention_dir)
        .map_err(|e| Error::io(attention_dir.display().to_string(), e))?;
    let (ctrl_cfg, gen_cfg) = model_configs(cfg, vocab.size());

    let mut order: Vec<usize> = (0..report.samples.len()).collect();
    // Deterministic rank: score, then clip id.
    order.sort_by(|&a, &b| {
        let sa = &report.samples[a];
        let sb = &report.samples[b];
        sa.meteor
            .partial_cmp(&sb.meteor)
            .unwrap()
            .then_with(|| sa.clip_id.cmp(&sb.clip_id))
    });

    let clamped = k > report.samples.len() / 2;
    let k_eff = k.min(report.samples.len() / 2).max(usize::from(!report.samples.is_empty()));

    let mut selected: Vec<usize> = Vec::new();
    for &idx in order.iter().rev().take(k_eff) {
        selected.push(idx); // top-k, best first
    }
    for &idx in order.iter().take(k_eff) {
        if !selected.contains(&idx) {
            selected.push(idx); // bottom-k
        }
    }

    let mut samples = Vec::with_capacity(selected.len());
    for idx in selected {
        let sample = &report.samples[idx];
        let clip = split
            .iter()
            .find(|c| c.id == sample.clip_id)
            .expect("sample ids come from the split");
        let decode = greedy_decode(store, &clip.frames, vocab, &ctrl_cfg, &gen_cfg, cfg.max_len)?;

        let mut pgm_paths = Vec::with_capacity(decode.alphas.len());
        for (t, alpha) in decode.alphas.iter().enumerate() {
            let path = attention_dir.join(format!("{}_f{t}.pgm", clip.id));
            write_attention_pgm(alpha, cfg.grid, &path)?;
            pgm_paths.push(path);
        }
        let beta_path = attention_dir.join(format!("{}_beta.csv", clip.id));
        write_beta_csv(&decode.betas, &beta_path)?;

        samples.push(QualitativeSample {
            clip_id: sample.clip_id.clone(),
            generated: sample.generated.join(" "),
            truth: sample.truth.join(" "),
            meteor: sample.meteor,
            good: sample.good,
            pgm_paths,
            beta_path,
        });
    }

    let bundle = QualitativeBundle {
        samples,
        clamped_k: clamped.then_some(k_eff),
    };
    let samples_path = dir.join("samples.csv");
    let mut out = String::from("clip_id,meteor,category,generated,truth,beta_csv\n");
    for s in &bundle.samples {
        out.push_str(&format!(
            "{},{:.4},{},\"{}\",\"{}\",{}\n",
            s.clip_id,
            s.meteor,
            if s.good { "good" } else { "bad" },
            s.generated,
            s.truth,
            s.beta_path.file_name().unwrap().to_string_lossy(),
        ));
    }
    std::fs::write(&samples_path, out).map_err(|e| Error::io(samples_path.display().to_string(), e))?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::train::{build_vocab_for, init_model, train};
    use crate::synth::{build_dataset, SynthConfig};

    fn setup() -> (TrainConfig, crate::synth::DatasetSplits, Vocab, ParamStore) {
        let synth_cfg = SynthConfig {
            n: 20,
            frames: 3,
            grid: 2,
            feat_dim: 5,
            max_len: 18,
            seed: 4,
            ratios: [0.6, 0.2, 0.2],
            noise: 0.05,
        };
        let splits = build_dataset(&synth_cfg).unwrap();
        let cfg = TrainConfig {
            max_len: 18,
            d_h: 8,
            d_z: 5,
            d_p: 5,
            d_e: 6,
            grid: 2,
            feat_dim: 5,
            frames: 3,
            batch_size: 4,
            epochs: 1,
            seed: 4,
            ..TrainConfig::default()
        };
        let vocab = build_vocab_for(&splits).unwrap();
        let store = init_model(&cfg, vocab.size());
        (cfg, splits, vocab, store)
    }

    #[test]
    fn report_row_count_equals_split_size() {
        let (cfg, splits, vocab, store) = setup();
        let report = evaluate(&store, &cfg, &splits.test, &vocab).unwrap();
        assert_eq!(report.samples.len(), splits.test.len());
        for value in report.scores.values() {
            assert!((0.0..=100.0).contains(&value));
        }
        assert!(report.norm.max_row_err < 1e-9);
    }

    #[test]
    fn vocab_mismatch_is_rejected() {
        let (cfg, splits, _vocab, store) = setup();
        let small_vocab = Vocab::build([vec!["a"]]).unwrap();
        assert!(matches!(
            evaluate(&store, &cfg, &splits.test, &small_vocab),
            Err(Error::VocabMismatch { .. })
        ));
    }

    #[test]
    fn oracle_mode_scores_perfectly() {
        // Scoring truths against truths through the same split/score path
        // used for generations gives 100 on both BLEU parts.
        let (_, splits, _, _) = setup();
        let captions: Vec<Vec<String>> = splits
            .test
            .iter()
            .map(|c| c.caption.caption.tokens.clone())
            .collect();
        let scores = score_parts(&captions, &captions);
        assert_eq!(scores.description_bleu, 100.0);
        assert_eq!(scores.explanation_bleu, 100.0);
    }

    #[test]
    fn categories_follow_the_threshold_rule() {
        let (cfg, splits, vocab, store) = setup();
        let report = evaluate(&store, &cfg, &splits.test, &vocab).unwrap();
        for sample in &report.samples {
            assert_eq!(sample.good, sample.meteor >= cfg.meteor_threshold);
        }
    }

    #[test]
    fn qualitative_bundle_exports_attention_files() {
        let (cfg, splits, vocab, _) = setup();
        // A briefly trained model keeps decode lengths realistic.
        let outcome = train(&cfg, &splits, &vocab).unwrap();
        let report = evaluate(&outcome.store, &cfg, &splits.test, &vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bundle =
            qualitative_report(&outcome.store, &cfg, &splits.test, &vocab, &report, 1, dir.path())
                .unwrap();
        assert_eq!(bundle.samples.len(), 2); // top-1 + bottom-1
        for sample in &bundle.samples {
            assert_eq!(sample.pgm_paths.len(), cfg.frames);
            for pgm in &sample.pgm_paths {
                let text = std::fs::read_to_string(pgm).unwrap();
                assert!(text.starts_with("P2\n"));
            }
            assert!(sample.beta_path.exists());
        }
        assert!(dir.path().join("samples.csv").exists());
    }

    #[test]
    fn oversized_k_is_clamped_with_note() {
        let (cfg, splits, vocab, store) = setup();
        let report = evaluate(&store, &cfg, &splits.test, &vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bundle =
            qualitative_report(&store, &cfg, &splits.test, &vocab, &report, 100, dir.path())
                .unwrap();
        assert!(bundle.clamped_k.is_some());
        assert!(bundle.samples.len() <= splits.test.len());
    }

    #[test]
    fn eval_outputs_are_written_and_deterministic() {
        let (cfg, splits, vocab, store) = setup();
        let report = evaluate(&store, &cfg, &splits.test, &vocab).unwrap();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_eval_outputs(&report, dir1.path()).unwrap();
        let report2 = evaluate(&store, &cfg, &splits.test, &vocab).unwrap();
        write_eval_outputs(&report2, dir2.path()).unwrap();
        for file in ["scores.csv", "per_sample.csv"] {
            assert_eq!(
                std::fs::read(dir1.path().join(file)).unwrap(),
                std::fs::read(dir2.path().join(file)).unwrap(),
                "{file} must be byte-identical"
            );
        }
        let scores = std::fs::read_to_string(dir1.path().join("scores.csv")).unwrap();
        assert!(scores.starts_with("variant,part,metric,value\n"));
    }
}
