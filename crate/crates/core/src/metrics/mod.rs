//! Corpus-level BLEU and METEOR, applied separately to the description and
//! explanation parts of each caption.

pub mod bleu;
pub mod meteor;

pub use bleu::{brevity_penalty, clipped_precision, corpus_bleu, BleuResult, ClippedPrecision};
pub use meteor::{corpus_meteor, meteor_sentence, MeteorResult};

use crate::corpus::{is_special, split_parts};

/// The four Table-style scores, each a percentage in [0, 100].
#[derive(Debug, Clone, PartialEq)]
pub struct PartScores {
    pub description_meteor: f64,
    pub description_bleu: f64,
    pub explanation_meteor: f64,
    pub explanation_bleu: f64,
    pub description_bleu_detail: BleuResult,
    pub explanation_bleu_detail: BleuResult,
    /// Candidates whose structure was incomplete (missing sep/end markers).
    pub flagged_candidates: usize,
}

impl PartScores {
    pub fn values(&self) -> [f64; 4] {
        [
            self.description_meteor,
            self.explanation_meteor,
            self.description_bleu,
            self.explanation_bleu,
        ]
    }
}

fn strip_specials(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !is_special(t))
        .cloned()
        .collect()
}

/// Splits every caption into its description and explanation, strips the
/// structural tokens, and scores the two sub-corpora with both metrics.
///
/// Candidates and references are aligned by index. Structure defects in the
/// candidates are flagged, not rejected; an empty part simply scores 0.
pub fn score_parts<C, R>(candidates: &[C], references: &[R]) -> PartScores
where
    C: AsRef<[String]>,
    R: AsRef<[String]>,
{
    assert_eq!(
        candidates.len(),
        references.len(),
        "candidate/reference corpora must be aligned"
    );
    let mut cand_desc = Vec::with_capacity(candidates.len());
    let mut cand_expl = Vec::with_capacity(candidates.len());
    let mut ref_desc = Vec::with_capacity(references.len());
    let mut ref_expl = Vec::with_capacity(references.len());
    let mut flagged = 0usize;

    for (cand, reference) in candidates.iter().zip(references) {
        let cparts = split_parts(cand.as_ref());
        let rparts = split_parts(reference.as_ref());
        if cparts.flags.missing_sep || cparts.flags.missing_end {
            flagged += 1;
        }
        cand_desc.push(strip_specials(&cparts.description));
        cand_expl.push(strip_specials(&cparts.explanation));
        ref_desc.push(strip_specials(&rparts.description));
        ref_expl.push(strip_specials(&rparts.explanation));
    }

    let desc_bleu = corpus_bleu(&cand_desc, &ref_desc);
    let expl_bleu = corpus_bleu(&cand_expl, &ref_expl);
    PartScores {
        description_meteor: corpus_meteor(&cand_desc, &ref_desc),
        description_bleu: desc_bleu.score,
        explanation_meteor: corpus_meteor(&cand_expl, &ref_expl),
        explanation_bleu: expl_bleu.score,
        description_bleu_detail: desc_bleu,
        explanation_bleu_detail: expl_bleu,
        flagged_candidates: flagged,
    }
}

/// One row of the long-format report CSV.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub variant: String,
    pub part: &'static str,
    pub metric: &'static str,
    pub value: f64,
}

pub fn report_rows(variant: &str, scores: &PartScores) -> Vec<ReportRow> {
    let mk = |part, metric, value| ReportRow {
        variant: variant.to_string(),
        part,
        metric,
        value,
    };
    vec![
        mk("description", "METEOR", scores.description_meteor),
        mk("explanation", "METEOR", scores.explanation_meteor),
        mk("description", "BLEU", scores.description_bleu),
        mk("explanation", "BLEU", scores.explanation_bleu),
    ]
}

/// Renders rows as `variant,part,metric,value` with two-decimal percentages.
pub fn render_report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("variant,part,metric,value\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{:.2}\n",
            row.variant, row.part, row.metric, row.value
        ));
    }
    out
}
