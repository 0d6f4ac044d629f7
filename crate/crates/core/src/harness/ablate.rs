//! The four-variant ablation and the (lambda_pos, gamma_null) sweep.

use crate::corpus::Vocab;
use crate::error::Result;
use crate::harness::config::TrainConfig;
use crate::harness::eval::evaluate;
use crate::harness::train::train;
use crate::metrics::PartScores;
use crate::synth::DatasetSplits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    Standard,
    PosPrediction,
    TokenPenalties,
    PosAndPenalties,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [
        AblationVariant::Standard,
        AblationVariant::PosPrediction,
        AblationVariant::TokenPenalties,
        AblationVariant::PosAndPenalties,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Standard => "Standard Model",
            AblationVariant::PosPrediction => "Standard + PoS Prediction",
            AblationVariant::TokenPenalties => "Standard + Token Penalties",
            AblationVariant::PosAndPenalties => "Standard + PoS Prediction + Token Penalties",
        }
    }

    /// (lambda_pos, gamma_null, gamma_other) implied by the variant.
    pub fn loss_weights(self) -> (f64, f64, f64) {
        match self {
            AblationVariant::Standard => (0.0, 0.0, 0.0),
            AblationVariant::PosPrediction => (0.3, 0.0, 0.0),
            AblationVariant::TokenPenalties => (0.0, 4.0, 50.0),
            AblationVariant::PosAndPenalties => (0.3, 4.0, 50.0),
        }
    }

    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let (lambda_pos, gamma_null, gamma_other) = self.loss_weights();
        TrainConfig {
            lambda_pos,
            gamma_null,
            gamma_other,
            ..base.clone()
        }
    }
}

/// One scored row of an ablation or sweep table.
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub name: String,
    pub scores: PartScores,
}

fn run_one(name: &str, cfg: &TrainConfig, splits: &DatasetSplits, vocab: &Vocab) -> Result<VariantResult> {
    let outcome = train(cfg, splits, vocab)?;
    let report = evaluate(&outcome.store, cfg, &splits.test, vocab)?;
    Ok(VariantResult {
        name: name.to_string(),
        scores: report.scores,
    })
}

/// Trains and evaluates the four variants with identical seeds and data.
pub fn ablate(base: &TrainConfig, splits: &DatasetSplits, vocab: &Vocab) -> Result<Vec<VariantResult>> {
    AblationVariant::ALL
        .iter()
        .map(|variant| run_one(variant.name(), &variant.configure(base), splits, vocab))
        .collect()
}

/// Sweep rows: lambda_pos in {0, 0.15, 0.3} (gamma_null 0), then
/// gamma_null in {4, 12} (lambda_pos 0); gamma_other is 0 throughout.
pub const SWEEP_GRID: [(f64, f64); 5] = [(0.0, 0.0), (0.15, 0.0), (0.3, 0.0), (0.0, 4.0), (0.0, 12.0)];

pub fn sweep(base: &TrainConfig, splits: &DatasetSplits, vocab: &Vocab) -> Result<Vec<VariantResult>> {
    SWEEP_GRID
        .iter()
        .map(|&(lambda_pos, gamma_null)| {
            let cfg = TrainConfig {
                lambda_pos,
                gamma_null,
                gamma_other: 0.0,
                ..base.clone()
            };
            let name = format!("lambda_pos={lambda_pos} + gamma_null={gamma_null}");
            run_one(&name, &cfg, splits, vocab)
        })
        .collect()
}

/// Wide table mirroring the paper's row/column layout: one row per
/// variant, four score columns.
pub fn render_wide_table(results: &[VariantResult]) -> String {
    let mut out = String::from(
        "variant,meteor_description,meteor_explanation,bleu_description,bleu_explanation\n",
    );
    for result in results {
        out.push_str(&format!(
            "\"{}\",{:.2},{:.2},{:.2},{:.2}\n",
            result.name,
            result.scores.description_meteor,
            result.scores.explanation_meteor,
            result.scores.description_bleu,
            result.scores.explanation_bleu,
        ));
    }
    out
}

/// Long-format rows for all variants (`variant,part,metric,value`).
pub fn render_long_report(results: &[VariantResult]) -> String {
    let mut rows = Vec::new();
    for result in results {
        rows.extend(crate::metrics::report_rows(&result.name, &result.scores));
    }
    crate::metrics::render_report_csv(&rows)
}
