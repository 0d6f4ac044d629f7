//! Whole-model gradient verification: every loss component and the
//! combined objective, checked against central differences per parameter
//! group on one small synthetic clip.

use std::collections::BTreeMap;

use crate::controller;
use crate::corpus::Vocab;
use crate::error::Result;
use crate::generator::{self, GeneratorParams};
use crate::harness::config::TrainConfig;
use crate::harness::train::{clip_objective, model_configs, prepare_clips};
use crate::numerics::gradcheck::{grad_check, GradCheckOpts};
use crate::numerics::params::ParamStore;
use crate::rng::{salt, SplitMix64};
use crate::synth::{realize_caption, realize_controls, realize_features, sample_scenario, Clip};

pub const PARAM_GROUPS: [&str; 8] = [
    "ctrl.attn",
    "ctrl.lstm",
    "ctrl.head",
    "gen.embed",
    "gen.tattn",
    "gen.lstm",
    "gen.pos",
    "gen.word",
];

/// Max relative error per (loss component, parameter group).
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// loss name -> group -> max relative error.
    pub table: BTreeMap<&'static str, BTreeMap<&'static str, f64>>,
    pub max_rel_err: f64,
    /// Max |gradient| over the PoS pathway when the PoS input is zeroed
    /// under lambda_pos = 0; must be exactly 0.
    pub ablated_pos_grad: f64,
    pub coords_checked: usize,
    pub runtime_secs: f64,
}

impl VerifyReport {
    pub fn render_csv(&self) -> String {
        let mut out = String::from("loss,group,max_rel_err\n");
        for (loss, groups) in &self.table {
            for (group, err) in groups {
                out.push_str(&format!("{loss},{group},{err:e}\n"));
            }
        }
        out
    }
}

/// Shrinks a config to gradient-check scale (d_h <= 16 enforced).
fn small_dims(cfg: &TrainConfig) -> TrainConfig {
    let feat_dim = cfg.feat_dim.min(6);
    TrainConfig {
        d_h: cfg.d_h.min(8),
        d_p: cfg.d_p.min(6),
        d_e: cfg.d_e.min(6),
        feat_dim,
        d_z: feat_dim,
        grid: cfg.grid.min(3),
        frames: cfg.frames.min(3),
        max_len: cfg.max_len.min(18),
        ..cfg.clone()
    }
}

fn synthetic_clip(cfg: &TrainConfig) -> Result<(Clip, Vocab)> {
    let scenario = sample_scenario(cfg.seed);
    let caption = realize_caption(&scenario, cfg.max_len)?;
    let vocab = Vocab::build([caption.tokens.clone()])?;
    let clip = Clip {
        id: "gradcheck".to_string(),
        frames: realize_features(&scenario, cfg.frames, cfg.grid, cfg.feat_dim, 0.1),
        controls: realize_controls(&scenario, cfg.frames),
        caption: crate::corpus::TaggedCaption::new(caption, &crate::corpus::LexiconTagger::default()),
    };
    Ok((clip, vocab))
}

/// Runs grad_check for L_g, L_g_pos, P_null, P_struct, the controller loss
/// and the combined objective, reporting the max relative error per
/// parameter group, plus the exact-zero check for the ablated PoS pathway.
pub fn verify_gradients(base: &TrainConfig) -> Result<VerifyReport> {
    let started = std::time::Instant::now();
    let cfg = small_dims(base);
    assert!(cfg.d_h <= 16);
    let (clip, vocab) = synthetic_clip(&cfg)?;
    let (ctrl_cfg, gen_cfg) = model_configs(&cfg, vocab.size());
    debug_assert!(gen_cfg.use_pos, "verification needs the full pathway");

    let mut store = ParamStore::new();
    let mut rng = SplitMix64::salted(cfg.seed, salt::PARAMS);
    controller::init_params(&mut store, &ctrl_cfg, &mut rng);
    generator::init_params(&mut store, &gen_cfg, &mut rng);

    let clips = vec![clip.clone()];
    let prepared = prepare_clips(&clips, &vocab)?;
    let prep = &prepared[0];

    let opts = GradCheckOpts {
        eps: 1e-5,
        coords_per_param: 32,
        seed: cfg.seed,
    };

    enum LossPick {
        Word,
        Pos,
        Null,
        Struct,
        Ctrl,
        Combined,
    }
    let losses: [(&'static str, LossPick); 6] = [
        ("L_g", LossPick::Word),
        ("L_g_pos", LossPick::Pos),
        ("P_null", LossPick::Null),
        ("P_struct", LossPick::Struct),
        ("L_ctrl", LossPick::Ctrl),
        ("L_total", LossPick::Combined),
    ];

    let mut table = BTreeMap::new();
    let mut max_rel_err = 0.0f64;
    let mut coords_checked = 0;
    for (name, pick) in losses {
        let report = grad_check(
            &store,
            |g, s| {
                let obj = clip_objective(g, s, &clip, prep, &cfg, &ctrl_cfg, &gen_cfg)?;
                Ok(match pick {
                    LossPick::Word => obj.word_loss,
                    LossPick::Pos => obj.pos_loss.expect("PoS pathway enabled"),
                    LossPick::Null => obj.p_null,
                    LossPick::Struct => obj.p_struct,
                    LossPick::Ctrl => obj.ctrl_loss,
                    LossPick::Combined => obj.full,
                })
            },
            &opts,
        )?;
        let mut groups = BTreeMap::new();
        for group in PARAM_GROUPS {
            groups.insert(group, report.max_for_prefix(group));
        }
        max_rel_err = max_rel_err.max(report.max_rel_err);
        coords_checked += report.coords_checked;
        table.insert(name, groups);
    }

    // Disconnection: with the PoS input zeroed and lambda_pos = 0, the PoS
    // head and W_pos must receive exactly zero gradient from the combined
    // objective.
    let ablated_cfg = TrainConfig {
        lambda_pos: 0.0,
        ..cfg.clone()
    };
    let (_, ablated_gen_cfg) = model_configs(&ablated_cfg, vocab.size());
    debug_assert!(!ablated_gen_cfg.use_pos);
    let mut g = crate::numerics::Graph::new();
    let ctrl_trace = controller::forward(&mut g, &store, &clip.frames, &ctrl_cfg)?;
    let ctrl_loss = controller::controller_loss(&mut g, &ctrl_trace.preds, &clip.controls)?;
    let params = GeneratorParams::register(&mut g, &store);
    let trace =
        generator::forward_teacher(&mut g, &params, &ctrl_trace, &prep.inputs, &ablated_gen_cfg)?;
    let word = generator::word_loss(&mut g, trace.word_matrix, &prep.targets)?;
    let p_null = generator::null_penalty(&mut g, trace.word_matrix, ablated_cfg.gamma_null)?;
    let p_struct = generator::structure_penalty(&mut g, trace.word_matrix, ablated_cfg.gamma_other)?;
    let gen_total = generator::total_loss(&mut g, word, None, p_null, p_struct, 0.0)?;
    let weighted_ctrl = g.scale(ctrl_loss, ablated_cfg.w_ctrl);
    let full = g.add(weighted_ctrl, gen_total)?;
    g.backward(full)?;
    let grads = g.param_grads();
    let ablated_pos_grad = [
        generator::names::POS_WH,
        generator::names::POS_WZ,
        generator::names::POS_WOUT,
        generator::names::WORD_WPOS,
    ]
    .iter()
    .flat_map(|name| grads[*name].data().iter().copied())
    .fold(0.0f64, |acc, v| acc.max(v.abs()));

    Ok(VerifyReport {
        table,
        max_rel_err,
        ablated_pos_grad,
        coords_checked,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}
