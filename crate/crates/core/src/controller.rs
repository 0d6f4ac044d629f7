//! LSTM vehicle controller with spatial attention.
//!
//! Per frame, additive attention over the feature-grid cells produces a
//! weight vector alpha and a context (the alpha-weighted cell average);
//! an LSTM step over the context followed by an affine head predicts
//! acceleration and course change. The per-frame alphas and contexts are
//! exposed so the language generator can consume them directly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, Node};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use crate::rng::SplitMix64;

/// Predicted or ground-truth vehicle control values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSignal {
    /// m/s^2
    pub acceleration: f64,
    /// deg/s
    pub course_change: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ControllerConfig {
    pub feat_dim: usize,
    pub d_h: usize,
    /// Attention scorer width.
    pub d_attn: usize,
}

pub mod names {
    pub const ATTN_WX: &str = "ctrl.attn.wx";
    pub const ATTN_WH: &str = "ctrl.attn.wh";
    pub const ATTN_V: &str = "ctrl.attn.v";
    pub const LSTM_WX: &str = "ctrl.lstm.wx";
    pub const LSTM_WH: &str = "ctrl.lstm.wh";
    pub const LSTM_B: &str = "ctrl.lstm.b";
    pub const HEAD_W: &str = "ctrl.head.w";
    pub const HEAD_B: &str = "ctrl.head.b";
}

/// Registers all controller parameters. Weight matrices are uniform
/// (-1/sqrt(fan_in), ..) draws from the given stream; biases start at zero.
pub fn init_params(store: &mut ParamStore, cfg: &ControllerConfig, rng: &mut SplitMix64) {
    let (d, h, a) = (cfg.feat_dim, cfg.d_h, cfg.d_attn);
    store.insert(names::ATTN_WX, Tensor::glorot_uniform(vec![d, a], d, rng));
    store.insert(names::ATTN_WH, Tensor::glorot_uniform(vec![h, a], h, rng));
    store.insert(names::ATTN_V, Tensor::glorot_uniform(vec![a], a, rng));
    store.insert(names::LSTM_WX, Tensor::glorot_uniform(vec![d, 4 * h], d, rng));
    store.insert(names::LSTM_WH, Tensor::glorot_uniform(vec![h, 4 * h], h, rng));
    store.insert(names::LSTM_B, forget_biased(h));
    store.insert(names::HEAD_W, Tensor::glorot_uniform(vec![h, 2], h, rng));
    store.insert(names::HEAD_B, Tensor::zeros(vec![2]));
}

/// LSTM bias with the forget gate opened to 1.0 so memory survives the
/// early training phase; gates are ordered i|f|g|o.
pub(crate) fn forget_biased(hidden: usize) -> Tensor {
    let mut bias = Tensor::zeros(vec![4 * hidden]);
    for v in &mut bias.data_mut()[hidden..2 * hidden] {
        *v = 1.0;
    }
    bias
}

/// Controller parameter nodes registered on one graph.
pub struct ControllerParams {
    pub attn_wx: Node,
    pub attn_wh: Node,
    pub attn_v: Node,
    pub lstm_wx: Node,
    pub lstm_wh: Node,
    pub lstm_b: Node,
    pub head_w: Node,
    pub head_b: Node,
}

impl ControllerParams {
    pub fn register(g: &mut Graph, store: &ParamStore) -> Self {
        Self {
            attn_wx: g.param(store, names::ATTN_WX),
            attn_wh: g.param(store, names::ATTN_WH),
            attn_v: g.param(store, names::ATTN_V),
            lstm_wx: g.param(store, names::LSTM_WX),
            lstm_wh: g.param(store, names::LSTM_WH),
            lstm_b: g.param(store, names::LSTM_B),
            head_w: g.param(store, names::HEAD_W),
            head_b: g.param(store, names::HEAD_B),
        }
    }
}

/// Additive spatial attention over grid cells:
/// e_i = v . tanh(x_i Wx + h_prev Wh), alpha = softmax(e),
/// context = sum_i alpha_i x_i.
pub fn spatial_attend(
    g: &mut Graph,
    h_prev: Node,
    grid: Node,
    wx: Node,
    wh: Node,
    v: Node,
) -> Result<(Node, Node)> {
    let projected = g.matmul(grid, wx)?;
    let from_h = g.matmul(h_prev, wh)?;
    let pre = g.add_row(projected, from_h)?;
    let act = g.tanh(pre);
    let scores = g.matmul(act, v)?;
    let alpha = g.softmax(scores);
    let context = g.matmul(alpha, grid)?;
    Ok((alpha, context))
}

/// One LSTM step over the attended context plus the affine control head.
pub fn controller_step(
    g: &mut Graph,
    context: Node,
    h: Node,
    c: Node,
    params: &ControllerParams,
) -> Result<(Node, Node, Node)> {
    let (h_next, c_next) = g.lstm_step(context, h, c, params.lstm_wx, params.lstm_wh, params.lstm_b)?;
    let pred = g.affine(h_next, params.head_w, Some(params.head_b))?;
    Ok((h_next, c_next, pred))
}

/// Per-frame attention, context and prediction nodes for one clip.
pub struct ControllerTrace {
    pub alphas: Vec<Node>,
    pub contexts: Vec<Node>,
    pub preds: Vec<Node>,
}

/// Runs the controller over a clip's frames.
pub fn forward(
    g: &mut Graph,
    store: &ParamStore,
    frames: &[Tensor],
    cfg: &ControllerConfig,
) -> Result<ControllerTrace> {
    let params = ControllerParams::register(g, store);
    forward_with(g, &params, frames, cfg)
}

pub fn forward_with(
    g: &mut Graph,
    params: &ControllerParams,
    frames: &[Tensor],
    cfg: &ControllerConfig,
) -> Result<ControllerTrace> {
    let mut h = g.leaf(Tensor::zeros(vec![cfg.d_h]));
    let mut c = g.leaf(Tensor::zeros(vec![cfg.d_h]));
    let mut trace = ControllerTrace {
        alphas: Vec::with_capacity(frames.len()),
        contexts: Vec::with_capacity(frames.len()),
        preds: Vec::with_capacity(frames.len()),
    };
    for frame in frames {
        let grid = g.leaf(frame.clone());
        let (alpha, context) = spatial_attend(g, h, grid, params.attn_wx, params.attn_wh, params.attn_v)?;
        let (h_next, c_next, pred) = controller_step(g, context, h, c, params)?;
        h = h_next;
        c = c_next;
        trace.alphas.push(alpha);
        trace.contexts.push(context);
        trace.preds.push(pred);
    }
    Ok(trace)
}

/// Mean over frames of the squared control residuals
/// (delta accel^2 + delta course^2).
pub fn controller_loss(g: &mut Graph, preds: &[Node], truth: &[ControlSignal]) -> Result<Node> {
    if preds.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            op: "controller_loss",
            lhs: vec![preds.len()],
            rhs: vec![truth.len()],
        });
    }
    let pred_matrix = g.stack_rows(preds)?;
    let mut truth_data = Vec::with_capacity(truth.len() * 2);
    for signal in truth {
        truth_data.push(signal.acceleration);
        truth_data.push(signal.course_change);
    }
    let truth_node = g.leaf(Tensor::matrix(truth.len(), 2, truth_data));
    let diff = g.sub(pred_matrix, truth_node)?;
    let sq = g.mul(diff, diff)?;
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / truth.len() as f64))
}

/// Writes one alpha map as an ASCII PGM (P2, maxval 255), scaled by
/// 255/max(alpha).
pub fn write_attention_pgm(alpha: &[f64], grid: usize, path: &Path) -> Result<()> {
    assert_eq!(alpha.len(), grid * grid);
    let max = alpha.iter().copied().fold(f64::MIN, f64::max).max(f64::MIN_POSITIVE);
    let mut out = format!("P2\n{grid} {grid}\n255\n");
    for row in 0..grid {
        let line: Vec<String> = (0..grid)
            .map(|col| {
                let scaled = (alpha[row * grid + col] * 255.0 / max).round();
                format!("{}", (scaled.clamp(0.0, 255.0)) as u8)
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{grad_check, GradCheckOpts};

    fn test_cfg() -> ControllerConfig {
        ControllerConfig {
            feat_dim: 4,
            d_h: 5,
            d_attn: 3,
        }
    }

    fn init_store(seed: u64) -> (ParamStore, ControllerConfig) {
        let cfg = test_cfg();
        let mut store = ParamStore::new();
        init_params(&mut store, &cfg, &mut SplitMix64::new(seed));
        (store, cfg)
    }

    fn random_frames(count: usize, cells: usize, feat_dim: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = SplitMix64::new(seed);
        (0..count)
            .map(|_| {
                Tensor::matrix(
                    cells,
                    feat_dim,
                    (0..cells * feat_dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn equal_scores_give_uniform_alpha() {
        let (store, cfg) = init_store(1);
        let mut g = Graph::new();
        let params = ControllerParams::register(&mut g, &store);
        // Identical cells force identical scores.
        let grid = g.leaf(Tensor::matrix(4, cfg.feat_dim, vec![0.3; 4 * cfg.feat_dim]));
        let h = g.leaf(Tensor::zeros(vec![cfg.d_h]));
        let (alpha, context) =
            spatial_attend(&mut g, h, grid, params.attn_wx, params.attn_wh, params.attn_v).unwrap();
        for &a in g.value(alpha).data() {
            assert!((a - 0.25).abs() < 1e-12);
        }
        // Context of identical cells is that cell.
        for &v in g.value(context).data() {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_one_hot_alpha_selects_that_cell() {
        let mut g = Graph::new();
        let grid = g.leaf(Tensor::matrix(
            3,
            2,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        ));
        let alpha = g.leaf(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let context = g.matmul(alpha, grid).unwrap();
        assert_eq!(g.value(context).data(), &[3.0, 4.0]);
    }

    #[test]
    fn alpha_rows_normalize_and_context_is_convex() {
        let (store, cfg) = init_store(2);
        let frames = random_frames(4, 6, cfg.feat_dim, 99);
        let mut g = Graph::new();
        let trace = forward(&mut g, &store, &frames, &cfg).unwrap();
        for (alpha, (context, frame)) in trace
            .alphas
            .iter()
            .zip(trace.contexts.iter().zip(&frames))
        {
            let sum: f64 = g.value(*alpha).data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(g.value(*alpha).data().iter().all(|&a| a >= 0.0));
            // Convex combination bound per feature dimension.
            for d in 0..cfg.feat_dim {
                let column: Vec<f64> = (0..6).map(|cell| frame.at2(cell, d)).collect();
                let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let cv = g.value(*context).data()[d];
                assert!(cv >= lo - 1e-12 && cv <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn permuting_cells_permutes_alpha_and_preserves_context() {
        let (store, cfg) = init_store(3);
        let frames = random_frames(1, 5, cfg.feat_dim, 5);
        let mut g = Graph::new();
        let trace = forward(&mut g, &store, &frames, &cfg).unwrap();
        let alpha_orig = g.value(trace.alphas[0]).data().to_vec();
        let context_orig = g.value(trace.contexts[0]).data().to_vec();

        let perm = [3usize, 0, 4, 1, 2];
        let mut data = Vec::new();
        for &p in &perm {
            data.extend_from_slice(frames[0].row(p));
        }
        let permuted = vec![Tensor::matrix(5, cfg.feat_dim, data)];
        let mut g2 = Graph::new();
        let trace2 = forward(&mut g2, &store, &permuted, &cfg).unwrap();
        let alpha_perm = g2.value(trace2.alphas[0]).data().to_vec();
        let context_perm = g2.value(trace2.contexts[0]).data().to_vec();

        for (i, &p) in perm.iter().enumerate() {
            assert!((alpha_perm[i] - alpha_orig[p]).abs() < 1e-12);
        }
        for (a, b) in context_orig.iter().zip(&context_perm) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_predict_zero_controls() {
        let cfg = test_cfg();
        let mut store = ParamStore::new();
        init_params(&mut store, &cfg, &mut SplitMix64::new(0));
        for name in [names::HEAD_W, names::HEAD_B] {
            store.get_mut(name).fill(0.0);
        }
        let frames = random_frames(3, 4, cfg.feat_dim, 8);
        let mut g = Graph::new();
        let trace = forward(&mut g, &store, &frames, &cfg).unwrap();
        for pred in trace.preds {
            assert_eq!(g.value(pred).data(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn forward_is_deterministic_and_finite() {
        let (store, cfg) = init_store(4);
        let frames = random_frames(8, 4, cfg.feat_dim, 123);
        let run = || {
            let mut g = Graph::new();
            let trace = forward(&mut g, &store, &frames, &cfg).unwrap();
            trace
                .preds
                .iter()
                .map(|p| g.value(*p).data().to_vec())
                .collect::<Vec<_>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn controller_loss_examples() {
        let mut g = Graph::new();
        let truth = vec![ControlSignal {
            acceleration: 0.0,
            course_change: 0.0,
        }];
        let pred = g.leaf(Tensor::vector(vec![1.0, 0.0]));
        let loss = controller_loss(&mut g, &[pred], &truth).unwrap();
        assert_eq!(g.value(loss).item(), 1.0);

        // pred == truth -> 0.
        let pred = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let loss = controller_loss(&mut g, &[pred], &truth).unwrap();
        assert_eq!(g.value(loss).item(), 0.0);

        // Doubling residuals quadruples the loss.
        let pred = g.leaf(Tensor::vector(vec![2.0, 0.0]));
        let loss = controller_loss(&mut g, &[pred], &truth).unwrap();
        assert_eq!(g.value(loss).item(), 4.0);
    }

    #[test]
    fn controller_loss_length_mismatch_errors() {
        let mut g = Graph::new();
        let pred = g.leaf(Tensor::vector(vec![0.0, 0.0]));
        let truth = vec![
            ControlSignal {
                acceleration: 0.0,
                course_change: 0.0,
            };
            2
        ];
        assert!(controller_loss(&mut g, &[pred], &truth).is_err());
    }

    #[test]
    fn controller_loss_gradients_check() {
        let (store, cfg) = init_store(6);
        let frames = random_frames(3, 4, cfg.feat_dim, 44);
        let truth: Vec<ControlSignal> = (0..3)
            .map(|i| ControlSignal {
                acceleration: -0.5 * i as f64,
                course_change: 2.0,
            })
            .collect();
        let report = grad_check(
            &store,
            |g, s| {
                let trace = forward(g, s, &frames, &cfg)?;
                controller_loss(g, &trace.preds, &truth)
            },
            &GradCheckOpts::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn pgm_export_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip000001_f0.pgm");
        write_attention_pgm(&[0.1, 0.2, 0.3, 0.4], 2, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("255"));
        let pixels: Vec<u32> = lines
            .flat_map(|l| l.split_whitespace().map(|v| v.parse().unwrap()))
            .collect();
        assert_eq!(pixels.len(), 4);
        assert_eq!(pixels[3], 255); // max cell saturates
        assert!(pixels.iter().all(|&p| p <= 255));
    }
}
