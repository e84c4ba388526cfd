//! Heterogeneous encoder: stacked multi-head attention over two populations
//! (instance nodes and front points) with per-relation softmax.

use super::{node_features, point_features, BoundParams, ModelConfig};
use crate::autodiff::{Tape, Var};
use crate::pareto::ReferenceBox;
use crate::problems::Instance;
use ndarray::Array2;

/// Encoder output handed to the decoder.
pub struct Embeddings {
    /// Final instance-node embeddings, `node_rows x d` (MOCVRP row 0 = depot).
    pub nodes: Var,
    /// Final point embeddings, `k x d` (reference corner included).
    pub points: Var,
    /// Graph embedding: mean over node rows, `1 x d`.
    pub graph: Var,
    /// Point-row validity (padding mask), `None` when every row is real.
    pub point_valid: Option<Vec<bool>>,
}

/// Runs the encoder for one instance and one surrogate front.
///
/// `points` are raw objective vectors (reference corner last); they are
/// normalized into `bx` before projection. `point_valid` marks rows that are
/// real (as opposed to padding copies of the reference corner); padded rows
/// are masked out of every attention read and excluded from normalization
/// statistics, so their presence never perturbs valid rows.
pub fn encode(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    instance: &Instance,
    points: &[Vec<f64>],
    bx: &ReferenceBox,
    point_valid: Option<&[bool]>,
) -> Embeddings {
    let dk = cfg.head_dim();
    let inv_sqrt_dk = 1.0 / (dk as f64).sqrt();

    // Input projections. MOCVRP projects the depot separately and prepends it.
    let (main_feats, depot_feats) = node_features(instance);
    let mut h = {
        let f = tape.constant(main_feats);
        let proj = tape.matmul(f, bound.get("enc.node_proj"));
        match depot_feats {
            Some(dep) => {
                let dconst = tape.constant(dep);
                let dproj = tape.matmul(dconst, bound.get("enc.depot_proj"));
                tape.concat_rows(&[dproj, proj])
            }
            None => proj,
        }
    };
    let mut g = {
        let f = tape.constant(point_features(points, bx));
        tape.matmul(f, bound.get("enc.point_proj"))
    };

    let n_rows = tape.value(h).nrows();
    let k_rows = tape.value(g).nrows();
    let valid: Option<Vec<bool>> = point_valid.map(|v| {
        assert_eq!(v.len(), k_rows, "point_valid length mismatch");
        v.to_vec()
    });
    // Columns correspond to point rows when attending into the point graph.
    let col_mask = |rows: usize, valid: &Option<Vec<bool>>| -> Option<Array2<bool>> {
        valid
            .as_ref()
            .map(|v| Array2::from_shape_fn((rows, k_rows), |(_, j)| v[j]))
    };

    for l in 0..cfg.layers {
        let mut h_heads = Vec::with_capacity(cfg.heads);
        let mut g_heads = Vec::with_capacity(cfg.heads);
        for y in 0..cfg.heads {
            let w = |tape: &mut Tape, name: &str| -> Var {
                let _ = tape; // weights live on the tape already
                bound.get(&format!("enc.l{l}.y{y}.{name}"))
            };
            let wq_h = w(tape, "wq_h");
            let wk_h = w(tape, "wk_h");
            let wv_h = w(tape, "wv_h");
            let qh = tape.matmul(h, wq_h);
            let kh = tape.matmul(h, wk_h);
            let vh = tape.matmul(h, wv_h);

            // Node-to-node relation: its own softmax, always on.
            let s_nn = tape.matmul_nt(qh, kh);
            let s_nn = tape.scale(s_nn, inv_sqrt_dk);
            let a_nn = tape.softmax_rows(s_nn, None);
            let mut h_head = tape.matmul(a_nn, vh);

            let (mut kg, mut vg) = (None, None);
            if cfg.use_n2p || cfg.use_p2p {
                let wk_g = w(tape, "wk_g");
                let wv_g = w(tape, "wv_g");
                kg = Some(tape.matmul(g, wk_g));
                vg = Some(tape.matmul(g, wv_g));
            }

            // Node-to-point relation: separate softmax, contribution summed.
            if cfg.use_n2p {
                let s_np = tape.matmul_nt(qh, kg.unwrap());
                let s_np = tape.scale(s_np, inv_sqrt_dk);
                let mask = col_mask(n_rows, &valid);
                let a_np = tape.softmax_rows(s_np, mask.as_ref());
                let read = tape.matmul(a_np, vg.unwrap());
                h_head = tape.add(h_head, read);
            }
            h_heads.push(h_head);

            // Point side: point-to-node and (optionally) point-to-point.
            let mut g_head: Option<Var> = None;
            if cfg.use_p2n || cfg.use_p2p {
                let wq_g = w(tape, "wq_g");
                let qg = tape.matmul(g, wq_g);
                if cfg.use_p2n {
                    let s_pn = tape.matmul_nt(qg, kh);
                    let s_pn = tape.scale(s_pn, inv_sqrt_dk);
                    let a_pn = tape.softmax_rows(s_pn, None);
                    g_head = Some(tape.matmul(a_pn, vh));
                }
                if cfg.use_p2p {
                    let s_pp = tape.matmul_nt(qg, kg.unwrap());
                    let s_pp = tape.scale(s_pp, inv_sqrt_dk);
                    let mask = col_mask(k_rows, &valid);
                    let a_pp = tape.softmax_rows(s_pp, mask.as_ref());
                    let read = tape.matmul(a_pp, vg.unwrap());
                    g_head = Some(match g_head {
                        Some(x) => tape.add(x, read),
                        None => read,
                    });
                }
            }
            // With every point-side relation disabled the attention update is
            // zero and the sublayer reduces to norm + feed-forward.
            let g_head = g_head.unwrap_or_else(|| tape.constant(Array2::zeros((k_rows, dk))));
            g_heads.push(g_head);
        }

        let cat_h = tape.concat_cols(&h_heads);
        let wo_h = bound.get(&format!("enc.l{l}.wo_h"));
        let h_tilde = tape.matmul(cat_h, wo_h);
        let cat_g = tape.concat_cols(&g_heads);
        let wo_g = bound.get(&format!("enc.l{l}.wo_g"));
        let g_tilde = tape.matmul(cat_g, wo_g);

        h = sublayer(tape, bound, cfg, l, "h", h, h_tilde, None);
        g = sublayer(tape, bound, cfg, l, "g", g, g_tilde, valid.as_deref());
    }

    let graph = tape.mean_rows(h);
    Embeddings { nodes: h, points: g, graph, point_valid: valid }
}

/// Residual + instance-level normalization, then feed-forward with the same
/// wrapper: `x1 = Norm(x + attn)`, `out = Norm(x1 + FF(x1))`.
fn sublayer(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    layer: usize,
    side: &str,
    x: Var,
    attn: Var,
    valid: Option<&[bool]>,
) -> Var {
    let p = |name: String, bound: &BoundParams| bound.get(&name);
    let g1 = p(format!("enc.l{layer}.norm1_{side}.gamma"), bound);
    let b1 = p(format!("enc.l{layer}.norm1_{side}.beta"), bound);
    let g2 = p(format!("enc.l{layer}.norm2_{side}.gamma"), bound);
    let b2 = p(format!("enc.l{layer}.norm2_{side}.beta"), bound);
    let fw1 = p(format!("enc.l{layer}.ff_{side}.w1"), bound);
    let fb1 = p(format!("enc.l{layer}.ff_{side}.b1"), bound);
    let fw2 = p(format!("enc.l{layer}.ff_{side}.w2"), bound);
    let fb2 = p(format!("enc.l{layer}.ff_{side}.b2"), bound);

    let sum = tape.add(x, attn);
    let x1 = norm(tape, sum, g1, b1, cfg.norm_eps, valid);
    let a = tape.matmul(x1, fw1);
    let a = tape.add_row(a, fb1);
    let a = tape.relu(a);
    let a = tape.matmul(a, fw2);
    let ff = tape.add_row(a, fb2);
    let sum2 = tape.add(x1, ff);
    norm(tape, sum2, g2, b2, cfg.norm_eps, valid)
}

fn norm(tape: &mut Tape, x: Var, gamma: Var, beta: Var, eps: f64, valid: Option<&[bool]>) -> Var {
    match valid {
        Some(v) => tape.norm_rows_masked(x, gamma, beta, eps, v),
        None => tape.norm_rows(x, gamma, beta, eps),
    }
}
