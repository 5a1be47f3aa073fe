use crate::autodiff::matrix::{sigmoid, softplus};

/// Negated DPO objective for one pair:
/// `−ln σ(β·[(lp_w − lp_w_ref) − (lp_l − lp_l_ref)])`, evaluated as
/// `softplus(−β·margin)` so it stays finite for any margin.
pub fn dpo_loss(lp_w: f64, lp_w_ref: f64, lp_l: f64, lp_l_ref: f64, beta: f64) -> f64 {
    softplus(-beta * dpo_margin(lp_w, lp_w_ref, lp_l, lp_l_ref))
}

/// `(lp_w − lp_w_ref) − (lp_l − lp_l_ref)`
pub fn dpo_margin(lp_w: f64, lp_w_ref: f64, lp_l: f64, lp_l_ref: f64) -> f64 {
    (lp_w - lp_w_ref) - (lp_l - lp_l_ref)
}

/// Partial derivatives of [`dpo_loss`] w.r.t. `(lp_w, lp_w_ref, lp_l, lp_l_ref)`.
pub fn dpo_loss_grad(lp_w: f64, lp_w_ref: f64, lp_l: f64, lp_l_ref: f64, beta: f64) -> [f64; 4] {
    let z = beta * dpo_margin(lp_w, lp_w_ref, lp_l, lp_l_ref);
    let g = -beta * sigmoid(-z);
    [g, -g, -g, g]
}

/// Supervised loss on the chosen output only.
pub fn sft_loss(lp_w: f64) -> f64 {
    -lp_w
}
