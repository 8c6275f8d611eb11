use crate::error::{Error, Result};

/// Hinge ranking loss `max(0, s_neg − s_pos + margin)`.
pub fn margin_ranking_loss(s_pos: f64, s_neg: f64, margin: f64) -> Result<f64> {
    check_margin(margin)?;
    Ok((s_neg - s_pos + margin).max(0.0))
}

/// Subgradients `(∂/∂s_pos, ∂/∂s_neg)`: `(-1, 1)` while the hinge is active,
/// `(0, 0)` otherwise. The kink itself resolves to zero.
pub fn margin_ranking_grad(s_pos: f64, s_neg: f64, margin: f64) -> Result<(f64, f64)> {
    check_margin(margin)?;
    if s_neg - s_pos + margin > 0.0 {
        Ok((-1.0, 1.0))
    } else {
        Ok((0.0, 0.0))
    }
}

fn check_margin(margin: f64) -> Result<()> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("margin must be a finite value >= 0, got {margin}")));
    }
    Ok(())
}
