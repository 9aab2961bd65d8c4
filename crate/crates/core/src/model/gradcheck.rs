use super::EmbeddingFunction;
use crate::error::Result;
use crate::matrix::DenseMatrix;
use crate::scalar::{lit, Real};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct GradCheckReport<T> {
    /// Largest `|a - n| / max(1e-8, |a| + |n|)` over every parameter.
    pub max_rel_error: T,
    /// Same, per parameter block.
    pub per_block: Vec<(String, T)>,
    /// Norm of the analytic gradient.
    pub analytic_norm: T,
}

/// Compares backpropagated parameter gradients with central differences.
///
/// `loss` maps the model output to `(L, ∂L/∂Y)`. Every parameter is
/// perturbed in place and restored.
pub fn grad_check<T, M, L>(model: &mut M, x: &DenseMatrix<T>, loss: L) -> Result<GradCheckReport<T>>
where
    T: Real,
    M: EmbeddingFunction<T>,
    L: Fn(&DenseMatrix<T>) -> Result<(T, DenseMatrix<T>)>,
{
    let (y, cache) = model.forward_cached(x)?;
    let (_, dl_dy) = loss(&y)?;
    let analytic = model.backward_cached(&cache, &dl_dy)?;
    let names = model.param_names();
    let h: T = lit(FD_STEP);
    let two_h = h + h;
    let floor: T = lit(1e-8);

    let mut per_block = Vec::with_capacity(names.len());
    let mut worst = T::zero();
    for (b, name) in names.iter().enumerate() {
        let mut block_worst = T::zero();
        let len = model.params()[b].len();
        for k in 0..len {
            let orig = model.params()[b].as_slice()[k];
            model.params_mut()[b].as_mut_slice()[k] = orig + h;
            let (lp, _) = loss(&model.forward(x)?)?;
            model.params_mut()[b].as_mut_slice()[k] = orig - h;
            let (lm, _) = loss(&model.forward(x)?)?;
            model.params_mut()[b].as_mut_slice()[k] = orig;

            let numeric = (lp - lm) / two_h;
            let a = analytic.blocks[b].as_slice()[k];
            let rel = (a - numeric).abs() / floor.max(a.abs() + numeric.abs());
            block_worst = block_worst.max(rel);
        }
        worst = worst.max(block_worst);
        per_block.push((name.clone(), block_worst));
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        per_block,
        analytic_norm: analytic.norm(),
    })
}
