use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default clamp applied to probabilities before taking logs.
pub const DEFAULT_EPS: f64 = 1e-7;

fn same_shape<T: Scalar>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.value(a).shape(), g.value(b).shape());
    if sa != sb {
        return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// `−mean(ln d_real) − mean(ln(1 − d_fake))`, averaged over decisions and batch.
pub fn d_loss<T: Scalar>(g: &mut Graph<T>, d_real: Var, d_fake: Var, eps: T) -> Result<Var> {
    same_shape(g, "d_loss", d_real, d_fake)?;
    let n = g.value(d_real).numel();
    let real = g.bce(d_real, &vec![T::one(); n], eps)?;
    let fake = g.bce(d_fake, &vec![T::zero(); n], eps)?;
    g.add(real, fake)
}

/// Non-saturating adversarial generator loss `−mean(ln d_fake)`.
pub fn g_gan_loss<T: Scalar>(g: &mut Graph<T>, d_fake: Var, eps: T) -> Result<Var> {
    let n = g.value(d_fake).numel();
    g.bce(d_fake, &vec![T::one(); n], eps)
}

/// Pixel-wise binary cross entropy against a `{0, 1}` gold standard.
pub fn seg_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, gold: Var, eps: T) -> Result<Var> {
    same_shape(g, "seg_loss", pred, gold)?;
    let target = g.value(gold).data().to_vec();
    if let Some(v) = target.iter().find(|&&v| v != T::zero() && v != T::one()) {
        return Err(Error::InvalidArgument(format!(
            "gold standard must be binary, found {}",
            v.as_f64()
        )));
    }
    g.bce(pred, &target, eps)
}

/// `g_gan + λ·seg`.
pub fn g_total_loss<T: Scalar>(g: &mut Graph<T>, g_gan: Var, seg: Var, lambda: T) -> Result<Var> {
    if lambda < T::zero() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", lambda.as_f64())));
    }
    let weighted = g.scale(seg, lambda);
    g.add(g_gan, weighted)
}

/// Scalar form of [`g_total_loss`].
pub fn g_total(g_gan: f64, seg: f64, lambda: f64) -> f64 {
    g_gan + lambda * seg
}
