use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Mean absolute error. The subgradient of `|d|` at `d = 0` is 0.
/// Differentiable with respect to both arguments.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return shape_err("l1_loss", format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let len = pred.numel();
    let total: f64 = pred.data().iter().zip(target.data()).map(|(&p, &t)| (p as f64 - t as f64).abs()).sum();
    let (pi, ti) = (pred.clone(), target.clone());
    Ok(Tensor::from_op(
        "l1_loss",
        [1, 1, 1, 1],
        vec![(total / len as f64) as f32],
        vec![pred.clone(), target.clone()],
        Box::new(move |g| {
            let scale = g[0] / len as f32;
            let gp: Vec<f32> = pi
                .data()
                .iter()
                .zip(ti.data())
                .map(|(&p, &t)| match p.partial_cmp(&t) {
                    Some(std::cmp::Ordering::Greater) => scale,
                    Some(std::cmp::Ordering::Less) => -scale,
                    _ => 0.0,
                })
                .collect();
            let gt = gp.iter().map(|v| -v).collect();
            vec![Some(gp), Some(gt)]
        }),
    ))
}
