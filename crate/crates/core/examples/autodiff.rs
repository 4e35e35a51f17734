//! Reverse-mode gradients of a small softmax regression, checked against
//! central differences.

use tailr::autodiff::{finite_diff_check, Graph, Tensor};
use tailr::error::Result;

fn main() -> Result<()> {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7])?);
    let w = g.leaf(Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?);
    let logits = g.matmul(x, w)?;
    let lp = g.log_softmax(logits)?;
    let picked = g.pick_rows(lp, &[1, 3])?;
    let total = g.sum(picked);
    let loss = g.neg(total);
    println!("loss = {:.6}", g.value(loss).item());

    let grads = g.backward(loss)?;
    println!("dL/dW = {:?}", grads.tensor(w).values());

    let point = g.value(w).clone();
    let xv = g.value(x).clone();
    let err = finite_diff_check(
        |g: &mut Graph, w| {
            let x = g.leaf(xv.clone());
            let logits = g.matmul(x, w)?;
            let lp = g.log_softmax(logits)?;
            let picked = g.pick_rows(lp, &[1, 3])?;
            let s = g.sum(picked);
            Ok(g.neg(s))
        },
        &point,
        1e-6,
    )?;
    println!("max relative error vs finite differences: {err:.2e}");
    Ok(())
}
