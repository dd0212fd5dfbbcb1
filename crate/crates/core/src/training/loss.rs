use crate::error::{Error, Result};
use crate::geometry::Pose6;
use crate::tensor::{Graph, Tensor, Var};

fn weights(kappa: f64) -> Tensor {
    Tensor::new(vec![6], vec![1.0, 1.0, 1.0, kappa, kappa, kappa]).expect("finite weights")
}

fn check_lengths(n_est: usize, n_tgt: usize) -> Result<()> {
    if n_est != n_tgt || n_est == 0 {
        return Err(Error::invalid(
            "pose_loss",
            format!("{n_est} estimates for {n_tgt} targets (need equal, non-zero counts)"),
        ));
    }
    Ok(())
}

/// `sum_k |p_hat - p|^2 + kappa * |phi_hat - phi|^2` over one segment, recorded
/// on `g`. Each estimate is a `[6]` node in head layout.
pub fn pose_loss(g: &mut Graph<'_>, estimates: &[Var], targets: &[Pose6], kappa: f64) -> Result<Var> {
    check_lengths(estimates.len(), targets.len())?;
    if !(kappa > 0.0) {
        return Err(Error::invalid("pose_loss", format!("kappa must be positive, got {kappa}")));
    }
    let w = g.constant(weights(kappa));
    let mut total: Option<Var> = None;
    for (&est, target) in estimates.iter().zip(targets) {
        if g.shape(est) != [6] {
            return Err(Error::shape("pose_loss", g.shape(est), &[6]));
        }
        let t = g.constant(Tensor::new(vec![6], target.to_array().to_vec())?);
        let d = g.sub(est, t)?;
        let sq = g.mul(d, d)?;
        let weighted = g.mul(sq, w)?;
        let term = g.sum(weighted)?;
        total = Some(match total {
            Some(acc) => g.add(acc, term)?,
            None => term,
        });
    }
    Ok(total.expect("non-empty"))
}

/// The same quantity on plain values.
pub fn pose_loss_value(estimates: &[Pose6], targets: &[Pose6], kappa: f64) -> Result<f64> {
    check_lengths(estimates.len(), targets.len())?;
    Ok(estimates
        .iter()
        .zip(targets)
        .map(|(e, t)| (e.p - t.p).norm_squared() + kappa * (e.phi - t.phi).norm_squared())
        .sum())
}

/// Mean of per-segment losses: the `1/N` average over a batch of segments.
pub fn batch_pose_loss(batch: &[(Vec<Pose6>, Vec<Pose6>)], kappa: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("pose_loss", "empty batch"));
    }
    let mut sum = 0.0;
    for (est, tgt) in batch {
        sum += pose_loss_value(est, tgt, kappa)?;
    }
    Ok(sum / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_loss(est: &[Pose6], tgt: &[Pose6], kappa: f64) -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = est
            .iter()
            .map(|e| g.leaf(Tensor::new(vec![6], e.to_array().to_vec()).unwrap()))
            .collect();
        let l = pose_loss(&mut g, &vars, tgt, kappa).unwrap();
        g.value(l).item()
    }

    #[test]
    fn examples() {
        let t = [Pose6::new([0.1, 0.2, 1.0], [0.01, 0.0, -0.02])];
        assert_eq!(graph_loss(&t, &t, 100.0), 0.0);
        let z = [Pose6::zero()];
        assert_eq!(graph_loss(&[Pose6::new([1.0, 0.0, 0.0], [0.0; 3])], &z, 100.0), 1.0);
        let v = graph_loss(&[Pose6::new([0.0; 3], [0.1, 0.0, 0.0])], &z, 100.0);
        assert!((v - 1.0).abs() < 1e-15, "{v}");
    }

    #[test]
    fn graph_and_value_agree() {
        let est = [Pose6::new([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]), Pose6::new([0.5; 3], [-0.1; 3])];
        let tgt = [Pose6::zero(), Pose6::new([0.4; 3], [0.0; 3])];
        let a = graph_loss(&est, &tgt, 100.0);
        let b = pose_loss_value(&est, &tgt, 100.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rejects_mismatch() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::zeros(vec![6]));
        assert!(pose_loss(&mut g, &[v, v], &[Pose6::zero()], 100.0).is_err());
        assert!(pose_loss(&mut g, &[], &[], 100.0).is_err());
        assert!(pose_loss_value(&[Pose6::zero()], &[], 1.0).is_err());
    }

    #[test]
    fn batch_is_mean_of_segments() {
        let one = (vec![Pose6::new([1.0, 0.0, 0.0], [0.0; 3])], vec![Pose6::zero()]);
        let three = (vec![Pose6::new([0.0, 3.0, 0.0], [0.0; 3])], vec![Pose6::zero()]);
        assert_eq!(batch_pose_loss(&[one, three], 100.0).unwrap(), 5.0);
    }
}
