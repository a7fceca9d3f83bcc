use numerics::{Tape, Tensor, Var};

use crate::error::{Error, Result};

/// Iterations used when none are configured.
pub const DEFAULT_ITERS: usize = 50;

/// Log-domain Sinkhorn-Knopp on the tape: `n_iters` rounds of row then
/// column log-sum-exp subtraction on the log-matrix `r`, then `exp`.
pub fn sinkhorn_normalize(t: &mut Tape, r: Var, n_iters: usize) -> Result<Var> {
    let shape = t.shape(r).to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Invalid(format!("sinkhorn needs a square matrix, got {shape:?}")));
    }
    if n_iters == 0 {
        return Err(Error::Config("sinkhorn needs at least one iteration".into()));
    }
    let mut log = r;
    for _ in 0..n_iters {
        let rows = t.logsumexp(log, 1)?;
        log = t.sub(log, rows)?;
        let cols = t.logsumexp(log, 0)?;
        log = t.sub(log, cols)?;
    }
    Ok(t.exp(log)?)
}

/// Value-only [`sinkhorn_normalize`].
pub fn sinkhorn_values(r: &Tensor, n_iters: usize) -> Result<Tensor> {
    let mut t = Tape::no_grad();
    let v = t.constant(r.clone())?;
    let a = sinkhorn_normalize(&mut t, v, n_iters)?;
    Ok(t.value(a).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_is_forced_to_one() {
        for v in [-40.0, 0.0, 3.5] {
            let a = sinkhorn_values(&Tensor::new(vec![1, 1], vec![v]).unwrap(), 50).unwrap();
            assert!((a.item() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn doubly_stochastic_fixed_point() {
        let p = Tensor::from_rows(&[vec![0.2, 0.8], vec![0.8, 0.2]]).unwrap();
        let a = sinkhorn_values(&p.map(f64::ln), 50).unwrap();
        assert!(a.max_abs_diff(&p) < 1e-9);
    }

    #[test]
    fn rejects_non_square() {
        let r = Tensor::zeros(&[2, 3]);
        assert!(sinkhorn_values(&r, 5).is_err());
    }
}
