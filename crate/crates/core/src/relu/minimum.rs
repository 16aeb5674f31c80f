//! Exact ReLU realization of the minimum of `k` inputs.

use super::{merge_affine, Layer, Matrix, Network, NetworkError};
use crate::scalar::Scalar;

/// Network computing `min(v_1, …, v_k)` exactly.
///
/// Each level of the left-balanced tree pairs neighbouring values and uses
/// `min(a, b) = ½(σ(a+b) − σ(−a−b)) − ½σ(a−b) − ½σ(b−a)`; an odd value is
/// carried as `σ(v) − σ(−v)`. Levels are fused with [`merge_affine`], so the
/// depth is `⌈log₂ k⌉ + 1` and every weight has magnitude at most one.
pub fn min_network<T: Scalar>(k: usize) -> Result<Network<T>, NetworkError> {
    if k == 0 {
        return Err(NetworkError::ZeroArity);
    }
    let mut net: Network<T> = Network::identity(k);
    let mut width = k;
    while width > 1 {
        net = merge_affine(&min_level(width), &net)?;
        width = width.div_ceil(2);
    }
    Ok(net)
}

/// One tree level: `width` inputs to `⌈width/2⌉` outputs, depth two.
fn min_level<T: Scalar>(width: usize) -> Network<T> {
    let pairs = width / 2;
    let odd = width % 2 == 1;
    let hidden = 4 * pairs + if odd { 2 } else { 0 };
    let outputs = pairs + usize::from(odd);
    let (one, half) = (T::one(), T::lit(0.5));
    let mut a1 = Matrix::zeros(hidden, width);
    let mut a2 = Matrix::zeros(outputs, hidden);
    for p in 0..pairs {
        let (a, b, h) = (2 * p, 2 * p + 1, 4 * p);
        for (row, (ca, cb)) in [(one, one), (-one, -one), (one, -one), (-one, one)]
            .into_iter()
            .enumerate()
        {
            a1.set(h + row, a, ca);
            a1.set(h + row, b, cb);
        }
        a2.set(p, h, half);
        a2.set(p, h + 1, -half);
        a2.set(p, h + 2, -half);
        a2.set(p, h + 3, -half);
    }
    if odd {
        let (v, h) = (width - 1, 4 * pairs);
        a1.set(h, v, one);
        a1.set(h + 1, v, -one);
        a2.set(pairs, h, one);
        a2.set(pairs, h + 1, -one);
    }
    Network::new(vec![
        Layer::new(a1, vec![T::zero(); hidden]),
        Layer::new(a2, vec![T::zero(); outputs]),
    ])
    .expect("min level chains")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs() {
        let net = min_network::<f64>(2).unwrap();
        assert_eq!(net.evaluate(&[3.0, 5.0]).unwrap(), vec![3.0]);
        assert_eq!(net.evaluate(&[-1.0, -4.0]).unwrap(), vec![-4.0]);
    }

    #[test]
    fn depth_and_weight_bounds() {
        for k in 1..=9usize {
            let net = min_network::<f64>(k).unwrap();
            let levels = (k as f64).log2().ceil() as usize;
            assert_eq!(net.depth(), levels + 1, "k={k}");
            assert!(net.stats().weight_sup <= 1.0, "k={k}");
        }
    }

    #[test]
    fn odd_arity() {
        let net = min_network::<f64>(3).unwrap();
        assert_eq!(net.evaluate(&[2.0, 1.0, -7.5]).unwrap(), vec![-7.5]);
        assert_eq!(net.evaluate(&[0.25, 1.0, 7.5]).unwrap(), vec![0.25]);
    }

    #[test]
    fn zero_arity_rejected() {
        assert_eq!(min_network::<f64>(0).unwrap_err(), NetworkError::ZeroArity);
    }
}
