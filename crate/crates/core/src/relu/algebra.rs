//! Structural operations on networks that preserve or transform realizations
//! in closed form.

use super::{Layer, Matrix, Network, NetworkError};
use crate::scalar::Scalar;

/// Returns `φ` with `φ(x) = ψ(Cx + b)`: the first layer becomes
/// `(A_1 C, A_1 b + b_1)` and depth is unchanged.
pub fn affine_precompose<T: Scalar>(net: &Network<T>, c: &Matrix<T>, b: &[T]) -> Result<Network<T>, NetworkError> {
    let first = &net.layers()[0];
    if c.rows() != first.inputs() || b.len() != first.inputs() {
        return Err(NetworkError::DimensionMismatch {
            layer: 0,
            expected: first.inputs(),
            found: if c.rows() != first.inputs() { c.rows() } else { b.len() },
        });
    }
    let weights = first.weights.matmul(c);
    let shift = first.weights.matvec(b);
    let bias = shift.iter().zip(&first.bias).map(|(&s, &b1)| s + b1).collect();
    let mut layers = net.layers().to_vec();
    layers[0] = Layer::new(weights, bias);
    Network::new(layers)
}

/// Divides the first-layer weights and every bias by `r`.
///
/// Positive homogeneity of σ propagates the factor through all layers, so the
/// result realizes `ψ / r`.
pub fn homogeneous_rescale<T: Scalar>(net: &Network<T>, r: T) -> Result<Network<T>, NetworkError> {
    if !(r > T::zero()) || !r.is_finite() {
        return Err(NetworkError::NonPositiveScale(r.to_f64().unwrap_or(f64::NAN)));
    }
    let mut layers = net.layers().to_vec();
    for (j, layer) in layers.iter_mut().enumerate() {
        if j == 0 {
            let (rows, cols) = (layer.weights.rows(), layer.weights.cols());
            let data = layer.weights.as_slice().iter().map(|&w| w / r).collect();
            layer.weights = Matrix::from_vec(rows, cols, data);
        }
        for v in layer.bias.iter_mut() {
            *v = *v / r;
        }
    }
    Network::new(layers)
}

/// Stacks `outer` after `inner` with one σ inserted at the seam.
///
/// The realization is `outer ∘ σ ∘ inner` and the depth is
/// `L(outer) + L(inner)`.
pub fn compose<T: Scalar>(outer: &Network<T>, inner: &Network<T>) -> Result<Network<T>, NetworkError> {
    if outer.input_dim() != inner.output_dim() {
        return Err(NetworkError::DimensionMismatch {
            layer: inner.depth(),
            expected: inner.output_dim(),
            found: outer.input_dim(),
        });
    }
    let mut layers = inner.layers().to_vec();
    layers.extend_from_slice(outer.layers());
    Network::new(layers)
}

/// σ-free composition: fuses the last affine map of `inner` with the first of
/// `outer`, realizing `outer ∘ inner` at depth `L(outer) + L(inner) − 1`.
pub fn merge_affine<T: Scalar>(outer: &Network<T>, inner: &Network<T>) -> Result<Network<T>, NetworkError> {
    if outer.input_dim() != inner.output_dim() {
        return Err(NetworkError::DimensionMismatch {
            layer: inner.depth() - 1,
            expected: inner.output_dim(),
            found: outer.input_dim(),
        });
    }
    let last = &inner.layers()[inner.depth() - 1];
    let first = &outer.layers()[0];
    let weights = first.weights.matmul(&last.weights);
    let shift = first.weights.matvec(&last.bias);
    let bias = shift.iter().zip(&first.bias).map(|(&s, &b)| s + b).collect();
    let mut layers = inner.layers()[..inner.depth() - 1].to_vec();
    layers.push(Layer::new(weights, bias));
    layers.extend_from_slice(&outer.layers()[1..]);
    Network::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relu::tests::hat;

    fn ident(n: usize) -> Network<f64> {
        Network::identity(n)
    }

    #[test]
    fn precompose_scales_identity() {
        let c = Matrix::from_vec(1, 1, vec![2.0]);
        let net = affine_precompose(&ident(1), &c, &[0.0]).unwrap();
        assert_eq!(net.evaluate(&[1.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn precompose_shifts_hat_to_center() {
        let (m, y) = (8.0, 0.3);
        let c = Matrix::from_vec(1, 1, vec![m]);
        let net = affine_precompose(&hat(), &c, &[-m * y]).unwrap();
        assert_eq!(net.evaluate(&[y]).unwrap(), vec![1.0]);
        assert_eq!(net.evaluate(&[y + 1.0 / m]).unwrap(), vec![0.0]);
        assert_eq!(net.depth(), 2);
    }

    #[test]
    fn rescale_by_one_is_identity() {
        assert_eq!(homogeneous_rescale(&hat(), 1.0).unwrap(), hat());
    }

    #[test]
    fn rescale_hat_by_two() {
        let net = homogeneous_rescale(&hat(), 2.0).unwrap();
        assert_eq!(net.evaluate(&[0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn rescale_rejects_nonpositive() {
        assert!(homogeneous_rescale(&hat(), 0.0).is_err());
        assert!(homogeneous_rescale(&hat(), -1.0).is_err());
    }

    #[test]
    fn compose_inserts_seam_relu() {
        let net = compose(&ident(1), &ident(1)).unwrap();
        assert_eq!(net.evaluate(&[-1.0]).unwrap(), vec![0.0]);
        let net = compose(&ident(1), &hat()).unwrap();
        assert_eq!(net.evaluate(&[0.0]).unwrap(), vec![1.0]);
        assert_eq!(net.depth(), 3);
    }

    #[test]
    fn merge_affine_has_no_seam_relu() {
        let net = merge_affine(&ident(1), &ident(1)).unwrap();
        assert_eq!(net.evaluate(&[-1.0]).unwrap(), vec![-1.0]);
        let net = merge_affine(&ident(1), &hat()).unwrap();
        assert_eq!(net.depth(), 2);
        assert_eq!(net.evaluate(&[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn compose_rejects_mismatch() {
        assert!(compose(&ident(2), &hat()).is_err());
        assert!(merge_affine(&ident(2), &hat()).is_err());
    }
}
