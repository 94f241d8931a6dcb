//! Dual conditional FIM `H_L`, the dense conditional FIM and the block NTK.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{ForwardTrace, OrthogonalNet};
use crate::error::{Error, Result};

/// Largest width for [`dual_fim_dense`].
pub const DENSE_MAX_WIDTH: usize = 16;
/// Largest depth for [`dual_fim_dense`].
pub const DENSE_MAX_DEPTH: usize = 4;
/// Largest `N M` for [`ntk_block_matrix`].
pub const NTK_MAX_SIZE: usize = 4096;

fn check_trace(net: &OrthogonalNet, trace: &ForwardTrace) -> Result<()> {
    if trace.depth() != net.depth() || trace.x[0].len() != net.width() {
        return Err(Error::Dimension(format!(
            "trace of depth {} and width {} for a net of depth {} and width {}",
            trace.depth(),
            trace.x[0].len(),
            net.depth(),
            net.width()
        )));
    }
    Ok(())
}

/// `W` with column `j` scaled by `d_j`, i.e. `W diag(d)`.
fn scale_columns(w: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = w.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

/// `δ_{L→ℓ} = ∂h^L/∂h^ℓ` for `ℓ = 1 … L` (index `ℓ - 1`).
pub fn backprop_deltas(net: &OrthogonalNet, trace: &ForwardTrace) -> Result<Vec<DMatrix<f64>>> {
    check_trace(net, trace)?;
    let (m, depth) = (net.width(), net.depth());
    let mut deltas = vec![DMatrix::<f64>::identity(m, m)];
    for l in (1..depth).rev() {
        // δ_{L→l} = δ_{L→l+1} W_{l+1} D_l
        let next = deltas.last().expect("nonempty") * scale_columns(&net.weights()[l], &trace.d[l - 1]);
        deltas.push(next);
    }
    deltas.reverse();
    Ok(deltas)
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

/// `H_1 = q̂_0 I`, `H_{ℓ+1} = q̂_ℓ I + W_{ℓ+1} D_ℓ H_ℓ D_ℓ W_{ℓ+1}ᵀ`.
pub fn dual_fim_recursive(net: &OrthogonalNet, trace: &ForwardTrace) -> Result<DMatrix<f64>> {
    check_trace(net, trace)?;
    let m = net.width();
    let mut h = DMatrix::<f64>::identity(m, m) * trace.q_hat[0];
    for l in 1..net.depth() {
        let t = scale_columns(&net.weights()[l], &trace.d[l - 1]);
        h = &t * h * t.transpose();
        for i in 0..m {
            h[(i, i)] += trace.q_hat[l];
        }
        symmetrize(&mut h);
    }
    Ok(h)
}

/// Output of [`dual_fim_dense`].
#[derive(Clone, Debug)]
pub struct DenseFim {
    /// `∂f/∂θ`, `M × L M²`; parameter `(ℓ, j, k)` is column `(ℓ-1) M² + j M + k`.
    pub jacobian: DMatrix<f64>,
    /// `(∂f/∂θ)(∂f/∂θ)ᵀ / M`.
    pub dual: DMatrix<f64>,
    /// Conditional FIM `(∂f/∂θ)ᵀ(∂f/∂θ)`.
    pub conditional: DMatrix<f64>,
}

/// Both FIMs from the explicit parameter Jacobian, with
/// `∂f/∂W_ℓ[j, k] = δ_{L→ℓ}[:, j] x^{ℓ-1}_k`.
pub fn dual_fim_dense(net: &OrthogonalNet, x: &DVector<f64>) -> Result<DenseFim> {
    let (m, depth) = (net.width(), net.depth());
    if m > DENSE_MAX_WIDTH || depth > DENSE_MAX_DEPTH {
        return Err(Error::Guard(format!(
            "dense FIM needs M <= {DENSE_MAX_WIDTH} and L <= {DENSE_MAX_DEPTH}, got M = {m}, L = {depth}"
        )));
    }
    let trace = net.forward_trace(x)?;
    let deltas = backprop_deltas(net, &trace)?;
    let mut jac = DMatrix::<f64>::zeros(m, depth * m * m);
    for (l, delta) in deltas.iter().enumerate() {
        let input = &trace.x[l];
        for j in 0..m {
            for k in 0..m {
                let col = l * m * m + j * m + k;
                jac.column_mut(col).copy_from(&(delta.column(j) * input[k]));
            }
        }
    }
    let mut dual = &jac * jac.transpose() / m as f64;
    symmetrize(&mut dual);
    let mut conditional = jac.transpose() * &jac;
    symmetrize(&mut conditional);
    Ok(DenseFim {
        jacobian: jac,
        dual,
        conditional,
    })
}

/// `Tr(A) / dim`.
pub fn normalized_trace(a: &DMatrix<f64>) -> f64 {
    a.trace() / a.nrows() as f64
}

/// `Θ` with blocks `Θ(m, n) = (M/N) Σ_ℓ Σ_ℓ(m, n) δ_{L→ℓ}(m) δ_{L→ℓ}(n)ᵀ`,
/// `Σ_ℓ(m, n) = ⟨x^{ℓ-1}(m), x^{ℓ-1}(n)⟩ / M`.
///
/// The diagonal blocks are `(M/N) H_L(x(n))`, so the normalized traces obey
/// `tr(Θ/M) = Σ_n tr(H_L(x(n))) / N²`.
pub fn ntk_block_matrix(net: &OrthogonalNet, inputs: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    let (m, n) = (net.width(), inputs.len());
    if n == 0 {
        return Err(Error::invalid("need at least one input"));
    }
    if n * m > NTK_MAX_SIZE {
        return Err(Error::Guard(format!("N M = {} exceeds {NTK_MAX_SIZE}", n * m)));
    }
    let per_input = inputs
        .par_iter()
        .map(|x| {
            let trace = net.forward_trace(x)?;
            let deltas = backprop_deltas(net, &trace)?;
            Ok((trace, deltas))
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let scale = m as f64 / n as f64;
    let blocks: Vec<DMatrix<f64>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (ta, da) = &per_input[a];
            let (tb, db) = &per_input[b];
            let mut block = DMatrix::<f64>::zeros(m, m);
            for l in 0..net.depth() {
                let sigma = ta.x[l].dot(&tb.x[l]) / m as f64;
                block.gemm(scale * sigma, &da[l], &db[l].transpose(), 1.0);
            }
            block
        })
        .collect();

    let mut theta = DMatrix::<f64>::zeros(n * m, n * m);
    for (&(a, b), block) in pairs.iter().zip(&blocks) {
        theta.view_mut((a * m, b * m), (m, m)).copy_from(block);
        if a != b {
            theta.view_mut((b * m, a * m), (m, m)).copy_from(&block.transpose());
        }
    }
    symmetrize(&mut theta);
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::ActivationSpec;
    use crate::rmtsim::normalized_gaussian_input;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_layer_is_scaled_identity() {
        let net = OrthogonalNet::constant(6, 1, 1.0, ActivationSpec::Linear { g: 1.0 }, 4).unwrap();
        let x = normalized_gaussian_input(6, 1.7, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let h = dual_fim_recursive(&net, &net.forward_trace(&x).unwrap()).unwrap();
        assert!((h - DMatrix::<f64>::identity(6, 6) * 1.7).amax() < 1e-12);
    }

    #[test]
    fn linear_unit_net_gives_depth_times_identity() {
        for depth in [1, 2, 8] {
            let net = OrthogonalNet::constant(20, depth, 1.0, ActivationSpec::Linear { g: 1.0 }, 8).unwrap();
            let x = normalized_gaussian_input(20, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            let h = dual_fim_recursive(&net, &net.forward_trace(&x).unwrap()).unwrap();
            assert!((h - DMatrix::<f64>::identity(20, 20) * depth as f64).amax() < 1e-9);
        }
    }

    #[test]
    fn guards() {
        let net = OrthogonalNet::constant(17, 2, 1.0, ActivationSpec::Linear { g: 1.0 }, 0).unwrap();
        let x = DVector::from_element(17, 1.0);
        assert!(matches!(dual_fim_dense(&net, &x), Err(Error::Guard(_))));
        let net = OrthogonalNet::constant(100, 1, 1.0, ActivationSpec::Linear { g: 1.0 }, 0).unwrap();
        let xs = vec![DVector::from_element(100, 1.0); 41];
        assert!(matches!(ntk_block_matrix(&net, &xs), Err(Error::Guard(_))));
    }

    #[test]
    fn single_input_ntk_is_m_times_h() {
        let net = OrthogonalNet::constant(12, 3, 1.0, ActivationSpec::HardTanh { s: 1.0, g: 1.0 }, 5).unwrap();
        let x = normalized_gaussian_input(12, 1.0, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let theta = ntk_block_matrix(&net, std::slice::from_ref(&x)).unwrap();
        let h = dual_fim_recursive(&net, &net.forward_trace(&x).unwrap()).unwrap();
        assert!((theta - h * 12.0).amax() < 1e-10);
    }
}
