//! Collapse a hybrid tensor to one `s`-curve per subject:
//! `W_i(s) = 1/R sum_r int Y_i(r, w, s) dw`.
//!
//! The omega integral is not normalised by the domain length. Masked tensors are
//! integrated with each subject's own weights over its observed slices;
//! reconstructions are dense and use the full grid.

use crate::error::Result;
use crate::hpca::{check_q, HpcaModel};
use crate::tensorcore::{FunctionalSample, HybridTensor};

pub fn pool_to_curve(tensor: &HybridTensor) -> Result<FunctionalSample> {
    let ns = tensor.s_grid().len();
    let nr = tensor.regions();
    let mut curves = vec![0.0; tensor.n() * ns];
    for i in 0..tensor.n() {
        let out = &mut curves[i * ns..(i + 1) * ns];
        let ww = tensor.omega_weights(i);
        for r in 0..nr {
            for (w, &wo) in ww.iter().enumerate() {
                if wo == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(tensor.fiber(i, r, w)) {
                    *o += wo * v;
                }
            }
        }
        for o in out.iter_mut() {
            *o /= nr as f64;
        }
    }
    FunctionalSample::new(curves, tensor.n(), tensor.s_grid().clone())
}

/// `pool(reconstruct(model, q))` without materialising the tensor:
/// `sum_t xi_{i,t} * mean_r(V_k) * int(phi_l) * psi_m(s)` over the first `q` ranks.
pub fn pool_reconstruction(model: &HpcaModel, q: usize) -> Result<FunctionalSample> {
    check_q(model, q)?;
    let ns = model.s_grid.len();
    let nr = model.regions() as f64;
    let factors: Vec<f64> = model
        .ranking
        .iter()
        .take(q)
        .map(|t| {
            let vbar = model.basis_region.vector(t.k).iter().sum::<f64>() / nr;
            vbar * model.omega_grid.integrate(model.basis_omega.vector(t.l))
        })
        .collect();
    let mut curves = vec![0.0; model.n * ns];
    for i in 0..model.n {
        let out = &mut curves[i * ns..(i + 1) * ns];
        for (rank, (t, f)) in model.ranking.iter().zip(&factors).enumerate() {
            let c = model.score(i, rank) * f;
            for (o, p) in out.iter_mut().zip(model.basis_s.vector(t.m)) {
                *o += c * p;
            }
        }
    }
    FunctionalSample::new(curves, model.n, model.s_grid.clone())
}
