//! Brute-force quantities for tiny RBMs, computed by enumerating every binary
//! configuration. These serve as test oracles for the sampling-based code.

use crate::error::{Error, Result};
use crate::math::{check_len, log_sum_exp, Matrix};
use crate::rbm::{CdStats, Rbm};

/// Largest `visible + hidden` accepted for enumeration.
pub const MAX_ENUMERATION_UNITS: usize = 20;

fn guard(m: &Rbm) -> Result<()> {
    if m.visible() + m.hidden() > MAX_ENUMERATION_UNITS {
        return Err(Error::TooLarge {
            visible: m.visible(),
            hidden: m.hidden(),
            limit: MAX_ENUMERATION_UNITS,
        });
    }
    Ok(())
}

/// Bits of `code` as a 0/1 vector of length `n`, least significant first.
pub fn binary_vector(code: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((code >> i) & 1) as f64).collect()
}

type Config = (Vec<f64>, Vec<f64>, f64);

/// Every `(x, h)` configuration with its negative energy.
fn configurations(m: &Rbm) -> Result<Vec<Config>> {
    guard(m)?;
    let (nv, nh) = (m.visible(), m.hidden());
    let mut out = Vec::with_capacity(1 << (nv + nh));
    for xc in 0..1usize << nv {
        let x = binary_vector(xc, nv);
        for hc in 0..1usize << nh {
            let h = binary_vector(hc, nh);
            let neg_e = -m.energy(&x, &h)?;
            out.push((x.clone(), h, neg_e));
        }
    }
    Ok(out)
}

/// `ln Z`, summed in log space over all `2^(I+J)` configurations.
pub fn exact_log_partition_function(m: &Rbm) -> Result<f64> {
    let neg_energies: Vec<f64> = configurations(m)?.into_iter().map(|c| c.2).collect();
    Ok(log_sum_exp(&neg_energies))
}

pub fn exact_partition_function(m: &Rbm) -> Result<f64> {
    exact_log_partition_function(m).map(f64::exp)
}

/// Unnormalized `ln Σ_h exp(-E(x, h))`.
fn log_marginal_unnormalized(m: &Rbm, x: &[f64]) -> Result<f64> {
    let nh = m.hidden();
    let terms = (0..1usize << nh)
        .map(|hc| m.energy(x, &binary_vector(hc, nh)).map(|e| -e))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms))
}

/// `ln p(x)` for a visible vector.
pub fn exact_log_prob(m: &Rbm, x: &[f64]) -> Result<f64> {
    guard(m)?;
    check_len("visible vector", x.len(), m.visible())?;
    Ok(log_marginal_unnormalized(m, x)? - exact_log_partition_function(m)?)
}

/// Exact `p(h | x)` over all `2^J` hidden codes (indexed as in [`binary_vector`]).
pub fn exact_hidden_posterior(m: &Rbm, x: &[f64]) -> Result<Vec<f64>> {
    guard(m)?;
    check_len("visible vector", x.len(), m.visible())?;
    let nh = m.hidden();
    let terms = (0..1usize << nh)
        .map(|hc| m.energy(x, &binary_vector(hc, nh)).map(|e| -e))
        .collect::<Result<Vec<_>>>()?;
    let norm = log_sum_exp(&terms);
    Ok(terms.into_iter().map(|t| (t - norm).exp()).collect())
}

/// Gradient of `ln p(x)`: data-clamped expectation minus model expectation
/// of `-∂E/∂θ`. Same sign convention as the CD estimate.
pub fn exact_log_likelihood_grad(m: &Rbm, x: &[f64]) -> Result<CdStats> {
    guard(m)?;
    check_len("visible vector", x.len(), m.visible())?;
    let (nv, nh) = (m.visible(), m.hidden());
    let configs = configurations(m)?;
    let neg_energies: Vec<f64> = configs.iter().map(|c| c.2).collect();
    let log_z = log_sum_exp(&neg_energies);

    let mut model_w = Matrix::zeros(nv, nh);
    let mut model_b = vec![0.0; nv];
    let mut model_a = vec![0.0; nh];
    for (xv, hv, neg_e) in &configs {
        let p = (neg_e - log_z).exp();
        for i in 0..nv {
            if xv[i] == 0.0 {
                continue;
            }
            model_b[i] += p;
            for j in 0..nh {
                if hv[j] != 0.0 {
                    model_w.set(i, j, model_w.get(i, j) + p);
                }
            }
        }
        for j in 0..nh {
            model_a[j] += p * hv[j];
        }
    }

    let ph = m.prob_h_given_x(x)?;
    let dw = Matrix::from_fn(nv, nh, |i, j| x[i] * ph[j] - model_w.get(i, j));
    let db_vis = x.iter().zip(&model_b).map(|(d, e)| d - e).collect();
    let da_hid = ph.iter().zip(&model_a).map(|(d, e)| d - e).collect();
    Ok(CdStats {
        dw,
        db_vis,
        da_hid,
        batch_size: 1,
    })
}
