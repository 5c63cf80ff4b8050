//! Best fixed point in hindsight for a sum of quadratic losses.

use rand::SeedableRng;

use crate::barrier::{Barrier, Domain};
use crate::env::QuadLoss;
use crate::error::{BcoError, Result};
use crate::ftrl::newton_minimize;
use crate::numerics::{norm2, solve_spd, sym_eig};

/// Number of random probes used to certify a comparator.
pub const CERT_PROBES: usize = 1000;
/// A probe may not beat the comparator by more than this.
pub const CERT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Comparator {
    pub x: Vec<f64>,
    pub total_loss: f64,
    /// Largest improvement any probe achieved (negative when none improved).
    pub worst_probe_gap: f64,
}

/// `argmin_{x∈X} Σ_t f_t(x)` for the summed quadratic `total`.
///
/// Closed form when the unconstrained minimizer is feasible; otherwise a
/// barrier path down to weight `1e-8` (relative to the loss scale) followed
/// by projected-gradient polishing. Certified against random probes.
pub fn offline_comparator(
    total: &QuadLoss,
    domain: &Domain,
    probe_seed: u64,
) -> Result<Comparator> {
    let d = domain.dim();
    let eig = sym_eig(&total.q_mat);
    let lmax = eig.values[d - 1].max(0.0);
    let lmin = eig.values[0];
    let scale = lmax + norm2(&total.q) + 1.0;

    let mut x = None;
    if lmin > 1e-12 * scale {
        let neg_q: Vec<f64> = total.q.iter().map(|v| -v).collect();
        let xu = solve_spd(&total.q_mat, &neg_q)?;
        if domain.contains(&xu).inside {
            x = Some(xu);
        }
    }
    let x = match x {
        Some(x) => x,
        None => {
            let barrier = Barrier::for_domain(domain.clone());
            let mut cur = vec![0.0; d];
            let mut mu = scale;
            while mu >= 1e-8 * scale {
                let m = mu;
                let res = newton_minimize(
                    &cur,
                    |p| {
                        let b = barrier.oracle(p)?;
                        let mut h = total.q_mat.clone();
                        h.add_assign(&b.hess, m);
                        let g: Vec<f64> = total
                            .gradient(p)
                            .iter()
                            .zip(&b.grad)
                            .map(|(a, c)| a + m * c)
                            .collect();
                        Ok((total.value(p) + m * b.value, g, h))
                    },
                    |p| Ok(total.value(p) + m * barrier.value(p)?),
                    1e-9,
                    200,
                )?;
                cur = res.x;
                mu *= 0.1;
            }
            polish(total, domain, cur, lmax)
        }
    };
    let total_loss = total.value(&x);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(probe_seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..CERT_PROBES {
        let p = domain.sample_uniform(&mut rng);
        worst = worst.max(total_loss - total.value(&p));
    }
    if worst > CERT_TOL {
        return Err(BcoError::solver(
            format!("comparator certification failed: a probe improves by {worst:e}"),
            &[],
        ));
    }
    Ok(Comparator {
        x,
        total_loss,
        worst_probe_gap: worst,
    })
}

/// Projected gradient from `x0`, keeping only improving iterates.
fn polish(total: &QuadLoss, domain: &Domain, x0: Vec<f64>, lmax: f64) -> Vec<f64> {
    let gnorm = norm2(&total.q).max(1e-300);
    let step = if lmax > 1e-12 {
        1.0 / lmax
    } else {
        10.0 * domain.outer_radius() / gnorm
    };
    let mut x = domain.project(&x0);
    let mut fx = total.value(&x);
    for _ in 0..2000 {
        let g = total.gradient(&x);
        let trial = domain.project(
            &x.iter()
                .zip(&g)
                .map(|(a, b)| a - step * b)
                .collect::<Vec<_>>(),
        );
        let ft = total.value(&trial);
        if !(ft < fx) {
            break;
        }
        x = trial;
        fx = ft;
    }
    x
}
