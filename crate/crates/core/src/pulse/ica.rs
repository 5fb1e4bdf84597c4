//! FastICA for the three RGB traces: center, whiten via eigendecomposition
//! of the 3x3 covariance, then symmetric fixed-point iteration with the
//! tanh contrast. Initialization is drawn from a seeded generator so runs
//! are reproducible.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::ChannelTrace;

/// FastICA knobs. The defaults match the library's fixed pipeline: seed 42,
/// tolerance 1e-6 on the minimum absolute diagonal of `W_new W_old^T`,
/// at most 200 iterations.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IcaParams {
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IcaParams {
    fn default() -> Self {
        IcaParams {
            seed: 42,
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

/// Separated components plus the transforms that produced them.
///
/// `components[i] = (unmixing * whitening * centered_input) row i`; rows of
/// `unmixing` are orthonormal in the whitened space, so each component has
/// zero mean and unit (population) variance.
#[derive(Debug, Clone)]
pub struct IcaResult {
    pub components: [Vec<f64>; 3],
    pub unmixing: Matrix3<f64>,
    pub whitening: Matrix3<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Relative eigenvalue floor below which the covariance counts as singular.
const SINGULAR_RATIO: f64 = 1e-10;

/// Separate three aligned traces into independent components.
pub fn fastica3(traces: [&ChannelTrace; 3], params: &IcaParams) -> Result<IcaResult> {
    let n = traces[0].len();
    for t in traces.iter() {
        if t.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: t.len(),
            });
        }
        if t.fs != traces[0].fs {
            return Err(Error::FsMismatch {
                a: traces[0].fs,
                b: t.fs,
            });
        }
        t.ensure_finite("fastica3 input")?;
    }
    if n < 256 {
        return Err(Error::TooShort {
            context: "fastica3".into(),
            needed: 256,
            got: n,
        });
    }

    // Center.
    let means: Vec<f64> = traces.iter().map(|t| t.mean()).collect();
    let centered: Vec<Vec<f64>> = traces
        .iter()
        .zip(&means)
        .map(|(t, m)| t.samples.iter().map(|x| x - m).collect())
        .collect();

    // 3x3 population covariance.
    let mut cov = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let c = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }

    let eig = nalgebra::SymmetricEigen::new(cov);
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if max_ev <= 0.0 || eig.eigenvalues.iter().any(|&ev| ev <= SINGULAR_RATIO * max_ev) {
        return Err(Error::SingularCovariance);
    }
    // whitening = D^{-1/2} E^T, so whitened data has identity covariance.
    let d_inv_sqrt = Matrix3::from_diagonal(&Vector3::from_iterator(
        eig.eigenvalues.iter().map(|ev| 1.0 / ev.sqrt()),
    ));
    let whitening = d_inv_sqrt * eig.eigenvectors.transpose();

    let whitened: Vec<Vector3<f64>> = (0..n)
        .map(|t| whitening * Vector3::new(centered[0][t], centered[1][t], centered[2][t]))
        .collect();

    // Seeded random init, symmetric-decorrelated to orthonormal rows.
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = Matrix3::from_fn(|_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        iterations += 1;
        // One fixed-point step: w_i <- E[x g(w_i.x)] - E[g'(w_i.x)] w_i.
        let mut expectation = Matrix3::zeros();
        let mut g_prime_mean = Vector3::zeros();
        for x in &whitened {
            let u = w * x;
            for i in 0..3 {
                let g = u[i].tanh();
                g_prime_mean[i] += 1.0 - g * g;
                for j in 0..3 {
                    expectation[(i, j)] += g * x[j];
                }
            }
        }
        expectation /= n as f64;
        g_prime_mean /= n as f64;
        let mut w_plus = expectation;
        for i in 0..3 {
            for j in 0..3 {
                w_plus[(i, j)] -= g_prime_mean[i] * w[(i, j)];
            }
        }
        let w_new = symmetric_decorrelation(&w_plus);

        // Row alignment between successive iterates; 1 means unchanged.
        let align = w_new * w.transpose();
        let min_diag = (0..3).map(|i| align[(i, i)].abs()).fold(f64::MAX, f64::min);
        w = w_new;
        if 1.0 - min_diag < params.tolerance {
            converged = true;
            break;
        }
    }

    let mut components = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for x in &whitened {
        let u = w * x;
        for i in 0..3 {
            components[i].push(u[i]);
        }
    }

    Ok(IcaResult {
        components,
        unmixing: w,
        whitening,
        iterations,
        converged,
    })
}

/// W <- (W W^T)^{-1/2} W, forcing orthonormal rows.
fn symmetric_decorrelation(w: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = nalgebra::SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = Matrix3::from_diagonal(&Vector3::from_iterator(
        eig.eigenvalues.iter().map(|ev| 1.0 / ev.max(1e-12).sqrt()),
    ));
    eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}
