//! Evolving 2-D Gaussian mixture: random-walking means and covariances with
//! a rotational field and inward drift acting between marginals.

use crate::dataset::MarginalDataset;
use crate::error::Result;
use crate::linalg::{spd_sqrt, symmetric_eigen, Matrix, SeededRng, SpdMatrix};

#[derive(Debug, Clone)]
pub struct MixtureConfig {
    pub components: usize,
    /// Std of the initial component means.
    pub mean_std: f64,
    /// Initial covariance eigenvalues drawn uniformly from this range.
    pub cov_range: (f64, f64),
    /// Mean random-walk step size per marginal transition.
    pub walk_step: f64,
    pub rotation_coeff: f64,
    pub drift_coeff: f64,
    pub marginals: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            components: 5,
            mean_std: 1.5,
            cov_range: (0.1, 0.4),
            walk_step: 0.7,
            rotation_coeff: 0.25,
            drift_coeff: 0.1,
            marginals: 6,
            samples: 3000,
            seed: 0,
        }
    }
}

/// Exact mixture parameters of one marginal.
#[derive(Debug, Clone)]
pub struct MixtureSnapshot {
    pub means: Vec<[f64; 2]>,
    pub covs: Vec<Matrix>,
}

fn rotation(phi: f64) -> Matrix {
    let (s, c) = (libm::sin(phi), libm::cos(phi));
    Matrix::new(2, 2, vec![c, -s, s, c]).unwrap()
}

/// Frobenius projection onto well-conditioned PSD: symmetrize and clip
/// eigenvalues at 1e-8.
fn psd_project(m: &Matrix) -> Matrix {
    let sym = m.symmetrize();
    let eig = symmetric_eigen(&sym);
    let n = sym.rows();
    Matrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.vectors[(i, k)] * eig.values[k].max(1e-8) * eig.vectors[(j, k)])
            .sum()
    })
}

fn sample_snapshot(
    snap: &MixtureSnapshot,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let roots: Vec<Matrix> = snap
        .covs
        .iter()
        .map(|c| Ok(spd_sqrt(&SpdMatrix::new(c.clone())?)?.into_matrix()))
        .collect::<Result<_>>()?;
    let mut cloud = Matrix::zeros(n, 2);
    for i in 0..n {
        let c = rng.below(snap.means.len());
        let z = [rng.normal(), rng.normal()];
        let root = &roots[c];
        for j in 0..2 {
            cloud[(i, j)] =
                snap.means[c][j] + root[(j, 0)] * z[0] + root[(j, 1)] * z[1];
        }
    }
    Ok(cloud)
}

/// Generate the marginal clouds together with the exact per-marginal mixture
/// parameters that produced them.
///
/// Between marginals each component mean takes a Gaussian step of size
/// `walk_step` and every distribution is pushed through the affine map
/// G = exp(-drift) R(rotation); covariances additionally take a symmetrized
/// entrywise random-walk step (std 0.05 scaled by walk_step / 0.7) followed
/// by the PSD projection.
pub fn gen_mixture(cfg: &MixtureConfig) -> Result<(MarginalDataset, Vec<MixtureSnapshot>)> {
    let mut rng = SeededRng::from_seed(cfg.seed);
    let mut means: Vec<[f64; 2]> = (0..cfg.components)
        .map(|_| [cfg.mean_std * rng.normal(), cfg.mean_std * rng.normal()])
        .collect();
    let mut covs: Vec<Matrix> = (0..cfg.components)
        .map(|_| {
            let (lo, hi) = cfg.cov_range;
            let eigs = [lo + (hi - lo) * rng.uniform(), lo + (hi - lo) * rng.uniform()];
            let r = rotation(2.0 * std::f64::consts::PI * rng.uniform());
            r.matmul(&Matrix::diag(&eigs)).matmul(&r.transpose())
        })
        .collect();

    // Affine sample map applied once per marginal transition.
    let g = rotation(cfg.rotation_coeff).scale(libm::exp(-cfg.drift_coeff));
    let cov_step = 0.05 * (cfg.walk_step / 0.7);

    let mut snapshots = Vec::with_capacity(cfg.marginals);
    let mut clouds = Vec::with_capacity(cfg.marginals);
    for k in 0..cfg.marginals {
        if k > 0 {
            for m in means.iter_mut() {
                let stepped = [
                    m[0] + cfg.walk_step * rng.normal(),
                    m[1] + cfg.walk_step * rng.normal(),
                ];
                let mapped = g.matvec(&stepped);
                *m = [mapped[0], mapped[1]];
            }
            for c in covs.iter_mut() {
                let pushed = g.matmul(c).matmul(&g.transpose());
                let noise = Matrix::from_fn(2, 2, |_, _| cov_step * rng.normal());
                *c = psd_project(&pushed.add(&noise.symmetrize()));
            }
        }
        let snap = MixtureSnapshot {
            means: means.clone(),
            covs: covs.clone(),
        };
        clouds.push(sample_snapshot(&snap, cfg.samples, &mut rng)?);
        snapshots.push(snap);
    }

    let times: Vec<f64> = (0..cfg.marginals)
        .map(|k| k as f64 / (cfg.marginals - 1) as f64)
        .collect();
    Ok((MarginalDataset::new(times, clouds, None)?, snapshots))
}
