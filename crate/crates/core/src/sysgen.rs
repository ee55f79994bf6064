//! Ground-truth systems: the sparse 2-regular and dense star families used in
//! the scaling experiments, random symmetric stable matrices for tests, and
//! the observed/hidden block partition.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const SYMMETRY_TOL: f64 = 1e-12;

/// A symmetric stable dynamics matrix with its noise level and the number of
/// observed coordinates. Observed coordinates are always the index prefix
/// `0..n_obs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemDoc", into = "SystemDoc")]
pub struct SymmetricDynamics {
    a: Matrix,
    sigma: f64,
    n_obs: usize,
    rho: f64,
}

/// On-disk layout of a system.
#[derive(Debug, Serialize, Deserialize)]
pub struct SystemDoc {
    pub n: usize,
    pub sigma: f64,
    pub n_obs: usize,
    pub entries: Vec<f64>,
}

impl TryFrom<SystemDoc> for SymmetricDynamics {
    type Error = Error;

    fn try_from(doc: SystemDoc) -> Result<Self> {
        let a = Matrix::from_vec(doc.n, doc.n, doc.entries)?;
        SymmetricDynamics::new(a, doc.sigma, doc.n_obs)
    }
}

impl From<SymmetricDynamics> for SystemDoc {
    fn from(d: SymmetricDynamics) -> Self {
        SystemDoc {
            n: d.n(),
            sigma: d.sigma,
            n_obs: d.n_obs,
            entries: d.a.into_vec(),
        }
    }
}

impl SymmetricDynamics {
    /// Validates symmetry, stability and the observation count.
    ///
    /// `sigma = 0` is accepted and yields a noiseless system; negative or
    /// non-finite values are rejected.
    pub fn new(a: Matrix, sigma: f64, n_obs: usize) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 {
            return Err(Error::invalid(format!(
                "dynamics matrix must be square and non-empty, got {:?}",
                a.shape()
            )));
        }
        let asym = a.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::invalid(format!(
                "dynamics matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        let n = a.rows();
        if n_obs == 0 || n_obs > n {
            return Err(Error::invalid(format!(
                "n_obs must lie in [1, {n}], got {n_obs}"
            )));
        }
        let rho = a.spectral_radius()?;
        if rho >= 1.0 {
            return Err(Error::invalid(format!(
                "dynamics are not stable: spectral radius {rho} >= 1"
            )));
        }
        Ok(SymmetricDynamics {
            a,
            sigma,
            n_obs,
            rho,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_hidden(&self) -> usize {
        self.n() - self.n_obs
    }

    /// Spectral radius, computed once at construction.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_n_obs(mut self, n_obs: usize) -> Result<Self> {
        if n_obs == 0 || n_obs > self.n() {
            return Err(Error::invalid(format!(
                "n_obs must lie in [1, {}], got {n_obs}",
                self.n()
            )));
        }
        self.n_obs = n_obs;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Adjacency of a random 2-regular simple graph scaled by 1/3.
///
/// A random permutation is split into cycles and redrawn until every cycle
/// has length at least three; each cycle becomes an undirected ring.
pub fn gen_sparse_2regular(n: usize, seed: u64) -> Result<SymmetricDynamics> {
    if n < 3 {
        return Err(Error::invalid(format!(
            "2-regular graph needs n >= 3, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if shortest_cycle(&perm) >= 3 {
            break;
        }
    }
    let mut a = Matrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        a[(i, j)] = 1.0 / 3.0;
        a[(j, i)] = 1.0 / 3.0;
    }
    // Every row sums to 2/3, so the Gershgorin bound already certifies stability.
    Ok(SymmetricDynamics {
        a,
        sigma: 1.0,
        n_obs: n,
        rho: 2.0 / 3.0,
    })
}

fn shortest_cycle(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut shortest = usize::MAX;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut cur = start;
        while !seen[cur] {
            seen[cur] = true;
            cur = perm[cur];
            len += 1;
        }
        shortest = shortest.min(len);
    }
    shortest
}

/// Arrow matrix: hub self-weight `1/sqrt(5)` and hub couplings `1/sqrt(2n)`.
pub fn gen_dense_star(n: usize) -> Result<SymmetricDynamics> {
    if n < 2 {
        return Err(Error::invalid(format!("dense star needs n >= 2, got {n}")));
    }
    let mut a = Matrix::zeros(n, n);
    a[(0, 0)] = 1.0 / 5f64.sqrt();
    let w = 1.0 / (2.0 * n as f64).sqrt();
    for j in 1..n {
        a[(0, j)] = w;
        a[(j, 0)] = w;
    }
    Ok(SymmetricDynamics {
        a,
        sigma: 1.0,
        n_obs: n,
        rho: dense_star_radius(n),
    })
}

/// Closed-form spectral radius of the dense star: the arrow matrix has
/// eigenvalues `(a ± sqrt(a^2 + 4 (n-1) w^2)) / 2` plus zeros.
pub fn dense_star_radius(n: usize) -> f64 {
    let a = 1.0 / 5f64.sqrt();
    let coupling = (n as f64 - 1.0) / (2.0 * n as f64);
    (a + (a * a + 4.0 * coupling).sqrt()) / 2.0
}

/// Symmetrized Gaussian matrix rescaled to the requested spectral radius.
pub fn gen_random_stable(n: usize, target_rho: f64, seed: u64) -> Result<SymmetricDynamics> {
    if !(target_rho > 0.0 && target_rho < 1.0) {
        return Err(Error::invalid(format!(
            "target spectral radius must lie in (0, 1), got {target_rho}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let spec = g.sym_eigen()?;
    let radius = spec.radius();
    if radius == 0.0 {
        return Err(Error::invalid("sampled a zero matrix"));
    }
    let a = g.scale(target_rho / radius);
    SymmetricDynamics::new(a, 1.0, n)
}

/// Observed/hidden blocks `(B, C, E)` with `A = [[B, C], [C^T, E]]`.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub b: Matrix,
    pub c: Matrix,
    pub e: Matrix,
}

impl Blocks {
    pub fn assemble(&self) -> Matrix {
        let no = self.b.rows();
        let nh = self.e.rows();
        let n = no + nh;
        Matrix::from_fn(n, n, |i, j| match (i < no, j < no) {
            (true, true) => self.b.get(i, j),
            (true, false) => self.c.get(i, j - no),
            (false, true) => self.c.get(j, i - no),
            (false, false) => self.e.get(i - no, j - no),
        })
    }

    /// `C C^T`, zero when nothing is hidden.
    pub fn cct(&self) -> Matrix {
        self.c
            .matmul(&self.c.transpose())
            .expect("C and C^T are conformable")
    }

    /// `C E C^T`, zero when nothing is hidden.
    pub fn cect(&self) -> Matrix {
        self.c
            .matmul(&self.e)
            .and_then(|ce| ce.matmul(&self.c.transpose()))
            .expect("block shapes are conformable")
    }
}

pub fn partition(d: &SymmetricDynamics) -> Result<Blocks> {
    let n = d.n();
    let no = d.n_obs();
    if no == 0 || no > n {
        return Err(Error::invalid(format!(
            "n_obs must lie in [1, {n}], got {no}"
        )));
    }
    let a = d.a();
    Ok(Blocks {
        b: a.block(0..no, 0..no),
        c: a.block(0..no, no..n),
        e: a.block(no..n, no..n),
    })
}
