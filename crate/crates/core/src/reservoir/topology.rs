use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Coupled linear reservoir `r' = gamma * (-r + A r + d u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTopology {
    adjacency: DMatrix<f64>,
    mask: DVector<f64>,
    gamma: f64,
}

/// Modal form of a reservoir: `q_i' = gamma * ((lambda_i - 1) q_i + c_i u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalReservoir {
    lambdas: Vec<f64>,
    mask: Vec<f64>,
    gamma: f64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")))
    }
}

fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0).ok_or(Error::EigenFailure)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    Ok(symmetric_eigen(a)?
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max))
}

impl ReservoirTopology {
    /// Builds a topology, symmetrising `adjacency` and rejecting non-Hurwitz
    /// couplings (largest eigenvalue must be below one).
    pub fn new(adjacency: DMatrix<f64>, mask: DVector<f64>, gamma: f64) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidArgument("adjacency must be square and non-empty".into()));
        }
        if mask.len() != n {
            return Err(Error::InvalidArgument(format!(
                "input mask has length {}, expected {n}",
                mask.len()
            )));
        }
        check_gamma(gamma)?;
        if adjacency.iter().chain(mask.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("topology entries must be finite".into()));
        }
        let adjacency = (&adjacency + adjacency.transpose()) * 0.5;
        let top = max_eigenvalue(&adjacency)?;
        if top >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "largest adjacency eigenvalue {top} makes the reservoir unstable"
            )));
        }
        Ok(Self {
            adjacency,
            mask,
            gamma,
        })
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn mask(&self) -> &DVector<f64> {
        &self.mask
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TopologyDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TopologyDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// On-disk layout: `{n, gamma, a: row-major, d}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub n: usize,
    pub gamma: f64,
    pub a: Vec<f64>,
    pub d: Vec<f64>,
}

impl From<&ReservoirTopology> for TopologyDoc {
    fn from(t: &ReservoirTopology) -> Self {
        let n = t.n();
        let a = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| t.adjacency[(i, j)])
            .collect();
        Self {
            n,
            gamma: t.gamma,
            a,
            d: t.mask.iter().cloned().collect(),
        }
    }
}

impl TryFrom<TopologyDoc> for ReservoirTopology {
    type Error = Error;
    fn try_from(doc: TopologyDoc) -> Result<Self> {
        if doc.a.len() != doc.n * doc.n {
            return Err(Error::InvalidArgument(format!(
                "adjacency has {} entries, expected {}",
                doc.a.len(),
                doc.n * doc.n
            )));
        }
        ReservoirTopology::new(
            DMatrix::from_row_slice(doc.n, doc.n, &doc.a),
            DVector::from_vec(doc.d),
            doc.gamma,
        )
    }
}

impl ModalReservoir {
    pub fn new(lambdas: Vec<f64>, mask: Vec<f64>, gamma: f64) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() != mask.len() {
            return Err(Error::InvalidArgument(format!(
                "modal reservoir needs matching non-empty eigenvalue ({}) and mask ({}) vectors",
                lambdas.len(),
                mask.len()
            )));
        }
        check_gamma(gamma)?;
        if lambdas.iter().chain(&mask).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("modal entries must be finite".into()));
        }
        if let Some(bad) = lambdas.iter().find(|&&l| l >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eigenvalue {bad} makes the mode unstable"
            )));
        }
        Ok(Self {
            lambdas,
            mask,
            gamma,
        })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn mask(&self) -> &[f64] {
        &self.mask
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Continuous-time pole `gamma * (lambda_i - 1)` of mode `i`.
    pub fn pole(&self, i: usize) -> f64 {
        self.gamma * (self.lambdas[i] - 1.0)
    }

    pub fn with_lambdas(&self, lambdas: Vec<f64>) -> Result<Self> {
        Self::new(lambdas, self.mask.clone(), self.gamma)
    }
}

fn erdos_renyi<R: Rng>(n: usize, edge_prob: f64, weighted: bool, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(edge_prob) {
                let w = if weighted { rng.gen::<f64>() } else { 1.0 };
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    a
}

fn check_graph_args(n: usize, edge_prob: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("reservoir needs at least one node".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::InvalidArgument(format!("edge probability {edge_prob} outside [0, 1]")));
    }
    Ok(())
}

fn normal_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Erdos-Renyi reservoir whose spectrum is shifted so that its largest
/// eigenvalue equals `target_max_eig`. Edge weights are uniform on (0, 1)
/// when `weighted`, otherwise one; the mask is standard normal.
pub fn generate_random_topology(
    n: usize,
    edge_prob: f64,
    weighted: bool,
    target_max_eig: f64,
    gamma: f64,
    seed: u64,
) -> Result<ReservoirTopology> {
    check_graph_args(n, edge_prob)?;
    if !(target_max_eig < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target largest eigenvalue {target_max_eig} must be below 1"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut a = erdos_renyi(n, edge_prob, weighted, &mut rng);
    let shift = target_max_eig - max_eigenvalue(&a)?;
    for i in 0..n {
        a[(i, i)] += shift;
    }
    let d = normal_vector(n, &mut rng);
    ReservoirTopology::new(a, d, gamma)
}

/// Erdos-Renyi reservoir rescaled to the given spectral radius, without a
/// spectral shift. Used for the nonlinear comparison reservoirs.
pub fn generate_echo_state_topology(
    n: usize,
    edge_prob: f64,
    weighted: bool,
    spectral_radius: f64,
    gamma: f64,
    seed: u64,
) -> Result<ReservoirTopology> {
    check_graph_args(n, edge_prob)?;
    if !(spectral_radius > 0.0 && spectral_radius < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "spectral radius {spectral_radius} must lie in (0, 1)"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut a = erdos_renyi(n, edge_prob, weighted, &mut rng);
    let radius = symmetric_eigen(&a)?
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()));
    if radius > 0.0 {
        a *= spectral_radius / radius;
    }
    let d = normal_vector(n, &mut rng);
    ReservoirTopology::new(a, d, gamma)
}

/// Diagonalise the coupling: returns the modal reservoir (eigenvalues
/// ascending, mask `V^T d`) and the orthogonal eigenvector matrix `V`.
pub fn decouple(top: &ReservoirTopology) -> Result<(ModalReservoir, DMatrix<f64>)> {
    let eig = symmetric_eigen(&top.adjacency)?;
    let n = top.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut v = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        v.set_column(col, &eig.eigenvectors.column(src));
    }
    let ortho = (v.transpose() * &v - DMatrix::identity(n, n)).amax();
    if !(ortho < 1e-10) {
        return Err(Error::EigenFailure);
    }
    let lambdas = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let c = v.transpose() * &top.mask;
    let modal = ModalReservoir::new(lambdas, c.iter().cloned().collect(), top.gamma)?;
    Ok((modal, v))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Realise a modal reservoir as a concrete network `A = V diag(lambda) V^T`,
/// `d = V c`, with a random orthogonal `V`.
pub fn recouple(modal: &ModalReservoir, seed: u64) -> Result<ReservoirTopology> {
    let n = modal.n();
    let mut rng = rng::seeded(seed);
    let v = random_orthogonal(n, &mut rng);
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(modal.lambdas()));
    let a = &v * lambda * v.transpose();
    let d = &v * DVector::from_column_slice(modal.mask());
    ReservoirTopology::new(a, d, modal.gamma())
}
