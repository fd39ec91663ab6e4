use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::data::ClientDataset;
use crate::error::{Error, Result};

/// Client `n` holds `f_n(w) = 1/2 w^T A_n w - b_n^T w`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticClient {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    dim: usize,
    clients: Vec<QuadraticClient>,
}

impl QuadraticModel {
    pub fn new(clients: Vec<QuadraticClient>) -> Result<Self> {
        let dim = clients.first().ok_or(Error::Empty("quadratic model without clients"))?.b.len();
        if dim == 0 {
            return Err(Error::Empty("zero-dimensional quadratic"));
        }
        for c in &clients {
            if c.a.nrows() != dim || c.a.ncols() != dim || c.b.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.b.len(),
                });
            }
            let asym = (&c.a - c.a.transpose()).amax();
            if asym > 1e-12 * c.a.amax().max(1.0) {
                return Err(Error::param("A", "must be symmetric"));
            }
            let min_eig = c.a.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-12 * c.a.amax().max(1.0) {
                return Err(Error::param("A", format!("not positive semidefinite (eigenvalue {min_eig})")));
            }
        }
        Ok(QuadraticModel { dim, clients })
    }

    /// Every client shares `a` and `b`.
    pub fn shared(a: DMatrix<f64>, b: DVector<f64>, n_clients: usize) -> Result<Self> {
        QuadraticModel::new(vec![QuadraticClient { a, b }; n_clients.max(1)])
    }

    /// Random heterogeneous clients: `A_n = Q_n diag(lambda) Q_n^T` with
    /// eigenvalues uniform in `eig_range`, and local minimizers drawn
    /// uniformly from the ball of radius `center_radius`.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        n_clients: usize,
        eig_range: (f64, f64),
        center_radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let (lo, hi) = eig_range;
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::param("eig_range", format!("({lo}, {hi}) must satisfy 0 <= lo < hi")));
        }
        if dim == 0 || n_clients == 0 {
            return Err(Error::param("quadratic", "dim and n_clients must be positive"));
        }
        let eig = Uniform::new(lo, hi).map_err(|e| Error::param("eig_range", e.to_string()))?;
        let clients = (0..n_clients)
            .map(|_| {
                let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
                let q = g.qr().q();
                let lambda = DVector::<f64>::from_fn(dim, |_, _| rng.sample(eig));
                let a = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
                let a = 0.5 * (&a + a.transpose());
                let center = random_in_ball(dim, center_radius, rng);
                let b = &a * center;
                QuadraticClient { a, b }
            })
            .collect();
        QuadraticModel::new(clients)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn clients(&self) -> &[QuadraticClient] {
        &self.clients
    }

    /// Marker datasets, one per client, to drive the generic training loop.
    pub fn client_datasets(&self) -> Vec<ClientDataset> {
        (0..self.clients.len()).map(ClientDataset::marker).collect()
    }

    pub(crate) fn client(&self, id: usize) -> Result<&QuadraticClient> {
        self.clients.get(id).ok_or(Error::DimensionMismatch {
            expected: self.clients.len(),
            found: id + 1,
        })
    }

    pub fn mean_a(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for c in &self.clients {
            s += &c.a;
        }
        s / self.clients.len() as f64
    }

    pub fn mean_b(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.dim);
        for c in &self.clients {
            s += &c.b;
        }
        s / self.clients.len() as f64
    }

    /// Minimizer of the global objective (least-squares solution when the
    /// mean Hessian is singular).
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        let a = self.mean_a();
        let b = self.mean_b();
        if let Some(chol) = a.clone().cholesky() {
            return Ok(chol.solve(&b));
        }
        a.svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::param("A", e.to_string()))
    }

    pub(crate) fn loss(&self, client: usize, w: &[f64]) -> Result<f64> {
        let c = self.client(client)?;
        let w = DVector::from_column_slice(w);
        Ok(0.5 * w.dot(&(&c.a * &w)) - c.b.dot(&w))
    }

    pub(crate) fn gradient_into(&self, client: usize, w: &[f64], out: &mut [f64]) -> Result<f64> {
        let c = self.client(client)?;
        let wv = DVector::from_column_slice(w);
        let aw = &c.a * &wv;
        for i in 0..self.dim {
            out[i] = aw[i] - c.b[i];
        }
        Ok(0.5 * wv.dot(&aw) - c.b.dot(&wv))
    }
}

pub(crate) fn random_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let v = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    let n = v.norm().max(f64::MIN_POSITIVE);
    v * (r / n)
}
