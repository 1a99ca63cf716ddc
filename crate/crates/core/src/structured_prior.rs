//! Task-conditioned Gaussian obtained by conditioning the GP prior on soft
//! key-state observations, plus a cache of the observation-independent terms.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp_prior::GpPrior;
use crate::linalg;
use crate::trajectory::Trajectory;

/// Lower bound on every observation variance.
pub const K_Y_FLOOR: f64 = 1e-8;

/// A contiguous block of coordinates observed at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservedSlice {
    pub timestep: usize,
    pub coord_start: usize,
    pub coord_len: usize,
}

/// Key states `Y`, their selection structure `C` and covariance `K_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyStateObservation {
    pub y: DVector<f64>,
    pub indices: Vec<ObservedSlice>,
    pub k_y: DMatrix<f64>,
}

impl KeyStateObservation {
    /// Observation with a diagonal covariance.
    pub fn with_variances(y: DVector<f64>, indices: Vec<ObservedSlice>, variances: &[f64]) -> Self {
        KeyStateObservation {
            y,
            indices,
            k_y: DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Flat stacked-trajectory indices picked out by `C`, in row order of `Y`.
    pub fn selection(&self, state_dim: usize) -> Vec<usize> {
        self.indices
            .iter()
            .flat_map(|s| (s.coord_start..s.coord_start + s.coord_len).map(move |k| s.timestep * state_dim + k))
            .collect()
    }

    pub fn validate(&self, horizon: usize, state_dim: usize) -> Result<()> {
        let m: usize = self.indices.iter().map(|s| s.coord_len).sum();
        if m != self.y.len() {
            return Err(Error::ShapeMismatch { expected: m, actual: self.y.len() });
        }
        if self.k_y.nrows() != m || self.k_y.ncols() != m {
            return Err(Error::ShapeMismatch { expected: m, actual: self.k_y.nrows() });
        }
        for pair in self.indices.windows(2) {
            if pair[1].timestep <= pair[0].timestep {
                return Err(Error::InvalidArgument("observation timesteps must be strictly increasing".into()));
            }
        }
        for s in &self.indices {
            if s.timestep >= horizon {
                return Err(Error::InvalidArgument(format!("timestep {} outside horizon {horizon}", s.timestep)));
            }
            if s.coord_len == 0 || s.coord_start + s.coord_len > state_dim {
                return Err(Error::InvalidArgument(format!(
                    "coordinate slice {}..{} outside state dimension {state_dim}",
                    s.coord_start,
                    s.coord_start + s.coord_len
                )));
            }
        }
        if let Some(v) = self.k_y.diagonal().iter().find(|&&v| !(v >= K_Y_FLOOR)) {
            return Err(Error::InvalidArgument(format!("observation variance {v:e} below floor {K_Y_FLOOR:e}")));
        }
        Ok(())
    }
}

/// Covariance with its (jittered) Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFactor {
    pub cov: DMatrix<f64>,
    /// Lower factor with `chol · cholᵀ = cov + jitter · I`.
    pub chol: DMatrix<f64>,
    pub jitter: f64,
}

impl CovFactor {
    pub fn new(mut cov: DMatrix<f64>) -> Result<Self> {
        linalg::symmetrize(&mut cov);
        let jitter = linalg::relative_jitter(&cov);
        let chol = linalg::jittered_cholesky(&cov, jitter)?;
        Ok(CovFactor { cov, chol, jitter })
    }

    pub fn identity(dim: usize) -> Self {
        CovFactor {
            cov: DMatrix::identity(dim, dim),
            chol: DMatrix::identity(dim, dim),
            jitter: 0.0,
        }
    }
}

/// The diffusion noise model `N(μ, K)`.
#[derive(Debug, Clone)]
pub struct StructuredPrior {
    pub mean: DVector<f64>,
    factor: Arc<CovFactor>,
    pub horizon: usize,
    pub state_dim: usize,
}

impl StructuredPrior {
    pub fn from_factor(mean: DVector<f64>, factor: Arc<CovFactor>, horizon: usize, state_dim: usize) -> Result<Self> {
        let n = horizon * state_dim;
        if mean.len() != n || factor.cov.nrows() != n {
            return Err(Error::ShapeMismatch { expected: n, actual: mean.len() });
        }
        Ok(StructuredPrior { mean, factor, horizon, state_dim })
    }

    pub fn from_mean_cov(mean: DVector<f64>, cov: DMatrix<f64>, horizon: usize, state_dim: usize) -> Result<Self> {
        Self::from_factor(mean, Arc::new(CovFactor::new(cov)?), horizon, state_dim)
    }

    /// Zero-mean, identity-covariance prior of plain DDPM.
    pub fn isotropic(horizon: usize, state_dim: usize) -> Self {
        let n = horizon * state_dim;
        StructuredPrior {
            mean: DVector::zeros(n),
            factor: Arc::new(CovFactor::identity(n)),
            horizon,
            state_dim,
        }
    }

    /// The unconditioned GP prior itself as a noise model.
    pub fn from_gp(gp: &GpPrior) -> Result<Self> {
        Self::from_mean_cov(gp.mean.clone(), gp.cov.as_ref().clone(), gp.horizon, gp.state_dim)
    }

    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        Self::from_factor(mean, Arc::clone(&self.factor), self.horizon, self.state_dim)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.factor.cov
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.factor.chol
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    pub fn factor(&self) -> &Arc<CovFactor> {
        &self.factor
    }

    pub fn shares_covariance(&self, other: &StructuredPrior) -> bool {
        Arc::ptr_eq(&self.factor, &other.factor)
    }

    /// `L⁻¹ v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        linalg::solve_lower(self.chol(), v)
    }

    /// `L z`.
    pub fn color(&self, z: &DVector<f64>) -> DVector<f64> {
        self.chol() * z
    }

    /// `K⁻¹ v` through two triangular solves.
    pub fn inv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        linalg::solve_lower_transpose(self.chol(), &self.whiten(v))
    }

    /// `vᵀ K⁻¹ v`.
    pub fn mahalanobis_sq(&self, v: &DVector<f64>) -> f64 {
        self.whiten(v).norm_squared()
    }

    pub fn standard_normal<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng))
    }

    /// One draw `μ + L z`.
    pub fn sample_vector<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = self.standard_normal(rng);
        &self.mean + self.color(&z)
    }

    pub fn sample(&self, count: usize, seed: u64) -> Vec<Trajectory> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                Trajectory::new(self.horizon, self.state_dim, self.sample_vector(&mut rng))
                    .expect("prior dimensions are consistent")
            })
            .collect()
    }
}

/// Observation-independent conditioning terms for one selection structure.
#[derive(Debug, Clone, PartialEq)]
pub struct GainEntry {
    pub selection: Vec<usize>,
    /// `G = K̃ Cᵀ (C K̃ Cᵀ + K_y)⁻¹`, shape `H·d × n·d_obs`.
    pub gain: DMatrix<f64>,
    pub factor: Arc<CovFactor>,
}

impl GainEntry {
    pub fn compute(prior: &GpPrior, obs: &KeyStateObservation) -> Result<Self> {
        obs.validate(prior.horizon, prior.state_dim)?;
        let sel = obs.selection(prior.state_dim);
        let n = prior.dim();
        let m = sel.len();
        let k = prior.cov.as_ref();

        let k_sel_all = DMatrix::from_fn(m, n, |r, c| k[(sel[r], c)]);
        let mut innov = DMatrix::from_fn(m, m, |r, c| k[(sel[r], sel[c])]) + &obs.k_y;
        linalg::symmetrize(&mut innov);
        let innov_chol = nalgebra::Cholesky::new(innov.clone()).ok_or_else(|| Error::IllConditioned {
            min_eigenvalue: linalg::min_eigenvalue(&innov),
            jitter: 0.0,
        })?;
        // G = (S⁻¹ C K̃)ᵀ since S and K̃ are symmetric.
        let gain = innov_chol.solve(&k_sel_all).transpose();
        let cov = k - &gain * &k_sel_all;
        let factor = CovFactor::new(cov)?;
        Ok(GainEntry { selection: sel, gain, factor: Arc::new(factor) })
    }

    /// `μ = μ̃ + G (Y − C μ̃)` sharing the cached covariance.
    pub fn apply(&self, prior: &GpPrior, obs: &KeyStateObservation) -> Result<StructuredPrior> {
        if obs.y.len() != self.selection.len() {
            return Err(Error::ShapeMismatch { expected: self.selection.len(), actual: obs.y.len() });
        }
        let innovation = DVector::from_fn(self.selection.len(), |r, _| obs.y[r] - prior.mean[self.selection[r]]);
        let mean = &prior.mean + &self.gain * innovation;
        StructuredPrior::from_factor(mean, Arc::clone(&self.factor), prior.horizon, prior.state_dim)
    }
}

/// Condition `prior` on `obs` directly, without caching.
pub fn condition(prior: &GpPrior, obs: &KeyStateObservation) -> Result<StructuredPrior> {
    GainEntry::compute(prior, obs)?.apply(prior, obs)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CacheKey {
    kernel: u64,
    selection: Vec<usize>,
    k_y_bits: Vec<u64>,
}

impl CacheKey {
    fn new(prior: &GpPrior, obs: &KeyStateObservation) -> Self {
        CacheKey {
            kernel: prior.fingerprint(),
            selection: obs.selection(prior.state_dim),
            k_y_bits: obs.k_y.iter().map(|v| v.to_bits()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
    pub entries: usize,
}

/// Gains keyed by selection structure and `K_y`; `Y` never enters the key.
#[derive(Debug, Default)]
pub struct GainCache {
    entries: RwLock<HashMap<CacheKey, Arc<GainEntry>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

const CACHE_MAGIC: &[u8; 8] = b"GPDGAIN\0";
const CACHE_VERSION: u32 = 1;

impl GainCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry(&self, prior: &GpPrior, obs: &KeyStateObservation) -> Result<Arc<GainEntry>> {
        let key = CacheKey::new(prior, obs);
        if let Some(e) = self.entries.read().expect("cache lock poisoned").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(e));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let computed = Arc::new(GainEntry::compute(prior, obs)?);
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(key, Arc::clone(&computed));
        Ok(computed)
    }

    pub fn get_or_compute(&self, prior: &GpPrior, obs: &KeyStateObservation) -> Result<StructuredPrior> {
        self.entry(prior, obs)?.apply(prior, obs)
    }

    /// Populate the cache for `obs`'s structure without building a prior.
    pub fn precompute(&self, prior: &GpPrior, obs: &KeyStateObservation) -> Result<()> {
        self.entry(prior, obs).map(|_| ())
    }

    /// Write all entries, sorted by key, as a versioned binary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let entries = self.entries.read().expect("cache lock poisoned");
        let sorted: BTreeMap<&CacheKey, &Arc<GainEntry>> = entries.iter().collect();
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        put_u64(&mut buf, sorted.len() as u64);
        for (key, entry) in sorted {
            put_u64(&mut buf, key.kernel);
            put_u64(&mut buf, key.selection.len() as u64);
            key.selection.iter().for_each(|&s| put_u64(&mut buf, s as u64));
            put_u64(&mut buf, key.k_y_bits.len() as u64);
            key.k_y_bits.iter().for_each(|&b| put_u64(&mut buf, b));
            put_matrix(&mut buf, &entry.gain);
            put_matrix(&mut buf, &entry.factor.cov);
            put_matrix(&mut buf, &entry.factor.chol);
            put_u64(&mut buf, entry.factor.jitter.to_bits());
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Load entries from `path`, merging into this cache. A missing file is
    /// not an error; the cache simply stays cold.
    pub fn load_into(&self, path: &Path) -> Result<usize> {
        let mut bytes = Vec::new();
        match fs::File::open(path) {
            Ok(mut f) => f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(8)? != CACHE_MAGIC {
            return Err(Error::format("gain cache", "bad magic"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Err(Error::format("gain cache", format!("unsupported version {version}")));
        }
        let count = r.u64()? as usize;
        let mut map = self.entries.write().expect("cache lock poisoned");
        for _ in 0..count {
            let kernel = r.u64()?;
            let n_sel = r.u64()? as usize;
            let selection = (0..n_sel).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let n_ky = r.u64()? as usize;
            let k_y_bits = (0..n_ky).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let gain = r.matrix()?;
            let cov = r.matrix()?;
            let chol = r.matrix()?;
            let jitter = f64::from_bits(r.u64()?);
            map.insert(
                CacheKey { kernel, selection: selection.clone(), k_y_bits },
                Arc::new(GainEntry { selection, gain, factor: Arc::new(CovFactor { cov, chol, jitter }) }),
            );
        }
        Ok(count)
    }
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    put_u64(buf, m.nrows() as u64);
    put_u64(buf, m.ncols() as u64);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            buf.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format("gain cache", "truncated file"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let raw = self.take(rows * cols * 8)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &vals))
    }
}
