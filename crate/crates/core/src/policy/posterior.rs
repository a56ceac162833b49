//! Bayesian linear reward model shared across all actions, sampled for
//! Thompson selection.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use super::action::ActionSpace;
use super::features::{encode_features, State};
use super::PolicyError;
use crate::Error;

const MAGIC: &[u8; 8] = b"PPOLPOST";
pub const CHECKPOINT_VERSION: u32 = 1;
const ENDIAN_LE: &[u8; 2] = b"LE";

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    b: DMatrix<f64>,
    f: DVector<f64>,
    lambda_prior: f64,
    sigma2: f64,
    updates: u64,
}

impl PosteriorState {
    /// Prior B = λ·I, f = 0.
    pub fn new(d: usize, lambda_prior: f64, sigma2: f64) -> Result<Self, PolicyError> {
        if d == 0 || !(lambda_prior > 0.0 && lambda_prior.is_finite()) || !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(PolicyError::Config(format!(
                "posterior needs d >= 1, lambda_prior > 0, sigma2 > 0 (got {d}, {lambda_prior}, {sigma2})"
            )));
        }
        Ok(PosteriorState {
            b: DMatrix::identity(d, d) * lambda_prior,
            f: DVector::zeros(d),
            lambda_prior,
            sigma2,
            updates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn lambda_prior(&self) -> f64 {
        self.lambda_prior
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn cholesky(&self) -> Result<Cholesky<f64, Dyn>, PolicyError> {
        Cholesky::new(self.b.clone()).ok_or(PolicyError::NotPositiveDefinite)
    }

    /// Posterior mean B⁻¹f.
    pub fn mean(&self) -> Result<DVector<f64>, PolicyError> {
        Ok(self.cholesky()?.solve(&self.f))
    }

    /// Draw θ ~ N(B⁻¹f, σ²B⁻¹).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>, PolicyError> {
        let chol = self.cholesky()?;
        let mean = chol.solve(&self.f);
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        // B = L Lᵀ, so w = L⁻ᵀ z has covariance B⁻¹
        let w = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or(PolicyError::NotPositiveDefinite)?;
        Ok(mean + w * self.sigma2.sqrt())
    }

    /// Rank-one update B += x xᵀ, f += r x.
    pub fn update(&mut self, x: &[f64], r: f64) -> Result<(), PolicyError> {
        if x.len() != self.dim() {
            return Err(PolicyError::Dimension { expected: self.dim(), got: x.len() });
        }
        if !x.iter().all(|v| v.is_finite()) || !r.is_finite() {
            return Err(PolicyError::NonFinite);
        }
        if r.abs() > 0.5 {
            return Err(PolicyError::RewardOutOfRange(r));
        }
        let xv = DVector::from_column_slice(x);
        self.b.ger(1.0, &xv, &xv, 1.0);
        self.f.axpy(r, &xv, 1.0);
        self.updates += 1;
        Ok(())
    }

    /// Index of the action maximizing θ·x(state, a); ties keep the first.
    pub fn argmax(&self, theta: &DVector<f64>, space: &ActionSpace, state: &State, allowed: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, a) in space.actions.iter().enumerate() {
            if !allowed(i) {
                continue;
            }
            let x = encode_features(state, a, space);
            let v: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Thompson selection: sample θ, act greedily on it.
    pub fn select<R: Rng + ?Sized>(&self, space: &ActionSpace, state: &State, rng: &mut R) -> Result<usize, PolicyError> {
        self.check_dim(space, state)?;
        let theta = self.sample(rng)?;
        self.argmax(&theta, space, state, |_| true).ok_or(PolicyError::EmptyGrid)
    }

    /// Greedy selection on the posterior mean, optionally restricted.
    pub fn select_mean(&self, space: &ActionSpace, state: &State, allowed: impl Fn(usize) -> bool) -> Result<usize, PolicyError> {
        self.check_dim(space, state)?;
        let theta = self.mean()?;
        self.argmax(&theta, space, state, allowed).ok_or(PolicyError::EmptyGrid)
    }

    fn check_dim(&self, space: &ActionSpace, state: &State) -> Result<(), PolicyError> {
        let d = state.dim() + space.dim();
        if d != self.dim() {
            return Err(PolicyError::Dimension { expected: self.dim(), got: d });
        }
        Ok(())
    }

    /// Binary checkpoint: magic, version, endianness tag, scalars, a JSON
    /// metadata block, then B row-major and f, all little-endian.
    pub fn write_to<W: Write>(&self, w: &mut W, metadata: &Value) -> std::io::Result<()> {
        let d = self.dim();
        let meta = serde_json::to_vec(metadata).expect("json value serializes");
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(ENDIAN_LE)?;
        w.write_all(&(d as u64).to_le_bytes())?;
        w.write_all(&self.lambda_prior.to_le_bytes())?;
        w.write_all(&self.sigma2.to_le_bytes())?;
        w.write_all(&self.updates.to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        for i in 0..d {
            for j in 0..d {
                w.write_all(&self.b[(i, j)].to_le_bytes())?;
            }
        }
        for v in self.f.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<(Self, Value), PolicyError> {
        let bad = |m: &str| PolicyError::Checkpoint(m.to_string());
        let io = |e: std::io::Error| PolicyError::Checkpoint(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not a posterior checkpoint"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let mut endian = [0u8; 2];
        r.read_exact(&mut endian).map_err(io)?;
        if &endian != ENDIAN_LE {
            return Err(bad("unsupported byte order"));
        }
        let mut u64_ = |r: &mut R| -> Result<u64, PolicyError> {
            r.read_exact(&mut b8).map_err(io)?;
            Ok(u64::from_le_bytes(b8))
        };
        let d = u64_(r)? as usize;
        let lambda_prior = f64::from_bits(u64_(r)?);
        let sigma2 = f64::from_bits(u64_(r)?);
        let updates = u64_(r)?;
        let meta_len = u64_(r)? as usize;
        if d == 0 || d > 100_000 || meta_len > 1 << 24 {
            return Err(bad("implausible header sizes"));
        }
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta).map_err(io)?;
        let metadata: Value = serde_json::from_slice(&meta).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
        let mut read_f64 = |r: &mut R| -> Result<f64, PolicyError> { Ok(f64::from_bits(u64_(r)?)) };
        let mut b = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                b[(i, j)] = read_f64(r)?;
            }
        }
        let mut f = DVector::zeros(d);
        for i in 0..d {
            f[i] = read_f64(r)?;
        }
        let state = PosteriorState { b, f, lambda_prior, sigma2, updates };
        state.cholesky()?;
        Ok((state, metadata))
    }

    pub fn save(&self, path: &Path, metadata: &Value) -> crate::Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut file, metadata).map_err(|e| Error::io(path, e))?;
        file.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> crate::Result<(Self, Value)> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(|e| Error::io(path, e))?);
        Ok(Self::read_from(&mut file)?)
    }
}
