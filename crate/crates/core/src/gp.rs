//! Exact Gaussian Process regression over coverage space with a fixed
//! Matérn-5/2 kernel and zero prior mean.
//!
//! Observations are standardised (mean removed, divided by their standard
//! deviation) before fitting and mapped back on output, so posterior
//! means far from the data revert to the observed mean rather than to 0.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig;
use crate::policy_space::{CandidateSet, Policy};

/// Added to the diagonal of `K + σ²I` before factorising.
pub const JITTER: f64 = 1e-9;

/// Negative standardised variances smaller than this are rounding noise.
pub const VARIANCE_CLAMP: f64 = 1e-10;

const PREDICT_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            lengthscale: 0.15,
            signal_variance: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::Config(format!("lengthscale must be positive, got {}", self.lengthscale)));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::Config(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        Ok(())
    }
}

/// Kernel parameters plus the observation noise variance σ² (in
/// standardised reward units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpParams {
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
    #[serde(default = "default_signal_variance")]
    pub signal_variance: f64,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
}

fn default_lengthscale() -> f64 {
    KernelParams::default().lengthscale
}

fn default_signal_variance() -> f64 {
    KernelParams::default().signal_variance
}

fn default_noise_variance() -> f64 {
    0.01
}

impl Default for GpParams {
    fn default() -> Self {
        GpParams {
            lengthscale: default_lengthscale(),
            signal_variance: default_signal_variance(),
            noise_variance: default_noise_variance(),
        }
    }
}

impl GpParams {
    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            lengthscale: self.lengthscale,
            signal_variance: self.signal_variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel().validate()?;
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

/// Matérn covariance with ν = 5/2.
pub fn matern52(a: &Policy, b: &Policy, params: &KernelParams) -> f64 {
    matern52_r(a.distance(b), params)
}

pub fn matern52_r(r: f64, params: &KernelParams) -> f64 {
    let s = 5f64.sqrt() * r / params.lengthscale;
    params.signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// A fitted, immutable GP posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<Policy>,
    kernel: KernelParams,
    noise_variance: f64,
    offset: f64,
    scale: f64,
    /// Lower Cholesky factor of `K + (σ² + jitter) I`.
    chol: Option<Cholesky<f64, Dyn>>,
    /// `(K + σ²I)⁻¹ y` for the standardised observations `y`.
    alpha: DVector<f64>,
}

/// Fits the posterior. An empty history yields the prior.
pub fn fit(inputs: &[Policy], rewards: &[f64], noise_variance: f64, kernel: &KernelParams) -> Result<GpModel> {
    kernel.validate()?;
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::Config(format!("noise variance must be positive, got {noise_variance}")));
    }
    if inputs.len() != rewards.len() {
        return Err(Error::Domain(format!(
            "{} inputs but {} rewards",
            inputs.len(),
            rewards.len()
        )));
    }
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::Domain(format!("non-finite reward {bad}")));
    }
    let n = inputs.len();
    if n == 0 {
        return Ok(GpModel {
            inputs: Vec::new(),
            kernel: *kernel,
            noise_variance,
            offset: 0.0,
            scale: 1.0,
            chol: None,
            alpha: DVector::zeros(0),
        });
    }

    let offset = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - offset).powi(2)).sum::<f64>() / n as f64;
    let scale = if var.sqrt() > 1e-12 * offset.abs().max(1.0) {
        var.sqrt()
    } else {
        1.0
    };
    let y = DVector::from_iterator(n, rewards.iter().map(|r| (r - offset) / scale));

    let gram = DMatrix::from_fn(n, n, |i, j| {
        let k = matern52(&inputs[i], &inputs[j], kernel);
        if i == j {
            k + noise_variance + JITTER
        } else {
            k
        }
    });
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::IllConditioned(format!(
            "K + σ²I is not positive definite for {n} points (σ² = {noise_variance})"
        ))
    })?;
    let alpha = chol.solve(&y);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::IllConditioned("non-finite solve of K + σ²I".into()));
    }
    Ok(GpModel {
        inputs: inputs.to_vec(),
        kernel: *kernel,
        noise_variance,
        offset,
        scale,
        chol: Some(chol),
        alpha,
    })
}

impl GpModel {
    pub fn prior(kernel: &KernelParams, noise_variance: f64) -> Result<Self> {
        fit(&[], &[], noise_variance, kernel)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Policy] {
        &self.inputs
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Mean and standard deviation used to standardise the observations.
    pub fn standardization(&self) -> (f64, f64) {
        (self.offset, self.scale)
    }

    /// Lower-triangular factor of `K + σ²I` (jitter included).
    pub fn factor(&self) -> Option<DMatrix<f64>> {
        self.chol.as_ref().map(|c| c.l())
    }

    /// Prior variance in reward units.
    pub fn prior_variance(&self) -> f64 {
        self.kernel.signal_variance * self.scale * self.scale
    }

    fn finish(&self, mean_std: f64, var_std: f64) -> Result<Posterior> {
        let var_std = if var_std >= 0.0 {
            var_std
        } else if var_std > -VARIANCE_CLAMP {
            0.0
        } else {
            return Err(Error::IllConditioned(format!("posterior variance {var_std} < 0")));
        };
        Ok(Posterior {
            mean: self.offset + self.scale * mean_std,
            variance: var_std * self.scale * self.scale,
        })
    }

    pub fn posterior(&self, a: &Policy) -> Result<Posterior> {
        let prior = matern52_r(0.0, &self.kernel);
        let Some(chol) = &self.chol else {
            return self.finish(0.0, prior);
        };
        let k = DVector::from_iterator(self.len(), self.inputs.iter().map(|x| matern52(x, a, &self.kernel)));
        let mean = k.dot(&self.alpha);
        let v = chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .ok_or_else(|| Error::IllConditioned("singular Cholesky factor".into()))?;
        self.finish(mean, prior - v.norm_squared())
    }

    /// Posterior at many points; same results as calling [`posterior`]
    /// on each, evaluated in blocks.
    ///
    /// [`posterior`]: GpModel::posterior
    pub fn posterior_many(&self, points: &[Policy]) -> Result<Vec<Posterior>> {
        let Some(chol) = &self.chol else {
            return points.iter().map(|p| self.posterior(p)).collect();
        };
        let prior = matern52_r(0.0, &self.kernel);
        let n = self.len();
        let blocks: Vec<Result<Vec<Posterior>>> = points
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| {
                let cross = DMatrix::from_fn(n, chunk.len(), |i, j| matern52(&self.inputs[i], &chunk[j], &self.kernel));
                let means = cross.tr_mul(&self.alpha);
                let v = chol
                    .l_dirty()
                    .solve_lower_triangular(&cross)
                    .ok_or_else(|| Error::IllConditioned("singular Cholesky factor".into()))?;
                (0..chunk.len())
                    .map(|j| self.finish(means[j], prior - v.column(j).norm_squared()))
                    .collect()
            })
            .collect();
        let mut out = Vec::with_capacity(points.len());
        for block in blocks {
            out.extend(block?);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceRow {
    pub policy: Policy,
    pub mean: f64,
    pub sd: f64,
}

/// Posterior at every grid point (masked or not), in grid order.
pub fn surface(model: &GpModel, grid: &CandidateSet) -> Result<Vec<SurfaceRow>> {
    let post = model.posterior_many(grid.points())?;
    Ok(grid
        .points()
        .iter()
        .zip(post)
        .map(|(p, q)| SurfaceRow {
            policy: *p,
            mean: q.mean,
            sd: q.sd(),
        })
        .collect())
}

/// Index of the largest posterior mean; ties go to the lowest index.
pub fn argmax_mean(rows: &[SurfaceRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if best.is_none_or(|b| r.mean > rows[b].mean) {
            best = Some(i);
        }
    }
    best
}

pub const SURFACE_HEADER: &str = "a_itn,a_irs,post_mean,post_sd";

pub fn write_surface_csv<W: Write>(rows: &[SurfaceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SURFACE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            sig(r.policy.itn(), 10),
            sig(r.policy.irs(), 10),
            sig(r.mean, 10),
            sig(r.sd, 10)
        )?;
    }
    Ok(())
}
