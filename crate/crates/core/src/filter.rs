//! Spectral graph filtering: the dense reference `U g(Λ) Uᵀ x`, the Chebyshev
//! polynomial filter evaluated by recurrence, and its analytic gradients.

use rand::Rng;

use crate::eigen::Spectrum;
use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::registry::Registry;
use crate::tensor::{matmul_raw, Tensor};

pub const DEFAULT_CHEBYSHEV_ORDER: usize = 3;
pub const SUPPORTED_CHEBYSHEV_ORDERS: std::ops::RangeInclusive<usize> = 1..=6;
pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.5;
pub const DEFAULT_INVERSE_SQRT_TOLERANCE: f64 = 1e-8;

/// Scalar frequency response `g(λ)` applied identically to every channel.
pub trait SpectralResponse: Send + Sync {
    fn name(&self) -> &str;
    fn gain(&self, lambda: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AllPass;

impl SpectralResponse for AllPass {
    fn name(&self) -> &str {
        "all_pass"
    }

    fn gain(&self, _lambda: f64) -> f64 {
        1.0
    }
}

/// `exp(−λ² / (2σ²))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub sigma: f64,
}

impl SpectralResponse for Gaussian {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn gain(&self, lambda: f64) -> f64 {
        (-lambda * lambda / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// `λ^{−1/2}` with `λ` clamped below at `tolerance`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseSqrt {
    pub tolerance: f64,
}

impl SpectralResponse for InverseSqrt {
    fn name(&self) -> &str {
        "inverse_sqrt"
    }

    fn gain(&self, lambda: f64) -> f64 {
        1.0 / lambda.max(self.tolerance).sqrt()
    }
}

/// Fixed responses selectable by name, with their default parameters.
pub fn response_registry() -> Registry<dyn SpectralResponse> {
    Registry::<dyn SpectralResponse>::new()
        .with("all_pass", Box::new(AllPass) as Box<dyn SpectralResponse>)
        .with("gaussian", Box::new(Gaussian { sigma: DEFAULT_GAUSSIAN_SIGMA }))
        .with("inverse_sqrt", Box::new(InverseSqrt { tolerance: DEFAULT_INVERSE_SQRT_TOLERANCE }))
}

/// A spectral filter: either a learned Chebyshev expansion (channel-mixing) or
/// a fixed scalar response.
#[derive(Clone, Debug, PartialEq)]
pub enum FilterSpec {
    /// `g(λ) = Σ_k θ_k T_k(2λ/λ_max − 1)` with `θ` of shape `order × F_in × F_out`.
    Chebyshev { theta: Tensor, lambda_max: f64 },
    Gaussian { sigma: f64 },
    InverseSqrt { tolerance: f64 },
    AllPass,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FilterSpec::Chebyshev { theta, lambda_max } => {
                check_theta(theta)?;
                if !(*lambda_max > 0.0) {
                    return Err(Error::argument("Chebyshev filter needs lambda_max > 0"));
                }
            }
            FilterSpec::Gaussian { sigma } if !(*sigma > 0.0) => {
                return Err(Error::argument(format!("gaussian sigma must be positive, got {sigma}")));
            }
            FilterSpec::InverseSqrt { tolerance } if !(*tolerance > 0.0) => {
                return Err(Error::argument(format!("tolerance must be positive, got {tolerance}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// The scalar response for non-Chebyshev filters.
    pub fn response(&self) -> Option<Box<dyn SpectralResponse>> {
        match *self {
            FilterSpec::Chebyshev { .. } => None,
            FilterSpec::Gaussian { sigma } => Some(Box::new(Gaussian { sigma })),
            FilterSpec::InverseSqrt { tolerance } => Some(Box::new(InverseSqrt { tolerance })),
            FilterSpec::AllPass => Some(Box::new(AllPass)),
        }
    }
}

fn check_theta(theta: &Tensor) -> Result<(usize, usize, usize)> {
    if theta.rank() != 3 || theta.shape()[0] == 0 {
        return Err(Error::argument(format!(
            "theta must be order x F_in x F_out with order >= 1, got {:?}",
            theta.shape()
        )));
    }
    Ok((theta.shape()[0], theta.shape()[1], theta.shape()[2]))
}

/// `U · g(Λ) · Uᵀ · signal`, requiring the full spectrum.
pub fn dense_spectral_filter(spectrum: &Spectrum, filter: &FilterSpec, signal: &Tensor) -> Result<Tensor> {
    filter.validate()?;
    let n = spectrum.dimension();
    if !spectrum.is_complete() {
        return Err(Error::argument(format!(
            "dense filtering needs the full spectrum ({n} pairs), got {}",
            spectrum.len()
        )));
    }
    if signal.rank() != 2 || signal.rows() != n {
        return Err(Error::argument(format!("signal shape {:?} does not match {n} vertices", signal.shape())));
    }
    let u = spectrum.eigenvectors();
    let f_in = signal.cols();
    // Spectral coefficients Uᵀ x.
    let coeffs = matmul_raw(u.transpose().data(), signal.data(), n, n, f_in);
    match filter {
        FilterSpec::Chebyshev { theta, lambda_max } => {
            let (order, t_in, f_out) = check_theta(theta)?;
            if t_in != f_in {
                return Err(Error::argument(format!("theta expects {t_in} input channels, signal has {f_in}")));
            }
            let mut out = Tensor::zeros(&[n, f_out]);
            for k in 0..order {
                let mut scaled = coeffs.clone();
                for (i, lambda) in spectrum.eigenvalues().iter().enumerate() {
                    let tk = chebyshev_t(k, 2.0 * lambda / lambda_max - 1.0);
                    scaled[i * f_in..(i + 1) * f_in].iter_mut().for_each(|c| *c *= tk);
                }
                let spatial = matmul_raw(u.data(), &scaled, n, n, f_in);
                let theta_k = &theta.data()[k * f_in * f_out..(k + 1) * f_in * f_out];
                let mixed = matmul_raw(&spatial, theta_k, n, f_in, f_out);
                for (o, m) in out.data_mut().iter_mut().zip(mixed) {
                    *o += m;
                }
            }
            Ok(out)
        }
        other => {
            let response = other.response().expect("non-Chebyshev filters have a scalar response");
            let mut scaled = coeffs;
            for (i, &lambda) in spectrum.eigenvalues().iter().enumerate() {
                let g = response.gain(lambda);
                scaled[i * f_in..(i + 1) * f_in].iter_mut().for_each(|c| *c *= g);
            }
            Tensor::new(vec![n, f_in], matmul_raw(u.data(), &scaled, n, n, f_in))
        }
    }
}

/// `T_k(x)` by the three-term recurrence.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    match k {
        0 => 1.0,
        _ => {
            for _ in 1..k {
                let next = 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `[T_0(L̃)x, …, T_{order−1}(L̃)x]` via `T_k = 2 L̃ T_{k−1} − T_{k−2}`.
pub fn chebyshev_basis(scaled_l: &Laplacian, signal: &Tensor, order: usize) -> Result<Vec<Tensor>> {
    let mut basis: Vec<Tensor> = Vec::with_capacity(order);
    if order == 0 {
        return Ok(basis);
    }
    basis.push(signal.clone());
    if order > 1 {
        basis.push(scaled_l.matrix().mul_dense(signal)?);
    }
    for k in 2..order {
        let lt = scaled_l.matrix().mul_dense(&basis[k - 1])?;
        let next = lt.zip_map(&basis[k - 2], |a, b| 2.0 * a - b)?;
        basis.push(next);
    }
    Ok(basis)
}

fn check_filter_shapes(scaled_l: &Laplacian, theta: &Tensor, signal: &Tensor) -> Result<(usize, usize, usize)> {
    let (order, f_in, f_out) = check_theta(theta)?;
    if signal.rank() != 2 || signal.rows() != scaled_l.size() || signal.cols() != f_in {
        return Err(Error::argument(format!(
            "signal shape {:?} incompatible with {} vertices and {f_in} input channels",
            signal.shape(),
            scaled_l.size()
        )));
    }
    Ok((order, f_in, f_out))
}

/// `Σ_k T_k(L̃) · signal · θ_k`.
pub fn chebyshev_filter(scaled_l: &Laplacian, theta: &Tensor, signal: &Tensor) -> Result<Tensor> {
    let (order, f_in, f_out) = check_filter_shapes(scaled_l, theta, signal)?;
    let n = signal.rows();
    let basis = chebyshev_basis(scaled_l, signal, order)?;
    let mut out = vec![0.0; n * f_out];
    for (k, tk) in basis.iter().enumerate() {
        let theta_k = &theta.data()[k * f_in * f_out..(k + 1) * f_in * f_out];
        let mixed = matmul_raw(tk.data(), theta_k, n, f_in, f_out);
        for (o, m) in out.iter_mut().zip(mixed) {
            *o += m;
        }
    }
    Tensor::new(vec![n, f_out], out)
}

/// Gradients `(∂θ, ∂signal)` of `⟨upstream, chebyshev_filter(L̃, θ, signal)⟩`.
pub fn filter_gradient(scaled_l: &Laplacian, theta: &Tensor, signal: &Tensor, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    let (order, f_in, f_out) = check_filter_shapes(scaled_l, theta, signal)?;
    let n = signal.rows();
    upstream.expect_shape(&[n, f_out], "upstream gradient")?;
    let basis = chebyshev_basis(scaled_l, signal, order)?;
    let mut grad_theta = Vec::with_capacity(order * f_in * f_out);
    for tk in &basis {
        grad_theta.extend(matmul_raw(tk.transpose().data(), upstream.data(), f_in, n, f_out));
    }
    // ∂signal = Σ_k T_k(L̃) · (G θ_kᵀ), summed with Clenshaw's recurrence (L̃ is symmetric).
    let coeff: Vec<Tensor> = (0..order)
        .map(|k| {
            let theta_k = Tensor::new(vec![f_in, f_out], theta.data()[k * f_in * f_out..(k + 1) * f_in * f_out].to_vec())
                .expect("slice has f_in * f_out values");
            upstream.matmul(&theta_k.transpose())
        })
        .collect::<Result<_>>()?;
    let grad_signal = clenshaw(scaled_l, &coeff)?;
    Ok((Tensor::new(vec![order, f_in, f_out], grad_theta)?, grad_signal))
}

/// `Σ_k T_k(L̃) c_k` for vector-valued coefficients.
fn clenshaw(scaled_l: &Laplacian, coeff: &[Tensor]) -> Result<Tensor> {
    let order = coeff.len();
    let shape = coeff[0].shape().to_vec();
    let mut b1 = Tensor::zeros(&shape);
    let mut b2 = Tensor::zeros(&shape);
    for k in (1..order).rev() {
        let lb = scaled_l.matrix().mul_dense(&b1)?;
        let mut bk = coeff[k].clone();
        for ((o, l), p) in bk.data_mut().iter_mut().zip(lb.data()).zip(b2.data()) {
            *o += 2.0 * l - p;
        }
        b2 = std::mem::replace(&mut b1, bk);
    }
    let lb = scaled_l.matrix().mul_dense(&b1)?;
    let mut out = coeff[0].clone();
    for ((o, l), p) in out.data_mut().iter_mut().zip(lb.data()).zip(b2.data()) {
        *o += l - p;
    }
    Ok(out)
}

/// `θ ~ U(−a, a)` with `a = 1/√(order·F_in)`.
pub fn init_theta(order: usize, f_in: usize, f_out: usize, rng: &mut impl Rng) -> Tensor {
    let a = 1.0 / ((order * f_in) as f64).sqrt();
    let data = (0..order * f_in * f_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(vec![order, f_in, f_out], data).expect("shape matches data length")
}

/// `θ` with `θ₀ = I` and all higher orders zero, so the filter is the identity.
pub fn identity_theta(order: usize, channels: usize) -> Tensor {
    let mut theta = Tensor::zeros(&[order, channels, channels]);
    for c in 0..channels {
        theta.data_mut()[c * channels + c] = 1.0;
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_polynomials() {
        for &x in &[-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(chebyshev_t(0, x), 1.0);
            assert_eq!(chebyshev_t(1, x), x);
            assert!((chebyshev_t(2, x) - (2.0 * x * x - 1.0)).abs() < 1e-15);
            assert!((chebyshev_t(3, x) - (4.0 * x * x * x - 3.0 * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn responses_by_name() {
        let reg = response_registry();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["all_pass", "gaussian", "inverse_sqrt"]);
        assert_eq!(reg.get("gaussian").unwrap().gain(0.0), 1.0);
        assert!((reg.get("gaussian").unwrap().gain(0.5) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(reg.get("inverse_sqrt").unwrap().gain(0.0), 1e4);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(FilterSpec::Gaussian { sigma: 0.0 }.validate().is_err());
        assert!(FilterSpec::InverseSqrt { tolerance: -1.0 }.validate().is_err());
        let theta = Tensor::zeros(&[0, 3, 3]);
        assert!(FilterSpec::Chebyshev { theta, lambda_max: 1.0 }.validate().is_err());
    }
}
