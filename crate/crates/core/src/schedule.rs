//! Forward-noising mathematics shared by the motion denoiser and the style
//! predictor.
//!
//! Steps are indexed `t in 1..=T` externally; `alpha_bar(0)` is defined as 1
//! so the deterministic skip-step update is well-formed at its endpoint.
//! All schedule arithmetic is f64; the vector operations accept any scalar
//! type and convert coefficients at the boundary.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Base linear range, defined at 1000 steps. Shorter schedules scale the
/// range by `1000 / T` so the terminal signal level stays comparable
/// (`alpha_bar(T) << 1` for any default schedule).
pub const BASE_STEPS: usize = 1000;
pub const BASE_BETA_START: f64 = 1e-4;
pub const BASE_BETA_END: f64 = 0.02;

#[derive(Clone, Debug)]
pub struct DiffusionSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    /// Linear interpolation of beta from `beta_start` (t=1) to `beta_end`
    /// (t=T).
    pub fn linear(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if num_steps == 0 {
            return Err(Error::invalid("linear_schedule", "T must be >= 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(
                "linear_schedule",
                format!("need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"),
            ));
        }
        let betas: Vec<f64> = if num_steps == 1 {
            vec![beta_start]
        } else {
            (0..num_steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (num_steps - 1) as f64)
                .collect()
        };
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(num_steps);
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(DiffusionSchedule {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Default linear schedule for `num_steps`, scaled from the 1000-step
    /// base range.
    pub fn default_linear(num_steps: usize) -> Result<Self> {
        let scale = BASE_STEPS as f64 / num_steps as f64;
        Self::linear(num_steps, BASE_BETA_START * scale, BASE_BETA_END * scale)
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::StepOutOfRange {
                t,
                max: self.num_steps(),
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `alpha_bar(0)` is 1 by convention.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Closed-form noising: `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise`.
    pub fn forward_diffuse<S: Scalar>(
        &self,
        x0: &Tensor<S>,
        t: usize,
        noise: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        self.check_step(t)?;
        if !x0.same_shape(noise) {
            return Err(Error::shape(
                "forward_diffuse",
                format!("{:?} vs {:?}", x0.shape(), noise.shape()),
            ));
        }
        let ab = self.alpha_bar(t);
        let ks = S::from_f(ab.sqrt());
        let kn = S::from_f((1.0 - ab).sqrt());
        Ok(x0.zip_map(noise, |x, n| ks * x + kn * n))
    }

    /// Coefficients of the signal-parameterized reverse-step mean:
    /// `mean = c0 * x0_hat + ct * x_t`.
    pub fn posterior_coefficients(&self, t: usize) -> (f64, f64, f64) {
        let ab_t = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t - 1);
        let beta = self.beta(t);
        let alpha = self.alpha(t);
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab_t);
        let ct = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t);
        let var = (1.0 - ab_prev) / (1.0 - ab_t) * beta;
        (c0, ct, var)
    }

    /// One ancestral reverse step. At `t = 1` the mean is returned with no
    /// noise term (the variance is exactly zero there).
    pub fn posterior_step<S: Scalar>(
        &self,
        x_t: &Tensor<S>,
        x0_hat: &Tensor<S>,
        t: usize,
        noise: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        self.check_step(t)?;
        if !x_t.same_shape(x0_hat) || !x_t.same_shape(noise) {
            return Err(Error::shape(
                "posterior_step",
                format!(
                    "x_t {:?}, x0_hat {:?}, noise {:?}",
                    x_t.shape(),
                    x0_hat.shape(),
                    noise.shape()
                ),
            ));
        }
        let (c0, ct, var) = self.posterior_coefficients(t);
        let (c0s, cts) = (S::from_f(c0), S::from_f(ct));
        let mean = x0_hat.zip_map(x_t, |x0v, xtv| c0s * x0v + cts * xtv);
        if t == 1 {
            return Ok(mean);
        }
        let sd = S::from_f(var.sqrt());
        Ok(mean.zip_map(noise, |m, n| m + sd * n))
    }

    /// Deterministic skip-step update to `t_prev < t`; `t_prev = 0` returns
    /// `x0_hat` exactly.
    pub fn ddim_step<S: Scalar>(
        &self,
        x_t: &Tensor<S>,
        x0_hat: &Tensor<S>,
        t: usize,
        t_prev: usize,
    ) -> Result<Tensor<S>> {
        self.check_step(t)?;
        if t_prev >= t {
            return Err(Error::invalid(
                "ddim_step",
                format!("t_prev {t_prev} must be < t {t}"),
            ));
        }
        if !x_t.same_shape(x0_hat) {
            return Err(Error::shape(
                "ddim_step",
                format!("{:?} vs {:?}", x_t.shape(), x0_hat.shape()),
            ));
        }
        let ab_t = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t_prev);
        // eps_hat = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t)
        let inv = 1.0 / (1.0 - ab_t).sqrt();
        let sq_t = ab_t.sqrt();
        let sq_prev = ab_prev.sqrt();
        let k_eps = (1.0 - ab_prev).sqrt();
        let (invs, sqts, sqps, keps) = (
            S::from_f(inv),
            S::from_f(sq_t),
            S::from_f(sq_prev),
            S::from_f(k_eps),
        );
        Ok(x_t.zip_map(x0_hat, |xt, x0| {
            let eps = (xt - sqts * x0) * invs;
            sqps * x0 + keps * eps
        }))
    }

    /// `k` uniformly spaced steps from T down to 1 (both included),
    /// deduplicated and strictly decreasing.
    pub fn ddim_timesteps(&self, k: usize) -> Vec<usize> {
        let t_max = self.num_steps();
        if k == 0 {
            return vec![];
        }
        if k == 1 || t_max == 1 {
            return vec![t_max];
        }
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let t = t_max as f64 - i as f64 * (t_max as f64 - 1.0) / (k as f64 - 1.0);
            let t = t.round() as usize;
            if out.last() != Some(&t) {
                out.push(t);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: alpha-bar by direct product over the beta table.
    fn alpha_bar_by_product(t: usize, betas: &[f64]) -> f64 {
        betas[..t].iter().map(|b| 1.0 - b).product()
    }

    #[test]
    fn paper_scale_terminal_alpha_bar() {
        let sched = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
        let direct = alpha_bar_by_product(1000, &(1..=1000).map(|t| sched.beta(t)).collect::<Vec<_>>());
        assert!((sched.alpha_bar(1000) - direct).abs() < 1e-18);
        // Frozen from the product oracle before implementation: ~4.04e-5.
        assert!((sched.alpha_bar(1000) - 4.04e-5).abs() < 0.05e-5, "got {}", sched.alpha_bar(1000));
        assert!(sched.alpha_bar(1000) < 0.05);
    }

    #[test]
    fn single_step_schedule() {
        let b = 0.3;
        let sched = DiffusionSchedule::linear(1, b, b).unwrap();
        assert!((sched.alpha_bar(1) - (1.0 - b)).abs() < 1e-15);
    }

    #[test]
    fn two_step_constant_schedule() {
        let sched = DiffusionSchedule::linear(2, 0.1, 0.1).unwrap();
        assert!((sched.alpha_bar(2) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(DiffusionSchedule::linear(0, 1e-4, 0.02).is_err());
        assert!(DiffusionSchedule::linear(10, 0.0, 0.02).is_err());
        assert!(DiffusionSchedule::linear(10, 0.5, 0.2).is_err());
        assert!(DiffusionSchedule::linear(10, 1e-4, 1.0).is_err());
    }

    #[test]
    fn alpha_bar_monotone_and_product_identity() {
        for t_max in [1usize, 2, 100, 1000] {
            // the scaled default range only exists for T >= 21
            let sched = if t_max < 21 {
                DiffusionSchedule::linear(t_max, 0.05, 0.3).unwrap()
            } else {
                DiffusionSchedule::default_linear(t_max).unwrap()
            };
            let mut prev = 1.0;
            for t in 1..=t_max {
                assert!((sched.alpha(t) - (1.0 - sched.beta(t))).abs() < 1e-15);
                let expect = prev * sched.alpha(t);
                assert!((sched.alpha_bar(t) - expect).abs() < 1e-15);
                assert!(sched.alpha_bar(t) < prev, "alpha_bar not strictly decreasing at t={t}");
                assert!(sched.beta(t) > 0.0 && sched.beta(t) < 1.0);
                prev = sched.alpha_bar(t);
            }
        }
        // Default configurations end deep in the noise regime.
        for t_max in [100usize, 1000] {
            let sched = DiffusionSchedule::default_linear(t_max).unwrap();
            assert!(sched.alpha_bar(t_max) < 0.05);
        }
    }

    #[test]
    fn forward_diffuse_linearity_and_edge_cases() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = Tensor::<f64>::randn(1, 16, &mut rng);
        let y0 = Tensor::<f64>::randn(1, 16, &mut rng);
        let noise = Tensor::<f64>::randn(1, 16, &mut rng);
        let t = 37;

        // zero signal: output = sqrt(1 - abar) * noise
        let zeros = Tensor::<f64>::zeros(1, 16);
        let out = sched.forward_diffuse(&zeros, t, &noise).unwrap();
        let k = (1.0 - sched.alpha_bar(t)).sqrt();
        for (o, n) in out.data().iter().zip(noise.data().iter()) {
            assert!((o - k * n).abs() < 1e-12);
        }

        // two-point linearity with shared noise
        let (a, b) = (0.7, -1.3);
        let mix = x0.zip_map(&y0, |xv, yv| a * xv + b * yv);
        let lhs = sched.forward_diffuse(&mix, t, &noise).unwrap();
        let dx = sched.forward_diffuse(&x0, t, &noise).unwrap();
        let dy = sched.forward_diffuse(&y0, t, &noise).unwrap();
        let dz = sched.forward_diffuse(&zeros, t, &noise).unwrap();
        // diffuse(a x + b y, n) = a diffuse(x, n) + b diffuse(y, n) + (1-a-b) diffuse(0, n)
        for i in 0..16 {
            let rhs = a * dx.data()[i] + b * dy.data()[i] + (1.0 - a - b) * dz.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-12);
        }

        // dimension mismatch rejected
        let bad = Tensor::<f64>::zeros(1, 8);
        assert!(sched.forward_diffuse(&x0, t, &bad).is_err());
        assert!(sched.forward_diffuse(&x0, 0, &noise).is_err());
        assert!(sched.forward_diffuse(&x0, 101, &noise).is_err());
    }

    /// Monte Carlo moments of forward_diffuse against the closed form.
    #[test]
    fn forward_diffuse_moments_match_closed_form() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = 60;
        let x0 = Tensor::<f64>::matrix(1, 1, vec![0.8]);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let noise = Tensor::<f64>::randn(1, 1, &mut rng);
            let xt = sched.forward_diffuse(&x0, t, &noise).unwrap().item();
            sum += xt;
            sumsq += xt * xt;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let ab = sched.alpha_bar(t);
        let expect_mean = ab.sqrt() * 0.8;
        let expect_var = 1.0 - ab;
        // 3 standard errors
        let se_mean = expect_var.sqrt() / (n as f64).sqrt();
        let se_var = expect_var * (2.0 / n as f64).sqrt();
        assert!((mean - expect_mean).abs() < 3.0 * se_mean);
        assert!((var - expect_var).abs() < 3.0 * se_var);
    }

    #[test]
    fn posterior_terminal_step_is_deterministic_mean() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = Tensor::<f64>::randn(1, 8, &mut rng);
        let x1 = Tensor::<f64>::randn(1, 8, &mut rng);
        let noise = Tensor::<f64>::randn(1, 8, &mut rng);
        let out = sched.posterior_step(&x1, &x0, 1, &noise).unwrap();
        // at t=1: abar_0 = 1 so the x_t coefficient vanishes and the mean is x0_hat
        for (o, x) in out.data().iter().zip(x0.data().iter()) {
            assert!((o - x).abs() < 1e-12);
        }
        let (c0, ct, var) = sched.posterior_coefficients(1);
        assert!((c0 - 1.0).abs() < 1e-12);
        assert!(ct.abs() < 1e-12);
        assert!(var.abs() < 1e-15);
    }

    #[test]
    fn posterior_coefficients_sum_to_one_when_alpha_bars_collapse() {
        // Symbolic check at abar_{t-1} = abar_t, beta = 0: the mean
        // coefficients must sum to 1 so x0_hat = x_t is a fixed point.
        let ab = 0.5f64;
        let beta = 0.0f64;
        let alpha = 1.0 - beta;
        let c0 = ab.sqrt() * beta / (1.0 - ab);
        let ct = alpha.sqrt() * (1.0 - ab) / (1.0 - ab);
        assert!((c0 + ct - 1.0).abs() < 1e-15);
    }

    /// Perfect-oracle reconstruction through the full reverse chain.
    #[test]
    fn posterior_chain_recovers_signal_with_oracle() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = Tensor::<f64>::randn(1, 32, &mut rng);
        let mut x = Tensor::<f64>::randn(1, 32, &mut rng); // pure noise start
        for t in (1..=100).rev() {
            let noise = Tensor::<f64>::randn(1, 32, &mut rng);
            x = sched.posterior_step(&x, &x0, t, &noise).unwrap();
        }
        for (a, b) in x.data().iter().zip(x0.data().iter()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn ddim_endpoint_returns_prediction_exactly() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x0 = Tensor::<f64>::randn(1, 8, &mut rng);
        let xt = Tensor::<f64>::randn(1, 8, &mut rng);
        let out = sched.ddim_step(&xt, &x0, 5, 0).unwrap();
        assert_eq!(out.data(), x0.data());
        assert!(sched.ddim_step(&xt, &x0, 5, 5).is_err());
        assert!(sched.ddim_step(&xt, &x0, 5, 6).is_err());
    }

    #[test]
    fn ddim_oracle_trajectory_independent_of_step_count() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x0 = Tensor::<f64>::randn(1, 16, &mut rng);
        let x_start = Tensor::<f64>::randn(1, 16, &mut rng);
        let run = |k: usize| {
            let mut x = x_start.clone();
            let ts = sched.ddim_timesteps(k);
            for w in 0..ts.len() {
                let t = ts[w];
                let t_prev = if w + 1 < ts.len() { ts[w + 1] } else { 0 };
                x = sched.ddim_step(&x, &x0, t, t_prev).unwrap();
            }
            x
        };
        let fast = run(10);
        let slow = run(100);
        for (a, b) in fast.data().iter().zip(slow.data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ddim_timesteps_cover_endpoints() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let ts = sched.ddim_timesteps(10);
        assert_eq!(ts.len(), 10);
        assert_eq!(ts[0], 100);
        assert_eq!(*ts.last().unwrap(), 1);
        assert!(ts.windows(2).all(|w| w[0] > w[1]));

        let sched1000 = DiffusionSchedule::default_linear(1000).unwrap();
        let ts = sched1000.ddim_timesteps(10);
        assert_eq!(ts[0], 1000);
        assert_eq!(*ts.last().unwrap(), 1);
    }

    /// Zero-noise posterior continuity in x0_hat: finite-difference
    /// sensitivity equals the analytic coefficient.
    #[test]
    fn posterior_sensitivity_matches_coefficient() {
        let sched = DiffusionSchedule::default_linear(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x0 = Tensor::<f64>::randn(1, 4, &mut rng);
        let xt = Tensor::<f64>::randn(1, 4, &mut rng);
        let zero = Tensor::<f64>::zeros(1, 4);
        let t = 40;
        let (c0, _, _) = sched.posterior_coefficients(t);
        let h = 1e-6;
        let bump = x0.map(|v| v + h);
        let base = sched.posterior_step(&xt, &x0, t, &zero).unwrap();
        let moved = sched.posterior_step(&xt, &bump, t, &zero).unwrap();
        for i in 0..4 {
            let fd = (moved.data()[i] - base.data()[i]) / h;
            assert!((fd - c0).abs() < 1e-6, "fd {fd} vs c0 {c0}");
        }
    }
}
