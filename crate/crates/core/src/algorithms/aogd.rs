//! Adaptive online gradient descent with full-gradient feedback.

use crate::barrier::Domain;
use crate::error::{BcoError, Result};
use crate::numerics::{norm2, sub};

use super::{aogd_lambda, AlgoConfig, Feedback, StepInfo};

#[derive(Clone, Debug)]
pub struct AogdState {
    pub config: AlgoConfig,
    domain: Domain,
    pub x: Vec<f64>,
    /// `σ_{1:t}`.
    pub sigma_sum: f64,
    /// `λ_{1:t}`.
    pub lambda_sum: f64,
    proposed: bool,
}

impl AogdState {
    pub fn init(config: AlgoConfig, domain: Domain) -> Result<Self> {
        config.validate()?;
        if config.d != domain.dim() {
            return Err(BcoError::Config(format!(
                "config dimension {} does not match domain dimension {}",
                config.d,
                domain.dim()
            )));
        }
        let x = vec![0.0; config.d];
        Ok(AogdState {
            config,
            domain,
            x,
            sigma_sum: 0.0,
            lambda_sum: 0.0,
            proposed: false,
        })
    }

    pub fn propose(&mut self) -> Result<Vec<f64>> {
        self.proposed = true;
        Ok(self.x.clone())
    }

    /// `λ_t` balances `(3/2)λ_t = 1/(σ_{1:t}+λ_{1:t})`; then a projected step
    /// of size `1/(σ_{1:t}+λ_{1:t})` on `∇f_t(x_t) + λ_t x_t`.
    pub fn step(&mut self, fb: &Feedback) -> Result<StepInfo> {
        if !self.proposed {
            return Err(BcoError::FeedbackOrder("step called before propose".into()));
        }
        self.proposed = false;
        let grad = fb
            .gradient
            .as_ref()
            .ok_or_else(|| BcoError::FeedbackOrder("AOGD requires gradient feedback".into()))?;
        if !(fb.sigma_t >= 0.0) {
            return Err(BcoError::Invariant(format!(
                "σ_t must be nonnegative, got {}",
                fb.sigma_t
            )));
        }
        self.sigma_sum += fb.sigma_t;
        let lambda = aogd_lambda(self.sigma_sum, self.lambda_sum);
        self.lambda_sum += lambda;
        let eta = 1.0 / (self.sigma_sum + self.lambda_sum);
        let moved: Vec<f64> = self
            .x
            .iter()
            .zip(grad)
            .map(|(x, g)| x - eta * (g + lambda * x))
            .collect();
        let next = self.domain.project(&moved);
        let stability_norm = norm2(&sub(&next, &self.x));
        self.x = next;
        Ok(StepInfo {
            lambda,
            eta,
            stability_norm,
            tuning_residual: 0.0,
            grad_dual_norm: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::Mode;

    #[test]
    fn first_round_lambda_and_projection() {
        let dom = Domain::ball(2, 0.5).unwrap();
        let mut st = AogdState::init(AlgoConfig::new(Mode::Aogd, 2, 10), dom).unwrap();
        st.propose().unwrap();
        let info = st
            .step(&Feedback {
                f_val: 0.0,
                sigma_t: 0.0,
                gradient: Some(vec![-10.0, 0.0]),
            })
            .unwrap();
        assert!((info.lambda - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((norm2(&st.x) - 0.5).abs() < 1e-12);
        for _ in 0..20 {
            st.propose().unwrap();
            st.step(&Feedback {
                f_val: 0.0,
                sigma_t: 1.0,
                gradient: Some(vec![3.0, -4.0]),
            })
            .unwrap();
            assert!(norm2(&st.x) <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn gradient_feedback_required() {
        let dom = Domain::ball(1, 1.0).unwrap();
        let mut st = AogdState::init(AlgoConfig::new(Mode::Aogd, 1, 10), dom).unwrap();
        st.propose().unwrap();
        let fb = Feedback {
            f_val: 0.0,
            sigma_t: 0.0,
            gradient: None,
        };
        assert!(st.step(&fb).is_err());
    }
}
