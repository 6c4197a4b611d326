use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::{Graph, Tensor, Var};

/// Central finite-difference check of reverse-mode gradients.
///
/// Non-scalar outputs are contracted with a fixed pseudo-random probe so every
/// output coordinate contributes to the checked objective.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub eps: f64,
    pub probe_seed: u64,
    /// Added to every analytic gradient entry before comparison. Only used to
    /// exercise the failure path.
    pub analytic_perturbation: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            probe_seed: 0x5eed,
            analytic_perturbation: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per input, in input order.
    pub per_input: Vec<f64>,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn with_eps(eps: f64) -> Self {
        GradCheck {
            eps,
            ..Self::default()
        }
    }

    pub fn run<F>(&self, f: F, inputs: &[Tensor]) -> Result<GradCheckReport>
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let out_shape = g.shape(out).to_vec();
        let probe = if out_shape.iter().product::<usize>() == 1 {
            Tensor::full(&out_shape, 1.0)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.probe_seed);
            Tensor::uniform(&out_shape, 1.0, &mut rng)
        };
        let grads = g.backward_with_seed(out, &probe)?;

        let objective = |perturbed: &[Tensor]| -> Result<f64> {
            let mut g = Graph::new();
            let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone())).collect();
            let out = f(&mut g, &vars)?;
            Ok(g
                .value(out)
                .data()
                .iter()
                .zip(probe.data())
                .map(|(a, b)| a * b)
                .sum())
        };

        let mut work = inputs.to_vec();
        let mut per_input = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.iter().enumerate() {
            let analytic = grads.get_or_zeros(vars[i], input);
            let mut worst: f64 = 0.0;
            for j in 0..input.len() {
                let orig = input.data()[j];
                work[i].data_mut()[j] = orig + self.eps;
                let plus = objective(&work)?;
                work[i].data_mut()[j] = orig - self.eps;
                let minus = objective(&work)?;
                work[i].data_mut()[j] = orig;
                let numeric = (plus - minus) / (2.0 * self.eps);
                let a = analytic.data()[j] + self.analytic_perturbation;
                worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
            }
            per_input.push(worst);
        }
        let max_rel_error = per_input.iter().copied().fold(0.0, f64::max);
        Ok(GradCheckReport {
            per_input,
            max_rel_error,
        })
    }
}

/// Max over all input coordinates of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    GradCheck::with_eps(eps).run(f, inputs).map(|r| r.max_rel_error)
}
