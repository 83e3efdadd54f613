//! Data-generating processes for the coverage studies.

use crate::data::{Dataset, Task};
use crate::functionals::Region;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// `y = f₀(x) + ε`, `x ~ U[0, 5]`
    Univariate,
    /// `y = f₀(x₁) + sin(1.5 x₂) + ε`, `x₁ ~ U[0, 5]`, `x₂ ~ U[-1, 1]`
    Bivariate,
}

impl Scenario {
    pub fn dim(self) -> usize {
        match self {
            Scenario::Univariate => 1,
            Scenario::Bivariate => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Univariate => "univariate",
            Scenario::Bivariate => "bivariate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "univariate" => Some(Scenario::Univariate),
            "bivariate" => Some(Scenario::Bivariate),
            _ => None,
        }
    }

    /// Support of the covariate distribution.
    pub fn domain(self) -> Region {
        match self {
            Scenario::Univariate => Region { lower: vec![0.0], upper: vec![5.0] },
            Scenario::Bivariate => Region { lower: vec![0.0, -1.0], upper: vec![5.0, 1.0] },
        }
    }

    /// `E[Y | X = x]`
    pub fn regression_function(self, x: &[f64]) -> f64 {
        match self {
            Scenario::Univariate => f0(x[0]),
            Scenario::Bivariate => f0(x[0]) + (1.5 * x[1]).sin(),
        }
    }

    /// Draws `n` observations; each draws its covariates first, then its noise.
    pub fn sample(self, n: usize, stream: &mut Stream) -> Dataset {
        let d = self.dim();
        let mut xs = Vec::with_capacity(n * d);
        let mut ys = Vec::with_capacity(n);
        let mut x = vec![0.0; d];
        for _ in 0..n {
            x[0] = stream.uniform_in(0.0, 5.0);
            if d == 2 {
                x[1] = stream.uniform_in(-1.0, 1.0);
            }
            let eps = stream.normal();
            ys.push(self.regression_function(&x) + eps);
            xs.extend_from_slice(&x);
        }
        Dataset::new(xs, d, ys, Task::Regression).expect("generated data is finite")
    }
}

/// `log(x + 2) + 0.7 sin 3x + 0.7 cos 2x`
pub fn f0(x: f64) -> f64 {
    (x + 2.0).ln() + 0.7 * (3.0 * x).sin() + 0.7 * (2.0 * x).cos()
}

pub fn gen_univariate(n: usize, seed: u64) -> Dataset {
    Scenario::Univariate.sample(n, &mut Stream::new(seed, 0))
}

pub fn gen_bivariate(n: usize, seed: u64) -> Dataset {
    Scenario::Bivariate.sample(n, &mut Stream::new(seed, 0))
}
