//! Value functions on the belief simplex.

use crate::belief::Belief;
use crate::error::{Error, Result};
use crate::grid::SimplexGrid;
use serde::{Deserialize, Serialize};

/// Anything evaluatable on the belief simplex.
pub trait BeliefFn: Sync {
    fn eval(&self, mu: &Belief) -> f64;
}

impl<F: Fn(&Belief) -> f64 + Sync> BeliefFn for F {
    fn eval(&self, mu: &Belief) -> f64 {
        self(mu)
    }
}

/// A declared-kind value function V: Delta(X) -> R.
///
/// Entropy uses the natural log throughout (the base is a free choice; nats
/// keep derivatives clean).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ValueFunction {
    /// max over actions of expected payoff; `payoffs` is |A| x |X|.
    Decision {
        payoffs: Vec<Vec<f64>>,
        #[serde(default)]
        label: String,
    },
    /// Shannon entropy in nats, 0 ln 0 = 0.
    Entropy {
        #[serde(default)]
        label: String,
    },
    /// 1 when mu[coordinate] >= threshold, else 0.
    Indicator {
        threshold: f64,
        coordinate: usize,
        #[serde(default)]
        label: String,
    },
    /// Piecewise-linear in Pr(x1) on a binary state space; breakpoints are
    /// (Pr(x1), value) pairs sorted by the first component and covering [0,1].
    Pwl {
        breakpoints: Vec<(f64, f64)>,
        #[serde(default)]
        label: String,
    },
    /// Values tabulated on a simplex grid, barycentric interpolation between.
    Table {
        resolution: u32,
        dim: usize,
        values: Vec<f64>,
        #[serde(default)]
        label: String,
        #[serde(skip)]
        cache: std::sync::OnceLock<SimplexGrid>,
    },
}

impl ValueFunction {
    pub fn decision(payoffs: Vec<Vec<f64>>) -> Self {
        ValueFunction::Decision { payoffs, label: String::new() }
    }

    pub fn entropy() -> Self {
        ValueFunction::Entropy { label: String::new() }
    }

    pub fn indicator(threshold: f64, coordinate: usize) -> Self {
        ValueFunction::Indicator { threshold, coordinate, label: String::new() }
    }

    pub fn pwl(breakpoints: Vec<(f64, f64)>) -> Self {
        ValueFunction::Pwl { breakpoints, label: String::new() }
    }

    pub fn table(grid: &SimplexGrid, values: Vec<f64>) -> Self {
        ValueFunction::Table {
            resolution: grid.resolution(),
            dim: grid.dim(),
            values,
            label: String::new(),
            cache: std::sync::OnceLock::new(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            ValueFunction::Decision { label, .. }
            | ValueFunction::Entropy { label }
            | ValueFunction::Indicator { label, .. }
            | ValueFunction::Pwl { label, .. }
            | ValueFunction::Table { label, .. } => label,
        }
    }

    /// Checks internal consistency for a state space of `dim` states.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ValueFunction::Decision { payoffs, .. } => {
                if payoffs.is_empty() {
                    return Err(Error::InvalidValueFunction("empty action set".into()));
                }
                for row in payoffs {
                    if row.len() != dim {
                        return Err(Error::InvalidValueFunction(format!(
                            "payoff row has {} entries, state space has {dim}",
                            row.len()
                        )));
                    }
                    if row.iter().any(|x| !x.is_finite()) {
                        return Err(Error::InvalidValueFunction("non-finite payoff".into()));
                    }
                }
                Ok(())
            }
            ValueFunction::Entropy { .. } => Ok(()),
            ValueFunction::Indicator { threshold, coordinate, .. } => {
                if *coordinate >= dim {
                    return Err(Error::InvalidValueFunction(format!(
                        "indicator coordinate {coordinate} out of range"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::InvalidValueFunction("non-finite threshold".into()));
                }
                Ok(())
            }
            ValueFunction::Pwl { breakpoints, .. } => {
                if dim != 2 {
                    return Err(Error::InvalidValueFunction(
                        "piecewise-linear functions require a binary state space".into(),
                    ));
                }
                if breakpoints.len() < 2 {
                    return Err(Error::InvalidValueFunction("need at least two breakpoints".into()));
                }
                if (breakpoints[0].0 - 0.0).abs() > 1e-12
                    || (breakpoints.last().unwrap().0 - 1.0).abs() > 1e-12
                {
                    return Err(Error::InvalidValueFunction(
                        "breakpoints must cover [0, 1]".into(),
                    ));
                }
                for w in breakpoints.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidValueFunction(
                            "breakpoints must be strictly increasing".into(),
                        ));
                    }
                }
                Ok(())
            }
            ValueFunction::Table { resolution, dim: tdim, values, .. } => {
                if *tdim != dim {
                    return Err(Error::InvalidValueFunction("table dimension mismatch".into()));
                }
                let grid = SimplexGrid::new(*tdim, *resolution)?;
                if values.len() != grid.len() {
                    return Err(Error::InvalidValueFunction(format!(
                        "table has {} values, grid has {} points",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, mu: &Belief) -> f64 {
        match self {
            ValueFunction::Decision { payoffs, .. } => payoffs
                .iter()
                .map(|row| row.iter().zip(mu.probs()).map(|(u, p)| u * p).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
            ValueFunction::Entropy { .. } => mu.entropy(),
            ValueFunction::Indicator { threshold, coordinate, .. } => {
                // half-open on the left so the threshold posterior itself fires
                if mu.get(*coordinate) >= *threshold - 1e-12 {
                    1.0
                } else {
                    0.0
                }
            }
            ValueFunction::Pwl { breakpoints, .. } => {
                let x = mu.get(1);
                let mut it = breakpoints.windows(2);
                let seg = it
                    .find(|w| x <= w[1].0 + 1e-15)
                    .unwrap_or_else(|| &breakpoints[breakpoints.len() - 2..]);
                let (x0, y0) = seg[0];
                let (x1, y1) = seg[1];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
            ValueFunction::Table { resolution, dim, values, cache, .. } => {
                let grid = cache
                    .get_or_init(|| SimplexGrid::new(*dim, *resolution).expect("validated table"));
                grid.interpolate(values, mu).expect("validated table")
            }
        }
    }
}

impl BeliefFn for ValueFunction {
    fn eval(&self, mu: &Belief) -> f64 {
        ValueFunction::eval(self, mu)
    }
}

/// Weighted sum of value functions, the scalarized payoff behind support
/// functions: sum_i lambda_i V^i(mu).
pub struct WeightedSum<'a> {
    pub weights: Vec<f64>,
    pub vfuncs: &'a [ValueFunction],
}

impl BeliefFn for WeightedSum<'_> {
    fn eval(&self, mu: &Belief) -> f64 {
        self.weights
            .iter()
            .zip(self.vfuncs)
            .map(|(l, v)| l * v.eval(mu))
            .sum()
    }
}

/// Component-wise expectations (E_P[V^1], ..., E_P[V^n]).
pub fn expected_values(p: &crate::belief::SignalStructure, vfuncs: &[ValueFunction]) -> Vec<f64> {
    vfuncs.iter().map(|v| p.expect(|b| v.eval(b))).collect()
}
