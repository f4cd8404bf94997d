//! The generator parameter space and its unit-cube encoding.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::SimulationParams;
use crate::tree::TreeGenParams;

/// Logit range of the free operator-weight coordinates.
const LOGIT_RANGE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dim {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
    /// Pinned value in natural units; fixed dimensions are not optimized.
    pub fixed: Option<f64>,
}

impl Dim {
    fn cont(name: &'static str, lo: f64, hi: f64) -> Self {
        Dim {
            name,
            lo,
            hi,
            integer: false,
            fixed: None,
        }
    }

    fn int(name: &'static str, lo: i64, hi: i64) -> Self {
        Dim {
            integer: true,
            ..Dim::cont(name, lo as f64, hi as f64)
        }
    }

    /// Natural value of unit coordinate `u`. Integers round to the nearest
    /// value of `[lo, hi]` with equal-width cells.
    pub fn decode(&self, u: f64) -> f64 {
        if let Some(v) = self.fixed {
            return v;
        }
        let u = u.clamp(0.0, 1.0);
        if self.integer {
            let cells = self.hi - self.lo + 1.0;
            (self.lo + (u * cells).floor()).min(self.hi)
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }

    pub fn encode(&self, v: f64) -> f64 {
        if self.integer {
            let cells = self.hi - self.lo + 1.0;
            ((v - self.lo + 0.5) / cells).clamp(0.0, 1.0)
        } else if self.hi > self.lo {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Decoded candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tree: TreeGenParams,
    pub sim: SimulationParams,
    pub markov_order: usize,
    /// Natural value of every dimension, by name.
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    dims: Vec<Dim>,
}

impl Default for ParamSpace {
    fn default() -> Self {
        ParamSpace {
            dims: vec![
                Dim::cont("op_seq", -LOGIT_RANGE, LOGIT_RANGE),
                Dim::cont("op_choice", -LOGIT_RANGE, LOGIT_RANGE),
                Dim::cont("op_parallel", -LOGIT_RANGE, LOGIT_RANGE),
                Dim::cont("p_silent", 0.0, 0.5),
                Dim::cont("ooo_prob", 0.0, 1.0),
                Dim::cont("trigger_prob", 0.0, 1.0),
                Dim::cont("t_scale", 0.1, 2.0),
                Dim::cont("t_simplify", 0.0, 1.0),
                Dim::cont("duration_cv", 0.0, 1.5),
                Dim::int("n_activities", 3, 20),
                Dim::int("max_depth", 2, 5),
                Dim::int("ooo_max_delay", 0, 50),
                Dim::int("markov_order", 1, 3),
            ],
        }
    }
}

impl ParamSpace {
    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn dim(&self, name: &str) -> Option<&Dim> {
        self.dims.iter().find(|d| d.name == name)
    }

    /// Pins a dimension to a natural value inside its bounds.
    pub fn fix(&mut self, name: &str, value: f64) -> Result<()> {
        let dim = self
            .dims
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::param(format!("unknown dimension {name:?}")))?;
        if !(dim.lo..=dim.hi).contains(&value) {
            return Err(Error::param(format!(
                "{name} = {value} outside [{}, {}]",
                dim.lo, dim.hi
            )));
        }
        if dim.integer && value.fract() != 0.0 {
            return Err(Error::param(format!("{name} must be an integer")));
        }
        dim.fixed = Some(value);
        Ok(())
    }

    /// Number of optimized (non-fixed) dimensions.
    pub fn n_free(&self) -> usize {
        self.dims.iter().filter(|d| d.fixed.is_none()).count()
    }

    /// Natural values of a point given in free-dimension unit coordinates.
    pub fn values(&self, u: &[f64]) -> Result<BTreeMap<String, f64>> {
        if u.len() != self.n_free() {
            return Err(Error::param(format!(
                "expected {} coordinates, got {}",
                self.n_free(),
                u.len()
            )));
        }
        let mut free = u.iter();
        Ok(self
            .dims
            .iter()
            .map(|d| {
                let x = if d.fixed.is_some() {
                    0.0
                } else {
                    *free.next().expect("length checked")
                };
                (d.name.to_string(), d.decode(x))
            })
            .collect())
    }

    /// Decodes a point onto generator parameters. Fields outside the space
    /// (arrival rate, mean duration, nesting depth) come from `base`.
    pub fn decode(&self, u: &[f64], base: &SimulationParams) -> Result<Candidate> {
        let values = self.values(u)?;
        let v = |name: &str| values[name];
        let logits = [v("op_seq"), v("op_choice"), v("op_parallel"), 0.0];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        let tree = TreeGenParams {
            n_activities: v("n_activities") as usize,
            w_seq: exp[0] / z,
            w_choice: exp[1] / z,
            w_parallel: exp[2] / z,
            w_loop: exp[3] / z,
            p_silent: v("p_silent"),
            max_depth: v("max_depth") as usize,
            seed: 0,
        };
        let sim = SimulationParams {
            ooo_prob: v("ooo_prob"),
            ooo_max_delay: v("ooo_max_delay") as u64,
            trigger_prob: v("trigger_prob"),
            t_scale: v("t_scale"),
            t_simplify: v("t_simplify"),
            duration_cv: v("duration_cv"),
            ..base.clone()
        };
        Ok(Candidate {
            tree,
            sim,
            markov_order: v("markov_order") as usize,
            values,
        })
    }
}
