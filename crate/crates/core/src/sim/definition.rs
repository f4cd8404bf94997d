use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{ChainRepr, MarkovChain};
use crate::tree::{parse_tree, ProcessTree};

pub const DEFINITION_VERSION: &str = "streamgen-def/1";

/// Simulation parameters of one definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationParams {
    /// Mean gap between top-level case arrivals (exponential), in ticks.
    pub case_arrival: f64,
    /// Mean activity duration in ticks.
    pub duration_mean: f64,
    /// Coefficient of variation of activity durations.
    pub duration_cv: f64,
    /// Per-activity overrides of `duration_mean`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub activity_durations: BTreeMap<String, f64>,
    pub ooo_prob: f64,
    pub ooo_max_delay: u64,
    pub trigger_prob: f64,
    pub max_depth: u32,
    pub t_scale: f64,
    pub t_simplify: f64,
    pub seed: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            case_arrival: 1.0,
            duration_mean: 10.0,
            duration_cv: 0.5,
            activity_durations: BTreeMap::new(),
            ooo_prob: 0.0,
            ooo_max_delay: 0,
            trigger_prob: 0.0,
            max_depth: 2,
            t_scale: 1.0,
            t_simplify: 0.0,
            seed: 0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(format!("{name} = {v} outside [0, 1]")))
            }
        };
        if !(self.case_arrival.is_finite() && self.case_arrival > 0.0) {
            return Err(Error::param("case_arrival must be positive"));
        }
        if !(self.duration_mean.is_finite() && self.duration_mean > 0.0) {
            return Err(Error::param("duration_mean must be positive"));
        }
        if let Some((a, _)) = self
            .activity_durations
            .iter()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::param(format!(
                "duration mean of {a:?} must be positive"
            )));
        }
        if !(self.duration_cv.is_finite() && self.duration_cv >= 0.0) {
            return Err(Error::param("duration_cv must be non-negative"));
        }
        unit(self.ooo_prob, "ooo_prob")?;
        unit(self.trigger_prob, "trigger_prob")?;
        unit(self.t_simplify, "t_simplify")?;
        if !(self.t_scale > 0.0 && self.t_scale <= 4.0) {
            return Err(Error::param(format!(
                "t_scale = {} outside (0, 4]",
                self.t_scale
            )));
        }
        Ok(())
    }

    pub fn mean_duration(&self, activity: &str) -> f64 {
        self.activity_durations
            .get(activity)
            .copied()
            .unwrap_or(self.duration_mean)
    }
}

/// Tree, chain and parameters describing one generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub tree: Option<ProcessTree>,
    pub chain: MarkovChain,
    pub params: SimulationParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriftTransition {
    Sudden,
    Gradual { window_events: usize },
}

/// One stretch of a drifting stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSegment {
    /// Process active in this segment; `None` means the base fragment.
    pub fragment: Option<Fragment>,
    pub n_events: usize,
    /// How the stream moves into this segment from the previous one.
    pub transition: DriftTransition,
}

/// Replayable generator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDefinition {
    pub base: Fragment,
    pub segments: Vec<DriftSegment>,
}

impl StreamDefinition {
    /// A single-segment definition.
    pub fn new(
        tree: Option<ProcessTree>,
        chain: MarkovChain,
        params: SimulationParams,
        n_events: usize,
    ) -> Self {
        StreamDefinition {
            base: Fragment {
                tree,
                chain,
                params,
            },
            segments: vec![DriftSegment {
                fragment: None,
                n_events: n_events.max(1),
                transition: DriftTransition::Sudden,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.params.validate()?;
        if self.segments.is_empty() {
            return Err(Error::Definition("at least one segment required".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.n_events == 0 {
                return Err(Error::Definition(format!("segment {i} has no events")));
            }
            if let DriftTransition::Gradual { window_events } = seg.transition {
                if window_events == 0 || window_events > seg.n_events {
                    return Err(Error::Definition(format!(
                        "segment {i}: gradual window {window_events} must be in 1..={}",
                        seg.n_events
                    )));
                }
            }
            if let Some(f) = &seg.fragment {
                f.params.validate()?;
            }
        }
        Ok(())
    }

    pub fn fragment(&self, segment: usize) -> &Fragment {
        self.segments[segment]
            .fragment
            .as_ref()
            .unwrap_or(&self.base)
    }

    pub fn to_json(&self) -> Result<String> {
        let repr = DefinitionRepr {
            version: DEFINITION_VERSION.to_string(),
            tree: self.base.tree.as_ref().map(|t| t.to_string()),
            chain: self.base.chain.to_repr(),
            params: self.base.params.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRepr {
                    fragment: s.fragment.as_ref().map(FragmentRepr::from),
                    n_events: s.n_events,
                    transition: s.transition,
                })
                .collect(),
        };
        let mut text =
            serde_json::to_string_pretty(&repr).map_err(|e| Error::Definition(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: DefinitionRepr =
            serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        if repr.version != DEFINITION_VERSION {
            return Err(Error::Definition(format!(
                "unsupported definition version {:?}",
                repr.version
            )));
        }
        let base = FragmentRepr {
            tree: repr.tree,
            chain: repr.chain,
            params: repr.params,
        }
        .into_fragment()?;
        let segments = repr
            .segments
            .into_iter()
            .map(|s| {
                Ok(DriftSegment {
                    fragment: s.fragment.map(FragmentRepr::into_fragment).transpose()?,
                    n_events: s.n_events,
                    transition: s.transition,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let def = StreamDefinition { base, segments };
        def.validate()?;
        Ok(def)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefinitionRepr {
    version: String,
    tree: Option<String>,
    chain: ChainRepr,
    params: SimulationParams,
    segments: Vec<SegmentRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRepr {
    fragment: Option<FragmentRepr>,
    n_events: usize,
    transition: DriftTransition,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FragmentRepr {
    tree: Option<String>,
    chain: ChainRepr,
    params: SimulationParams,
}

impl From<&Fragment> for FragmentRepr {
    fn from(f: &Fragment) -> Self {
        FragmentRepr {
            tree: f.tree.as_ref().map(|t| t.to_string()),
            chain: f.chain.to_repr(),
            params: f.params.clone(),
        }
    }
}

impl FragmentRepr {
    fn into_fragment(self) -> Result<Fragment> {
        Ok(Fragment {
            tree: self.tree.as_deref().map(parse_tree).transpose()?,
            chain: MarkovChain::from_repr(&self.chain)?,
            params: self.params,
        })
    }
}
