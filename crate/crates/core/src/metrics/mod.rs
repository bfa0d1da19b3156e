//! The relevance-metric catalogue.
//!
//! Every metric is evaluated as a pairwise function of two vectors: one
//! cached per training instance and one computed for the test instance.
//! Build a [`MetricContext`] once per model, ask it for a [`MetricCache`]
//! per metric, then score or rank training instances against test instances
//! whose label holds the model's prediction.

mod analysis;
mod cache;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::FeatureMapId;

pub use analysis::{dominance_condition, gc_decomposition, GcDecomposition};
pub use cache::{predicted_instance, rank_training, relevance, MetricCache, MetricContext, Ranking, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    L2,
    Cos,
    Dot,
    /// Influence function `⟨g_t, H⁻¹g_i⟩`.
    If,
    /// Relative influence `cos(H^{-1/2}g_t, H^{-1/2}g_i)`.
    Rif,
    /// Fisher kernel `⟨g_t, I⁻¹g_i⟩`.
    Fk,
    /// Grad-dot.
    Gd,
    /// Grad-cos.
    Gc,
    L2If,
    L2Fk,
    CosFk,
    L2Grad,
}

/// How two cached vectors are turned into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    /// `-‖a - b‖²`
    NegSquaredDistance,
    Cosine,
    Dot,
}

/// What a metric compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Features(FeatureMapId),
    Gradient,
    /// `H^{-1/2} g` on both sides.
    HessianHalf,
    /// `g` against `H⁻¹ g`.
    HessianInverse,
    FisherHalf,
    FisherInverse,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::L2,
        Family::Cos,
        Family::Dot,
        Family::If,
        Family::Rif,
        Family::Fk,
        Family::Gd,
        Family::Gc,
        Family::L2If,
        Family::L2Fk,
        Family::CosFk,
        Family::L2Grad,
    ];

    pub fn is_similarity(self) -> bool {
        matches!(self, Family::L2 | Family::Cos | Family::Dot)
    }

    pub fn similarity(self) -> Similarity {
        match self {
            Family::L2 | Family::L2If | Family::L2Fk | Family::L2Grad => Similarity::NegSquaredDistance,
            Family::Cos | Family::Rif | Family::Gc | Family::CosFk => Similarity::Cosine,
            Family::Dot | Family::If | Family::Fk | Family::Gd => Similarity::Dot,
        }
    }

    fn token(self) -> &'static str {
        match self {
            Family::L2 => "l2",
            Family::Cos => "cos",
            Family::Dot => "dot",
            Family::If => "if",
            Family::Rif => "rif",
            Family::Fk => "fk",
            Family::Gd => "gd",
            Family::Gc => "gc",
            Family::L2If => "l2-if",
            Family::L2Fk => "l2-fk",
            Family::CosFk => "cos-fk",
            Family::L2Grad => "l2-grad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MetricId {
    family: Family,
    feature_map: Option<FeatureMapId>,
}

impl MetricId {
    pub fn similarity(family: Family, map: FeatureMapId) -> Result<Self> {
        if !family.is_similarity() {
            return Err(Error::invalid(format!(
                "`{}` does not take a feature map",
                family.token()
            )));
        }
        Ok(MetricId {
            family,
            feature_map: Some(map),
        })
    }

    pub fn gradient(family: Family) -> Result<Self> {
        if family.is_similarity() {
            return Err(Error::invalid(format!(
                "`{}` needs a feature map",
                family.token()
            )));
        }
        Ok(MetricId {
            family,
            feature_map: None,
        })
    }

    pub fn family(self) -> Family {
        self.family
    }

    pub fn feature_map(self) -> Option<FeatureMapId> {
        self.feature_map
    }

    pub fn uses_gradients(self) -> bool {
        !self.family.is_similarity()
    }

    pub fn representation(self) -> Representation {
        match self.family {
            Family::L2 | Family::Cos | Family::Dot => {
                Representation::Features(self.feature_map.expect("similarity metric has a map"))
            }
            Family::Gd | Family::Gc | Family::L2Grad => Representation::Gradient,
            Family::Rif | Family::L2If => Representation::HessianHalf,
            Family::If => Representation::HessianInverse,
            Family::Fk => Representation::FisherInverse,
            Family::L2Fk | Family::CosFk => Representation::FisherHalf,
        }
    }

    /// All 18 canonical metrics in catalogue order.
    pub fn all() -> Vec<MetricId> {
        let mut out = Vec::new();
        for family in [Family::L2, Family::Cos, Family::Dot] {
            for map in [FeatureMapId::Input, FeatureMapId::LastHidden, FeatureMapId::AllHidden] {
                out.push(MetricId::similarity(family, map).unwrap());
            }
        }
        for family in &Family::ALL[3..] {
            out.push(MetricId::gradient(*family).unwrap());
        }
        out
    }

    /// Metrics that make sense for a model: hidden-layer maps are dropped
    /// for logistic regression.
    pub fn all_for(is_logreg: bool) -> Vec<MetricId> {
        MetricId::all()
            .into_iter()
            .filter(|m| !is_logreg || m.feature_map.is_none_or(|f| f == FeatureMapId::Input))
            .collect()
    }

    /// Parses a comma-separated list of tokens.
    pub fn parse_list(text: &str) -> Result<Vec<MetricId>> {
        text.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.feature_map {
            Some(map) => write!(f, "{}@{}", self.family.token(), map.token()),
            None => f.write_str(self.family.token()),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let token = s.trim().to_ascii_lowercase();
        if let Some((family, map)) = token.split_once('@') {
            let family = match family {
                "l2" => Family::L2,
                "cos" => Family::Cos,
                "dot" => Family::Dot,
                _ => return Err(Error::invalid(format!("unknown metric `{s}`"))),
            };
            let map = match map {
                "x" => FeatureMapId::Input,
                "last" => FeatureMapId::LastHidden,
                "all" => FeatureMapId::AllHidden,
                _ => return Err(Error::invalid(format!("unknown feature map in `{s}`"))),
            };
            return MetricId::similarity(family, map);
        }
        let family = match token.as_str() {
            "if" => Family::If,
            "rif" | "cos-if" => Family::Rif,
            "fk" => Family::Fk,
            "gd" => Family::Gd,
            "gc" | "cos-grad" => Family::Gc,
            "l2-if" => Family::L2If,
            "l2-fk" => Family::L2Fk,
            "cos-fk" => Family::CosFk,
            "l2-grad" => Family::L2Grad,
            "l2" | "cos" | "dot" => {
                return Err(Error::invalid(format!(
                    "metric `{s}` needs a feature map, e.g. `{s}@x`"
                )))
            }
            _ => return Err(Error::invalid(format!("unknown metric `{s}`"))),
        };
        MetricId::gradient(family)
    }
}

impl Serialize for MetricId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
