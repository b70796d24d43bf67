//! Which estimation method serves each (family, model, a0) combination.
//! Every engine dispatches through [`estimation_method`].

use serde::{Deserialize, Serialize};

use crate::model::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    TwoGroup,
    Glm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum A0Kind {
    Fixed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    /// Closed-form posterior; posterior probabilities by quadrature.
    NumericalIntegration,
    Gibbs,
    Slice,
    /// Gibbs for location/precision, slice for a0.
    GibbsAndSlice,
    /// Slice for coefficients and a0, PWK normalizing-constant surface.
    SliceAndPwk,
}

pub fn estimation_method(family: Family, model: ModelKind, a0: A0Kind) -> EstimationMethod {
    use EstimationMethod::*;
    let normal = family == Family::Normal;
    match (model, a0) {
        (ModelKind::TwoGroup, A0Kind::Fixed) if normal => Gibbs,
        (ModelKind::TwoGroup, A0Kind::Fixed) => NumericalIntegration,
        (ModelKind::TwoGroup, A0Kind::Random) if normal => GibbsAndSlice,
        (ModelKind::TwoGroup, A0Kind::Random) => Slice,
        (ModelKind::Glm, A0Kind::Fixed) if normal => Gibbs,
        (ModelKind::Glm, A0Kind::Fixed) => Slice,
        (ModelKind::Glm, A0Kind::Random) if normal => GibbsAndSlice,
        (ModelKind::Glm, A0Kind::Random) => SliceAndPwk,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EstimationMethod::*;

    #[test]
    fn method_table() {
        let rows = [
            (Family::Bernoulli, [NumericalIntegration, Slice, Slice, SliceAndPwk]),
            (Family::Binomial, [NumericalIntegration, Slice, Slice, SliceAndPwk]),
            (Family::Normal, [Gibbs, GibbsAndSlice, Gibbs, GibbsAndSlice]),
            (Family::Poisson, [NumericalIntegration, Slice, Slice, SliceAndPwk]),
            (Family::Exponential, [NumericalIntegration, Slice, Slice, SliceAndPwk]),
        ];
        let cols = [
            (ModelKind::TwoGroup, A0Kind::Fixed),
            (ModelKind::TwoGroup, A0Kind::Random),
            (ModelKind::Glm, A0Kind::Fixed),
            (ModelKind::Glm, A0Kind::Random),
        ];
        for (family, expected) in rows {
            for ((model, a0), want) in cols.iter().zip(expected) {
                assert_eq!(estimation_method(family, *model, *a0), want, "{family:?} {model:?} {a0:?}");
            }
        }
    }
}
