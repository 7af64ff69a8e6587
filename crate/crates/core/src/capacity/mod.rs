//! Capacity region, load decompositions and server classification.

pub mod decomposition;
pub mod htc;
pub mod instance;
pub mod lp;
pub mod pandas;
pub mod refine;
pub mod region;
pub mod report;

pub use decomposition::Decomposition;
pub use htc::{htc_check, htc_check_traffic, HtcReport};
pub use instance::Instance;
pub use pandas::{even_split_lambda, even_split_scale};
pub use refine::{
    class_violations, classify, classify_pooled, ideal_decomposition, is_rack_overloaded, pseudo_rates,
    rack_condition_violations, refine_racks, refine_servers, server_condition_violations, ServerClassification,
};
pub use region::{in_region, in_region_pooled, max_lambda, max_scale, min_max_load, RegionResult};
pub use report::{capacity_report, CapacityReport, RefinementAudit};

use serde::{Deserialize, Serialize};

/// Helper/beneficiary crossed with under/over-loaded rack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServerClass {
    Hu,
    Bu,
    Ho,
    Bo,
}

impl ServerClass {
    pub fn new(beneficiary: bool, rack_overloaded: bool) -> Self {
        match (beneficiary, rack_overloaded) {
            (false, false) => ServerClass::Hu,
            (true, false) => ServerClass::Bu,
            (false, true) => ServerClass::Ho,
            (true, true) => ServerClass::Bo,
        }
    }

    pub fn is_beneficiary(self) -> bool {
        matches!(self, ServerClass::Bu | ServerClass::Bo)
    }

    pub fn in_overloaded_rack(self) -> bool {
        matches!(self, ServerClass::Ho | ServerClass::Bo)
    }

    pub fn name(self) -> &'static str {
        match self {
            ServerClass::Hu => "H_u",
            ServerClass::Bu => "B_u",
            ServerClass::Ho => "H_o",
            ServerClass::Bo => "B_o",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RackStatus {
    Underloaded,
    Overloaded,
}
