//! JSON bodies of `POST /v1/score`.

use serde::{Deserialize, Serialize};

use super::score::QeItem;
use crate::error::Result;
use crate::seqmodel::{tokens_from_str, tokens_to_string};

pub const SCORE_PATH: &str = "/v1/score";
pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireItem {
    pub src: String,
    pub hyp: String,
    pub lang: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub items: Vec<WireItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

impl From<&QeItem> for WireItem {
    fn from(it: &QeItem) -> Self {
        WireItem {
            src: tokens_to_string(&it.source),
            hyp: tokens_to_string(&it.hyp),
            lang: it.lang.clone(),
        }
    }
}

impl WireItem {
    pub fn to_item(&self) -> Result<QeItem> {
        Ok(QeItem {
            lang: self.lang.clone(),
            source: tokens_from_str(&self.src)?,
            hyp: tokens_from_str(&self.hyp)?,
        })
    }
}
