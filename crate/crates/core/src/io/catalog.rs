//! Article catalogs and order expansion: every component of an ordered
//! article becomes its own job.

use serde::{Deserialize, Serialize};

use super::document::{BufferDoc, InstanceDoc, JobDoc, MachineDoc, OperationDoc, INSTANCE_FORMAT, INSTANCE_VERSION};
use crate::error::{Error, Result};
use crate::model::Instance;

pub const CATALOG_FORMAT: &str = "batchshop-catalog";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub name: String,
    pub quantity_per_article: u32,
    pub operations: Vec<OperationDoc>,
}

/// A manufactured article. Purchased parts are simply not listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticleSpec {
    pub article_id: String,
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Order {
    pub article_id: String,
    pub quantity: u32,
    pub deadline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogDoc {
    pub format: String,
    pub version: u32,
    pub articles: Vec<ArticleSpec>,
}

/// Machines, transport matrix and buffers without any jobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShopDoc {
    pub machines: Vec<MachineDoc>,
    pub transport: Vec<Vec<f64>>,
    pub buffers: Vec<BufferDoc>,
}

impl ShopDoc {
    pub fn from_instance(inst: &Instance) -> Self {
        let doc = InstanceDoc::from_instance(inst);
        ShopDoc { machines: doc.machines, transport: doc.transport, buffers: doc.buffers }
    }

    pub fn with_jobs(self, jobs: Vec<JobDoc>) -> Result<Instance> {
        InstanceDoc {
            format: INSTANCE_FORMAT.to_string(),
            version: INSTANCE_VERSION,
            machines: self.machines,
            transport: self.transport,
            buffers: self.buffers,
            jobs,
        }
        .into_instance()
    }
}

/// One job per (order, component). Orders are never merged, even for the
/// same article.
pub fn expand_orders(catalog: &[ArticleSpec], orders: &[Order]) -> Result<Vec<JobDoc>> {
    let mut jobs = Vec::new();
    for (oi, order) in orders.iter().enumerate() {
        if order.quantity == 0 {
            return Err(Error::invalid(format!("orders[{oi}].quantity"), "quantity must be >= 1"));
        }
        let article = catalog
            .iter()
            .find(|a| a.article_id == order.article_id)
            .ok_or_else(|| Error::UnknownArticle(order.article_id.clone()))?;
        if article.components.is_empty() {
            return Err(Error::invalid(format!("article '{}'", article.article_id), "no components"));
        }
        for c in &article.components {
            if c.quantity_per_article == 0 {
                return Err(Error::invalid(
                    format!("article '{}'.{}", article.article_id, c.name),
                    "quantity_per_article must be >= 1",
                ));
            }
            let quantity = order.quantity.checked_mul(c.quantity_per_article).ok_or_else(|| {
                Error::invalid(format!("orders[{oi}].quantity"), "batch size overflows")
            })?;
            jobs.push(JobDoc {
                name: format!("{}#{}/{}", order.article_id, oi + 1, c.name),
                quantity,
                deadline: order.deadline,
                operations: c.operations.clone(),
            });
        }
    }
    Ok(jobs)
}
