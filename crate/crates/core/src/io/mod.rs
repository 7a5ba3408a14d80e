//! Instance documents, article catalogs and instance generation.

mod catalog;
mod document;
mod generate;

pub use catalog::{expand_orders, ArticleSpec, CatalogDoc, ComponentSpec, Order, ShopDoc, CATALOG_FORMAT};
pub use document::{
    load_instance, paper_instance, parse_instance, serialize_instance, BufferDoc, Format, InstanceDoc, JobDoc,
    MachineDoc, OperationDoc, INSTANCE_FORMAT, INSTANCE_VERSION, PAPER_3X3,
};
pub use generate::{generate_instance, GenSpec, Range};
