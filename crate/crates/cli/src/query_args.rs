//! `query` flags to an index Query.

use anyhow::{anyhow, bail};

use scenemine_core::index::Query;
use scenemine_core::resources::VOCABULARY;
use scenemine_core::schema::EnumField;

/// Builds a query from `field=v1,v2` filters, required tags, a risk range and
/// a description substring. Names and values are checked against the vocabulary.
pub fn build_query(
    filters: &[String],
    tags: &[String],
    risk_min: Option<i64>,
    risk_max: Option<i64>,
    text: Option<String>,
) -> anyhow::Result<Query> {
    let mut query = Query { risk_min, risk_max, text, ..Query::default() };
    for filter in filters {
        let (name, values) = filter.split_once('=').ok_or_else(|| anyhow!("filter {filter:?} is not field=value[,value]"))?;
        let field = EnumField::from_name(name.trim()).ok_or_else(|| anyhow!("unknown field {name:?}"))?;
        let entry = query.fields.entry(field).or_default();
        for value in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
            if !VOCABULARY.contains(field.name(), value) {
                bail!("{value:?} is not a {} value (expected one of {})", field.name(), field.vocabulary().join(", "));
            }
            entry.push(value.to_string());
        }
        if entry.is_empty() {
            bail!("filter {filter:?} lists no values");
        }
    }
    for tag in tags {
        if !VOCABULARY.contains("wod_e2e_tags", tag) {
            bail!("unknown tag {tag:?}");
        }
        query.tags.push(tag.clone());
    }
    query.validate()?;
    Ok(query)
}
