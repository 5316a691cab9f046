//! Entity-relationship schema to SQL DDL.
//!
//! Mapping rules:
//! - one table per entity, named after the entity in snake case;
//! - `int`/`string`/`bool`/`date` become `INTEGER`/`TEXT`/`BOOLEAN`/`DATE`;
//! - key attributes are `NOT NULL` and form the primary key;
//! - a 1-N relation adds `<one>_<key>` columns to the N side, a 1-1 relation
//!   adds them to the right participant, both `NOT NULL REFERENCES`;
//! - an N-N relation becomes a junction table named after the relation whose
//!   columns are both sides' keys, all in the composite primary key.
//!
//! A foreign-key column whose natural name is taken gets the relation name as
//! prefix; if that is taken too the schema is rejected with NAME_CLASH.

use crate::checker::check_er;
use crate::model::{AttrType, Cardinality, DesignModel, Entity, ErSchema};

use super::ddl::{self, Column, Script, SqlType, Table};
use super::GenError;

/// Converts a model identifier to a lower-case, underscore-separated SQL name.
pub fn sql_ident(name: &str) -> String {
    let chars: Vec<char> = name.chars().collect();
    let mut out = String::with_capacity(name.len() + 4);
    for (i, &c) in chars.iter().enumerate() {
        if c.is_ascii_uppercase() && i > 0 {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
            if prev.is_ascii_lowercase() || prev.is_ascii_digit() || (prev.is_ascii_uppercase() && next_lower) {
                out.push('_');
            }
        }
        out.push(c.to_ascii_lowercase());
    }
    out
}

fn sql_type(t: AttrType) -> SqlType {
    match t {
        AttrType::Int => SqlType::Integer,
        AttrType::String => SqlType::Text,
        AttrType::Bool => SqlType::Boolean,
        AttrType::Date => SqlType::Date,
    }
}

fn entity_table(e: &Entity) -> Result<Table, GenError> {
    let mut t = Table { name: sql_ident(&e.name), columns: Vec::new(), primary_key: Vec::new() };
    for a in &e.attributes {
        let name = sql_ident(&a.name);
        if t.column(&name).is_some() {
            return Err(GenError::NameClash(format!("{}.{}", e.name, a.name)));
        }
        if a.is_key {
            t.primary_key.push(name.clone());
        }
        t.columns.push(Column { name, ty: sql_type(a.ty), not_null: a.is_key, references: None });
    }
    Ok(t)
}

/// Foreign-key columns pointing at every key of `target`.
fn key_columns(target: &Entity, relation: &str) -> Result<Vec<Column>, GenError> {
    let table = sql_ident(&target.name);
    let cols: Vec<Column> = target
        .keys()
        .map(|k| Column {
            name: format!("{table}_{}", sql_ident(&k.name)),
            ty: sql_type(k.ty),
            not_null: true,
            references: Some((table.clone(), sql_ident(&k.name))),
        })
        .collect();
    if cols.is_empty() {
        return Err(GenError::NoKey { entity: target.name.clone(), relation: relation.to_string() });
    }
    Ok(cols)
}

fn add_column(table: &mut Table, mut col: Column, relation: &str) -> Result<String, GenError> {
    if table.column(&col.name).is_some() {
        col.name = format!("{}_{}", sql_ident(relation), col.name);
        if table.column(&col.name).is_some() {
            return Err(GenError::NameClash(format!("{}.{}", relation, col.name)));
        }
    }
    let name = col.name.clone();
    table.columns.push(col);
    Ok(name)
}

fn schema_script(schema: &ErSchema) -> Result<Script, GenError> {
    let mut tables: Vec<Table> = Vec::new();
    for e in &schema.entities {
        let t = entity_table(e)?;
        if tables.iter().any(|x| x.name == t.name) {
            return Err(GenError::NameClash(e.name.clone()));
        }
        tables.push(t);
    }
    let index_of = |name: &str| schema.entities.iter().position(|e| e.name == name).expect("checked entity");

    let mut junctions: Vec<Table> = Vec::new();
    for r in &schema.relations {
        let (li, ri) = (index_of(&r.left.entity), index_of(&r.right.entity));
        let (left, right) = (&schema.entities[li], &schema.entities[ri]);
        match (r.left.card, r.right.card) {
            (Cardinality::Many, Cardinality::Many) => {
                let mut t = Table { name: sql_ident(&r.name), columns: Vec::new(), primary_key: Vec::new() };
                if tables.iter().chain(junctions.iter()).any(|x| x.name == t.name) {
                    return Err(GenError::NameClash(r.name.clone()));
                }
                for col in key_columns(left, &r.name)?.into_iter().chain(key_columns(right, &r.name)?) {
                    let name = add_column(&mut t, col, &r.name)?;
                    t.primary_key.push(name);
                }
                junctions.push(t);
            }
            (lc, rc) => {
                // FK lives on the N side, or on the right for 1-1.
                let (one, many_idx) = match (lc, rc) {
                    (Cardinality::Many, Cardinality::One) => (right, li),
                    _ => (left, ri),
                };
                for col in key_columns(one, &r.name)? {
                    add_column(&mut tables[many_idx], col, &r.name)?;
                }
            }
        }
    }
    tables.extend(junctions);
    Ok(Script { tables })
}

pub fn gen_sql(model: &DesignModel, schema_name: &str) -> Result<String, GenError> {
    let schema = model.schema(schema_name).ok_or_else(|| GenError::SchemaNotFound(schema_name.to_string()))?;
    let prefix = format!("{schema_name}.");
    if check_er(model).iter().any(|f| f.is_error() && f.subject.name.starts_with(&prefix)) {
        return Err(GenError::SchemaHasErrors(schema_name.to_string()));
    }
    Ok(ddl::render(&schema_script(schema)?))
}
