//! JSON Schema (draft 2020-12) for pipeline documents, generated from the
//! node catalog.

use serde_json::{json, Map, Value as Json};

use crate::catalog::{catalog, NodeSpec, ParamSpec, ParamType};
use crate::doc::DOC_VERSION;

fn param_schema(p: &ParamSpec) -> Json {
    let list = |item: &str| json!({ "type": "array", "items": { "type": item } });
    let mut s = match p.ty {
        ParamType::Number => json!({ "type": "number" }),
        ParamType::Integer => json!({ "type": "integer" }),
        ParamType::Bool => json!({ "type": "boolean" }),
        ParamType::String => json!({ "type": "string" }),
        ParamType::NumberList => list("number"),
        ParamType::IntegerList => json!({ "type": "array", "items": { "type": "integer", "minimum": 0 } }),
        ParamType::StringList => list("string"),
        ParamType::Object => json!({ "type": "object" }),
        ParamType::ObjectList => list("object"),
        ParamType::Enum(values) => json!({ "enum": values }),
    };
    s["description"] = json!(p.doc);
    if let Some(d) = &p.default {
        s["default"] = d.clone();
    }
    s
}

fn kind_branch(spec: &NodeSpec) -> Json {
    let props: Map<String, Json> = spec.params.iter().map(|p| (p.name.to_string(), param_schema(p))).collect();
    let required: Vec<&str> = spec.params.iter().filter(|p| p.required).map(|p| p.name).collect();
    let mut params = json!({ "type": "object", "additionalProperties": false, "properties": props });
    if !required.is_empty() {
        params["required"] = json!(required);
    }
    let mut branch = json!({
        "description": spec.doc,
        "properties": { "kind": { "const": spec.kind }, "params": params },
    });
    if !required.is_empty() {
        branch["required"] = json!(["params"]);
    }
    branch
}

/// The schema checked into the repository as `pipelines/schema.json`.
pub fn pipeline_schema() -> Json {
    let cat = catalog();
    let kinds: Vec<&str> = cat.iter().map(|n| n.kind).collect();
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "$id": "https://noetic.invalid/pipeline.schema.json",
        "title": "noetic pipeline document",
        "type": "object",
        "additionalProperties": false,
        "required": ["version"],
        "properties": {
            "version": { "const": DOC_VERSION },
            "seed": { "type": "integer", "minimum": 0, "default": 0 },
            "nodes": { "type": "array", "items": { "$ref": "#/$defs/node" } },
            "edges": { "type": "array", "items": { "$ref": "#/$defs/edge" } },
            "ui": { "description": "editor layout; ignored by the engine and the content hash" }
        },
        "$defs": {
            "node": {
                "type": "object",
                "additionalProperties": false,
                "required": ["id", "kind"],
                "properties": {
                    "id": { "type": "string", "minLength": 1 },
                    "kind": { "enum": kinds },
                    "params": { "type": "object" }
                },
                "oneOf": cat.iter().map(kind_branch).collect::<Vec<_>>()
            },
            "edge": {
                "type": "object",
                "additionalProperties": false,
                "required": ["from", "to"],
                "properties": {
                    "from": { "type": "string", "minLength": 1 },
                    "from_port": { "type": "string", "default": crate::catalog::OUT },
                    "to": { "type": "string", "minLength": 1 },
                    "to_port": { "type": "string", "default": crate::catalog::IN }
                }
            }
        }
    })
}

/// Schema text in the canonical layout used for pipeline files.
pub fn schema_text() -> String {
    let mut text = serde_json::to_string_pretty(&pipeline_schema()).expect("schema serializes");
    text.push('\n');
    text
}
