//! The two agent tools as stable JSON contracts, plus argument validation.
//!
//! Malformed calls never abort an episode; they become structured error
//! tool-responses naming the violated field so the policy can recover.

use serde_json::{json, Value};

use crate::backends::{ToolCall, ToolSchema};
use crate::search::SearchFilters;

pub const SEARCH_MEMORY: &str = "search_memory";
pub const SUBMIT_ANSWER: &str = "submit_answer";

/// Schemas offered to the policy on every generation call.
pub fn tool_schemas() -> Vec<ToolSchema> {
    vec![
        ToolSchema {
            name: SEARCH_MEMORY.into(),
            description: "Search the conversation memory database. Semantic mode finds the \
                          memories most similar to a natural language query; keyword mode \
                          returns memories containing every keyword in their content or \
                          metadata. Both modes support filtering by speaker and session."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "search_type": {
                        "type": "string",
                        "enum": ["semantic", "keyword"],
                        "description": "Which search mode to use."
                    },
                    "query": {
                        "type": "string",
                        "description": "Natural language query (semantic mode)."
                    },
                    "keywords": {
                        "type": "array",
                        "items": {"type": "string"},
                        "description": "Keywords that must all appear (keyword mode)."
                    },
                    "top_k": {
                        "type": "integer",
                        "minimum": 1,
                        "description": "Number of memories to return (semantic mode, default 5)."
                    },
                    "speaker": {
                        "type": "string",
                        "description": "Only match memories from this speaker."
                    },
                    "session": {
                        "type": "integer",
                        "minimum": 1,
                        "description": "Only match memories from this session."
                    }
                },
                "required": ["search_type"]
            }),
        },
        ToolSchema {
            name: SUBMIT_ANSWER.into(),
            description: "Submit the final answer to the target question. Ends the episode."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "answer": {"type": "string", "description": "The final answer."}
                },
                "required": ["answer"]
            }),
        },
    ]
}

/// A validated tool invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedCall {
    SearchMemory(SearchArgs),
    SubmitAnswer { answer: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchArgs {
    pub semantic: bool,
    pub query: Option<String>,
    pub keywords: Vec<String>,
    pub top_k: Option<usize>,
    pub filters: SearchFilters,
}

/// Validates a raw tool call against the schemas. The error string names
/// the violated field and is sent back verbatim as the tool response.
pub fn parse_call(call: &ToolCall) -> Result<ParsedCall, String> {
    match call.name.as_str() {
        SEARCH_MEMORY => parse_search(&call.arguments).map(ParsedCall::SearchMemory),
        SUBMIT_ANSWER => {
            let args = as_object(&call.arguments)?;
            let answer = args
                .get("answer")
                .and_then(Value::as_str)
                .ok_or("submit_answer requires a string field `answer`")?;
            Ok(ParsedCall::SubmitAnswer { answer: answer.to_string() })
        }
        other => Err(format!(
            "unknown tool `{other}`; available tools are `search_memory` and `submit_answer`"
        )),
    }
}

fn as_object(arguments: &Value) -> Result<&serde_json::Map<String, Value>, String> {
    arguments
        .as_object()
        .ok_or_else(|| "arguments did not parse as a JSON object".to_string())
}

fn parse_search(arguments: &Value) -> Result<SearchArgs, String> {
    let args = as_object(arguments)?;

    let search_type = args
        .get("search_type")
        .and_then(Value::as_str)
        .ok_or("search_memory requires a string field `search_type`")?;
    let semantic = match search_type {
        "semantic" => true,
        "keyword" => false,
        other => {
            return Err(format!(
                "`search_type` must be \"semantic\" or \"keyword\", got {other:?}"
            ))
        }
    };

    let query = match args.get("query") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("`query` must be a string".into()),
    };
    let keywords: Vec<String> = match args.get("keywords") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item.as_str() {
                    Some(s) if !s.trim().is_empty() => out.push(s.to_string()),
                    _ => return Err("`keywords` must be an array of non-empty strings".into()),
                }
            }
            out
        }
        Some(_) => return Err("`keywords` must be an array of strings".into()),
    };

    if semantic && query.as_deref().map_or(true, |q| q.trim().is_empty()) {
        return Err("semantic search requires a non-empty `query`".into());
    }
    if !semantic && keywords.is_empty() {
        return Err("keyword search requires a non-empty `keywords` array".into());
    }

    let top_k = match args.get("top_k") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(k) if k >= 1 => Some(k as usize),
            _ => return Err("`top_k` must be a positive integer".into()),
        },
    };
    let speaker = match args.get("speaker") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err("`speaker` must be a string".into()),
    };
    let session = match args.get("session") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(s) if s >= 1 => Some(s as u32),
            _ => return Err("`session` must be a positive integer".into()),
        },
    };

    Ok(SearchArgs {
        semantic,
        query,
        keywords,
        top_k,
        filters: SearchFilters { speaker, session },
    })
}
