//! Chat-completions wire format shared by the HTTP client and dataset export.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use super::ToolSchema;
use crate::model::{Message, Role, ToolCall};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: Role,
    #[serde(default, deserialize_with = "null_as_empty")]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<WireToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireToolCall {
    pub id: String,
    #[serde(rename = "type", default = "function_kind")]
    pub kind: String,
    pub function: WireFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFunction {
    pub name: String,
    /// JSON-encoded argument object.
    #[serde(default)]
    pub arguments: String,
}

fn function_kind() -> String {
    "function".to_string()
}

fn null_as_empty<'de, D: Deserializer<'de>>(de: D) -> Result<String, D::Error> {
    Ok(Option::<String>::deserialize(de)?.unwrap_or_default())
}

impl From<&ToolCall> for WireToolCall {
    fn from(call: &ToolCall) -> Self {
        Self {
            id: call.id.clone(),
            kind: function_kind(),
            function: WireFunction {
                name: call.tool_name.clone(),
                arguments: serde_json::to_string(&call.arguments).unwrap_or_else(|_| "{}".into()),
            },
        }
    }
}

impl From<&WireToolCall> for ToolCall {
    fn from(call: &WireToolCall) -> Self {
        let arguments = match serde_json::from_str::<Value>(&call.function.arguments) {
            Ok(Value::Object(map)) => map.into_iter().collect(),
            Ok(Value::Null) => BTreeMap::new(),
            _ if call.function.arguments.trim().is_empty() => BTreeMap::new(),
            // Keep unparseable arguments so the tool reports a useful error.
            _ => BTreeMap::from([(
                "_raw".to_string(),
                Value::String(call.function.arguments.clone()),
            )]),
        };
        ToolCall {
            id: call.id.clone(),
            tool_name: call.function.name.clone(),
            arguments,
        }
    }
}

impl From<&Message> for WireMessage {
    fn from(msg: &Message) -> Self {
        Self {
            role: msg.role,
            content: msg.content.clone(),
            tool_calls: msg.tool_calls.iter().map(WireToolCall::from).collect(),
            tool_call_id: msg.tool_call_id.clone(),
        }
    }
}

impl From<&WireMessage> for Message {
    fn from(wire: &WireMessage) -> Self {
        let mut msg = Message::assistant(wire.content.clone());
        msg.role = wire.role;
        msg.tool_calls = wire.tool_calls.iter().map(ToolCall::from).collect();
        msg.tool_call_id = wire.tool_call_id.clone();
        msg
    }
}

/// Function-tool declaration in chat-completions form.
pub fn tool_declaration(schema: &ToolSchema) -> Value {
    let mut properties = serde_json::Map::new();
    let mut required = Vec::new();
    for param in &schema.parameters {
        properties.insert(
            param.name.clone(),
            serde_json::json!({ "type": param.kind, "description": param.description }),
        );
        if param.required {
            required.push(Value::String(param.name.clone()));
        }
    }
    serde_json::json!({
        "type": "function",
        "function": {
            "name": schema.name,
            "description": schema.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
            }
        }
    })
}
