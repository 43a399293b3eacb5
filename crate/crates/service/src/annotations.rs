//! Field-by-field parsing of submitted boxes, so one bad box yields a
//! diagnostic naming its field instead of a bare deserialization error.

use std::collections::HashSet;

use palf_core::io::BoxStatus;
use palf_core::{Box3D, SessionBox};
use serde_json::Value;

use crate::error::Diagnostic;
use crate::ServiceError;

fn diag(index: usize, id: Option<&str>, field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        index: Some(index),
        id: id.map(str::to_string),
        field: field.into(),
        message: message.into(),
    }
}

fn triple(v: Option<&Value>) -> Result<[f64; 3], String> {
    let arr = v.and_then(Value::as_array).ok_or("expected an array of 3 numbers")?;
    if arr.len() != 3 {
        return Err(format!("expected 3 numbers, got {}", arr.len()));
    }
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = x.as_f64().ok_or("expected an array of 3 numbers")?;
    }
    Ok(out)
}

fn parse_box(index: usize, v: &Value) -> Result<SessionBox, Vec<Diagnostic>> {
    let Some(obj) = v.as_object() else {
        return Err(vec![diag(index, None, "", "box must be a JSON object")]);
    };
    let id = obj.get("id").and_then(Value::as_str);
    let mut diags = Vec::new();
    if id.is_none_or(str::is_empty) {
        diags.push(diag(index, None, "id", "expected a non-empty string"));
    }
    let class = obj.get("class").and_then(Value::as_str);
    if class.is_none() {
        diags.push(diag(index, id, "class", "expected a string"));
    }
    let status = match obj.get("status") {
        None => Some(BoxStatus::Edited),
        Some(s) => serde_json::from_value::<BoxStatus>(s.clone()).ok(),
    };
    if status.is_none() {
        diags.push(diag(
            index,
            id,
            "status",
            "expected one of pre_annotated, confirmed, edited, created",
        ));
    }
    let position = triple(obj.get("position")).map_err(|m| diags.push(diag(index, id, "position", m)));
    let scale = triple(obj.get("scale")).map_err(|m| diags.push(diag(index, id, "scale", m)));
    let yaw = obj.get("yaw").and_then(Value::as_f64);
    if yaw.is_none() {
        diags.push(diag(index, id, "yaw", "expected a number"));
    }
    if let (Ok(position), Ok(scale), Some(yaw)) = (position, scale, yaw) {
        match Box3D::new(position, scale, yaw) {
            Ok(bbox) if diags.is_empty() => {
                return Ok(SessionBox {
                    id: id.unwrap_or_default().to_string(),
                    class_label: class.unwrap_or_default().to_string(),
                    status: status.unwrap_or(BoxStatus::Edited),
                    bbox,
                })
            }
            Ok(_) => {}
            Err(palf_core::Error::Validation { field, message }) => diags.push(diag(index, id, field, message)),
            Err(e) => diags.push(diag(index, id, "", e.to_string())),
        }
    }
    Err(diags)
}

/// Parses `{"boxes": [...]}`, collecting every problem before failing.
pub(crate) fn parse_annotations(body: &[u8]) -> Result<Vec<SessionBox>, ServiceError> {
    let v: Value = serde_json::from_slice(body).map_err(|e| ServiceError::validation(format!("malformed JSON: {e}")))?;
    let items = v
        .get("boxes")
        .and_then(Value::as_array)
        .ok_or_else(|| ServiceError::validation("expected an object with a `boxes` array"))?;
    let mut boxes = Vec::with_capacity(items.len());
    let mut diagnostics = Vec::new();
    let mut seen = HashSet::new();
    for (i, item) in items.iter().enumerate() {
        match parse_box(i, item) {
            Ok(b) => {
                if !seen.insert(b.id.clone()) {
                    diagnostics.push(diag(i, Some(&b.id), "id", "duplicate box id"));
                }
                boxes.push(b);
            }
            Err(d) => diagnostics.extend(d),
        }
    }
    if diagnostics.is_empty() {
        Ok(boxes)
    } else {
        Err(ServiceError::Validation {
            message: format!("{} problem(s) in submitted boxes", diagnostics.len()),
            diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_width_names_the_field() {
        let body = br#"{"boxes":[
            {"id":"a","class":"Car","position":[1,2,3],"scale":[4,1.8,1.5],"yaw":0},
            {"id":"b","class":"Car","position":[1,2,3],"scale":[4,-1,1.5],"yaw":0}
        ]}"#;
        let Err(ServiceError::Validation { diagnostics, .. }) = parse_annotations(body) else {
            panic!("expected a validation error");
        };
        assert_eq!(diagnostics.len(), 1);
        assert_eq!(diagnostics[0].index, Some(1));
        assert_eq!(diagnostics[0].id.as_deref(), Some("b"));
        assert_eq!(diagnostics[0].field, "scale.width");
    }

    #[test]
    fn collects_all_problems() {
        let body = br#"{"boxes":[{"id":"a","position":[1,2],"scale":[4,1,1],"yaw":"x","status":"odd"},
                                 {"id":"a","class":"Car","position":[0,0,0],"scale":[1,1,1],"yaw":0},
                                 {"id":"a","class":"Car","position":[0,0,0],"scale":[1,1,1],"yaw":0}]}"#;
        let Err(ServiceError::Validation { diagnostics, .. }) = parse_annotations(body) else {
            panic!("expected a validation error");
        };
        let fields: Vec<&str> = diagnostics.iter().map(|d| d.field.as_str()).collect();
        assert_eq!(fields, ["class", "status", "position", "yaw", "id"]);
    }

    #[test]
    fn status_defaults_to_edited() {
        let boxes =
            parse_annotations(br#"{"boxes":[{"id":"a","class":"Van","position":[0,0,0],"scale":[1,1,1],"yaw":0.5}]}"#)
                .unwrap();
        assert_eq!(boxes[0].status, BoxStatus::Edited);
        assert_eq!(boxes[0].bbox.yaw, 0.5);
    }
}
