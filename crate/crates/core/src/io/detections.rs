//! Detection interchange JSON:
//!
//! ```json
//! {"frame_id": "000010",
//!  "boxes3d": [{"position": [x, y, z], "scale": [l, w, h], "yaw": r, "class": "Car", "score": 0.9}],
//!  "boxes2d": [{"rect": [xmin, ymin, xmax, ymax], "class": "Car", "score": 0.8}]}
//! ```
//!
//! Either list may be absent. Unknown fields are ignored.

use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{Box3, Rect};
use crate::io::{read_bytes, write_atomic, Loaded};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Detection3D<T> {
    pub bbox: Box3<T>,
    pub class_label: String,
    pub score: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection2D<T> {
    pub rect: Rect<T>,
    pub class_label: String,
    pub score: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionFile<T> {
    pub frame_id: Option<String>,
    pub boxes3d: Vec<Detection3D<T>>,
    pub boxes2d: Vec<Detection2D<T>>,
}

#[derive(Serialize)]
#[serde(bound = "T: Real")]
struct Wire3<'a, T> {
    position: [T; 3],
    scale: [T; 3],
    yaw: T,
    class: &'a str,
    score: T,
}

#[derive(Serialize)]
#[serde(bound = "T: Real")]
struct Wire2<'a, T> {
    rect: [T; 4],
    class: &'a str,
    score: T,
}

#[derive(Serialize)]
#[serde(bound = "T: Real")]
struct WireFile<'a, T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    frame_id: Option<&'a str>,
    boxes3d: Vec<Wire3<'a, T>>,
    boxes2d: Vec<Wire2<'a, T>>,
}

impl<T: Real> DetectionFile<T> {
    pub fn to_json_value(&self) -> Value {
        let wire = WireFile {
            frame_id: self.frame_id.as_deref(),
            boxes3d: self
                .boxes3d
                .iter()
                .map(|d| Wire3 {
                    position: d.bbox.position,
                    scale: d.bbox.scale,
                    yaw: d.bbox.yaw,
                    class: &d.class_label,
                    score: d.score,
                })
                .collect(),
            boxes2d: self
                .boxes2d
                .iter()
                .map(|d| Wire2 {
                    rect: d.rect.into(),
                    class: &d.class_label,
                    score: d.score,
                })
                .collect(),
        };
        serde_json::to_value(wire).expect("detections serialize")
    }
}

struct Walker {
    warnings: Vec<String>,
}

impl Walker {
    fn object<'v>(&self, v: &'v Value, ptr: &str) -> Result<&'v Map<String, Value>> {
        v.as_object()
            .ok_or_else(|| Error::format(ptr_or_root(ptr), "expected an object"))
    }

    fn field<'v>(&self, obj: &'v Map<String, Value>, ptr: &str, key: &str) -> Result<&'v Value> {
        obj.get(key)
            .ok_or_else(|| Error::format(ptr_or_root(ptr), format!("missing field `{key}`")))
    }

    fn number<T: Real>(&self, v: &Value, ptr: &str) -> Result<T> {
        v.as_f64()
            .and_then(T::from_f64)
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::format(ptr, "expected a finite number"))
    }

    fn array<T: Real, const N: usize>(&self, v: &Value, ptr: &str) -> Result<[T; N]> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::format(ptr, format!("expected an array of {N} numbers")))?;
        if arr.len() != N {
            return Err(Error::format(
                ptr,
                format!("expected {N} numbers, found {}", arr.len()),
            ));
        }
        let mut out = [T::zero(); N];
        for (k, item) in arr.iter().enumerate() {
            out[k] = self.number(item, &format!("{ptr}/{k}"))?;
        }
        Ok(out)
    }

    fn class(&self, obj: &Map<String, Value>, ptr: &str) -> Result<String> {
        let v = self.field(obj, ptr, "class")?;
        v.as_str()
            .map(str::to_owned)
            .ok_or_else(|| Error::format(format!("{ptr}/class"), "expected a string"))
    }

    fn score<T: Real>(&mut self, obj: &Map<String, Value>, ptr: &str) -> Result<T> {
        let sptr = format!("{ptr}/score");
        let raw: T = self.number(self.field(obj, ptr, "score")?, &sptr)?;
        let clamped = raw.max(T::zero()).min(T::one());
        if clamped != raw {
            self.warnings
                .push(format!("{sptr}: score {raw} clamped to {clamped}"));
        }
        Ok(clamped)
    }

    fn list<'v>(&self, root: &'v Map<String, Value>, key: &str) -> Result<&'v [Value]> {
        match root.get(key) {
            None | Some(Value::Null) => Ok(&[]),
            Some(Value::Array(a)) => Ok(a),
            Some(_) => Err(Error::format(format!("/{key}"), "expected an array")),
        }
    }
}

fn ptr_or_root(ptr: &str) -> String {
    if ptr.is_empty() {
        "/".to_owned()
    } else {
        ptr.to_owned()
    }
}

fn as_format(ptr: String, e: Error) -> Error {
    match e {
        Error::Validation { field, message } => Error::Format {
            location: ptr,
            message: format!("{field}: {message}"),
        },
        other => other,
    }
}

/// Parses the detection interchange JSON. Errors carry a JSON pointer to the
/// offending element; out-of-range scores are clamped into `[0, 1]` with a warning.
pub fn parse_detections<T: Real>(bytes: &[u8]) -> Result<Loaded<DetectionFile<T>>> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| {
        Error::format(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    let mut w = Walker {
        warnings: Vec::new(),
    };
    let obj = w.object(&root, "")?;
    let frame_id = match obj.get("frame_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Error::format("/frame_id", "expected a string")),
    };

    let mut boxes3d = Vec::new();
    for (i, item) in w.list(obj, "boxes3d")?.iter().enumerate() {
        let ptr = format!("/boxes3d/{i}");
        let o = w.object(item, &ptr)?;
        let position = w.array::<T, 3>(w.field(o, &ptr, "position")?, &format!("{ptr}/position"))?;
        let scale = w.array::<T, 3>(w.field(o, &ptr, "scale")?, &format!("{ptr}/scale"))?;
        let yaw = w.number::<T>(w.field(o, &ptr, "yaw")?, &format!("{ptr}/yaw"))?;
        let bbox = Box3::new(position, scale, yaw).map_err(|e| as_format(format!("{ptr}/scale"), e))?;
        let class_label = w.class(o, &ptr)?;
        let score = w.score(o, &ptr)?;
        boxes3d.push(Detection3D {
            bbox,
            class_label,
            score,
        });
    }

    let mut boxes2d = Vec::new();
    for (i, item) in w.list(obj, "boxes2d")?.iter().enumerate() {
        let ptr = format!("/boxes2d/{i}");
        let o = w.object(item, &ptr)?;
        let rptr = format!("{ptr}/rect");
        let [a, b, c, d] = w.array::<T, 4>(w.field(o, &ptr, "rect")?, &rptr)?;
        let rect = Rect::new(a, b, c, d).map_err(|e| as_format(rptr, e))?;
        let class_label = w.class(o, &ptr)?;
        let score = w.score(o, &ptr)?;
        boxes2d.push(Detection2D {
            rect,
            class_label,
            score,
        });
    }

    Ok(Loaded {
        value: DetectionFile {
            frame_id,
            boxes3d,
            boxes2d,
        },
        warnings: w.warnings,
    })
}

pub fn load_detections<T: Real>(path: impl AsRef<Path>) -> Result<Loaded<DetectionFile<T>>> {
    let path = path.as_ref();
    parse_detections(&read_bytes(path)?)
}

pub fn save_detections<T: Real>(path: impl AsRef<Path>, file: &DetectionFile<T>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(&file.to_json_value()).expect("json");
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Loaded<DetectionFile<f64>>> {
        parse_detections(s.as_bytes())
    }

    fn location(e: Error) -> String {
        match e {
            Error::Format { location, .. } => location,
            other => panic!("expected format error, got {other}"),
        }
    }

    #[test]
    fn empty_list() {
        let l = parse(r#"{"boxes3d":[]}"#).unwrap();
        assert!(l.value.boxes3d.is_empty() && l.value.boxes2d.is_empty());
        assert!(parse("{}").unwrap().value.boxes3d.is_empty());
    }

    #[test]
    fn one_box_fields_preserved() {
        let l = parse(
            r#"{"frame_id":"000010","boxes3d":[{"position":[10,0,-1],"scale":[4,1.8,1.6],"yaw":0.1,"class":"Car","score":0.9}]}"#,
        )
        .unwrap();
        let d = &l.value.boxes3d[0];
        assert_eq!(l.value.frame_id.as_deref(), Some("000010"));
        assert_eq!(d.bbox.position, [10.0, 0.0, -1.0]);
        assert_eq!(d.bbox.scale, [4.0, 1.8, 1.6]);
        assert_eq!(d.bbox.yaw, 0.1);
        assert_eq!(d.class_label, "Car");
        assert_eq!(d.score, 0.9);
        assert!(l.warnings.is_empty());
    }

    #[test]
    fn score_clamped_with_warning() {
        let l = parse(r#"{"boxes2d":[{"rect":[0,0,10,10],"class":"Car","score":1.7}]}"#).unwrap();
        assert_eq!(l.value.boxes2d[0].score, 1.0);
        assert_eq!(l.warnings.len(), 1);
        assert!(l.warnings[0].starts_with("/boxes2d/0/score"));
    }

    #[test]
    fn errors_point_at_element() {
        let e = parse(r#"{"boxes3d":[{"position":[1,2,3],"scale":[1,1,1],"yaw":0,"class":"Car","score":1},{"position":[1,2],"scale":[1,1,1],"yaw":0,"class":"Car","score":1}]}"#).unwrap_err();
        assert_eq!(location(e), "/boxes3d/1/position");
        let e = parse(r#"{"boxes3d":[{"position":[1,2,3],"scale":[1,-1,1],"yaw":0,"class":"Car","score":1}]}"#).unwrap_err();
        assert_eq!(location(e), "/boxes3d/0/scale");
        let e = parse(r#"{"boxes2d":[{"rect":[5,0,1,1],"class":"Car","score":1}]}"#).unwrap_err();
        assert_eq!(location(e), "/boxes2d/0/rect");
        let e = parse(r#"{"boxes2d":[{"rect":[0,0,1,1],"score":1}]}"#).unwrap_err();
        assert_eq!(location(e), "/boxes2d/0");
        let e = parse(r#"{"boxes3d":{}}"#).unwrap_err();
        assert_eq!(location(e), "/boxes3d");
        assert!(parse("[1,2").is_err());
        assert_eq!(location(parse("[]").unwrap_err()), "/");
    }

    #[test]
    fn serialized_form_parses_back() {
        let l = parse(
            r#"{"frame_id":"a","boxes3d":[{"position":[1.25,-3,0.5],"scale":[4,2,1.5],"yaw":-0.7,"class":"Car","score":0.75}],"boxes2d":[{"rect":[1,2,30,40.5],"class":"Van","score":0.5}]}"#,
        )
        .unwrap();
        let bytes = serde_json::to_vec(&l.value.to_json_value()).unwrap();
        assert_eq!(parse_detections::<f64>(&bytes).unwrap().value, l.value);
    }
}
