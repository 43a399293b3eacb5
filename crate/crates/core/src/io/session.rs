use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Box3;
use crate::io::{read_bytes, write_atomic};
use crate::scalar::Real;

pub const SESSION_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxStatus {
    PreAnnotated,
    Confirmed,
    Edited,
    Created,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    BoxOpened,
    BoxConfirmed,
    BoxEdited,
    BoxCreated,
    BoxDeleted,
}

impl EventKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "box_opened" => EventKind::BoxOpened,
            "box_confirmed" => EventKind::BoxConfirmed,
            "box_edited" => EventKind::BoxEdited,
            "box_created" => EventKind::BoxCreated,
            "box_deleted" => EventKind::BoxDeleted,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SessionBox<T> {
    pub id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub status: BoxStatus,
    #[serde(flatten)]
    pub bbox: Box3<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEvent {
    pub kind: EventKind,
    pub box_id: String,
    /// Wall-clock seconds since the Unix epoch.
    pub timestamp: f64,
}

/// Annotator state for one frame: the current boxes plus the timing log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AnnotationSession<T> {
    pub frame_id: String,
    pub boxes: Vec<SessionBox<T>>,
    pub timing_events: Vec<TimingEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct SessionFile<T> {
    palf_session: u32,
    #[serde(flatten)]
    session: AnnotationSession<T>,
}

impl<T: Real> AnnotationSession<T> {
    pub fn new(frame_id: impl Into<String>) -> Self {
        AnnotationSession {
            frame_id: frame_id.into(),
            boxes: Vec::new(),
            timing_events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, b) in self.boxes.iter().enumerate() {
            if !seen.insert(b.id.as_str()) {
                return Err(Error::validation(
                    format!("boxes[{i}].id"),
                    format!("duplicate box id `{}`", b.id),
                ));
            }
            b.bbox.validate().map_err(|e| match e {
                Error::Validation { field, message } => {
                    Error::validation(format!("boxes[{i}].{field}"), message)
                }
                other => other,
            })?;
        }
        for (i, pair) in self.timing_events.windows(2).enumerate() {
            if pair[1].timestamp < pair[0].timestamp {
                return Err(Error::validation(
                    format!("timing_events[{}].timestamp", i + 1),
                    format!("{} precedes the previous event at {}", pair[1].timestamp, pair[0].timestamp),
                ));
            }
        }
        if let Some(i) = self.timing_events.iter().position(|ev| !ev.timestamp.is_finite()) {
            return Err(Error::validation(format!("timing_events[{i}].timestamp"), "non-finite"));
        }
        Ok(())
    }

    /// Appends an event, rejecting a timestamp earlier than the latest event.
    pub fn push_event(&mut self, event: TimingEvent) -> Result<()> {
        if !event.timestamp.is_finite() {
            return Err(Error::validation("timestamp", "non-finite"));
        }
        if let Some(prev) = self.timing_events.last() {
            if event.timestamp < prev.timestamp {
                return Err(Error::validation(
                    "timestamp",
                    format!("{} precedes the previous event at {}", event.timestamp, prev.timestamp),
                ));
            }
        }
        self.timing_events.push(event);
        Ok(())
    }

    /// Seconds between the first and the last timing event.
    pub fn timing_span(&self) -> Option<f64> {
        let first = self.timing_events.iter().map(|e| e.timestamp).reduce(f64::min)?;
        let last = self.timing_events.iter().map(|e| e.timestamp).reduce(f64::max)?;
        Some(last - first)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = SessionFile {
            palf_session: SESSION_VERSION,
            session: self.clone(),
        };
        let mut v = serde_json::to_vec_pretty(&file).expect("session serializes");
        v.push(b'\n');
        v
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::format(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        match raw.get("palf_session").and_then(|v| v.as_u64()) {
            Some(v) if v == SESSION_VERSION as u64 => {}
            Some(v) => return Err(Error::format("/palf_session", format!("unsupported version {v}"))),
            None => return Err(Error::format("/palf_session", "missing version field")),
        }
        let file: SessionFile<T> =
            serde_json::from_value(raw).map_err(|e| Error::format("/", e.to_string()))?;
        file.session.validate().map_err(|e| match e {
            Error::Validation { field, message } => Error::format(field, message),
            other => other,
        })?;
        Ok(file.session)
    }
}

/// Validates, then writes via temp file + rename.
pub fn save_session<T: Real>(session: &AnnotationSession<T>, path: impl AsRef<Path>) -> Result<()> {
    session.validate()?;
    write_atomic(path.as_ref(), &session.to_json_bytes())
}

pub fn load_session<T: Real>(path: impl AsRef<Path>) -> Result<AnnotationSession<T>> {
    AnnotationSession::from_json_bytes(&read_bytes(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sbox(id: &str, status: BoxStatus, x: f64) -> SessionBox<f64> {
        SessionBox {
            id: id.into(),
            class_label: "Car".into(),
            status,
            bbox: Box3::new([x, 1.0, -0.5], [4.0, 1.8, 1.5], 0.25).unwrap(),
        }
    }

    fn ev(kind: EventKind, id: &str, t: f64) -> TimingEvent {
        TimingEvent {
            kind,
            box_id: id.into(),
            timestamp: t,
        }
    }

    #[test]
    fn empty_session_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let s = AnnotationSession::<f64>::new("000001");
        save_session(&s, &p).unwrap();
        assert_eq!(load_session::<f64>(&p).unwrap(), s);
    }

    #[test]
    fn mixed_session_round_trips_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        let mut s = AnnotationSession::new("000002");
        s.boxes = vec![
            sbox("b2", BoxStatus::Confirmed, 10.0),
            sbox("b0", BoxStatus::PreAnnotated, 0.1),
            sbox("b1", BoxStatus::Created, -7.3),
        ];
        s.push_event(ev(EventKind::BoxOpened, "b2", 100.0)).unwrap();
        s.push_event(ev(EventKind::BoxConfirmed, "b2", 104.5)).unwrap();
        save_session(&s, &p).unwrap();
        let back = load_session::<f64>(&p).unwrap();
        assert_eq!(back, s);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"palf_session\": 1"));
        assert!(text.contains("\"pre_annotated\""));
    }

    #[test]
    fn duplicate_id_rejected_on_load() {
        let mut s = AnnotationSession::new("x");
        s.boxes = vec![sbox("a", BoxStatus::Confirmed, 1.0), sbox("b", BoxStatus::Edited, 2.0)];
        let tampered = String::from_utf8(s.to_json_bytes()).unwrap().replace("\"b\"", "\"a\"");
        let err = AnnotationSession::<f64>::from_json_bytes(tampered.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn version_and_garbage_rejected() {
        assert!(AnnotationSession::<f64>::from_json_bytes(b"{\"frame_id\":\"a\",\"boxes\":[],\"timing_events\":[]}").is_err());
        assert!(AnnotationSession::<f64>::from_json_bytes(b"{\"palf_session\":2}").is_err());
        assert!(AnnotationSession::<f64>::from_json_bytes(b"nonsense").is_err());
        let neg = br#"{"palf_session":1,"frame_id":"a","boxes":[{"id":"a","class":"Car","status":"edited","position":[0,0,0],"scale":[1,-1,1],"yaw":0}],"timing_events":[]}"#;
        assert!(AnnotationSession::<f64>::from_json_bytes(neg).is_err());
    }

    #[test]
    fn timing_monotonic() {
        let mut s = AnnotationSession::<f64>::new("f");
        s.push_event(ev(EventKind::BoxOpened, "a", 10.0)).unwrap();
        assert!(s.push_event(ev(EventKind::BoxOpened, "b", 5.0)).is_err());
        assert!(s.push_event(ev(EventKind::BoxEdited, "a", 9.0)).is_err());
        s.push_event(ev(EventKind::BoxEdited, "a", 10.0)).unwrap();
        s.push_event(ev(EventKind::BoxConfirmed, "b", 15.0)).unwrap();
        assert_eq!(s.timing_events.len(), 3);
        assert_eq!(s.timing_span(), Some(5.0));
        assert_eq!(EventKind::parse("foo"), None);
        assert_eq!(EventKind::parse("box_deleted"), Some(EventKind::BoxDeleted));
    }
}
