use std::io::Write;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Writes events either as text lines or as one JSON object per line.
pub struct Output<'a> {
    json: bool,
    out: &'a mut dyn Write,
}

impl<'a> Output<'a> {
    pub fn new(json: bool, out: &'a mut dyn Write) -> Self {
        Self { json, out }
    }

    pub fn is_json(&self) -> bool {
        self.json
    }

    /// `data` must serialize to a JSON object; an `event` field is added.
    pub fn event<T: Serialize>(
        &mut self,
        event: &str,
        data: &T,
        text: impl FnOnce() -> String,
    ) -> Result<(), CliError> {
        let line = if self.json {
            let mut obj = Map::new();
            obj.insert("event".into(), Value::String(event.into()));
            match serde_json::to_value(data).map_err(|e| CliError::Io(e.to_string()))? {
                Value::Object(fields) => obj.extend(fields),
                other => {
                    obj.insert("data".into(), other);
                }
            }
            Value::Object(obj).to_string()
        } else {
            text()
        };
        self.line(&line)
    }

    /// Text that only appears in text mode.
    pub fn text(&mut self, line: &str) -> Result<(), CliError> {
        if self.json {
            Ok(())
        } else {
            self.line(line)
        }
    }

    fn line(&mut self, line: &str) -> Result<(), CliError> {
        writeln!(self.out, "{line}")
            .and_then(|()| self.out.flush())
            .map_err(|e| CliError::io("stdout", e))
    }
}
