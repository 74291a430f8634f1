use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One round of user feedback, as appended to a session's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub iter: usize,
    pub shown: Vec<String>,
    pub similar: Vec<String>,
    /// Milliseconds since the Unix epoch; zero where no clock is available.
    pub timestamp_ms: u64,
    pub trained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

pub fn write_events_jsonl<W: Write>(mut w: W, events: &[FeedbackEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io("<event log>", e))?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<FeedbackEvent>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<event log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub(crate) fn now_ms() -> u64 {
    #[cfg(not(target_arch = "wasm32"))]
    {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
    #[cfg(target_arch = "wasm32")]
    {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let events = vec![
            FeedbackEvent {
                iter: 0,
                shown: vec!["a".into(), "b".into()],
                similar: vec!["a".into()],
                timestamp_ms: 12,
                trained: false,
                loss: None,
            },
            FeedbackEvent {
                iter: 1,
                shown: vec!["c".into()],
                similar: vec![],
                timestamp_ms: 13,
                trained: true,
                loss: Some(-0.25),
            },
        ];
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &events).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(read_events_jsonl(&buf[..]).unwrap(), events);
    }
}
