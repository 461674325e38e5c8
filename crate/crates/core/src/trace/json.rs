//! `.trace.json`: an array of `{"state": {...}}` and `{"event": {...}}`.

use super::{Entry, Event, State, Trace};
use num_bigint::BigInt;
use serde_json::{json, Map, Number, Value};
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("invalid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("entry {index}: {msg}")]
    Shape { index: usize, msg: String },
}

fn num(v: &BigInt) -> Value {
    Value::Number(Number::from_str(&v.to_string()).expect("integer literal"))
}

fn entry_json(e: &Entry) -> Value {
    match e {
        Entry::State(s) => {
            let m: Map<String, Value> = s.0.iter().map(|(k, v)| (k.clone(), num(v))).collect();
            json!({ "state": m })
        }
        Entry::Event(ev) => {
            let body = match ev {
                Event::Call { proc, arg, id } => {
                    json!({"kind": "callEv", "proc": proc, "arg": num(arg), "id": id})
                }
                Event::Ret { val } => json!({"kind": "retEv", "val": num(val)}),
                Event::Push { proc, id } => json!({"kind": "pushEv", "proc": proc, "id": id}),
                Event::Pop { proc, id } => json!({"kind": "popEv", "proc": proc, "id": id}),
            };
            json!({ "event": body })
        }
    }
}

pub fn trace_to_json(t: &Trace) -> Value {
    Value::Array(t.0.iter().map(entry_json).collect())
}

/// One entry per line; parsing and re-serializing reproduces the bytes.
pub fn trace_to_json_string(t: &Trace) -> String {
    let mut out = String::from("[\n");
    for (i, e) in t.0.iter().enumerate() {
        out.push_str("  ");
        out.push_str(&entry_json(e).to_string());
        if i + 1 < t.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]\n");
    out
}

fn get_int(o: &Map<String, Value>, key: &str, index: usize) -> Result<BigInt, JsonError> {
    match o.get(key) {
        Some(Value::Number(n)) => BigInt::from_str(&n.to_string())
            .map_err(|_| JsonError::Shape { index, msg: format!("`{key}` must be an integer") }),
        _ => Err(JsonError::Shape { index, msg: format!("missing integer field `{key}`") }),
    }
}

fn get_id(o: &Map<String, Value>, index: usize) -> Result<u64, JsonError> {
    o.get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| JsonError::Shape { index, msg: "missing natural field `id`".into() })
}

fn get_proc(o: &Map<String, Value>, index: usize) -> Result<String, JsonError> {
    o.get("proc")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| JsonError::Shape { index, msg: "missing string field `proc`".into() })
}

pub fn trace_from_json(v: &Value) -> Result<Trace, JsonError> {
    let arr = v
        .as_array()
        .ok_or_else(|| JsonError::Shape { index: 0, msg: "top level must be an array".into() })?;
    let mut out = Vec::with_capacity(arr.len());
    for (index, item) in arr.iter().enumerate() {
        let obj = item
            .as_object()
            .filter(|o| o.len() == 1)
            .ok_or_else(|| JsonError::Shape { index, msg: "entry must be a one-key object".into() })?;
        if let Some(s) = obj.get("state") {
            let m = s
                .as_object()
                .ok_or_else(|| JsonError::Shape { index, msg: "state must be an object".into() })?;
            let mut b = BTreeMap::new();
            for k in m.keys() {
                b.insert(k.clone(), get_int(m, k, index)?);
            }
            out.push(Entry::State(State(b)));
        } else if let Some(e) = obj.get("event") {
            let o = e
                .as_object()
                .ok_or_else(|| JsonError::Shape { index, msg: "event must be an object".into() })?;
            let ev = match o.get("kind").and_then(Value::as_str) {
                Some("callEv") => Event::Call {
                    proc: get_proc(o, index)?,
                    arg: get_int(o, "arg", index)?,
                    id: get_id(o, index)?,
                },
                Some("retEv") => Event::Ret { val: get_int(o, "val", index)? },
                Some("pushEv") => Event::Push { proc: get_proc(o, index)?, id: get_id(o, index)? },
                Some("popEv") => Event::Pop { proc: get_proc(o, index)?, id: get_id(o, index)? },
                _ => return Err(JsonError::Shape { index, msg: "unknown event kind".into() }),
            };
            out.push(Entry::Event(ev));
        } else {
            return Err(JsonError::Shape { index, msg: "expected `state` or `event`".into() });
        }
    }
    Ok(Trace(out))
}

pub fn trace_from_json_str(s: &str) -> Result<Trace, JsonError> {
    trace_from_json(&serde_json::from_str(s)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bytes() {
        let s = State::from_pairs([("x", 0), ("res0", 1)]);
        let big: BigInt = BigInt::from_str("123456789012345678901234567890").unwrap();
        let t = Trace(vec![
            Entry::State(s.clone()),
            Entry::Event(Event::Call { proc: "m".into(), arg: big, id: 0 }),
            Entry::State(s.clone()),
            Entry::Event(Event::Ret { val: (-3).into() }),
            Entry::State(s),
        ]);
        let text = trace_to_json_string(&t);
        let back = trace_from_json_str(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(trace_to_json_string(&back), text);
        assert!(text.contains("\"res0\":1"));
    }
}
