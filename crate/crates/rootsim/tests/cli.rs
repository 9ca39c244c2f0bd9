//! The binary end to end: golden JSON output, schema conformance, exit codes.

use std::path::PathBuf;
use std::process::Command;

use serde_json::Value as Json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rootsim"))
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(manifest_dir().join("tests/golden").join(name)).unwrap()
}

#[test]
fn json_matches_golden_torture_defensive() {
    let (code, out) = run(&["--run", "all", "--torture", "--defensive", "--format", "json"]);
    assert_eq!(code, 0);
    assert_eq!(out, golden("all_torture_defensive.jsonl"));
}

#[test]
fn json_matches_golden_plain_seed7() {
    let (code, out) = run(&["--run", "all", "--seed", "7", "--format", "json"]);
    assert_eq!(code, 0);
    assert_eq!(out, golden("all_plain_seed7.jsonl"));
}

/// Checks `value` against the subset of JSON Schema the report schema
/// uses: type, const, required, additionalProperties, properties, oneOf,
/// pattern (as a hex-digest check) and minimum.
fn conforms(schema: &Json, value: &Json) -> Result<(), String> {
    if let Some(options) = schema.get("oneOf").and_then(Json::as_array) {
        let ok = options.iter().filter(|s| conforms(s, value).is_ok()).count();
        return if ok == 1 { Ok(()) } else { Err(format!("{value} matches {ok} oneOf branches")) };
    }
    if let Some(c) = schema.get("const") {
        return if c == value { Ok(()) } else { Err(format!("{value} != {c}")) };
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Json::String(s) => vec![s.as_str()],
            Json::Array(a) => a.iter().filter_map(Json::as_str).collect(),
            _ => vec![],
        };
        let actual = match value {
            Json::Null => "null",
            Json::Bool(_) => "boolean",
            Json::Number(n) if n.is_i64() || n.is_u64() => "integer",
            Json::Number(_) => "number",
            Json::String(_) => "string",
            Json::Array(_) => "array",
            Json::Object(_) => "object",
        };
        if !types.contains(&actual) {
            return Err(format!("{value} is {actual}, expected {types:?}"));
        }
    }
    if let (Some(min), Some(n)) = (schema.get("minimum").and_then(Json::as_i64), value.as_i64()) {
        if n < min {
            return Err(format!("{n} < {min}"));
        }
    }
    if let (Some(_), Some(s)) = (schema.get("pattern"), value.as_str()) {
        if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(format!("{s} is not a hex digest"));
        }
    }
    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Json::as_object);
        for key in schema.get("required").and_then(Json::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("missing {key}"));
            }
        }
        for (key, v) in obj {
            match props.and_then(|p| p.get(key)) {
                Some(s) => conforms(s, v).map_err(|e| format!("{key}: {e}"))?,
                None if schema.get("additionalProperties") == Some(&Json::Bool(false)) => {
                    return Err(format!("unexpected {key}"))
                }
                None => {}
            }
        }
    }
    Ok(())
}

#[test]
fn reports_conform_to_documented_schema() {
    let schema_path = manifest_dir().join("../../docs/report.schema.json");
    let schema: Json = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    for file in ["all_torture_defensive.jsonl", "all_plain_seed7.jsonl"] {
        for line in golden(file).lines() {
            let v: Json = serde_json::from_str(line).unwrap();
            conforms(&schema, &v).unwrap_or_else(|e| panic!("{file}: {e}\n{line}"));
            let clean = v["outcome"]["kind"] == "clean";
            assert_eq!(clean, !v["result_digest"].is_null(), "{line}");
            if clean {
                assert_eq!(v["root_count_delta"], 0, "{line}");
            }
        }
    }
}

#[test]
fn schema_checker_rejects_bad_reports() {
    let schema: Json =
        serde_json::from_str(&std::fs::read_to_string(manifest_dir().join("../../docs/report.schema.json")).unwrap())
            .unwrap();
    let good: Json = serde_json::from_str(golden("all_plain_seed7.jsonl").lines().next().unwrap()).unwrap();
    assert!(conforms(&schema, &good).is_ok());
    let mut extra = good.clone();
    extra["extra"] = Json::Bool(true);
    assert!(conforms(&schema, &extra).is_err());
    let mut bad_outcome = good.clone();
    bad_outcome["outcome"] = serde_json::json!({"kind": "diagnostic", "error": "StaleValue"});
    assert!(conforms(&schema, &bad_outcome).is_err());
    let mut bad_digest = good;
    bad_digest["result_digest"] = Json::String("xyz".into());
    assert!(conforms(&schema, &bad_digest).is_err());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--list"]).0, 0);
    assert_eq!(run(&["--run", "triplet_buggy_legacy", "--torture", "--format", "json"]).0, 0);
    assert_eq!(run(&["--run", "all", "--defensive", "--torture"]).0, 0);
    assert_eq!(run(&["--run", "lock_release", "--semispace-words", "8"]).0, 1);
    assert_eq!(run(&["--run", "missing"]).0, 2);
    assert_eq!(run(&["--bogus"]).0, 2);
}

#[test]
fn human_output_is_a_table_with_summary() {
    let (code, out) = run(&["--run", "all", "--torture"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("scenario"));
    assert!(lines[1].starts_with("----"));
    assert!(out.contains("triplet_buggy_legacy"));
    let n = rootsim::list_scenarios().len();
    assert!(lines.last().unwrap().starts_with(&format!("{n}/{n} expectations met")));
}
