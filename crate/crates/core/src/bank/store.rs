//! On-disk bank format: a directory holding `bank.json` plus the `.tex`
//! fragment files it references by relative path.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{validate_bank, Bank, BankError, Finding, Problem, ValidationReport};

pub const MANIFEST_FILE: &str = "bank.json";
pub const SCHEMA_VERSION: u32 = 1;
const LOCK_FILE: &str = ".examforge.lock";

const TOP_LEVEL_KEYS: [&str; 3] = ["schema_version", "subareas", "problems"];
const PROBLEM_KEYS: [&str; 9] = [
    "id",
    "subarea",
    "points",
    "ilo_refs",
    "solo_level",
    "difficulty",
    "statement_path",
    "solution_path",
    "usage_dates",
];

/// Advisory exclusive lock on a bank directory. Released on drop.
#[derive(Debug)]
pub struct BankLock {
    file: File,
}

impl BankLock {
    /// Blocks until the lock on `dir` is held.
    pub fn acquire(dir: &Path) -> Result<Self, BankError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        file.lock().map_err(|e| io_err(&path, e))?;
        Ok(Self { file })
    }
}

impl Drop for BankLock {
    fn drop(&mut self) {
        let _ = self.file.unlock();
    }
}

fn io_err(path: &Path, source: io::Error) -> BankError {
    BankError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(location: impl Into<String>, message: impl Into<String>) -> BankError {
    BankError::Malformed {
        location: location.into(),
        message: message.into(),
    }
}

/// Accepts either the bank directory or the path of its `bank.json`.
fn bank_dir(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

/// Loads and materializes a bank. Structural problems (duplicate ids,
/// dangling fragments, malformed JSON, unknown schema) are errors; content
/// rule violations are left for [`validate_bank`].
pub fn load_bank(path: &Path) -> Result<Bank, BankError> {
    read_bank(&bank_dir(path), true)
}

/// Reads a bank leniently and validates it, turning load failures into
/// report entries. Returns the bank when it could be read at all.
pub fn inspect_bank(path: &Path) -> (Option<Bank>, ValidationReport) {
    match read_bank(&bank_dir(path), false) {
        Ok(bank) => {
            let report = validate_bank(&bank);
            (Some(bank), report)
        }
        Err(err) => {
            let code = match &err {
                BankError::MissingManifest(_) => "missing_manifest",
                BankError::UnknownSchema { .. } => "unknown_schema",
                BankError::Io { .. } => "io",
                _ => "malformed",
            };
            let report = ValidationReport {
                errors: vec![Finding::new(None, code, err.to_string())],
                warnings: vec![],
            };
            (None, report)
        }
    }
}

fn read_bank(dir: &Path, strict: bool) -> Result<Bank, BankError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = match fs::read(&manifest_path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(BankError::MissingManifest(
                manifest_path.display().to_string(),
            ))
        }
        Err(e) => return Err(io_err(&manifest_path, e)),
    };
    let mut bank = parse_manifest(&bytes)?;
    bank.disk_digest = Some(sha256_hex(&bytes));

    if strict {
        let mut seen = std::collections::HashSet::new();
        for p in &bank.problems {
            if !seen.insert(p.id.as_str()) {
                return Err(BankError::DuplicateId(p.id.clone()));
            }
        }
    }

    let mut fragments = BTreeMap::new();
    for p in &bank.problems {
        for rel in [&p.statement_path, &p.solution_path] {
            if fragments.contains_key(rel) {
                continue;
            }
            let full = dir.join(rel);
            match fs::read_to_string(&full) {
                Ok(text) => {
                    fragments.insert(rel.clone(), text);
                }
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    if strict {
                        return Err(BankError::DanglingFragment {
                            problem_id: p.id.clone(),
                            path: rel.clone(),
                        });
                    }
                    bank.read_findings.push(Finding::new(
                        Some(&p.id),
                        "dangling_fragment",
                        format!("fragment \"{rel}\" does not exist"),
                    ));
                }
                Err(e) => return Err(io_err(&full, e)),
            }
        }
    }
    bank.fragments = fragments;
    Ok(bank)
}

fn parse_manifest(bytes: &[u8]) -> Result<Bank, BankError> {
    let root: Value = serde_json::from_slice(bytes).map_err(|e| {
        malformed(
            format!("{MANIFEST_FILE}:{}:{}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let Value::Object(mut root) = root else {
        return Err(malformed(MANIFEST_FILE, "top level must be an object"));
    };

    let mut findings = Vec::new();
    for key in root.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            findings.push(Finding::new(
                None,
                "unknown_key",
                format!("unknown top-level key \"{key}\""),
            ));
        }
    }
    for key in TOP_LEVEL_KEYS {
        if !root.contains_key(key) {
            return Err(malformed(
                MANIFEST_FILE,
                format!("missing required key \"{key}\""),
            ));
        }
    }

    let version = root["schema_version"]
        .as_i64()
        .ok_or_else(|| malformed("schema_version", "must be an integer"))?;
    if version != i64::from(SCHEMA_VERSION) {
        return Err(BankError::UnknownSchema {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }

    let subareas: BTreeMap<String, String> = serde_json::from_value(root["subareas"].take())
        .map_err(|e| malformed("subareas", e.to_string()))?;

    let Value::Array(items) = root["problems"].take() else {
        return Err(malformed("problems", "must be an array"));
    };
    let mut problems = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let location = format!("problems[{i}]");
        let Value::Object(mut obj) = item else {
            return Err(malformed(location, "problem must be an object"));
        };
        let id_hint = obj.get("id").and_then(Value::as_str).map(str::to_owned);
        let unknown: Vec<String> = obj
            .keys()
            .filter(|k| !PROBLEM_KEYS.contains(&k.as_str()))
            .cloned()
            .collect();
        for key in unknown {
            obj.remove(&key);
            findings.push(Finding::new(
                id_hint.as_deref(),
                "unknown_key",
                format!("{location}: unknown key \"{key}\""),
            ));
        }
        if let Some(missing) = PROBLEM_KEYS.iter().find(|k| !obj.contains_key(**k)) {
            return Err(malformed(
                location,
                format!("missing required key \"{missing}\""),
            ));
        }
        let problem: Problem = serde_json::from_value(Value::Object(obj))
            .map_err(|e| malformed(location.clone(), e.to_string()))?;
        for (field, rel) in [
            ("statement_path", &problem.statement_path),
            ("solution_path", &problem.solution_path),
        ] {
            check_relative(rel).map_err(|m| malformed(format!("{location}.{field}"), m))?;
        }
        problems.push(problem);
    }

    Ok(Bank {
        schema_version: SCHEMA_VERSION,
        subareas,
        problems,
        fragments: BTreeMap::new(),
        read_findings: findings,
        disk_digest: None,
    })
}

fn check_relative(rel: &str) -> Result<(), String> {
    let path = Path::new(rel);
    if rel.is_empty() {
        return Err("fragment path is empty".into());
    }
    if path
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(format!(
            "fragment path \"{rel}\" must be relative and stay inside the bank"
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    schema_version: u32,
    subareas: &'a BTreeMap<String, String>,
    problems: &'a [Problem],
}

/// Canonical `bank.json` bytes: two-space indentation, keys in schema order,
/// subareas sorted by code, trailing newline.
pub(crate) fn manifest_bytes(bank: &Bank) -> Vec<u8> {
    let out = ManifestOut {
        schema_version: bank.schema_version,
        subareas: &bank.subareas,
        problems: &bank.problems,
    };
    let mut bytes = serde_json::to_vec_pretty(&out).expect("bank manifest serializes");
    bytes.push(b'\n');
    bytes
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `sha256:<hex>` over the canonical manifest and every fragment.
pub fn bank_fingerprint(bank: &Bank) -> String {
    let mut hasher = Sha256::new();
    hasher.update(manifest_bytes(bank));
    for (path, text) in &bank.fragments {
        hasher.update(path.as_bytes());
        hasher.update([0u8]);
        hasher.update((text.len() as u64).to_le_bytes());
        hasher.update(text.as_bytes());
    }
    format!("sha256:{}", hex(&hasher.finalize()))
}

/// Persists `bank` under `dir`, holding the directory lock while writing.
///
/// Refuses to overwrite a manifest that changed since `bank` was loaded
/// (or any existing manifest, for a bank that was never loaded).
pub fn save_bank(bank: &mut Bank, dir: &Path) -> Result<(), BankError> {
    let _lock = BankLock::acquire(dir)?;
    save_locked(bank, dir)
}

fn save_locked(bank: &mut Bank, dir: &Path) -> Result<(), BankError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let on_disk = match fs::read(&manifest_path) {
        Ok(b) => Some(sha256_hex(&b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(&manifest_path, e)),
    };
    if on_disk.is_some() && on_disk != bank.disk_digest {
        return Err(BankError::Conflict);
    }

    for (rel, text) in &bank.fragments {
        check_relative(rel).map_err(|m| malformed(rel.clone(), m))?;
        let full = dir.join(rel);
        if fs::read_to_string(&full).is_ok_and(|cur| &cur == text) {
            continue;
        }
        write_atomic(&full, text.as_bytes())?;
    }
    let bytes = manifest_bytes(bank);
    write_atomic(&manifest_path, &bytes)?;
    bank.disk_digest = Some(sha256_hex(&bytes));
    Ok(())
}

/// Load-modify-save under the directory lock. `apply` sees the current
/// on-disk bank and returns the replacement plus a result value.
pub fn update_bank<T, E>(
    dir: &Path,
    apply: impl FnOnce(&Bank) -> Result<(Bank, T), E>,
) -> Result<T, E>
where
    E: From<BankError>,
{
    let dir = bank_dir(dir);
    let _lock = BankLock::acquire(&dir)?;
    let current = read_bank(&dir, true)?;
    let (mut next, value) = apply(&current)?;
    next.disk_digest = current.disk_digest.clone();
    save_locked(&mut next, &dir)?;
    Ok(value)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BankError> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = parent.join(format!(".{file_name}.tmp"));
    let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}
