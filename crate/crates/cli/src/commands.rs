use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use examforge::bank::{inspect_bank, load_bank, query_problems, update_bank, ProblemFilter};
use examforge::composer::{compile_tex, course_meta, render_exam, render_solutions};
use examforge::selector::{Blueprint, Slot};
use examforge::session::{default_session_id, Session, SessionError, SessionStore};
use serde_json::json;

use crate::{output, CmdResult, Failure, Format, NewArgs, RenderArgs};

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("values serialize")
    );
}

fn store(bank_dir: &Path) -> SessionStore {
    SessionStore::for_bank(&bank_root(bank_dir))
}

/// The bank directory, given either it or its manifest path.
fn bank_root(path: &Path) -> PathBuf {
    if path.is_file() {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

pub fn bank_validate(path: &Path, fmt: Format) -> CmdResult {
    let (bank, report) = inspect_bank(path);
    match fmt {
        Format::Json => print_json(&json!({
            "ok": report.is_ok(),
            "problems": bank.as_ref().map(|b| b.problems.len()),
            "errors": report.errors,
            "warnings": report.warnings,
        })),
        Format::Text => print!("{}", output::report(&report, bank.as_ref())),
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(Failure::Status(1))
    }
}

pub fn bank_list(path: &Path, filter: ProblemFilter, fmt: Format) -> CmdResult {
    let bank = load_bank(path)?;
    let found = query_problems(&bank, &filter)?;
    match fmt {
        Format::Json => print_json(&found),
        Format::Text => print!(
            "{}",
            output::table(
                &["id", "subarea", "points", "SOLO", "difficulty", "last used"],
                &output::problem_rows(found),
                &[2, 3, 4],
            )
        ),
    }
    Ok(())
}

pub fn exam_new(args: NewArgs, fmt: Format) -> CmdResult {
    let bank = load_bank(&args.bank.path)?;
    let blueprint = Blueprint {
        slots: args
            .slots
            .iter()
            .enumerate()
            .map(|(i, code)| Slot {
                slot_index: i + 1,
                subarea: code.trim().to_owned(),
            })
            .collect(),
        target_points: args.points,
        recency_window_days: args.recency_days,
        difficulty_band: args.difficulty,
        exam_date: args.date,
    };
    let base_seed = args.seed.unwrap_or_else(rand::random);
    let explicit = args.id.is_some();
    let id = args
        .id
        .unwrap_or_else(|| default_session_id(&blueprint, base_seed));
    let mut session = Session::new(id, blueprint, &bank, base_seed)?;
    let store = store(&args.bank.path);
    if explicit {
        store.create(&session)?;
    } else {
        store.create_unique(&mut session)?;
    }
    match fmt {
        Format::Json => print_json(&json!({
            "session_id": session.id,
            "base_seed": session.base_seed.to_string(),
            "slots": session.blueprint.slots.len(),
            "target_points": session.blueprint.target_points,
        })),
        Format::Text => {
            println!("session {}", session.id);
            println!("seed    {}", session.base_seed);
        }
    }
    Ok(())
}

pub fn exam_step(
    bank_path: &Path,
    id: &str,
    pins: &[(usize, String)],
    unpins: &[usize],
    fmt: Format,
) -> CmdResult {
    if let Some((slot, _)) = pins.iter().find(|(slot, _)| unpins.contains(slot)) {
        return Err(Failure::Usage(format!(
            "slot {slot} is both pinned and unpinned"
        )));
    }
    let bank = load_bank(bank_path)?;
    let (step, target) = store(bank_path).update(id, |s| {
        let mut dv = s.current_decision_vector();
        for slot in unpins {
            dv = dv.unpinned(*slot)?;
        }
        for (slot, pid) in pins {
            dv = dv.pinned(*slot, pid)?;
        }
        let step = s.step(&bank, dv)?.clone();
        Ok::<_, SessionError>((step, s.blueprint.target_points))
    })?;
    match fmt {
        Format::Json => print_json(&json!({ "session_id": id, "step": step })),
        Format::Text => print!("{}", output::step(&step, &bank, target)),
    }
    Ok(())
}

pub fn exam_accept(bank_path: &Path, id: &str, fmt: Format) -> CmdResult {
    let dir = bank_root(bank_path);
    let session = store(bank_path).update(id, |s| {
        update_bank(&dir, |bank| {
            let next = s.accept(bank)?;
            Ok::<_, SessionError>((next, s.clone()))
        })
    })?;
    let draft = session
        .latest_draft()
        .expect("accepted sessions have a draft");
    match fmt {
        Format::Json => print_json(&json!({
            "session_id": session.id,
            "status": session.status,
            "assignment": draft.assignment,
            "exam_date": session.exam_date(),
        })),
        Format::Text => {
            println!("accepted {}", session.id);
            println!(
                "recorded {} as used on {}",
                draft.assignment.join(" "),
                session.exam_date()
            );
        }
    }
    Ok(())
}

pub fn exam_abandon(bank_path: &Path, id: &str, fmt: Format) -> CmdResult {
    let status = store(bank_path).update(id, |s| {
        s.abandon()?;
        Ok(s.status)
    })?;
    match fmt {
        Format::Json => print_json(&json!({ "session_id": id, "status": status })),
        Format::Text => println!("abandoned {id}"),
    }
    Ok(())
}

pub fn exam_show(bank_path: &Path, id: &str, fmt: Format) -> CmdResult {
    let session = store(bank_path).load(id)?;
    match fmt {
        Format::Json => print_json(&session),
        Format::Text => print!("{}", output::session(&session)),
    }
    Ok(())
}

pub fn exam_list(bank_path: &Path, fmt: Format) -> CmdResult {
    let store = store(bank_path);
    let sessions = store
        .list()?
        .iter()
        .map(|id| store.load(id))
        .collect::<Result<Vec<_>, _>>()?;
    match fmt {
        Format::Json => print_json(
            &sessions
                .iter()
                .map(|s| {
                    json!({
                        "session_id": s.id,
                        "status": s.status,
                        "exam_date": s.exam_date(),
                        "steps": s.steps.len(),
                    })
                })
                .collect::<Vec<_>>(),
        ),
        Format::Text => {
            let rows: Vec<Vec<String>> = sessions
                .iter()
                .map(|s| {
                    vec![
                        s.id.clone(),
                        s.status.to_string(),
                        s.exam_date().to_string(),
                        s.steps.len().to_string(),
                    ]
                })
                .collect();
            print!(
                "{}",
                output::table(&["session", "status", "exam date", "steps"], &rows, &[3])
            );
        }
    }
    Ok(())
}

pub fn exam_render(args: RenderArgs, fmt: Format) -> CmdResult {
    if args.exam_id.is_empty() || args.exam_id.contains(['/', '\\']) {
        return Err(Failure::Usage(format!(
            "invalid --exam-id \"{}\"",
            args.exam_id
        )));
    }
    let bank = load_bank(&args.bank.path)?;
    let session = store(&args.bank.path).load(&args.session)?;
    let draft = session.latest_draft().ok_or_else(|| {
        Failure::Domain(format!(
            "session {} has no draft to render; run `examforge exam step` first",
            session.id
        ))
    })?;
    let meta = course_meta(&bank_root(&args.bank.path), session.exam_date())?;
    let mut docs = vec![render_exam(draft, &bank, &meta)?];
    if args.solutions {
        docs.push(render_solutions(draft, &bank, &meta)?);
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Domain(format!("cannot create {}: {e}", args.out.display())))?;
    let mut written = Vec::new();
    for doc in &docs {
        let path = args.out.join(doc.kind.file_name(&args.exam_id));
        std::fs::write(&path, &doc.content)
            .map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))?;
        for w in &doc.warnings {
            eprintln!("warning: {w}");
        }
        written.push(path);
    }
    match fmt {
        Format::Json => print_json(&json!({
            "session_id": session.id,
            "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        })),
        Format::Text => {
            for p in &written {
                println!("wrote {}", p.display());
            }
        }
    }
    if let Some(cmd) = &args.compile {
        for path in &written {
            let status = compile_tex(cmd, path)
                .map_err(|e| Failure::Domain(format!("cannot run \"{cmd}\": {e}")))?;
            if !status.success() {
                eprintln!("error: \"{cmd}\" failed on {} ({status})", path.display());
                let code = status.code().unwrap_or(1).clamp(1, 255) as u8;
                return Err(Failure::Status(code));
            }
        }
    }
    Ok(())
}

pub fn exam_replay(bank_path: &Path, target: &str, fmt: Format) -> CmdResult {
    let file = Path::new(target);
    let session = if file.is_file() {
        let text = std::fs::read_to_string(file)
            .map_err(|e| Failure::Domain(format!("cannot read {target}: {e}")))?;
        Session::from_transcript(&text)?
    } else {
        store(bank_path).load(target)?
    };
    let bank = load_bank(bank_path)?;
    let current = bank.fingerprint();
    let stale: Vec<u32> = session
        .steps
        .iter()
        .filter(|s| s.bank_ref != current)
        .map(|s| s.step_number)
        .collect();
    let result = session.verify_replay(&bank);
    let ok = result.is_ok();
    match fmt {
        Format::Json => print_json(&json!({
            "session_id": session.id,
            "steps": session.steps.len(),
            "reproduced": ok,
            "bank_differs_for_steps": stale,
            "error": result.as_ref().err().map(|e| e.to_string()),
        })),
        Format::Text => {
            if !stale.is_empty() {
                eprintln!(
                    "warning: bank differs from the snapshot recorded for {} step(s)",
                    stale.len()
                );
            }
            match &result {
                Ok(()) => println!(
                    "replayed {} step(s) of {}: all reproduced",
                    session.steps.len(),
                    session.id
                ),
                Err(e) => println!("replay of {} failed: {e}", session.id),
            }
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Status(1))
    }
}

pub fn serve(bank: PathBuf, listen: SocketAddr) -> CmdResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(examforge_service::serve(bank_root(&bank), listen))?;
    Ok(())
}
