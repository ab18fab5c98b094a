//! LaTeX rendering of an exam draft into examination and solutions sources.
//!
//! Problem fragments are inserted verbatim (only CRLF is folded to LF);
//! course metadata is escaped with [`escape_text`]. Output is a pure
//! function of the draft, the bank fragments and the metadata.

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, ExitStatus};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{Bank, Problem};
use crate::selector::ExamDraft;

pub const DEFAULT_PREAMBLE: &str = "\
\\documentclass[11pt,a4paper]{article}
\\usepackage[utf8]{inputenc}
\\usepackage[T1]{fontenc}
\\usepackage{amsmath,amssymb}
\\usepackage{graphicx}
\\usepackage[margin=25mm]{geometry}
\\setlength{\\parindent}{0pt}
";

pub const MISSING_SOLUTION: &str = "Solution not provided.";

/// Header text for both documents. Every field is plain text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseMeta {
    pub course_title: String,
    #[serde(default)]
    pub course_code: String,
    #[serde(default)]
    pub exam_date: String,
    #[serde(default)]
    pub instructions_text: String,
    #[serde(default)]
    pub points_summary_note: String,
    /// Replacement for [`DEFAULT_PREAMBLE`]: raw LaTeX placed before
    /// `\begin{document}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preamble: Option<String>,
}

impl CourseMeta {
    pub fn new(course_title: impl Into<String>) -> Self {
        Self {
            course_title: course_title.into(),
            course_code: String::new(),
            exam_date: String::new(),
            instructions_text: String::new(),
            points_summary_note: String::new(),
            preamble: None,
        }
    }
}

/// `course.json` contents: [`CourseMeta`] fields plus an optional
/// `template` path (relative to the file) holding the preamble.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourseConfig {
    #[serde(default)]
    pub course_title: Option<String>,
    #[serde(default)]
    pub course_code: Option<String>,
    #[serde(default)]
    pub instructions_text: Option<String>,
    #[serde(default)]
    pub points_summary_note: Option<String>,
    #[serde(default)]
    pub template: Option<String>,
}

impl CourseConfig {
    pub fn load(path: &Path) -> Result<Self, RenderError> {
        let text = std::fs::read_to_string(path).map_err(|e| RenderError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| RenderError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// File in a bank directory holding its [`CourseConfig`].
pub const COURSE_FILE: &str = "course.json";

/// Title used when a bank has no `course.json` or the file omits one.
pub const DEFAULT_TITLE: &str = "Examination";

/// Builds the metadata for an exam on `exam_date` from the bank's
/// `course.json`, or from defaults when the file is absent.
pub fn course_meta(bank_dir: &Path, exam_date: NaiveDate) -> Result<CourseMeta, RenderError> {
    let path = bank_dir.join(COURSE_FILE);
    let config = if path.is_file() {
        CourseConfig::load(&path)?
    } else {
        CourseConfig::default()
    };
    let preamble = match &config.template {
        Some(rel) => {
            let tpl = bank_dir.join(rel);
            Some(
                std::fs::read_to_string(&tpl).map_err(|e| RenderError::Config {
                    path: tpl.display().to_string(),
                    message: e.to_string(),
                })?,
            )
        }
        None => None,
    };
    Ok(CourseMeta {
        course_title: config
            .course_title
            .unwrap_or_else(|| DEFAULT_TITLE.to_owned()),
        course_code: config.course_code.unwrap_or_default(),
        exam_date: exam_date.format("%Y-%m-%d").to_string(),
        instructions_text: config.instructions_text.unwrap_or_default(),
        points_summary_note: config.points_summary_note.unwrap_or_default(),
        preamble,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Exam,
    Solutions,
}

impl DocKind {
    /// Output file name for exam id `exam_id`.
    pub fn file_name(self, exam_id: &str) -> String {
        match self {
            DocKind::Exam => format!("{exam_id}.tex"),
            DocKind::Solutions => format!("{exam_id}-solutions.tex"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedDoc {
    pub kind: DocKind,
    pub content: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("course title must not be empty")]
    EmptyTitle,
    #[error("draft references unknown problem \"{0}\"")]
    UnknownProblem(String),
    #[error("problem \"{problem_id}\": fragment \"{path}\" is missing")]
    MissingFragment { problem_id: String, path: String },
    #[error("course configuration {path}: {message}")]
    Config { path: String, message: String },
}

/// Escapes the LaTeX special characters `# $ % & _ { } ~ ^ \`.
pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\textbackslash{}"),
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '#' | '$' | '%' | '&' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

pub fn render_exam(
    draft: &ExamDraft,
    bank: &Bank,
    meta: &CourseMeta,
) -> Result<RenderedDoc, RenderError> {
    render(DocKind::Exam, draft, bank, meta)
}

pub fn render_solutions(
    draft: &ExamDraft,
    bank: &Bank,
    meta: &CourseMeta,
) -> Result<RenderedDoc, RenderError> {
    render(DocKind::Solutions, draft, bank, meta)
}

fn render(
    kind: DocKind,
    draft: &ExamDraft,
    bank: &Bank,
    meta: &CourseMeta,
) -> Result<RenderedDoc, RenderError> {
    if meta.course_title.trim().is_empty() {
        return Err(RenderError::EmptyTitle);
    }
    let problems: Vec<&Problem> = draft
        .assignment
        .iter()
        .map(|id| {
            bank.problem(id)
                .ok_or_else(|| RenderError::UnknownProblem(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let total: u64 = problems.iter().map(|p| u64::from(p.points)).sum();

    let mut warnings = Vec::new();
    let mut doc = String::new();
    let preamble = meta.preamble.as_deref().unwrap_or(DEFAULT_PREAMBLE);
    doc.push_str(&normalize(preamble));
    doc.push_str("\n\\begin{document}\n\n\\begin{center}\n");
    let _ = writeln!(
        doc,
        "{{\\Large\\bfseries {}}}\\\\[4pt]",
        escape_text(&meta.course_title)
    );
    if kind == DocKind::Solutions {
        doc.push_str("{\\large Solutions}\\\\[2pt]\n");
    }
    for line in [&meta.course_code, &meta.exam_date] {
        if !line.trim().is_empty() {
            let _ = writeln!(doc, "{}\\\\", escape_text(line));
        }
    }
    doc.push_str("\\end{center}\n\n");
    if kind == DocKind::Exam && !meta.instructions_text.trim().is_empty() {
        let _ = writeln!(doc, "{}\n", escape_text(&meta.instructions_text));
    }
    let _ = write!(doc, "\\textbf{{Total: {total} points.}}");
    if !meta.points_summary_note.trim().is_empty() {
        let _ = write!(doc, " {}", escape_text(&meta.points_summary_note));
    }
    doc.push('\n');

    for (k, p) in problems.iter().enumerate() {
        let n = k + 1;
        let label = match kind {
            DocKind::Exam => "Problem",
            DocKind::Solutions => "Solution",
        };
        let unit = if p.points == 1 { "point" } else { "points" };
        let _ = write!(doc, "\n\\section*{{{label} {n} ({} {unit})}}\n", p.points);
        let (path, text) = match kind {
            DocKind::Exam => (&p.statement_path, bank.statement(p)),
            DocKind::Solutions => (&p.solution_path, bank.solution(p)),
        };
        let text = text.ok_or_else(|| RenderError::MissingFragment {
            problem_id: p.id.clone(),
            path: path.clone(),
        })?;
        if kind == DocKind::Solutions && text.trim().is_empty() {
            warnings.push(format!("problem \"{}\" has an empty solution", p.id));
            doc.push_str(MISSING_SOLUTION);
            doc.push('\n');
        } else {
            doc.push_str(&normalize(text));
        }
    }
    doc.push_str("\n\\end{document}\n");

    Ok(RenderedDoc {
        kind,
        content: doc,
        warnings,
    })
}

/// CRLF to LF, and a guaranteed trailing newline.
fn normalize(text: &str) -> String {
    let mut s = text.replace("\r\n", "\n");
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Runs `command` (split on whitespace) with the file name of `tex` as its
/// last argument, inside the file's directory.
pub fn compile_tex(command: &str, tex: &Path) -> std::io::Result<ExitStatus> {
    let mut parts = command.split_whitespace();
    let program = parts.next().ok_or_else(|| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty compile command")
    })?;
    let dir = tex.parent().filter(|d| !d.as_os_str().is_empty());
    let mut cmd = Command::new(program);
    cmd.args(parts);
    match dir {
        Some(d) => cmd.current_dir(d).arg(tex.file_name().unwrap_or_default()),
        None => cmd.arg(tex),
    };
    cmd.status()
}
