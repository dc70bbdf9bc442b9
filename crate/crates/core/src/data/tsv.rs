use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{tokenize, DialogueInstance};
use crate::error::{Error, Result};

/// Reads `label<TAB>utt_1<TAB>...<TAB>utt_n<TAB>response` lines.
///
/// Consecutive lines with the same context text form one group.
pub fn load_tsv(path: &Path) -> Result<Vec<DialogueInstance>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text, path)
}

pub fn parse_tsv(text: &str, path: &Path) -> Result<Vec<DialogueInstance>> {
    let mut out: Vec<DialogueInstance> = Vec::new();
    let mut prev_context: Option<String> = None;
    let mut group_id = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(err(format!(
                "expected label, at least one context utterance and a response; got {} field(s)",
                fields.len()
            )));
        }
        let label = match fields[0].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("label must be 0 or 1, got `{other}`"))),
        };
        let context_fields = &fields[1..fields.len() - 1];
        let context_key = context_fields.join("\t");
        if let Some(prev) = &prev_context {
            if *prev != context_key {
                group_id += 1;
            }
        }
        prev_context = Some(context_key);
        out.push(DialogueInstance {
            context: context_fields.iter().map(|u| tokenize(u)).collect(),
            response: tokenize(fields[fields.len() - 1]),
            label,
            group_id,
        });
    }
    Ok(out)
}

pub fn format_tsv(instances: &[DialogueInstance]) -> String {
    let mut s = String::new();
    for inst in instances {
        write!(s, "{}", inst.label).expect("string write");
        for utt in inst.context.iter().chain(std::iter::once(&inst.response)) {
            s.push('\t');
            s.push_str(&utt.join(" "));
        }
        s.push('\n');
    }
    s
}

pub fn write_tsv(path: &Path, instances: &[DialogueInstance]) -> Result<()> {
    fs::write(path, format_tsv(instances)).map_err(|e| Error::io(path, e))
}
