//! GQA-style SQL-like semantic programs.
//!
//! A program is a `->`-separated chain of `opname: arguments` steps, e.g.
//! `select: shelf -> select: door -> common: [0, 1]`. Bracketed integer
//! lists reference earlier steps, a leading `?` marks an existence query,
//! and parenthesized numeric ids (as in the public GQA release) name the
//! scene-graph objects a step resolves to.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operation {
    Select,
    Relate,
    Verify,
    Exist,
    Choose,
    Common,
    Same,
    Different,
    And,
    Or,
    Unknown(String),
}

impl Operation {
    fn from_name(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "select" => Operation::Select,
            "relate" => Operation::Relate,
            "verify" => Operation::Verify,
            "exist" => Operation::Exist,
            "choose" => Operation::Choose,
            "common" => Operation::Common,
            "same" => Operation::Same,
            "different" => Operation::Different,
            "and" => Operation::And,
            "or" => Operation::Or,
            _ => Operation::Unknown(name.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Operation::Select => "select",
            Operation::Relate => "relate",
            Operation::Verify => "verify",
            Operation::Exist => "exist",
            Operation::Choose => "choose",
            Operation::Common => "common",
            Operation::Same => "same",
            Operation::Different => "different",
            Operation::And => "and",
            Operation::Or => "or",
            Operation::Unknown(name) => name,
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, Operation::Unknown(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticStep {
    pub op: Operation,
    pub args: Vec<String>,
    /// Indices of earlier steps this step consumes.
    pub refs: Vec<usize>,
    /// Scene-graph object ids given in parentheses.
    pub object_ids: Vec<String>,
    /// Leading `?` argument, as in `exist: ? shelf`.
    pub query_marker: bool,
}

impl SemanticStep {
    pub fn new(op: Operation) -> Self {
        Self { op, args: Vec::new(), refs: Vec::new(), object_ids: Vec::new(), query_marker: false }
    }

    pub fn arg(&self, i: usize) -> Option<&str> {
        self.args.get(i).map(String::as_str)
    }
}

impl fmt::Display for SemanticStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut body = Vec::new();
        if self.query_marker {
            body.push("?".to_string());
        }
        if !self.args.is_empty() {
            body.push(self.args.join(", "));
        }
        if !self.object_ids.is_empty() {
            body.push(format!("({})", self.object_ids.join(",")));
        }
        if !self.refs.is_empty() {
            let refs: Vec<String> = self.refs.iter().map(usize::to_string).collect();
            body.push(format!("[{}]", refs.join(", ")));
        }
        if body.is_empty() {
            write!(f, "{}:", self.op.name())
        } else {
            write!(f, "{}: {}", self.op.name(), body.join(" "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("empty program")]
    Empty,
    #[error("step {0} is empty")]
    EmptySegment(usize),
    #[error("step {0} has no `opname:` prefix")]
    MissingColon(usize),
    #[error("step {segment} references step {target}, which does not precede it")]
    ForwardRef { segment: usize, target: usize },
    #[error("step {0} has an unclosed bracket")]
    Unbalanced(usize),
}

/// Parsed semantic program. Equality ignores the original text.
#[derive(Debug, Clone, Eq)]
pub struct SemanticProgram {
    steps: Vec<SemanticStep>,
    raw: String,
}

impl PartialEq for SemanticProgram {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
    }
}

impl SemanticProgram {
    pub fn from_steps(steps: Vec<SemanticStep>) -> Result<Self, ProgramError> {
        if steps.is_empty() {
            return Err(ProgramError::Empty);
        }
        for (i, s) in steps.iter().enumerate() {
            if let Some(&target) = s.refs.iter().find(|&&r| r >= i) {
                return Err(ProgramError::ForwardRef { segment: i, target });
            }
        }
        let mut program = Self { steps, raw: String::new() };
        program.raw = program.render();
        Ok(program)
    }

    pub fn steps(&self) -> &[SemanticStep] {
        &self.steps
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn render(&self) -> String {
        self.steps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" -> ")
    }

    pub fn unknown_ops(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter(|s| s.op.is_unknown()).map(|s| s.op.name())
    }

    pub fn has_unknown_ops(&self) -> bool {
        self.unknown_ops().next().is_some()
    }
}

pub fn count_steps(program: &SemanticProgram) -> usize {
    program.steps.len()
}

/// Adds every unknown operation name in `program` to `tally`.
pub fn tally_unknown_ops(program: &SemanticProgram, tally: &mut BTreeMap<String, usize>) {
    for name in program.unknown_ops() {
        *tally.entry(name.to_string()).or_default() += 1;
    }
}

fn parse_int_list(inner: &str) -> Option<Vec<usize>> {
    if inner.trim().is_empty() {
        return None;
    }
    inner.split(',').map(|t| t.trim().parse::<usize>().ok()).collect()
}

fn parse_id_list(inner: &str) -> Option<Vec<String>> {
    let ids: Vec<String> = inner.split(',').map(|t| t.trim().to_string()).collect();
    let ok = ids.iter().all(|t| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()));
    ok.then_some(ids)
}

fn parse_step(segment: usize, text: &str) -> Result<SemanticStep, ProgramError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ProgramError::EmptySegment(segment));
    }
    let (name, body) = text.split_once(':').ok_or(ProgramError::MissingColon(segment))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(ProgramError::MissingColon(segment));
    }
    let mut step = SemanticStep::new(Operation::from_name(name));
    let mut body = body.trim();
    if body == "?" || body.starts_with("? ") {
        step.query_marker = true;
        body = body[1..].trim_start();
    }

    let mut current = String::new();
    let mut args = Vec::new();
    let mut chars = body.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '[' | '(' => {
                let close = if c == '[' { ']' } else { ')' };
                let rest = &body[i + 1..];
                let end = rest.find(close).ok_or(ProgramError::Unbalanced(segment))?;
                let inner = &rest[..end];
                let consumed = if c == '[' {
                    parse_int_list(inner).map(|r| step.refs.extend(r)).is_some()
                } else {
                    parse_id_list(inner).map(|ids| step.object_ids.extend(ids)).is_some()
                };
                if !consumed {
                    current.push(c);
                    current.push_str(inner);
                    current.push(close);
                }
                while chars.peek().is_some_and(|&(j, _)| j <= i + end + 1) {
                    chars.next();
                }
            }
            ',' => args.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    args.push(current);
    step.args = args.into_iter().map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect();

    if let Some(&target) = step.refs.iter().find(|&&r| r >= segment) {
        return Err(ProgramError::ForwardRef { segment, target });
    }
    Ok(step)
}

pub fn parse_program(text: &str) -> Result<SemanticProgram, ProgramError> {
    if text.trim().is_empty() {
        return Err(ProgramError::Empty);
    }
    let steps = text
        .split("->")
        .enumerate()
        .map(|(i, seg)| parse_step(i, seg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SemanticProgram { steps, raw: text.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_table_example() {
        let p = parse_program("select: shelf -> select: door -> common:  [0, 1]").unwrap();
        assert_eq!(count_steps(&p), 3);
        assert_eq!(p.steps()[0].op, Operation::Select);
        assert_eq!(p.steps()[0].args, vec!["shelf"]);
        assert_eq!(p.steps()[1].args, vec!["door"]);
        assert_eq!(p.steps()[2].op, Operation::Common);
        assert!(p.steps()[2].args.is_empty());
        assert_eq!(p.steps()[2].refs, vec![0, 1]);
    }

    #[test]
    fn exist_marker() {
        let p = parse_program("exist: ? shelf").unwrap();
        let s = &p.steps()[0];
        assert_eq!(s.op, Operation::Exist);
        assert!(s.query_marker);
        assert_eq!(s.args, vec!["shelf"]);
    }

    #[test]
    fn choose_four_args() {
        let p = parse_program("choose: obj1, attribute, value1, value2").unwrap();
        let s = &p.steps()[0];
        assert_eq!(s.op, Operation::Choose);
        assert_eq!(s.args.len(), 4);
        assert_eq!(s.arg(4), None);
    }

    #[test]
    fn same_without_comma_before_refs() {
        let p = parse_program("select: a -> select: b -> same: color [0, 1]").unwrap();
        assert_eq!(p.steps()[2].args, vec!["color"]);
        assert_eq!(p.steps()[2].refs, vec![0, 1]);
    }

    #[test]
    fn gqa_release_form() {
        let p = parse_program("select: table (722136)->relate: _,on,s (722120) [0]->query: name [1]").unwrap();
        assert_eq!(p.steps()[0].object_ids, vec!["722136"]);
        assert_eq!(p.steps()[1].args, vec!["_", "on", "s"]);
        assert_eq!(p.steps()[1].refs, vec![0]);
        assert_eq!(p.steps()[2].op, Operation::Unknown("query".into()));
        let mut tally = BTreeMap::new();
        tally_unknown_ops(&p, &mut tally);
        assert_eq!(tally.get("query"), Some(&1));
    }

    #[test]
    fn non_numeric_brackets_stay_in_args() {
        let p = parse_program("verify: color, [red], cup").unwrap();
        assert_eq!(p.steps()[0].args, vec!["color", "[red]", "cup"]);
        assert!(p.steps()[0].refs.is_empty());
    }

    #[test]
    fn single_and_long_chains() {
        assert_eq!(count_steps(&parse_program("select: dog").unwrap()), 1);
        let chain = (0..10).map(|i| format!("select: o{i}")).collect::<Vec<_>>().join(" -> ");
        assert_eq!(count_steps(&parse_program(&chain).unwrap()), 10);
    }

    #[test]
    fn errors() {
        assert_eq!(parse_program(""), Err(ProgramError::Empty));
        assert_eq!(parse_program("select: a -> -> select: b"), Err(ProgramError::EmptySegment(1)));
        assert_eq!(parse_program("select: a -> door"), Err(ProgramError::MissingColon(1)));
        assert_eq!(parse_program(": a"), Err(ProgramError::MissingColon(0)));
        assert_eq!(
            parse_program("select: a -> common: [0, 1]"),
            Err(ProgramError::ForwardRef { segment: 1, target: 1 })
        );
        assert_eq!(parse_program("common: [0"), Err(ProgramError::Unbalanced(0)));
    }

    #[test]
    fn render_round_trip() {
        for text in [
            "select: shelf -> select: door -> common: [0, 1]",
            "exist: ? shelf",
            "select: cup (12,13) -> relate: cup, on, table [0] -> verify: color, red, cup [1]",
            "select: a -> or:",
        ] {
            let p = parse_program(text).unwrap();
            let again = parse_program(&p.render()).unwrap();
            assert_eq!(p, again, "{text}");
        }
    }

    #[test]
    fn unknown_preserved_verbatim() {
        let p = parse_program("Filter: red").unwrap();
        assert_eq!(p.steps()[0].op, Operation::Unknown("Filter".into()));
        assert_eq!(p.render(), "Filter: red");
    }
}
