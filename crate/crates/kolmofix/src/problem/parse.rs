//! Line-oriented `key = value` reader for problem files: `#` comments,
//! quoted expression strings, bare numbers, and flat numeric arrays. Keys
//! are dotted identifiers with optional 1-based bracket indices
//! (`a[1][2]`, `solver.dt`). Every error carries the line and column it
//! points at, duplicate keys are rejected, and keys nobody consumed are
//! reported at the end so a typo can never silently fall back to a
//! default.

use crate::error::{Error, Result};

/// One parsed right-hand side.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum RawValue {
    Str(String),
    Num(f64),
    Array(Vec<f64>),
}

impl RawValue {
    fn kind(&self) -> &'static str {
        match self {
            RawValue::Str(_) => "a quoted string",
            RawValue::Num(_) => "a number",
            RawValue::Array(_) => "an array of numbers",
        }
    }
}

/// One `key = value` line.
#[derive(Clone, Debug)]
pub(crate) struct RawItem {
    pub key: String,
    pub value: RawValue,
    pub line: usize,
    /// Column (1-based) where the value begins; expression errors are
    /// re-anchored relative to it.
    pub val_col: usize,
    taken: bool,
}

/// An indexed coefficient assignment such as `a[1][2] = "x1"`.
#[derive(Clone, Debug)]
pub(crate) struct IndexedEntry {
    /// 1-based indices as written.
    pub indices: Vec<usize>,
    pub text: String,
    pub line: usize,
    pub val_col: usize,
    pub key: String,
}

/// The parsed file, before any semantic interpretation.
#[derive(Debug)]
pub(crate) struct RawConfig {
    items: Vec<RawItem>,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        col,
        message: message.into(),
    }
}

fn skip_ws(chars: &[char], p: &mut usize) {
    while *p < chars.len() && chars[*p].is_whitespace() {
        *p += 1;
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Dotted identifier with optional `[digits]` indices after any segment.
/// Returns the canonical spelling (indices reprinted without leading
/// zeros).
fn parse_key(chars: &[char], p: &mut usize, line: usize) -> Result<String> {
    let mut out = String::new();
    loop {
        if *p >= chars.len() || !is_ident_start(chars[*p]) {
            return Err(err(line, *p + 1, "expected an identifier"));
        }
        while *p < chars.len() && is_ident_char(chars[*p]) {
            out.push(chars[*p]);
            *p += 1;
        }
        while *p < chars.len() && chars[*p] == '[' {
            *p += 1;
            let start = *p;
            while *p < chars.len() && chars[*p].is_ascii_digit() {
                *p += 1;
            }
            if *p == start {
                return Err(err(line, *p + 1, "expected an index digit after `[`"));
            }
            if *p >= chars.len() || chars[*p] != ']' {
                return Err(err(line, *p + 1, "expected `]` closing the index"));
            }
            let digits: String = chars[start..*p].iter().collect();
            let n: usize = digits
                .parse()
                .map_err(|_| err(line, start + 1, format!("index `{digits}` is out of range")))?;
            out.push_str(&format!("[{n}]"));
            *p += 1;
        }
        if *p < chars.len() && chars[*p] == '.' {
            out.push('.');
            *p += 1;
            continue;
        }
        return Ok(out);
    }
}

fn parse_number_token(
    chars: &[char],
    p: &mut usize,
    line: usize,
    stop: &[char],
) -> Result<f64> {
    let start = *p;
    while *p < chars.len() && !chars[*p].is_whitespace() && !stop.contains(&chars[*p]) {
        *p += 1;
    }
    if *p == start {
        return Err(err(line, start + 1, "expected a number"));
    }
    let tok: String = chars[start..*p].iter().collect();
    tok.parse::<f64>()
        .map_err(|_| err(line, start + 1, format!("`{tok}` is not a number")))
}

fn parse_value(chars: &[char], p: &mut usize, line: usize) -> Result<RawValue> {
    match chars[*p] {
        '"' => {
            *p += 1;
            let start = *p;
            while *p < chars.len() && chars[*p] != '"' {
                *p += 1;
            }
            if *p >= chars.len() {
                return Err(err(line, start, "unterminated string (missing closing `\"`)"));
            }
            let s: String = chars[start..*p].iter().collect();
            *p += 1;
            Ok(RawValue::Str(s))
        }
        '[' => {
            *p += 1;
            let mut vals = Vec::new();
            skip_ws(chars, p);
            if *p < chars.len() && chars[*p] == ']' {
                *p += 1;
                return Ok(RawValue::Array(vals));
            }
            loop {
                skip_ws(chars, p);
                if *p >= chars.len() || chars[*p] == '#' {
                    return Err(err(line, *p + 1, "unterminated array (missing `]`)"));
                }
                vals.push(parse_number_token(chars, p, line, &[',', ']', '#'])?);
                skip_ws(chars, p);
                if *p < chars.len() && chars[*p] == ',' {
                    *p += 1;
                    continue;
                }
                if *p < chars.len() && chars[*p] == ']' {
                    *p += 1;
                    return Ok(RawValue::Array(vals));
                }
                return Err(err(line, *p + 1, "expected `,` or `]` in array"));
            }
        }
        _ => Ok(RawValue::Num(parse_number_token(chars, p, line, &['#'])?)),
    }
}

fn parse_line(s: &str, line: usize) -> Result<Option<RawItem>> {
    let chars: Vec<char> = s.chars().collect();
    let mut p = 0usize;
    skip_ws(&chars, &mut p);
    if p >= chars.len() || chars[p] == '#' {
        return Ok(None);
    }
    let key = parse_key(&chars, &mut p, line)?;
    skip_ws(&chars, &mut p);
    if p >= chars.len() || chars[p] != '=' {
        return Err(err(line, p + 1, format!("expected `=` after key `{key}`")));
    }
    p += 1;
    skip_ws(&chars, &mut p);
    if p >= chars.len() || chars[p] == '#' {
        return Err(err(line, p + 1, format!("missing value for key `{key}`")));
    }
    let val_col = p + 1;
    let value = parse_value(&chars, &mut p, line)?;
    skip_ws(&chars, &mut p);
    if p < chars.len() && chars[p] != '#' {
        return Err(err(
            line,
            p + 1,
            format!("unexpected text after the value of `{key}`"),
        ));
    }
    Ok(Some(RawItem {
        key,
        value,
        line,
        val_col,
        taken: false,
    }))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut items: Vec<RawItem> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            if let Some(item) = parse_line(raw_line, i + 1)? {
                if let Some(prev) = items.iter().find(|p| p.key == item.key) {
                    return Err(err(
                        item.line,
                        1,
                        format!(
                            "duplicate key `{}` (first set on line {})",
                            item.key, prev.line
                        ),
                    ));
                }
                items.push(item);
            }
        }
        Ok(RawConfig { items })
    }

    fn take(&mut self, key: &str) -> Option<(RawValue, usize, usize)> {
        let it = self.items.iter_mut().find(|it| it.key == key)?;
        it.taken = true;
        Some((it.value.clone(), it.line, it.val_col))
    }

    pub fn take_num(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((RawValue::Num(v), _, _)) => Ok(Some(v)),
            Some((other, line, col)) => Err(err(
                line,
                col,
                format!("key `{key}` must be a number, got {}", other.kind()),
            )),
        }
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some((RawValue::Num(v), line, col)) => {
                if v < 0.0 || v.fract() != 0.0 || v > (1u64 << 53) as f64 {
                    return Err(err(
                        line,
                        col,
                        format!("key `{key}` must be a nonnegative integer, got {v}"),
                    ));
                }
                Ok(Some(v as usize))
            }
            Some((other, line, col)) => Err(err(
                line,
                col,
                format!("key `{key}` must be a nonnegative integer, got {}", other.kind()),
            )),
        }
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        Ok(self.take_usize(key)?.map(|v| v as u64))
    }

    /// String value together with its line and value column.
    pub fn take_str(&mut self, key: &str) -> Result<Option<(String, usize, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some((RawValue::Str(s), line, col)) => Ok(Some((s, line, col))),
            Some((other, line, col)) => Err(err(
                line,
                col,
                format!("key `{key}` must be a quoted string, got {}", other.kind()),
            )),
        }
    }

    pub fn take_array(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some((RawValue::Array(v), _, _)) => Ok(Some(v)),
            Some((other, line, col)) => Err(err(
                line,
                col,
                format!("key `{key}` must be an array of numbers, got {}", other.kind()),
            )),
        }
    }

    pub fn require_num(&mut self, key: &str) -> Result<f64> {
        self.take_num(key)?
            .ok_or_else(|| Error::config(format!("problem file is missing required key `{key}`")))
    }

    pub fn require_usize(&mut self, key: &str) -> Result<usize> {
        self.take_usize(key)?
            .ok_or_else(|| Error::config(format!("problem file is missing required key `{key}`")))
    }

    pub fn require_str(&mut self, key: &str) -> Result<(String, usize, usize)> {
        self.take_str(key)?
            .ok_or_else(|| Error::config(format!("problem file is missing required key `{key}`")))
    }

    /// Whether any key starts with the given prefix (e.g. `window.`).
    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.items.iter().any(|it| it.key.starts_with(prefix))
    }

    /// All assignments of the form `name[i]...[k] = "<expr>"`.
    pub fn take_indexed(&mut self, name: &str) -> Result<Vec<IndexedEntry>> {
        let mut out = Vec::new();
        for it in self.items.iter_mut() {
            let rest = match it.key.strip_prefix(name) {
                Some(r) if r.starts_with('[') => r,
                _ => continue,
            };
            it.taken = true;
            let indices = parse_indices(rest)
                .ok_or_else(|| err(it.line, 1, format!("malformed indices in key `{}`", it.key)))?;
            let text = match &it.value {
                RawValue::Str(s) => s.clone(),
                other => {
                    return Err(err(
                        it.line,
                        it.val_col,
                        format!(
                            "key `{}` must be a quoted expression, got {}",
                            it.key,
                            other.kind()
                        ),
                    ))
                }
            };
            out.push(IndexedEntry {
                indices,
                text,
                line: it.line,
                val_col: it.val_col,
                key: it.key.clone(),
            });
        }
        Ok(out)
    }

    /// Error out on any key that was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some(it) = self.items.iter().find(|it| !it.taken) {
            return Err(err(it.line, 1, format!("unknown key `{}`", it.key)));
        }
        Ok(())
    }
}

/// Parse `[i][j]...` into its numbers; `None` on any malformation (the key
/// lexer should make that impossible).
fn parse_indices(mut s: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    while !s.is_empty() {
        let rest = s.strip_prefix('[')?;
        let close = rest.find(']')?;
        out.push(rest[..close].parse().ok()?);
        s = &rest[close + 1..];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(text: &str) -> (usize, usize, String) {
        match RawConfig::parse(text) {
            Err(Error::Parse { line, col, message }) => (line, col, message),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn values_comments_and_blank_lines_round_trip() {
        let text = "\n# leading comment\ndim = 2  # trailing\nname = \"two dee\"\npoint = [1.5, -2, 3e-1]\nempty = []\nsolver.dt = 1e-3\na[1][2] = \"x1 + x2\"\n";
        let mut raw = RawConfig::parse(text).unwrap();
        assert_eq!(raw.take_usize("dim").unwrap(), Some(2));
        assert_eq!(
            raw.take_str("name").unwrap().map(|(s, _, _)| s),
            Some("two dee".to_string())
        );
        assert_eq!(
            raw.take_array("point").unwrap(),
            Some(vec![1.5, -2.0, 0.3])
        );
        assert_eq!(raw.take_array("empty").unwrap(), Some(vec![]));
        assert_eq!(raw.take_num("solver.dt").unwrap(), Some(1e-3));
        let idx = raw.take_indexed("a").unwrap();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx[0].indices, vec![1, 2]);
        assert_eq!(idx[0].text, "x1 + x2");
        assert_eq!(idx[0].line, 8);
        raw.finish().unwrap();
    }

    #[test]
    fn errors_carry_line_and_column() {
        let (line, col, msg) = parse_err("dim = 1\nbad line\n");
        assert_eq!(line, 2);
        assert!(msg.contains("expected `=`"), "{msg}");
        assert!(col >= 4, "column {col}");

        let (line, _, msg) = parse_err("x = \"unterminated\n");
        assert_eq!(line, 1);
        assert!(msg.contains("unterminated"), "{msg}");

        let (line, col, msg) = parse_err("v = [1, oops]\n");
        assert_eq!((line, col), (1, 9));
        assert!(msg.contains("not a number"), "{msg}");

        let (_, _, msg) = parse_err("k = 1 2\n");
        assert!(msg.contains("unexpected text"), "{msg}");

        let (_, _, msg) = parse_err("k =\n");
        assert!(msg.contains("missing value"), "{msg}");

        let (line, _, msg) = parse_err("k = 1\nk = 2\n");
        assert_eq!(line, 2);
        assert!(msg.contains("duplicate key `k`"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn wrong_value_types_are_rejected_at_the_value_position() {
        let mut raw = RawConfig::parse("dim = \"one\"\n").unwrap();
        let e = raw.take_usize("dim").err().unwrap();
        assert!(e.to_string().contains("nonnegative integer"), "{e}");

        let mut raw = RawConfig::parse("dim = 1.5\n").unwrap();
        assert!(raw.take_usize("dim").is_err());

        let mut raw = RawConfig::parse("V = 3\n").unwrap();
        assert!(raw.take_str("V").is_err());

        let mut raw = RawConfig::parse("a[1][1] = 3\n").unwrap();
        assert!(raw.take_indexed("a").is_err());
    }

    #[test]
    fn unknown_keys_are_reported_after_assembly() {
        let raw = RawConfig::parse("dim = 1\nsolver.dtt = 2\n").unwrap();
        // Nobody consumed either key; the first unconsumed one is reported.
        let e = raw.finish().err().unwrap();
        assert!(e.to_string().contains("unknown key `dim`"), "{e}");

        let mut raw = RawConfig::parse("dim = 1\nsolver.dtt = 2\n").unwrap();
        raw.take_usize("dim").unwrap();
        let e = raw.finish().err().unwrap();
        assert!(e.to_string().contains("unknown key `solver.dtt`"), "{e}");
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn indexed_keys_do_not_leak_across_names() {
        let mut raw = RawConfig::parse("a[1][1] = \"1\"\nabs[1] = \"2\"\nb[1] = \"3\"\n").unwrap();
        let a = raw.take_indexed("a").unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].key, "a[1][1]");
        let b = raw.take_indexed("b").unwrap();
        assert_eq!(b.len(), 1);
        // `abs[1]` was matched by neither prefix.
        assert!(raw.finish().is_err());
    }

    #[test]
    fn canonical_index_spelling_deduplicates() {
        // `a[01]` and `a[1]` are the same key.
        let e = RawConfig::parse("a[01] = \"x1\"\na[1] = \"x1\"\n").err().unwrap();
        assert!(e.to_string().contains("duplicate"), "{e}");
    }
}
