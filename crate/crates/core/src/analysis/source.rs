use crate::model::{FunctionComplexity, SourceMetrics};

/// Tokens that each add one decision node.
pub const DECISION_TOKENS: [&str; 10] = [
    "if", "while", "for", "case", "catch", "&&", "||", "?", "require", "assert",
];

#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    text: String,
    line: u32,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// Lexes `source` into code tokens (comments dropped, each string literal
/// collapsed to one `"…"` token) and marks which lines carry code.
fn lex(source: &str) -> (Vec<Token>, Vec<bool>) {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut code_lines = vec![false];
    let mut line = 0usize;
    let mut i = 0;
    let mark = |lines: &mut Vec<bool>, line: usize| lines[line] = true;

    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c == '\n' {
            line += 1;
            code_lines.push(false);
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && next == Some('*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                if chars[i] == '\n' {
                    line += 1;
                    code_lines.push(false);
                }
                i += 1;
            }
            i = (i + 2).min(chars.len());
        } else if c == '"' || c == '\'' {
            let start_line = line;
            mark(&mut code_lines, line);
            i += 1;
            while i < chars.len() && chars[i] != c {
                match chars[i] {
                    '\\' => i += 1,
                    '\n' => {
                        line += 1;
                        code_lines.push(false);
                    }
                    _ => {}
                }
                if i < chars.len() {
                    mark(&mut code_lines, line);
                }
                i += 1;
            }
            i += 1;
            tokens.push(Token {
                text: "\"…\"".into(),
                line: start_line as u32 + 1,
            });
        } else {
            mark(&mut code_lines, line);
            let text = if is_ident_char(c) {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                chars[start..i].iter().collect()
            } else if (c == '&' || c == '|') && next == Some(c) {
                i += 2;
                format!("{c}{c}")
            } else {
                i += 1;
                c.to_string()
            };
            tokens.push(Token {
                text,
                line: line as u32 + 1,
            });
        }
    }
    (tokens, code_lines)
}

fn is_decision(token: &Token) -> bool {
    DECISION_TOKENS.contains(&token.text.as_str())
}

/// If `tokens[at]` is a `function` keyword that starts a definition with a
/// body, returns the index range of the body braces (inclusive).
fn function_body(tokens: &[Token], at: usize) -> Option<(usize, usize)> {
    let mut depth = 0i32;
    let mut i = at + 1;
    let open = loop {
        match tokens.get(i)?.text.as_str() {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ";" | "}" | "," | "=" if depth == 0 => return None,
            "{" if depth == 0 => break i,
            _ => {}
        }
        i += 1;
    };
    let mut braces = 0i32;
    for (j, token) in tokens.iter().enumerate().skip(open) {
        match token.text.as_str() {
            "{" => braces += 1,
            "}" => {
                braces -= 1;
                if braces == 0 {
                    return Some((open, j));
                }
            }
            _ => {}
        }
    }
    // Unterminated body: it runs to the end of the file.
    Some((open, tokens.len() - 1))
}

/// Lines of code, physical lines and cyclomatic complexity of a Solidity file.
///
/// Function complexity is one plus its decision tokens. The file total is
/// the sum over functions plus one plus decision tokens outside functions
/// (constructors, modifiers, state initializers); a file with no code lines
/// has complexity zero.
pub fn source_metrics(source: &str) -> SourceMetrics {
    let (tokens, code_lines) = lex(source);
    let ploc = source.lines().count() as u32;
    let loc = code_lines.iter().filter(|&&has_code| has_code).count() as u32;

    let mut functions = Vec::new();
    let mut outside = 0u32;
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].text == "function" {
            if let Some((open, close)) = function_body(&tokens, i) {
                let name = tokens
                    .get(i + 1)
                    .filter(|t| t.text.chars().all(is_ident_char))
                    .map(|t| t.text.clone())
                    .unwrap_or_else(|| "<anonymous>".into());
                let decisions = tokens[i..=close].iter().filter(|t| is_decision(t)).count() as u32;
                functions.push(FunctionComplexity {
                    name,
                    line: tokens[i].line,
                    complexity: 1 + decisions,
                });
                i = close.max(open) + 1;
                continue;
            }
        }
        if is_decision(&tokens[i]) {
            outside += 1;
        }
        i += 1;
    }

    let complexity = if loc == 0 {
        0
    } else {
        functions.iter().map(|f| f.complexity).sum::<u32>() + 1 + outside
    };
    SourceMetrics {
        loc,
        ploc,
        functions,
        complexity,
    }
}
