use sha2::{Digest, Sha256};

/// Body of the last complete fenced code block in `reply`, if any.
pub fn extract_code(reply: &str) -> Option<String> {
    let mut last = None;
    let mut open: Option<(usize, Vec<&str>)> = None;
    for line in reply.lines() {
        let trimmed = line.trim_start();
        let fence_len = trimmed.chars().take_while(|&c| c == '`').count();
        match open.as_mut() {
            None if fence_len >= 3 => open = Some((fence_len, Vec::new())),
            None => {}
            Some((len, _)) if fence_len >= *len && trimmed.trim_end().len() == fence_len => {
                let (_, body) = open.take().unwrap();
                let code = body.join("\n");
                if !code.trim().is_empty() {
                    last = Some(code);
                }
            }
            Some((_, body)) => body.push(line),
        }
    }
    last
}

/// Stable fingerprint of a candidate, insensitive to surrounding whitespace.
pub fn code_hash(code: &str) -> String {
    hex::encode(Sha256::digest(code.trim().as_bytes()))
}
