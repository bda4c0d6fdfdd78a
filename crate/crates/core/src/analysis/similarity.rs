/// One matched block: `len` characters starting at `a` in the first string
/// and `b` in the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchBlock {
    pub a: usize,
    pub b: usize,
    pub len: usize,
}

/// Longest common contiguous block of `a[alo..ahi]` and `b[blo..bhi]`.
/// Ties go to the earliest start in `a`, then in `b`.
fn longest_block(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> MatchBlock {
    let width = bhi - blo;
    let mut best = MatchBlock { a: alo, b: blo, len: 0 };
    // prev[j + 1] = length of the common suffix ending at a[i-1], b[blo + j].
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    for i in alo..ahi {
        for j in 0..width {
            cur[j + 1] = if a[i] == b[blo + j] { prev[j] + 1 } else { 0 };
            let k = cur[j + 1];
            if k > best.len {
                best = MatchBlock {
                    a: i + 1 - k,
                    b: blo + j + 1 - k,
                    len: k,
                };
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Ratcliff-Obershelp matching blocks, ordered by position.
pub fn matching_blocks(a: &str, b: &str) -> Vec<MatchBlock> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut blocks = Vec::new();
    let mut pending = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = pending.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let m = longest_block(&a, &b, alo, ahi, blo, bhi);
        if m.len == 0 {
            continue;
        }
        blocks.push(m);
        pending.push((alo, m.a, blo, m.b));
        pending.push((m.a + m.len, ahi, m.b + m.len, bhi));
    }
    blocks.sort_by_key(|m| (m.a, m.b));
    blocks
}

/// `2M / (|a| + |b|)` over characters, where `M` is the total length of the
/// matching blocks. Two empty strings are identical (1.0).
pub fn sequence_match_ratio(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    let matched: usize = matching_blocks(a, b).iter().map(|m| m.len).sum();
    2.0 * matched as f64 / total as f64
}
