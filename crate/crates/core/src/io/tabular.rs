//! `LORE-TAB v1`: a tabular policy set as text.
//!
//! ```text
//! LORE-TAB v1
//! prompts <P>
//! responses <R>
//! rank <B>
//! beta <beta>
//! ref
//! <P lines of R reference probabilities>
//! policy 0
//! <P lines of R logits>
//! ...
//! ```

use std::path::Path;

use super::{atomic_write, fmt_real, parse_matrix, read_file, write_row, TextCursor};
use crate::error::{Error, Result};
use crate::policy::{TabularPolicySet, TabularShape};

pub const MAGIC: &str = "LORE-TAB v1";

pub(crate) fn write_body(s: &mut String, set: &TabularPolicySet) {
    let shape = set.shape;
    s.push_str(&format!(
        "prompts {}\nresponses {}\nrank {}\nbeta {}\nref\n",
        shape.prompts,
        shape.responses,
        set.rank(),
        fmt_real(set.beta)
    ));
    for row in set.ref_policy.chunks(shape.responses) {
        write_row(s, row);
    }
    for (j, logits) in set.basis_logits.iter().enumerate() {
        s.push_str(&format!("policy {j}\n"));
        for row in logits.chunks(shape.responses) {
            write_row(s, row);
        }
    }
}

/// Reads a body written by [`write_body`], ending at the first line that
/// starts with one of `stops` (or at the end of input).
pub(crate) fn parse_body(cur: &mut TextCursor<'_>, stops: &[&str]) -> Result<TabularPolicySet> {
    let prompts: usize = cur.parse_field("prompts")?;
    let responses: usize = cur.parse_field("responses")?;
    let rank: usize = cur.parse_field("rank")?;
    let beta_text = cur.field("beta")?;
    let beta = cur.reals(beta_text)?;
    let [beta] = beta[..] else {
        return Err(cur.err("beta must be one number"));
    };
    let shape = TabularShape { prompts, responses };
    cur.expect("ref")?;
    let mut terminators = vec!["policy "];
    terminators.extend_from_slice(stops);
    let lines = cur.lines_until(&terminators);
    let ref_policy = parse_matrix(cur, &lines, prompts, responses)?;
    let mut logits = Vec::with_capacity(rank);
    let mut j = 0;
    while cur.peek().is_some_and(|l| l.starts_with("policy ")) {
        cur.expect(&format!("policy {j}"))?;
        let lines = cur.lines_until(&terminators);
        logits.push(parse_matrix(cur, &lines, prompts, responses)?);
        j += 1;
    }
    Error::check_dim(rank, logits.len())?;
    TabularPolicySet::new(shape, beta, ref_policy, logits)
}

pub fn save_tabular(set: &TabularPolicySet, path: &Path) -> Result<()> {
    let mut s = format!("{MAGIC}\n");
    write_body(&mut s, set);
    atomic_write(path, s.as_bytes())
}

pub fn load_tabular(path: &Path) -> Result<TabularPolicySet> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    let mut cur = TextCursor::new(path, text);
    if cur.next_line()? != MAGIC {
        return Err(Error::format(path, format!("bad magic, expected {MAGIC:?}")));
    }
    let set = parse_body(&mut cur, &[])?;
    if !cur.at_end() {
        return Err(cur.err("trailing content"));
    }
    Ok(set)
}
