//! `LORE-CKPT v1`: trained parameters as text, with a SHA-256 trailer.
//!
//! ```text
//! LORE-CKPT v1
//! method lore | bt | policy-basis
//! seed <u64>
//! fingerprint <config fingerprint>
//! -- lore / bt --
//! rank <B>
//! dim <D>
//! basis
//! <B lines of D reals>
//! -- policy-basis --
//! <LORE-TAB body>
//! --
//! users <N>
//! <N lines: JSON-quoted user id, then B weights>
//! checksum <hex SHA-256 of every byte before this line>
//! ```
//!
//! A `bt` checkpoint stores its weight vector as a single basis row and no
//! users. Numbers use the shortest round-trip decimal form, so loading
//! reproduces every parameter bit for bit, and saving a loaded checkpoint
//! reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{atomic_write, parse_matrix, read_file, tabular, write_row, TextCursor};
use crate::baselines::LinearRewardModel;
use crate::error::{Error, Result};
use crate::policy::TabularPolicySet;
use crate::types::{RewardBasisModel, UserWeights};

pub const MAGIC: &str = "LORE-CKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Lore {
        model: RewardBasisModel,
        weights: BTreeMap<String, UserWeights>,
    },
    Bt(LinearRewardModel),
    PolicyBasis {
        policies: TabularPolicySet,
        weights: BTreeMap<String, UserWeights>,
    },
}

impl SavedModel {
    pub fn method(&self) -> &'static str {
        match self {
            SavedModel::Lore { .. } => "lore",
            SavedModel::Bt(_) => "bt",
            SavedModel::PolicyBasis { .. } => "policy-basis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SavedModel,
    pub seed: u64,
    pub fingerprint: String,
}

fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String> {
        if self.fingerprint.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument("fingerprint must not contain whitespace".into()));
        }
        let mut s = format!(
            "{MAGIC}\nmethod {}\nseed {}\nfingerprint {}\n",
            self.model.method(),
            self.seed,
            self.fingerprint
        );
        let empty = BTreeMap::new();
        let weights = match &self.model {
            SavedModel::Lore { model, weights } => {
                write_basis(&mut s, model);
                weights
            }
            SavedModel::Bt(m) => {
                write_basis(&mut s, &m.as_basis_model()?);
                &empty
            }
            SavedModel::PolicyBasis { policies, weights } => {
                tabular::write_body(&mut s, policies);
                weights
            }
        };
        s.push_str(&format!("users {}\n", weights.len()));
        for (user, w) in weights {
            s.push_str(&serde_json::to_string(user).expect("strings serialize"));
            s.push(' ');
            write_row(&mut s, w.as_slice());
        }
        let sum = checksum(s.as_bytes());
        s.push_str(&format!("checksum {sum}\n"));
        Ok(s)
    }

    /// Parses checkpoint text; `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cur = TextCursor::new(path, text);
        let magic = cur.next_line()?;
        if magic != MAGIC {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {magic:?}, expected {MAGIC:?}"),
            ));
        }
        let method = cur.field("method")?;
        let seed: u64 = cur.parse_field("seed")?;
        let fingerprint = cur.field("fingerprint")?.to_owned();
        let (model_part, rank) = match method {
            "lore" | "bt" => {
                let model = parse_basis(&mut cur)?;
                let rank = model.rank();
                (Some(model), rank)
            }
            "policy-basis" => (None, 0),
            other => return Err(cur.err(format!("unknown method {other:?}"))),
        };
        let policies = if method == "policy-basis" {
            Some(tabular::parse_body(&mut cur, &["users "])?)
        } else {
            None
        };
        let rank = policies.as_ref().map_or(rank, TabularPolicySet::rank);

        let n_users: usize = cur.parse_field("users")?;
        let lines = cur.lines_until(&["checksum "]);
        Error::check_dim(n_users, lines.len())?;
        let mut weights = BTreeMap::new();
        for line in lines {
            let mut stream = serde_json::Deserializer::from_str(line).into_iter::<String>();
            let user = match stream.next() {
                Some(Ok(u)) => u,
                _ => return Err(cur.err(format!("bad user line {line:?}"))),
            };
            let values = cur.reals(&line[stream.byte_offset()..])?;
            Error::check_dim(rank, values.len())?;
            let w = UserWeights::new(values).map_err(|e| cur.err(format!("user {user:?}: {e}")))?;
            if weights.insert(user.clone(), w).is_some() {
                return Err(cur.err(format!("duplicate user {user:?}")));
            }
        }

        let body_len = text.rfind("\nchecksum ").map_or(0, |i| i + 1);
        let stated = cur.field("checksum")?;
        if !cur.at_end() {
            return Err(cur.err("content after checksum"));
        }
        if stated != checksum(&text.as_bytes()[..body_len]) {
            return Err(Error::format(path, "checksum mismatch: file is corrupted"));
        }

        let model = match (method, model_part, policies) {
            ("lore", Some(model), _) => SavedModel::Lore { model, weights },
            ("bt", Some(model), _) => {
                if model.rank() != 1 || !weights.is_empty() {
                    return Err(Error::format(path, "bt checkpoint must have rank 1 and no users"));
                }
                SavedModel::Bt(LinearRewardModel::new(model.into_basis())?)
            }
            (_, _, Some(policies)) => SavedModel::PolicyBasis { policies, weights },
            _ => unreachable!("method checked above"),
        };
        Ok(Checkpoint {
            model,
            seed,
            fingerprint,
        })
    }
}

fn write_basis(s: &mut String, model: &RewardBasisModel) {
    s.push_str(&format!("rank {}\ndim {}\nbasis\n", model.rank(), model.dim()));
    for j in 0..model.rank() {
        write_row(s, model.row(j));
    }
}

fn parse_basis(cur: &mut TextCursor<'_>) -> Result<RewardBasisModel> {
    let rank: usize = cur.parse_field("rank")?;
    let dim: usize = cur.parse_field("dim")?;
    cur.expect("basis")?;
    let lines = cur.lines_until(&["users "]);
    let basis = parse_matrix(cur, &lines, rank, dim)?;
    RewardBasisModel::new(rank, dim, basis)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    atomic_write(path, ckpt.to_text()?.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    Checkpoint::parse(text, path)
}
