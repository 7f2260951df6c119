//! Plain-text persistence for learned constrained policies.
//!
//! ```text
//! bcts-policy 1
//! method cts
//! budget 500
//! arms 2
//! dim 3
//! arm 0 updates 41
//! B <d*d values, row major>
//! g <d values>
//! mean <d values>
//! ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a saved
//! policy reloads bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::agents::{ConstrainedPolicy, TeachingMethod};
use crate::error::{Error, Result};
use crate::model::ArmPosterior;

const MAGIC: &str = "bcts-policy";
const VERSION: u32 = 1;

fn join(values: impl Iterator<Item = f64>) -> String {
    values.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn policy_to_string(policy: &ConstrainedPolicy) -> String {
    let mut out = format!(
        "{MAGIC} {VERSION}\nmethod {}\nbudget {}\narms {}\ndim {}\n",
        policy.method(),
        policy.budget(),
        policy.num_arms(),
        policy.dim()
    );
    for (k, post) in policy.posteriors().iter().enumerate() {
        let b = post.precision();
        out.push_str(&format!("arm {k} updates {}\n", post.update_count()));
        out.push_str(&format!(
            "B {}\n",
            join((0..b.nrows()).flat_map(|i| (0..b.ncols()).map(move |j| b[(i, j)])))
        ));
        out.push_str(&format!("g {}\n", join(post.accum().iter().copied())));
        out.push_str(&format!("mean {}\n", join(post.mean().iter().copied())));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    source: &'a str,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, msg: impl std::fmt::Display) -> Error {
        Error::parse(self.source, format!("line {}: {msg}", line + 1))
    }

    /// Next non-blank line, which must start with `tag`; returns its fields.
    fn expect(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        loop {
            let Some((n, line)) = self.inner.next() else {
                return Err(Error::parse(
                    self.source,
                    format!("unexpected end of input, wanted `{tag}`"),
                ));
            };
            let mut fields = line.split_whitespace();
            match fields.next() {
                None => continue,
                Some(t) if t == tag => return Ok((n, fields.collect())),
                Some(t) => return Err(self.err(n, format!("expected `{tag}`, found `{t}`"))),
            }
        }
    }

    fn scalar<T: std::str::FromStr>(&mut self, tag: &str) -> Result<T> {
        let (n, fields) = self.expect(tag)?;
        match fields.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| self.err(n, format!("bad {tag} `{v}`"))),
            _ => Err(self.err(n, format!("`{tag}` takes one value"))),
        }
    }

    fn floats(&mut self, tag: &str, len: usize) -> Result<Vec<f64>> {
        let (n, fields) = self.expect(tag)?;
        if fields.len() != len {
            return Err(self.err(
                n,
                format!("`{tag}` needs {len} values, found {}", fields.len()),
            ));
        }
        fields
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| self.err(n, format!("bad number `{f}`")))
            })
            .collect()
    }
}

pub fn policy_from_str(text: &str, source_name: &str) -> Result<ConstrainedPolicy> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        source: source_name,
    };
    let version: u32 = lines.scalar(MAGIC)?;
    if version != VERSION {
        return Err(Error::parse(
            source_name,
            format!("unsupported policy format version {version}"),
        ));
    }
    let method = match lines.scalar::<String>("method")?.as_str() {
        "cts" => TeachingMethod::Cts,
        "random" => TeachingMethod::Random,
        other => {
            return Err(Error::parse(
                source_name,
                format!("unknown teaching method `{other}`"),
            ))
        }
    };
    let budget: usize = lines.scalar("budget")?;
    let arms: usize = lines.scalar("arms")?;
    let d: usize = lines.scalar("dim")?;
    let mut posteriors = Vec::with_capacity(arms);
    for k in 0..arms {
        let (n, fields) = lines.expect("arm")?;
        let updates = match fields.as_slice() {
            [idx, "updates", u] if idx.parse() == Ok(k) => u
                .parse::<u64>()
                .map_err(|_| lines.err(n, format!("bad update count `{u}`")))?,
            _ => return Err(lines.err(n, format!("expected `arm {k} updates <count>`"))),
        };
        let b = DMatrix::from_row_slice(d, d, &lines.floats("B", d * d)?);
        let g = DVector::from_vec(lines.floats("g", d)?);
        let mean = DVector::from_vec(lines.floats("mean", d)?);
        posteriors.push(ArmPosterior::from_parts(b, g, mean, updates)?);
    }
    ConstrainedPolicy::new(posteriors, method, budget)
}

/// Writes through a temporary file so a crash never leaves a partial policy.
pub fn save_policy(path: &Path, policy: &ConstrainedPolicy) -> Result<()> {
    let tmp = path.with_extension("policy.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(policy_to_string(policy).as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<ConstrainedPolicy> {
    let text = fs::read_to_string(path)?;
    policy_from_str(&text, &path.display().to_string())
}
