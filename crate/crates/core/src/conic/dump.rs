//! Plain-text sparse-triplet dump of a [`ConicProblem`].
//!
//! ```text
//! # comment
//! goal max
//! blocks 2 3
//! scalars 1
//! constraint 0 eq 1
//! constraint 1 le 0.5
//! 0 0 1 0.25 -0.5 obj
//! s 0 0 1 0 1
//! ```
//!
//! Header lines give the goal (`max` or `min`), the block dimensions, the
//! number of scalars and each constraint's sense (`eq`, `le`, `ge`) and
//! right-hand side. Entry lines are `block row col re im id`, where `id` is a
//! constraint index or `obj`. Only entries with `row <= col` are written; the
//! lower triangle is filled in by Hermitian symmetry on load. Scalar
//! coefficients use block `s` with the scalar index as `row` and `col = 0`.

use super::{ConicProblem, Goal, LinearForm, Sense};
use crate::error::{Error, Result};
use crate::mathcore::{c, CMatrix};

fn sense_str(s: Sense) -> &'static str {
    match s {
        Sense::Eq => "eq",
        Sense::Le => "le",
        Sense::Ge => "ge",
    }
}

fn write_form(out: &mut String, form: &LinearForm, id: &str) {
    for (b, m) in &form.blocks {
        for col in 0..m.ncols() {
            for row in 0..=col {
                let v = m[(row, col)];
                let im = if row == col { 0.0 } else { v.im + 0.0 };
                if v.re != 0.0 || im != 0.0 {
                    out.push_str(&format!("{b} {row} {col} {} {im} {id}\n", v.re + 0.0));
                }
            }
        }
    }
    for &(k, a) in &form.scalars {
        if a != 0.0 {
            out.push_str(&format!("s {k} 0 {a} 0 {id}\n"));
        }
    }
}

/// Serializes a problem into the triplet format.
pub fn dump_problem(p: &ConicProblem) -> String {
    let mut out = String::new();
    out.push_str(match p.goal {
        Goal::Maximize => "goal max\n",
        Goal::Minimize => "goal min\n",
    });
    out.push_str("blocks");
    for n in &p.blocks {
        out.push_str(&format!(" {n}"));
    }
    out.push('\n');
    out.push_str(&format!("scalars {}\n", p.scalars));
    for (i, con) in p.constraints.iter().enumerate() {
        out.push_str(&format!("constraint {i} {} {}\n", sense_str(con.sense), con.rhs));
    }
    write_form(&mut out, &p.objective, "obj");
    for (i, con) in p.constraints.iter().enumerate() {
        write_form(&mut out, &con.form, &i.to_string());
    }
    out
}

fn bad(line: usize, msg: &str) -> Error {
    Error::InvalidInput(format!("dump line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| bad(line, &format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(line, &format!("cannot parse {what}")))
}

/// Parses the triplet format back into a problem.
pub fn load_problem(text: &str) -> Result<ConicProblem> {
    let mut goal = None;
    let mut blocks: Option<Vec<usize>> = None;
    let mut scalars = 0usize;
    let mut senses: Vec<Option<(Sense, f64)>> = Vec::new();
    let mut entries: Vec<(Option<usize>, usize, usize, f64, f64, Option<usize>, usize)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let head = toks.next().unwrap_or_default();
        match head {
            "goal" => {
                goal = Some(match toks.next() {
                    Some("max") => Goal::Maximize,
                    Some("min") => Goal::Minimize,
                    _ => return Err(bad(ln, "goal must be max or min")),
                });
            }
            "blocks" => {
                blocks = Some(
                    toks.map(|t| t.parse().map_err(|_| bad(ln, "cannot parse block dimension")))
                        .collect::<Result<_>>()?,
                );
            }
            "scalars" => scalars = num(toks.next(), ln, "scalar count")?,
            "constraint" => {
                let id: usize = num(toks.next(), ln, "constraint id")?;
                let sense = match toks.next() {
                    Some("eq") => Sense::Eq,
                    Some("le") => Sense::Le,
                    Some("ge") => Sense::Ge,
                    _ => return Err(bad(ln, "sense must be eq, le or ge")),
                };
                let rhs: f64 = num(toks.next(), ln, "right-hand side")?;
                if senses.len() <= id {
                    senses.resize(id + 1, None);
                }
                senses[id] = Some((sense, rhs));
            }
            _ => {
                let block = if head == "s" {
                    None
                } else {
                    Some(head.parse().map_err(|_| bad(ln, "unknown line"))?)
                };
                let row = num(toks.next(), ln, "row")?;
                let col = num(toks.next(), ln, "col")?;
                let re = num(toks.next(), ln, "real part")?;
                let im = num(toks.next(), ln, "imaginary part")?;
                let id = match toks.next() {
                    Some("obj") => None,
                    Some(t) => Some(t.parse().map_err(|_| bad(ln, "cannot parse constraint id"))?),
                    None => return Err(bad(ln, "missing constraint id")),
                };
                entries.push((block, row, col, re, im, id, ln));
            }
        }
    }

    let goal = goal.ok_or_else(|| bad(0, "missing goal line"))?;
    let blocks = blocks.ok_or_else(|| bad(0, "missing blocks line"))?;
    let mut p = ConicProblem::new(blocks.clone(), scalars, goal);
    for (i, s) in senses.iter().enumerate() {
        let (sense, rhs) = s.ok_or_else(|| bad(0, &format!("constraint {i} is not declared")))?;
        p.constrain(LinearForm::new(), sense, rhs);
    }
    // Dense accumulators per (form, block).
    let mut mats: Vec<Vec<Option<CMatrix>>> = vec![vec![None; blocks.len()]; p.constraints.len() + 1];
    for (block, row, col, re, im, id, ln) in entries {
        let slot = match id {
            None => 0,
            Some(i) if i < p.constraints.len() => i + 1,
            Some(_) => return Err(bad(ln, "undeclared constraint id")),
        };
        match block {
            None => {
                let form = if slot == 0 {
                    &mut p.objective
                } else {
                    &mut p.constraints[slot - 1].form
                };
                form.scalars.push((row, re));
            }
            Some(b) => {
                let n = *blocks.get(b).ok_or_else(|| bad(ln, "block index out of range"))?;
                if row >= n || col >= n {
                    return Err(bad(ln, "entry outside block"));
                }
                let m = mats[slot][b].get_or_insert_with(|| CMatrix::zeros(n, n));
                m[(row, col)] = c(re, im);
                m[(col, row)] = c(re, -im);
            }
        }
    }
    for (slot, per_block) in mats.into_iter().enumerate() {
        for (b, m) in per_block.into_iter().enumerate() {
            if let Some(m) = m {
                let form = if slot == 0 {
                    &mut p.objective
                } else {
                    &mut p.constraints[slot - 1].form
                };
                form.blocks.push((b, m));
            }
        }
    }
    p.validate()?;
    Ok(p)
}
