//! Plain-text matrix format for LTI models and interconnection relations.
//!
//! ```text
//! # comment
//! dims 2 2 1
//! E
//! 1 0
//! 0 1
//! J
//! 0 -1
//! 1  0
//! c
//! 0.5
//! ```
//!
//! A block starts with its name alone on a line and is followed by its rows,
//! row-major, whitespace separated. Vectors may be written as one row or as a
//! column. Omitted blocks are zero.

use nalgebra::{DMatrix, DVector};

use super::{Dims, LtiModel};
use crate::error::{Error, Result};
use crate::transform::InterconnectionSpec;

const MODEL_BLOCKS: [&str; 12] = ["E", "J", "R", "B", "P", "S", "N", "Z", "w", "Q", "v", "c"];
const RELATION_BLOCKS: [&str; 2] = ["M_ic", "N_ic"];

/// A parsed model file: the LTI data plus an optional interconnection relation.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiFile {
    pub model: LtiModel,
    pub interconnection: Option<InterconnectionSpec>,
}

struct Block {
    name: String,
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

fn parse_err(line: usize, block: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        block: block.to_string(),
        message: message.into(),
    }
}

/// The `dims` header (with its line number) and the blocks in file order.
type Tokens = (Option<(usize, Dims)>, Vec<Block>);

fn tokenize(text: &str) -> Result<Tokens> {
    let mut dims = None;
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens[0] == "dims" {
            if dims.is_some() {
                return Err(parse_err(line, "dims", "duplicate dims header"));
            }
            if tokens.len() != 4 {
                return Err(parse_err(line, "dims", "expected `dims n ell m`"));
            }
            let mut v = [0usize; 3];
            for (slot, tok) in v.iter_mut().zip(&tokens[1..]) {
                *slot = tok
                    .parse()
                    .map_err(|_| parse_err(line, "dims", format!("`{tok}` is not a count")))?;
            }
            dims = Some((line, Dims::new(v[0], v[1], v[2])));
            continue;
        }
        let is_name = tokens.len() == 1 && tokens[0].parse::<f64>().is_err();
        if is_name {
            let name = tokens[0];
            if !MODEL_BLOCKS.contains(&name) && !RELATION_BLOCKS.contains(&name) {
                return Err(parse_err(line, name, "unknown block name"));
            }
            if blocks.iter().any(|b| b.name == name) {
                return Err(parse_err(line, name, "duplicate block"));
            }
            blocks.push(Block {
                name: name.to_string(),
                line,
                rows: Vec::new(),
            });
            continue;
        }
        let Some(block) = blocks.last_mut() else {
            return Err(parse_err(line, "-", "numeric data before any block name"));
        };
        let row = tokens
            .iter()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| parse_err(line, &block.name, format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some((_, first)) = block.rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    line,
                    &block.name,
                    format!(
                        "row has {} entries, previous rows have {}",
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        block.rows.push((line, row));
    }
    Ok((dims, blocks))
}

fn block_matrix(block: &Block) -> DMatrix<f64> {
    let nrows = block.rows.len();
    let ncols = block.rows.first().map_or(0, |(_, r)| r.len());
    DMatrix::from_fn(nrows, ncols, |i, j| block.rows[i].1[j])
}

fn expect_matrix(block: &Block, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let m = block_matrix(block);
    if m.shape() != (rows, cols) && !(rows * cols == 0 && m.is_empty()) {
        let line = block.rows.last().map_or(block.line, |(l, _)| *l);
        return Err(parse_err(
            line,
            &block.name,
            format!(
                "block is {}x{}, expected {rows}x{cols}",
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| m[(i, j)]))
}

fn expect_vector(block: &Block, len: usize) -> Result<DVector<f64>> {
    let m = block_matrix(block);
    let flat: Vec<f64> = if m.nrows() == 1 {
        m.row(0).iter().copied().collect()
    } else if m.ncols() == 1 {
        m.column(0).iter().copied().collect()
    } else {
        Vec::new()
    };
    if flat.len() != len {
        return Err(parse_err(
            block.line,
            &block.name,
            format!(
                "expected a vector of length {len}, got a {}x{} block",
                m.nrows(),
                m.ncols()
            ),
        ));
    }
    Ok(DVector::from_vec(flat))
}

fn relation(blocks: &[Block], m: usize) -> Result<Option<InterconnectionSpec>> {
    let find = |name: &str| blocks.iter().find(|b| b.name == name);
    match (find("M_ic"), find("N_ic")) {
        (None, None) => Ok(None),
        (Some(mb), Some(nb)) => {
            let k = mb.rows.len();
            let m_ic = expect_matrix(mb, k, m)?;
            let n_ic = expect_matrix(nb, k, m)?;
            InterconnectionSpec::new(m_ic, n_ic)
                .map(Some)
                .map_err(|e| parse_err(nb.line, "N_ic", e.to_string()))
        }
        (Some(b), None) | (None, Some(b)) => Err(parse_err(
            b.line,
            &b.name,
            "M_ic and N_ic must be given together",
        )),
    }
}

/// Parses an LTI model file (header `dims n ell m` required).
pub fn parse_lti(text: &str) -> Result<LtiFile> {
    let (dims, blocks) = tokenize(text)?;
    let Some((_, dims)) = dims else {
        return Err(parse_err(1, "dims", "missing `dims n ell m` header"));
    };
    let Dims { n, ell, m } = dims;
    let mut lti = LtiModel::zeros(dims);
    for block in &blocks {
        match block.name.as_str() {
            "E" => lti.e = expect_matrix(block, ell, n)?,
            "J" => lti.j = expect_matrix(block, ell, ell)?,
            "R" => lti.r = expect_matrix(block, ell, ell)?,
            "B" => lti.b = expect_matrix(block, ell, m)?,
            "P" => lti.p = expect_matrix(block, ell, m)?,
            "S" => lti.s = expect_matrix(block, m, m)?,
            "N" => lti.n = expect_matrix(block, m, m)?,
            "Z" => lti.z = expect_matrix(block, ell, n)?,
            "w" => lti.w = expect_vector(block, ell)?,
            "Q" => lti.q = expect_matrix(block, n, n)?,
            "v" => lti.v = expect_vector(block, n)?,
            "c" => lti.c = expect_vector(block, 1)?[0],
            _ => {}
        }
    }
    let interconnection = relation(&blocks, m)?;
    Ok(LtiFile {
        model: lti,
        interconnection,
    })
}

/// Parses a file holding only the `M_ic` and `N_ic` blocks for `m` aggregated ports.
pub fn parse_interconnection(text: &str, m: usize) -> Result<InterconnectionSpec> {
    let (_, blocks) = tokenize(text)?;
    if let Some(b) = blocks
        .iter()
        .find(|b| !RELATION_BLOCKS.contains(&b.name.as_str()))
    {
        return Err(parse_err(
            b.line,
            &b.name,
            "only M_ic and N_ic are allowed here",
        ));
    }
    match relation(&blocks, m)? {
        Some(spec) => Ok(spec),
        None => Ok(InterconnectionSpec::new(
            DMatrix::zeros(0, m),
            DMatrix::zeros(0, m),
        )?),
    }
}
