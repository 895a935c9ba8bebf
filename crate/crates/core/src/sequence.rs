//! Aligned nucleotide data and the relaxed FASTA format.

use crate::error::{Error, Result};
use crate::subst_model::N_STATES;
use crate::tree::Tree;

const ALPHABET: [u8; N_STATES] = [b'A', b'C', b'G', b'T'];

pub fn encode_base(c: u8) -> Option<u8> {
    match c.to_ascii_uppercase() {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

pub fn decode_base(state: u8) -> char {
    ALPHABET[state as usize] as char
}

/// `n` aligned sequences of `m` sites with states in `0..4`.
///
/// Stored site-major so one column is a contiguous slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceData {
    names: Vec<String>,
    n_sites: usize,
    cells: Vec<u8>,
}

/// How FASTA records are matched to tree leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafMapping {
    /// Record `i` is leaf `i + 1` (leaf order is Newick text order).
    #[default]
    ByPosition,
    /// Records are matched to leaves by name.
    ByName,
}

impl SequenceData {
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if names.len() != rows.len() {
            return Err(Error::Data(format!(
                "{} names for {} sequences",
                names.len(),
                rows.len()
            )));
        }
        let n_sites = rows.first().map_or(0, Vec::len);
        for (name, row) in names.iter().zip(&rows) {
            if row.len() != n_sites {
                return Err(Error::Data(format!(
                    "sequence {name:?} has {} sites, expected {n_sites}",
                    row.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&s| s as usize >= N_STATES) {
                return Err(Error::Data(format!("sequence {name:?} has state {bad}")));
            }
        }
        let n = rows.len();
        let mut cells = vec![0u8; n * n_sites];
        for (taxon, row) in rows.iter().enumerate() {
            for (site, &s) in row.iter().enumerate() {
                cells[site * n + taxon] = s;
            }
        }
        Ok(Self {
            names,
            n_sites,
            cells,
        })
    }

    /// Builds directly from site-major cells.
    pub(crate) fn from_columns(names: Vec<String>, n_sites: usize, cells: Vec<u8>) -> Self {
        debug_assert_eq!(cells.len(), names.len() * n_sites);
        Self {
            names,
            n_sites,
            cells,
        }
    }

    pub fn n_sequences(&self) -> usize {
        self.names.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// States of every sequence at `site` (0-based).
    pub fn column(&self, site: usize) -> &[u8] {
        let n = self.n_sequences();
        &self.cells[site * n..(site + 1) * n]
    }

    pub fn get(&self, taxon: usize, site: usize) -> u8 {
        self.cells[site * self.n_sequences() + taxon]
    }

    pub fn row(&self, taxon: usize) -> Vec<u8> {
        (0..self.n_sites).map(|s| self.get(taxon, s)).collect()
    }

    /// Raw site-major cells; equal-shaped datasets compare cell by cell.
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn parse_fasta(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('>') {
                let name = header.split_whitespace().next().unwrap_or("").to_string();
                if name.is_empty() {
                    return Err(Error::Data(format!("line {}: empty FASTA header", lineno + 1)));
                }
                names.push(name);
                rows.push(Vec::new());
                continue;
            }
            let Some(row) = rows.last_mut() else {
                return Err(Error::Data(format!(
                    "line {}: sequence data before the first header",
                    lineno + 1
                )));
            };
            for c in line.bytes().filter(|c| !c.is_ascii_whitespace()) {
                let state = encode_base(c).ok_or_else(|| {
                    Error::Data(format!(
                        "line {}: unsupported character {:?}",
                        lineno + 1,
                        c as char
                    ))
                })?;
                row.push(state);
            }
        }
        Self::from_rows(names, rows)
    }

    pub fn to_fasta(&self) -> String {
        let mut out = String::new();
        for (taxon, name) in self.names.iter().enumerate() {
            out.push('>');
            out.push_str(name);
            out.push('\n');
            out.extend((0..self.n_sites).map(|s| decode_base(self.get(taxon, s))));
            out.push('\n');
        }
        out
    }

    /// Reorders records so that row `i` holds leaf `i + 1` of `tree`.
    pub fn align_to_tree(&self, tree: &Tree, mapping: LeafMapping) -> Result<Self> {
        let n = tree.n_leaves();
        if self.n_sequences() != n {
            return Err(Error::Data(format!(
                "tree has {n} leaves but data has {} sequences",
                self.n_sequences()
            )));
        }
        let order: Vec<usize> = match mapping {
            LeafMapping::ByPosition => (0..n).collect(),
            LeafMapping::ByName => tree
                .leaf_names()
                .iter()
                .map(|leaf| {
                    self.names.iter().position(|x| x == leaf).ok_or_else(|| {
                        Error::Data(format!("no sequence named {leaf:?} for tree leaf"))
                    })
                })
                .collect::<Result<_>>()?,
        };
        let names = match mapping {
            LeafMapping::ByPosition => self.names.clone(),
            LeafMapping::ByName => tree.leaf_names().to_vec(),
        };
        let mut cells = Vec::with_capacity(self.cells.len());
        for site in 0..self.n_sites {
            let col = self.column(site);
            cells.extend(order.iter().map(|&src| col[src]));
        }
        Ok(Self::from_columns(names, self.n_sites, cells))
    }
}
