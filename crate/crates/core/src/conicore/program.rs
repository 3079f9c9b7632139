use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

/// Cone attached to a variable block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cone {
    Free,
    Nonneg,
    /// Symmetric positive semidefinite matrices; the block size is the side.
    Psd,
}

impl Cone {
    fn tag(self) -> &'static str {
        match self {
            Cone::Free => "free",
            Cone::Nonneg => "nonneg",
            Cone::Psd => "psd",
        }
    }

    fn from_tag(s: &str) -> Option<Cone> {
        match s {
            "free" => Some(Cone::Free),
            "nonneg" => Some(Cone::Nonneg),
            "psd" => Some(Cone::Psd),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

/// A scalar variable: entry `i` of a vector block (`j == 0`), or the
/// upper-triangular entry `(i, j)`, `i <= j`, of a PSD block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    pub block: BlockId,
    pub i: usize,
    pub j: usize,
}

#[derive(Clone, Debug)]
pub struct Block {
    pub cone: Cone,
    pub size: usize,
    pub label: String,
}

impl Block {
    /// Number of addressable scalars.
    pub fn scalar_len(&self) -> usize {
        match self.cone {
            Cone::Psd => self.size * (self.size + 1) / 2,
            _ => self.size,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Equality {
    pub terms: Vec<(Var, f64)>,
    pub rhs: f64,
    pub label: String,
}

/// `min Σ c_v v  s.t.  Σ a_{iv} v = b_i,  blocks in their cones`.
///
/// A term on an off-diagonal PSD entry `(i, j)` multiplies the entry value
/// `X_ij` once, so the corresponding symmetric data matrix holds half the
/// coefficient in both `(i, j)` and `(j, i)`.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    blocks: Vec<Block>,
    objective: Vec<(Var, f64)>,
    equalities: Vec<Equality>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, cone: Cone, size: usize, label: impl Into<String>) -> BlockId {
        self.blocks.push(Block {
            cone,
            size,
            label: label.into(),
        });
        BlockId(self.blocks.len() - 1)
    }

    /// Entry `i` of a vector block.
    pub fn var(&self, block: BlockId, i: usize) -> Var {
        debug_assert!(self.blocks[block.0].cone != Cone::Psd);
        Var { block, i, j: 0 }
    }

    /// Entry `(i, j)` of a PSD block, normalized to the upper triangle.
    pub fn entry(&self, block: BlockId, i: usize, j: usize) -> Var {
        debug_assert!(self.blocks[block.0].cone == Cone::Psd);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        Var { block, i, j }
    }

    pub fn add_objective(&mut self, var: Var, coeff: f64) {
        if coeff != 0.0 {
            self.objective.push((var, coeff));
        }
    }

    pub fn add_equality(
        &mut self,
        terms: Vec<(Var, f64)>,
        rhs: f64,
        label: impl Into<String>,
    ) -> RowId {
        let terms = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        self.equalities.push(Equality {
            terms,
            rhs,
            label: label.into(),
        });
        RowId(self.equalities.len() - 1)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &Block {
        &self.blocks[id.0]
    }

    pub fn objective(&self) -> &[(Var, f64)] {
        &self.objective
    }

    pub fn equalities(&self) -> &[Equality] {
        &self.equalities
    }

    pub fn num_rows(&self) -> usize {
        self.equalities.len()
    }

    pub fn rows_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = RowId> + 'a {
        self.equalities
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.label.starts_with(prefix))
            .map(|(i, _)| RowId(i))
    }

    fn check_var(&self, v: &Var) -> Result<()> {
        let b = self
            .blocks
            .get(v.block.0)
            .ok_or_else(|| Error::InvalidParameter(format!("undeclared block {}", v.block.0)))?;
        let ok = match b.cone {
            Cone::Psd => v.i <= v.j && v.j < b.size,
            _ => v.j == 0 && v.i < b.size,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "variable ({}, {}) out of range for block '{}'",
                v.i, v.j, b.label
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.blocks {
            if b.size == 0 {
                return Err(Error::InvalidParameter(format!(
                    "block '{}' has size 0",
                    b.label
                )));
            }
        }
        for (v, c) in &self.objective {
            self.check_var(v)?;
            if !c.is_finite() {
                return Err(Error::InvalidParameter("non-finite objective".into()));
            }
        }
        for e in &self.equalities {
            if !e.rhs.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "non-finite right-hand side in row '{}'",
                    e.label
                )));
            }
            for (v, c) in &e.terms {
                self.check_var(v)?;
                if !c.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "non-finite coefficient in row '{}'",
                        e.label
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the sparse triplet dump: one `block row col value` line per
    /// nonzero, grouped under `obj` and `eq` headers.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# conic program: {} blocks, {} rows", self.blocks.len(), self.equalities.len())?;
        for (k, b) in self.blocks.iter().enumerate() {
            writeln!(w, "block {k} {} {} {}", b.cone.tag(), b.size, b.label)?;
        }
        writeln!(w, "obj")?;
        for (v, c) in &self.objective {
            writeln!(w, "{} {} {} {c:e}", v.block.0, v.i, v.j)?;
        }
        for e in &self.equalities {
            writeln!(w, "eq {:e} {}", e.rhs, e.label)?;
            for (v, c) in &e.terms {
                writeln!(w, "{} {} {} {c:e}", v.block.0, v.i, v.j)?;
            }
        }
        Ok(())
    }

    pub fn to_triplets(&self) -> String {
        let mut buf = Vec::new();
        self.write_triplets(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::InvalidParameter(format!("line {line}: {msg}"));
        let mut prog = ConicProgram::new();
        enum Section {
            None,
            Obj,
            Eq,
        }
        let mut section = Section::None;
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| bad(ln + 1, &e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let head = it.next().unwrap_or_default();
            match head {
                "block" => {
                    let _id = it.next();
                    let cone = it
                        .next()
                        .and_then(Cone::from_tag)
                        .ok_or_else(|| bad(ln + 1, "unknown cone"))?;
                    let size = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln + 1, "bad block size"))?;
                    let label = it.collect::<Vec<_>>().join(" ");
                    prog.add_block(cone, size, label);
                }
                "obj" => section = Section::Obj,
                "eq" => {
                    let rhs = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(ln + 1, "bad rhs"))?;
                    let label = it.collect::<Vec<_>>().join(" ");
                    prog.equalities.push(Equality {
                        terms: Vec::new(),
                        rhs,
                        label,
                    });
                    section = Section::Eq;
                }
                _ => {
                    let nums: Vec<&str> = line.split_whitespace().collect();
                    if nums.len() != 4 {
                        return Err(bad(ln + 1, "expected `block row col value`"));
                    }
                    let parse_u = |s: &str| s.parse::<usize>().map_err(|_| bad(ln + 1, "bad index"));
                    let var = Var {
                        block: BlockId(parse_u(nums[0])?),
                        i: parse_u(nums[1])?,
                        j: parse_u(nums[2])?,
                    };
                    let c: f64 = nums[3].parse().map_err(|_| bad(ln + 1, "bad value"))?;
                    match section {
                        Section::Obj => prog.objective.push((var, c)),
                        Section::Eq => prog
                            .equalities
                            .last_mut()
                            .expect("section implies a row")
                            .terms
                            .push((var, c)),
                        Section::None => return Err(bad(ln + 1, "triplet outside a section")),
                    }
                }
            }
        }
        prog.validate()?;
        Ok(prog)
    }

    /// Short human-readable size summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut counts: HashMap<&'static str, Vec<usize>> = HashMap::new();
        for b in &self.blocks {
            counts.entry(b.cone.tag()).or_default().push(b.size);
        }
        let _ = write!(s, "{} rows;", self.equalities.len());
        for tag in ["free", "nonneg", "psd"] {
            if let Some(v) = counts.get(tag) {
                let _ = write!(s, " {tag} {v:?}");
            }
        }
        s
    }
}
