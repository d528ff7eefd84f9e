//! SMILES and reaction-SMILES parsing.

use std::collections::HashMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, MolGraph, Reaction};

/// Parse failures, with byte offsets into the input string.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {reason}")]
    Syntax { pos: usize, reason: String },
    #[error("unsupported feature at byte {pos}: {what}")]
    Unsupported { pos: usize, what: String },
    #[error("duplicate atom map number {map_num}")]
    DuplicateMap { map_num: u32 },
    #[error("{side} molecule {index}: {source}")]
    InReaction {
        side: &'static str,
        index: usize,
        #[source]
        source: Box<ParseError>,
    },
}

fn syntax(pos: usize, reason: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        pos,
        reason: reason.into(),
    }
}

fn unsupported(pos: usize, what: impl Into<String>) -> ParseError {
    ParseError::Unsupported {
        pos,
        what: what.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<u8> {
        self.bytes.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// Consume a run of ASCII digits, returning the value if any were present.
    fn digits(&mut self) -> Option<u32> {
        let mut val: Option<u32> = None;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() {
                self.pos += 1;
                val = Some(val.unwrap_or(0) * 10 + (b - b'0') as u32);
            } else {
                break;
            }
        }
        val
    }
}

struct Parser<'a> {
    cur: Cursor<'a>,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Atom the next atom or ring closure attaches to.
    prev: Option<usize>,
    /// Saved attachment points for open branches.
    stack: Vec<usize>,
    /// Explicitly written bond symbol awaiting its second atom.
    pending: Option<BondOrder>,
    /// Open ring-closure digits: digit -> (atom, bond symbol at opening, pos).
    rings: HashMap<u32, (usize, Option<BondOrder>, usize)>,
}

impl<'a> Parser<'a> {
    fn new(s: &'a str) -> Parser<'a> {
        Parser {
            cur: Cursor {
                bytes: s.as_bytes(),
                pos: 0,
            },
            atoms: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            stack: Vec::new(),
            pending: None,
            rings: HashMap::new(),
        }
    }

    fn push_atom(&mut self, atom: Atom, pos: usize) -> Result<(), ParseError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(p) = self.prev {
            let order = self.resolve_order(p, idx);
            self.bonds.push(Bond::new(p, idx, order));
        } else if self.pending.is_some() {
            return Err(syntax(pos, "bond symbol before first atom of a fragment"));
        }
        self.pending = None;
        self.prev = Some(idx);
        Ok(())
    }

    fn resolve_order(&mut self, a: usize, b: usize) -> BondOrder {
        self.pending.take().unwrap_or({
            if self.atoms[a].aromatic && self.atoms[b].aromatic {
                BondOrder::Aromatic
            } else {
                BondOrder::Single
            }
        })
    }

    fn close_ring(&mut self, digit: u32, pos: usize) -> Result<(), ParseError> {
        let here = self
            .prev
            .ok_or_else(|| syntax(pos, "ring closure before any atom"))?;
        match self.rings.remove(&digit) {
            None => {
                self.rings.insert(digit, (here, self.pending.take(), pos));
            }
            Some((other, open_order, _)) => {
                if other == here {
                    return Err(syntax(pos, format!("ring bond {digit} closes on its own atom")));
                }
                let close_order = self.pending.take();
                let order = match (open_order, close_order) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(syntax(
                            pos,
                            format!("ring bond {digit} opened and closed with different orders"),
                        ))
                    }
                    (Some(a), _) => a,
                    (None, Some(b)) => b,
                    (None, None) => {
                        if self.atoms[other].aromatic && self.atoms[here].aromatic {
                            BondOrder::Aromatic
                        } else {
                            BondOrder::Single
                        }
                    }
                };
                if self
                    .bonds
                    .iter()
                    .any(|bd| bd.touches(other) && bd.touches(here))
                {
                    return Err(syntax(pos, "duplicate bond between two atoms"));
                }
                self.bonds.push(Bond::new(other, here, order));
            }
        }
        Ok(())
    }

    /// Parse the body of a bracket atom; the opening `[` is already consumed.
    fn bracket_atom(&mut self, open_pos: usize) -> Result<Atom, ParseError> {
        // isotope number: parsed and discarded
        let _ = self.cur.digits();

        let pos = self.cur.pos;
        let first = self
            .cur
            .bump()
            .ok_or_else(|| syntax(open_pos, "unterminated bracket atom"))?;
        let mut atom = if first.is_ascii_lowercase() {
            let elem = Element::from_symbol(&(first as char).to_ascii_uppercase().to_string())
                .filter(|e| e.supports_aromatic())
                .ok_or_else(|| {
                    unsupported(pos, format!("aromatic atom '{}'", first as char))
                })?;
            let mut a = Atom::new(elem);
            a.aromatic = true;
            a
        } else if first.is_ascii_uppercase() {
            // inside brackets a lowercase letter can only extend the symbol
            let mut sym = String::from(first as char);
            if let Some(next) = self.cur.peek() {
                if next.is_ascii_lowercase() {
                    self.cur.bump();
                    sym.push(next as char);
                }
            }
            let elem = Element::from_symbol(&sym)
                .ok_or_else(|| unsupported(pos, format!("element '{sym}'")))?;
            Atom::new(elem)
        } else {
            return Err(syntax(pos, format!("invalid atom symbol '{}'", first as char)));
        };

        loop {
            let pos = self.cur.pos;
            match self.cur.bump() {
                Some(b']') => break,
                Some(b'@') => {
                    // chirality marker: discard, including a doubled form
                    self.cur.eat(b'@');
                }
                Some(b'H') => {
                    let n = self.cur.digits().unwrap_or(1);
                    if n > 9 {
                        return Err(syntax(pos, "hydrogen count out of range"));
                    }
                    atom.h_count = n as u8;
                }
                Some(b'+') => {
                    let mut charge = 1i32;
                    if let Some(n) = self.cur.digits() {
                        charge = n as i32;
                    } else {
                        while self.cur.eat(b'+') {
                            charge += 1;
                        }
                    }
                    atom.charge = charge;
                }
                Some(b'-') => {
                    let mut charge = -1i32;
                    if let Some(n) = self.cur.digits() {
                        charge = -(n as i32);
                    } else {
                        while self.cur.eat(b'-') {
                            charge -= 1;
                        }
                    }
                    atom.charge = charge;
                }
                Some(b':') => {
                    let n = self
                        .cur
                        .digits()
                        .ok_or_else(|| syntax(pos, "missing atom map number after ':'"))?;
                    if n == 0 {
                        return Err(syntax(pos, "atom map number must be positive"));
                    }
                    atom.map_num = Some(n);
                }
                Some(other) => {
                    return Err(syntax(
                        pos,
                        format!("unexpected '{}' in bracket atom", other as char),
                    ))
                }
                None => return Err(syntax(open_pos, "unterminated bracket atom")),
            }
        }
        Ok(atom)
    }

    fn run(mut self, source: &str) -> Result<MolGraph, ParseError> {
        while let Some(b) = self.cur.peek() {
            let pos = self.cur.pos;
            match b {
                b'[' => {
                    self.cur.bump();
                    let atom = self.bracket_atom(pos)?;
                    self.push_atom(atom, pos)?;
                }
                b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                    self.cur.bump();
                    let elem =
                        Element::from_symbol(&(b as char).to_ascii_uppercase().to_string())
                            .unwrap();
                    let mut atom = Atom::new(elem);
                    atom.aromatic = true;
                    self.push_atom(atom, pos)?;
                }
                b'A'..=b'Z' => {
                    self.cur.bump();
                    let mut sym = String::from(b as char);
                    if let Some(next) = self.cur.peek() {
                        if next.is_ascii_lowercase() {
                            let mut two = sym.clone();
                            two.push(next as char);
                            if Element::from_symbol(&two).is_some() {
                                self.cur.bump();
                                sym = two;
                            }
                        }
                    }
                    let elem = Element::from_symbol(&sym)
                        .ok_or_else(|| unsupported(pos, format!("element '{sym}'")))?;
                    self.push_atom(Atom::new(elem), pos)?;
                }
                b'-' | b'/' | b'\\' => {
                    self.cur.bump();
                    if self.pending.is_some() {
                        return Err(syntax(pos, "two bond symbols in a row"));
                    }
                    self.pending = Some(BondOrder::Single);
                }
                b'=' | b'#' | b':' => {
                    self.cur.bump();
                    if self.pending.is_some() {
                        return Err(syntax(pos, "two bond symbols in a row"));
                    }
                    self.pending = Some(match b {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    });
                }
                b'(' => {
                    self.cur.bump();
                    let p = self
                        .prev
                        .ok_or_else(|| syntax(pos, "branch opened before any atom"))?;
                    if self.pending.is_some() {
                        return Err(syntax(pos, "bond symbol before '('"));
                    }
                    self.stack.push(p);
                }
                b')' => {
                    self.cur.bump();
                    if self.pending.is_some() {
                        return Err(syntax(pos, "bond symbol before ')'"));
                    }
                    self.prev = Some(
                        self.stack
                            .pop()
                            .ok_or_else(|| syntax(pos, "unmatched ')'"))?,
                    );
                }
                b'0'..=b'9' => {
                    self.cur.bump();
                    self.close_ring((b - b'0') as u32, pos)?;
                }
                b'%' => {
                    self.cur.bump();
                    let (d1, d2) = match (self.cur.peek(), self.cur.peek_at(1)) {
                        (Some(a), Some(b)) if a.is_ascii_digit() && b.is_ascii_digit() => (a, b),
                        _ => return Err(syntax(pos, "'%' must be followed by two digits")),
                    };
                    self.cur.bump();
                    self.cur.bump();
                    let digit = ((d1 - b'0') as u32) * 10 + (d2 - b'0') as u32;
                    self.close_ring(digit, pos)?;
                }
                b'.' => {
                    self.cur.bump();
                    if self.pending.is_some() {
                        return Err(syntax(pos, "bond symbol before '.'"));
                    }
                    if self.prev.is_none() {
                        return Err(syntax(pos, "empty fragment before '.'"));
                    }
                    self.prev = None;
                }
                b'*' => return Err(unsupported(pos, "wildcard atom '*'")),
                b'>' => return Err(syntax(pos, "'>' is only valid in reaction lines")),
                other => {
                    return Err(syntax(
                        pos,
                        format!("unexpected character '{}'", other as char),
                    ))
                }
            }
        }

        if self.atoms.is_empty() {
            return Err(syntax(0, "empty molecule"));
        }
        if self.pending.is_some() {
            return Err(syntax(self.cur.pos, "dangling bond symbol at end of input"));
        }
        if !self.stack.is_empty() {
            return Err(syntax(self.cur.pos, "unclosed branch"));
        }
        if let Some((&digit, &(_, _, pos))) = self.rings.iter().min_by_key(|(_, v)| v.2) {
            return Err(syntax(pos, format!("unclosed ring bond {digit}")));
        }

        let mut seen = HashMap::new();
        for (i, atom) in self.atoms.iter().enumerate() {
            if let Some(m) = atom.map_num {
                if seen.insert(m, i).is_some() {
                    return Err(ParseError::DuplicateMap { map_num: m });
                }
            }
        }

        Ok(MolGraph {
            atoms: self.atoms,
            bonds: self.bonds,
            smiles_source: source.to_string(),
        })
    }
}

/// Parse one SMILES string into a molecular graph.
pub fn parse_smiles(s: &str) -> Result<MolGraph, ParseError> {
    if s.is_empty() {
        return Err(syntax(0, "empty input"));
    }
    Parser::new(s).run(s)
}

/// Parse one reaction line: `reactants[>>products][\t template_id]`.
pub fn parse_reaction(line: &str) -> Result<Reaction, ParseError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let (smiles_part, template_id) = match line.split_once('\t') {
        None => (line, None),
        Some((head, tail)) => {
            let tail = tail.trim();
            let id = tail.parse::<u32>().map_err(|_| {
                syntax(
                    head.len() + 1,
                    format!("template id '{tail}' is not a non-negative integer"),
                )
            })?;
            (head, Some(id))
        }
    };
    let smiles_part = smiles_part.trim();
    if smiles_part.is_empty() {
        return Err(syntax(0, "empty reaction line"));
    }

    let (reactant_block, product_block) = match smiles_part.find(">>") {
        None => {
            if smiles_part.contains('>') {
                return Err(unsupported(
                    smiles_part.find('>').unwrap(),
                    "single '>' (agent blocks)",
                ));
            }
            (smiles_part, None)
        }
        Some(at) => {
            let products = &smiles_part[at + 2..];
            if products.contains('>') {
                return Err(unsupported(at + 2, "more than one reaction arrow"));
            }
            (&smiles_part[..at], Some(products))
        }
    };

    let parse_block = |block: &str, side: &'static str| -> Result<Vec<MolGraph>, ParseError> {
        if block.is_empty() {
            return Ok(Vec::new());
        }
        block
            .split('.')
            .enumerate()
            .map(|(index, piece)| {
                parse_smiles(piece).map_err(|e| ParseError::InReaction {
                    side,
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    };

    let reactants = parse_block(reactant_block, "reactant")?;
    if reactants.is_empty() {
        return Err(syntax(0, "reaction has no reactants"));
    }
    let products = match product_block {
        Some(block) => parse_block(block, "product")?,
        None => Vec::new(),
    };

    // A map number may appear at most once on each side.
    for (side, mols) in [("reactant", &reactants), ("product", &products)] {
        let mut seen = std::collections::HashSet::new();
        for m in mols.iter() {
            for atom in &m.atoms {
                if let Some(num) = atom.map_num {
                    if !seen.insert(num) {
                        let _ = side;
                        return Err(ParseError::DuplicateMap { map_num: num });
                    }
                }
            }
        }
    }

    Ok(Reaction {
        reactants,
        products,
        template_id,
    })
}

/// A parsed reaction file: reactions that parsed, and per-line failures.
#[derive(Debug, Default)]
pub struct ReactionFile {
    /// `(1-based line number, reaction)` in file order.
    pub reactions: Vec<(usize, Reaction)>,
    /// `(1-based line number, error)` for lines that failed to parse.
    pub errors: Vec<(usize, ParseError)>,
}

/// Parse a whole reaction file: one reaction per line, `#` comments and
/// blank lines skipped. Never fails as a whole; per-line errors are
/// collected for the caller to report or treat as fatal.
pub fn parse_reaction_file(text: &str) -> ReactionFile {
    let mut out = ReactionFile::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_reaction(line) {
            Ok(r) => out.reactions.push((line_no, r)),
            Err(e) => out.errors.push((line_no, e)),
        }
    }
    out
}
