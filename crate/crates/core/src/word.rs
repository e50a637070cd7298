//! Words on the two free generators `a` and `b`.
//!
//! Two representations are used. [`FlatWord`] is the freely reduced
//! syllable-normal form: a sequence of `(generator, exponent)` runs with
//! adjacent runs on distinct generators. [`SlpWord`] is a straight-line
//! program — an acyclic graph of products and integer powers — which is the
//! only practical representation for the recursively constructed words whose
//! flat expansions are astronomically long.
//!
//! Text form: `a`, `b` are the generators, `A`, `B` their inverses, `^` takes
//! integer powers and parentheses group, e.g. `(a^31 B)^27 a (a^31 B) A`.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the two free generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gen {
    A,
    B,
}

impl Gen {
    /// The other generator.
    pub fn other(self) -> Gen {
        match self {
            Gen::A => Gen::B,
            Gen::B => Gen::A,
        }
    }

    fn letter(self, positive: bool) -> char {
        match (self, positive) {
            (Gen::A, true) => 'a',
            (Gen::A, false) => 'A',
            (Gen::B, true) => 'b',
            (Gen::B, false) => 'B',
        }
    }
}

/// Errors from word construction, parsing and expansion.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    /// An expansion or symbolic computation would exceed the given limit.
    #[error("expansion would exceed the limit of {limit} letters")]
    TooLarge { limit: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    /// The empty word has no straight-line program representation.
    #[error("the identity word has no straight-line program form")]
    EmptyWord,
    #[error("malformed straight-line program: {0}")]
    MalformedSlp(String),
}

/// A freely reduced word in syllable normal form.
///
/// Invariants: adjacent syllables use distinct generators, every exponent is
/// a nonzero machine integer, and the empty sequence is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FlatWord {
    sylls: Vec<(Gen, i64)>,
}

impl FlatWord {
    /// The identity word.
    pub fn identity() -> FlatWord {
        FlatWord { sylls: Vec::new() }
    }

    /// A single generator.
    pub fn generator(g: Gen) -> FlatWord {
        FlatWord { sylls: vec![(g, 1)] }
    }

    /// Free reduction of an arbitrary syllable sequence.
    ///
    /// Zero exponents are dropped, runs on the same generator are merged and
    /// cancellations are propagated, so the result is in normal form.
    pub fn reduce<I: IntoIterator<Item = (Gen, i64)>>(sylls: I) -> FlatWord {
        let mut out: Vec<(Gen, i64)> = Vec::new();
        for (g, e) in sylls {
            push_syllable(&mut out, g, e);
        }
        FlatWord { sylls: out }
    }

    /// The syllables of the normal form.
    pub fn syllables(&self) -> &[(Gen, i64)] {
        &self.sylls
    }

    pub fn is_identity(&self) -> bool {
        self.sylls.is_empty()
    }

    pub fn syllable_len(&self) -> usize {
        self.sylls.len()
    }

    /// Total letter count, i.e. the sum of absolute exponents.
    pub fn letter_len(&self) -> u128 {
        self.sylls.iter().map(|&(_, e)| e.unsigned_abs() as u128).sum()
    }

    /// Reduced product `self · other`.
    pub fn concat(&self, other: &FlatWord) -> FlatWord {
        let mut out = self.sylls.clone();
        for &(g, e) in &other.sylls {
            push_syllable(&mut out, g, e);
        }
        FlatWord { sylls: out }
    }

    /// The inverse word (reversed syllables with negated exponents).
    pub fn invert(&self) -> FlatWord {
        FlatWord {
            sylls: self.sylls.iter().rev().map(|&(g, e)| (g, -e)).collect(),
        }
    }

    /// Abelianization image.
    pub fn exponent_sum(&self) -> ExponentVector {
        let mut e_a = BigInt::zero();
        let mut e_b = BigInt::zero();
        for &(g, e) in &self.sylls {
            match g {
                Gen::A => e_a += e,
                Gen::B => e_b += e,
            }
        }
        ExponentVector::new(e_a, e_b)
    }

    /// The word as a sequence of single letters, `(generator, sign)`.
    pub fn letters(&self) -> Vec<(Gen, bool)> {
        let mut out = Vec::new();
        for &(g, e) in &self.sylls {
            for _ in 0..e.unsigned_abs() {
                out.push((g, e > 0));
            }
        }
        out
    }

    /// Cyclic reduction: returns `(s, c)` with `self = s · c · s⁻¹` and `c`
    /// cyclically reduced (its first letter is not the inverse of its last).
    pub fn cyclic_reduce(&self) -> (FlatWord, FlatWord) {
        let mut core = self.sylls.clone();
        let mut conj: Vec<(Gen, i64)> = Vec::new();
        loop {
            if core.len() < 2 {
                break;
            }
            let (fg, fe) = core[0];
            let (lg, le) = core[core.len() - 1];
            if fg != lg || fe.signum() == le.signum() {
                break;
            }
            // Opposite signs on the same generator: peel matching letters.
            let t = fe.abs().min(le.abs());
            let sgn = fe.signum();
            conj.push((fg, sgn * t));
            let n = core.len();
            core[0].1 -= sgn * t;
            core[n - 1].1 += sgn * t;
            if core[n - 1].1 == 0 {
                core.pop();
            }
            if core[0].1 == 0 {
                core.remove(0);
            }
        }
        (FlatWord { sylls: conj }, FlatWord { sylls: core })
    }

    /// Free-group conjugacy test: cyclic reductions must be cyclic rotations
    /// of one another.
    pub fn is_conjugate(&self, other: &FlatWord) -> bool {
        let (_, cu) = self.cyclic_reduce();
        let (_, cv) = other.cyclic_reduce();
        let lu = cu.letters();
        let lv = cv.letters();
        if lu.len() != lv.len() {
            return false;
        }
        if lu.is_empty() {
            return true;
        }
        let doubled: Vec<_> = lu.iter().chain(lu.iter()).copied().collect();
        doubled.windows(lv.len()).any(|w| w == lv.as_slice())
    }

    /// Minimal rotation of the cyclic reduction, under the letter order
    /// `a < A < b < B`; conjugate words share this form. With
    /// `merge_inverse`, the inverse word's rotations compete too, merging
    /// the classes of `w` and `w⁻¹`.
    pub fn canonical_cyclic_form(&self, merge_inverse: bool) -> Vec<(Gen, bool)> {
        fn rank(l: (Gen, bool)) -> u8 {
            let base = match l.0 {
                Gen::A => 0,
                Gen::B => 2,
            };
            base + if l.1 { 0 } else { 1 }
        }
        let (_, core) = self.cyclic_reduce();
        let letters = core.letters();
        if letters.is_empty() {
            return letters;
        }
        let mut best: Option<Vec<(Gen, bool)>> = None;
        let mut consider = |seq: &[(Gen, bool)]| {
            for r in 0..seq.len() {
                let rot: Vec<_> = seq[r..].iter().chain(seq[..r].iter()).copied().collect();
                let better = best
                    .as_ref()
                    .map_or(true, |b| rot.iter().map(|&l| rank(l)).lt(b.iter().map(|&l| rank(l))));
                if better {
                    best = Some(rot);
                }
            }
        };
        consider(&letters);
        if merge_inverse {
            let inv: Vec<_> = letters.iter().rev().map(|&(g, s)| (g, !s)).collect();
            consider(&inv);
        }
        best.unwrap()
    }

    /// Compressed form: one power node per syllable. `None` for the identity.
    pub fn to_slp(&self) -> Option<SlpWord> {
        if self.is_identity() {
            return None;
        }
        let mut b = SlpBuilder::new();
        let ids: Vec<usize> = self
            .sylls
            .iter()
            .map(|&(g, e)| {
                let leaf = b.leaf(g);
                b.power(leaf, BigInt::from(e))
            })
            .collect();
        let root = b.product(ids);
        Some(b.finish(root))
    }

    /// Parses the text form, expanding powers; the expansion is capped at
    /// `limit` letters. `1` denotes the identity.
    pub fn parse_with_limit(text: &str, limit: usize) -> Result<FlatWord, WordError> {
        if text.trim() == "1" {
            return Ok(FlatWord::identity());
        }
        let tree = parse_tree(text)?;
        match tree {
            None => Ok(FlatWord::identity()),
            Some(t) => {
                let slp = tree_to_slp(&t);
                slp.expand(limit)
            }
        }
    }

    /// Parses the text form with a default expansion cap of 10⁶ letters.
    pub fn parse(text: &str) -> Result<FlatWord, WordError> {
        FlatWord::parse_with_limit(text, 1_000_000)
    }
}

impl fmt::Display for FlatWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sylls.is_empty() {
            return write!(f, "1");
        }
        for (idx, &(g, e)) in self.sylls.iter().enumerate() {
            if idx > 0 {
                write!(f, " ")?;
            }
            let c = g.letter(e > 0);
            if e.abs() == 1 {
                write!(f, "{c}")?;
            } else {
                write!(f, "{}^{}", c, e.abs())?;
            }
        }
        Ok(())
    }
}

fn push_syllable(out: &mut Vec<(Gen, i64)>, g: Gen, e: i64) {
    if e == 0 {
        return;
    }
    match out.last_mut() {
        Some(&mut (lg, ref mut le)) if lg == g => {
            *le = le.checked_add(e).expect("syllable exponent overflow");
            if *le == 0 {
                out.pop();
            }
        }
        _ => out.push((g, e)),
    }
}

/// Abelianization vector of a word: exponent sums on `a` and `b` and their
/// total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentVector {
    pub e_a: BigInt,
    pub e_b: BigInt,
    pub total: BigInt,
}

impl ExponentVector {
    pub fn new(e_a: BigInt, e_b: BigInt) -> ExponentVector {
        let total = &e_a + &e_b;
        ExponentVector { e_a, e_b, total }
    }

    pub fn add(&self, other: &ExponentVector) -> ExponentVector {
        ExponentVector::new(&self.e_a + &other.e_a, &self.e_b + &other.e_b)
    }
}

/// A node of a straight-line program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SlpNode {
    Leaf(Gen),
    /// Ordered product of at least two children.
    Product(Vec<usize>),
    /// Nonzero integer power of a child.
    Power(usize, BigInt),
}

/// A compressed word: an acyclic graph of [`SlpNode`]s with a designated
/// root. Children always precede their parents in the node list, so the
/// graph is topologically ordered by construction. Structurally identical
/// nodes may be shared; equality compares unfoldings, not node identity.
///
/// The identity word is deliberately not representable; see
/// [`FlatWord::to_slp`].
#[derive(Debug, Clone)]
pub struct SlpWord {
    nodes: Vec<SlpNode>,
    root: usize,
}

impl SlpWord {
    /// A single-generator word.
    pub fn generator(g: Gen) -> SlpWord {
        SlpWord { nodes: vec![SlpNode::Leaf(g)], root: 0 }
    }

    pub fn nodes(&self) -> &[SlpNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Rebuilds from raw parts, checking the structural invariants: child
    /// indices strictly below their parent, nonzero powers, products of
    /// arity ≥ 2, and a root inside the pool. Nodes unreachable from the
    /// root are dropped.
    pub fn from_parts(nodes: Vec<SlpNode>, root: usize) -> Result<SlpWord, WordError> {
        if root >= nodes.len() {
            return Err(WordError::MalformedSlp(format!(
                "root {root} out of range ({} nodes)",
                nodes.len()
            )));
        }
        for (i, node) in nodes.iter().enumerate() {
            match node {
                SlpNode::Leaf(_) => {}
                SlpNode::Product(ch) => {
                    if ch.len() < 2 {
                        return Err(WordError::MalformedSlp(format!(
                            "product node {i} has arity {}",
                            ch.len()
                        )));
                    }
                    if ch.iter().any(|&c| c >= i) {
                        return Err(WordError::MalformedSlp(format!(
                            "node {i} references a non-preceding child"
                        )));
                    }
                }
                SlpNode::Power(c, e) => {
                    if *c >= i {
                        return Err(WordError::MalformedSlp(format!(
                            "node {i} references a non-preceding child"
                        )));
                    }
                    if e.is_zero() {
                        return Err(WordError::MalformedSlp(format!("node {i} has zero power")));
                    }
                }
            }
        }
        Ok(prune(nodes, root))
    }

    /// Product of several words; pools are merged with structural sharing.
    pub fn product(factors: &[&SlpWord]) -> SlpWord {
        assert!(!factors.is_empty(), "empty product");
        let mut b = SlpBuilder::new();
        let roots: Vec<usize> = factors.iter().map(|w| b.embed(w)).collect();
        let root = b.product(roots);
        b.finish(root)
    }

    /// Integer power; `e` must be nonzero.
    pub fn power(word: &SlpWord, e: &BigInt) -> SlpWord {
        assert!(!e.is_zero(), "zero power");
        let mut b = SlpBuilder::new();
        let base = b.embed(word);
        let root = b.power(base, e.clone());
        b.finish(root)
    }

    pub fn inverse(word: &SlpWord) -> SlpWord {
        SlpWord::power(word, &BigInt::from(-1))
    }

    /// Replaces every `a`-leaf of `template` by `u` and every `b`-leaf by
    /// `v`, preserving sharing. The template's formal letters `x`, `y` are
    /// identified with `a`, `b`.
    pub fn substitute(template: &SlpWord, u: &SlpWord, v: &SlpWord) -> SlpWord {
        let mut b = SlpBuilder::new();
        let ur = b.embed(u);
        let vr = b.embed(v);
        let mut map: Vec<Option<usize>> = vec![None; template.nodes.len()];
        for (i, node) in template.nodes.iter().enumerate() {
            let id = match node {
                SlpNode::Leaf(Gen::A) => ur,
                SlpNode::Leaf(Gen::B) => vr,
                SlpNode::Product(ch) => {
                    let ch: Vec<usize> = ch.iter().map(|&c| map[c].unwrap()).collect();
                    b.product(ch)
                }
                SlpNode::Power(c, e) => {
                    let c = map[*c].unwrap();
                    b.power(c, e.clone())
                }
            };
            map[i] = Some(id);
        }
        let root = map[template.root].unwrap();
        b.finish(root)
    }

    /// Swaps the roles of the two generators in every leaf.
    pub fn swap_generators(&self) -> SlpWord {
        let mut nodes = self.nodes.clone();
        for node in &mut nodes {
            if let SlpNode::Leaf(g) = node {
                *g = g.other();
            }
        }
        SlpWord { nodes, root: self.root }
    }

    /// Abelianization image, by linear recursion over the graph: products
    /// add, powers scale.
    pub fn exponent_sum(&self) -> ExponentVector {
        let mut memo: Vec<Option<ExponentVector>> = vec![None; self.nodes.len()];
        for i in 0..=self.root {
            let v = match &self.nodes[i] {
                SlpNode::Leaf(Gen::A) => ExponentVector::new(BigInt::one(), BigInt::zero()),
                SlpNode::Leaf(Gen::B) => ExponentVector::new(BigInt::zero(), BigInt::one()),
                SlpNode::Product(ch) => {
                    let mut acc = ExponentVector::new(BigInt::zero(), BigInt::zero());
                    for &c in ch {
                        acc = acc.add(memo[c].as_ref().unwrap());
                    }
                    acc
                }
                SlpNode::Power(c, e) => {
                    let base = memo[*c].as_ref().unwrap();
                    ExponentVector::new(&base.e_a * e, &base.e_b * e)
                }
            };
            memo[i] = Some(v);
        }
        memo[self.root].take().unwrap()
    }

    /// Fully reduced flat expansion, provided it fits within `limit`
    /// letters.
    ///
    /// Powers of a non-trivial base are materialized through the cyclic
    /// decomposition `base = s · c · s⁻¹`, whose powers concatenate without
    /// cancellation, so the size check is exact for them.
    pub fn expand(&self, limit: usize) -> Result<FlatWord, WordError> {
        let too_large = || WordError::TooLarge { limit };
        let mut memo: Vec<Option<FlatWord>> = vec![None; self.nodes.len()];
        for i in 0..=self.root {
            let w = match &self.nodes[i] {
                SlpNode::Leaf(g) => FlatWord::generator(*g),
                SlpNode::Product(ch) => {
                    let mut acc = FlatWord::identity();
                    for &c in ch {
                        acc = acc.concat(memo[c].as_ref().unwrap());
                        if acc.letter_len() > limit as u128 {
                            return Err(too_large());
                        }
                    }
                    acc
                }
                SlpNode::Power(c, e) => {
                    let base = memo[*c].as_ref().unwrap();
                    expand_power(base, e, limit)?
                }
            };
            memo[i] = Some(w);
        }
        Ok(memo[self.root].take().unwrap())
    }

    /// Text form; parses back to a structurally equal program.
    pub fn to_text(&self) -> String {
        let mut memo: Vec<Option<String>> = vec![None; self.nodes.len()];
        for i in 0..=self.root {
            let s = match &self.nodes[i] {
                SlpNode::Leaf(g) => g.letter(true).to_string(),
                SlpNode::Product(ch) => {
                    let parts: Vec<String> = ch
                        .iter()
                        .map(|&c| {
                            let inner = memo[c].as_ref().unwrap();
                            match &self.nodes[c] {
                                SlpNode::Product(_) => format!("({inner})"),
                                _ => inner.clone(),
                            }
                        })
                        .collect();
                    parts.join(" ")
                }
                SlpNode::Power(c, e) => {
                    let inner = memo[*c].as_ref().unwrap();
                    match &self.nodes[*c] {
                        SlpNode::Leaf(g) => {
                            let c = g.letter(e.is_positive());
                            let abs = e.abs();
                            if abs.is_one() {
                                c.to_string()
                            } else {
                                format!("{c}^{abs}")
                            }
                        }
                        _ => format!("({inner})^{e}"),
                    }
                }
            };
            memo[i] = Some(s);
        }
        memo[self.root].take().unwrap()
    }

    /// Parses the text form into a program; the identity (empty text) is
    /// rejected with [`WordError::EmptyWord`].
    pub fn parse(text: &str) -> Result<SlpWord, WordError> {
        match parse_tree(text)? {
            None => Err(WordError::EmptyWord),
            Some(t) => Ok(tree_to_slp(&t)),
        }
    }
}

/// Structural equality of unfoldings, memoized over node pairs.
impl PartialEq for SlpWord {
    fn eq(&self, other: &SlpWord) -> bool {
        fn eq_at(
            a: &SlpWord,
            b: &SlpWord,
            ia: usize,
            ib: usize,
            memo: &mut HashMap<(usize, usize), bool>,
        ) -> bool {
            if let Some(&r) = memo.get(&(ia, ib)) {
                return r;
            }
            let r = match (&a.nodes[ia], &b.nodes[ib]) {
                (SlpNode::Leaf(x), SlpNode::Leaf(y)) => x == y,
                (SlpNode::Product(xs), SlpNode::Product(ys)) => {
                    xs.len() == ys.len()
                        && xs
                            .iter()
                            .zip(ys.iter())
                            .all(|(&x, &y)| eq_at(a, b, x, y, memo))
                }
                (SlpNode::Power(x, ex), SlpNode::Power(y, ey)) => {
                    ex == ey && eq_at(a, b, *x, *y, memo)
                }
                _ => false,
            };
            memo.insert((ia, ib), r);
            r
        }
        eq_at(self, other, self.root, other.root, &mut HashMap::new())
    }
}

impl Eq for SlpWord {}

fn expand_power(base: &FlatWord, e: &BigInt, limit: usize) -> Result<FlatWord, WordError> {
    let too_large = || WordError::TooLarge { limit };
    if base.is_identity() {
        return Ok(FlatWord::identity());
    }
    let (s, core) = base.cyclic_reduce();
    debug_assert!(!core.is_identity(), "reduced nonempty word has nonempty cyclic core");
    let abs_e = e.abs();
    let core_len = BigInt::from(core.letter_len());
    // Powers of the cyclic core concatenate without cancellation, so this
    // bound is the exact reduced letter count.
    let total = BigInt::from(2 * s.letter_len()) + &core_len * &abs_e;
    if total > BigInt::from(limit as u128) {
        return Err(too_large());
    }
    let reps = abs_e.to_u64().ok_or_else(too_large)?;
    let block = if e.is_negative() { core.invert() } else { core };
    let mut sylls = s.sylls.clone();
    for _ in 0..reps {
        for &(g, ex) in &block.sylls {
            push_syllable(&mut sylls, g, ex);
        }
    }
    for &(g, ex) in s.invert().sylls.iter() {
        push_syllable(&mut sylls, g, ex);
    }
    Ok(FlatWord { sylls })
}

/// Drops the nodes not reachable from `root` and renumbers. Reachable nodes
/// all have indices ≤ root, so the root ends up last.
fn prune(nodes: Vec<SlpNode>, root: usize) -> SlpWord {
    let mut keep = vec![false; root + 1];
    keep[root] = true;
    for i in (0..=root).rev() {
        if !keep[i] {
            continue;
        }
        match &nodes[i] {
            SlpNode::Leaf(_) => {}
            SlpNode::Product(ch) => ch.iter().for_each(|&c| keep[c] = true),
            SlpNode::Power(c, _) => keep[*c] = true,
        }
    }
    if keep.iter().all(|&k| k) && root + 1 == nodes.len() {
        return SlpWord { nodes, root };
    }
    let mut map = vec![usize::MAX; root + 1];
    let mut out = Vec::with_capacity(keep.iter().filter(|&&k| k).count());
    for (i, node) in nodes.into_iter().enumerate().take(root + 1) {
        if !keep[i] {
            continue;
        }
        map[i] = out.len();
        out.push(match node {
            SlpNode::Leaf(g) => SlpNode::Leaf(g),
            SlpNode::Product(ch) => SlpNode::Product(ch.iter().map(|&c| map[c]).collect()),
            SlpNode::Power(c, e) => SlpNode::Power(map[c], e),
        });
    }
    let root = map[root];
    SlpWord { nodes: out, root }
}

/// Graph construction helper with hash-consing: structurally identical nodes
/// are created once, so towers of substitutions stay compact.
pub struct SlpBuilder {
    nodes: Vec<SlpNode>,
    memo: HashMap<SlpNode, usize>,
}

impl Default for SlpBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl SlpBuilder {
    pub fn new() -> SlpBuilder {
        SlpBuilder { nodes: Vec::new(), memo: HashMap::new() }
    }

    fn intern(&mut self, node: SlpNode) -> usize {
        if let Some(&id) = self.memo.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.memo.insert(node, id);
        id
    }

    pub fn leaf(&mut self, g: Gen) -> usize {
        self.intern(SlpNode::Leaf(g))
    }

    /// A product node; singleton lists collapse to the child itself.
    pub fn product(&mut self, children: Vec<usize>) -> usize {
        assert!(!children.is_empty(), "empty product");
        if children.len() == 1 {
            return children[0];
        }
        self.intern(SlpNode::Product(children))
    }

    /// A power node; `e = 1` collapses to the child, `e = 0` is forbidden.
    pub fn power(&mut self, child: usize, e: BigInt) -> usize {
        assert!(!e.is_zero(), "zero power");
        if e.is_one() {
            return child;
        }
        // (c^m)^n = c^(mn) keeps chains of powers flat.
        if let SlpNode::Power(inner, f) = &self.nodes[child] {
            let (inner, f) = (*inner, f.clone());
            return self.intern(SlpNode::Power(inner, f * e));
        }
        self.intern(SlpNode::Power(child, e))
    }

    /// Copies a whole word into this builder, returning its root.
    pub fn embed(&mut self, word: &SlpWord) -> usize {
        let mut map: Vec<Option<usize>> = vec![None; word.nodes.len()];
        for (i, node) in word.nodes.iter().enumerate() {
            let id = match node {
                SlpNode::Leaf(g) => self.leaf(*g),
                SlpNode::Product(ch) => {
                    let ch: Vec<usize> = ch.iter().map(|&c| map[c].unwrap()).collect();
                    self.product(ch)
                }
                SlpNode::Power(c, e) => {
                    let c = map[*c].unwrap();
                    self.power(c, e.clone())
                }
            };
            map[i] = Some(id);
        }
        map[word.root].unwrap()
    }

    /// The interned nodes, for multi-root evaluations over a shared pool.
    pub fn node_list(&self) -> &[SlpNode] {
        &self.nodes
    }

    pub fn finish(self, root: usize) -> SlpWord {
        assert!(root < self.nodes.len());
        prune(self.nodes, root)
    }
}

// --- serde: node lists with decimal-string exponents --------------------

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeJson {
    Leaf(char),
    Prod(Vec<usize>),
    Pow(usize, String),
}

#[derive(Serialize, Deserialize)]
struct SlpJson {
    nodes: Vec<NodeJson>,
    root: usize,
}

impl Serialize for SlpWord {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                SlpNode::Leaf(g) => NodeJson::Leaf(g.letter(true)),
                SlpNode::Product(ch) => NodeJson::Prod(ch.clone()),
                SlpNode::Power(c, e) => NodeJson::Pow(*c, e.to_string()),
            })
            .collect();
        SlpJson { nodes, root: self.root }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for SlpWord {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<SlpWord, D::Error> {
        use serde::de::Error;
        let raw = SlpJson::deserialize(de)?;
        let mut nodes = Vec::with_capacity(raw.nodes.len());
        for n in raw.nodes {
            nodes.push(match n {
                NodeJson::Leaf('a') => SlpNode::Leaf(Gen::A),
                NodeJson::Leaf('b') => SlpNode::Leaf(Gen::B),
                NodeJson::Leaf(c) => return Err(D::Error::custom(format!("unknown generator {c:?}"))),
                NodeJson::Prod(ch) => SlpNode::Product(ch),
                NodeJson::Pow(c, e) => {
                    let e: BigInt = e
                        .parse()
                        .map_err(|_| D::Error::custom(format!("bad exponent {e:?}")))?;
                    SlpNode::Power(c, e)
                }
            });
        }
        SlpWord::from_parts(nodes, raw.root).map_err(D::Error::custom)
    }
}

// --- text parser ---------------------------------------------------------

enum Tree {
    Letter(Gen, bool),
    Seq(Vec<Tree>),
    Pow(Box<Tree>, BigInt),
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: &str) -> Result<T, WordError> {
        Err(WordError::Parse { pos: self.pos, msg: msg.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn integer(&mut self) -> Result<BigInt, WordError> {
        self.skip_ws();
        let start = self.pos;
        if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        if text.is_empty() || text == "-" {
            return self.err("expected an integer");
        }
        Ok(text.parse().unwrap())
    }

    fn factor(&mut self) -> Result<Tree, WordError> {
        let atom = match self.peek() {
            Some(b'a') => {
                self.pos += 1;
                Tree::Letter(Gen::A, true)
            }
            Some(b'A') => {
                self.pos += 1;
                Tree::Letter(Gen::A, false)
            }
            Some(b'b') => {
                self.pos += 1;
                Tree::Letter(Gen::B, true)
            }
            Some(b'B') => {
                self.pos += 1;
                Tree::Letter(Gen::B, false)
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sequence()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                match inner {
                    None => return self.err("empty group"),
                    Some(t) => t,
                }
            }
            _ => return self.err("expected a letter or '('"),
        };
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.integer()?;
            if e.is_zero() {
                return self.err("zero exponent");
            }
            return Ok(Tree::Pow(Box::new(atom), e));
        }
        Ok(atom)
    }

    fn sequence(&mut self) -> Result<Option<Tree>, WordError> {
        let mut parts = Vec::new();
        while let Some(c) = self.peek() {
            if c == b')' {
                break;
            }
            parts.push(self.factor()?);
        }
        Ok(match parts.len() {
            0 => None,
            1 => Some(parts.pop().unwrap()),
            _ => Some(Tree::Seq(parts)),
        })
    }
}

/// `None` means the empty (identity) word.
fn parse_tree(text: &str) -> Result<Option<Tree>, WordError> {
    let mut p = Parser { bytes: text.as_bytes(), pos: 0 };
    let tree = p.sequence()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(tree)
}

fn tree_to_slp(tree: &Tree) -> SlpWord {
    fn go(b: &mut SlpBuilder, t: &Tree) -> usize {
        match t {
            Tree::Letter(g, positive) => {
                let leaf = b.leaf(*g);
                if *positive {
                    leaf
                } else {
                    b.power(leaf, BigInt::from(-1))
                }
            }
            Tree::Seq(parts) => {
                let ids: Vec<usize> = parts.iter().map(|p| go(b, p)).collect();
                b.product(ids)
            }
            Tree::Pow(inner, e) => {
                // A^3 denotes a^-3: the sign rides on the letter.
                let (base, sign) = match **inner {
                    Tree::Letter(g, positive) => (b.leaf(g), if positive { 1 } else { -1 }),
                    ref other => (go(b, other), 1),
                };
                b.power(base, e * sign)
            }
        }
    }
    let mut b = SlpBuilder::new();
    let root = go(&mut b, tree);
    b.finish(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(text: &str) -> FlatWord {
        FlatWord::parse(text).unwrap()
    }

    #[test]
    fn reduction_cancels() {
        assert!(w("a A").is_identity());
        assert_eq!(w("a b B a"), w("a^2"));
        assert_eq!(w("a^3 B b A^2"), w("a"));
    }

    #[test]
    fn concat_and_invert() {
        assert!(w("a").concat(&w("A")).is_identity());
        assert_eq!(w("a b").invert(), w("B A"));
        assert_eq!(w("a b").concat(&w("B")), w("a"));
        let u = w("a^3 b A b^2");
        assert_eq!(u.invert().invert(), u);
        assert!(u.concat(&u.invert()).is_identity());
    }

    #[test]
    fn exponent_sums() {
        let v = w("a b A").exponent_sum();
        assert_eq!((v.e_a, v.e_b, v.total), (0.into(), 1.into(), 1.into()));
        let v = w("a b A B").exponent_sum();
        assert_eq!(v.total, 0.into());
    }

    #[test]
    fn substitution_examples() {
        let t = SlpWord::parse("a b").unwrap();
        let u = SlpWord::parse("a^2").unwrap();
        let v = SlpWord::parse("b").unwrap();
        let s = SlpWord::substitute(&t, &u, &v);
        assert_eq!(s.expand(100).unwrap(), w("a^2 b"));

        let t = SlpWord::parse("a b A").unwrap();
        let s = SlpWord::substitute(&t, &SlpWord::generator(Gen::A), &SlpWord::generator(Gen::B));
        assert_eq!(s.expand(100).unwrap(), w("a b A"));
    }

    #[test]
    fn expand_guards() {
        let p = SlpWord::parse("a^3").unwrap();
        assert_eq!(p.expand(10).unwrap(), w("a^3"));
        let big = SlpWord::parse("a^1000000000").unwrap();
        assert_eq!(big.expand(1_000_000), Err(WordError::TooLarge { limit: 1_000_000 }));
        // Collapsing bases expand regardless of the nominal power.
        let collapse = SlpWord::parse("(a b B A)^1000000000").unwrap();
        assert!(collapse.expand(10).unwrap().is_identity());
    }

    #[test]
    fn power_expansion_uses_cyclic_core() {
        // (a b a B A)^3 = a b (a)^3 ... the conjugating prefix appears once.
        let p = SlpWord::parse("(a b a B A)^3").unwrap();
        let direct = {
            let base = w("a b a B A");
            base.concat(&base).concat(&base)
        };
        assert_eq!(p.expand(100).unwrap(), direct);
    }

    #[test]
    fn conjugacy_small_cases() {
        assert!(w("a b").is_conjugate(&w("b a")));
        assert!(w("a b A").is_conjugate(&w("b")));
        assert!(!w("a b").is_conjugate(&w("A b")));
        assert!(w("").is_conjugate(&w("")));
        assert!(!w("a").is_conjugate(&w("")));
    }

    #[test]
    fn parser_round_trips() {
        for text in ["a", "A^5", "a^31 B", "(a^31 B)^27 a (a^31 B) A", "(a b)^-4 (A^2 (b a)^3)^9"] {
            let slp = SlpWord::parse(text).unwrap();
            let printed = slp.to_text();
            assert_eq!(SlpWord::parse(&printed).unwrap(), slp, "round-trip of {text}");
        }
        assert_eq!(w("(a^31 B)^27 a (a^31 B) A").to_string(), w("(a^31 B)^27 a (a^31 B) A").to_string());
        assert!(FlatWord::parse("").unwrap().is_identity());
        assert!(FlatWord::parse("  ").unwrap().is_identity());
        assert!(SlpWord::parse("a^").is_err());
        assert!(SlpWord::parse("c").is_err());
        assert!(SlpWord::parse("(a").is_err());
        assert_eq!(SlpWord::parse(""), Err(WordError::EmptyWord));
    }

    #[test]
    fn flat_display_round_trips() {
        for text in ["a^3 B a^-2", "A b^9", "a b a b a", "1"] {
            let word = w(text);
            assert_eq!(FlatWord::parse(&word.to_string()).unwrap(), word);
        }
        assert_eq!(w("1").to_string(), "1");
    }

    #[test]
    fn slp_structural_equality_ignores_sharing() {
        // Same unfolding built with and without sharing.
        let shared = {
            let mut b = SlpBuilder::new();
            let a = b.leaf(Gen::A);
            let ab = {
                let bb = b.leaf(Gen::B);
                b.product(vec![a, bb])
            };
            let root = b.product(vec![ab, ab]);
            b.finish(root)
        };
        let unshared = SlpWord::parse("(a b) (a b)").unwrap();
        assert_eq!(shared, unshared);
        // Structural, not semantic: a^6 and (a^2)^3 differ as programs...
        let a6 = SlpWord::parse("a^6").unwrap();
        let a23 = {
            let mut b = SlpBuilder::new();
            let a = b.leaf(Gen::A);
            let sq = b.intern(SlpNode::Power(a, 2.into()));
            let root = b.product(vec![sq, a, a, a, a]);
            b.finish(root)
        };
        assert_ne!(a6, a23);
        // ...although builders collapse literal power-of-power chains.
        assert_eq!(a6.expand(10).unwrap(), a23.expand(10).unwrap());
    }

    #[test]
    fn serde_round_trip() {
        let word = SlpWord::parse("(a^31 B)^27 a (a^31 B) A").unwrap();
        let json = serde_json::to_string(&word).unwrap();
        let back: SlpWord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, word);
        // Forward references are rejected.
        let bad = r#"{"nodes":[{"prod":[0,1]}],"root":0}"#;
        assert!(serde_json::from_str::<SlpWord>(bad).is_err());
    }
}
