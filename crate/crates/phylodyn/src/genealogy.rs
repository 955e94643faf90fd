//! Genealogies, Newick I/O, and the coalescent event timeline.
//!
//! A genealogy is a rooted binary tree whose nodes carry ages in coalescent
//! time units, with time running backward from the most recent sample at age
//! zero. Tips are samples, internal nodes are coalescent events. Everything
//! downstream consumes the [`CoalescentData`] extracted here: the sorted
//! coalescent ages, the sample ages, and the lineage-count step function
//! they induce.

use thiserror::Error;

/// Ages closer than this to the most recent tip are snapped to zero when
/// parsing; real Newick files rarely balance tip depths to machine precision.
const TIP_SNAP_TOL: f64 = 1e-8;

/// Slack allowed on the strict parent-older-than-child ordering.
const AGE_ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GenealogyError {
    #[error("newick syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("non-binary node at byte {pos}: {n_children} children")]
    NonBinaryNode { pos: usize, n_children: usize },
    #[error("negative branch length {length} at byte {pos}")]
    NegativeBranchLength { pos: usize, length: f64 },
    #[error("missing branch length at byte {pos}")]
    MissingBranchLength { pos: usize },
    #[error("invalid genealogy: {0}")]
    InvalidTree(String),
    #[error("duplicate coalescent age {0}")]
    DuplicateCoalescentAges(f64),
    #[error("lineage count drops below 1 at age {0} before the root")]
    LineageCountUnderflow(f64),
    #[error("invalid coalescent data: {0}")]
    InvalidData(String),
}

/// One node of a genealogy. Internal nodes have exactly two children.
#[derive(Debug, Clone)]
pub struct Node {
    pub label: Option<String>,
    pub age: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl Node {
    pub fn is_tip(&self) -> bool {
        self.children.is_empty()
    }
}

/// A rooted binary genealogy with node ages.
#[derive(Debug, Clone)]
pub struct Genealogy {
    nodes: Vec<Node>,
    root: usize,
    n_tips: usize,
}

impl Genealogy {
    /// Assemble a genealogy from raw nodes, checking every structural
    /// invariant: binary internal nodes, a single connected root, strictly
    /// older parents, and the most recent tip at age zero.
    pub fn from_nodes(nodes: Vec<Node>, root: usize) -> Result<Self, GenealogyError> {
        if root >= nodes.len() {
            return Err(GenealogyError::InvalidTree("root index out of range".into()));
        }
        let mut n_tips = 0;
        for (i, node) in nodes.iter().enumerate() {
            match node.children.len() {
                0 => n_tips += 1,
                2 => {}
                n => {
                    return Err(GenealogyError::InvalidTree(format!(
                        "node {i} has {n} children; genealogies are strictly binary"
                    )))
                }
            }
            if !node.age.is_finite() || node.age < 0.0 {
                return Err(GenealogyError::InvalidTree(format!(
                    "node {i} has invalid age {}",
                    node.age
                )));
            }
            if (i == root) != node.parent.is_none() {
                return Err(GenealogyError::InvalidTree(format!(
                    "node {i}: exactly the root must lack a parent"
                )));
            }
            for &c in &node.children {
                if c >= nodes.len() || nodes[c].parent != Some(i) {
                    return Err(GenealogyError::InvalidTree(format!(
                        "inconsistent parent/child link at node {i}"
                    )));
                }
                if nodes[c].age - node.age > AGE_ORDER_TOL {
                    return Err(GenealogyError::InvalidTree(format!(
                        "child {c} (age {}) is not younger than parent {i} (age {})",
                        nodes[c].age, node.age
                    )));
                }
            }
        }
        if n_tips < 2 {
            return Err(GenealogyError::InvalidTree(format!(
                "need at least 2 tips, got {n_tips}"
            )));
        }
        // connectivity: walk from the root
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut count = 0;
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(GenealogyError::InvalidTree("cycle detected".into()));
            }
            seen[i] = true;
            count += 1;
            stack.extend_from_slice(&nodes[i].children);
        }
        if count != nodes.len() {
            return Err(GenealogyError::InvalidTree(
                "tree is not connected: unreachable nodes".into(),
            ));
        }
        let min_tip_age = nodes
            .iter()
            .filter(|n| n.is_tip())
            .map(|n| n.age)
            .fold(f64::INFINITY, f64::min);
        if min_tip_age != 0.0 {
            return Err(GenealogyError::InvalidTree(format!(
                "most recent tip must sit at age 0, found {min_tip_age}"
            )));
        }
        Ok(Self {
            nodes,
            root,
            n_tips,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn n_tips(&self) -> usize {
        self.n_tips
    }

    /// Root age, i.e. the time to the most recent common ancestor.
    pub fn height(&self) -> f64 {
        self.nodes[self.root].age
    }

    /// True when every sample was taken at the present (all tip ages zero).
    pub fn is_isochronous(&self) -> bool {
        self.nodes.iter().filter(|n| n.is_tip()).all(|n| n.age == 0.0)
    }

    pub fn tip_ages(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter(|n| n.is_tip())
            .map(|n| n.age)
            .collect()
    }
}

/// Parse a single rooted Newick tree with mandatory branch lengths on every
/// non-root edge. Node ages are recovered from depths: the deepest tip
/// defines the present (age 0) and ages increase toward the root. Internal
/// labels are accepted and ignored; a branch length on the root is ignored.
pub fn parse_newick(text: &str) -> Result<Genealogy, GenealogyError> {
    let mut parser = NewickParser {
        bytes: text.as_bytes(),
        pos: 0,
        nodes: Vec::new(),
    };
    parser.skip_ws();
    let root = parser.parse_subtree(None)?;
    // optional root label / branch length already consumed by parse_subtree
    parser.skip_ws();
    if !parser.eat(b';') {
        return Err(parser.syntax("expected ';' terminating the tree"));
    }
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.syntax("trailing content after ';'"));
    }

    // depth = distance from root along branch lengths
    let nodes = parser.nodes;
    let mut depth = vec![0.0; nodes.len()];
    let mut order = vec![root.index];
    let mut i = 0;
    while i < order.len() {
        let at = order[i];
        for &c in &nodes[at].children {
            depth[c] = depth[at] + nodes[c].branch_length.unwrap_or(0.0);
            order.push(c);
        }
        i += 1;
    }
    let max_tip_depth = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.children.is_empty())
        .map(|(i, _)| depth[i])
        .fold(f64::NEG_INFINITY, f64::max);

    let final_nodes: Vec<Node> = nodes
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let mut age = max_tip_depth - depth[i];
            if raw.children.is_empty() && age.abs() < TIP_SNAP_TOL {
                age = 0.0;
            }
            Node {
                label: raw.label.clone(),
                age,
                parent: raw.parent,
                children: raw.children.clone(),
            }
        })
        .collect();
    Genealogy::from_nodes(final_nodes, root.index)
}

struct RawNode {
    label: Option<String>,
    branch_length: Option<f64>,
    parent: Option<usize>,
    children: Vec<usize>,
}

struct ParsedRef {
    index: usize,
}

struct NewickParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    nodes: Vec<RawNode>,
}

impl<'a> NewickParser<'a> {
    fn syntax(&self, msg: &str) -> GenealogyError {
        GenealogyError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn parse_subtree(&mut self, parent: Option<usize>) -> Result<ParsedRef, GenealogyError> {
        self.skip_ws();
        let start = self.pos;
        let index = self.nodes.len();
        self.nodes.push(RawNode {
            label: None,
            branch_length: None,
            parent,
            children: Vec::new(),
        });
        if self.eat(b'(') {
            let mut children = Vec::new();
            loop {
                let child = self.parse_subtree(Some(index))?;
                children.push(child.index);
                self.skip_ws();
                if self.eat(b',') {
                    continue;
                }
                if self.eat(b')') {
                    break;
                }
                return Err(self.syntax("expected ',' or ')'"));
            }
            if children.len() != 2 {
                return Err(GenealogyError::NonBinaryNode {
                    pos: start,
                    n_children: children.len(),
                });
            }
            self.nodes[index].children = children;
            // optional internal label, ignored
            let _ = self.parse_label();
        } else {
            match self.parse_label() {
                Some(label) => self.nodes[index].label = Some(label),
                None => return Err(self.syntax("expected a tip label or '('")),
            }
        }
        self.skip_ws();
        if self.eat(b':') {
            self.skip_ws();
            let bl_pos = self.pos;
            let length = self.parse_number()?;
            if length < 0.0 {
                return Err(GenealogyError::NegativeBranchLength {
                    pos: bl_pos,
                    length,
                });
            }
            self.nodes[index].branch_length = Some(length);
        } else if parent.is_some() {
            return Err(GenealogyError::MissingBranchLength { pos: self.pos });
        }
        Ok(ParsedRef { index })
    }

    fn parse_label(&mut self) -> Option<String> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if matches!(b, b'(' | b')' | b',' | b':' | b';' | b' ' | b'\t' | b'\n' | b'\r') {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            Some(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
        }
    }

    fn parse_number(&mut self) -> Result<f64, GenealogyError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_digit() || matches!(b, b'.' | b'-' | b'+' | b'e' | b'E') {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(self.syntax("expected a branch length"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|x| x.is_finite())
            .ok_or_else(|| GenealogyError::Syntax {
                pos: start,
                msg: "malformed number".into(),
            })
    }
}

/// Serialize a genealogy to Newick. Branch lengths are parent-child age
/// differences written with 12 significant digits; a parse of the output
/// reproduces the topology exactly and the ages to 1e-12.
pub fn serialize_newick(g: &Genealogy) -> String {
    fn fmt_len(x: f64) -> String {
        if x == 0.0 {
            return "0".to_string();
        }
        let magnitude = x.abs().log10().floor() as i32;
        let decimals = (11 - magnitude).clamp(0, 40) as usize;
        let mut s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    }
    fn write_node(g: &Genealogy, i: usize, out: &mut String) {
        let node = &g.nodes()[i];
        if node.is_tip() {
            out.push_str(node.label.as_deref().unwrap_or(""));
        } else {
            out.push('(');
            write_node(g, node.children[0], out);
            out.push(',');
            write_node(g, node.children[1], out);
            out.push(')');
        }
        if let Some(p) = node.parent {
            out.push(':');
            out.push_str(&fmt_len(g.nodes()[p].age - node.age));
        }
    }
    let mut out = String::new();
    write_node(g, g.root(), &mut out);
    out.push(';');
    out
}

/// The observation side of the model: sorted coalescent ages, sample ages,
/// and the sample count. Constructing one validates every invariant the
/// likelihood relies on.
#[derive(Debug, Clone)]
pub struct CoalescentData {
    coal_ages: Vec<f64>,
    sample_ages: Vec<f64>,
    n: usize,
}

impl CoalescentData {
    pub fn new(mut coal_ages: Vec<f64>, mut sample_ages: Vec<f64>) -> Result<Self, GenealogyError> {
        coal_ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sample_ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sample_ages.len();
        if n < 2 {
            return Err(GenealogyError::InvalidData(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        if coal_ages.len() != n - 1 {
            return Err(GenealogyError::InvalidData(format!(
                "expected {} coalescent ages for {} samples, got {}",
                n - 1,
                n,
                coal_ages.len()
            )));
        }
        for w in coal_ages.windows(2) {
            if w[0] == w[1] {
                return Err(GenealogyError::DuplicateCoalescentAges(w[0]));
            }
        }
        if sample_ages[0] != 0.0 {
            return Err(GenealogyError::InvalidData(
                "most recent sample must sit at age 0".into(),
            ));
        }
        let t1 = *coal_ages.last().unwrap();
        if t1 <= *sample_ages.last().unwrap() {
            return Err(GenealogyError::InvalidData(
                "root age must exceed the oldest sampling age".into(),
            ));
        }
        let data = Self {
            coal_ages,
            sample_ages,
            n,
        };
        let tl = data.lineage_timeline();
        for (i, &k) in tl.counts.iter().enumerate() {
            if k < 1 {
                return Err(GenealogyError::LineageCountUnderflow(tl.breaks[i]));
            }
        }
        if *tl.counts.last().unwrap() != 2 {
            return Err(GenealogyError::InvalidData(format!(
                "{} lineages reach the final coalescence; exactly 2 must remain",
                tl.counts.last().unwrap()
            )));
        }
        Ok(data)
    }

    /// Coalescent ages sorted ascending (most recent event first).
    pub fn coal_ages(&self) -> &[f64] {
        &self.coal_ages
    }

    /// Sample ages sorted ascending; all zero for isochronous data.
    pub fn sample_ages(&self) -> &[f64] {
        &self.sample_ages
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Root age.
    pub fn root_age(&self) -> f64 {
        *self.coal_ages.last().unwrap()
    }

    /// Step function of active lineage counts over `[0, root_age]`:
    /// `k(t) = #{samples with age <= t} - #{coalescences with age <= t}`.
    pub fn lineage_timeline(&self) -> LineageTimeline {
        let t1 = self.root_age();
        let mut ages: Vec<f64> = Vec::with_capacity(2 * self.n);
        ages.push(0.0);
        ages.extend(self.sample_ages.iter().copied());
        ages.extend(self.coal_ages.iter().copied());
        ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ages.dedup();
        ages.retain(|&a| a < t1);
        ages.push(t1);

        let mut counts = Vec::with_capacity(ages.len() - 1);
        for &start in &ages[..ages.len() - 1] {
            let samples = self.sample_ages.partition_point(|&a| a <= start);
            let coals = self.coal_ages.partition_point(|&a| a <= start);
            counts.push(samples as i64 - coals as i64);
        }
        LineageTimeline {
            breaks: ages,
            counts,
        }
    }
}

/// Lineage counts as a step function: `counts[i]` lineages are active on the
/// open interval `(breaks[i], breaks[i+1])`.
#[derive(Debug, Clone)]
pub struct LineageTimeline {
    pub breaks: Vec<f64>,
    pub counts: Vec<i64>,
}

impl LineageTimeline {
    /// Lineage count on the interval that ends at the given age; the count in
    /// force just below a coalescent event.
    pub fn count_below(&self, age: f64) -> i64 {
        let idx = self.breaks.partition_point(|&b| b < age);
        self.counts[idx.saturating_sub(1).min(self.counts.len() - 1)]
    }
}

/// Extract the coalescent observation data from a genealogy.
pub fn extract_coalescent_data(g: &Genealogy) -> Result<CoalescentData, GenealogyError> {
    let mut coal_ages = Vec::with_capacity(g.n_tips() - 1);
    let mut sample_ages = Vec::with_capacity(g.n_tips());
    for node in g.nodes() {
        if node.is_tip() {
            sample_ages.push(node.age);
        } else {
            coal_ages.push(node.age);
        }
    }
    CoalescentData::new(coal_ages, sample_ages)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ages_of_tips(g: &Genealogy) -> Vec<f64> {
        let mut a = g.tip_ages();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        a
    }

    fn internal_ages(g: &Genealogy) -> Vec<f64> {
        let mut a: Vec<f64> = g
            .nodes()
            .iter()
            .filter(|n| !n.is_tip())
            .map(|n| n.age)
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        a
    }

    #[test]
    fn parse_three_tip_isochronous() {
        let g = parse_newick("((A:1,B:1):1,C:2);").unwrap();
        assert_eq!(g.n_tips(), 3);
        assert_eq!(ages_of_tips(&g), vec![0.0, 0.0, 0.0]);
        assert_eq!(internal_ages(&g), vec![1.0, 2.0]);
        assert!(g.is_isochronous());
    }

    #[test]
    fn parse_two_tip() {
        let g = parse_newick("(A:1,B:1);").unwrap();
        assert_eq!(g.n_tips(), 2);
        assert_eq!(ages_of_tips(&g), vec![0.0, 0.0]);
        assert_eq!(internal_ages(&g), vec![1.0]);
    }

    #[test]
    fn parse_heterochronous() {
        // B attaches higher: its depth is 2, so its age is 1
        let g = parse_newick("((A:2,B:1):1,C:3);").unwrap();
        assert_eq!(ages_of_tips(&g), vec![0.0, 0.0, 1.0]);
        assert_eq!(internal_ages(&g), vec![2.0, 3.0]);
        assert!(!g.is_isochronous());
    }

    #[test]
    fn parse_reports_syntax_position() {
        let err = parse_newick("((A:1,B:1:1,C:2);").unwrap_err();
        match err {
            GenealogyError::Syntax { pos, .. } => assert!(pos > 0),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_nonbinary() {
        let err = parse_newick("(A:1,B:1,C:1);").unwrap_err();
        assert!(matches!(err, GenealogyError::NonBinaryNode { n_children: 3, .. }));
        let err = parse_newick("((A:1):1,B:2);").unwrap_err();
        assert!(matches!(err, GenealogyError::NonBinaryNode { n_children: 1, .. }));
    }

    #[test]
    fn parse_rejects_negative_branch() {
        let err = parse_newick("(A:-1,B:1);").unwrap_err();
        assert!(matches!(err, GenealogyError::NegativeBranchLength { .. }));
    }

    #[test]
    fn parse_rejects_missing_branch() {
        let err = parse_newick("(A,B:1);").unwrap_err();
        assert!(matches!(err, GenealogyError::MissingBranchLength { .. }));
    }

    #[test]
    fn parse_ignores_internal_labels_and_root_length() {
        let g = parse_newick("((A:1,B:1)inner:1,C:2)root:0.0;").unwrap();
        assert_eq!(g.n_tips(), 3);
        assert_eq!(internal_ages(&g), vec![1.0, 2.0]);
    }

    #[test]
    fn parse_snaps_rounding_noise_on_tips() {
        let g = parse_newick("((A:1.000000000000,B:0.999999999999):1,C:2);").unwrap();
        assert_eq!(ages_of_tips(&g), vec![0.0, 0.0, 0.0]);
        assert!(g.is_isochronous());
    }

    #[test]
    fn serialize_two_tip() {
        let g = parse_newick("(A:1,B:1);").unwrap();
        let s = serialize_newick(&g);
        assert!(s == "(A:1,B:1);" || s == "(B:1,A:1);", "got {s}");
    }

    #[test]
    fn serialize_round_trip_heterochronous() {
        let g = parse_newick("((A:2,B:1):1,C:3);").unwrap();
        let g2 = parse_newick(&serialize_newick(&g)).unwrap();
        assert_eq!(g.n_tips(), g2.n_tips());
        let a1 = internal_ages(&g);
        let a2 = internal_ages(&g2);
        for (x, y) in a1.iter().zip(&a2) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(ages_of_tips(&g), ages_of_tips(&g2));
    }

    #[test]
    fn extract_two_tip() {
        let g = parse_newick("(A:1,B:1);").unwrap();
        let d = extract_coalescent_data(&g).unwrap();
        assert_eq!(d.coal_ages(), &[1.0]);
        assert_eq!(d.sample_ages(), &[0.0, 0.0]);
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn extract_three_tip() {
        let g = parse_newick("((A:1,B:1):1,C:2);").unwrap();
        let d = extract_coalescent_data(&g).unwrap();
        assert_eq!(d.coal_ages(), &[1.0, 2.0]);
        assert_eq!(d.sample_ages(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn extract_heterochronous_lineage_counts() {
        let g = parse_newick("((A:2,B:1):1,C:3);").unwrap();
        let d = extract_coalescent_data(&g).unwrap();
        assert_eq!(d.coal_ages(), &[2.0, 3.0]);
        assert_eq!(d.sample_ages(), &[0.0, 0.0, 1.0]);
        let tl = d.lineage_timeline();
        assert_eq!(tl.breaks, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(tl.counts, vec![2, 3, 2]);
        assert_eq!(tl.count_below(2.0), 3);
        assert_eq!(tl.count_below(3.0), 2);
    }

    #[test]
    fn extract_rejects_tied_coalescent_ages() {
        let g = parse_newick("((A:1,B:1):1,(C:1,D:1):1);").unwrap();
        let err = extract_coalescent_data(&g).unwrap_err();
        assert!(matches!(err, GenealogyError::DuplicateCoalescentAges(_)));
    }

    #[test]
    fn data_rejects_lineage_underflow() {
        // a coalescence at 0.5 with a single sample present would need two
        let err = CoalescentData::new(vec![0.5, 3.0], vec![0.0, 1.0, 2.0]).unwrap_err();
        assert!(matches!(err, GenealogyError::LineageCountUnderflow(_)));
    }

    #[test]
    fn data_rejects_root_below_oldest_sample() {
        let err = CoalescentData::new(vec![0.5, 1.0], vec![0.0, 0.0, 2.0]).unwrap_err();
        assert!(matches!(err, GenealogyError::InvalidData(_)));
    }
}
