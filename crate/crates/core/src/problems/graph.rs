use std::collections::HashSet;
use std::path::Path;

use super::ProblemError;

/// Largest supported vertex count; the statevector has `2^n` amplitudes.
pub const MAX_VERTICES: usize = 20;

/// Simple undirected graph with edges stored as `(u, v)`, `u < v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Edges may be given in either orientation; duplicates, self-loops and
    /// out-of-range endpoints are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, ProblemError> {
        if n > MAX_VERTICES {
            return Err(ProblemError::TooManyVertices(n));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(ProblemError::EdgeOutOfRange { u: a, v: b, n });
            }
            if a == b {
                return Err(ProblemError::SelfLoop(a));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(ProblemError::DuplicateEdge { u: e.0, v: e.1 });
            }
            out.push(e);
        }
        Ok(Self { n, edges: out })
    }

    /// Cycle `0 − 1 − … − (n−1) − 0`.
    pub fn cycle(n: usize) -> Result<Self, ProblemError> {
        match n {
            0 | 1 => Self::new(n, []),
            2 => Self::new(2, [(0, 1)]),
            _ => Self::new(n, (0..n).map(|i| (i, (i + 1) % n))),
        }
    }

    /// Parses `n m` followed by `m` lines `u v` (0-based). Blank lines and
    /// text after `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self, ProblemError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, header) = lines.next().ok_or(ProblemError::Parse {
            line: 1,
            message: "missing `n m` header".into(),
        })?;
        let (n, m) = parse_pair(line, header)?;
        let mut edges = Vec::with_capacity(m);
        for (line, text) in lines.by_ref().take(m) {
            edges.push(parse_pair(line, text)?);
        }
        if edges.len() != m {
            return Err(ProblemError::Parse {
                line: text.lines().count(),
                message: format!("expected {m} edges, found {}", edges.len()),
            });
        }
        if let Some((line, _)) = lines.next() {
            return Err(ProblemError::Parse {
                line,
                message: format!("more than the declared {m} edges"),
            });
        }
        Self::new(n, edges)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ProblemError> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Number of edges whose endpoints fall on different sides.
    pub fn cut_value(&self, z: &[bool]) -> Result<usize, ProblemError> {
        if z.len() != self.n {
            return Err(ProblemError::LengthMismatch {
                expected: self.n,
                got: z.len(),
            });
        }
        Ok(self.edges.iter().filter(|(u, v)| z[*u] != z[*v]).count())
    }

    /// Cut value of the basis index whose bit `i` is vertex `i`'s side.
    pub fn cut_of_index(&self, index: usize) -> usize {
        self.edges
            .iter()
            .filter(|(u, v)| ((index >> u) ^ (index >> v)) & 1 == 1)
            .count()
    }

    /// Energy `−cut` of every basis state, indexed as in
    /// [`Graph::cut_of_index`].
    pub fn energies(&self) -> Vec<f64> {
        (0..1usize << self.n).map(|z| -(self.cut_of_index(z) as f64)).collect()
    }
}

fn parse_pair(line: usize, text: &str) -> Result<(usize, usize), ProblemError> {
    let bad = |message: String| ProblemError::Parse { line, message };
    let mut it = text.split_whitespace();
    let mut next = || -> Result<usize, ProblemError> {
        let tok = it.next().ok_or_else(|| bad("expected two integers".into()))?;
        tok.parse().map_err(|_| bad(format!("`{tok}` is not a nonnegative integer")))
    };
    let pair = (next()?, next()?);
    if it.next().is_some() {
        return Err(bad("expected exactly two integers".into()));
    }
    Ok(pair)
}

/// Maximum cut and one bitstring attaining it, by enumeration.
pub fn maxcut_bruteforce(g: &Graph) -> (usize, Vec<bool>) {
    let (best, index) = (0..1usize << g.n)
        .map(|z| (g.cut_of_index(z), z))
        .fold((0, 0), |acc, cur| if cur.0 > acc.0 { cur } else { acc });
    (best, (0..g.n).map(|i| (index >> i) & 1 == 1).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn cut_examples() {
        let edge = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(edge.cut_value(&bits("01")).unwrap(), 1);
        assert_eq!(edge.cut_value(&bits("00")).unwrap(), 0);
        let c6 = Graph::cycle(6).unwrap();
        assert_eq!(c6.cut_value(&bits("010101")).unwrap(), 6);
        assert!(matches!(
            c6.cut_value(&bits("01")),
            Err(ProblemError::LengthMismatch { expected: 6, got: 2 })
        ));
    }

    #[test]
    fn cut_matches_spin_formula() {
        let g = Graph::cycle(5).unwrap();
        for z in 0..32usize {
            let spin = |i: usize| if (z >> i) & 1 == 1 { -1.0 } else { 1.0 };
            let formula: f64 = g.edges().iter().map(|(u, v)| 0.5 * (1.0 - spin(*u) * spin(*v))).sum();
            assert_eq!(g.cut_of_index(z) as f64, formula);
        }
    }

    #[test]
    fn brute_force_maxcut() {
        assert_eq!(maxcut_bruteforce(&Graph::cycle(5).unwrap()).0, 4);
        let (best, z) = maxcut_bruteforce(&Graph::cycle(6).unwrap());
        assert_eq!(best, 6);
        assert_eq!(Graph::cycle(6).unwrap().cut_value(&z).unwrap(), 6);
        assert_eq!(maxcut_bruteforce(&Graph::new(4, []).unwrap()).0, 0);
    }

    #[test]
    fn parse_rejects_bad_files() {
        let g = Graph::parse_edge_list("3 2\n0 1\n2 1\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(matches!(
            Graph::parse_edge_list("3 2\n0 1\n1 0\n"),
            Err(ProblemError::DuplicateEdge { u: 0, v: 1 })
        ));
        assert!(matches!(
            Graph::parse_edge_list("3 1\n0 3\n"),
            Err(ProblemError::EdgeOutOfRange { .. })
        ));
        assert!(matches!(Graph::parse_edge_list("3 2\n0 1\n"), Err(ProblemError::Parse { .. })));
        assert!(matches!(Graph::parse_edge_list("3 1\n0 x\n"), Err(ProblemError::Parse { line: 2, .. })));
        assert!(matches!(Graph::new(21, []), Err(ProblemError::TooManyVertices(21))));
    }
}
