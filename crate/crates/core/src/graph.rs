//! Graphs, Laplacians, random graph generation and file loaders.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: Vec<(usize, usize, f64)>,
    seen: HashSet<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    Added,
    Duplicate,
    SelfLoop,
}

impl Graph {
    pub fn new(n: usize, directed: bool) -> Self {
        Self { n, directed, edges: Vec::new(), seen: HashSet::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Edges in insertion order. Undirected edges are stored with `u < v`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Adds `u -> v` (or `{u, v}`). Self-loops and repeats are ignored and
    /// reported; the first weight given for an edge is kept.
    pub fn add_edge(&mut self, u: usize, v: usize, w: f64) -> Result<Inserted> {
        for idx in [u, v] {
            if idx >= self.n {
                return Err(Error::IndexOutOfRange { index: idx, n: self.n, line: 0 });
            }
        }
        if !w.is_finite() {
            return Err(Error::InvalidArgument(format!("edge ({u}, {v}) has non-finite weight")));
        }
        if u == v {
            return Ok(Inserted::SelfLoop);
        }
        let key = if self.directed { (u, v) } else { (u.min(v), u.max(v)) };
        if !self.seen.insert(key) {
            return Ok(Inserted::Duplicate);
        }
        self.edges.push((key.0, key.1, w));
        Ok(Inserted::Added)
    }
}

/// `L = D - A`. Directed graphs use out-degrees, so every row sums to zero.
pub fn laplacian(g: &Graph) -> DenseMatrix {
    let n = g.n;
    let mut data = vec![0.0; n * n];
    for &(u, v, w) in &g.edges {
        data[u * n + u] += w;
        data[u * n + v] -= w;
        if !g.directed {
            data[v * n + v] += w;
            data[v * n + u] -= w;
        }
    }
    let m = DenseMatrix::from_vec(n, n, data).expect("finite weights");
    if g.directed {
        m
    } else {
        m.into_symmetric().expect("undirected Laplacian is symmetric")
    }
}

/// G(n, p): every unordered pair is an edge with probability `p`; directed
/// graphs then orient each edge by a fair coin. Pairs are visited in
/// lexicographic order, so a seed fixes the graph.
pub fn erdos_renyi(n: usize, p: f64, seed: u64, directed: bool) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n, directed);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                let (u, v) = if directed && rng.gen_bool(0.5) { (j, i) } else { (i, j) };
                g.add_edge(u, v, 1.0)?;
            }
        }
    }
    Ok(g)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    parse_edge_list(&fs::read_to_string(path)?)
}

/// Header `n <count> directed|undirected`, then `u v [w]` per line with
/// 0-based vertices; `#` starts a comment.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut graph: Option<Graph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let parse_err = |message: String| Error::Parse { line, message };
        match graph.as_mut() {
            None => {
                if fields.len() != 3 || fields[0] != "n" {
                    return Err(parse_err(format!("expected header `n <count> directed|undirected`, found `{content}`")));
                }
                let n = fields[1]
                    .parse::<usize>()
                    .map_err(|e| parse_err(format!("bad vertex count `{}`: {e}", fields[1])))?;
                let directed = match fields[2] {
                    "directed" => true,
                    "undirected" => false,
                    other => return Err(parse_err(format!("expected directed|undirected, found `{other}`"))),
                };
                graph = Some(Graph::new(n, directed));
            }
            Some(g) => {
                if fields.len() != 2 && fields.len() != 3 {
                    return Err(parse_err(format!("expected `u v [w]`, found `{content}`")));
                }
                let vertex = |s: &str| {
                    s.parse::<usize>().map_err(|e| parse_err(format!("bad vertex id `{s}`: {e}")))
                };
                let (u, v) = (vertex(fields[0])?, vertex(fields[1])?);
                let w = match fields.get(2) {
                    Some(s) => s.parse::<f64>().map_err(|e| parse_err(format!("bad weight `{s}`: {e}")))?,
                    None => 1.0,
                };
                if !w.is_finite() {
                    return Err(parse_err(format!("weight `{}` is not finite", fields[2])));
                }
                for idx in [u, v] {
                    if idx >= g.n {
                        return Err(Error::IndexOutOfRange { index: idx, n: g.n, line });
                    }
                }
                g.add_edge(u, v, w)?;
            }
        }
    }
    graph.ok_or(Error::Parse { line: 0, message: "missing header line".into() })
}

pub fn load_matrix_market(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_matrix_market(&fs::read_to_string(path)?)
}

#[derive(Clone, Copy, PartialEq)]
enum MmSymmetry {
    General,
    Symmetric,
    Skew,
}

/// MatrixMarket `matrix` files in `coordinate` or `array` layout with
/// `real`, `integer` or (coordinate only) `pattern` entries and `general`,
/// `symmetric` or `skew-symmetric` storage. Repeated coordinates add up.
pub fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, banner) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse { line: 1, message: format!("unsupported banner `{banner}`") });
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(Error::Parse { line: 1, message: format!("unsupported layout `{other}`") }),
    };
    let pattern = match tokens[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(Error::Parse { line: 1, message: format!("unsupported field `{other}`") }),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        "skew-symmetric" => MmSymmetry::Skew,
        other => return Err(Error::Parse { line: 1, message: format!("unsupported qualifier `{other}`") }),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = body.next().ok_or(Error::Parse { line: 2, message: "missing size line".into() })?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: size_line, message: format!("bad size line: {e}") })?;
    let expected_len = if coordinate { 3 } else { 2 };
    if dims.len() != expected_len {
        return Err(Error::Parse { line: size_line, message: format!("size line needs {expected_len} integers") });
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetry != MmSymmetry::General && rows != cols {
        return Err(Error::Parse { line: size_line, message: "symmetric storage needs a square matrix".into() });
    }
    let mut data = vec![0.0; rows * cols];
    let number = |line: usize, s: &str| -> Result<f64> {
        let v = s.parse::<f64>().map_err(|e| Error::Parse { line, message: format!("bad value `{s}`: {e}") })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Parse { line, message: format!("value `{s}` is not finite") })
        }
    };
    let mut put = |r: usize, c: usize, v: f64| {
        data[r * cols + c] += v;
        if r != c {
            match symmetry {
                MmSymmetry::General => {}
                MmSymmetry::Symmetric => data[c * cols + r] += v,
                MmSymmetry::Skew => data[c * cols + r] -= v,
            }
        }
    };

    if coordinate {
        let nnz = dims[2];
        let mut count = 0;
        for (line, l) in body {
            let f: Vec<&str> = l.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if f.len() != want {
                return Err(Error::Parse { line, message: format!("expected {want} fields, found {}", f.len()) });
            }
            let index = |s: &str, bound: usize| -> Result<usize> {
                let k = s.parse::<usize>().map_err(|e| Error::Parse { line, message: format!("bad index `{s}`: {e}") })?;
                if k == 0 || k > bound {
                    return Err(Error::IndexOutOfRange { index: k, n: bound, line });
                }
                Ok(k - 1)
            };
            let (r, c) = (index(f[0], rows)?, index(f[1], cols)?);
            let v = if pattern { 1.0 } else { number(line, f[2])? };
            put(r, c, v);
            count += 1;
        }
        if count != nnz {
            return Err(Error::Parse { line: size_line, message: format!("declared {nnz} entries, found {count}") });
        }
    } else {
        // column-major; symmetric storage lists the lower triangle only
        let positions: Vec<(usize, usize)> = (0..cols)
            .flat_map(|c| {
                let start = match symmetry {
                    MmSymmetry::General => 0,
                    MmSymmetry::Symmetric => c,
                    MmSymmetry::Skew => c + 1,
                };
                (start..rows).map(move |r| (r, c))
            })
            .collect();
        let mut k = 0;
        for (line, l) in body {
            for tok in l.split_whitespace() {
                let &(r, c) = positions.get(k).ok_or(Error::Parse { line, message: "too many entries".into() })?;
                put(r, c, number(line, tok)?);
                k += 1;
            }
        }
        if k != positions.len() {
            return Err(Error::Parse {
                line: size_line,
                message: format!("expected {} entries, found {k}", positions.len()),
            });
        }
    }
    let m = DenseMatrix::from_vec(rows, cols, data)?;
    Ok(if symmetry == MmSymmetry::Symmetric { m.into_symmetric()? } else { m })
}

/// Dense `array real general` MatrixMarket text.
pub fn to_matrix_market(m: &DenseMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.rows(), m.cols()));
    for c in 0..m.cols() {
        for r in 0..m.rows() {
            out.push_str(&format!("{:.17e}\n", m[(r, c)]));
        }
    }
    out
}
