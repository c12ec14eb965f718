//! DAG representation, validation, topological ordering, and the text format
//! used to ship graphs alongside datasets.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("adjacency entry ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("graph contains a cycle through variables {0:?}")]
    Cycle(Vec<usize>),
    #[error("expected {expected} names, got {got}")]
    NameCount { expected: usize, got: usize },
    #[error("invalid variable name {0:?} (must be non-empty, no commas or line breaks)")]
    BadName(String),
    #[error("order {0:?} is not a topological order of this graph")]
    BadOrder(Vec<usize>),
    #[error("cannot parse graph file: {0}")]
    Parse(String),
}

/// Validates that the nonzero pattern of `a` is acyclic with a zero diagonal.
pub fn validate_dag(a: &ArrayView2<f64>) -> Result<(), GraphError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    for ((i, j), &v) in a.indexed_iter() {
        if !v.is_finite() {
            return Err(GraphError::NonFinite { i, j });
        }
    }
    for i in 0..rows {
        if a[[i, i]] != 0.0 {
            return Err(GraphError::Cycle(vec![i]));
        }
    }
    topological_order(a).map(|_| ())
}

/// Kahn's algorithm with ascending-index tie-break, so the order is identical
/// across runs and platforms. On a cycle, returns the offending variables.
pub fn topological_order(a: &ArrayView2<f64>) -> Result<Vec<usize>, GraphError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(GraphError::NotSquare { rows, cols });
    }
    let n = rows;
    let mut in_degree: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| a[[j, i]] != 0.0 && j != i).count())
        .collect();
    // Self-loops count as cycles even though the in-degree scan above skips
    // the diagonal.
    if let Some(i) = (0..n).find(|&i| a[[i, i]] != 0.0) {
        return Err(GraphError::Cycle(vec![i]));
    }

    let mut order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    while order.len() < n {
        match (0..n).find(|&i| !done[i] && in_degree[i] == 0) {
            Some(i) => {
                done[i] = true;
                order.push(i);
                for c in 0..n {
                    if a[[i, c]] != 0.0 {
                        in_degree[c] -= 1;
                    }
                }
            }
            None => return Err(GraphError::Cycle(find_cycle(a, &done))),
        }
    }
    Ok(order)
}

/// Walks backwards through still-unresolved nodes until one repeats; the
/// repeated segment is a directed cycle.
fn find_cycle(a: &ArrayView2<f64>, done: &[bool]) -> Vec<usize> {
    let n = done.len();
    let start = (0..n).find(|&i| !done[i]).expect("a cycle implies unresolved nodes");
    let mut seen_at = vec![usize::MAX; n];
    let mut path = vec![start];
    seen_at[start] = 0;
    loop {
        let cur = *path.last().expect("path is never empty");
        let parent = (0..n)
            .find(|&j| !done[j] && a[[j, cur]] != 0.0)
            .expect("unresolved nodes keep unresolved parents");
        if seen_at[parent] != usize::MAX {
            let mut cycle = path[seen_at[parent]..].to_vec();
            cycle.reverse(); // report in edge direction
            return cycle;
        }
        seen_at[parent] = path.len();
        path.push(parent);
    }
}

/// DAG over `n` causal variables with a real adjacency matrix
/// (`a[[j, i]]` nonzero ⇔ edge `j → i`), factor names, and a topological order.
#[derive(Debug, Clone)]
pub struct CausalGraph {
    n: usize,
    a: Array2<f64>,
    names: Vec<String>,
    order: Vec<usize>,
}

impl CausalGraph {
    pub fn new(a: Array2<f64>, names: Vec<String>) -> Result<Self, GraphError> {
        validate_dag(&a.view())?;
        let n = a.nrows();
        if names.len() != n {
            return Err(GraphError::NameCount { expected: n, got: names.len() });
        }
        for name in &names {
            if name.is_empty() || name.contains(',') || name.contains('\n') || name.contains('=') {
                return Err(GraphError::BadName(name.clone()));
            }
        }
        let order = topological_order(&a.view())?;
        Ok(CausalGraph { n, a, names, order })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Topological order (parents before children, ties by ascending index).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.a[[from, to]] != 0.0
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, i)).collect()
    }

    /// All variables reachable from `i` along directed edges (excluding `i`).
    pub fn descendants(&self, i: usize) -> Vec<usize> {
        let mut reach = vec![false; self.n];
        let mut stack = vec![i];
        while let Some(cur) = stack.pop() {
            for c in 0..self.n {
                if self.has_edge(cur, c) && !reach[c] {
                    reach[c] = true;
                    stack.push(c);
                }
            }
        }
        (0..self.n).filter(|&j| reach[j]).collect()
    }

    pub fn is_ancestor(&self, j: usize, i: usize) -> bool {
        self.descendants(j).contains(&i)
    }

    // ---- text format -----------------------------------------------------
    //
    //   n = 3
    //   names = angle,light,shadow
    //   row0 = 0,0,1
    //   row1 = 0,0,1
    //   row2 = 0,0,0
    //   order = 0,1,2

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n = {}\n", self.n));
        out.push_str(&format!("names = {}\n", self.names.join(",")));
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| trim_float(self.a[[i, j]])).collect();
            out.push_str(&format!("row{} = {}\n", i, row.join(",")));
        }
        let ord: Vec<String> = self.order.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!("order = {}\n", ord.join(",")));
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut n: Option<usize> = None;
        let mut names: Option<Vec<String>> = None;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut order: Option<Vec<usize>> = None;

        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| GraphError::Parse(format!("line {}: missing '='", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| GraphError::Parse(format!("line {}: bad {}", lineno + 1, what));
            match key {
                "n" => n = Some(value.parse().map_err(|_| bad("variable count"))?),
                "names" => {
                    names = Some(value.split(',').map(|s| s.trim().to_string()).collect());
                }
                "order" => {
                    let parsed: Result<Vec<usize>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    order = Some(parsed.map_err(|_| bad("order"))?);
                }
                k if k.starts_with("row") => {
                    let idx: usize = k[3..].parse().map_err(|_| bad("row index"))?;
                    let parsed: Result<Vec<f64>, _> =
                        value.split(',').map(|s| s.trim().parse()).collect();
                    rows.push((idx, parsed.map_err(|_| bad("row entries"))?));
                }
                other => return Err(GraphError::Parse(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }

        let n = n.ok_or_else(|| GraphError::Parse("missing key 'n'".into()))?;
        let names = names.ok_or_else(|| GraphError::Parse("missing key 'names'".into()))?;
        if rows.len() != n {
            return Err(GraphError::Parse(format!("expected {} adjacency rows, got {}", n, rows.len())));
        }
        let mut a = Array2::<f64>::zeros((n, n));
        for (idx, row) in rows {
            if idx >= n || row.len() != n {
                return Err(GraphError::Parse(format!("adjacency row {idx} malformed")));
            }
            for (j, v) in row.into_iter().enumerate() {
                a[[idx, j]] = v;
            }
        }
        let graph = CausalGraph::new(a, names)?;
        // An explicit order in the file must be consistent; the cached order
        // is always the canonical recomputed one.
        if let Some(ord) = order {
            let mut pos = vec![usize::MAX; n];
            let valid = ord.len() == n && {
                for (p, &i) in ord.iter().enumerate() {
                    if i >= n {
                        return Err(GraphError::BadOrder(ord.clone()));
                    }
                    pos[i] = p;
                }
                (0..n).all(|j| pos[j] != usize::MAX)
                    && (0..n).all(|j| (0..n).all(|i| !(graph.has_edge(j, i) && pos[j] >= pos[i])))
            };
            if !valid {
                return Err(GraphError::BadOrder(ord));
            }
        }
        Ok(graph)
    }
}

fn trim_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
