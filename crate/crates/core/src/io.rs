//! Text formats.
//!
//! * Tree: one line of `q` integers, entry `i` the parent label of node `i`
//!   and `0` for the root, e.g. `0 1 1 2`.
//! * Prüfer code: `q - 2` labels separated by spaces.
//! * Matrix: CSV with one row per node and one column per sample. Lines
//!   starting with `#` are skipped. Values are written with 17 significant
//!   digits so that a write-read cycle is lossless.

use std::fmt::Write as _;

use crate::error::{PpmError, Result};
use crate::matrix::FrequencyMatrix;
use crate::tree::{PruferCode, RootedTree};

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> PpmError {
    PpmError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
}

/// Whitespace-separated tokens with their 1-based character columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        let byte = tok.as_ptr() as usize - line.as_ptr() as usize;
        (line[..byte].chars().count() + 1, tok)
    })
}

fn single_line<'a>(text: &'a str, what: &str) -> Result<(usize, &'a str)> {
    let mut lines = content_lines(text);
    let first = lines
        .next()
        .ok_or_else(|| parse_error(1, 1, format!("empty {what} file")))?;
    if let Some((n, _)) = lines.next() {
        return Err(parse_error(n, 1, format!("{what} must be a single line")));
    }
    Ok(first)
}

pub fn parse_tree(text: &str) -> Result<RootedTree> {
    let (line_no, line) = single_line(text, "tree")?;
    let mut labels = Vec::new();
    let mut columns = Vec::new();
    for (col, tok) in tokens(line) {
        let label: usize = tok
            .parse()
            .map_err(|_| parse_error(line_no, col, format!("'{tok}' is not a node label")))?;
        labels.push(label);
        columns.push(col);
    }
    let q = labels.len();
    for (i, &label) in labels.iter().enumerate() {
        let col = columns[i];
        if label > q {
            return Err(parse_error(
                line_no,
                col,
                format!("parent {label} of node {} is outside 0..={q}", i + 1),
            ));
        }
        if i == 0 && label != 0 {
            return Err(parse_error(line_no, col, "node 1 is the root and must have parent 0"));
        }
        if i > 0 && label == 0 {
            return Err(parse_error(line_no, col, format!("node {} has parent 0 but is not node 1", i + 1)));
        }
    }
    RootedTree::from_parent_labels(&labels).map_err(|e| parse_error(line_no, 1, e.to_string()))
}

pub fn write_tree(tree: &RootedTree) -> String {
    let mut out = join(tree.parent_labels());
    out.push('\n');
    out
}

/// Parses the labels of a code; the node count is taken as `len + 2`
/// unless given.
pub fn parse_prufer(text: &str, q: Option<usize>) -> Result<(PruferCode, usize)> {
    let mut labels = Vec::new();
    let mut where_ = Vec::new();
    for (line_no, line) in content_lines(text) {
        for (col, tok) in tokens(line) {
            let label: usize = tok
                .parse()
                .map_err(|_| parse_error(line_no, col, format!("'{tok}' is not a node label")))?;
            labels.push(label);
            where_.push((line_no, col));
        }
    }
    let q = q.unwrap_or(labels.len() + 2);
    if q >= 2 && labels.len() != q - 2 {
        return Err(parse_error(1, 1, format!("a code for {q} nodes has {} labels, found {}", q - 2, labels.len())));
    }
    if let Some(i) = labels.iter().position(|&l| l == 0 || l > q) {
        let (line, col) = where_[i];
        return Err(parse_error(line, col, format!("label {} outside 1..={q}", labels[i])));
    }
    Ok((PruferCode(labels), q))
}

pub fn write_prufer(code: &PruferCode) -> String {
    let mut out = join(code.labels().iter().copied());
    out.push('\n');
    out
}

fn join(values: impl IntoIterator<Item = usize>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_matrix(text: &str) -> Result<FrequencyMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut first_line = None;
    for (line_no, line) in content_lines(text) {
        first_line.get_or_insert(line_no);
        let mut row = Vec::new();
        let mut offset = 0;
        for field in line.split(',') {
            let lead = field.len() - field.trim_start().len();
            let col = line[..offset + lead].chars().count() + 1;
            offset += field.len() + 1;
            let tok = field.trim();
            let value: f64 = tok
                .parse()
                .map_err(|_| parse_error(line_no, col, format!("'{tok}' is not a number")))?;
            if !value.is_finite() {
                return Err(parse_error(line_no, col, format!("'{tok}' is not finite")));
            }
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_error(
                    line_no,
                    1,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(1, 1, "matrix file has no rows"));
    }
    FrequencyMatrix::from_rows(rows).map_err(|e| parse_error(first_line.unwrap_or(1), 1, e.to_string()))
}

/// CSV text of `matrix`; every header line is prefixed with `# `.
pub fn write_matrix(matrix: &FrequencyMatrix, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    for v in 0..matrix.rows() {
        let row: Vec<String> = matrix.row(v).iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{normal_matrix, random_tree, seeded};

    fn location(e: PpmError) -> (usize, usize) {
        match e {
            PpmError::Parse { line, column, .. } => (line, column),
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn tree_round_trip() {
        let mut rng = seeded(2);
        for q in [1, 2, 7, 30] {
            let t = random_tree(q, &mut rng);
            assert_eq!(parse_tree(&write_tree(&t)).unwrap(), t);
        }
        assert_eq!(write_tree(&RootedTree::single()), "0\n");
        assert_eq!(parse_tree("# comment\n0 1 1 2\n").unwrap().parent_labels(), vec![0, 1, 1, 2]);
    }

    #[test]
    fn tree_errors_carry_positions() {
        assert_eq!(location(parse_tree("0 3").unwrap_err()), (1, 3));
        assert_eq!(location(parse_tree("0  x").unwrap_err()), (1, 4));
        assert_eq!(location(parse_tree("\n1 0").unwrap_err()), (2, 1));
        assert_eq!(location(parse_tree("0 0").unwrap_err()), (1, 3));
        assert!(parse_tree("0 3 2").is_err());
        assert!(parse_tree("").is_err());
        assert!(parse_tree("0 1\n0 1").is_err());
    }

    #[test]
    fn prufer_text() {
        let (code, q) = parse_prufer("1 1\n", None).unwrap();
        assert_eq!((code.labels(), q), (&[1, 1][..], 4));
        assert_eq!(write_prufer(&code), "1 1\n");
        assert_eq!(location(parse_prufer("1 5", None).unwrap_err()), (1, 3));
        assert!(parse_prufer("1", Some(5)).is_err());
        assert_eq!(parse_prufer("", Some(2)).unwrap().1, 2);
    }

    #[test]
    fn matrix_round_trip_is_lossless() {
        let m = normal_matrix(9, 4, &mut seeded(7));
        let text = write_matrix(&m, &["rng chacha8".into(), "seed 7".into()]);
        assert!(text.starts_with("# rng chacha8\n# seed 7\n"));
        assert_eq!(parse_matrix(&text).unwrap(), m);
        let tiny = FrequencyMatrix::column_vector(vec![0.1, 1.0 / 3.0, f64::MIN_POSITIVE]).unwrap();
        assert_eq!(parse_matrix(&write_matrix(&tiny, &[])).unwrap(), tiny);
    }

    #[test]
    fn matrix_errors_carry_positions() {
        assert_eq!(location(parse_matrix("0.5, 0.2\n0.1, abc").unwrap_err()), (2, 6));
        assert_eq!(location(parse_matrix("0.5,0.2\n0.1").unwrap_err()), (2, 1));
        assert_eq!(location(parse_matrix("0.5,inf").unwrap_err()), (1, 5));
        assert!(parse_matrix("# only a header\n").is_err());
        let m = parse_matrix("0.5\n0.7\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 1));
    }
}
