use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, Splits};
use crate::error::{io_err, Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d_x: usize,
    pub d_c: usize,
    pub name: String,
}

fn read(dir: &Path, file: &str) -> Result<String> {
    let path = dir.join(file);
    fs::read_to_string(&path).map_err(io_err(path))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_num<T: std::str::FromStr>(dir: &Path, file: &str, line: usize, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        path: dir.join(file),
        line,
        msg: format!("cannot parse `{tok}`"),
    })
}

fn read_index_list(dir: &Path, file: &str) -> Result<Vec<usize>> {
    let text = read(dir, file)?;
    data_lines(&text).map(|(line, l)| parse_num(dir, file, line, l)).collect()
}

/// Reads a dataset directory (`meta.json`, `edges.tsv`, `features.tsv`,
/// `labels.tsv`, `split_{train,val,test}.txt`).
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta: DatasetMeta = serde_json::from_str(&read(dir, "meta.json")?)?;
    let n = meta.n;

    let text = read(dir, "edges.tsv")?;
    let mut edges = Vec::new();
    for (line, l) in data_lines(&text) {
        let mut toks = l.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::Parse { path: dir.join("edges.tsv"), line, msg: "expected two node ids".into() });
        };
        let u: usize = parse_num(dir, "edges.tsv", line, a)?;
        let v: usize = parse_num(dir, "edges.tsv", line, b)?;
        edges.push((u, v));
    }
    let directed: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mirrored = directed.iter().filter(|&&(u, v)| u != v && directed.contains(&(v, u))).count();
    let proper = directed.iter().filter(|&&(u, v)| u != v).count();
    if mirrored > 0 && mirrored < proper {
        log::warn!(
            "{}: edge list is asymmetric ({} of {} directed entries lack a reverse); symmetrizing",
            dir.display(),
            proper - mirrored,
            proper
        );
    }
    let graph = Graph::from_edges(n, &edges)?;

    let text = read(dir, "features.tsv")?;
    let mut data = Vec::with_capacity(n * meta.d_x);
    let mut rows = 0;
    for (line, l) in data_lines(&text) {
        let before = data.len();
        for tok in l.split('\t') {
            data.push(parse_num::<f64>(dir, "features.tsv", line, tok.trim())?);
        }
        if data.len() - before != meta.d_x {
            return Err(Error::DimensionMismatch(format!(
                "features.tsv line {line} has {} values, meta says d_x = {}",
                data.len() - before,
                meta.d_x
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::DimensionMismatch(format!("features.tsv has {rows} rows, meta says n = {n}")));
    }
    let features = Matrix::from_vec(n, meta.d_x, data)?;

    let labels = read_index_list(dir, "labels.tsv")?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("labels.tsv has {} rows, meta says n = {n}", labels.len())));
    }

    let splits = Splits {
        train: read_index_list(dir, "split_train.txt")?,
        val: read_index_list(dir, "split_val.txt")?,
        test: read_index_list(dir, "split_test.txt")?,
    };
    let dataset = Dataset { name: meta.name, graph, features, labels, num_classes: meta.d_c, splits };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes `dataset` in the directory format read by [`load_dataset`].
/// Reals use Rust's shortest round-trip formatting.
pub fn write_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |file: &str, body: String| {
        let path = dir.join(file);
        fs::write(&path, body).map_err(io_err(path))
    };
    let meta = DatasetMeta {
        n: dataset.n(),
        d_x: dataset.features.cols(),
        d_c: dataset.num_classes,
        name: dataset.name.clone(),
    };
    put("meta.json", serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut s = String::new();
    for (i, j) in dataset.graph.edges() {
        writeln!(s, "{i}\t{j}").unwrap();
    }
    put("edges.tsv", s)?;

    let mut s = String::new();
    for r in 0..dataset.features.rows() {
        let row: Vec<String> = dataset.features.row(r).iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join("\t"));
        s.push('\n');
    }
    put("features.tsv", s)?;

    let list = |xs: &[usize]| xs.iter().map(|x| format!("{x}\n")).collect::<String>();
    put("labels.tsv", list(&dataset.labels))?;
    put("split_train.txt", list(&dataset.splits.train))?;
    put("split_val.txt", list(&dataset.splits.val))?;
    put("split_test.txt", list(&dataset.splits.test))?;
    Ok(())
}
