//! On-disk artifacts exchanged between pipeline stages.
//!
//! Every table is a headered comma-separated file. Floats are written with
//! Rust's shortest round-trip formatting, so reading a file back reproduces
//! the in-memory values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::clustering::{ClusterModel, ClusterSplit, DomainSplit, SplitStrategy, SOURCE, TARGET};
use crate::dam::EpochTrace;
use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::matching::{IterationRecord, LabelMap, Provenance};
use crate::report::PurityRow;

pub const CLUSTERS: &str = "clusters.csv";
pub const CENTROIDS: &str = "centroids.csv";
pub const SPLIT: &str = "split.csv";
pub const DAM_TRACE: &str = "dam_trace.csv";
pub const DAM_MAPPER: &str = "dam_mapper.lidn";
pub const DAM_CLASSIFIER: &str = "dam_classifier.lidn";
pub const DAM_DISCRIMINATOR: &str = "dam_discriminator.lidn";
pub const MATCH_HISTORY: &str = "match_history.csv";
pub const LABEL_MAP: &str = "label_map.csv";
pub const CLASSIFIER_D: &str = "classifier_d.lidn";
pub const ACCURACY_PLOT: &str = "accuracy.svg";
pub const PURITY: &str = "purity.csv";
pub const SUMMARY: &str = "summary.csv";
pub const MANIFEST: &str = "manifest.csv";

const CLUSTERS_HEADER: &str = "cluster_id,sample_index,distance";
const SPLIT_HEADER: &str = "cluster_id,sample_index,domain";
const TRACE_HEADER: &str = "epoch,loss_cls,loss_dom,v_min,v_max";
const HISTORY_HEADER: &str = "iter,acc_L,acc_best,map_changes,conf_set_size";
const LABEL_MAP_HEADER: &str = "pseudo,true,provenance";
const PURITY_HEADER: &str = "subset_size,total_correct,accuracy";
const SUMMARY_HEADER: &str = "key,value";
const MANIFEST_HEADER: &str = "file";

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a headered table, checking the header and the field count.
pub fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("expected header {header:?}"),
            })
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(|f| f.trim().to_string()).collect();
            if fields.len() != width {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("expected {width} fields, found {}", fields.len()),
                });
            }
            Ok(fields)
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: row + 2,
        message: format!("bad value {value:?}"),
    })
}

pub fn write_clusters(dir: &Path, cm: &ClusterModel, ds: &EmbeddingDataset) -> Result<()> {
    let mut out = format!("{CLUSTERS_HEADER}\n");
    for (i, &c) in cm.assignment.iter().enumerate() {
        writeln!(out, "{c},{i},{:?}", cm.distance(ds, i)).unwrap();
    }
    write_text(&dir.join(CLUSTERS), &out)?;

    let dim = cm.centroids.ncols();
    let mut out = (0..dim)
        .map(|j| format!("c{j}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in cm.centroids.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_text(&dir.join(CENTROIDS), &out)
}

pub fn read_clusters(dir: &Path, ds: &EmbeddingDataset) -> Result<ClusterModel> {
    let path = dir.join(CLUSTERS);
    let assignments = read_table(&path, CLUSTERS_HEADER)?;
    let centroid_path = dir.join(CENTROIDS);
    let header = (0..ds.dim())
        .map(|j| format!("c{j}"))
        .collect::<Vec<_>>()
        .join(",");
    let rows = read_table(&centroid_path, &header)?;
    let mut values = Vec::with_capacity(rows.len() * ds.dim());
    for (r, row) in rows.iter().enumerate() {
        for v in row {
            values.push(field::<f64>(&centroid_path, r, v)?);
        }
    }
    let centroids = Array2::from_shape_vec((rows.len(), ds.dim()), values).expect("widths checked");

    if assignments.len() != ds.len() {
        return Err(Error::Format {
            path,
            message: format!("{} rows for {} samples", rows.len(), ds.len()),
        });
    }
    let mut assignment = vec![usize::MAX; ds.len()];
    for (r, row) in assignments.iter().enumerate() {
        let c: usize = field(&path, r, &row[0])?;
        let i: usize = field(&path, r, &row[1])?;
        if i >= ds.len() {
            return Err(Error::Parse {
                path,
                line: r + 2,
                message: format!("sample index {i} out of range"),
            });
        }
        assignment[i] = c;
    }
    if assignment.contains(&usize::MAX) {
        return Err(Error::Format {
            path,
            message: "not every sample is assigned".into(),
        });
    }
    ClusterModel::from_parts(centroids, assignment)
}

/// Writes confident members in their stored (centroid-distance) order.
pub fn write_split(dir: &Path, split: &DomainSplit) -> Result<()> {
    let mut out = format!("{SPLIT_HEADER}\n");
    for c in &split.clusters {
        for &i in &c.confident {
            let flag = if c.source.binary_search(&i).is_ok() {
                SOURCE
            } else {
                TARGET
            };
            writeln!(out, "{},{i},{flag}", c.cluster).unwrap();
        }
    }
    write_text(&dir.join(SPLIT), &out)
}

pub fn read_split(
    dir: &Path,
    clusters: usize,
    strategy: SplitStrategy,
    ratio: f64,
) -> Result<DomainSplit> {
    let path = dir.join(SPLIT);
    let rows = read_table(&path, SPLIT_HEADER)?;
    let mut out: Vec<ClusterSplit> = (0..clusters)
        .map(|cluster| ClusterSplit {
            cluster,
            confident: Vec::new(),
            source: Vec::new(),
            target: Vec::new(),
        })
        .collect();
    for (r, row) in rows.iter().enumerate() {
        let c: usize = field(&path, r, &row[0])?;
        let i: usize = field(&path, r, &row[1])?;
        let flag: usize = field(&path, r, &row[2])?;
        let slot = out.get_mut(c).ok_or_else(|| Error::Parse {
            path: path.clone(),
            line: r + 2,
            message: format!("cluster {c} out of range"),
        })?;
        slot.confident.push(i);
        match flag {
            SOURCE => slot.source.push(i),
            TARGET => slot.target.push(i),
            _ => {
                return Err(Error::Parse {
                    path,
                    line: r + 2,
                    message: format!("domain flag {flag} is not 0 or 1"),
                })
            }
        }
    }
    for c in &mut out {
        c.source.sort_unstable();
        c.target.sort_unstable();
    }
    Ok(DomainSplit {
        strategy,
        ratio,
        clusters: out,
    })
}

pub fn write_dam_trace(dir: &Path, trace: &[EpochTrace]) -> Result<()> {
    let mut out = format!("{TRACE_HEADER}\n");
    for t in trace {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            t.epoch, t.loss_cls, t.loss_dom, t.v_min, t.v_max
        )
        .unwrap();
    }
    write_text(&dir.join(DAM_TRACE), &out)
}

pub fn read_dam_trace(dir: &Path) -> Result<Vec<EpochTrace>> {
    let path = dir.join(DAM_TRACE);
    read_table(&path, TRACE_HEADER)?
        .iter()
        .enumerate()
        .map(|(r, row)| {
            Ok(EpochTrace {
                epoch: field(&path, r, &row[0])?,
                loss_cls: field(&path, r, &row[1])?,
                loss_dom: field(&path, r, &row[2])?,
                v_min: field(&path, r, &row[3])?,
                v_max: field(&path, r, &row[4])?,
            })
        })
        .collect()
}

pub fn write_history(dir: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut out = format!("{HISTORY_HEADER}\n");
    for h in history {
        writeln!(
            out,
            "{},{:?},{:?},{},{}",
            h.iteration, h.acc_l, h.acc_best, h.map_changes, h.conf_set_size
        )
        .unwrap();
    }
    write_text(&dir.join(MATCH_HISTORY), &out)
}

pub fn read_history(dir: &Path) -> Result<Vec<IterationRecord>> {
    let path = dir.join(MATCH_HISTORY);
    read_table(&path, HISTORY_HEADER)?
        .iter()
        .enumerate()
        .map(|(r, row)| {
            Ok(IterationRecord {
                iteration: field(&path, r, &row[0])?,
                acc_l: field(&path, r, &row[1])?,
                acc_best: field(&path, r, &row[2])?,
                map_changes: field(&path, r, &row[3])?,
                conf_set_size: field(&path, r, &row[4])?,
            })
        })
        .collect()
}

pub fn write_label_map(dir: &Path, map: &LabelMap) -> Result<()> {
    let mut out = format!("{LABEL_MAP_HEADER}\n");
    for (p, t, prov) in map.iter() {
        writeln!(out, "{p},{t},{prov}").unwrap();
    }
    write_text(&dir.join(LABEL_MAP), &out)
}

pub fn read_label_map(dir: &Path, num_pseudo: usize, num_classes: usize) -> Result<LabelMap> {
    let path = dir.join(LABEL_MAP);
    let mut map = LabelMap::new(num_pseudo, num_classes);
    for (r, row) in read_table(&path, LABEL_MAP_HEADER)?.iter().enumerate() {
        let p: usize = field(&path, r, &row[0])?;
        let t: usize = field(&path, r, &row[1])?;
        let prov: Provenance = field(&path, r, &row[2])?;
        map.set(p, t, prov)?;
    }
    Ok(map)
}

pub fn write_purity(dir: &Path, rows: &[PurityRow]) -> Result<()> {
    let mut out = format!("{PURITY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:?}",
            r.subset_size, r.total_correct, r.accuracy
        )
        .unwrap();
    }
    write_text(&dir.join(PURITY), &out)
}

pub fn read_purity(dir: &Path) -> Result<Vec<PurityRow>> {
    let path = dir.join(PURITY);
    read_table(&path, PURITY_HEADER)?
        .iter()
        .enumerate()
        .map(|(r, row)| {
            Ok(PurityRow {
                subset_size: field(&path, r, &row[0])?,
                total_correct: field(&path, r, &row[1])?,
                accuracy: field(&path, r, &row[2])?,
            })
        })
        .collect()
}

pub fn write_summary(dir: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for (k, v) in entries {
        writeln!(out, "{k},{v}").unwrap();
    }
    write_text(&dir.join(SUMMARY), &out)
}

pub fn read_summary(dir: &Path) -> Result<Vec<(String, String)>> {
    Ok(read_table(&dir.join(SUMMARY), SUMMARY_HEADER)?
        .into_iter()
        .map(|mut row| {
            let v = row.pop().unwrap();
            (row.pop().unwrap(), v)
        })
        .collect())
}

pub fn write_manifest(dir: &Path, files: &[&str]) -> Result<()> {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for f in files {
        writeln!(out, "{f}").unwrap();
    }
    write_text(&dir.join(MANIFEST), &out)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_table(&dir.join(MANIFEST), MANIFEST_HEADER)?
        .into_iter()
        .map(|row| dir.join(&row[0]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{centroid_topk, kmeans, split_domains, KMeansConfig};
    use crate::data::{synthesize, SyntheticSpec};

    #[test]
    fn cluster_and_split_files_round_trip() {
        let ds = synthesize(&SyntheticSpec {
            classes: 3,
            domains_per_class: 2,
            samples_per_class: 20,
            dim: 4,
            class_separation: 10.0,
            domain_spread: 1.0,
            noise_sigma: 0.5,
            seed: 1,
        })
        .unwrap();
        let cm = kmeans(
            &ds,
            &KMeansConfig {
                k: 3,
                seed: 2,
                ..KMeansConfig::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_clusters(dir.path(), &cm, &ds).unwrap();
        let back = read_clusters(dir.path(), &ds).unwrap();
        assert_eq!(back.centroids, cm.centroids);
        assert_eq!(back.assignment, cm.assignment);

        let sc = centroid_topk(&cm, &ds, 10).unwrap();
        let split = split_domains(&sc, SplitStrategy::Random, 0.8, 5).unwrap();
        write_split(dir.path(), &split).unwrap();
        let back = read_split(dir.path(), 3, SplitStrategy::Random, 0.8).unwrap();
        assert_eq!(back, split);
    }

    #[test]
    fn missing_artifact_is_named() {
        let dir = tempfile::tempdir().unwrap();
        match read_history(dir.path()) {
            Err(Error::MissingArtifact(p)) => assert!(p.ends_with(MATCH_HISTORY)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_map_round_trip() {
        let mut map = LabelMap::new(4, 3);
        map.set(0, 2, Provenance::ColdStart).unwrap();
        map.set(3, 1, Provenance::Iteration(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_label_map(dir.path(), &map).unwrap();
        assert_eq!(read_label_map(dir.path(), 4, 3).unwrap(), map);
    }
}
