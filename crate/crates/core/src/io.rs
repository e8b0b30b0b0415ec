//! File formats: positions, edge lists, demand tables, round records, comparators.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Point;
use crate::oracle::ComparatorSequence;
use crate::record::{AgentRecord, RoundRecord};

/// Fixed leading columns of the records file.
pub const RECORD_COLUMNS: [&str; 9] = [
    "t",
    "node",
    "loss",
    "constraint",
    "violation",
    "satisfaction",
    "dual",
    "generation",
    "demand",
];

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
    rec.get(k)
        .ok_or_else(|| parse_err(path, line, format!("missing column {name}")))?
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad value for {name}: {:?}", rec.get(k).unwrap_or(""))))
}

fn expect_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let names: Vec<&str> = got.iter().map(str::trim).collect();
    if names.len() < want.len() || names[..want.len()] != *want {
        return Err(parse_err(path, 1, format!("expected header {}, got {}", want.join(","), names.join(","))));
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::file(path, e))
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

/// Facility positions from an `id,x,y` CSV; ids must cover `0..n` once each.
pub fn read_positions(path: &Path) -> Result<Vec<Point>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    expect_header(path, rdr.headers()?, &["id", "x", "y"])?;
    let mut rows: Vec<(usize, Point)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let id: usize = field(path, line, &rec, 0, "id")?;
        let x: f64 = field(path, line, &rec, 1, "x")?;
        let y: f64 = field(path, line, &rec, 2, "y")?;
        rows.push((id, Point::new(x, y)));
    }
    rows.sort_by_key(|r| r.0);
    for (k, (id, _)) in rows.iter().enumerate() {
        if *id != k {
            return Err(parse_err(path, 0, format!("ids must be 0..{} without gaps or repeats", rows.len())));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Whitespace-separated `i j` pairs, one per line; `#` starts a comment.
pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let reader = BufReader::new(open(path)?);
    let mut edges = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parts: Vec<&str> = body.split_whitespace().collect();
        let pair = match parts.as_slice() {
            [a, b] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        edges.push(pair.ok_or_else(|| parse_err(path, k + 1, format!("expected two node ids, got {body:?}")))?);
    }
    Ok(edges)
}

/// Demand rows from a `t,node,demand` CSV.
pub fn read_demand(path: &Path) -> Result<Vec<(u64, usize, f64)>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    expect_header(path, rdr.headers()?, &["t", "node", "demand"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        rows.push((
            field(path, line, &rec, 0, "t")?,
            field(path, line, &rec, 1, "node")?,
            field(path, line, &rec, 2, "demand")?,
        ));
    }
    Ok(rows)
}

/// Writes records with `width` allocation columns; shorter allocations leave trailing cells empty.
pub fn write_records<W: Write>(out: W, records: &[RoundRecord], width: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = RECORD_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..width).map(|k| format!("alloc_{k}")));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in records {
        for a in &r.agents {
            row.clear();
            row.push(r.t.to_string());
            row.push(a.node.to_string());
            for v in [a.loss, a.constraint, a.violation, a.satisfaction, a.dual, a.generation, a.demand] {
                row.push(v.to_string());
            }
            for k in 0..width {
                row.push(a.allocation.get(k).map_or(String::new(), f64::to_string));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_file(path: &Path, records: &[RoundRecord], width: usize) -> Result<()> {
    write_records(std::io::BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?), records, width)
}

/// Reads a records CSV back, grouping rows by `t`.
pub fn read_records(path: &Path) -> Result<Vec<RoundRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    expect_header(path, &headers, &RECORD_COLUMNS)?;
    for (k, name) in headers.iter().enumerate().skip(RECORD_COLUMNS.len()) {
        if name.trim() != format!("alloc_{}", k - RECORD_COLUMNS.len()) {
            return Err(parse_err(path, 1, format!("unexpected column {name:?}")));
        }
    }
    let mut records: Vec<RoundRecord> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let t: u64 = field(path, line, &rec, 0, "t")?;
        let num = |k: usize| field::<f64>(path, line, &rec, k, RECORD_COLUMNS[k]);
        let mut allocation = Vec::new();
        for k in RECORD_COLUMNS.len()..rec.len() {
            let cell = rec.get(k).unwrap_or("").trim();
            if cell.is_empty() {
                break;
            }
            allocation.push(cell.parse().map_err(|_| parse_err(path, line, format!("bad allocation {cell:?}")))?);
        }
        let agent = AgentRecord {
            node: field(path, line, &rec, 1, "node")?,
            loss: num(2)?,
            constraint: num(3)?,
            violation: num(4)?,
            satisfaction: num(5)?,
            received: None,
            dual: num(6)?,
            generation: num(7)?,
            demand: num(8)?,
            allocation,
        };
        match records.last_mut() {
            Some(last) if last.t == t => {
                if agent.node != last.agents.len() {
                    return Err(parse_err(path, line, format!("expected node {}, got {}", last.agents.len(), agent.node)));
                }
                last.agents.push(agent);
            }
            _ => {
                let expected = records.last().map_or(1, |r| r.t + 1);
                if t != expected || agent.node != 0 {
                    return Err(parse_err(path, line, format!("expected t={expected} node 0, got t={t} node {}", agent.node)));
                }
                records.push(RoundRecord { t, agents: vec![agent] });
            }
        }
    }
    if let Some(n) = records.first().map(|r| r.agents.len()) {
        if let Some(bad) = records.iter().find(|r| r.agents.len() != n) {
            return Err(parse_err(path, 0, format!("round {} has {} nodes, expected {n}", bad.t, bad.agents.len())));
        }
    }
    Ok(records)
}

/// `t,node,coord_index,value` rows for every node's comparator.
pub fn write_comparators<W: Write>(out: W, comparators: &[ComparatorSequence]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "node", "coord_index", "value"])?;
    for (node, seq) in comparators.iter().enumerate() {
        for (t, p) in seq.points.iter().enumerate() {
            for (k, v) in p.iter().enumerate() {
                w.write_record([(t + 1).to_string(), node.to_string(), k.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_positions(path: &Path, points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path).map_err(|e| Error::file(path, e))?);
    w.write_record(["id", "x", "y"])?;
    for (k, p) in points.iter().enumerate() {
        w.write_record([k.to_string(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_records() -> Vec<RoundRecord> {
        (1..=3)
            .map(|t| RoundRecord {
                t,
                agents: (0..2)
                    .map(|node| AgentRecord {
                        node,
                        loss: 0.1 * t as f64,
                        constraint: -1.5,
                        violation: 0.0,
                        satisfaction: 0.75,
                        received: None,
                        dual: 0.0,
                        generation: 3.0,
                        demand: 4.0,
                        allocation: vec![1.0 / 3.0; node + 1],
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let recs = sample_records();
        write_records_file(&path, &recs, 2).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,node,loss,constraint,violation,satisfaction,dual,generation,demand,alloc_0,alloc_1\n"));
        assert_eq!(read_records(&path).unwrap(), recs);
    }

    #[test]
    fn malformed_records_report_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(
            &path,
            "t,node,loss,constraint,violation,satisfaction,dual,generation,demand,alloc_0\n1,0,0.5,0,0,1,0,1,1,1\n1,1,oops,0,0,1,0,1,1,1\n",
        )
        .unwrap();
        match read_records(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn positions_and_edges() {
        let dir = tempfile::tempdir().unwrap();
        let pos = dir.path().join("p.csv");
        std::fs::write(&pos, "id,x,y\n1,3.0,4.0\n0,0,0\n").unwrap();
        assert_eq!(read_positions(&pos).unwrap(), vec![Point::new(0.0, 0.0), Point::new(3.0, 4.0)]);
        let edges = dir.path().join("e.txt");
        std::fs::write(&edges, "# ring\n0 1\n1 2  # tail\n\n").unwrap();
        assert_eq!(read_edges(&edges).unwrap(), vec![(0, 1), (1, 2)]);
        std::fs::write(&edges, "0 1\n2\n").unwrap();
        assert!(matches!(read_edges(&edges), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn demand_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "t,node,demand\n1,0,5\n1,1,7.5\n10,0,6\n").unwrap();
        assert_eq!(read_demand(&p).unwrap(), vec![(1, 0, 5.0), (1, 1, 7.5), (10, 0, 6.0)]);
    }

    #[test]
    fn comparator_rows() {
        let mut buf = Vec::new();
        write_comparators(&mut buf, &[ComparatorSequence::constant(vec![1.0, 2.0], 2)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,node,coord_index,value\n1,0,0,1\n1,0,1,2\n2,0,0,1\n2,0,1,2\n");
    }
}
