//! File formats: CSV inputs, JSON-lines draws and JSON allocation records.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::allocation::{IdSet, ModelKind, SubsetDraw};
use crate::dfa::DfaData;
use crate::dpm::DpmData;
use crate::error::{CmcError, Result};
use crate::fa::FaData;

/// One line of a sample file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord<P, G> {
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub subsets: Vec<IdSet>,
    pub params: Vec<P>,
    pub globals: G,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<Vec<(usize, usize)>>>,
    pub config_hash: String,
    pub master_seed: u64,
}

impl<P, G> DrawRecord<P, G> {
    pub fn into_draw(self) -> SubsetDraw<P, G> {
        SubsetDraw {
            subsets: self.subsets,
            params: self.params,
            globals: self.globals,
        }
    }
}

/// Run identity stamped on every output line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stamp {
    pub config_hash: String,
    pub master_seed: u64,
}

pub fn write_draw<W: Write, P: Serialize + Clone, G: Serialize + Clone>(
    out: &mut W,
    t: usize,
    draw: &SubsetDraw<P, G>,
    provenance: Option<&[Vec<(usize, usize)>]>,
    stamp: &Stamp,
) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a, P, G> {
        t: usize,
        #[serde(rename = "K")]
        k: usize,
        subsets: &'a [IdSet],
        params: &'a [P],
        globals: &'a G,
        #[serde(skip_serializing_if = "Option::is_none")]
        provenance: Option<&'a [Vec<(usize, usize)>]>,
        config_hash: &'a str,
        master_seed: u64,
    }
    let line = Line {
        t,
        k: draw.k(),
        subsets: &draw.subsets,
        params: &draw.params,
        globals: &draw.globals,
        provenance,
        config_hash: &stamp.config_hash,
        master_seed: stamp.master_seed,
    };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_draws<R: BufRead, P: DeserializeOwned, G: DeserializeOwned>(input: R) -> Result<Vec<DrawRecord<P, G>>> {
    let mut out = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DrawRecord<P, G> = serde_json::from_str(&line)
            .map_err(|e| CmcError::Data(format!("sample line {}: {e}", no + 1)))?;
        if rec.k != rec.subsets.len() || rec.k != rec.params.len() {
            return Err(CmcError::Data(format!("sample line {}: K does not match the subsets", no + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Allocation with parameters, used for truths and point estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationRecord<P, G> {
    pub model: ModelKind,
    /// Observation ids the allocation is defined over.
    pub ids: Vec<usize>,
    pub subsets: Vec<IdSet>,
    pub params: Vec<P>,
    pub globals: G,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

/// Reads only the `model` field of an allocation record.
pub fn peek_model(json: &str) -> Result<ModelKind> {
    #[derive(Deserialize)]
    struct Head {
        model: ModelKind,
    }
    Ok(serde_json::from_str::<Head>(json)?.model)
}

fn parse_id(s: &str, what: &str, line: usize) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| CmcError::Data(format!("line {line}: {what} '{s}' is not a positive integer")))
}

/// `id,x1,...,xp`, one row per observation.
pub fn read_dpm_csv<R: Read>(input: R) -> Result<DpmData> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = no + 2;
        let id = parse_id(rec.get(0).unwrap_or(""), "id", line)?;
        let row: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| CmcError::Data(format!("line {line}: '{x}' is not a number")))
            })
            .collect::<Result<_>>()?;
        ids.push(id);
        rows.push(row);
    }
    check_ids(&ids)?;
    DpmData::new(ids, &rows)
}

pub fn write_dpm_csv<W: Write>(out: W, ids: &[usize], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let p = rows.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for (id, row) in ids.iter().zip(rows) {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|x| format!("{x:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn check_ids(ids: &[usize]) -> Result<()> {
    let set: IdSet = ids.iter().copied().collect();
    if set.len() != ids.len() {
        return Err(CmcError::Data("duplicate observation id".into()));
    }
    if ids.contains(&0) {
        return Err(CmcError::Data("observation ids start at 1".into()));
    }
    Ok(())
}

/// Long-format grid `(row id, column id) -> values`; every cell must be present once.
fn read_long<R: Read, T: Copy>(
    input: R,
    columns: usize,
    parse: impl Fn(&csv::StringRecord, usize) -> Result<T>,
) -> Result<(Vec<usize>, Vec<Vec<T>>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut cells: BTreeMap<usize, BTreeMap<usize, T>> = BTreeMap::new();
    for (no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = no + 2;
        if rec.len() < columns {
            return Err(CmcError::Data(format!("line {line}: expected {columns} fields")));
        }
        let row = parse_id(&rec[0], "row id", line)?;
        let col = parse_id(&rec[1], "column id", line)?;
        let v = parse(&rec, line)?;
        if cells.entry(row).or_default().insert(col, v).is_some() {
            return Err(CmcError::Data(format!("line {line}: duplicate cell ({row}, {col})")));
        }
    }
    let cols: IdSet = cells.values().flat_map(|m| m.keys().copied()).collect();
    let mut ids = Vec::with_capacity(cells.len());
    let mut rows = Vec::with_capacity(cells.len());
    for (id, m) in cells {
        if m.len() != cols.len() {
            return Err(CmcError::Data(format!("row {id} is missing some columns")));
        }
        ids.push(id);
        rows.push(m.into_values().collect());
    }
    check_ids(&ids)?;
    Ok((ids, rows))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: usize, name: &str) -> Result<T> {
    rec[idx]
        .trim()
        .parse()
        .map_err(|_| CmcError::Data(format!("line {line}: bad {name} '{}'", &rec[idx])))
}

/// `snv_id,sample_id,y,N`.
pub fn read_fa_csv<R: Read>(input: R) -> Result<FaData> {
    let (ids, cells) = read_long(input, 4, |rec, line| {
        Ok((field::<u32>(rec, 2, line, "y")?, field::<u32>(rec, 3, line, "N")?))
    })?;
    let y: Vec<Vec<u32>> = cells.iter().map(|r| r.iter().map(|c| c.0).collect()).collect();
    let total: Vec<Vec<u32>> = cells.iter().map(|r| r.iter().map(|c| c.1).collect()).collect();
    FaData::new(ids, &y, &total)
}

pub fn write_fa_csv<W: Write>(out: W, ids: &[usize], y: &[Vec<u32>], total: &[Vec<u32>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["snv_id", "sample_id", "y", "N"])?;
    for (r, id) in ids.iter().enumerate() {
        for j in 0..y[r].len() {
            w.write_record([id.to_string(), (j + 1).to_string(), y[r][j].to_string(), total[r][j].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `patient_id,symptom_id,value`.
pub fn read_dfa_csv<R: Read>(input: R) -> Result<DfaData> {
    let (ids, rows) = read_long(input, 3, |rec, line| field::<i8>(rec, 2, line, "value"))?;
    DfaData::new(ids, &rows)
}

pub fn write_dfa_csv<W: Write>(out: W, ids: &[usize], rows: &[Vec<i8>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "symptom_id", "value"])?;
    for (id, row) in ids.iter().zip(rows) {
        for (j, v) in row.iter().enumerate() {
            w.write_record([id.to_string(), (j + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `K,count,frequency`.
pub fn write_k_histogram<W: Write>(out: W, hist: &BTreeMap<usize, usize>) -> Result<()> {
    let total: usize = hist.values().sum();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["K", "count", "frequency"])?;
    for (k, c) in hist {
        w.write_record([k.to_string(), c.to_string(), format!("{}", *c as f64 / total.max(1) as f64)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` under `header` as CSV.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
