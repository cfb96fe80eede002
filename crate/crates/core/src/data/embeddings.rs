//! Precomputed backbone embeddings in CSV form:
//! `client_id,label,f0,...,f{d-1}`, one sample per row.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::spec::ClientId;
use crate::error::{Error, Result};
use crate::model::Sample;

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub feature_dim: usize,
    pub clients: BTreeMap<ClientId, Vec<Sample>>,
}

pub fn ingest_embeddings(path: &Path) -> Result<Embeddings> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file)
}

/// Rows are numbered from 1 for the header line.
pub fn read_embeddings<R: Read>(reader: R) -> Result<Embeddings> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Ingest {
            row: 1,
            message: e.to_string(),
        })?,
        None => {
            return Err(Error::Ingest {
                row: 1,
                message: "missing header".into(),
            })
        }
    };
    let fields: Vec<&str> = header.iter().map(str::trim).collect();
    if fields.len() < 3 || fields[0] != "client_id" || fields[1] != "label" {
        return Err(Error::Ingest {
            row: 1,
            message: "header must start with client_id,label,f0".into(),
        });
    }
    for (i, name) in fields[2..].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(Error::Ingest {
                row: 1,
                message: format!("unknown header column `{name}`, expected `f{i}`"),
            });
        }
    }
    let feature_dim = fields.len() - 2;
    let mut clients: BTreeMap<ClientId, Vec<Sample>> = BTreeMap::new();
    for (idx, rec) in records.enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| Error::Ingest {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != feature_dim + 2 {
            return Err(Error::Ingest {
                row,
                message: format!("expected {} columns, found {}", feature_dim + 2, rec.len()),
            });
        }
        let client: ClientId = rec[0].trim().parse().map_err(|_| Error::Ingest {
            row,
            message: format!("invalid client id `{}`", &rec[0]),
        })?;
        let label: usize = rec[1].trim().parse().map_err(|_| Error::Ingest {
            row,
            message: format!("invalid label `{}`", &rec[1]),
        })?;
        let features = rec
            .iter()
            .skip(2)
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Ingest {
                    row,
                    message: format!("non-numeric feature `{f}`"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        clients
            .entry(client)
            .or_default()
            .push(Sample::new(features, label));
    }
    Ok(Embeddings {
        feature_dim,
        clients,
    })
}

pub fn write_embeddings<W: Write>(emb: &Embeddings, writer: W) -> Result<()> {
    let to_err = |e: csv::Error| Error::Internal(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["client_id".to_string(), "label".to_string()];
    header.extend((0..emb.feature_dim).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(to_err)?;
    for (id, samples) in &emb.clients {
        for s in samples {
            let mut row = vec![id.to_string(), s.label.to_string()];
            // `{:?}` prints the shortest string that parses back bit-exactly.
            row.extend(s.features.iter().map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(to_err)?;
        }
    }
    w.flush().map_err(|e| Error::Internal(e.to_string()))?;
    Ok(())
}

pub fn export_embeddings(emb: &Embeddings, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(emb, std::io::BufWriter::new(file))
}
