use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type ClientId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSpec {
    pub client_id: ClientId,
    /// Covariate group ("color").
    pub group: String,
    pub class_counts: BTreeMap<usize, usize>,
    /// 0 for founding members.
    pub join_round: usize,
}

impl ClientSpec {
    pub fn total(&self) -> usize {
        self.class_counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub num_classes: usize,
    pub clients: Vec<ClientSpec>,
}

impl PartitionSpec {
    pub fn new(num_classes: usize, clients: Vec<ClientSpec>) -> Result<Self> {
        let spec = PartitionSpec {
            num_classes,
            clients,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("partition needs at least 2 classes".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.clients {
            if !seen.insert(c.client_id) {
                return Err(Error::Config(format!("duplicate client id {}", c.client_id)));
            }
            if let Some(&k) = c.class_counts.keys().find(|&&k| k >= self.num_classes) {
                return Err(Error::Config(format!(
                    "client {} references unknown class {k}",
                    c.client_id
                )));
            }
            if c.total() == 0 {
                return Err(Error::Config(format!(
                    "client {} has no samples",
                    c.client_id
                )));
            }
        }
        Ok(())
    }

    pub fn client(&self, id: ClientId) -> Option<&ClientSpec> {
        self.clients.iter().find(|c| c.client_id == id)
    }

    /// Per-class totals over all clients.
    pub fn class_totals(&self) -> BTreeMap<usize, usize> {
        let mut totals: BTreeMap<usize, usize> = (0..self.num_classes).map(|c| (c, 0)).collect();
        for c in &self.clients {
            for (&k, &n) in &c.class_counts {
                *totals.entry(k).or_default() += n;
            }
        }
        totals
    }

    /// Drops the given clients, e.g. to hold them out for testing.
    pub fn without(&self, excluded: &[ClientId]) -> PartitionSpec {
        PartitionSpec {
            num_classes: self.num_classes,
            clients: self
                .clients
                .iter()
                .filter(|c| !excluded.contains(&c.client_id))
                .cloned()
                .collect(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut declared = None;
        let mut clients = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "num_classes" {
                if fields.len() != 2 {
                    return Err(err(lineno, "expected `num_classes <n>`".into()));
                }
                let n: usize = fields[1]
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid class count `{}`", fields[1])))?;
                if !clients.is_empty() {
                    return Err(err(lineno, "num_classes must precede client rows".into()));
                }
                declared = Some(n);
                continue;
            }
            if fields.len() != 4 {
                return Err(err(
                    lineno,
                    format!(
                        "expected `client_id group class:count[,...] join_round`, found {} fields",
                        fields.len()
                    ),
                ));
            }
            let client_id: ClientId = fields[0]
                .parse()
                .map_err(|_| err(lineno, format!("invalid client id `{}`", fields[0])))?;
            if !seen.insert(client_id) {
                return Err(err(lineno, format!("duplicate client id {client_id}")));
            }
            let mut class_counts = BTreeMap::new();
            for pair in fields[2].split(',') {
                let (k, n) = pair
                    .split_once(':')
                    .ok_or_else(|| err(lineno, format!("expected class:count, found `{pair}`")))?;
                let k: usize = k
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid class `{k}`")))?;
                let n: usize = n
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid count `{n}`")))?;
                if let Some(limit) = declared {
                    if k >= limit {
                        return Err(err(lineno, format!("unknown class {k} (num_classes {limit})")));
                    }
                }
                if class_counts.insert(k, n).is_some() {
                    return Err(err(lineno, format!("class {k} listed twice")));
                }
            }
            if class_counts.values().all(|&n| n == 0) {
                return Err(err(lineno, format!("client {client_id} has no samples")));
            }
            let join_round: usize = fields[3]
                .parse()
                .map_err(|_| err(lineno, format!("invalid join round `{}`", fields[3])))?;
            clients.push(ClientSpec {
                client_id,
                group: fields[1].to_string(),
                class_counts,
                join_round,
            });
        }
        let inferred = clients
            .iter()
            .flat_map(|c| c.class_counts.keys().copied())
            .max()
            .map_or(0, |m| m + 1);
        let num_classes = declared.unwrap_or(inferred);
        if clients.is_empty() {
            return Err(err(text.lines().count().max(1), "no client rows".into()));
        }
        PartitionSpec::new(num_classes, clients)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# client_id group class:count[,class:count...] join_round");
        let _ = writeln!(out, "num_classes {}", self.num_classes);
        for c in &self.clients {
            let counts: Vec<String> = c
                .class_counts
                .iter()
                .map(|(k, n)| format!("{k}:{n}"))
                .collect();
            let _ = writeln!(
                out,
                "{} {} {} {}",
                c.client_id,
                c.group,
                counts.join(","),
                c.join_round
            );
        }
        out
    }
}

pub fn load_partition_spec(path: &Path) -> Result<PartitionSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PartitionSpec::parse(&text, &path.display().to_string())
}

pub const TABLE1_SPEC: &str = include_str!("../../specs/table1.spec");
pub const TABLE2_SPEC: &str = include_str!("../../specs/table2.spec");

pub fn table1() -> PartitionSpec {
    PartitionSpec::parse(TABLE1_SPEC, "table1.spec").expect("shipped table1.spec is valid")
}

pub fn table2() -> PartitionSpec {
    PartitionSpec::parse(TABLE2_SPEC, "table2.spec").expect("shipped table2.spec is valid")
}
